import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from medmamba.autodiff import (
    ComplexPair,
    ShapeError,
    Tensor,
    abs_sum,
    activation,
    complex_mul,
    concat,
    conv1d_depthwise,
    cross_entropy,
    elementwise,
    exp,
    flip,
    grad_check,
    irfft,
    layernorm,
    log,
    matmul,
    matrix_exp,
    mean,
    no_grad,
    pad_time,
    reduce,
    rfft,
    softmax,
    softplus,
    stack,
    tanh,
    trace,
    transpose,
    tsum,
    where,
)
from medmamba.autodiff.linalg import expm_array
from medmamba.autodiff.spectral import fft, irfft_array, rfft_array


def t64(a, grad=True):
    return Tensor(np.asarray(a, dtype=np.float64), requires_grad=grad)


def naive_dft(x):
    n = len(x)
    k = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(k, k) / n) @ x


# elementwise ---------------------------------------------------------------


def test_elementwise_examples():
    assert np.array_equal(elementwise("mul", t64([1, 2, 3]), t64([4, 5, 6])).data, [4, 10, 18])
    z = t64(np.arange(6.0).reshape(2, 3))
    assert np.array_equal(elementwise("add", z, 0.0).data, z.data)
    assert np.array_equal(elementwise("sub", t64([5.0]), t64([5.0])).data, [0.0])


def test_elementwise_errors():
    with pytest.raises(ShapeError):
        elementwise("add", t64(np.ones(3)), t64(np.ones(4)))
    with pytest.raises(ZeroDivisionError):
        elementwise("div", t64([1.0, 2.0]), t64([1.0, 0.0]))
    with pytest.raises(ValueError):
        elementwise("mod", t64([1.0]), t64([1.0]))


def test_div_by_zero_in_f32_propagates_inf():
    out = elementwise("div", Tensor(np.ones(2, np.float32)), Tensor(np.array([1.0, 0.0], np.float32)))
    assert out.data[0] == 1.0 and np.isinf(out.data[1])


@pytest.mark.parametrize("tag", ["add", "sub", "mul", "div", "pow"])
def test_elementwise_gradients(tag):
    rng = np.random.default_rng(1)
    for _ in range(10):
        a = t64(rng.uniform(0.5, 2.0, (3, 4)))
        b = t64(rng.uniform(0.5, 2.0, (4,)))
        assert grad_check(lambda: tsum(elementwise(tag, a, b) ** 2), [a, b]) < 1e-5


@settings(max_examples=40, deadline=None)
@given(
    st.lists(st.integers(1, 3), min_size=1, max_size=3),
    st.lists(st.booleans(), min_size=3, max_size=3),
    st.integers(0, 3),
    st.integers(0, 2**31 - 1),
)
def test_broadcast_matches_materialized_oracle(shape, squeeze, drop, seed):
    # b takes a trailing slice of a's shape with some axes squeezed to 1
    rng = np.random.default_rng(seed)
    shape = tuple(shape)
    bshape = tuple(1 if sq else n for n, sq in zip(shape, squeeze))[min(drop, len(shape)):]
    a, b = rng.standard_normal(shape), rng.standard_normal(bshape)
    ta, tb = t64(a), t64(b)
    out = elementwise("mul", ta, tb)
    tsum(out).backward()
    full_b = np.broadcast_to(b, shape).copy()
    assert np.allclose(out.data, a * full_b)
    assert np.allclose(ta.grad, full_b)
    ref = np.zeros(bshape)
    offset = len(shape) - len(bshape)
    for idx in np.ndindex(*shape):
        tail = tuple(0 if n == 1 else i for i, n in zip(idx[offset:], bshape))
        ref[tail] += a[idx]
    assert np.allclose(tb.grad, ref)


# matmul ---------------------------------------------------------------------


def test_matmul_examples():
    m = t64([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(matmul(t64(np.eye(2)), m).data, m.data)
    assert np.array_equal(matmul(t64([[1.0, 2.0]]), t64([[3.0], [4.0]])).data, [[11.0]])


def test_matmul_triple_loop_oracle():
    rng = np.random.default_rng(2)
    a, b = rng.standard_normal((3, 3)), rng.standard_normal((3, 3))
    ref = np.zeros((3, 3))
    for i in range(3):
        for j in range(3):
            for k in range(3):
                ref[i, j] += a[i, k] * b[k, j]
    assert np.max(np.abs(matmul(t64(a), t64(b)).data - ref)) < 1e-12


def test_matmul_errors_and_gradient():
    with pytest.raises(ShapeError):
        matmul(t64(np.ones((2, 3))), t64(np.ones((2, 3))))
    rng = np.random.default_rng(3)
    for _ in range(10):
        a, b = t64(rng.standard_normal((2, 3, 4))), t64(rng.standard_normal((4, 5)))
        assert grad_check(lambda: tsum(tanh(matmul(a, b))), [a, b]) < 1e-5


# activations ------------------------------------------------------------------


def test_activation_examples():
    assert activation("sigmoid", t64([0.0])).data[0] == 0.5
    c = 1.7
    assert np.allclose(activation("softmax-lastdim", t64([c, c, c])).data, 1 / 3)
    assert abs(softplus(t64([100.0])).data[0] - 100.0) < 1e-12
    assert np.all(np.isfinite(activation("sigmoid", t64([-800.0, 800.0])).data))
    with pytest.raises(ValueError):
        activation("relu6", t64([0.0]))


@pytest.mark.parametrize("tag", ["sigmoid", "silu", "softplus", "softmax-lastdim"])
def test_activation_gradients(tag):
    rng = np.random.default_rng(4)
    w = rng.standard_normal((3, 5))
    for _ in range(10):
        x = t64(rng.uniform(-4, 4, (3, 5)))
        assert grad_check(lambda: tsum(activation(tag, x) * w), [x]) < 1e-5


def test_softplus_branch_continuity():
    x = t64([29.999999, 30.0, 30.000001])
    assert np.allclose(softplus(x).data, np.log1p(np.exp(x.data)), rtol=0, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.floats(0.1, 50.0), st.integers(0, 2**31 - 1))
def test_softmax_rows_are_distributions(n, k, scale, seed):
    x = np.random.default_rng(seed).standard_normal((n, k)) * scale
    p = softmax(t64(x, grad=False)).data
    assert np.all(p >= 0) and np.allclose(p.sum(axis=-1), 1.0, atol=1e-6)


# convolution --------------------------------------------------------------------


def test_conv_examples():
    rng = np.random.default_rng(5)
    x = t64(rng.standard_normal((6, 3)))
    ident = t64(np.tile([0.0, 1.0, 0.0], (3, 1)))
    assert np.array_equal(conv1d_depthwise(x, ident, "same").data, x.data)
    assert np.array_equal(conv1d_depthwise(x, t64(np.zeros((3, 3))), "same").data, np.zeros((6, 3)))
    out = conv1d_depthwise(t64([[1.0], [2.0], [3.0], [4.0]]), t64([[1.0, 1.0, 1.0]]), "same")
    assert np.array_equal(out.data[:, 0], [3.0, 6.0, 9.0, 7.0])


def test_conv_causal_only_sees_past():
    x = np.zeros((6, 1))
    x[3, 0] = 1.0
    out = conv1d_depthwise(t64(x), t64([[1.0, 2.0, 3.0]]), "causal").data[:, 0]
    # output at t mixes x[t-2], x[t-1], x[t] with taps k0, k1, k2
    assert np.array_equal(out, [0, 0, 0, 3.0, 2.0, 1.0])


def test_conv_errors():
    x = t64(np.ones((3, 2)))
    with pytest.raises(ValueError):
        conv1d_depthwise(x, t64(np.ones((2, 5))), "same")
    with pytest.raises(ValueError):
        conv1d_depthwise(x, t64(np.ones((2, 2))), "same")
    with pytest.raises(ValueError):
        conv1d_depthwise(x, t64(np.ones((2, 3))), "valid")


@pytest.mark.parametrize("mode,k", [("same", 3), ("same", 5), ("causal", 4)])
def test_conv_gradient(mode, k):
    rng = np.random.default_rng(6)
    for _ in range(10):
        x, w = t64(rng.standard_normal((2, 7, 3))), t64(rng.standard_normal((3, k)))
        assert grad_check(lambda: tsum(tanh(conv1d_depthwise(x, w, mode))), [x, w]) < 1e-5


# layernorm -------------------------------------------------------------------------


def test_layernorm_examples():
    g, b = t64(np.ones(4)), t64(np.zeros(4))
    assert np.allclose(layernorm(t64([[5.0, 5.0, 5.0, 5.0]]), g, b).data, 0.0)
    rng = np.random.default_rng(7)
    x = rng.standard_normal((5, 4)) * 3 + 2
    y = layernorm(t64(x), g, b).data
    assert np.all(np.abs(y.mean(axis=-1)) < 1e-6)
    gain, bias = rng.standard_normal(4), rng.standard_normal(4)
    mu = x.mean(-1, keepdims=True)
    var = ((x - mu) ** 2).mean(-1, keepdims=True)
    ref = (x - mu) / np.sqrt(var + 1e-5) * gain + bias
    assert np.max(np.abs(layernorm(t64(x), t64(gain), t64(bias)).data - ref)) < 1e-10


def test_layernorm_gradient():
    rng = np.random.default_rng(8)
    for _ in range(10):
        x, g, b = t64(rng.standard_normal((2, 3, 5))), t64(rng.standard_normal(5)), t64(rng.standard_normal(5))
        w = rng.standard_normal((2, 3, 5))
        assert grad_check(lambda: tsum(layernorm(x, g, b) * w), [x, g, b]) < 1e-5


# spectral ---------------------------------------------------------------------------


def test_rfft_examples():
    z = rfft(t64(np.full(8, 2.5)), axis=0).to_numpy()
    assert np.allclose(z, [20.0, 0, 0, 0, 0], atol=1e-12)
    t = np.arange(8)
    z = rfft(t64(np.cos(2 * np.pi * t / 8)), axis=0).to_numpy()
    assert np.allclose(z, naive_dft(np.cos(2 * np.pi * t / 8))[:5], atol=1e-12)
    assert np.allclose(z, [0, 4, 0, 0, 0], atol=1e-12)


@pytest.mark.parametrize("n", [1, 2, 3, 5, 7, 8, 12, 17, 100, 128])
def test_fft_matches_naive_dft(n):
    x = np.random.default_rng(n).standard_normal(n) + 1j * np.random.default_rng(n + 1).standard_normal(n)
    assert np.allclose(fft(x), naive_dft(x), atol=1e-9)
    assert np.allclose(fft(fft(x), inverse=True) / n, x, atol=1e-12)


@pytest.mark.parametrize("n", [1, 2, 7, 8, 128])
def test_rfft_round_trip(n):
    rng = np.random.default_rng(n)
    x = rng.standard_normal((n, 3))
    back = irfft(rfft(t64(x), axis=0), n, axis=0).data
    assert np.max(np.abs(back - x)) < 1e-10
    x32 = x.astype(np.float32)
    assert np.max(np.abs(irfft_array(rfft_array(x32, 0), n, 0) - x32)) < 1e-6


def test_irfft_bin_mismatch():
    z = rfft(t64(np.ones((8, 2))), axis=0)
    with pytest.raises(ShapeError):
        irfft(z, 10, axis=0)


@pytest.mark.parametrize("n", [5, 8])
def test_spectral_gradients(n):
    rng = np.random.default_rng(9)
    f = n // 2 + 1
    for _ in range(10):
        x = t64(rng.standard_normal((n, 2)))
        wr, wi = t64(rng.standard_normal((f, 2))), t64(rng.standard_normal((f, 2)))
        w = rng.standard_normal((n, 2))

        def loss():
            filtered = complex_mul(rfft(x, axis=0), ComplexPair(wr, wi))
            return tsum(irfft(filtered, n, axis=0) * w)

        assert grad_check(loss, [x, wr, wi]) < 1e-5


def test_complex_mul_examples():
    rng = np.random.default_rng(10)
    a, b = rng.standard_normal((4, 3, 2)), rng.standard_normal((4, 3, 2))
    z = ComplexPair(t64(a), t64(b))
    one = ComplexPair(t64(np.ones((4, 1, 2))), t64(np.zeros((4, 1, 2))))
    assert np.array_equal(complex_mul(z, one).to_numpy(), z.to_numpy())
    i = complex_mul(ComplexPair(t64([1.0]), t64([0.0])), ComplexPair(t64([0.0]), t64([1.0])))
    assert i.to_numpy()[0] == 1j
    c, d = rng.standard_normal((4, 1, 2)), rng.standard_normal((4, 1, 2))
    out = complex_mul(z, ComplexPair(t64(c), t64(d))).to_numpy()
    for idx in np.ndindex(4, 3, 2):
        ref = complex(a[idx], b[idx]) * complex(c[idx[0], 0, idx[2]], d[idx[0], 0, idx[2]])
        assert abs(out[idx] - ref) < 1e-12
    with pytest.raises(ShapeError):
        complex_mul(z, ComplexPair(t64(np.ones((3, 3, 2))), t64(np.ones((3, 3, 2)))))
    with pytest.raises(ShapeError):
        ComplexPair(t64(np.ones(2)), t64(np.ones(3)))


# matrix exponential ------------------------------------------------------------------


def test_matrix_exp_examples():
    assert np.array_equal(matrix_exp(t64(np.zeros((3, 3)))).data, np.eye(3))
    assert np.max(np.abs(matrix_exp(t64(np.diag([1.0, -1.0]))).data - np.diag([np.e, 1 / np.e]))) < 1e-12
    swap = matrix_exp(t64([[0.0, 1.0], [1.0, 0.0]])).data
    c, s = np.cosh(1.0), np.sinh(1.0)
    assert np.max(np.abs(swap - [[c, s], [s, c]])) < 1e-10


def test_matrix_exp_oracles():
    rng = np.random.default_rng(11)
    for c in range(1, 9):
        m = rng.standard_normal((c, c))
        sym = (m + m.T) / 2
        w, v = np.linalg.eigh(sym)
        assert np.max(np.abs(expm_array(sym) - (v * np.exp(w)) @ v.T)) < 1e-9
        small = m / max(np.abs(m).sum(axis=1).max(), 1.0)
        taylor, term = np.eye(c), np.eye(c)
        for k in range(1, 31):
            term = term @ small / k
            taylor = taylor + term
        assert np.max(np.abs(expm_array(small) - taylor)) < 1e-9


def test_matrix_exp_cap_and_gradient():
    with pytest.raises(ValueError):
        expm_array(np.zeros((4, 4)), cap=3)
    with pytest.raises(ValueError):
        expm_array(np.full((2, 2), np.nan))
    rng = np.random.default_rng(12)
    for _ in range(10):
        m = t64(rng.standard_normal((4, 4)) * 0.7)
        w = rng.standard_normal((4, 4))
        assert grad_check(lambda: tsum(matrix_exp(m) * w), [m]) < 1e-5


# reductions and shape ops -----------------------------------------------------------------


def test_reduce_examples():
    assert reduce("mean", t64([2.0, 4.0, 6.0])).data == 4.0
    assert np.isclose(reduce("abs-sum", t64([[0.0, -0.5], [0.2, 0.0]])).data, 0.7)
    assert reduce("trace", t64(np.eye(5))).data == 5.0
    with pytest.raises(ValueError):
        reduce("max", t64([1.0]))
    with pytest.raises(ShapeError):
        trace(t64(np.ones((2, 3))))
    with pytest.raises(ValueError):
        mean(t64(np.ones((2, 2))), axis=3)


@pytest.mark.parametrize("tag", ["mean", "sum", "abs-sum"])
def test_reduce_gradients(tag):
    rng = np.random.default_rng(13)
    for _ in range(10):
        x = t64(rng.standard_normal((3, 4, 2)))
        assert grad_check(lambda: tsum(reduce(tag, x, (0, 2)) ** 2), [x]) < 1e-5
    x = t64(rng.standard_normal((2, 3, 3)))
    assert grad_check(lambda: tsum(trace(x) ** 2), [x]) < 1e-5


def test_shape_op_gradients():
    rng = np.random.default_rng(14)
    a = t64(rng.standard_normal((2, 3, 4)))
    b = t64(rng.standard_normal((2, 3, 4)))
    w = rng.standard_normal((4, 2, 3))
    assert grad_check(lambda: tsum(transpose(a, (2, 0, 1)) * w), [a]) < 1e-5
    assert grad_check(lambda: tsum(concat([a, b], axis=1) ** 2), [a, b]) < 1e-5
    assert grad_check(lambda: tsum(stack([a, b], axis=0) ** 3), [a, b]) < 1e-5
    assert grad_check(lambda: tsum(flip(a, 1) * b), [a, b]) < 1e-5
    assert grad_check(lambda: tsum(pad_time(a, 2, 1, 1) ** 2), [a]) < 1e-5
    assert grad_check(lambda: tsum(a[:, 1:, ::2] ** 2), [a]) < 1e-5
    assert grad_check(lambda: tsum(a[np.array([0, 0, 1])] ** 2), [a]) < 1e-5
    assert grad_check(lambda: tsum(a.reshape((6, 4)) ** 2), [a]) < 1e-5
    mask = rng.random((2, 3, 4)) > 0.5
    assert grad_check(lambda: tsum(where(mask, a, b) ** 2), [a, b]) < 1e-5
    pos = t64(rng.uniform(0.5, 2.0, (3,)))
    assert grad_check(lambda: tsum(log(pos) * exp(pos)), [pos]) < 1e-5
    assert grad_check(lambda: abs_sum(a), [a]) < 1e-5


def test_cross_entropy_gradient_and_errors():
    rng = np.random.default_rng(15)
    logits = t64(rng.standard_normal((4, 3)))
    labels = np.array([0, 2, 1, 2])
    ref = -np.mean(np.log(softmax(t64(logits.data, False)).data[np.arange(4), labels]))
    assert abs(cross_entropy(logits, labels).data - ref) < 1e-12
    assert grad_check(lambda: cross_entropy(logits, labels), [logits]) < 1e-5
    with pytest.raises(ValueError):
        cross_entropy(logits, np.array([0, 3, 1, 2]))


# grad_check and the tape ---------------------------------------------------------------


def test_grad_check_examples():
    x = t64([1.0, 2.0])
    assert grad_check(lambda: tsum(x * x), [x]) < 1e-7
    assert np.array_equal(x.grad, [2.0, 4.0])
    with pytest.raises(FloatingPointError), np.errstate(invalid="ignore"):
        grad_check(lambda: tsum(log(x - 5.0)), [x])
    with pytest.raises(TypeError):
        grad_check(lambda: tsum(x), [Tensor(np.ones(2, np.float32), requires_grad=True)])


def test_backward_shapes_and_no_grad():
    rng = np.random.default_rng(16)
    a = t64(rng.standard_normal((3, 2)))
    b = t64(rng.standard_normal((2,)))
    out = tsum(tanh(a * b + a))
    out.backward()
    assert a.grad.shape == a.shape and b.grad.shape == b.shape
    with no_grad():
        c = a * b
    assert not c.requires_grad and c._parents == ()


def test_deep_graph_does_not_recurse():
    x = t64([1.0])
    y = x
    for _ in range(5000):
        y = y * 1.0
    tsum(y).backward()
    assert x.grad[0] == 1.0
