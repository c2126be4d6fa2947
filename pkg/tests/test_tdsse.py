import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from medmamba.autodiff import Tensor, grad_check, tsum
from medmamba.tdsse import (
    TDSSEParams,
    compute_views,
    diff_view,
    freq_view,
    global_gate,
    local_gate,
    tdsse_forward,
)


def t64(a, grad=False):
    return Tensor(np.asarray(a, dtype=np.float64), requires_grad=grad)


def tdsse64(T=8, D=4, views=("raw", "diff", "freq"), seed=0):
    return TDSSEParams.init(T, D, 4, 2, 4, views, np.random.default_rng(seed), np.float64)


def naive_dft(x):
    # explicit O(T^2) real DFT over axis 0
    T = x.shape[0]
    k = np.arange(T // 2 + 1)[:, None]
    t = np.arange(T)[None, :]
    basis = np.exp(-2j * np.pi * k * t / T)
    return np.tensordot(basis, x, axes=(1, 0))


# diff view ---------------------------------------------------------------------


def test_diff_view_examples():
    z = np.random.default_rng(0).standard_normal((1, 2, 3))
    assert np.array_equal(diff_view(t64(np.repeat(z, 5, axis=0))).data, np.zeros((5, 2, 3)))
    ramp = np.arange(1.0, 5.0).reshape(4, 1, 1)
    assert np.array_equal(diff_view(t64(ramp)).data.ravel(), [0.0, 1.0, 1.0, 1.0])
    assert np.array_equal(diff_view(t64(np.ones((1, 2, 2)))).data, np.zeros((1, 2, 2)))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 20))
def test_diff_view_offset_invariance(seed, T):
    rng = np.random.default_rng(seed)
    # dyadic grid values so every sum and difference is exact
    z = rng.integers(-4096, 4096, (T, 3, 2)) / 1024.0
    c = rng.integers(-8, 8, (1, 3, 2)).astype(np.float64)
    assert np.array_equal(diff_view(t64(z + c)).data, diff_view(t64(z)).data)


def test_diff_view_attenuates_a_ramp():
    rng = np.random.default_rng(1)
    T, slope = 32, 0.3
    z = rng.standard_normal((T, 2, 3))
    ramp = slope * np.arange(1, T + 1, dtype=np.float64).reshape(T, 1, 1)
    raw_gap = np.max(np.abs((z + ramp) - z))
    diff_gap = np.abs(diff_view(t64(z + ramp)).data - diff_view(t64(z)).data)
    assert np.allclose(diff_gap[1:], slope, atol=1e-12)
    assert diff_gap.max() < raw_gap


# frequency view ----------------------------------------------------------------


@pytest.mark.parametrize("T", [1, 2, 7, 8, 128])
def test_identity_filter_passes_through(T):
    z = np.random.default_rng(T).standard_normal((T, 3, 4))
    F = T // 2 + 1
    out = freq_view(t64(z), t64(np.ones((F, 1, 4))), t64(np.zeros((F, 1, 4)))).data
    assert out.dtype == np.float64
    assert np.max(np.abs(out - z)) < 1e-10


def test_identity_filter_float32():
    z = np.random.default_rng(3).standard_normal((128, 2, 4)).astype(np.float32)
    w = np.ones((65, 1, 4), np.float32)
    out = freq_view(Tensor(z), Tensor(w), Tensor(np.zeros_like(w))).data
    assert np.max(np.abs(out - z)) < 1e-5


def test_zero_filter_gives_zero():
    z = np.random.default_rng(4).standard_normal((9, 2, 3))
    out = freq_view(t64(z), t64(np.zeros((5, 1, 3))), t64(np.zeros((5, 1, 3)))).data
    assert np.max(np.abs(out)) < 1e-14


def test_dc_filter_recovers_the_constant():
    T = 16
    t = np.arange(T)
    z = (2.5 + np.cos(2 * np.pi * 3 * t / T)).reshape(T, 1, 1)
    w_re = np.zeros((T // 2 + 1, 1, 1))
    w_re[0] = 1.0
    out = freq_view(t64(z), t64(w_re), t64(np.zeros_like(w_re))).data
    dc = naive_dft(z[:, 0, 0])[0].real / T
    assert abs(dc - 2.5) < 1e-12
    assert np.max(np.abs(out - dc)) < 1e-12


def test_random_filter_matches_dft_oracle():
    rng = np.random.default_rng(5)
    T, D = 10, 2
    z = rng.standard_normal((T, 1, D))
    w = rng.standard_normal((T // 2 + 1, 1, D)) + 1j * rng.standard_normal((T // 2 + 1, 1, D))
    w[0].imag = 0.0
    w[-1].imag = 0.0  # Nyquist bin of an even length is real
    out = freq_view(t64(z), t64(w.real), t64(w.imag)).data
    ref = np.fft.irfft(naive_dft(z) * w, T, axis=0)
    assert np.max(np.abs(out - ref)) < 1e-12


# gates ------------------------------------------------------------------------


def test_local_gate_examples():
    rng = np.random.default_rng(6)
    W = t64(rng.standard_normal((3, 3)))
    assert np.array_equal(local_gate(t64(np.zeros((2, 2, 3))), W, t64(np.zeros(3))).data, np.zeros((2, 2, 3)))
    h = rng.standard_normal((4, 2, 3))
    assert np.allclose(local_gate(t64(h), W, t64(np.full(3, 1e3))).data, h, atol=1e-12)
    b = rng.standard_normal(3)
    gate = 1.0 / (1.0 + np.exp(-(h @ W.data + b)))
    assert np.allclose(local_gate(t64(h), W, t64(b)).data, gate * h, atol=1e-14)


def test_global_gate_symmetric_views_are_uniform():
    p = tdsse64()
    p.mlp_w2.data[:] = 0.0
    h = t64(np.random.default_rng(7).standard_normal((8, 3, 4)))
    alpha = global_gate([h, h, h], p).data
    assert np.allclose(alpha, 1 / 3, atol=1e-15)


def test_global_gate_forced_logits():
    p = tdsse64()
    p.mlp_w2.data[:] = 0.0
    p.mlp_b2.data[:] = [10.0, 0.0, 0.0]
    h = t64(np.ones((8, 3, 4)))
    alpha = global_gate([h, h, h], p).data
    small = 1.0 / (np.exp(10.0) + 2.0)
    assert np.allclose(alpha, [np.exp(10.0) * small, small, small], atol=1e-15)
    assert abs(alpha[0] - 0.99991) < 1e-5 and abs(alpha[1] - 4.54e-5) < 1e-7


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_alpha_sums_to_one(seed):
    p = tdsse64(seed=seed % 7)
    rng = np.random.default_rng(seed)
    views = [t64(rng.standard_normal((2, 8, 3, 4)) * 5) for _ in range(3)]
    alpha = global_gate(views, p).data
    assert alpha.shape == (2, 3)
    assert np.allclose(alpha.sum(-1), 1.0, atol=1e-12) and np.all(alpha > 0)


# full encoder -----------------------------------------------------------------------


def test_closed_gates_leave_pure_residual():
    p = tdsse64()
    for b in p.gate_b:
        b.data[:] = -1e4
    z = np.random.default_rng(8).standard_normal((8, 3, 4))
    out, alpha = tdsse_forward(t64(z), p)
    assert np.array_equal(out.data, z)
    assert alpha.shape == (3,)


@pytest.mark.parametrize("T", [1, 2, 128])
def test_shape_contract(T):
    p = TDSSEParams.init(T, 4, rng=np.random.default_rng(0))
    z = Tensor(np.random.default_rng(9).standard_normal((T, 3, 4)).astype(np.float32))
    out, alpha = tdsse_forward(z, p)
    assert out.shape == (T, 3, 4) and alpha.shape == (3,)
    assert np.all(np.isfinite(out.data))


def test_residual_source_override():
    p = tdsse64()
    rng = np.random.default_rng(10)
    z, src = rng.standard_normal((2, 8, 3, 4))
    a, _ = tdsse_forward(t64(z), p)
    b, _ = tdsse_forward(t64(z), p, source=t64(src))
    assert np.allclose(b.data - a.data, src - z, atol=1e-12)


def test_fusion_is_bounded_by_the_largest_view():
    p = tdsse64(seed=1)
    z = t64(np.random.default_rng(11).standard_normal((8, 3, 4)) * 3)
    out, _ = tdsse_forward(z, p)
    views = compute_views(z, p)
    assert np.max(np.abs(out.data - z.data)) <= max(np.max(np.abs(v.data)) for v in views) + 1e-12


def test_channels_couple_only_through_alpha():
    p = tdsse64()
    z = t64(np.random.default_rng(12).standard_normal((8, 3, 4)))
    joint = compute_views(z, p)
    for c in range(3):
        alone = compute_views(t64(z.data[:, c : c + 1]), p)
        for j, a in zip(joint, alone):
            assert np.allclose(j.data[:, c : c + 1], a.data, atol=1e-12)


def test_single_view_has_unit_weight():
    p = tdsse64(views=("raw",))
    out, alpha = tdsse_forward(t64(np.random.default_rng(13).standard_normal((8, 3, 4))), p)
    assert np.array_equal(alpha.data, [1.0])
    with pytest.raises(ValueError):
        tdsse64(views=("raw", "wavelet"))


def test_gradient_matches_finite_differences():
    p = tdsse64(T=8, D=4)
    rng = np.random.default_rng(14)
    p.freq_re.data[:] = rng.uniform(0.5, 1.5, p.freq_re.shape)
    p.freq_im.data[:] = rng.uniform(-0.5, 0.5, p.freq_im.shape)
    z = t64(rng.standard_normal((8, 3, 4)), grad=True)
    w = rng.standard_normal((8, 3, 4))
    err = grad_check(lambda: tsum(tdsse_forward(z, p)[0] * w), [z, *p.parameters()], h=1e-3, stencil=5, max_coords=8, rng=rng)
    assert err < 1e-4
