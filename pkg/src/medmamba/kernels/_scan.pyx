# cython: language_level=3, boundscheck=False, wraparound=False, initializedcheck=False, cdivision=True
"""Compiled diagonal linear recurrence x_t = a_t * x_{t-1} + b_t and its adjoint.

Arrays are C-contiguous with layout (lanes, T, N); x_{-1} = 0.
"""

ctypedef fused real:
    float
    double


def scan_forward(const real[:, :, ::1] a, const real[:, :, ::1] b, real[:, :, ::1] out):
    cdef Py_ssize_t lanes = a.shape[0], steps = a.shape[1], width = a.shape[2]
    cdef Py_ssize_t l, t, n
    with nogil:
        for l in range(lanes):
            for n in range(width):
                out[l, 0, n] = b[l, 0, n]
            for t in range(1, steps):
                for n in range(width):
                    out[l, t, n] = a[l, t, n] * out[l, t - 1, n] + b[l, t, n]


def scan_backward(const real[:, :, ::1] a, const real[:, :, ::1] states, const real[:, :, ::1] grad_out,
                  real[:, :, ::1] grad_a, real[:, :, ::1] grad_b):
    cdef Py_ssize_t lanes = a.shape[0], steps = a.shape[1], width = a.shape[2]
    cdef Py_ssize_t l, t, n
    with nogil:
        for l in range(lanes):
            t = steps - 1
            for n in range(width):
                grad_b[l, t, n] = grad_out[l, t, n]
            for t in range(steps - 2, -1, -1):
                for n in range(width):
                    grad_b[l, t, n] = grad_out[l, t, n] + a[l, t + 1, n] * grad_b[l, t + 1, n]
            for n in range(width):
                grad_a[l, 0, n] = 0
            for t in range(1, steps):
                for n in range(width):
                    grad_a[l, t, n] = grad_b[l, t, n] * states[l, t - 1, n]
