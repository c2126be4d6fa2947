"""Pure-numpy recurrence kernels, loop over time and vectorized over lanes."""
import numpy as np


def scan_forward(a, b, out):
    out[:, 0] = b[:, 0]
    for t in range(1, a.shape[1]):
        np.multiply(a[:, t], out[:, t - 1], out=out[:, t])
        out[:, t] += b[:, t]


def scan_backward(a, states, grad_out, grad_a, grad_b):
    steps = a.shape[1]
    grad_b[:, steps - 1] = grad_out[:, steps - 1]
    for t in range(steps - 2, -1, -1):
        np.multiply(a[:, t + 1], grad_b[:, t + 1], out=grad_b[:, t])
        grad_b[:, t] += grad_out[:, t]
    grad_a[:, 0] = 0
    np.multiply(grad_b[:, 1:], states[:, :-1], out=grad_a[:, 1:])
