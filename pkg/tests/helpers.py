"""Shared test utilities: scalar reference cells and finite differences.

The scalar implementations below use plain Python floats, lists, and
math.exp only, no numpy, so they are an independent oracle for the
vectorized cell code.
"""

import math

import numpy as np


def scalar_sigmoid(z):
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def _mv(m, v):
    return [sum(m[i][j] * v[j] for j in range(len(v))) for i in range(len(m))]


def scalar_classic_step(p, x, h_prev, c_prev):
    """Classic LSTM step over Python lists; p maps names to nested lists."""
    xh = list(x) + list(h_prev)
    i_g = [scalar_sigmoid(s + b) for s, b in zip(_mv(p["W_i"], xh), p["b_i"])]
    f_g = [scalar_sigmoid(s + b) for s, b in zip(_mv(p["W_f"], xh), p["b_f"])]
    cand = [math.tanh(s + b) for s, b in zip(_mv(p["W_c"], xh), p["b_c"])]
    c = [f * cp + i * g for f, cp, i, g in zip(f_g, c_prev, i_g, cand)]
    o_g = [scalar_sigmoid(s + b) for s, b in zip(_mv(p["W_o"], xh), p["b_o"])]
    h = [o * math.tanh(cv) for o, cv in zip(o_g, c)]
    return h, c


def scalar_aa_step(p, x, aspect, h_prev, c_prev):
    """Aspect-aware LSTM step over Python lists; p maps names to nested lists."""
    ah = list(aspect) + list(h_prev)
    xh = list(x) + list(h_prev)
    a_i = [scalar_sigmoid(s + b) for s, b in zip(_mv(p["W_ai"], ah), p["b_ai"])]
    i_g = [scalar_sigmoid(s + g * a + b)
           for s, g, a, b in zip(_mv(p["W_i"], xh), a_i, aspect, p["b_i"])]
    a_f = [scalar_sigmoid(s + b) for s, b in zip(_mv(p["W_af"], ah), p["b_af"])]
    f_g = [scalar_sigmoid(s + g * a + b)
           for s, g, a, b in zip(_mv(p["W_f"], xh), a_f, aspect, p["b_f"])]
    cand = [math.tanh(s + b) for s, b in zip(_mv(p["W_c"], xh), p["b_c"])]
    c = [f * cp + i * g for f, cp, i, g in zip(f_g, c_prev, i_g, cand)]
    a_o = [scalar_sigmoid(s + b) for s, b in zip(_mv(p["W_ao"], ah), p["b_ao"])]
    o_g = [scalar_sigmoid(s + g * a + b)
           for s, g, a, b in zip(_mv(p["W_o"], xh), a_o, aspect, p["b_o"])]
    h = [o * math.tanh(cv) for o, cv in zip(o_g, c)]
    return h, c


def params_as_lists(params) -> dict:
    return {name: arr.tolist() for name, arr in params.to_arrays().items()}


def fd_grad_of_array(loss_fn, arr: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central finite differences of loss_fn() w.r.t. every entry of arr.

    loss_fn takes no arguments and must read arr by reference; entries are
    perturbed in place and restored.
    """
    grad = np.zeros_like(arr)
    flat = arr.reshape(-1)
    gflat = grad.reshape(-1)
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + eps
        hi = loss_fn()
        flat[k] = orig - eps
        lo = loss_fn()
        flat[k] = orig
        gflat[k] = (hi - lo) / (2.0 * eps)
    return grad


def worst_rel_err(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    """Max relative error over coordinates whose numeric magnitude exceeds floor."""
    worst = 0.0
    for a, n in zip(analytic.reshape(-1), numeric.reshape(-1)):
        if abs(n) <= floor:
            continue
        worst = max(worst, abs(a - n) / max(abs(a), abs(n)))
    return worst
