"""Shared oracles for the test suite: finite differences and error measures."""

import numpy as np


def rel_error(a, b, floor=1e-12):
    """Max absolute difference scaled by the largest magnitude involved."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = max(np.abs(a).max(initial=0.0), np.abs(b).max(initial=0.0), floor)
    return float(np.abs(a - b).max(initial=0.0) / scale)


def central_diff(f, x, h=1e-5):
    """Central finite-difference gradient of scalar f at x (same shape as x)."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.ravel()
    gflat = grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * h)
    return grad


def central_diff_sample(f, x, coords, h=1e-5):
    """Central differences at selected flat coordinates only."""
    x = np.asarray(x, dtype=np.float64)
    flat = x.ravel()
    out = np.zeros(len(coords))
    for n, i in enumerate(coords):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        out[n] = (fp - fm) / (2 * h)
    return out
