"""Dense tensor conventions and the primitive kernels every layer is built on.

Conventions used throughout the package:

* arrays are numpy ndarrays, row-major (C order), channels-first: images and
  activations are ``C x H x W`` (``N x C x H x W`` batched);
* the working dtype is float32 by default and can be switched globally to
  float64 for finite-difference gradient checking (``set_default_dtype`` /
  ``use_dtype``);
* kernels never modify their inputs and never emit NaN/Inf silently; callers
  can assert finiteness with ``check_finite``;
* summation order is numpy's (pairwise over the contiguous axis), which is
  fixed for a given build, so repeated runs produce bit-identical results.

Padding modes are ``"valid"`` (no padding) and ``"same"`` (zero fill, output
size ``ceil(size / stride)``; the extra cell of an odd total goes to the
bottom/right edge).
"""

from __future__ import annotations

import contextlib

import numpy as np

from .errors import DimensionError, DomainError, NumericError

_DEFAULT_DTYPE = np.float32


def set_default_dtype(dtype) -> None:
    """Switch the working precision globally (float32 or float64)."""
    global _DEFAULT_DTYPE
    dt = np.dtype(dtype)
    if dt not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise DomainError(f"unsupported dtype {dt}; use float32 or float64")
    _DEFAULT_DTYPE = dt.type


def default_dtype():
    return _DEFAULT_DTYPE


@contextlib.contextmanager
def use_dtype(dtype):
    """Context manager that temporarily switches the working precision."""
    previous = _DEFAULT_DTYPE
    set_default_dtype(dtype)
    try:
        yield
    finally:
        set_default_dtype(previous)


def as_tensor(data, dtype=None) -> np.ndarray:
    """Coerce ``data`` to a C-contiguous array in the working precision."""
    return np.ascontiguousarray(data, dtype=dtype or _DEFAULT_DTYPE)


def check_finite(name: str, x: np.ndarray) -> np.ndarray:
    """Raise :class:`NumericError` if ``x`` contains NaN or Inf."""
    if not np.all(np.isfinite(x)):
        bad = int(np.size(x) - np.count_nonzero(np.isfinite(x)))
        raise NumericError(f"{name}: {bad} non-finite element(s) in shape {x.shape}")
    return x


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product ``c[i, j] = sum_k a[i, k] * b[k, j]``."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul inner dimensions disagree: {a.shape} x {b.shape}")
    return a @ b


def conv_output_size(size: int, kernel: int, stride: int, pad_total: int) -> int:
    out = (size + pad_total - kernel) // stride + 1
    if out < 1:
        raise DimensionError(
            f"kernel {kernel} (stride {stride}) does not fit input extent "
            f"{size} with total padding {pad_total}"
        )
    return out


def pad_amounts(size: int, kernel: int, stride: int, padding: str) -> tuple[int, int]:
    """Per-edge zero padding for a spatial axis under the given mode."""
    if padding == "valid":
        return 0, 0
    if padding == "same":
        out = -(-size // stride)  # ceil
        total = max((out - 1) * stride + kernel - size, 0)
        lo = total // 2
        return lo, total - lo
    raise DomainError(f"unknown padding mode {padding!r}")


def _geometry(h, w, kernel, stride, padding):
    kh, kw = kernel
    sh, sw = stride
    ph = pad_amounts(h, kh, sh, padding)
    pw = pad_amounts(w, kw, sw, padding)
    ho = conv_output_size(h, kh, sh, ph[0] + ph[1])
    wo = conv_output_size(w, kw, sw, pw[0] + pw[1])
    return kh, kw, sh, sw, ph, pw, ho, wo


def im2col(
    x: np.ndarray,
    kernel: tuple[int, int],
    stride: tuple[int, int] = (1, 1),
    padding: str = "valid",
    fill_value: float = 0.0,
):
    """Rearrange receptive-field patches into matrix columns.

    For a ``C x H x W`` input, returns a ``(C*Kh*Kw) x (Ho*Wo)`` matrix whose
    column j is the patch feeding output position j (row-major over the
    output grid); rows run over (channel, kernel row, kernel column) in that
    order. A batched ``N x C x H x W`` input yields ``N x (C*Kh*Kw) x (Ho*Wo)``.
    Padding cells take ``fill_value`` (zero for convolution; pooling callers
    pass their own sentinel).
    """
    x = np.asarray(x)
    squeeze = x.ndim == 3
    if squeeze:
        x = x[None]
    if x.ndim != 4:
        raise DimensionError(f"im2col expects C x H x W or N x C x H x W, got {x.shape}")
    n, c, h, w = x.shape
    kh, kw, sh, sw, ph, pw, ho, wo = _geometry(h, w, kernel, stride, padding)
    if ph != (0, 0) or pw != (0, 0):
        x = np.pad(x, ((0, 0), (0, 0), ph, pw), mode="constant", constant_values=fill_value)
    cols = np.empty((n, c, kh, kw, ho, wo), dtype=x.dtype)
    for di in range(kh):
        for dj in range(kw):
            cols[:, :, di, dj] = x[:, :, di : di + ho * sh : sh, dj : dj + wo * sw : sw]
    cols = cols.reshape(n, c * kh * kw, ho * wo)
    if squeeze:
        cols = cols[0]
    return cols, (ho, wo)


def col2im(
    cols: np.ndarray,
    x_shape,
    kernel: tuple[int, int],
    stride: tuple[int, int] = (1, 1),
    padding: str = "valid",
):
    """Adjoint of :func:`im2col`: scatter-add patch columns back onto an image.

    Satisfies the dot-product test ``<im2col(x), Y> == <x, col2im(Y)>``.
    """
    cols = np.asarray(cols)
    squeeze = cols.ndim == 2
    if squeeze:
        cols = cols[None]
        x_shape = (1, *x_shape)
    n, c, h, w = x_shape
    kh, kw, sh, sw, ph, pw, ho, wo = _geometry(h, w, kernel, stride, padding)
    if cols.shape[1:] != (c * kh * kw, ho * wo):
        raise DimensionError(
            f"col2im: columns {cols.shape} do not match target {x_shape} "
            f"with kernel {kernel}, stride {stride}, padding {padding!r}"
        )
    hp, wp = h + ph[0] + ph[1], w + pw[0] + pw[1]
    padded = np.zeros((n, c, hp, wp), dtype=cols.dtype)
    cols_r = cols.reshape(n, c, kh, kw, ho, wo)
    for di in range(kh):
        for dj in range(kw):
            padded[:, :, di : di + ho * sh : sh, dj : dj + wo * sw : sw] += cols_r[:, :, di, dj]
    out = padded[:, :, ph[0] : ph[0] + h, pw[0] : pw[0] + w]
    if squeeze:
        out = out[0]
    return out


def reduce(x: np.ndarray, axes, mode: str) -> np.ndarray:
    """Reduce ``x`` over ``axes`` with ``sum``, ``mean`` or ``max`` semantics."""
    x = np.asarray(x)
    axes = tuple(axes)
    if len(set(axes)) != len(axes):
        raise DomainError(f"reduce axes must be distinct, got {axes}")
    for ax in axes:
        if not -x.ndim <= ax < x.ndim:
            raise DimensionError(f"axis {ax} out of range for shape {x.shape}")
        if x.shape[ax] == 0:
            raise DomainError(f"empty reduction extent on axis {ax} of shape {x.shape}")
    if mode == "sum":
        return x.sum(axis=axes)
    if mode == "mean":
        return x.mean(axis=axes)
    if mode == "max":
        return x.max(axis=axes)
    raise DomainError(f"unknown reduce mode {mode!r}")
