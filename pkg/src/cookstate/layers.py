"""Forward and backward passes for every layer kind the model uses.

Each layer is a stateless function pair: ``*_forward`` returns the output
plus an opaque cache, ``*_backward`` consumes the cotangent and the cache and
returns gradients. Nothing here owns parameters or random state; the graph
executor supplies both explicitly, which keeps every pass pure and directly
checkable against finite differences.

Convolution is cross-correlation (no kernel flip), the universal deep
learning convention. Batch statistics use the population variance (divide
by N). Max pooling breaks ties toward the lowest flat index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, DimensionError, DomainError
from .tensor import col2im, im2col


def _require_nchw(name, x):
    x = np.asarray(x)
    if x.ndim != 4:
        raise DimensionError(f"{name} expects N x C x H x W, got shape {x.shape}")
    return x


# ---------------------------------------------------------------------------
# convolution


def conv2d_forward(x, weight, bias=None, stride=(1, 1), padding="valid"):
    """Cross-correlate ``x`` (N x C x H x W) with ``weight`` (F x C x Kh x Kw).

    Returns ``(y, cache)`` where y is N x F x Ho x Wo. Implemented as im2col
    followed by one matrix product per batch.
    """
    x = _require_nchw("conv2d", x)
    weight = np.asarray(weight)
    if weight.ndim != 4:
        raise DimensionError(f"conv2d weight must be F x C x Kh x Kw, got {weight.shape}")
    n, c, h, w = x.shape
    f, wc, kh, kw = weight.shape
    if wc != c:
        raise DimensionError(f"conv2d: input has {c} channels but kernel expects {wc}")
    cols, (ho, wo) = im2col(x, (kh, kw), stride, padding)
    k = c * kh * kw
    cols_mat = cols.transpose(1, 0, 2).reshape(k, n * ho * wo)  # one big GEMM operand
    wmat = weight.reshape(f, k)
    y = (wmat @ cols_mat).reshape(f, n, ho * wo).transpose(1, 0, 2)
    if bias is not None:
        y = y + np.asarray(bias).reshape(1, f, 1)
    y = y.reshape(n, f, ho, wo)
    cache = (x.shape, cols_mat, weight, bias is not None, stride, padding)
    return y, cache


def conv2d_backward(dy, cache):
    """Gradients of conv2d: ``(dx, dweight, dbias)`` (dbias None if no bias)."""
    x_shape, cols_mat, weight, has_bias, stride, padding = cache
    dy = np.asarray(dy)
    f, c, kh, kw = weight.shape
    n = x_shape[0]
    if dy.shape[:2] != (n, f):
        raise DimensionError(f"conv2d backward: dy {dy.shape} does not match cache")
    dy_mat = dy.reshape(n, f, -1).transpose(1, 0, 2).reshape(f, -1)  # F x (N*L)
    dbias = dy_mat.sum(axis=1) if has_bias else None
    dweight = (dy_mat @ cols_mat.T).reshape(weight.shape)
    dcols = (weight.reshape(f, -1).T @ dy_mat).reshape(c * kh * kw, n, -1).transpose(1, 0, 2)
    dx = col2im(dcols, x_shape, (kh, kw), stride, padding)
    return dx, dweight, dbias


# ---------------------------------------------------------------------------
# batch normalization


@dataclass
class BatchNormState:
    """Per-channel moving statistics updated once per training batch."""

    moving_mean: np.ndarray
    moving_var: np.ndarray
    momentum: float = 0.99
    epsilon: float = 1e-3

    def copy(self):
        return BatchNormState(
            self.moving_mean.copy(), self.moving_var.copy(), self.momentum, self.epsilon
        )


def batchnorm_forward(x, gamma, beta, state: BatchNormState, mode: str):
    """Normalize per channel; scale by gamma (1 if None) and shift by beta.

    Training mode normalizes with batch statistics and returns an updated
    state; inference mode uses the moving statistics and leaves the state
    untouched. Returns ``(y, cache, state_out)``.
    """
    x = _require_nchw("batchnorm", x)
    n, c, h, w = x.shape
    if n * h * w < 1:
        raise DomainError("batchnorm: zero batch extent")
    beta = np.asarray(beta).reshape(1, c, 1, 1)
    g = None if gamma is None else np.asarray(gamma).reshape(1, c, 1, 1)
    eps = state.epsilon

    if mode == "train":
        mean = x.mean(axis=(0, 2, 3), keepdims=True)
        var = x.var(axis=(0, 2, 3), keepdims=True)  # population variance
        inv_std = 1.0 / np.sqrt(var + eps)
        xhat = (x - mean) * inv_std
        m = state.momentum
        new_state = BatchNormState(
            m * state.moving_mean + (1.0 - m) * mean.reshape(c),
            m * state.moving_var + (1.0 - m) * var.reshape(c),
            m,
            eps,
        )
    elif mode == "inference":
        mean = state.moving_mean.reshape(1, c, 1, 1)
        inv_std = 1.0 / np.sqrt(state.moving_var.reshape(1, c, 1, 1) + eps)
        xhat = (x - mean) * inv_std
        new_state = state
    else:
        raise DomainError(f"batchnorm mode must be 'train' or 'inference', got {mode!r}")

    y = xhat if g is None else g * xhat
    y = y + beta
    cache = (xhat, inv_std, g, mode)
    return y, cache, new_state


def batchnorm_backward(dy, cache):
    """Gradients of batchnorm: ``(dx, dgamma, dbeta)`` (dgamma None when unscaled)."""
    xhat, inv_std, g, mode = cache
    dy = np.asarray(dy)
    dbeta = dy.sum(axis=(0, 2, 3))
    dgamma = None if g is None else (dy * xhat).sum(axis=(0, 2, 3))
    dxhat = dy if g is None else dy * g
    if mode == "inference":
        return dxhat * inv_std, dgamma, dbeta
    m = dy.shape[0] * dy.shape[2] * dy.shape[3]
    s1 = dxhat.sum(axis=(0, 2, 3), keepdims=True)
    s2 = (dxhat * xhat).sum(axis=(0, 2, 3), keepdims=True)
    dx = (inv_std / m) * (m * dxhat - s1 - xhat * s2)
    return dx, dgamma, dbeta


# ---------------------------------------------------------------------------
# pooling


def maxpool_forward(x, window, stride=None, padding="valid"):
    """Windowed maximum. Gradient routes to the first (lowest index) argmax."""
    x = _require_nchw("maxpool", x)
    stride = stride or window
    n, c, h, w = x.shape
    cols, (ho, wo) = im2col(
        x.reshape(n * c, 1, h, w), window, stride, padding, fill_value=-np.inf
    )
    argmax = cols.argmax(axis=1)  # first max on ties
    y = np.take_along_axis(cols, argmax[:, None, :], axis=1)[:, 0, :]
    y = y.reshape(n, c, ho, wo)
    cache = ((n, c, h, w), argmax, cols.shape, window, stride, padding)
    return y, cache


def maxpool_backward(dy, cache):
    (n, c, h, w), argmax, cols_shape, window, stride, padding = cache
    dy = np.asarray(dy)
    dcols = np.zeros(cols_shape, dtype=dy.dtype)
    np.put_along_axis(dcols, argmax[:, None, :], dy.reshape(n * c, 1, -1), axis=1)
    dx = col2im(dcols, (n * c, 1, h, w), window, stride, padding)
    return dx.reshape(n, c, h, w)


def avgpool_forward(x, window, stride=None, padding="valid"):
    """Windowed mean; padded cells are excluded from the divisor, so a
    constant input stays constant under "same" padding."""
    x = _require_nchw("avgpool", x)
    stride = stride or window
    n, c, h, w = x.shape
    cols, (ho, wo) = im2col(x.reshape(n * c, 1, h, w), window, stride, padding)
    ones, _ = im2col(np.ones((1, h, w), dtype=x.dtype), window, stride, padding)
    counts = ones.sum(axis=0)  # valid cells per output position
    y = (cols.sum(axis=1) / counts).reshape(n, c, ho, wo)
    cache = ((n, c, h, w), counts, ones, window, stride, padding)
    return y, cache


def avgpool_backward(dy, cache):
    (n, c, h, w), counts, ones, window, stride, padding = cache
    dy = np.asarray(dy)
    dcols = ones[None, :, :] * (dy.reshape(n * c, 1, -1) / counts)
    dx = col2im(dcols, (n * c, 1, h, w), window, stride, padding)
    return dx.reshape(n, c, h, w)


def global_average_pool(x):
    """Spatial mean per sample and channel: N x C x H x W -> N x C."""
    x = _require_nchw("global_average_pool", x)
    y = x.mean(axis=(2, 3))
    return y, x.shape


def global_average_pool_backward(dy, x_shape):
    n, c, h, w = x_shape
    dy = np.asarray(dy)
    return np.broadcast_to(dy[:, :, None, None] / (h * w), x_shape).copy()


# ---------------------------------------------------------------------------
# dense, activations, dropout, concat


def dense_forward(x, weight, bias=None):
    """Affine map ``y = x W + b`` for x of shape N x F and weight F x U."""
    x = np.asarray(x)
    weight = np.asarray(weight)
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[0]:
        raise DimensionError(f"dense: x {x.shape} incompatible with weight {weight.shape}")
    y = x @ weight
    if bias is not None:
        y = y + np.asarray(bias).reshape(1, -1)
    return y, (x, weight, bias is not None)


def dense_backward(dy, cache):
    x, weight, has_bias = cache
    dy = np.asarray(dy)
    dx = dy @ weight.T
    dweight = x.T @ dy
    dbias = dy.sum(axis=0) if has_bias else None
    return dx, dweight, dbias


def relu_forward(x):
    x = np.asarray(x)
    return np.maximum(x, 0), x > 0


def relu_backward(dy, mask):
    return np.asarray(dy) * mask


def dropout_forward(x, rate: float, mode: str, gen=None):
    """Inverted dropout: train zeroes units with probability ``rate`` and
    rescales survivors by 1/(1-rate); inference is the identity."""
    if not 0.0 <= rate < 1.0:
        raise DomainError(f"dropout rate must be in [0, 1), got {rate}")
    x = np.asarray(x)
    if mode == "inference" or rate == 0.0:
        return x, None
    if mode != "train":
        raise DomainError(f"dropout mode must be 'train' or 'inference', got {mode!r}")
    if gen is None:
        raise DomainError("dropout in train mode needs a generator")
    mask = (gen.random(x.shape) >= rate).astype(x.dtype)
    return x * mask / (1.0 - rate), (mask, rate)


def dropout_backward(dy, cache):
    if cache is None:
        return np.asarray(dy)
    mask, rate = cache
    return np.asarray(dy) * mask / (1.0 - rate)


def concat_forward(xs):
    """Channel-axis concatenation of N x C_i x H x W inputs."""
    xs = [np.asarray(x) for x in xs]
    base = xs[0].shape
    for x in xs[1:]:
        if x.shape[0] != base[0] or x.shape[2:] != base[2:]:
            raise DimensionError(
                f"concat inputs disagree on non-channel dims: {[x.shape for x in xs]}"
            )
    return np.concatenate(xs, axis=1), [x.shape[1] for x in xs]


def concat_backward(dy, channel_extents):
    dy = np.asarray(dy)
    splits = np.cumsum(channel_extents[:-1])
    return np.split(dy, splits, axis=1)


# ---------------------------------------------------------------------------
# classifier


def softmax(logits):
    """Row-wise softmax, stabilized by max subtraction."""
    logits = np.asarray(logits)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits, labels):
    """Mean negative log-likelihood over the batch plus its logits gradient.

    ``labels`` may be class indices (N,) or one-hot rows (N x K). Returns
    ``(loss, dlogits)`` with ``dlogits = (softmax - onehot) / N``.
    """
    logits = np.asarray(logits)
    if logits.ndim != 2 or logits.shape[1] < 2:
        raise DimensionError(f"softmax_cross_entropy expects N x K, K >= 2, got {logits.shape}")
    n, k = logits.shape
    labels = np.asarray(labels)
    if labels.ndim == 2:
        if labels.shape != logits.shape:
            raise DimensionError(f"one-hot labels {labels.shape} do not match logits {logits.shape}")
        onehot = labels.astype(logits.dtype)
    else:
        if labels.shape != (n,):
            raise DimensionError(f"labels shape {labels.shape} does not match batch {n}")
        idx = labels.astype(np.int64)
        if idx.min() < 0 or idx.max() >= k:
            raise DataError(f"label out of range [0, {k}): {idx.min()}..{idx.max()}")
        onehot = np.zeros_like(logits)
        onehot[np.arange(n), idx] = 1.0
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    log_probs = shifted - log_z[:, None]
    loss = float(-(onehot * log_probs).sum() / n)
    dlogits = (np.exp(log_probs) - onehot) / n
    return loss, dlogits
