"""Forward and backward passes for every layer primitive the network uses.

Tensors are plain numpy arrays in height-width-channel layout. Spatial
functions accept a single map ``(H, W, C)`` or a batch ``(N, H, W, C)``;
dense functions accept ``(n_in,)`` or ``(N, n_in)``. Parameter gradients
of a batched call are sums over the batch.

Spatial layers take an optional ``subsample``: the result equals the
ordinary output sliced ``[::subsample, ::subsample]`` but only those
positions are computed. The model uses it to skip outputs that a later
strided 1x1 layer never reads.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from specklenet.errors import NumericError, ShapeError

PROB_FLOOR = 1e-12


class Padding(str, enum.Enum):
    SAME = "same"
    VALID = "valid"


@dataclass
class ConvParams:
    kernel: np.ndarray  # (kh, kw, c_in, c_out)
    bias: np.ndarray  # (c_out,)
    stride: int = 1
    padding: Padding = Padding.SAME

    def __post_init__(self):
        self.padding = Padding(self.padding)
        if self.kernel.ndim != 4:
            raise ShapeError(f"conv kernel must be rank 4, got shape {self.kernel.shape}")
        kh, kw, _, c_out = self.kernel.shape
        if kh % 2 == 0 or kw % 2 == 0:
            raise ShapeError(f"conv kernel sizes must be odd, got {kh}x{kw}")
        if self.bias.shape != (c_out,):
            raise ShapeError(f"bias shape {self.bias.shape} does not match kernel shape {self.kernel.shape}")
        if self.stride < 1:
            raise ShapeError(f"stride must be >= 1, got {self.stride}")


@dataclass
class DepthwiseParams:
    kernel: np.ndarray  # (kh, kw, c)
    bias: np.ndarray  # (c,)
    stride: int = 1
    padding: Padding = Padding.SAME

    def __post_init__(self):
        self.padding = Padding(self.padding)
        if self.kernel.ndim != 3:
            raise ShapeError(f"depthwise kernel must be rank 3, got shape {self.kernel.shape}")
        kh, kw, c = self.kernel.shape
        if kh % 2 == 0 or kw % 2 == 0:
            raise ShapeError(f"depthwise kernel sizes must be odd, got {kh}x{kw}")
        if self.bias.shape != (c,):
            raise ShapeError(f"bias shape {self.bias.shape} does not match kernel shape {self.kernel.shape}")
        if self.stride < 1:
            raise ShapeError(f"stride must be >= 1, got {self.stride}")


@dataclass
class DenseParams:
    weights: np.ndarray  # (n_in, n_out)
    bias: np.ndarray  # (n_out,)

    def __post_init__(self):
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[1],):
            raise ShapeError(
                f"dense weights {self.weights.shape} and bias {self.bias.shape} are inconsistent"
            )


def output_size(size: int, kernel: int, stride: int, padding: Padding | str) -> int:
    if Padding(padding) is Padding.SAME:
        return -(-size // stride)
    if size < kernel:
        raise ShapeError(f"valid convolution needs size >= kernel, got {size} < {kernel}")
    return (size - kernel) // stride + 1


def _pad_amounts(size: int, kernel: int, stride: int, padding: Padding) -> tuple[int, int, int]:
    out = output_size(size, kernel, stride, padding)
    if padding is Padding.VALID:
        return out, 0, 0
    total = max((out - 1) * stride + kernel - size, 0)
    # odd totals put the extra row/column after the data
    return out, total // 2, total - total // 2


def _as_batch(x: np.ndarray, rank: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(x)
    if x.ndim == rank:
        return x[None], True
    if x.ndim == rank + 1:
        return x, False
    raise ShapeError(f"expected rank {rank} or {rank + 1} input, got shape {x.shape}")


def _padded(x4: np.ndarray, kh: int, kw: int, stride: int, padding: Padding, subsample: int = 1):
    if subsample < 1:
        raise ShapeError(f"subsample must be >= 1, got {subsample}")
    _, h, w, _ = x4.shape
    ho, top, bottom = _pad_amounts(h, kh, stride, padding)
    wo, left, right = _pad_amounts(w, kw, stride, padding)
    if top or bottom or left or right:
        x4 = np.pad(x4, ((0, 0), (top, bottom), (left, right), (0, 0)))
    return x4, -(-ho // subsample), -(-wo // subsample), (top, left), stride * subsample


def _tap(xp: np.ndarray, ky: int, kx: int, ho: int, wo: int, s: int) -> tuple[slice, slice]:
    return slice(ky, ky + s * (ho - 1) + 1, s), slice(kx, kx + s * (wo - 1) + 1, s)


def _crop(gxp: np.ndarray, shape: tuple, origin: tuple[int, int]) -> np.ndarray:
    top, left = origin
    return gxp[:, top:top + shape[1], left:left + shape[2], :]


def _column_sum(a2: np.ndarray) -> np.ndarray:
    return np.ones(a2.shape[0], dtype=a2.dtype) @ a2


def _im2col(xp: np.ndarray, kh: int, kw: int, ho: int, wo: int, s: int) -> np.ndarray:
    n, c = xp.shape[0], xp.shape[-1]
    cols = np.empty((n, ho, wo, kh, kw, c), dtype=xp.dtype)
    for ky in range(kh):
        for kx in range(kw):
            rows, cs = _tap(xp, ky, kx, ho, wo, s)
            cols[:, :, :, ky, kx, :] = xp[:, rows, cs, :]
    return cols.reshape(n * ho * wo, kh * kw * c)


def conv2d_forward(x: np.ndarray, p: ConvParams, subsample: int = 1) -> np.ndarray:
    x4, single = _as_batch(x, 3)
    kh, kw, c_in, c_out = p.kernel.shape
    if x4.shape[-1] != c_in:
        raise ShapeError(f"input shape {np.shape(x)} incompatible with kernel shape {p.kernel.shape}")
    xp, ho, wo, _, step = _padded(x4, kh, kw, p.stride, p.padding, subsample)
    n = x4.shape[0]
    if kh == kw == 1:
        rows, cols = _tap(xp, 0, 0, ho, wo, step)
        out = xp[:, rows, cols, :].reshape(-1, c_in) @ p.kernel[0, 0]
    else:
        out = _im2col(xp, kh, kw, ho, wo, step) @ p.kernel.reshape(-1, c_out)
    out += p.bias
    out = out.reshape(n, ho, wo, c_out)
    return out[0] if single else out


def conv2d_backward(x: np.ndarray, p: ConvParams, grad_out: np.ndarray, subsample: int = 1):
    """Return ``(grad_input, grad_kernel, grad_bias)`` for :func:`conv2d_forward`."""
    x4, single = _as_batch(x, 3)
    g4, _ = _as_batch(grad_out, 3)
    kh, kw, c_in, c_out = p.kernel.shape
    if x4.shape[-1] != c_in:
        raise ShapeError(f"input shape {np.shape(x)} incompatible with kernel shape {p.kernel.shape}")
    xp, ho, wo, origin, step = _padded(x4, kh, kw, p.stride, p.padding, subsample)
    expected = (x4.shape[0], ho, wo, c_out)
    if g4.shape != expected:
        raise ShapeError(f"grad_out shape {np.shape(grad_out)} does not match output shape {expected[single:]}")
    g2 = g4.reshape(-1, c_out)
    grad_bias = _column_sum(g2)
    s = step
    if kh == kw == 1:
        rows, cols = _tap(xp, 0, 0, ho, wo, s)
        grad_kernel = (xp[:, rows, cols, :].reshape(-1, c_in).T @ g2).reshape(p.kernel.shape)
        gx = (g2 @ p.kernel[0, 0].T).reshape(g4.shape[:3] + (c_in,))
        if s == 1 and xp.shape == x4.shape:  # 1x1 stride 1 never pads
            return (gx[0] if single else gx), grad_kernel, grad_bias
        gxp = np.zeros(xp.shape, dtype=gx.dtype)
        gxp[:, rows, cols, :] = gx
    else:
        grad_kernel = (_im2col(xp, kh, kw, ho, wo, s).T @ g2).reshape(p.kernel.shape)
        gcols = (g2 @ p.kernel.reshape(-1, c_out).T).reshape(g4.shape[:3] + (kh, kw, c_in))
        gxp = np.zeros(xp.shape, dtype=gcols.dtype)
        for ky in range(kh):
            for kx in range(kw):
                rows, cols = _tap(xp, ky, kx, ho, wo, s)
                gxp[:, rows, cols, :] += gcols[:, :, :, ky, kx, :]
    grad_input = _crop(gxp, x4.shape, origin)
    return (grad_input[0] if single else grad_input), grad_kernel, grad_bias


def depthwise_forward(x: np.ndarray, p: DepthwiseParams, subsample: int = 1) -> np.ndarray:
    x4, single = _as_batch(x, 3)
    kh, kw, c = p.kernel.shape
    if x4.shape[-1] != c:
        raise ShapeError(f"input shape {np.shape(x)} has {x4.shape[-1]} channels, kernel shape {p.kernel.shape} has {c}")
    xp, ho, wo, _, step = _padded(x4, kh, kw, p.stride, p.padding, subsample)
    dtype = np.result_type(x4, p.kernel)
    out = np.empty((x4.shape[0], ho, wo, c), dtype=dtype)
    out[...] = p.bias
    tmp = np.empty_like(out)
    for ky in range(kh):
        for kx in range(kw):
            rows, cols = _tap(xp, ky, kx, ho, wo, step)
            np.multiply(xp[:, rows, cols, :], p.kernel[ky, kx], out=tmp)
            out += tmp
    return out[0] if single else out


def depthwise_backward(x: np.ndarray, p: DepthwiseParams, grad_out: np.ndarray, subsample: int = 1):
    x4, single = _as_batch(x, 3)
    g4, _ = _as_batch(grad_out, 3)
    kh, kw, c = p.kernel.shape
    if x4.shape[-1] != c:
        raise ShapeError(f"input shape {np.shape(x)} has {x4.shape[-1]} channels, kernel shape {p.kernel.shape} has {c}")
    xp, ho, wo, origin, step = _padded(x4, kh, kw, p.stride, p.padding, subsample)
    if g4.shape != (x4.shape[0], ho, wo, c):
        raise ShapeError(f"grad_out shape {np.shape(grad_out)} does not match output shape {(ho, wo, c)}")
    g2 = g4.reshape(-1, c)
    grad_bias = _column_sum(g2)
    grad_kernel = np.empty(p.kernel.shape, dtype=np.result_type(x4, g4))
    gxp = np.zeros(xp.shape, dtype=np.result_type(g4, p.kernel))
    tmp = np.empty(g4.shape, dtype=np.result_type(x4, g4, p.kernel))
    for ky in range(kh):
        for kx in range(kw):
            rows, cols = _tap(xp, ky, kx, ho, wo, step)
            np.multiply(xp[:, rows, cols, :], g4, out=tmp)
            grad_kernel[ky, kx] = _column_sum(tmp.reshape(-1, c))
            np.multiply(g4, p.kernel[ky, kx], out=tmp)
            gxp[:, rows, cols, :] += tmp
    grad_input = _crop(gxp, x4.shape, origin)
    return (grad_input[0] if single else grad_input), grad_kernel, grad_bias


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    # x may be the pre- or post-activation; the mask x > 0 is the same
    return np.where(x > 0, grad_out, 0)


def global_avg_pool(x: np.ndarray) -> np.ndarray:
    x4, single = _as_batch(x, 3)
    out = x4.mean(axis=(1, 2))
    return out[0] if single else out


def gap_backward(h: int, w: int, grad_out: np.ndarray) -> np.ndarray:
    g = np.asarray(grad_out)
    spread = (g / (h * w))[..., None, None, :]
    return np.broadcast_to(spread, g.shape[:-1] + (h, w, g.shape[-1])).copy()


def dense_forward(x: np.ndarray, p: DenseParams) -> np.ndarray:
    x = np.asarray(x)
    if x.shape[-1] != p.weights.shape[0] or x.ndim not in (1, 2):
        raise ShapeError(f"input shape {x.shape} incompatible with weights shape {p.weights.shape}")
    return x @ p.weights + p.bias


def dense_backward(x: np.ndarray, p: DenseParams, grad_out: np.ndarray):
    """Return ``(grad_input, grad_weights, grad_bias)``."""
    x2, _ = _as_batch(x, 1)
    g2, single = _as_batch(grad_out, 1)
    if x2.shape != (g2.shape[0], p.weights.shape[0]) or g2.shape[1] != p.weights.shape[1]:
        raise ShapeError(
            f"input {np.shape(x)} / grad_out {np.shape(grad_out)} incompatible with weights {p.weights.shape}"
        )
    grad_input = g2 @ p.weights.T
    return (grad_input[0] if single else grad_input), x2.T @ g2, g2.sum(axis=0)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits)
    if z.shape[-1] < 1:
        raise ShapeError("softmax needs at least one logit")
    if not np.all(np.isfinite(z)):
        raise NumericError("softmax received non-finite logits")
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def softmax_backward(probs: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    return probs * (grad_out - np.sum(probs * grad_out, axis=-1, keepdims=True))


def _check_labels(probs: np.ndarray, label) -> np.ndarray:
    labels = np.asarray(label)
    k = probs.shape[-1]
    if labels.shape != probs.shape[:-1]:
        raise ShapeError(f"labels shape {labels.shape} does not match probabilities shape {probs.shape}")
    if np.any(labels < 0) or np.any(labels >= k):
        raise ShapeError(f"label out of range for {k} classes: {label}")
    return labels.astype(np.intp)


def cross_entropy(probs: np.ndarray, label) -> float | np.ndarray:
    """Negative log-likelihood of ``label``; per-sample array for batched input."""
    probs = np.asarray(probs)
    labels = _check_labels(probs, label)
    picked = np.take_along_axis(probs, labels[..., None], axis=-1)[..., 0]
    loss = -np.log(np.maximum(picked, PROB_FLOOR))
    return float(loss) if loss.ndim == 0 else loss


def softmax_cross_entropy_grad(probs: np.ndarray, label) -> np.ndarray:
    """Gradient of cross-entropy w.r.t. the logits feeding the softmax."""
    probs = np.asarray(probs)
    labels = _check_labels(probs, label)
    grad = probs.copy()
    np.put_along_axis(grad, labels[..., None], np.take_along_axis(grad, labels[..., None], -1) - 1, -1)
    return grad


def he_uniform_limit(fan_in: int) -> float:
    return math.sqrt(6.0 / fan_in)
