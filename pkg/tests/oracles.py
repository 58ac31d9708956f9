"""Slow, obviously-correct reference implementations used as test oracles."""
import math

import numpy as np


def naive_conv2d(x, kernel, bias, stride, padding):
    """Direct loop convolution, HWC layout, zero padding, TF-style 'same' split."""
    h, w, c_in = x.shape
    kh, kw, _, c_out = kernel.shape
    if padding == "same":
        ho, wo = math.ceil(h / stride), math.ceil(w / stride)
        pad_h = max((ho - 1) * stride + kh - h, 0)
        pad_w = max((wo - 1) * stride + kw - w, 0)
        top, left = pad_h // 2, pad_w // 2
    else:
        ho, wo = (h - kh) // stride + 1, (w - kw) // stride + 1
        top = left = 0
    out = np.zeros((ho, wo, c_out))
    for y in range(ho):
        for xo in range(wo):
            for o in range(c_out):
                acc = bias[o]
                for ky in range(kh):
                    for kx in range(kw):
                        iy, ix = y * stride + ky - top, xo * stride + kx - left
                        if 0 <= iy < h and 0 <= ix < w:
                            for ci in range(c_in):
                                acc += x[iy, ix, ci] * kernel[ky, kx, ci, o]
                out[y, xo, o] = acc
    return out


def naive_depthwise(x, kernel, bias, stride, padding):
    c = x.shape[2]
    out = [naive_conv2d(x[:, :, i:i + 1], kernel[:, :, i:i + 1, None], bias[i:i + 1], stride, padding)
           for i in range(c)]
    return np.concatenate(out, axis=2)


def numeric_grad(f, arr, step=1e-5):
    """Central differences of scalar ``f()`` w.r.t. every entry of ``arr`` (mutated and restored)."""
    g = np.zeros_like(arr, dtype=np.float64)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = arr[idx]
        arr[idx] = orig + step
        hi = f()
        arr[idx] = orig - step
        lo = f()
        arr[idx] = orig
        g[idx] = (hi - lo) / (2 * step)
    return g


def rel_error(analytic, numeric):
    """Norm-wise relative error: max abs difference over the larger max magnitude."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    scale = max(np.abs(a).max(), np.abs(n).max(), 1e-12)
    return float(np.abs(a - n).max() / scale)


def brute_force_f1(counts):
    """Per-class F1, macro and weighted F1 from plain Python loops."""
    n = len(counts)
    f1s = []
    supports = []
    for k in range(n):
        tp = counts[k][k]
        pred_k = sum(counts[i][k] for i in range(n))
        true_k = sum(counts[k][j] for j in range(n))
        p = tp / pred_k if pred_k else 0.0
        r = tp / true_k if true_k else 0.0
        f1s.append(2 * p * r / (p + r) if p + r else 0.0)
        supports.append(true_k)
    macro = sum(f1s) / n
    weighted = sum(f * s for f, s in zip(f1s, supports)) / sum(supports)
    return f1s, macro, weighted
