"""Independent reference implementations used to check the fast kernels.

Everything here is written the slow, obvious way (explicit loops, float64 /
complex128 arithmetic) so the package code and the reference share no
machinery beyond numpy array storage.
"""

import cmath
import math

import numpy as np


def dft1_loop(x, inverse=False):
    """O(n^2) DFT of a 1-D sequence, complex128, explicit double loop."""
    n = len(x)
    sign = 2.0 if inverse else -2.0
    out = np.zeros(n, dtype=np.complex128)
    for k in range(n):
        acc = 0j
        for j in range(n):
            acc += complex(x[j]) * cmath.exp(sign * 1j * math.pi * j * k / n)
        out[k] = acc / n if inverse else acc
    return out


def dft2_loop(a, inverse=False):
    """2-D DFT over the first two axes of (h, w) or (h, w, d), via dft1_loop."""
    a = np.asarray(a, dtype=np.complex128)
    squeeze = a.ndim == 2
    if squeeze:
        a = a[:, :, None]
    h, w, d = a.shape
    out = np.zeros_like(a)
    for c in range(d):
        tmp = np.zeros((h, w), dtype=np.complex128)
        for j in range(w):
            tmp[:, j] = dft1_loop(a[:, j, c], inverse)
        for i in range(h):
            out[i, :, c] = dft1_loop(tmp[i, :], inverse)
    return out[:, :, 0] if squeeze else out


def dwconv_loops(x, kernels, bias=None, stride=1, padding="same"):
    """Depthwise conv with nested Python loops, float64 accumulation."""
    x = np.asarray(x, dtype=np.float64)
    kernels = np.asarray(kernels, dtype=np.float64)
    h, w, c = x.shape
    kh, kw, _ = kernels.shape
    if padding == "same":
        ph, pw = kh // 2, kw // 2
    else:
        ph = pw = int(padding)
    ho = (h + 2 * ph - kh) // stride + 1
    wo = (w + 2 * pw - kw) // stride + 1
    out = np.zeros((ho, wo, c))
    for ch in range(c):
        for oi in range(ho):
            for oj in range(wo):
                acc = 0.0
                for di in range(kh):
                    for dj in range(kw):
                        ii = oi * stride + di - ph
                        jj = oj * stride + dj - pw
                        if 0 <= ii < h and 0 <= jj < w:
                            acc += x[ii, jj, ch] * kernels[di, dj, ch]
                out[oi, oj, ch] = acc + (0.0 if bias is None else float(np.asarray(bias)[ch]))
    return out


def conv2d_loops(x, w, bias=None, stride=1, padding=0):
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    h, wd, cin = x.shape
    kh, kw, _, cout = w.shape
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (wd + 2 * padding - kw) // stride + 1
    out = np.zeros((ho, wo, cout))
    for co in range(cout):
        for oi in range(ho):
            for oj in range(wo):
                acc = 0.0
                for di in range(kh):
                    for dj in range(kw):
                        ii = oi * stride + di - padding
                        jj = oj * stride + dj - padding
                        if 0 <= ii < h and 0 <= jj < wd:
                            for ci in range(cin):
                                acc += x[ii, jj, ci] * w[di, dj, ci, co]
                out[oi, oj, co] = acc + (0.0 if bias is None else float(np.asarray(bias)[co]))
    return out


def softmax_rows_f64(s):
    s = np.asarray(s, dtype=np.float64)
    z = s - s.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def attention_loop(x, wq, wk, wv):
    """Single-head attention recomputed in float64 with explicit steps."""
    x = np.asarray(x, dtype=np.float64)
    q = x @ np.asarray(wq, dtype=np.float64)
    k = x @ np.asarray(wk, dtype=np.float64)
    v = x @ np.asarray(wv, dtype=np.float64)
    scores = q @ k.T / math.sqrt(q.shape[1])
    return softmax_rows_f64(scores) @ v


def matmul_loops(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    m, k = a.shape
    k2, n = b.shape
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for t in range(k):
                acc += a[i, t] * b[t, j]
            out[i, j] = acc
    return out


def erf_ref(x):
    return np.array([math.erf(float(v)) for v in np.asarray(x).ravel()]).reshape(np.shape(x))


def layer_norm_ref(x, gamma=None, beta=None, eps=1e-6):
    x = np.asarray(x, dtype=np.float64)
    mean = x.mean(axis=-1, keepdims=True)
    var = ((x - mean) ** 2).mean(axis=-1, keepdims=True)
    out = (x - mean) / np.sqrt(var + eps)
    if gamma is not None:
        out = out * np.asarray(gamma, dtype=np.float64)
    if beta is not None:
        out = out + np.asarray(beta, dtype=np.float64)
    return out


def batch_norm_ref(x, mean, var, gamma, beta, eps=1e-5):
    x = np.asarray(x, dtype=np.float64)
    return (x - np.asarray(mean, dtype=np.float64)) / np.sqrt(
        np.asarray(var, dtype=np.float64) + eps) * np.asarray(
        gamma, dtype=np.float64) + np.asarray(beta, dtype=np.float64)


def gelu_ref(x):
    x = np.asarray(x, dtype=np.float64)
    return x * 0.5 * (1.0 + erf_ref(x / math.sqrt(2.0)))


def elu_ref(x):
    x = np.asarray(x, dtype=np.float64)
    return np.where(x > 0, x, np.expm1(x))


def hardtanh_ref(x):
    return np.clip(np.asarray(x, dtype=np.float64), -1.0, 1.0)
