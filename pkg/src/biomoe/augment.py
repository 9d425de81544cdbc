"""Seed-deterministic image augmentation for 224x224 RGB renders.

Every stage is a pure function of (image bytes, seed, image_index, epoch):
per-image randomness comes from a counter-based stream keyed by a hash of
the triple, so pipelines parallelize across images without shared state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter1d

from .images import bilinear_resize


class AugmentError(ValueError):
    pass


_U64 = (1 << 64) - 1


def _mix64(x: int) -> int:
    # SplitMix64 finalizer; full-period avalanche over 64 bits
    x = (x + 0x9E3779B97F4A7C15) & _U64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _U64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _U64
    return x ^ (x >> 31)


@dataclass(frozen=True)
class Rng:
    """Splittable per-image randomness: stream(i, e) keys a counter-based
    Philox generator with a hash of (seed, image_index, epoch)."""
    seed: int

    def stream(self, image_index: int, epoch: int) -> np.random.Generator:
        if image_index < 0 or epoch < 0:
            raise AugmentError(f"negative stream coordinates ({image_index}, {epoch})")
        k = _mix64(self.seed & _U64)
        k = _mix64(k ^ _mix64(image_index))
        k = _mix64(k ^ _mix64(epoch))
        key = k | (_mix64(k) << 64)
        return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class OpLimits:
    """Upper magnitude bounds for the chain ops; draws are uniform in
    [0, bound] with random sign where orientation applies."""
    rotate_deg: float = 15.0
    translate_frac: float = 0.10
    shear_deg: float = 10.0
    contrast_delta: float = 0.3
    jitter_delta: float = 0.2

    def __post_init__(self):
        for name in ("rotate_deg", "translate_frac", "shear_deg",
                     "contrast_delta", "jitter_delta"):
            if getattr(self, name) < 0:
                raise AugmentError(f"OpLimits.{name} must be >= 0")


ZERO_LIMITS = OpLimits(0.0, 0.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class AugmentConfig:
    chains: int = 3
    depth_min: int = 1
    depth_max: int = 3
    alpha: float = 1.0
    skip_prob: float = 0.0
    crop_prob_range: tuple = (0.2, 0.4)
    crop_ratio_range: tuple = (0.6, 0.9)
    blur_prob: float = 0.2
    blur_sigma_range: tuple = (0.5, 1.5)
    cutout_small: int = 2
    cutout_large: int = 8
    block: int = 32
    limits: OpLimits = field(default_factory=OpLimits)

    def __post_init__(self):
        if not (1 <= self.depth_min <= self.depth_max):
            raise AugmentError("AugmentConfig: need 1 <= depth_min <= depth_max")
        if self.chains < 1 or self.alpha <= 0:
            raise AugmentError("AugmentConfig: bad chain settings")
        for p in (self.skip_prob, self.blur_prob, *self.crop_prob_range):
            if not (0.0 <= p <= 1.0):
                raise AugmentError(f"AugmentConfig: probability {p} outside [0, 1]")
        for lo, hi in (self.crop_prob_range, self.crop_ratio_range, self.blur_sigma_range):
            if lo > hi:
                raise AugmentError(f"AugmentConfig: empty range ({lo}, {hi})")
        if not (0.0 < self.crop_ratio_range[0] and self.crop_ratio_range[1] <= 1.0):
            raise AugmentError("AugmentConfig: crop ratios must lie in (0, 1]")
        if self.block != 32:
            raise AugmentError("AugmentConfig: cutout block size is fixed at 32")
        if self.cutout_small < 0 or self.cutout_large < 0:
            raise AugmentError("AugmentConfig: negative block count")


def _check_img(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint8:
        raise AugmentError(f"expected HxWx3 uint8, got {img.shape} {img.dtype}")
    return img


def _to_u8(x: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(x), 0, 255).astype(np.uint8)


def _reflect_idx(i: np.ndarray, n: int) -> np.ndarray:
    # mirror without edge repeat: ... 2 1 | 0 1 2 ... n-1 | n-2 n-3 ...
    if n == 1:
        return np.zeros_like(i)
    period = 2 * n - 2
    i = np.abs(i) % period
    return np.minimum(i, period - i)


def _sample_bilinear(img: np.ndarray, yin: np.ndarray, xin: np.ndarray) -> np.ndarray:
    h, w = img.shape[:2]
    y0 = np.floor(yin).astype(np.int64)
    x0 = np.floor(xin).astype(np.int64)
    fy = (yin - y0)[..., None]
    fx = (xin - x0)[..., None]
    ry0 = _reflect_idx(y0, h)
    ry1 = _reflect_idx(y0 + 1, h)
    rx0 = _reflect_idx(x0, w)
    rx1 = _reflect_idx(x0 + 1, w)
    p = img.astype(np.float64)
    top = p[ry0, rx0] * (1 - fx) + p[ry0, rx1] * fx
    bot = p[ry1, rx0] * (1 - fx) + p[ry1, rx1] * fx
    return top * (1 - fy) + bot * fy


def _affine(img: np.ndarray, m00, m01, m10, m11, ty, tx) -> np.ndarray:
    """Inverse-map each output pixel through the 2x2 matrix about the image
    center, then bilinear-sample with reflected edges."""
    h, w = img.shape[:2]
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    rows, cols = np.meshgrid(np.arange(h, dtype=np.float64),
                             np.arange(w, dtype=np.float64), indexing="ij")
    dy = rows - cy
    dx = cols - cx
    yin = m00 * dy + m01 * dx + cy + ty
    xin = m10 * dy + m11 * dx + cx + tx
    return _to_u8(_sample_bilinear(img, yin, xin))


def _op_rotate(img, stream, lim: OpLimits):
    ang = stream.uniform(0.0, lim.rotate_deg)
    sign = 1.0 if stream.random() < 0.5 else -1.0
    if ang == 0.0:
        return img.copy()
    t = math.radians(sign * ang)
    c, s = math.cos(t), math.sin(t)
    return _affine(img, c, -s, s, c, 0.0, 0.0)


def _op_translate(img, stream, lim: OpLimits):
    h, w = img.shape[:2]
    fy = stream.uniform(0.0, lim.translate_frac) * (1.0 if stream.random() < 0.5 else -1.0)
    fx = stream.uniform(0.0, lim.translate_frac) * (1.0 if stream.random() < 0.5 else -1.0)
    if fy == 0.0 and fx == 0.0:
        return img.copy()
    return _affine(img, 1.0, 0.0, 0.0, 1.0, -fy * h, -fx * w)


def _op_shear(img, stream, lim: OpLimits):
    ang = stream.uniform(0.0, lim.shear_deg)
    sign = 1.0 if stream.random() < 0.5 else -1.0
    horizontal = stream.random() < 0.5
    if ang == 0.0:
        return img.copy()
    t = sign * math.tan(math.radians(ang))
    if horizontal:
        return _affine(img, 1.0, 0.0, t, 1.0, 0.0, 0.0)
    return _affine(img, 1.0, t, 0.0, 1.0, 0.0, 0.0)


def _op_contrast(img, stream, lim: OpLimits):
    d = stream.uniform(0.0, lim.contrast_delta)
    sign = 1.0 if stream.random() < 0.5 else -1.0
    factor = 1.0 + sign * d
    mu = img.mean()
    return _to_u8(mu + factor * (img.astype(np.float64) - mu))


def _op_color_jitter(img, stream, lim: OpLimits):
    gains = 1.0 + stream.uniform(-lim.jitter_delta, lim.jitter_delta, 3)
    return _to_u8(img.astype(np.float64) * gains)


# stable order: chain/trivial op selection indexes this dict
OPS = {
    "contrast": _op_contrast,
    "color_jitter": _op_color_jitter,
    "rotate": _op_rotate,
    "translate": _op_translate,
    "shear": _op_shear,
}


def _blend(img: np.ndarray, chains: list, weights: np.ndarray, m: float) -> np.ndarray:
    """Convex combination m*img + (1-m)*sum(w_k chain_k); m=1 reproduces the
    input exactly."""
    if m == 1.0:
        return img.copy()
    mixture = np.zeros(img.shape, dtype=np.float64)
    for wk, ck in zip(weights, chains):
        mixture += wk * ck.astype(np.float64)
    return _to_u8(m * img.astype(np.float64) + (1.0 - m) * mixture)


def augmix(img: np.ndarray, stream: np.random.Generator,
           cfg: AugmentConfig = AugmentConfig()) -> np.ndarray:
    """Blend several short random op chains with the original image."""
    img = _check_img(img)
    if stream.random() < cfg.skip_prob:
        return img.copy()
    weights = stream.dirichlet(np.full(cfg.chains, cfg.alpha))
    m = float(stream.beta(1.0, 1.0))
    names = list(OPS)
    chains = []
    for _ in range(cfg.chains):
        x = img
        depth = int(stream.integers(cfg.depth_min, cfg.depth_max + 1))
        for _ in range(depth):
            op = OPS[names[stream.integers(len(names))]]
            x = op(x, stream, cfg.limits)
        chains.append(x)
    return _blend(img, chains, weights, m)


def trivial_augment(img: np.ndarray, stream: np.random.Generator,
                    limits: OpLimits = OpLimits()) -> np.ndarray:
    """One uniformly chosen op at a uniformly drawn magnitude."""
    img = _check_img(img)
    names = list(OPS)
    op = OPS[names[stream.integers(len(names))]]
    return op(img, stream, limits)


def center_crop_random(img: np.ndarray, stream: np.random.Generator,
                       cfg: AugmentConfig = AugmentConfig()) -> np.ndarray:
    """With a probability itself drawn from cfg.crop_prob_range, crop a
    centered square of side ratio*size and resize back."""
    img = _check_img(img)
    p = stream.uniform(*cfg.crop_prob_range)
    if stream.random() >= p:
        return img.copy()
    ratio = stream.uniform(*cfg.crop_ratio_range)
    h, w = img.shape[:2]
    side = max(1, int(round(ratio * min(h, w))))
    r0 = (h - side) // 2
    c0 = (w - side) // 2
    crop = img[r0:r0 + side, c0:c0 + side]
    if crop.shape[:2] == (h, w):
        return img.copy()
    return _to_u8(bilinear_resize(crop, h, w))


def gaussian_blur_conditional(img: np.ndarray, stream: np.random.Generator,
                              cfg: AugmentConfig = AugmentConfig()) -> np.ndarray:
    img = _check_img(img)
    if stream.random() >= cfg.blur_prob:
        return img.copy()
    sigma = stream.uniform(*cfg.blur_sigma_range)
    radius = int(math.ceil(3.0 * sigma))
    x = img.astype(np.float64)
    x = gaussian_filter1d(x, sigma, axis=0, mode="mirror", radius=radius)
    x = gaussian_filter1d(x, sigma, axis=1, mode="mirror", radius=radius)
    return _to_u8(x)


def _cutout_mask(stream: np.random.Generator, n_blocks: int, block: int,
                 h: int, w: int) -> np.ndarray:
    mask = np.zeros((h, w), dtype=bool)
    for _ in range(n_blocks):
        r = int(stream.integers(0, h - block + 1))
        c = int(stream.integers(0, w - block + 1))
        mask[r:r + block, c:c + block] = True
    return mask


def cutout(img: np.ndarray, stream: np.random.Generator, n_blocks: int,
           block: int = 32) -> np.ndarray:
    """Paint n_blocks uniformly placed block x block squares with the
    per-image mean color; everything else is untouched (bitwise)."""
    img = _check_img(img)
    h, w = img.shape[:2]
    if block < 1 or block > min(h, w):
        raise AugmentError(f"cutout block {block} does not fit {h}x{w}")
    if n_blocks < 0:
        raise AugmentError("cutout: negative block count")
    if n_blocks == 0:
        return img.copy()
    fill = _to_u8(img.mean(axis=(0, 1)))
    mask = _cutout_mask(stream, n_blocks, block, h, w)
    out = img.copy()
    out[mask] = fill
    return out


def augment_image(img: np.ndarray, seed: int, image_index: int, epoch: int,
                  cfg: AugmentConfig = AugmentConfig()) -> np.ndarray:
    """Full training pipeline over one image; pure in (bytes, seed, index,
    epoch)."""
    img = _check_img(img)
    stream = Rng(seed).stream(image_index, epoch)
    x = augmix(img, stream, cfg)
    x = trivial_augment(x, stream, cfg.limits)
    x = center_crop_random(x, stream, cfg)
    x = gaussian_blur_conditional(x, stream, cfg)
    x = cutout(x, stream, cfg.cutout_small, cfg.block)
    x = cutout(x, stream, cfg.cutout_large, cfg.block)
    return x
