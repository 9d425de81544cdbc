"""Signal-to-image representations: STFT family, recurrence, scalogram, waveform.

Each renderer maps a filtered Signal to a 224x224x3 uint8 image through a
shared rasterize step (value scaling, min-max, colormap, bilinear resize).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import tensor as T
from .colormaps import Colormap, lookup_table
from .images import bilinear_resize
from .signals import Signal

IMAGE_SIZE = 224
MORLET_W0 = 6.0


class RepresentationError(ValueError):
    pass


@dataclass(frozen=True)
class StftConfig:
    window_len: int = 128
    hop: int = 16
    fft_len: int = 256

    def __post_init__(self):
        if not (0 < self.hop <= self.window_len <= self.fft_len):
            raise RepresentationError(
                f"StftConfig: need 0 < hop <= window_len <= fft_len, "
                f"got hop={self.hop} window={self.window_len} fft={self.fft_len}")

    @property
    def bins(self) -> int:
        return self.fft_len // 2 + 1


class Scaling(Enum):
    LINEAR = "linear"
    LOG1P = "log1p"
    DB = "db"


@dataclass(frozen=True)
class RenderConfig:
    colormap: Colormap
    value_scaling: Scaling = Scaling.LINEAR


DB_FLOOR = -80.0


# ---------------------------------------------------------------- STFT family

def _hann(n: int) -> np.ndarray:
    # periodic form, the spectral-analysis convention
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * np.arange(n) / n))


def stft(s: Signal, cfg: StftConfig = StftConfig()) -> np.ndarray:
    """Windowed one-sided DFT: (frames, fft_len/2 + 1) complex."""
    x = s.samples
    if x.size < cfg.window_len:
        raise RepresentationError(
            f"stft: signal of {x.size} samples is shorter than the "
            f"{cfg.window_len}-sample window")
    frames = 1 + (x.size - cfg.window_len) // cfg.hop
    idx = np.arange(cfg.window_len)[None, :] + cfg.hop * np.arange(frames)[:, None]
    seg = x[idx] * _hann(cfg.window_len)[None, :]
    padded = np.zeros((frames, cfg.fft_len), dtype=np.complex64)
    padded[:, :cfg.window_len] = seg
    spec = T.fft1d(padded, axis=1)
    return spec[:, :cfg.bins]


def spec_angle(spec: np.ndarray) -> np.ndarray:
    return np.arctan2(spec.imag, spec.real)


def spec_phase_unwrapped(spec: np.ndarray) -> np.ndarray:
    # unwrap along the frequency axis so adjacent-bin jumps stay below pi
    return np.unwrap(spec_angle(spec), axis=1)


def spec_psd(spec: np.ndarray, cfg: StftConfig, sample_rate_hz: float) -> np.ndarray:
    """One-sided PSD per frame: |X|^2 / (fs * sum(w^2)), interior bins doubled."""
    w = _hann(cfg.window_len)
    denom = sample_rate_hz * float(np.sum(w * w))
    p = (spec.real.astype(np.float64) ** 2 + spec.imag.astype(np.float64) ** 2) / denom
    if p.shape[1] > 2:
        p[:, 1:-1] *= 2.0
    return p


# ---------------------------------------------------------------- recurrence

def recurrence_matrix(s: Signal, size: int = IMAGE_SIZE) -> np.ndarray:
    """Pairwise |x_i - x_j| of the linearly resampled signal, min-max to [0,1].

    A constant signal yields the all-zero matrix.
    """
    x = s.samples
    xi = np.interp(np.linspace(0.0, x.size - 1.0, size), np.arange(x.size), x)
    m = np.abs(xi[:, None] - xi[None, :])
    mx = m.max()
    if mx > 0:
        m /= mx
    return m


# ---------------------------------------------------------------- scalogram

def cwt_scalogram(s: Signal, n_scales: int = 112) -> np.ndarray:
    """Analytic-Morlet magnitude scalogram, (n_scales, len).

    Scales are log-spaced so center frequencies run 0.05 Hz up to
    min(8 Hz, 0.45 * fs); L2 wavelet normalization.
    """
    x = s.samples
    if x.size < 64:
        raise RepresentationError(f"cwt_scalogram: need >= 64 samples, got {x.size}")
    fs = s.sample_rate_hz
    f_hi = min(8.0, 0.45 * fs)
    f_lo = 0.05
    if f_hi <= f_lo:
        raise RepresentationError(
            f"cwt_scalogram: sample rate {fs} Hz cannot host the "
            f"{f_lo}-{f_hi} Hz analysis band")
    freqs = np.geomspace(f_lo, f_hi, n_scales)
    scales = MORLET_W0 * fs / (2.0 * np.pi * freqs)    # in samples

    nfft = 1
    while nfft < 2 * x.size:
        nfft *= 2
    pad = np.zeros(nfft, dtype=np.complex64)
    pad[:x.size] = x
    xf = T.fft1d(pad)
    omega = 2.0 * np.pi * np.arange(nfft) / nfft       # per-sample angular freq
    # analytic Morlet: response only on positive frequencies
    resp = np.zeros((n_scales, nfft), dtype=np.complex64)
    half = nfft // 2
    pos = omega[1:half + 1]
    for i, a in enumerate(scales):
        psi = np.pi ** -0.25 * np.exp(-0.5 * (a * pos - MORLET_W0) ** 2)
        resp[i, 1:half + 1] = np.sqrt(a) * psi
    coef = T.fft1d(resp * xf[None, :], axis=1, inverse=True)
    return np.abs(coef[:, :x.size]).astype(np.float64)


def scale_frequencies(s: Signal, n_scales: int = 112) -> np.ndarray:
    """Center frequency (Hz) of each scalogram row."""
    f_hi = min(8.0, 0.45 * s.sample_rate_hz)
    return np.geomspace(0.05, f_hi, n_scales)


# ---------------------------------------------------------------- rasterize

def rasterize(matrix: np.ndarray, cfg: RenderConfig, size: int = IMAGE_SIZE) -> np.ndarray:
    """Scale, min-max, colormap, bilinear resize: (size, size, 3) uint8."""
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2 or m.size == 0:
        raise RepresentationError(f"rasterize: need a non-empty 2-D matrix, got {m.shape}")
    if not np.isfinite(m).all():
        raise RepresentationError("rasterize: matrix contains NaN or Inf")

    if cfg.value_scaling is Scaling.LOG1P:
        m = np.log1p(np.maximum(m, 0.0))
    elif cfg.value_scaling is Scaling.DB:
        mx = m.max()
        if mx <= 0:
            m = np.zeros_like(m)
        else:
            m = 10.0 * np.log10(np.maximum(m / mx, 1e-30))
            m = np.maximum(m, DB_FLOOR)

    lo, hi = m.min(), m.max()
    if hi > lo:
        scaled = (m - lo) * (255.0 / (hi - lo))
    else:
        scaled = np.full_like(m, 127.5)    # all-equal input: mid-colormap
    idx = np.rint(scaled).astype(np.int64)
    rgb = lookup_table(cfg.colormap)[idx]
    if rgb.shape[:2] != (size, size):
        rgb = np.rint(bilinear_resize(rgb, size, size))
    return np.clip(rgb, 0, 255).astype(np.uint8)


# ---------------------------------------------------------------- waveform

def waveform_raster(s: Signal, size: int = IMAGE_SIZE) -> np.ndarray:
    """Black 2-px polyline on white, x = time, y inverted (max at top)."""
    x = s.samples
    lo, hi = x.min(), x.max()
    v = (x - lo) / (hi - lo) if hi > lo else np.full_like(x, 0.5)
    cols = np.interp(np.linspace(0.0, x.size - 1.0, size), np.arange(x.size), v)
    y = (1.0 - cols) * (size - 1.0)
    canvas = np.full((size, size, 3), 255, dtype=np.uint8)
    for c in range(size):
        y0 = y[c - 1] if c else y[c]
        y1 = y[c]
        r_lo = int(np.floor(min(y0, y1)))
        r_hi = int(np.ceil(max(y0, y1)))
        r_lo = max(r_lo, 0)
        r_hi = min(r_hi, size - 1)
        canvas[r_lo:r_hi + 1, c] = 0
    return canvas


# ---------------------------------------------------------------- catalogue

KINDS = ("waveform", "spec_angle", "spec_phase", "spec_psd", "scalogram", "recurrence")

_RENDER_CFGS = {
    "spec_angle": RenderConfig(Colormap.VIRIDIS, Scaling.LINEAR),
    "spec_phase": RenderConfig(Colormap.VIRIDIS, Scaling.LINEAR),
    "spec_psd": RenderConfig(Colormap.VIRIDIS, Scaling.DB),
    "scalogram": RenderConfig(Colormap.VIRIDIS, Scaling.DB),
    "recurrence": RenderConfig(Colormap.GRAY_INVERTED, Scaling.LINEAR),
}


def render(s: Signal, kind: str, stft_cfg: StftConfig = StftConfig()) -> np.ndarray:
    """One 224x224x3 uint8 image of the requested kind."""
    if kind == "waveform":
        return waveform_raster(s)
    if kind in ("spec_angle", "spec_phase", "spec_psd"):
        spec = stft(s, stft_cfg)
        if kind == "spec_angle":
            m = spec_angle(spec)
        elif kind == "spec_phase":
            m = spec_phase_unwrapped(spec)
        else:
            m = spec_psd(spec, stft_cfg, s.sample_rate_hz)
        # time on x, frequency on y (low bins at the bottom row after flip)
        return rasterize(m.T[::-1], _RENDER_CFGS[kind])
    if kind == "scalogram":
        m = cwt_scalogram(s)
        return rasterize(m[::-1], _RENDER_CFGS[kind])
    if kind == "recurrence":
        return rasterize(recurrence_matrix(s), _RENDER_CFGS[kind])
    raise RepresentationError(f"unknown representation kind {kind!r}; choose from {KINDS}")
