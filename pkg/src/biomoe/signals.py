"""Raw biosignal loading and modality-specific zero-phase filtering."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.signal import butter, sosfiltfilt


class Modality(Enum):
    EDA = "eda"
    BVP = "bvp"
    RESP = "resp"
    SPO2 = "spo2"
    OTHER = "other"


class FilterKind(Enum):
    LOWPASS = "lowpass"
    BANDPASS = "bandpass"


class SignalError(ValueError):
    pass


@dataclass(frozen=True)
class Signal:
    samples: np.ndarray
    sample_rate_hz: float
    modality: Modality = Modality.OTHER

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim != 1 or s.size == 0:
            raise SignalError("Signal: samples must be a non-empty 1-D array")
        if not np.isfinite(s).all():
            raise SignalError("Signal: samples contain NaN or Inf")
        if not (self.sample_rate_hz > 0):
            raise SignalError(f"Signal: sample_rate_hz must be positive, got {self.sample_rate_hz}")
        object.__setattr__(self, "samples", s)

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz


@dataclass(frozen=True)
class FilterSpec:
    kind: FilterKind
    lo_hz: float = 0.0    # unused for LOWPASS
    hi_hz: float = 0.0

    def __post_init__(self):
        if self.kind is FilterKind.BANDPASS and not (0 < self.lo_hz < self.hi_hz):
            raise SignalError(f"FilterSpec: need 0 < lo < hi, got {self.lo_hz}..{self.hi_hz}")
        if self.kind is FilterKind.LOWPASS and not (self.hi_hz > 0):
            raise SignalError(f"FilterSpec: lowpass cutoff must be positive, got {self.hi_hz}")


_DEFAULTS = {
    Modality.EDA: FilterSpec(FilterKind.LOWPASS, hi_hz=5.0),
    Modality.BVP: FilterSpec(FilterKind.BANDPASS, lo_hz=0.04, hi_hz=1.7),
    Modality.RESP: FilterSpec(FilterKind.BANDPASS, lo_hz=0.05, hi_hz=0.5),
    Modality.SPO2: FilterSpec(FilterKind.BANDPASS, lo_hz=0.04, hi_hz=1.7),
}


def default_filter(modality: Modality) -> FilterSpec:
    """Per-modality passband: EDA low-pass 5 Hz, pulse-shaped channels
    0.04-1.7 Hz, respiration 0.05-0.5 Hz."""
    spec = _DEFAULTS.get(modality)
    if spec is None:
        raise SignalError(f"no default filter for modality {modality.value!r}; supply a FilterSpec")
    return spec


def load_csv(path: str, column: int, sample_rate_hz: float,
             modality: Modality = Modality.OTHER, skip_header: bool = False) -> Signal:
    """One sample per row; `column` is a zero-based index into each row."""
    values = []
    with open(path, newline="") as fh:
        rows = csv.reader(fh)
        for i, row in enumerate(rows):
            if skip_header and i == 0:
                continue
            if not row or all(not c.strip() for c in row):
                continue
            if column >= len(row):
                raise SignalError(f"{path}: row {i} has no column {column}")
            cell = row[column].strip()
            try:
                values.append(float(cell))
            except ValueError:
                raise SignalError(f"{path}: row {i} column {column}: cannot parse {cell!r}") from None
    if not values:
        raise SignalError(f"{path}: column {column} is empty")
    return Signal(np.asarray(values, dtype=np.float64), sample_rate_hz, modality)


_ORDER = 4


def _design(spec: FilterSpec, rate: float) -> np.ndarray:
    # second-order sections: the band corners sit near 1e-3 of Nyquist, where
    # the polynomial (b, a) form of the same filter is too ill-conditioned to
    # stay linear to better than ~1e-3
    nyq = rate / 2.0
    if spec.kind is FilterKind.LOWPASS:
        if not (0 < spec.hi_hz < nyq):
            raise SignalError(f"cutoff {spec.hi_hz} Hz outside (0, {nyq}) for rate {rate}")
        return butter(_ORDER, spec.hi_hz / nyq, btype="lowpass", output="sos")
    if not (0 < spec.lo_hz < spec.hi_hz < nyq):
        raise SignalError(f"band {spec.lo_hz}-{spec.hi_hz} Hz outside (0, {nyq}) for rate {rate}")
    return butter(_ORDER, (spec.lo_hz / nyq, spec.hi_hz / nyq), btype="bandpass", output="sos")


def apply_filter(s: Signal, spec: FilterSpec) -> Signal:
    """Zero-phase 4th-order Butterworth, forward-backward with reflected edges.

    Output length equals input length. Mirror (even) reflection keeps the
    edge artifacts out-of-band when the passband sits low; the reflection
    extends to 10x the minimum so the slow corners settle before the record
    proper starts. Rejects records too short for the minimum padding; pad or
    repeat the signal first in that case.
    """
    sos = _design(spec, s.sample_rate_hz)
    floor = 3 * (2 * sos.shape[0] + 1)
    n = s.samples.size
    if n <= floor:
        raise SignalError(
            f"signal of {n} samples is too short for zero-phase "
            f"filtering (needs > {floor}); pad the record first")
    padlen = min(n - 1, 10 * floor)
    y = sosfiltfilt(sos, s.samples, padtype="even", padlen=padlen)
    return Signal(y, s.sample_rate_hz, s.modality)
