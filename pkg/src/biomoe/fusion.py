"""Multimodal fusion of per-input embedding vectors.

A plan names which (modality, representation) pairs feed the fusion and how
they combine. Downstream classification over a fused vector uses a fresh
linear head sized to the fused dimension; nothing re-projects back to 192.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .signals import Modality


class FusionError(ValueError):
    pass


class FusionMethod(Enum):
    ADD = "add"
    CONCAT = "concat"


@dataclass(frozen=True)
class FusionPlan:
    inputs: tuple          # ((Modality, representation-kind), ...)
    method: FusionMethod

    def __post_init__(self):
        if len(self.inputs) < 2:
            raise FusionError(f"fusion needs >= 2 inputs, got {len(self.inputs)}")
        object.__setattr__(self, "inputs", tuple(tuple(i) for i in self.inputs))
        for mod, kind in self.inputs:
            if not isinstance(mod, Modality):
                raise FusionError(f"not a modality: {mod!r}")
            if not isinstance(kind, str) or not kind:
                raise FusionError(f"bad representation kind: {kind!r}")


def fuse(embeddings, method: FusionMethod) -> np.ndarray:
    """Combine 1-D embedding vectors. ADD requires equal dims and preserves
    them; CONCAT stacks in input order."""
    vecs = [np.asarray(e, dtype=np.float32) for e in embeddings]
    if len(vecs) < 2:
        raise FusionError(f"fusion needs >= 2 inputs, got {len(vecs)}")
    for v in vecs:
        if v.ndim != 1 or v.size == 0:
            raise FusionError(f"embeddings must be non-empty 1-D, got shape {v.shape}")
    if method is FusionMethod.ADD:
        dims = {v.size for v in vecs}
        if len(dims) != 1:
            raise FusionError(f"ADD requires equal dims, got {sorted(dims)}")
        out = vecs[0].copy()
        for v in vecs[1:]:
            out += v
        return out
    return np.concatenate(vecs)


def fuse_plan(plan: FusionPlan, embeddings_by_input: dict) -> np.ndarray:
    """Fuse a {(modality, kind): vector} mapping in the plan's input order."""
    missing = [k for k in plan.inputs if k not in embeddings_by_input]
    if missing:
        raise FusionError(f"plan inputs missing embeddings: {missing}")
    return fuse([embeddings_by_input[k] for k in plan.inputs], plan.method)


def plan_table6_best() -> FusionPlan:
    """The best-performing six-input concatenation over the five-modality
    dataset: scalograms for all four signal types plus the EDA and SpO2
    waveform renders."""
    return FusionPlan(
        inputs=(
            (Modality.BVP, "scalogram"),
            (Modality.EDA, "scalogram"),
            (Modality.EDA, "waveform"),
            (Modality.RESP, "scalogram"),
            (Modality.SPO2, "scalogram"),
            (Modality.SPO2, "waveform"),
        ),
        method=FusionMethod.CONCAT,
    )


def plan_all_scalogram() -> FusionPlan:
    return FusionPlan(
        inputs=(
            (Modality.BVP, "scalogram"),
            (Modality.EDA, "scalogram"),
            (Modality.RESP, "scalogram"),
            (Modality.SPO2, "scalogram"),
        ),
        method=FusionMethod.CONCAT,
    )
