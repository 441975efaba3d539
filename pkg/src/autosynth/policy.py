"""The 11-label generation policy and its numeric interpretation.

A policy is a vector of 11 discrete labels, each in {0..8}: rotation,
translation, overall scale, shear per axis (3), stretch per axis (3),
primitive count, and truncation-plane offset.  A label picks the magnitude
envelope data generation may draw from: label ``l`` maps to the fraction
``(l+1)/9`` of the operation's maximum envelope, so every label admits some
variation and label 8 admits the full range.  The full search space holds
``9**11`` = 31,381,059,609 policies.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .rng import SeedLike, as_generator

N_LABELS = 11
LABEL_VALUES = 9

# Label vector positions.
ROTATION, TRANSLATION, SCALE = 0, 1, 2
SHEAR_X, SHEAR_Y, SHEAR_Z = 3, 4, 5
STRETCH_X, STRETCH_Y, STRETCH_Z = 6, 7, 8
COUNT, TRUNCATION = 9, 10

# Maximum envelopes reached at label 8: rotation angle, per-axis translation,
# overall-scale half width, shear coefficient, stretch amount, plane-offset
# fraction of the part's circumradius.
ROTATION_ENVELOPE = math.pi
TRANSLATION_ENVELOPE = 0.6
SCALE_ENVELOPE = 0.5
SHEAR_ENVELOPE = 0.6
STRETCH_ENVELOPE = 1.0
TRUNCATION_ENVELOPE = 0.9

_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class Policy:
    labels: tuple[int, ...]

    def __post_init__(self):
        labels = tuple(int(x) for x in self.labels)
        object.__setattr__(self, "labels", labels)
        if len(labels) != N_LABELS:
            raise ValueError(f"policy needs {N_LABELS} labels, got {len(labels)}")
        if any(not 0 <= x < LABEL_VALUES for x in labels):
            raise ValueError(f"labels must be in [0, {LABEL_VALUES - 1}]")

    def to_json(self) -> str:
        return json.dumps(
            {"labels": list(self.labels), "version": _SCHEMA_VERSION},
            sort_keys=True,
            separators=(",", ":"),
        )

    @classmethod
    def from_json(cls, text: str) -> "Policy":
        data = json.loads(text)
        if not isinstance(data, dict) or "labels" not in data:
            raise ValueError("policy JSON must be an object with a 'labels' field")
        if data.get("version", _SCHEMA_VERSION) != _SCHEMA_VERSION:
            raise ValueError(f"unsupported policy version: {data.get('version')}")
        return cls(tuple(data["labels"]))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Policy":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


@dataclass(frozen=True)
class GenerationRanges:
    """Numeric sampling intervals expanded from one policy."""

    rotation_max: float  # angle in [0, rotation_max]
    translation_max: float  # per axis in [-t, t]
    scale_delta: float  # alpha in [1 - d, 1 + d]
    shear_max: tuple[float, float, float]  # per axis in [-s, s]
    stretch_amount: tuple[float, float, float]  # per axis in [1/(1+a), 1+a]
    primitive_count: int
    truncation_max: float  # offset fraction in [0, c]

    def __post_init__(self):
        if not 0 < 1.0 - self.scale_delta:
            raise ValueError("scale interval must stay positive")
        if self.primitive_count < 1:
            raise ValueError("need at least one primitive")


def _fraction(label: int) -> float:
    return (label + 1) / LABEL_VALUES


def to_ranges(p: Policy) -> GenerationRanges:
    """Numeric envelopes for one policy; label ``l`` uses ``(l+1)/9`` of the max."""
    lab = p.labels
    return GenerationRanges(
        rotation_max=_fraction(lab[ROTATION]) * ROTATION_ENVELOPE,
        translation_max=_fraction(lab[TRANSLATION]) * TRANSLATION_ENVELOPE,
        scale_delta=_fraction(lab[SCALE]) * SCALE_ENVELOPE,
        shear_max=tuple(
            _fraction(lab[i]) * SHEAR_ENVELOPE for i in (SHEAR_X, SHEAR_Y, SHEAR_Z)
        ),
        stretch_amount=tuple(
            _fraction(lab[i]) * STRETCH_ENVELOPE
            for i in (STRETCH_X, STRETCH_Y, STRETCH_Z)
        ),
        primitive_count=lab[COUNT] + 2,
        truncation_max=_fraction(lab[TRUNCATION]) * TRUNCATION_ENVELOPE,
    )


def random_policy(seed: SeedLike = None) -> Policy:
    """Policy with all 11 labels independently uniform over {0..8}."""
    rng = as_generator(seed)
    return Policy(tuple(int(x) for x in rng.integers(0, LABEL_VALUES, size=N_LABELS)))


def mutate(p: Policy, seed: SeedLike = None) -> Policy:
    """Change exactly one label, uniformly among the 8 other values."""
    rng = as_generator(seed)
    pos = int(rng.integers(0, N_LABELS))
    shift = int(rng.integers(1, LABEL_VALUES))
    labels = list(p.labels)
    labels[pos] = (labels[pos] + shift) % LABEL_VALUES
    return Policy(tuple(labels))


def full_range_policy() -> Policy:
    """The no-guidance baseline: every label at its maximum."""
    return Policy((LABEL_VALUES - 1,) * N_LABELS)


def search_space_size() -> int:
    """Number of distinct policies."""
    return LABEL_VALUES**N_LABELS
