"""Shared domain types: design points, discrete sequences, simplex weights,
sampler configuration, and chain trajectories.

All types are immutable value objects after construction and can be shared
freely between concurrent workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

AMINO_ALPHABET = "ACDEFGHIKLMNPQRSTVWY"

RAW = "raw"
SEQUENCE_LOGITS = "sequence-logits"
POINT_KINDS = (RAW, SEQUENCE_LOGITS)

NOISE_GAUSSIAN = "gaussian"
NOISE_UNIFORM = "uniform"
NOISE_NONE = "none"
NOISE_KINDS = (NOISE_GAUSSIAN, NOISE_UNIFORM, NOISE_NONE)

SIMPLEX_TOL = 1e-9


class ParetoEbmError(Exception):
    """Base class for all errors raised by this package."""


class InvalidSequenceError(ParetoEbmError):
    """A discrete sequence (or its textual form) is malformed."""


class WrongKindError(ParetoEbmError):
    """An operation received a point of the wrong kind (raw vs sequence)."""


class InvalidSimplexError(ParetoEbmError):
    """Weights violate the probability-simplex constraints."""


class ShapeError(ParetoEbmError):
    """Dimension mismatch between points, models, or vectors."""


class ModelFormatError(ParetoEbmError):
    """A model file is corrupt, truncated, or has an unsupported version."""


class ConfigError(ParetoEbmError):
    """An experiment or training configuration is invalid."""


def _readonly(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class DesignPoint:
    """A point in the continuous search space.

    ``raw`` points are plain real vectors; ``sequence-logits`` points hold
    L x A per-position logits laid out row-major (position-major).
    """

    coords: np.ndarray
    kind: str = RAW
    L: int | None = None
    A: int | None = None

    def __post_init__(self):
        coords = _readonly(self.coords, np.float64)
        if coords.ndim != 1 or coords.size == 0:
            raise ShapeError(f"coords must be a non-empty 1-D vector, got shape {coords.shape}")
        if not np.all(np.isfinite(coords)):
            raise ValueError("coords must be finite (no NaN/Inf)")
        if self.kind == SEQUENCE_LOGITS:
            if self.L is None or self.A is None or self.L <= 0 or self.A <= 0:
                raise ShapeError("sequence-logits points require positive L and A")
            if self.L * self.A != coords.size:
                raise ShapeError(
                    f"sequence-logits point needs L*A coords, got {coords.size} for L={self.L}, A={self.A}"
                )
        elif self.kind == RAW:
            if self.L is not None or self.A is not None:
                raise ShapeError("raw points must not carry L/A")
        else:
            raise ValueError(f"unknown point kind: {self.kind!r}")
        object.__setattr__(self, "coords", coords)

    @property
    def d(self) -> int:
        return int(self.coords.size)

    def with_coords(self, coords) -> "DesignPoint":
        """A point of the same kind/shape metadata at new coordinates."""
        return DesignPoint(coords, kind=self.kind, L=self.L, A=self.A)


def raw_point(coords) -> DesignPoint:
    return DesignPoint(coords, kind=RAW)


def sequence_point(coords, L: int, A: int = 20) -> DesignPoint:
    return DesignPoint(coords, kind=SEQUENCE_LOGITS, L=L, A=A)


@dataclass(frozen=True, eq=False)
class DiscreteSequence:
    """A token string of length L over an alphabet of ``alphabet_size`` symbols."""

    tokens: np.ndarray
    alphabet_size: int = 20

    def __post_init__(self):
        tokens = _readonly(self.tokens, np.int64)
        if tokens.ndim != 1 or tokens.size == 0:
            raise InvalidSequenceError("tokens must be a non-empty 1-D integer vector")
        if self.alphabet_size <= 0:
            raise InvalidSequenceError("alphabet_size must be positive")
        if tokens.min() < 0 or tokens.max() >= self.alphabet_size:
            raise InvalidSequenceError(
                f"tokens must lie in [0, {self.alphabet_size}); got range "
                f"[{tokens.min()}, {tokens.max()}]"
            )
        object.__setattr__(self, "tokens", tokens)

    def __len__(self) -> int:
        return int(self.tokens.size)

    def __eq__(self, other) -> bool:
        if not isinstance(other, DiscreteSequence):
            return NotImplemented
        return self.alphabet_size == other.alphabet_size and np.array_equal(
            self.tokens, other.tokens
        )

    def __hash__(self):
        return hash((self.alphabet_size, self.tokens.tobytes()))


@dataclass(frozen=True, eq=False)
class ObjectiveVector:
    """The m per-objective energy values at one point."""

    values: np.ndarray

    def __post_init__(self):
        values = _readonly(self.values, np.float64)
        if values.ndim != 1 or values.size == 0:
            raise ShapeError("objective vector must be a non-empty 1-D vector")
        if not np.all(np.isfinite(values)):
            raise ValueError("objective values must be finite")
        object.__setattr__(self, "values", values)

    @property
    def m(self) -> int:
        return int(self.values.size)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ObjectiveVector):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    def __hash__(self):
        return hash(self.values.tobytes())


@dataclass(frozen=True, eq=False)
class SimplexWeights:
    """Convex-combination weights on the probability simplex.

    Construction validates the constraints and rejects violations instead of
    silently renormalizing.
    """

    lam: np.ndarray

    def __post_init__(self):
        lam = _readonly(self.lam, np.float64)
        if lam.ndim != 1 or lam.size == 0:
            raise InvalidSimplexError("weights must be a non-empty 1-D vector")
        if not np.all(np.isfinite(lam)):
            raise InvalidSimplexError("weights must be finite")
        if lam.min() < 0.0:
            raise InvalidSimplexError(f"negative weight: {lam.min()}")
        total = float(lam.sum())
        if abs(total - 1.0) > SIMPLEX_TOL:
            raise InvalidSimplexError(f"weights sum to {total}, expected 1 within {SIMPLEX_TOL}")
        object.__setattr__(self, "lam", lam)

    @property
    def m(self) -> int:
        return int(self.lam.size)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SimplexWeights):
            return NotImplemented
        return np.array_equal(self.lam, other.lam)

    def __hash__(self):
        return hash(self.lam.tobytes())


def new_simplex_weights(values) -> SimplexWeights:
    """Validate and wrap a weight vector; raises InvalidSimplexError on violation."""
    return SimplexWeights(values)


def uniform_weights(m: int) -> SimplexWeights:
    if m <= 0:
        raise InvalidSimplexError("m must be positive")
    return SimplexWeights(np.full(m, 1.0 / m))


@dataclass(frozen=True)
class SamplerConfig:
    """Knobs shared by all chain algorithms.

    ``sigma`` (Langevin-dynamics noise std) defaults to sqrt(eta) and
    ``alpha`` (Pareto-chain noise constant) to eta/2, the classical Langevin
    scaling; both can be overridden independently.
    """

    eta: float
    steps: int
    noise_kind: str = NOISE_GAUSSIAN
    sigma: float | None = None
    alpha: float | None = None
    seed: int = 0
    grad_tol: float = 1e-6
    record_every: int = 1

    def __post_init__(self):
        if not (self.eta > 0):
            raise ConfigError(f"eta must be positive, got {self.eta}")
        if self.steps < 1:
            raise ConfigError(f"steps must be >= 1, got {self.steps}")
        if self.noise_kind not in NOISE_KINDS:
            raise ConfigError(f"unknown noise_kind: {self.noise_kind!r}")
        if self.record_every < 1:
            raise ConfigError(f"record_every must be >= 1, got {self.record_every}")
        if self.grad_tol < 0:
            raise ConfigError("grad_tol must be non-negative")
        if self.sigma is None:
            object.__setattr__(self, "sigma", math.sqrt(self.eta))
        elif self.sigma < 0:
            raise ConfigError(f"sigma must be >= 0, got {self.sigma}")
        if self.alpha is None:
            object.__setattr__(self, "alpha", self.eta / 2.0)
        elif self.alpha < 0:
            raise ConfigError(f"alpha must be >= 0, got {self.alpha}")


@dataclass(frozen=True, eq=False)
class TrajectoryRecord:
    step: int
    point: DesignPoint
    objectives: ObjectiveVector
    weights: SimplexWeights
    grad_norm: float


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Per-step record of one sampling chain.

    The first record is always the initial state (step 0); step indices are
    strictly increasing. ``grad_norm`` stores the norm of the drift direction
    the method used at that state (min-norm direction for mgd/pcebm, the
    (weighted) gradient sum for cebm/ls_cebm).
    """

    records: tuple[TrajectoryRecord, ...]
    terminated_early: bool = False
    termination_step: int | None = None

    def __post_init__(self):
        records = tuple(self.records)
        if not records:
            raise ValueError("trajectory must contain at least the initial record")
        if records[0].step != 0:
            raise ValueError("first trajectory record must be step 0")
        steps = [r.step for r in records]
        if any(b <= a for a, b in zip(steps, steps[1:])):
            raise ValueError("trajectory step indices must be strictly increasing")
        m = records[0].objectives.m
        if any(r.objectives.m != m or r.weights.m != m for r in records):
            raise ShapeError("all trajectory records must share the objective count m")
        if self.terminated_early and self.termination_step is None:
            raise ValueError("terminated_early requires a termination_step")
        object.__setattr__(self, "records", records)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def m(self) -> int:
        return self.records[0].objectives.m

    @property
    def final_point(self) -> DesignPoint:
        return self.records[-1].point

    @property
    def final_objectives(self) -> ObjectiveVector:
        return self.records[-1].objectives

    def steps(self) -> np.ndarray:
        return np.array([r.step for r in self.records], dtype=np.int64)

    def objectives_matrix(self) -> np.ndarray:
        return np.array([r.objectives.values for r in self.records])

    def weights_matrix(self) -> np.ndarray:
        return np.array([r.weights.lam for r in self.records])

    def grad_norms(self) -> np.ndarray:
        return np.array([r.grad_norm for r in self.records])


def relax(seq: DiscreteSequence, on_value: float = 1.0, off_value: float = 0.0) -> DesignPoint:
    """Embed a discrete sequence as per-position logits (one-hot style fill).

    Position l, token t maps to coords[l*A + t] = on_value; everything else
    gets off_value. Requires on_value > off_value so decode() round-trips.
    """
    if not (on_value > off_value):
        raise ValueError(f"on_value ({on_value}) must exceed off_value ({off_value})")
    L, A = len(seq), seq.alphabet_size
    coords = np.full(L * A, float(off_value))
    coords[np.arange(L) * A + seq.tokens] = float(on_value)
    return DesignPoint(coords, kind=SEQUENCE_LOGITS, L=L, A=A)


def decode(point: DesignPoint) -> DiscreteSequence:
    """Per-position argmax over the A logits; ties break to the lowest token index."""
    if point.kind != SEQUENCE_LOGITS:
        raise WrongKindError(f"decode expects a sequence-logits point, got kind {point.kind!r}")
    logits = point.coords.reshape(point.L, point.A)
    return DiscreteSequence(np.argmax(logits, axis=1), alphabet_size=point.A)


def sequence_to_str(seq: DiscreteSequence, alphabet: str = AMINO_ALPHABET) -> str:
    if seq.alphabet_size > len(alphabet):
        raise InvalidSequenceError(
            f"alphabet has {len(alphabet)} symbols but sequence uses {seq.alphabet_size}"
        )
    return "".join(alphabet[t] for t in seq.tokens)


def sequence_from_str(
    text: str, alphabet: str = AMINO_ALPHABET, location: str | None = None
) -> DiscreteSequence:
    where = f" at {location}" if location else ""
    lookup = {ch: i for i, ch in enumerate(alphabet)}
    if len(lookup) != len(alphabet):
        raise InvalidSequenceError("alphabet must not contain duplicate symbols")
    tokens = []
    for pos, ch in enumerate(text.strip()):
        if ch not in lookup:
            raise InvalidSequenceError(f"unknown symbol {ch!r} at position {pos}{where}")
        tokens.append(lookup[ch])
    if not tokens:
        raise InvalidSequenceError(f"empty sequence{where}")
    return DiscreteSequence(np.array(tokens), alphabet_size=len(alphabet))


def read_sequences(path, alphabet: str = AMINO_ALPHABET) -> list[DiscreteSequence]:
    """Read one sequence per line; blank lines and '#' comments are skipped."""
    seqs = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        seqs.append(sequence_from_str(stripped, alphabet, location=f"{path}:{lineno}"))
    return seqs


def write_sequences(path, seqs: Iterable[DiscreteSequence], alphabet: str = AMINO_ALPHABET) -> None:
    lines = [sequence_to_str(s, alphabet) for s in seqs]
    Path(path).write_text("".join(line + "\n" for line in lines))
