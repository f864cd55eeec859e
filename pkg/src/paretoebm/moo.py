"""Multi-objective machinery: dominance and Pareto extraction, linear
scalarization, and the min-norm common-descent solver (closed form for two
objectives, Frank-Wolfe above).

All operations are pure functions and safe for unrestricted parallel use.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import DesignPoint, ObjectiveVector, ShapeError, SimplexWeights
from .energy import EnergyModel, ObjectiveSet

FW_MAX_ITERS = 500
FW_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class GradientBundle:
    """The m per-objective gradients at one point, stacked as an (m, d) matrix."""

    grads: np.ndarray

    def __post_init__(self):
        grads = np.array(self.grads, dtype=np.float64)
        if grads.ndim != 2 or grads.shape[0] < 1 or grads.shape[1] < 1:
            raise ShapeError(f"gradient bundle must be (m, d) with m, d >= 1, got {grads.shape}")
        if not np.all(np.isfinite(grads)):
            raise ValueError("gradients must be finite")
        grads.setflags(write=False)
        object.__setattr__(self, "grads", grads)

    @property
    def m(self) -> int:
        return self.grads.shape[0]

    @property
    def d(self) -> int:
        return self.grads.shape[1]


@dataclass(frozen=True, eq=False)
class MinNormResult:
    """Solution of min over simplex weights of ||sum_i lam_i g_i||.

    ``direction`` is recomputed from the final weights, so it is always the
    exact convex combination; zero norm signals a (locally) Pareto-stationary
    point.
    """

    lam: SimplexWeights
    direction: np.ndarray
    norm: float
    converged: bool
    iterations: int


def _values(vec) -> np.ndarray:
    if isinstance(vec, ObjectiveVector):
        return vec.values
    arr = np.asarray(vec, dtype=np.float64)
    if arr.ndim != 1:
        raise ShapeError("objective vector must be 1-D")
    return arr


def dominates(a, b) -> bool:
    """Strict-Pareto dominance: a <= b everywhere and a < b somewhere."""
    va, vb = _values(a), _values(b)
    if va.size != vb.size:
        raise ShapeError(f"objective vectors differ in length: {va.size} vs {vb.size}")
    return bool(np.all(va <= vb) and np.any(va < vb))


def pareto_filter(points: Sequence) -> list[int]:
    """Indices of the points not dominated by any other input point.

    Mutually non-dominating duplicates are all retained.
    """
    if len(points) == 0:
        return []
    vals = [_values(p) for p in points]
    m = vals[0].size
    if any(v.size != m for v in vals):
        raise ShapeError("all objective vectors must share one length")
    V = np.stack(vals)
    le = np.all(V[:, None, :] <= V[None, :, :], axis=-1)
    lt = np.any(V[:, None, :] < V[None, :, :], axis=-1)
    dominated = np.any(le & lt, axis=0)
    return [i for i in range(len(points)) if not dominated[i]]


class ScalarizedEnergy(EnergyModel):
    """Fixed-preference composite: value sum_i lam_i f_i, gradient sum_i lam_i grad f_i."""

    def __init__(self, objectives: ObjectiveSet, weights: SimplexWeights):
        if weights.m != objectives.m:
            raise ShapeError(
                f"weights have m={weights.m}, objective set has m={objectives.m}"
            )
        self.objectives = objectives
        self.weights = weights

    @property
    def d(self) -> int:
        return self.objectives.d

    @property
    def point_kind(self) -> str:
        return self.objectives.point_kind

    def _value_and_gradient(self, coords):
        values, grads = self.objectives.eval_raw(coords)
        lam = self.weights.lam
        return float(lam @ values), lam @ grads


def scalarize(objectives: ObjectiveSet, weights: SimplexWeights) -> ScalarizedEnergy:
    """The weighted objective f_lam = sum_i lam_i f_i as a single energy model."""
    return ScalarizedEnergy(objectives, weights)


def _result_from_lambda(lam: np.ndarray, grads: np.ndarray, converged: bool, iterations: int) -> MinNormResult:
    direction = lam @ grads
    return MinNormResult(
        lam=SimplexWeights(lam),
        direction=direction,
        norm=float(np.linalg.norm(direction)),
        converged=converged,
        iterations=iterations,
    )


def min_norm_2(g1, g2) -> MinNormResult:
    """Exact min-norm point of the segment [g1, g2].

    lam_1 = clip(<g2 - g1, g2> / ||g1 - g2||^2, 0, 1); the coincident case
    g1 == g2 fixes lam at one half for determinism.
    """
    g1 = np.asarray(g1, dtype=np.float64)
    g2 = np.asarray(g2, dtype=np.float64)
    if g1.shape != g2.shape or g1.ndim != 1:
        raise ShapeError(f"gradients must be 1-D and equal length, got {g1.shape} vs {g2.shape}")
    diff = g1 - g2
    denom = float(diff @ diff)
    if denom == 0.0:
        lam1 = 0.5
    else:
        lam1 = min(1.0, max(0.0, float((g2 - g1) @ g2) / denom))
    return _result_from_lambda(np.array([lam1, 1.0 - lam1]), np.stack([g1, g2]), True, 0)


def min_norm_fw(
    bundle, max_iters: int = FW_MAX_ITERS, tol: float = FW_TOL
) -> MinNormResult:
    """Frank-Wolfe minimization of ||sum_i lam_i g_i||^2 over the simplex.

    Starts from uniform weights. Each iteration picks the vertex with the
    smallest inner product against the current direction and line-searches
    toward it with the exact two-point closed form; when shifting weight off
    an over-weighted vertex is the steeper move, it takes the corresponding
    away step instead (the plain toward-vertex rule zigzags at an O(1/k)
    rate near face optima, far too slow for tight tolerances). Stops on the
    duality-gap certificate or when the squared-norm improvement falls below
    tol.
    """
    if isinstance(bundle, GradientBundle):
        grads = bundle.grads
    else:
        grads = np.asarray(bundle, dtype=np.float64)
        if grads.ndim != 2 or grads.shape[0] < 1:
            raise ShapeError(f"gradient bundle must be (m, d), got {grads.shape}")
    m = grads.shape[0]
    if m < 2:
        raise ShapeError("min_norm_fw needs at least two gradients")
    gram = grads @ grads.T
    lam = np.full(m, 1.0 / m)
    inner = gram @ lam
    sq = float(inner @ lam)
    converged = False
    iterations = 0
    for _ in range(max_iters):
        i_to = int(np.argmin(inner))
        # Duality gap for f = ||d||^2 is 2*(||d||^2 - <g_i*, d>); zero at the optimum.
        gap = 2.0 * (sq - float(inner[i_to]))
        if gap <= tol:
            converged = True
            break
        iterations += 1
        support = np.nonzero(lam > 0.0)[0]
        i_away = int(support[np.argmax(inner[support])])
        toward_slope = sq - float(inner[i_to])
        away_slope = float(inner[i_away]) - sq
        if toward_slope >= away_slope:
            # Move toward g_{i_to}: lam <- (1 - gamma) lam + gamma e_{i_to}.
            a = sq - 2.0 * float(inner[i_to]) + float(gram[i_to, i_to])
            gamma = 1.0 if a <= 0.0 else min(1.0, toward_slope / a)
            lam *= 1.0 - gamma
            lam[i_to] += gamma
        else:
            # Shift weight off g_{i_away}: lam <- (1 + gamma) lam - gamma e_{i_away}.
            lam_v = float(lam[i_away])
            gamma_max = lam_v / (1.0 - lam_v) if lam_v < 1.0 else 0.0
            a = sq - 2.0 * float(inner[i_away]) + float(gram[i_away, i_away])
            gamma = gamma_max if a <= 0.0 else min(gamma_max, away_slope / a)
            lam *= 1.0 + gamma
            lam[i_away] -= gamma
            if gamma == gamma_max:
                lam[i_away] = 0.0  # drop step: remove the vertex exactly
            lam = np.maximum(lam, 0.0)
        inner = gram @ lam
        new_sq = float(inner @ lam)
        improvement = sq - new_sq
        sq = new_sq
        if improvement < tol:
            converged = True
            break
    return _result_from_lambda(lam, grads, converged, iterations)


def solve_min_norm(grads: np.ndarray, max_iters: int = FW_MAX_ITERS, tol: float = FW_TOL) -> MinNormResult:
    """Dispatch on the objective count: trivial for m=1, closed form for m=2,
    Frank-Wolfe beyond."""
    grads = np.asarray(grads, dtype=np.float64)
    if grads.ndim != 2:
        raise ShapeError("expected an (m, d) gradient matrix")
    m = grads.shape[0]
    if m == 1:
        return _result_from_lambda(np.array([1.0]), grads, True, 0)
    if m == 2:
        return min_norm_2(grads[0], grads[1])
    return min_norm_fw(GradientBundle(grads), max_iters=max_iters, tol=tol)


def mgd_direction(objectives: ObjectiveSet, point: DesignPoint) -> MinNormResult:
    """The common-descent direction at a point: the min-norm element of the
    convex hull of the per-objective gradients."""
    return solve_min_norm(objectives.gradients(point))
