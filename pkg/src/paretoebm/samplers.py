"""The four chain algorithms over any objective set: multiple gradient
descent (mgd), Langevin dynamics on the summed energy (cebm), its linearly
scalarized variant (ls_cebm), and the Pareto-compositional chain (pcebm)
whose drift is the min-norm common-descent direction.

Every sampler is a pure function of (objectives, chain spec): a chain's
noise stream comes only from its own config seed, so runs reproduce exactly
at any worker count. Chains are embarrassingly parallel and share the
objective models read-only.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import (
    NOISE_GAUSSIAN,
    NOISE_NONE,
    NOISE_UNIFORM,
    RAW,
    SEQUENCE_LOGITS,
    ConfigError,
    DesignPoint,
    ObjectiveVector,
    ParetoEbmError,
    SamplerConfig,
    ShapeError,
    SimplexWeights,
    Trajectory,
    TrajectoryRecord,
    WrongKindError,
    uniform_weights,
)
from .energy import ObjectiveSet
from .moo import solve_min_norm

METHOD_MGD = "mgd"
METHOD_CEBM = "cebm"
METHOD_LS_CEBM = "ls_cebm"
METHOD_PCEBM = "pcebm"
METHODS = (METHOD_MGD, METHOD_CEBM, METHOD_LS_CEBM, METHOD_PCEBM)

_SQRT3 = math.sqrt(3.0)


@dataclass(frozen=True)
class RandomInit:
    """Descriptor for a randomly drawn starting point.

    ``normal`` draws standard-normal coordinates scaled by ``scale``;
    ``uniform`` draws from U(-scale, scale) per coordinate.
    """

    kind: str = RAW
    d: int | None = None
    L: int | None = None
    A: int | None = None
    distribution: str = "normal"
    scale: float = 1.0

    def __post_init__(self):
        if self.distribution not in ("normal", "uniform"):
            raise ConfigError(f"unknown init distribution: {self.distribution!r}")
        if self.kind == RAW:
            if self.d is None or self.d < 1:
                raise ShapeError("raw random init needs a positive dimension d")
        elif self.kind == SEQUENCE_LOGITS:
            if self.L is None or self.A is None or self.L < 1 or self.A < 1:
                raise ShapeError("sequence random init needs positive L and A")
        else:
            raise ConfigError(f"unknown point kind: {self.kind!r}")

    def realize(self, rng: np.random.Generator) -> DesignPoint:
        d = self.d if self.kind == RAW else self.L * self.A
        if self.distribution == "normal":
            coords = self.scale * rng.standard_normal(d)
        else:
            coords = rng.uniform(-self.scale, self.scale, d)
        if self.kind == RAW:
            return DesignPoint(coords)
        return DesignPoint(coords, kind=SEQUENCE_LOGITS, L=self.L, A=self.A)


@dataclass(frozen=True)
class ChainSpec:
    """Everything one chain needs: method, sampler config, and start point."""

    method: str
    config: SamplerConfig
    init: DesignPoint | RandomInit
    fixed_lambda: SimplexWeights | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method: {self.method!r}")
        if self.method == METHOD_LS_CEBM:
            if self.fixed_lambda is None:
                raise ConfigError("ls_cebm requires fixed_lambda")
        elif self.fixed_lambda is not None:
            raise ConfigError(f"{self.method} must not supply fixed_lambda")
        if self.method == METHOD_MGD and self.config.noise_kind != NOISE_NONE:
            raise ConfigError("mgd is noiseless; use noise_kind='none'")


@dataclass(frozen=True)
class ChainFailure:
    """A failed chain in a population run; siblings are unaffected."""

    index: int
    error: Exception

    def __str__(self) -> str:
        return f"chain {self.index}: {type(self.error).__name__}: {self.error}"


def chain_seed(base_seed: int, index: int) -> int:
    """Derive a per-chain seed from (base seed, chain index).

    Uses numpy's splittable SeedSequence, so populations reproduce exactly
    regardless of scheduling or worker count.
    """
    state = np.random.SeedSequence(entropy=base_seed, spawn_key=(index,)).generate_state(1, np.uint64)
    return int(state[0])


def _start(objectives: ObjectiveSet, spec: ChainSpec, rng: np.random.Generator) -> DesignPoint:
    point = spec.init.realize(rng) if isinstance(spec.init, RandomInit) else spec.init
    if point.d != objectives.d:
        raise ShapeError(f"init point has d={point.d}, objectives expect d={objectives.d}")
    if point.kind != objectives.point_kind:
        raise WrongKindError(
            f"init point kind {point.kind!r} does not match objectives ({objectives.point_kind!r})"
        )
    return point


def _draw_unit(rng: np.random.Generator, noise_kind: str, d: int) -> np.ndarray:
    """A unit-variance-per-coordinate draw of the configured noise shape."""
    if noise_kind == NOISE_GAUSSIAN:
        return rng.standard_normal(d)
    if noise_kind == NOISE_UNIFORM:
        return rng.uniform(-_SQRT3, _SQRT3, d)
    raise ConfigError(f"cannot draw noise of kind {noise_kind!r}")


class _Recorder:
    def __init__(self, template: DesignPoint, every: int, last_step: int):
        self.template = template
        self.every = every
        self.last_step = last_step
        self.records: list[TrajectoryRecord] = []

    def due(self, step: int) -> bool:
        return step == 0 or step == self.last_step or step % self.every == 0

    def add(self, step: int, coords: np.ndarray, values: np.ndarray, weights: SimplexWeights, grad_norm: float) -> None:
        if self.records and self.records[-1].step == step:
            return
        self.records.append(
            TrajectoryRecord(
                step=step,
                point=self.template.with_coords(coords.copy()),
                objectives=ObjectiveVector(values.copy()),
                weights=weights,
                grad_norm=float(grad_norm),
            )
        )


def _run_min_norm_chain(objectives: ObjectiveSet, spec: ChainSpec, noisy: bool) -> Trajectory:
    cfg = spec.config
    rng = np.random.default_rng(cfg.seed)
    start = _start(objectives, spec, rng)
    x = np.array(start.coords)
    noise_on = noisy and cfg.alpha > 0 and cfg.noise_kind != NOISE_NONE
    noise_scale = math.sqrt(2.0 * cfg.alpha) if noise_on else 0.0

    recorder = _Recorder(start, cfg.record_every, cfg.steps)
    terminated = False
    termination_step = None
    # Divergence shows up as non-finite coordinates and is rejected when the
    # state is recorded; the interim overflow itself is not worth a warning.
    with np.errstate(over="ignore", invalid="ignore"):
        values, grads = objectives.eval_raw(x)
        res = solve_min_norm(grads)
        recorder.add(0, x, values, res.lam, res.norm)
        for step in range(1, cfg.steps + 1):
            # With active noise the chain must keep exploring (Brownian
            # regime); only the noiseless dynamics terminate at a
            # Pareto-stationary point.
            if not noise_on and res.norm < cfg.grad_tol:
                terminated = True
                termination_step = step - 1
                recorder.add(step - 1, x, values, res.lam, res.norm)
                break
            x = x - cfg.eta * res.direction
            if noise_on:
                x = x + noise_scale * _draw_unit(rng, cfg.noise_kind, x.size)
            values, grads = objectives.eval_raw(x)
            res = solve_min_norm(grads)
            if recorder.due(step):
                recorder.add(step, x, values, res.lam, res.norm)
    return Trajectory(tuple(recorder.records), terminated_early=terminated, termination_step=termination_step)


def _run_langevin_chain(objectives: ObjectiveSet, spec: ChainSpec, weights: SimplexWeights, weighted: bool) -> Trajectory:
    cfg = spec.config
    if weights.m != objectives.m:
        raise ShapeError(f"weights have m={weights.m}, objectives have m={objectives.m}")
    rng = np.random.default_rng(cfg.seed)
    start = _start(objectives, spec, rng)
    x = np.array(start.coords)
    noise_on = cfg.noise_kind != NOISE_NONE and cfg.sigma > 0

    def drift(grads: np.ndarray) -> np.ndarray:
        if weighted:
            return weights.lam @ grads
        # Sequential accumulation keeps the reduction order bit-stable.
        g = grads[0]
        for row in grads[1:]:
            g = g + row
        return g

    recorder = _Recorder(start, cfg.record_every, cfg.steps)
    with np.errstate(over="ignore", invalid="ignore"):
        values, grads = objectives.eval_raw(x)
        g = drift(grads)
        recorder.add(0, x, values, weights, np.linalg.norm(g))
        for step in range(1, cfg.steps + 1):
            x = x - (cfg.eta / 2.0) * g
            if noise_on:
                x = x + cfg.sigma * _draw_unit(rng, cfg.noise_kind, x.size)
            values, grads = objectives.eval_raw(x)
            g = drift(grads)
            if recorder.due(step):
                recorder.add(step, x, values, weights, np.linalg.norm(g))
    return Trajectory(tuple(recorder.records))


def run_mgd(objectives: ObjectiveSet, spec: ChainSpec) -> Trajectory:
    """Multiple gradient descent: x <- x - eta * g with g the min-norm
    direction; terminates once ||g|| falls below grad_tol."""
    if spec.method != METHOD_MGD:
        raise ConfigError(f"run_mgd got method {spec.method!r}")
    return _run_min_norm_chain(objectives, spec, noisy=False)


def run_pcebm(objectives: ObjectiveSet, spec: ChainSpec) -> Trajectory:
    """Pareto-compositional Langevin chain: min-norm drift plus sqrt(2*alpha)
    times a standard noise draw; weights are re-solved at every step.

    With alpha = 0 (or noise_kind 'none') this takes exactly the mgd code
    path, so the trajectories agree bit for bit.
    """
    if spec.method != METHOD_PCEBM:
        raise ConfigError(f"run_pcebm got method {spec.method!r}")
    return _run_min_norm_chain(objectives, spec, noisy=True)


def run_cebm(objectives: ObjectiveSet, spec: ChainSpec) -> Trajectory:
    """Langevin dynamics on the unweighted sum energy:
    x <- x - (eta/2) * sum_i grad f_i + noise(sigma)."""
    if spec.method != METHOD_CEBM:
        raise ConfigError(f"run_cebm got method {spec.method!r}")
    return _run_langevin_chain(objectives, spec, uniform_weights(objectives.m), weighted=False)


def run_ls_cebm(objectives: ObjectiveSet, spec: ChainSpec) -> Trajectory:
    """As run_cebm with the fixed preference weights in place of the plain sum."""
    if spec.method != METHOD_LS_CEBM:
        raise ConfigError(f"run_ls_cebm got method {spec.method!r}")
    return _run_langevin_chain(objectives, spec, spec.fixed_lambda, weighted=True)


_RUNNERS = {
    METHOD_MGD: run_mgd,
    METHOD_CEBM: run_cebm,
    METHOD_LS_CEBM: run_ls_cebm,
    METHOD_PCEBM: run_pcebm,
}


def run_chain(objectives: ObjectiveSet, spec: ChainSpec) -> Trajectory:
    """Dispatch to the sampler named by spec.method."""
    return _RUNNERS[spec.method](objectives, spec)


def run_population(
    objectives: ObjectiveSet,
    specs: Sequence[ChainSpec],
    parallelism: int = 1,
) -> list[Trajectory | ChainFailure]:
    """Run many independent chains; results come back in input order.

    A failing chain yields a ChainFailure entry tagged with its index and
    does not disturb its siblings. Each chain's randomness comes only from
    its own spec, so any worker count produces identical results.
    """
    if parallelism < 1:
        raise ConfigError("parallelism must be >= 1")

    def one(index_spec):
        index, spec = index_spec
        try:
            return run_chain(objectives, spec)
        except Exception as exc:  # noqa: BLE001 - failures are per-chain data
            return ChainFailure(index, exc)

    jobs = list(enumerate(specs))
    if parallelism == 1 or len(jobs) <= 1:
        return [one(job) for job in jobs]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(one, jobs))


def write_trajectories(
    path,
    trajectories: Sequence[Trajectory],
    objective_names: Sequence[str] | None = None,
    chain_ids: Sequence[int] | None = None,
) -> None:
    """Export trajectories as CSV: one record per line with fields
    (chain_id, step, objective values..., lambda..., grad_norm)."""
    if not trajectories:
        raise ValueError("nothing to export")
    m = trajectories[0].m
    if objective_names is None:
        objective_names = [f"f{i}" for i in range(m)]
    if len(objective_names) != m:
        raise ShapeError(f"need {m} objective names, got {len(objective_names)}")
    if chain_ids is None:
        chain_ids = range(len(trajectories))
    header = ["chain_id", "step", *objective_names, *[f"lambda{i}" for i in range(m)], "grad_norm"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for cid, traj in zip(chain_ids, trajectories):
            if traj.m != m:
                raise ShapeError("all trajectories must share the objective count m")
            for rec in traj.records:
                writer.writerow(
                    [
                        cid,
                        rec.step,
                        *[float(v) for v in rec.objectives.values],
                        *[float(v) for v in rec.weights.lam],
                        float(rec.grad_norm),
                    ]
                )
