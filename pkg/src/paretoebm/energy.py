"""Energy models: per-objective value/gradient oracles, analytic benchmark
objectives with known geometry, trainable sequence energies, and
contrastive-divergence training.
"""

from __future__ import annotations

import json
import math
import struct
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import (
    RAW,
    SEQUENCE_LOGITS,
    DesignPoint,
    DiscreteSequence,
    ConfigError,
    ModelFormatError,
    ObjectiveVector,
    ShapeError,
    WrongKindError,
    relax,
)

MODEL_MAGIC = b"PEBMODEL"
MODEL_FORMAT_VERSION = 1


class EnergyModel(ABC):
    """Scalar energy with an exact gradient; lower energy is preferred.

    Implementations are deterministic functions of the point and the model
    parameters, and immutable after construction, so concurrent evaluation
    needs no locking.
    """

    @property
    @abstractmethod
    def d(self) -> int:
        """Input dimension the model accepts."""

    @property
    def point_kind(self) -> str:
        return RAW

    @abstractmethod
    def _value_and_gradient(self, coords: np.ndarray) -> tuple[float, np.ndarray]:
        """Unchecked evaluation on a raw coordinate vector."""

    def _check(self, point: DesignPoint) -> np.ndarray:
        if point.d != self.d:
            raise ShapeError(f"model expects d={self.d}, point has d={point.d}")
        if point.kind != self.point_kind:
            raise WrongKindError(
                f"model expects {self.point_kind!r} points, got {point.kind!r}"
            )
        return point.coords

    def value_and_gradient(self, point: DesignPoint) -> tuple[float, np.ndarray]:
        """Energy and its gradient in a single evaluation."""
        return self._value_and_gradient(self._check(point))

    def value(self, point: DesignPoint) -> float:
        return self.value_and_gradient(point)[0]

    def gradient(self, point: DesignPoint) -> np.ndarray:
        return self.value_and_gradient(point)[1]

    def _batch_values(self, X: np.ndarray) -> np.ndarray:
        return np.array([self._value_and_gradient(x)[0] for x in X])

    def _batch_gradients(self, X: np.ndarray) -> np.ndarray:
        return np.stack([self._value_and_gradient(x)[1] for x in X])


class ObjectiveSet:
    """An ordered collection of m energy models sharing dimension and point kind."""

    def __init__(self, models: Sequence[EnergyModel]):
        models = tuple(models)
        if not models:
            raise ShapeError("objective set needs at least one model")
        d = models[0].d
        kind = models[0].point_kind
        for i, model in enumerate(models):
            if model.d != d:
                raise ShapeError(f"model {i} has d={model.d}, expected {d}")
            if model.point_kind != kind:
                raise WrongKindError(
                    f"model {i} expects {model.point_kind!r} points, others {kind!r}"
                )
        self.models = models
        self._d = d
        self._kind = kind

    @property
    def m(self) -> int:
        return len(self.models)

    @property
    def d(self) -> int:
        return self._d

    @property
    def point_kind(self) -> str:
        return self._kind

    def _check(self, point: DesignPoint) -> np.ndarray:
        if point.d != self._d:
            raise ShapeError(f"objective set expects d={self._d}, point has d={point.d}")
        if point.kind != self._kind:
            raise WrongKindError(
                f"objective set expects {self._kind!r} points, got {point.kind!r}"
            )
        return point.coords

    def eval_raw(self, coords: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Values (m,) and gradients (m, d) at raw coordinates, one pass per model."""
        values = np.empty(self.m)
        grads = np.empty((self.m, self._d))
        for i, model in enumerate(self.models):
            v, g = model._value_and_gradient(coords)
            values[i] = v
            grads[i] = g
        return values, grads

    def evaluate_all(self, point: DesignPoint) -> ObjectiveVector:
        """Stack every model's energy at the point, order preserved."""
        coords = self._check(point)
        return ObjectiveVector(np.array([m._value_and_gradient(coords)[0] for m in self.models]))

    def gradients(self, point: DesignPoint) -> np.ndarray:
        coords = self._check(point)
        return np.stack([m._value_and_gradient(coords)[1] for m in self.models])


class PwmEnergy(EnergyModel):
    """Linear position-weight energy on sequence logits: E(x) = <W, x>.

    The gradient is the flattened weight matrix, independent of the point.
    """

    def __init__(self, weights):
        W = np.array(weights, dtype=np.float64)
        if W.ndim != 2 or W.size == 0:
            raise ShapeError("PWM weights must be a non-empty L x A matrix")
        if not np.all(np.isfinite(W)):
            raise ValueError("PWM weights must be finite")
        W.setflags(write=False)
        self.weights = W
        self.L, self.A = W.shape
        self._flat = W.reshape(-1)

    @property
    def d(self) -> int:
        return self._flat.size

    @property
    def point_kind(self) -> str:
        return SEQUENCE_LOGITS

    def _value_and_gradient(self, coords):
        return float(self._flat @ coords), self._flat

    def _batch_values(self, X):
        return X @ self._flat

    def _batch_gradients(self, X):
        return np.broadcast_to(self._flat, X.shape)

    def params(self) -> dict[str, np.ndarray]:
        return {"weights": self.weights}

    def with_params(self, params) -> "PwmEnergy":
        return PwmEnergy(params["weights"])

    def batch_param_gradient(self, X: np.ndarray) -> dict[str, np.ndarray]:
        """Mean parameter gradient of the energy over a batch of coordinates."""
        return {"weights": X.mean(axis=0).reshape(self.L, self.A)}

    @classmethod
    def zeros(cls, L: int, A: int = 20) -> "PwmEnergy":
        return cls(np.zeros((L, A)))


class MlpEnergy(EnergyModel):
    """One-hidden-layer tanh network energy: E(x) = w2 . tanh(W1 x + b1) + b2."""

    def __init__(self, w1, b1, w2, b2, L: int | None = None, A: int | None = None):
        self.w1 = np.array(w1, dtype=np.float64)
        self.b1 = np.array(b1, dtype=np.float64)
        self.w2 = np.array(w2, dtype=np.float64)
        self.b2 = float(b2)
        if self.w1.ndim != 2:
            raise ShapeError("w1 must be an H x d matrix")
        H, d = self.w1.shape
        if self.b1.shape != (H,) or self.w2.shape != (H,):
            raise ShapeError("b1 and w2 must be H-vectors matching w1")
        if L is not None:
            if A is None or L * A != d:
                raise ShapeError(f"L*A must equal d={d}")
        self.L, self.A = L, A
        self.H = H
        self._d = d
        for arr in (self.w1, self.b1, self.w2):
            arr.setflags(write=False)

    @property
    def d(self) -> int:
        return self._d

    @property
    def point_kind(self) -> str:
        return SEQUENCE_LOGITS if self.L is not None else RAW

    def _value_and_gradient(self, coords):
        h = np.tanh(self.w1 @ coords + self.b1)
        value = float(self.w2 @ h + self.b2)
        dz = self.w2 * (1.0 - h * h)
        return value, self.w1.T @ dz

    def _batch_values(self, X):
        Hm = np.tanh(X @ self.w1.T + self.b1)
        return Hm @ self.w2 + self.b2

    def _batch_gradients(self, X):
        Hm = np.tanh(X @ self.w1.T + self.b1)
        return ((1.0 - Hm * Hm) * self.w2) @ self.w1

    def params(self) -> dict[str, np.ndarray]:
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": np.array([self.b2])}

    def with_params(self, params) -> "MlpEnergy":
        return MlpEnergy(
            params["w1"], params["b1"], params["w2"], float(np.asarray(params["b2"]).reshape(())),
            L=self.L, A=self.A,
        )

    def batch_param_gradient(self, X: np.ndarray) -> dict[str, np.ndarray]:
        Hm = np.tanh(X @ self.w1.T + self.b1)
        Dz = (1.0 - Hm * Hm) * self.w2
        n = X.shape[0]
        return {
            "w1": Dz.T @ X / n,
            "b1": Dz.mean(axis=0),
            "w2": Hm.mean(axis=0),
            "b2": np.array([1.0]),
        }

    @classmethod
    def random(
        cls, hidden: int, d: int | None = None, L: int | None = None, A: int | None = None,
        seed: int = 0, scale: float = 0.1,
    ) -> "MlpEnergy":
        if d is None:
            if L is None or A is None:
                raise ShapeError("give either d or both L and A")
            d = L * A
        rng = np.random.default_rng(seed)
        return cls(
            rng.normal(scale=scale, size=(hidden, d)),
            rng.normal(scale=scale, size=hidden),
            rng.normal(scale=scale, size=hidden),
            float(rng.normal(scale=scale)),
            L=L, A=A,
        )


class ShiftedQuadratic(EnergyModel):
    """f(x) = ||x - c||^2, minimized at the center c with gradient 2(x - c)."""

    def __init__(self, center):
        self.center = np.array(center, dtype=np.float64)
        if self.center.ndim != 1 or self.center.size == 0:
            raise ShapeError("center must be a non-empty vector")
        self.center.setflags(write=False)

    @property
    def d(self) -> int:
        return self.center.size

    def _value_and_gradient(self, coords):
        delta = coords - self.center
        return float(delta @ delta), 2.0 * delta


class FonsecaFlemingBranch(EnergyModel):
    """One branch of the classic two-objective benchmark with a non-convex front.

    f(x) = 1 - exp(-sum_i (x_i - s/sqrt(n))^2) for sign s in {+1, -1}; the
    trade-off set is the diagonal segment x_1 = ... = x_n in [-1/sqrt(n), 1/sqrt(n)].
    """

    def __init__(self, sign: int, n: int):
        if sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")
        if n < 1:
            raise ShapeError("n must be >= 1")
        self.sign = sign
        self.n = n
        self.center = np.full(n, sign / math.sqrt(n))
        self.center.setflags(write=False)

    @property
    def d(self) -> int:
        return self.n

    def _value_and_gradient(self, coords):
        delta = coords - self.center
        e = math.exp(-float(delta @ delta))
        return 1.0 - e, (2.0 * e) * delta


def _squash(v):
    return v * v / (1.0 + v * v)


def _squash_grad(v):
    w = 1.0 + v * v
    return 2.0 * v / (w * w)


class Zdt3Branch(EnergyModel):
    """Smooth, unconstrained variant of the disconnected-front benchmark.

    Coordinates pass through the squash s(v) = v^2/(1+v^2) in [0, 1), so
    Langevin chains stay well-posed on all of R^d. With t = s(x_1) and
    g = 1 + 9 * mean of squashed tail coordinates:
        branch 0: f = t
        branch 1: f = g - t * (1 + sin(10*pi*t))
    The sine term makes alternating t-intervals dominated, which disconnects
    the trade-off front exactly as in the classic formulation.
    """

    def __init__(self, index: int, d: int):
        if index not in (0, 1):
            raise ValueError("branch index must be 0 or 1")
        if d < 2:
            raise ShapeError("needs d >= 2")
        self.index = index
        self._d = d

    @property
    def d(self) -> int:
        return self._d

    def _value_and_gradient(self, coords):
        grad = np.zeros_like(coords)
        t = _squash(coords[0])
        if self.index == 0:
            grad[0] = _squash_grad(coords[0])
            return float(t), grad
        q = 9.0 / (self._d - 1)
        tail = coords[1:]
        g_val = 1.0 + q * float(np.sum(_squash(tail)))
        u = 10.0 * math.pi * t
        value = g_val - t * (1.0 + math.sin(u))
        grad[0] = -_squash_grad(coords[0]) * (1.0 + math.sin(u) + u * math.cos(u))
        grad[1:] = q * _squash_grad(tail)
        return float(value), grad


@dataclass(frozen=True)
class CdTrainConfig:
    """Contrastive-divergence training knobs.

    Negative chains run ``cd_steps`` of Langevin refinement with step size
    ``cd_eta`` and noise std ``cd_sigma`` (default sqrt(cd_eta)), starting
    from relaxed uniform-random sequences.
    """

    cd_steps: int
    lr: float
    epochs: int
    batch_size: int
    l2: float = 0.0
    seed: int = 0
    cd_eta: float = 0.1
    cd_sigma: float | None = None

    def __post_init__(self):
        if self.cd_steps < 1:
            raise ConfigError("cd_steps must be >= 1")
        if self.lr < 0:
            raise ConfigError("lr must be >= 0")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.l2 < 0:
            raise ConfigError("l2 must be >= 0")
        if not (self.cd_eta > 0):
            raise ConfigError("cd_eta must be positive")
        if self.cd_sigma is None:
            object.__setattr__(self, "cd_sigma", math.sqrt(self.cd_eta))
        elif self.cd_sigma < 0:
            raise ConfigError("cd_sigma must be >= 0")


def _one_hot_batch(tokens: np.ndarray, A: int) -> np.ndarray:
    n, L = tokens.shape
    X = np.zeros((n, L * A))
    X[np.arange(n)[:, None], np.arange(L) * A + tokens] = 1.0
    return X


def cd_train(
    model: PwmEnergy | MlpEnergy,
    data: Sequence[DiscreteSequence],
    cfg: CdTrainConfig,
) -> tuple[PwmEnergy | MlpEnergy, list[float]]:
    """Train a sequence energy by contrastive divergence.

    Each update descends the mean energy gap E(data) - E(negatives) plus an
    l2 penalty; negatives are Langevin refinements of uniform-random
    sequences. Returns a new model (the input is untouched) and the per-epoch
    mean gap. Deterministic given cfg.seed.
    """
    if not isinstance(model, (PwmEnergy, MlpEnergy)):
        raise TypeError("cd_train supports PwmEnergy and MlpEnergy models")
    if model.L is None or model.A is None:
        raise ShapeError("cd_train needs a sequence-kind model with L and A")
    data = list(data)
    if not data:
        raise ValueError("training data must be non-empty")
    L, A = model.L, model.A
    for i, seq in enumerate(data):
        if len(seq) != L or seq.alphabet_size != A:
            raise ShapeError(
                f"sequence {i} has (L={len(seq)}, A={seq.alphabet_size}), model needs ({L}, {A})"
            )

    rng = np.random.default_rng(cfg.seed)
    positives = _one_hot_batch(np.stack([s.tokens for s in data]), A)
    n = positives.shape[0]
    params = {k: np.array(v) for k, v in model.params().items()}
    current = model.with_params(params)
    history: list[float] = []

    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        epoch_losses = []
        for start in range(0, n, cfg.batch_size):
            batch = positives[order[start : start + cfg.batch_size]]
            b = batch.shape[0]
            neg = _one_hot_batch(rng.integers(0, A, size=(b, L)), A)
            for _ in range(cfg.cd_steps):
                neg = neg - (cfg.cd_eta / 2.0) * current._batch_gradients(neg)
                if cfg.cd_sigma > 0:
                    neg = neg + cfg.cd_sigma * rng.standard_normal(neg.shape)
            loss = float(current._batch_values(batch).mean() - current._batch_values(neg).mean())
            epoch_losses.append(loss)
            g_pos = current.batch_param_gradient(batch)
            g_neg = current.batch_param_gradient(neg)
            params = {
                k: params[k] - cfg.lr * (g_pos[k] - g_neg[k] + cfg.l2 * params[k])
                for k in params
            }
            current = model.with_params(params)
        history.append(float(np.mean(epoch_losses)))
    return current, history


def _model_header(model: PwmEnergy | MlpEnergy) -> dict:
    header = {
        "format_version": MODEL_FORMAT_VERSION,
        "d": model.d,
        "L": model.L,
        "A": model.A,
    }
    if isinstance(model, PwmEnergy):
        header.update(kind="pwm", H=None)
    elif isinstance(model, MlpEnergy):
        header.update(kind="mlp", H=model.H)
    else:
        raise ModelFormatError(f"cannot persist model type {type(model).__name__}")
    return header


def _model_params_flat(model: PwmEnergy | MlpEnergy) -> np.ndarray:
    if isinstance(model, PwmEnergy):
        return model.weights.reshape(-1)
    return np.concatenate(
        [model.w1.reshape(-1), model.b1, model.w2, np.array([model.b2])]
    )


def save_model(model: PwmEnergy | MlpEnergy, path) -> None:
    """Write a self-describing model file: header JSON + little-endian float64 params."""
    header_bytes = json.dumps(_model_header(model), sort_keys=True).encode("utf-8")
    params = _model_params_flat(model).astype("<f8")
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<Q", len(header_bytes)))
        fh.write(header_bytes)
        fh.write(params.tobytes())


def load_model(path) -> PwmEnergy | MlpEnergy:
    """Load a persisted model; the round-trip is bit-exact on every parameter."""
    blob = Path(path).read_bytes()
    if len(blob) < len(MODEL_MAGIC) + 8 or not blob.startswith(MODEL_MAGIC):
        raise ModelFormatError(f"{path}: not a model file (bad magic)")
    offset = len(MODEL_MAGIC)
    (header_len,) = struct.unpack_from("<Q", blob, offset)
    offset += 8
    if len(blob) < offset + header_len:
        raise ModelFormatError(f"{path}: truncated header")
    try:
        header = json.loads(blob[offset : offset + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"{path}: unreadable header ({exc})") from exc
    offset += header_len
    version = header.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise ModelFormatError(
            f"{path}: unsupported format_version {version!r}, expected {MODEL_FORMAT_VERSION}"
        )
    kind, d, L, A, H = (header.get(k) for k in ("kind", "d", "L", "A", "H"))
    if kind == "pwm":
        expected = L * A
    elif kind == "mlp":
        expected = H * d + H + H + 1
    else:
        raise ModelFormatError(f"{path}: unknown model kind {kind!r}")
    body = blob[offset:]
    if len(body) != expected * 8:
        raise ModelFormatError(
            f"{path}: expected {expected * 8} parameter bytes, file holds {len(body)} (truncated?)"
        )
    params = np.frombuffer(body, dtype="<f8")
    params = params.astype(np.float64)
    if kind == "pwm":
        model: PwmEnergy | MlpEnergy = PwmEnergy(params.reshape(L, A))
    else:
        w1 = params[: H * d].reshape(H, d)
        b1 = params[H * d : H * d + H]
        w2 = params[H * d + H : H * d + 2 * H]
        b2 = params[-1]
        model = MlpEnergy(w1, b1, w2, b2, L=L, A=A)
    if model.d != d:
        raise ModelFormatError(f"{path}: header d={d} disagrees with parameters")
    return model
