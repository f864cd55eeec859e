"""Command-line interface: sweep, improve, train, hv, edist.

Every command exits 0 on success; failures print a machine-readable JSON
error to stderr and exit 1 (argparse usage errors exit 2).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np
import yaml

from .core import AMINO_ALPHABET, ConfigError, ParetoEbmError, read_sequences
from .energy import CdTrainConfig, MlpEnergy, PwmEnergy, cd_train, load_model, save_model
from .metrics import ReferencePoint, hypervolume_exact, hypervolume_mc, summarize_edist
from .harness import load_config, improve_seeds, run_sweep, write_improvement_report

logger = logging.getLogger(__name__)

_TRAIN_KEYS = {
    "config_version", "model", "cd_steps", "lr", "epochs", "batch_size",
    "l2", "seed", "cd_eta", "cd_sigma", "alphabet",
}


def _read_points(path) -> np.ndarray:
    """One objective vector per line, comma or whitespace separated."""
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        parts = stripped.replace(",", " ").split()
        try:
            rows.append([float(v) for v in parts])
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: not a number ({exc})") from exc
    if not rows:
        raise ConfigError(f"{path}: no points found")
    width = len(rows[0])
    for i, row in enumerate(rows, start=1):
        if len(row) != width:
            raise ConfigError(f"{path}: row {i} has {len(row)} values, expected {width}")
    return np.array(rows)


def _cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, base_seed=args.seed)
    result = run_sweep(cfg, parallelism=args.parallelism)
    print(result.report_path)
    return 0


def _cmd_improve(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, base_seed=args.seed)
    seeds = read_sequences(args.seeds, cfg.alphabet)
    scorer = load_model(args.scorer)
    report = improve_seeds(cfg, seeds, scorer, parallelism=args.parallelism)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    report_path = out / "improve_report.json"
    write_improvement_report(report, report_path)
    for method, summary in sorted(report.per_method.items()):
        print(f"{method}: improved {summary['improved_fraction']:.0%} of seeds")
    print(report_path)
    return 0


def _load_train_config(path) -> tuple[dict, CdTrainConfig, str]:
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML ({exc})") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a mapping")
    unknown = sorted(set(raw) - _TRAIN_KEYS)
    if unknown:
        raise ConfigError(f"{path}: unknown config keys: {', '.join(unknown)}")
    if raw.get("config_version") != 1:
        raise ConfigError(f"{path}: config_version must be 1")
    model_spec = raw.get("model") or {}
    kind = model_spec.get("kind", "pwm")
    if kind not in ("pwm", "mlp"):
        raise ConfigError(f"{path}: model kind must be pwm or mlp, got {kind!r}")
    if kind == "mlp" and not model_spec.get("hidden"):
        raise ConfigError(f"{path}: mlp model needs a positive 'hidden' size")
    cfg = CdTrainConfig(
        cd_steps=int(raw.get("cd_steps", 5)),
        lr=float(raw.get("lr", 0.05)),
        epochs=int(raw.get("epochs", 10)),
        batch_size=int(raw.get("batch_size", 128)),
        l2=float(raw.get("l2", 0.0)),
        seed=int(raw.get("seed", 0)),
        cd_eta=float(raw.get("cd_eta", 0.1)),
        cd_sigma=float(raw["cd_sigma"]) if raw.get("cd_sigma") is not None else None,
    )
    return model_spec, cfg, str(raw.get("alphabet", AMINO_ALPHABET))


def _cmd_train(args) -> int:
    model_spec, cfg, alphabet = _load_train_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    data = read_sequences(args.data, alphabet)
    if not data:
        raise ConfigError(f"{args.data}: no sequences")
    L, A = len(data[0]), data[0].alphabet_size
    if model_spec.get("kind", "pwm") == "pwm":
        model = PwmEnergy.zeros(L, A)
    else:
        model = MlpEnergy.random(int(model_spec["hidden"]), L=L, A=A, seed=cfg.seed)
    trained, history = cd_train(model, data, cfg)
    save_model(trained, args.output)
    print(f"trained {model_spec.get('kind', 'pwm')} on {len(data)} sequences "
          f"(loss {history[0]:.4f} -> {history[-1]:.4f})")
    print(args.output)
    return 0


def _cmd_hv(args) -> int:
    V = _read_points(args.points)
    m = V.shape[1]
    ref_values = [float(v) for v in args.ref.split(",")] if args.ref else [1.0] * m
    if len(ref_values) != m:
        raise ConfigError(f"reference point has {len(ref_values)} entries, points have m={m}")
    reference = ReferencePoint(np.array(ref_values))
    if m <= 3:
        print(f"{hypervolume_exact(list(V), reference):.12g}")
    else:
        estimate, stderr = hypervolume_mc(
            list(V), reference, args.mc_samples, seed=args.seed or 0
        )
        print(f"{estimate:.12g} {stderr:.12g}")
    return 0


def _cmd_edist(args) -> int:
    samples = read_sequences(args.samples, args.alphabet)
    training = read_sequences(args.training, args.alphabet)
    mean, std = summarize_edist(samples, training)
    print(f"mean={mean:.12g} std={std:.12g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="paretoebm",
        description="Multi-objective energy-based sampling toolkit",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep", help="run a hyperparameter sweep from a YAML config")
    p.add_argument("config")
    p.add_argument("--seed", type=int, default=None, help="override the config base seed")
    p.add_argument("--parallelism", type=int, default=1, help="chain worker count")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("improve", help="improve seed sequences with every configured method")
    p.add_argument("config")
    p.add_argument("seeds", help="seed sequences, one per line")
    p.add_argument("scorer", help="scorer model file (lower energy is better)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--parallelism", type=int, default=1)
    p.set_defaults(func=_cmd_improve)

    p = sub.add_parser("train", help="train a sequence energy by contrastive divergence")
    p.add_argument("data", help="training sequences, one per line")
    p.add_argument("config", help="training YAML config")
    p.add_argument("output", help="output model file")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("hv", help="hypervolume of a point file against a reference")
    p.add_argument("points", help="one objective vector per line")
    p.add_argument("--ref", default=None, help="comma-separated reference point (default all ones)")
    p.add_argument("--mc-samples", type=int, default=1_000_000, help="Monte-Carlo samples for m > 3")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_hv)

    p = sub.add_parser("edist", help="edit-distance summary of samples against a training set")
    p.add_argument("samples")
    p.add_argument("training")
    p.add_argument("--alphabet", default=AMINO_ALPHABET)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_edist)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ParetoEbmError as exc:
        json.dump({"error": type(exc).__name__, "message": str(exc)}, sys.stderr)
        sys.stderr.write("\n")
        return 1
    except OSError as exc:
        json.dump({"error": type(exc).__name__, "message": str(exc)}, sys.stderr)
        sys.stderr.write("\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
