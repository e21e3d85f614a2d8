"""Command-line entry point: ``cssc {generate,train,evaluate,convergence,ablate}``.

Exit codes: 0 success, 2 bad usage, 3 non-finite loss during training,
4 checkpoint/data mismatch, 5 an error bound was exceeded.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import data as datamod
from .convergence import convergence_study
from .core import RunConfig
from .nn.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .odernn import OdeRnnModel
from .train import EVAL_MODES, NonFiniteLoss, evaluate, train, write_metrics_csv

log = logging.getLogger("cssc")

EXIT_USAGE, EXIT_NONFINITE, EXIT_MISMATCH, EXIT_BOUND = 2, 3, 4, 5

_MODE_TO_SPACE = {"cssc": "output", "hidden": "hidden", "odernn": "none"}
ALPHA_SWEEP = (0.0, 1.0, 10.0, 100.0, 1000.0, 10000.0)
DERIV_SWEEP = {
    "cssc": {},
    "block_dot_o_ddot_o": {"block_dot_o": True, "block_ddot_o": True},
    "block_dot_o": {"block_dot_o": True},
    "block_ddot_o": {"block_ddot_o": True},
    "drop_ddot_o": {"drop_ddot_o": True},
}


class UsageError(Exception):
    pass


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, val = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = val
    return out


def _coerce(name: str, raw: str):
    kinds = {f.name: f.type for f in fields(RunConfig)}
    if name not in kinds:
        raise UsageError(f"unknown config key {name!r}")
    kind = str(kinds[name])
    if "bool" in kind:
        return raw.lower() in ("1", "true", "yes", "on")
    if "tuple" in kind:
        return tuple(int(v) for v in raw.replace(",", " ").split())
    if kind.startswith("int"):
        return int(raw)
    if kind.startswith("float"):
        return float(raw)
    if "None" in kind:
        return None if raw.lower() == "none" else int(raw)
    return raw


def build_config(args, overrides: dict) -> RunConfig:
    """Defaults < config file < explicit flags."""
    values = {}
    if getattr(args, "config", None):
        for k, v in read_config_file(args.config).items():
            values[k] = _coerce(k, v)
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return RunConfig(**values)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc


def _fraction_of(dataset) -> float:
    return float(np.mean([tr.observed.mean() for tr in dataset]))


def _load_data(path):
    try:
        return datamod.read_trajectories(path)
    except FileNotFoundError as exc:
        raise UsageError(f"no such data file: {path}") from exc


def cmd_generate(args) -> int:
    if args.kind == "toy":
        spec = datamod.ToySpec(n_trajectories=args.n_trajectories,
                               observation_fraction=args.fraction, seed=args.seed,
                               jitter=args.jitter)
        try:
            dataset = datamod.generate_toy(spec)
        except datamod.InvalidSpec as exc:
            raise UsageError(str(exc)) from exc
    else:
        counts = [int(c) for c in args.knots.split(",")]
        try:
            dataset = datamod.generate_smooth_suite(args.function, counts).levels
        except datamod.UnknownFunction as exc:
            raise UsageError(str(exc)) from exc
    datamod.write_trajectories(args.out, dataset)
    print(f"wrote {len(dataset)} trajectories to {args.out}", file=sys.stderr)
    return 0


def _train_config(args) -> RunConfig:
    space = _MODE_TO_SPACE[args.mode]
    return build_config(args, {
        "compensation_space": space, "alpha": args.alpha, "derivative_mode": args.deriv,
        "epochs": args.epochs, "seed": args.seed, "hidden_dim": args.hidden_dim,
        "substeps": args.substeps, "learning_rate": args.lr, "patience": args.patience,
    })


def _config_to_json(config: RunConfig) -> dict:
    return {f.name: getattr(config, f.name) for f in fields(RunConfig) if f.name != "extra"}


def _model_from_checkpoint(path, data_dim: int) -> OdeRnnModel:
    try:
        tensors, meta = load_checkpoint(path)
    except (CheckpointError, OSError) as exc:
        raise CheckpointError(str(exc)) from exc
    cfg = meta.get("config", {})
    cfg = {k: (tuple(v) if isinstance(v, list) else v) for k, v in cfg.items()}
    config = RunConfig(**cfg)
    model = OdeRnnModel.init(int(meta.get("data_dim", data_dim)), config).with_parameters(tensors)
    if model.data_dim != data_dim:
        raise CheckpointError(f"checkpoint expects {model.data_dim}-dimensional data, "
                              f"file has {data_dim}")
    return model


def cmd_train(args) -> int:
    config = _train_config(args)
    dataset = _load_data(args.data)
    train_set, val_set, _ = datamod.split_dataset(dataset, seed=args.seed)
    model = OdeRnnModel.init(dataset[0].dim, config)
    try:
        result = train(model, train_set, config, val_set)
    except NonFiniteLoss as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONFINITE
    ckpt = Path(args.ckpt)
    save_checkpoint(ckpt, result.model.parameters(), {
        "config": _config_to_json(config), "data_dim": dataset[0].dim, "mode": args.mode,
        "best_epoch": result.best_epoch})
    metrics = Path(args.metrics) if args.metrics else ckpt.with_suffix(".csv")
    write_metrics_csv(metrics, result.history)
    final = result.history[result.best_epoch - 1].val_mse if result.best_epoch else float("nan")
    print(f"initial val mse {result.initial_val_mse:.6g}, best val mse {final:.6g} "
          f"(epoch {result.best_epoch}); checkpoint {ckpt}", file=sys.stderr)
    return 0


def cmd_evaluate(args) -> int:
    modes = args.modes.split(",")
    bad = [m for m in modes if m not in EVAL_MODES]
    if bad:
        raise UsageError(f"unknown modes {bad}; choose from {EVAL_MODES}")
    per_mode = {}
    for item in args.ckpt_for or []:
        mode, _, path = item.partition("=")
        per_mode[mode] = path
    rows = []
    for data_path in args.data:
        dataset = _load_data(data_path)
        if args.split == "test":
            dataset = datamod.split_dataset(dataset, seed=args.seed)[2]
        fraction = _fraction_of(dataset)
        for mode in modes:
            model = None
            if mode != "spline_baseline":
                path = per_mode.get(mode, args.ckpt)
                if path is None:
                    print(f"error: mode {mode} needs --ckpt", file=sys.stderr)
                    return EXIT_MISMATCH
                try:
                    model = _model_from_checkpoint(path, dataset[0].dim)
                except CheckpointError as exc:
                    print(f"error: {exc}", file=sys.stderr)
                    return EXIT_MISMATCH
            rows.append({"mode": mode, "fraction": round(fraction, 6), "data": str(data_path),
                         "mse": repr(evaluate(model, dataset, mode))})
    out = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        writer = csv.DictWriter(out, fieldnames=["mode", "fraction", "data", "mse"])
        writer.writeheader()
        writer.writerows(rows)
    finally:
        if args.out:
            out.close()
    return 0


def cmd_convergence(args) -> int:
    counts = [int(c) for c in args.knots.split(",")]
    try:
        report = convergence_study(args.function, counts)
    except datamod.UnknownFunction as exc:
        raise UsageError(str(exc)) from exc
    text = json.dumps(report, indent=2)
    if args.out:
        Path(args.out).write_text(text)
    else:
        print(text)
    if not report["bounds_hold"]:
        print("error: an error bound ratio exceeded 1", file=sys.stderr)
        return EXIT_BOUND
    return 0


def cmd_ablate(args) -> int:
    dataset = _load_data(args.data)
    train_set, val_set, test_set = datamod.split_dataset(dataset, seed=args.seed)
    base = build_config(args, {"compensation_space": "output", "epochs": args.epochs,
                               "seed": args.seed, "derivative_mode": args.deriv})
    settings = []
    if args.sweep in ("alpha", "both"):
        settings += [(f"alpha={a:g}", {"alpha": a}) for a in ALPHA_SWEEP]
    if args.sweep in ("deriv", "both"):
        settings += list(DERIV_SWEEP.items())
    fraction = _fraction_of(dataset)
    rows = []
    for name, change in settings:
        config = base.with_(**change)
        model = OdeRnnModel.init(dataset[0].dim, config)
        try:
            result = train(model, train_set, config, val_set)
        except NonFiniteLoss as exc:
            print(f"error: {name}: {exc}", file=sys.stderr)
            return EXIT_NONFINITE
        rows.append({"setting": name, "alpha": config.alpha, "deriv": config.derivative_mode,
                     "fraction": round(fraction, 6),
                     "mse": repr(evaluate(result.model, test_set, "cssc"))})
        print(f"{name}: mse {rows[-1]['mse']}", file=sys.stderr)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=["setting", "alpha", "deriv", "fraction", "mse"])
        writer.writeheader()
        writer.writerows(rows)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cssc", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic dataset as JSON Lines")
    p.add_argument("--kind", choices=("toy", "smooth"), default="toy")
    p.add_argument("--fraction", type=float, default=0.5)
    p.add_argument("--n-trajectories", type=int, default=64)
    p.add_argument("--jitter", action="store_true")
    p.add_argument("--function", default="sin")
    p.add_argument("--knots", default="17,33,65,129,257")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    def model_flags(p):
        p.add_argument("--config", help="key=value file; flags take precedence")
        p.add_argument("--alpha", type=float)
        p.add_argument("--deriv", choices=("analytical", "numerical"))
        p.add_argument("--epochs", type=int)
        p.add_argument("--hidden-dim", type=int)
        p.add_argument("--substeps", type=int)
        p.add_argument("--lr", type=float)
        p.add_argument("--patience", type=int)
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--mode", choices=tuple(_MODE_TO_SPACE), default="cssc")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--metrics")
    model_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="MSE table for several inference modes")
    p.add_argument("--data", required=True, action="append")
    p.add_argument("--modes", default="cssc,odernn,spline_baseline")
    p.add_argument("--ckpt")
    p.add_argument("--ckpt-for", action="append", metavar="MODE=PATH")
    p.add_argument("--split", choices=("all", "test"), default="all")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("convergence", help="interpolation error against knot spacing")
    p.add_argument("--function", default="sin")
    p.add_argument("--knots", default="17,33,65,129,257")
    p.add_argument("--out")
    p.set_defaults(func=cmd_convergence)

    p = sub.add_parser("ablate", help="alpha and derivative-path sweeps")
    p.add_argument("--data", required=True)
    p.add_argument("--sweep", choices=("alpha", "deriv", "both"), default="alpha")
    p.add_argument("--out", required=True)
    model_flags(p)
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))  # exits with status 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
