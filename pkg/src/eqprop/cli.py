"""Command-line front end.

Commands:

    gdu-check      run the update-versus-gradient protocol on one batch,
                   write curves.csv / summary.csv, gate on the rmse threshold
    export-curves  same pipeline and files, no gate
    train          run one (or both) training algorithms, write history
                   CSVs and checkpoints
    eval           score a checkpoint on a dataset split

Every file-writing command also writes manifest.json: the fully resolved
settings, data description, package version, and backend, with sorted keys
and no timestamps, so reruns of the same manifest are comparable
byte-for-byte.  The final stdout line of a successful command is
`RESULT {json}`.

Exit codes: 0 success, 1 threshold exceeded, 2 unusable configuration or
data, 3 diverged dynamics.  The digit directory comes from [run] data_dir
or the EQPROP_DATA_DIR environment variable.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__, ops
from .configs import ConfigError, PRESETS, require, resolve_settings
from .data import load_mnist, subset, toy_dataset
from .engine import DivergenceError
from .gdu import export_record, gdu_protocol, rmse, sawtooth_check, sign_agreement
from .models import Hyperparams, make_model
from .training import (
    TrainConfig,
    CheckpointError,
    checkpoint_load,
    checkpoint_save,
    evaluate,
    init_params,
    shape_input,
    train,
    write_history,
)

__all__ = ["main", "entrypoint", "cmd_gdu_check", "cmd_train", "cmd_eval"]

# toy test examples start this far into the stream, disjoint from any
# practically sized training range
TOY_TEST_START = 1_000_000
TOY_DEFAULT_TRAIN = 300
TOY_DEFAULT_TEST = 100


def _print_result(payload: dict) -> None:
    print("RESULT " + json.dumps(payload, sort_keys=True))


def _jsonable(value):
    if isinstance(value, tuple):
        return list(value)
    return value


def _build_model(settings):
    try:
        return make_model(
            settings["arch"],
            settings.get("activation"),
            settings.get("epsilon"),
            settings.get("clip", False),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _data_dir(settings) -> str:
    path = settings.get("data_dir") or os.environ.get("EQPROP_DATA_DIR")
    if not path:
        raise ConfigError(
            "digit data needs 'data_dir' (section [run]) or EQPROP_DATA_DIR"
        )
    return path


def _load_split(settings, split: str):
    source = settings["data"]
    take = settings.get("subset_train") if split == "train" else settings.get("subset_test")
    if source == "toy":
        if split == "train":
            return toy_dataset(settings["seed"], take or TOY_DEFAULT_TRAIN)
        return toy_dataset(settings["seed"], take or TOY_DEFAULT_TEST, start=TOY_TEST_START)
    if source == "mnist":
        try:
            ds = load_mnist(_data_dir(settings), split)
        except (FileNotFoundError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        if take is not None:
            if take > len(ds):
                raise ConfigError(
                    f"subset of {take} exceeds the {len(ds)} available {split} examples"
                )
            ds = subset(ds, take, settings["seed"])
        return ds
    raise ConfigError(f"unknown data source {source!r} (use 'mnist' or 'toy')")


def _write_manifest(out_dir: str, command: str, settings: dict, data_info: dict, outputs):
    manifest = {
        "command": command,
        "version": __version__,
        "backend": ops.backend_name(),
        "settings": {k: _jsonable(v) for k, v in settings.items()},
        "data": data_info,
        "outputs": sorted(outputs),
    }
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return path


# ---------------------------------------------------------------------------
# commands


def _gdu_core(args, gate: bool) -> int:
    command = "gdu-check" if gate else "export-curves"
    settings = resolve_settings(args.preset, args.config, _overrides(args))
    require(settings, ("arch", "T", "K", "beta"), command)
    if gate:
        require(settings, ("threshold",), command)
    model = _build_model(settings)
    seed, threads = settings["seed"], settings["threads"]

    train_ds = _load_split(settings, "train")
    b = min(settings["gdu_batch_size"], len(train_ds))
    if b < 1:
        raise ConfigError("gdu batch is empty; check subset_train / batch_size")
    batch = subset(train_ds, b, seed)
    x = shape_input(model, batch.x)
    hp = Hyperparams(
        settings["T"], settings["K"], settings["beta"], getattr(model, "epsilon", None)
    )
    params = init_params(model, seed)
    record = gdu_protocol(model, params, x, batch.y, hp, threads=threads)

    out_dir = args.out
    os.makedirs(out_dir, exist_ok=True)
    curves_path, summary_path = export_record(record, out_dir, seed)

    scores = {}
    for name in record.layers():
        scores[name] = {
            "rmse": rmse(record.neural_ep[name], record.neural_bptt_neg[name]),
            "sign_agreement": sign_agreement(
                record.neural_ep[name], record.neural_bptt_neg[name]
            ),
        }
    for name in record.groups():
        scores[name] = {
            "rmse": rmse(record.param_ep[name], record.param_bptt_neg[name]),
            "sign_agreement": sign_agreement(
                record.param_ep[name], record.param_bptt_neg[name]
            ),
        }
    worst = max(s["rmse"] for s in scores.values())
    saw = sawtooth_check(record)

    print(f"{'series':>10}  {'rmse':>12}  {'sign_agreement':>14}")
    for name in list(record.layers()) + list(record.groups()):
        print(
            f"{name:>10}  {scores[name]['rmse']:12.5e}  "
            f"{scores[name]['sign_agreement']:14.3f}"
        )

    data_info = {"source": settings["data"], "batch_size": b, "split": "train"}
    _write_manifest(
        out_dir, command, settings, data_info,
        [os.path.basename(curves_path), os.path.basename(summary_path)],
    )

    payload = {
        "command": command,
        "scores": scores,
        "worst_rmse": worst,
        "residual": record.meta["residual"],
        "sawtooth": {"applicable": saw.applicable, "passed": saw.passed},
        "out": out_dir,
    }
    code = 0
    if gate:
        payload["threshold"] = settings["threshold"]
        payload["passed"] = bool(worst <= settings["threshold"]) and saw.passed
        if not payload["passed"]:
            code = 1
    payload["exit"] = code
    _print_result(payload)
    return code


def cmd_gdu_check(args) -> int:
    return _gdu_core(args, gate=True)


def cmd_export_curves(args) -> int:
    return _gdu_core(args, gate=False)


def _train_config(settings, algorithm: str) -> TrainConfig:
    try:
        cfg = TrainConfig(
            arch=settings["arch"],
            algorithm=algorithm,
            T=settings["T"],
            K=settings["K"],
            beta=settings["beta"],
            learning_rates=settings["learning_rates"],
            epochs=settings["epochs"],
            batch_size=settings["batch_size"],
            seed=settings["seed"],
            epsilon=settings.get("epsilon"),
            activation=settings.get("activation"),
            clip=settings.get("clip", False),
        )
        cfg.build_model()  # surfaces rate-count and architecture problems
        return cfg
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_train(args) -> int:
    settings = resolve_settings(args.preset, args.config, _overrides(args))
    require(
        settings,
        ("arch", "T", "K", "beta", "learning_rates", "epochs", "batch_size", "algorithm"),
        "train",
    )
    algorithm = settings["algorithm"]
    if algorithm not in ("ep", "bptt", "both"):
        raise ConfigError(f"algorithm must be ep, bptt, or both, got {algorithm!r}")
    algorithms = ("ep", "bptt") if algorithm == "both" else (algorithm,)

    train_ds = _load_split(settings, "train")
    test_ds = _load_split(settings, "test")
    if len(train_ds) == 0:
        raise ConfigError("training set is empty; check subset_train")

    out_dir = args.out
    os.makedirs(out_dir, exist_ok=True)
    threads = settings["threads"]

    first_cfg = _train_config(settings, algorithms[0])
    model, _ = first_cfg.build_model()
    shared_init = init_params(model, settings["seed"])

    outputs, final = [], {}
    for alg in algorithms:
        cfg = _train_config(settings, alg)
        suffix = f"_{alg}" if len(algorithms) > 1 else ""

        def log(row, alg=alg):
            print(
                f"[{alg}] epoch {row['epoch']}: "
                f"train_error {row['train_error']:.4f} "
                f"test_error {row['test_error']:.4f}"
            )

        params, history = train(
            cfg, train_ds, test_ds,
            initial_params=shared_init, start_epoch=0, threads=threads, log=log,
        )
        history_name = f"history{suffix}.csv"
        ckpt_name = f"checkpoint{suffix}.ckpt"
        write_history(os.path.join(out_dir, history_name), history)
        checkpoint_save(os.path.join(out_dir, ckpt_name), cfg, params, epoch=cfg.epochs)
        outputs += [history_name, ckpt_name]
        final[alg] = {
            "train_error": history[-1]["train_error"] if history else None,
            "test_error": history[-1]["test_error"] if history else None,
        }

    data_info = {
        "source": settings["data"],
        "train_examples": len(train_ds),
        "test_examples": len(test_ds),
    }
    _write_manifest(out_dir, "train", settings, data_info, outputs)
    _print_result({"command": "train", "final": final, "out": out_dir, "exit": 0})
    return 0


def cmd_eval(args) -> int:
    settings = resolve_settings(args.preset, args.config, _overrides(args))
    try:
        header, params = checkpoint_load(args.checkpoint)
    except (OSError, CheckpointError) as exc:
        raise ConfigError(str(exc)) from exc
    stored = dict(header["config"])
    stored["learning_rates"] = tuple(stored["learning_rates"])
    cfg = TrainConfig(**stored)
    model, _ = cfg.build_model()
    model.validate_params(params)

    # data generation follows the checkpoint's run, not the eval invocation
    settings["seed"] = cfg.seed
    ds = _load_split(settings, args.split)
    # relaxation horizon may be overridden to probe sensitivity to T
    T = settings["T"] if settings.get("T") is not None else cfg.T
    error = evaluate(model, params, ds, T, cfg.batch_size, settings["threads"])
    _print_result(
        {
            "command": "eval",
            "checkpoint": args.checkpoint,
            "epoch": header["epoch"],
            "split": args.split,
            "T": T,
            "examples": len(ds),
            "error": error,
            "exit": 0,
        }
    )
    return 0


# ---------------------------------------------------------------------------
# argument plumbing


def _overrides(args) -> dict:
    keys = ("seed", "threads", "algorithm", "epochs", "subset_train", "subset_test")
    return {k: getattr(args, k, None) for k in keys}


def _add_common(sub, out_dir=True):
    sub.add_argument("--preset", choices=sorted(PRESETS), help="named standard run")
    sub.add_argument("--config", help="INI file with [run]/[hyperparams]/[training]/[gdu]")
    if out_dir:
        sub.add_argument("--out", default="eqprop-out", help="output directory")
    sub.add_argument("--seed", type=int, help="run seed (default 0)")
    sub.add_argument("--threads", type=int, help="worker threads for batch chunks")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eqprop",
        description="equilibrium-propagation and truncated-backprop training "
        "for convergent recurrent networks",
    )
    parser.add_argument("--version", action="version", version=__version__)
    commands = parser.add_subparsers(dest="command", required=True)

    g = commands.add_parser("gdu-check", help="gate update-vs-gradient agreement")
    _add_common(g)
    g.add_argument("--subset-train", type=int, dest="subset_train",
                   help="restrict the pool the batch is drawn from")
    g.set_defaults(func=cmd_gdu_check)

    e = commands.add_parser("export-curves", help="write comparison curves without gating")
    _add_common(e)
    e.add_argument("--subset-train", type=int, dest="subset_train")
    e.set_defaults(func=cmd_export_curves)

    t = commands.add_parser("train", help="train with nudged updates or backprop")
    _add_common(t)
    t.add_argument("--algorithm", choices=("ep", "bptt", "both"))
    t.add_argument("--epochs", type=int)
    t.add_argument("--subset-train", type=int, dest="subset_train")
    t.add_argument("--subset-test", type=int, dest="subset_test")
    t.set_defaults(func=cmd_train)

    v = commands.add_parser("eval", help="score a checkpoint on a split")
    _add_common(v, out_dir=False)
    v.add_argument("--checkpoint", required=True)
    v.add_argument("--split", choices=("train", "test"), default="test")
    v.add_argument("--subset-test", type=int, dest="subset_test")
    v.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DivergenceError as exc:
        _print_result(
            {
                "command": args.command,
                "error": str(exc),
                "phase": exc.phase,
                "step": exc.step,
                "exit": 3,
            }
        )
        return 3


def entrypoint() -> None:
    sys.exit(main())
