"""``tfcnet`` command line: train, eval, forecast, gradcheck, params.

Exit codes: 0 ok, 1 check failed, 2 configuration error, 3 data error,
4 numerical divergence, 5 checkpoint/architecture digest mismatch.
"""
from __future__ import annotations

import argparse
import contextlib
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import datasets
from .config import RunConfig, load_config
from .formats import CheckpointError, DigestMismatch, load_model, save_model, write_pgm
from .gradcheck import LAYER_KINDS, check_model, layer_case
from .model import (BUILTINS, PUBLISHED_WEIGHTS, ConfigError, ModelSpec, TfcModel, builtin_spec,
                    count_parameters, tiny_classifier_spec, tiny_spec)
from .tensor import NonFiniteError
from .training import Adam, DivergenceError, TrainConfig, evaluate, persistence_baseline, train

log = logging.getLogger("tfcnet")

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGED, EXIT_DIGEST = range(6)


class DataFailure(Exception):
    pass


# ------------------------------------------------------------------ data

def load_task_data(cfg: RunConfig, full_test: bool = False) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """``{split: (inputs, targets)}`` for the configured task."""
    path = cfg.data.path
    if not path:
        raise DataFailure("data.path is not set")
    if not Path(path).exists():
        raise DataFailure(f"data path not found: {path}")
    d = cfg.data
    limits = {"train": d.train_limit, "val": d.val_limit, "test": d.test_limit}
    try:
        if cfg.task == "forecast-mnist":
            raw = datasets.load_npy(path)
            splits = datasets.window_moving_mnist(raw, d.horizon, d.split_seed,
                                                  limits={k: v for k, v in limits.items() if v is not None})
            return {k: (v.inputs, v.targets) for k, v in splits.items()}
        if cfg.task == "forecast-jsb":
            splits = datasets.window_jsb(datasets.load_jsb_json(path), n_train=d.train_chorales,
                                         split_seed=d.split_seed)
            out = {k: (v.inputs, v.targets) for k, v in splits.items()}
            if full_test:
                out["test"] = out["test_full"]
            for k, n in limits.items():
                if n is not None:
                    out[k] = (out[k][0][:n], out[k][1][:n])
            return out
        x_tr, y_tr, x_te, y_te = datasets.load_cifar10(path, d.train_limit)
        n_val = d.val_limit if d.val_limit is not None else max(1, len(x_tr) // 10)
        x_te, y_te = x_te[:d.test_limit], y_te[:d.test_limit]
        return {"train": (x_tr[n_val:], y_tr[n_val:]), "val": (x_tr[:n_val], y_tr[:n_val]),
                "test": (x_te, y_te)}
    except (datasets.DataError, OSError) as exc:
        raise DataFailure(str(exc)) from None


def _metric_kind(task: str) -> str:
    return {"forecast-mnist": "frames", "forecast-jsb": "piano", "classify-cifar10": "labels"}[task]


# ------------------------------------------------------------------ commands

def cmd_train(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.training.seed = args.seed
    if args.data is not None:
        cfg.data.path = args.data
    spec = cfg.model_spec()
    data = load_task_data(cfg)
    out = Path(args.out or cfg.output.dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.cfg").write_text(cfg.dumps(), encoding="utf-8")

    t = cfg.training
    model = TfcModel(spec, seed=t.seed, precision=t.precision)
    o = cfg.optimizer
    tc = TrainConfig(epochs=t.epochs, batch_size=t.batch_size, lr=o.lr, beta1=o.beta1, beta2=o.beta2,
                     eps=o.eps, seed=t.seed, horizon=1 if spec.classifier else cfg.data.horizon)
    opt = Adam(o.lr, o.beta1, o.beta2, o.eps)
    kind = _metric_kind(cfg.task)
    Xv, Yv = data["val"]
    metric = None
    if kind != "frames" and len(Xv):
        metric = lambda m: evaluate(m, Xv, Yv, kind, steps=1)["accuracy"]  # noqa: E731

    def on_best(m, optimizer, rec):
        save_model(out / "best.tfck", m, optimizer)
        log.info("epoch %d: new best validation loss %.6f", rec.epoch, rec.val_loss)

    X, Y = data["train"]
    report = train(model, X, Y, tc, validation=(Xv, Yv) if len(Xv) else None, metric=metric,
                   on_best=on_best, optimizer=opt)
    report.write_csv(out / "metrics.csv")
    save_model(out / "final.tfck", model, opt)
    print(f"wrote {out / 'final.tfck'} and {out / 'metrics.csv'} ({len(report.epochs)} epochs)")
    return EXIT_OK


def _format_metrics(label: str, metrics: dict[str, float]) -> list[str]:
    names = {"mse": "one-step mse", "accuracy": "accuracy", "loss": "cross-entropy"}
    lines = []
    for k, v in metrics.items():
        name = names.get(k) or k.replace("mse_", "").replace("step", "-step mse").replace("3-", "three-")
        lines.append(f"{label}{name}: {v:.6f}")
    return lines


def cmd_eval(args) -> int:
    cfg = load_config(args.config)
    if args.data is not None:
        cfg.data.path = args.data
    if args.horizon is not None:
        cfg.data.horizon = args.horizon
    spec = cfg.model_spec()
    model = load_model(args.checkpoint, spec=spec, precision=cfg.training.precision)
    data = load_task_data(cfg, full_test=args.full_test)
    X, Y = data[args.split]
    kind = _metric_kind(cfg.task)
    steps = None if spec.classifier else cfg.data.horizon
    print(f"split: {args.split} ({len(X)} samples)")
    for line in _format_metrics("", evaluate(model, X, Y, kind, steps=steps)):
        print(line)
    if args.baseline and not spec.classifier:
        for line in _format_metrics("baseline ", persistence_baseline(X, Y[:, :steps], kind)):
            print(line)
    return EXIT_OK


def _ordinal(i: int) -> str:
    return f"{i:02d}"


def cmd_forecast(args) -> int:
    model = load_model(args.checkpoint)
    spec = model.spec
    if spec.classifier:
        raise ConfigError("classifier checkpoints cannot forecast")
    T = spec.window
    truth = None
    if args.window is not None:
        window = datasets.load_npy(args.window)
    else:
        raw = datasets.load_npy(args.data)
        if raw.ndim != 4:
            raise DataFailure(f"expected (frames, sequences, H, W), got shape {raw.shape}")
        if not 0 <= args.index < raw.shape[1]:
            raise DataFailure(f"index {args.index} out of range [0, {raw.shape[1]})")
        seq = datasets.rescale_u8(raw[:, args.index]) if raw.dtype == np.uint8 else raw[:, args.index]
        window = seq[:T]
        truth = seq[T:T + args.k]
    if window.dtype == np.uint8:
        window = datasets.rescale_u8(window)
    if window.shape == (T, *spec.spatial):
        window = window[..., None]
    if window.shape != (T, *spec.frame_shape()):
        raise DataFailure(f"window shape {window.shape} does not match the model input {(T, *spec.frame_shape())}")
    preds = model.forecast_serial(window[None].astype(model.dtype), args.k)[0]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i in range(args.k):
        write_pgm(out / f"pred_{_ordinal(i + 1)}.pgm", preds[i])
        if truth is not None and i < len(truth):
            write_pgm(out / f"truth_{_ordinal(i + 1)}.pgm", truth[i])
    print(f"wrote {args.k} forecast frame(s) to {out}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    reports = []
    if args.layer:
        tol = 1e-4 if args.tolerance is None else args.tolerance
        kinds = LAYER_KINDS if args.layer == "all" else (args.layer,)
        for kind in kinds:
            reports.append((kind, layer_case(kind, tol, args.seed)))
    else:
        tol = 1e-3 if args.tolerance is None else args.tolerance
        base = builtin_spec(args.model)
        if args.tiny:
            spec = tiny_classifier_spec() if base.classifier else tiny_spec(base.dimension, base.incriminator.primed)
        else:
            spec = base.scaled(args.feature_scale)
        model = TfcModel(spec, seed=args.seed, precision=64)
        rng = np.random.default_rng(args.seed)
        window = rng.uniform(-1, 1, (args.batch, spec.window, *spec.frame_shape()))
        reports.append((spec.name, check_model(model, window, horizon=args.horizon, tolerance=tol,
                                               max_entries=args.max_entries, seed=args.seed)))
    ok = True
    for name, rep in reports:
        print(f"== {name}")
        print(rep.table())
        ok &= rep.passed
    print(f"gradcheck {'PASS' if ok else 'FAIL'} (tolerance {tol:g})")
    return EXIT_OK if ok else EXIT_CHECK


def params_table(spec: ModelSpec, reference: int | None = None) -> str:
    counts = count_parameters(spec)
    width = max(len(k) for k in counts)
    lines = [f"{'layer':<{width}}  {'weights':>10}"]
    lines += [f"{k:<{width}}  {v:>10,}" for k, v in counts.items()]
    total = sum(counts.values())
    lines.append(f"{'total':<{width}}  {total:>10,}")
    if reference:
        dev = 100.0 * (total - reference) / reference
        lines.append(f"{'published':<{width}}  {reference:>10,}")
        lines.append(f"{'deviation':<{width}}  {dev:>+9.1f}%")
    return "\n".join(lines)


def cmd_params(args) -> int:
    if args.spec:
        spec = RunConfig(model=RunConfig().model.__class__(spec=args.spec)).model_spec()
        reference = None
    else:
        spec = builtin_spec(args.model)
        reference = PUBLISHED_WEIGHTS.get(args.model) if args.feature_scale == 1 else None
    spec = spec.scaled(args.feature_scale)
    print(f"model {spec.name}")
    print(params_table(spec, reference))
    return EXIT_OK


# ------------------------------------------------------------------ entry

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tfcnet", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a model from a run config")
    t.add_argument("--config", required=True, help="key = value run config")
    t.add_argument("--seed", type=int, help="override training.seed")
    t.add_argument("--data", help="override data.path")
    t.add_argument("--out", help="override output.dir")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    e.add_argument("checkpoint")
    e.add_argument("--config", required=True, help="run config naming the model and data")
    e.add_argument("--data", help="override data.path")
    e.add_argument("--split", default="test", choices=("train", "val", "test"))
    e.add_argument("--horizon", type=int, help="forecast steps to score (serial chaining)")
    e.add_argument("--baseline", action="store_true", help="also print persistence baseline metrics")
    e.add_argument("--full-test", action="store_true", help="JSB: score the whole held-out corpus")
    e.set_defaults(func=cmd_eval)

    f = sub.add_parser("forecast", help="write forecast frames as PGM")
    f.add_argument("checkpoint")
    f.add_argument("--data", help="moving MNIST NPY (frames, sequences, H, W)")
    f.add_argument("--index", type=int, default=0, help="sequence index in --data")
    f.add_argument("--window", help="NPY holding one input window (T, H, W[, 1])")
    f.add_argument("-k", type=int, default=3, help="frames to forecast (default 3)")
    f.add_argument("--out", required=True, help="directory for pred_NN.pgm / truth_NN.pgm")
    f.set_defaults(func=cmd_forecast)

    g = sub.add_parser("gradcheck", help="finite-difference gradient check (64-bit)")
    src = g.add_mutually_exclusive_group(required=True)
    src.add_argument("--model", choices=sorted(BUILTINS))
    src.add_argument("--layer", choices=LAYER_KINDS + ("all",))
    g.add_argument("--tiny", action="store_true", help="check a small network of the model's family")
    g.add_argument("--feature-scale", type=float, default=1.0)
    g.add_argument("--tolerance", type=float, help="default 1e-4 for layers, 1e-3 for models")
    g.add_argument("--horizon", type=int, default=1, help="unrolled forecast steps (shared weights)")
    g.add_argument("--batch", type=int, default=2)
    g.add_argument("--max-entries", type=int, default=24, help="spot-check at most this many entries per tensor")
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=cmd_gradcheck)

    c = sub.add_parser("params", help="parameter counts per layer")
    c.add_argument("model", nargs="?", default="tfc-d2", choices=sorted(BUILTINS))
    c.add_argument("--spec", help="inline JSON model spec or a path to one")
    c.add_argument("--feature-scale", type=float, default=1.0)
    c.set_defaults(func=cmd_params)
    return p


@contextlib.contextmanager
def _thread_limit():
    value = os.environ.get("TFC_THREADS")
    if not value:
        yield
        return
    from threadpoolctl import threadpool_limits

    with threadpool_limits(limits=int(value)):
        yield


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with _thread_limit():
            return args.func(args)
    except DigestMismatch as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIGEST
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataFailure, datasets.DataError, CheckpointError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (DivergenceError, NonFiniteError) as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
