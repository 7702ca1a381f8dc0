"""Acceptance gate. Every test prints one ``[criterion N] PASS|FAIL`` line.

The corpus-backed criteria read their data from environment variables:

* ``TFC_MNIST_NPY``  moving MNIST ``.npy`` (20, 10000, 64, 64) uint8
* ``TFC_JSB_JSON``   JSB chorales in the JSON layout read by ``load_jsb_json``
* ``TFC_CIFAR_DIR``  directory with the CIFAR-10 binary batches

Without the data those criteria fail; they are not skipped.
"""
import math
import time

import numpy as np
import pytest

from helpers import NPY_2x2_U8, moving_digits, small_forecaster
from tfcnet.cli import main
from tfcnet.datasets import data_path, load_cifar10, load_cifar10_batch, load_jsb_json, load_npy, save_npy
from tfcnet.formats import frame_to_u8, load_checkpoint, load_model, pgm_bytes, save_checkpoint, save_model
from tfcnet.gradcheck import LAYER_KINDS, check_model, layer_case
from tfcnet.model import (BUILTINS, PUBLISHED_WEIGHTS, TfcModel, build_parallel, builtin_spec, count_parameters,
                          fold_trace, tiny_classifier_spec, tiny_spec)
from tfcnet.protocols import cifar_protocol, jsb_protocol, mnist_protocol
from tfcnet.training import Adam, jsb_accuracy, threshold_binarize, train_step

pytestmark = pytest.mark.acceptance


def verdict(capsys, number, ok, detail):
    with capsys.disabled():
        print(f"\n[criterion {number}] {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, detail


def window_for(spec, batch=2, seed=0, dtype=np.float64):
    return np.random.default_rng(seed).uniform(-1, 1, (batch, spec.window, *spec.frame_shape())).astype(dtype)


def test_criterion_1_gradients(capsys):
    t0 = time.perf_counter()
    layer_errs = {kind: layer_case(kind, tolerance=1e-4).max_error for kind in LAYER_KINDS}
    composites = {}
    for dim, primed, seed in [(1, False, 0), (2, False, 0), (2, True, 3)]:
        spec = tiny_spec(dim, primed)
        for horizon in (1, 3):
            model = TfcModel(spec, seed=seed, precision=64)
            rep = check_model(model, window_for(spec, seed=seed), horizon=horizon, tolerance=1e-3, seed=seed)
            composites[f"{spec.name}/k{horizon}"] = rep.max_error
    clf = TfcModel(tiny_classifier_spec(), seed=0, precision=64)
    x = np.random.default_rng(0).uniform(-1, 1, (3, 6, 5, 3))
    composites["tiny-classifier"] = check_model(clf, x, tolerance=1e-3, max_entries=None).max_error
    seconds = time.perf_counter() - t0
    ok = (max(layer_errs.values()) < 1e-4 and max(composites.values()) < 1e-3 and seconds < 300)
    verdict(capsys, 1, ok, f"{len(layer_errs)} layer kinds max {max(layer_errs.values()):.2e} (<1e-4), "
                           f"{len(composites)} composites max {max(composites.values()):.2e} (<1e-3), "
                           f"{seconds:.1f}s (<300s)")


def ceil_trace(window, cells):
    out = [window]
    for c in cells:
        out.append(math.ceil(math.ceil(out[-1] / c.s1) / c.s2))
    return out


def test_criterion_2_fold_and_shapes(capsys):
    problems = []
    for name in sorted(BUILTINS):
        spec = builtin_spec(name)
        trace = fold_trace(spec)
        if trace != ceil_trace(spec.window, spec.block.cells):
            problems.append(f"{name} trace {trace}")
        if trace[-1] != (2 if spec.classifier else 1):
            problems.append(f"{name} folds to {trace[-1]}")
    if fold_trace(builtin_spec("tfc-d2")) != [10, 10, 3, 1]:
        problems.append("tfc-d2 trace")
    if fold_trace(builtin_spec("tfc-d1")) != [10, 10, 10, 5, 3, 2, 1]:
        problems.append("tfc-d1 trace")
    for name in ("tfc-d2", "tfc-d2p", "tfc-d1", "tfc-d1-cifar"):
        spec = builtin_spec(name)
        w = window_for(spec, batch=1, dtype=np.float32)
        model = TfcModel(spec)
        if spec.classifier:
            shape, want = model.classify(w).shape, (1, spec.head[-1])
        else:
            shape, want = model.forecast_one(w).shape, (1, *spec.frame_shape())
        if shape != want:
            problems.append(f"{name} output {shape} != {want}")
    verdict(capsys, 2, not problems, "; ".join(problems) or
            f"{len(BUILTINS)} built-ins fold as ceil-division predicts; output shapes hold")


BANDS = {"tfc-d2": 0.05, "tfc-d2p": 0.05, "tfc-d2-l": 0.15, "tfc-d2-lp": 0.15, "tfc-d1": 0.15}


def test_criterion_3_parameter_counts(capsys):
    parts, ok = [], True
    for name, band in BANDS.items():
        total = sum(count_parameters(builtin_spec(name)).values())
        dev = total / PUBLISHED_WEIGHTS[name] - 1
        ok &= abs(dev) <= band
        parts.append(f"{name} {total:,} vs {PUBLISHED_WEIGHTS[name]:,} ({dev:+.1%}, band {band:.0%})")
    verdict(capsys, 3, ok, "; ".join(parts))


def test_criterion_4_serial_parallel(capsys):
    identical = []
    for spec in (tiny_spec(1), tiny_spec(2), tiny_spec(2, primed=True), builtin_spec("tfc-d1")):
        model = TfcModel(spec, precision=64)
        w = window_for(spec)
        identical.append(np.array_equal(model.forecast_serial(w, 3), build_parallel(model, 3)(w)))
    spec = tiny_spec(2)
    rep = check_model(TfcModel(spec, precision=64), window_for(spec), horizon=3, tolerance=1e-3)
    ok = all(identical) and rep.passed
    verdict(capsys, 4, ok, f"serial == parallel(k=3) on {sum(identical)}/{len(identical)} models; "
                           f"shared-weight gradient rel err {rep.max_error:.2e} (<1e-3)")


def missing(capsys, number, env):
    verdict(capsys, number, False, f"dataset not available (set {env}); criterion not evaluated")


def test_criterion_5_moving_mnist(capsys):
    path = data_path("TFC_MNIST_NPY")
    if path is None:
        missing(capsys, 5, "TFC_MNIST_NPY")
    res = mnist_protocol(load_npy(path))
    verdict(capsys, 5, res.passed, res.summary())


def accuracy_units():
    def keys(*on):
        v = np.zeros(88, dtype=bool)
        v[list(on)] = True
        return v
    cases = [
        (keys(3, 5, 7), keys(3, 5, 7), 1.0),
        (keys(40), keys(), 0.0),
        (keys(1, 2, 3, 4), keys(1, 2, 3, 4, 50, 60), 0.8),
    ]
    ok = all(jsb_accuracy(T, P) == want for T, P, want in cases)
    ok &= threshold_binarize(np.array([-1.0, 1.0, -0.5])).tolist() == [False, True, False]
    return ok


def test_criterion_6_jsb(capsys):
    units = accuracy_units()
    path = data_path("TFC_JSB_JSON")
    if path is None:
        verdict(capsys, 6, False, f"accuracy unit examples {'match' if units else 'MISMATCH'}; "
                                  "dataset not available (set TFC_JSB_JSON); windowing and training not evaluated")
    res = jsb_protocol(load_jsb_json(path), epochs=10)
    verdict(capsys, 6, units and res.passed, f"accuracy units {'ok' if units else 'MISMATCH'}; {res.summary()}")


def test_criterion_7_cifar(capsys):
    path = data_path("TFC_CIFAR_DIR")
    if path is None:
        missing(capsys, 7, "TFC_CIFAR_DIR")
    res = cifar_protocol(*load_cifar10(path))
    verdict(capsys, 7, res.passed, res.summary())


def test_criterion_8_formats(tmp_path, capsys):
    results = {}
    p = tmp_path / "f.npy"
    p.write_bytes(NPY_2x2_U8)
    a = load_npy(p)
    save_npy(tmp_path / "g.npy", a)
    results["npy"] = a.tolist() == [[1, 2], [3, 4]] and (tmp_path / "g.npy").read_bytes() == NPY_2x2_U8

    spec = tiny_spec(2, primed=True)
    model, opt = TfcModel(spec, precision=64), Adam()
    train_step(model, window_for(spec), window_for(spec)[:, -1:], opt)
    save_model(tmp_path / "a.tfck", model, opt)
    opt2 = Adam()
    again = load_model(tmp_path / "a.tfck", spec=spec, optimizer=opt2)
    save_model(tmp_path / "b.tfck", again, opt2)
    same = all(np.array_equal(v, again.named_params()[k]) for k, v in model.named_params().items())
    results["checkpoint"] = same and (tmp_path / "a.tfck").read_bytes() == (tmp_path / "b.tfck").read_bytes()
    tensors = {"x": np.arange(6, dtype=np.int32).reshape(2, 3), "y": np.array([0.1], np.float32)}
    save_checkpoint(tmp_path / "c.tfck", tensors, "d")
    back, digest = load_checkpoint(tmp_path / "c.tfck")
    results["checkpoint dtypes"] = digest == "d" and all(
        np.array_equal(back[k], v) and back[k].dtype == v.dtype for k, v in tensors.items())

    frame = np.full((2, 3), -1.0)
    frame[0, 1], frame[1, 2] = 0.0, 1.0
    results["pgm"] = pgm_bytes(frame) == b"P5 3 2 255\n" + bytes([0, 128, 0, 0, 0, 255])
    results["pgm mapping"] = frame_to_u8(np.array([-1.0, 0.0, 1.0])).tolist() == [0, 128, 255]

    rec = bytearray(3073)
    rec[0], rec[1], rec[1 + 1024], rec[3072] = 7, 255, 128, 10
    (tmp_path / "r.bin").write_bytes(bytes(rec))
    images, labels = load_cifar10_batch(tmp_path / "r.bin", raw=True)
    results["cifar record"] = (labels.tolist() == [7] and images[0, 0, 0].tolist() == [255, 128, 0]
                               and images[0, 31, 31].tolist() == [0, 0, 10])
    bad = [k for k, ok in results.items() if not ok]
    verdict(capsys, 8, not bad, f"failed: {', '.join(bad)}" if bad else
            f"{len(results)} round-trips byte-exact ({', '.join(results)})")


def test_criterion_9_determinism(tmp_path, capsys):
    import json

    save_npy(tmp_path / "mm.npy", moving_digits(30, frames=11, size=16))
    (tmp_path / "spec.json").write_text(json.dumps(small_forecaster().to_dict()))
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"task = forecast-mnist\nmodel.spec = {tmp_path / 'spec.json'}\ntraining.epochs = 3\n"
                   f"training.batch_size = 8\ntraining.precision = 64\ntraining.seed = 11\n"
                   f"data.path = {tmp_path / 'mm.npy'}\n")
    codes = [main(["train", "--config", str(cfg), "--out", str(tmp_path / r)]) for r in ("a", "b")]
    # the trailing wall-clock seconds column is the only non-deterministic field
    rows = [[r.rsplit(",", 1)[0] for r in (tmp_path / d / "metrics.csv").read_text().splitlines()] for d in "ab"]
    same_ckpt = (tmp_path / "a" / "final.tfck").read_bytes() == (tmp_path / "b" / "final.tfck").read_bytes()
    ok = codes == [0, 0] and rows[0] == rows[1] and len(rows[0]) == 4 and same_ckpt
    verdict(capsys, 9, ok, f"{len(rows[0]) - 1} epoch rows identical across two 64-bit runs "
                           f"(seconds column excluded); final checkpoints {'identical' if same_ckpt else 'DIFFER'}")
