import json
import subprocess
import sys

import numpy as np
import pytest

from helpers import cifar_records, moving_digits, small_cifar, small_forecaster, synthetic_chorales
from tfcnet.cli import main
from tfcnet.datasets import save_jsb_json, save_npy
from tfcnet.formats import load_checkpoint, read_pgm


@pytest.fixture
def mnist_run(tmp_path):
    data = tmp_path / "mm.npy"
    save_npy(data, moving_digits(30, frames=13, size=16))
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps(small_forecaster().to_dict()))

    def make(name="run.cfg", **extra):
        lines = {"task": "forecast-mnist", "model.spec": str(spec), "training.epochs": "2",
                 "training.batch_size": "8", "training.precision": "64", "optimizer.lr": "0.003",
                 "data.path": str(data), "output.dir": str(tmp_path / "out")}
        lines.update(extra)
        p = tmp_path / name
        p.write_text("".join(f"{k} = {v}\n" for k, v in lines.items()))
        return p

    return make


def test_train_writes_checkpoints_and_csv(mnist_run, tmp_path, capsys):
    assert main(["train", "--config", str(mnist_run())]) == 0
    out = tmp_path / "out"
    rows = (out / "metrics.csv").read_text().splitlines()
    assert rows[0] == "epoch,train_loss,val_loss,metric,seconds" and len(rows) == 3
    assert (out / "best.tfck").exists() and (out / "final.tfck").exists()
    tensors, _ = load_checkpoint(out / "final.tfck")
    assert any(k.startswith("__adam__/") for k in tensors)


def test_train_zero_epochs(mnist_run, tmp_path):
    assert main(["train", "--config", str(mnist_run(**{"training.epochs": "0"}))]) == 0
    out = tmp_path / "out"
    assert (out / "metrics.csv").read_text() == "epoch,train_loss,val_loss,metric,seconds\n"
    assert (out / "final.tfck").exists() and not (out / "best.tfck").exists()


def test_train_is_deterministic(mnist_run, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    cfg = mnist_run()
    assert main(["train", "--config", str(cfg), "--out", str(a)]) == 0
    assert main(["train", "--config", str(cfg), "--out", str(b)]) == 0
    strip = lambda p: [r.rsplit(",", 1)[0] for r in p.read_text().splitlines()]  # noqa: E731
    assert strip(a / "metrics.csv") == strip(b / "metrics.csv")
    assert (a / "final.tfck").read_bytes() == (b / "final.tfck").read_bytes()
    assert main(["train", "--config", str(cfg), "--out", str(tmp_path / "c"), "--seed", "9"]) == 0
    assert (a / "final.tfck").read_bytes() != (tmp_path / "c" / "final.tfck").read_bytes()


def test_missing_data_exit_3(mnist_run, capsys):
    assert main(["train", "--config", str(mnist_run(**{"data.path": "/no/such/file.npy"}))]) == 3
    assert "/no/such/file.npy" in capsys.readouterr().err


def test_bad_config_exit_2(tmp_path, capsys):
    p = tmp_path / "bad.cfg"
    p.write_text("training.epochs = lots\n")
    assert main(["train", "--config", str(p)]) == 2
    assert "config error" in capsys.readouterr().err


def test_divergence_exit_4(mnist_run, tmp_path):
    raw = moving_digits(30, frames=13, size=16).astype(np.float32)
    raw[:, :, 0, 0] = np.nan
    save_npy(tmp_path / "nan.npy", raw)
    assert main(["train", "--config", str(mnist_run(**{"data.path": str(tmp_path / "nan.npy")}))]) == 4


def test_eval_deterministic_with_baseline(mnist_run, tmp_path, capsys):
    cfg = mnist_run()
    main(["train", "--config", str(cfg)])
    capsys.readouterr()
    ckpt = str(tmp_path / "out" / "final.tfck")
    assert main(["eval", ckpt, "--config", str(cfg), "--baseline"]) == 0
    first = capsys.readouterr().out
    assert main(["eval", ckpt, "--config", str(cfg), "--baseline"]) == 0
    assert capsys.readouterr().out == first
    assert "one-step mse" in first and "baseline one-step mse" in first
    assert main(["eval", ckpt, "--config", str(cfg), "--horizon", "3"]) == 0
    assert "three-step mse" in capsys.readouterr().out


def test_eval_digest_mismatch_exit_5(mnist_run, tmp_path, capsys):
    cfg = mnist_run()
    main(["train", "--config", str(cfg)])
    other = tmp_path / "other.json"
    other.write_text(json.dumps(small_forecaster(name="x").scaled(2).to_dict()))
    cfg2 = mnist_run("other.cfg", **{"model.spec": str(other)})
    assert main(["eval", str(tmp_path / "out" / "final.tfck"), "--config", str(cfg2)]) == 5


def test_forecast_writes_pgm_pairs(mnist_run, tmp_path):
    cfg = mnist_run(**{"training.epochs": "0"})
    main(["train", "--config", str(cfg)])
    frames = tmp_path / "frames"
    assert main(["forecast", str(tmp_path / "out" / "final.tfck"), "--data", str(tmp_path / "mm.npy"),
                 "--index", "4", "-k", "3", "--out", str(frames)]) == 0
    names = sorted(p.name for p in frames.iterdir())
    assert names == ["pred_01.pgm", "pred_02.pgm", "pred_03.pgm", "truth_01.pgm", "truth_02.pgm", "truth_03.pgm"]
    assert (frames / "pred_01.pgm").read_bytes().startswith(b"P5 16 16 255\n")
    from helpers import moving_digits as md
    np.testing.assert_array_equal(read_pgm(frames / "truth_02.pgm"), md(30, frames=13, size=16)[11, 4])
    assert main(["forecast", str(tmp_path / "out" / "final.tfck"), "--data", str(tmp_path / "mm.npy"),
                 "--index", "30", "--out", str(frames)]) == 3


def test_forecast_from_window_file(mnist_run, tmp_path):
    main(["train", "--config", str(mnist_run(**{"training.epochs": "0"}))])
    save_npy(tmp_path / "w.npy", moving_digits(1, frames=10, size=16)[:, 0])
    out = tmp_path / "wf"
    assert main(["forecast", str(tmp_path / "out" / "final.tfck"), "--window", str(tmp_path / "w.npy"),
                 "-k", "2", "--out", str(out)]) == 0
    assert sorted(p.name for p in out.iterdir()) == ["pred_01.pgm", "pred_02.pgm"]


def test_jsb_task(tmp_path, capsys):
    data = tmp_path / "jsb.json"
    save_jsb_json(data, synthetic_chorales(12, length=(12, 16)))
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps(small_forecaster(spatial=(88,)).to_dict()))
    cfg = tmp_path / "jsb.cfg"
    cfg.write_text(f"task = forecast-jsb\nmodel.spec = {spec}\ntraining.epochs = 1\ntraining.precision = 64\n"
                   f"data.train_chorales = 6\ndata.path = {data}\noutput.dir = {tmp_path / 'o'}\n")
    assert main(["train", "--config", str(cfg)]) == 0
    rows = (tmp_path / "o" / "metrics.csv").read_text().splitlines()
    assert rows[1].split(",")[3] != ""  # accuracy column filled
    capsys.readouterr()
    assert main(["eval", str(tmp_path / "o" / "final.tfck"), "--config", str(cfg), "--full-test", "--baseline"]) == 0
    out = capsys.readouterr().out
    assert "accuracy" in out and "baseline accuracy" in out


def test_cifar_task(tmp_path, capsys):
    d = tmp_path / "cifar"
    d.mkdir()
    (d / "data_batch_1.bin").write_bytes(cifar_records(np.arange(20) % 10, seed=1))
    (d / "test_batch.bin").write_bytes(cifar_records(np.arange(6) % 10, seed=2))
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps(small_cifar().to_dict()))
    cfg = tmp_path / "c.cfg"
    cfg.write_text(f"task = classify-cifar10\nmodel.spec = {spec}\ntraining.epochs = 1\n"
                   f"training.batch_size = 8\ndata.path = {d}\noutput.dir = {tmp_path / 'o'}\n")
    assert main(["train", "--config", str(cfg)]) == 0
    capsys.readouterr()
    assert main(["eval", str(tmp_path / "o" / "final.tfck"), "--config", str(cfg)]) == 0
    assert "accuracy" in capsys.readouterr().out


@pytest.mark.parametrize("argv,code", [
    (["gradcheck", "--model", "tfc-d2", "--tiny"], 0),
    (["gradcheck", "--layer", "conv3d"], 0),
    (["gradcheck", "--layer", "conv3d", "--tolerance", "0"], 1),
    (["gradcheck", "--model", "tfc-d1-cifar", "--tiny"], 0),
])
def test_gradcheck_command(argv, code, capsys):
    assert main(argv) == code
    assert ("PASS" if code == 0 else "FAIL") in capsys.readouterr().out


@pytest.mark.parametrize("name,published,deviation", [
    ("tfc-d2", "447,000", "+1.0%"),
    ("tfc-d2p", "742,000", "+0.6%"),
    ("tfc-d1", "1,270,000", "+11.2%"),
])
def test_params_command(name, published, deviation, capsys):
    assert main(["params", name]) == 0
    out = capsys.readouterr().out
    assert published in out and deviation in out
    assert "cell0.conv1" in out and "total" in out


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "tfcnet", "params", "tfc-d2"], capture_output=True, text=True)
    assert res.returncode == 0 and "451,677" in res.stdout
