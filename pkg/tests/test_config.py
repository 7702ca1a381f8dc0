import pytest

from tfcnet.config import TASK_DEFAULTS, RunConfig, load_config, parse_config
from tfcnet.model import ConfigError, builtin_spec


@pytest.mark.parametrize("task,lr,batch,epochs", [
    ("forecast-mnist", 5e-4, 18, 50),
    ("forecast-jsb", 2e-3, 50, 50),
    ("classify-cifar10", 5e-4, 50, 450),
])
def test_task_defaults(task, lr, batch, epochs):
    cfg = parse_config(f"task = {task}\n")
    assert cfg.optimizer.lr == lr
    assert cfg.training.batch_size == batch and cfg.training.epochs == epochs
    assert cfg.model.name == TASK_DEFAULTS[task]["model"]


def test_parse_dotted_keys():
    cfg = parse_config("""
        # a comment
        task = forecast-mnist
        model.name = tfc-d2p
        model.feature_scale = 0.5
        optimizer.lr = 0.001
        training.epochs = 3
        training.precision = 64
        data.path = /tmp/x.npy
        data.horizon = 3
        data.train_limit = 32
        ; another comment
        output.dir = runs/a
    """)
    assert cfg.model.name == "tfc-d2p" and cfg.model.feature_scale == 0.5
    assert cfg.optimizer.lr == 0.001 and cfg.training.epochs == 3
    assert cfg.data.horizon == 3 and cfg.data.train_limit == 32 and cfg.data.val_limit is None
    assert cfg.output.dir == "runs/a"
    assert cfg.model_spec() == builtin_spec("tfc-d2p").scaled(0.5)


@pytest.mark.parametrize("text,match", [
    ("training.epochs = many", "cannot parse"),
    ("training.nope = 1", "unknown key"),
    ("bogus = 1", "unknown key"),
    ("just words", "key = value"),
    ("task = forecast-weather", "unknown task"),
    ("training.precision = 16", "precision"),
    ("data.horizon = 11", "horizon"),
    ("model.name = tfc-d9", "unknown built-in"),
    ("task = classify-cifar10\nmodel.name = tfc-d2", "does not fit"),
    ("optimizer.lr = 1\noptimizer.lr = 2", "duplicate"),
])
def test_config_errors(text, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(text)


def test_roundtrip_dump(tmp_path):
    cfg = parse_config("task = forecast-jsb\ntraining.seed = 7\ndata.path = /x.json\n")
    p = tmp_path / "c.cfg"
    p.write_text(cfg.dumps())
    again = load_config(p)
    assert again == cfg and again.digest() == cfg.digest()


def test_inline_spec(tmp_path):
    import json

    from tfcnet.model import tiny_spec

    spec = tiny_spec(1)
    p = tmp_path / "spec.json"
    p.write_text(json.dumps(spec.to_dict()))
    cfg = parse_config(f"model.spec = {p}\n")
    assert cfg.model_spec() == spec
    cfg = parse_config(f"model.spec = {json.dumps(spec.to_dict())}\n")
    assert cfg.model_spec() == spec


def test_missing_file():
    with pytest.raises(ConfigError):
        load_config("/nonexistent/run.cfg")


def test_for_task_unknown():
    with pytest.raises(ConfigError):
        RunConfig.for_task("nope")
