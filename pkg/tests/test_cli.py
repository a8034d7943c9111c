import json
from pathlib import Path
from typing import Generic, TypeVar

import numpy as np
import pandas as pd
import pytest
from polyfactory.factories import DataclassFactory
from polyfactory.pytest_plugin import register_fixture

from direal.artifacts import read_pgm
from direal.cli import ExperimentConfig, load_config, main, to_config_text
from direal.cli.config import build_config, parse_config_text
from direal.errors import ConfigurationError, NonFiniteLossError
from direal.train import REGULARIZER_MODES
from tests.idx_fixtures import random_digits, write_idx

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
QUICK = ["--set", "max_steps=6", "--set", "n_samples=256", "--set", "eval_every=2"]

T = TypeVar("T")


class CustomDataclassFactory(Generic[T], DataclassFactory[T]):
    __is_base_factory__ = True


@register_fixture
class ExperimentConfigFactory(CustomDataclassFactory[ExperimentConfig]):
    __model__ = ExperimentConfig

    @classmethod
    def lr(cls):
        return cls.__random__.uniform(1e-6, 1e-2)

    @classmethod
    def beta1(cls):
        return cls.__random__.uniform(0.0, 0.99)

    @classmethod
    def beta2(cls):
        return cls.__random__.uniform(0.0, 0.999)

    @classmethod
    def tau(cls):
        return cls.__random__.random()

    @classmethod
    def lambda_g(cls):
        return cls.__random__.uniform(0.0, 10.0)

    @classmethod
    def lambda_d(cls):
        return cls.__random__.uniform(0.0, 10.0)

    @classmethod
    def clip_value(cls):
        return cls.__random__.uniform(1e-3, 1.0)

    @classmethod
    def layer_selector(cls):
        if cls.__random__.random() < 0.5:
            return None
        return tuple(sorted(cls.__random__.sample(range(6), 2)))

    @classmethod
    def max_steps(cls):
        return cls.__random__.choice([None, 1, 500, 10000])

    @classmethod
    def checkpoint_every(cls):
        return cls.__random__.choice([None, 100])

    @classmethod
    def hidden_layers(cls):
        return cls.__random__.randint(1, 4)

    @classmethod
    def conv_blocks(cls):
        return cls.__random__.randint(2, 6)

    @classmethod
    def seed(cls):
        return cls.__random__.randint(0, 2**31)

    @classmethod
    def dataset(cls):
        return cls.__random__.choice(["ring", "grid"])

    @classmethod
    def ring_modes(cls):
        return cls.__random__.randint(2, 16)

    @classmethod
    def ring_radius(cls):
        return cls.__random__.uniform(0.5, 5.0)

    @classmethod
    def ring_sigma(cls):
        return cls.__random__.uniform(0.01, 0.5)

    @classmethod
    def grid_spacing(cls):
        return cls.__random__.uniform(0.5, 5.0)

    @classmethod
    def grid_sigma(cls):
        return cls.__random__.uniform(0.01, 0.5)

    @classmethod
    def images_path(cls):
        return None

    @classmethod
    def labels_path(cls):
        return None

    @classmethod
    def out_dir(cls):
        return Path("runs") / cls.__random__.choice(["ring8", "grid25", "sweep"])

    @classmethod
    def wandb_project(cls):
        return cls.__random__.choice(["direal", "direal-ablations"])


@pytest.mark.parametrize("_", range(10))
def test_config_text_round_trip(experiment_config_factory, _):
    cfg = experiment_config_factory.build()
    again = build_config(parse_config_text(to_config_text(cfg)))
    assert again == cfg


def test_unknown_key_reports_line(tmp_path):
    path = tmp_path / "bad.conf"
    path.write_text("# comment\ntau = 0.3\n\nlambda_x = 1.0\n")
    with pytest.raises(ConfigurationError, match="line 4: `lambda_x`") as info:
        load_config(path)
    assert info.value.line == 4


def test_invalid_value_reports_key_and_line():
    with pytest.raises(ConfigurationError) as info:
        build_config(parse_config_text("seed = 1\ntau = 1.5\n"))
    assert (info.value.key, info.value.line) == ("tau", 2)


def test_malformed_line():
    with pytest.raises(ConfigurationError, match="line 1"):
        parse_config_text("tau 0.3\n")


def test_overrides_and_flags_win(tmp_path):
    cfg = load_config(
        CONFIGS / "ring8.conf", ["tau=0.25", "layer_selector=1, 0"], seed=9, out_dir=tmp_path
    )
    assert cfg.tau == 0.25
    assert cfg.layer_selector == (0, 1)
    assert cfg.seed == 9
    assert cfg.out_dir == tmp_path.resolve()


def test_idx_dataset_requires_images():
    with pytest.raises(ConfigurationError, match="images_path"):
        build_config(parse_config_text("dataset = idx\n"))


@pytest.mark.parametrize("name", ["ring8.conf", "grid25.conf"])
def test_shipped_configs_load(name):
    cfg = load_config(CONFIGS / name)
    assert cfg.regularizer in REGULARIZER_MODES
    assert (cfg.tau, cfg.lambda_d, cfg.lambda_g) == (0.5, 1.0, 0.01)
    assert (cfg.lr, cfg.beta1, cfg.beta2, cfg.batch_size) == (1e-4, 0.0, 0.9, 64)
    assert (cfg.hidden_units, cfg.hidden_layers, cfg.latent_dim) == (256, 3, 32)


def test_shipped_image_config_loads(tmp_path):
    images = write_idx(tmp_path / "images.idx", random_digits(4))
    cfg = load_config(CONFIGS / "mnist.conf", [f"images_path={images}"])
    assert cfg.dataset == "idx"
    assert cfg.regularizer == "direal+batchnorm"
    assert cfg.conv_blocks == 5


# main() and exit codes


def test_missing_images_exit_code(tmp_path):
    argv = ["train", "--out", str(tmp_path), "--set", "dataset=idx"]
    assert main(argv + ["--set", f"images_path={tmp_path / 'missing.idx'}"]) == 2


def test_unreadable_config_exit_code(tmp_path):
    assert main(["train", "--config", str(tmp_path / "nope.conf")]) == 2


def test_gradcheck_exit_codes(tmp_path):
    assert main(["gradcheck", "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "gradcheck.jsonl").read_text().splitlines()
    assert all(json.loads(line)["passed"] for line in lines)
    assert main(["gradcheck", "--out", str(tmp_path), "--corrupt-gradient"]) == 1


def test_train_writes_identical_history(tmp_path):
    for run in ("a", "b"):
        argv = ["train", "--config", str(CONFIGS / "ring8.conf"), "--out", str(tmp_path / run)]
        assert main(argv + QUICK) == 0

    a, b = (tmp_path / run / "history.csv" for run in ("a", "b"))
    assert a.read_bytes() == b.read_bytes()
    history = pd.read_csv(a)
    assert history["step"].tolist() == [2, 4, 6]
    assert (tmp_path / "a" / "checkpoints" / "final.ckpt").exists()
    assert json.loads((tmp_path / "a" / "config.json").read_text())["seed"] == 0


def test_non_finite_run_writes_abort_state(tmp_path, monkeypatch):
    state = {"step": 41, "d_loss": float("nan"), "weight_norms": {"discriminator.0.weight": 3.5}}

    def diverge(*args, **kwargs):
        raise NonFiniteLossError("non-finite discriminator loss at step 42", state=state)

    monkeypatch.setattr("direal.cli.commands.train", diverge)
    assert main(["train", "--out", str(tmp_path)] + QUICK) == 1

    dumped = json.loads((tmp_path / "abort_state.json").read_text())
    assert dumped["step"] == 41
    assert dumped["weight_norms"] == {"discriminator.0.weight": 3.5}
    assert "d_loss" in dumped
    assert not (tmp_path / "checkpoints" / "final.ckpt").exists()


def test_eval_is_reproducible(tmp_path):
    base = ["--out", str(tmp_path)] + QUICK
    assert main(["train"] + base) == 0
    assert main(["eval"] + base) == 0
    first = (tmp_path / "eval.jsonl").read_text()
    assert main(["eval"] + base) == 0
    assert (tmp_path / "eval.jsonl").read_text() == first

    summary, *layers = (json.loads(line) for line in first.splitlines())
    assert summary["kind"] == "summary"
    assert summary["n_modes"] == 8
    assert 0 <= summary["covered"] <= 8
    assert {layer["player"] for layer in layers} == {"discriminator", "generator"}


def test_dump_point_samples(tmp_path):
    base = ["--out", str(tmp_path)] + QUICK
    assert main(["train"] + base) == 0
    assert main(["dump-samples", "-n", "5", "--samples-out", str(tmp_path / "pts")] + base) == 0
    points = pd.read_csv(tmp_path / "pts.csv")
    assert list(points.columns) == ["x", "y"]
    assert len(points) == 5


def test_dump_image_samples(tmp_path):
    images = write_idx(tmp_path / "images.idx", random_digits(16))
    base = ["--out", str(tmp_path), "--set", "dataset=idx", "--set", f"images_path={images}"]
    base += ["--set", "batch_size=8", "--set", "max_steps=2", "--set", "base_channels=4"]
    assert main(["train"] + base) == 0
    assert main(["dump-samples", "-n", "10", "--samples-out", str(tmp_path / "grid")] + base) == 0

    grid = read_pgm(tmp_path / "grid.pgm")
    assert grid.shape == (2 * 28, 8 * 28)
    # padding cells of the incomplete last row are black
    assert np.all(grid[28:, 2 * 28 :] == 0)
    header = (tmp_path / "grid.pgm").read_bytes()[:15]
    assert header.startswith(b"P5\n224 56\n255\n")


def test_compare_writes_table(tmp_path):
    argv = ["compare", "--out", str(tmp_path), "--seeds", "2", "--modes", "none,direal"]
    assert main(argv + QUICK) == 0
    table = pd.read_csv(tmp_path / "comparison.csv")
    assert list(table.columns) == ["seed", "mode", "J_D_tail_mean", "w_div", "covered", "hq_fraction"]
    assert table[["seed", "mode"]].values.tolist() == [
        [0, "none"],
        [0, "direal"],
        [1, "none"],
        [1, "direal"],
    ]


def test_compare_rejects_unknown_mode(tmp_path):
    with pytest.raises(SystemExit):
        main(["compare", "--out", str(tmp_path), "--modes", "none,dropout"])
