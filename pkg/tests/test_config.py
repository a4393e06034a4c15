from dataclasses import fields

import pytest

from codecontrast.config import RunConfig, load_config, parse_config
from codecontrast.encoder import ModelConfig
from codecontrast.errors import ConfigError
from codecontrast.pairgen import AsstConfig
from codecontrast.training import TrainConfig


def test_empty_config_gives_defaults():
    assert parse_config("") == RunConfig()
    assert load_config() == RunConfig()


def test_every_component_field_is_covered():
    keys = {f.name for f in fields(RunConfig)}
    assert {f.name for f in fields(TrainConfig)} <= keys
    assert {f.name for f in fields(ModelConfig)} <= keys
    assert {"l_min", "node_types", "sentinel", "max_tries"} <= keys
    assert {f.name for f in fields(AsstConfig)} - {"indivisible"} <= keys


def test_parse_values_and_comments():
    cfg = parse_config(
        """
        # a comment
        lam = 0.5      # trailing comment
        iterations = 2
        sentinel = yes
        node_types = for_statement, if_statement
        lr_adv = 2e-4
        """
    )
    assert cfg.lam == 0.5 and cfg.iterations == 2 and cfg.sentinel is True
    assert cfg.node_types == ("for_statement", "if_statement")
    assert cfg.lr_adv == 2e-4
    assert parse_config("lr_adv = none").lr_adv is None


def test_round_trip_through_text():
    cfg = parse_config("lam = 0.3\nsentinel = true\nlr_adv = 0.0002\nnode_types = while_statement")
    assert parse_config(cfg.to_text()) == cfg
    assert parse_config(RunConfig().to_text()) == RunConfig()


@pytest.mark.parametrize(
    "text, needle",
    [
        ("bogus = 1", "unknown key"),
        ("lam = 0.1\nlam = 0.2", "duplicate key"),
        ("iterations = two", "expects int"),
        ("sentinel = maybe", "expects bool"),
        ("just words", "expected key = value"),
        ("lam = 2.0", "lam"),
        ("d_model = 10\nn_heads = 4", "divisible"),
        ("negative_size = 9\ntop_k = 5", "negative_size"),
    ],
)
def test_bad_configs_rejected(text, needle):
    with pytest.raises(ConfigError, match=needle):
        parse_config(text)


def test_overrides_win_and_none_is_ignored(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("seed = 3\nl_min = 10\n")
    cfg = load_config(path, seed=9, l_min=None)
    assert cfg.seed == 9 and cfg.l_min == 10


def test_derived_component_configs():
    cfg = parse_config("lam = 0.4\nl_min = 12\nd_model = 32\ndraws = 2\nseed = 5")
    assert cfg.train_config().lam == 0.4 and cfg.train_config().seed == 5
    assert cfg.asst_config().l_min == 12 and cfg.asst_config().seed == 5
    assert cfg.pair_config().draws == 2
    assert cfg.model_overrides()["d_model"] == 32
