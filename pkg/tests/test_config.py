import pytest
from hypothesis import given, settings, strategies as st

from equicine.config import (ConfigError, DataConfig, RunConfig, load_config, parse_config, serialize_config,
                             sub_seed)
from equicine.train import TrainConfig
from equicine.unroll import UnrollConfig


def test_defaults():
    cfg = parse_config("")
    assert cfg == RunConfig()
    assert cfg.model.K == 5 and UnrollConfig().K == 10
    assert (cfg.data.n_train, cfg.data.n_val, cfg.data.n_test) == (50, 10, 10)
    assert (cfg.data.T, cfg.data.H, cfg.data.n_coils, cfg.data.R) == (8, 64, 4, 8.0)
    assert cfg.train.lr == 1e-3 and cfg.train.gamma == 0.95 and cfg.train.epochs == 50


def test_round_trip_of_defaults_and_edits():
    for cfg in (RunConfig(), parse_config("[model]\nK = 3\nshared_weights = yes\n[train]\ntrain_R = 4, 8, none\n")):
        assert parse_config(serialize_config(cfg)) == cfg


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), K=st.integers(1, 12), channels=st.integers(1, 16),
       lr=st.floats(1e-6, 1.0), gamma=st.floats(0.01, 1.0), flag=st.booleans(),
       R=st.lists(st.floats(1.0, 16.0), min_size=1, max_size=3),
       variant=st.sampled_from(["baseline", "2d-ecnn", "srec-prox", "srec-proxdc", "dun-sre"]))
def test_round_trip_property(seed, K, channels, lr, gamma, flag, R, variant):
    cfg = RunConfig(seed=seed, variant=variant, data=DataConfig(n_train=3, R=R[0]),
                    model=UnrollConfig(K=K, channels=channels, shared_weights=flag),
                    train=TrainConfig(lr=lr, gamma=gamma, train_R=tuple(R), shuffle=flag))
    assert parse_config(serialize_config(cfg)) == cfg


@pytest.mark.parametrize("text,needle", [
    ("[model]\nwidth = 3\n", "width"),
    ("[optimizer]\nlr = 1\n", "optimizer"),
    ("[run]\ncolour = red\n", "colour"),
    ("[run]\nvariant = resnet\n", "resnet"),
    ("[train]\nepochs = many\n", "train.epochs"),
    ("[model]\nK = 0\n", "K"),
    ("[data]\nH = 32\nW = 64\n", "square"),
    ("[train]\ngamma = 2\n", "gamma"),
    ("not an ini file", "malformed"),
])
def test_errors_name_the_offending_key(text, needle):
    with pytest.raises(ConfigError, match=needle):
        parse_config(text)


def test_load_config_reports_path(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "missing.cfg")
    bad = tmp_path / "bad.cfg"
    bad.write_text("[model]\nbogus = 1\n")
    with pytest.raises(ConfigError, match="bad.cfg"):
        load_config(bad)
    good = tmp_path / "good.cfg"
    good.write_text("[run]\nseed = 9\n")
    assert load_config(good).seed == 9


def test_sub_seeds_are_stable_and_distinct():
    assert sub_seed(0, "init") == sub_seed(0, "init")
    labels = ["init", "train", "data/train/0", "data/train/1", "data/test/0"]
    assert len({sub_seed(0, x) for x in labels}) == len(labels)
    assert sub_seed(0, "init") != sub_seed(1, "init")
