import math

import pytest

from fedluck.config import AUTO, ExperimentConfig, format_config, load_config, parse_config
from fedluck.errors import ConfigError
from fedluck.experiment import prepare, sample_heterogeneity


def test_empty_config_is_defaults():
    cfg = parse_config("")
    assert cfg == ExperimentConfig()
    assert cfg.round_duration == AUTO and cfg.n_devices == 10


def test_minimal_config_echo_roundtrips(tmp_path):
    path = tmp_path / "c.txt"
    path.write_text("strategy = fedbuff  # baseline\n\nseed = 3\ntargets = 0.5, 0.7\n")
    cfg = load_config(path)
    assert (cfg.strategy, cfg.seed, cfg.targets) == ("fedbuff", 3, (0.5, 0.7))
    echo = format_config(cfg, ["resolved"])
    assert echo.startswith("# resolved\n")
    assert "eta_l = 0.05" in echo
    assert parse_config(echo) == cfg


def test_delta_bounds_named():
    with pytest.raises(ConfigError) as exc:
        parse_config("delta_min = 0.5\ndelta_max = 0.1\n")
    assert any(v.startswith("delta_min") for v in exc.value.violations)


def test_all_violations_reported():
    text = "k_min = 0\neta_l = -1\nstrategy = nope\nmix_alpha = 3\n"
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    fields = {v.split(":")[0] for v in exc.value.violations}
    assert {"k_min/k_max", "eta_l", "strategy", "mix_alpha"} <= fields


def test_parse_errors_carry_line_numbers():
    text = "seed = 1\nbogus = 2\nno equals sign\nseed = 4\nrounds = many\n"
    with pytest.raises(ConfigError) as exc:
        parse_config(text, source="x.cfg")
    v = exc.value.violations
    assert len(v) == 4
    assert v[0].startswith("x.cfg:2:") and "unknown key" in v[0]
    assert v[1].startswith("x.cfg:3:")
    assert v[2].startswith("x.cfg:4:") and "duplicate" in v[2]
    assert v[3].startswith("x.cfg:5:") and "rounds" in v[3]


def test_missing_dataset_file(tmp_path):
    path = tmp_path / "c.txt"
    path.write_text("dataset = nowhere.csv\n")
    with pytest.raises(ConfigError, match="dataset"):
        load_config(path)


def test_dataset_relative_to_config(tmp_path):
    (tmp_path / "d.csv").write_text("a,b,label\n0,1,0\n1,0,1\n0,0,0\n1,1,1\n2,2,0\n")
    path = tmp_path / "c.txt"
    path.write_text("dataset = d.csv\nn_devices = 2\n")
    cfg = load_config(path)
    assert cfg.dataset_path() == tmp_path / "d.csv"
    assert f"dataset = {tmp_path / 'd.csv'}" in format_config(cfg)


def test_unreadable_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.txt")


def test_fedbuff_buffer_vs_devices():
    with pytest.raises(ConfigError, match="buffer_size"):
        parse_config("strategy = fedbuff\nn_devices = 2\n")


class TestHeterogeneity:
    def test_upload_time_examples(self):
        # 1e6 float32 parameters = 32e6 bits.
        for bw, beta in ((2.0, 16.0), (0.25, 128.0)):
            cfg = ExperimentConfig().with_updates(bandwidth_min_mbps=bw, bandwidth_max_mbps=bw, n_devices=3)
            assert [b for _, b in sample_heterogeneity(cfg, 0, 10**6)] == [beta] * 3

    def test_alpha_support(self):
        cfg = ExperimentConfig().with_updates(n_devices=500, alpha_base=0.02)
        profiles = sample_heterogeneity(cfg, 1, 100)
        alphas = [a for a, _ in profiles]
        assert all(0.02 <= a <= 0.08 for a in alphas)
        assert max(alphas) > 0.07 and min(alphas) < 0.03

    def test_deterministic(self):
        cfg = ExperimentConfig()
        assert sample_heterogeneity(cfg, 5, 100) == sample_heterogeneity(cfg, 5, 100)


def test_auto_period_three_devices():
    cfg = ExperimentConfig().with_updates(n_devices=3, synthetic_train=60, synthetic_test=20,
                                          hidden_layers=(4,))
    setup, table, T = prepare(cfg)
    k_mid = (cfg.k_min + cfg.k_max) / 2
    d_mid = math.sqrt(cfg.delta_min * cfg.delta_max)
    by_hand = sorted(k_mid * row["alpha_est"] + d_mid * row["beta_est"] for row in table)[1]
    assert T == pytest.approx(by_hand, rel=1e-15)
    assert setup.policy.round_duration == T
