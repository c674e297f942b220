import numpy as np
import pytest

from fedluck.config import ExperimentConfig
from fedluck.engine import device_round_duration
from fedluck.errors import ConfigError
from fedluck.experiment import metrics_csv, run_simulation
from fedluck.profiler import DeviceProfile, OptimizerBounds, optimize_params
from fedluck.strategies import (
    StrategyConfig,
    Trigger,
    UpdateRule,
    fedasync_weight,
    make_strategy,
)
from helpers import parse_trace, quadratic_sim

PROFILES = [(0.01 * (i + 1), 2.0 + i) for i in range(10)]
BOUNDS = OptimizerBounds(10, 60, 0.001, 0.5, 1.0)


def uniform_profiles(n, k, delta, seed=0):
    rng = np.random.default_rng(seed)
    return [DeviceProfile(float(rng.uniform(0.01, 0.04)), float(rng.uniform(0.2, 1.0)), k, delta) for _ in range(n)]


class TestMakeStrategy:
    def test_fedper_uniform(self):
        policy, params = make_strategy(StrategyConfig("fedper", fixed_k=30, fixed_delta=0.05), PROFILES, BOUNDS)
        assert params == [(30, 0.05)] * 10
        assert policy.trigger is Trigger.PERIODIC and policy.update_rule is UpdateRule.MEAN_STEP
        assert policy.round_duration == 1.0

    def test_fedluck_per_device(self):
        policy, params = make_strategy(StrategyConfig("fedluck"), PROFILES, BOUNDS)
        assert params == [optimize_params(a, b, BOUNDS) for a, b in PROFILES]
        assert policy.trigger is Trigger.PERIODIC

    def test_single_parameter_modes(self):
        _, only_k = make_strategy(StrategyConfig("fedluck", optimize="k", fixed_delta=0.02), PROFILES, BOUNDS)
        _, only_d = make_strategy(StrategyConfig("fedluck", optimize="delta", fixed_k=25), PROFILES, BOUNDS)
        assert {d for _, d in only_k} == {0.02}
        assert {k for k, _ in only_d} == {25}

    def test_async_baselines_uncompressed(self):
        for kind in ("fedbuff", "fedasync"):
            _, params = make_strategy(StrategyConfig(kind), PROFILES, BOUNDS)
            assert {d for _, d in params} == {1.0}

    def test_fedavg_topk(self):
        policy, params = make_strategy(StrategyConfig("fedavg_topk"), PROFILES, BOUNDS)
        assert policy.trigger is Trigger.BARRIER and params == [(30, 0.01)] * 10

    def test_violations(self):
        with pytest.raises(ConfigError) as exc:
            make_strategy(StrategyConfig("fedasync", fixed_k=0, async_delta=0, mix_alpha=2), PROFILES, BOUNDS)
        assert len(exc.value.violations) == 3

    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            make_strategy(StrategyConfig("fedprox"), PROFILES, BOUNDS)

    def test_buffer_larger_than_cohort(self):
        with pytest.raises(ConfigError):
            make_strategy(StrategyConfig("fedbuff", buffer_size=11), PROFILES, BOUNDS)


class TestFedAsyncWeight:
    @pytest.mark.parametrize("a", [0.0, 0.5, 1.0, 3.0])
    def test_fresh(self, a):
        assert fedasync_weight(0.6, 0, a) == 0.6

    def test_linear_decay(self):
        assert fedasync_weight(0.6, 3, 1.0) == pytest.approx(0.15, rel=1e-15)

    def test_sqrt_decay(self):
        assert fedasync_weight(0.6, 8, 0.5) == pytest.approx(0.2, rel=1e-15)

    def test_zero_exponent(self):
        assert {fedasync_weight(0.6, tau, 0.0) for tau in range(50)} == {0.6}

    def test_in_unit_interval(self):
        for tau in range(0, 10_000, 97):
            assert 0 < fedasync_weight(0.9, tau, 2.0) <= 1

    def test_negative(self):
        with pytest.raises(ValueError):
            fedasync_weight(0.6, -1, 0.5)


class TestEngineBehaviour:
    def test_fedbuff_every_third_arrival(self):
        policy, _ = make_strategy(StrategyConfig("fedbuff", buffer_size=3), PROFILES, BOUNDS)
        sim = quadratic_sim(uniform_profiles(10, 3, 1.0), policy, 20.0, trace=True)
        rows = parse_trace(sim.setup.trace.getvalue())
        arrivals = 0
        for i, r in enumerate(rows):
            if r[1] == "arrival":
                arrivals += 1
                fired = i + 1 < len(rows) and rows[i + 1][1] == "aggregate" and rows[i + 1][0] == r[0]
                assert fired == (arrivals % 3 == 0)
        assert len(sim.log) > 10
        assert all(len(e.entries) == 3 for e in sim.log)

    def test_fedavg_barrier(self):
        policy, _ = make_strategy(StrategyConfig("fedavg_topk"), PROFILES, BOUNDS)
        profiles = uniform_profiles(6, 3, 0.5)
        sim = quadratic_sim(profiles, policy, 30.0)
        slowest = max(device_round_duration(p) for p in profiles)
        assert sim.log[0].time == slowest
        for e in sim.log:
            assert len(e.entries) == 6
            assert {tau for _, _, tau, _ in e.entries} == {1}
        times = [e.time for e in sim.log]
        assert np.all(np.diff(times) > 0)

    @pytest.mark.parametrize("exponent", [0.0, 0.5, 2.0])
    def test_fedasync_convex_combination(self, exponent):
        mix, k, eta = 0.6, 3, 0.1
        cfg = StrategyConfig("fedasync", fixed_k=k, mix_alpha=mix, staleness_exponent=exponent)
        policy, _ = make_strategy(cfg, PROFILES, BOUNDS)
        sim = quadratic_sim(uniform_profiles(5, k, 1.0, seed=2), policy, 15.0, eta_l=eta, keep_models=True)
        versions = {t: w for t, _, w in sim.history}
        prev = versions[0]
        assert len(sim.log) > 20
        for entry in sim.log:
            (_, origin, tau, _), = entry.entries
            a = mix * float(tau) ** (-exponent)
            assert 0 < a <= 1
            submitted = versions[origin] * (1 - eta) ** k
            expected = (1 - a) * prev + a * submitted
            np.testing.assert_allclose(versions[entry.round], expected, rtol=1e-12, atol=1e-14)
            prev = versions[entry.round]


def test_collapsed_fedluck_is_fedper():
    base = ExperimentConfig().with_updates(rounds=15, synthetic_train=400, synthetic_test=200,
                                           hidden_layers=(16,), round_duration=0.01)
    luck = base.with_updates(strategy="fedluck", k_min=30, k_max=30, delta_min=0.05, delta_max=0.05)
    per = base.with_updates(strategy="fedper", fixed_k=30, fixed_delta=0.05, k_min=30, k_max=30,
                            delta_min=0.05, delta_max=0.05)
    a, b = run_simulation(luck), run_simulation(per)
    assert metrics_csv(a.records) == metrics_csv(b.records)
    assert a.simulator.server.global_model.tobytes() == b.simulator.server.global_model.tobytes()
