"""Small simulation builders shared by the engine, strategy and acceptance tests."""

from __future__ import annotations

import io

import numpy as np

from fedluck.data import Dataset
from fedluck.engine import DeviceState, SimulationSetup, Simulator
from fedluck.model import QuadraticSpec
from fedluck.profiler import DeviceProfile
from fedluck.strategies import AggregationPolicy, Trigger, UpdateRule


def zero_data(dim: int, n: int = 2) -> Dataset:
    """All-zero features: the quadratic model's loss is exactly ``0.5 * ||w||^2``."""
    return Dataset(np.zeros((n, dim)), np.zeros(n, dtype=np.int64), 1)


def quadratic_sim(
    profiles: list[DeviceProfile],
    policy: AggregationPolicy,
    time_budget: float,
    dim: int = 4,
    eta_l: float = 0.1,
    eta_g: float = 1.0,
    w0=None,
    seed: int = 0,
    trace: bool = False,
    keep_models: bool = False,
    max_rounds: int | None = None,
) -> Simulator:
    data = zero_data(dim)
    spec = QuadraticSpec(dim)
    devices = [
        DeviceState(i, p, data, np.random.default_rng([seed, i]))
        for i, p in enumerate(profiles)
    ]
    setup = SimulationSetup(
        model=spec,
        w0=np.linspace(1.0, 2.0, dim) if w0 is None else np.asarray(w0, dtype=np.float64),
        devices=devices,
        policy=policy,
        test=data,
        eta_l=eta_l,
        eta_g=eta_g,
        batch_size=None,
        time_budget=time_budget,
        max_rounds=max_rounds,
        trace=io.StringIO() if trace else None,
        keep_models=keep_models,
    )
    sim = Simulator(setup)
    sim.run()
    return sim


def periodic(T: float) -> AggregationPolicy:
    return AggregationPolicy(Trigger.PERIODIC, UpdateRule.MEAN_STEP, round_duration=T)


def parse_trace(text: str) -> list[tuple]:
    rows = []
    for line in text.splitlines():
        time, kind, dev, rnd, tau, nbytes = line.split("\t")
        rows.append((float(time), kind, dev, int(rnd), tau, int(nbytes)))
    return rows


def random_constant_devices(rng: np.random.Generator, n: int, T: float) -> list[DeviceProfile]:
    """Devices whose cycle spans from a fraction of a round to several rounds."""
    out = []
    for _ in range(n):
        k = int(rng.integers(1, 60))
        delta = float(rng.uniform(0.01, 1.0))
        alpha = float(rng.uniform(0.01, 0.2)) * T / k * rng.uniform(1, 10)
        beta = float(rng.uniform(0.1, 4.0)) * T
        out.append(DeviceProfile(alpha, beta, k, delta))
    return out
