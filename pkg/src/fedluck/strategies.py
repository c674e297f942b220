"""Server aggregation policies and per-device (k, delta) assignment.

==============  =====================  ==================  ==========================
kind            trigger                update rule         per-device (k, delta)
==============  =====================  ==================  ==========================
fedluck         periodic (T)           mean step           argmin of phi per device
fedper          periodic (T)           mean step           uniform fixed_k, fixed_delta
fedbuff         every K arrivals       mean step           uniform fixed_k, async_delta
fedasync        every arrival          staleness mix       uniform fixed_k, async_delta
fedavg_topk     all devices arrived    mean step           uniform fixed_k, fixed_delta
==============  =====================  ==================  ==========================

``optimize`` restricts FedLuck's search: ``"k"`` pins the rate to
``fixed_delta`` and only searches k; ``"delta"`` pins k to ``fixed_k``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError
from .profiler import OptimizerBounds, optimize_params

KINDS = ("fedluck", "fedper", "fedbuff", "fedasync", "fedavg_topk")
OPTIMIZE_MODES = ("joint", "k", "delta")


class Trigger(enum.Enum):
    PERIODIC = "periodic"
    COUNT = "count"
    PER_ARRIVAL = "per_arrival"
    BARRIER = "synchronous_barrier"


class UpdateRule(enum.Enum):
    MEAN_STEP = "mean_step"
    STALENESS_MIX = "staleness_weighted_mix"


@dataclass(frozen=True)
class StrategyConfig:
    kind: str = "fedluck"
    fixed_k: int = 30
    fixed_delta: float = 0.01
    async_delta: float = 1.0
    buffer_size: int = 3
    mix_alpha: float = 0.6
    staleness_exponent: float = 0.5
    prox: float = 0.0
    optimize: str = "joint"

    def violations(self) -> list[str]:
        problems = []
        if self.kind not in KINDS:
            return [f"strategy must be one of {KINDS}, got {self.kind!r}"]
        if self.kind != "fedluck" or self.optimize != "joint":
            if self.fixed_k < 1:
                problems.append(f"fixed_k must be >= 1, got {self.fixed_k}")
            if not 0 < self.fixed_delta <= 1:
                problems.append(f"fixed_delta must lie in (0, 1], got {self.fixed_delta}")
        if self.kind in ("fedbuff", "fedasync") and not 0 < self.async_delta <= 1:
            problems.append(f"async_delta must lie in (0, 1], got {self.async_delta}")
        if self.kind == "fedbuff" and self.buffer_size < 1:
            problems.append(f"buffer_size must be >= 1, got {self.buffer_size}")
        if self.kind == "fedasync":
            if not 0 < self.mix_alpha <= 1:
                problems.append(f"mix_alpha must lie in (0, 1], got {self.mix_alpha}")
            if self.staleness_exponent < 0:
                problems.append(f"staleness_exponent must be >= 0, got {self.staleness_exponent}")
        if self.prox < 0:
            problems.append(f"prox must be >= 0, got {self.prox}")
        if self.optimize not in OPTIMIZE_MODES:
            problems.append(f"optimize must be one of {OPTIMIZE_MODES}, got {self.optimize!r}")
        return problems


@dataclass(frozen=True)
class AggregationPolicy:
    trigger: Trigger
    update_rule: UpdateRule
    round_duration: float | None = None
    buffer_size: int | None = None
    mix_alpha: float = 0.6
    staleness_exponent: float = 0.5
    prox: float = 0.0


def fedasync_weight(mix_alpha: float, tau: int, a: float) -> float:
    """Mixing weight ``mix_alpha * (tau + 1) ** -a``, clamped to ``(0, 1]``.

    ``tau`` counts global updates applied since the device fetched its model
    (0 means the update is fresh).
    """
    if tau < 0:
        raise ValueError(f"tau must be >= 0, got {tau}")
    w = mix_alpha * (tau + 1.0) ** (-a)
    return float(min(1.0, max(w, np.finfo(float).tiny)))


def make_strategy(
    cfg: StrategyConfig,
    profiles: list[tuple[float, float]],
    bounds: OptimizerBounds,
) -> tuple[AggregationPolicy, list[tuple[int, float]]]:
    """Build the aggregation policy and the ``(k_i, delta_i)`` of every device.

    ``profiles`` holds the server's ``(alpha_i, beta_i)`` estimates; only
    FedLuck uses them. ``bounds.round_duration`` is the aggregation period of
    the periodic strategies.
    """
    problems = cfg.violations()
    if problems:
        raise ConfigError(problems)
    n = len(profiles)
    T = bounds.round_duration

    if cfg.kind == "fedluck":
        search = bounds
        if cfg.optimize == "k":
            search = replace(bounds, delta_min=cfg.fixed_delta, delta_max=cfg.fixed_delta)
        elif cfg.optimize == "delta":
            search = replace(bounds, k_min=cfg.fixed_k, k_max=cfg.fixed_k)
        params = [optimize_params(a, b, search) for a, b in profiles]
        return AggregationPolicy(Trigger.PERIODIC, UpdateRule.MEAN_STEP, round_duration=T), params
    if cfg.kind == "fedper":
        policy = AggregationPolicy(Trigger.PERIODIC, UpdateRule.MEAN_STEP, round_duration=T)
        return policy, [(cfg.fixed_k, cfg.fixed_delta)] * n
    if cfg.kind == "fedbuff":
        if cfg.buffer_size > n:
            # Buffered devices wait for the aggregation, so a larger K never fills.
            raise ConfigError(f"buffer_size {cfg.buffer_size} exceeds the {n} devices")
        policy = AggregationPolicy(Trigger.COUNT, UpdateRule.MEAN_STEP, buffer_size=cfg.buffer_size)
        return policy, [(cfg.fixed_k, cfg.async_delta)] * n
    if cfg.kind == "fedasync":
        policy = AggregationPolicy(
            Trigger.PER_ARRIVAL,
            UpdateRule.STALENESS_MIX,
            mix_alpha=cfg.mix_alpha,
            staleness_exponent=cfg.staleness_exponent,
            prox=cfg.prox,
        )
        return policy, [(cfg.fixed_k, cfg.async_delta)] * n
    policy = AggregationPolicy(Trigger.BARRIER, UpdateRule.MEAN_STEP)
    return policy, [(cfg.fixed_k, cfg.fixed_delta)] * n
