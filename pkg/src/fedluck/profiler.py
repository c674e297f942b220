"""Device profiling and the joint choice of local steps and compression rate.

A device that runs ``k`` local iterations at ``alpha`` seconds each and then
uploads a gradient compressed to rate ``delta`` (full upload takes ``beta``
seconds) needs ``k*alpha + delta*beta`` seconds per cycle. The factor
minimized here is::

    phi(k, delta) = ((k*alpha + delta*beta)^2 * (2 - delta) + T^2) / (T^2 * k * sqrt(delta))

with ``T`` the aggregation period. Larger ``k`` and ``delta`` shrink the
denominator but lengthen the cycle, which raises staleness in the numerator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, EstimationError


@dataclass(frozen=True)
class DeviceProfile:
    alpha: float
    beta: float
    k: int = 1
    delta: float = 1.0

    def __post_init__(self):
        problems = []
        if not self.alpha > 0:
            problems.append(f"alpha must be > 0, got {self.alpha}")
        if not self.beta > 0:
            problems.append(f"beta must be > 0, got {self.beta}")
        if self.k < 1:
            problems.append(f"k must be >= 1, got {self.k}")
        if not 0 < self.delta <= 1:
            problems.append(f"delta must lie in (0, 1], got {self.delta}")
        if problems:
            raise ConfigError(problems)


@dataclass(frozen=True)
class OptimizerBounds:
    k_min: int = 10
    k_max: int = 60
    delta_min: float = 0.001
    delta_max: float = 0.5
    round_duration: float = 1.0
    k_grid_step: int = 1
    delta_grid_points: int = 64

    def __post_init__(self):
        problems = self.violations()
        if problems:
            raise ConfigError(problems)

    def violations(self) -> list[str]:
        problems = []
        if not 1 <= self.k_min <= self.k_max:
            problems.append(f"need 1 <= k_min <= k_max, got k_min={self.k_min}, k_max={self.k_max}")
        if not 0 < self.delta_min <= self.delta_max <= 1:
            problems.append(
                f"need 0 < delta_min <= delta_max <= 1, got delta_min={self.delta_min}, delta_max={self.delta_max}"
            )
        if not self.round_duration > 0:
            problems.append(f"round_duration must be > 0, got {self.round_duration}")
        if self.k_grid_step < 1:
            problems.append("k_grid_step must be >= 1")
        if self.delta_grid_points < 1:
            problems.append("delta_grid_points must be >= 1")
        return problems

    def k_grid(self) -> np.ndarray:
        return np.arange(self.k_min, self.k_max + 1, self.k_grid_step)

    def delta_grid(self) -> np.ndarray:
        if self.delta_min == self.delta_max or self.delta_grid_points == 1:
            return np.array([self.delta_min])
        grid = np.geomspace(self.delta_min, self.delta_max, self.delta_grid_points)
        grid[0], grid[-1] = self.delta_min, self.delta_max
        return grid


def phi(k, delta, alpha, beta, round_duration):
    """Key convergence factor; broadcasts over numpy arrays."""
    delta = np.asarray(delta, dtype=np.float64)
    if np.any(delta <= 0) or np.any(delta > 1):
        raise ValueError("delta must lie in (0, 1]")
    if np.any(np.asarray(k) < 1):
        raise ValueError("k must be >= 1")
    if round_duration <= 0:
        raise ValueError("round_duration must be > 0")
    T2 = round_duration * round_duration
    cycle = k * alpha + delta * beta
    out = (cycle * cycle * (2.0 - delta) + T2) / (T2 * k * np.sqrt(delta))
    return out if out.ndim else float(out)


def phi_table(alpha: float, beta: float, bounds: OptimizerBounds) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(ks, deltas, values)`` with ``values[i, j] = phi(ks[i], deltas[j])``."""
    ks = bounds.k_grid()
    deltas = bounds.delta_grid()
    if ks.size == 0 or deltas.size == 0:
        raise ConfigError("empty optimization grid")
    values = phi(ks[:, None].astype(np.float64), deltas[None, :], alpha, beta, bounds.round_duration)
    return ks, deltas, values


def optimize_params(alpha: float, beta: float, bounds: OptimizerBounds) -> tuple[int, float]:
    """Grid argmin of ``phi`` for one device.

    Ties resolve to the smaller ``k``, then the smaller ``delta`` (first
    occurrence in k-major order).
    """
    ks, deltas, values = phi_table(alpha, beta, bounds)
    i, j = np.unravel_index(int(np.argmin(values)), values.shape)
    return int(ks[i]), float(deltas[j])


def auto_round_duration(alphas, betas, k_min: int, k_max: int, delta_min: float, delta_max: float) -> float:
    """Median device cycle time at the middle of the search box.

    The middle is ``k = (k_min + k_max) / 2`` and the geometric midpoint
    ``delta = sqrt(delta_min * delta_max)``, the center of the log-spaced
    rate grid.
    """
    k_mid = 0.5 * (k_min + k_max)
    d_mid = math.sqrt(delta_min * delta_max)
    return float(np.median(k_mid * np.asarray(alphas) + d_mid * np.asarray(betas)))


def estimate_profile(
    truth: DeviceProfile,
    probe_rounds: int,
    probe_deltas,
    noise: float = 0.0,
    rng=None,
) -> tuple[float, float]:
    """Simulated profiling of one device.

    ``alpha`` is the mean of ``probe_rounds`` timed local iterations. ``beta`` is
    the slope of an ordinary least-squares line through (rate, upload time)
    probes. With ``noise > 0`` every timing is multiplied by
    ``1 + noise * N(0, 1)``.
    """
    if probe_rounds < 1:
        raise EstimationError("probe_rounds must be >= 1")
    deltas = np.asarray(probe_deltas, dtype=np.float64)
    if np.unique(deltas).size < 2:
        raise EstimationError("need at least two distinct probe rates to fit beta")
    if not noise:
        # Exact timings: the mean and the fitted slope are the true values.
        return float(truth.alpha), float(truth.beta)
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)

    iter_times = np.full(probe_rounds, truth.alpha)
    upload_times = deltas * truth.beta
    iter_times = iter_times * (1.0 + noise * rng.standard_normal(probe_rounds))
    upload_times = upload_times * (1.0 + noise * rng.standard_normal(deltas.size))

    alpha = float(iter_times.mean())
    beta = fit_upload_slope(deltas, upload_times)
    if not (alpha > 0 and beta > 0):
        raise EstimationError(f"non-positive estimate alpha={alpha}, beta={beta}")
    return alpha, beta


def fit_upload_slope(deltas, times) -> float:
    """Least-squares slope of upload time against compression rate."""
    deltas = np.asarray(deltas, dtype=np.float64)
    times = np.asarray(times, dtype=np.float64)
    if deltas.shape != times.shape or np.unique(deltas).size < 2:
        raise EstimationError("need aligned probes at two or more distinct rates")
    dc = deltas - deltas.mean()
    return float(np.dot(dc, times - times.mean()) / np.dot(dc, dc))
