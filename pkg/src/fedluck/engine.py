"""Discrete-event simulation of asynchronous federated learning.

Time is simulated seconds. Rounds are numbered from 1: round ``t`` collects
the gradients that arrive in ``[(t-1)*T, t*T)`` and is closed by the boundary
event at exactly ``t*T``, which produces global model version ``t``. The
initial broadcast of version 0 counts as every device's inclusion in round 0.

Ordering at equal timestamps: boundary events first, then arrivals by device
id. A gradient landing exactly on a boundary therefore joins the round that
the boundary opens.

A device included in round ``t`` is sent version ``t`` at the boundary, trains
``k`` steps, compresses, and its gradient arrives ``k*alpha + delta*beta``
seconds later. With constant parameters and no arrival on a boundary, its
staleness settles at ``ceil(d / T)``; an arrival exactly on a boundary is
deferred and counts one round more.

Non-periodic triggers reuse the same bookkeeping with "round" meaning the
index of an aggregation (one per K arrivals, per arrival, or per barrier).
"""

from __future__ import annotations

import heapq
import logging
from dataclasses import dataclass, field, fields
from typing import TextIO

import numpy as np

from .compression import SparseGradient, densify, topk_compress, wire_size_bytes
from .data import Dataset
from .errors import ConfigError, CorruptionError, SimulationError
from .model import evaluate, local_train
from .profiler import DeviceProfile
from .strategies import AggregationPolicy, Trigger, UpdateRule, fedasync_weight

log = logging.getLogger(__name__)

_BOUNDARY, _ARRIVAL = 0, 1


@dataclass
class MetricsRecord:
    sim_time_s: float
    round: int
    test_accuracy: float
    train_loss: float
    cumulative_uplink_bytes: int
    mean_staleness: float
    max_staleness: int
    included_devices: int


METRICS_COLUMNS = tuple(f.name for f in fields(MetricsRecord))


def device_round_duration(p: DeviceProfile) -> float:
    """Seconds for one train-and-upload cycle: ``k*alpha + delta*beta``.

    Either cost may be zero (free compute or a free uplink), not both.
    """
    if p.k < 1 or not 0 < p.delta <= 1 or p.alpha < 0 or p.beta < 0:
        raise ConfigError(f"invalid device profile {p}")
    d = p.k * p.alpha + p.delta * p.beta
    if not d > 0:
        raise ConfigError(f"device cycle time must be > 0, got {d}")
    return d


@dataclass
class DeviceState:
    id: int
    profile: DeviceProfile
    data: Dataset
    rng: np.random.Generator
    current_base_round: int = 0
    local_model: np.ndarray | None = None


@dataclass
class RoundBuffer:
    round: int
    entries: list[tuple[int, SparseGradient, int]] = field(default_factory=list)

    def add(self, device_id: int, grad: SparseGradient, staleness: int) -> None:
        if any(dev == device_id for dev, _, _ in self.entries):
            raise CorruptionError(f"device {device_id} already in round {self.round}")
        self.entries.append((device_id, grad, staleness))

    def __len__(self) -> int:
        return len(self.entries)


@dataclass
class ServerState:
    """``round`` is the open round; ``global_model`` is version ``round - 1``."""

    global_model: np.ndarray
    eta_g: float
    round_duration: float | None = None
    round: int = 1
    last_included: dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.round_duration is not None and not self.round_duration > 0:
            raise ConfigError("round_duration must be > 0")


def staleness_of(server: ServerState, device_id: int, t: int) -> int:
    """Rounds since the device's last inclusion strictly before ``t``."""
    try:
        last = server.last_included[device_id]
    except KeyError:
        raise KeyError(f"unknown device {device_id}") from None
    if last >= t:
        raise CorruptionError(f"device {device_id} last included in round {last}, not before {t}")
    return t - last


def global_aggregate(server: ServerState, buffer: RoundBuffer) -> np.ndarray:
    """Close ``buffer``: ``w <- w - eta_g/|S| * sum(densify(g))``; an empty round is a no-op.

    Advances ``server.round`` and records every buffered device as included.
    """
    if buffer.round != server.round:
        raise CorruptionError(f"buffer for round {buffer.round}, server in round {server.round}")
    w = server.global_model
    if buffer.entries:
        total = np.zeros_like(w)
        for dev, grad, _ in buffer.entries:
            if grad.full_dim != w.shape[0]:
                raise CorruptionError(f"gradient dim {grad.full_dim} != model dim {w.shape[0]}")
            grad.validate()
            total[grad.indices] += grad.values
            server.last_included[dev] = buffer.round
        w = w - (server.eta_g / len(buffer.entries)) * total
    server.global_model = w
    server.round += 1
    return w


@dataclass
class SimulationSetup:
    model: object
    w0: np.ndarray
    devices: list[DeviceState]
    policy: AggregationPolicy
    test: Dataset
    eta_l: float
    eta_g: float
    batch_size: int | None
    time_budget: float
    max_rounds: int | None = None
    momentum: float = 0.0
    train: Dataset | None = None
    eval_stride: int = 1
    targets: tuple[float, ...] = ()
    stop_at_target: bool = False
    index_bytes: int = 4
    value_bytes: int = 4
    trace: TextIO | None = None
    keep_models: bool = False


@dataclass
class AggregationLog:
    round: int
    time: float
    entries: list[tuple[int, int, int, int]]  # (device, origin_round, staleness, bytes)


class Simulator:
    """Single-threaded event loop. Call :meth:`run` once."""

    def __init__(self, setup: SimulationSetup):
        self.setup = setup
        policy = setup.policy
        if policy.trigger is Trigger.PERIODIC and not (policy.round_duration and policy.round_duration > 0):
            raise ConfigError("periodic aggregation needs round_duration > 0")
        if policy.trigger is Trigger.COUNT and not (policy.buffer_size and policy.buffer_size >= 1):
            raise ConfigError("count trigger needs buffer_size >= 1")
        self.server = ServerState(
            np.array(setup.w0, dtype=np.float64, copy=True),
            setup.eta_g,
            policy.round_duration,
            last_included={d.id: 0 for d in setup.devices},
        )
        self.buffer = RoundBuffer(1)
        self.now = 0.0
        self.cumulative_bytes = 0
        self.arrivals = 0
        self.aggregated = 0
        self.records: list[MetricsRecord] = []
        self.log: list[AggregationLog] = []
        self.history: list[tuple[int, float, np.ndarray]] = []
        self._queue: list = []
        self._seq = 0
        self._reached: set[float] = set()
        self._done = False
        self._by_id = {d.id: d for d in setup.devices}

    def _push(self, time: float, order: int, device_id: int) -> None:
        heapq.heappush(self._queue, (time, order, device_id, self._seq))
        self._seq += 1

    def _dispatch(self, device: DeviceState, now: float) -> None:
        device.local_model = self.server.global_model
        device.current_base_round = self.server.last_included[device.id]
        self._push(now + device_round_duration(device.profile), _ARRIVAL, device.id)

    def _schedule_boundary(self) -> None:
        t = self.server.round
        if self.setup.max_rounds is not None and t > self.setup.max_rounds:
            return
        self._push(t * self.server.round_duration, _BOUNDARY, -1)

    def run(self) -> list[MetricsRecord]:
        s = self.setup
        if s.keep_models:
            self.history.append((0, 0.0, self.server.global_model.copy()))
        self._record(0, 0.0, [])
        for device in s.devices:
            self._dispatch(device, 0.0)
        if s.policy.trigger is Trigger.PERIODIC:
            self._schedule_boundary()

        while self._queue and not self._done:
            time, order, device_id, _ = heapq.heappop(self._queue)
            if time > s.time_budget:
                break
            if time < self.now:
                raise SimulationError(f"event at {time} after clock reached {self.now}")
            self.now = time
            if order == _BOUNDARY:
                self._aggregate(time)
                self._schedule_boundary()
            else:
                self._arrive(time, self._by_id[device_id])
            if s.max_rounds is not None and self.server.round > s.max_rounds:
                self._done = True

        if self.buffer.entries and s.policy.trigger is Trigger.COUNT:
            log.info("discarding partial buffer of %d gradients at run end", len(self.buffer))
        return self.records

    def _arrive(self, now: float, device: DeviceState) -> None:
        s = self.setup
        p = device.profile
        g, _ = local_train(
            device.local_model, s.model, p.k, s.eta_l, device.data, s.batch_size, device.rng,
            momentum=s.momentum, prox=s.policy.prox,
        )
        sparse = topk_compress(g, p.delta, origin_round=device.current_base_round)
        t = self.server.round
        tau = staleness_of(self.server, device.id, t)
        self.buffer.add(device.id, sparse, tau)
        self.arrivals += 1
        if s.trace is not None:
            nbytes = wire_size_bytes(sparse, s.index_bytes, s.value_bytes)
            s.trace.write(f"{now!r}\tarrival\t{device.id}\t{t}\t{tau}\t{nbytes}\n")

        trigger = s.policy.trigger
        if (
            trigger is Trigger.PER_ARRIVAL
            or (trigger is Trigger.COUNT and len(self.buffer) == s.policy.buffer_size)
            or (trigger is Trigger.BARRIER and len(self.buffer) == len(s.devices))
        ):
            self._aggregate(now)

    def _aggregate(self, now: float) -> None:
        s = self.setup
        buf = self.buffer
        t = buf.round
        entries = [
            (dev, g.origin_round, tau, wire_size_bytes(g, s.index_bytes, s.value_bytes))
            for dev, g, tau in buf.entries
        ]
        if s.policy.update_rule is UpdateRule.STALENESS_MIX:
            self._mix(buf)
        else:
            global_aggregate(self.server, buf)

        nbytes = sum(e[3] for e in entries)
        self.cumulative_bytes += nbytes
        self.aggregated += len(entries)
        self.log.append(AggregationLog(t, now, entries))
        if s.trace is not None:
            s.trace.write(f"{now!r}\taggregate\t-\t{t}\t-\t{nbytes}\n")
        if s.keep_models:
            self.history.append((t, now, self.server.global_model.copy()))

        self.buffer = RoundBuffer(self.server.round)
        for dev, _, _ in buf.entries:
            self._dispatch(self._by_id[dev], now)
        if t % s.eval_stride == 0:
            self._record(t, now, [e[2] for e in entries])

    def _mix(self, buf: RoundBuffer) -> None:
        # w <- (1 - a) w + a (w_base - g), with a decaying in the device's lag.
        server = self.server
        (dev, grad, tau), = buf.entries
        pol = self.setup.policy
        weight = fedasync_weight(pol.mix_alpha, tau - 1, pol.staleness_exponent)
        submitted = self._by_id[dev].local_model - densify(grad)
        server.global_model = (1.0 - weight) * server.global_model + weight * submitted
        server.last_included[dev] = buf.round
        server.round += 1

    def _record(self, t: int, now: float, staleness: list[int]) -> None:
        s = self.setup
        w = self.server.global_model
        acc, _ = evaluate(w, s.model, s.test)
        train_loss = evaluate(w, s.model, s.train)[1] if s.train is not None else float("nan")
        if not np.all(np.isfinite(w)):
            raise SimulationError(f"global model diverged (non-finite entries) at round {t}")
        self.records.append(
            MetricsRecord(
                sim_time_s=now,
                round=t,
                test_accuracy=acc,
                train_loss=train_loss,
                cumulative_uplink_bytes=self.cumulative_bytes,
                mean_staleness=float(np.mean(staleness)) if staleness else 0.0,
                max_staleness=int(max(staleness)) if staleness else 0,
                included_devices=len(staleness),
            )
        )
        if s.targets:
            self._reached.update(x for x in s.targets if acc >= x)
            if s.stop_at_target and len(self._reached) == len(set(s.targets)):
                self._done = True


def simulate(setup: SimulationSetup) -> list[MetricsRecord]:
    return Simulator(setup).run()
