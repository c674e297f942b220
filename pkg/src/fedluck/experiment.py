"""Experiment orchestration: build a simulation from a config, run it, persist results.

Random streams are derived from three integer seeds so that comparisons can
hold parts of the system fixed:

* ``data_seed``: synthetic dataset, train/test split and device partition.
* ``system_seed``: device speeds and bandwidths, profiling noise.
* ``seed``: model initialization and every device's minibatch sampling.

``data_seed`` and ``system_seed`` fall back to ``seed`` when negative.
"""

from __future__ import annotations

import csv
import io
import logging
import os
import shutil
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import svgplot
from .compression import realized_rate
from .config import AUTO, ExperimentConfig, format_config
from .data import Dataset, dirichlet_partition, iid_partition, load_csv, make_blobs, train_test_split
from .engine import METRICS_COLUMNS, DeviceState, MetricsRecord, SimulationSetup, Simulator, device_round_duration
from .errors import ConfigError
from .model import ModelSpec, QuadraticSpec
from .profiler import DeviceProfile, auto_round_duration, estimate_profile
from .strategies import make_strategy

log = logging.getLogger(__name__)

_DATA, _PARTITION, _SYSTEM, _INIT, _PROFILE, _DEVICE = 1, 2, 3, 4, 5, 100
_MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """One step of the SplitMix64 generator applied to ``x`` (mod 2**64)."""
    z = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def cell_seed(base_seed: int, cell_index: int) -> int:
    """Seed of grid cell ``cell_index``: ``splitmix64(base_seed XOR splitmix64(cell_index))``."""
    return splitmix64((base_seed & _MASK64) ^ splitmix64(cell_index))


def load_task(cfg: ExperimentConfig) -> tuple[Dataset, Dataset]:
    seed = cfg.effective_data_seed
    if cfg.dataset == "synthetic":
        return make_blobs(
            cfg.synthetic_train,
            cfg.synthetic_test,
            cfg.synthetic_features,
            cfg.synthetic_classes,
            spread=cfg.synthetic_spread,
            clusters_per_class=cfg.synthetic_clusters,
            center_scale=cfg.synthetic_center_scale,
            seed=[seed, _DATA],
        )
    return train_test_split(load_csv(cfg.dataset_path()), cfg.test_fraction, seed=[seed, _DATA])


def build_model(cfg: ExperimentConfig, train: Dataset):
    if cfg.model == "quadratic":
        return QuadraticSpec(train.n_features)
    sizes = (train.n_features, *cfg.hidden_layers, train.n_classes)
    return ModelSpec(sizes, activation=cfg.activation, loss=cfg.loss)


def sample_heterogeneity(cfg: ExperimentConfig, seed, model_dim: int) -> list[tuple[float, float]]:
    """Ground-truth ``(alpha_i, beta_i)`` for every device.

    ``alpha_i ~ U[m, multiplier * m]`` with ``m = alpha_base``; bandwidth
    ``b_i ~ U[bandwidth_min, bandwidth_max]`` Mb/s and
    ``beta_i = model_bytes * 8 / (b_i * 1e6)`` seconds.
    """
    rng = np.random.default_rng(seed)
    m = cfg.alpha_base
    alphas = rng.uniform(m, cfg.alpha_range_multiplier * m, size=cfg.n_devices)
    bandwidth = rng.uniform(cfg.bandwidth_min_mbps, cfg.bandwidth_max_mbps, size=cfg.n_devices)
    model_bits = model_dim * cfg.param_bytes * 8
    betas = model_bits / (bandwidth * 1e6)
    return [(float(a), float(b)) for a, b in zip(alphas, betas)]


@dataclass
class RunResult:
    config: ExperimentConfig
    records: list[MetricsRecord]
    devices: list[dict]
    round_duration: float
    round_duration_auto: bool
    simulator: Simulator = field(repr=False)


def prepare(cfg: ExperimentConfig, trace=None, keep_models: bool = False) -> tuple[SimulationSetup, list[dict], float]:
    """Everything up to the first event: data, devices, profiling, strategy."""
    train, test = load_task(cfg)
    spec = build_model(cfg, train)
    if cfg.partition == "iid":
        plan = iid_partition(len(train), cfg.n_devices, seed=[cfg.effective_data_seed, _PARTITION])
    else:
        plan = dirichlet_partition(train, cfg.n_devices, cfg.dirichlet_concentration,
                                   seed=[cfg.effective_data_seed, _PARTITION])

    system_seed = cfg.effective_system_seed
    truth = sample_heterogeneity(cfg, [system_seed, _SYSTEM], spec.dim)
    profile_rng = np.random.default_rng([system_seed, _PROFILE])
    estimates = [
        estimate_profile(DeviceProfile(a, b), cfg.probe_rounds, cfg.probe_deltas, cfg.profile_noise, profile_rng)
        for a, b in truth
    ]

    if cfg.round_duration == AUTO:
        T = auto_round_duration([a for a, _ in estimates], [b for _, b in estimates],
                                cfg.k_min, cfg.k_max, cfg.delta_min, cfg.delta_max)
    else:
        T = float(cfg.round_duration)
    policy, params = make_strategy(cfg.strategy_config(), estimates, cfg.bounds(T))

    devices, table = [], []
    for i, ((a, b), (a_est, b_est), (k, delta)) in enumerate(zip(truth, estimates, params)):
        profile = DeviceProfile(a, b, k, realized_rate(delta, spec.dim))
        devices.append(DeviceState(i, profile, train.subset(plan.assignments[i]),
                                   np.random.default_rng([cfg.seed, _DEVICE + i])))
        table.append({
            "device": i,
            "alpha": a,
            "beta": b,
            "alpha_est": a_est,
            "beta_est": b_est,
            "k": k,
            "delta": delta,
            "realized_delta": profile.delta,
            "cycle_time_s": device_round_duration(profile),
            "samples": len(plan.assignments[i]),
        })

    budget = cfg.time_budget or cfg.rounds * T
    setup = SimulationSetup(
        model=spec,
        w0=spec.init([cfg.seed, _INIT]),
        devices=devices,
        policy=policy,
        test=test,
        train=train,
        eta_l=cfg.eta_l,
        eta_g=cfg.eta_g,
        batch_size=cfg.batch_size or None,
        momentum=cfg.momentum,
        time_budget=budget,
        max_rounds=cfg.rounds if cfg.strategy in ("fedluck", "fedper") else None,
        eval_stride=cfg.eval_stride,
        targets=tuple(cfg.targets),
        stop_at_target=cfg.stop_at_target,
        trace=trace,
        keep_models=keep_models,
    )
    return setup, table, T


def run_simulation(cfg: ExperimentConfig, trace=None, keep_models: bool = False) -> RunResult:
    setup, table, T = prepare(cfg, trace=trace, keep_models=keep_models)
    sim = Simulator(setup)
    records = sim.run()
    return RunResult(cfg, records, table, T, cfg.round_duration == AUTO, sim)


def time_to_target(records: list[MetricsRecord], target: float) -> MetricsRecord | None:
    """First record whose test accuracy reaches ``target``, or None."""
    for r in records:
        if r.test_accuracy >= target:
            return r
    return None


def resolved_config(result: RunResult) -> ExperimentConfig:
    cfg = result.config
    return cfg.with_updates(
        round_duration=float(result.round_duration),
        data_seed=cfg.effective_data_seed,
        system_seed=cfg.effective_system_seed,
    )


def metrics_csv(records: list[MetricsRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRICS_COLUMNS)
    for r in records:
        w.writerow([repr(getattr(r, c)) if isinstance(getattr(r, c), float) else getattr(r, c)
                    for c in METRICS_COLUMNS])
    return buf.getvalue()


def read_metrics_csv(path: str | Path) -> list[MetricsRecord]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for row in rows:
        out.append(MetricsRecord(
            sim_time_s=float(row["sim_time_s"]),
            round=int(row["round"]),
            test_accuracy=float(row["test_accuracy"]),
            train_loss=float(row["train_loss"]),
            cumulative_uplink_bytes=int(row["cumulative_uplink_bytes"]),
            mean_staleness=float(row["mean_staleness"]),
            max_staleness=int(row["max_staleness"]),
            included_devices=int(row["included_devices"]),
        ))
    return out


def _table_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(rows[0]))
    for row in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in row.values()])
    return buf.getvalue()


def targets_csv(records: list[MetricsRecord], targets) -> str:
    rows = []
    for target in targets:
        hit = time_to_target(records, target)
        if hit is None:
            rows.append({"target": target, "time_to_target_s": "unreached", "round": "unreached",
                         "cumulative_uplink_bytes": "unreached"})
        else:
            rows.append({"target": target, "time_to_target_s": hit.sim_time_s, "round": hit.round,
                         "cumulative_uplink_bytes": hit.cumulative_uplink_bytes})
    if not rows:
        return "target,time_to_target_s,round,cumulative_uplink_bytes\n"
    return _table_csv(rows)


def _write_atomic(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def run_experiment(cfg: ExperimentConfig, out_dir: str | Path) -> Path:
    """Run one simulation and write its artifacts into ``out_dir``.

    Files: ``config.txt`` (fully resolved; re-running it reproduces the run),
    ``metrics.csv``, ``devices.csv``, ``targets.csv``, ``accuracy.svg`` and,
    with ``trace = true``, ``trace.tsv``. Output is staged in a temporary
    sibling directory and moved into place only after the run succeeds.
    """
    out_dir = Path(out_dir)
    out_dir.parent.mkdir(parents=True, exist_ok=True)
    stage = Path(tempfile.mkdtemp(prefix=f".{out_dir.name}-", dir=out_dir.parent))
    try:
        if cfg.trace:
            with open(stage / "trace.tsv", "w") as trace:
                trace.write("time\tkind\tdevice\tround\tstaleness\tbytes\n")
                result = run_simulation(cfg, trace=trace)
        else:
            result = run_simulation(cfg)
        header = [
            f"strategy {cfg.strategy}, {len(result.records)} metric rows",
            f"round_duration = {result.round_duration!r}"
            + (" (resolved from auto)" if result.round_duration_auto else ""),
        ]
        _write_atomic(stage / "config.txt", format_config(resolved_config(result), header))
        _write_atomic(stage / "metrics.csv", metrics_csv(result.records))
        _write_atomic(stage / "devices.csv", _table_csv(result.devices))
        _write_atomic(stage / "targets.csv", targets_csv(result.records, cfg.targets))
        points = [(r.sim_time_s, r.test_accuracy) for r in result.records]
        _write_atomic(stage / "accuracy.svg", svgplot.line_chart(
            {cfg.strategy: points}, title="Test accuracy", x_label="simulated time (s)",
            y_label="accuracy"))
        out_dir.mkdir(exist_ok=True)
        for f in stage.iterdir():
            os.replace(f, out_dir / f.name)
    finally:
        shutil.rmtree(stage, ignore_errors=True)
    return out_dir


@dataclass
class GridCell:
    index: int
    k: int
    delta: float
    seed: int
    status: str
    rounds_to_target: int | None = None
    time_to_target_s: float | None = None
    bytes_at_target: int | None = None


def grid_cell_config(base: ExperimentConfig, k: int, delta: float, index: int) -> ExperimentConfig:
    """FedPer at ``(k, delta)`` on the base config's data and devices.

    The dataset and device system keep the base seeds; training randomness
    uses :func:`cell_seed`. An ``auto`` aggregation period is resolved from the
    base config's search box, so every cell shares it.
    """
    T = base.round_duration
    if T == AUTO:
        _, _, T = prepare(base.with_updates(strategy="fedper"))
    return base.with_updates(
        strategy="fedper",
        fixed_k=int(k),
        fixed_delta=float(delta),
        round_duration=float(T),
        seed=cell_seed(base.seed, index),
        data_seed=base.effective_data_seed,
        system_seed=base.effective_system_seed,
        stop_at_target=True,
    )


def _run_cell(args) -> GridCell:
    cfg, index, target = args
    cell = GridCell(index, cfg.fixed_k, cfg.fixed_delta, cfg.seed, "ok")
    try:
        hit = time_to_target(run_simulation(cfg).records, target)
    except Exception as exc:  # a failed cell must not abort the grid
        log.warning("grid cell %d (k=%s, delta=%s) failed: %s", index, cfg.fixed_k, cfg.fixed_delta, exc)
        cell.status = f"error: {exc}"
        return cell
    if hit is not None:
        cell.rounds_to_target = hit.round
        cell.time_to_target_s = hit.sim_time_s
        cell.bytes_at_target = hit.cumulative_uplink_bytes
    return cell


def run_grid(base: ExperimentConfig, k_values, delta_values, out_dir: str | Path | None = None,
             workers: int = 1) -> list[GridCell]:
    """FedPer over every ``(k, delta)``; cells are indexed k-major.

    The first entry of ``base.targets`` is the target accuracy. With ``out_dir``
    writes ``grid.csv`` (one row per cell) and ``heatmap.csv`` (rounds to target,
    rows k, columns delta).
    """
    k_values, delta_values = list(k_values), list(delta_values)
    if not k_values or not delta_values:
        raise ConfigError("grid needs at least one k and one delta value")
    if not base.targets:
        raise ConfigError("targets: grid needs a target accuracy")
    target = base.targets[0]
    if base.round_duration == AUTO:
        _, _, T = prepare(base.with_updates(strategy="fedper"))
        base = base.with_updates(round_duration=float(T))
    jobs = []
    for k in k_values:
        for delta in delta_values:
            index = len(jobs)
            try:
                jobs.append((grid_cell_config(base, k, delta, index), index, target))
            except ConfigError as exc:
                jobs.append((None, index, (k, delta, str(exc))))
    runnable = [j for j in jobs if j[0] is not None]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            done = list(pool.map(_run_cell, runnable))
    else:
        done = [_run_cell(j) for j in runnable]
    by_index = {c.index: c for c in done}
    cells = []
    for cfg, index, extra in jobs:
        if cfg is None:
            k, delta, msg = extra
            cells.append(GridCell(index, k, delta, cell_seed(base.seed, index), f"error: {msg}"))
        else:
            cells.append(by_index[index])
    if out_dir is not None:
        write_grid(cells, k_values, delta_values, Path(out_dir))
    return cells


def _fmt(v):
    if v is None:
        return "unreached"
    return repr(v) if isinstance(v, float) else v


def write_grid(cells: list[GridCell], k_values, delta_values, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["cell", "k", "delta", "seed", "status", "rounds_to_target", "time_to_target_s",
                "bytes_at_target"])
    for c in cells:
        w.writerow([c.index, c.k, repr(float(c.delta)), c.seed, c.status, _fmt(c.rounds_to_target),
                    _fmt(c.time_to_target_s), _fmt(c.bytes_at_target)])
    _write_atomic(out_dir / "grid.csv", buf.getvalue())

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["k"] + [repr(float(d)) for d in delta_values])
    it = iter(cells)
    for k in k_values:
        row = [k]
        for _ in delta_values:
            c = next(it)
            row.append(_fmt(c.rounds_to_target) if c.status == "ok" else "error")
        w.writerow(row)
    _write_atomic(out_dir / "heatmap.csv", buf.getvalue())
