"""Flat ``key = value`` experiment configuration.

One setting per line, ``#`` starts a comment, blank lines are ignored. Lists
are comma separated. Every key has a default, so an empty file is a valid
config. ``load_config`` reports every problem it finds at once.

Keys (type, default):

dataset (str, synthetic)
    ``synthetic`` or a path to a CSV file with a ``label`` column.
synthetic_train, synthetic_test (int, 2000, 1000)
synthetic_features, synthetic_classes (int, 16, 4)
synthetic_spread, synthetic_center_scale (float, 1.0, 1.0)
synthetic_clusters (int, 3)
    Gaussian clusters per class.
test_fraction (float, 0.2)
    Held-out share when ``dataset`` is a CSV file.
model (str, mlp)
    ``mlp`` or ``quadratic``.
hidden_layers (int list, 64,64)
    Hidden widths of the MLP; empty for a linear model.
activation (str, relu) / loss (str, softmax_cross_entropy)
n_devices (int, 10)
partition (str, iid) / dirichlet_concentration (float, 1.0)
alpha_base (float, 0.0001)
    Minimum seconds per local iteration; ``alpha_i ~ U[m, multiplier*m]``.
alpha_range_multiplier (float, 4.0)
bandwidth_min_mbps, bandwidth_max_mbps (float, 0.25, 2.0)
param_bytes (int, 4)
    Bytes per parameter of a full upload, used to derive ``beta_i``.
round_duration (float or ``auto``, auto)
strategy (str, fedluck) and fixed_k, fixed_delta, async_delta, buffer_size,
mix_alpha, staleness_exponent, prox, optimize
    See :mod:`fedluck.strategies`.
k_min, k_max, k_step, delta_min, delta_max, delta_points
    FedLuck search grid.
eta_l, eta_g, momentum (float, 0.05, 1.0, 0.0) / batch_size (int, 32; 0 = full batch)
rounds (int, 150)
    Periodic rounds; the simulated time budget of every strategy is
    ``rounds * round_duration`` unless ``time_budget`` is set.
time_budget (float, 0 = derived)
eval_stride (int, 1)
targets (float list, 0.85)
stop_at_target (bool, false)
seed (int, 0)
data_seed, system_seed (int, -1 = use ``seed``)
    Streams for the dataset/partition and the device speeds.
profile_noise (float, 0.0) / probe_rounds (int, 10) / probe_deltas (float list)
trace (bool, false)
    Write the per-event trace file.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .profiler import OptimizerBounds
from .strategies import KINDS, OPTIMIZE_MODES, StrategyConfig

AUTO = "auto"


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str = "synthetic"
    synthetic_train: int = 2000
    synthetic_test: int = 1000
    synthetic_features: int = 16
    synthetic_classes: int = 4
    synthetic_spread: float = 1.0
    synthetic_center_scale: float = 1.0
    synthetic_clusters: int = 3
    test_fraction: float = 0.2
    model: str = "mlp"
    hidden_layers: tuple[int, ...] = (64, 64)
    activation: str = "relu"
    loss: str = "softmax_cross_entropy"
    n_devices: int = 10
    partition: str = "iid"
    dirichlet_concentration: float = 1.0
    alpha_base: float = 0.0001
    alpha_range_multiplier: float = 4.0
    bandwidth_min_mbps: float = 0.25
    bandwidth_max_mbps: float = 2.0
    param_bytes: int = 4
    round_duration: float | str = AUTO
    strategy: str = "fedluck"
    fixed_k: int = 30
    fixed_delta: float = 0.01
    async_delta: float = 1.0
    buffer_size: int = 3
    mix_alpha: float = 0.6
    staleness_exponent: float = 0.5
    prox: float = 0.0
    optimize: str = "joint"
    k_min: int = 10
    k_max: int = 60
    k_step: int = 1
    delta_min: float = 0.001
    delta_max: float = 0.5
    delta_points: int = 64
    eta_l: float = 0.05
    eta_g: float = 1.0
    momentum: float = 0.0
    batch_size: int = 32
    rounds: int = 150
    time_budget: float = 0.0
    eval_stride: int = 1
    targets: tuple[float, ...] = (0.85,)
    stop_at_target: bool = False
    seed: int = 0
    data_seed: int = -1
    system_seed: int = -1
    profile_noise: float = 0.0
    probe_rounds: int = 10
    probe_deltas: tuple[float, ...] = (0.1, 0.25, 0.5, 0.75, 1.0)
    trace: bool = False
    source_dir: str = field(default="", compare=False, repr=False)

    def strategy_config(self) -> StrategyConfig:
        return StrategyConfig(
            kind=self.strategy,
            fixed_k=self.fixed_k,
            fixed_delta=self.fixed_delta,
            async_delta=self.async_delta,
            buffer_size=self.buffer_size,
            mix_alpha=self.mix_alpha,
            staleness_exponent=self.staleness_exponent,
            prox=self.prox,
            optimize=self.optimize,
        )

    def bounds(self, round_duration: float) -> OptimizerBounds:
        return OptimizerBounds(
            k_min=self.k_min,
            k_max=self.k_max,
            delta_min=self.delta_min,
            delta_max=self.delta_max,
            round_duration=round_duration,
            k_grid_step=self.k_step,
            delta_grid_points=self.delta_points,
        )

    @property
    def effective_data_seed(self) -> int:
        return self.seed if self.data_seed < 0 else self.data_seed

    @property
    def effective_system_seed(self) -> int:
        return self.seed if self.system_seed < 0 else self.system_seed

    def dataset_path(self) -> Path:
        p = Path(self.dataset)
        if not p.is_absolute() and self.source_dir:
            p = Path(self.source_dir) / p
        return p

    def with_updates(self, **changes) -> "ExperimentConfig":
        cfg = dataclasses.replace(self, **changes)
        problems = validate(cfg)
        if problems:
            raise ConfigError(problems)
        return cfg


_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig) if f.name != "source_dir"}


def _parse_value(name: str, raw: str):
    default = _FIELDS[name].default
    if name == "round_duration":
        return AUTO if raw.lower() == AUTO else float(raw)
    if isinstance(default, bool):
        low = raw.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if isinstance(default, tuple):
        item = int if name == "hidden_layers" else float
        return tuple(item(x) for x in raw.split(",") if x.strip())
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw


def parse_config(text: str, source: str = "<config>", source_dir: str = "") -> ExperimentConfig:
    values = {}
    problems = []
    seen = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            problems.append(f"{source}:{lineno}: expected 'key = value', got {stripped!r}")
            continue
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in _FIELDS:
            problems.append(f"{source}:{lineno}: unknown key {key!r}")
            continue
        if key in seen:
            problems.append(f"{source}:{lineno}: duplicate key {key!r} (first on line {seen[key]})")
            continue
        seen[key] = lineno
        try:
            values[key] = _parse_value(key, raw)
        except ValueError as exc:
            problems.append(f"{source}:{lineno}: {key}: {exc}")
    if problems:
        raise ConfigError(problems)
    cfg = ExperimentConfig(source_dir=source_dir, **values)
    problems = validate(cfg)
    if problems:
        raise ConfigError(problems)
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror or exc}") from None
    return parse_config(text, source=str(path), source_dir=str(path.parent))


def validate(cfg: ExperimentConfig) -> list[str]:
    """Every semantic violation in ``cfg``, each naming its field."""
    p = []

    def need(cond, msg):
        if not cond:
            p.append(msg)

    if cfg.dataset != "synthetic":
        need(cfg.dataset_path().is_file(), f"dataset: file not found: {cfg.dataset_path()}")
        need(0 < cfg.test_fraction < 1, "test_fraction: must lie in (0, 1)")
    else:
        for name in ("synthetic_train", "synthetic_test", "synthetic_features", "synthetic_classes",
                     "synthetic_clusters"):
            need(getattr(cfg, name) >= 1, f"{name}: must be >= 1")
        need(cfg.synthetic_spread > 0, "synthetic_spread: must be > 0")
        need(cfg.synthetic_center_scale > 0, "synthetic_center_scale: must be > 0")
    need(cfg.model in ("mlp", "quadratic"), f"model: must be 'mlp' or 'quadratic', got {cfg.model!r}")
    need(all(h >= 1 for h in cfg.hidden_layers), "hidden_layers: widths must be >= 1")
    need(cfg.activation in ("relu", "tanh", "none"), f"activation: unknown {cfg.activation!r}")
    need(cfg.loss in ("softmax_cross_entropy", "mse"), f"loss: unknown {cfg.loss!r}")
    need(cfg.n_devices >= 1, "n_devices: must be >= 1")
    need(cfg.partition in ("iid", "dirichlet"), f"partition: must be 'iid' or 'dirichlet', got {cfg.partition!r}")
    need(cfg.dirichlet_concentration > 0, "dirichlet_concentration: must be > 0")
    need(cfg.alpha_base > 0, "alpha_base: must be > 0")
    need(cfg.alpha_range_multiplier >= 1, "alpha_range_multiplier: must be >= 1")
    need(0 < cfg.bandwidth_min_mbps <= cfg.bandwidth_max_mbps,
         "bandwidth_min_mbps/bandwidth_max_mbps: need 0 < min <= max")
    need(cfg.param_bytes >= 1, "param_bytes: must be >= 1")
    if cfg.round_duration != AUTO:
        need(isinstance(cfg.round_duration, float) and cfg.round_duration > 0
             and math.isfinite(cfg.round_duration), "round_duration: must be > 0 or 'auto'")
    need(cfg.strategy in KINDS, f"strategy: must be one of {KINDS}, got {cfg.strategy!r}")
    need(cfg.optimize in OPTIMIZE_MODES, f"optimize: must be one of {OPTIMIZE_MODES}")
    need(cfg.fixed_k >= 1, "fixed_k: must be >= 1")
    need(0 < cfg.fixed_delta <= 1, "fixed_delta: must lie in (0, 1]")
    need(0 < cfg.async_delta <= 1, "async_delta: must lie in (0, 1]")
    need(cfg.buffer_size >= 1, "buffer_size: must be >= 1")
    need(cfg.strategy != "fedbuff" or cfg.buffer_size <= cfg.n_devices,
         "buffer_size: must not exceed n_devices")
    need(0 < cfg.mix_alpha <= 1, "mix_alpha: must lie in (0, 1]")
    need(cfg.staleness_exponent >= 0, "staleness_exponent: must be >= 0")
    need(cfg.prox >= 0, "prox: must be >= 0")
    need(1 <= cfg.k_min <= cfg.k_max, "k_min/k_max: need 1 <= k_min <= k_max")
    need(cfg.k_step >= 1, "k_step: must be >= 1")
    need(cfg.delta_min > 0, "delta_min: must be > 0")
    need(cfg.delta_max <= 1, "delta_max: must be <= 1")
    need(cfg.delta_min <= cfg.delta_max, "delta_min: must not exceed delta_max")
    need(cfg.delta_points >= 1, "delta_points: must be >= 1")
    need(cfg.eta_l > 0, "eta_l: must be > 0")
    need(cfg.eta_g > 0, "eta_g: must be > 0")
    need(0 <= cfg.momentum < 1, "momentum: must lie in [0, 1)")
    need(cfg.batch_size >= 0, "batch_size: must be >= 0")
    need(cfg.rounds >= 1, "rounds: must be >= 1")
    need(cfg.time_budget >= 0, "time_budget: must be >= 0")
    need(cfg.eval_stride >= 1, "eval_stride: must be >= 1")
    need(all(0 < t <= 1 for t in cfg.targets), "targets: accuracies must lie in (0, 1]")
    need(cfg.profile_noise >= 0, "profile_noise: must be >= 0")
    need(cfg.probe_rounds >= 1, "probe_rounds: must be >= 1")
    need(len(set(cfg.probe_deltas)) >= 2 and all(0 < d <= 1 for d in cfg.probe_deltas),
         "probe_deltas: need two or more distinct rates in (0, 1]")
    return p


def format_config(cfg: ExperimentConfig, header: list[str] | None = None) -> str:
    """Render every key, defaults included; parses back to an equal config."""
    lines = [f"# {h}" for h in header or []]
    for name in _FIELDS:
        value = getattr(cfg, name)
        if name == "dataset" and value != "synthetic":
            text = str(cfg.dataset_path().resolve())
        elif isinstance(value, bool):
            text = "true" if value else "false"
        elif isinstance(value, tuple):
            text = ",".join(repr(v) for v in value)
        elif isinstance(value, float):
            text = repr(value)
        else:
            text = str(value)
        lines.append(f"{name} = {text}")
    return "\n".join(lines) + "\n"
