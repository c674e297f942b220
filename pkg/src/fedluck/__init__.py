"""Asynchronous federated learning simulator with joint local-step / top-k rate selection."""

from .compression import SparseGradient, densify, topk_compress, wire_size_bytes
from .config import ExperimentConfig, load_config, parse_config
from .data import Dataset, dirichlet_partition, iid_partition, load_csv, make_blobs
from .engine import MetricsRecord, Simulator, device_round_duration, global_aggregate, staleness_of
from .errors import ConfigError, CorruptionError, EstimationError, ShapeError, SimulationError
from .experiment import run_experiment, run_grid, run_simulation, sample_heterogeneity, time_to_target
from .model import ModelSpec, QuadraticSpec, evaluate, init_model, local_train, loss_and_gradient
from .profiler import DeviceProfile, OptimizerBounds, estimate_profile, optimize_params, phi
from .strategies import StrategyConfig, fedasync_weight, make_strategy

__version__ = "0.1.0"
