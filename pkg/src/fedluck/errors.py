"""Exception types raised across the package."""

from __future__ import annotations


class ConfigError(ValueError):
    """Invalid configuration. Carries every violation found, not just the first."""

    def __init__(self, violations: list[str] | str):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class ShapeError(ValueError):
    """Parameter vector or batch does not match the model."""


class CorruptionError(ValueError):
    """A sparse gradient or buffer is internally inconsistent."""


class EstimationError(ValueError):
    """Profiling probes cannot determine the requested quantity."""


class SimulationError(RuntimeError):
    """The event loop reached a state that indicates a bug (e.g. time running backwards)."""
