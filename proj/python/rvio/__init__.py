"""Range-aided visual-inertial odometry: simulation, filtering and analysis."""

from ._core import (
    ConfigError,
    Error,
    ScenarioConfig,
    compare,
    delaunay,
    facet_range,
    load_config,
    observability,
    parse_config,
    quat_to_rotation,
    run,
    sweep,
)

__all__ = [
    "ConfigError",
    "Error",
    "ScenarioConfig",
    "compare",
    "delaunay",
    "facet_range",
    "load_config",
    "observability",
    "parse_config",
    "quat_to_rotation",
    "run",
    "sweep",
]
