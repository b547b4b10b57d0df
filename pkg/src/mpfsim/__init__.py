"""Mixed-traffic corridor simulator with V2V-coordinated platooning.

Public surface: build a ``ScenarioConfig`` (directly or from a config
document), ``run`` it, and summarize the result with ``compute_report``.
Grids of scenarios go through ``SweepSpec`` / ``run_sweep``.
"""

from .core import ConfigError, SimulationError, VehicleClass, VehicleParams, Corridor
from .models import ControllerConfig, IdmParams, Topology
from .comms import ChannelConfig
from .metrics import MetricsReport, TtcConfig, compute_report
from .engine import InitialVehicle, RunResult, ScenarioConfig, TrajectoryLog, run
from .config import default_document, document_to_scenario, effective_document
from .sweep import SweepSpec, run_sweep

__version__ = "0.1.0"

__all__ = [
    "ChannelConfig",
    "ConfigError",
    "ControllerConfig",
    "Corridor",
    "IdmParams",
    "InitialVehicle",
    "MetricsReport",
    "RunResult",
    "ScenarioConfig",
    "SimulationError",
    "SweepSpec",
    "Topology",
    "TrajectoryLog",
    "TtcConfig",
    "VehicleClass",
    "VehicleParams",
    "__version__",
    "compute_report",
    "default_document",
    "document_to_scenario",
    "effective_document",
    "run",
    "run_sweep",
]
