"""Deterministic simulation of a hierarchical sharded blockchain.

Zones run local chains of speculatively executed transactions; zone full
members order local blocks through a DAG mempool into a main chain that
validates local and executes cross-zone transactions.
"""

from .core import ProtocolConfig, Scheme, Topology
from .experiment import (
    ConfigError,
    ExperimentConfig,
    compare_reports,
    config_from_dict,
    load_config,
    replay_trace,
    reprocess,
    run_experiment,
)
from .metrics import MetricsReport
from .workload import WorkloadConfig

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "MetricsReport",
    "ProtocolConfig",
    "Scheme",
    "Topology",
    "WorkloadConfig",
    "compare_reports",
    "config_from_dict",
    "load_config",
    "replay_trace",
    "reprocess",
    "run_experiment",
]
