"""Monte Carlo link-level simulator for two-phase distributed uplink joint transmission."""

from .capacity import (
    MaxMinSolverConfig,
    Phase1Report,
    Phase2Report,
    baseline_rate,
    phase1_maxmin_precoder,
    phase1_rate_identity,
    phase2_cjt,
    phase2_ncjt,
)
from .mimo import PowerAllocation, Precoder, draw_channel, logdet_capacity, svd_decompose, waterfill
from .rf_env import LinkBudget, Placement, PowerMode, ScenarioConfig, link_budget, normalize_power, pathloss_db, place_mdaa
from .selection import DmimoThroughput, SelectionResult, combine_phases, evaluate_subset, exhaustive_select, greedy_select
from .sim import CapacityReport, ExperimentSpec, emit_csv, reproduce_figure, run_experiment

__version__ = "0.1.0"

__all__ = [
    "CapacityReport",
    "DmimoThroughput",
    "ExperimentSpec",
    "LinkBudget",
    "MaxMinSolverConfig",
    "Phase1Report",
    "Phase2Report",
    "Placement",
    "PowerAllocation",
    "PowerMode",
    "Precoder",
    "ScenarioConfig",
    "SelectionResult",
    "baseline_rate",
    "combine_phases",
    "draw_channel",
    "emit_csv",
    "evaluate_subset",
    "exhaustive_select",
    "greedy_select",
    "link_budget",
    "logdet_capacity",
    "normalize_power",
    "pathloss_db",
    "phase1_maxmin_precoder",
    "phase1_rate_identity",
    "phase2_cjt",
    "phase2_ncjt",
    "place_mdaa",
    "reproduce_figure",
    "run_experiment",
    "svd_decompose",
    "waterfill",
]
