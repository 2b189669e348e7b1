"""Risk-bounded mission planning for a solar-powered rover in polar craters."""

from .envmodel import (IlluminationSeries, Scenario, ScenarioError, TerrainGrid, drive_distance,
                       irradiance_energy, load_scenario, save_scenario)
from .executive import CampaignStats, TrialRecord, run_campaign, run_online
from .faultmodel import enumerate_outcomes, fault_probabilities, sample_outcome
from .model import Action, FaultParams, Haven, RoverParams, RoverState, Waypoint
from .recovery import RecoveryPolicy, StateLattice, build_recovery, load_policy, save_policy
from .synthetic import PRESETS, SynthSpec, generate_synthetic
from .treeplan import InfeasibleError, PartialPolicyTree, Planner, PlannerConfig, plan_mission

__version__ = "0.1.0"

__all__ = [
    "Action", "CampaignStats", "FaultParams", "Haven", "IlluminationSeries", "InfeasibleError",
    "PRESETS", "PartialPolicyTree", "Planner", "PlannerConfig", "RecoveryPolicy", "RoverParams",
    "RoverState", "Scenario", "ScenarioError", "StateLattice", "SynthSpec", "TerrainGrid",
    "TrialRecord", "Waypoint", "build_recovery", "drive_distance", "enumerate_outcomes",
    "fault_probabilities", "generate_synthetic", "irradiance_energy", "load_policy",
    "load_scenario", "plan_mission", "run_campaign", "run_online", "sample_outcome",
    "save_policy", "save_scenario",
]
