"""Budgeted, bandit-driven ablation studies over a declared component space."""

from ablate.analysis import StudyReport, acc_at_k, confidence_interval, emit_report, simple_regret
from ablate.bandit import BanditParams, BanditState, compute_reward, select_arm, update
from ablate.config import StudyConfig, load_config
from ablate.orchestrator import replay, run_study
from ablate.space import CandidateSpec, Component, ComponentSpace, MutationSpec

__version__ = "0.1.0"

__all__ = [
    "BanditParams",
    "BanditState",
    "CandidateSpec",
    "Component",
    "ComponentSpace",
    "MutationSpec",
    "StudyConfig",
    "StudyReport",
    "acc_at_k",
    "compute_reward",
    "confidence_interval",
    "emit_report",
    "load_config",
    "replay",
    "run_study",
    "select_arm",
    "simple_regret",
    "update",
]
