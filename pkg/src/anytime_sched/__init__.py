"""Deadline-aware depth scheduling for anytime (multi-exit) inference."""

from .oracle import OracleResult, brute_force
from .planner import (
    DepthPlan,
    DpTable,
    InfeasibleError,
    PlannerState,
    TaskRow,
    build_table,
    choose_delta,
    extract_plan,
    greedy_reassign,
    quantize,
)
from .simulator import Policy, SimConfig, SimReport, run
from .task_model import AdjustedJob, Job, StageProfile, adjust_deadline, cumulative_exec
from .utility import RewardCurve, UtilityModel, predict_curve, predict_next, prior_curve
from .workload import TraceLibrary, WorkloadSpec, generate, load_trace, synth_library

__version__ = "0.1.0"

__all__ = [
    "AdjustedJob", "DepthPlan", "DpTable", "InfeasibleError", "Job", "OracleResult",
    "PlannerState", "Policy", "RewardCurve", "SimConfig", "SimReport", "StageProfile",
    "TaskRow", "TraceLibrary", "UtilityModel", "WorkloadSpec", "adjust_deadline",
    "brute_force", "build_table", "choose_delta", "cumulative_exec", "extract_plan",
    "generate", "greedy_reassign", "load_trace", "predict_curve", "predict_next",
    "prior_curve", "quantize", "run", "synth_library",
]
