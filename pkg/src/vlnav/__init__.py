"""Desk-scale vision-language UAV navigation workbench."""

from .world import (
    ContinuousAction,
    EgoObservation,
    EpisodeStatus,
    GenConfig,
    GoalObject,
    Pose,
    Scenario,
    ScenarioKind,
    SensorConfig,
    episode_status,
    generate_scenario,
    render_observation,
    step_dynamics,
)
from .encoder import Instruction, LLMProvider, Prompt, PromptSource, encode_instruction, tokenize
from .retrieval import (
    Embedding,
    GoalPoolEntry,
    RetrievalConfig,
    RetrievalResult,
    embed_descriptor,
    embed_text,
    read_pool,
    retrieve,
    score_pool,
    softmax,
    write_pool,
)
from .controller import ControllerConfig, PIDGains, PIDState, pid_step, reset_pid, scale_waypoint
from .planner import PlannerConfig, WaypointPlan, oracle_plan, planner_forward, train_planner
from .harness import EpisodeConfig, Metrics, compute_metrics, run_benchmark, run_episode

__version__ = "0.1.0"

__all__ = [
    "ContinuousAction", "EgoObservation", "EpisodeStatus", "GenConfig", "GoalObject",
    "Pose", "Scenario", "ScenarioKind", "SensorConfig", "episode_status",
    "generate_scenario", "render_observation", "step_dynamics",
    "Instruction", "LLMProvider", "Prompt", "PromptSource", "encode_instruction", "tokenize",
    "Embedding", "GoalPoolEntry", "RetrievalConfig", "RetrievalResult",
    "embed_descriptor", "embed_text", "read_pool", "retrieve", "score_pool", "softmax", "write_pool",
    "ControllerConfig", "PIDGains", "PIDState", "pid_step", "reset_pid", "scale_waypoint",
    "PlannerConfig", "WaypointPlan", "oracle_plan", "planner_forward", "train_planner",
    "EpisodeConfig", "Metrics", "compute_metrics", "run_benchmark", "run_episode",
]
