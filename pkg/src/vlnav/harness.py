"""Episode orchestration, logging, metrics and benchmark suites.

One episode runs the full pipeline: instruction -> prompt -> retrieval ->
per-step planning -> waypoint scaling -> PID -> unicycle step, until success,
collision or timeout. Benchmarks sweep (scenario kind x planner) cells over
seeded episodes and report SR / OS / SPL / NE per cell.
"""
from __future__ import annotations

import concurrent.futures
import enum
import json
import math
import random
from dataclasses import dataclass, field

from . import baselines
from .baselines import APFParams, ScriptedKind
from .controller import ControllerConfig, PIDState, pid_step, scale_waypoint
from .data import default_affordances, default_items
from .encoder import Instruction, Prompt, PromptSource, encode_instruction
from .grid import GridPlanner, planning_grid
from .planner import (
    ObsContext,
    PlannerConfig,
    PlannerParams,
    WaypointPlan,
    goal_viewpoint_obs,
    load_params,
    oracle_plan,
    planner_forward,
)
from .retrieval import (
    GoalPoolEntry,
    RetrievalConfig,
    pool_from_descriptors,
    read_pool,
    retrieve,
)
from .world import (
    ContinuousAction,
    EpisodeStatus,
    GoalObject,
    Scenario,
    ScenarioKind,
    SensorConfig,
    episode_status,
    generate_scenario,
    make_u_trap,
    render_observation,
    step_dynamics,
)


class PlannerChoice(enum.Enum):
    ORACLE = "oracle"
    LEARNED = "learned"
    APF = "apf"
    STRAIGHT = "straight"
    RANDOM = "random"


class EpisodeSetupError(RuntimeError):
    """Configuration or input files prevented the episode from starting."""


@dataclass(frozen=True)
class EpisodeConfig:
    kind: ScenarioKind = ScenarioKind.BOX
    seed: int = 0
    instruction: str = ""
    planner: PlannerChoice = PlannerChoice.ORACLE
    params_path: str | None = None
    pool_path: str | None = None
    items_path: str | None = None
    affordance_path: str | None = None
    bypass_prompting: bool = False
    delta: float = 0.5
    max_steps: int = 600
    r_uav: float = 0.2
    # optional actuation noise (sigma_v, sigma_omega); zero keeps the
    # transition function fully deterministic
    actuation_noise: tuple[float, float] = (0.0, 0.0)
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    sensor: SensorConfig = field(default_factory=SensorConfig)
    planner_cfg: PlannerConfig = field(default_factory=PlannerConfig)
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    apf: APFParams = field(default_factory=APFParams)
    use_u_trap: bool = False  # bundled fixture instead of a generated layout

    def __post_init__(self) -> None:
        if self.delta <= 0 or self.max_steps <= 0:
            raise ValueError("delta and max_steps must be positive")


@dataclass
class StepRecord:
    step: int
    pose: tuple[float, float, float]
    action: tuple[float, float]
    status: str
    plan_distance: float | None = None
    plan_wp0: tuple[float, float] | None = None


@dataclass
class EpisodeLog:
    config: dict
    retrieval: dict
    target_goal_id: str
    steps: list[StepRecord]
    poses: list[tuple[float, float, float]]
    outcome: EpisodeStatus
    path_length: float
    min_goal_distance: float
    final_goal_distance: float
    shortest_path: float


@dataclass(frozen=True)
class Metrics:
    sr: float   # percent
    os: float   # percent
    spl: float  # fraction in [0, 1]
    ne: float   # meters
    n: int


def _load_items(cfg: EpisodeConfig) -> list[str]:
    if cfg.items_path:
        with open(cfg.items_path, "r", encoding="utf-8") as f:
            return json.load(f)
    return default_items()


def _load_affordances(cfg: EpisodeConfig) -> dict[str, str]:
    if cfg.affordance_path:
        with open(cfg.affordance_path, "r", encoding="utf-8") as f:
            return json.load(f)
    return default_affordances()


def _build_pool(cfg: EpisodeConfig, scenario: Scenario) -> list[GoalPoolEntry]:
    if cfg.pool_path:
        return read_pool(cfg.pool_path)
    return pool_from_descriptors(
        [(g.id, g.descriptor) for g in scenario.goals],
        d=cfg.retrieval.dim,
        goal_links=[g.id for g in scenario.goals],
    )


def _resolve_goal(entry: GoalPoolEntry, scenario: Scenario) -> GoalObject:
    if entry.goal_link:
        try:
            return scenario.goal_by_id(entry.goal_link)
        except KeyError:
            pass
    for g in scenario.goals:
        if g.descriptor == entry.descriptor or g.id == entry.id:
            return g
    raise EpisodeSetupError(
        f"retrieved pool entry {entry.id!r} ({entry.descriptor!r}) matches no scenario goal")


def _config_echo(cfg: EpisodeConfig) -> dict:
    return {
        "kind": cfg.kind.value,
        "seed": cfg.seed,
        "instruction": cfg.instruction,
        "planner": cfg.planner.value,
        "params_path": cfg.params_path,
        "pool_path": cfg.pool_path,
        "bypass_prompting": cfg.bypass_prompting,
        "delta": cfg.delta,
        "max_steps": cfg.max_steps,
        "use_u_trap": cfg.use_u_trap,
    }


def run_episode(cfg: EpisodeConfig, params: PlannerParams | None = None) -> EpisodeLog:
    """Run one full pipeline episode; deterministic for a fixed config."""
    scenario = make_u_trap() if cfg.use_u_trap else generate_scenario(cfg.kind, cfg.seed)
    items = _load_items(cfg)
    table = _load_affordances(cfg)

    instruction = cfg.instruction or f"fly to the {scenario.goals[0].descriptor}"
    if cfg.bypass_prompting:
        # ablation: raw instruction text goes straight to retrieval
        prompt = Prompt(text=instruction, source=PromptSource.PASSTHROUGH)
    else:
        prompt = encode_instruction(Instruction(instruction), items, table)

    pool = _build_pool(cfg, scenario)
    result = retrieve(prompt, pool, cfg.retrieval)
    goal = _resolve_goal(pool[result.best_index], scenario)

    if cfg.planner is PlannerChoice.LEARNED:
        if params is None:
            if not cfg.params_path:
                raise EpisodeSetupError("learned planner requires a params file")
            params = load_params(cfg.params_path)
        planner_cfg = params.config
    else:
        planner_cfg = cfg.planner_cfg

    ctrl = cfg.controller
    grid_planner: GridPlanner | None = None
    if cfg.planner is PlannerChoice.ORACLE:
        grid_planner = planning_grid(scenario, goal.position, r_uav=cfg.r_uav)
    goal_obs = None
    frames: list = []
    if cfg.planner is PlannerChoice.LEARNED:
        goal_obs = goal_viewpoint_obs(goal, scenario, cfg.sensor)
    rng = random.Random((cfg.seed << 8) ^ 0xD1CE) if cfg.planner is PlannerChoice.RANDOM else None
    noise_rng = None
    if cfg.actuation_noise != (0.0, 0.0):
        noise_rng = random.Random((cfg.seed << 8) ^ 0x0515E)
    clearance = None
    if cfg.planner is PlannerChoice.APF:
        from .grid import ScenarioClearance

        clearance = ScenarioClearance(scenario)

    pose = scenario.spawn
    state = PIDState()
    steps: list[StepRecord] = []
    poses = [(pose.x, pose.y, pose.heading)]
    goal_dist = pose.distance_to(*goal.position)
    min_goal_distance = goal_dist
    status = episode_status(pose, scenario, goal, cfg.delta, 0, cfg.max_steps, cfg.r_uav)
    step = 0

    while status is EpisodeStatus.RUNNING:
        plan: WaypointPlan | None = None
        if cfg.planner is PlannerChoice.ORACLE:
            plan = oracle_plan(pose, goal, scenario, planner_cfg,
                               planner=grid_planner, r_uav=cfg.r_uav)
        elif cfg.planner is PlannerChoice.LEARNED:
            obs = render_observation(pose, scenario, cfg.sensor, timestamp_step=step)
            frames.append(obs)
            if len(frames) > planner_cfg.context + 1:
                frames.pop(0)
            padded = tuple([frames[0]] * (planner_cfg.context + 1 - len(frames)) + frames)
            plan = planner_forward(ObsContext(frames=padded), goal_obs, params)

        if plan is not None:
            disp = scale_waypoint((float(plan.waypoints[0, 0]), float(plan.waypoints[0, 1])),
                                  ctrl.v_max, ctrl.f_c)
            action = pid_step(disp, ctrl.gains, state, ctrl.dt, ctrl.v_max, ctrl.omega_max)
        elif cfg.planner is PlannerChoice.APF:
            action = baselines.apf_action(pose, goal.position, scenario, cfg.apf, ctrl, state,
                                          r_uav=cfg.r_uav, clearance=clearance)
        elif cfg.planner is PlannerChoice.STRAIGHT:
            action = baselines.scripted_action(ScriptedKind.STRAIGHT_LINE, pose, goal.position,
                                               ctrl, state)
        else:
            action = baselines.scripted_action(ScriptedKind.RANDOM, pose, goal.position,
                                               ctrl, state, rng=rng)

        if noise_rng is not None:
            sv, sw = cfg.actuation_noise
            action = ContinuousAction(
                v=min(ctrl.v_max, max(0.0, action.v + noise_rng.gauss(0.0, sv))),
                omega=min(ctrl.omega_max, max(-ctrl.omega_max,
                                              action.omega + noise_rng.gauss(0.0, sw))))
        pose = step_dynamics(pose, action, ctrl.dt)
        step += 1
        status = episode_status(pose, scenario, goal, cfg.delta, step, cfg.max_steps, cfg.r_uav)
        poses.append((pose.x, pose.y, pose.heading))
        min_goal_distance = min(min_goal_distance, pose.distance_to(*goal.position))
        steps.append(StepRecord(
            step=step,
            pose=(pose.x, pose.y, pose.heading),
            action=(action.v, action.omega),
            status=status.value,
            plan_distance=None if plan is None else plan.temporal_distance,
            plan_wp0=None if plan is None else (float(plan.waypoints[0, 0]),
                                                float(plan.waypoints[0, 1])),
        ))

    # l_i always comes from the bare-radius grid so cells stay comparable
    shortest = GridPlanner(scenario, goal.position, inflation=cfg.r_uav) \
        .octile_distance_from(scenario.spawn.x, scenario.spawn.y)

    path_length = 0.0
    for (x1, y1, _), (x2, y2, _) in zip(poses, poses[1:]):
        path_length += math.hypot(x2 - x1, y2 - y1)

    return EpisodeLog(
        config=_config_echo(cfg),
        retrieval={
            "prompt": prompt.text,
            "source": prompt.source.value,
            "best_id": result.best_id,
            "best_index": result.best_index,
            "probs": [float(p) for p in result.probs],
        },
        target_goal_id=goal.id,
        steps=steps,
        poses=poses,
        outcome=status,
        path_length=path_length,
        min_goal_distance=min_goal_distance,
        final_goal_distance=pose.distance_to(*goal.position),
        shortest_path=shortest,
    )


def shortest_path_length(scenario: Scenario, goal: GoalObject, r_uav: float = 0.2) -> float:
    """Octile grid shortest path (meters) from the scenario spawn to the goal."""
    planner = GridPlanner(scenario, goal.position, inflation=r_uav)
    return planner.octile_distance_from(scenario.spawn.x, scenario.spawn.y)


def compute_metrics(logs: list[EpisodeLog], delta: float = 0.5) -> Metrics:
    """SR / OS / SPL / NE over a batch of episode logs."""
    if not logs:
        raise ValueError("need at least one episode log")
    n = len(logs)
    successes = sum(1 for lg in logs if lg.outcome is EpisodeStatus.SUCCESS)
    oracle_hits = sum(1 for lg in logs if lg.min_goal_distance <= delta)
    spl = 0.0
    for lg in logs:
        if lg.outcome is not EpisodeStatus.SUCCESS:
            continue
        denom = max(lg.path_length, lg.shortest_path)
        spl += 1.0 if denom == 0.0 else lg.shortest_path / denom
    return Metrics(
        sr=100.0 * successes / n,
        os=100.0 * oracle_hits / n,
        spl=spl / n,
        ne=sum(lg.final_goal_distance for lg in logs) / n,
        n=n,
    )


# --- benchmark suites -----------------------------------------------------------

@dataclass(frozen=True)
class SuiteConfig:
    scenarios: tuple[ScenarioKind, ...] = (ScenarioKind.BOX,)
    planners: tuple[PlannerChoice, ...] = (PlannerChoice.ORACLE,)
    episodes: int = 50
    seed_base: int = 0
    instruction_template: str = "fly to the {item}"
    delta: float = 0.5
    max_steps: int = 600
    params_path: str | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "SuiteConfig":
        return cls(
            scenarios=tuple(ScenarioKind(k) for k in d.get("scenarios", ["box"])),
            planners=tuple(PlannerChoice(p) for p in d.get("planners", ["oracle"])),
            episodes=int(d.get("episodes", 50)),
            seed_base=int(d.get("seed_base", 0)),
            instruction_template=d.get("instruction_template", "fly to the {item}"),
            delta=float(d.get("delta", 0.5)),
            max_steps=int(d.get("max_steps", 600)),
            params_path=d.get("params_path"),
        )


def episode_config_for(suite: SuiteConfig, kind: ScenarioKind, planner: PlannerChoice,
                       seed: int) -> EpisodeConfig:
    scenario = generate_scenario(kind, seed)
    target = scenario.goals[seed % len(scenario.goals)]
    instruction = suite.instruction_template.format(item=target.descriptor)
    return EpisodeConfig(
        kind=kind,
        seed=seed,
        instruction=instruction,
        planner=planner,
        params_path=suite.params_path if planner is PlannerChoice.LEARNED else None,
        delta=suite.delta,
        max_steps=suite.max_steps,
    )


def _episode_task(task: tuple[SuiteConfig, ScenarioKind, PlannerChoice, int]):
    """Worker body: never raises, so one bad episode cannot abort a suite."""
    suite, kind, planner, seed = task
    try:
        return run_episode(episode_config_for(suite, kind, planner, seed))
    except Exception as exc:  # aggregated into the report
        return {"seed": seed, "error": type(exc).__name__, "message": str(exc)}


def run_benchmark(suite: SuiteConfig, workers: int = 1) -> tuple[dict, dict]:
    """Run every (scenario x planner) cell; returns (report, logs-by-cell).

    Episodes are keyed by seed so parallel execution cannot change the output;
    per-episode failures land in the cell's "errors" list.
    """
    cell_logs: dict[tuple[str, str], list[EpisodeLog]] = {}
    cell_errors: dict[tuple[str, str], list[dict]] = {}
    for kind in suite.scenarios:
        for planner in suite.planners:
            tasks = [(suite, kind, planner, suite.seed_base + i)
                     for i in range(suite.episodes)]
            if workers > 1:
                with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
                    results = list(pool.map(_episode_task, tasks))
            else:
                results = [_episode_task(t) for t in tasks]
            key = (kind.value, planner.value)
            cell_logs[key] = [r for r in results if isinstance(r, EpisodeLog)]
            cell_errors[key] = [r for r in results if not isinstance(r, EpisodeLog)]

    cells = []
    for (kind, planner), logs in sorted(cell_logs.items()):
        errors = cell_errors[(kind, planner)]
        if logs:
            m = compute_metrics(logs, suite.delta)
            metrics = {"SR": m.sr, "OS": m.os, "SPL": m.spl, "NE": m.ne, "N": m.n}
        else:
            metrics = {"SR": 0.0, "OS": 0.0, "SPL": 0.0, "NE": math.inf, "N": 0}
        cells.append({
            "scenario": kind,
            "planner": planner,
            "metrics": metrics,
            "errors": errors,
            "episodes": [
                {
                    "seed": lg.config["seed"],
                    "outcome": lg.outcome.value,
                    "path_length": lg.path_length,
                    "shortest_path": lg.shortest_path,
                    "min_goal_distance": lg.min_goal_distance,
                    "final_goal_distance": lg.final_goal_distance,
                }
                for lg in logs
            ],
        })
    report = {
        "suite": {
            "scenarios": [k.value for k in suite.scenarios],
            "planners": [p.value for p in suite.planners],
            "episodes": suite.episodes,
            "seed_base": suite.seed_base,
            "instruction_template": suite.instruction_template,
            "delta": suite.delta,
            "max_steps": suite.max_steps,
        },
        "cells": cells,
    }
    return report, cell_logs


def format_report_table(report: dict) -> str:
    """Fixed-width text rendering of the per-cell metrics."""
    lines = [f"{'scenario':<12}{'planner':<10}{'N':>5}{'SR':>8}{'OS':>8}{'SPL':>8}{'NE':>8}"]
    for cell in report["cells"]:
        m = cell["metrics"]
        lines.append(
            f"{cell['scenario']:<12}{cell['planner']:<10}{m['N']:>5}"
            f"{m['SR']:>8.1f}{m['OS']:>8.1f}{m['SPL']:>8.3f}{m['NE']:>8.2f}")
    return "\n".join(lines)


def report_to_json(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2)


def episode_log_to_jsonl(log: EpisodeLog) -> str:
    """One JSON line per step record, preceded by a summary line."""
    lines = [json.dumps({
        "config": log.config,
        "retrieval": log.retrieval,
        "target_goal_id": log.target_goal_id,
        "outcome": log.outcome.value,
        "path_length": log.path_length,
        "shortest_path": log.shortest_path,
        "min_goal_distance": log.min_goal_distance,
        "final_goal_distance": log.final_goal_distance,
    }, sort_keys=True)]
    for rec in log.steps:
        lines.append(json.dumps({
            "step": rec.step,
            "pose": list(rec.pose),
            "action": list(rec.action),
            "status": rec.status,
            "plan_distance": rec.plan_distance,
            "plan_wp0": None if rec.plan_wp0 is None else list(rec.plan_wp0),
        }, sort_keys=True))
    return "\n".join(lines) + "\n"
