"""Goal-conditioned waypoint planning.

Two planners share one output contract (a temporal distance estimate plus H
normalized body-frame waypoints): a geometric oracle that samples a smoothed
grid shortest path, and a small transformer trained by imitation on oracle
rollouts. The network is plain numpy with hand-written gradients so training
stays dependency-free and exactly reproducible.
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from .controller import ControllerConfig, PIDState, pid_step, scale_waypoint
from .geometry import body_frame
from .grid import GridPlanner, planning_grid, polyline_length, sample_at_arclength
from .world import (
    ContinuousAction,
    EgoObservation,
    EpisodeStatus,
    GoalObject,
    Pose,
    Scenario,
    ScenarioKind,
    SensorConfig,
    episode_status,
    generate_scenario,
    in_collision,
    render_observation,
    step_dynamics,
)

PARAMS_MAGIC = b"VLFP"
PARAMS_VERSION = 1
LN_EPS = 1e-5

SEMANTIC_CLASSES = 5  # free/wall, obstacle, goal 1..3


class ShapeMismatchError(ValueError):
    pass


class DivergenceError(RuntimeError):
    """Training loss became non-finite."""


@dataclass(frozen=True)
class PlannerConfig:
    context: int = 5          # P past frames; the network sees P+1
    horizon: int = 5          # H waypoints
    rays: int = 64
    d_max: float = 10.0
    d_model: int = 64
    n_blocks: int = 2
    d_ff: int = 128
    waypoint_stride: int = 8  # arc-length spacing in units of v_max/f_c
    norm_scale: float = 4.0   # meters mapped to waypoint magnitude 1
    d_norm: float = 100.0     # steps; temporal-distance scale inside the loss
    v_max: float = 1.0
    f_c: float = 15.0

    @property
    def tokens(self) -> int:
        return self.context + 2  # P+1 frames plus the goal-fusion token

    @property
    def frame_features(self) -> int:
        return self.rays * (1 + SEMANTIC_CLASSES)

    @property
    def step_len(self) -> float:
        return self.v_max / self.f_c


@dataclass(frozen=True)
class WaypointPlan:
    """Temporal distance (expected steps to goal) and H normalized waypoints."""

    temporal_distance: float
    waypoints: np.ndarray  # (H, 2), components in [-1, 1]

    def __post_init__(self) -> None:
        wp = np.asarray(self.waypoints, dtype=np.float64)
        if wp.ndim != 2 or wp.shape[1] != 2:
            raise ValueError("waypoints must have shape (H, 2)")
        if not np.all(np.isfinite(wp)) or np.any(np.abs(wp) > 1.0 + 1e-12):
            raise ValueError("waypoint components must be finite and in [-1, 1]")
        if not (math.isfinite(self.temporal_distance) and self.temporal_distance >= 0.0):
            raise ValueError("temporal distance must be finite and nonnegative")
        object.__setattr__(self, "waypoints", wp)


@dataclass(frozen=True)
class ObsContext:
    """P+1 egocentric frames, oldest first."""

    frames: tuple[EgoObservation, ...]


@dataclass(frozen=True)
class ImitationSample:
    context: ObsContext
    goal_obs: EgoObservation
    target_plan: WaypointPlan


@dataclass
class PlannerParams:
    config: PlannerConfig
    tensors: dict[str, np.ndarray]

    def copy(self) -> "PlannerParams":
        return PlannerParams(self.config, {k: v.copy() for k, v in self.tensors.items()})


# --- geometric oracle ----------------------------------------------------------

def oracle_plan(pose: Pose, goal: GoalObject, scenario: Scenario, cfg: PlannerConfig,
                planner: GridPlanner | None = None, r_uav: float = 0.2) -> WaypointPlan:
    """Plan along the smoothed grid shortest path from the pose to the goal.

    Waypoints are sampled at arc-length spacing step_len * waypoint_stride,
    converted to the body frame and normalized by norm_scale with clamping.
    """
    planner = planner or GridPlanner(scenario, goal.position, inflation=r_uav)
    path = planner.path_from(pose)
    length = polyline_length(path)
    spacing = cfg.step_len * cfg.waypoint_stride
    wps = np.zeros((cfg.horizon, 2))
    for k in range(1, cfg.horizon + 1):
        px, py = sample_at_arclength(path, k * spacing)
        bx, by = body_frame(px - pose.x, py - pose.y, pose.heading)
        wps[k - 1, 0] = min(1.0, max(-1.0, bx / cfg.norm_scale))
        wps[k - 1, 1] = min(1.0, max(-1.0, by / cfg.norm_scale))
    return WaypointPlan(temporal_distance=length / cfg.step_len, waypoints=wps)


def goal_viewpoint_obs(goal: GoalObject, scenario: Scenario, sensor: SensorConfig,
                       standoff: float = 1.0) -> EgoObservation:
    """Panorama standing in for the goal image: camera near the goal, facing it.

    The viewpoint sits `standoff` meters from the goal center on the side of
    the scenario spawn; if that point is blocked the bearing rotates in fixed
    increments until a free spot is found.
    """
    gx, gy = goal.position
    base = math.atan2(scenario.spawn.y - gy, scenario.spawn.x - gx)
    dist = max(standoff, goal.radius + 0.5)
    for k in range(12):
        ang = base + k * (math.pi / 6.0)
        vx, vy = gx + dist * math.cos(ang), gy + dist * math.sin(ang)
        cam = Pose(vx, vy, math.atan2(gy - vy, gx - vx))
        if scenario.bounds.contains(vx, vy, margin=0.05) and not in_collision(cam, scenario, 0.05):
            return render_observation(cam, scenario, sensor)
    cam = Pose(gx + dist * math.cos(base), gy + dist * math.sin(base), base + math.pi)
    return render_observation(cam, scenario, sensor)


# --- feature extraction --------------------------------------------------------

def _semantic_class(sem: np.ndarray) -> np.ndarray:
    """Map raw semantic ids to class indices: free 0, obstacle 1, goal k -> 1+k."""
    cls = np.zeros_like(sem)
    cls = np.where(sem == 255, 1, cls)
    goal = (sem > 0) & (sem != 255)
    cls = np.where(goal, np.minimum(sem, SEMANTIC_CLASSES - 2) + 1, cls)
    return cls


def frame_features(obs: EgoObservation, cfg: PlannerConfig) -> np.ndarray:
    """Flattened (depth, semantic one-hot) panorama; shape (rays * 6,)."""
    if obs.depths.size != cfg.rays:
        raise ShapeMismatchError(f"observation has {obs.depths.size} rays, planner expects {cfg.rays}")
    depth = obs.depths / cfg.d_max
    onehot = np.zeros((cfg.rays, SEMANTIC_CLASSES))
    onehot[np.arange(cfg.rays), _semantic_class(obs.semantics)] = 1.0
    return np.concatenate([depth, onehot.reshape(-1)])


def context_features(context: ObsContext, goal_obs: EgoObservation,
                     cfg: PlannerConfig) -> tuple[np.ndarray, np.ndarray]:
    if len(context.frames) != cfg.context + 1:
        raise ShapeMismatchError(
            f"context holds {len(context.frames)} frames, planner expects {cfg.context + 1}")
    frames = np.stack([frame_features(f, cfg) for f in context.frames])
    fused = np.concatenate([frame_features(context.frames[-1], cfg),
                            frame_features(goal_obs, cfg)])
    return frames, fused


# --- parameters ------------------------------------------------------------------

def _tensor_specs(cfg: PlannerConfig) -> list[tuple[str, tuple[int, ...]]]:
    f = cfg.frame_features
    d = cfg.d_model
    specs: list[tuple[str, tuple[int, ...]]] = [
        ("psi.W1", (f, d)), ("psi.b1", (d,)), ("psi.W2", (d, d)), ("psi.b2", (d,)),
        ("phi.W1", (2 * f, d)), ("phi.b1", (d,)), ("phi.W2", (d, d)), ("phi.b2", (d,)),
        ("pos", (cfg.tokens, d)),
    ]
    for l in range(cfg.n_blocks):
        p = f"blk{l}."
        specs += [
            (p + "Wq", (d, d)), (p + "bq", (d,)),
            (p + "Wk", (d, d)), (p + "bk", (d,)),
            (p + "Wv", (d, d)), (p + "bv", (d,)),
            (p + "Wo", (d, d)), (p + "bo", (d,)),
            (p + "ln1.g", (d,)), (p + "ln1.b", (d,)),
            (p + "F1", (d, cfg.d_ff)), (p + "c1", (cfg.d_ff,)),
            (p + "F2", (cfg.d_ff, d)), (p + "c2", (d,)),
            (p + "ln2.g", (d,)), (p + "ln2.b", (d,)),
        ]
    specs += [
        ("head.W1", (d, d)), ("head.b1", (d,)),
        ("head.W2", (d, 1 + 2 * cfg.horizon)), ("head.b2", (1 + 2 * cfg.horizon,)),
    ]
    return specs


def init_params(cfg: PlannerConfig, seed: int = 0) -> PlannerParams:
    """Uniform +-1/sqrt(fan_in) weights, zero biases, unit layer-norm gains."""
    rng = np.random.default_rng(seed)
    tensors: dict[str, np.ndarray] = {}
    for name, shape in _tensor_specs(cfg):
        if name.endswith(".g"):
            tensors[name] = np.ones(shape)
        elif len(shape) == 1:
            tensors[name] = np.zeros(shape)
        else:
            bound = 1.0 / math.sqrt(shape[0])
            tensors[name] = rng.uniform(-bound, bound, size=shape)
    # positional encodings get the same uniform treatment as weights
    bound = 1.0 / math.sqrt(cfg.d_model)
    tensors["pos"] = rng.uniform(-bound, bound, size=(cfg.tokens, cfg.d_model))
    return PlannerParams(config=cfg, tensors=tensors)


def _check_shapes(params: PlannerParams) -> None:
    for name, shape in _tensor_specs(params.config):
        t = params.tensors.get(name)
        if t is None or t.shape != shape:
            raise ShapeMismatchError(f"tensor {name} missing or has shape "
                                     f"{None if t is None else t.shape}, expected {shape}")


# --- forward / backward ----------------------------------------------------------

def _softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _layer_norm(x: np.ndarray, g: np.ndarray, b: np.ndarray):
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = (x - mu) * inv
    return g * xhat + b, (xhat, inv)


def _layer_norm_backward(dy: np.ndarray, g: np.ndarray, cache):
    xhat, inv = cache
    dg = (dy * xhat).sum(axis=(0, 1))
    db = dy.sum(axis=(0, 1))
    dxhat = dy * g
    dx = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
    return dx, dg, db


def _forward_batch(frames: np.ndarray, fused: np.ndarray, params: PlannerParams,
                   want_cache: bool = False):
    """Network forward pass.

    frames: (B, P+1, F), fused: (B, 2F). Returns raw head output (B, 1+2H)
    and, when requested, the cache needed for the backward pass.
    """
    _check_shapes(params)
    t = params.tensors
    cfg = params.config
    b_sz, n_frames, feat = frames.shape
    if n_frames != cfg.context + 1 or feat != cfg.frame_features:
        raise ShapeMismatchError(f"frames shaped {frames.shape}, expected "
                                 f"(B, {cfg.context + 1}, {cfg.frame_features})")

    flat = frames.reshape(b_sz * n_frames, feat)
    psi_h = np.tanh(flat @ t["psi.W1"] + t["psi.b1"])
    tokens = (psi_h @ t["psi.W2"] + t["psi.b2"]).reshape(b_sz, n_frames, cfg.d_model)
    phi_h = np.tanh(fused @ t["phi.W1"] + t["phi.b1"])
    fusion = phi_h @ t["phi.W2"] + t["phi.b2"]

    x = np.concatenate([tokens, fusion[:, None, :]], axis=1) + t["pos"]
    scale = 1.0 / math.sqrt(cfg.d_model)
    blocks = []
    for l in range(cfg.n_blocks):
        p = f"blk{l}."
        x_in = x
        q = x @ t[p + "Wq"] + t[p + "bq"]
        k = x @ t[p + "Wk"] + t[p + "bk"]
        v = x @ t[p + "Wv"] + t[p + "bv"]
        s = np.einsum("bqd,bkd->bqk", q, k) * scale
        s = s - s.max(axis=-1, keepdims=True)
        attn = np.exp(s)
        attn /= attn.sum(axis=-1, keepdims=True)
        mix = np.einsum("bqk,bkd->bqd", attn, v)
        out = mix @ t[p + "Wo"] + t[p + "bo"]
        x1, ln1_cache = _layer_norm(x_in + out, t[p + "ln1.g"], t[p + "ln1.b"])
        ff_h = np.tanh(x1 @ t[p + "F1"] + t[p + "c1"])
        ff = ff_h @ t[p + "F2"] + t[p + "c2"]
        x2, ln2_cache = _layer_norm(x1 + ff, t[p + "ln2.g"], t[p + "ln2.b"])
        if want_cache:
            blocks.append((x_in, q, k, v, attn, mix, x1, ln1_cache, ff_h, ln2_cache))
        x = x2

    pooled = x.mean(axis=1)
    head_h = np.tanh(pooled @ t["head.W1"] + t["head.b1"])
    raw = head_h @ t["head.W2"] + t["head.b2"]
    if not want_cache:
        return raw, None
    cache = {
        "flat": flat, "psi_h": psi_h, "fused": fused, "phi_h": phi_h,
        "blocks": blocks, "x_final": x, "pooled": pooled, "head_h": head_h,
        "b_sz": b_sz, "n_frames": n_frames,
    }
    return raw, cache


def _outputs_from_raw(raw: np.ndarray, horizon: int) -> tuple[np.ndarray, np.ndarray]:
    d_hat = _softplus(raw[:, 0])
    wps = np.tanh(raw[:, 1:]).reshape(raw.shape[0], horizon, 2)
    return d_hat, wps


def planner_forward(context: ObsContext, goal_obs: EgoObservation,
                    params: PlannerParams) -> WaypointPlan:
    """Deterministic single-sample inference."""
    cfg = params.config
    frames, fused = context_features(context, goal_obs, cfg)
    raw, _ = _forward_batch(frames[None], fused[None], params)
    d_hat, wps = _outputs_from_raw(raw, cfg.horizon)
    return WaypointPlan(temporal_distance=float(d_hat[0]), waypoints=wps[0])


def planner_loss(pred: WaypointPlan, target: WaypointPlan, lambda_d: float = 0.1,
                 d_norm: float = 100.0) -> float:
    """Mean squared waypoint error plus weighted squared temporal-distance error."""
    if pred.waypoints.shape != target.waypoints.shape:
        raise ShapeMismatchError("plans have different horizons")
    wp_term = float(np.mean((pred.waypoints - target.waypoints) ** 2))
    d_term = ((pred.temporal_distance - target.temporal_distance) / d_norm) ** 2
    return wp_term + lambda_d * d_term


def _batch_loss_and_grads(params: PlannerParams, frames: np.ndarray, fused: np.ndarray,
                          wp_t: np.ndarray, d_t: np.ndarray, lambda_d: float,
                          want_grads: bool = True):
    cfg = params.config
    t = params.tensors
    b_sz = frames.shape[0]
    raw, cache = _forward_batch(frames, fused, params, want_cache=want_grads)
    d_hat, wps = _outputs_from_raw(raw, cfg.horizon)

    wp_err = wps - wp_t
    loss = float(np.mean(np.mean(wp_err ** 2, axis=(1, 2))
                         + lambda_d * ((d_hat - d_t) / cfg.d_norm) ** 2))
    if not want_grads:
        return loss, None

    grads = {name: np.zeros_like(tensor) for name, tensor in t.items()}

    # loss -> raw head outputs
    draw = np.zeros_like(raw)
    draw[:, 0] = (2.0 * lambda_d * (d_hat - d_t) / (cfg.d_norm ** 2)) / b_sz
    draw[:, 0] *= _sigmoid(raw[:, 0])  # softplus'
    dwp = (2.0 * wp_err / (2.0 * cfg.horizon)) / b_sz
    draw[:, 1:] = (dwp * (1.0 - wps ** 2)).reshape(b_sz, 2 * cfg.horizon)

    # head
    grads["head.W2"] = cache["head_h"].T @ draw
    grads["head.b2"] = draw.sum(axis=0)
    dhead_h = draw @ t["head.W2"].T
    dpooled_pre = dhead_h * (1.0 - cache["head_h"] ** 2)
    grads["head.W1"] = cache["pooled"].T @ dpooled_pre
    grads["head.b1"] = dpooled_pre.sum(axis=0)
    dpooled = dpooled_pre @ t["head.W1"].T

    n_tok = cfg.tokens
    dx = np.repeat(dpooled[:, None, :], n_tok, axis=1) / n_tok

    scale = 1.0 / math.sqrt(cfg.d_model)
    for l in reversed(range(cfg.n_blocks)):
        p = f"blk{l}."
        x_in, q, k, v, attn, mix, x1, ln1_cache, ff_h, ln2_cache = cache["blocks"][l]
        dz2, dg2, db2 = _layer_norm_backward(dx, t[p + "ln2.g"], ln2_cache)
        grads[p + "ln2.g"] += dg2
        grads[p + "ln2.b"] += db2
        dx1 = dz2.copy()
        dff = dz2
        grads[p + "F2"] += np.einsum("btf,btd->fd", ff_h, dff)
        grads[p + "c2"] += dff.sum(axis=(0, 1))
        dff_h = dff @ t[p + "F2"].T
        dff_pre = dff_h * (1.0 - ff_h ** 2)
        grads[p + "F1"] += np.einsum("btd,btf->df", x1, dff_pre)
        grads[p + "c1"] += dff_pre.sum(axis=(0, 1))
        dx1 += dff_pre @ t[p + "F1"].T

        dz1, dg1, db1 = _layer_norm_backward(dx1, t[p + "ln1.g"], ln1_cache)
        grads[p + "ln1.g"] += dg1
        grads[p + "ln1.b"] += db1
        dx_in = dz1.copy()
        dout = dz1
        grads[p + "Wo"] += np.einsum("btd,bte->de", mix, dout)
        grads[p + "bo"] += dout.sum(axis=(0, 1))
        dmix = dout @ t[p + "Wo"].T
        dattn = np.einsum("bqd,bkd->bqk", dmix, v)
        dv = np.einsum("bqk,bqd->bkd", attn, dmix)
        ds = attn * (dattn - (dattn * attn).sum(axis=-1, keepdims=True))
        dq = np.einsum("bqk,bkd->bqd", ds, k) * scale
        dk = np.einsum("bqk,bqd->bkd", ds, q) * scale
        grads[p + "Wq"] += np.einsum("btd,bte->de", x_in, dq)
        grads[p + "bq"] += dq.sum(axis=(0, 1))
        grads[p + "Wk"] += np.einsum("btd,bte->de", x_in, dk)
        grads[p + "bk"] += dk.sum(axis=(0, 1))
        grads[p + "Wv"] += np.einsum("btd,bte->de", x_in, dv)
        grads[p + "bv"] += dv.sum(axis=(0, 1))
        dx_in += dq @ t[p + "Wq"].T + dk @ t[p + "Wk"].T + dv @ t[p + "Wv"].T
        dx = dx_in

    grads["pos"] = dx.sum(axis=0)

    n_frames = cache["n_frames"]
    dtokens = dx[:, :n_frames, :].reshape(b_sz * n_frames, cfg.d_model)
    dfusion = dx[:, n_frames, :]

    grads["psi.W2"] = cache["psi_h"].T @ dtokens
    grads["psi.b2"] = dtokens.sum(axis=0)
    dpsi_h = dtokens @ t["psi.W2"].T
    dpsi_pre = dpsi_h * (1.0 - cache["psi_h"] ** 2)
    grads["psi.W1"] = cache["flat"].T @ dpsi_pre
    grads["psi.b1"] = dpsi_pre.sum(axis=0)

    grads["phi.W2"] = cache["phi_h"].T @ dfusion
    grads["phi.b2"] = dfusion.sum(axis=0)
    dphi_h = dfusion @ t["phi.W2"].T
    dphi_pre = dphi_h * (1.0 - cache["phi_h"] ** 2)
    grads["phi.W1"] = cache["fused"].T @ dphi_pre
    grads["phi.b1"] = dphi_pre.sum(axis=0)

    return loss, grads


def samples_to_arrays(batch: list[ImitationSample], cfg: PlannerConfig):
    frames = np.stack([context_features(s.context, s.goal_obs, cfg)[0] for s in batch])
    fused = np.stack([context_features(s.context, s.goal_obs, cfg)[1] for s in batch])
    wp_t = np.stack([s.target_plan.waypoints for s in batch])
    d_t = np.array([s.target_plan.temporal_distance for s in batch])
    return frames, fused, wp_t, d_t


GOAL_CLASS_PERMUTATIONS = (
    (1, 2, 3), (1, 3, 2), (2, 1, 3), (2, 3, 1), (3, 1, 2), (3, 2, 1),
)


def permute_goal_classes(obs: EgoObservation, perm: tuple[int, int, int]) -> EgoObservation:
    """Relabel goal semantic ids 1..3 by a permutation; other ids unchanged."""
    sem = obs.semantics.copy()
    out = sem.copy()
    for src, dst in zip((1, 2, 3), perm):
        out[sem == src] = dst
    return EgoObservation(depths=obs.depths, semantics=out, fov=obs.fov,
                          timestamp_step=obs.timestamp_step)


def augment_goal_permutations(samples: list[ImitationSample]) -> list[ImitationSample]:
    """Every goal-class relabeling is an equally valid scene, so the targets
    carry over unchanged; teaches the planner to read the target class from
    the goal view instead of memorizing class priors."""
    out: list[ImitationSample] = []
    for perm in GOAL_CLASS_PERMUTATIONS:
        for s in samples:
            if perm == (1, 2, 3):
                out.append(s)
                continue
            out.append(ImitationSample(
                context=ObsContext(frames=tuple(permute_goal_classes(f, perm)
                                                for f in s.context.frames)),
                goal_obs=permute_goal_classes(s.goal_obs, perm),
                target_plan=s.target_plan,
            ))
    return out


def planner_gradients(params: PlannerParams, batch: list[ImitationSample],
                      lambda_d: float = 0.1) -> dict[str, np.ndarray]:
    """Exact analytic gradients of the mean batch loss for every tensor."""
    if not batch:
        raise ValueError("batch must be nonempty")
    frames, fused, wp_t, d_t = samples_to_arrays(batch, params.config)
    _, grads = _batch_loss_and_grads(params, frames, fused, wp_t, d_t, lambda_d)
    return grads


def batch_loss(params: PlannerParams, batch: list[ImitationSample],
               lambda_d: float = 0.1) -> float:
    frames, fused, wp_t, d_t = samples_to_arrays(batch, params.config)
    loss, _ = _batch_loss_and_grads(params, frames, fused, wp_t, d_t, lambda_d,
                                    want_grads=False)
    return loss


# --- dataset ---------------------------------------------------------------------

def sample_to_dict(s: ImitationSample) -> dict:
    return {
        "frames": [
            {"depths": f.depths.tolist(), "semantics": f.semantics.tolist()}
            for f in s.context.frames
        ],
        "goal_frame": {
            "depths": s.goal_obs.depths.tolist(),
            "semantics": s.goal_obs.semantics.tolist(),
        },
        "fov": s.context.frames[0].fov,
        "target": {
            "temporal_distance": s.target_plan.temporal_distance,
            "waypoints": s.target_plan.waypoints.tolist(),
        },
    }


def sample_from_dict(d: dict) -> ImitationSample:
    fov = float(d["fov"])

    def obs(rec: dict, step: int) -> EgoObservation:
        return EgoObservation(
            depths=np.asarray(rec["depths"], dtype=np.float64),
            semantics=np.asarray(rec["semantics"], dtype=np.int64),
            fov=fov,
            timestamp_step=step,
        )

    frames = tuple(obs(rec, i) for i, rec in enumerate(d["frames"]))
    return ImitationSample(
        context=ObsContext(frames=frames),
        goal_obs=obs(d["goal_frame"], len(frames)),
        target_plan=WaypointPlan(
            temporal_distance=float(d["target"]["temporal_distance"]),
            waypoints=np.asarray(d["target"]["waypoints"], dtype=np.float64),
        ),
    )


def load_dataset(path: str) -> list[ImitationSample]:
    samples = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                samples.append(sample_from_dict(json.loads(line)))
    if not samples:
        raise ValueError(f"dataset {path} is empty")
    return samples


@dataclass(frozen=True)
class ExportConfig:
    kind: ScenarioKind = ScenarioKind.BOX
    episodes: int = 10
    seed: int = 0
    max_steps: int = 600
    delta: float = 0.5
    r_uav: float = 0.2
    # actuation noise during collection widens state coverage; targets are
    # still oracle plans at the visited poses (labels stay clean)
    noise_v: float = 0.15
    noise_w: float = 0.6
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    sensor: SensorConfig = field(default_factory=SensorConfig)
    controller: ControllerConfig = field(default_factory=ControllerConfig)


def rollout_oracle_episode(scenario: Scenario, goal: GoalObject, cfg: ExportConfig,
                           collect: list[ImitationSample] | None = None,
                           noise_rng: np.random.Generator | None = None) -> str:
    """Drive the oracle planner closed-loop; optionally collect one sample per step."""
    planner = planning_grid(scenario, goal.position, r_uav=cfg.r_uav)
    goal_obs = goal_viewpoint_obs(goal, scenario, cfg.sensor)
    pose = scenario.spawn
    state = PIDState()
    ctrl = cfg.controller
    frames: list[EgoObservation] = []
    status = episode_status(pose, scenario, goal, cfg.delta, 0, cfg.max_steps, cfg.r_uav)
    step = 0
    while status is EpisodeStatus.RUNNING:
        obs = render_observation(pose, scenario, cfg.sensor, timestamp_step=step)
        frames.append(obs)
        if len(frames) > cfg.planner.context + 1:
            frames.pop(0)
        padded = tuple([frames[0]] * (cfg.planner.context + 1 - len(frames)) + frames)
        plan = oracle_plan(pose, goal, scenario, cfg.planner, planner=planner, r_uav=cfg.r_uav)
        if collect is not None:
            collect.append(ImitationSample(context=ObsContext(frames=padded),
                                           goal_obs=goal_obs, target_plan=plan))
        disp = scale_waypoint(tuple(plan.waypoints[0]), ctrl.v_max, ctrl.f_c)
        action = pid_step(disp, ctrl.gains, state, ctrl.dt, ctrl.v_max, ctrl.omega_max)
        if noise_rng is not None:
            v = min(ctrl.v_max, max(0.0, action.v + cfg.noise_v * noise_rng.standard_normal()))
            w = min(ctrl.omega_max, max(-ctrl.omega_max,
                                        action.omega + cfg.noise_w * noise_rng.standard_normal()))
            action = ContinuousAction(v=v, omega=w)
        pose = step_dynamics(pose, action, ctrl.dt)
        step += 1
        status = episode_status(pose, scenario, goal, cfg.delta, step, cfg.max_steps, cfg.r_uav)
    return status.value


def export_oracle_dataset(cfg: ExportConfig, path: str) -> int:
    """Roll out oracle episodes and write one JSONL record per control step."""
    if cfg.episodes <= 0:
        raise ValueError("episode count must be positive")
    samples: list[ImitationSample] = []
    for ep in range(cfg.episodes):
        scenario = generate_scenario(cfg.kind, cfg.seed + ep)
        goal = scenario.goals[(cfg.seed + ep) % len(scenario.goals)]
        noise_rng = None
        if cfg.noise_v > 0.0 or cfg.noise_w > 0.0:
            noise_rng = np.random.default_rng((cfg.seed + ep) * 2 + 1)
        rollout_oracle_episode(scenario, goal, cfg, collect=samples, noise_rng=noise_rng)
    with open(path, "w", encoding="utf-8") as f:
        for s in samples:
            f.write(json.dumps(sample_to_dict(s), sort_keys=True))
            f.write("\n")
    return len(samples)


# --- training --------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    lr: float = 0.2
    batch_size: int = 32
    lambda_d: float = 0.1
    momentum: float = 0.9
    seed: int = 0


@dataclass
class TrainResult:
    params: PlannerParams
    epoch_losses: list[float]


def train_planner(samples: list[ImitationSample], hyper: TrainConfig,
                  cfg: PlannerConfig | None = None,
                  init: PlannerParams | None = None) -> TrainResult:
    """Mini-batch gradient descent (classical momentum), seeded shuffling and init."""
    if not samples:
        raise ValueError("dataset must be nonempty")
    cfg = cfg or (init.config if init else PlannerConfig())
    params = init.copy() if init else init_params(cfg, seed=hyper.seed)
    frames, fused, wp_t, d_t = samples_to_arrays(samples, cfg)
    n = frames.shape[0]
    rng = np.random.default_rng(hyper.seed + 1)
    velocity = {name: np.zeros_like(t) for name, t in params.tensors.items()}
    losses: list[float] = []
    for _ in range(hyper.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        batches = 0
        for start in range(0, n, hyper.batch_size):
            idx = order[start:start + hyper.batch_size]
            loss, grads = _batch_loss_and_grads(
                params, frames[idx], fused[idx], wp_t[idx], d_t[idx], hyper.lambda_d)
            if not math.isfinite(loss):
                raise DivergenceError(f"training loss became {loss}")
            if hyper.lr != 0.0:
                for name, g in grads.items():
                    velocity[name] = hyper.momentum * velocity[name] + g
                    params.tensors[name] -= hyper.lr * velocity[name]
            epoch_loss += loss
            batches += 1
        losses.append(epoch_loss / max(batches, 1))
    return TrainResult(params=params, epoch_losses=losses)


# --- params file -------------------------------------------------------------------
# Little-endian: magic "VLFP" | version u32 | config-JSON (u32 length + bytes)
# | tensor count u32 | per tensor: name (u16 len + bytes), ndim u8, dims u32...
# | all tensor data as f32 in declared order.

class ParamsFormatError(ValueError):
    pass


def save_params(params: PlannerParams, path: str) -> None:
    _check_shapes(params)
    cfg_json = json.dumps(asdict(params.config), sort_keys=True).encode("utf-8")
    buf = bytearray()
    buf += PARAMS_MAGIC
    buf += struct.pack("<I", PARAMS_VERSION)
    buf += struct.pack("<I", len(cfg_json))
    buf += cfg_json
    specs = _tensor_specs(params.config)
    buf += struct.pack("<I", len(specs))
    for name, shape in specs:
        raw = name.encode("utf-8")
        buf += struct.pack("<H", len(raw))
        buf += raw
        buf += struct.pack("<B", len(shape))
        for dim in shape:
            buf += struct.pack("<I", dim)
    for name, _ in specs:
        buf += params.tensors[name].astype("<f4").tobytes()
    with open(path, "wb") as f:
        f.write(bytes(buf))


def load_params(path: str) -> PlannerParams:
    with open(path, "rb") as f:
        data = f.read()
    view = memoryview(data)
    off = 0

    def take(n: int) -> memoryview:
        nonlocal off
        if off + n > len(view):
            raise ParamsFormatError(f"truncated params file at offset {off}")
        chunk = view[off:off + n]
        off += n
        return chunk

    if bytes(take(4)) != PARAMS_MAGIC:
        raise ParamsFormatError("bad magic: not a planner params file")
    (version,) = struct.unpack("<I", take(4))
    if version != PARAMS_VERSION:
        raise ParamsFormatError(f"unsupported params version {version}")
    (cfg_len,) = struct.unpack("<I", take(4))
    cfg_dict = json.loads(bytes(take(cfg_len)).decode("utf-8"))
    cfg = PlannerConfig(**cfg_dict)
    (count,) = struct.unpack("<I", take(4))
    shapes: list[tuple[str, tuple[int, ...]]] = []
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        name = bytes(take(name_len)).decode("utf-8")
        (ndim,) = struct.unpack("<B", take(1))
        dims = tuple(struct.unpack("<I", take(4))[0] for _ in range(ndim))
        shapes.append((name, dims))
    tensors: dict[str, np.ndarray] = {}
    for name, dims in shapes:
        size = int(np.prod(dims)) if dims else 1
        arr = np.frombuffer(take(4 * size), dtype="<f4").astype(np.float64).reshape(dims)
        tensors[name] = arr
    params = PlannerParams(config=cfg, tensors=tensors)
    _check_shapes(params)
    return params
