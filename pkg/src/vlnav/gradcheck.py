"""Finite-difference verification of the planner's analytic gradients."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .planner import (
    ImitationSample,
    ObsContext,
    PlannerConfig,
    PlannerParams,
    WaypointPlan,
    _batch_loss_and_grads,
    init_params,
    samples_to_arrays,
)
from .world import EgoObservation

TINY_CONFIG = PlannerConfig(context=2, horizon=2, rays=8, d_model=8, n_blocks=1, d_ff=16)


@dataclass
class GradcheckReport:
    per_tensor: dict[str, float]
    worst: float
    passed: bool


def random_samples(cfg: PlannerConfig, count: int, rng: np.random.Generator) -> list[ImitationSample]:
    samples = []
    for _ in range(count):
        frames = tuple(
            EgoObservation(
                depths=rng.uniform(0.5, cfg.d_max, size=cfg.rays),
                semantics=rng.integers(0, 4, size=cfg.rays),
                fov=1.44,
                timestamp_step=i,
            )
            for i in range(cfg.context + 1)
        )
        goal = EgoObservation(
            depths=rng.uniform(0.5, cfg.d_max, size=cfg.rays),
            semantics=rng.integers(0, 4, size=cfg.rays),
            fov=1.44,
            timestamp_step=cfg.context + 1,
        )
        target = WaypointPlan(
            temporal_distance=float(rng.uniform(0.0, 50.0)),
            waypoints=rng.uniform(-0.8, 0.8, size=(cfg.horizon, 2)),
        )
        samples.append(ImitationSample(context=ObsContext(frames=frames),
                                       goal_obs=goal, target_plan=target))
    return samples


def gradcheck(params: PlannerParams, batch: list[ImitationSample], lambda_d: float = 0.1,
              eps: float = 1e-4, rel_tol: float = 1e-4,
              abs_floor: float = 1e-8) -> GradcheckReport:
    """Compare analytic gradients against central differences tensor by tensor.

    A coordinate passes when |analytic - numeric| <= rel_tol * max(|analytic|,
    |numeric|) or both are below the absolute floor (finite-difference noise).
    """
    frames, fused, wp_t, d_t = samples_to_arrays(batch, params.config)
    _, grads = _batch_loss_and_grads(params, frames, fused, wp_t, d_t, lambda_d)

    def loss_at() -> float:
        loss, _ = _batch_loss_and_grads(params, frames, fused, wp_t, d_t, lambda_d,
                                        want_grads=False)
        return loss

    per_tensor: dict[str, float] = {}
    worst = 0.0
    for name, tensor in params.tensors.items():
        analytic = grads[name]
        flat = tensor.reshape(-1)
        max_err = 0.0
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = loss_at()
            flat[i] = orig - eps
            down = loss_at()
            flat[i] = orig
            numeric = (up - down) / (2.0 * eps)
            a = float(analytic.reshape(-1)[i])
            diff = abs(a - numeric)
            if diff <= abs_floor:
                continue
            rel = diff / max(abs(a), abs(numeric), 1e-12)
            max_err = max(max_err, rel)
        per_tensor[name] = max_err
        worst = max(worst, max_err)
    return GradcheckReport(per_tensor=per_tensor, worst=worst,
                           passed=worst < rel_tol)


def run_gradcheck(seed: int = 0) -> GradcheckReport:
    """Standard check on the tiny configuration with a batch of two samples."""
    rng = np.random.default_rng(seed)
    params = init_params(TINY_CONFIG, seed=seed)
    batch = random_samples(TINY_CONFIG, 2, rng)
    return gradcheck(params, batch)
