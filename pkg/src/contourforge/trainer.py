"""Desk-scale training loop: gradient descent on a free per-pixel logit field
under the combined loss, with periodic active alignment of the working ground
truth.

The model is deliberately not a network: a raw logit per pixel isolates the
loss and alignment machinery so their effects can be measured directly.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .coarse import boundary_error
from .errors import DivergenceError, DomainError
from .levelset import EvolutionParams, active_align
from .losses import LossBreakdown, LossWeights, sigmoid, total_loss
from .normals import DEFAULT_SIGMA, NormalField, estimate_normals
from .raster import BinaryMask, ScalarField, mask_to_boundary, write_fpm

__all__ = ["TrainConfig", "AlignmentEvent", "TrainReport", "train", "sharpness_profile"]

_DIVERGENCE_LIMIT = 1e6


@dataclass(frozen=True)
class TrainConfig:
    """Training-run parameters.

    Alignment is dormant before ``align_warmup`` (the lambda = infinity
    convention) and then runs every ``align_every`` iterations.
    ``beta_schedule`` optionally pins the BCE balance to a fixed value from a
    given iteration on, mirroring mid-training re-weighting.
    """

    iterations: int = 500
    learning_rate: float = 0.5
    weights: LossWeights = field(default_factory=LossWeights)
    align_warmup: int = 500
    align_every: int = 50
    evolution: EvolutionParams = field(default_factory=EvolutionParams)
    seed: int = 0
    beta_schedule: tuple[tuple[int, float], ...] = ()

    def __post_init__(self):
        if self.iterations < 1:
            raise DomainError("iterations must be >= 1")
        if self.learning_rate < 0:
            raise DomainError("learning rate must be >= 0")
        if self.align_warmup < 0:
            raise DomainError("align_warmup must be >= 0")
        if self.align_every < 1:
            raise DomainError("align_every must be >= 1")

    @staticmethod
    def from_json_dict(cfg: dict) -> "TrainConfig":
        evo = cfg.get("evolution", {})
        params = EvolutionParams(
            lam=float(evo.get("lambda", 1.0)),
            c=float(evo.get("c", 0.0)),
            mu=int(evo.get("mu", 1)),
            max_steps=int(evo.get("max_steps", 50)),
            snapshot_every=int(evo.get("snapshot_every", 5)),
            balloon_threshold=float(evo.get("balloon_threshold", 0.3)),
        )
        return TrainConfig(
            iterations=int(cfg.get("iterations", 500)),
            learning_rate=float(cfg.get("learning_rate", 0.5)),
            weights=LossWeights.from_config(cfg),
            align_warmup=int(cfg.get("align_warmup", cfg.get("iterations", 500))),
            align_every=int(cfg.get("align_every", 50)),
            evolution=params,
            seed=int(cfg.get("seed", 0)),
            beta_schedule=tuple(
                (int(it), float(b)) for it, b in cfg.get("beta_schedule", [])
            ),
        )


@dataclass(frozen=True)
class AlignmentEvent:
    iteration: int
    chosen_t: int
    error_before: float | None
    error_after: float | None


@dataclass(frozen=True)
class TrainReport:
    losses: tuple[LossBreakdown, ...]
    alignments: tuple[AlignmentEvent, ...]
    final_logits: ScalarField
    final_gt_region: BinaryMask

    def to_json_dict(self) -> dict:
        return {
            "iterations": len(self.losses),
            "loss_curve": [
                {"bce": b.bce, "nms": b.nms, "dir": b.dir, "total": b.total}
                for b in self.losses
            ],
            "per_positive_final": self.losses[-1].per_positive() if self.losses else {},
            "alignments": [
                {
                    "iteration": a.iteration,
                    "chosen_t": a.chosen_t,
                    "error_before": a.error_before,
                    "error_after": a.error_after,
                }
                for a in self.alignments
            ],
            "final_total": self.losses[-1].total if self.losses else None,
        }

    def save(self, directory) -> None:
        from pathlib import Path

        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "report.json", "w", encoding="utf-8") as f:
            json.dump(self.to_json_dict(), f, indent=2, sort_keys=True)
        write_fpm(out / "final_logits.fpm", self.final_logits)


def _measure(region: BinaryMask, reference: BinaryMask | None) -> float | None:
    if reference is None:
        return None
    return boundary_error(region, reference)


def train(
    initial_logits: ScalarField,
    noisy_gt_region: BinaryMask,
    config: TrainConfig,
    true_reference: BinaryMask | None = None,
) -> TrainReport:
    """Gradient-descend a logit field; optionally refresh the ground truth by
    active alignment after the warmup.  Deterministic for a given config."""
    if initial_logits.channels != 1:
        raise DomainError("the toy trainer is single-class")
    if (noisy_gt_region.height, noisy_gt_region.width) != (
        initial_logits.height,
        initial_logits.width,
    ):
        raise DomainError("logits and ground-truth shapes differ")
    if noisy_gt_region.empty:
        raise DomainError("ground-truth region is empty")

    logits = initial_logits.values.copy()
    region = noisy_gt_region
    boundary = mask_to_boundary(region)
    normals = estimate_normals(boundary.to_field(), DEFAULT_SIGMA)
    weights = config.weights
    schedule = dict(config.beta_schedule)
    curve: list[LossBreakdown] = []
    events: list[AlignmentEvent] = []

    for it in range(config.iterations):
        if it in schedule:
            weights = replace(weights, beta=schedule[it])
        if it >= config.align_warmup and (it - config.align_warmup) % config.align_every == 0:
            pred = ScalarField(np.clip(sigmoid(logits), 0.0, 1.0), probabilities=True)
            before = _measure(region, true_reference)
            region, boundary, chosen = active_align(region, pred, config.evolution, weights)
            normals = estimate_normals(boundary.to_field(), DEFAULT_SIGMA)
            events.append(
                AlignmentEvent(it, chosen, before, _measure(region, true_reference))
            )
        breakdown = total_loss(ScalarField(logits), boundary, weights, gt_normals=normals)
        if not np.isfinite(breakdown.total) or breakdown.total > _DIVERGENCE_LIMIT:
            raise DivergenceError(
                f"loss {breakdown.total!r} at iteration {it} exceeds the divergence guard"
            )
        curve.append(breakdown)
        logits = logits - config.learning_rate * breakdown.gradient.values

    return TrainReport(tuple(curve), tuple(events), ScalarField(logits), region)


def sharpness_profile(
    pred: ScalarField,
    gt_boundary: BinaryMask,
    normals: NormalField,
    reach: int = 2,
) -> list[float]:
    """Mean prediction response at offsets -reach..reach along the ground
    truth normals, averaged over boundary pixels whose line stays in-image."""
    if pred.channels != 1:
        raise DomainError("sharpness_profile expects a single channel")
    plane = pred.channel(0)
    h, w = plane.shape
    ys, xs = np.nonzero(gt_boundary.bits & normals.valid)
    t = np.arange(-reach, reach + 1, dtype=np.float64)
    if len(xs) == 0:
        return [0.0] * len(t)
    ang = normals.angle[ys, xs]
    px = xs[:, None] + t[None, :] * np.cos(ang)[:, None]
    py = ys[:, None] + t[None, :] * np.sin(ang)[:, None]
    inside = (
        (px.min(axis=1) >= 0)
        & (px.max(axis=1) <= w - 1)
        & (py.min(axis=1) >= 0)
        & (py.max(axis=1) <= h - 1)
    )
    if not inside.any():
        return [0.0] * len(t)
    px, py = px[inside], py[inside]
    x0 = np.clip(np.floor(px).astype(int), 0, max(w - 2, 0))
    y0 = np.clip(np.floor(py).astype(int), 0, max(h - 2, 0))
    fx, fy = px - x0, py - y0
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    vals = (
        plane[y0, x0] * (1 - fx) * (1 - fy)
        + plane[y0, x1] * fx * (1 - fy)
        + plane[y1, x0] * (1 - fx) * fy
        + plane[y1, x1] * fx * fy
    )
    return [float(v) for v in vals.mean(axis=0)]
