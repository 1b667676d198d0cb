"""Morphological geodesic active contour evolution and active alignment.

The level-set embedding is a plain binary mask (true = inside).  One
evolution step combines three discrete forces:

* balloon: dilate (c > 0) or erode (c < 0) wherever the speed map is above a
  fraction of its maximum,
* attraction: flip pixels by the sign of the dot product between the speed
  gradient and the embedding gradient,
* curvature: SI/IS median-like morphological smoothing passes.

No re-initialization of the embedding is ever needed.  Active alignment
evolves a noisy ground-truth region over a speed map built from the model
prediction and picks the trajectory snapshot that scores best under the
class-balanced cross-entropy.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
import scipy.ndimage as ndi

from .errors import DomainError
from .losses import LossWeights, weighted_bce
from .raster import (
    BinaryMask,
    Polygon,
    ScalarField,
    StructuringElement,
    dilate,
    erode,
    gaussian_smooth,
    mask_to_boundary,
    mask_to_contours,
    polygon_to_obj,
    write_mask_pgm,
)

__all__ = [
    "EvolutionParams",
    "EmbeddingState",
    "Snapshot",
    "Trajectory",
    "compute_g",
    "mgac_step",
    "evolve",
    "active_align",
    "export_trajectory",
    "BOUNDARY_SMOOTH_SIGMA",
]

# sigma used to soften the binary ground-truth boundary before it enters the
# speed map; the raw map would give the attraction a 1-pixel capture range
BOUNDARY_SMOOTH_SIGMA = 1.0

_CROSS = StructuringElement.cross3()

# the four length-3 line elements through a pixel (horizontal, vertical, both
# diagonals) used by the SI/IS curvature operators
_LINES = [
    np.array([[0, 0, 0], [1, 1, 1], [0, 0, 0]], bool),
    np.array([[0, 1, 0], [0, 1, 0], [0, 1, 0]], bool),
    np.eye(3, dtype=bool),
    np.fliplr(np.eye(3, dtype=bool)),
]


@dataclass(frozen=True)
class EvolutionParams:
    """Knobs of one evolution run; lam is the ground-truth attraction weight."""

    lam: float = 1.0
    c: float = 0.0
    mu: int = 1
    max_steps: int = 50
    snapshot_every: int = 5
    balloon_threshold: float = 0.3

    def __post_init__(self):
        if self.lam < 0:
            raise DomainError("lambda must be >= 0")
        if not 0 <= self.mu <= 4:
            raise DomainError("mu must lie in [0, 4]")
        if self.max_steps < 1:
            raise DomainError("max_steps must be >= 1")
        if not 1 <= self.snapshot_every <= self.max_steps:
            raise DomainError("snapshot_every must lie in [1, max_steps]")
        if not 0.0 <= self.balloon_threshold <= 1.0:
            raise DomainError("balloon_threshold must lie in [0, 1]")

    @staticmethod
    def coarse_to_fine(steps: int = 50) -> "EvolutionParams":
        """Mask-expansion defaults: no ground-truth term, outward balloon."""
        return EvolutionParams(lam=0.0, c=1.0, mu=1, max_steps=steps,
                               snapshot_every=max(1, min(5, steps)))


@dataclass(frozen=True)
class EmbeddingState:
    """Binary level-set embedding plus the step counter."""

    u: BinaryMask
    step: int = 0

    @property
    def collapsed(self) -> bool:
        return self.u.empty or bool(self.u.bits.all())


@dataclass(frozen=True)
class Snapshot:
    step: int
    mask: BinaryMask
    contours: tuple[Polygon, ...]
    score: float | None = None


@dataclass(frozen=True)
class Trajectory:
    snapshots: tuple[Snapshot, ...]

    @property
    def final(self) -> Snapshot:
        return self.snapshots[-1]


def compute_g(pred: ScalarField, gt_boundary: ScalarField, lam: float) -> ScalarField:
    """Edge-stopping speed map g = 1/sqrt(1 + f) + lam/sqrt(1 + y).

    ``lam`` must be finite and non-negative; the lam = infinity warm-up is a
    caller convention (alignment disabled), not a value of this map.
    """
    if lam < 0:
        raise DomainError("lambda must be >= 0")
    if not math.isfinite(lam):
        raise DomainError("lambda must be finite; disable alignment instead")
    f = pred.values
    y = gt_boundary.values
    if f.shape != y.shape:
        raise DomainError("prediction and ground-truth boundary shapes differ")
    if f.min() < 0 or f.max() > 1 or y.min() < 0 or y.max() > 1:
        raise DomainError("speed inputs must lie in [0, 1]")
    return ScalarField(1.0 / np.sqrt(1.0 + f) + lam / np.sqrt(1.0 + y))


def _si(u: np.ndarray) -> np.ndarray:
    """Sup of infima over the four line elements (removes thin protrusions)."""
    out = np.zeros_like(u)
    for line in _LINES:
        out |= ndi.binary_erosion(u, structure=line, border_value=0)
    return out


def _is(u: np.ndarray) -> np.ndarray:
    """Inf of suprema over the four line elements (fills thin creases)."""
    out = np.ones_like(u)
    for line in _LINES:
        out &= ndi.binary_dilation(u, structure=line, border_value=0)
    return out


def curvature_pass(u: np.ndarray, parity: int) -> np.ndarray:
    """One smoothing pass: SI(IS(u)) on even parity, IS(SI(u)) on odd."""
    if parity % 2 == 0:
        return _si(_is(u))
    return _is(_si(u))


def mgac_step(state: EmbeddingState, g: ScalarField, params: EvolutionParams) -> EmbeddingState:
    """One discrete evolution step: balloon, attraction, curvature smoothing.

    The SI/IS pass parity continues across steps, derived from the step
    counter so that the step function stays pure.
    """
    gp = g.channel(0)
    if gp.shape != (state.u.height, state.u.width):
        raise DomainError("speed map and embedding shapes differ")
    u = state.u.bits.copy()

    if params.c != 0.0:
        above = gp > params.balloon_threshold * gp.max()
        moved = (dilate(state.u, _CROSS) if params.c > 0 else erode(state.u, _CROSS)).bits
        u = np.where(above, moved, u)

    gy, gx = np.gradient(gp)
    uy, ux = np.gradient(u.astype(np.float64))
    dot = gx * ux + gy * uy
    u = np.where(dot > 0, True, np.where(dot < 0, False, u))

    for i in range(params.mu):
        u = curvature_pass(u, state.step * params.mu + i)

    return EmbeddingState(BinaryMask(u), state.step + 1)


def evolve(initial: BinaryMask, g: ScalarField, params: EvolutionParams) -> Trajectory:
    """Run up to max_steps evolution steps, snapshotting every snapshot_every
    steps (step 0 and the final step always included); stops early after the
    embedding is unchanged for 3 consecutive steps."""
    if initial.empty:
        raise DomainError("initial mask is empty")
    state = EmbeddingState(initial, 0)
    snaps = [Snapshot(0, initial, tuple(mask_to_contours(initial)))]
    unchanged = 0
    while state.step < params.max_steps:
        nxt = mgac_step(state, g, params)
        unchanged = unchanged + 1 if np.array_equal(nxt.u.bits, state.u.bits) else 0
        state = nxt
        if state.step % params.snapshot_every == 0:
            snaps.append(Snapshot(state.step, state.u, tuple(mask_to_contours(state.u))))
        if unchanged >= 3:
            break
    if snaps[-1].step != state.step:
        snaps.append(Snapshot(state.step, state.u, tuple(mask_to_contours(state.u))))
    return Trajectory(tuple(snaps))


def _smoothed_boundary(region: BinaryMask, sigma: float = BOUNDARY_SMOOTH_SIGMA) -> ScalarField:
    """Boundary of a region as a soft map, renormalized to peak 1."""
    b = mask_to_boundary(region).to_field()
    s = gaussian_smooth(ScalarField(b.values), sigma).values
    peak = s.max()
    if peak > 0:
        s = s / peak
    return ScalarField(np.clip(s, 0.0, 1.0), probabilities=True)


def active_align(
    gt_region: BinaryMask,
    pred: ScalarField,
    params: EvolutionParams = EvolutionParams(),
    weights: LossWeights = LossWeights(),
) -> tuple[BinaryMask, BinaryMask, int]:
    """Refine a noisy ground-truth region against a prediction map.

    Evolves the region over g(pred, smoothed own boundary, lam) and returns
    the snapshot whose boundary scores lowest under the weighted BCE against
    the prediction (ties resolved toward the earliest step), as
    (aligned_region, aligned_boundary, chosen_step).
    """
    if gt_region.empty:
        raise DomainError("ground-truth region is empty")
    if pred.channels != 1:
        raise DomainError("active alignment works on a single class channel")
    y = _smoothed_boundary(gt_region)
    g = compute_g(pred, y, params.lam)
    traj = evolve(gt_region, g, params)
    best = None
    for snap in traj.snapshots:
        boundary = mask_to_boundary(snap.mask)
        score, _ = weighted_bce(pred, boundary, weights)
        if best is None or score < best[0]:
            best = (score, snap.step, snap.mask, boundary)
    _, step, mask, boundary = best
    return mask, boundary, step


def export_trajectory(traj: Trajectory, directory) -> None:
    """Write numbered PGM masks, per-snapshot contour JSON and an index."""
    from pathlib import Path

    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    index = []
    for snap in traj.snapshots:
        mask_name = f"mask_{snap.step:06d}.pgm"
        contour_name = f"contours_{snap.step:06d}.json"
        write_mask_pgm(out / mask_name, snap.mask)
        with open(out / contour_name, "w", encoding="utf-8") as f:
            json.dump([polygon_to_obj(p) for p in snap.contours], f)
        index.append(
            {
                "step": snap.step,
                "score": snap.score,
                "mask": mask_name,
                "contours": contour_name,
            }
        )
    with open(out / "index.json", "w", encoding="utf-8") as f:
        json.dump(index, f, indent=2)
