"""Coarse-annotation simulation and coarse-to-fine mask refinement.

Coarse labels are emulated the way sloppy annotators produce them: erode the
fine mask inward, then polygon-simplify the contour down to a few clicks.
The quality knob is the mean symmetric boundary distance to the fine mask.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .levelset import EvolutionParams, compute_g, evolve
from .raster import (
    BinaryMask,
    Polygon,
    ScalarField,
    StructuringElement,
    distance_transform,
    erode,
    label_components,
    mask_to_boundary,
    mask_to_contours,
    polygon_to_mask,
    signed_area,
)

__all__ = [
    "CoarseResult",
    "simplify_polygon",
    "boundary_error",
    "simulate_coarse",
    "refine_coarse",
]


@dataclass(frozen=True)
class CoarseResult:
    """Simulated coarse annotation: mask, polygon, click count, achieved error."""

    coarse_mask: BinaryMask
    polygon: Polygon
    clicks: int
    achieved_error_px: float


def _point_segment_distance(pts: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ab = b - a
    ln2 = float(ab @ ab)
    if ln2 == 0.0:
        return np.linalg.norm(pts - a, axis=1)
    t = np.clip(((pts - a) @ ab) / ln2, 0.0, 1.0)
    proj = a + t[:, None] * ab
    return np.linalg.norm(pts - proj, axis=1)


def _rdp_open(vertices: np.ndarray, epsilon: float) -> np.ndarray:
    """Ramer-Douglas-Peucker on an open chain; keeps both endpoints."""
    if len(vertices) <= 2:
        return vertices
    d = _point_segment_distance(vertices[1:-1], vertices[0], vertices[-1])
    imax = int(np.argmax(d))
    if d[imax] > epsilon:
        left = _rdp_open(vertices[: imax + 2], epsilon)
        right = _rdp_open(vertices[imax + 1 :], epsilon)
        return np.concatenate([left[:-1], right])
    return np.stack([vertices[0], vertices[-1]])


def simplify_polygon(poly: Polygon, epsilon: float) -> Polygon:
    """RDP simplification; a closed polygon is split at its two farthest-apart
    vertices and each chain is simplified.  Output vertices are a subset of
    the input's; epsilon=0 returns the polygon unchanged."""
    if epsilon < 0:
        raise DomainError("epsilon must be >= 0")
    if epsilon == 0 or len(poly) <= (3 if poly.closed else 2):
        return poly
    v = poly.vertices
    if not poly.closed:
        return Polygon(_rdp_open(v, epsilon), closed=False)
    n = len(v)
    diffs = v[:, None, :] - v[None, :, :]
    dist2 = (diffs**2).sum(axis=2)
    i, j = np.unravel_index(int(np.argmax(dist2)), dist2.shape)
    i, j = (i, j) if i < j else (j, i)
    chain_a = v[i : j + 1]
    chain_b = np.concatenate([v[j:], v[: i + 1]])
    simp_a = _rdp_open(chain_a, epsilon)
    simp_b = _rdp_open(chain_b, epsilon)
    merged = np.concatenate([simp_a[:-1], simp_b[:-1]])
    if len(merged) < 3:
        merged = np.stack([v[i], v[(i + (n // 3)) % n], v[j]])
    return Polygon(merged, closed=True)


def boundary_error(a: BinaryMask, b: BinaryMask) -> float:
    """Mean symmetric Euclidean distance between the masks' boundaries."""
    if a.empty or b.empty:
        raise DomainError("boundary_error needs two non-empty masks")
    ba = mask_to_boundary(a)
    bb = mask_to_boundary(b)
    da = distance_transform(bb).channel(0)
    db = distance_transform(ba).channel(0)
    ys, xs = np.nonzero(ba.bits)
    fwd = da[ys, xs].mean()
    ys, xs = np.nonzero(bb.bits)
    rev = db[ys, xs].mean()
    return float(0.5 * (fwd + rev))


def _largest_component_contour(mask: BinaryMask) -> Polygon:
    labels, n = label_components(mask)
    if n == 0:
        raise DomainError("mask has no components")
    sizes = [(labels == k).sum() for k in range(1, n + 1)]
    component = BinaryMask(labels == (1 + int(np.argmax(sizes))))
    outer = [p for p in mask_to_contours(component) if signed_area(p) > 0]
    return max(outer, key=lambda p: signed_area(p))


def simulate_coarse(fine: BinaryMask, target_err_px: float) -> CoarseResult:
    """Produce a controlled-quality coarse annotation of a fine mask.

    Erodes by a disc of radius ceil(target/2), polygonizes the largest
    component and binary-searches the RDP epsilon so the achieved mean
    symmetric boundary error lands within +-20% of the target (or as close as
    the shape allows).  The rasterized polygon is re-intersected with the fine
    mask so coarse labels always lie inside the object.
    """
    if fine.empty:
        raise DomainError("fine mask is empty")
    if target_err_px < 1:
        raise DomainError("target error must be >= 1 px")
    radius = max(1, math.ceil(target_err_px / 2))
    eroded = erode(fine, StructuringElement.disc(radius))
    if eroded.empty:
        raise DomainError("object below coarsening scale")
    contour = _largest_component_contour(eroded)

    def attempt(eps: float):
        poly = simplify_polygon(contour, eps)
        bits = polygon_to_mask(poly, fine.width, fine.height).bits & fine.bits
        if not bits.any():
            return None
        mask = BinaryMask(bits)
        return mask, poly, boundary_error(mask, fine)

    lo, hi = 0.0, 4.0 * target_err_px
    first = attempt(0.0)
    if first is None:
        raise DomainError("object below coarsening scale")
    candidates = [first]
    for _ in range(12):
        mid = 0.5 * (lo + hi)
        got = attempt(mid)
        if got is None or got[2] > target_err_px:
            hi = mid
        else:
            lo = mid
        if got is not None:
            candidates.append(got)
    # any candidate within +-20% of the target satisfies the goal; among
    # those take the fewest clicks (an annotator spends no more effort than
    # the quality level demands).  Outside the band, fall back to the closest
    # achievable error, ties again toward fewer clicks.
    in_band = [c for c in candidates if abs(c[2] - target_err_px) <= 0.2 * target_err_px]
    if in_band:
        mask, poly, err = min(in_band, key=lambda c: (len(c[1]), abs(c[2] - target_err_px)))
    else:
        tol = 0.05 * target_err_px
        mask, poly, err = min(
            candidates,
            key=lambda c: (round(abs(c[2] - target_err_px) / tol), len(c[1])),
        )
    return CoarseResult(mask, poly, clicks=len(poly), achieved_error_px=err)


def refine_coarse(coarse: BinaryMask, pred: ScalarField, steps: int) -> BinaryMask:
    """Grow a coarse inside-the-object mask out to the prediction's ridges
    (no ground-truth term, outward balloon).  steps=0 returns the input."""
    if coarse.empty:
        raise DomainError("coarse mask is empty")
    if steps < 0:
        raise DomainError("steps must be >= 0")
    if steps == 0:
        return coarse
    if pred.channels != 1:
        raise DomainError("refine_coarse works on a single class channel")
    zeros = ScalarField(np.zeros_like(pred.values), probabilities=True)
    g = compute_g(pred, zeros, 0.0)
    params = EvolutionParams.coarse_to_fine(steps)
    return evolve(coarse, g, params).final.mask
