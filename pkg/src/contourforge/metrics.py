"""Boundary evaluation: tolerance-based matching, precision/recall sweeps,
MF(ODS), AP and IoU, plus test-time edge thinning along the normals.

Precision/recall counts come from a maximum-cardinality bipartite matching
between predicted and ground-truth boundary pixels, with an edge wherever the
Euclidean distance is within the tolerance (a fraction of the image
diagonal).  Greedy matching would be order-dependent; augmenting paths are
not.
"""
from __future__ import annotations

import math
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import DomainError
from .normals import NormalField, estimate_normals
from .raster import BinaryMask, ScalarField

__all__ = [
    "MatchParams",
    "PRPoint",
    "ClassResult",
    "EvalResult",
    "nms_thin",
    "match_boundaries",
    "evaluate_dataset",
    "iou",
    "default_thresholds",
]


@dataclass(frozen=True)
class MatchParams:
    """Evaluation knobs: tolerance as a fraction of the image diagonal and
    whether predictions are thinned before thresholding."""

    tolerance_fraction: float = 0.0075
    thin_predictions: bool = False

    def __post_init__(self):
        if self.tolerance_fraction <= 0:
            raise DomainError("tolerance fraction must be positive")


@dataclass(frozen=True)
class PRPoint:
    threshold: float
    precision: float
    recall: float


@dataclass(frozen=True)
class ClassResult:
    pr: tuple[PRPoint, ...]
    mf_ods: float | None
    ap: float | None


@dataclass(frozen=True)
class EvalResult:
    """Per-class PR curves and summary metrics; classes without any ground
    truth carry None summaries and are excluded from the means."""

    classes: tuple[ClassResult, ...]
    mean_mf_ods: float | None
    mean_ap: float | None
    excluded_classes: tuple[int, ...]

    def to_json_dict(self) -> dict:
        return {
            "classes": [
                {
                    "mf_ods": c.mf_ods,
                    "ap": c.ap,
                    "pr": [[p.threshold, p.precision, p.recall] for p in c.pr],
                }
                for c in self.classes
            ],
            "mean_mf_ods": self.mean_mf_ods,
            "mean_ap": self.mean_ap,
            "excluded_classes": list(self.excluded_classes),
        }


def default_thresholds(count: int = 99) -> np.ndarray:
    """`count` thresholds uniform in the open interval (0, 1)."""
    return np.arange(1, count + 1, dtype=np.float64) / (count + 1)


def nms_thin(pred: ScalarField, normals: NormalField) -> ScalarField:
    """Edge thinning: keep a pixel's response only where it is at least both
    bilinear samples one pixel away along its normal.

    Samples outside the image count as 0; pixels without a valid normal are
    kept unchanged.
    """
    if pred.channels != 1:
        raise DomainError("nms_thin expects a single channel")
    plane = pred.channel(0)
    h, w = plane.shape
    ys, xs = np.nonzero(normals.valid)
    out = plane.copy()
    if len(xs):
        ang = normals.angle[ys, xs]
        dx, dy = np.cos(ang), np.sin(ang)
        center = plane[ys, xs]
        keep = np.ones(len(xs), dtype=bool)
        for sign in (+1.0, -1.0):
            px = xs + sign * dx
            py = ys + sign * dy
            inside = (px >= 0) & (px <= w - 1) & (py >= 0) & (py <= h - 1)
            val = np.zeros(len(xs))
            if inside.any():
                x0 = np.clip(np.floor(px[inside]).astype(int), 0, max(w - 2, 0))
                y0 = np.clip(np.floor(py[inside]).astype(int), 0, max(h - 2, 0))
                fx = px[inside] - x0
                fy = py[inside] - y0
                x1 = np.minimum(x0 + 1, w - 1)
                y1 = np.minimum(y0 + 1, h - 1)
                val[inside] = (
                    plane[y0, x0] * (1 - fx) * (1 - fy)
                    + plane[y0, x1] * fx * (1 - fy)
                    + plane[y1, x0] * (1 - fx) * fy
                    + plane[y1, x1] * fx * fy
                )
            keep &= center >= val
        out[ys[~keep], xs[~keep]] = 0.0
    return ScalarField(out[None, :, :], probabilities=pred.probabilities)


def _hopcroft_karp(adj: list[list[int]], n_right: int) -> int:
    """Maximum bipartite matching size via Hopcroft-Karp."""
    inf = float("inf")
    match_l = [-1] * len(adj)
    match_r = [-1] * n_right
    size = 0
    while True:
        dist = [inf] * len(adj)
        queue = deque()
        for u, m in enumerate(match_l):
            if m == -1:
                dist[u] = 0
                queue.append(u)
        reachable_free = False
        while queue:
            u = queue.popleft()
            for v in adj[u]:
                w = match_r[v]
                if w == -1:
                    reachable_free = True
                elif dist[w] == inf:
                    dist[w] = dist[u] + 1
                    queue.append(w)
        if not reachable_free:
            return size

        def dfs(u: int) -> bool:
            for v in adj[u]:
                w = match_r[v]
                if w == -1 or (dist[w] == dist[u] + 1 and dfs(w)):
                    match_l[u] = v
                    match_r[v] = u
                    return True
            dist[u] = inf
            return False

        for u in range(len(adj)):
            if match_l[u] == -1 and dfs(u):
                size += 1


def match_boundaries(pred: BinaryMask, gt: BinaryMask, d_max: float) -> tuple[int, int]:
    """Maximum-cardinality matching between boundary pixel sets with edges
    wherever the Euclidean distance is <= d_max; returns the matched counts
    (equal by definition of a matching)."""
    if d_max <= 0:
        raise DomainError("d_max must be positive")
    py, px = np.nonzero(pred.bits)
    gy, gx = np.nonzero(gt.bits)
    if len(px) == 0 or len(gx) == 0:
        return 0, 0
    tree = cKDTree(np.stack([gx, gy], axis=1))
    adj = tree.query_ball_point(np.stack([px, py], axis=1), r=d_max + 1e-12)
    size = _hopcroft_karp([sorted(a) for a in adj], len(gx))
    return size, size


def _image_counts(pred_plane, gt_mask, thresholds, d_max):
    """Per-threshold (matched, n_pred, n_gt) for one image and class."""
    out = []
    n_gt = gt_mask.count
    for t in thresholds:
        pm = BinaryMask(pred_plane >= t)
        if pm.empty or n_gt == 0:
            out.append((0, pm.count, n_gt))
            continue
        m, _ = match_boundaries(pm, gt_mask, d_max)
        out.append((m, pm.count, n_gt))
    return out


def _average_precision(points: list[tuple[float, float]]) -> float:
    """Area under the interpolated PR curve (monotone non-increasing
    precision), augmented with the recall-0 endpoint."""
    pts = sorted(points, key=lambda rp: rp[0])
    recalls = [0.0] + [r for r, _ in pts]
    precs = [0.0] + [p for _, p in pts]
    # interpolate: precision at recall r is the max precision at recall >= r
    for i in range(len(precs) - 2, -1, -1):
        precs[i] = max(precs[i], precs[i + 1])
    ap = 0.0
    for i in range(1, len(recalls)):
        ap += (recalls[i] - recalls[i - 1]) * precs[i]
    return ap


def evaluate_dataset(
    preds: list[ScalarField],
    gts: list[list[BinaryMask]],
    params: MatchParams = MatchParams(),
    thresholds: np.ndarray | None = None,
    threads: int = 1,
) -> EvalResult:
    """Dataset-level boundary benchmark.

    ``preds[i]`` holds the per-class probability channels of image i and
    ``gts[i]`` the matching ground-truth boundary masks.  Counts accumulate
    over the dataset per threshold; MF(ODS) maximizes F over the shared
    threshold, AP integrates the interpolated PR curve.
    """
    if len(preds) != len(gts):
        raise DomainError("preds and gts must align")
    if not preds:
        raise DomainError("empty dataset")
    k = preds[0].channels
    for p, g in zip(preds, gts):
        if p.channels != k or len(g) != k:
            raise DomainError("inconsistent class count across the dataset")
    if thresholds is None:
        thresholds = default_thresholds()

    def per_image(i: int):
        pred = preds[i]
        d_max = params.tolerance_fraction * math.hypot(pred.width, pred.height)
        rows = []
        for c in range(k):
            plane = ScalarField(pred.channel(c)[None, :, :], probabilities=pred.probabilities)
            if params.thin_predictions:
                plane = nms_thin(plane, estimate_normals(plane))
            rows.append(_image_counts(plane.channel(0), gts[i][c], thresholds, d_max))
        return rows

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            all_rows = list(pool.map(per_image, range(len(preds))))
    else:
        all_rows = [per_image(i) for i in range(len(preds))]

    classes = []
    excluded = []
    for c in range(k):
        matched = np.zeros(len(thresholds))
        n_pred = np.zeros(len(thresholds))
        n_gt = np.zeros(len(thresholds))
        for rows in all_rows:
            for j, (m, p, g) in enumerate(rows[c]):
                matched[j] += m
                n_pred[j] += p
                n_gt[j] += g
        pr = []
        curve = []
        best_f = 0.0
        for j, t in enumerate(thresholds):
            precision = matched[j] / n_pred[j] if n_pred[j] > 0 else 0.0
            recall = matched[j] / n_gt[j] if n_gt[j] > 0 else 0.0
            pr.append(PRPoint(float(t), precision, recall))
            curve.append((recall, precision))
            if precision + recall > 0:
                best_f = max(best_f, 2 * precision * recall / (precision + recall))
        if n_gt[0] == 0:
            classes.append(ClassResult(tuple(pr), None, None))
            excluded.append(c)
        else:
            classes.append(ClassResult(tuple(pr), best_f, _average_precision(curve)))
    scored = [c for c in classes if c.mf_ods is not None]
    mean_mf = sum(c.mf_ods for c in scored) / len(scored) if scored else None
    mean_ap = sum(c.ap for c in scored) / len(scored) if scored else None
    return EvalResult(tuple(classes), mean_mf, mean_ap, tuple(excluded))


def iou(a: BinaryMask, b: BinaryMask) -> float:
    """Intersection over union; two empty masks count as identical (1.0)."""
    union = int(np.sum(a.bits | b.bits))
    if union == 0:
        return 1.0
    return float(np.sum(a.bits & b.bits) / union)
