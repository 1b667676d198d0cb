"""Training losses for boundary prediction and their analytic gradients.

Three terms act on a per-pixel prediction given as logits:

* weighted binary cross-entropy over all pixels,
* an NMS loss that softmax-normalizes prediction samples along each ground
  truth boundary pixel's normal and penalizes mass away from the center,
* a direction loss penalizing the angular gap between normals estimated from
  the prediction and from the ground truth.

All gradients are taken with respect to the pre-sigmoid logits, so the three
terms share one interface and combine by weighted sum.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DomainError
from .normals import (
    DEFAULT_SIGMA,
    NormalField,
    _D2,
    _KXY,
    angles_from_hessian,
    estimate_normals,
    hessian_features,
    smooth_zero_padded,
)
from .raster import BinaryMask, ScalarField, gaussian_kernel1d

import scipy.ndimage as ndi

__all__ = [
    "LossWeights",
    "SampleLine",
    "LossBreakdown",
    "sample_line",
    "weighted_bce",
    "nms_response",
    "nms_loss",
    "direction_loss",
    "total_loss",
    "sigmoid",
]

_PROB_EPS = 1e-7
_DOT_CLAMP = 1.0 - 1e-6


@dataclass(frozen=True)
class LossWeights:
    """Loss hyper-parameters: term weights, softmax temperature, line reach.

    ``beta`` is the edge/non-edge balance of the BCE term; ``None`` selects
    the automatic value |Y-|/|Y| computed over all classes of the call.
    """

    alpha1: float = 1.0
    alpha2: float = 10.0
    alpha3: float = 1.0
    tau: float = 0.1
    L: int = 2
    beta: float | None = None

    def __post_init__(self):
        if self.tau <= 0:
            raise DomainError("tau must be positive")
        if self.L < 1:
            raise DomainError("L must be >= 1")
        if min(self.alpha1, self.alpha2, self.alpha3) < 0:
            raise DomainError("alphas must be non-negative")
        if self.alpha1 == self.alpha2 == self.alpha3 == 0:
            raise DomainError("at least one alpha must be positive")
        if self.beta is not None and not 0.0 <= self.beta <= 1.0:
            raise DomainError("fixed beta must lie in [0, 1]")

    @staticmethod
    def from_config(cfg: dict) -> "LossWeights":
        """Build from the JSON config keys loss.alpha1 .. loss.beta."""
        loss = cfg.get("loss", cfg)
        kw = {}
        for key in ("alpha1", "alpha2", "alpha3", "tau"):
            if key in loss:
                kw[key] = float(loss[key])
        if "L" in loss:
            kw["L"] = int(loss["L"])
        if "beta" in loss and loss["beta"] is not None:
            kw["beta"] = float(loss["beta"])
        return LossWeights(**kw)


@dataclass(frozen=True)
class SampleLine:
    """The 2L+1 sub-pixel samples along a boundary pixel's normal."""

    center: tuple[int, int]
    angle: float
    offsets: np.ndarray
    points: np.ndarray
    values: np.ndarray


@dataclass(frozen=True)
class LossBreakdown:
    """Combined loss value, components, gradient and diagnostics."""

    bce: float
    nms: float
    dir: float
    total: float
    gradient: ScalarField
    positives: int = 0
    nms_pixels: int = 0
    nms_skipped: int = 0
    dir_pixels: int = 0
    no_valid_boundary: bool = False

    def per_positive(self) -> dict:
        """Loss means per positive ground-truth pixel (0 when there are none)."""
        n = max(self.positives, 1)
        return {"bce": self.bce / n, "nms": self.nms / n, "dir": self.dir / n}


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _as_mask_list(gt) -> list[BinaryMask]:
    if isinstance(gt, BinaryMask):
        return [gt]
    return list(gt)


def _check_shapes(pred: ScalarField, gts: list[BinaryMask]) -> None:
    if pred.channels != len(gts):
        raise DomainError(f"prediction has {pred.channels} channels but {len(gts)} ground-truth masks")
    for m in gts:
        if (m.height, m.width) != (pred.height, pred.width):
            raise DomainError("prediction and ground truth shapes differ")


def _auto_beta(gts: list[BinaryMask]) -> float:
    total = sum(m.width * m.height for m in gts)
    positives = sum(m.count for m in gts)
    return (total - positives) / total


def weighted_bce(pred: ScalarField, gt, weights: LossWeights = LossWeights()):
    """Class-balanced binary cross-entropy.

    ``pred`` holds probabilities; the returned gradient is with respect to the
    pre-sigmoid logits.  Probabilities are clamped to [eps, 1-eps] before the
    logs, and the clamp gates the gradient.
    """
    gts = _as_mask_list(gt)
    _check_shapes(pred, gts)
    beta = weights.beta if weights.beta is not None else _auto_beta(gts)
    loss = 0.0
    grad = np.zeros_like(pred.values)
    for k, m in enumerate(gts):
        f = pred.values[k]
        fc = np.clip(f, _PROB_EPS, 1.0 - _PROB_EPS)
        y = m.bits
        loss -= float(np.sum(np.where(y, beta * np.log(fc), (1.0 - beta) * np.log(1.0 - fc))))
        dl_dfc = np.where(y, -beta / fc, (1.0 - beta) / (1.0 - fc))
        unclamped = (f > _PROB_EPS) & (f < 1.0 - _PROB_EPS)
        grad[k] = dl_dfc * unclamped * f * (1.0 - f)
    return loss, ScalarField(grad)


def _line_points(xs: float, ys: float, angle: float, L: int):
    t = np.arange(-L, L + 1, dtype=np.float64)
    return np.stack([xs + t * math.cos(angle), ys + t * math.sin(angle)], axis=1)


def sample_line(pred: ScalarField, channel: int, center: tuple[int, int], angle: float, L: int):
    """Bilinear samples of one channel along a normal line, or None when any
    of the 2L+1 points leaves the image."""
    pts = _line_points(center[0], center[1], angle, L)
    if (
        pts[:, 0].min() < 0
        or pts[:, 0].max() > pred.width - 1
        or pts[:, 1].min() < 0
        or pts[:, 1].max() > pred.height - 1
    ):
        return None
    vals, _, _ = _bilinear_gather(pred.channel(channel), pts[:, 0], pts[:, 1])
    return SampleLine(
        center=(int(center[0]), int(center[1])),
        angle=float(angle),
        offsets=np.arange(-L, L + 1),
        points=pts,
        values=vals,
    )


def _bilinear_gather(plane: np.ndarray, xs: np.ndarray, ys: np.ndarray):
    """Vectorized bilinear lookup: values, 4 linear indices and 4 weights per point."""
    h, w = plane.shape
    x0 = np.minimum(np.floor(xs).astype(np.int64), max(w - 2, 0))
    y0 = np.minimum(np.floor(ys).astype(np.int64), max(h - 2, 0))
    fx = xs - x0
    fy = ys - y0
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    idx = np.stack([y0 * w + x0, y0 * w + x1, y1 * w + x0, y1 * w + x1], axis=-1)
    wts = np.stack(
        [(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy], axis=-1
    )
    vals = (plane.ravel()[idx] * wts).sum(axis=-1)
    return vals, idx, wts


def _softmax_rows(vals: np.ndarray, tau: float) -> np.ndarray:
    z = vals / tau
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def nms_response(
    pred: ScalarField,
    normals: NormalField,
    p: tuple[int, int],
    weights: LossWeights = LossWeights(),
    channel: int = 0,
) -> np.ndarray:
    """Categorical distribution over the 2L+1 normal-line offsets at pixel p."""
    x, y = int(p[0]), int(p[1])
    if not (0 <= x < normals.width and 0 <= y < normals.height) or not normals.valid[y, x]:
        raise DomainError(f"pixel ({x}, {y}) has no valid normal")
    line = sample_line(pred, channel, (x, y), float(normals.angle[y, x]), weights.L)
    if line is None:
        raise DomainError(f"sample line at ({x}, {y}) leaves the image")
    return _softmax_rows(line.values[None, :], weights.tau)[0]


def _nms_class(plane: np.ndarray, grad_f: np.ndarray, gt: BinaryMask, normals: NormalField, weights: LossWeights):
    """Accumulate one class's NMS loss into grad_f; returns (loss, scored, skipped)."""
    h, w = plane.shape
    ys, xs = np.nonzero(gt.bits)
    if len(xs) == 0:
        return 0.0, 0, 0
    ok = normals.valid[ys, xs]
    angles = normals.angle[ys, xs]
    L = weights.L
    t = np.arange(-L, L + 1, dtype=np.float64)
    px = xs[:, None] + t[None, :] * np.cos(angles)[:, None]
    py = ys[:, None] + t[None, :] * np.sin(angles)[:, None]
    inside = (
        (px.min(axis=1) >= 0)
        & (px.max(axis=1) <= w - 1)
        & (py.min(axis=1) >= 0)
        & (py.max(axis=1) <= h - 1)
    )
    keep = ok & inside
    skipped = int(len(xs) - keep.sum())
    if not keep.any():
        return 0.0, 0, skipped
    px, py = px[keep], py[keep]
    vals, idx, wts = _bilinear_gather(plane, px, py)
    hprob = _softmax_rows(vals, weights.tau)
    loss = float(-np.log(hprob[:, L]).sum())
    dl_dvals = hprob.copy()
    dl_dvals[:, L] -= 1.0
    dl_dvals /= weights.tau
    np.add.at(grad_f.ravel(), idx.ravel(), (dl_dvals[:, :, None] * wts).ravel())
    return loss, int(keep.sum()), skipped


def nms_loss(pred: ScalarField, gt, gt_normals, weights: LossWeights = LossWeights()):
    """NMS loss over positive ground-truth boundary pixels.

    Pixels whose sample line leaves the image (or whose ground-truth normal is
    undefined) are skipped rather than clamped; the count is reported through
    :class:`LossBreakdown` by :func:`total_loss`.
    """
    loss, grad, _, _ = _nms_details(pred, gt, gt_normals, weights)
    return loss, grad


def _nms_details(pred: ScalarField, gt, gt_normals, weights: LossWeights):
    gts = _as_mask_list(gt)
    nfs = [gt_normals] if isinstance(gt_normals, NormalField) else list(gt_normals)
    _check_shapes(pred, gts)
    if len(nfs) != len(gts):
        raise DomainError("need one normal field per class")
    grad_f = np.zeros_like(pred.values)
    loss = 0.0
    scored = skipped = 0
    for k, (m, nf) in enumerate(zip(gts, nfs)):
        lk, sk, kk = _nms_class(pred.values[k], grad_f[k], m, nf, weights)
        loss += lk
        scored += sk
        skipped += kk
    grad_z = grad_f * pred.values * (1.0 - pred.values)
    return loss, ScalarField(grad_z), scored, skipped


def _direction_class(plane: np.ndarray, gt: BinaryMask, nf: NormalField, sigma: float):
    """One class's direction loss and its gradient w.r.t. the probability plane."""
    s, hxx, hxy, hyy = hessian_features(ScalarField(np.clip(plane, 0.0, None)), sigma)
    theta_e, tie = angles_from_hessian(hxx, hxy, hyy)
    valid_e = (s > 1e-3) & ~tie
    sel = gt.bits & nf.valid & valid_e
    count = int(sel.sum())
    grad_plane = np.zeros_like(plane)
    if count == 0:
        return 0.0, grad_plane, 0
    d = nf.angle[sel]
    e = theta_e[sel]
    dot = np.cos(d - e)
    m = np.abs(dot)
    mc = np.minimum(m, _DOT_CLAMP)
    loss = float(np.arccos(mc).sum())

    # d(loss)/d(theta_e); zero where the clamp is active
    denom = np.sqrt(1.0 - mc**2)
    live = m < _DOT_CLAMP
    dl_dtheta = np.zeros_like(dot)
    dl_dtheta[live] = (-np.sign(dot) * np.sin(d - e) / denom)[live]

    # back through theta = 0.5*atan2(2*hxy, hxx-hyy) (+pi/2 branch is constant)
    u = (hxx - hyy)[sel]
    v = (2.0 * hxy)[sel]
    r2 = u * u + v * v
    g_hxx = np.zeros_like(plane)
    g_hxy = np.zeros_like(plane)
    g_hyy = np.zeros_like(plane)
    g_hxx[sel] = dl_dtheta * (-v / (2.0 * r2))
    g_hyy[sel] = dl_dtheta * (v / (2.0 * r2))
    g_hxy[sel] = dl_dtheta * (u / r2)

    # adjoint of the fixed filters: all kernels are point-symmetric and
    # zero-padded, so the adjoint is the same correlation
    g_s = (
        ndi.correlate1d(g_hxx, _D2, axis=1, mode="constant", cval=0.0)
        + ndi.correlate1d(g_hyy, _D2, axis=0, mode="constant", cval=0.0)
        + ndi.correlate(g_hxy, _KXY, mode="constant", cval=0.0)
    )
    grad_plane = smooth_zero_padded(g_s, sigma)
    return loss, grad_plane, count


def direction_loss(
    pred: ScalarField,
    gt,
    gt_normals,
    weights: LossWeights = LossWeights(),
    sigma: float = DEFAULT_SIGMA,
):
    """Angular gap between predicted and ground-truth boundary normals.

    Evaluated at positive ground-truth boundary pixels where both normals are
    defined; the dot product of the unoriented normals is taken up to sign and
    clamped before the arccos.  The gradient flows through the fixed smoothing
    and Hessian filters used by normal estimation.
    """
    gts = _as_mask_list(gt)
    nfs = [gt_normals] if isinstance(gt_normals, NormalField) else list(gt_normals)
    _check_shapes(pred, gts)
    if len(nfs) != len(gts):
        raise DomainError("need one normal field per class")
    loss = 0.0
    grad_f = np.zeros_like(pred.values)
    counted = 0
    for k, (m, nf) in enumerate(zip(gts, nfs)):
        lk, gk, ck = _direction_class(pred.values[k], m, nf, sigma)
        loss += lk
        grad_f[k] = gk
        counted += ck
    grad_z = grad_f * pred.values * (1.0 - pred.values)
    return loss, ScalarField(grad_z), counted


def total_loss(
    pred_logits: ScalarField,
    gt,
    weights: LossWeights = LossWeights(),
    gt_normals=None,
    normal_sigma: float = DEFAULT_SIGMA,
) -> LossBreakdown:
    """Combined objective on logits: alpha1*BCE + alpha2*NMS + alpha3*direction.

    Ground-truth normals are estimated from each class's boundary mask unless
    precomputed ones are passed (callers that reuse a ground truth should
    cache them).
    """
    gts = _as_mask_list(gt)
    _check_shapes(pred_logits, gts)
    if gt_normals is None:
        nfs = [estimate_normals(m.to_field(), normal_sigma) for m in gts]
    else:
        nfs = [gt_normals] if isinstance(gt_normals, NormalField) else list(gt_normals)
    prob = ScalarField(np.clip(sigmoid(pred_logits.values), 0.0, 1.0), probabilities=True)

    bce_val, bce_grad = weighted_bce(prob, gts, weights)
    if weights.alpha2 > 0:
        nms_val, nms_grad, nms_pixels, nms_skipped = _nms_details(prob, gts, nfs, weights)
    else:
        nms_val, nms_grad, nms_pixels, nms_skipped = 0.0, None, 0, 0
    if weights.alpha3 > 0:
        dir_val, dir_grad, dir_pixels = direction_loss(prob, gts, nfs, weights, normal_sigma)
    else:
        dir_val, dir_grad, dir_pixels = 0.0, None, 0

    grad = weights.alpha1 * bce_grad.values
    if nms_grad is not None:
        grad = grad + weights.alpha2 * nms_grad.values
    if dir_grad is not None:
        grad = grad + weights.alpha3 * dir_grad.values
    positives = sum(m.count for m in gts)
    return LossBreakdown(
        bce=bce_val,
        nms=nms_val,
        dir=dir_val,
        total=weights.alpha1 * bce_val + weights.alpha2 * nms_val + weights.alpha3 * dir_val,
        gradient=ScalarField(grad),
        positives=positives,
        nms_pixels=nms_pixels,
        nms_skipped=nms_skipped,
        dir_pixels=dir_pixels,
        no_valid_boundary=(positives > 0 and nms_pixels == 0 and weights.alpha2 > 0),
    )
