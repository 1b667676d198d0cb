"""Boundary normal estimation from soft or binary boundary maps.

Normals are unoriented: angles live in [0, pi).  They are obtained from the
eigenvector of the local Hessian with the largest-magnitude eigenvalue, which
is the right notion for ridge-like boundary responses (a bright line has a
strongly negative second derivative across it and ~zero along it).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.ndimage as ndi

from .errors import DomainError
from .raster import ScalarField, gaussian_kernel1d, read_fpm, write_fpm

__all__ = [
    "NormalField",
    "DEFAULT_SIGMA",
    "SUPPORT_THRESHOLD",
    "hessian_features",
    "estimate_normals",
    "angles_from_hessian",
    "angular_difference",
    "write_normals",
    "read_normals",
]

DEFAULT_SIGMA = 1.5
SUPPORT_THRESHOLD = 1e-3
_TIE_EPS = 1e-12

# fixed cross-derivative kernel; d2/dxdy by central differences
_KXY = np.array([[0.25, 0.0, -0.25], [0.0, 0.0, 0.0], [-0.25, 0.0, 0.25]])
_D2 = np.array([1.0, -2.0, 1.0])


@dataclass(frozen=True)
class NormalField:
    """Per-pixel unoriented normal angles in [0, pi) with a validity mask."""

    angle: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.angle, dtype=np.float64)
        v = np.asarray(self.valid, dtype=bool)
        if a.shape != v.shape or a.ndim != 2:
            raise DomainError("angle and validity shapes must match and be 2-D")
        a = np.where(v, np.mod(a, np.pi), 0.0)
        a.setflags(write=False)
        v = np.ascontiguousarray(v)
        v.setflags(write=False)
        object.__setattr__(self, "angle", a)
        object.__setattr__(self, "valid", v)

    @property
    def height(self) -> int:
        return self.angle.shape[0]

    @property
    def width(self) -> int:
        return self.angle.shape[1]


def smooth_zero_padded(plane: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian with zero padding.

    Zero padding (unlike the edge-replicating :func:`raster.gaussian_smooth`)
    makes the operator exactly self-adjoint, which the direction-loss gradient
    relies on.
    """
    k = gaussian_kernel1d(sigma)
    if len(k) == 1:
        return plane.copy()
    tmp = ndi.correlate1d(plane, k, axis=0, mode="constant", cval=0.0)
    return ndi.correlate1d(tmp, k, axis=1, mode="constant", cval=0.0)


def hessian_features(boundary: ScalarField, sigma: float = DEFAULT_SIGMA):
    """Smoothed response and Hessian entries (hxx, hxy, hyy) of a boundary map.

    All four maps come from fixed linear filters (Gaussian followed by
    second-difference kernels), every filter zero-padded and point-symmetric.
    """
    if boundary.channels != 1:
        raise DomainError("normal estimation expects a single-channel boundary map")
    plane = boundary.channel(0)
    if plane.min() < 0:
        raise DomainError("boundary response must be non-negative")
    s = smooth_zero_padded(plane, sigma)
    hxx = ndi.correlate1d(s, _D2, axis=1, mode="constant", cval=0.0)
    hyy = ndi.correlate1d(s, _D2, axis=0, mode="constant", cval=0.0)
    hxy = ndi.correlate(s, _KXY, mode="constant", cval=0.0)
    return s, hxx, hxy, hyy


def angles_from_hessian(hxx: np.ndarray, hxy: np.ndarray, hyy: np.ndarray):
    """Normal angle (mod pi) of the dominant Hessian eigenvector plus a
    tie mask marking pixels where the dominant direction is ambiguous."""
    u = hxx - hyy
    v = 2.0 * hxy
    trace = hxx + hyy
    theta_major = 0.5 * np.arctan2(v, u)
    theta = np.where(trace < 0, theta_major + 0.5 * np.pi, theta_major)
    tie = (np.hypot(u, v) <= _TIE_EPS) | (np.abs(trace) <= _TIE_EPS)
    return np.mod(theta, np.pi), tie


def estimate_normals(boundary: ScalarField, sigma: float = DEFAULT_SIGMA) -> NormalField:
    """Per-pixel boundary normals from the Hessian of the smoothed response.

    Pixels are valid where the smoothed response exceeds the support threshold
    and the eigenvalue magnitudes are not tied (isotropic or saddle-balanced
    Hessians give no preferred direction).
    """
    s, hxx, hxy, hyy = hessian_features(boundary, sigma)
    theta, tie = angles_from_hessian(hxx, hxy, hyy)
    valid = (s > SUPPORT_THRESHOLD) & ~tie
    return NormalField(theta, valid)


def angular_difference(a, b):
    """Unoriented angular gap between normals, in [0, pi/2]."""
    d = np.mod(np.abs(np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)), np.pi)
    out = np.minimum(d, np.pi - d)
    return float(out) if out.ndim == 0 else out


def write_normals(path, nf: NormalField) -> None:
    """Serialize as 2-channel FPM1 (cos 2theta, sin 2theta); invalid -> (0, 0)."""
    c = np.where(nf.valid, np.cos(2.0 * nf.angle), 0.0)
    s = np.where(nf.valid, np.sin(2.0 * nf.angle), 0.0)
    write_fpm(path, ScalarField(np.stack([c, s])))


def read_normals(path) -> NormalField:
    f = read_fpm(path)
    if f.channels != 2:
        raise DomainError("normal field files carry exactly 2 channels")
    c, s = f.channel(0), f.channel(1)
    valid = np.hypot(c, s) > 0.5
    return NormalField(np.mod(0.5 * np.arctan2(s, c), np.pi), valid)
