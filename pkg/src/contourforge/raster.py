"""Core raster types (scalar fields, binary masks, polygons), morphology,
distance transforms, contour/polygon conversion and file I/O.

Conventions used everywhere in this package:

* arrays are indexed ``[row, col]``; point coordinates are ``(x, y)`` with
  ``x`` along columns and ``y`` along rows (y grows downward),
* an integer coordinate is the *center* of a pixel,
* the image border is treated as background for morphology and boundary
  extraction, so masks never stick to the frame.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.ndimage as ndi
from skimage import measure

from .errors import DomainError, FormatError

__all__ = [
    "ScalarField",
    "BinaryMask",
    "Polygon",
    "StructuringElement",
    "bilinear_sample",
    "bilinear_weights",
    "dilate",
    "erode",
    "distance_transform",
    "mask_to_boundary",
    "mask_to_contours",
    "polygon_to_mask",
    "signed_area",
    "label_components",
    "gaussian_kernel1d",
    "gaussian_smooth",
    "read_fpm",
    "write_fpm",
    "read_pgm",
    "read_mask_pgm",
    "write_mask_pgm",
    "write_pgm",
    "read_ppm",
    "sniff_raster",
    "load_polygon_json",
    "polygon_to_obj",
    "polygon_from_obj",
    "save_polygon_json",
]


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ScalarField:
    """Immutable real-valued raster of shape (channels, height, width).

    When ``probabilities`` is set, all values must lie in [0, 1].
    """

    values: np.ndarray
    probabilities: bool = False

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim == 2:
            v = v[None, :, :]
        if v.ndim != 3 or v.shape[0] < 1 or v.shape[1] < 1 or v.shape[2] < 1:
            raise DomainError(f"scalar field must be (channels, height, width), got {v.shape}")
        if not np.isfinite(v).all():
            raise DomainError("scalar field contains NaN or Inf")
        if self.probabilities and (v.min() < 0.0 or v.max() > 1.0):
            raise DomainError("probability field has values outside [0, 1]")
        object.__setattr__(self, "values", _readonly(v))

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]

    def channel(self, k: int) -> np.ndarray:
        if not 0 <= k < self.channels:
            raise DomainError(f"channel {k} out of range (have {self.channels})")
        return self.values[k]


@dataclass(frozen=True)
class BinaryMask:
    """Immutable boolean raster of shape (height, width)."""

    bits: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.bits)
        if b.dtype != np.bool_:
            b = b.astype(bool)
        if b.ndim != 2 or b.shape[0] < 1 or b.shape[1] < 1:
            raise DomainError(f"mask must be 2-D, got shape {b.shape}")
        object.__setattr__(self, "bits", _readonly(b))

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def count(self) -> int:
        return int(self.bits.sum())

    @property
    def empty(self) -> bool:
        return not self.bits.any()

    def to_field(self) -> ScalarField:
        return ScalarField(self.bits.astype(np.float64), probabilities=True)


@dataclass(frozen=True)
class Polygon:
    """Ordered vertex list in sub-pixel (x, y) coordinates."""

    vertices: np.ndarray
    closed: bool = True

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64)
        if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 1:
            raise DomainError(f"polygon vertices must be (n, 2), got {v.shape}")
        if self.closed and v.shape[0] < 3:
            raise DomainError("closed polygon needs at least 3 vertices")
        pairs = np.all(v[1:] == v[:-1], axis=1)
        if pairs.any() or (self.closed and np.all(v[0] == v[-1])):
            raise DomainError("polygon has consecutive identical vertices")
        object.__setattr__(self, "vertices", _readonly(v))

    def __len__(self) -> int:
        return self.vertices.shape[0]


_CROSS3 = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


@dataclass(frozen=True)
class StructuringElement:
    """Morphology footprint: disc(radius), cross3 or square3."""

    name: str
    footprint: np.ndarray = field(repr=False)

    @staticmethod
    def disc(radius: int) -> "StructuringElement":
        if radius < 1:
            raise DomainError("disc radius must be >= 1")
        r = int(radius)
        dy, dx = np.mgrid[-r : r + 1, -r : r + 1]
        return StructuringElement(f"disc({r})", _readonly(dx * dx + dy * dy <= r * r))

    @staticmethod
    def cross3() -> "StructuringElement":
        return StructuringElement("cross3", _readonly(_CROSS3.copy()))

    @staticmethod
    def square3() -> "StructuringElement":
        return StructuringElement("square3", _readonly(np.ones((3, 3), dtype=bool)))


# ---------------------------------------------------------------------------
# sampling

def bilinear_weights(x: float, y: float, width: int, height: int):
    """Grid pixels and weights used by bilinear interpolation at (x, y).

    Returns a list of ((row, col), weight) with weights summing to 1.  This is
    the hook used to route gradients from sub-pixel samples back to the grid.
    """
    if not (0.0 <= x <= width - 1 and 0.0 <= y <= height - 1):
        raise DomainError(f"sample point ({x}, {y}) outside [0, {width - 1}] x [0, {height - 1}]")
    x0 = min(int(math.floor(x)), width - 2) if width > 1 else 0
    y0 = min(int(math.floor(y)), height - 2) if height > 1 else 0
    fx = x - x0
    fy = y - y0
    out = [((y0, x0), (1 - fx) * (1 - fy))]
    if width > 1:
        out.append(((y0, x0 + 1), fx * (1 - fy)))
    if height > 1:
        out.append(((y0 + 1, x0), (1 - fx) * fy))
    if width > 1 and height > 1:
        out.append(((y0 + 1, x0 + 1), fx * fy))
    return out


def bilinear_sample(fld: ScalarField, channel: int, x: float, y: float) -> float:
    """Bilinear interpolation of one channel at sub-pixel (x, y).

    Out-of-range coordinates raise; there is no clamped sampling.
    """
    plane = fld.channel(channel)
    return float(sum(w * plane[rc] for rc, w in bilinear_weights(x, y, fld.width, fld.height)))


# ---------------------------------------------------------------------------
# morphology and distances

def dilate(mask: BinaryMask, se: StructuringElement) -> BinaryMask:
    """Minkowski dilation, image border padded with background."""
    return BinaryMask(ndi.binary_dilation(mask.bits, structure=se.footprint, border_value=0))


def erode(mask: BinaryMask, se: StructuringElement) -> BinaryMask:
    """Minkowski erosion, image border padded with background."""
    return BinaryMask(ndi.binary_erosion(mask.bits, structure=se.footprint, border_value=0))


def distance_transform(mask: BinaryMask) -> ScalarField:
    """Exact Euclidean distance from every pixel to the nearest true pixel."""
    if mask.empty:
        raise DomainError("no foreground")
    return ScalarField(ndi.distance_transform_edt(~mask.bits)[None, :, :])


def mask_to_boundary(mask: BinaryMask) -> BinaryMask:
    """Interior boundary: true pixels with a false 4-neighbor (border counts as false)."""
    b = mask.bits
    padded = np.pad(b, 1, constant_values=False)
    interior = (
        padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:]
    )
    return BinaryMask(b & ~interior)


def label_components(mask: BinaryMask) -> tuple[np.ndarray, int]:
    """8-connected component labels (0 = background) and component count."""
    labels, n = ndi.label(mask.bits, structure=np.ones((3, 3), dtype=bool))
    return labels, int(n)


# ---------------------------------------------------------------------------
# contours

def signed_area(poly: Polygon) -> float:
    """Shoelace area in (x, y-down) coordinates.

    Contours produced by :func:`mask_to_contours` have positive area for outer
    boundaries and negative area for holes.
    """
    v = poly.vertices
    x, y = v[:, 0], v[:, 1]
    return float(0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def mask_to_contours(mask: BinaryMask) -> list[Polygon]:
    """Closed sub-pixel contours around each 8-connected component.

    Marching squares at level 0.5 on the background-padded mask; holes come
    out as separate polygons with opposite (negative) orientation.
    """
    if mask.empty:
        return []
    padded = np.pad(mask.bits.astype(np.float64), 1)
    polys = []
    for c in measure.find_contours(padded, 0.5, fully_connected="high", positive_orientation="high"):
        pts = c[:-1] if np.allclose(c[0], c[-1]) else c
        if len(pts) < 3:
            continue
        keep = np.ones(len(pts), dtype=bool)
        keep[1:] = np.any(pts[1:] != pts[:-1], axis=1)
        pts = pts[keep]
        if len(pts) < 3 or np.all(pts[0] == pts[-1]):
            continue
        # (row, col) -> (x, y), minus the pad offset; reverse so outer rings
        # get positive shoelace area in the y-down frame.
        xy = np.stack([pts[:, 1] - 1.0, pts[:, 0] - 1.0], axis=1)[::-1]
        polys.append(Polygon(xy, closed=True))
    return polys


_EDGE_EPS = 1e-9


def polygon_to_mask(poly: Polygon, width: int, height: int) -> BinaryMask:
    """Rasterize a closed polygon with the even-odd rule at pixel centers.

    Pixel centers lying exactly on an edge count as inside.
    """
    if not poly.closed:
        raise DomainError("polygon_to_mask requires a closed polygon")
    v = poly.vertices
    bits = np.zeros((height, width), dtype=bool)
    x0 = max(0, int(math.floor(v[:, 0].min())))
    x1 = min(width - 1, int(math.ceil(v[:, 0].max())))
    y0 = max(0, int(math.floor(v[:, 1].min())))
    y1 = min(height - 1, int(math.ceil(v[:, 1].max())))
    if x0 > x1 or y0 > y1:
        return BinaryMask(bits)
    px, py = np.meshgrid(
        np.arange(x0, x1 + 1, dtype=np.float64),
        np.arange(y0, y1 + 1, dtype=np.float64),
    )
    inside = np.zeros(px.shape, dtype=bool)
    on_edge = np.zeros(px.shape, dtype=bool)
    n = len(v)
    for i in range(n):
        ax, ay = v[i]
        bx, by = v[(i + 1) % n]
        # even-odd crossing of the rightward ray from each center
        cond = (ay <= py) != (by <= py)
        with np.errstate(divide="ignore", invalid="ignore"):
            xin = ax + (py - ay) * (bx - ax) / (by - ay)
        inside ^= cond & (px < xin)
        # distance from center to the segment, for boundary inclusion
        ex, ey = bx - ax, by - ay
        ln2 = ex * ex + ey * ey
        t = np.clip(((px - ax) * ex + (py - ay) * ey) / max(ln2, _EDGE_EPS**2), 0.0, 1.0)
        d2 = (px - (ax + t * ex)) ** 2 + (py - (ay + t * ey)) ** 2
        on_edge |= d2 <= _EDGE_EPS
    bits[y0 : y1 + 1, x0 : x1 + 1] = inside | on_edge
    return BinaryMask(bits)


# ---------------------------------------------------------------------------
# smoothing

def gaussian_kernel1d(sigma: float) -> np.ndarray:
    """Normalized 1-D Gaussian kernel truncated at +-ceil(3*sigma)."""
    if sigma < 0:
        raise DomainError("sigma must be >= 0")
    if sigma == 0:
        return np.ones(1, dtype=np.float64)
    r = int(math.ceil(3.0 * sigma))
    t = np.arange(-r, r + 1, dtype=np.float64)
    k = np.exp(-0.5 * (t / sigma) ** 2)
    return k / k.sum()


def gaussian_smooth(fld: ScalarField, sigma: float) -> ScalarField:
    """Separable Gaussian smoothing; constants are preserved, sigma=0 is identity."""
    k = gaussian_kernel1d(sigma)
    if len(k) == 1:
        return fld
    out = np.empty_like(fld.values)
    for ch in range(fld.channels):
        tmp = ndi.correlate1d(fld.values[ch], k, axis=0, mode="nearest")
        out[ch] = ndi.correlate1d(tmp, k, axis=1, mode="nearest")
    if fld.probabilities:
        out = np.clip(out, 0.0, 1.0)
    return ScalarField(out, probabilities=fld.probabilities)


# ---------------------------------------------------------------------------
# file formats

def write_fpm(path, fld: ScalarField) -> None:
    """Write the FPM1 format: ASCII header then float32 little-endian planes."""
    header = f"FPM1\n{fld.width} {fld.height} {fld.channels}\n".encode("ascii")
    with open(path, "wb") as f:
        f.write(header)
        f.write(fld.values.astype("<f4").tobytes())


def read_fpm(path) -> ScalarField:
    with open(path, "rb") as f:
        data = f.read()
    if not data.startswith(b"FPM1\n"):
        raise FormatError("bad FPM1 magic", 0)
    nl = data.find(b"\n", 5)
    if nl < 0:
        raise FormatError("unterminated FPM1 dimension line", len(data))
    parts = data[5:nl].split()
    if len(parts) != 3:
        raise FormatError("FPM1 dimension line must hold 3 integers", 5)
    try:
        w, h, k = (int(p) for p in parts)
    except ValueError:
        raise FormatError("non-integer FPM1 dimensions", 5) from None
    if w < 1 or h < 1 or k < 1:
        raise FormatError("non-positive FPM1 dimensions", 5)
    payload = data[nl + 1 :]
    expected = 4 * w * h * k
    if len(payload) < expected:
        raise FormatError(f"FPM1 payload truncated, expected {expected} bytes", len(data))
    vals = np.frombuffer(payload[:expected], dtype="<f4").reshape(k, h, w)
    if not np.isfinite(vals).all():
        raise FormatError("FPM1 payload contains non-finite values", nl + 1)
    return ScalarField(vals.astype(np.float64))


def _netpbm_tokens(data: bytes, count: int, start: int):
    """Read `count` whitespace/comment-separated tokens, returning them with
    the offset just past the single whitespace byte that ends the last one."""
    tokens = []
    i = start
    while len(tokens) < count:
        while i < len(data) and data[i : i + 1].isspace():
            i += 1
        if i < len(data) and data[i : i + 1] == b"#":
            while i < len(data) and data[i : i + 1] != b"\n":
                i += 1
            continue
        if i >= len(data):
            raise FormatError("unexpected end of netpbm header", len(data))
        j = i
        while j < len(data) and not data[j : j + 1].isspace():
            j += 1
        tokens.append((data[i:j], i))
        i = j
    if i >= len(data):
        raise FormatError("missing whitespace after netpbm header", len(data))
    return tokens, i + 1


def _read_netpbm(path, magic: bytes):
    with open(path, "rb") as f:
        data = f.read()
    if data[:2] != magic:
        raise FormatError(f"expected {magic.decode()} magic", 0)
    tokens, offset = _netpbm_tokens(data, 3, 2)
    dims = []
    for tok, pos in tokens:
        try:
            dims.append(int(tok))
        except ValueError:
            raise FormatError("non-integer netpbm header field", pos) from None
    w, h, maxval = dims
    if w < 1 or h < 1:
        raise FormatError("non-positive netpbm dimensions", tokens[0][1])
    if not 0 < maxval <= 255:
        raise FormatError("only 8-bit netpbm images are supported", tokens[2][1])
    nchan = 3 if magic == b"P6" else 1
    expected = w * h * nchan
    payload = data[offset : offset + expected]
    if len(payload) < expected:
        raise FormatError(f"netpbm payload truncated, expected {expected} bytes", len(data))
    raw = np.frombuffer(payload, dtype=np.uint8)
    if nchan == 3:
        raw = raw.reshape(h, w, 3).transpose(2, 0, 1)
    else:
        raw = raw.reshape(1, h, w)
    return raw, maxval


def read_pgm(path) -> ScalarField:
    """8-bit grayscale PGM (P5) as a probability field in [0, 1]."""
    raw, maxval = _read_netpbm(path, b"P5")
    return ScalarField(raw.astype(np.float64) / maxval, probabilities=True)


def read_mask_pgm(path) -> BinaryMask:
    """Binary mask from PGM: values >= 128 read as true."""
    raw, maxval = _read_netpbm(path, b"P5")
    if maxval != 255:
        # scale the >=128 cutoff to the actual maxval
        return BinaryMask(raw[0].astype(np.float64) / maxval >= 128.0 / 255.0)
    return BinaryMask(raw[0] >= 128)


def write_mask_pgm(path, mask: BinaryMask) -> None:
    with open(path, "wb") as f:
        f.write(f"P5\n{mask.width} {mask.height}\n255\n".encode("ascii"))
        f.write((mask.bits.astype(np.uint8) * 255).tobytes())


def write_pgm(path, fld: ScalarField, channel: int = 0) -> None:
    plane = np.clip(fld.channel(channel), 0.0, 1.0)
    with open(path, "wb") as f:
        f.write(f"P5\n{fld.width} {fld.height}\n255\n".encode("ascii"))
        f.write(np.round(plane * 255).astype(np.uint8).tobytes())


def read_ppm(path) -> ScalarField:
    """8-bit RGB PPM (P6) as a 3-channel field in [0, 1] (display use)."""
    raw, maxval = _read_netpbm(path, b"P6")
    return ScalarField(raw.astype(np.float64) / maxval, probabilities=True)


def sniff_raster(data: bytes):
    """Identify raw raster bytes as 'fpm', 'pgm' or 'ppm'; None if unknown."""
    if data.startswith(b"FPM1\n"):
        return "fpm"
    if data[:2] == b"P5":
        return "pgm"
    if data[:2] == b"P6":
        return "ppm"
    return None


# ---------------------------------------------------------------------------
# polygon JSON

def polygon_to_obj(poly: Polygon) -> dict:
    return {"closed": bool(poly.closed), "vertices": [[float(x), float(y)] for x, y in poly.vertices]}


def polygon_from_obj(obj) -> Polygon:
    if not isinstance(obj, dict) or "closed" not in obj or "vertices" not in obj:
        raise DomainError("polygon JSON must hold 'closed' and 'vertices'")
    verts = obj["vertices"]
    if not isinstance(verts, list) or any(
        not isinstance(p, (list, tuple)) or len(p) != 2 for p in verts
    ):
        raise DomainError("polygon vertices must be a list of [x, y] pairs")
    return Polygon(np.asarray(verts, dtype=np.float64), closed=bool(obj["closed"]))


def save_polygon_json(path, poly: Polygon) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(polygon_to_obj(poly), f)


def load_polygon_json(path) -> Polygon:
    with open(path, "r", encoding="utf-8") as f:
        try:
            obj = json.load(f)
        except json.JSONDecodeError as e:
            raise DomainError(f"invalid polygon JSON: {e}") from None
    return polygon_from_obj(obj)
