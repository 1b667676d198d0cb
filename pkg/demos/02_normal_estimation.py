"""Estimate boundary normals from ridge-like maps and inspect their angles."""
import numpy as np

from contourforge.normals import angular_difference, estimate_normals, write_normals
from contourforge.raster import BinaryMask, ScalarField, mask_to_boundary

size = 41
shapes = {}

vertical = np.zeros((size, size))
vertical[:, size // 2] = 1.0
shapes["vertical line"] = (vertical, 0.0)

horizontal = np.zeros((size, size))
horizontal[size // 2, :] = 1.0
shapes["horizontal line"] = (horizontal, np.pi / 2)

diagonal = np.eye(size)
shapes["diagonal line"] = (diagonal, 3 * np.pi / 4)

yy, xx = np.mgrid[0:size, 0:size]
disc = (xx - 20.0) ** 2 + (yy - 20.0) ** 2 <= 12.0**2
circle = mask_to_boundary(BinaryMask(disc)).to_field().values[0]
shapes["circle"] = (circle, None)

for name, (arr, expect) in shapes.items():
    nf = estimate_normals(ScalarField(arr))
    inner = nf.valid.copy()
    inner[:8, :] = inner[-8:, :] = inner[:, :8] = inner[:, -8:] = False
    angles = nf.angle[inner]
    if expect is not None:
        gaps = angular_difference(angles, expect)
        print(f"{name:>15}: {inner.sum():3d} valid pixels, "
              f"max gap to {expect:.3f} rad = {gaps.max():.4f}")
    else:
        # circle normals point radially: compare each angle to its radius angle
        ys, xs = np.nonzero(inner)
        radial = np.mod(np.arctan2(ys - 20.0, xs - 20.0), np.pi)
        gaps = angular_difference(nf.angle[ys, xs], radial)
        print(f"{name:>15}: {len(xs):3d} valid pixels, "
              f"mean radial deviation = {gaps.mean():.4f} rad")

out = "demo_out_normals.fpm"
write_normals(out, estimate_normals(ScalarField(circle)))
print(f"\ncircle normals serialized to {out} (2-channel cos/sin of the doubled angle)")
