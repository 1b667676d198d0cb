"""Evolve a mask with the morphological geodesic active contour.

A small disc inflates (balloon force) until the speed map's valley along a
probability ridge stops the front; a second field with two disjoint ridges
shows a topology split.  Snapshots are exported as numbered PGM masks.
"""
import numpy as np

from contourforge.levelset import EvolutionParams, compute_g, evolve, export_trajectory
from contourforge.raster import BinaryMask, ScalarField, label_components, mask_to_boundary

size = 64
yy, xx = np.mgrid[0:size, 0:size]
radius = np.hypot(xx - 32, yy - 32)
ridge = ScalarField(np.exp(-((radius - 10) ** 2) / (2 * 1.5**2)), probabilities=True)
zeros = ScalarField(np.zeros((1, size, size)), probabilities=True)

init = BinaryMask(radius <= 5)
params = EvolutionParams(lam=0, c=1.0, mu=1, max_steps=100, snapshot_every=5,
                         balloon_threshold=0.3)
traj = evolve(init, compute_g(ridge, zeros, 0.0), params)
for snap in traj.snapshots:
    ys, xs = np.nonzero(mask_to_boundary(snap.mask).bits)
    print(f"step {snap.step:3d}: area {snap.mask.count:4d}, "
          f"mean contour radius {np.hypot(xs - 32, ys - 32).mean():5.2f}")
export_trajectory(traj, "demo_out_trajectory")
print("snapshots exported to demo_out_trajectory/\n")

size2 = 96
yy, xx = np.mgrid[0:size2, 0:size2]
r1 = np.hypot(xx - 30, yy - 48)
r2 = np.hypot(xx - 66, yy - 48)
two_rings = ScalarField(
    np.maximum(np.exp(-((r1 - 10) ** 2) / 2), np.exp(-((r2 - 10) ** 2) / 2)),
    probabilities=True,
)
blob = np.zeros((size2, size2), bool)
blob[30:66, 12:84] = True
params = EvolutionParams(lam=0, c=-1.0, mu=1, max_steps=150, snapshot_every=25,
                         balloon_threshold=0.3)
traj = evolve(BinaryMask(blob),
              compute_g(two_rings, ScalarField(np.zeros((1, size2, size2)), probabilities=True), 0.0),
              params)
for snap in traj.snapshots:
    _, n = label_components(snap.mask)
    print(f"step {snap.step:3d}: area {snap.mask.count:5d}, components {n}")
print("one shrinking front pinched off into two rings (topology handled for free)")
