"""Finding graspable bumps in a metric terrain cloud.

A point is graspable when a bowl-shaped shell of voxels under it is fully
occupied: somewhere a spine gripper can wrap around. Flat ground never
qualifies; a hemisphere that matches the bowl radius does.
"""

import numpy as np

from graspmap.mapping import (METERS, PointCloud, build_mask,
                              detect_graspable, fill_below, voxelize)

np.set_printoptions(precision=4, suppress=True)


def height_field_cloud(bump_radius: float, spacing: float = 5e-4) -> PointCloud:
    """Dense samples of a 12 cm square plane with one centered bump."""
    ticks = np.arange(-0.06, 0.06 + spacing / 2, spacing)
    xx, yy = np.meshgrid(ticks, ticks, indexing="ij")
    rr2 = xx ** 2 + yy ** 2
    zz = np.where(rr2 < bump_radius ** 2,
                  np.sqrt(np.maximum(bump_radius ** 2 - rr2, 0.0)), 0.0)
    return PointCloud(np.column_stack([xx.ravel(), yy.ravel(), zz.ravel()]),
                      METERS)


mask = build_mask()  # 30 mm outer, 20 mm inner, 15 mm deep, 2 mm voxels
print(f"gripper bowl mask: {len(mask)} voxel offsets, "
      f"{mask.offsets[:, 2].min()}..{mask.offsets[:, 2].max()} in z")

for radius in (0.030, 0.020, 0.0):
    cloud = height_field_cloud(radius)
    grid = fill_below(voxelize(cloud, 0.002, min_points=1))
    hits = detect_graspable(grid, mask)
    label = f"{radius * 1e3:.0f} mm bump" if radius else "flat plane"
    if hits:
        top = hits[0].position
        print(f"{label:12s} -> {len(hits):3d} anchors, top at "
              f"({top[0]:.3f}, {top[1]:.3f}, {top[2]:.3f}) m")
    else:
        print(f"{label:12s} -> nothing to grasp")

# The 20 mm bump fits through the bowl's inner opening, so the shell is
# never fully supported: matching the mask to the gripper geometry is what
# keeps the detector from latching onto every pebble.
