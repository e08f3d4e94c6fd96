"""Forward kinematics on the built-in four-joint limb."""

import numpy as np

from graspmap.kinematics import (JointReading, default_limb, fk_delta,
                                 fk_pose, jacobian_numeric)

np.set_printoptions(precision=4, suppress=True)

limb = default_limb()
print(f"default limb: {limb.dof} joints, reach {limb.reach():.3f} m")

# Straight-down home configuration vs a tabletop sweep posture.
home = np.zeros(4)
sweep = np.array([0.1, 0.35, 0.5, 0.55])
print("\ngripper at home:         ", fk_pose(limb, home).translation)
print("gripper mid-sweep:       ", fk_pose(limb, sweep).translation)

# The camera looks along gripper +z; at the sweep posture that axis should
# point down toward the terrain in front of the base.
pose = fk_pose(limb, sweep)
optical_axis = pose.rotation.matrix()[:, 2]
print("camera optical axis:     ", optical_axis)

# Relative motion between two encoder snapshots, in the earlier gripper frame.
a = JointReading(0.0, sweep)
b = JointReading(1.0 / 30.0, sweep + np.array([0.02, -0.01, 0.0, 0.01]))
delta = fk_delta(limb, a, b)
print("\none-frame motion:        ", delta.translation,
      f" ({np.linalg.norm(delta.translation) * 1e3:.2f} mm)")

# Numeric body Jacobian: column j = instantaneous gripper twist per unit
# rate of joint j, translation rows first.
jac = jacobian_numeric(limb, sweep)
print("\nbody Jacobian at the sweep posture:\n", jac)
print("\njoint 1 spins about base z; in gripper coordinates that axis is",
      jac[3:, 0])
