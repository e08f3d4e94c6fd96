"""Shared sampling helpers.

Rotations are sampled directly in quaternion space (normalized Gaussian
4-vectors), so tests of the exp/log maps never use those maps to build their
own inputs.
"""

import numpy as np

from graspmap.geometry import Pose, Rotation


def rand_rotation(rng) -> Rotation:
    q = rng.normal(size=4)
    return Rotation(q / np.linalg.norm(q))


def rand_pose(rng, span: float = 1.0) -> Pose:
    return Pose(rand_rotation(rng), rng.uniform(-span, span, 3))


def rand_twist_vector(rng, max_angle: float) -> np.ndarray:
    """Twist vector [rho; phi] with ||phi|| uniform in (0, max_angle]."""
    rho = rng.uniform(-1.0, 1.0, 3)
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    return np.concatenate([rho, axis * rng.uniform(0.0, max_angle)])


def rotation_gap(a: Rotation, b: Rotation) -> float:
    """Angle of the relative rotation; 0 iff a == b as rotations."""
    return (a.inverse() @ b).angle()
