"""Factor types tying gripper poses and the global map scale together.

Three factors make up the estimation problem:

* ``FkFactor``   - relative gripper motion predicted by joint encoders and
                   forward kinematics, metric.
* ``McFactor``   - relative motion reported by the monocular tracker. Its
                   translation is only known up to the global map scale, which
                   enters the residual multiplicatively.
* ``PriorFactor``- anchors the first pose (gauge freedom) and softly anchors
                   the scale.

The scale variable is optimized as ``log s`` so any iterate maps to a positive
scale. Jacobians are analytic, taken with respect to right perturbations
``T <- T @ exp(delta)`` of each pose and additive perturbation of ``log s``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch
from .geometry import (Pose, Rotation, Twist, compose, hat, inverse,
                       se3_adjoint, se3_left_jacobian_inv, se3_log,
                       se3_right_jacobian_inv, so3_left_jacobian_inv, so3_log,
                       so3_right_jacobian_inv)

# Default information diagonals for the measurement factors. Every entry of
# the 6x6 information matrix diagonal gets the same weight; translation and
# rotation components share it.
FK_INFO_VALUE = 1e-4
MC_INFO_VALUE = 1e-3

# Default anchor strengths. The pose anchor is stiff: it fixes the gauge.
# The scale anchor is deliberately near-zero: it only renders the problem
# nonsingular when the trajectory makes scale unobservable, and must not bias
# the estimate when the data does constrain scale.
POSE_PRIOR_INFO_VALUE = 1e6
SCALE_PRIOR_INFO_VALUE = 1e-14


def default_fk_info() -> np.ndarray:
    return np.full(6, FK_INFO_VALUE)


def default_mc_info() -> np.ndarray:
    return np.full(6, MC_INFO_VALUE)


def _check_info_diag(info, length: int) -> np.ndarray:
    a = np.asarray(info, dtype=float).copy()
    if a.shape != (length,):
        raise DimensionMismatch(
            f"information diagonal must have shape ({length},), got {a.shape}")
    if not np.all(np.isfinite(a)) or np.any(a <= 0.0):
        raise ValueError("information diagonal must be positive and finite")
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class ScaleVar:
    """Global metric scale of the monocular map, stored as log(s)."""

    log_value: float

    def __post_init__(self):
        v = float(self.log_value)
        if not math.isfinite(v):
            raise ValueError("log scale must be finite")
        object.__setattr__(self, "log_value", v)

    @staticmethod
    def from_value(value: float) -> "ScaleVar":
        value = float(value)
        if not (math.isfinite(value) and value > 0.0):
            raise ValueError(f"scale must be positive and finite, got {value}")
        return ScaleVar(math.log(value))

    @property
    def value(self) -> float:
        return math.exp(self.log_value)


@dataclass(frozen=True)
class FkFactor:
    """Joint-encoder relative-motion constraint between poses i-1 and i."""

    i: int
    delta: Pose
    info: np.ndarray | None = None

    def __post_init__(self):
        if int(self.i) < 1:
            raise ValueError("FkFactor index must be >= 1")
        object.__setattr__(self, "i", int(self.i))
        info = default_fk_info() if self.info is None else self.info
        object.__setattr__(self, "info", _check_info_diag(info, 6))


@dataclass(frozen=True)
class McFactor:
    """Monocular-tracker relative-motion constraint between poses i-1 and i.

    ``delta_trans`` is in unscaled map units. With ``frame_aligned`` (the
    default) the translation residual compares the world-frame pose increment
    against the measured step rotated into the world through the earlier pose:

        r_trans = (t_i - t_{i-1}) - s * R_{i-1} @ delta_trans

    Setting ``frame_aligned=False`` keeps the measured step in the world frame
    unrotated, ``r_trans = (t_i - t_{i-1}) - s * delta_trans``, which is only
    consistent when the camera never yaws; it is kept behind a flag for
    comparison runs.
    """

    i: int
    delta_rot: Rotation
    delta_trans: np.ndarray
    info: np.ndarray | None = None
    frame_aligned: bool = True

    def __post_init__(self):
        if int(self.i) < 1:
            raise ValueError("McFactor index must be >= 1")
        object.__setattr__(self, "i", int(self.i))
        t = np.asarray(self.delta_trans, dtype=float).copy()
        if t.shape != (3,):
            raise DimensionMismatch(f"delta_trans must be a 3-vector, got {t.shape}")
        t.flags.writeable = False
        object.__setattr__(self, "delta_trans", t)
        info = default_mc_info() if self.info is None else self.info
        object.__setattr__(self, "info", _check_info_diag(info, 6))
        object.__setattr__(self, "frame_aligned", bool(self.frame_aligned))


@dataclass(frozen=True)
class PriorFactor:
    """Anchor on the first pose and the scale; exactly one per graph."""

    pose: Pose
    pose_info: np.ndarray | None = None
    scale: float = 1.0
    scale_info: float = SCALE_PRIOR_INFO_VALUE

    def __post_init__(self):
        info = np.full(6, POSE_PRIOR_INFO_VALUE) if self.pose_info is None else self.pose_info
        object.__setattr__(self, "pose_info", _check_info_diag(info, 6))
        s = float(self.scale)
        if not (math.isfinite(s) and s > 0.0):
            raise ValueError("prior scale must be positive")
        object.__setattr__(self, "scale", s)
        si = float(self.scale_info)
        if not (math.isfinite(si) and si > 0.0):
            raise ValueError("scale_info must be positive")
        object.__setattr__(self, "scale_info", si)


Factor = FkFactor | McFactor | PriorFactor


# --- residuals ----------------------------------------------------------------


def fk_residual(t_prev: Pose, t_curr: Pose, factor: FkFactor) -> np.ndarray:
    """Local-frame twist discrepancy between estimated and measured motion."""
    err = compose(compose(inverse(t_prev), t_curr), inverse(factor.delta))
    return se3_log(err).vector()


def mc_residual(t_prev: Pose, t_curr: Pose, scale: ScaleVar,
                factor: McFactor) -> np.ndarray:
    """Stacked [translation; rotation] residual of the scaled tracker motion."""
    s = scale.value
    step = t_curr.translation - t_prev.translation
    if factor.frame_aligned:
        r_trans = step - s * t_prev.rotation.apply(factor.delta_trans)
    else:
        r_trans = step - s * factor.delta_trans
    r_rot = so3_log((t_prev.rotation.inverse() @ t_curr.rotation)
                    @ factor.delta_rot.inverse())
    return np.concatenate([r_trans, r_rot])


def prior_residual(t0: Pose, scale: ScaleVar, factor: PriorFactor) -> np.ndarray:
    """7-vector: pose anchor twist followed by the log-scale anchor gap."""
    pose_part = se3_log(compose(inverse(factor.pose), t0)).vector()
    return np.concatenate([pose_part, [scale.log_value - math.log(factor.scale)]])


def factor_cost(residual, info) -> float:
    """Squared Mahalanobis norm r^T Info r; accepts a diagonal or full matrix."""
    r = np.asarray(residual, dtype=float)
    if r.ndim != 1:
        raise DimensionMismatch("residual must be a flat vector")
    m = np.asarray(info, dtype=float)
    if m.shape == (r.size,):
        return float(r @ (m * r))
    if m.shape == (r.size, r.size):
        return float(r @ m @ r)
    raise DimensionMismatch(
        f"information of shape {m.shape} does not match residual of size {r.size}")


# --- analytic Jacobians ---------------------------------------------------------


def fk_jacobians(t_prev: Pose, t_curr: Pose,
                 factor: FkFactor) -> tuple[np.ndarray, np.ndarray]:
    """(d r / d pose_{i-1}, d r / d pose_i) for right perturbations."""
    r = Twist.from_vector(fk_residual(t_prev, t_curr, factor))
    j_prev = -se3_left_jacobian_inv(r)
    j_curr = se3_right_jacobian_inv(r) @ se3_adjoint(factor.delta)
    return j_prev, j_curr


def mc_jacobians(t_prev: Pose, t_curr: Pose, scale: ScaleVar,
                 factor: McFactor) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(d r / d pose_{i-1}, d r / d pose_i, d r / d log s)."""
    s = scale.value
    r_prev = t_prev.rotation.matrix()
    r_curr = t_curr.rotation.matrix()
    r_rot = so3_log((t_prev.rotation.inverse() @ t_curr.rotation)
                    @ factor.delta_rot.inverse())

    j_prev = np.zeros((6, 6))
    j_curr = np.zeros((6, 6))
    j_scale = np.zeros(6)

    j_prev[:3, :3] = -r_prev
    j_curr[:3, :3] = r_curr
    if factor.frame_aligned:
        rotated = r_prev @ factor.delta_trans
        j_prev[:3, 3:] = s * r_prev @ hat(factor.delta_trans)
        j_scale[:3] = -s * rotated
    else:
        j_scale[:3] = -s * factor.delta_trans

    j_prev[3:, 3:] = -so3_left_jacobian_inv(r_rot)
    j_curr[3:, 3:] = so3_right_jacobian_inv(r_rot) @ factor.delta_rot.matrix()
    return j_prev, j_curr, j_scale


def prior_jacobians(t0: Pose, scale: ScaleVar,
                    factor: PriorFactor) -> tuple[np.ndarray, np.ndarray]:
    """(d r / d pose_0, d r / d log s) for the 7-row anchor residual."""
    pose_part = Twist.from_vector(
        se3_log(compose(inverse(factor.pose), t0)).vector())
    j_pose = np.zeros((7, 6))
    j_pose[:6, :] = se3_right_jacobian_inv(pose_part)
    j_scale = np.zeros(7)
    j_scale[6] = 1.0
    return j_pose, j_scale


# --- uniform dispatch used by the solver ---------------------------------------


def factor_info_diag(factor: Factor) -> np.ndarray:
    """Information diagonal matching the factor's residual length."""
    if isinstance(factor, PriorFactor):
        return np.concatenate([factor.pose_info, [factor.scale_info]])
    return factor.info


def factor_residual(factor: Factor, poses, scale: ScaleVar) -> np.ndarray:
    if isinstance(factor, FkFactor):
        return fk_residual(poses[factor.i - 1], poses[factor.i], factor)
    if isinstance(factor, McFactor):
        return mc_residual(poses[factor.i - 1], poses[factor.i], scale, factor)
    if isinstance(factor, PriorFactor):
        return prior_residual(poses[0], scale, factor)
    raise TypeError(f"unknown factor type {type(factor).__name__}")


def factor_jacobians(factor: Factor, poses, scale: ScaleVar) -> dict:
    """Blocks keyed by variable: ('pose', i) -> (m, 6), ('scale',) -> (m,)."""
    if isinstance(factor, FkFactor):
        j_prev, j_curr = fk_jacobians(poses[factor.i - 1], poses[factor.i], factor)
        return {("pose", factor.i - 1): j_prev, ("pose", factor.i): j_curr}
    if isinstance(factor, McFactor):
        j_prev, j_curr, j_scale = mc_jacobians(
            poses[factor.i - 1], poses[factor.i], scale, factor)
        return {("pose", factor.i - 1): j_prev, ("pose", factor.i): j_curr,
                ("scale",): j_scale}
    if isinstance(factor, PriorFactor):
        j_pose, j_scale = prior_jacobians(poses[0], scale, factor)
        return {("pose", 0): j_pose, ("scale",): j_scale}
    raise TypeError(f"unknown factor type {type(factor).__name__}")
