"""Forward kinematics against hand-derived closed forms and the matrix oracle."""

import math

import numpy as np
import pytest

from conftest import rand_pose, rotation_gap
from graspmap.errors import DimensionMismatch
from graspmap.geometry import Pose, Rotation, compose, inverse, se3_log
from graspmap.kinematics import (Joint, JointReading, LimbModel, default_limb,
                                 fk_delta, fk_pose, jacobian_numeric,
                                 load_limb, save_limb)


def planar_two_link(l1: float = 0.3, l2: float = 0.2) -> LimbModel:
    return LimbModel(
        joints=(Joint(axis=[0, 0, 1], offset=Pose.from_parts(translation=[l1, 0, 0])),
                Joint(axis=[0, 0, 1], offset=Pose.from_parts(translation=[l2, 0, 0]))),
        base_pose=Pose.identity(),
        gripper_offset=Pose.identity())


def one_joint_z(offset_x: float = 0.2) -> LimbModel:
    return LimbModel(
        joints=(Joint(axis=[0, 0, 1],
                      offset=Pose.from_parts(translation=[offset_x, 0, 0])),),
        base_pose=Pose.identity(),
        gripper_offset=Pose.identity())


def test_zero_angles_collapse_to_offsets():
    rng = np.random.default_rng(0)
    base, g = rand_pose(rng), rand_pose(rng)
    offs = [rand_pose(rng), rand_pose(rng), rand_pose(rng)]
    model = LimbModel(joints=tuple(Joint(axis=[0, 0, 1], offset=o) for o in offs),
                      base_pose=base, gripper_offset=g)
    expected = base.matrix() @ offs[0].matrix() @ offs[1].matrix() \
        @ offs[2].matrix() @ g.matrix()
    assert np.allclose(fk_pose(model, np.zeros(3)).matrix(), expected, atol=1e-12)


def test_one_joint_hand_multiplication():
    # Rz(pi/2) then translate +x 0.2 in the rotated frame: gripper at (0, 0.2, 0)
    pose = fk_pose(one_joint_z(), [math.pi / 2])
    assert np.allclose(pose.translation, [0.0, 0.2, 0.0], atol=1e-15)
    assert rotation_gap(pose.rotation,
                        Rotation.from_axis_angle([0, 0, 1], math.pi / 2)) < 1e-15


def test_planar_two_link_closed_form():
    th1, th2 = math.pi / 6, math.pi / 3
    pose = fk_pose(planar_two_link(), [th1, th2])
    expected = [0.3 * math.cos(th1) + 0.2 * math.cos(th1 + th2),
                0.3 * math.sin(th1) + 0.2 * math.sin(th1 + th2),
                0.0]
    assert np.allclose(pose.translation, expected, atol=1e-15)
    assert rotation_gap(pose.rotation,
                        Rotation.from_axis_angle([0, 0, 1], th1 + th2)) < 1e-14


def test_fk_pose_wrong_angle_count():
    with pytest.raises(DimensionMismatch):
        fk_pose(planar_two_link(), [0.1])
    with pytest.raises(DimensionMismatch):
        jacobian_numeric(planar_two_link(), [0.1, 0.2, 0.3])


def test_fk_delta_trivials():
    model = default_limb()
    a = JointReading(0.0, [0.1, 0.2, 0.3, 0.4])
    same = JointReading(1.0, [0.1, 0.2, 0.3, 0.4])
    d = fk_delta(model, a, same)
    assert d.rotation.angle() < 1e-15
    assert np.linalg.norm(d.translation) < 1e-15
    zero = JointReading(0.0, np.zeros(4))
    d0 = fk_delta(model, zero, JointReading(2.0, np.zeros(4)))
    assert np.allclose(d0.matrix(), np.eye(4), atol=1e-15)


def test_fk_delta_matches_matrix_oracle():
    model = default_limb()
    rng = np.random.default_rng(1)
    for _ in range(20):
        a = JointReading(0.0, rng.uniform(-1.5, 1.5, 4))
        b = JointReading(1.0, rng.uniform(-1.5, 1.5, 4))
        oracle = np.linalg.inv(fk_pose(model, a.angles).matrix()) \
            @ fk_pose(model, b.angles).matrix()
        assert np.allclose(fk_delta(model, a, b).matrix(), oracle, atol=1e-12)


def test_fk_delta_chaining():
    model = default_limb()
    rng = np.random.default_rng(2)
    for _ in range(10):
        a, b, c = (JointReading(float(k), rng.uniform(-1.0, 1.0, 4))
                   for k in range(3))
        left = compose(fk_delta(model, a, b), fk_delta(model, b, c))
        right = fk_delta(model, a, c)
        assert np.allclose(left.matrix(), right.matrix(), atol=1e-12)


def test_fk_pose_ignores_timestamps():
    model = default_limb()
    angles = [0.3, 0.1, -0.2, 0.5]
    p1 = fk_pose(model, angles)
    p2 = fk_pose(model, np.array(angles))
    assert np.array_equal(p1.matrix(), p2.matrix())
    # fk_delta likewise depends only on angles
    d1 = fk_delta(model, JointReading(0.0, angles), JointReading(1.0, angles))
    d2 = fk_delta(model, JointReading(5.5, angles), JointReading(-3.0, angles))
    assert np.array_equal(d1.matrix(), d2.matrix())


def test_jacobian_one_joint_screw_axis():
    # revolute z joint, gripper 0.2 m down +x: body screw (0, 0.2, 0, 0, 0, 1)
    j = jacobian_numeric(one_joint_z(), [0.0])
    assert j.shape == (6, 1)
    assert np.allclose(j[:, 0], [0.0, 0.2, 0.0, 0.0, 0.0, 1.0], atol=1e-9)


def test_jacobian_planar_matches_analytic():
    model = planar_two_link()
    rng = np.random.default_rng(3)
    for _ in range(10):
        th1, th2 = rng.uniform(-1.2, 1.2, 2)
        l1, l2 = 0.3, 0.2
        dtip = np.array([
            [-l1 * math.sin(th1) - l2 * math.sin(th1 + th2),
             -l2 * math.sin(th1 + th2)],
            [l1 * math.cos(th1) + l2 * math.cos(th1 + th2),
             l2 * math.cos(th1 + th2)],
            [0.0, 0.0]])
        r12 = Rotation.from_axis_angle([0, 0, 1], th1 + th2).matrix()
        j = jacobian_numeric(model, [th1, th2])
        assert np.allclose(j[:3], r12.T @ dtip, atol=1e-8)
        assert np.allclose(j[3:], [[0, 0], [0, 0], [1, 1]], atol=1e-8)


def test_jacobian_step_halving_converged():
    model = default_limb()
    angles = [0.3, 0.4, 0.5, -0.2]
    coarse = jacobian_numeric(model, angles, step=1e-5)
    fine = jacobian_numeric(model, angles, step=1e-6)
    assert np.abs(coarse - fine).max() < 1e-6


def test_default_limb_shape():
    model = default_limb()
    assert model.dof == 4
    assert abs(model.reach() - 0.40) < 1e-12
    # gripper boresight (+z) at zero angles points along the last link
    pose = fk_pose(model, np.zeros(4))
    assert np.isfinite(pose.matrix()).all()


def test_limb_yaml_round_trip(tmp_path):
    model = default_limb()
    path = tmp_path / "limb.yaml"
    save_limb(path, model)
    back = load_limb(path)
    assert back.dof == model.dof
    rng = np.random.default_rng(4)
    for _ in range(5):
        q = rng.uniform(-1.0, 1.0, 4)
        assert np.allclose(fk_pose(back, q).matrix(),
                           fk_pose(model, q).matrix(), atol=1e-12)
