import math

import numpy as np
import pytest

from sensorcal.transform import (
    EulerPose,
    RigidTransform,
    apply,
    compose,
    from_euler,
    invert,
    quat_angular_distance,
    to_euler,
    transform_points,
    translation_distance,
)
from sensorcal.data import PointCloud

SQ2 = math.sqrt(2.0) / 2.0


def rot_z(angle, tx=0.0, ty=0.0, tz=0.0):
    return from_euler(EulerPose(yaw=angle, tx=tx, ty=ty, tz=tz))


def random_transform(rng):
    e = EulerPose(*rng.uniform(-math.pi + 0.01, math.pi - 0.01, 3), *rng.uniform(-5, 5, 3))
    return from_euler(e)


def test_constructor_normalizes_and_canonicalizes():
    t = RigidTransform(q=np.array([-2.0, 0.0, 0.0, 0.0]), t=np.zeros(3))
    assert np.allclose(t.q, [1, 0, 0, 0])
    assert abs(np.linalg.norm(t.q) - 1.0) < 1e-9
    flipped = RigidTransform(q=np.array([-SQ2, 0, 0, -SQ2]), t=np.zeros(3))
    assert flipped.q[0] > 0


def test_compose_pure_translations_add():
    a = RigidTransform.from_translation(1, 0, 0)
    b = RigidTransform.from_translation(0, 2, 0)
    c = compose(a, b)
    assert np.allclose(c.t, [1, 2, 0])
    assert np.allclose(c.q, [1, 0, 0, 0])


def test_compose_identity_law():
    t = rot_z(0.3, 1.0, 2.0, 3.0)
    c = compose(t, RigidTransform.identity())
    assert np.allclose(c.q, t.q) and np.allclose(c.t, t.t)


def test_compose_two_quarter_turns_is_half_turn():
    q90 = rot_z(math.pi / 2)
    assert np.allclose(q90.q, [SQ2, 0, 0, SQ2])
    q180 = compose(q90, q90)
    assert np.allclose(q180.q, [0, 0, 0, 1], atol=1e-12)
    # matrix oracle
    assert np.allclose(q180.matrix(), q90.matrix() @ q90.matrix(), atol=1e-12)


def test_compose_matches_matrix_product():
    rng = np.random.default_rng(11)
    for _ in range(50):
        a, b = random_transform(rng), random_transform(rng)
        assert np.allclose(compose(a, b).matrix(), a.matrix() @ b.matrix(), atol=1e-9)


def test_invert_identity_and_translation():
    assert np.allclose(invert(RigidTransform.identity()).matrix(), np.eye(4))
    inv = invert(RigidTransform.from_translation(1, 2, 3))
    assert np.allclose(inv.t, [-1, -2, -3])


def test_invert_rotated_translation_by_hand():
    t = rot_z(math.pi / 2, tx=1.0)
    inv = invert(t)
    assert np.allclose(inv.q, rot_z(-math.pi / 2).q)
    assert np.allclose(inv.t, [0, 1, 0], atol=1e-12)


def test_invert_roundtrip_random():
    rng = np.random.default_rng(12)
    for _ in range(100):
        a = random_transform(rng)
        round_trip = compose(a, invert(a))
        assert np.allclose(round_trip.q, [1, 0, 0, 0], atol=1e-9)
        assert np.allclose(round_trip.t, 0.0, atol=1e-9)


def test_apply_identity_rotation_translation():
    cloud = PointCloud(xyz=[[1, 0, 0], [1, 1, 1]], channels=[[7.0], [8.0]], schema=("intensity",))
    same = apply(RigidTransform.identity(), cloud)
    assert np.array_equal(same.xyz, cloud.xyz)
    rotated = apply(rot_z(math.pi / 2), cloud)
    assert np.allclose(rotated.xyz[0], [0, 1, 0], atol=1e-12)
    shifted = apply(RigidTransform.from_translation(0, 0, 5), cloud)
    assert np.allclose(shifted.xyz[1], [1, 1, 6])
    # channels pass through untouched
    assert np.array_equal(rotated.channels, cloud.channels)


def test_from_euler_examples():
    assert np.allclose(from_euler(EulerPose()).matrix(), np.eye(4))
    yaw90 = from_euler(EulerPose(yaw=math.pi / 2))
    assert np.allclose(yaw90.q, [SQ2, 0, 0, SQ2])
    roll180 = from_euler(EulerPose(roll=math.pi))
    assert np.allclose(roll180.q, [0, 1, 0, 0], atol=1e-12)


def test_from_euler_axis_order_is_zyx_matrix():
    e = EulerPose(roll=0.3, pitch=-0.2, yaw=0.9)
    def rx(a):
        return np.array([[1, 0, 0], [0, math.cos(a), -math.sin(a)], [0, math.sin(a), math.cos(a)]])
    def ry(a):
        return np.array([[math.cos(a), 0, math.sin(a)], [0, 1, 0], [-math.sin(a), 0, math.cos(a)]])
    def rz(a):
        return np.array([[math.cos(a), -math.sin(a), 0], [math.sin(a), math.cos(a), 0], [0, 0, 1]])
    expected = rz(e.yaw) @ ry(e.pitch) @ rx(e.roll)
    assert np.allclose(from_euler(e).rotation_matrix(), expected, atol=1e-12)


def test_to_euler_roundtrip():
    rng = np.random.default_rng(13)
    for _ in range(100):
        a = random_transform(rng)
        back = from_euler(to_euler(a))
        assert quat_angular_distance(a.q, back.q) < 1e-9
        assert translation_distance(a.t, back.t) < 1e-12


def test_quat_angular_distance_examples():
    q = rot_z(0.7).q
    assert quat_angular_distance(q, q) == 0.0
    assert quat_angular_distance(q, -q) == 0.0
    assert abs(quat_angular_distance([1, 0, 0, 0], rot_z(math.pi / 2).q) - math.pi / 2) < 1e-12


def test_quat_distance_equals_yaw_magnitude():
    for alpha in np.linspace(-math.pi + 1e-6, math.pi, 25):
        d = quat_angular_distance(rot_z(alpha).q, [1, 0, 0, 0])
        assert abs(d - abs(alpha)) < 1e-9


def test_translation_distance_examples():
    assert translation_distance([1, 2, 3], [1, 2, 3]) == 0.0
    assert translation_distance([0, 0, 0], [3, 4, 0]) == 5.0
    assert abs(translation_distance([1, 1, 1], [2, 2, 2]) - math.sqrt(3)) < 1e-12


def test_associativity_random():
    rng = np.random.default_rng(14)
    for _ in range(1000):
        a, b, c = (random_transform(rng) for _ in range(3))
        left = compose(compose(a, b), c)
        right = compose(a, compose(b, c))
        assert np.allclose(left.q, right.q, atol=1e-9)
        assert np.allclose(left.t, right.t, atol=1e-9)


def test_apply_compose_consistency():
    rng = np.random.default_rng(15)
    pts = PointCloud.bare(rng.uniform(-10, 10, (50, 3)))
    for _ in range(20):
        a, b = random_transform(rng), random_transform(rng)
        once = apply(compose(a, b), pts)
        twice = apply(a, apply(b, pts))
        assert np.allclose(once.xyz, twice.xyz, atol=1e-9)


def test_from_euler_matrix_action_roundtrip():
    rng = np.random.default_rng(16)
    pts = rng.uniform(-10, 10, (100, 3))
    for _ in range(20):
        t = random_transform(rng)
        via_matrix = pts @ t.matrix()[:3, :3].T + t.matrix()[:3, 3]
        assert np.allclose(transform_points(t, pts), via_matrix, atol=1e-9)


def test_from_matrix_roundtrip_and_shapes():
    rng = np.random.default_rng(17)
    t = random_transform(rng)
    again = RigidTransform.from_matrix(t.matrix())
    assert quat_angular_distance(t.q, again.q) < 1e-12
    with pytest.raises(ValueError):
        RigidTransform.from_matrix(np.eye(3))


def test_invalid_quaternion_rejected():
    with pytest.raises(ValueError):
        RigidTransform(q=np.zeros(4), t=np.zeros(3))
    with pytest.raises(ValueError):
        RigidTransform(q=np.array([np.nan, 0, 0, 0]), t=np.zeros(3))
