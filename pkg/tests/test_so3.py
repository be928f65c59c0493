import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from rigidmotif import _core, so3

vec3 = st.lists(st.floats(-3.0, 3.0, allow_nan=False), min_size=3, max_size=3)


def test_exp_quarter_turn_about_z():
    m = so3.exp_so3([0, 0, np.pi / 2])
    assert np.allclose(m, [[0, -1, 0], [1, 0, 0], [0, 0, 1]], atol=1e-15)


def test_exp_matches_scipy(rng):
    w = rng.normal(size=(200, 3))
    ref = Rotation.from_rotvec(w).as_matrix()
    assert np.allclose(so3.exp_so3(w), ref, atol=1e-12)


def test_log_matches_scipy(rng):
    r = Rotation.random(500, random_state=3)
    w = so3.log_so3(r.as_matrix(), eps_cut=0.0)
    assert np.allclose(w, r.as_rotvec(), atol=1e-9)


@given(vec3)
@settings(max_examples=200, deadline=None)
def test_hat_vee_roundtrip(w):
    assert np.allclose(so3.vee(so3.hat(w)), w)
    assert np.allclose(so3.hat(w) @ np.ones(3), np.cross(w, np.ones(3)))


@given(vec3)
@settings(max_examples=200, deadline=None)
def test_log_exp_roundtrip(w):
    w = np.asarray(w)
    n = np.linalg.norm(w)
    if n > np.pi - 0.05:
        w = w * (np.pi - 0.05) / n
    assert np.allclose(so3.log_so3(so3.exp_so3(w)), w, atol=1e-9)


def test_small_angles_are_accurate():
    for a in (1e-12, 1e-8, 1e-5, 1e-4, 2e-4):
        w = np.array([a, -0.5 * a, 0.25 * a])
        back = so3.log_so3(so3.exp_so3(w))
        assert np.allclose(back, w, rtol=1e-9, atol=1e-18)


def test_near_pi_axis_is_recovered():
    axis = np.array([1.0, 2.0, -2.0]) / 3.0
    for ang in (3.05, 3.1, np.pi - 1e-4):
        w = so3.log_so3(so3.exp_so3(axis * ang))
        assert np.allclose(w, axis * ang, atol=1e-8)


def test_angle_near_pi_raises():
    m = so3.exp_so3([0, 0, np.pi - 1e-8])
    with pytest.raises(so3.AngleNearPi):
        so3.log_so3(m)
    w = so3.log_so3(m, eps_cut=0.0)
    assert abs(np.linalg.norm(w) - (np.pi - 1e-8)) < 1e-6


def test_identity_log_is_zero():
    assert np.array_equal(so3.log_so3(np.eye(3)), np.zeros(3))


def test_geodesic_endpoints_and_midpoint(rng):
    a, b = so3.sample_uniform_so3(rng, 2)
    assert np.allclose(so3.geodesic(a, b, 0.0), a)
    assert np.allclose(so3.geodesic(a, b, 1.0), b, atol=1e-9)
    mid = so3.geodesic(a, b, 0.5)
    d = so3.geodesic_dist(a, b)
    assert np.isclose(so3.geodesic_dist(a, mid), d / 2)
    assert np.isclose(so3.geodesic_dist(mid, b), d / 2)


def test_geodesic_dist_is_bi_invariant(rng):
    a, b, g = so3.sample_uniform_so3(rng, 3)
    d = so3.geodesic_dist(a, b)
    assert np.isclose(so3.geodesic_dist(g @ a, g @ b), d)
    assert np.isclose(so3.geodesic_dist(a @ g, b @ g), d)


def test_exp_at_log_at_inverse(rng):
    base, tgt = so3.sample_uniform_so3(rng, 2)
    assert np.allclose(so3.exp_at(base, so3.log_at(base, tgt)), tgt, atol=1e-9)


def test_samples_are_rotations(rng):
    r = so3.sample_uniform_so3(rng, 1000)
    assert so3.orthogonality_error(r).max() < 1e-12
    assert np.allclose(np.linalg.det(r), 1.0)


def test_haar_angle_cdf_endpoints():
    assert so3.haar_angle_cdf(0.0) == 0.0
    assert np.isclose(so3.haar_angle_cdf(np.pi), 1.0)


def test_reorthonormalise_projects_drift(rng):
    r = so3.sample_uniform_so3(rng)
    noisy = r + 1e-6 * rng.normal(size=(3, 3))
    fixed = so3.reorthonormalise(noisy)
    assert so3.orthogonality_error(fixed) < 1e-14
    assert np.abs(fixed - r).max() < 1e-5


def test_project_to_so3_keeps_det_positive():
    refl = np.diag([1.0, 1.0, -1.0])
    p = so3.project_to_so3(refl)
    assert np.isclose(np.linalg.det(p), 1.0)


def test_rigid_frame_algebra(rng):
    f = so3.RigidFrame(so3.sample_uniform_so3(rng), rng.normal(size=3))
    g = so3.RigidFrame(so3.sample_uniform_so3(rng), rng.normal(size=3))
    pts = rng.normal(size=(5, 3))
    assert np.allclose(f.inverse().apply(f.apply(pts)), pts)
    assert np.allclose(f.compose(g).apply(pts), g.apply(f.apply(pts))) or \
        np.allclose(f.compose(g).apply(pts), f.apply(g.apply(pts)))
    assert np.allclose(so3.RigidFrame.identity().apply(pts), pts)


def test_backends_agree(rng):
    w = rng.normal(size=(300, 3))
    w[:10] *= 1e-7
    m = _core.py.exp_batch(w)
    assert np.allclose(_core.exp_batch(w), m, atol=1e-14)
    a, fa = _core.log_batch(m, 1e-6)
    b, fb = _core.py.log_batch(m, 1e-6)
    assert np.allclose(a, b, atol=1e-12)
    assert np.array_equal(np.asarray(fa, bool), np.asarray(fb, bool))
    m2 = so3.sample_uniform_so3(rng, 300)
    assert np.allclose(_core.angle_batch(m, m2), _core.py.angle_batch(m, m2), atol=1e-12)
    base = so3.sample_uniform_so3(rng, 300)
    assert np.allclose(_core.right_exp_batch(base, w, 0.3), _core.py.right_exp_batch(base, w, 0.3), atol=1e-13)
