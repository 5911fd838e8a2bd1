import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tmscoil import geometry as geo
from tmscoil.geometry import Pose


def _matrix(p: Pose) -> np.ndarray:
    """Independent 4x4 homogeneous form."""
    T = np.zeros((4, 4))
    T[:3, :3] = p.R
    T[:3, 3] = p.t
    T[3, 3] = 1.0
    return T


seeds = st.integers(min_value=0, max_value=2 ** 32 - 1)


def test_compose_identity():
    I = Pose.identity()
    assert geo.compose(I, I).allclose(I, 0.0)


@given(seeds)
def test_compose_with_inverse_is_identity(seed):
    p = geo.random_pose(np.random.default_rng(seed))
    assert geo.compose(p, geo.inverse(p)).allclose(Pose.identity(), 1e-9)


def test_compose_rotz_then_translation_matches_4x4():
    a = Pose(geo.rot_z(math.pi / 2), [0, 0, 0], "b", "m")
    b = Pose(np.eye(3), [1.0, 0.0, 0.0], "m", "t")
    c = geo.compose(a, b)
    oracle = _matrix(a) @ _matrix(b)
    np.testing.assert_allclose(c.matrix, oracle, atol=1e-12)
    np.testing.assert_allclose(c.apply([0, 0, 0]), (oracle @ [0, 0, 0, 1])[:3], atol=1e-12)
    np.testing.assert_allclose(c.apply([0, 0, 0]), [0, 1, 0], atol=1e-12)
    assert (c.to_frame, c.from_frame) == ("b", "t")


def test_compose_frame_mismatch_rejected():
    a = Pose.identity("b", "e")
    b = Pose.identity("c", "t")
    with pytest.raises(geo.FrameMismatchError):
        geo.compose(a, b)


def test_wildcard_frames_chain():
    assert geo.compose(Pose.identity("b", None), Pose.identity("c", "t")).from_frame == "t"


@settings(max_examples=50)
@given(seeds)
def test_compose_associative(seed):
    rng = np.random.default_rng(seed)
    P, Q, S = (geo.random_pose(rng) for _ in range(3))
    left = geo.compose(geo.compose(P, Q), S)
    right = geo.compose(P, geo.compose(Q, S))
    assert left.allclose(right, 1e-9)
    assert geo.is_rotation(left.R)


@given(seeds)
def test_compose_matches_matrix_product(seed):
    rng = np.random.default_rng(seed)
    a, b = geo.random_pose(rng), geo.random_pose(rng)
    np.testing.assert_allclose(geo.compose(a, b).matrix, _matrix(a) @ _matrix(b), atol=1e-9)


def test_compose_reorthonormalizes_drift():
    R = geo.rot_z(0.3)
    drifted = R + 5e-11 * np.ones((3, 3))
    a = Pose(drifted, [0, 0, 0])
    out = geo.compose(a, Pose.identity())
    assert geo.rotation_error(out.R) < 1e-12


def test_inverse_examples():
    assert geo.inverse(Pose.identity()).allclose(Pose.identity(), 0.0)
    p = Pose(np.eye(3), [3, -2, 5], "b", "c")
    q = geo.inverse(p)
    np.testing.assert_array_equal(q.t, [-3, 2, -5])
    assert (q.to_frame, q.from_frame) == ("c", "b")


@given(seeds)
def test_inverse_involution(seed):
    p = geo.random_pose(np.random.default_rng(seed))
    assert geo.inverse(geo.inverse(p)).allclose(p, 1e-9)


def test_pose_rejects_non_rotation():
    with pytest.raises(ValueError):
        Pose(np.diag([1.0, 1.0, -1.0]), [0, 0, 0])
    with pytest.raises(ValueError):
        Pose(2 * np.eye(3), [0, 0, 0])


def test_pose_arrays_are_read_only():
    p = Pose.identity()
    with pytest.raises(ValueError):
        p.t[0] = 1.0


@given(seeds)
def test_pose_dict_round_trip(seed):
    p = geo.random_pose(np.random.default_rng(seed), to_frame="b", from_frame="c")
    q = Pose.from_dict(p.to_dict())
    assert q.allclose(p, 1e-12)
    assert (q.to_frame, q.from_frame) == ("b", "c")
    assert p.quat()[0] >= 0


def test_from_matrix_checks_bottom_row():
    T = np.eye(4)
    T[3, 0] = 1.0
    with pytest.raises(ValueError):
        Pose.from_matrix(T)


def test_camera_to_base_examples():
    cTx = Pose(geo.rot_z(0.4), [1, 2, 3], "c", "x")
    assert geo.camera_to_base(Pose.identity("b", "c"), cTx).allclose(cTx, 0.0)
    out = geo.camera_to_base(Pose(np.eye(3), [0, 0, 100], "b", "c"), Pose.identity("c", "x"))
    np.testing.assert_array_equal(out.t, [0, 0, 100])


@given(seeds)
def test_camera_to_base_matches_4x4(seed):
    rng = np.random.default_rng(seed)
    bTc = geo.random_pose(rng, to_frame="b", from_frame="c")
    cTx = geo.random_pose(rng, to_frame="c", from_frame="x")
    np.testing.assert_allclose(geo.camera_to_base(bTc, cTx).matrix, _matrix(bTc) @ _matrix(cTx), atol=1e-9)


def _fabricate(bTc: Pose, rng, n: int):
    """Forward-compose oracle: cTt = inv(bTc) bTe eTt."""
    eTt = Pose(geo.random_rotation(rng), rng.uniform(-200, 200, 3), "e", "t")
    cTb = np.linalg.inv(_matrix(bTc))
    out = []
    for _ in range(n):
        bTe = geo.random_pose(rng, to_frame="b", from_frame="e")
        M = cTb @ _matrix(bTe) @ _matrix(eTt)
        out.append((bTe, eTt, Pose(M[:3, :3], M[:3, 3], "c", "t")))
    return out


def _fro_and_trans(a: Pose, b: Pose):
    return float(np.linalg.norm(a.R - b.R)), float(np.linalg.norm(a.t - b.t))


def test_calibration_identity():
    I = [(Pose.identity("b", "e"), Pose.identity("e", "t"), Pose.identity("c", "t"))]
    assert geo.calibrate_camera_to_base(I).allclose(Pose.identity(), 0.0)


@pytest.mark.parametrize("n", [1, 10])
def test_calibration_recovers_ground_truth(n):
    rng = np.random.default_rng(n)
    for _ in range(20):
        truth = geo.random_pose(rng, to_frame="b", from_frame="c")
        est = geo.calibrate_camera_to_base(_fabricate(truth, rng, n))
        dr, dt = _fro_and_trans(est, truth)
        assert dr < 1e-9 and dt < 1e-9
        assert (est.to_frame, est.from_frame) == ("b", "c")


def test_calibration_empty_rejected():
    with pytest.raises(ValueError):
        geo.calibrate_camera_to_base([])


def test_calibration_inconsistent_warns_but_returns_mean():
    rng = np.random.default_rng(3)
    truth = geo.random_pose(rng, to_frame="b", from_frame="c")
    samples = _fabricate(truth, rng, 2)
    bTe, eTt, cTt = samples[1]
    twisted = Pose(geo.rot_z(math.radians(10)) @ cTt.R, cTt.t, "c", "t")
    samples[1] = (bTe, eTt, twisted)
    with pytest.warns(geo.CalibrationWarning):
        est = geo.calibrate_camera_to_base(samples)
    assert geo.is_rotation(est.R)


def test_calibration_consistent_noisy_samples_do_not_warn():
    rng = np.random.default_rng(4)
    truth = geo.random_pose(rng, to_frame="b", from_frame="c")
    samples = _fabricate(truth, rng, 5)
    with warnings.catch_warnings():
        warnings.simplefilter("error", geo.CalibrationWarning)
        geo.calibrate_camera_to_base(samples)


def test_quaternion_mean_sign_alignment():
    q = np.array([1.0, 0.0, 0.0, 0.0])
    np.testing.assert_allclose(geo.quaternion_mean([q, -q]), q)


def test_residuals_noiseless():
    rng = np.random.default_rng(5)
    truth = geo.random_pose(rng, to_frame="b", from_frame="c")
    samples = _fabricate(truth, rng, 4)
    res = geo.calibration_residuals(samples, geo.calibrate_camera_to_base(samples))
    assert all(r["rotation_fro"] < 1e-9 and r["translation_mm"] < 1e-9 for r in res)


def test_align_rotation_antiparallel():
    R = geo.align_rotation([0, 0, 1], [0, 0, -1])
    np.testing.assert_allclose(R @ [0, 0, 1], [0, 0, -1], atol=1e-12)
    assert geo.is_rotation(R)


@given(seeds)
def test_so3_exp_log_round_trip(seed):
    rng = np.random.default_rng(seed)
    w = rng.normal(size=3)
    w *= min(1.0, 3.0 / np.linalg.norm(w))
    np.testing.assert_allclose(geo.so3_log(geo.so3_exp(w)), w, atol=1e-9)
