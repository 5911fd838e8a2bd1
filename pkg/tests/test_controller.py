import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tmscoil.controller import (ComplianceConfig, ControllerConfig, ForceSchedule, ForceTorqueController,
                                compute_F2, controller_tick, error_metrics, hybrid_force, hybrid_force_batch,
                                schedule_force, schedule_force_array, torque_command)

vec = st.lists(st.floats(-500, 500), min_size=3, max_size=3).map(np.array)
unit = vec.filter(lambda v: np.linalg.norm(v) > 1e-3).map(lambda v: v / np.linalg.norm(v))


# --- schedule ------------------------------------------------------------------

@pytest.mark.parametrize("e,want", [(20, 40.0), (7.5, 22.5), (5, 5.0), (10, 40.0), (0, 5.0), (1000, 40.0)])
def test_schedule_examples(e, want):
    assert schedule_force(e, 50) == pytest.approx(want, abs=1e-12)


def test_schedule_rejects_bad_e_o():
    with pytest.raises(ValueError):
        schedule_force(1, 0)


@given(st.floats(0, 1000), st.floats(0, 1000), st.floats(0.01, 1000))
def test_schedule_monotone_and_bounded(e1, e2, e_o):
    lo, hi = sorted((e1, e2))
    f_lo, f_hi = schedule_force(lo, e_o), schedule_force(hi, e_o)
    assert 5.0 <= f_lo <= f_hi <= 40.0


def test_schedule_linear_branch_owns_upper_boundary():
    s = ForceSchedule(slope=400.0)  # deliberately discontinuous to expose branch ownership
    assert s(0.2 * 50, 50) == pytest.approx(400 * 0.2 - 30)
    assert s(0.2 * 50 + 1e-9, 50) == 40.0


# --- F2 / hybrid force -----------------------------------------------------------

def test_compute_F2_example():
    F2, th = compute_F2([0, 0, 0], [3, 0, 4], [0, 0, -1])
    np.testing.assert_allclose(F2, [1, 0, 0], atol=1e-12)
    assert math.cos(th) == pytest.approx(-0.8, abs=1e-12)
    assert math.degrees(th) == pytest.approx(143.13010235415598, abs=1e-9)


def test_compute_F2_degenerate():
    F2, th = compute_F2([1, 1, 1], [1, 1, 1], [0, 0, 1])
    assert F2 is None and th == 0.0
    F2, th = compute_F2([0, 0, 0], [0, 0, -3], [0, 0, 1])
    assert F2 is None and th == pytest.approx(math.pi)


def test_compute_F2_printed_sign_flips():
    F2e, the = compute_F2([0, 0, 0], [3, 0, 4], [0, 0, -1])
    F2p, thp = compute_F2([0, 0, 0], [3, 0, 4], [0, 0, -1], sign="printed")
    np.testing.assert_allclose(F2p, -F2e, atol=1e-12)
    assert thp == pytest.approx(math.pi - the)
    with pytest.raises(ValueError):
        compute_F2([0, 0, 0], [1, 0, 0], [0, 0, 1], sign="other")


def test_compute_F2_rejects_non_unit():
    with pytest.raises(ValueError):
        compute_F2([0, 0, 0], [1, 0, 0], [0, 0, 2])


def test_hybrid_force_example():
    f = hybrid_force(10, [0, 0, -1], [1, 0, 0], math.acos(-0.8))
    np.testing.assert_allclose(f, [6, 0, -8], atol=1e-12)
    assert np.linalg.norm(f) == pytest.approx(10, abs=1e-12)


def test_hybrid_force_limits():
    F1, F2 = np.array([0.0, 0, 1]), np.array([1.0, 0, 0])
    np.testing.assert_array_equal(hybrid_force(7, F1, F2, 0.0), 7 * F1)
    np.testing.assert_allclose(hybrid_force(7, F1, F2, math.pi / 2), 7 * F2, atol=1e-15)
    np.testing.assert_array_equal(hybrid_force(7, F1, None, 1.0), 7 * F1)


@settings(max_examples=300)
@given(st.floats(0, 100), unit, vec, vec)
def test_hybrid_properties(F, F1, x_t, x_f):
    F2, th = compute_F2(x_t, x_f, F1)
    f = hybrid_force(F, F1, F2, th)
    if F2 is not None:
        assert abs(np.linalg.norm(f) - F) < 1e-9
        assert abs(F1 @ F2) < 1e-9
        assert abs(np.linalg.norm(F2) - 1) < 1e-12
        u = (x_f - x_t) / np.linalg.norm(x_f - x_t)
        # F2 in span{F1, u}: its component outside that plane vanishes
        n = np.cross(F1, u)
        assert abs(F2 @ n) < 1e-9 * max(1.0, np.linalg.norm(n))


# --- torque / errors ---------------------------------------------------------------

def test_torque_examples():
    np.testing.assert_array_equal(torque_command([2, -3, 5], 4), [-8, 12, 0])
    np.testing.assert_array_equal(torque_command([0, 0, 0], 4), [0, 0, 0])
    np.testing.assert_array_equal(torque_command([2, -3, 5], 0), [0, 0, 0])


@given(vec, vec, st.floats(0, 10), st.floats(0, 10))
def test_torque_linear_and_z_free(a, b, k1, k2):
    assert torque_command(a, k1)[2] == 0.0
    np.testing.assert_allclose(torque_command(a + b, k1), torque_command(a, k1) + torque_command(b, k1),
                               atol=1e-9)
    np.testing.assert_allclose(torque_command(a, k1 + k2), torque_command(a, k1) + torque_command(a, k2),
                               atol=1e-9)


def test_error_metrics_examples():
    m = error_metrics([0, 0, 0], [3, 0, 4], [0, 0, -1], [1, 0, 0])
    assert (m.e, m.e_n, m.e_p) == pytest.approx((5, -4, 3))
    m = error_metrics([1, 2, 3], [1, 2, 3], [0, 0, 1], None)
    assert (m.e, m.e_n, m.e_p) == (0, 0, 0)
    m = error_metrics([0, 0, 0], [0, 0, 2], [0, 0, 1], None)
    assert m.e == abs(m.e_n) and m.e_p == 0


@given(unit, vec, vec)
def test_error_recomposition(F1, x_t, x_f):
    F2, _ = compute_F2(x_t, x_f, F1)
    m = error_metrics(x_t, x_f, F1, F2)
    assert m.e ** 2 >= m.e_n ** 2 + m.e_p ** 2 - 1e-6
    if F2 is not None:
        d = x_f - x_t
        B = np.stack([F1, F2], axis=1)
        proj = B @ np.linalg.lstsq(B, d, rcond=None)[0]
        np.testing.assert_allclose(m.e_n * F1 + m.e_p * F2, proj, atol=1e-9)


# --- config / tick -------------------------------------------------------------------

def test_compliance_config_validation():
    ComplianceConfig()
    with pytest.raises(ValueError):
        ComplianceConfig(damping=0)
    with pytest.raises(ValueError):
        ComplianceConfig(compliant_axes=(True,) * 6)


def test_controller_config_round_trip_and_validation():
    cfg = ControllerConfig(k_p=2.0, fixed_force=10.0, f2_sign="printed")
    assert ControllerConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ValueError):
        ControllerConfig(k_p=-1)


def test_first_tick_latches_and_commands_40():
    c = ForceTorqueController([0, 0, 10])
    out = c.tick([0, 0, 0], [0, 0, 1], [0, 0, 0])
    assert c.e_o == pytest.approx(10)
    assert out.command.magnitude == 40.0
    np.testing.assert_allclose(out.force, [0, 0, 40])


def test_converged_tick_is_5N_adhesion():
    c = ForceTorqueController([0, 0, 0.5], e_o=10.0)
    out = c.tick([0, 0, 0], [0, 0, 1], [0, 0, 0])
    assert out.command.magnitude == 5.0
    np.testing.assert_allclose(out.force, [0, 0, 5])
    np.testing.assert_array_equal(out.torque, [0, 0, 0])


def test_retarget_relatches_and_same_target_is_noop():
    c = ForceTorqueController([0, 0, 10])
    c.tick([0, 0, 0], [0, 0, 1], [0, 0, 0])
    c.retarget([0, 0, 10])
    assert c.e_o == pytest.approx(10)
    c.retarget([0, 0, 4])
    assert c.e_o is None
    c.tick([0, 0, 0], [0, 0, 1], [0, 0, 0])
    assert c.e_o == pytest.approx(4)


def test_pure_and_fixed_variants():
    c = ForceTorqueController([3, 0, 4], ControllerConfig(pure_force=True, fixed_force=20.0))
    out = c.tick([0, 0, 0], [0, 0, -1], [1, 2, 3])
    np.testing.assert_allclose(out.force, [0, 0, -20])
    np.testing.assert_allclose(out.torque, [-4, -8, 0])


@settings(max_examples=200)
@given(vec, vec, unit, vec, st.floats(0, 5), st.floats(0.1, 100))
def test_tick_matches_hand_pipeline(x_t, x_f, F1, tau, k_p, e_o):
    c = ForceTorqueController(x_f, ControllerConfig(k_p=k_p), e_o=e_o)
    out = controller_tick(c, x_t, F1, tau)
    # independent composition
    d = x_f - x_t
    e = float(np.linalg.norm(d))
    F = 40.0 if e > 0.2 * e_o else (350 * e / e_o - 30 if e > 0.1 * e_o else 5.0)
    if e < 1e-9:
        want = F * F1
    else:
        u = d / e
        rej = u - (F1 @ u) * F1
        if np.linalg.norm(rej) < 1e-9:
            want = F * F1
        else:
            F2 = rej / np.linalg.norm(rej)
            want = F * (F1 * abs(F1 @ u) + F2 * np.linalg.norm(rej))
    np.testing.assert_allclose(out.force, want, atol=1e-9)
    np.testing.assert_allclose(out.torque, [-k_p * tau[0], -k_p * tau[1], 0.0], atol=1e-12)


# --- batch forms --------------------------------------------------------------------

def test_schedule_array_matches_scalar():
    rng = np.random.default_rng(0)
    e_o = rng.uniform(0.1, 100, 2000)
    e = e_o * rng.choice([0.0, 0.1, 0.15, 0.2, 0.5], 2000) * rng.uniform(0.9, 1.1, 2000)
    e[:5] = [0.1 * e_o[0], 0.2 * e_o[1], 0.0, 1e6, 0.1 * e_o[4] + 1e-12]
    want = [schedule_force(a, b) for a, b in zip(e, e_o)]
    np.testing.assert_array_equal(schedule_force_array(e, e_o), want)
    with pytest.raises(ValueError):
        schedule_force_array([1.0], [0.0])


def test_hybrid_batch_matches_scalar():
    rng = np.random.default_rng(1)
    n = 500
    F1 = rng.normal(size=(n, 3))
    F1 /= np.linalg.norm(F1, axis=1)[:, None]
    x_t, x_f = rng.normal(size=(n, 3)) * 20, rng.normal(size=(n, 3)) * 20
    x_f[0] = x_t[0]
    x_f[1] = x_t[1] + 3 * F1[1]
    F = rng.uniform(0, 40, n)
    for sign in ("error", "printed"):
        force, F2b, th = hybrid_force_batch(F, F1, x_t, x_f, sign)
        for i in range(n):
            F2, t = compute_F2(x_t[i], x_f[i], F1[i], sign)
            np.testing.assert_allclose(force[i], hybrid_force(F[i], F1[i], F2, t), atol=1e-12)
            assert th[i] == pytest.approx(t, abs=1e-12)
            assert (F2 is None) == bool(np.isnan(F2b[i, 0]))


def test_torque_batch_matches_scalar():
    tau = np.random.default_rng(2).normal(size=(50, 3))
    batch = torque_command(tau, 2.5)
    for i in range(50):
        np.testing.assert_array_equal(batch[i], torque_command(tau[i], 2.5))
