"""Approach planning: trapezoidal timing, sphere guard and the four phases.

Tool convention: the coil origin is the center of its floor and the tool
z-axis is the coil axis, pointing toward the head.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Pose, align_rotation, so3_exp, so3_log

DEFAULT_DT = 0.002


class PlanningError(RuntimeError):
    """A phase cannot be planned from the given geometry."""


@dataclass(frozen=True)
class TrapezoidProfile:
    s: float
    v_max: float
    a: float
    t_a: float
    t_f: float
    shape: str  # "trapezoid" | "triangle" | "null"

    @property
    def v_peak(self) -> float:
        return self.a * self.t_a


def plan_profile(s: float, v_max: float, a: float) -> TrapezoidProfile:
    """Timing law for a point-to-point move of length ``s``.

    When ``v_max**2 / a > s`` the cruise velocity is never reached and the
    peak becomes ``sqrt(s * a)`` (triangle).
    """
    if v_max <= 0 or a <= 0:
        raise ValueError("v_max and a must be positive")
    if s < 0:
        raise ValueError("path length must be non-negative")
    if s == 0:
        return TrapezoidProfile(0.0, v_max, a, 0.0, 0.0, "null")
    if v_max * v_max / a > s:
        t_a = math.sqrt(s / a)
        return TrapezoidProfile(s, v_max, a, t_a, 2.0 * t_a, "triangle")
    t_a = v_max / a
    return TrapezoidProfile(s, v_max, a, t_a, s / v_max + t_a, "trapezoid")


def eval_profile(p: TrapezoidProfile, t: float) -> tuple[float, float]:
    """Displacement and velocity at time ``t`` (clamped to [0, t_f])."""
    if p.shape == "null" or t <= 0:
        return 0.0, 0.0
    if t >= p.t_f:
        return p.s, 0.0
    vp = p.v_peak
    if t < p.t_a:
        return 0.5 * p.a * t * t, p.a * t
    if t <= p.t_f - p.t_a:
        return 0.5 * vp * p.t_a + vp * (t - p.t_a), vp
    r = p.t_f - t
    return p.s - 0.5 * p.a * r * r, p.a * r


def eval_profile_array(p: TrapezoidProfile, t) -> tuple[np.ndarray, np.ndarray]:
    t = np.clip(np.asarray(t, dtype=float), 0.0, p.t_f)
    if p.shape == "null":
        return np.zeros_like(t), np.zeros_like(t)
    vp = p.v_peak
    r = p.t_f - t
    s = np.where(t < p.t_a, 0.5 * p.a * t * t,
                 np.where(t <= p.t_f - p.t_a, 0.5 * vp * p.t_a + vp * (t - p.t_a), p.s - 0.5 * p.a * r * r))
    v = np.where(t < p.t_a, p.a * t, np.where(t <= p.t_f - p.t_a, vp, p.a * r))
    s = np.where(t >= p.t_f, p.s, s)
    v = np.where(t >= p.t_f, 0.0, v)
    return s, v


@dataclass(frozen=True)
class MotionLimits:
    v_max: float = 50.0  # mm/s
    a: float = 100.0  # mm/s^2
    w_max: float = 0.5  # rad/s
    alpha: float = 1.0  # rad/s^2
    dt: float = DEFAULT_DT


@dataclass(frozen=True)
class SphereGuard:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).reshape(3))
        if self.radius <= 0:
            raise ValueError("guard radius must be positive")

    def contains_head(self, head_center, head_radius: float) -> bool:
        return self.radius > head_radius + float(np.linalg.norm(np.asarray(head_center) - self.center))

    def project(self, x) -> np.ndarray:
        """Point where the ray from the guard center through ``x`` meets the surface."""
        d = np.asarray(x, dtype=float) - self.center
        n = float(np.linalg.norm(d))
        if n < 1e-12:
            raise PlanningError("point coincides with the guard center")
        return self.center + self.radius * d / n


def make_guard(head_center, head_radius: float, clearance: float = 30.0, lift: float = 25.0,
               up=(0.0, 0.0, 1.0)) -> SphereGuard:
    """Guard sphere centered ``lift`` mm above the head center along ``up``."""
    up = np.asarray(up, dtype=float)
    up = up / np.linalg.norm(up)
    guard = SphereGuard(np.asarray(head_center, dtype=float) + lift * up, head_radius + clearance)
    if not guard.contains_head(head_center, head_radius):
        raise ValueError("guard sphere does not contain the head; increase clearance")
    return guard


@dataclass(frozen=True)
class PhasePlan:
    phase: int
    times: np.ndarray
    positions: np.ndarray
    rotations: np.ndarray
    key_points: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.times)

    @property
    def duration(self) -> float:
        return float(self.times[-1]) if len(self.times) else 0.0

    @property
    def is_null(self) -> bool:
        return len(self.times) == 1

    def pose(self, i: int) -> Pose:
        return Pose(self.rotations[i], self.positions[i], "b", "t")

    @property
    def final_pose(self) -> Pose:
        return self.pose(len(self.times) - 1)

    def axes(self) -> np.ndarray:
        """Coil axis (tool z) at every sample."""
        return self.rotations[:, :, 2]


def _sample_times(duration: float, dt: float) -> np.ndarray:
    n = int(math.ceil(duration / dt - 1e-9)) if duration > 0 else 0
    return np.arange(n + 1) * dt


def _orientation_path(R0: np.ndarray, R1: np.ndarray, times, limits: MotionLimits) -> np.ndarray:
    rv = so3_log(R1 @ R0.T)
    ang = float(np.linalg.norm(rv))
    prof = plan_profile(ang, limits.w_max, limits.alpha)
    if prof.shape == "null":
        return np.repeat(R0[None], len(times), axis=0)
    axis = rv / ang
    s, _ = eval_profile_array(prof, times)
    out = np.empty((len(times), 3, 3))
    for i, si in enumerate(s):
        out[i] = so3_exp(axis * si) @ R0
    out[-1] = R1 if s[-1] == ang else out[-1]
    return out


def plan_phase1(x_start, start_orientation, guard: SphereGuard, limits: MotionLimits = MotionLimits()) -> PhasePlan:
    """Straight approach from ``x_start`` to the guard surface.

    The coil axis turns (minimal rotation) to point along ``x_o - x_start``.
    """
    x_start = np.asarray(x_start, dtype=float)
    R0 = np.asarray(start_orientation, dtype=float)
    d = x_start - guard.center
    dist = float(np.linalg.norm(d))
    if dist < guard.radius - 1e-9:
        raise PlanningError(f"start point is {guard.radius - dist:.3f} mm inside the guard sphere")
    x_si = guard.center + guard.radius * d / dist
    approach = -d / dist
    R1 = align_rotation(R0[:, 2], approach) @ R0
    seg = x_si - x_start
    s = float(np.linalg.norm(seg))
    prof = plan_profile(s, limits.v_max, limits.a)
    rot_ang = float(np.linalg.norm(so3_log(R1 @ R0.T)))
    rot_prof = plan_profile(rot_ang, limits.w_max, limits.alpha)
    times = _sample_times(max(prof.t_f, rot_prof.t_f), limits.dt)
    disp, _ = eval_profile_array(prof, times)
    direction = seg / s if s > 0 else np.zeros(3)
    pos = x_start + disp[:, None] * direction
    pos[-1] = x_si
    rots = _orientation_path(R0, R1, times, limits)
    return PhasePlan(1, times, pos, rots, {"x_i": x_start, "x_si": x_si, "x_o": guard.center.copy()})


def plan_phase2(x_si, x_f, guard: SphereGuard, limits: MotionLimits = MotionLimits(),
                start_orientation=None, tol: float = 1e-6) -> PhasePlan:
    """Minor great-circle arc on the guard from ``x_si`` to above ``x_f``.

    The whole tool frame is carried by the arc rotation, so the coil axis
    keeps pointing at the guard center.
    """
    x_si = np.asarray(x_si, dtype=float)
    x_f = np.asarray(x_f, dtype=float)
    xo, Rs = guard.center, guard.radius
    if abs(np.linalg.norm(x_si - xo) - Rs) > max(tol, 1e-9 * Rs):
        raise PlanningError("phase 2 must start on the guard surface")
    if np.linalg.norm(x_f - xo) < 1e-9:
        raise PlanningError("target coincides with the guard center")
    di = (x_si - xo) / Rs
    x_sf = guard.project(x_f)
    df = (x_sf - xo) / Rs
    cross = np.cross(di, df)
    sin_a = float(np.linalg.norm(cross))
    alpha = math.atan2(sin_a, float(di @ df))
    if sin_a < 1e-9 and alpha > math.pi / 2:
        raise PlanningError("start and end of the arc are antipodal; the great circle is not unique")
    if start_orientation is None:
        R0 = align_rotation([0.0, 0.0, 1.0], -di)
    else:
        R0 = np.asarray(start_orientation, dtype=float)
        R0 = align_rotation(R0[:, 2], -di) @ R0
    prof = plan_profile(Rs * alpha, limits.v_max, limits.a)
    times = _sample_times(prof.t_f, limits.dt)
    if prof.shape == "null":
        pos = x_si[None].copy()
        rots = R0[None].copy()
    else:
        axis = cross / sin_a
        disp, _ = eval_profile_array(prof, times)
        phis = disp / Rs
        pos = np.empty((len(times), 3))
        rots = np.empty((len(times), 3, 3))
        for i, phi in enumerate(phis):
            Q = so3_exp(axis * phi)
            pos[i] = xo + Rs * (Q @ di)
            rots[i] = Q @ R0
    return PhasePlan(2, times, pos, rots, {"x_si": x_si, "x_sf": x_sf, "x_f": x_f, "x_o": xo.copy(),
                                           "arc_angle": alpha})


def plan_phase3(x_sf, x_f, descent_velocity: float, orientation=None, dt: float = DEFAULT_DT,
                x_o=None, tol: float = 1e-6) -> PhasePlan:
    """Constant-velocity straight descent from ``x_sf`` to ``x_f``; orientation frozen."""
    x_sf = np.asarray(x_sf, dtype=float)
    x_f = np.asarray(x_f, dtype=float)
    if descent_velocity <= 0:
        raise ValueError("descent velocity must be positive")
    seg = x_f - x_sf
    L = float(np.linalg.norm(seg))
    if x_o is not None and L > 0:
        ray = x_sf - np.asarray(x_o, dtype=float)
        off = np.cross(ray / np.linalg.norm(ray), seg / L)
        if np.linalg.norm(off) > tol:
            raise PlanningError("descent is not collinear with the guard center")
    if orientation is None:
        R = align_rotation([0.0, 0.0, 1.0], seg / L) if L > 0 else np.eye(3)
    else:
        R = np.asarray(orientation, dtype=float)
    times = _sample_times(L / descent_velocity, dt)
    direction = seg / L if L > 0 else np.zeros(3)
    pos = x_sf + np.minimum(times * descent_velocity, L)[:, None] * direction
    pos[-1] = x_f
    rots = np.repeat(R[None], len(times), axis=0)
    return PhasePlan(3, times, pos, rots, {"x_sf": x_sf, "x_f": x_f, "direction": direction})


def detect_contact(measured_force, threshold: float = 2.0) -> bool:
    if threshold <= 0:
        raise ValueError("contact threshold must be positive")
    f = np.asarray(measured_force, dtype=float)[:3]
    return bool(math.sqrt(float(f @ f)) > threshold)


RETREAT_MM = 5.0


def retreat_pose(contact_pose: Pose, distance: float = RETREAT_MM) -> Pose:
    """Contact pose moved ``distance`` mm back along the negative coil axis."""
    return Pose(contact_pose.R, contact_pose.t - distance * contact_pose.R[:, 2],
                contact_pose.to_frame, contact_pose.from_frame)


def phase4_zero_adjust(contact_pose: Pose, sensor, free_reading=None, n_reads: int = 50,
                       distance: float = RETREAT_MM):
    """Retreat, re-zero the sensor on the free-space reading, return.

    ``free_reading`` returns one wrench reading at the retreat pose; it
    defaults to an unloaded sensor.  The median of ``n_reads`` readings is
    used so a noiseless sensor is zeroed exactly.
    """
    back = retreat_pose(contact_pose, distance)
    if free_reading is None:
        def free_reading():
            return sensor.read(np.zeros(6))
    sensor.zero_offset = np.zeros(6)
    reads = np.array([free_reading() for _ in range(max(1, n_reads))])
    sensor.zero_offset = np.median(reads, axis=0)
    return sensor, contact_pose, back


def linear_plan(phase: int, pose_a: Pose, pose_b: Pose, limits: MotionLimits = MotionLimits()) -> PhasePlan:
    """Straight, fixed-orientation move timed by the trapezoidal law."""
    seg = pose_b.t - pose_a.t
    s = float(np.linalg.norm(seg))
    prof = plan_profile(s, limits.v_max, limits.a)
    times = _sample_times(prof.t_f, limits.dt)
    disp, _ = eval_profile_array(prof, times)
    direction = seg / s if s > 0 else np.zeros(3)
    pos = pose_a.t + disp[:, None] * direction
    pos[-1] = pose_b.t
    rots = np.repeat(pose_a.R[None], len(times), axis=0)
    return PhasePlan(phase, times, pos, rots, {})


CSV_HEADER = ["t", "x", "y", "z", "qw", "qx", "qy", "qz", "phase"]


def plans_to_csv(plans, t0: float = 0.0) -> str:
    """Concatenate plans into CSV rows ``t, x, y, z, qw, qx, qy, qz, phase``.

    Each plan after the first drops its opening sample, which repeats the
    previous plan's final one, so ``t`` stays strictly increasing.
    """
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    t_off = t0
    for k, plan in enumerate(plans):
        for i in range(1 if k else 0, len(plan)):
            q = plan.pose(i).quat()
            w.writerow([repr(float(t_off + plan.times[i])), *(repr(float(v)) for v in plan.positions[i]),
                        *(repr(float(v)) for v in q), plan.phase])
        t_off += plan.duration
    return buf.getvalue()
