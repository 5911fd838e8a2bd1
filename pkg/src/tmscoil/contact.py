"""Penalty contact between a concave spherical-cap coil floor and a spherical head.

Geometry, with ``F1`` the coil axis (tool z) and ``x_t`` the floor center:

* the floor is part of a sphere of radius ``R_f`` centered at
  ``c_f = x_t + R_f * F1``; it spans polar angles up to ``aperture`` around
  the cap axis ``-F1``;
* floor points lying inside the head sphere form the contact patch.  On
  the unit sphere around ``c_f`` that set is a cap around
  ``u = (h - c_f)/|h - c_f|`` of half-angle ``acos(kappa)``, so the patch is
  the intersection of two caps.  It is integrated ring by ring with the
  azimuthal extent of each ring solved in closed form.

Pressure is uniform over the patch, the normal force is ``k_n * delta +
b_n * delta_dot`` where ``delta`` is the deepest penetration over the
floor, and it acts along the floor normal at the deepest point (``u`` when
``u`` lies inside the aperture) through the patch centroid.

Sign convention: ``force``/``torque`` are the wrench the head applies to
the coil (base frame, torque about ``x_t``).  The sensor reports the
opposite, i.e. the wrench the coil applies to the head, in the tool frame,
so a coil pressed with 20 N reads +20 N along its own axis.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Pose, so3_exp


def _cross(a, b) -> np.ndarray:
    return np.array([a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]])


def _hat(r) -> np.ndarray:
    return np.array([[0.0, -r[2], r[1]], [r[2], 0.0, -r[0]], [-r[1], r[0], 0.0]])


_I3 = np.eye(3)
_I2 = np.eye(2)


@dataclass(frozen=True)
class HeadModel:
    pose: Pose = field(default_factory=Pose.identity)
    radius: float = 90.0
    mu: float = 0.6
    k_n: float = 10.0
    b_n: float = 0.5

    def __post_init__(self):
        if self.radius <= 0 or self.mu < 0 or self.k_n <= 0 or self.b_n < 0:
            raise ValueError("invalid head model parameters")

    @property
    def center(self) -> np.ndarray:
        return self.pose.t

    def moved(self, pose: Pose) -> "HeadModel":
        return HeadModel(pose, self.radius, self.mu, self.k_n, self.b_n)


@dataclass(frozen=True)
class CoilModel:
    floor_radius: float = 100.0
    aperture: float = math.radians(30.0)
    n_rings: int = 48

    def __post_init__(self):
        if not 0 < self.aperture < math.pi / 2:
            raise ValueError("rim aperture must lie in (0, pi/2)")
        if self.n_rings < 2:
            raise ValueError("need at least two integration rings")


@dataclass(frozen=True)
class PlantConfig:
    D_t: float = 4.0  # N*s/mm
    D_r: float = 2000.0  # N*mm*s/rad
    dt: float = 0.002
    c_v: float = 50.0  # N*s/mm, viscous cap of the friction law
    force_gain: float = 1.0
    torque_deadband: float = 0.0  # N*mm, net tool-x/y torque below which the wrist does not turn

    def __post_init__(self):
        if self.D_t <= 0 or self.D_r <= 0 or self.dt <= 0 or self.c_v <= 0:
            raise ValueError("plant damping, friction cap and dt must be positive")
        if self.torque_deadband < 0:
            raise ValueError("torque deadband must be non-negative")

    @classmethod
    def from_compliance(cls, force_gain: float = 1.0, damping: float = 0.1, dt: float = 0.002,
                        D_t_ref: float = 40.0, D_r_ref: float = 20000.0, c_v: float = 50.0,
                        torque_deadband: float = 0.0) -> "PlantConfig":
        """Damping fraction times reference constants; 0.1 gives the defaults."""
        return cls(D_t=damping * D_t_ref, D_r=damping * D_r_ref, dt=dt, c_v=c_v, force_gain=force_gain,
                   torque_deadband=torque_deadband)


@dataclass(frozen=True)
class ContactState:
    in_contact: bool = False
    delta: float = 0.0
    delta_dot: float = 0.0
    centroid: np.ndarray = field(default_factory=lambda: np.zeros(3))
    normal: np.ndarray = field(default_factory=lambda: np.zeros(3))
    normal_force: float = 0.0
    friction: np.ndarray = field(default_factory=lambda: np.zeros(3))
    force: np.ndarray = field(default_factory=lambda: np.zeros(3))
    torque: np.ndarray = field(default_factory=lambda: np.zeros(3))
    patch_area: float = 0.0
    off_axis: float = 0.0

    @property
    def F_c(self) -> float:
        return float(np.linalg.norm(self.force))

    def sensed_wrench(self, R: np.ndarray) -> np.ndarray:
        """Wrench the coil applies to the head, tool frame (fx, fy, fz, tx, ty, tz)."""
        return np.concatenate([-(self.force @ R), -(self.torque @ R)])


NO_CONTACT = ContactState()


@dataclass(frozen=True)
class PatchGeometry:
    """Kinematic part of the contact, independent of velocities."""

    in_contact: bool
    delta: float
    normal: np.ndarray
    centroid: np.ndarray
    area: float
    off_axis: float


def _empty_patch(off_axis=0.0) -> PatchGeometry:
    return PatchGeometry(False, 0.0, np.zeros(3), np.zeros(3), 0.0, off_axis)


def _ring_grid(n: int, lo: float, kink: float, hi: float):
    """Midpoint polar angles and widths over [lo, hi], split at ``kink`` when inside."""
    if lo < kink < hi:
        m1 = min(n - 1, max(1, round(n * (kink - lo) / (hi - lo))))
        h = np.empty(n)
        h[:m1] = (kink - lo) / m1
        h[m1:] = (hi - kink) / (n - m1)
        phi = np.empty(n)
        phi[:m1] = lo + h[0] * _MIDPOINTS[n][:m1]
        phi[m1:] = kink + h[-1] * _MIDPOINTS[n][:n - m1]
        return phi, h
    h = (hi - lo) / n
    return lo + h * _MIDPOINTS[n], h


class _Midpoints(dict):
    def __missing__(self, n):
        self[n] = arr = np.arange(n) + 0.5
        return arr


_MIDPOINTS = _Midpoints()


def patch_geometry(x_t, R, head_center, head_radius: float, coil: CoilModel) -> PatchGeometry:
    # scalar arithmetic on 3-vectors: this runs once per control tick
    R = np.asarray(R, dtype=float)
    Rf, Rh, A = coil.floor_radius, head_radius, coil.aperture
    ax, ay, az = (-R[:, 2]).tolist()  # cap axis a = -F1
    tx, ty, tz = np.asarray(x_t, dtype=float).tolist()
    hx, hy, hz = np.asarray(head_center, dtype=float).tolist()
    cx, cy, cz = tx - Rf * ax, ty - Rf * ay, tz - Rf * az  # floor sphere center c_f
    qx, qy, qz = hx - cx, hy - cy, hz - cz
    d = math.sqrt(qx * qx + qy * qy + qz * qz)
    if d < 1e-12:
        return _empty_patch()
    ux, uy, uz = qx / d, qy / d, qz / d
    cb = max(-1.0, min(1.0, ux * ax + uy * ay + uz * az))
    beta = math.acos(cb)
    if d + Rh - Rf <= 0.0:
        return _empty_patch(beta)
    kappa = (Rf * Rf + d * d - Rh * Rh) / (2.0 * Rf * d)
    rho = math.acos(max(-1.0, min(1.0, kappa)))
    if beta >= A + rho:
        return _empty_patch(beta)
    lx, ly, lz = ux - cb * ax, uy - cb * ay, uz - cb * az
    sb = math.sqrt(lx * lx + ly * ly + lz * lz)
    if sb > 1e-12:
        ex, ey, ez = lx / sb, ly / sb, lz / sb
    else:
        ex, ey, ez = R[:, 0].tolist()
        sb = 0.0
    if beta <= A:
        w_star = (ux, uy, uz)
        delta = d + Rh - Rf
    else:
        ca, sa = math.cos(A), math.sin(A)
        w_star = (ca * ax + sa * ex, ca * ay + sa * ey, ca * az + sa * ez)
        qw = qx * w_star[0] + qy * w_star[1] + qz * w_star[2]
        disc = Rh * Rh - d * d + qw * qw
        delta = qw + math.sqrt(max(disc, 0.0)) - Rf
    if delta <= 0.0:
        return _empty_patch(beta)

    # rings switch from whole to partial at |rho - beta|; split there
    phi, h = _ring_grid(coil.n_rings, max(0.0, beta - rho), abs(rho - beta), min(A, beta + rho))
    sphi, cphi = np.sin(phi), np.cos(phi)
    den = sb * sphi
    small = den <= 1e-12
    c = (kappa - cb * cphi) / np.where(small, 1.0, den)
    if small.any():
        c[small] = np.where(cb * cphi[small] >= kappa, -2.0, 2.0)
    psi0 = np.arccos(np.minimum(np.maximum(c, -1.0), 1.0))
    wgt = psi0 * sphi * h
    area_unit = 2.0 * float(wgt.sum())
    if area_unit <= 0.0:
        return _empty_patch(beta)
    m_axial = 2.0 * float(wgt @ cphi) / area_unit
    m_lat = 2.0 * float(np.sin(psi0) @ (sphi * sphi * h)) / area_unit
    centroid = np.array((cx + Rf * (m_axial * ax + m_lat * ex), cy + Rf * (m_axial * ay + m_lat * ey),
                         cz + Rf * (m_axial * az + m_lat * ez)))
    return PatchGeometry(True, delta, np.array(w_star), centroid, area_unit * Rf * Rf, beta)


def contact_wrench(coil_pose: Pose, coil: CoilModel, head: HeadModel, twist=None,
                   head_velocity=None, c_v: float = 50.0) -> ContactState:
    """Contact state for a coil pose and a coil twist ``(v, omega)`` in the base frame.

    ``v`` is the linear velocity of ``x_t``; ``head_velocity`` the linear
    velocity of the head.  Friction opposes the tangential sliding velocity
    at the patch centroid with magnitude ``min(mu*F_n, c_v*|v_t|)``.
    """
    return _contact_at(coil_pose.t, coil_pose.R, coil, head, twist, head_velocity, c_v)


def _contact_at(x, R, coil, head, twist=None, head_velocity=None, c_v=50.0) -> ContactState:
    geo = patch_geometry(x, R, head.center, head.radius, coil)
    if not geo.in_contact:
        return ContactState(off_axis=geo.off_axis)
    v = np.zeros(3) if twist is None else np.asarray(twist[0], dtype=float)
    w = np.zeros(3) if twist is None else np.asarray(twist[1], dtype=float)
    vh = np.zeros(3) if head_velocity is None else np.asarray(head_velocity, dtype=float)
    r = geo.centroid - x
    rel = v + _cross(w, r) - vh
    n = geo.normal
    delta_dot = -float(rel @ n)
    Fn = max(0.0, head.k_n * geo.delta + head.b_n * delta_dot)
    vt = rel - float(rel @ n) * n
    sv = math.sqrt(float(vt @ vt))
    if sv > 0.0 and Fn > 0.0:
        fric = -min(head.mu * Fn, c_v * sv) * vt / sv
    else:
        fric = np.zeros(3)
    force = Fn * n + fric
    return ContactState(True, geo.delta, delta_dot, geo.centroid, n, Fn, fric, force, _cross(r, force),
                        geo.area, geo.off_axis)


@dataclass
class PlantState:
    """Mutable coil state advanced by ``step_plant``."""

    R: np.ndarray
    x: np.ndarray
    v: np.ndarray = field(default_factory=lambda: np.zeros(3))
    w: np.ndarray = field(default_factory=lambda: np.zeros(3))

    @property
    def pose(self) -> Pose:
        return Pose(self.R, self.x, "b", "t")


class _Contact:
    """Linearized contact terms: force on coil = k0 - C @ (v_point - v_head)."""

    def __init__(self, geo, x, B, head, cfg, slide_dir=None):
        n = geo.normal
        self.n = n
        self.r = geo.centroid - x
        self.G = _hat(self.r) @ B
        self.kd = head.k_n * geo.delta
        self.b_n = head.b_n
        if slide_dir is None:
            P = n[:, None] * n
            self.C = head.b_n * P + cfg.c_v * (_I3 - P)
            self.k0 = self.kd * n
        else:
            m = n - head.mu * slide_dir
            self.C = head.b_n * (m[:, None] * n)
            self.k0 = self.kd * m


def _solve(Fcmd, tcmd, B, ct: _Contact | None, vh, cfg: PlantConfig):
    """Implicit twist for one regime; applies the wrist deadband.

    Returns ``(v, w, rel)`` with ``rel`` the relative velocity at the patch
    centroid (None without contact).
    """
    tb = B.T @ tcmd
    if ct is None:
        v = Fcmd / cfg.D_t
        net = tb
        if cfg.torque_deadband > 0.0:
            mag = math.hypot(net[0], net[1])
            if mag <= cfg.torque_deadband:
                return v, np.zeros(3), None
            net = net * (1.0 - cfg.torque_deadband / mag)
        return v, B @ (net / cfg.D_r), None
    C, G = ct.C, ct.G
    base = ct.k0 + C @ vh
    Mv = cfg.D_t * _I3 + C
    if cfg.torque_deadband > 0.0:
        v = np.linalg.solve(Mv, Fcmd + base)
        f = base - C @ v
        net = tb - G.T @ f
        mag = math.hypot(net[0], net[1])
        if mag <= cfg.torque_deadband:
            return v, np.zeros(3), v - vh
        tb = tb - cfg.torque_deadband * net / mag
    M = np.empty((5, 5))
    M[:3, :3] = Mv
    M[:3, 3:] = -C @ G
    M[3:, :3] = -G.T @ C
    M[3:, 3:] = cfg.D_r * _I2 + G.T @ C @ G
    sol = np.linalg.solve(M, np.concatenate([Fcmd + base, tb - G.T @ base]))
    v, alpha = sol[:3], sol[3:]
    return v, B @ alpha, v - G @ alpha - vh


def step_plant(state: PlantState, force_cmd, torque_cmd_tool, head: HeadModel, coil: CoilModel,
               cfg: PlantConfig, head_velocity=None) -> ContactState:
    """Advance the quasi-static admittance plant by one period.

    Net wrench over damping gives the twist; the tool-z angular component
    is removed, and a net tool-x/y torque inside ``cfg.torque_deadband``
    does not turn the wrist.  Contact damping and friction are solved
    implicitly, so the returned contact state is consistent with the twist
    actually applied.
    """
    R, x = state.R, state.x
    Fcmd = cfg.force_gain * np.asarray(force_cmd, dtype=float)
    tcmd = cfg.force_gain * (R @ np.asarray(torque_cmd_tool, dtype=float))
    vh = np.zeros(3) if head_velocity is None else np.asarray(head_velocity, dtype=float)
    B = R[:, :2]
    geo = patch_geometry(x, R, head.center, head.radius, coil)
    if not geo.in_contact:
        v, w, _ = _solve(Fcmd, tcmd, B, None, vh, cfg)
        contact = ContactState(off_axis=geo.off_axis)
    else:
        n = geo.normal
        ct = _Contact(geo, x, B, head, cfg)
        v, w, rel = _solve(Fcmd, tcmd, B, ct, vh, cfg)
        Fn = ct.kd - ct.b_n * float(rel @ n)
        if Fn <= 0.0:
            # separating faster than the penalty spring relaxes
            v, w, _ = _solve(Fcmd, tcmd, B, None, vh, cfg)
            contact = ContactState(True, geo.delta, -float(rel @ n), geo.centroid, n, 0.0, np.zeros(3),
                                   np.zeros(3), np.zeros(3), geo.area, geo.off_axis)
        else:
            vt = rel - float(rel @ n) * n
            sv = math.sqrt(float(vt @ vt))
            if cfg.c_v * sv > head.mu * Fn:
                s = vt / sv
                for _ in range(4):
                    ct2 = _Contact(geo, x, B, head, cfg, slide_dir=s)
                    v2, w2, rel2 = _solve(Fcmd, tcmd, B, ct2, vh, cfg)
                    Fn2 = ct2.kd - ct2.b_n * float(rel2 @ n)
                    vt2 = rel2 - float(rel2 @ n) * n
                    sv2 = math.sqrt(float(vt2 @ vt2))
                    if sv2 < 1e-12 or Fn2 <= 0.0:
                        break
                    v, w, rel, Fn = v2, w2, rel2, Fn2
                    s_new = vt2 / sv2
                    if float(s_new @ s) > 1.0 - 1e-10:
                        break
                    s = s_new
                fric = -head.mu * Fn * s
            else:
                fric = -cfg.c_v * vt
            force = Fn * n + fric
            r = ct.r
            contact = ContactState(True, geo.delta, -float(rel @ n), geo.centroid, n, Fn, fric, force,
                                   _cross(r, force), geo.area, geo.off_axis)
    dt = cfg.dt
    state.x = x + v * dt
    state.R = so3_exp(w * dt) @ R
    state.v, state.w = v, w
    return contact


@dataclass
class SensorModel:
    """Wrist wrench sensor: bias, gaussian noise and a captured zero offset."""

    bias: np.ndarray = field(default_factory=lambda: np.zeros(6))
    sigma_force: float = 0.2
    sigma_torque: float = 5.0
    zero_offset: np.ndarray = field(default_factory=lambda: np.zeros(6))
    rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0))

    def __post_init__(self):
        self.bias = np.asarray(self.bias, dtype=float).reshape(6)
        self.zero_offset = np.asarray(self.zero_offset, dtype=float).reshape(6)

    @property
    def sigma(self) -> np.ndarray:
        f, t = self.sigma_force, self.sigma_torque
        return np.array((f, f, f, t, t, t))

    def read(self, true_wrench) -> np.ndarray:
        return read_wrench(true_wrench, self)


def read_wrench(true_wrench, sensor: SensorModel, seed=None) -> np.ndarray:
    """``true + bias - zero_offset + noise``; ``seed`` makes a single read reproducible."""
    rng = sensor.rng if seed is None else np.random.default_rng(seed)
    out = np.asarray(true_wrench, dtype=float) + (sensor.bias - sensor.zero_offset)
    if sensor.sigma_force > 0 or sensor.sigma_torque > 0:
        out = out + sensor.sigma * rng.standard_normal(6)
    return out


def head_motion_script(t: float, script: dict | None, base_pose: Pose) -> Pose:
    """Head pose at time ``t`` for a motion script.

    Scripts: ``{"type": "fixed"}``; ``{"type": "ramp", "axis": [..],
    "distance": mm, "speed": mm/s, "start": s}`` with ``axis`` in the head
    frame; ``{"type": "sequence", "ramps": [...]}`` where each ramp starts
    when the previous one ends unless it has its own ``start``.
    """
    return Pose(base_pose.R, base_pose.t + head_displacement(t, script, base_pose.R),
                base_pose.to_frame, base_pose.from_frame)


def _ramp_disp(t, ramp, R, start):
    axis = np.asarray(ramp.get("axis", [1.0, 0.0, 0.0]), dtype=float)
    axis = R @ (axis / np.linalg.norm(axis))
    dist = float(ramp["distance"])
    speed = float(ramp.get("speed", 1.0))
    if speed <= 0:
        raise ValueError("ramp speed must be positive")
    s = min(max(t - start, 0.0) * speed, dist)
    return s * axis, start + dist / speed


def head_displacement(t: float, script: dict | None, R=np.eye(3)) -> np.ndarray:
    kind = "fixed" if script is None else script.get("type", "fixed")
    if kind == "fixed":
        return np.zeros(3)
    if kind == "ramp":
        disp, _ = _ramp_disp(t, script, R, float(script.get("start", 0.0)))
        return disp
    if kind == "sequence":
        total = np.zeros(3)
        start = float(script.get("start", 0.0))
        for ramp in script["ramps"]:
            start = float(ramp.get("start", start))
            disp, start = _ramp_disp(t, ramp, R, start)
            total = total + disp
        return total
    raise ValueError(f"unknown head motion script {kind!r}")


def motion_window(script: dict | None) -> tuple[float, float] | None:
    """(start, end) of head motion, or None for a fixed head."""
    kind = "fixed" if script is None else script.get("type", "fixed")
    if kind == "fixed":
        return None
    if kind == "ramp":
        start = float(script.get("start", 0.0))
        return start, start + float(script["distance"]) / float(script.get("speed", 1.0))
    if kind == "sequence":
        start = float(script.get("start", 0.0))
        t0 = None
        for ramp in script["ramps"]:
            start = float(ramp.get("start", start))
            t0 = start if t0 is None else t0
            start = start + float(ramp["distance"]) / float(ramp.get("speed", 1.0))
        return (t0, start) if t0 is not None else None
    raise ValueError(f"unknown head motion script {kind!r}")


def tracking_script(start: float, distance: float = 7.0, speed: float = 1.0) -> dict:
    """Head-frame x ramp followed by a y ramp."""
    return {"type": "sequence", "start": start,
            "ramps": [{"axis": [1, 0, 0], "distance": distance, "speed": speed},
                      {"axis": [0, 1, 0], "distance": distance, "speed": speed}]}
