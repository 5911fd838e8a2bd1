"""Scenario runner: calibration, approach phases, force/torque control, logging."""
from __future__ import annotations

import copy
import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation

from . import geometry as geo
from .contact import (CoilModel, ContactState, HeadModel, PlantConfig, PlantState, SensorModel, _contact_at,
                      contact_wrench,
                      head_displacement, motion_window, step_plant)
from .controller import ControllerConfig, ForceSchedule, ForceTorqueController
from .trajectory import (MotionLimits, PlanningError, detect_contact, linear_plan, make_guard, plan_phase1,
                         plan_phase2, plan_phase3, retreat_pose)

SCHEMA = 1
CONTROL_PHASE = 5
VARIANTS = ("hybrid-scheduled", "hybrid-fixed", "pure-fixed")
STEADY_WINDOW = 5.0
DEBOUNCE = 3
RATIO_MIN_FC = 0.5
_ZERO3 = np.zeros(3)


@dataclass
class SceneConfig:
    """Everything physical about a run; defaults are desk-scale, not measured."""

    head_center: tuple = (450.0, 0.0, 150.0)
    head_radius: float = 90.0
    mu: float = 0.6
    k_n: float = 10.0
    b_n: float = 0.5
    floor_radius: float = 100.0
    aperture_deg: float = 30.0
    n_rings: int = 48
    D_t: float = 4.0
    D_r: float = 2000.0
    c_v: float = 50.0
    force_gain: float = 1.0
    torque_deadband: float = 40.0  # N*mm
    dt: float = 0.002
    bias_force: float = 0.5  # per-component half-range, N
    bias_torque: float = 20.0  # per-component half-range, N*mm
    sigma_force: float = 0.2
    sigma_torque: float = 5.0
    camera_pose: dict = field(default_factory=lambda: {"q_wxyz": [0.0, 0.0, 0.0, 1.0], "t_mm": [2400.0, 0.0, 600.0]})
    tool_offset: tuple = (0.0, 0.0, 150.0)  # eTt translation, mm
    calibration_samples: int = 1
    calibration_noise_mm: float = 0.0
    target_azimuth_deg: float = 50.0
    target_elevation_deg: float = 35.0
    target_offset_mm: float = 0.0
    start_position: tuple = (300.0, -250.0, 450.0)
    start_q_wxyz: tuple = (0.0, 1.0, 0.0, 0.0)
    guard_clearance: float = 30.0
    guard_lift: float = 25.0
    up: tuple = (0.0, 0.0, 1.0)
    v_max: float = 50.0
    accel: float = 100.0
    w_max: float = 0.5
    alpha: float = 1.0
    descent_velocity: float | None = None
    descent_overshoot: float = 15.0
    contact_threshold: float = 2.0
    zero_reads: int = 50

    def head_model(self) -> HeadModel:
        return HeadModel(geo.Pose(np.eye(3), self.head_center, "b", "h"), self.head_radius, self.mu, self.k_n,
                         self.b_n)

    def coil_model(self) -> CoilModel:
        return CoilModel(self.floor_radius, math.radians(self.aperture_deg), self.n_rings)

    def plant_config(self) -> PlantConfig:
        return PlantConfig(self.D_t, self.D_r, self.dt, self.c_v, self.force_gain, self.torque_deadband)

    def limits(self) -> MotionLimits:
        return MotionLimits(self.v_max, self.accel, self.w_max, self.alpha, self.dt)

    def target_direction(self) -> np.ndarray:
        az, el = math.radians(self.target_azimuth_deg), math.radians(self.target_elevation_deg)
        return np.array([math.cos(el) * math.cos(az), math.cos(el) * math.sin(az), math.sin(el)])

    def target_in_head(self) -> np.ndarray:
        """Target point in head coordinates (origin at the head center)."""
        return (self.head_radius + self.target_offset_mm) * self.target_direction()


@dataclass
class Scenario:
    name: str = "scheduled"
    variant: str = "hybrid-scheduled"
    force: float | None = None
    k_p: float = 4.0
    duration: float = 60.0
    head_motion: dict | None = None
    retarget: str | float | None = None
    seed: int = 0
    f2_sign: str = "error"
    scene: SceneConfig = field(default_factory=SceneConfig)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown controller variant {self.variant!r}")
        if self.variant != "hybrid-scheduled" and self.force is None:
            raise ValueError(f"variant {self.variant} needs a fixed force")
        if self.duration < 0:
            raise ValueError("duration must be non-negative")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def controller_config(self) -> ControllerConfig:
        return ControllerConfig(k_p=self.k_p, schedule=ForceSchedule(), dt=self.scene.dt,
                                pure_force=self.variant == "pure-fixed",
                                fixed_force=None if self.variant == "hybrid-scheduled" else float(self.force),
                                f2_sign=self.f2_sign)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["schema"] = SCHEMA
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        d = copy.deepcopy(d)
        schema = d.pop("schema", SCHEMA)
        if schema != SCHEMA:
            raise ValueError(f"unsupported schema version {schema}")
        scene = scene_from_dict(d.pop("scene", {}) or {})
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown scenario fields: {sorted(unknown)}")
        return cls(scene=scene, **d)


def scene_from_dict(d: dict) -> SceneConfig:
    d = dict(d)
    d.pop("schema", None)
    known = {f.name for f in fields(SceneConfig)}
    unknown = set(d) - known
    if unknown:
        raise ValueError(f"unknown scene fields: {sorted(unknown)}")
    for k in ("head_center", "tool_offset", "start_position", "start_q_wxyz", "up"):
        if k in d:
            d[k] = tuple(float(v) for v in d[k])
    return SceneConfig(**d)


# --- logging -----------------------------------------------------------------

COLUMNS = ["t", "phase", "e", "e_n", "e_p", "abs_e_n", "abs_e_p", "theta_deg", "F", "F_c", "tau_cx", "tau_cy",
           "tau_cz", "tau_ratio", "x", "y", "z", "qw", "qx", "qy", "qz", "head_x", "head_y", "head_z",
           "in_contact", "delta"]
COL = {c: i for i, c in enumerate(COLUMNS)}


@dataclass
class TimeSeriesLog:
    """Fixed-dt rows; NaN marks a null value (written as an empty CSV cell)."""

    data: np.ndarray = field(default_factory=lambda: np.empty((0, len(COLUMNS))))
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return self.data.shape[0]

    def __getitem__(self, name: str) -> np.ndarray:
        return self.data[:, COL[name]]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        ints = {COL["phase"], COL["in_contact"]}
        for row in self.data.tolist():
            w.writerow(["" if v != v else (str(int(v)) if i in ints else repr(v)) for i, v in enumerate(row)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, meta: dict | None = None) -> "TimeSeriesLog":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or rows[0] != COLUMNS:
            raise ValueError("log header does not match the expected columns")
        data = np.array([[float(v) if v != "" else math.nan for v in r] for r in rows[1:]], dtype=float)
        return cls(data.reshape(-1, len(COLUMNS)), dict(meta or {}))


class _Recorder:
    def __init__(self, capacity: int):
        self.buf = np.full((max(capacity, 16), len(COLUMNS)), math.nan)
        self.rot = np.zeros((self.buf.shape[0], 3, 3))
        self.n = 0

    def row(self) -> np.ndarray:
        if self.n == self.buf.shape[0]:
            grown = np.full((2 * self.n, len(COLUMNS)), math.nan)
            grown[:self.n] = self.buf
            self.buf = grown
            rot = np.zeros((2 * self.n, 3, 3))
            rot[:self.n] = self.rot
            self.rot = rot
        r = self.buf[self.n]
        self.n += 1
        return r

    def finish(self, meta) -> TimeSeriesLog:
        data = self.buf[:self.n].copy()
        if self.n:
            q = Rotation.from_matrix(self.rot[:self.n]).as_quat()[:, [3, 0, 1, 2]]
            q[q[:, 0] < 0] *= -1.0
            data[:, 17:21] = q
        return TimeSeriesLog(data, meta)


# --- world ---------------------------------------------------------------------

@dataclass
class World:
    """Single-owner simulation state."""

    scenario: Scenario
    head: HeadModel
    coil: CoilModel
    plant: PlantConfig
    sensor: SensorModel
    state: PlantState
    base_head_pose: geo.Pose
    x_f: np.ndarray
    target_in_head: np.ndarray
    t: float = 0.0
    controller: ForceTorqueController | None = None
    last_contact: ContactState = field(default_factory=ContactState)


def synthetic_calibration(scene: SceneConfig, rng: np.random.Generator):
    """Fabricate (bTe, eTt, cTt) samples for the configured camera pose."""
    bTc = geo.Pose.from_dict(scene.camera_pose).relabel("b", "c")
    eTt = geo.Pose(np.eye(3), scene.tool_offset, "e", "t")
    samples = []
    for _ in range(max(1, scene.calibration_samples)):
        bTe = geo.Pose(geo.random_rotation(rng), rng.uniform([200, -300, 200], [600, 300, 600]), "b", "e")
        cTt = geo.compose(geo.inverse(bTc), geo.compose(bTe, eTt))
        if scene.calibration_noise_mm > 0:
            cTt = geo.Pose(cTt.R, cTt.t + rng.normal(0.0, scene.calibration_noise_mm, 3), "c", "t")
        samples.append((bTe, eTt, cTt))
    return bTc, samples


def build_world(sc: Scenario) -> tuple[World, dict]:
    scene = sc.scene
    rng = np.random.default_rng(int(sc.seed))
    bTc_true, samples = synthetic_calibration(scene, rng)
    bTc = geo.calibrate_camera_to_base(samples)
    head = scene.head_model()
    # navigation reports head center and target in camera coordinates
    cTh = geo.compose(geo.inverse(bTc_true), head.pose)
    bTh_est = geo.camera_to_base(bTc, cTh)
    target_h = scene.target_in_head()
    x_f = bTh_est.apply(target_h)
    bias = np.concatenate([rng.uniform(-scene.bias_force, scene.bias_force, 3),
                           rng.uniform(-scene.bias_torque, scene.bias_torque, 3)])
    sensor = SensorModel(bias, scene.sigma_force, scene.sigma_torque, rng=rng)
    R0 = geo.Pose.from_quat(scene.start_q_wxyz, scene.start_position).R
    state = PlantState(R0, np.asarray(scene.start_position, dtype=float))
    world = World(sc, head, scene.coil_model(), scene.plant_config(), sensor, state, head.pose, x_f, target_h)
    info = {"bTc_residual_mm": float(np.linalg.norm(bTc.t - bTc_true.t)), "head_center_est": bTh_est.t.tolist(),
            "x_f": x_f.tolist()}
    return world, info


def _write_row(rec, t, phase, world: World, x, R, measured, head_pos, contact: ContactState, out=None):
    x_f = world.x_f if world.controller is None else world.controller.x_f
    d = x_f - x
    r = rec.row()
    rec.rot[rec.n - 1] = R
    r[0] = t
    r[1] = phase
    F1 = R[:, 2]
    if out is None:
        e = math.sqrt(float(d @ d))
        e_n = float(d @ F1)
        r[2], r[3], r[5] = e, e_n, abs(e_n)
    else:
        er = out.errors
        r[2], r[3], r[4], r[5], r[6] = er.e, er.e_n, er.e_p, abs(er.e_n), abs(er.e_p)
        r[7] = math.degrees(out.command.theta)
        r[8] = out.command.magnitude
    fc = math.sqrt(float(measured[:3] @ measured[:3]))
    r[9] = fc
    r[10:13] = measured[3:6]
    if fc >= RATIO_MIN_FC:
        r[13] = math.hypot(measured[3], measured[4]) / fc
    r[14:17] = x
    r[21:24] = head_pos
    r[24] = 1.0 if contact.in_contact else 0.0
    r[25] = contact.delta


def _kinematic_contact(world: World, pose: geo.Pose, v) -> ContactState:
    return contact_wrench(pose, world.coil, world.head, (v, np.zeros(3)), c_v=world.plant.c_v)


def _follow(world: World, plan, rec, stop_on_contact=False, threshold=2.0):
    """Drive the coil along a plan sample by sample; returns the stop index."""
    dt = world.plant.dt
    n = len(plan)
    for i in range(n):
        x, R = plan.positions[i], plan.rotations[i]
        v = (plan.positions[min(i + 1, n - 1)] - x) / dt
        contact = _contact_at(x, R, world.coil, world.head, (v, _ZERO3), c_v=world.plant.c_v)
        measured = world.sensor.read(contact.sensed_wrench(R))
        world.state.R, world.state.x = R, x
        world.last_contact = contact
        _write_row(rec, world.t, plan.phase, world, x, R, measured, world.head.center, contact)
        world.t += dt
        if stop_on_contact and detect_contact(measured[:3], threshold):
            return i
    return None


def approach(world: World, rec) -> dict:
    """Phases 1-4; leaves the coil at the contact pose with the sensor zeroed."""
    scene = world.scenario.scene
    lim = scene.limits()
    head_est = world.head.center
    guard = make_guard(head_est, scene.head_radius, scene.guard_clearance, scene.guard_lift, scene.up)
    p1 = plan_phase1(world.state.x, world.state.R, guard, lim)
    _follow(world, p1, rec)
    p2 = plan_phase2(p1.key_points["x_si"], world.x_f, guard, lim, start_orientation=p1.rotations[-1])
    _follow(world, p2, rec)
    x_sf = p2.key_points["x_sf"]
    direction = world.x_f - x_sf
    depth = float(np.linalg.norm(direction))
    end = world.x_f + scene.descent_overshoot * direction / depth
    v_desc = scene.descent_velocity if scene.descent_velocity is not None else scene.v_max
    p3 = plan_phase3(x_sf, end, v_desc, orientation=p2.rotations[-1], dt=scene.dt, x_o=guard.center)
    hit = _follow(world, p3, rec, stop_on_contact=True, threshold=scene.contact_threshold)
    if hit is None:
        raise PlanningError("descent finished without detecting contact")
    contact_pose = geo.Pose(p3.rotations[hit], p3.positions[hit], "b", "t")
    back = retreat_pose(contact_pose)
    out = linear_plan(4, contact_pose, back, lim)
    _follow(world, out, rec)
    free = _kinematic_contact(world, back, np.zeros(3))
    world.sensor.zero_offset = np.zeros(6)
    reads = []
    for _ in range(max(1, scene.zero_reads)):
        m = world.sensor.read(free.sensed_wrench(back.R))
        reads.append(m)
        _write_row(rec, world.t, 4, world, back.t, back.R, m, world.head.center, free)
        world.t += scene.dt
    world.sensor.zero_offset = np.median(np.array(reads), axis=0)
    ret = linear_plan(4, back, contact_pose, lim)
    _follow(world, ret, rec)
    world.state.R, world.state.x = contact_pose.R.copy(), contact_pose.t.copy()
    world.state.v, world.state.w = np.zeros(3), np.zeros(3)
    return {"x_si": p1.key_points["x_si"].tolist(), "x_sf": x_sf.tolist(), "guard_center": guard.center.tolist(),
            "guard_radius": guard.radius, "contact_position": contact_pose.t.tolist(),
            "retreat_contact_free": not free.in_contact, "zero_offset": world.sensor.zero_offset.tolist()}


def retarget(world: World, new_x_f) -> ForceTorqueController:
    """Swap the desired point of the running controller (no re-planning)."""
    if world.controller is None:
        raise RuntimeError("force control is not active")
    world.controller.retarget(new_x_f)
    world.x_f = world.controller.x_f
    return world.controller


def _retarget_time(sc: Scenario):
    if sc.retarget is None:
        return None
    if sc.retarget == "motion_end":
        win = motion_window(sc.head_motion)
        return None if win is None else win[1]
    return float(sc.retarget)


def force_control(world: World, rec, duration: float) -> dict:
    sc = world.scenario
    dt = world.plant.dt
    world.controller = ForceTorqueController(world.x_f.copy(), sc.controller_config())
    ctrl = world.controller
    st = world.state
    R_head = world.base_head_pose.R
    head0 = world.base_head_pose.t
    script = sc.head_motion
    moving = script is not None and script.get("type", "fixed") != "fixed"
    t_ret = _retarget_time(sc)
    retargeted_at = None
    contact = contact_wrench(st.pose, world.coil, world.head, (st.v, st.w), c_v=world.plant.c_v)
    n = int(round(duration / dt))
    t0 = world.t
    for k in range(n):
        tc = k * dt
        if moving:
            disp = head_displacement(tc, script, R_head)
            vel = (head_displacement(tc + dt, script, R_head) - disp) / dt
            world.head = world.head.moved(geo.Pose(R_head, head0 + disp, "b", "h"))
        else:
            vel = None
        if t_ret is not None and retargeted_at is None and tc >= t_ret:
            retarget(world, world.head.pose.apply(world.target_in_head))
            retargeted_at = tc
        R, x = st.R, st.x
        measured = world.sensor.read(contact.sensed_wrench(R))
        out = ctrl.tick(x, R[:, 2], measured[3:6])
        _write_row(rec, world.t, CONTROL_PHASE, world, x, R, measured, world.head.center, contact, out)
        contact = step_plant(st, out.force, out.torque, world.head, world.coil, world.plant, vel)
        world.t += dt
    world.last_contact = contact
    return {"force_control_start": t0, "e_o": ctrl.e_o, "retarget_time": None if retargeted_at is None else
            t0 + retargeted_at}


def run_scenario(sc: Scenario) -> TimeSeriesLog:
    """Full pipeline for one scenario; deterministic for a given (config, seed)."""
    meta = {"scenario": sc.name, "variant": sc.variant, "seed": int(sc.seed), "dt": sc.scene.dt}
    if sc.duration <= 0:
        return TimeSeriesLog(np.empty((0, len(COLUMNS))), meta)
    world, info = build_world(sc)
    meta.update(info)
    rec = _Recorder(int(sc.duration / sc.scene.dt) + 20000)
    meta.update(approach(world, rec))
    fc = force_control(world, rec, sc.duration)
    meta.update(fc)
    win = motion_window(sc.head_motion)
    if win is not None:
        meta["motion_window"] = [fc["force_control_start"] + win[0], fc["force_control_start"] + win[1]]
    return rec.finish(meta)


# --- metrics -----------------------------------------------------------------

@dataclass
class SummaryMetrics:
    e_converged: float | None = None
    t_below_5mm: float | None = None
    t_above_20N: float | None = None
    steady_ratio: float | None = None
    min_Fc_during_motion: float | None = None
    abs_e_n_converged: float | None = None
    abs_e_p_converged: float | None = None
    theta_converged_deg: float | None = None
    e_o: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def _first_debounced(mask: np.ndarray, k: int = DEBOUNCE):
    run = 0
    for i, m in enumerate(mask):
        run = run + 1 if m else 0
        if run >= k:
            return i - k + 1
    return None


def _debounced_count(mask: np.ndarray, k: int = DEBOUNCE) -> int:
    total, run = 0, 0
    for m in list(mask) + [False]:
        if m:
            run += 1
        else:
            if run >= k:
                total += run
            run = 0
    return total


def _mean(x):
    x = x[~np.isnan(x)]
    return float(x.mean()) if len(x) else None


def summarize(log: TimeSeriesLog, window: float = STEADY_WINDOW) -> SummaryMetrics:
    """Reported quantities of a run, computed over the force-control rows."""
    if len(log) == 0:
        raise ValueError("cannot summarize an empty log")
    phase = log["phase"]
    ctl = phase == CONTROL_PHASE
    if not ctl.any():
        ctl = np.ones(len(log), dtype=bool)
    d = log.data[ctl]
    t = d[:, COL["t"]]
    dt = float(log.meta.get("dt", t[1] - t[0] if len(t) > 1 else 0.0))
    t0 = float(log.meta.get("force_control_start", t[0]))
    steady = t >= t[-1] - window + 1e-9
    e = d[:, COL["e"]]
    i5 = _first_debounced(e < 5.0)
    above = _debounced_count(d[:, COL["F_c"]] > 20.0)
    m = SummaryMetrics(
        e_converged=_mean(e[steady]),
        t_below_5mm=None if i5 is None else float(t[i5] - t0),
        t_above_20N=above * dt,
        steady_ratio=_mean(d[steady, COL["tau_ratio"]]),
        abs_e_n_converged=_mean(d[steady, COL["abs_e_n"]]),
        abs_e_p_converged=_mean(d[steady, COL["abs_e_p"]]),
        theta_converged_deg=_mean(d[steady, COL["theta_deg"]]),
        e_o=log.meta.get("e_o"),
    )
    win = log.meta.get("motion_window")
    if win is not None:
        during = (t >= win[0]) & (t <= win[1])
        if during.any():
            m.min_Fc_during_motion = float(np.nanmin(d[during, COL["F_c"]]))
    return m


# --- sweeps & output -----------------------------------------------------------

SWEEP_AXES = {"force": (5.0, 10.0, 20.0, 30.0, 40.0), "kp": (0.0, 1.0, 2.0, 4.0, 4.5)}


def sweep_scenarios(base: Scenario, axis: str, values=None) -> list[Scenario]:
    if axis not in SWEEP_AXES:
        raise ValueError(f"unknown sweep axis {axis!r}; expected one of {sorted(SWEEP_AXES)}")
    values = SWEEP_AXES[axis] if values is None else values
    out = []
    for v in values:
        if axis == "force":
            variant = base.variant if base.variant != "hybrid-scheduled" else "hybrid-fixed"
            out.append(replace(base, name=f"{base.name}_F{v:g}", variant=variant, force=float(v)))
        else:
            out.append(replace(base, name=f"{base.name}_kp{v:g}", k_p=float(v)))
    return out


def _run_and_summarize(sc: Scenario):
    log = run_scenario(sc)
    return log, summarize(log)


def run_sweep(base: Scenario, axis: str, values=None, workers: int = 1, keep_logs: bool = False):
    """One run per sweep value with a shared seed; results in sweep order."""
    scs = sweep_scenarios(base, axis, values)
    if workers > 1 and len(scs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_run_and_summarize, scs))
    else:
        results = [_run_and_summarize(sc) for sc in scs]
    if keep_logs:
        return [s for _, s in results], [lg for lg, _ in results]
    return [s for _, s in results]


def comparison_table(axis: str, values, summaries) -> str:
    keys = list(SummaryMetrics().to_dict())
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([axis] + keys)
    for v, s in zip(values, summaries):
        d = s.to_dict()
        w.writerow([repr(float(v))] + ["" if d[k] is None else repr(float(d[k])) for k in keys])
    return buf.getvalue()


def write_outputs(out_dir: Path, name: str, log: TimeSeriesLog, plots: bool = False) -> Path:
    from .plotting import write_plots
    d = Path(out_dir) / name
    d.mkdir(parents=True, exist_ok=True)
    (d / "log.csv").write_text(log.to_csv())
    summary = summarize(log).to_dict() if len(log) else {}
    (d / "summary.json").write_text(json.dumps({"summary": summary, "meta": log.meta}, indent=2, sort_keys=True))
    if plots and len(log):
        write_plots(d, log)
    return d
