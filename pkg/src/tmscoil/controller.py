"""Hybrid position/force control with scheduled force and torque centering."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

DEGENERATE = 1e-9


@dataclass(frozen=True)
class ForceSchedule:
    """Piecewise-linear force magnitude as a function of e / e_o."""

    f_hi: float = 40.0
    f_lo: float = 5.0
    hi_frac: float = 0.2
    lo_frac: float = 0.1
    slope: float = 350.0
    offset: float = -30.0

    def __call__(self, e: float, e_o: float) -> float:
        if e_o <= 0:
            raise ValueError("initial error e_o must be positive")
        hi = self.hi_frac * e_o
        if e > hi:
            return self.f_hi
        if e > self.lo_frac * e_o:
            r = self.hi_frac if e == hi else e / e_o  # (k*e_o)/e_o need not round back to k
            return self.slope * r + self.offset
        return self.f_lo


DEFAULT_SCHEDULE = ForceSchedule()


def schedule_force(e: float, e_o: float, schedule: ForceSchedule = DEFAULT_SCHEDULE) -> float:
    return schedule(e, e_o)


def schedule_force_array(e, e_o, schedule: ForceSchedule = DEFAULT_SCHEDULE) -> np.ndarray:
    """Elementwise ``schedule_force`` with the same branch ownership."""
    e = np.asarray(e, dtype=float)
    e_o = np.broadcast_to(np.asarray(e_o, dtype=float), e.shape)
    if np.any(e_o <= 0):
        raise ValueError("initial error e_o must be positive")
    hi = schedule.hi_frac * e_o
    lin = schedule.slope * np.where(e == hi, schedule.hi_frac, e / e_o) + schedule.offset
    return np.where(e > hi, schedule.f_hi,
                    np.where(e > schedule.lo_frac * e_o, lin, schedule.f_lo))


@dataclass(frozen=True)
class HybridForceCommand:
    F1: np.ndarray
    F2: np.ndarray | None
    theta: float
    magnitude: float
    force: np.ndarray


@dataclass(frozen=True)
class ErrorMetrics:
    e: float
    e_n: float
    e_p: float


@dataclass(frozen=True)
class ComplianceConfig:
    """Force-mode compliance settings of the real controller.

    The simulator maps them onto plant damping: the command is scaled by
    ``force_gain`` and the plant damping is ``damping`` times reference
    constants (see ``PlantConfig.from_compliance``).
    """

    force_gain: float = 1.0
    damping: float = 0.1
    compliant_axes: tuple = (True, True, True, True, True, False)

    def __post_init__(self):
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")
        if self.compliant_axes[5]:
            raise ValueError("tool z-rotation is never compliant")


def _check_unit(F1) -> np.ndarray:
    F1 = np.asarray(F1, dtype=float)
    if abs(math.sqrt(float(F1 @ F1)) - 1.0) > 1e-9:
        raise ValueError("F1 must be a unit vector")
    return F1


def compute_F2(x_t, x_f, F1, sign: str = "error"):
    """Direction perpendicular to the coil axis that reduces the error.

    ``sign="error"`` uses ``u = (x_f - x_t)/|.|``; ``sign="printed"`` uses
    the opposite direction.  Returns ``(F2, theta)`` with ``theta`` the
    angle between ``F1`` and ``u``; ``F2`` is None for a vanishing error or
    an error parallel to ``F1``.
    """
    F1 = _check_unit(F1)
    d = np.asarray(x_f, dtype=float) - np.asarray(x_t, dtype=float)
    if sign == "printed":
        d = -d
    elif sign != "error":
        raise ValueError(f"unknown F2 sign convention {sign!r}")
    n = math.sqrt(float(d @ d))
    if n < DEGENERATE:
        return None, 0.0
    u = d / n
    c = float(F1 @ u)
    rej = u - c * F1
    rn = math.sqrt(float(rej @ rej))
    theta = math.atan2(rn, c)
    if rn < DEGENERATE:
        return None, theta
    F2 = rej / rn
    F2 = F2 - float(F1 @ F2) * F1  # second pass for near-parallel errors
    return F2 / math.sqrt(float(F2 @ F2)), theta


def hybrid_force(F: float, F1, F2, theta: float) -> np.ndarray:
    F1 = np.asarray(F1, dtype=float)
    if F2 is None:
        return F * F1
    return F * (F1 * abs(math.cos(theta)) + np.asarray(F2, dtype=float) * abs(math.sin(theta)))


def hybrid_force_batch(F, F1, x_t, x_f, sign: str = "error"):
    """Row-wise ``compute_F2`` + ``hybrid_force`` for (N, 3) inputs.

    Returns ``(force, F2, theta)``; rows with a degenerate F2 carry NaN in
    ``F2`` and fall back to ``F * F1``.
    """
    F1 = np.asarray(F1, dtype=float)
    if np.any(np.abs(np.linalg.norm(F1, axis=1) - 1.0) > 1e-9):
        raise ValueError("F1 rows must be unit vectors")
    d = np.asarray(x_f, dtype=float) - np.asarray(x_t, dtype=float)
    if sign == "printed":
        d = -d
    elif sign != "error":
        raise ValueError(f"unknown F2 sign convention {sign!r}")
    n = np.linalg.norm(d, axis=1)
    ok = n >= DEGENERATE
    u = d / np.where(ok, n, 1.0)[:, None]
    c = np.einsum("ij,ij->i", F1, u)
    rej = u - c[:, None] * F1
    rn = np.linalg.norm(rej, axis=1)
    theta = np.where(ok, np.arctan2(rn, c), 0.0)
    ok &= rn >= DEGENERATE
    F2 = rej / np.where(ok, rn, 1.0)[:, None]
    F2 = F2 - np.einsum("ij,ij->i", F1, F2)[:, None] * F1
    F2 = np.where(ok[:, None], F2 / np.maximum(np.linalg.norm(F2, axis=1), DEGENERATE)[:, None], np.nan)
    F = np.asarray(F, dtype=float)
    force = np.where(ok[:, None],
                     F[:, None] * (F1 * np.abs(np.cos(theta))[:, None]
                                   + np.nan_to_num(F2) * np.abs(np.sin(theta))[:, None]),
                     F[:, None] * F1)
    return force, F2, theta


def torque_command(tau_c, k_p: float) -> np.ndarray:
    """Proportional torque in the tool frame; the z component is always 0.

    Accepts one 3-vector or an (N, 3) batch.
    """
    tau_c = np.asarray(tau_c, dtype=float)
    if tau_c.ndim == 2:
        return np.stack([-k_p * tau_c[:, 0], -k_p * tau_c[:, 1], np.zeros(len(tau_c))], axis=1)
    return np.array([-k_p * tau_c[0], -k_p * tau_c[1], 0.0])


def error_metrics(x_t, x_f, F1, F2) -> ErrorMetrics:
    d = np.asarray(x_f, dtype=float) - np.asarray(x_t, dtype=float)
    e_p = float(d @ F2) if F2 is not None else 0.0
    return ErrorMetrics(math.sqrt(float(d @ d)), float(d @ np.asarray(F1, dtype=float)), e_p)


@dataclass
class ControllerConfig:
    k_p: float = 4.0
    schedule: ForceSchedule = field(default_factory=ForceSchedule)
    dt: float = 0.002
    pure_force: bool = False
    fixed_force: float | None = None
    f2_sign: str = "error"

    def __post_init__(self):
        if self.k_p < 0:
            raise ValueError("k_p must be non-negative")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.f2_sign not in ("error", "printed"):
            raise ValueError(f"unknown F2 sign convention {self.f2_sign!r}")

    def to_dict(self) -> dict:
        s = self.schedule
        return {"k_p": self.k_p, "dt": self.dt, "pure_force": self.pure_force, "fixed_force": self.fixed_force,
                "f2_sign": self.f2_sign,
                "schedule": {"f_hi": s.f_hi, "f_lo": s.f_lo, "hi_frac": s.hi_frac, "lo_frac": s.lo_frac,
                             "slope": s.slope, "offset": s.offset}}

    @classmethod
    def from_dict(cls, d: dict) -> "ControllerConfig":
        d = dict(d)
        sched = ForceSchedule(**d.pop("schedule", {}))
        return cls(schedule=sched, **d)


@dataclass(frozen=True)
class TickOutput:
    force: np.ndarray  # base frame, N
    torque: np.ndarray  # tool frame, N*mm
    command: HybridForceCommand
    errors: ErrorMetrics


@dataclass
class ForceTorqueController:
    """Per-run controller memory: target point and latched initial error."""

    x_f: np.ndarray
    config: ControllerConfig = field(default_factory=ControllerConfig)
    e_o: float | None = None

    def __post_init__(self):
        self.x_f = np.asarray(self.x_f, dtype=float)

    def retarget(self, x_f) -> None:
        """Swap the desired point; e_o re-latches on the next tick."""
        x_f = np.asarray(x_f, dtype=float)
        if np.array_equal(x_f, self.x_f):
            return
        self.x_f = x_f
        self.e_o = None

    def magnitude(self, e: float) -> float:
        cfg = self.config
        if cfg.fixed_force is not None:
            return float(cfg.fixed_force)
        if self.e_o is None or self.e_o <= 0:
            return cfg.schedule.f_lo
        return cfg.schedule(e, self.e_o)

    def tick(self, x_t, F1, tau_c) -> TickOutput:
        return controller_tick(self, x_t, F1, tau_c)


def controller_tick(state: ForceTorqueController, x_t, F1, tau_c) -> TickOutput:
    """One control period: schedule -> F2 -> hybrid force, plus torque law."""
    cfg = state.config
    F1 = np.asarray(F1, dtype=float)
    F1 = F1 / math.sqrt(float(F1 @ F1))
    F2, theta = compute_F2(x_t, state.x_f, F1, cfg.f2_sign)
    err = error_metrics(x_t, state.x_f, F1, F2)
    if state.e_o is None:
        state.e_o = err.e
    F = state.magnitude(err.e)
    if cfg.pure_force:
        force = F * F1
    else:
        force = hybrid_force(F, F1, F2, theta)
    torque = torque_command(tau_c, cfg.k_p)
    return TickOutput(force, torque, HybridForceCommand(F1, F2, theta, F, force), err)


def with_overrides(cfg: ControllerConfig, **kw) -> ControllerConfig:
    return replace(cfg, **kw)
