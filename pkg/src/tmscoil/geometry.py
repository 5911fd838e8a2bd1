"""Rigid-body pose algebra and camera-to-robot-base calibration.

A ``Pose`` maps points expressed in ``from_frame`` into ``to_frame``.  With
the usual robotics reading, ``bTe`` (to_frame="b", from_frame="e") is the pose
of the end-effector in the base frame, so ``compose(bTe, eTt)`` gives ``bTt``.

Frame tags are labels only ("b" base, "c" camera, "e" end-effector,
"t" tool, or anything else); ``None`` acts as a wildcard.  Units are
millimeters and radians.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial.transform import Rotation

ORTHO_TOL = 1e-9
DRIFT_TOL = 1e-12
INCONSISTENT_DEG = 5.0


class FrameMismatchError(ValueError):
    pass


class CalibrationWarning(UserWarning):
    pass


def hat(w) -> np.ndarray:
    x, y, z = w
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def rotation_error(R: np.ndarray) -> float:
    """Largest deviation of R from an orthonormal, right-handed matrix."""
    R = np.asarray(R, dtype=float)
    ortho = float(np.max(np.abs(R.T @ R - np.eye(3))))
    return max(ortho, abs(float(np.linalg.det(R)) - 1.0))


def is_rotation(R, tol: float = ORTHO_TOL) -> bool:
    R = np.asarray(R, dtype=float)
    return R.shape == (3, 3) and bool(np.all(np.isfinite(R))) and rotation_error(R) <= tol


def orthonormalize(R: np.ndarray) -> np.ndarray:
    """Closest rotation matrix in the Frobenius sense (polar decomposition)."""
    U, _, Vt = np.linalg.svd(R)
    Q = U @ Vt
    if np.linalg.det(Q) < 0:
        U[:, -1] *= -1
        Q = U @ Vt
    return Q


def so3_exp(w) -> np.ndarray:
    """Rodrigues formula for the rotation vector ``w``."""
    x, y, z = (float(c) for c in w)
    th2 = x * x + y * y + z * z
    if th2 < 1e-16:
        a, b = 1.0, 0.5
    else:
        th = math.sqrt(th2)
        a, b = math.sin(th) / th, (1.0 - math.cos(th)) / th2
    # I + a W + b W^2 written out
    return np.array([[1.0 - b * (y * y + z * z), b * x * y - a * z, b * x * z + a * y],
                     [b * x * y + a * z, 1.0 - b * (x * x + z * z), b * y * z - a * x],
                     [b * x * z - a * y, b * y * z + a * x, 1.0 - b * (x * x + y * y)]])


def so3_log(R) -> np.ndarray:
    return Rotation.from_matrix(np.asarray(R, dtype=float)).as_rotvec()


def rotation_angle(Ra, Rb) -> float:
    """Geodesic angle between two rotations, radians."""
    c = (np.trace(np.asarray(Ra).T @ np.asarray(Rb)) - 1.0) / 2.0
    return math.acos(min(1.0, max(-1.0, float(c))))


def rot_z(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def align_rotation(a, b) -> np.ndarray:
    """Minimal rotation taking unit vector ``a`` onto unit vector ``b``.

    For antiparallel vectors the axis is an arbitrary perpendicular.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    a = a / np.linalg.norm(a)
    b = b / np.linalg.norm(b)
    axis = np.cross(a, b)
    s = float(np.linalg.norm(axis))
    c = float(a @ b)
    if s < 1e-12:
        if c > 0:
            return np.eye(3)
        perp = np.cross(a, [1.0, 0.0, 0.0])
        if np.linalg.norm(perp) < 1e-6:
            perp = np.cross(a, [0.0, 1.0, 0.0])
        return so3_exp(math.pi * perp / np.linalg.norm(perp))
    return so3_exp(axis / s * math.atan2(s, c))


def _frames_chain(outer: str | None, inner: str | None) -> bool:
    return outer is None or inner is None or outer == inner


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform with rotation ``R`` (3x3) and translation ``t`` (mm)."""

    R: np.ndarray = field(default_factory=lambda: np.eye(3))
    t: np.ndarray = field(default_factory=lambda: np.zeros(3))
    to_frame: str | None = None
    from_frame: str | None = None

    def __post_init__(self):
        R = np.array(self.R, dtype=float).reshape(3, 3)
        t = np.array(self.t, dtype=float).reshape(3)
        if not is_rotation(R):
            raise ValueError(f"not a rotation matrix (error {rotation_error(R):.3g})")
        R.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", t)

    @classmethod
    def identity(cls, to_frame=None, from_frame=None) -> "Pose":
        return cls(np.eye(3), np.zeros(3), to_frame, from_frame)

    @classmethod
    def from_matrix(cls, T, to_frame=None, from_frame=None) -> "Pose":
        T = np.asarray(T, dtype=float)
        if not np.allclose(T[3], [0.0, 0.0, 0.0, 1.0]):
            raise ValueError("bottom row of a homogeneous transform must be [0 0 0 1]")
        return cls(T[:3, :3], T[:3, 3], to_frame, from_frame)

    @classmethod
    def from_quat(cls, q_wxyz, t, to_frame=None, from_frame=None) -> "Pose":
        w, x, y, z = q_wxyz
        R = Rotation.from_quat([x, y, z, w]).as_matrix()
        return cls(R, t, to_frame, from_frame)

    @property
    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.R
        T[:3, 3] = self.t
        return T

    def quat(self) -> np.ndarray:
        """Unit quaternion (w, x, y, z) with w >= 0."""
        x, y, z, w = Rotation.from_matrix(self.R).as_quat()
        q = np.array([w, x, y, z])
        return -q if q[0] < 0 else q

    def apply(self, p) -> np.ndarray:
        """Map point(s) from ``from_frame`` into ``to_frame``."""
        return np.asarray(p, dtype=float) @ self.R.T + self.t

    def relabel(self, to_frame=None, from_frame=None) -> "Pose":
        return Pose(self.R, self.t, to_frame, from_frame)

    def allclose(self, other: "Pose", atol: float = 1e-9) -> bool:
        return bool(np.allclose(self.R, other.R, rtol=0, atol=atol)
                    and np.allclose(self.t, other.t, rtol=0, atol=atol))

    def to_dict(self) -> dict:
        d = {"q_wxyz": [float(v) for v in self.quat()], "t_mm": [float(v) for v in self.t]}
        if self.to_frame is not None:
            d["to"] = self.to_frame
        if self.from_frame is not None:
            d["from"] = self.from_frame
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Pose":
        return cls.from_quat(d.get("q_wxyz", [1.0, 0.0, 0.0, 0.0]), d.get("t_mm", [0.0, 0.0, 0.0]),
                             d.get("to"), d.get("from"))

    def __repr__(self):
        return (f"Pose({self.to_frame}<-{self.from_frame}, q={np.round(self.quat(), 6).tolist()}, "
                f"t={np.round(self.t, 6).tolist()})")


def compose(a: Pose, b: Pose) -> Pose:
    """Matrix product ``a @ b``; ``a.from_frame`` must equal ``b.to_frame``."""
    if not _frames_chain(a.from_frame, b.to_frame):
        raise FrameMismatchError(f"cannot chain {a.to_frame}<-{a.from_frame} with {b.to_frame}<-{b.from_frame}")
    R = a.R @ b.R
    if rotation_error(R) > DRIFT_TOL:
        R = orthonormalize(R)
    return Pose(R, a.R @ b.t + a.t, a.to_frame, b.from_frame)


def inverse(p: Pose) -> Pose:
    Rt = p.R.T
    return Pose(Rt, -(Rt @ p.t), p.from_frame, p.to_frame)


def camera_to_base(bTc: Pose, cTx: Pose) -> Pose:
    """Express a camera-measured pose in the robot base frame."""
    return compose(bTc, cTx)


def per_sample_bTc(samples: Iterable[Sequence[Pose]]) -> list[Pose]:
    """``bTe @ eTt @ inverse(cTt)`` for every (bTe, eTt, cTt) sample."""
    return [compose(compose(bTe, eTt), inverse(cTt)) for bTe, eTt, cTt in samples]


def quaternion_mean(quats) -> np.ndarray:
    """Sign-aligned arithmetic mean of unit quaternions, renormalized."""
    Q = np.array(quats, dtype=float)
    ref = Q[0]
    signs = np.where(Q @ ref < 0.0, -1.0, 1.0)
    m = (Q * signs[:, None]).mean(axis=0)
    return m / np.linalg.norm(m)


def max_pairwise_angle(poses: Sequence[Pose]) -> float:
    worst = 0.0
    for i in range(len(poses)):
        for j in range(i + 1, len(poses)):
            worst = max(worst, rotation_angle(poses[i].R, poses[j].R))
    return worst


def calibrate_camera_to_base(samples) -> Pose:
    """Average per-sample camera-to-base estimates into one ``bTc``.

    Translation is the arithmetic mean, rotation the quaternion mean.  A
    ``CalibrationWarning`` is emitted when two per-sample rotations differ
    by more than 5 degrees; the mean is still returned.
    """
    samples = list(samples)
    if not samples:
        raise ValueError("calibration needs at least one (bTe, eTt, cTt) sample")
    estimates = per_sample_bTc(samples)
    if len(estimates) == 1:
        est = estimates[0]
        return Pose(est.R, est.t, "b", "c")
    spread = max_pairwise_angle(estimates)
    if spread > math.radians(INCONSISTENT_DEG):
        warnings.warn(f"inconsistent calibration samples: rotations spread {math.degrees(spread):.2f} deg",
                      CalibrationWarning, stacklevel=2)
    q = quaternion_mean([e.quat() for e in estimates])
    t = np.mean([e.t for e in estimates], axis=0)
    return Pose.from_quat(q, t, "b", "c")


def calibration_residuals(samples, bTc: Pose) -> list[dict]:
    """Per-sample deviation of each single-sample estimate from ``bTc``."""
    out = []
    for est in per_sample_bTc(samples):
        out.append({
            "rotation_deg": math.degrees(rotation_angle(est.R, bTc.R)),
            "rotation_fro": float(np.linalg.norm(est.R - bTc.R)),
            "translation_mm": float(np.linalg.norm(est.t - bTc.t)),
        })
    return out


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    return Rotation.random(random_state=rng).as_matrix()


def random_pose(rng: np.random.Generator, scale: float = 500.0, to_frame=None, from_frame=None) -> Pose:
    return Pose(random_rotation(rng), rng.uniform(-scale, scale, 3), to_frame, from_frame)
