"""Serial-arm kinematics: chain description, forward kinematics, and
damped least-squares inverse kinematics for aiming a mic-carrying arm.

The arm is a chain of revolute joints.  Each joint contributes a fixed
translation in its parent frame followed by a rotation about a fixed local
axis.  Microphone mounts attach to links (link i is the frame after joint
i; link 0 is the base), so the array geometry is a pure function of the
joint vector.
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass, field

import numpy as np
import yaml

from .utils import circ_diff_deg


def _skew(a: np.ndarray) -> np.ndarray:
    return np.array(
        [[0.0, -a[2], a[1]], [a[2], 0.0, -a[0]], [-a[1], a[0], 0.0]]
    )


def _cross3(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # np.cross carries ~50us of axis bookkeeping per call; the solver does
    # thousands of 3-vector crosses per solve
    return np.array(
        [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ]
    )


def rot_axis_angle(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rotation matrix about a (not necessarily unit) axis, by Rodrigues."""
    a = np.asarray(axis, dtype=np.float64)
    norm = np.linalg.norm(a)
    if norm == 0:
        raise ValueError("rotation axis must be nonzero")
    a = a / norm
    k = _skew(a)
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


@dataclass
class Joint:
    """One revolute joint: parent-frame translation, local axis, limits."""

    translation: np.ndarray
    axis: np.ndarray
    limits: tuple[float, float]

    def __post_init__(self):
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        a = np.asarray(self.axis, dtype=np.float64).reshape(3)
        if np.linalg.norm(a) == 0:
            raise ValueError("joint axis must be nonzero")
        lo, hi = float(self.limits[0]), float(self.limits[1])
        if not lo < hi:
            raise ValueError(f"joint limits must satisfy lo < hi, got ({lo}, {hi})")
        self.translation = t
        self.axis = a / np.linalg.norm(a)
        self.limits = (lo, hi)
        # Rodrigues terms are fixed per joint; the solver rebuilds the
        # rotation thousands of times per solve
        self._k = _skew(self.axis)
        self._k2 = self._k @ self._k

    def rotation(self, angle: float) -> np.ndarray:
        """Rotation by `angle` about this joint's (unit) axis."""
        r = np.sin(angle) * self._k + (1.0 - np.cos(angle)) * self._k2
        r[0, 0] += 1.0
        r[1, 1] += 1.0
        r[2, 2] += 1.0
        return r


@dataclass
class MicMount:
    """A rigid cluster of microphones attached to one link."""

    link: int
    translation: np.ndarray
    mic_offsets: np.ndarray

    def __post_init__(self):
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(3)
        offs = np.asarray(self.mic_offsets, dtype=np.float64)
        if offs.ndim != 2 or offs.shape[1] != 3 or offs.shape[0] == 0:
            raise ValueError(f"mic_offsets must be (m, 3), got shape {offs.shape}")
        self.mic_offsets = offs

    @property
    def n_mics(self) -> int:
        return self.mic_offsets.shape[0]


@dataclass
class KinematicChain:
    """Full arm description: joints, mic mounts, end-effector offset.

    `named_configs` holds reference joint vectors (the static array poses);
    `listening_template` is the elbow/wrist shape used to seed aiming
    solves, with the base yaw filled in per request.
    """

    joints: list[Joint]
    mounts: list[MicMount]
    ee_offset: np.ndarray
    named_configs: dict[str, np.ndarray] = field(default_factory=dict)
    listening_template: np.ndarray | None = None
    name: str = "arm"

    def __post_init__(self):
        self.ee_offset = np.asarray(self.ee_offset, dtype=np.float64).reshape(3)
        n = len(self.joints)
        if n == 0:
            raise ValueError("chain needs at least one joint")
        for mount in self.mounts:
            if not (0 <= mount.link <= n):
                raise ValueError(
                    f"mount link {mount.link} out of range for {n} joints"
                )
        self.named_configs = {
            k: np.asarray(v, dtype=np.float64).reshape(n)
            for k, v in self.named_configs.items()
        }
        if self.listening_template is not None:
            self.listening_template = np.asarray(
                self.listening_template, dtype=np.float64
            ).reshape(n)

    @property
    def n_joints(self) -> int:
        return len(self.joints)

    @property
    def n_mics(self) -> int:
        return sum(m.n_mics for m in self.mounts)

    def lower_limits(self) -> np.ndarray:
        return np.array([j.limits[0] for j in self.joints])

    def upper_limits(self) -> np.ndarray:
        return np.array([j.limits[1] for j in self.joints])

    def check_config(self, q: np.ndarray) -> np.ndarray:
        q = np.asarray(q, dtype=np.float64).reshape(-1)
        if q.shape[0] != self.n_joints:
            raise ValueError(f"expected {self.n_joints} joint angles, got {q.shape[0]}")
        lo, hi = self.lower_limits(), self.upper_limits()
        if np.any(q < lo - 1e-12) or np.any(q > hi + 1e-12):
            raise ValueError(f"joint vector {q} violates limits")
        return q

    @classmethod
    def from_mapping(cls, raw: dict) -> "KinematicChain":
        joints = [
            Joint(
                translation=j["translation"],
                axis=j["axis"],
                limits=tuple(j["limits"]),
            )
            for j in raw["joints"]
        ]
        mounts = [
            MicMount(
                link=int(m["link"]),
                translation=m.get("translation", (0.0, 0.0, 0.0)),
                mic_offsets=m["mics"],
            )
            for m in raw.get("mounts", [])
        ]
        return cls(
            joints=joints,
            mounts=mounts,
            ee_offset=raw.get("ee_offset", (0.0, 0.0, 0.0)),
            named_configs=raw.get("named_configs", {}),
            listening_template=raw.get("listening_template"),
            name=raw.get("name", "arm"),
        )

    @classmethod
    def from_file(cls, path) -> "KinematicChain":
        with open(path) as fh:
            raw = yaml.safe_load(fh)
        if not isinstance(raw, dict):
            raise ValueError(f"chain file {path} must contain a mapping")
        return cls.from_mapping(raw)

    @classmethod
    def default(cls) -> "KinematicChain":
        """The bundled 7-joint desk arm carrying four 4-mic clusters."""
        ref = importlib.resources.files("beamkin.data").joinpath("arm_default.yaml")
        raw = yaml.safe_load(ref.read_text())
        return cls.from_mapping(raw)


@dataclass
class FkResult:
    """World-frame pose of every array element for one joint vector."""

    mic_positions: np.ndarray  # (n_mics, 3)
    ee_position: np.ndarray
    ee_axis: np.ndarray  # unit pointing axis (local +z of the EE frame)
    ee_rotation: np.ndarray
    joint_origins: np.ndarray  # (n_joints, 3) rotation centers
    joint_axes: np.ndarray  # (n_joints, 3) world-frame rotation axes


def forward_kinematics(chain: KinematicChain, q: np.ndarray,
                       check_limits: bool = True) -> FkResult:
    """Compose the chain transforms and place every microphone.

    With check_limits (default) a joint vector outside the limits raises
    ValueError; pass False for diagnostics on hypothetical configurations.
    """
    if check_limits:
        q = chain.check_config(q)
    else:
        q = np.asarray(q, dtype=np.float64).reshape(chain.n_joints)

    n = chain.n_joints
    rotations = [np.eye(3)]
    origins = [np.zeros(3)]
    joint_origins = np.empty((n, 3))
    joint_axes = np.empty((n, 3))
    r = np.eye(3)
    o = np.zeros(3)
    for i, joint in enumerate(chain.joints):
        o = o + r @ joint.translation
        joint_origins[i] = o
        joint_axes[i] = r @ joint.axis
        r = r @ joint.rotation(q[i])
        rotations.append(r)
        origins.append(o)

    mics = np.empty((chain.n_mics, 3))
    row = 0
    for mount in chain.mounts:
        rm, om = rotations[mount.link], origins[mount.link]
        base = om + rm @ mount.translation
        for off in mount.mic_offsets:
            mics[row] = base + rm @ off
            row += 1

    ee_position = o + r @ chain.ee_offset
    ee_axis = r @ np.array([0.0, 0.0, 1.0])
    return FkResult(
        mic_positions=mics,
        ee_position=ee_position,
        ee_axis=ee_axis,
        ee_rotation=r,
        joint_origins=joint_origins,
        joint_axes=joint_axes,
    )


@dataclass
class TargetPose:
    """Where to listen: a point to aim at, from a standoff distance.

    The end effector is asked to sit at position - standoff * approach and
    to point its local +z along `approach`.  When `approach` is omitted it
    defaults to the ray from the arm base toward the target.
    """

    position: np.ndarray
    standoff: float = 0.0
    approach: np.ndarray | None = None

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64).reshape(3)
        if self.standoff < 0:
            raise ValueError(f"standoff must be nonnegative, got {self.standoff}")
        if self.approach is not None:
            a = np.asarray(self.approach, dtype=np.float64).reshape(3)
            norm = np.linalg.norm(a)
            if norm == 0:
                raise ValueError("approach axis must be nonzero")
            self.approach = a / norm

    def resolved(self) -> tuple[np.ndarray, np.ndarray]:
        """(desired EE position, desired pointing axis)."""
        if self.approach is not None:
            axis = self.approach
        else:
            norm = np.linalg.norm(self.position)
            if norm == 0:
                raise ValueError("target at the base origin has no approach ray")
            axis = self.position / norm
        return self.position - self.standoff * axis, axis


_EYE6 = np.eye(6)


@dataclass
class IkResult:
    """Best configuration found by the solver, with its residual history."""

    q: np.ndarray
    converged: bool
    pos_error: float
    axis_error_deg: float
    iterations: int
    residuals: np.ndarray  # weighted error norm after each accepted step


class _EePose:
    """EE-only kinematics state used inside the solver loop.

    Mic placement is a pure function of q and is not needed while
    iterating, so the solver walks the joint frames only.
    """

    __slots__ = ("ee_position", "ee_axis", "joint_origins", "joint_axes")

    def __init__(self, chain, q):
        n = chain.n_joints
        self.joint_origins = np.empty((n, 3))
        self.joint_axes = np.empty((n, 3))
        r = np.eye(3)
        o = np.zeros(3)
        for i, joint in enumerate(chain.joints):
            o = o + r @ joint.translation
            self.joint_origins[i] = o
            self.joint_axes[i] = r @ joint.axis
            r = r @ joint.rotation(q[i])
        self.ee_position = o + r @ chain.ee_offset
        self.ee_axis = r[:, 2].copy()


def _pose_error(chain, q, p_des, a_des, orient_weight):
    fk = _EePose(chain, q)
    e_pos = p_des - fk.ee_position
    e_rot = _cross3(fk.ee_axis, a_des)
    err = np.concatenate([e_pos, orient_weight * e_rot])
    return fk, e_pos, e_rot, err


def solve_ik(
    chain: KinematicChain,
    target: TargetPose,
    q0: np.ndarray,
    max_iter: int = 200,
    damping: float = 0.05,
    step_clamp: float = 0.2,
    pos_tol: float = 1e-3,
    axis_tol_deg: float = 0.5,
    orient_weight: float = 0.3,
) -> IkResult:
    """Damped least-squares IK on position plus pointing direction.

    Each iteration solves (J J^T + lambda^2 I) y = e for the 6-vector of
    position and axis-alignment error, steps dq = J^T y clamped to
    `step_clamp` radians per joint, and projects onto the joint limits.
    Steps that do not reduce the weighted residual are rejected and retried
    with a larger damping factor, so the residual trace of accepted states
    never increases.  Always returns the best configuration seen; for an
    unreachable target that is the closest boundary pose and `converged`
    stays False.
    """
    p_des, a_des = target.resolved()
    lo, hi = chain.lower_limits(), chain.upper_limits()
    q = np.clip(np.asarray(q0, dtype=np.float64).reshape(chain.n_joints), lo, hi)

    fk, e_pos, e_rot, err = _pose_error(chain, q, p_des, a_des, orient_weight)
    norm = np.linalg.norm(err)
    residuals = [norm]
    best_q, best_norm = q.copy(), norm
    lam = damping
    converged = False
    iterations = 0

    for iterations in range(1, max_iter + 1):
        pos_error = np.linalg.norm(e_pos)
        axis_error = np.degrees(
            np.arctan2(np.linalg.norm(e_rot), float(fk.ee_axis @ a_des))
        )
        if pos_error <= pos_tol and axis_error <= axis_tol_deg:
            converged = True
            break

        # geometric Jacobian for a revolute chain
        jac = np.empty((6, chain.n_joints))
        for i in range(chain.n_joints):
            w = fk.joint_axes[i]
            jac[:3, i] = _cross3(w, fk.ee_position - fk.joint_origins[i])
            jac[3:, i] = orient_weight * w
        jjt = jac @ jac.T
        step = jac.T @ np.linalg.solve(jjt + lam**2 * _EYE6, err)
        peak = np.max(np.abs(step))
        if peak > step_clamp:
            step *= step_clamp / peak

        q_try = np.clip(q + step, lo, hi)
        fk_try, e_pos_try, e_rot_try, err_try = _pose_error(
            chain, q_try, p_des, a_des, orient_weight
        )
        norm_try = np.linalg.norm(err_try)
        if norm_try < norm:
            q, fk, e_pos, e_rot, err, norm = (
                q_try, fk_try, e_pos_try, e_rot_try, err_try, norm_try,
            )
            residuals.append(norm)
            if norm < best_norm:
                best_q, best_norm = q.copy(), norm
            lam = max(damping, lam * 0.5)
        else:
            lam *= 4.0
            if lam > 1e8:  # stalled at a local minimum or workspace boundary
                break

    fk, e_pos, e_rot, _ = _pose_error(chain, best_q, p_des, a_des, orient_weight)
    pos_error = float(np.linalg.norm(e_pos))
    axis_error = float(
        np.degrees(np.arctan2(np.linalg.norm(e_rot), float(fk.ee_axis @ a_des)))
    )
    converged = pos_error <= pos_tol and axis_error <= axis_tol_deg
    return IkResult(
        q=best_q,
        converged=converged,
        pos_error=pos_error,
        axis_error_deg=axis_error,
        iterations=iterations,
        residuals=np.asarray(residuals),
    )


SEED_SPACING_DEG = 45.0


def build_seed_table(chain: KinematicChain) -> dict[float, np.ndarray]:
    """Aiming seeds: the listening template yawed to each 45 degree sector."""
    if chain.listening_template is None:
        raise ValueError("chain has no listening_template")
    lo, hi = chain.lower_limits(), chain.upper_limits()
    table = {}
    for az in np.arange(0.0, 360.0, SEED_SPACING_DEG):
        q = chain.listening_template.copy()
        yaw = np.deg2rad(((az + 180.0) % 360.0) - 180.0)  # wrap to (-pi, pi]
        q[0] = np.clip(yaw, lo[0], hi[0])
        table[float(az)] = np.clip(q, lo, hi)
    return table


def listening_config(
    chain: KinematicChain,
    azimuth_deg: float,
    target_position: np.ndarray,
    standoff: float = 0.3,
    **ik_kwargs,
) -> IkResult:
    """Aim the end-effector cluster at a target from a standoff distance.

    The solve is seeded from the tabulated pose whose yaw sector is
    circularly closest to `azimuth_deg` (normally the localization
    estimate), which keeps the solver in the correct basin.
    """
    table = build_seed_table(chain)
    seeds = np.array(sorted(table))
    nearest = seeds[np.argmin(np.abs(circ_diff_deg(seeds, azimuth_deg)))]
    target = TargetPose(position=target_position, standoff=standoff)
    return solve_ik(chain, target, table[float(nearest)], **ik_kwargs)


@dataclass
class TargetOracle:
    """Simulated target-position measurement with isotropic Gaussian noise."""

    noise_std: float = 0.02

    def observe(self, true_position: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        true_position = np.asarray(true_position, dtype=np.float64).reshape(3)
        if self.noise_std < 0:
            raise ValueError("noise_std must be nonnegative")
        return true_position + rng.normal(0.0, self.noise_std, size=3)
