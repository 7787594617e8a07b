"""Forward kinematics, Jacobians and SE(3) errors.

Two robot families are supported: a planar N-link arm described by its link
lengths, and a spatial serial chain described per joint by a rotation axis and
the fixed parent-to-joint transform (no DH convention involved).
"""
from dataclasses import dataclass, field
from typing import List, Optional, Tuple, Union
import logging

import numpy as np
from scipy.spatial.transform import Rotation

from nullmanifold.errors import InputError
from nullmanifold.models import ChainRobotSpec, OriginSpec, PlanarRobotSpec

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Pose:
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation", _frozen(self.rotation).reshape(3, 3))
        object.__setattr__(self, "translation", _frozen(self.translation).reshape(3))

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_rpy(cls, translation, rpy) -> "Pose":
        # URDF convention: fixed-axis roll, pitch, yaw
        return cls(Rotation.from_euler("xyz", rpy).as_matrix(), translation)

    @classmethod
    def from_spec(cls, spec: OriginSpec) -> "Pose":
        return cls.from_rpy(spec.translation, spec.rotation_rpy)


@dataclass(frozen=True)
class PlanarChain:
    link_lengths: np.ndarray
    ready: Optional[np.ndarray] = None
    name: str = "planar"

    def __post_init__(self):
        lengths = _frozen(self.link_lengths).reshape(-1)
        if lengths.size < 1 or np.any(lengths <= 0):
            raise InputError("planar chain needs at least one positive link length")
        object.__setattr__(self, "link_lengths", lengths)
        if self.ready is not None:
            object.__setattr__(self, "ready", _frozen(self.ready).reshape(-1))

    @property
    def n_joints(self) -> int:
        return self.link_lengths.size


@dataclass(frozen=True)
class Joint:
    axis: np.ndarray
    origin: Pose = field(default_factory=Pose.identity)

    def __post_init__(self):
        axis = np.array(self.axis, dtype=float).reshape(3)
        norm = np.linalg.norm(axis)
        if norm == 0:
            raise InputError("joint axis must be nonzero")
        # normalized on load so every stored axis is unit to rounding
        object.__setattr__(self, "axis", _frozen(axis / norm))


@dataclass(frozen=True)
class KinematicChain:
    joints: Tuple[Joint, ...]
    tool: Pose = field(default_factory=Pose.identity)
    ready: Optional[np.ndarray] = None
    name: str = "chain"

    def __post_init__(self):
        object.__setattr__(self, "joints", tuple(self.joints))
        if len(self.joints) < 1:
            raise InputError("kinematic chain needs at least one joint")
        if self.ready is not None:
            object.__setattr__(self, "ready", _frozen(self.ready).reshape(-1))

    @property
    def n_joints(self) -> int:
        return len(self.joints)

    @property
    def axes(self) -> np.ndarray:
        return np.stack([j.axis for j in self.joints])


Chain = Union[PlanarChain, KinematicChain]


def chain_from_spec(spec: Union[PlanarRobotSpec, ChainRobotSpec]) -> Chain:
    if isinstance(spec, PlanarRobotSpec):
        return PlanarChain(spec.link_lengths, ready=spec.ready, name=spec.name or "planar")
    joints = [Joint(j.axis, Pose.from_spec(j.origin)) for j in spec.joints]
    chain = KinematicChain(tuple(joints), Pose.from_spec(spec.tool), ready=spec.ready, name=spec.name or "chain")
    if chain.ready is not None and chain.ready.size != chain.n_joints:
        raise InputError(f"ready pose has {chain.ready.size} entries, chain has {chain.n_joints} joints")
    logger.info(f"Loaded chain '{chain.name}' with {chain.n_joints} joints")
    return chain


def _check_q(q, n: int) -> np.ndarray:
    q = np.asarray(q, dtype=float).reshape(-1)
    if q.size != n:
        raise InputError(f"configuration has {q.size} entries, expected {n}")
    return q


def wrap_angles(q) -> np.ndarray:
    """Map every angle into [-pi, pi)."""
    q = np.asarray(q, dtype=float)
    wrapped = np.mod(q + np.pi, TWO_PI) - np.pi
    # np.mod can round up to exactly 2*pi for tiny negative inputs
    wrapped = np.where(wrapped >= np.pi, wrapped - TWO_PI, wrapped)
    # in-range angles pass through bit-exact
    return np.where((q >= -np.pi) & (q < np.pi), q, wrapped)


def wrapped_difference(a, b) -> np.ndarray:
    """Per-axis shortest signed difference a - b on the torus."""
    return wrap_angles(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))


def wrapped_distance(a, b) -> np.ndarray:
    return np.linalg.norm(wrapped_difference(a, b), axis=-1)


# --- planar arm ---

def fk_planar(chain: PlanarChain, q) -> np.ndarray:
    q = _check_q(q, chain.n_joints)
    theta = np.cumsum(q)
    l = chain.link_lengths
    return np.array([l @ np.cos(theta), l @ np.sin(theta)])


def jacobian_planar(chain: PlanarChain, q) -> np.ndarray:
    q = _check_q(q, chain.n_joints)
    theta = np.cumsum(q)
    l = chain.link_lengths
    # column j sums the links from j to the tip
    xs = np.cumsum((l * np.cos(theta))[::-1])[::-1]
    ys = np.cumsum((l * np.sin(theta))[::-1])[::-1]
    return np.vstack([-ys, xs])


# --- spatial chain ---

def _chain_frames(chain: KinematicChain, q) -> Tuple[np.ndarray, np.ndarray, Pose]:
    """World joint origins, world joint axes and the tool pose."""
    q = _check_q(q, chain.n_joints)
    axes = chain.axes
    joint_rot = Rotation.from_rotvec(axes * q[:, None]).as_matrix()
    R = np.eye(3)
    t = np.zeros(3)
    origins = np.empty((chain.n_joints, 3))
    world_axes = np.empty((chain.n_joints, 3))
    for i, joint in enumerate(chain.joints):
        t = R @ joint.origin.translation + t
        R = R @ joint.origin.rotation
        origins[i] = t
        world_axes[i] = R @ joint.axis
        R = R @ joint_rot[i]
    ee = Pose(R @ chain.tool.rotation, R @ chain.tool.translation + t)
    return origins, world_axes, ee


def fk_chain(chain: KinematicChain, q) -> Pose:
    return _chain_frames(chain, q)[2]


def fk_and_jacobian_chain(chain: KinematicChain, q) -> Tuple[Pose, np.ndarray]:
    """Tool pose and geometric Jacobian, rows ordered (linear, angular)."""
    origins, world_axes, ee = _chain_frames(chain, q)
    linear = np.cross(world_axes, ee.translation - origins)
    return ee, np.vstack([linear.T, world_axes.T])


def jacobian_chain(chain: KinematicChain, q) -> np.ndarray:
    return fk_and_jacobian_chain(chain, q)[1]


# --- SE(3) error ---

def rotation_log(R: np.ndarray) -> np.ndarray:
    """Axis-angle vector of a rotation matrix (zero below 1e-12 rad)."""
    rotvec = Rotation.from_matrix(R).as_rotvec()
    if np.linalg.norm(rotvec) < 1e-12:
        return np.zeros(3)
    return rotvec


def se3_error(current: Pose, target: Pose) -> np.ndarray:
    """(t_target - t_current, log(R_current^T R_target)); zero iff the poses agree."""
    angular = rotation_log(current.rotation.T @ target.rotation)
    return np.concatenate([target.translation - current.translation, angular])


def skew(v) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def so3_left_jacobian_inverse(phi) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    theta = np.linalg.norm(phi)
    W = skew(phi)
    if theta < 1e-6:
        coeff = 1.0 / 12.0
    else:
        # (1 + cos) / sin written as cot(theta / 2) stays finite at theta = pi
        coeff = 1.0 / theta**2 - 1.0 / (2.0 * theta * np.tan(0.5 * theta))
    return np.eye(3) - 0.5 * W + coeff * (W @ W)
