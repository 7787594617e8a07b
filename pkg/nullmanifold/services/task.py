"""Residual maps r(q) = f(q) - p* over a chain, and task families."""
from dataclasses import dataclass
from typing import List, Optional, Union
import logging

import numpy as np
from scipy.spatial.transform import Rotation

from nullmanifold.errors import InputError
from nullmanifold.models import FamilySpec, PoseSpec, TaskSpec
from nullmanifold.services.kinematics import (
    Chain,
    KinematicChain,
    PlanarChain,
    Pose,
    fk_and_jacobian_chain,
    fk_chain,
    fk_planar,
    jacobian_planar,
    se3_error,
    so3_left_jacobian_inverse,
)

logger = logging.getLogger(__name__)

TASK_DIMENSIONS = {
    "planar_position": 2,
    "planar_x": 1,
    "position3": 3,
    "pose6": 6,
    "position_fixed_orientation": 6,
}
PLANAR_KINDS = ("planar_position", "planar_x")


def downward_rotation(yaw: float = 0.0) -> np.ndarray:
    """Tool z along world -z; at yaw 0 the tool x axis is world +x."""
    return Rotation.from_euler("z", yaw).as_matrix() @ np.diag([1.0, -1.0, -1.0])


@dataclass(frozen=True)
class TaskInstance:
    chain: Chain
    kind: str
    target: Union[np.ndarray, Pose]
    family_coordinate: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in TASK_DIMENSIONS:
            raise InputError(f"unknown task kind '{self.kind}'")
        planar_chain = isinstance(self.chain, PlanarChain)
        if planar_chain != (self.kind in PLANAR_KINDS):
            raise InputError(f"task kind '{self.kind}' does not fit a {'planar' if planar_chain else 'spatial'} chain")
        if isinstance(self.target, Pose):
            if self.kind not in ("pose6", "position_fixed_orientation"):
                raise InputError(f"task kind '{self.kind}' takes a vector target")
        else:
            target = np.array(self.target, dtype=float).reshape(-1)
            if target.size != self.dimension:
                raise InputError(f"task '{self.kind}' needs a {self.dimension}-vector target, got {target.size}")
            target.setflags(write=False)
            object.__setattr__(self, "target", target)
        if self.family_coordinate is not None:
            fc = np.array(self.family_coordinate, dtype=float).reshape(-1)
            fc.setflags(write=False)
            object.__setattr__(self, "family_coordinate", fc)

    @property
    def dimension(self) -> int:
        return TASK_DIMENSIONS[self.kind]

    @property
    def n_joints(self) -> int:
        return self.chain.n_joints

    @property
    def redundancy(self) -> int:
        return self.n_joints - self.dimension


def residual(task: TaskInstance, q) -> np.ndarray:
    """Planar kinds return fk - target; pose kinds return se3_error(fk, target)."""
    if task.kind == "planar_position":
        return fk_planar(task.chain, q) - task.target
    if task.kind == "planar_x":
        return fk_planar(task.chain, q)[:1] - task.target
    if task.kind == "position3":
        return fk_chain(task.chain, q).translation - task.target
    return se3_error(fk_chain(task.chain, q), task.target)


def residual_jacobian(task: TaskInstance, q) -> np.ndarray:
    if task.kind == "planar_position":
        return jacobian_planar(task.chain, q)
    if task.kind == "planar_x":
        return jacobian_planar(task.chain, q)[:1]
    ee, J = fk_and_jacobian_chain(task.chain, q)
    if task.kind == "position3":
        return J[:3]
    # derivative of (t* - t, log(R^T R*)) along the joint velocities
    phi = se3_error(ee, task.target)[3:]
    angular = so3_left_jacobian_inverse(phi) @ ee.rotation.T @ J[3:]
    return -np.vstack([J[:3], angular])


def residual_and_jacobian(task: TaskInstance, q):
    if task.kind in PLANAR_KINDS or task.kind == "position3":
        return residual(task, q), residual_jacobian(task, q)
    ee, J = fk_and_jacobian_chain(task.chain, q)
    r = se3_error(ee, task.target)
    angular = so3_left_jacobian_inverse(r[3:]) @ ee.rotation.T @ J[3:]
    return r, -np.vstack([J[:3], angular])


# --- task files ---

def task_from_spec(chain: Chain, spec: TaskSpec) -> TaskInstance:
    if spec.kind in ("pose6", "position_fixed_orientation"):
        if isinstance(spec.target, PoseSpec):
            target = Pose.from_rpy(spec.target.translation, spec.target.rotation_rpy)
        elif spec.orientation == "down" and len(spec.target) == 3:
            target = Pose(downward_rotation(spec.yaw), spec.target)
        else:
            raise InputError(f"task '{spec.kind}' needs a pose target or a position with orientation 'down'")
        return TaskInstance(chain, spec.kind, target)
    if isinstance(spec.target, PoseSpec):
        raise InputError(f"task '{spec.kind}' takes a vector target")
    return TaskInstance(chain, spec.kind, np.array(spec.target, dtype=float))


@dataclass(frozen=True)
class TaskFamily:
    kind: str
    start: np.ndarray
    stop: np.ndarray
    z: Optional[float] = None
    counts: tuple = (30,)
    rotation: Optional[np.ndarray] = None

    @classmethod
    def from_spec(cls, spec: FamilySpec, planar: bool = False) -> "TaskFamily":
        rotation = None if planar else downward_rotation(spec.yaw)
        if spec.family == "line":
            start, stop = np.array(spec.from_, dtype=float), np.array(spec.to, dtype=float)
            counts = (spec.count,)
        else:
            start, stop = np.array(spec.min, dtype=float), np.array(spec.max, dtype=float)
            counts = tuple(spec.counts)
        if not planar and spec.z is None and start.size != 3:
            raise InputError("spatial families need a z height or 3D endpoints")
        return cls(spec.family, start, stop, spec.z, counts, rotation)


def _lift(point: np.ndarray, z: Optional[float]) -> np.ndarray:
    if z is None:
        return point
    return np.concatenate([point[:2], [z]])


def discretize_family(chain: Chain, family: TaskFamily) -> List[TaskInstance]:
    if any(c < 2 for c in family.counts):
        raise InputError("family discretization counts must be >= 2")
    planar = isinstance(chain, PlanarChain)
    if family.kind == "line":
        if np.allclose(family.start, family.stop):
            raise InputError("line family endpoints must differ")
        ts = np.linspace(0.0, 1.0, family.counts[0])
        points = [family.start + t * (family.stop - family.start) for t in ts]
        # the last point is exactly the endpoint
        points[-1] = family.stop.copy()
    elif family.kind == "rectangle":
        if not np.all(family.start < family.stop):
            raise InputError("rectangle bounds must satisfy min < max")
        xs = np.linspace(family.start[0], family.stop[0], family.counts[0])
        ys = np.linspace(family.start[1], family.stop[1], family.counts[1])
        points = [np.array([x, y]) for x in xs for y in ys]
    else:
        raise InputError(f"unknown family kind '{family.kind}'")

    instances = []
    for p in points:
        if planar:
            if p.size != 2:
                raise InputError("planar families take 2D points")
            instances.append(TaskInstance(chain, "planar_position", p, family_coordinate=p))
        else:
            position = _lift(p, family.z)
            target = Pose(family.rotation, position)
            instances.append(TaskInstance(chain, "position_fixed_orientation", target, family_coordinate=position))
    logger.info(f"Discretized {family.kind} family into {len(instances)} task instances")
    return instances
