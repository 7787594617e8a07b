import numpy as np
import pytest

from nullmanifold.errors import InputError
from nullmanifold.models import FamilySpec, TaskSpec
from nullmanifold.services.kinematics import Pose, fk_chain
from nullmanifold.services.task import (
    TaskFamily,
    TaskInstance,
    discretize_family,
    downward_rotation,
    residual,
    residual_and_jacobian,
    residual_jacobian,
    task_from_spec,
)


def _fd_jacobian(task, q, h=1e-6):
    return np.column_stack([
        (residual(task, q + h * e) - residual(task, q - h * e)) / (2 * h) for e in np.eye(q.size)
    ])


def test_dimensions_and_redundancy(planar_chain, panda_chain):
    planar = TaskInstance(planar_chain, "planar_position", [1.5, 0.5])
    assert planar.dimension == 2 and planar.redundancy == 1
    assert TaskInstance(planar_chain, "planar_x", [1.0]).redundancy == 2
    pose = TaskInstance(panda_chain, "pose6", fk_chain(panda_chain, panda_chain.ready))
    assert pose.dimension == 6 and pose.redundancy == 1


def test_task_kind_must_fit_chain(planar_chain, panda_chain):
    with pytest.raises(InputError):
        TaskInstance(panda_chain, "planar_position", [1.0, 0.0])
    with pytest.raises(InputError):
        TaskInstance(planar_chain, "position3", [1.0, 0.0, 0.0])
    with pytest.raises(InputError):
        TaskInstance(planar_chain, "planar_position", [1.0, 0.0, 0.0])


def test_planar_residual_vanishes_on_solution(planar_chain):
    task = TaskInstance(planar_chain, "planar_position", [2.0, 1.0])
    assert np.allclose(residual(task, [np.pi / 2, -np.pi / 2, 0.0]), 0.0, atol=1e-15)


def test_planar_residual_jacobian(planar_chain):
    rng = np.random.default_rng(2)
    for kind, target in (("planar_position", [1.5, 0.5]), ("planar_x", [1.0])):
        task = TaskInstance(planar_chain, kind, target)
        for q in rng.uniform(-np.pi, np.pi, (100, 3)):
            assert np.max(np.abs(residual_jacobian(task, q) - _fd_jacobian(task, q))) < 1e-7


def test_pose_residual_vanishes_at_target(panda_chain):
    q = np.asarray(panda_chain.ready)
    task = TaskInstance(panda_chain, "pose6", fk_chain(panda_chain, q))
    assert np.linalg.norm(residual(task, q)) < 1e-12


@pytest.mark.parametrize("kind", ["pose6", "position3", "position_fixed_orientation"])
def test_spatial_residual_jacobian_matches_finite_differences(panda_chain, kind):
    rng = np.random.default_rng(3)
    for _ in range(100):
        q = rng.uniform(-np.pi, np.pi, 7)
        target_pose = fk_chain(panda_chain, q + rng.uniform(-0.3, 0.3, 7))
        target = target_pose.translation if kind == "position3" else target_pose
        task = TaskInstance(panda_chain, kind, target)
        assert np.max(np.abs(residual_jacobian(task, q) - _fd_jacobian(task, q))) < 1e-5
        r, J = residual_and_jacobian(task, q)
        assert np.allclose(r, residual(task, q))
        assert np.allclose(J, residual_jacobian(task, q))


def test_fixed_orientation_residual_vanishes_at_target(panda_chain):
    q = np.asarray(panda_chain.ready) + 0.1
    task = TaskInstance(panda_chain, "position_fixed_orientation", fk_chain(panda_chain, q))
    assert task.dimension == 6
    assert np.linalg.norm(residual(task, q)) < 1e-12


def test_pose_residual_linearization_error_is_second_order(panda_chain):
    rng = np.random.default_rng(5)
    q = rng.uniform(-np.pi, np.pi, 7)
    task = TaskInstance(panda_chain, "pose6", fk_chain(panda_chain, q + rng.uniform(-0.3, 0.3, 7)))
    r0, J = residual_and_jacobian(task, q)
    direction = rng.normal(size=7)
    direction /= np.linalg.norm(direction)

    def linearization_error(step):
        delta = step * direction
        return np.linalg.norm(residual(task, q + delta) - r0 - J @ delta)

    ratio = linearization_error(1e-2) / linearization_error(5e-3)
    assert 3.0 < ratio < 5.0


def test_downward_rotation():
    assert np.allclose(downward_rotation(0.0), np.diag([1.0, -1.0, -1.0]))
    R = downward_rotation(np.pi / 2)
    assert np.allclose(R[:, 2], [0, 0, -1])
    assert np.allclose(R[:, 0], [0, 1, 0])


def test_task_from_spec_down_orientation(panda_chain):
    spec = TaskSpec(kind="pose6", target=[0.35, 0.0, 0.45], orientation="down")
    task = task_from_spec(panda_chain, spec)
    assert isinstance(task.target, Pose)
    assert np.allclose(task.target.rotation, np.diag([1.0, -1.0, -1.0]))


def test_task_from_spec_requires_orientation(panda_chain):
    with pytest.raises(InputError):
        task_from_spec(panda_chain, TaskSpec(kind="pose6", target=[0.35, 0.0, 0.45]))


def test_line_family_discretization(panda_chain):
    spec = FamilySpec.model_validate({"family": "line", "from": [-0.5, 0.45], "to": [0.5, 0.45], "z": 0.3, "count": 30})
    tasks = discretize_family(panda_chain, TaskFamily.from_spec(spec))
    assert len(tasks) == 30
    assert all(t.kind == "position_fixed_orientation" for t in tasks)
    assert np.array_equal(tasks[0].target.translation, [-0.5, 0.45, 0.3])
    assert np.array_equal(tasks[-1].target.translation, [0.5, 0.45, 0.3])
    assert np.array_equal(tasks[-1].family_coordinate, [0.5, 0.45, 0.3])


def test_rectangle_family_covers_corners(panda_chain):
    spec = FamilySpec(family="rectangle", min=[0.4, -0.4], max=[0.5, 0.4], z=0.3, counts=[3, 5])
    tasks = discretize_family(panda_chain, TaskFamily.from_spec(spec))
    assert len(tasks) == 15
    positions = np.array([t.target.translation for t in tasks])
    for corner in ([0.4, -0.4, 0.3], [0.4, 0.4, 0.3], [0.5, -0.4, 0.3], [0.5, 0.4, 0.3]):
        assert np.any(np.all(np.isclose(positions, corner), axis=1))


def test_planar_line_family(planar_chain):
    spec = FamilySpec.model_validate({"family": "line", "from": [1.0, -0.5], "to": [1.0, 0.5], "count": 5})
    tasks = discretize_family(planar_chain, TaskFamily.from_spec(spec, planar=True))
    assert [t.kind for t in tasks] == ["planar_position"] * 5
    assert np.allclose(tasks[2].target, [1.0, 0.0])


def test_family_count_below_two_rejected(panda_chain):
    family = TaskFamily("line", np.array([0.0, 0.4, 0.3]), np.array([0.1, 0.4, 0.3]), counts=(1,), rotation=np.eye(3))
    with pytest.raises(InputError):
        discretize_family(panda_chain, family)
    with pytest.raises(ValueError):
        FamilySpec.model_validate({"family": "line", "from": [0, 0], "to": [1, 0], "count": 1})


def test_spatial_family_needs_height():
    spec = FamilySpec.model_validate({"family": "line", "from": [-0.5, 0.45], "to": [0.5, 0.45]})
    with pytest.raises(InputError):
        TaskFamily.from_spec(spec)
