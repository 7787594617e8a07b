import numpy as np
import pytest

from nullmanifold.errors import ConvergenceError, DegenerateTaskError, DimensionError, InputError, SamplingError
from nullmanifold.models import TraversalParams
from nullmanifold.services.kinematics import fk_planar, wrapped_distance
from nullmanifold.services.metrics import manifold_arc_length
from nullmanifold.services.sampling import (
    SampleSet,
    gauss_newton_solve,
    newton_traverse,
    null_space_basis,
    random_ik_sample,
    sample_components,
    sample_family,
    zigzag_correction,
    zigzag_traverse,
)
from nullmanifold.services.task import TaskInstance, residual, residual_jacobian


def _closed(samples: SampleSet) -> bool:
    return samples.complete and not samples.warnings


# --- Gauss-Newton ---

def test_gauss_newton_keeps_solution(planar_chain):
    task = TaskInstance(planar_chain, "planar_position", [2.0, 1.0])
    q0 = np.array([np.pi / 2, -np.pi / 2, 0.0])
    assert np.allclose(gauss_newton_solve(task, q0), q0)


def test_gauss_newton_converges(planar_chain):
    task = TaskInstance(planar_chain, "planar_position", [2.0, 0.0])
    q = gauss_newton_solve(task, [0.1, 0.1, 0.1], eps=1e-8)
    assert np.linalg.norm(fk_planar(planar_chain, q) - [2.0, 0.0]) <= 1e-8
    assert np.all(q >= -np.pi) and np.all(q < np.pi)


def test_gauss_newton_unreachable_target(planar_chain):
    task = TaskInstance(planar_chain, "planar_position", [4.0, 0.0])
    with pytest.raises(ConvergenceError) as info:
        gauss_newton_solve(task, [0.1, 0.1, 0.1])
    # the workspace boundary is at distance 1 from the target
    assert info.value.residual_norm >= 1.0 - 1e-9


# --- null space ---

def test_null_space_basis_examples(planar_chain):
    basis = null_space_basis(np.array([[1.0, 0, 0], [0, 1.0, 0]]))
    assert basis.shape == (3, 1)
    assert np.allclose(np.abs(basis[:, 0]), [0, 0, 1])

    task = TaskInstance(planar_chain, "planar_position", [1.5, 0.5])
    J = residual_jacobian(task, [0.3, 0.4, 0.5])
    v = null_space_basis(J)[:, 0]
    assert np.linalg.norm(J @ v) <= 1e-12
    assert np.linalg.norm(v) == pytest.approx(1.0)

    assert null_space_basis(np.array([[0.0, 0, 0], [3.0, 2, 1]])).shape[1] == 2


def test_null_space_basis_full_rank_raises():
    with pytest.raises(DegenerateTaskError):
        null_space_basis(np.eye(3))


# --- Newton traversal ---

def test_newton_traversal_closes_loop(planar_loop):
    samples = planar_loop
    assert _closed(samples)
    assert samples.method == "newton" and samples.beta == 0.5
    assert np.all(samples.residual_norms <= 1e-6)
    steps = wrapped_distance(samples.samples[1:], samples.samples[:-1])
    assert np.all(steps >= 0.25) and np.all(steps <= 0.75)
    assert wrapped_distance(samples.samples[0], samples.samples[-1]) <= 1.0
    assert np.all(samples.samples >= -np.pi) and np.all(samples.samples < np.pi)


def test_residual_norms_recomputable(planar_task, planar_loop):
    recomputed = [np.linalg.norm(residual(planar_task, q)) for q in planar_loop.samples]
    assert np.allclose(recomputed, planar_loop.residual_norms, atol=1e-12, rtol=0)


def test_tangent_directions_are_continuous(planar_loop):
    t = planar_loop.tangents
    assert len(t) == len(planar_loop) - 1
    assert np.all(np.einsum("ij,ij->i", t[1:], t[:-1]) > 0)


def test_sample_count_matches_arc_length(planar_task, planar_loop):
    oracle = random_ik_sample(planar_task, 2000, seed=7)
    expected = manifold_arc_length(oracle) / 0.5
    assert 0.6 * expected <= len(planar_loop) <= 1.4 * expected


def test_tangent_step_error_is_second_order(planar_task, planar_loop):
    errors = []
    for beta in (0.5, 0.25, 0.125):
        errors.append(np.mean([
            np.linalg.norm(residual(planar_task, q + beta * v))
            for q, v in zip(planar_loop.samples[:-1], planar_loop.tangents)
        ]))
    for coarse, fine in zip(errors, errors[1:]):
        assert 2.0 <= coarse / fine <= 8.0


def test_traversal_is_deterministic(planar_task, planar_start, planar_loop):
    again = newton_traverse(planar_task, planar_start, TraversalParams(beta=0.5))
    assert np.array_equal(again.samples, planar_loop.samples)


def test_traversal_requires_start_on_manifold(planar_task):
    with pytest.raises(InputError):
        newton_traverse(planar_task, [0.0, 0.0, 0.0], TraversalParams())


def test_traversal_requires_one_redundant_dof(planar_chain):
    task = TaskInstance(planar_chain, "planar_x", [1.0])
    q0 = gauss_newton_solve(task, [0.3, 0.4, 0.5])
    with pytest.raises(DimensionError):
        newton_traverse(task, q0, TraversalParams())


def test_joint_box_reverses_once(planar_task, planar_start):
    lower = (planar_start - 0.3).tolist()
    upper = (planar_start + 0.3).tolist()
    samples = newton_traverse(planar_task, planar_start, TraversalParams(beta=0.1, lower=lower, upper=upper))
    assert not samples.complete
    assert any("joint box" in w for w in samples.warnings)
    assert np.all(samples.samples >= np.array(lower)) and np.all(samples.samples <= np.array(upper))
    steps = wrapped_distance(samples.samples[1:], samples.samples[:-1])
    assert np.all(steps <= 0.15)
    # the path runs through the seed
    assert np.min(wrapped_distance(samples.samples, planar_start)) == 0.0
    assert 0 < np.argmin(wrapped_distance(samples.samples, planar_start)) < len(samples) - 1


def test_restarts_add_nothing_on_connected_manifold(planar_task, planar_start, planar_loop):
    samples = sample_components(planar_task, planar_start, TraversalParams(beta=0.5), restarts=5)
    assert len(samples) == len(planar_loop)


# --- zigzag ---

def test_zigzag_traversal_is_coarser_than_newton(planar_task, planar_start, planar_loop):
    samples = zigzag_traverse(planar_task, planar_start, TraversalParams(beta=0.5, gamma=1.5))
    assert _closed(samples)
    assert samples.method == "zigzag"
    assert np.mean(planar_loop.residual_norms) < np.mean(samples.residual_norms) <= 1e-2


def test_zigzag_correction_on_manifold_takes_no_step(planar_task, planar_start):
    q, steps = zigzag_correction(planar_task, planar_start, TraversalParams())
    assert steps == 0
    assert np.array_equal(q, planar_start)


def test_zigzag_correction_reduces_residual(planar_task, planar_loop):
    params = TraversalParams()
    q = planar_loop.samples[2]
    v = planar_loop.tangents[2]
    before = np.linalg.norm(residual(planar_task, q + 0.5 * v))
    corrected, steps = zigzag_correction(planar_task, q + 0.5 * v, params)
    assert 1 <= steps <= params.max_proj_iters
    assert np.linalg.norm(residual(planar_task, corrected)) < before


# --- random IK ---

def test_random_ik_samples(planar_task):
    samples = random_ik_sample(planar_task, 15, seed=3)
    assert len(samples) == 15 and samples.method == "random_ik"
    assert np.all(samples.residual_norms <= 1e-6)
    assert np.array_equal(samples.samples, random_ik_sample(planar_task, 15, seed=3).samples)


def test_random_ik_budget_exhausted(planar_chain):
    task = TaskInstance(planar_chain, "planar_position", [4.0, 0.0])
    with pytest.raises(SamplingError):
        random_ik_sample(task, 2)


def test_random_ik_rejects_zero_count(planar_task):
    with pytest.raises(InputError):
        random_ik_sample(planar_task, 0)


# --- families ---

def test_single_instance_family_matches_traversal(planar_chain, planar_start):
    task = TaskInstance(planar_chain, "planar_position", [1.5, 0.5], family_coordinate=[1.5, 0.5])
    params = TraversalParams(beta=0.5)
    family = sample_family([task], params, q_start=planar_start)
    direct = newton_traverse(task, planar_start, params)
    assert np.array_equal(family.samples, direct.samples)
    assert family.family_dim == 2
    assert np.all(family.family_coordinates == [1.5, 0.5])


def test_planar_line_family(planar_chain, planar_start):
    tasks = [
        TaskInstance(planar_chain, "planar_position", [1.2, y], family_coordinate=[1.2, y])
        for y in np.linspace(-0.5, 0.5, 5)
    ]
    family = sample_family(tasks, TraversalParams(beta=0.5), q_start=planar_start)
    assert family.complete
    assert np.all(family.residual_norms <= 1e-6)
    assert set(np.round(family.family_coordinates[:, 1], 6)) == set(np.round(np.linspace(-0.5, 0.5, 5), 6))


def test_family_failures_are_recorded(planar_chain, planar_start):
    tasks = [
        TaskInstance(planar_chain, "planar_position", [1.5, 0.5], family_coordinate=[0.0]),
        TaskInstance(planar_chain, "planar_position", [4.0, 0.0], family_coordinate=[1.0]),
    ]
    family = sample_family(tasks, TraversalParams(beta=0.5), q_start=planar_start)
    assert not family.complete
    assert np.all(family.family_coordinates == 0.0)


def test_fully_failed_family_raises(planar_chain):
    tasks = [TaskInstance(planar_chain, "planar_position", [4.0, y]) for y in (0.0, 0.5)]
    with pytest.raises(SamplingError):
        sample_family(tasks, TraversalParams())


def test_concatenate_rejects_mixed_labels():
    a = SampleSet(np.zeros((1, 2)), [0.0], "newton", family_coordinates=[[0.0]])
    b = SampleSet(np.zeros((1, 2)), [0.0], "newton")
    with pytest.raises(InputError):
        SampleSet.concatenate([a, b])
