"""Sampling configurations on and near a solution manifold.

Gauss-Newton finds a first solution; traversal then alternates tangent steps
along the Jacobian null space with a correction back to the manifold. The
Newton variant projects every step with Gauss-Newton, the zigzag variant
overshoots the linearized correction and stops as soon as the correction
direction flips. Random IK is the baseline: independent solves from uniform
random starts.
"""
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Sequence, Tuple
import logging
import time

import numpy as np
import scipy.linalg

from nullmanifold.config import settings
from nullmanifold.errors import (
    ConvergenceError,
    DegenerateTaskError,
    DimensionError,
    InputError,
    NullManifoldError,
    SamplingError,
)
from nullmanifold.models import TraversalParams
from nullmanifold.services.kinematics import wrap_angles, wrapped_distance
from nullmanifold.services.task import TaskInstance, residual, residual_and_jacobian, residual_jacobian

logger = logging.getLogger(__name__)

PINV_RCOND = 1e-8


@dataclass
class SampleSet:
    samples: np.ndarray
    residual_norms: np.ndarray
    method: str
    beta: Optional[float] = None
    family_coordinates: Optional[np.ndarray] = None
    sampling_time: float = 0.0
    complete: bool = True
    warnings: List[str] = field(default_factory=list)
    # tangent used for each traversal step; not persisted
    tangents: Optional[np.ndarray] = None
    # provenance carried through the metadata sidecar
    seed: Optional[int] = None
    robot: Optional[str] = None
    task: Optional[str] = None

    def __post_init__(self):
        self.samples = np.atleast_2d(np.asarray(self.samples, dtype=float))
        self.residual_norms = np.asarray(self.residual_norms, dtype=float).reshape(-1)
        if self.samples.shape[0] != self.residual_norms.size:
            raise InputError("samples and residual norms differ in length")
        if self.family_coordinates is not None:
            fc = np.atleast_2d(np.asarray(self.family_coordinates, dtype=float))
            if fc.shape[0] != self.samples.shape[0]:
                raise InputError("family coordinates and samples differ in length")
            self.family_coordinates = fc

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def n_joints(self) -> int:
        return self.samples.shape[1]

    @property
    def family_dim(self) -> int:
        return 0 if self.family_coordinates is None else self.family_coordinates.shape[1]

    def labeled(self, coordinate) -> "SampleSet":
        coordinate = np.asarray(coordinate, dtype=float).reshape(1, -1)
        return replace(self, family_coordinates=np.repeat(coordinate, len(self), axis=0))

    @classmethod
    def concatenate(cls, sets: Sequence["SampleSet"]) -> "SampleSet":
        if not sets:
            raise InputError("nothing to concatenate")
        labeled = [s.family_coordinates is not None for s in sets]
        if any(labeled) and not all(labeled):
            raise InputError("cannot mix labeled and unlabeled sample sets")
        return cls(
            samples=np.vstack([s.samples for s in sets]),
            residual_norms=np.concatenate([s.residual_norms for s in sets]),
            method=sets[0].method,
            beta=sets[0].beta,
            family_coordinates=np.vstack([s.family_coordinates for s in sets]) if all(labeled) else None,
            sampling_time=sum(s.sampling_time for s in sets),
            complete=all(s.complete for s in sets),
            warnings=[w for s in sets for w in s.warnings],
        )


# --- initial point search ---

def gauss_newton_solve(
    task: TaskInstance,
    q0,
    eps: float = 1e-6,
    max_iter: int = 100,
    max_step: Optional[float] = 1.0,
    stall_iters: int = 20,
) -> np.ndarray:
    """Iterate minimum-norm least-squares steps until ||r(q)|| <= eps.

    Steps longer than `max_step` are scaled down. A residual that has not
    improved for `stall_iters` iterations (an unreachable target, typically at
    a singular Jacobian) ends the search early.
    """
    if eps <= 0:
        raise InputError("Gauss-Newton tolerance must be positive")
    q = wrap_angles(np.asarray(q0, dtype=float).reshape(-1))
    best = np.inf
    stalled = 0
    norm = np.inf
    for it in range(max_iter + 1):
        r, J = residual_and_jacobian(task, q)
        norm = float(np.linalg.norm(r))
        if norm <= eps:
            return q
        if it == max_iter:
            break
        if norm < best * (1.0 - 1e-3):
            best = norm
            stalled = 0
        else:
            stalled += 1
            if stalled >= stall_iters:
                raise ConvergenceError(f"Gauss-Newton stalled at residual {norm:.3e}", residual_norm=norm)
        dq = -np.linalg.pinv(J, rcond=PINV_RCOND) @ r
        step = np.linalg.norm(dq)
        if max_step is not None and step > max_step:
            dq *= max_step / step
        q = wrap_angles(q + dq)
    raise ConvergenceError(f"Gauss-Newton did not converge in {max_iter} iterations (residual {norm:.3e})", residual_norm=norm)


def null_space_basis(J, tol: float = 1e-8) -> np.ndarray:
    """Orthonormal right-singular vectors with singular value below tol * sigma_max."""
    basis = scipy.linalg.null_space(np.atleast_2d(np.asarray(J, dtype=float)), rcond=tol)
    if basis.shape[1] == 0:
        raise DegenerateTaskError("Jacobian has an empty null space")
    return basis


def initial_configuration(
    task: TaskInstance,
    q0=None,
    eps: float = 1e-6,
    seed: int = 0,
    attempts: int = 50,
) -> np.ndarray:
    """Gauss-Newton from q0, falling back to uniform random starts."""
    if q0 is not None:
        try:
            return gauss_newton_solve(task, q0, eps)
        except ConvergenceError as exc:
            logger.info(f"Seed configuration did not converge ({exc}); trying random starts")
    rng = np.random.default_rng(seed)
    for _ in range(attempts):
        try:
            return gauss_newton_solve(task, rng.uniform(-np.pi, np.pi, task.n_joints), eps)
        except ConvergenceError:
            continue
    raise SamplingError(f"no solution found after {attempts} random starts")


# --- correction operators ---

def correction_direction(J, r) -> np.ndarray:
    """Minimum-norm linearized step toward the manifold, -J^# r."""
    return -np.linalg.pinv(J, rcond=PINV_RCOND) @ r


def zigzag_correction(task: TaskInstance, q, params: TraversalParams) -> Tuple[np.ndarray, int]:
    """Overshooting correction steps; returns the retained iterate and the step count.

    Stops when consecutive correction directions point to opposite sides of
    the manifold and keeps the linear crossing estimate between the two
    bracketing iterates.
    """
    q = np.asarray(q, dtype=float)
    r, J = residual_and_jacobian(task, q)
    if np.linalg.norm(r) <= params.eps_proj:
        return wrap_angles(q), 0
    d_prev = correction_direction(J, r)
    steps = 0
    for _ in range(params.max_proj_iters):
        q_new = q + params.gamma * d_prev
        steps += 1
        r_new, J_new = residual_and_jacobian(task, q_new)
        if np.linalg.norm(r_new) <= params.eps_proj:
            q = q_new
            break
        d_new = correction_direction(J_new, r_new)
        inner = float(d_prev @ d_new)
        if inner < 0:
            a = float(d_prev @ d_prev)
            q = q + (a / (a - inner)) * params.gamma * d_prev
            break
        q, d_prev = q_new, d_new
    return wrap_angles(q), steps


def _newton_corrector(task: TaskInstance, params: TraversalParams) -> Callable[[np.ndarray], np.ndarray]:
    def correct(q_tilde):
        return gauss_newton_solve(task, q_tilde, params.eps_proj, params.max_newton_iters)
    return correct


def _zigzag_corrector(task: TaskInstance, params: TraversalParams) -> Callable[[np.ndarray], np.ndarray]:
    def correct(q_tilde):
        return zigzag_correction(task, q_tilde, params)[0]
    return correct


# --- traversal ---

def _inside_box(q: np.ndarray, lower, upper) -> bool:
    if lower is None:
        return True
    return bool(np.all(q >= lower) and np.all(q <= upper))


def _traverse(task: TaskInstance, q_start, params: TraversalParams, method: str, correct) -> SampleSet:
    t0 = time.perf_counter()
    q0 = wrap_angles(np.asarray(q_start, dtype=float).reshape(-1))
    if q0.size != task.n_joints:
        raise InputError(f"start configuration has {q0.size} entries, expected {task.n_joints}")
    r0 = float(np.linalg.norm(residual(task, q0)))
    if r0 > params.eps_proj:
        raise InputError(f"traversal start is off the manifold (residual {r0:.3e} > {params.eps_proj:.1e})")
    k = null_space_basis(residual_jacobian(task, q0), params.null_space_tol).shape[1]
    if k != 1:
        raise DimensionError(f"traversal needs exactly one redundant DOF, null space has dimension {k}")
    lower = None if params.lower is None else np.asarray(params.lower, dtype=float)
    upper = None if params.upper is None else np.asarray(params.upper, dtype=float)
    if lower is not None and lower.size != task.n_joints:
        raise InputError("joint box dimension does not match the chain")

    samples = np.empty((params.max_steps + 1, task.n_joints))
    norms = np.empty(params.max_steps + 1)
    tangents = np.empty((params.max_steps + 1, task.n_joints))
    samples[0], norms[0] = q0, r0
    count = 1
    warnings: List[str] = []
    complete = True
    closed = False
    reversed_once = lower is None
    v_prev = None
    q = q0

    for _ in range(params.max_steps):
        try:
            basis = null_space_basis(residual_jacobian(task, q), params.null_space_tol)
        except DegenerateTaskError as exc:
            warnings.append(str(exc))
            complete = False
            break
        if basis.shape[1] != 1:
            warnings.append(f"null-space dimension jumped to {basis.shape[1]} near a singular configuration")
            complete = False
            break
        v = basis[:, 0]
        if v_prev is not None and v @ v_prev < 0:
            v = -v

        try:
            q_next = correct(q + params.beta * v)
        except ConvergenceError as exc:
            warnings.append(f"projection failed after {count} samples: {exc}")
            complete = False
            break

        if not _inside_box(q_next, lower, upper):
            if not reversed_once:
                # walk back to the seed and continue in the opposite direction
                reversed_once = True
                samples[:count] = samples[:count][::-1].copy()
                norms[:count] = norms[:count][::-1].copy()
                tangents[: count - 1] = -tangents[: count - 1][::-1]
                q = samples[count - 1]
                v_prev = tangents[count - 2].copy() if count > 1 else -v
                continue
            warnings.append("traversal left the joint box")
            complete = False
            break

        history = samples[: max(count - params.termination_skip, 0)]
        if history.shape[0] and np.min(wrapped_distance(history, q_next)) < params.beta:
            closed = True
            break

        samples[count] = q_next
        norms[count] = np.linalg.norm(residual(task, q_next))
        tangents[count - 1] = v
        count += 1
        v_prev = v
        q = q_next

    if not closed and complete:
        warnings.append(f"stopped at max_steps={params.max_steps} without loop closure")
    for w in warnings:
        logger.warning(f"{method} traversal: {w}")
    elapsed = time.perf_counter() - t0
    logger.info(f"{method} traversal: {count} samples, beta={params.beta}, closed={closed}, {elapsed * 1e3:.2f} ms")
    return SampleSet(
        samples=samples[:count].copy(),
        residual_norms=norms[:count].copy(),
        method=method,
        beta=params.beta,
        sampling_time=elapsed,
        complete=complete,
        warnings=warnings,
        tangents=tangents[: count - 1].copy(),
    )


def newton_traverse(task: TaskInstance, q_start, params: TraversalParams) -> SampleSet:
    return _traverse(task, q_start, params, "newton", _newton_corrector(task, params))


def zigzag_traverse(task: TaskInstance, q_start, params: TraversalParams) -> SampleSet:
    return _traverse(task, q_start, params, "zigzag", _zigzag_corrector(task, params))


TRAVERSALS = {"newton": newton_traverse, "zigzag": zigzag_traverse}


def sample_components(
    task: TaskInstance,
    q_start,
    params: TraversalParams,
    method: str = "newton",
    restarts: int = 0,
    seed: Optional[int] = None,
) -> SampleSet:
    """Traverse from q_start, then from random solutions away from every sample so far."""
    traverse = TRAVERSALS[method]
    t0 = time.perf_counter()
    sets = [traverse(task, q_start, params)]
    rng = np.random.default_rng(params.seed if seed is None else seed)
    for _ in range(restarts):
        try:
            q = gauss_newton_solve(task, rng.uniform(-np.pi, np.pi, task.n_joints), params.eps_proj)
        except ConvergenceError:
            continue
        known = np.vstack([s.samples for s in sets])
        if np.min(wrapped_distance(known, q)) <= 2.0 * params.beta:
            continue
        try:
            component = traverse(task, q, params)
        except DimensionError as exc:
            logger.warning(f"Skipping restart component: {exc}")
            continue
        logger.info(f"Restart found a new component with {len(component)} samples")
        sets.append(component)
    result = SampleSet.concatenate(sets)
    result.sampling_time = time.perf_counter() - t0
    return result


def random_ik_sample(task: TaskInstance, n: int, eps: float = 1e-6, seed: int = 0, max_iter: int = 100) -> SampleSet:
    if n < 1:
        raise InputError("random IK needs n >= 1")
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    budget = 10 * n
    solutions = []
    attempts = 0
    while len(solutions) < n:
        if attempts >= budget:
            raise SamplingError(f"random IK found {len(solutions)}/{n} solutions in {budget} attempts")
        attempts += 1
        try:
            solutions.append(gauss_newton_solve(task, rng.uniform(-np.pi, np.pi, task.n_joints), eps, max_iter))
        except ConvergenceError:
            continue
    samples = np.array(solutions)
    norms = np.array([np.linalg.norm(residual(task, q)) for q in samples])
    elapsed = time.perf_counter() - t0
    logger.info(f"random IK: {n} samples in {attempts} attempts, {elapsed * 1e3:.2f} ms")
    return SampleSet(samples=samples, residual_norms=norms, method="random_ik", sampling_time=elapsed)


def sample_family(
    tasks: Sequence[TaskInstance],
    params: TraversalParams,
    q_start=None,
    restarts: Optional[int] = None,
) -> SampleSet:
    """Newton traversal per family instance, warm-started from the previous one.

    Each instance gets `restarts` random restarts (settings.FAMILY_RESTARTS by
    default) so that every self-motion component of the instance is reached.
    """
    if restarts is None:
        restarts = settings.FAMILY_RESTARTS
    if not tasks:
        raise InputError("empty task family")
    t0 = time.perf_counter()
    sets = []
    failures = []
    seed_q = q_start
    for i, task in enumerate(tasks):
        try:
            q0 = initial_configuration(task, seed_q, params.eps_proj, seed=params.seed + i)
            part = sample_components(task, q0, params, "newton", restarts, seed=params.seed + i)
        except NullManifoldError as exc:
            failures.append(i)
            logger.warning(f"Family instance {i} failed: {exc}")
            continue
        coordinate = task.family_coordinate if task.family_coordinate is not None else [float(i)]
        sets.append(part.labeled(coordinate))
        seed_q = part.samples[0]
        logger.info(f"Family instance {i}: {len(part)} samples")
    if not sets:
        raise SamplingError("every family instance failed")
    result = SampleSet.concatenate(sets)
    if failures:
        result.complete = False
        result.warnings.append(f"failed family instances: {failures}")
    result.sampling_time = time.perf_counter() - t0
    return result
