"""Shifted-mean Gaussian-process implicit surface over configuration space.

Training targets are all ones, so the field is close to 1 on the sampled
manifold and decays with the squared-exponential kernel away from it. The
kernel inverts in closed form, which turns the field value into a distance.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Union
import logging
import time

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.spatial.distance import cdist

from nullmanifold.config import settings
from nullmanifold.errors import DegenerateQueryError, InputError, NumericalError, ParameterError, StallError
from nullmanifold.services.grid import check_cell_count, cell_count, grid_axes, grid_points, resolve_bounds
from nullmanifold.services.kinematics import wrap_angles
from nullmanifold.services.sampling import SampleSet

logger = logging.getLogger(__name__)

PHI_FLOOR = 1e-300
GRADIENT_FLOOR = 1e-12
JITTER_START = 1e-10
JITTER_MAX = 1e-4
# bytes of kernel matrix held per worker chunk
CHUNK_BYTES = 32 * 2**20


@dataclass(frozen=True)
class GpisModel:
    train_points: np.ndarray
    alpha: np.ndarray
    lengthscale: float
    noise: float
    threshold: float = settings.THRESHOLD
    jitter: float = 0.0

    def __post_init__(self):
        points = np.array(self.train_points, dtype=float, ndmin=2)
        alpha = np.array(self.alpha, dtype=float).reshape(-1)
        if points.shape[0] < 1 or not np.all(np.isfinite(points)):
            raise InputError("model needs at least one finite training point")
        if alpha.size != points.shape[0]:
            raise InputError("alpha and training points differ in length")
        _check_hyperparameters(self.lengthscale, self.noise, self.threshold)
        points.setflags(write=False)
        alpha.setflags(write=False)
        object.__setattr__(self, "train_points", points)
        object.__setattr__(self, "alpha", alpha)

    @property
    def size(self) -> int:
        return self.train_points.shape[0]

    @property
    def n_joints(self) -> int:
        return self.train_points.shape[1]


@dataclass(frozen=True)
class FieldQuery:
    phi: float
    gradient: np.ndarray
    distance: float


def _check_hyperparameters(lengthscale: float, noise: float, threshold: float):
    if not lengthscale > 0:
        raise ParameterError(f"lengthscale must be positive, got {lengthscale}")
    if not noise >= 0:
        raise ParameterError(f"noise must be nonnegative, got {noise}")
    if not 0 < threshold < 1:
        raise ParameterError(f"membership threshold must lie in (0, 1), got {threshold}")


def se_kernel(q, q2, lengthscale: float) -> float:
    if not lengthscale > 0:
        raise ParameterError(f"lengthscale must be positive, got {lengthscale}")
    diff = np.asarray(q, dtype=float) - np.asarray(q2, dtype=float)
    return float(np.exp(-(diff @ diff) / (2.0 * lengthscale**2)))


def kernel_matrix(a: np.ndarray, b: np.ndarray, lengthscale: float) -> np.ndarray:
    return np.exp(-cdist(a, b, "sqeuclidean") / (2.0 * lengthscale**2))


def _row_chunks(rows: int, cols: int) -> List[slice]:
    step = max(1, CHUNK_BYTES // (8 * max(cols, 1)))
    return [slice(i, min(i + step, rows)) for i in range(0, rows, step)]


def _map_chunks(fn, rows: int, cols: int, threads: Optional[int]) -> list:
    chunks = _row_chunks(rows, cols)
    workers = min(threads or settings.resolve_threads(), len(chunks))
    if workers <= 1:
        return [fn(c) for c in chunks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, chunks))


def gram_matrix(points: np.ndarray, lengthscale: float, threads: Optional[int] = None) -> np.ndarray:
    n = points.shape[0]
    K = np.empty((n, n))

    def fill(rows: slice):
        K[rows] = kernel_matrix(points[rows], points, lengthscale)

    _map_chunks(fill, n, n, threads)
    return K


def build_model(
    samples: Union[SampleSet, np.ndarray],
    lengthscale: float = settings.LENGTHSCALE,
    noise: float = settings.NOISE,
    threshold: float = settings.THRESHOLD,
    threads: Optional[int] = None,
) -> GpisModel:
    """Solve (K + noise*I) alpha = 1 by Cholesky, escalating diagonal jitter on failure."""
    _check_hyperparameters(lengthscale, noise, threshold)
    points = samples.samples if isinstance(samples, SampleSet) else np.asarray(samples, dtype=float)
    points = np.atleast_2d(points)
    if points.shape[0] < 1 or points.size == 0:
        raise InputError("cannot build a model from an empty sample set")
    if not np.all(np.isfinite(points)):
        raise InputError("training points must be finite")

    t0 = time.perf_counter()
    K = gram_matrix(points, lengthscale, threads)
    K[np.diag_indices_from(K)] += noise
    jitter = 0.0
    while True:
        try:
            if jitter:
                A = K.copy()
                A[np.diag_indices_from(A)] += jitter
            else:
                A = K
            factor = cho_factor(A, lower=True, check_finite=False)
            break
        except LinAlgError:
            jitter = JITTER_START if jitter == 0.0 else jitter * 10.0
            if jitter > JITTER_MAX * (1 + 1e-9):
                raise NumericalError(f"Gram matrix is not positive definite even with jitter {JITTER_MAX:g}")
            logger.warning(f"Cholesky failed, retrying with diagonal jitter {jitter:.0e}")
    alpha = cho_solve(factor, np.ones(points.shape[0]), check_finite=False)
    elapsed = time.perf_counter() - t0
    logger.info(
        f"Built GPIS model: N={points.shape[0]}, lengthscale={lengthscale}, noise={noise}, "
        f"jitter={jitter:g}, {elapsed * 1e3:.2f} ms"
    )
    return GpisModel(points.copy(), alpha, lengthscale, noise, threshold, jitter)


# --- single queries ---

def _kernel_vector(model: GpisModel, q: np.ndarray) -> np.ndarray:
    diff = model.train_points - q
    return np.exp(-np.einsum("ij,ij->i", diff, diff) / (2.0 * model.lengthscale**2))


def _check_query(model: GpisModel, q) -> np.ndarray:
    q = np.asarray(q, dtype=float).reshape(-1)
    if q.size != model.n_joints:
        raise InputError(f"query has {q.size} entries, model has {model.n_joints} joints")
    return q


def distance_from_phi(phi, lengthscale: float):
    phi = np.asarray(phi, dtype=float)
    log_phi = np.log(np.maximum(phi, PHI_FLOOR))
    d = np.sqrt(np.maximum(0.0, -2.0 * lengthscale**2 * log_phi))
    return np.where(phi >= 1.0, 0.0, d)


def infer(model: GpisModel, q) -> float:
    q = _check_query(model, q)
    return float(_kernel_vector(model, q) @ model.alpha)


def gradient(model: GpisModel, q) -> np.ndarray:
    """d phi / dq = sum_i alpha_i k_i (q_i - q) / l^2; points toward the manifold."""
    q = _check_query(model, q)
    weights = model.alpha * _kernel_vector(model, q)
    return weights @ (model.train_points - q) / model.lengthscale**2


def distance(model: GpisModel, q) -> float:
    return float(distance_from_phi(infer(model, q), model.lengthscale))


def is_on_manifold(model: GpisModel, q) -> bool:
    return infer(model, q) > model.threshold


def query(model: GpisModel, q) -> FieldQuery:
    """Field value, gradient and distance sharing one kernel evaluation."""
    q = _check_query(model, q)
    weights = model.alpha * _kernel_vector(model, q)
    phi = float(weights.sum())
    grad = weights @ (model.train_points - q) / model.lengthscale**2
    return FieldQuery(phi, grad, float(distance_from_phi(phi, model.lengthscale)))


def _projection_step(model: GpisModel, q: np.ndarray) -> np.ndarray:
    fq = query(model, q)
    if fq.distance == 0.0:
        return np.zeros_like(q)
    norm = np.linalg.norm(fq.gradient)
    if norm <= GRADIENT_FLOOR:
        raise DegenerateQueryError(f"field gradient vanishes at the query (|grad| = {norm:.1e})")
    return fq.distance * fq.gradient / norm


def project(model: GpisModel, q) -> np.ndarray:
    """One jump along the normalized gradient by the field distance."""
    q = _check_query(model, q)
    step = _projection_step(model, q)
    if not np.any(step):
        return q.copy()
    return wrap_angles(q + step)


def path_to_manifold(model: GpisModel, q0, step_cap: float = 0.5, tol: float = 1e-2, max_steps: int = 100) -> np.ndarray:
    """Repeated capped projections; rows are the visited configurations, q0 first."""
    if not step_cap > 0 or not tol >= 0:
        raise ParameterError("step_cap must be positive and tol nonnegative")
    q = _check_query(model, q0)
    path = [q.copy()]
    d = distance(model, q)
    stalled = 0
    while d > tol and len(path) <= max_steps:
        step = _projection_step(model, q)
        length = np.linalg.norm(step)
        if length > step_cap:
            step *= step_cap / length
        q = wrap_angles(q + step)
        d_next = distance(model, q)
        path.append(q)
        stalled = stalled + 1 if d_next >= d else 0
        if stalled >= 5:
            raise StallError(f"distance stopped decreasing at d = {d_next:.3e}")
        d = d_next
    if d > tol:
        logger.info(f"path_to_manifold stopped after {max_steps} steps at d = {d:.3e}")
    return np.array(path)


# --- batch queries ---

def _check_batch(model: GpisModel, queries) -> np.ndarray:
    Q = np.atleast_2d(np.asarray(queries, dtype=float))
    if Q.shape[1] != model.n_joints:
        raise InputError(f"queries have {Q.shape[1]} columns, model has {model.n_joints} joints")
    return Q


def infer_batch(model: GpisModel, queries, threads: Optional[int] = None) -> np.ndarray:
    Q = _check_batch(model, queries)
    out = np.empty(Q.shape[0])

    def run(rows: slice):
        out[rows] = kernel_matrix(Q[rows], model.train_points, model.lengthscale) @ model.alpha

    _map_chunks(run, Q.shape[0], model.size, threads)
    return out


def gradient_batch(model: GpisModel, queries, threads: Optional[int] = None) -> np.ndarray:
    Q = _check_batch(model, queries)
    out = np.empty_like(Q)

    def run(rows: slice):
        W = kernel_matrix(Q[rows], model.train_points, model.lengthscale) * model.alpha
        out[rows] = (W @ model.train_points - W.sum(axis=1)[:, None] * Q[rows]) / model.lengthscale**2

    _map_chunks(run, Q.shape[0], model.size, threads)
    return out


def distance_batch(model: GpisModel, queries, threads: Optional[int] = None) -> np.ndarray:
    return distance_from_phi(infer_batch(model, queries, threads), model.lengthscale)


# --- grid export ---

@dataclass
class FieldGrid:
    axes: List[int]
    coordinates: np.ndarray
    phi: np.ndarray
    distance: np.ndarray


def evaluate_grid(
    model: GpisModel,
    resolution: float = settings.GRID_RESOLUTION,
    lower: Optional[Sequence[float]] = None,
    upper: Optional[Sequence[float]] = None,
    axes: Optional[Sequence[int]] = None,
    fixed: Optional[Dict[int, float]] = None,
    marginalize: int = 0,
    seed: int = 0,
    threads: Optional[int] = None,
) -> FieldGrid:
    """Field over a grid on the selected axes.

    Axes left out are held at `fixed` values; any left over are marginalized
    by the per-cell maximum over `marginalize` uniformly drawn slices.
    """
    n = model.n_joints
    fixed = dict(fixed or {})
    if axes is None:
        if n > 3:
            raise InputError(f"a {n}-joint model needs an explicit axis selection")
        axes = list(range(n))
    axes = [int(a) for a in axes]
    if len(set(axes)) != len(axes) or any(a < 0 or a >= n for a in axes):
        raise InputError(f"axis selection {axes} is invalid for {n} joints")
    if any(a in fixed for a in axes) or any(a < 0 or a >= n for a in fixed):
        raise InputError("fixed axes must be distinct from the grid axes and within range")
    free = [a for a in range(n) if a not in axes and a not in fixed]
    if free and marginalize < 1:
        raise InputError(f"axes {free} are neither fixed nor marginalized")

    lo, hi = resolve_bounds(len(axes), lower, upper)
    grid = grid_axes(lo, hi, resolution)
    check_cell_count(cell_count(grid))
    coords = grid_points(grid)

    Q = np.zeros((coords.shape[0], n))
    Q[:, axes] = coords
    for a, value in fixed.items():
        Q[:, a] = value

    if free:
        rng = np.random.default_rng(seed)
        phi = np.full(coords.shape[0], -np.inf)
        for _ in range(marginalize):
            Q[:, free] = rng.uniform(-np.pi, np.pi, len(free))
            phi = np.maximum(phi, infer_batch(model, Q, threads))
    else:
        phi = infer_batch(model, Q, threads)
    logger.info(f"Evaluated field on {coords.shape[0]} grid cells over axes {axes}")
    return FieldGrid(axes, coords, phi, distance_from_phi(phi, model.lengthscale))
