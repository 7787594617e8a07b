"""Coverage, residual and distance-field metrics, and the benchmark runner."""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import product
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Union
import logging
import time

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import minimum_spanning_tree
from scipy.spatial import cKDTree

from nullmanifold import storage
from nullmanifold.config import settings
from nullmanifold.errors import InputError, NullManifoldError
from nullmanifold.index import SampleIndex
from nullmanifold.models import BenchCase, BenchConfig, BenchReport, BenchRow, CoverageParams, FamilySpec, GpSettings, TraversalParams
from nullmanifold.services import gpis
from nullmanifold.services.grid import box_volume, check_cell_count, cell_count, grid_axes, grid_points, resolve_bounds
from nullmanifold.services.kinematics import PlanarChain, wrap_angles, wrapped_difference
from nullmanifold.services.sampling import SampleSet, initial_configuration, random_ik_sample, sample_components, sample_family
from nullmanifold.services.task import TaskFamily, TaskInstance, discretize_family, residual, task_from_spec

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi
EXHAUSTIVE_MAX_DIM = 3


@dataclass(frozen=True)
class CoverageEstimate:
    volume: float
    stderr: Optional[float] = None


def _sample_array(samples: Union[SampleSet, np.ndarray]) -> np.ndarray:
    if isinstance(samples, SampleSet):
        return samples.samples
    return np.atleast_2d(np.asarray(samples, dtype=float))


# --- coverage ---

def _coverage_exhaustive(points: np.ndarray, params: CoverageParams, lower: np.ndarray, upper: np.ndarray) -> float:
    n = points.shape[1]
    s, eps = params.spacing, params.epsilon
    axes = grid_axes(lower, upper, s)
    counts = np.array([a.size for a in axes])
    check_cell_count(cell_count(axes))
    covered = np.zeros(tuple(counts), dtype=bool)
    shifts = np.array(list(product((-TWO_PI, 0.0, TWO_PI), repeat=n)))
    for q in wrap_angles(points):
        for p in q + shifts:
            # index window of grid points within eps along every axis
            lo = np.maximum(np.ceil((p - eps - lower) / s).astype(int), 0)
            hi = np.minimum(np.floor((p + eps - lower) / s).astype(int), counts - 1)
            if np.any(lo > hi):
                continue
            window = tuple(slice(a, b + 1) for a, b in zip(lo, hi))
            d2 = sum(
                ((axes[i][window[i]] - p[i]) ** 2).reshape([-1 if j == i else 1 for j in range(n)])
                for i in range(n)
            )
            covered[window] |= d2 < eps**2
    return float(covered.sum()) * s**n


def _coverage_monte_carlo(points: np.ndarray, params: CoverageParams, lower: np.ndarray, upper: np.ndarray, threads: Optional[int]) -> CoverageEstimate:
    # periodic k-d tree on [0, 2pi)^n gives wrapped distances
    shifted = wrap_angles(points) + np.pi
    shifted[shifted >= TWO_PI] = 0.0
    tree = cKDTree(shifted, boxsize=TWO_PI)
    rng = np.random.default_rng(params.seed)
    queries = wrap_angles(rng.uniform(lower, upper, size=(params.mc_points, points.shape[1]))) + np.pi
    queries[queries >= TWO_PI] = 0.0
    dist, _ = tree.query(queries, k=1, distance_upper_bound=params.epsilon, workers=threads or settings.resolve_threads())
    p = float(np.mean(dist < params.epsilon))
    volume = box_volume(lower, upper)
    return CoverageEstimate(p * volume, volume * np.sqrt(p * (1.0 - p) / params.mc_points))


def coverage_estimate(samples: Union[SampleSet, np.ndarray], params: CoverageParams = CoverageParams(), threads: Optional[int] = None) -> CoverageEstimate:
    """Exhaustive grid count for up to three joints, Monte Carlo with standard error above."""
    points = _sample_array(samples)
    if points.size == 0:
        return CoverageEstimate(0.0, None)
    n = points.shape[1]
    lower, upper = resolve_bounds(n, params.lower, params.upper)
    if n <= EXHAUSTIVE_MAX_DIM:
        return CoverageEstimate(_coverage_exhaustive(points, params, lower, upper))
    return _coverage_monte_carlo(points, params, lower, upper, threads)


def coverage_volume(samples: Union[SampleSet, np.ndarray], params: CoverageParams = CoverageParams(), threads: Optional[int] = None) -> float:
    return coverage_estimate(samples, params, threads).volume


# --- residuals ---

def mean_residual_norm(task: TaskInstance, samples: Union[SampleSet, np.ndarray]) -> float:
    points = _sample_array(samples)
    if points.size == 0:
        raise InputError("mean residual of an empty sample set")
    return float(np.mean([np.linalg.norm(residual(task, q)) for q in points]))


def residual_rmse(samples: SampleSet) -> float:
    """Root mean square of the stored residual norms; works across family instances."""
    if len(samples) == 0:
        raise InputError("residual RMSE of an empty sample set")
    return float(np.sqrt(np.mean(samples.residual_norms**2)))


# --- distance field accuracy ---

def ground_truth_distance(oracle: Union[SampleSet, np.ndarray], queries: np.ndarray, threads: Optional[int] = None) -> np.ndarray:
    return SampleIndex.from_points(_sample_array(oracle), threads=threads).nearest_distance(queries)


def distance_rmse(
    model: gpis.GpisModel,
    oracle: Union[SampleSet, np.ndarray],
    queries,
    cutoff: Optional[float] = None,
    threads: Optional[int] = None,
) -> float:
    """RMSE of the field distance against the nearest dense-oracle sample, over near-manifold queries."""
    queries = np.atleast_2d(np.asarray(queries, dtype=float))
    if queries.size == 0:
        raise InputError("distance RMSE over an empty query grid")
    cutoff = 3.0 * model.lengthscale if cutoff is None else cutoff
    truth = ground_truth_distance(oracle, queries, threads)
    near = truth <= cutoff
    if not np.any(near):
        raise InputError(f"no query lies within {cutoff:g} of the oracle samples")
    predicted = gpis.distance_batch(model, queries[near], threads)
    return float(np.sqrt(np.mean((predicted - truth[near]) ** 2)))


def near_manifold_grid(n_joints: int, resolution: float = 0.1) -> np.ndarray:
    lower, upper = resolve_bounds(n_joints)
    axes = grid_axes(lower, upper, resolution)
    check_cell_count(cell_count(axes))
    return grid_points(axes)


def near_manifold_queries(oracle: Union[SampleSet, np.ndarray], radius: float, count: int, seed: int = 0) -> np.ndarray:
    """Oracle points displaced in uniformly random directions by up to radius."""
    points = _sample_array(oracle)
    rng = np.random.default_rng(seed)
    base = points[rng.integers(0, points.shape[0], count)]
    directions = rng.normal(size=base.shape)
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    return base + directions * rng.uniform(0.0, radius, (count, 1))


def manifold_arc_length(samples: Union[SampleSet, np.ndarray]) -> float:
    """Minimum-spanning-tree length over wrapped distances of a dense sample set."""
    points = wrap_angles(_sample_array(samples))
    if points.shape[0] < 2:
        return 0.0
    dist = np.empty((points.shape[0], points.shape[0]))
    for start in range(0, points.shape[0], 256):
        block = points[start:start + 256]
        dist[start:start + 256] = np.linalg.norm(wrapped_difference(block[:, None, :], points[None, :, :]), axis=2)
    return float(minimum_spanning_tree(csr_matrix(np.triu(dist, k=1))).sum())


# --- benchmark ---

@dataclass
class _CaseContext:
    case: BenchCase
    params: TraversalParams
    chain: object
    task: Optional[TaskInstance] = None
    family: Optional[List[TaskInstance]] = None
    start: Optional[np.ndarray] = None
    oracle: Optional[np.ndarray] = None


def _prepare_case(case: BenchCase, config: BenchConfig, base_dir: Path) -> _CaseContext:
    chain = storage.load_robot(base_dir / case.robot)
    spec = storage.load_task_file(base_dir / case.task)
    params = TraversalParams(**{"seed": config.seed, **case.params})
    ctx = _CaseContext(case, params, chain)
    seed_q = getattr(spec, "start", None)
    if seed_q is None and chain.ready is not None:
        seed_q = chain.ready
    if isinstance(spec, FamilySpec):
        ctx.family = discretize_family(chain, TaskFamily.from_spec(spec, isinstance(chain, PlanarChain)))
        ctx.start = None if seed_q is None else np.asarray(seed_q, dtype=float)
        if case.rmse_oracle_n:
            per_instance = max(1, case.rmse_oracle_n // len(ctx.family))
            ctx.oracle = np.vstack([
                random_ik_sample(t, per_instance, params.eps_proj, seed=config.seed + i).samples
                for i, t in enumerate(ctx.family)
            ])
    else:
        ctx.task = task_from_spec(chain, spec)
        ctx.start = initial_configuration(ctx.task, seed_q, params.eps_proj, seed=config.seed)
        if case.rmse_oracle_n:
            ctx.oracle = random_ik_sample(ctx.task, case.rmse_oracle_n, params.eps_proj, seed=config.seed).samples
    return ctx


def _distance_queries(ctx: _CaseContext, gp: GpSettings, seed: int) -> np.ndarray:
    n = ctx.oracle.shape[1]
    if n <= EXHAUSTIVE_MAX_DIM:
        return near_manifold_grid(n)
    return near_manifold_queries(ctx.oracle, 3.0 * gp.lengthscale, 5000, seed)


def _run_cell(ctx: _CaseContext, config: BenchConfig, method: str, value, threads: Optional[int]) -> BenchRow:
    case = ctx.case
    row = BenchRow(case=case.name, method=method)
    if method == "random_ik":
        row.n = int(value)
    else:
        row.beta = float(value)
    try:
        params = ctx.params.model_copy(update={"beta": float(value)}) if method != "random_ik" else ctx.params
        if ctx.family is not None:
            if method != "newton":
                raise InputError("task families are sampled with the newton method only")
            samples = sample_family(ctx.family, params, ctx.start, case.restarts)
        elif method == "random_ik":
            samples = random_ik_sample(ctx.task, int(value), params.eps_proj, seed=config.seed)
        else:
            samples = sample_components(ctx.task, ctx.start, params, method, case.restarts or 0)
        row.samples = len(samples)
        row.sampling_time_ms = round(samples.sampling_time * 1e3, 2)
        row.mean_residual = float(np.mean(samples.residual_norms))
        row.residual_rmse = residual_rmse(samples)
        if case.coverage:
            estimate = coverage_estimate(samples, config.coverage, threads)
            row.coverage_volume, row.coverage_stderr = estimate.volume, estimate.stderr
        if case.build_model or ctx.oracle is not None:
            gp = case.gp or config.gp
            t0 = time.perf_counter()
            model = gpis.build_model(samples, gp.lengthscale, gp.noise, gp.threshold, threads)
            row.build_time_ms = round((time.perf_counter() - t0) * 1e3, 2)
            if ctx.oracle is not None:
                queries = _distance_queries(ctx, gp, config.seed)
                row.distance_rmse = distance_rmse(model, ctx.oracle, queries, threads=threads)
        if not samples.complete:
            row.error = "; ".join(samples.warnings)
    except NullManifoldError as exc:
        logger.warning(f"Benchmark cell {case.name}/{method}/{value} failed: {exc}")
        row.error = str(exc)
    logger.info(f"Benchmark cell {case.name}/{method}/{value}: {row.samples} samples")
    return row


def run_benchmark(config: BenchConfig, base_dir: Union[str, Path] = ".", threads: Optional[int] = None) -> BenchReport:
    """Run every case x method x parameter cell; failures become error rows."""
    base_dir = Path(base_dir)
    cells: List[Callable[[], BenchRow]] = []
    for case in config.cases:
        try:
            ctx = _prepare_case(case, config, base_dir)
        except NullManifoldError as exc:
            logger.warning(f"Benchmark case {case.name} could not be prepared: {exc}")
            for m in case.methods:
                for value in (m.n if m.method == "random_ik" else m.beta):
                    row = BenchRow(case=case.name, method=m.method, error=str(exc))
                    if m.method == "random_ik":
                        row.n = value
                    else:
                        row.beta = value
                    cells.append(lambda row=row: row)
            continue
        for m in case.methods:
            for value in (m.n if m.method == "random_ik" else m.beta):
                cells.append(lambda ctx=ctx, method=m.method, value=value: _run_cell(ctx, config, method, value, threads))

    if config.parallel and len(cells) > 1:
        with ThreadPoolExecutor(max_workers=threads or settings.resolve_threads()) as pool:
            rows = list(pool.map(lambda cell: cell(), cells))
        for row in rows:
            row.sampling_time_ms = None
            row.build_time_ms = None
        return BenchReport(rows=rows, timing=False)
    return BenchReport(rows=[cell() for cell in cells], timing=True)
