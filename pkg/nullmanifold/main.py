import argparse
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
from pydantic import BaseModel, ValidationError

from nullmanifold import storage
from nullmanifold.config import settings
from nullmanifold.errors import InputError, ParameterError, exit_code
from nullmanifold.models import FamilySpec, GpSettings, TaskSpec, TraversalParams
from nullmanifold.services import gpis, metrics
from nullmanifold.services.kinematics import PlanarChain, wrap_angles
from nullmanifold.services.sampling import initial_configuration, random_ik_sample, sample_components, sample_family
from nullmanifold.services.task import TaskFamily, discretize_family, task_from_spec

logger = logging.getLogger(__name__)

METHODS = ["newton", "zigzag", "random-ik", "random_ik"]


def parse_vector(text: str) -> List[float]:
    try:
        return [float(x) for x in text.replace(" ", "").split(",") if x != ""]
    except ValueError:
        raise InputError(f"cannot parse '{text}' as a comma-separated list of numbers")


def parse_fixed(text: Optional[str]) -> Dict[int, float]:
    """'3=0,4=0.5' -> {3: 0.0, 4: 0.5}"""
    if not text:
        return {}
    fixed = {}
    for item in text.split(","):
        try:
            axis, value = item.split("=")
            fixed[int(axis)] = float(value)
        except ValueError:
            raise InputError(f"cannot parse fixed axis '{item}', expected AXIS=VALUE")
    return fixed


def _validated(schema: type, **values) -> BaseModel:
    try:
        return schema(**values)
    except ValidationError as e:
        first = e.errors()[0]
        raise ParameterError(f"invalid {first['loc'][0]}: {first['msg']}")


def _traversal_params(args) -> TraversalParams:
    values = {
        "beta": args.beta,
        "eps_proj": args.eps,
        "gamma": args.gamma,
        "max_steps": args.max_steps,
        "max_proj_iters": args.max_proj_iters,
        "seed": args.seed,
    }
    if args.lower or args.upper:
        values["lower"] = parse_vector(args.lower) if args.lower else None
        values["upper"] = parse_vector(args.upper) if args.upper else None
    return _validated(TraversalParams, **{k: v for k, v in values.items() if v is not None})


def _gp_settings(args) -> GpSettings:
    return _validated(GpSettings, lengthscale=args.lengthscale, noise=args.noise, threshold=args.threshold)


def _start(args, spec, chain) -> Optional[np.ndarray]:
    if args.start:
        return np.array(parse_vector(args.start))
    if getattr(spec, "start", None) is not None:
        return np.array(spec.start)
    return chain.ready


# --- Sampling ---

def cmd_sample(args):
    chain = storage.load_robot(args.robot)
    spec = storage.load_task_file(args.task)
    if not isinstance(spec, TaskSpec):
        raise InputError(f"{args.task} describes a task family; use the 'family' command")
    task = task_from_spec(chain, spec)
    params = _traversal_params(args)
    method = args.method.replace("-", "_")
    if method == "random_ik":
        samples = random_ik_sample(task, args.n, params.eps_proj, seed=params.seed)
    else:
        q0 = initial_configuration(task, _start(args, spec, chain), params.eps_proj, seed=params.seed)
        samples = sample_components(task, q0, params, method, args.restarts)
    storage.write_samples(args.out, samples, seed=params.seed, robot=str(args.robot), task=str(args.task))
    print(f"{len(samples)} samples ({method}) in {samples.sampling_time * 1e3:.2f} ms -> {args.out}")
    for warning in samples.warnings:
        print(f"warning: {warning}", file=sys.stderr)


def cmd_family(args):
    chain = storage.load_robot(args.robot)
    spec = storage.load_task_file(args.task)
    if not isinstance(spec, FamilySpec):
        raise InputError(f"{args.task} is not a task family file")
    tasks = discretize_family(chain, TaskFamily.from_spec(spec, isinstance(chain, PlanarChain)))
    params = _traversal_params(args)
    samples = sample_family(tasks, params, _start(args, spec, chain), args.restarts)
    storage.write_samples(args.out, samples, seed=params.seed, robot=str(args.robot), task=str(args.task))
    gp = _gp_settings(args)
    model = gpis.build_model(samples, gp.lengthscale, gp.noise, gp.threshold)
    storage.write_model(args.model, model)
    print(f"{len(samples)} samples over {len(tasks)} task instances -> {args.out}, model -> {args.model}")
    for warning in samples.warnings:
        print(f"warning: {warning}", file=sys.stderr)


# --- Model ---

def cmd_build(args):
    samples = storage.read_samples(args.samples)
    gp = _gp_settings(args)
    model = gpis.build_model(samples, gp.lengthscale, gp.noise, gp.threshold)
    storage.write_model(args.out, model)
    print(f"model with {model.size} points (lengthscale={model.lengthscale}, noise={model.noise}) -> {args.out}")


def _query_point(args, model: gpis.GpisModel) -> np.ndarray:
    q = np.array(parse_vector(args.q))
    if q.size != model.n_joints:
        raise InputError(f"query has {q.size} entries, model has {model.n_joints} joints")
    return wrap_angles(q)


def cmd_query(args):
    model = storage.read_model(args.model)
    result = gpis.query(model, _query_point(args, model))
    print(f"phi = {result.phi:.6f}")
    print(f"d = {result.distance:.6f}")
    print("gradient = " + ",".join(f"{g:.6f}" for g in result.gradient))
    print(f"on_manifold = {str(result.phi > model.threshold).lower()}")


def cmd_project(args):
    model = storage.read_model(args.model)
    q = gpis.project(model, _query_point(args, model))
    print(",".join(storage.fmt_float(x) for x in q))


def cmd_path(args):
    model = storage.read_model(args.model)
    path = gpis.path_to_manifold(model, _query_point(args, model), args.step_cap, args.tol, args.max_steps)
    phi = gpis.infer_batch(model, path)
    storage.write_path(args.out, path, phi, gpis.distance_from_phi(phi, model.lengthscale))
    print(f"{len(path)} configurations, final d = {gpis.distance(model, path[-1]):.6f} -> {args.out}")


def cmd_grid(args):
    model = storage.read_model(args.model)
    grid = gpis.evaluate_grid(
        model,
        resolution=args.resolution,
        lower=parse_vector(args.lower) if args.lower else None,
        upper=parse_vector(args.upper) if args.upper else None,
        axes=[int(a) for a in parse_vector(args.axes)] if args.axes else None,
        fixed=parse_fixed(args.fix),
        marginalize=args.marginalize,
        seed=args.seed,
    )
    storage.write_grid(args.out, grid)
    inside = int(np.sum(grid.phi > model.threshold))
    print(f"{grid.phi.size} grid cells, {inside} above threshold -> {args.out}")


# --- Benchmarks ---

def cmd_bench(args):
    config = storage.load_bench_config(args.config)
    if args.parallel:
        config.parallel = True
    if args.seed is not None:
        config.seed = args.seed
    report = metrics.run_benchmark(config, Path(args.config).parent)
    out = Path(args.out)
    storage.write_report_csv(out.with_suffix(".csv"), report)
    storage.write_report_markdown(out.with_suffix(".md"), report)
    failed = sum(1 for r in report.rows if r.error)
    print(f"{len(report.rows)} rows ({failed} with errors) -> {out.with_suffix('.csv')}, {out.with_suffix('.md')}")


# --- Parser ---

def _add_traversal_args(p: argparse.ArgumentParser, restarts: int = 0):
    p.add_argument("--beta", type=float, help="tangent step length [rad]")
    p.add_argument("--gamma", type=float, help="zigzag overshoot factor (> 1)")
    p.add_argument("--eps", type=float, help="projection tolerance")
    p.add_argument("--max-steps", type=int)
    p.add_argument("--max-proj-iters", type=int)
    p.add_argument("--restarts", type=int, default=restarts, help=f"random restarts to find other components (default {restarts})")
    p.add_argument("--start", help="seed configuration, comma separated")
    p.add_argument("--lower", help="joint box lower bounds, comma separated")
    p.add_argument("--upper", help="joint box upper bounds, comma separated")
    p.add_argument("--seed", type=int, default=0)


def _add_gp_args(p: argparse.ArgumentParser):
    p.add_argument("--lengthscale", type=float, default=settings.LENGTHSCALE)
    p.add_argument("--noise", type=float, default=settings.NOISE)
    p.add_argument("--threshold", type=float, default=settings.THRESHOLD)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nullmanifold", description="Null-space manifold sampling and GP distance fields")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    parser.add_argument("--threads", type=int, help="worker threads (NULLMANIFOLD_THREADS overrides)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="sample a solution manifold")
    p.add_argument("--robot", required=True)
    p.add_argument("--task", required=True)
    p.add_argument("--method", choices=METHODS, default="newton")
    p.add_argument("--n", type=int, default=150, help="random-ik sample count")
    p.add_argument("--out", required=True)
    _add_traversal_args(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("family", help="sample a task family and build its model")
    p.add_argument("--robot", required=True)
    p.add_argument("--task", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--model", required=True)
    _add_traversal_args(p, restarts=settings.FAMILY_RESTARTS)
    _add_gp_args(p)
    p.set_defaults(func=cmd_family)

    p = sub.add_parser("build", help="build a GPIS model from samples")
    p.add_argument("--samples", required=True)
    p.add_argument("--out", required=True)
    _add_gp_args(p)
    p.set_defaults(func=cmd_build)

    for name, func, text in (
        ("query", cmd_query, "field value, distance and gradient at q"),
        ("project", cmd_project, "one-step projection of q onto the manifold"),
    ):
        p = sub.add_parser(name, help=text)
        p.add_argument("--model", required=True)
        p.add_argument("--q", required=True, help="configuration, comma separated (use --q=-1,2,3 for negatives)")
        p.set_defaults(func=func)

    p = sub.add_parser("path", help="capped projection path from q to the manifold")
    p.add_argument("--model", required=True)
    p.add_argument("--q", required=True)
    p.add_argument("--step-cap", type=float, default=0.5)
    p.add_argument("--tol", type=float, default=1e-2)
    p.add_argument("--max-steps", type=int, default=100)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_path)

    p = sub.add_parser("grid", help="export the field over a grid")
    p.add_argument("--model", required=True)
    p.add_argument("--resolution", type=float, default=settings.GRID_RESOLUTION)
    p.add_argument("--lower")
    p.add_argument("--upper")
    p.add_argument("--axes", help="grid axes, e.g. 0,1,2")
    p.add_argument("--fix", help="values for other axes, e.g. 3=0,4=0")
    p.add_argument("--marginalize", type=int, default=0, help="max over K random slices of the remaining axes")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("bench", help="run a benchmark config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="report path stem; writes .csv and .md")
    p.add_argument("--parallel", action="store_true", help="run cells concurrently (no timing)")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_bench)
    return parser


def configure_logging(verbose: int):
    level = settings.LOG_LEVEL.upper()
    if verbose == 1:
        level = "INFO"
    elif verbose >= 2:
        level = "DEBUG"
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    configure_logging(args.verbose)
    settings.set_cli_threads(args.threads)
    try:
        # a malformed NULLMANIFOLD_THREADS fails before any work starts
        settings.env_threads()
        args.func(args)
    except Exception as e:
        code = exit_code(e)
        logger.debug("command failed", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return code
    return 0
