"""Readers and writers for robot, task, sample, model, path, grid and report files."""
import csv
import json
import logging
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Union

import numpy as np
from pydantic import TypeAdapter

from nullmanifold.errors import InputError
from nullmanifold.models import (
    BenchConfig,
    BenchReport,
    BenchRow,
    FamilySpec,
    ModelFile,
    RobotSpec,
    SampleMetadata,
    TaskSpec,
)
from nullmanifold.services.gpis import FieldGrid, GpisModel
from nullmanifold.services.kinematics import Chain, chain_from_spec
from nullmanifold.services.sampling import SampleSet

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
_robot_adapter = TypeAdapter(RobotSpec)


def fmt_float(x: float) -> str:
    """17 significant digits: re-reading gives back the same double."""
    return format(float(x), ".17g")


def read_json(path: PathLike) -> dict:
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def write_json(path: PathLike, data: dict):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2)
        f.write("\n")


# --- inputs ---

def load_robot(path: PathLike) -> Chain:
    return chain_from_spec(_robot_adapter.validate_python(read_json(path)))


def load_task_file(path: PathLike) -> Union[TaskSpec, FamilySpec]:
    """A task file holds either a single task or a task family (keyed by 'family')."""
    data = read_json(path)
    if "family" in data:
        return FamilySpec.model_validate(data)
    return TaskSpec.model_validate(data)


def load_bench_config(path: PathLike) -> BenchConfig:
    return BenchConfig.model_validate(read_json(path))


# --- sample sets ---

def sample_header(n_joints: int, family_dim: int) -> List[str]:
    return [f"q{i}" for i in range(n_joints)] + ["residual_norm"] + [f"family_{i}" for i in range(family_dim)]


def metadata_path(path: PathLike) -> Path:
    return Path(path).with_suffix(".json")


def write_samples(path: PathLike, samples: SampleSet, seed: Optional[int] = None, robot: Optional[str] = None, task: Optional[str] = None):
    """CSV rows plus a JSON sidecar with method, beta and timing.

    Provenance arguments left as None fall back to what the sample set carries.
    """
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(sample_header(samples.n_joints, samples.family_dim))
        for i in range(len(samples)):
            row = [fmt_float(x) for x in samples.samples[i]] + [fmt_float(samples.residual_norms[i])]
            if samples.family_coordinates is not None:
                row += [fmt_float(x) for x in samples.family_coordinates[i]]
            writer.writerow(row)
    meta = SampleMetadata(
        method=samples.method,
        beta=samples.beta,
        n_joints=samples.n_joints,
        count=len(samples),
        family_dim=samples.family_dim,
        sampling_time_ms=round(samples.sampling_time * 1e3, 2),
        complete=samples.complete,
        warnings=samples.warnings,
        seed=samples.seed if seed is None else seed,
        robot=samples.robot if robot is None else robot,
        task=samples.task if task is None else task,
    )
    write_json(metadata_path(path), meta.model_dump())
    logger.info(f"Wrote {len(samples)} samples to {path}")


def read_samples(path: PathLike) -> SampleSet:
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    if not rows:
        raise InputError(f"{path} is empty")
    header, body = rows[0], [r for r in rows[1:] if r]
    if "residual_norm" not in header:
        raise InputError(f"{path} has no residual_norm column")
    if not body:
        raise InputError(f"{path} holds no samples")
    n_joints = header.index("residual_norm")
    if header != sample_header(n_joints, len(header) - n_joints - 1):
        raise InputError(f"{path} has an unexpected header")
    try:
        data = np.array(body, dtype=float)
    except ValueError as exc:
        raise InputError(f"{path}: {exc}")
    if data.shape[1] != len(header):
        raise InputError(f"{path}: rows and header differ in length")

    meta = None
    sidecar = metadata_path(path)
    if sidecar.exists():
        meta = SampleMetadata.model_validate(read_json(sidecar))
    return SampleSet(
        samples=data[:, :n_joints],
        residual_norms=data[:, n_joints],
        method=meta.method if meta else "newton",
        beta=meta.beta if meta else None,
        family_coordinates=data[:, n_joints + 1:] if data.shape[1] > n_joints + 1 else None,
        sampling_time=meta.sampling_time_ms / 1e3 if meta else 0.0,
        complete=meta.complete if meta else True,
        warnings=list(meta.warnings) if meta else [],
        seed=meta.seed if meta else None,
        robot=meta.robot if meta else None,
        task=meta.task if meta else None,
    )


# --- models ---

def write_model(path: PathLike, model: GpisModel):
    data = ModelFile(
        lengthscale=model.lengthscale,
        noise=model.noise,
        threshold=model.threshold,
        points=model.train_points.tolist(),
        alpha=model.alpha.tolist(),
        jitter=model.jitter,
    )
    write_json(path, data.model_dump())
    logger.info(f"Wrote model with {model.size} points to {path}")


def read_model(path: PathLike) -> GpisModel:
    data = ModelFile.model_validate(read_json(path))
    return GpisModel(
        train_points=np.array(data.points),
        alpha=np.array(data.alpha),
        lengthscale=data.lengthscale,
        noise=data.noise,
        threshold=data.threshold,
        jitter=data.jitter,
    )


# --- field exports ---

def _write_rows(path: PathLike, header: Sequence[str], columns: Iterable[np.ndarray]):
    table = np.column_stack(list(columns))
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in table:
            writer.writerow([fmt_float(x) for x in row])


def write_path(path: PathLike, configurations: np.ndarray, phi: np.ndarray, d: np.ndarray):
    n = configurations.shape[1]
    _write_rows(path, [f"q{i}" for i in range(n)] + ["phi", "d"], [configurations, phi, d])


def write_grid(path: PathLike, grid: FieldGrid):
    _write_rows(path, [f"q{a}" for a in grid.axes] + ["phi", "d"], [grid.coordinates, grid.phi, grid.distance])


# --- benchmark reports ---

REPORT_FIELDS = list(BenchRow.model_fields)


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return fmt_float(value)
    return str(value)


def write_report_csv(path: PathLike, report: BenchReport):
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=REPORT_FIELDS)
        writer.writeheader()
        for row in report.rows:
            writer.writerow({k: _csv_cell(v) for k, v in row.model_dump().items()})


def fmt(val, spec: str) -> str:
    """Format a value for display, '--' for None."""
    if val is None:
        return "--"
    return format(val, spec)


def write_report_markdown(path: PathLike, report: BenchReport):
    headers = [
        "Case", "Method", "beta / n", "Samples", "Sampling Time [ms]", "Coverage [rad^n]",
        "Mean Residual", "Residual RMSE", "GP Construct Time [ms]", "Distance RMSE", "Error",
    ]
    lines = ["# Manifold sampling benchmark", ""]
    if not report.timing:
        lines += ["Cells ran in parallel; timing columns are omitted.", ""]
    lines.append("| " + " | ".join(headers) + " |")
    lines.append("| " + " | ".join(["---"] * len(headers)) + " |")
    for row in report.rows:
        coverage = fmt(row.coverage_volume, ".4g")
        if row.coverage_stderr is not None:
            coverage += f" ± {row.coverage_stderr:.1g}"
        cells = [
            row.case,
            row.method,
            fmt(row.beta, "g") if row.beta is not None else fmt(row.n, "d"),
            fmt(row.samples, "d"),
            fmt(row.sampling_time_ms, ".2f"),
            coverage,
            fmt(row.mean_residual, ".2e"),
            fmt(row.residual_rmse, ".2e"),
            fmt(row.build_time_ms, ".2f"),
            fmt(row.distance_rmse, ".2e"),
            row.error or "",
        ]
        lines.append("| " + " | ".join(cells) + " |")
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")
