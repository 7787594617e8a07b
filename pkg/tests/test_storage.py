import numpy as np
import pytest

from nullmanifold import storage
from nullmanifold.errors import InputError
from nullmanifold.models import BenchReport, BenchRow, FamilySpec, TaskSpec
from nullmanifold.services import gpis
from nullmanifold.services.sampling import SampleSet

from pathlib import Path

DATA_DIR = Path(__file__).resolve().parent.parent / "data"


def test_samples_round_trip_is_byte_identical(tmp_path, planar_loop):
    first, second = tmp_path / "a.csv", tmp_path / "b.csv"
    storage.write_samples(first, planar_loop, seed=7, robot="planar3.json", task="planar_benchmark.json")
    loaded = storage.read_samples(first)
    assert (loaded.seed, loaded.robot, loaded.task) == (7, "planar3.json", "planar_benchmark.json")
    storage.write_samples(second, loaded)
    assert first.read_bytes() == second.read_bytes()
    assert storage.metadata_path(first).read_bytes() == storage.metadata_path(second).read_bytes()
    assert np.array_equal(loaded.samples, planar_loop.samples)
    assert loaded.method == "newton" and loaded.beta == 0.5


def test_explicit_provenance_overrides_loaded_values(tmp_path, planar_loop):
    first, second = tmp_path / "a.csv", tmp_path / "b.csv"
    storage.write_samples(first, planar_loop, seed=7, robot="planar3.json")
    storage.write_samples(second, storage.read_samples(first), seed=8)
    meta = storage.read_json(storage.metadata_path(second))
    assert meta["seed"] == 8
    assert meta["robot"] == "planar3.json"
    assert meta["task"] is None


def test_samples_header_and_sidecar(tmp_path, planar_loop):
    path = tmp_path / "samples.csv"
    storage.write_samples(path, planar_loop, robot="planar3.json")
    assert path.read_text().splitlines()[0] == "q0,q1,q2,residual_norm"
    meta = storage.read_json(storage.metadata_path(path))
    assert meta["count"] == len(planar_loop)
    assert meta["robot"] == "planar3.json"
    assert meta["complete"] is True


def test_family_columns_round_trip(tmp_path):
    samples = SampleSet(np.array([[0.1, 0.2], [0.3, 0.4]]), [1e-8, 2e-8], "newton", beta=0.2, family_coordinates=[[1.0], [2.0]])
    path = tmp_path / "family.csv"
    storage.write_samples(path, samples)
    assert path.read_text().splitlines()[0] == "q0,q1,residual_norm,family_0"
    loaded = storage.read_samples(path)
    assert loaded.family_dim == 1
    assert np.array_equal(loaded.family_coordinates, [[1.0], [2.0]])


def test_sidecar_is_optional(tmp_path):
    path = tmp_path / "bare.csv"
    path.write_text("q0,q1,q2,residual_norm\n0.1,0.2,0.3,0\n")
    loaded = storage.read_samples(path)
    assert len(loaded) == 1 and loaded.n_joints == 3


@pytest.mark.parametrize("content", ["", "q0,q1,q2,residual_norm\n", "a,b\n1,2\n", "q0,residual_norm\nx,0\n"])
def test_bad_sample_files_raise_input_error(tmp_path, content):
    path = tmp_path / "bad.csv"
    path.write_text(content)
    with pytest.raises(InputError):
        storage.read_samples(path)


def test_model_round_trip_is_byte_identical(tmp_path, planar_loop):
    model = gpis.build_model(planar_loop, lengthscale=0.4, noise=1e-6)
    first, second = tmp_path / "a.json", tmp_path / "b.json"
    storage.write_model(first, model)
    loaded = storage.read_model(first)
    storage.write_model(second, loaded)
    assert first.read_bytes() == second.read_bytes()
    assert np.array_equal(loaded.alpha, model.alpha)
    q = planar_loop.samples[0] + 0.05
    assert gpis.infer(loaded, q) == gpis.infer(model, q)


def test_load_task_file_dispatches_on_family():
    assert isinstance(storage.load_task_file(DATA_DIR / "tasks" / "planar_benchmark.json"), TaskSpec)
    assert isinstance(storage.load_task_file(DATA_DIR / "tasks" / "panda_line.json"), FamilySpec)


def test_report_writers(tmp_path):
    report = BenchReport(rows=[
        BenchRow(case="planar3", method="newton", beta=0.5, samples=17, coverage_volume=1.25, mean_residual=1e-9),
        BenchRow(case="planar3", method="random_ik", n=15, error="budget exhausted"),
    ])
    csv_path, md_path = tmp_path / "r.csv", tmp_path / "r.md"
    storage.write_report_csv(csv_path, report)
    storage.write_report_markdown(md_path, report)
    lines = csv_path.read_text().splitlines()
    assert lines[0] == ",".join(storage.REPORT_FIELDS)
    assert lines[1].startswith("planar3,newton,0.5,,17,")
    markdown = md_path.read_text()
    assert "| planar3 | random_ik | 15 | -- |" in markdown
    assert "budget exhausted" in markdown
