import json

import polars as pl
import pytest

from rpnmf import cli
from rpnmf.services import datasets, reporting
from tests.helpers import nonnegative_low_rank


@pytest.fixture
def faces_csv(tmp_path):
    path = tmp_path / "faces.csv"
    datasets.save_dense_csv(nonnegative_low_rank(3, 40, 30, 4, noise=0.01), path)
    return path


def _read_json(path):
    return json.loads(path.read_text())


def test_factorize_writes_all_artifacts(tmp_path, faces_csv):
    out = tmp_path / "runs"
    status = cli.main(
        [
            "factorize", "--algo", "fasthals-rp", "--k", "4", "--q", "9", "--w", "2",
            "--iters", "20", "--tol", "1e-300", "--seed", "1", "--input", str(faces_csv), "--out", str(out),
        ]
    )
    assert status == 0
    for name in ("A.csv", "B.csv", "trace.csv", "trace.json", "summary.json"):
        assert (out / name).is_file()

    assert datasets.load_dense_csv(out / "A.csv").shape == (40, 4)
    assert datasets.load_dense_csv(out / "B.csv").shape == (30, 4)

    trace = reporting.read_trace_csv(out / "trace.csv")
    assert trace["iteration"].to_list() == [0, 5, 10, 15, 20]
    assert set(trace["algorithm"].to_list()) == {"fasthals-rp"}

    summary = _read_json(out / "summary.json")
    for key in ("algorithm", "k", "q", "w", "alpha", "beta", "final_error", "gini_b", "flops_per_iter",
                "memory_floats", "iterations_run", "converged"):
        assert key in summary
    assert summary["q"] == 9
    assert summary["memory_floats"] == (2 * 9 + 4) * (40 + 30)
    assert summary["estimate"]["algorithm"] == "fasthals-rp"


def test_factorize_without_iterations(tmp_path, faces_csv):
    out = tmp_path / "zero"
    assert cli.main(["factorize", "--algo", "mu", "--k", "3", "--iters", "0", "--input", str(faces_csv), "--out", str(out)]) == 0
    summary = _read_json(out / "summary.json")
    assert summary["iterations_run"] == 0
    assert len(reporting.read_trace_csv(out / "trace.csv")) == 1


def test_missing_input_exits_2_without_outputs(tmp_path, capsys):
    out = tmp_path / "nothing"
    status = cli.main(["factorize", "--algo", "hals", "--k", "2", "--input", str(tmp_path / "nope.csv"), "--out", str(out)])
    assert status == 2
    assert not out.exists()
    assert "error" in capsys.readouterr().err


def test_invalid_configuration_exits_2(tmp_path, faces_csv):
    out = tmp_path / "bad"
    status = cli.main(
        ["factorize", "--algo", "hals-rp", "--k", "5", "--q", "5", "--input", str(faces_csv), "--out", str(out)]
    )
    assert status == 2
    assert not out.exists()


def test_compare_runs_every_algorithm_and_seed(tmp_path, faces_csv):
    out = tmp_path / "compare"
    status = cli.main(
        [
            "compare", "--k", "3", "--w", "1", "--iters", "10", "--seeds", "1,2,3",
            "--input", str(faces_csv), "--out", str(out),
        ]
    )
    assert status == 0
    runs = reporting.read_runs_csv(out / "compare_runs.csv")
    assert len(runs) == 18
    assert set(runs["status"].to_list()) == {"completed"}

    table = pl.read_csv(out / "compare_table.csv")
    assert table["algorithm"].to_list() == ["mu", "mu-rp", "hals", "hals-rp", "fasthals", "fasthals-rp"]
    assert table["runs"].to_list() == [3] * 6
    memory = dict(zip(table["algorithm"].to_list(), table["memory_floats"].to_list()))
    assert memory["fasthals-rp"] < memory["fasthals"]

    trace = reporting.read_trace_csv(out / "compare_trace.csv")
    assert trace.columns == ["algorithm", "seed", "iteration", "error", "elapsed_seconds"]
    assert trace.filter(pl.col("iteration") == 0).height == 18


def test_compare_numbers_do_not_depend_on_jobs(tmp_path, faces_csv):
    common = ["compare", "--algo", "hals,fasthals-rp", "--k", "3", "--iters", "10", "--seeds", "1", "2",
              "--input", str(faces_csv)]
    assert cli.main(common + ["--out", str(tmp_path / "serial")]) == 0
    assert cli.main(common + ["--out", str(tmp_path / "parallel"), "--jobs", "2"]) == 0
    serial = reporting.read_trace_csv(tmp_path / "serial" / "compare_trace.csv")
    parallel = reporting.read_trace_csv(tmp_path / "parallel" / "compare_trace.csv")
    assert serial.drop("elapsed_seconds").equals(parallel.drop("elapsed_seconds"))


def test_sweep_aggregates_cells(tmp_path, faces_csv):
    out = tmp_path / "sweep"
    status = cli.main(
        [
            "sweep", "--algo", "fasthals-rp", "--k", "2,3", "--w", "1", "2", "--seeds", "1,2,3",
            "--iters", "10", "--input", str(faces_csv), "--out", str(out),
        ]
    )
    assert status == 0
    runs = reporting.read_runs_csv(out / "sweep_runs.csv")
    assert len(runs) == 12
    cells = pl.read_csv(out / "sweep_cells.csv")
    assert len(cells) == 4
    assert cells["runs"].to_list() == [3, 3, 3, 3]
    assert cells["median_final_error"].null_count() == 0


def test_sweep_marks_invalid_cells(tmp_path, faces_csv):
    out = tmp_path / "invalid"
    status = cli.main(
        [
            "sweep", "--algo", "hals-rp", "--k", "3", "--q", "3,6", "--seeds", "1",
            "--iters", "5", "--input", str(faces_csv), "--out", str(out),
        ]
    )
    assert status == 1
    runs = reporting.read_runs_csv(out / "sweep_runs.csv")
    assert sorted(runs["status"].to_list()) == ["completed", "invalid"]


def test_project_writes_matrices_and_report(tmp_path):
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    args = ["project", "--format", "synthetic", "--synthetic-d", "30", "--synthetic-n", "20",
            "--synthetic-rank", "5", "--q", "10", "--w", "1", "--seed", "4"]
    assert cli.main(args + ["--out", str(out_a)]) == 0
    assert cli.main(args + ["--out", str(out_b)]) == 0

    X_hat = datasets.load_dense_csv(out_a / "X_hat.csv", has_header=True, allow_negative=True)
    X_check = datasets.load_dense_csv(out_a / "X_check.csv", has_header=True, allow_negative=True)
    assert X_hat.shape == (10, 20)
    assert X_check.shape == (30, 10)

    report = _read_json(out_a / "distortion.json")
    assert report["left"]["max_relative_distortion"] <= 1e-6
    assert report["right"]["max_relative_distortion"] <= 1e-6
    assert report["shape"] == [30, 20]

    for name in ("X_hat.csv", "X_check.csv", "distortion.json"):
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes()


def test_project_matrix_market_output(tmp_path):
    out = tmp_path / "mm"
    status = cli.main(
        ["project", "--format", "synthetic", "--synthetic-d", "25", "--synthetic-n", "15", "--synthetic-rank", "3",
         "--q", "6", "--output-format", "mm", "--out", str(out)]
    )
    assert status == 0
    X_hat = datasets.load_matrix_market(out / "X_hat.mtx", allow_negative=True)
    X_check = datasets.load_matrix_market(out / "X_check.mtx", allow_negative=True)
    assert X_hat.shape == (6, 15)
    assert X_check.shape == (25, 6)


def test_estimate_prints_all_algorithms(capsys):
    assert cli.main(["estimate", "--d", "400", "--n", "4096", "--k", "20", "--q", "25"]) == 0
    report = json.loads(capsys.readouterr().out)
    memory = {e["algorithm"]: e["memory_floats"] for e in report["estimates"]}
    assert memory["mu"] == 1_728_320
    assert memory["fasthals-rp"] == 314_720
    assert report["memory_reduction"] == pytest.approx(1_728_320 / 314_720)


def test_estimate_single_uncompressed_algorithm(capsys):
    assert cli.main(["estimate", "--algo", "mu", "--d", "5000", "--n", "1000", "--k", "60"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["estimates"][0]["flops_per_iteration"] == 2_400_000_000
    assert report["memory_reduction"] is None


def test_config_file_supplies_defaults(tmp_path, faces_csv):
    config = tmp_path / "run.env"
    out = tmp_path / "from-config"
    config.write_text(
        "# factorization defaults\n"
        f"ALGO=hals\nK=2\nITERS=5\nINPUT={faces_csv}\nOUT={out}\nNO_NORMALIZE=true\n"
    )
    assert cli.main(["--config", str(config), "factorize"]) == 0
    summary = _read_json(out / "summary.json")
    assert summary["algorithm"] == "hals"
    assert summary["k"] == 2

    # flags win over the file
    assert cli.main(["--config", str(config), "factorize", "--k", "3"]) == 0
    assert _read_json(out / "summary.json")["k"] == 3


def test_config_file_rejects_unknown_keys(tmp_path):
    config = tmp_path / "bad.env"
    config.write_text("COLOUR=blue\n")
    assert cli.main(["--config", str(config), "estimate", "--d", "4", "--n", "4", "--k", "1"]) == 2


def test_parser_is_named_after_the_application():
    assert cli.build_parser().prog == "rpnmf"
