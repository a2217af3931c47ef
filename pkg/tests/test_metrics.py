"""Metrics containers and CSV round trips."""

import numpy as np
import pytest

from asyncfp.metrics import (
    BENCH_COLUMNS,
    COLUMNS,
    BenchRow,
    EpochRow,
    RunMetrics,
    read_bench_csv,
    read_metrics_csv,
    write_bench_csv,
    write_metrics_csv,
)


def sample_metrics():
    rows = [
        EpochRow(0, 2.5, None, 6.25, 6.25, 0.45, 0.0),
        EpochRow(1, 1.25, None, 1.5625, 2.0, 0.45, 3.5),
        EpochRow(2, 0.625, 0.9, None, None, 0.45, None),
    ]
    return RunMetrics(
        rows=rows,
        config={"problem": "jacobi", "seed": 7, "eta": 0.45, "oracle": True},
        summary={"final_residual": 0.625, "max_staleness": 4},
    )


def test_round_trip(tmp_path):
    path = tmp_path / "run.csv"
    metrics = sample_metrics()
    write_metrics_csv(metrics, path)
    back = read_metrics_csv(path)
    assert back.rows == metrics.rows
    assert back.config == metrics.config
    assert back.summary == metrics.summary


def test_absent_columns_stay_as_empty_cells(tmp_path):
    path = tmp_path / "run.csv"
    write_metrics_csv(sample_metrics(), path)
    lines = path.read_text().splitlines()
    data = [ln for ln in lines if not ln.startswith("#")]
    assert data[0] == ",".join(COLUMNS)
    # the objective cell is empty on the first row, never missing
    assert data[1].split(",")[1] == "2.5"
    assert data[1].split(",")[2] == ""
    assert all(len(ln.split(",")) == len(COLUMNS) for ln in data[1:])


def test_config_echo_precedes_header(tmp_path):
    path = tmp_path / "run.csv"
    write_metrics_csv(sample_metrics(), path)
    first = path.read_text().splitlines()[0]
    assert first.startswith("#")
    assert "problem" in first


def test_epoch_monotonicity_enforced():
    rows = [EpochRow(1, 1.0, None, None, None, 0.5, None),
            EpochRow(1, 0.5, None, None, None, 0.5, None)]
    with pytest.raises(ValueError, match="increasing"):
        RunMetrics(rows=rows)


def test_negative_residual_rejected():
    with pytest.raises(ValueError, match="nonnegative"):
        RunMetrics(rows=[EpochRow(0, -1.0, None, None, None, 0.5, None)])


def test_read_rejects_foreign_files(tmp_path):
    path = tmp_path / "other.csv"
    path.write_text("a,b,c\n1,2,3\n")
    with pytest.raises(ValueError, match="header"):
        read_metrics_csv(path)


def test_nan_objective_serializes_empty(tmp_path):
    rows = [EpochRow(0, 1.0, float("nan"), None, None, 0.5, None)]
    path = tmp_path / "run.csv"
    write_metrics_csv(RunMetrics(rows=rows), path)
    assert read_metrics_csv(path).rows[0].objective is None


def test_column_accessor():
    metrics = sample_metrics()
    assert metrics.column("epoch") == [0, 1, 2]
    assert metrics.final_residual == 0.625
    np.testing.assert_allclose(metrics.column("eta"), 0.45)


def test_bench_round_trip(tmp_path):
    rows = [
        BenchRow("logistic", 1, "async", 4.2, 1.0),
        BenchRow("logistic", 4, "sync", 3.1, 1.3548),
    ]
    path = tmp_path / "bench.csv"
    write_bench_csv(rows, {"epochs": 20}, path)
    lines = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]
    assert lines[0] == ",".join(BENCH_COLUMNS)
    assert read_bench_csv(path) == rows
