"""Run metrics and their delimited on-disk form.

One CSV schema serves both the simulator and the threaded engine so
downstream tooling never branches on the producer:

    epoch,fixed_point_residual,objective,dist_sq_to_oracle,xi,eta,wall_ms

Columns a given run cannot fill stay present but empty. Every file
starts with ``#`` comment lines echoing the fully resolved config
(seeds included) and ends with ``# summary`` lines, so a results file
is self-describing and auditable.
"""

from __future__ import annotations

import ast
from dataclasses import dataclass, field
from math import isnan
from typing import Sequence

import numpy as np

COLUMNS = (
    "epoch",
    "fixed_point_residual",
    "objective",
    "dist_sq_to_oracle",
    "xi",
    "eta",
    "wall_ms",
)

BENCH_COLUMNS = ("problem", "agents", "mode", "wall_s", "speedup")


@dataclass(frozen=True)
class EpochRow:
    epoch: int
    fixed_point_residual: float
    objective: float | None
    dist_sq_to_oracle: float | None
    xi: float | None
    eta: float
    wall_ms: float | None


@dataclass
class RunMetrics:
    """Per-epoch measurements plus a scalar summary of one run.

    ``final_x`` and ``trajectory`` are in-memory extras for tests and
    callers; they never travel through the CSV form.
    """

    rows: list[EpochRow]
    config: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    final_x: np.ndarray | None = field(default=None, repr=False)
    trajectory: list | None = field(default=None, repr=False)

    def __post_init__(self):
        epochs = [r.epoch for r in self.rows]
        if any(b <= a for a, b in zip(epochs, epochs[1:])):
            raise ValueError("epochs must be strictly increasing")
        if any(r.fixed_point_residual < 0 for r in self.rows):
            raise ValueError("residuals must be nonnegative")

    def column(self, name: str) -> list:
        return [getattr(r, name) for r in self.rows]

    @property
    def final_residual(self) -> float:
        return self.rows[-1].fixed_point_residual


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float) and isnan(value):
        return ""
    return repr(value)


def _parse_value(text: str):
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


def write_metrics_csv(metrics: RunMetrics, path) -> None:
    with open(path, "w") as fh:
        for key, value in metrics.config.items():
            fh.write(f"# {key} = {value!r}\n")
        fh.write(",".join(COLUMNS) + "\n")
        for row in metrics.rows:
            fh.write(",".join(_fmt(getattr(row, c)) for c in COLUMNS) + "\n")
        for key, value in metrics.summary.items():
            fh.write(f"# summary {key} = {value!r}\n")


def read_metrics_csv(path) -> RunMetrics:
    config: dict = {}
    summary: dict = {}
    rows: list[EpochRow] = []
    header_seen = False
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                target = config
                if body.startswith("summary "):
                    body = body[len("summary "):]
                    target = summary
                key, _, raw = body.partition(" = ")
                target[key.strip()] = _parse_value(raw)
                continue
            if not header_seen:
                if line != ",".join(COLUMNS):
                    raise ValueError(f"unexpected metrics header: {line!r}")
                header_seen = True
                continue
            cells = line.split(",")
            if len(cells) != len(COLUMNS):
                raise ValueError(f"row has {len(cells)} cells: {line!r}")
            rows.append(
                EpochRow(
                    epoch=int(cells[0]),
                    fixed_point_residual=float(cells[1]),
                    objective=float(cells[2]) if cells[2] else None,
                    dist_sq_to_oracle=float(cells[3]) if cells[3] else None,
                    xi=float(cells[4]) if cells[4] else None,
                    eta=float(cells[5]),
                    wall_ms=float(cells[6]) if cells[6] else None,
                )
            )
    if not header_seen:
        raise ValueError(f"{path} is not a metrics CSV (no header found)")
    return RunMetrics(rows=rows, config=config, summary=summary)


@dataclass(frozen=True)
class BenchRow:
    problem: str
    agents: int
    mode: str
    wall_s: float
    speedup: float


def write_bench_csv(rows: Sequence[BenchRow], config: dict, path) -> None:
    with open(path, "w") as fh:
        for key, value in config.items():
            fh.write(f"# {key} = {value!r}\n")
        fh.write(",".join(BENCH_COLUMNS) + "\n")
        for row in rows:
            fh.write(
                f"{row.problem},{row.agents},{row.mode},"
                f"{row.wall_s!r},{row.speedup!r}\n"
            )


def read_bench_csv(path) -> list[BenchRow]:
    rows: list[BenchRow] = []
    header_seen = False
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            if not header_seen:
                if line != ",".join(BENCH_COLUMNS):
                    raise ValueError(f"unexpected bench header: {line!r}")
                header_seen = True
                continue
            problem, agents, mode, wall_s, speedup = line.split(",")
            rows.append(BenchRow(problem, int(agents), mode, float(wall_s), float(speedup)))
    return rows
