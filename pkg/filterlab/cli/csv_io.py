"""
CSV writers with a fixed column schema.

Floats are written with 17 significant digits so every double round-trips.

Trajectory file (simulate):
    step, x_0..x_{n-1}, u_0..u_{m-1}, z_0..z_{k-1}
    Row 0 holds the initial truth state with empty control and observation cells.

Report file (run, compare):
    step, filter, x_hat_0..x_hat_{n-1}, P_diag_0..P_diag_{n-1}, nees, iterations, innovation_norm
    One row per (filter, step), grouped by filter in the order requested.

A ``<stem>.summary.json`` sidecar next to each report file carries the
per-filter RMSE, mean NEES and mean iterations.
"""
import csv
from contextlib import contextmanager
from pathlib import Path
from typing import Iterable, Iterator, List, Sequence, TextIO, Union

from filterlab.core.errors import ConfigError
from filterlab.models.schemas import ReportRow, SummaryFile
from filterlab.tools.simulation import Trajectory

PathLike = Union[str, Path]


def format_number(value) -> str:
    if isinstance(value, (bool, int)):
        return str(int(value))
    return format(float(value), ".17g")


def _columns(prefix: str, count: int) -> List[str]:
    return [f"{prefix}_{i}" for i in range(count)]


def trajectory_header(n: int, m: int, k: int) -> List[str]:
    return ["step"] + _columns("x", n) + _columns("u", m) + _columns("z", k)


def report_header(n: int) -> List[str]:
    return (
        ["step", "filter"]
        + _columns("x_hat", n)
        + _columns("P_diag", n)
        + ["nees", "iterations", "innovation_norm"]
    )


def _output_error(path: Path, exc: OSError) -> ConfigError:
    return ConfigError(f"cannot write {path}: {exc.strerror or exc}", "out")


@contextmanager
def _open(path: PathLike) -> Iterator[TextIO]:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as handle:
            yield handle
    except OSError as exc:
        raise _output_error(path, exc) from exc


def write_trajectory_csv(path: PathLike, traj: Trajectory) -> None:
    n = traj.truth_states.shape[1]
    m = traj.controls.shape[1]
    k = traj.measurements.shape[1]
    with _open(path) as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(trajectory_header(n, m, k))
        writer.writerow([0] + [format_number(v) for v in traj.truth_states[0]] + [""] * (m + k))
        for t in range(traj.horizon):
            writer.writerow(
                [t + 1]
                + [format_number(v) for v in traj.truth_states[t + 1]]
                + [format_number(v) for v in traj.controls[t]]
                + [format_number(v) for v in traj.measurements[t]]
            )


def write_report_csv(path: PathLike, rows: Iterable[ReportRow], n: int) -> int:
    """Write report rows; returns the number of data rows."""
    count = 0
    with _open(path) as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(report_header(n))
        for row in rows:
            writer.writerow(
                [row.step, row.filter]
                + [format_number(v) for v in row.x_hat]
                + [format_number(v) for v in row.P_diag]
                + [format_number(row.nees), row.iterations, format_number(row.innovation_norm)]
            )
            count += 1
    return count


def summary_path(report_path: PathLike) -> Path:
    report_path = Path(report_path)
    return report_path.with_name(f"{report_path.stem}.summary.json")


def write_summary(report_path: PathLike, summary: SummaryFile) -> Path:
    path = summary_path(report_path)
    try:
        path.write_text(summary.model_dump_json(indent=2) + "\n", encoding="utf-8")
    except OSError as exc:
        raise _output_error(path, exc) from exc
    return path


def read_rows(path: PathLike) -> Sequence[dict]:
    """Read a CSV written by this module back as dictionaries of strings."""
    with Path(path).open(newline="", encoding="utf-8") as handle:
        return list(csv.DictReader(handle))
