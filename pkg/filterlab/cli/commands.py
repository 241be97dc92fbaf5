"""
Subcommand handlers.

Each handler returns a process exit code. Domain failures are translated
here, never in the library:

    0  success
    1  a validation suite failed
    2  usage or configuration error
    3  runtime numerical failure

Errors go to standard error as a single JSON object.
"""
import json
import logging
import sys
from functools import wraps
from typing import Callable, List, Optional

from pydantic import ValidationError

from filterlab.cli.csv_io import write_report_csv, write_summary, write_trajectory_csv
from filterlab.core.errors import (
    ConfigError,
    FilterLabError,
    IncompatibleFilterError,
    UnknownModelError,
)
from filterlab.models.schemas import SummaryFile
from filterlab.tools.simulation import (
    RunReport,
    Scenario,
    apply_overrides,
    compare_filters,
    load_scenario,
    run_filter,
    simulate,
    state_dim,
)
from filterlab.tools.validation_tool import run_suite

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION_FAILED = 1
EXIT_USAGE = 2
EXIT_RUNTIME = 3

USAGE_ERRORS = (ConfigError, UnknownModelError, IncompatibleFilterError)


def _report_error(kind: str, message: str, field: Optional[str], exit_code: int) -> int:
    payload = {"error": kind, "message": message, "field": field, "exit_code": exit_code}
    print(json.dumps(payload), file=sys.stderr)
    return exit_code


def _validation_field(exc: ValidationError) -> Optional[str]:
    errors = exc.errors()
    if not errors:
        return None
    return ".".join(str(part) for part in errors[0]["loc"]) or None


def handle_errors(fn: Callable[..., int]) -> Callable[..., int]:
    """Map domain exceptions raised by a handler to exit codes."""

    @wraps(fn)
    def wrapper(*args, **kwargs) -> int:
        try:
            return fn(*args, **kwargs)
        except ValidationError as exc:
            field = _validation_field(exc)
            message = exc.errors()[0]["msg"] if exc.errors() else str(exc)
            return _report_error("ConfigError", f"{field}: {message}" if field else message, field, EXIT_USAGE)
        except USAGE_ERRORS as exc:
            return _report_error(type(exc).__name__, str(exc), getattr(exc, "field", None), EXIT_USAGE)
        except FilterLabError as exc:
            logger.debug("Runtime failure", exc_info=True)
            return _report_error(type(exc).__name__, str(exc), None, EXIT_RUNTIME)
        except OSError as exc:
            logger.debug("I/O failure", exc_info=True)
            return _report_error(type(exc).__name__, str(exc), None, EXIT_RUNTIME)

    return wrapper


def _load(config: str, seed: Optional[int], kind: Optional[str] = None):
    doc, _ = load_scenario(config)
    if seed is not None or kind is not None:
        doc = apply_overrides(doc, seed=seed, kind=kind)
    return doc, Scenario.from_document(doc)


def _summary_file(s: Scenario, reports: List[RunReport]) -> SummaryFile:
    return SummaryFile(
        model=s.model_id,
        seed=s.seed,
        horizon=s.horizon,
        runs=[report.summary() for report in reports],
    )


def _print_summary(reports: List[RunReport], quiet: bool) -> None:
    if quiet:
        return
    for report in reports:
        rmse = ", ".join(f"{value:.6g}" for value in report.rmse)
        print(
            f"{report.kind:>15}  rmse=[{rmse}]  mean_nees={report.mean_nees:.4f}  "
            f"mean_iterations={report.mean_iterations:.2f}  wall_time={report.wall_time:.3f}s"
        )


def _write_reports(out: str, s: Scenario, reports: List[RunReport]) -> None:
    rows = (row for report in reports for row in report.rows())
    count = write_report_csv(out, rows, state_dim(s.model))
    summary = write_summary(out, _summary_file(s, reports))
    logger.info("Wrote %d rows to %s and summary to %s", count, out, summary)


@handle_errors
def cmd_simulate(config: str, out: str, seed: Optional[int] = None, quiet: bool = False) -> int:
    """Generate ground truth and noisy observations and write the trajectory table."""
    _, s = _load(config, seed)
    traj = simulate(s)
    write_trajectory_csv(out, traj)
    logger.info("Simulated %s for %d steps (seed %d) -> %s", s.model_id, s.horizon, s.seed, out)
    return EXIT_OK


@handle_errors
def cmd_run(
    config: str,
    out: str,
    seed: Optional[int] = None,
    kind: Optional[str] = None,
    quiet: bool = False,
) -> int:
    """Run the configured filter over a simulated trajectory."""
    doc, s = _load(config, seed, kind)
    report = run_filter(doc.filter_kind, s, simulate(s), doc.filter.iteration)
    _write_reports(out, s, [report])
    _print_summary([report], quiet)
    return EXIT_OK


@handle_errors
def cmd_compare(
    config: str,
    out: str,
    seed: Optional[int] = None,
    kinds: Optional[List[str]] = None,
    quiet: bool = False,
) -> int:
    """Run several filters on one shared trajectory."""
    doc, s = _load(config, seed)
    kinds = kinds or doc.compare or [doc.filter_kind]
    reports = compare_filters(kinds, s, doc.filter.iteration)
    _write_reports(out, s, reports)
    _print_summary(reports, quiet)
    return EXIT_OK


@handle_errors
def cmd_validate(suite: str, quiet: bool = False) -> int:
    """Run an oracle validation suite and print each check's margin."""
    results = run_suite(suite)
    if not quiet:
        for result in results:
            status = "PASS" if result.valid else "FAIL"
            print(f"[{status}] {result.suite}")
            for check in result.checks:
                mark = "ok" if check.passed else "FAILED"
                print(
                    f"    {check.name}: value={check.value:.3e} threshold={check.threshold:.1e} "
                    f"margin={check.margin:.3e} {mark}"
                )
    failed = [result for result in results if not result.valid]
    for result in failed:
        _report_error(
            "ValidationFailed",
            f"suite {result.suite} failed: {'; '.join(result.errors)}",
            None,
            EXIT_VALIDATION_FAILED,
        )
    return EXIT_VALIDATION_FAILED if failed else EXIT_OK
