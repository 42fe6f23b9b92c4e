"""
Command-line interface.

Every command prints a JSON report (fixed key order, floats rounded to 12
significant digits) or CSV with --format csv, to stdout or --out. Library
errors map to exit codes through PksBoundsError.exit_code: 2 for invalid
input, 3 when a bound does not apply, 4 for numerical failures.
"""
import asyncio
import csv
import io
import json
import logging
import math
import sys
from functools import wraps
from typing import Any, Callable, Dict, List, Optional, Sequence

import click

from config import DEFAULT_TOLERANCES, load_density_document, load_sim_config
from criteria import evaluate_criteria
from errors import InvalidInputError, PksBoundsError
from moments import compute_moments, density_from_document
from ode_bound import (
    InequalityProblem,
    blowup_time_simple,
    blowup_time_sharp,
    constant_rate,
    envelope_table,
    linear_rate,
    log_rate,
)
from pks_bounds import PksRate, bound_report, check_paper_values, roots_report
from simulator import check_envelope, run
from specialfn import describe, inverse_summary

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s - %(levelname)s - %(message)s'
SIGNIFICANT_DIGITS = 12


def _round(value: Any) -> Any:
    """Recursively round floats; non-finite floats become strings"""
    if isinstance(value, bool) or value is None:
        return value
    if isinstance(value, float):
        if not math.isfinite(value):
            return str(value)
        return float(f"{value:.{SIGNIFICANT_DIGITS}g}")
    if isinstance(value, dict):
        return {key: _round(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_round(item) for item in value]
    if hasattr(value, "item"):
        return _round(value.item())
    return value


def to_json(payload: Any) -> str:
    return json.dumps(_round(payload), indent=2, allow_nan=False)


def _flatten(payload: Dict[str, Any], prefix: str = "") -> Dict[str, Any]:
    flat = {}
    for key, value in payload.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(_flatten(value, f"{name}."))
        elif isinstance(value, (list, tuple)):
            flat[name] = ";".join(str(item) for item in value)
        else:
            flat[name] = value
    return flat


def to_csv(rows: Sequence[Dict[str, Any]]) -> str:
    rows = [_flatten(_round(row)) for row in rows]
    columns: List[str] = []
    for row in rows:
        for key in row:
            if key not in columns:
                columns.append(key)
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buffer.getvalue()


def emit(ctx: click.Context, payload: Any, rows: Optional[Sequence[Dict[str, Any]]] = None):
    """Write payload as JSON, or rows (default [payload]) as CSV"""
    fmt = ctx.obj["format"]
    if fmt == "csv":
        text = to_csv(rows if rows is not None else [payload])
    else:
        text = to_json(payload) + "\n"
    out = ctx.obj["out"]
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        logger.info(f"Wrote {fmt} output to {out}")
    else:
        click.echo(text, nl=False)


def handle_errors(func: Callable) -> Callable:
    """Turn library errors into an error document on stderr and the mapped exit code"""
    @wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except PksBoundsError as e:
            logger.error(f"{type(e).__name__}: {e.message}")
            click.echo(to_json(e.to_dict()), err=True)
            sys.exit(e.exit_code)
        except click.exceptions.Exit:
            raise
        except click.ClickException:
            raise
        except Exception as e:
            logger.exception(f"Unexpected failure in {func.__name__}")
            click.echo(to_json({"error": type(e).__name__, "message": str(e)}), err=True)
            sys.exit(1)
    return wrapper


def _float_list(text: str, name: str) -> List[float]:
    try:
        values = [float(item) for item in text.split(",") if item.strip()]
    except ValueError as e:
        raise InvalidInputError(f"--{name} must be a comma-separated list of numbers: {e}") from e
    if not values:
        raise InvalidInputError(f"--{name} is empty")
    return values


def _center(b0x: Optional[float], b0y: Optional[float]):
    if b0x is None and b0y is None:
        return None
    return (b0x or 0.0, b0y or 0.0)


def _override_output(ctx: click.Context, param: click.Parameter, value: Optional[str]):
    if value is not None:
        ctx.ensure_object(dict)[param.name] = value


def output_options(func: Callable) -> Callable:
    """--format and --out after the command name; they override the group-level flags"""
    func = click.option("--out", "out", type=click.Path(dir_okay=False, writable=True), default=None,
                        expose_value=False, callback=_override_output,
                        help="Write output to a file instead of stdout")(func)
    return click.option("--format", "format", type=click.Choice(["json", "csv"]), default=None,
                        expose_value=False, callback=_override_output,
                        help="Output format [default: json or the group --format]")(func)


@click.group()
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]), default="json", show_default=True)
@click.option("--out", type=click.Path(dir_okay=False, writable=True), default=None,
              help="Write output to a file instead of stdout")
@click.option("--log-level", type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False),
              default="WARNING", show_default=True)
@click.option("--verbose", "-v", is_flag=True, help="Shortcut for --log-level INFO")
@click.pass_context
def cli(ctx: click.Context, fmt: str, out: Optional[str], log_level: str, verbose: bool):
    """Blow-up criteria and existence-time bounds for 2D Keller-Segel with consumption.

    All quantities are dimensionless.
    """
    level = logging.INFO if verbose and log_level.upper() == "WARNING" else getattr(logging, log_level.upper())
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr, force=True)
    ctx.ensure_object(dict)
    ctx.obj.update({"format": fmt, "out": out})


@cli.command("specialfn-eval")
@output_options
@click.option("--alpha", type=float, default=1.0, show_default=True)
@click.option("--r", "r", type=float, default=None, help="Radius at which to evaluate g_alpha")
@click.option("--rho", type=float, default=None, help="Value at which to invert g_1")
@click.option("--eps", type=float, default=None, help="Also report the eps-bounds on g_1^{-1}(rho)")
@click.option("--rel-tol", type=float, default=DEFAULT_TOLERANCES.quad_rel_tol, show_default=True)
@click.option("--validity-threshold", type=float, default=DEFAULT_TOLERANCES.validity_threshold,
              show_default=True)
@click.pass_context
@handle_errors
def specialfn_eval(ctx, alpha, r, rho, eps, rel_tol, validity_threshold):
    """Evaluate g_alpha, the Bessel kernel and the inverse of g_1"""
    if r is None and rho is None:
        raise InvalidInputError("give --r, --rho or both")
    payload: Dict[str, Any] = {}
    if r is not None:
        payload["evaluation"] = describe(alpha, r, rel_tol)
    if rho is not None:
        payload["inverse"] = inverse_summary(rho, eps, validity_threshold)
    emit(ctx, payload)


@cli.command()
@output_options
@click.option("--alpha", type=float, default=1.0, show_default=True)
@click.option("--mass", type=float, default=None)
@click.option("--variance", type=float, default=None)
@click.option("--cc-constant", type=float, default=1.0, show_default=True)
@click.option("--eps", type=float, default=None)
@click.option("--i0", type=float, default=None, help="Second moment I0")
@click.option("--b0x", type=float, default=None)
@click.option("--b0y", type=float, default=None)
@click.option("--density", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Take M, I0, B0 and V2 from a density document")
@click.pass_context
@handle_errors
def criteria(ctx, alpha, mass, variance, cc_constant, eps, i0, b0x, b0y, density):
    """Compare the variance thresholds gamma_star, gamma_cc, gamma_ks and gamma_log"""
    center = _center(b0x, b0y)
    if density is not None:
        moments = compute_moments(density_from_document(load_density_document(density)))
        mass, variance, i0, center = moments.mass, moments.variance, moments.second_moment, moments.center
    elif mass is None:
        raise InvalidInputError("give --mass or --density")
    report = evaluate_criteria(alpha, mass, variance=variance, C=cc_constant, eps=eps,
                               second_moment=i0, center=center)
    emit(ctx, report.to_dict())


@cli.command()
@output_options
@click.option("--mass", type=float, required=True)
@click.option("--alpha", type=float, required=True)
@click.option("--variance", type=float, required=True)
@click.option("--i0", type=float, default=None)
@click.option("--b0x", type=float, default=None)
@click.option("--b0y", type=float, default=None)
@click.option("--cc-constant", type=float, default=1.0, show_default=True)
@click.option("--lambda", "lam", type=float, default=None, help="Scaling factor for n0 -> lambda n0")
@click.option("--eps", type=float, default=None, help="Margin above the blow-up creation threshold")
@click.pass_context
@handle_errors
def bounds(ctx, mass, alpha, variance, i0, b0x, b0y, cc_constant, lam, eps):
    """Every upper bound on the maximal existence time T*"""
    report = bound_report(mass, alpha, variance, I0=i0, B0=_center(b0x, b0y), C=cc_constant, lam=lam, eps=eps)
    emit(ctx, report.to_dict())


@cli.command()
@output_options
@click.option("--rate", type=click.Choice(["pks", "linear", "constant", "log"]), default="pks", show_default=True)
@click.option("--mass", type=float, default=None)
@click.option("--alpha", type=float, default=None)
@click.option("--v0", type=float, required=True)
@click.option("--slope", type=float, default=None)
@click.option("--intercept", type=float, default=None)
@click.option("--points", type=int, default=21, show_default=True)
@click.pass_context
@handle_errors
def ode(ctx, rate, mass, alpha, v0, slope, intercept, points):
    """Blow-up times and envelope table for V' <= f(V)"""
    if rate == "pks":
        if mass is None or alpha is None:
            raise InvalidInputError("--rate pks needs --mass and --alpha")
        func = PksRate(mass, alpha)
    elif rate == "linear":
        if slope is None or intercept is None:
            raise InvalidInputError("--rate linear needs --slope and --intercept")
        func = linear_rate(slope, intercept)
    elif rate == "constant":
        if intercept is None:
            raise InvalidInputError("--rate constant needs --intercept (f = intercept < 0)")
        func = constant_rate(-intercept)
    else:
        func = log_rate()
    if points < 2:
        raise InvalidInputError(f"--points must be >= 2, got {points}")
    problem = InequalityProblem(rate=func, V0=v0)
    table = envelope_table(problem, points)
    payload = {
        "rate": func.name,
        "V0": v0,
        "lambda_star": problem.lambda_star,
        "near_boundary": problem.near_boundary,
        "T_sharp": blowup_time_sharp(problem),
        "T_simple": blowup_time_simple(problem),
        "envelope": table,
    }
    emit(ctx, payload, rows=table)


@cli.command()
@output_options
@click.option("--mass", type=float, required=True)
@click.pass_context
@handle_errors
def roots(ctx, mass):
    """Y0, Y1(M), Y2(M), B1(M) and B2(M)"""
    emit(ctx, roots_report(mass))


@cli.command()
@output_options
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--density", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--check/--no-check", default=True, show_default=True,
              help="Compare the trace with the variance envelope when the criterion holds")
@click.option("--tol", type=float, default=0.05, show_default=True)
@click.pass_context
@handle_errors
def simulate(ctx, config_path, density, check, tol):
    """Run the PDE surrogate and emit its moment trace"""
    config = load_sim_config(config_path)
    n0 = density_from_document(load_density_document(density))
    moments = compute_moments(n0)
    trace = run(config, n0)
    payload: Dict[str, Any] = {
        "config": config.model_dump(),
        "initial_moments": moments.to_dict(),
        "summary": trace.summary(),
        "trace": trace.rows(),
    }
    if check:
        try:
            # moments of the evolved field, after sampling and smoothing
            start = trace.samples[0]
            payload["envelope_check"] = check_envelope(trace, start.mass, config.alpha, start.V, tol=tol).to_dict()
        except PksBoundsError as e:
            logger.info(f"Envelope check skipped: {e.message}")
            payload["envelope_check"] = {"skipped": e.message}
    emit(ctx, payload, rows=trace.rows())


async def _sweep_async(points: List[Dict[str, float]], C: float) -> List[Dict[str, Any]]:
    async def one(point: Dict[str, float]) -> Dict[str, Any]:
        try:
            report = await asyncio.to_thread(bound_report, point["M"], point["alpha"], point["V2"], C=C)
            return report.to_dict()
        except PksBoundsError as e:
            return {**point, "error": type(e).__name__, "message": e.message}
    return list(await asyncio.gather(*(one(p) for p in points)))


def sweep_reports(masses: Sequence[float], alphas: Sequence[float], variances: Sequence[float],
                  C: float = 1.0) -> List[Dict[str, Any]]:
    """bound_report over the product grid, returned in parameter order"""
    points = [{"M": m, "alpha": a, "V2": v} for m in masses for a in alphas for v in variances]
    logger.info(f"Sweeping {len(points)} parameter points")
    return asyncio.run(_sweep_async(points, C))


_SWEEP_COLUMNS = ("M", "alpha", "V2", "gamma_star", "gamma_log", "t_alpha", "t_weak", "t_cc", "t_ks",
                  "t_classic", "t_variance", "L", "K", "t_series", "t_dilog", "error")


@cli.command()
@output_options
@click.option("--mass", "masses", required=True, help="Comma-separated masses")
@click.option("--alpha", "alphas", required=True, help="Comma-separated alphas")
@click.option("--variance", "variances", required=True, help="Comma-separated variances")
@click.option("--cc-constant", type=float, default=1.0, show_default=True)
@click.pass_context
@handle_errors
def sweep(ctx, masses, alphas, variances, cc_constant):
    """bounds over a grid of (M, alpha, V2)"""
    reports = sweep_reports(_float_list(masses, "mass"), _float_list(alphas, "alpha"),
                            _float_list(variances, "variance"), cc_constant)
    rows = [{key: report.get(key) for key in _SWEEP_COLUMNS} for report in reports]
    emit(ctx, {"points": reports}, rows=rows)


@cli.command("check-paper-values")
@output_options
@click.option("--tolerance", type=float, default=5e-3, show_default=True)
@click.pass_context
@handle_errors
def check_paper_values_command(ctx, tolerance):
    """Recompute the published three-decimal roots"""
    rows = check_paper_values(tolerance)
    passed = all(row["pass"] for row in rows)
    emit(ctx, {"tolerance": tolerance, "passed": passed, "rows": rows}, rows=rows)
    if not passed:
        sys.exit(4)


cli.add_command(check_paper_values_command, name="check-published-values")


def dispatch(argv: Optional[Sequence[str]] = None) -> int:
    """Run the CLI on argv and return the exit code instead of exiting"""
    try:
        cli.main(args=list(argv) if argv is not None else None, prog_name="pks-bounds", standalone_mode=False)
    except click.exceptions.Exit as e:
        return e.exit_code
    except click.ClickException as e:
        e.show()
        return e.exit_code
    except click.exceptions.Abort:
        return 1
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 1
    return 0
