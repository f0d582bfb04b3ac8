"""
Steklov splitting lab - command-line front end.

Every subcommand reads a YAML run configuration (or the defaults), runs one
experiment and writes its tables, plots and a manifest into a locked output
directory.

Exit codes: 0 success, 1 inconclusive, 2 usage or configuration error,
3 numerical failure.
"""
import argparse
import logging
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import pandas as pd
import yaml
from pydantic import ValidationError

import steklov_lab.views.settings as settings
from steklov_lab.config import RunConfig, RunManifest
from steklov_lab.modules.errors import (
    ArgumentError,
    CoercivityError,
    ConfigError,
    DeformationError,
    NotApplicableError,
    OracleError,
    RankError,
)
from steklov_lab.modules.fields import field_library, matrix_field, scalar_field
from steklov_lab.modules.forms import ProblemSpec, assemble_problem
from steklov_lab.modules.geometry import build_annulus, build_rectangle
from steklov_lab.modules.oracle import annulus_modes, oracle_table, sorted_eigenvalues
from steklov_lab.modules.search import coeff_simplify, greedy_simplify, make_candidates, split_step
from steklov_lab.modules.shapederiv import (
    derivative_fd_table,
    fd_eigenvalue_check,
    ibp_equivalence_residual,
    w_obstruction_scan,
)
from steklov_lab.modules.spectrum import cluster_eigen, minmax_check, solve_eigen
from steklov_lab.modules.utils import stable_hash, to_builtin
from steklov_lab.preprocessing.mesh_io import export_coo, load_mesh, load_yaml, save_mesh, save_table, save_yaml
from steklov_lab.views import plots, tables
from steklov_lab.views.summary import write_summary

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INCONCLUSIVE = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

COMMANDS = {
    "solve": "solve",
    "deriv-check": "deriv-check",
    "split": "split",
    "simplify": "simplify",
    "coeff": "coeff",
    "oracle": "oracle-compare",
    "w-scan": "w-scan",
}

CONFIG_ERRORS = (ArgumentError, ConfigError, NotApplicableError, ValidationError)
NUMERICAL_ERRORS = (
    DeformationError,
    CoercivityError,
    RankError,
    OracleError,
    np.linalg.LinAlgError,
    ArithmeticError,
)


# --- configuration ---

def apply_override(doc, assignment):
    """Set ``dotted.key=value`` in a config document; only scalar leaves may be set."""
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} is not of the form key=value")
    key, raw = assignment.split("=", 1)
    parts = key.strip().split(".")
    if not all(parts):
        raise ConfigError(f"bad override key {key!r}")
    node = doc
    for part in parts[:-1]:
        child = node.setdefault(part, {})
        if not isinstance(child, dict):
            raise ConfigError(f"{key}: {part} is not a section")
        node = child
    current = node.get(parts[-1])
    if isinstance(current, (dict, list)):
        raise ConfigError(f"{key} is not a scalar field")
    value = yaml.safe_load(raw)
    if isinstance(value, (dict, list)):
        raise ConfigError(f"{key}: only scalar values can be set from the command line")
    node[parts[-1]] = value
    return doc


def load_config(path, command, overrides=(), seed=None, out=None):
    """Read, override and validate the run configuration for ``command``."""
    kind = COMMANDS[command]
    doc = {}
    if path is not None:
        try:
            doc = load_yaml(path) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError(f"{path} does not hold a mapping")
    experiment = doc.setdefault("experiment", {})
    if not isinstance(experiment, dict):
        raise ConfigError("experiment must be a mapping")
    if experiment.setdefault("kind", kind) != kind:
        raise ConfigError(f"config describes a {experiment['kind']!r} experiment, not {kind!r}")
    for assignment in overrides:
        apply_override(doc, assignment)
    if seed is not None:
        doc["seed"] = seed
    if out is not None:
        doc["output"] = str(out)
    return RunConfig.model_validate(doc)


def build_mesh(domain):
    if domain.family == "annulus":
        return build_annulus(domain.r_inner, domain.r_outer, domain.n_radial, domain.n_angular, domain.steklov)
    if domain.family == "rectangle":
        return build_rectangle(domain.width, domain.height, domain.nx, domain.ny, domain.steklov_sides)
    return load_mesh(domain.path)


def build_spec(problem):
    return ProblemSpec(
        problem.variant,
        potential=None if problem.potential is None else scalar_field(
            problem.potential.family, problem.potential.params
        ),
        conductivity=None if problem.conductivity is None else matrix_field(
            problem.conductivity.family, problem.conductivity.params
        ),
        quad_order=problem.quad_order,
        boundary_points=problem.boundary_points,
    )


def _input_hash(config):
    doc = config.model_dump(mode="json")
    doc.pop("output", None)
    return stable_hash(doc)


def output_directory(config):
    if config.output:
        return Path(config.output)
    root = Path(os.environ.get(settings.OUTPUT_ENV_VAR, settings.DEFAULT_OUTPUT_ROOT))
    return root / f"{config.experiment.kind}-{_input_hash(config)[:10]}"


# --- run context ---

class RunContext:
    """Output directory of one run: lock, produced files and metrics."""

    def __init__(self, directory):
        self.directory = Path(directory)
        self.files = []
        self.metrics = {}
        self._lock = None

    def __enter__(self):
        self.directory.mkdir(parents=True, exist_ok=True)
        lock = self.directory / settings.LOCK_FILE
        try:
            fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise ConfigError(f"{self.directory} is locked by another run ({lock})") from None
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        self._lock = lock
        return self

    def __exit__(self, *exc):
        if self._lock is not None:
            self._lock.unlink(missing_ok=True)
            self._lock = None
        return False

    def _register(self, name):
        if name not in self.files:
            self.files.append(name)
        return self.directory / name

    def table(self, key, df):
        name = settings.TABLE_FILES[key]
        save_table(df, self._register(name))
        return df

    def yaml(self, name, doc):
        save_yaml(doc, self._register(name))

    def plot(self, name, draw, *args, **kwargs):
        draw(*args, self._register(name), **kwargs)

    def mesh(self, name, mesh):
        save_mesh(mesh, self._register(name))

    def matrix(self, name, matrix):
        export_coo(matrix, self._register(name))


# --- shared steps ---

def _solve(config, mesh, spec, k=None):
    pair = assemble_problem(mesh, spec)
    k = config.solver.k if k is None else k
    sol = solve_eigen(pair, k)
    return pair, sol


def _pick_group(sol, config, index):
    groups = cluster_eigen(sol, config.solver.cluster_tol)
    if index >= len(groups):
        raise ArgumentError(f"group {index} requested but only {len(groups)} groups were computed")
    return groups[index]


def _default_fields(mesh):
    """Boundary-moving fields (a cos 2 theta radial bump on the annulus) and an interior bump, amplitude 0.1."""
    fields = make_candidates(mesh, "S", 1) + make_candidates(mesh, "interior", 1)
    if mesh.family == "annulus":
        fields.insert(1, make_candidates(mesh, "S", 9)[-1])
    return [psi.scaled(0.1) for psi in fields]


def _ibp_check():
    """Pre/post integration-by-parts check on the reference triangle with fixed polynomials."""
    u = np.array([[0.0, 0.0, 1.0], [0.5, 1.0, 0.0], [1.0, 0.0, 0.0]])
    v = np.array([[1.0, -1.0, 2.0], [0.0, 0.5, 0.0], [-1.0, 0.0, 0.0]])
    psi = (
        np.array([[0.0, 0.3, 0.0], [0.1, 0.2, 0.0], [0.4, 0.0, 0.0]]),
        np.array([[0.2, 0.0, -0.3], [0.0, 0.1, 0.0], [0.0, 0.0, 0.0]]),
    )
    return ibp_equivalence_residual(u, v, psi)


# --- commands ---

def cmd_solve(config, ctx):
    mesh, spec = build_mesh(config.domain), build_spec(config.problem)
    pair, sol = _solve(config, mesh, spec)
    spectrum = ctx.table("spectrum", tables.spectrum_table(sol, config.solver.cluster_tol))
    groups = cluster_eigen(sol, config.solver.cluster_tol)
    ctx.table("groups", tables.group_table(groups))
    ctx.metrics.update(
        eigenvalues=sol.count,
        finite_modes=sol.rank,
        discarded=sol.discarded,
        multiplicities=[g.multiplicity for g in groups],
    )
    if len(spectrum):
        ctx.plot("spectrum.svg", plots.plot_spectrum, spectrum)
    if config.solver.export_matrices:
        ctx.matrix("left_matrix.csv", pair.left)
        ctx.matrix("right_matrix.csv", pair.right)
    if config.solver.minmax and sol.count:
        report = minmax_check(pair, sol, config.solver.minmax_trials, config.seed)
        ctx.table("minmax", tables.minmax_table(report))
        ctx.metrics["minmax_violations"] = len(report.violations)
        if not report.passed:
            return EXIT_NUMERICAL
    return EXIT_OK


def cmd_deriv_check(config, ctx):
    exp = config.experiment
    mesh, spec = build_mesh(config.domain), build_spec(config.problem)
    fields = [field_library(f.family, f.params) for f in exp.fields] or _default_fields(mesh)

    frames = []
    for i, psi in enumerate(fields):
        frame = derivative_fd_table(mesh, psi, exp.steps, spec)
        frame.insert(0, "family", psi.family)
        frame.insert(0, "field", i)
        frames.append(frame)
    checks = ctx.table("derivatives", pd.concat(frames, ignore_index=True))
    slow = int((checks["status"] == "slow").sum())
    ctx.metrics.update(fields=len(fields), slow_rows=slow)
    if "order" in checks.columns:
        ctx.plot("derivative_convergence.svg", plots.plot_convergence, checks)

    failed = slow > 0
    if exp.ibp:
        ibp = _ibp_check()
        ctx.table("ibp", pd.DataFrame([ibp]))
        ctx.metrics["ibp_residual"] = ibp["residual"]
        failed = failed or ibp["residual"] > settings.IBP_TOL

    if exp.group is not None:
        _, sol = _solve(config, mesh, spec)
        group = _pick_group(sol, config, exp.group)
        reports = []
        for i, psi in enumerate(fields):
            report = fd_eigenvalue_check(spec, mesh, psi, group, exp.steps, sol)
            frame = report.table.copy()
            frame.insert(0, "field", i)
            reports.append(frame)
        slopes = ctx.table("slopes", pd.concat(reports, ignore_index=True))
        ctx.plot("eigen_slopes.svg", plots.plot_slopes, slopes[slopes["field"] == 0])
    return EXIT_NUMERICAL if failed else EXIT_OK


def cmd_split(config, ctx):
    exp = config.experiment
    mesh, spec = build_mesh(config.domain), build_spec(config.problem)
    _, sol = _solve(config, mesh, spec)
    group = _pick_group(sol, config, exp.group)
    perturbation = None if exp.perturbation is None else field_library(exp.perturbation.family, exp.perturbation.params)
    candidates = None if perturbation is not None else make_candidates(mesh, exp.support, exp.candidates)
    result = split_step(
        spec,
        mesh,
        group,
        exp.budget,
        sol=sol,
        tracked=sol.count,
        support=exp.support,
        candidates=candidates,
        perturbation=perturbation,
        gap_tol=exp.gap_tol,
        seed=config.seed,
    )
    ctx.metrics.update(status=result.status, t=result.t, group=list(group.members), lambda_bar=group.value)
    if result.choice is not None:
        ctx.table("matrix", tables.matrix_table(result.choice.matrix.matrix, group))
        ctx.yaml("perturbation.yaml", result.choice.describe())
        ctx.metrics["deviation"] = result.choice.deviation
    if result.predicted is not None:
        ctx.metrics["predicted_slopes"] = [float(s) for s in result.predicted]
    ctx.table("split", pd.DataFrame(result.trials, columns=[
        "t", "predicted_gap", "observed_gap", "max_multiplicity", "accepted", "reason"
    ]))
    if result.status == "split":
        ctx.table("spectrum", tables.spectrum_table(result.solution, config.solver.cluster_tol))
        ctx.mesh("mesh.yaml", result.mesh)
    return {
        "split": EXIT_OK,
        "noop": EXIT_OK,
        "no_split_found": EXIT_INCONCLUSIVE,
    }.get(result.status, EXIT_NUMERICAL)


def _write_trace(ctx, trace):
    ctx.yaml("trace.yaml", trace.to_dict())
    ctx.table("trace", tables.trace_table(trace))
    trajectory = ctx.table("trajectory", tables.trajectory_table(trace))
    ctx.plot("trajectory.svg", plots.plot_trajectory, trajectory)
    ctx.metrics.update(
        termination=trace.termination,
        steps=len(trace.steps),
        total_applied=trace.total_applied,
        remark_bound=trace.remark_bound,
        final_spectrum=trace.final_spectrum,
    )
    if trace.termination == "converged" or trace.termination == "zero_budget":
        return EXIT_OK
    if trace.termination == "step_failed":
        return EXIT_NUMERICAL
    return EXIT_INCONCLUSIVE


def cmd_simplify(config, ctx):
    exp = config.experiment
    mesh, spec = build_mesh(config.domain), build_spec(config.problem)
    trace = greedy_simplify(
        spec,
        mesh,
        exp.N,
        exp.budget,
        gap_tol=exp.gap_tol,
        support=exp.support,
        max_steps=exp.max_steps,
        seed=config.seed,
        candidate_count=exp.candidates,
    )
    ctx.mesh("mesh.yaml", trace.mesh)
    return _write_trace(ctx, trace)


def cmd_coeff(config, ctx):
    exp = config.experiment
    mesh, spec = build_mesh(config.domain), build_spec(config.problem)
    trace = coeff_simplify(
        spec,
        mesh,
        exp.N,
        exp.budget,
        gap_tol=exp.gap_tol,
        kind=exp.perturbation_kind,
        region=exp.region,
        max_steps=exp.max_steps,
        seed=config.seed,
        candidate_count=exp.candidates,
    )
    return _write_trace(ctx, trace)


def cmd_oracle(config, ctx):
    exp = config.experiment
    domain = config.domain
    if domain.family != "annulus" or domain.steklov != "outer":
        raise ConfigError("the analytic comparison needs an annulus with S on the outer circle")
    if config.problem.potential is not None or config.problem.conductivity is not None:
        raise ConfigError("the analytic comparison needs unit coefficients")
    modes = annulus_modes(config.problem.variant, domain.r_inner, domain.r_outer, exp.k_max)
    ctx.table("oracle", tables.oracle_frame(oracle_table(modes)))
    reference = sorted_eigenvalues(modes, exp.count)

    mesh, spec = build_mesh(domain), build_spec(config.problem)
    _, sol = _solve(config, mesh, spec, exp.count)
    comparison = ctx.table("oracle_compare", tables.oracle_comparison(sol.eigenvalues, reference))
    spectrum = ctx.table("spectrum", tables.spectrum_table(sol, config.solver.cluster_tol))
    ctx.plot("spectrum.svg", plots.plot_spectrum, spectrum, oracle=reference[: sol.count])
    ctx.metrics["max_rel_err"] = float(comparison["rel_err"].max()) if len(comparison) else 0.0
    return EXIT_OK


def cmd_w_scan(config, ctx):
    exp = config.experiment
    mesh, spec = build_mesh(config.domain), build_spec(config.problem)
    _, sol = _solve(config, mesh, spec)
    group = _pick_group(sol, config, exp.group)
    scan = w_obstruction_scan(spec, sol, group)
    ctx.table("w_scan", scan["table"])
    ctx.metrics["w_scan"] = scan["summary"]
    return EXIT_OK


HANDLERS = {
    "solve": cmd_solve,
    "deriv-check": cmd_deriv_check,
    "split": cmd_split,
    "simplify": cmd_simplify,
    "coeff": cmd_coeff,
    "oracle-compare": cmd_oracle,
    "w-scan": cmd_w_scan,
}


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def run(config):
    """Execute one configured experiment and write its manifest; returns the exit code."""
    directory = output_directory(config)
    manifest = RunManifest(
        config=config.model_dump(mode="json"),
        started=_now(),
        input_hash=_input_hash(config),
    )
    with RunContext(directory) as ctx:
        try:
            code = HANDLERS[config.experiment.kind](config, ctx)
            status = {EXIT_OK: "ok", EXIT_INCONCLUSIVE: "inconclusive"}.get(code, "failed")
        except CONFIG_ERRORS as exc:
            logger.error("%s", exc)
            code, status = EXIT_CONFIG, "config_error"
            ctx.metrics["error"] = str(exc)
        except NUMERICAL_ERRORS as exc:
            logger.error("%s: %s", type(exc).__name__, exc)
            code, status = EXIT_NUMERICAL, "numerical_error"
            ctx.metrics["error"] = f"{type(exc).__name__}: {exc}"
        except Exception as exc:
            logger.exception("unexpected failure in %s", config.experiment.kind)
            code, status = EXIT_NUMERICAL, "failed"
            ctx.metrics["error"] = f"{type(exc).__name__}: {exc}"
        manifest.files = list(ctx.files)
        manifest.metrics = to_builtin(ctx.metrics)
        manifest.status = status
        manifest.exit_code = code
        manifest.finished = _now()
        save_yaml(manifest.model_dump(mode="json"), directory / settings.MANIFEST_FILE)
    logger.info("%s finished with status %s (exit %d) in %s", config.experiment.kind, status, code, directory)
    return code


def cmd_report(directory):
    path = write_summary(directory)
    logger.info("summary written to %s", path)
    return EXIT_OK


# --- entry point ---

def build_parser():
    parser = argparse.ArgumentParser(prog="steklov-lab", description="Steklov splitting lab")
    sub = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        p = sub.add_parser(command)
        p.add_argument("--config", type=Path, help="YAML run configuration")
        p.add_argument("--seed", type=int, help="random seed")
        p.add_argument("--out", type=Path, help="output directory")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override a scalar config field, e.g. solver.k=12")
        p.add_argument("-v", "--verbose", action="store_true")
    report = sub.add_parser("report")
    report.add_argument("directory", type=Path)
    report.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format=settings.LOG_FORMAT,
        force=True,
    )
    if args.command == "report":
        try:
            return cmd_report(args.directory)
        except ConfigError as exc:
            logger.error("%s", exc)
            return EXIT_CONFIG
    try:
        config = load_config(args.config, args.command, args.overrides, args.seed, args.out)
        return run(config)
    except CONFIG_ERRORS as exc:
        logger.error("%s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
