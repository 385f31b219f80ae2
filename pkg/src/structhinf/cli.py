"""Command-line interface: validate, evaluate, design, sweep, benchmark.

Problem files are JSON (see :mod:`structhinf.sysfile`); the bundled
examples can be referenced by bare name.  Exit codes: 0 on success
(warnings allowed), 1 on input or validation errors, 2 on numerical
failure.
"""
from __future__ import annotations

import csv
import functools
import io
import json
import math
import sys
from pathlib import Path

import click
import numpy as np

from .errors import NumericsError, SchemaError, StructHinfError
from .expr import BasisSet
from .hinf import hinf_norm, sigma_max, spectral_abscissa
from .ratio import competitive_ratio
from .saddle import StepSchedule, inner_max, objective, objective_result, \
    solve_saddle, verify_saddle
from .subgrad import ParamAug, gain_subgradient, param_subgradient
from .sysfile import Problem, design_result_to_dict, dump_json, fixture_names, \
    load_fixture, load_gains, load_problem, verify_report_to_dict
from .system import GainExpansion, Graph, StateSpace, structure_masks, \
    validate_system
from .util import parallel_map

_EXIT_INPUT = 1
_EXIT_NUMERIC = 2


def _guarded(fn):
    """Convert package errors to diagnostics with the documented exit codes."""
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except NumericsError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(_EXIT_NUMERIC)
        except StructHinfError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(_EXIT_INPUT)
    return wrapper


def _load(system_ref: str) -> Problem:
    """Load a problem from a path, or from the bundled set by bare name."""
    if not Path(system_ref).exists() and system_ref in fixture_names():
        return load_fixture(system_ref)
    return load_problem(system_ref)


def _apply_design_graph(problem: Problem, value) -> Problem:
    """Swap the problem's design graph; remask any initial strategy."""
    if value is None:
        return problem
    system = problem.system
    N = system.partition.N
    if value == "complete":
        graph = Graph.complete(N)
    elif value == "local":
        graph = Graph(np.eye(N, dtype=int))
    elif value == "control":
        graph = system.control_graph
    else:
        text = value.strip()
        if not text.startswith("["):
            text = Path(value).read_text()
        try:
            lists = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"design graph is not valid JSON: {exc}") from None
        graph = Graph.from_lists(lists, N)
    system = system.with_design_graph(graph)
    gamma0 = problem.gamma0
    if gamma0 is not None:
        masks = structure_masks(system.partition, graph, gamma0.eta)
        gamma0 = GainExpansion(gamma0.eta, gamma0.coeffs, masks)
    return Problem(system=system, gamma0=gamma0, alpha0=problem.alpha0,
                   solver=problem.solver, name=problem.name)


def _zero_gamma(system) -> GainExpansion:
    masks = structure_masks(system.partition, system.design_graph, system.eta)
    return GainExpansion(system.eta, np.zeros_like(masks), masks)


def _resolve_gamma(problem: Problem, gain_file, zero_gain: bool):
    """Pick the strategy: explicit file, forced zero, or the file's gamma0."""
    if gain_file and zero_gain:
        raise SchemaError("--gain-file and --zero-gain are mutually exclusive")
    system = problem.system
    if gain_file:
        return load_gains(gain_file, system), f"file:{gain_file}"
    if zero_gain or problem.gamma0 is None:
        return _zero_gamma(system), "zero"
    return problem.gamma0, "gamma0"


def _parse_alpha(text: str, system) -> np.ndarray:
    try:
        alpha = np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise SchemaError(f"--alpha must be comma-separated numbers, "
                          f"got {text!r}") from None
    if alpha.shape != (system.n_params,):
        raise SchemaError(f"--alpha must list {system.n_params} values "
                          f"({', '.join(system.params)})")
    if not system.in_box(alpha):
        raise SchemaError(f"--alpha {alpha.tolist()} is outside the parameter box")
    return alpha


def _default_alpha(problem: Problem) -> np.ndarray:
    if problem.alpha0 is not None:
        return problem.alpha0
    return 0.5 * (problem.system.box_lo + problem.system.box_hi)


def _write_output(path, text: str) -> None:
    if path:
        Path(path).write_text(text)
    else:
        click.echo(text, nl=False)


def _grid_points(system, grid_n: int):
    from itertools import product
    if grid_n == 1:
        # a one-point discretization of an interval is its midpoint,
        # matching the norm command's default evaluation point
        axes = [np.array([0.5 * (a + b)])
                for a, b in zip(system.box_lo, system.box_hi)]
    else:
        axes = [np.linspace(a, b, grid_n)
                for a, b in zip(system.box_lo, system.box_hi)]
    return [np.array(pt) for pt in product(*axes)]


def _fmt(value: float) -> str:
    if math.isinf(value):
        return "inf"
    return repr(float(value))


system_option = click.option(
    "--system", "system_ref", required=True, metavar="PATH|NAME",
    help="Problem file path, or a bundled name: " + ", ".join(fixture_names()))
output_option = click.option(
    "--output", default=None, metavar="PATH",
    help="Write the result here instead of stdout.")
gain_file_option = click.option(
    "--gain-file", default=None, metavar="PATH",
    help="Strategy to evaluate (a design output file).")
zero_gain_option = click.option(
    "--zero-gain", is_flag=True, help="Evaluate the open loop (K = 0).")
design_graph_option = click.option(
    "--design-graph", default=None, metavar="SPEC",
    help="Override the design graph: 'complete', 'local', 'control', "
         "inline JSON adjacency lists, or a path to them.")
tol_option = click.option(
    "--tol-hinf", default=1e-7, show_default=True,
    help="Relative tolerance of the norm computation.")


@click.group()
@click.version_option(package_name="structhinf", prog_name="structhinf")
def main():
    """Structured parameter-dependent H-infinity design tools."""


@main.command("validate")
@system_option
@_guarded
def cmd_validate(system_ref):
    """Load a problem file and check its structural invariants."""
    problem = _load(system_ref)
    report = validate_system(problem.system)
    for msg in report.errors:
        click.echo(f"error: {msg}")
    for msg in report.warnings:
        click.echo(f"warning: {msg}")
    if not report.ok:
        sys.exit(_EXIT_INPUT)
    click.echo(f"ok: {system_ref} "
               f"({len(report.warnings)} warning(s))")


@main.command("norm")
@system_option
@output_option
@gain_file_option
@zero_gain_option
@design_graph_option
@tol_option
@click.option("--alpha", default=None, metavar="V1,V2,...",
              help="Parameter point (default: the file's alpha0, else the "
                   "box midpoint).")
@click.option("--worst", is_flag=True,
              help="Ascend to the worst parameter point first.")
@_guarded
def cmd_norm(system_ref, output, gain_file, zero_gain, design_graph,
             tol_hinf, alpha, worst):
    """Closed-loop norm of a strategy at one parameter point."""
    problem = _apply_design_graph(_load(system_ref), design_graph)
    system = problem.system
    gamma, source = _resolve_gamma(problem, gain_file, zero_gain)
    pt = _parse_alpha(alpha, system) if alpha else _default_alpha(problem)
    if worst:
        inner = inner_max(system, gamma, pt, problem.solver.step,
                          eps=problem.solver.eps_inner,
                          max_iter=problem.solver.max_inner, rel_tol=tol_hinf)
        pt, J, res = inner.alpha, inner.J, inner.result
        if inner.destabilized:
            pt = inner.alpha_unstable
    else:
        res = objective_result(system, gamma, pt, rel_tol=tol_hinf)
        J = res.gamma if res.stable else math.inf
    unstable = not math.isfinite(J)
    click.echo(f"J = {_fmt(J)}" + (" (closed loop unstable)" if unstable else ""))
    payload = {
        "J": None if unstable else J,
        "unstable": unstable,
        "alpha": pt,
        "parameters": list(system.params),
        "gamma_source": source,
        "worst": bool(worst),
        "peaks": [{
            "omega": "inf" if math.isinf(p.omega) else p.omega,
            "sigma": p.sigma,
            "multiplicity": p.multiplicity,
        } for p in (res.peaks if res is not None else ())],
    }
    if output:
        _write_output(output, dump_json(payload))


@main.command("design")
@system_option
@output_option
@design_graph_option
@tol_option
@click.option("--alpha0", default=None, metavar="V1,V2,...",
              help="Initial parameter point (default: the file's alpha0).")
@click.option("--eps-inner", default=None, type=float,
              help="Inner ascent stopping tolerance (default: from the file).")
@click.option("--eps-outer", default=None, type=float,
              help="Outer descent stopping tolerance (default: from the file).")
@click.option("--step", default=None, metavar="c/k:C",
              help="Step schedule (default: from the file).")
@click.option("--max-outer", default=None, type=int)
@click.option("--max-inner", default=None, type=int)
@click.option("--seed", default=0, show_default=True,
              help="Seed for the verification sampler.")
@click.option("--verify/--no-verify", "do_verify", default=False,
              help="Append a sampled saddle check to the output.")
@click.option("--verify-radius", default=1e-2, show_default=True)
@click.option("--verify-samples", default=200, show_default=True)
@click.option("--verify-slack", default=1e-3, show_default=True)
@_guarded
def cmd_design(system_ref, output, design_graph, tol_hinf, alpha0,
               eps_inner, eps_outer, step, max_outer, max_inner, seed,
               do_verify, verify_radius, verify_samples, verify_slack):
    """Run the min-max design loop and write the strategy found."""
    problem = _apply_design_graph(_load(system_ref), design_graph)
    system = problem.system
    solver = problem.solver
    gamma0 = problem.gamma0 if problem.gamma0 is not None else _zero_gamma(system)
    start = _parse_alpha(alpha0, system) if alpha0 else _default_alpha(problem)
    schedule = StepSchedule.parse(step) if step else solver.step
    settings = {
        "eps_inner": eps_inner if eps_inner is not None else solver.eps_inner,
        "eps_outer": eps_outer if eps_outer is not None else solver.eps_outer,
        "max_outer": max_outer if max_outer is not None else solver.max_outer,
        "max_inner": max_inner if max_inner is not None else solver.max_inner,
    }
    result = solve_saddle(system, gamma0, start, schedule,
                          rel_tol=tol_hinf, **settings)
    click.echo(f"status = {result.status}  J* = {_fmt(result.J_star)}  "
               f"alpha* = {np.asarray(result.alpha_star).tolist()}  "
               f"outer iterations = {len(result.trace) - 1}")
    if result.message:
        click.echo(result.message, err=True)

    payload = design_result_to_dict(result, system)
    payload["settings"] = {**settings, "step": str(schedule),
                           "tol_hinf": tol_hinf, "seed": seed,
                           "alpha0": start, "system": problem.name or system_ref}
    if do_verify and result.status == "converged":
        report = verify_saddle(system, result, radius=verify_radius,
                               samples=verify_samples, slack=verify_slack,
                               seed=seed, rel_tol=tol_hinf)
        payload["verify"] = verify_report_to_dict(report)
        click.echo(f"verify: {'pass' if report.passed else 'FAIL'} "
                   f"(alpha violation {report.max_alpha_violation:.3g}, "
                   f"gain violation {report.max_gain_violation:.3g})")
    elif do_verify:
        click.echo("verify: skipped (run did not converge)", err=True)

    _write_output(output, dump_json(payload))
    if result.status == "instability-abort":
        sys.exit(_EXIT_NUMERIC)


@main.command("sweep")
@system_option
@output_option
@gain_file_option
@zero_gain_option
@design_graph_option
@tol_option
@click.option("--grid-n", default=11, show_default=True,
              help="Grid points per parameter dimension.")
@_guarded
def cmd_sweep(system_ref, output, gain_file, zero_gain, design_graph,
              tol_hinf, grid_n):
    """Tabulate the strategy's norm over a parameter grid as CSV."""
    if grid_n < 1:
        raise SchemaError("--grid-n must be at least 1")
    problem = _apply_design_graph(_load(system_ref), design_graph)
    system = problem.system
    gamma, _ = _resolve_gamma(problem, gain_file, zero_gain)
    pts = _grid_points(system, grid_n)
    values = parallel_map(
        lambda pt: objective(system, gamma, pt, rel_tol=tol_hinf), pts)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(list(system.params) + ["J"])
    for pt, J in zip(pts, values):
        writer.writerow([repr(float(v)) for v in pt] + [_fmt(J)])
    _write_output(output, buf.getvalue())


@main.command("ratio")
@system_option
@output_option
@gain_file_option
@zero_gain_option
@design_graph_option
@tol_option
@click.option("--grid-n", default=11, show_default=True,
              help="Grid points per parameter dimension.")
@click.option("--restarts", default=8, show_default=True,
              help="Random baseline starts per grid point.")
@click.option("--seed", default=0, show_default=True)
@_guarded
def cmd_ratio(system_ref, output, gain_file, zero_gain, design_graph,
              tol_hinf, grid_n, restarts, seed):
    """Compare a strategy against pointwise-optimal baselines on a grid."""
    if grid_n < 2:
        raise SchemaError("--grid-n must be at least 2")
    problem = _apply_design_graph(_load(system_ref), design_graph)
    system = problem.system
    gamma, _ = _resolve_gamma(problem, gain_file, zero_gain)
    report = competitive_ratio(system, gamma, grid_n=grid_n,
                               restarts=restarts, seed=seed, rel_tol=tol_hinf)
    for msg in report.warnings:
        click.echo(f"warning: {msg}", err=True)
    click.echo(f"r = {_fmt(report.r)} at alpha = "
               f"{np.asarray(report.argmax_alpha).tolist()}")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(list(system.params) + ["J_strategy", "J_baseline",
                                           "ratio", "flag"])
    for rec in report.records:
        row = [repr(float(v)) for v in rec.alpha]
        row += ["nan" if math.isnan(v) else _fmt(v)
                for v in (rec.j_strategy, rec.j_baseline, rec.ratio)]
        row.append(rec.flag)
        writer.writerow(row)
    _write_output(output, buf.getvalue())


# ---------------------------------------------------------------------------
# Self-test: cross-checks core results against independent oracles.

def _random_stable_system(rng) -> StateSpace:
    n = int(rng.integers(2, 7))
    m = int(rng.integers(1, 4))
    p = int(rng.integers(1, 4))
    A = rng.standard_normal((n, n))
    A -= (spectral_abscissa(A) + rng.uniform(0.2, 1.0)) * np.eye(n)
    return StateSpace(A=A, B=rng.standard_normal((n, m)),
                      C=rng.standard_normal((p, n)),
                      D=0.3 * rng.standard_normal((p, m)))


def _grid_norm_oracle(ss: StateSpace, points: int = 4000) -> float:
    """Norm via dense log-grid evaluation plus local refinement."""
    from scipy.optimize import minimize_scalar
    lam, V = np.linalg.eig(ss.A)
    CV = ss.C @ V
    VB = np.linalg.solve(V, ss.B)
    grid = np.concatenate([[0.0], np.logspace(-3, 3, points)])
    gains = 1.0 / (1j * grid[:, None] - lam[None, :])
    T = np.einsum("ok,wk,km->wom", CV, gains, VB) + ss.D
    sig = np.linalg.svd(T, compute_uv=False)[:, 0]
    k = int(np.argmax(sig))
    best = sig[k]
    lo = grid[max(k - 1, 0)]
    hi = grid[k + 1] if k + 1 < grid.size else 2.0 * grid[k]
    res = minimize_scalar(lambda w: -sigma_max(ss, w), bounds=(lo, hi),
                          method="bounded", options={"xatol": 1e-12})
    return max(best, -res.fun, sigma_max(ss, np.inf))


def _selftest_norm(rng, checks: list) -> None:
    worst = 0.0
    for _ in range(12):
        ss = _random_stable_system(rng)
        want = _grid_norm_oracle(ss)
        got = hinf_norm(ss, with_peaks=False).gamma
        worst = max(worst, abs(got - want) / want)
    checks.append(("norm vs dense grid oracle", worst <= 1e-4,
                   f"max rel err {worst:.2e}"))


def _selftest_subgradients(rng, checks: list) -> None:
    problem = load_fixture("example1")
    system = problem.system
    gamma0 = problem.gamma0
    h, worst_g, worst_a = 1e-5, 0.0, 0.0
    tested = 0
    while tested < 3:
        coeffs = gamma0.coeffs + 0.2 * rng.standard_normal(
            gamma0.coeffs.shape) * gamma0.masks
        gamma = gamma0.with_coeffs(coeffs)
        alpha = rng.uniform(system.box_lo + 0.1, system.box_hi - 0.1)
        res = objective_result(system, gamma, alpha, rel_tol=1e-9)
        if not res.stable or len(res.peaks) != 1 or res.peaks[0].multiplicity != 1:
            continue
        tested += 1
        dG = gain_subgradient(system, gamma, alpha, res) * gamma.masks
        scale = max(1.0, float(np.abs(dG).max()))
        for idx in np.argwhere(gamma.masks > 0):
            e = np.zeros_like(coeffs)
            e[tuple(idx)] = h
            jp = objective(system, gamma.with_coeffs(coeffs + e), alpha, rel_tol=1e-10)
            jm = objective(system, gamma.with_coeffs(coeffs - e), alpha, rel_tol=1e-10)
            worst_g = max(worst_g, abs((jp - jm) / (2 * h) - dG[tuple(idx)]) / scale)
        da = param_subgradient(system, gamma, alpha, res)
        scale = max(1.0, float(np.abs(da).max()))
        for i in range(system.n_params):
            e = np.zeros(system.n_params)
            e[i] = h
            jp = objective(system, gamma, alpha + e, rel_tol=1e-10)
            jm = objective(system, gamma, alpha - e, rel_tol=1e-10)
            worst_a = max(worst_a, abs((jp - jm) / (2 * h) - da[i]) / scale)
    checks.append(("gain subgradient vs finite differences", worst_g <= 1e-2,
                   f"max scaled err {worst_g:.2e}"))
    checks.append(("parameter subgradient vs finite differences", worst_a <= 1e-2,
                   f"max scaled err {worst_a:.2e}"))


def _selftest_gate(rng, checks: list) -> None:
    for name in fixture_names():
        problem = load_fixture(name)
        system = problem.system
        gamma = problem.gamma0 if problem.gamma0 is not None \
            else _zero_gamma(system)
        aug = ParamAug(system, gamma)
        worst = 0.0
        for _ in range(5):
            alpha = rng.uniform(system.box_lo, system.box_hi)
            at = aug.at(alpha)
            cl = system.closed_loop(gamma.gain(alpha), alpha)
            for _ in range(4):
                w = float(rng.uniform(0.0, 10.0))
                T_aug = at.blocks(w)[0]
                jw = 1j * w * np.eye(cl.n)
                T = cl.C @ np.linalg.solve(jw - cl.A, cl.B) + cl.D
                err = np.abs(T_aug - T).max() / max(1.0, np.abs(T).max())
                worst = max(worst, err)
        checks.append((f"gain-plugged realization gate [{name}]", worst <= 1e-8,
                       f"max rel err {worst:.2e}"))


@main.command("selftest")
@click.option("--seed", default=0, show_default=True)
@_guarded
def cmd_selftest(seed):
    """Cross-check the numerics against independent oracles."""
    rng = np.random.default_rng(seed)
    checks: list = []
    _selftest_norm(rng, checks)
    _selftest_subgradients(rng, checks)
    _selftest_gate(rng, checks)
    failed = 0
    for name, ok, detail in checks:
        click.echo(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
        failed += 0 if ok else 1
    if failed:
        click.echo(f"{failed} of {len(checks)} checks failed", err=True)
        sys.exit(_EXIT_NUMERIC)
    click.echo(f"all {len(checks)} checks passed")


if __name__ == "__main__":
    main()
