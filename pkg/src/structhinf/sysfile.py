"""Problem files: JSON plant descriptions, gains, and solver settings.

A problem file declares the parameter box, the subsystem partition, the
plant and gain bases as expression strings, one coefficient matrix set
per plant basis function, the performance channel, both access graphs
as 1-based adjacency lists, and optionally an initial strategy, an
initial parameter point, and solver settings.  Loading validates the
schema and constructs a :class:`~structhinf.system.ParamSystem`;
dimension and structure problems surface as package exceptions with
the offending JSON path in the message.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import SchemaError
from .expr import BasisSet
from .saddle import SaddleResult, StepSchedule, VerifyReport
from .system import GainExpansion, Graph, ParamSystem, Partition, structure_masks

__all__ = [
    "SolverSettings", "Problem", "load_problem", "load_gains",
    "fixture_names", "load_fixture", "design_result_to_dict",
    "verify_report_to_dict", "dump_json",
]

_MATRIX_KEYS = ("A", "Bw", "Bu", "Cy", "Dyw")


@dataclass(frozen=True)
class SolverSettings:
    """Loop tolerances and step schedule for the design iteration."""

    eps_inner: float = 1e-3
    eps_outer: float = 1e-3
    step: StepSchedule = field(default_factory=lambda: StepSchedule(0.1))
    max_outer: int = 500
    max_inner: int = 200


@dataclass
class Problem:
    """A loaded problem file: the plant plus optional run configuration."""

    system: ParamSystem
    gamma0: Optional[GainExpansion] = None
    alpha0: Optional[np.ndarray] = None
    solver: SolverSettings = field(default_factory=SolverSettings)
    name: str = ""


def _require(obj: dict, key: str, where: str):
    if not isinstance(obj, dict):
        raise SchemaError(f"{where} must be a JSON object")
    if key not in obj:
        raise SchemaError(f"{where} is missing required key {key!r}")
    return obj[key]


def _matrix(value, shape: tuple, where: str) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"{where} is not a numeric matrix: {exc}") from None
    if arr.shape != shape:
        raise SchemaError(f"{where} must have shape {shape[0]}x{shape[1]}, "
                          f"got {'x'.join(map(str, arr.shape)) or 'scalar'}")
    return arr


def _int_list(value, where: str) -> tuple:
    if not isinstance(value, (list, tuple)) or not all(
            isinstance(v, int) and not isinstance(v, bool) for v in value):
        raise SchemaError(f"{where} must be a list of integers")
    return tuple(value)


def _str_list(value, where: str) -> tuple:
    if not isinstance(value, (list, tuple)) or not value or not all(
            isinstance(v, str) for v in value):
        raise SchemaError(f"{where} must be a non-empty list of strings")
    return tuple(value)


def _graph(value, N: int, where: str) -> Graph:
    if not isinstance(value, (list, tuple)) or len(value) != N:
        raise SchemaError(f"{where} must list neighbors for each of the "
                          f"{N} subsystems")
    for i, row in enumerate(value):
        _int_list(row, f"{where}[{i}]")
    return Graph.from_lists(value, N)


def _solver_settings(obj, where: str) -> SolverSettings:
    if obj is None:
        return SolverSettings()
    if not isinstance(obj, dict):
        raise SchemaError(f"{where} must be a JSON object")
    known = {"eps_inner", "eps_outer", "step", "max_outer", "max_inner"}
    unknown = set(obj) - known
    if unknown:
        raise SchemaError(f"{where} has unknown keys {sorted(unknown)}")
    kw = {}
    for key in ("eps_inner", "eps_outer"):
        if key in obj:
            val = obj[key]
            if not isinstance(val, (int, float)) or not val > 0:
                raise SchemaError(f"{where}.{key} must be a positive number")
            kw[key] = float(val)
    if "step" in obj:
        if not isinstance(obj["step"], str):
            raise SchemaError(f"{where}.step must be a string like 'c/k:0.1'")
        kw["step"] = StepSchedule.parse(obj["step"])
    for key in ("max_outer", "max_inner"):
        if key in obj:
            val = obj[key]
            if not isinstance(val, int) or isinstance(val, bool) or val < 1:
                raise SchemaError(f"{where}.{key} must be a positive integer")
            kw[key] = val
    return SolverSettings(**kw)


def load_problem(source) -> Problem:
    """Load a problem from a JSON file path, JSON text, or parsed dict.

    Raises
    ------
    SchemaError
        On malformed or missing fields; messages carry the JSON path.
    DimensionError, StructureError, DomainError, ParseError
        Propagated from system construction when the contents are
        mutually inconsistent.
    """
    if isinstance(source, dict):
        data = source
    else:
        text = str(source)
        if not text.lstrip().startswith("{"):
            try:
                text = Path(source).read_text()
            except OSError as exc:
                raise SchemaError(f"cannot read problem file: {exc}") from None
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"problem file is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise SchemaError("problem file must contain a JSON object")

    params_spec = _require(data, "parameters", "problem file")
    if not isinstance(params_spec, (list, tuple)) or not params_spec:
        raise SchemaError("'parameters' must be a non-empty list")
    names, lo, hi = [], [], []
    for i, entry in enumerate(params_spec):
        where = f"parameters[{i}]"
        name = _require(entry, "name", where)
        if not isinstance(name, str) or not name:
            raise SchemaError(f"{where}.name must be a non-empty string")
        for key, dest in (("min", lo), ("max", hi)):
            val = _require(entry, key, where)
            if not isinstance(val, (int, float)):
                raise SchemaError(f"{where}.{key} must be a number")
            dest.append(float(val))
        names.append(name)
    if len(set(names)) != len(names):
        raise SchemaError("parameter names must be unique")

    part_spec = _require(data, "partition", "problem file")
    part_kw = {}
    for key in ("n", "m_w", "m_u", "o_y", "p"):
        part_kw[key] = _int_list(_require(part_spec, key, "partition"),
                                 f"partition.{key}")
    partition = Partition(**part_kw)
    N = partition.N
    n, m_w = sum(partition.n), sum(partition.m_w)
    m_u, o_y = sum(partition.m_u), sum(partition.o_y)

    xi_src = _str_list(_require(data, "xi_basis", "problem file"), "xi_basis")
    eta_src = _str_list(_require(data, "eta_basis", "problem file"), "eta_basis")
    xi = BasisSet(names, xi_src)
    eta = BasisSet(names, eta_src)

    mats_spec = _require(data, "matrices", "problem file")
    if not isinstance(mats_spec, (list, tuple)) or len(mats_spec) != len(xi_src):
        raise SchemaError(f"'matrices' must list one matrix set per xi_basis "
                          f"entry ({len(xi_src)} expected)")
    shapes = {"A": (n, n), "Bw": (n, m_w), "Bu": (n, m_u),
              "Cy": (o_y, n), "Dyw": (o_y, m_w)}
    stacks = {key: [] for key in _MATRIX_KEYS}
    for l, entry in enumerate(mats_spec):
        for key in _MATRIX_KEYS:
            where = f"matrices[{l}].{key}"
            stacks[key].append(_matrix(_require(entry, key, f"matrices[{l}]"),
                                       shapes[key], where))

    perf = _require(data, "performance", "problem file")
    cz = _require(perf, "Cz", "performance")
    try:
        o_z = len(cz)
    except TypeError:
        raise SchemaError("performance.Cz must be a matrix") from None
    Cz = _matrix(cz, (o_z, n), "performance.Cz")
    Dzw = _matrix(_require(perf, "Dzw", "performance"), (o_z, m_w),
                  "performance.Dzw")
    Dzu = _matrix(_require(perf, "Dzu", "performance"), (o_z, m_u),
                  "performance.Dzu")

    control_graph = _graph(_require(data, "control_graph", "problem file"),
                           N, "control_graph")
    design_graph = _graph(_require(data, "design_graph", "problem file"),
                          N, "design_graph")

    system = ParamSystem(
        names, lo, hi, partition, xi, eta,
        np.stack(stacks["A"]), np.stack(stacks["Bw"]), np.stack(stacks["Bu"]),
        np.stack(stacks["Cy"]), np.stack(stacks["Dyw"]),
        Cz, Dzw, Dzu, control_graph, design_graph)

    gamma0 = None
    if data.get("gamma0") is not None:
        spec = data["gamma0"]
        if not isinstance(spec, (list, tuple)) or len(spec) != len(eta_src):
            raise SchemaError(f"'gamma0' must list one gain matrix per "
                              f"eta_basis entry ({len(eta_src)} expected)")
        coeffs = np.stack([_matrix(g, (m_u, o_y), f"gamma0[{l}]")
                           for l, g in enumerate(spec)])
        masks = structure_masks(partition, design_graph, eta)
        gamma0 = GainExpansion(eta, coeffs, masks)

    alpha0 = None
    if data.get("alpha0") is not None:
        alpha0 = np.asarray(data["alpha0"], dtype=float)
        if alpha0.shape != (len(names),):
            raise SchemaError(f"'alpha0' must list {len(names)} values")

    solver = _solver_settings(data.get("solver"), "solver")
    name = data.get("name", "")
    if not isinstance(name, str):
        raise SchemaError("'name' must be a string")
    return Problem(system=system, gamma0=gamma0, alpha0=alpha0,
                   solver=solver, name=name)


def load_gains(source, system: ParamSystem) -> GainExpansion:
    """Load a strategy from a gain file (typically a design output).

    The file must carry ``eta_basis`` (expression strings over the
    system's parameters) and ``gains`` (one matrix per basis entry).
    The expansion is re-masked against the system's design graph, so a
    strategy that uses information the graph withholds is rejected.
    """
    if isinstance(source, dict):
        data = source
    else:
        path = Path(source)
        try:
            data = json.loads(path.read_text())
        except OSError as exc:
            raise SchemaError(f"cannot read gain file: {exc}") from None
        except json.JSONDecodeError as exc:
            raise SchemaError(f"gain file is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise SchemaError("gain file must contain a JSON object")
    eta_src = _str_list(_require(data, "eta_basis", "gain file"), "eta_basis")
    spec = _require(data, "gains", "gain file")
    if not isinstance(spec, (list, tuple)) or len(spec) != len(eta_src):
        raise SchemaError("'gains' must list one matrix per eta_basis entry")
    eta = BasisSet(system.params, eta_src)
    eta.check_box(system.box_lo, system.box_hi)
    shape = (system.m_u, system.o_y)
    coeffs = np.stack([_matrix(g, shape, f"gains[{l}]")
                       for l, g in enumerate(spec)])
    masks = structure_masks(system.partition, system.design_graph, eta)
    return GainExpansion(eta, coeffs, masks)


def fixture_names() -> tuple:
    """Names of the bundled example problems."""
    return ("example1", "example1_full", "platoon")


def fixture_text(name: str) -> str:
    """Raw JSON text of a bundled problem file."""
    if name not in fixture_names():
        raise SchemaError(f"unknown fixture {name!r}; "
                          f"available: {', '.join(fixture_names())}")
    return (resources.files("structhinf") / "fixtures" / f"{name}.json").read_text()


def load_fixture(name: str) -> Problem:
    """Load one of the bundled example problems by name."""
    return load_problem(json.loads(fixture_text(name)))


def _plain(obj):
    """Recursively convert numpy containers to JSON-serializable types.

    Non-finite floats become the strings "inf", "-inf", "nan": JSON has
    no literals for them and diagnostic payloads must stay loadable.
    """
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (np.floating, float)):
        value = float(obj)
        if not np.isfinite(value):
            return "inf" if value > 0 else ("-inf" if value < 0 else "nan")
        return value
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def dump_json(obj) -> str:
    """Serialize deterministically: sorted keys, two-space indent."""
    return json.dumps(_plain(obj), indent=2, sort_keys=True,
                      allow_nan=False) + "\n"


def design_result_to_dict(result: SaddleResult, system: ParamSystem) -> dict:
    """Machine-readable design output, reusable as a gain file."""
    gamma = result.gamma_star
    return {
        "status": result.status,
        "message": result.message,
        "J_star": result.J_star,
        "alpha_star": np.asarray(result.alpha_star),
        "parameters": list(system.params),
        "eta_basis": list(gamma.eta.sources),
        "gains": gamma.coeffs,
        "masks": gamma.masks.astype(int),
        "trace": [{
            "outer": rec.outer,
            "J": rec.J,
            "alpha": list(rec.alpha),
            "step": rec.step,
            "step_norm": rec.step_norm,
            "inner_iters": rec.inner_iters,
            "halvings": rec.halvings,
        } for rec in result.trace],
    }


def verify_report_to_dict(report: VerifyReport) -> dict:
    return {
        "passed": report.passed,
        "J_ref": report.J_ref,
        "max_alpha_violation": report.max_alpha_violation,
        "max_gain_violation": report.max_gain_violation,
        "samples": report.samples,
        "radius": report.radius,
        "slack": report.slack,
    }
