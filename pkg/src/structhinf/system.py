"""Interconnected parameter-dependent plants and structured gain families.

A plant is a finite expansion ``M(alpha) = sum_l xi_l(alpha) * M_l`` of
constant coefficient matrices against a scalar basis, partitioned into
subsystems.  Control and design graphs encode which subsystems may
exchange measurements and model information; they induce entrywise
masks on the block-diagonal gain expansions that the synthesis routines
optimize over.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import accumulate, product
from typing import NamedTuple, Optional

import numpy as np

from .errors import DimensionError, DomainError, StructureError
from .expr import BasisSet

__all__ = [
    "Partition", "Graph", "StateSpace", "ParamSystem", "GainExpansion",
    "ValidationReport", "structure_masks", "block_mask", "eval_strategy",
    "project_gains", "project_params", "validate_system",
]


def _offsets(dims) -> tuple:
    return (0, *accumulate(dims))


def block_mask(row_dims, col_dims, adj: np.ndarray) -> np.ndarray:
    """Expand a subsystem adjacency matrix to an entrywise 0/1 mask."""
    adj = np.asarray(adj, dtype=float)
    return np.repeat(np.repeat(adj, row_dims, axis=0), col_dims, axis=1)


@dataclass(frozen=True)
class Partition:
    """Per-subsystem dimensions of all stacked vectors.

    ``n``, ``m_w``, ``m_u``, ``o_y`` and ``p`` give per-subsystem
    state, disturbance, input, measurement and parameter dimensions;
    the stacked vectors concatenate the subsystem pieces in order.
    """

    n: tuple
    m_w: tuple
    m_u: tuple
    o_y: tuple
    p: tuple

    def __post_init__(self):
        N = len(self.n)
        for name in ("m_w", "m_u", "o_y", "p"):
            if len(getattr(self, name)) != N:
                raise DimensionError(f"partition field {name} must have length {N}")
        if N < 1:
            raise DimensionError("partition needs at least one subsystem")
        for name in ("n", "m_w", "m_u", "o_y", "p"):
            if any(int(d) != d or d < 0 for d in getattr(self, name)):
                raise DimensionError(f"partition field {name} must be nonnegative integers")
        if sum(self.n) < 1:
            raise DimensionError("total state dimension must be positive")

    @property
    def N(self) -> int:
        return len(self.n)

    def offsets(self, which: str) -> tuple:
        return _offsets(getattr(self, which))

    def param_owner(self) -> np.ndarray:
        """Subsystem index owning each scalar parameter, in stack order."""
        return np.repeat(np.arange(self.N), self.p)


class Graph:
    """Directed access graph over subsystems as a binary adjacency matrix.

    Entry ``adj[i, j] = 1`` means subsystem i has access to subsystem j
    (including to itself when ``adj[i, i] = 1``).
    """

    def __init__(self, adj):
        adj = np.asarray(adj)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise DimensionError("adjacency matrix must be square")
        if not np.isin(adj, (0, 1)).all():
            raise StructureError("adjacency entries must be 0 or 1")
        self.adj = adj.astype(np.int8)

    @property
    def N(self) -> int:
        return self.adj.shape[0]

    @classmethod
    def complete(cls, N: int) -> "Graph":
        return cls(np.ones((N, N), dtype=int))

    @classmethod
    def from_lists(cls, lists, N: Optional[int] = None) -> "Graph":
        """Build from adjacency lists with 1-based neighbor indices."""
        N = len(lists) if N is None else N
        adj = np.zeros((N, N), dtype=int)
        for i, row in enumerate(lists):
            for j in row:
                if not 1 <= j <= N:
                    raise StructureError(f"neighbor index {j} out of range 1..{N}")
                adj[i, j - 1] = 1
        return cls(adj)

    def to_lists(self) -> list:
        return [[j + 1 for j in np.flatnonzero(row)] for row in self.adj]

    def __eq__(self, other):
        return isinstance(other, Graph) and np.array_equal(self.adj, other.adj)


@dataclass(frozen=True, eq=False)
class StateSpace:
    """Constant state-space realization (A, B, C, D)."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        for name in ("A", "B", "C", "D"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise DimensionError("A must be square")
        if self.B.shape[0] != n or self.C.shape[1] != n:
            raise DimensionError("B/C state dimension mismatch")
        if self.D.shape != (self.C.shape[0], self.B.shape[1]):
            raise DimensionError("D shape must be (outputs, inputs)")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def n_in(self) -> int:
        return self.B.shape[1]

    @property
    def n_out(self) -> int:
        return self.C.shape[0]


class Matrices(NamedTuple):
    A: np.ndarray
    Bw: np.ndarray
    Bu: np.ndarray
    Cy: np.ndarray
    Dyw: np.ndarray
    Cz: np.ndarray
    Dzw: np.ndarray
    Dzu: np.ndarray


def _check_stack(stack: np.ndarray, L: int, shape, name: str) -> np.ndarray:
    stack = np.asarray(stack, dtype=float)
    if stack.shape != (L, *shape):
        raise DimensionError(f"{name} stack must have shape {(L, *shape)}, got {stack.shape}")
    return stack


class ParamSystem:
    """Parameter-dependent plant with performance channel and access graphs.

    Parameters
    ----------
    params : sequence of str
        Ordered parameter names.
    box_lo, box_hi : array_like
        Per-parameter bounds of the admissible box.
    partition : Partition
    xi : BasisSet
        Plant expansion basis; coefficient stacks have one slab per entry.
    eta : BasisSet
        Gain expansion basis available to the designer.
    A_coef, Bw_coef, Bu_coef, Cy_coef, Dyw_coef : array_like
        Coefficient stacks, leading axis indexed like ``xi``.
    Cz, Dzw, Dzu : array_like
        Constant performance-channel matrices.
    control_graph, design_graph : Graph

    Raises
    ------
    StructureError
        If any Cy/Dyw coefficient violates the control-graph structure.
    DomainError
        If a basis function is not well defined over the box.
    """

    def __init__(self, params, box_lo, box_hi, partition, xi, eta,
                 A_coef, Bw_coef, Bu_coef, Cy_coef, Dyw_coef,
                 Cz, Dzw, Dzu, control_graph, design_graph):
        self.params = tuple(params)
        self.box_lo = np.asarray(box_lo, dtype=float)
        self.box_hi = np.asarray(box_hi, dtype=float)
        self.partition = partition
        self.xi = xi
        self.eta = eta
        self.control_graph = control_graph
        self.design_graph = design_graph

        P = len(self.params)
        if self.box_lo.shape != (P,) or self.box_hi.shape != (P,):
            raise DimensionError("box bounds must match the parameter count")
        if not (np.isfinite(self.box_lo).all() and np.isfinite(self.box_hi).all()):
            raise DomainError("parameter box must be bounded")
        if (self.box_lo > self.box_hi).any():
            raise DomainError("parameter box is empty (lo > hi)")
        if sum(partition.p) != P:
            raise DimensionError("partition parameter dimensions must sum "
                                 "to the parameter count")
        if xi.params != self.params or eta.params != self.params:
            raise DimensionError("basis parameter lists must match the system's")
        if control_graph.N != partition.N or design_graph.N != partition.N:
            raise DimensionError("graph size must match the number of subsystems")

        n, m_w, m_u, o_y = (sum(partition.n), sum(partition.m_w),
                            sum(partition.m_u), sum(partition.o_y))
        L = len(xi)
        self.A_coef = _check_stack(A_coef, L, (n, n), "A")
        self.Bw_coef = _check_stack(Bw_coef, L, (n, m_w), "Bw")
        self.Bu_coef = _check_stack(Bu_coef, L, (n, m_u), "Bu")
        self.Cy_coef = _check_stack(Cy_coef, L, (o_y, n), "Cy")
        self.Dyw_coef = _check_stack(Dyw_coef, L, (o_y, m_w), "Dyw")
        self.Cz = np.asarray(Cz, dtype=float)
        self.Dzw = np.asarray(Dzw, dtype=float)
        self.Dzu = np.asarray(Dzu, dtype=float)
        o_z = self.Cz.shape[0]
        if self.Cz.shape != (o_z, n) or self.Dzw.shape != (o_z, m_w) \
                or self.Dzu.shape != (o_z, m_u):
            raise DimensionError("performance matrices have inconsistent shapes")

        # Measurements may only involve states and disturbances of
        # control-graph neighbors.
        allowed_y = block_mask(partition.o_y, partition.n, control_graph.adj)
        allowed_w = block_mask(partition.o_y, partition.m_w, control_graph.adj)
        for l in range(L):
            if (self.Cy_coef[l][allowed_y == 0] != 0).any():
                raise StructureError(
                    f"Cy coefficient {l} has entries outside the control graph")
            if (self.Dyw_coef[l][allowed_w == 0] != 0).any():
                raise StructureError(
                    f"Dyw coefficient {l} has entries outside the control graph")

        xi.check_box(self.box_lo, self.box_hi)
        eta.check_box(self.box_lo, self.box_hi)

    # -- dimensions ---------------------------------------------------------
    @property
    def n(self):
        return sum(self.partition.n)

    @property
    def m_w(self):
        return sum(self.partition.m_w)

    @property
    def m_u(self):
        return sum(self.partition.m_u)

    @property
    def o_y(self):
        return sum(self.partition.o_y)

    @property
    def o_z(self):
        return self.Cz.shape[0]

    @property
    def n_params(self):
        return len(self.params)

    def in_box(self, alpha, tol: float = 1e-12) -> bool:
        alpha = np.asarray(alpha, dtype=float)
        slack = tol * (1.0 + np.abs(self.box_hi - self.box_lo))
        return bool((alpha >= self.box_lo - slack).all()
                    and (alpha <= self.box_hi + slack).all())

    def eval_matrices(self, alpha, check: bool = True) -> Matrices:
        """Evaluate all plant matrices at a parameter point."""
        if check and not self.in_box(alpha):
            raise DomainError(f"parameter point {np.asarray(alpha)} outside the box")
        xs = self.xi.values(alpha)
        return Matrices(
            A=np.tensordot(xs, self.A_coef, axes=1),
            Bw=np.tensordot(xs, self.Bw_coef, axes=1),
            Bu=np.tensordot(xs, self.Bu_coef, axes=1),
            Cy=np.tensordot(xs, self.Cy_coef, axes=1),
            Dyw=np.tensordot(xs, self.Dyw_coef, axes=1),
            Cz=self.Cz, Dzw=self.Dzw, Dzu=self.Dzu)

    def with_design_graph(self, design_graph: Graph) -> "ParamSystem":
        """Same plant under a different model-information graph."""
        return ParamSystem(
            self.params, self.box_lo, self.box_hi, self.partition,
            self.xi, self.eta, self.A_coef, self.Bw_coef, self.Bu_coef,
            self.Cy_coef, self.Dyw_coef, self.Cz, self.Dzw, self.Dzu,
            self.control_graph, design_graph)

    def closed_loop(self, K: np.ndarray, alpha, mats: Optional[Matrices] = None) -> StateSpace:
        """Closed-loop disturbance-to-performance realization under u = K y.

        Stability is not required; the caller decides what an unstable
        realization means.
        """
        K = np.asarray(K, dtype=float)
        if K.shape != (self.m_u, self.o_y):
            raise DimensionError(f"gain must be {(self.m_u, self.o_y)}, got {K.shape}")
        m = mats if mats is not None else self.eval_matrices(alpha)
        BuK = m.Bu @ K
        DzuK = m.Dzu @ K
        return StateSpace(
            A=m.A + BuK @ m.Cy,
            B=m.Bw + BuK @ m.Dyw,
            C=m.Cz + DzuK @ m.Cy,
            D=m.Dzw + DzuK @ m.Dyw)


class GainExpansion:
    """Block-diagonal gain family ``K(alpha) = sum_l eta_l(alpha) * G_l``.

    Coefficients must vanish on entries their masks disallow; the masks
    are normally produced by :func:`structure_masks`.
    """

    def __init__(self, eta: BasisSet, coeffs, masks):
        self.eta = eta
        self.coeffs = np.asarray(coeffs, dtype=float)
        self.masks = np.asarray(masks, dtype=float)
        if self.coeffs.ndim != 3 or self.coeffs.shape[0] != len(eta):
            raise DimensionError("coefficient stack must have one slab per basis function")
        if self.masks.shape != self.coeffs.shape:
            raise DimensionError("masks must match the coefficient stack shape")
        if not np.isin(self.masks, (0.0, 1.0)).all():
            raise StructureError("mask entries must be 0 or 1")
        if (self.coeffs[self.masks == 0.0] != 0.0).any():
            raise StructureError("gain coefficients violate their structure masks")

    @property
    def L(self) -> int:
        return self.coeffs.shape[0]

    @property
    def shape(self):
        return self.coeffs.shape[1:]

    def gain(self, alpha) -> np.ndarray:
        """Evaluate the gain matrix at a parameter point."""
        return np.tensordot(self.eta.values(alpha), self.coeffs, axes=1)

    def with_coeffs(self, coeffs) -> "GainExpansion":
        return GainExpansion(self.eta, coeffs, self.masks)


def eval_strategy(gamma: GainExpansion, alpha) -> np.ndarray:
    """Evaluate a gain expansion at a parameter point."""
    return gamma.gain(alpha)


def structure_masks(partition: Partition, design_graph: Graph, eta: BasisSet) -> np.ndarray:
    """Entrywise 0/1 masks for each gain coefficient slab.

    Off-diagonal blocks are always disallowed.  Diagonal block (i, i) of
    slab l is allowed exactly when every parameter that eta_l depends on
    belongs to a subsystem the design graph lets subsystem i see.
    """
    N = partition.N
    owner = partition.param_owner()
    ru = partition.offsets("m_u")
    ry = partition.offsets("o_y")
    masks = np.zeros((len(eta), sum(partition.m_u), sum(partition.o_y)))
    for l, dep in enumerate(eta.deps):
        for i in range(N):
            visible = {k for k in range(owner.size) if design_graph.adj[i, owner[k]]}
            if dep <= visible:
                masks[l, ru[i]:ru[i + 1], ry[i]:ry[i + 1]] = 1.0
    return masks


def project_gains(gamma: GainExpansion, coeffs=None) -> GainExpansion:
    """Project a coefficient stack onto the masked structure set.

    With no explicit stack, re-projects the expansion's own coefficients.
    The projection zeroes disallowed entries; it is idempotent and
    non-expansive in the Frobenius norm.
    """
    stack = gamma.coeffs if coeffs is None else np.asarray(coeffs, dtype=float)
    return gamma.with_coeffs(stack * gamma.masks)


def project_params(alpha, box_lo, box_hi) -> np.ndarray:
    """Clamp a parameter point into the box, componentwise."""
    return np.clip(np.asarray(alpha, dtype=float), box_lo, box_hi)


@dataclass
class ValidationReport:
    errors: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors


def _grid(lo, hi, points_per_dim: int):
    axes = [np.linspace(a, b, points_per_dim) for a, b in zip(lo, hi)]
    return [np.array(pt) for pt in product(*axes)]


def validate_system(system: ParamSystem, grid_points: int = 3) -> ValidationReport:
    """Check structural invariants and advisory regularity assumptions.

    Structure violations are errors.  The regularity assumptions behind
    the synthesis formulas (normalized Dzu and Dyw channels, sampled
    stabilizability/detectability) produce warnings only, since the
    algorithm may still run without them.
    """
    rep = ValidationReport()
    part = system.partition

    allowed_y = block_mask(part.o_y, part.n, system.control_graph.adj)
    allowed_w = block_mask(part.o_y, part.m_w, system.control_graph.adj)
    for l in range(len(system.xi)):
        if (system.Cy_coef[l][allowed_y == 0] != 0).any():
            rep.errors.append(f"Cy coefficient {l} violates the control graph")
        if (system.Dyw_coef[l][allowed_w == 0] != 0).any():
            rep.errors.append(f"Dyw coefficient {l} violates the control graph")

    dzu_gram = system.Dzu.T @ system.Dzu
    if not np.allclose(dzu_gram, np.eye(system.m_u), atol=1e-9):
        rep.warnings.append(
            "Dzu'Dzu is not the identity; the control-weight normalization "
            "assumed by the synthesis formulas does not hold")

    pts = _grid(system.box_lo, system.box_hi, grid_points)
    dyw_bad = pbh_stab_bad = pbh_det_bad = False
    for alpha in pts:
        m = system.eval_matrices(alpha)
        if not np.allclose(m.Dyw @ m.Dyw.T, np.eye(system.o_y), atol=1e-9):
            dyw_bad = True
        lam = np.linalg.eigvals(m.A)
        scale = max(1.0, np.abs(lam).max())
        for lv in lam[lam.real >= -1e-9]:
            sI_A = lv * np.eye(system.n) - m.A
            if np.linalg.matrix_rank(np.hstack([sI_A, m.Bu]), tol=1e-8 * scale) < system.n:
                pbh_stab_bad = True
            if np.linalg.matrix_rank(np.vstack([sI_A, m.Cy]), tol=1e-8 * scale) < system.n:
                pbh_det_bad = True
    if dyw_bad:
        rep.warnings.append(
            "Dyw(alpha)Dyw(alpha)' is not the identity on the sample grid; the "
            "measurement-noise normalization assumed by the synthesis formulas "
            "does not hold")
    if pbh_stab_bad:
        rep.warnings.append("sampled PBH test suggests an unstabilizable mode")
    if pbh_det_bad:
        rep.warnings.append("sampled PBH test suggests an undetectable mode")

    return rep
