"""Subgradients of the closed-loop H-infinity norm.

Two augmented realizations expose the norm's dependence on the decision
variables as static feedback through constant matrices:

* the gain augmentation stacks scaled copies of the measurement channel
  so the coefficient slabs of a gain expansion act like one wide static
  gain, giving the subgradient with respect to every slab at once;
* the parameter augmentation rewrites the whole parameter dependence of
  the closed loop as a diagonal feedback gain whose diagonal collects
  products of basis-function values, so differentiating that diagonal
  gives the subgradient with respect to the parameter vector.

Both builders verify that their realization reproduces the directly
formed closed loop before use.  An independent oracle differentiates
the resolvent directly and is used as a fallback and for validation.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import NumericsError
from .hinf import HinfResult, SpectraplexWeights, uniform_weights
from .system import GainExpansion, ParamSystem

__all__ = [
    "GainAugRealization", "ParamAug", "ParamAugRealization",
    "build_gain_aug", "gain_subgradient",
    "build_param_aug", "param_subgradient", "param_subgradient_direct",
]

log = logging.getLogger("structhinf.subgrad")


def _rel_err(got: np.ndarray, want: np.ndarray) -> float:
    scale = 1.0 + (np.abs(want).max() if want.size else 0.0)
    diff = np.abs(got - want).max() if want.size else 0.0
    return float(diff / scale)


# ---------------------------------------------------------------------------
# gain augmentation

@dataclass(frozen=True, eq=False)
class GainAugRealization:
    """Closed loop with the measurement channel replicated per gain slab.

    ``Cyp`` stacks ``eta_l(alpha) * Cy(alpha)`` over the gain basis, so
    the hstack of coefficient slabs closes the loop exactly like the
    evaluated gain does.
    """

    A_cl: np.ndarray
    B_cl: np.ndarray
    C_cl: np.ndarray
    D_cl: np.ndarray
    Bu: np.ndarray
    Dzu: np.ndarray
    Cyp: np.ndarray
    Dypw: np.ndarray
    Kp: np.ndarray
    o_y: int

    def blocks(self, omega: float):
        """Transfer blocks (T, G12, G21) at one frequency (inf allowed)."""
        if np.isinf(omega):
            return (self.D_cl.astype(complex), self.Dzu.astype(complex),
                    self.Dypw.astype(complex))
        R = np.linalg.inv(1j * omega * np.eye(self.A_cl.shape[0]) - self.A_cl)
        T = self.C_cl @ R @ self.B_cl + self.D_cl
        G12 = self.C_cl @ R @ self.Bu + self.Dzu
        G21 = self.Cyp @ R @ self.B_cl + self.Dypw
        return T, G12, G21


def build_gain_aug(system: ParamSystem, gamma: GainExpansion, alpha) -> GainAugRealization:
    """Assemble the gain augmentation at a parameter point.

    Raises
    ------
    NumericsError
        If the augmented loop does not reproduce the directly formed
        closed loop to a relative 1e-10.
    """
    mats = system.eval_matrices(alpha)
    es = gamma.eta.values(alpha)
    Cyp = np.concatenate([e * mats.Cy for e in es], axis=0)
    Dypw = np.concatenate([e * mats.Dyw for e in es], axis=0)
    Kp = np.concatenate(list(gamma.coeffs), axis=1)

    A_cl = mats.A + mats.Bu @ Kp @ Cyp
    B_cl = mats.Bw + mats.Bu @ Kp @ Dypw
    C_cl = mats.Cz + mats.Dzu @ Kp @ Cyp
    D_cl = mats.Dzw + mats.Dzu @ Kp @ Dypw

    direct = system.closed_loop(gamma.gain(alpha), alpha, mats=mats)
    err = max(_rel_err(A_cl, direct.A), _rel_err(B_cl, direct.B),
              _rel_err(C_cl, direct.C), _rel_err(D_cl, direct.D))
    if err > 1e-10:
        raise NumericsError(
            f"gain augmentation mismatch: relative error {err:.3e} exceeds 1e-10")
    return GainAugRealization(A_cl=A_cl, B_cl=B_cl, C_cl=C_cl, D_cl=D_cl,
                              Bu=mats.Bu, Dzu=mats.Dzu, Cyp=Cyp, Dypw=Dypw,
                              Kp=Kp, o_y=system.o_y)


def gain_subgradient(system: ParamSystem, gamma: GainExpansion, alpha,
                     result: HinfResult, weights: SpectraplexWeights = None,
                     aug: GainAugRealization = None) -> np.ndarray:
    """Norm subgradient with respect to the gain coefficient slabs.

    Returns the unmasked stack, one slab per gain basis function;
    callers project it onto the admissible structure.
    """
    if not result.stable or not np.isfinite(result.gamma) or result.gamma <= 0:
        raise NumericsError("subgradient requires a stable loop with positive norm")
    if weights is None:
        weights = uniform_weights(result)
    if aug is None:
        aug = build_gain_aug(system, gamma, alpha)

    m_u, wide = aug.Kp.shape
    S = np.zeros((m_u, wide))
    for pk, Y in zip(result.peaks, weights.Y):
        T, G12, G21 = aug.blocks(pk.omega)
        Phi = pk.Q @ Y @ pk.Q.conj().T
        S += (G21 @ (T.conj().T @ Phi) @ G12).T.real
    S /= result.gamma
    Lp = wide // aug.o_y
    return np.stack([S[:, l * aug.o_y:(l + 1) * aug.o_y] for l in range(Lp)])


# ---------------------------------------------------------------------------
# parameter augmentation

class ParamAug:
    """Constant part of the parameter augmentation for a fixed strategy.

    The stacked matrices depend on the gain coefficients but not on the
    parameter point, so one instance can be reused across a whole ascent
    run; :meth:`at` evaluates the diagonal feedback data at a point.
    """

    def __init__(self, system: ParamSystem, gamma: GainExpansion):
        self.system = system
        self.gamma = gamma
        n, m_u, m_w, o_z = system.n, system.m_u, system.m_w, system.o_z
        L, Lp = len(system.xi), len(gamma.eta)
        self.sizes = (n * L, m_u * L * Lp * L, m_u * Lp * L)
        t1, t2, t3 = self.sizes
        half = t1 + t2 + t3

        # Row stacks of G_l' Cy_b and G_l' Dyw_b over (l' slow, b fast).
        GC = np.einsum("pij,bjk->pbik", gamma.coeffs, system.Cy_coef)
        GC = GC.reshape(Lp * L * m_u, n)
        GD = np.einsum("pij,bjk->pbik", gamma.coeffs, system.Dyw_coef)
        GD = GD.reshape(Lp * L * m_u, m_w)

        self.Cypp = np.vstack([
            system.A_coef.reshape(L * n, n),
            np.tile(GC, (L, 1)),
            GC,
            np.zeros((half, n))])
        self.Dyppw = np.vstack([
            np.zeros((half, m_w)),
            system.Bw_coef.reshape(L * n, m_w),
            np.tile(GD, (L, 1)),
            GD])
        eyes = np.tile(np.eye(n), (1, L))
        bu_rep = np.concatenate(
            [np.tile(system.Bu_coef[a], (1, Lp * L)) for a in range(L)], axis=1)
        self.Bupp = np.hstack([eyes, bu_rep, np.zeros((n, t3)),
                               eyes, bu_rep, np.zeros((n, t3))])
        dzu_rep = np.tile(system.Dzu, (1, Lp * L))
        self.Dzupp = np.hstack([np.zeros((o_z, t1 + t2)), dzu_rep,
                                np.zeros((o_z, t1 + t2)), dzu_rep])

    def _diag(self, xs, es, n, m_u):
        d1 = np.repeat(xs, n)
        d2 = np.repeat(np.einsum("a,p,b->apb", xs, es, xs).ravel(), m_u)
        d3 = np.repeat(np.einsum("p,b->pb", es, xs).ravel(), m_u)
        return np.concatenate([d1, d2, d3, d1, d2, d3])

    def at(self, alpha) -> "ParamAugRealization":
        """Evaluate the augmentation at a parameter point.

        Raises
        ------
        NumericsError
            If the diagonal feedback does not reproduce the directly
            formed closed loop to a relative 1e-8.
        """
        system, gamma = self.system, self.gamma
        n, m_u = system.n, system.m_u
        xs = system.xi.values(alpha)
        es = gamma.eta.values(alpha)
        d = self._diag(xs, es, n, m_u)

        xj = system.xi.jacobian(alpha)
        ej = gamma.eta.jacobian(alpha)
        dprime = np.empty((system.n_params, d.size))
        for i in range(system.n_params):
            xpi, epi = xj[:, i], ej[:, i]
            d1 = np.repeat(xpi, n)
            trips = (np.einsum("a,p,b->apb", xpi, es, xs)
                     + np.einsum("a,p,b->apb", xs, epi, xs)
                     + np.einsum("a,p,b->apb", xs, es, xpi))
            d2 = np.repeat(trips.ravel(), m_u)
            pairs = np.einsum("p,b->pb", epi, xs) + np.einsum("p,b->pb", es, xpi)
            d3 = np.repeat(pairs.ravel(), m_u)
            dprime[i] = np.concatenate([d1, d2, d3, d1, d2, d3])

        Bd = self.Bupp * d
        Dd = self.Dzupp * d
        A_cl = Bd @ self.Cypp
        B_cl = Bd @ self.Dyppw
        C_cl = system.Cz + Dd @ self.Cypp
        D_cl = system.Dzw + Dd @ self.Dyppw

        direct = system.closed_loop(gamma.gain(alpha), alpha)
        err = max(_rel_err(A_cl, direct.A), _rel_err(B_cl, direct.B),
                  _rel_err(C_cl, direct.C), _rel_err(D_cl, direct.D))
        if err > 1e-8:
            raise NumericsError(
                f"parameter augmentation mismatch: relative error {err:.3e} "
                "exceeds 1e-8")
        return ParamAugRealization(
            A_cl=A_cl, B_cl=B_cl, C_cl=C_cl, D_cl=D_cl,
            Bupp=self.Bupp, Cypp=self.Cypp, Dyppw=self.Dyppw,
            Dzupp=self.Dzupp, d=d, dprime=dprime)


@dataclass(frozen=True, eq=False)
class ParamAugRealization:
    """Parameter augmentation evaluated at one parameter point."""

    A_cl: np.ndarray
    B_cl: np.ndarray
    C_cl: np.ndarray
    D_cl: np.ndarray
    Bupp: np.ndarray
    Cypp: np.ndarray
    Dyppw: np.ndarray
    Dzupp: np.ndarray
    d: np.ndarray
    dprime: np.ndarray

    def blocks(self, omega: float):
        """Transfer blocks (T, H12, H21) at one frequency (inf allowed)."""
        if np.isinf(omega):
            return (self.D_cl.astype(complex), self.Dzupp.astype(complex),
                    self.Dyppw.astype(complex))
        R = np.linalg.inv(1j * omega * np.eye(self.A_cl.shape[0]) - self.A_cl)
        T = self.C_cl @ R @ self.B_cl + self.D_cl
        H12 = self.C_cl @ R @ self.Bupp + self.Dzupp
        H21 = self.Cypp @ R @ self.B_cl + self.Dyppw
        return T, H12, H21


def build_param_aug(system: ParamSystem, gamma: GainExpansion, alpha) -> ParamAugRealization:
    """Assemble the parameter augmentation at a parameter point."""
    return ParamAug(system, gamma).at(alpha)


def param_subgradient(system: ParamSystem, gamma: GainExpansion, alpha,
                      result: HinfResult, weights: SpectraplexWeights = None,
                      aug: ParamAugRealization = None) -> np.ndarray:
    """Norm subgradient with respect to the parameter vector.

    Falls back to the direct resolvent-derivative oracle (with a logged
    warning) if the augmentation fails its consistency gate.
    """
    if not result.stable or not np.isfinite(result.gamma) or result.gamma <= 0:
        raise NumericsError("subgradient requires a stable loop with positive norm")
    if weights is None:
        weights = uniform_weights(result)
    if aug is None:
        try:
            aug = build_param_aug(system, gamma, alpha)
        except NumericsError as exc:
            log.warning("parameter augmentation rejected (%s); "
                        "using the direct resolvent derivative", exc)
            return param_subgradient_direct(system, gamma, alpha, result, weights)

    acc = np.zeros(system.n_params)
    for pk, Y in zip(result.peaks, weights.Y):
        T, H12, H21 = aug.blocks(pk.omega)
        W = T.conj().T @ (pk.Q @ Y @ pk.Q.conj().T)
        diag = np.einsum("ko,ok->k", H21 @ W, H12)
        acc += (aug.dprime @ diag).real
    return acc / result.gamma


def _closed_loop_derivatives(system: ParamSystem, gamma: GainExpansion, alpha):
    """Per-parameter derivatives of the closed-loop matrices."""
    mats = system.eval_matrices(alpha)
    K = gamma.gain(alpha)
    xj = system.xi.jacobian(alpha)
    ej = gamma.eta.jacobian(alpha)
    out = []
    for i in range(system.n_params):
        dA = np.tensordot(xj[:, i], system.A_coef, axes=1)
        dBw = np.tensordot(xj[:, i], system.Bw_coef, axes=1)
        dBu = np.tensordot(xj[:, i], system.Bu_coef, axes=1)
        dCy = np.tensordot(xj[:, i], system.Cy_coef, axes=1)
        dDyw = np.tensordot(xj[:, i], system.Dyw_coef, axes=1)
        dK = np.tensordot(ej[:, i], gamma.coeffs, axes=1)
        dKCy = dBu @ K @ mats.Cy + mats.Bu @ dK @ mats.Cy + mats.Bu @ K @ dCy
        dKDyw = dBu @ K @ mats.Dyw + mats.Bu @ dK @ mats.Dyw + mats.Bu @ K @ dDyw
        out.append((
            dA + dKCy,
            dBw + dKDyw,
            system.Dzu @ (dK @ mats.Cy + K @ dCy),
            system.Dzu @ (dK @ mats.Dyw + K @ dDyw)))
    return mats, K, out


def param_subgradient_direct(system: ParamSystem, gamma: GainExpansion, alpha,
                             result: HinfResult,
                             weights: SpectraplexWeights = None) -> np.ndarray:
    """Parameter subgradient via direct differentiation of the resolvent.

    Independent of the augmentation machinery; shares only the closed
    loop and the basis jacobians with it.
    """
    if not result.stable or not np.isfinite(result.gamma) or result.gamma <= 0:
        raise NumericsError("subgradient requires a stable loop with positive norm")
    if weights is None:
        weights = uniform_weights(result)
    mats, K, derivs = _closed_loop_derivatives(system, gamma, alpha)
    cl = system.closed_loop(K, alpha, mats=mats)
    n = cl.n
    acc = np.zeros(system.n_params)
    for pk, Y in zip(result.peaks, weights.Y):
        Phi = pk.Q @ Y @ pk.Q.conj().T
        if np.isinf(pk.omega):
            T = cl.D.astype(complex)
            for i, (_, _, _, dD) in enumerate(derivs):
                acc[i] += np.trace(T.conj().T @ Phi @ dD).real
            continue
        R = np.linalg.inv(1j * pk.omega * np.eye(n) - cl.A)
        RB = R @ cl.B
        CR = cl.C @ R
        T = CR @ cl.B + cl.D
        M = T.conj().T @ Phi
        for i, (dA, dB, dC, dD) in enumerate(derivs):
            dT = CR @ dA @ RB + dC @ RB + CR @ dB + dD
            acc[i] += np.trace(M @ dT).real
    return acc / result.gamma
