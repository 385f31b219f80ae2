"""H-infinity norm computation with peak-frequency extraction.

The norm of a stable transfer matrix ``T(s) = C (sI - A)^{-1} B + D`` is
computed by a level-set iteration: a candidate level is a singular value
of ``T`` at some frequency exactly when the associated Hamiltonian
matrix has an eigenvalue on the imaginary axis, and evaluating the gain
at midpoints of consecutive crossing frequencies raises the lower bound
until no crossings remain.  Afterwards every near-peak frequency is
polished by a bounded scalar maximization, so the returned norm is an
actually achieved gain value, and each peak carries an orthonormal basis
of its leading left singular subspace for use in subgradient formulas.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.optimize import minimize_scalar

from .errors import NumericsError
from .system import StateSpace

__all__ = [
    "Peak", "HinfResult", "SpectraplexWeights",
    "spectral_abscissa", "freq_response", "sigma_max", "hinf_norm",
    "uniform_weights",
]


def spectral_abscissa(A: np.ndarray) -> float:
    """Largest real part over the eigenvalues of A."""
    try:
        lam = np.linalg.eigvals(np.asarray(A, dtype=float))
    except np.linalg.LinAlgError as exc:
        raise NumericsError(f"eigenvalue computation failed: {exc}") from exc
    return float(lam.real.max())


def freq_response(ss: StateSpace, omega: float) -> np.ndarray:
    """Transfer matrix ``T(j omega)``; ``omega = inf`` returns D."""
    if np.isinf(omega):
        return ss.D.astype(complex)
    M = 1j * omega * np.eye(ss.n) - ss.A
    try:
        X = np.linalg.solve(M, ss.B)
    except np.linalg.LinAlgError as exc:
        raise NumericsError(
            f"frequency {omega:g} is a pole of the realization") from exc
    return ss.C @ X + ss.D


def sigma_max(ss: StateSpace, omega: float) -> float:
    """Largest singular value of the transfer matrix at one frequency."""
    T = freq_response(ss, omega)
    if T.size == 0:
        return 0.0
    return float(sla.svdvals(T)[0])


@dataclass(frozen=True, eq=False)
class Peak:
    """One near-peak frequency of the gain curve.

    ``Q`` holds orthonormal leading left singular vectors of
    ``T(j omega)``; its column count is the multiplicity.
    """

    omega: float
    sigma: float
    Q: np.ndarray
    multiplicity: int

    def __post_init__(self):
        gram = self.Q.conj().T @ self.Q
        if not np.allclose(gram, np.eye(self.Q.shape[1]), atol=1e-10):
            raise NumericsError("peak singular-vector block is not orthonormal")
        if self.Q.shape[1] != self.multiplicity:
            raise NumericsError("peak multiplicity does not match its basis")


@dataclass(frozen=True, eq=False)
class HinfResult:
    """Norm value with its peak set; instability encodes an infinite norm."""

    gamma: float
    peaks: tuple
    stable: bool


@dataclass(frozen=True, eq=False)
class SpectraplexWeights:
    """One PSD Hermitian weight per peak with unit total trace."""

    Y: tuple

    def __post_init__(self):
        total = 0.0
        for Y in self.Y:
            if not np.allclose(Y, Y.conj().T, atol=1e-12):
                raise NumericsError("spectraplex weight is not Hermitian")
            if np.linalg.eigvalsh(Y).min() < -1e-12:
                raise NumericsError("spectraplex weight is not positive semidefinite")
            total += float(np.trace(Y).real)
        if abs(total - 1.0) > 1e-12:
            raise NumericsError(f"spectraplex weights have total trace {total}, not 1")


def uniform_weights(result: HinfResult) -> SpectraplexWeights:
    """Equal-mass weights: identity on each peak block, scaled to unit trace."""
    q = len(result.peaks)
    if q == 0:
        raise NumericsError("result has no peaks to weight")
    return SpectraplexWeights(tuple(
        np.eye(pk.multiplicity) / (q * pk.multiplicity) for pk in result.peaks))


def _hamiltonian(ss: StateSpace, gamma: float) -> np.ndarray:
    # Imaginary eigenvalues j*w of this matrix mark frequencies where gamma
    # is a singular value of T(j*w); requires gamma not a singular value of D.
    m = ss.n_in
    R = gamma ** 2 * np.eye(m) - ss.D.T @ ss.D
    RinvDTC = np.linalg.solve(R, ss.D.T @ ss.C)
    RinvBT = np.linalg.solve(R, ss.B.T)
    H11 = ss.A + ss.B @ RinvDTC
    H12 = ss.B @ RinvBT
    H21 = -(ss.C.T @ ss.C + ss.C.T @ ss.D @ RinvDTC)
    return np.block([[H11, H12], [H21, -H11.T]])


def _crossing_freqs(ss: StateSpace, gamma: float) -> list:
    """Positive frequencies where some singular value equals gamma."""
    lam = np.linalg.eigvals(_hamiltonian(ss, gamma))
    on_axis = np.abs(lam.real) <= 1e-9 * np.maximum(1.0, np.abs(lam))
    ws = np.sort(lam.imag[on_axis & (lam.imag > 1e-12)])
    out: list = []
    for w in ws:
        if out and w - out[-1] <= 1e-9 * (1.0 + w):
            continue
        out.append(float(w))
    return out


def _candidate_freqs(A: np.ndarray) -> list:
    lam = np.linalg.eigvals(A)
    cands = {0.0}
    for lv in lam:
        cands.add(float(abs(lv)))
        if abs(lv.imag) > 1e-12:
            cands.add(float(abs(lv.imag)))
    return sorted(c for c in cands if np.isfinite(c))


def hinf_norm(ss: StateSpace, rel_tol: float = 1e-7, tol_peak: float = 1e-6,
              tol_mult: float = 1e-6, stab_margin: float = 1e-9,
              with_peaks: bool = True) -> HinfResult:
    """H-infinity norm of a realization.

    Parameters
    ----------
    ss : StateSpace
    rel_tol : float
        Relative gap at which the level-set iteration stops.
    tol_peak : float
        Peaks within this relative distance of the norm are reported.
    tol_mult : float
        Relative clustering width for singular-value multiplicity.
    stab_margin : float
        The realization counts as unstable when the spectral abscissa is
        above ``-stab_margin``; the norm is then infinite.
    with_peaks : bool
        Skip peak extraction (cheaper) when only the value is needed.

    Returns
    -------
    HinfResult
        ``gamma = inf`` with ``stable=False`` and no peaks when unstable.
    """
    if spectral_abscissa(ss.A) >= -stab_margin:
        return HinfResult(gamma=np.inf, peaks=(), stable=False)

    sigma_d = float(sla.svdvals(ss.D)[0]) if ss.D.size else 0.0
    gamma_lb = sigma_d
    best_w = np.inf
    for w in _candidate_freqs(ss.A):
        s = sigma_max(ss, w)
        if s > gamma_lb:
            gamma_lb, best_w = s, w

    if gamma_lb <= 0.0:
        for w in np.logspace(-3, 3, 25):
            s = sigma_max(ss, w)
            if s > gamma_lb:
                gamma_lb, best_w = s, w
        if gamma_lb <= 0.0:
            return HinfResult(gamma=0.0, peaks=(), stable=True)

    eps_it = max(rel_tol / 2.0, 1e-14)
    for _ in range(200):
        gamma_t = gamma_lb * (1.0 + 2.0 * eps_it)
        ws = _crossing_freqs(ss, gamma_t)
        if not ws:
            break
        probes = [0.5 * (a + b) for a, b in zip(ws, ws[1:])]
        probes.extend((0.0, 2.0 * ws[-1]))
        new_lb, new_w = gamma_lb, best_w
        for w in probes:
            s = sigma_max(ss, w)
            if s > new_lb:
                new_lb, new_w = s, w
        if new_lb <= gamma_lb * (1.0 + 1e-14):
            break
        gamma_lb, best_w = new_lb, new_w
    else:
        raise NumericsError("level-set iteration did not converge")

    gamma = gamma_lb
    if not with_peaks:
        return HinfResult(gamma=float(gamma), peaks=(), stable=True)

    # Polish every candidate maximizer bracketed at a level just below gamma.
    candidates: list = []
    level = gamma * (1.0 - 2.0 * max(tol_peak, 2.0 * eps_it))
    ws = []
    for _ in range(5):
        try:
            ws = _crossing_freqs(ss, level)
            break
        except np.linalg.LinAlgError:
            level *= 1.0 - 3.0 * tol_peak
    if ws:
        bounds = [0.0, *ws]
        for a, b in zip(bounds, bounds[1:]):
            if b - a <= 1e-12 * (1.0 + b):
                continue
            if sigma_max(ss, 0.5 * (a + b)) < level * (1.0 - 1e-12):
                continue
            res = minimize_scalar(lambda w: -sigma_max(ss, w), bounds=(a, b),
                                  method="bounded",
                                  options={"xatol": max(1e-12, 1e-10 * b)})
            candidates.append((float(res.x), float(-res.fun)))
            if a == 0.0:
                candidates.append((0.0, sigma_max(ss, 0.0)))
    if not candidates and sigma_d < gamma * (1.0 - tol_peak) and np.isfinite(best_w):
        # No bracketing crossings were found (flat gain curve); fall back to
        # the frequency that achieved the lower bound.
        candidates.append((best_w, sigma_max(ss, best_w)))

    candidates.sort()
    merged: list = []
    for w, s in candidates:
        if merged and w - merged[-1][0] <= 1e-6 * (1.0 + w):
            if s > merged[-1][1]:
                merged[-1] = (w, s)
            continue
        merged.append((w, s))
    if merged:
        gamma = max(gamma, max(s for _, s in merged))

    peaks = []
    for w, s in merged:
        if s >= gamma * (1.0 - tol_peak):
            peaks.append(_make_peak(ss, w, tol_mult))
    if sigma_d >= gamma * (1.0 - tol_peak):
        peaks.append(_make_peak(ss, np.inf, tol_mult))
    if not peaks:
        raise NumericsError("no peak frequency could be isolated")
    return HinfResult(gamma=float(gamma), peaks=tuple(peaks), stable=True)


def _make_peak(ss: StateSpace, omega: float, tol_mult: float) -> Peak:
    T = freq_response(ss, omega)
    U, s, _ = np.linalg.svd(T)
    mult = int(np.sum(s >= s[0] * (1.0 - tol_mult))) if s[0] > 0 else 1
    return Peak(omega=float(omega), sigma=float(s[0]), Q=U[:, :mult],
                multiplicity=mult)
