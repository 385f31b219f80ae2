"""Min-max design loop: subgradient descent in the gain coefficients
wrapped around projected subgradient ascent in the parameters.

The inner loop maximizes the closed-loop norm over the parameter box
for a frozen strategy; the outer loop descends on the masked gain
coefficients using the inner maximizer.  Both loops use diminishing
harmonic steps, track their best iterate, and stop when consecutive
objective values change by less than their tolerance.  Instability is
handled explicitly: an inner iterate with an unstable loop aborts the
ascent immediately, and the outer loop backs off by halving its step.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .errors import NumericsError, ParseError
from .hinf import HinfResult, hinf_norm
from .subgrad import ParamAug, gain_subgradient, param_subgradient
from .system import GainExpansion, ParamSystem, project_gains, project_params

__all__ = [
    "StepSchedule", "InnerResult", "TraceRecord", "SaddleResult",
    "VerifyReport", "objective", "inner_max", "solve_saddle", "verify_saddle",
]


@dataclass(frozen=True)
class StepSchedule:
    """Harmonic step family ``mu_k = c / k`` (square summable, not summable)."""

    c: float

    def __post_init__(self):
        if not (self.c > 0 and np.isfinite(self.c)):
            raise ValueError(f"step constant must be positive, got {self.c}")

    def step(self, k: int) -> float:
        return self.c / max(int(k), 1)

    @classmethod
    def parse(cls, text: str) -> "StepSchedule":
        if not text.startswith("c/k:"):
            raise ParseError("step schedule must have the form c/k:<constant>",
                             text, 0)
        try:
            c = float(text[4:])
        except ValueError:
            raise ParseError("step constant is not a number", text, 4) from None
        return cls(c)

    def __str__(self) -> str:
        return f"c/k:{self.c:g}"


def objective(system: ParamSystem, gamma: GainExpansion, alpha,
              rel_tol: float = 1e-7) -> float:
    """Closed-loop H-infinity norm at one point; +inf when unstable."""
    return objective_result(system, gamma, alpha, rel_tol=rel_tol,
                            with_peaks=False).gamma


def objective_result(system: ParamSystem, gamma: GainExpansion, alpha,
                     rel_tol: float = 1e-7, with_peaks: bool = True) -> HinfResult:
    """Full norm result (peaks included) for subgradient consumers."""
    cl = system.closed_loop(gamma.gain(alpha), alpha)
    return hinf_norm(cl, rel_tol=rel_tol, with_peaks=with_peaks)


@dataclass
class InnerResult:
    alpha: np.ndarray
    J: float
    result: HinfResult
    iters: int
    destabilized: bool = False
    alpha_unstable: np.ndarray = None


def _ascend(system: ParamSystem, paug: ParamAug, gamma: GainExpansion,
            alpha0, schedule: StepSchedule, eps: float, max_iter: int,
            rel_tol: float) -> InnerResult:
    """One projected subgradient ascent pass from a single start."""

    def eval_point(alpha):
        res = objective_result(system, gamma, alpha, rel_tol=rel_tol)
        if not res.stable:
            return res, None
        if res.gamma <= 0.0:
            return res, np.zeros(system.n_params)
        g = param_subgradient(system, gamma, alpha, res, aug=paug.at(alpha))
        return res, g

    alpha = project_params(alpha0, system.box_lo, system.box_hi)
    res, g = eval_point(alpha)
    if not res.stable:
        return InnerResult(alpha=alpha, J=np.inf, result=res, iters=0,
                           destabilized=True, alpha_unstable=alpha)
    best = InnerResult(alpha=alpha, J=res.gamma, result=res, iters=0)
    J = res.gamma
    for t in range(1, max_iter + 1):
        alpha_new = project_params(alpha + schedule.step(t) * g,
                                   system.box_lo, system.box_hi)
        res_new, g_new = eval_point(alpha_new)
        best.iters = t
        if not res_new.stable:
            best.destabilized = True
            best.alpha_unstable = alpha_new
            best.J = np.inf
            return best
        if res_new.gamma > best.J:
            best.alpha, best.J, best.result = alpha_new, res_new.gamma, res_new
        done = abs(res_new.gamma - J) <= eps
        alpha, J, g = alpha_new, res_new.gamma, g_new
        if done:
            break
    return best


def _lattice(lo, hi, per_dim: int, cap: int = 128):
    """Deterministic start lattice over the box (corners win when capped)."""
    if per_dim < 2:
        return []
    pts = [np.array(q) for q in
           product(*[np.linspace(a, b, per_dim) for a, b in zip(lo, hi)])]
    if len(pts) > cap:
        pts = [np.array(q) for q in
               product(*[(a, b) for a, b in zip(lo, hi)])][:cap]
    return pts


def inner_max(system: ParamSystem, gamma: GainExpansion, alpha0,
              schedule: StepSchedule, eps: float = 1e-3, max_iter: int = 200,
              rel_tol: float = 1e-7, starts: int = 3) -> InnerResult:
    """Projected subgradient ascent of the norm over the parameter box.

    The diminishing harmonic steps make a single ascent pass local: it
    stalls on whatever slope it starts on.  To estimate the box-wide
    worst case the ascent is therefore repeated from ``alpha0`` and
    from a fixed lattice of ``starts`` points per parameter, and the
    best iterate across passes is returned (ties keep the ``alpha0``
    pass).  ``starts <= 1`` runs the single pass from ``alpha0`` only.
    If any iterate destabilizes the loop the ascent stops at once and
    flags it: the frozen strategy has an infinite worst case and the
    caller must react.
    """
    paug = ParamAug(system, gamma)
    alpha0 = project_params(alpha0, system.box_lo, system.box_hi)
    origins = [alpha0] + [pt for pt in
                          _lattice(system.box_lo, system.box_hi, starts)
                          if np.linalg.norm(pt - alpha0) > 1e-12]
    best = None
    total = 0
    for pt in origins:
        run = _ascend(system, paug, gamma, pt, schedule, eps, max_iter, rel_tol)
        total += run.iters
        run.iters = total
        if run.destabilized:
            return run
        if best is None or run.J > best.J:
            best = run
    return best


@dataclass
class TraceRecord:
    outer: int
    J: float
    alpha: tuple
    step: float
    step_norm: float
    inner_iters: int
    halvings: int = 0


@dataclass
class SaddleResult:
    gamma_star: GainExpansion
    alpha_star: np.ndarray
    J_star: float
    trace: list = field(default_factory=list)
    status: str = "converged"
    message: str = ""


def _validation_grid(lo, hi, points_per_dim: int, cap: int = 243):
    axes = [np.linspace(a, b, points_per_dim) for a, b in zip(lo, hi)]
    pts = [np.array(pt) for pt in product(*axes)]
    if len(pts) > cap:
        rng = np.random.default_rng(0)
        pts = [pts[i] for i in rng.choice(len(pts), size=cap, replace=False)]
    return pts


def solve_saddle(system: ParamSystem, gamma0: GainExpansion, alpha0,
                 schedule: StepSchedule, eps_inner: float = 1e-3,
                 eps_outer: float = 1e-3, max_outer: int = 500,
                 max_inner: int = 200, rel_tol: float = 1e-7,
                 precheck_grid: int = 3, inner_starts: int = 3,
                 polish_iters: int = 300,
                 polish_min_step: float = 1e-9) -> SaddleResult:
    """Run the full min-max design loop from an initial strategy.

    The initial strategy must yield a finite objective on a coarse
    validation grid, otherwise the run aborts up front with a
    diagnostic.  The first worst-case estimate uses the multi-start
    ascent; inside the loop each round restarts the ascent warm from
    the previous maximizer.  Because harmonic steps shrink regardless
    of progress, the change-based stop fires while the gain
    subgradient is still of size about sqrt(eps_outer / c), far from
    stationarity; after it fires, up to ``polish_iters`` refinement
    steps descend from the best point with a backtracking line search
    on the worst-case objective (step doubled after acceptance, halved
    on failure), which keeps descending until no masked step of size
    above ``polish_min_step`` improves the worst case.  The reported
    point is the best (lowest worst-case) iterate seen, with its worst
    case re-estimated by a final multi-start ascent so the returned
    value is not an artifact of a lucky warm start.
    """
    gamma = project_gains(gamma0)
    alpha0 = project_params(alpha0, system.box_lo, system.box_hi)

    if precheck_grid > 0:
        for pt in _validation_grid(system.box_lo, system.box_hi, precheck_grid):
            if not np.isfinite(objective(system, gamma, pt, rel_tol=rel_tol)):
                return SaddleResult(
                    gamma_star=gamma, alpha_star=pt, J_star=np.inf,
                    status="instability-abort",
                    message=f"initial strategy destabilizes the loop at "
                            f"alpha={pt.tolist()}")

    inner = inner_max(system, gamma, alpha0, schedule, eps=eps_inner,
                      max_iter=max_inner, rel_tol=rel_tol, starts=inner_starts)
    if inner.destabilized:
        return SaddleResult(
            gamma_star=gamma, alpha_star=inner.alpha_unstable, J_star=np.inf,
            status="instability-abort",
            message=f"initial strategy destabilizes the loop at "
                    f"alpha={inner.alpha_unstable.tolist()}")

    alpha, J, res = inner.alpha, inner.J, inner.result
    trace = [TraceRecord(outer=0, J=J, alpha=tuple(alpha), step=0.0,
                         step_norm=0.0, inner_iters=inner.iters)]
    best = SaddleResult(gamma_star=gamma, alpha_star=alpha, J_star=J,
                        trace=trace, status="max-iters")
    best_res = res
    outer = 0

    for k in range(1, max_outer + 1):
        outer += 1
        dG = gain_subgradient(system, gamma, alpha, res) * gamma.masks
        step = schedule.step(k)
        halvings = 0
        while True:
            gamma_try = project_gains(gamma, gamma.coeffs - step * dG)
            inner = inner_max(system, gamma_try, alpha, schedule,
                              eps=eps_inner, max_iter=max_inner,
                              rel_tol=rel_tol, starts=1)
            if not inner.destabilized:
                break
            halvings += 1
            if halvings > 30:
                best.status = "instability-abort"
                best.message = (
                    f"outer step at iteration {outer} could not restore "
                    f"stability after 30 halvings "
                    f"(alpha={inner.alpha_unstable.tolist()})")
                best.trace = trace
                return best
            step /= 2.0

        gamma = gamma_try
        J_prev = J
        alpha, J, res = inner.alpha, inner.J, inner.result
        trace.append(TraceRecord(outer=outer, J=J, alpha=tuple(alpha),
                                 step=step,
                                 step_norm=float(step * np.linalg.norm(dG)),
                                 inner_iters=inner.iters, halvings=halvings))
        if J < best.J_star:
            best.gamma_star, best.alpha_star, best.J_star = gamma, alpha, J
            best_res = res
        if abs(J - J_prev) <= eps_outer:
            best.status = "converged"
            break
    else:
        best.status = "max-iters"

    if polish_iters > 0 and best.status == "converged":
        gamma, alpha, J, res = (best.gamma_star, best.alpha_star,
                                best.J_star, best_res)
        step = schedule.c
        for it in range(polish_iters):
            dG = gain_subgradient(system, gamma, alpha, res) * gamma.masks
            gnorm = float(np.linalg.norm(dG))
            if gnorm <= 1e-12:
                break
            # strong re-estimate every 25 steps guards against the warm
            # ascent losing a migrating maximizer during long descents
            strong = (it > 0 and it % 25 == 0)
            accepted = False
            while step >= polish_min_step:
                gamma_try = project_gains(gamma, gamma.coeffs - step * dG)
                inner = inner_max(system, gamma_try, alpha, schedule,
                                  eps=eps_inner, max_iter=max_inner,
                                  rel_tol=rel_tol,
                                  starts=inner_starts if strong else 1)
                if (not inner.destabilized
                        and inner.J < J - 1e-4 * step * gnorm ** 2):
                    accepted = True
                    break
                step /= 2.0
            if not accepted:
                break
            outer += 1
            gamma = gamma_try
            alpha, J, res = inner.alpha, inner.J, inner.result
            trace.append(TraceRecord(outer=outer, J=J, alpha=tuple(alpha),
                                     step=step,
                                     step_norm=float(step * gnorm),
                                     inner_iters=inner.iters))
            if J < best.J_star:
                best.gamma_star, best.alpha_star, best.J_star = gamma, alpha, J
                best_res = res
            step = min(step * 2.0, 10.0 * schedule.c)

    final = inner_max(system, best.gamma_star, best.alpha_star, schedule,
                      eps=eps_inner, max_iter=max_inner, rel_tol=rel_tol,
                      starts=inner_starts)
    if final.destabilized:
        best.alpha_star, best.J_star = final.alpha_unstable, np.inf
        best.status = "instability-abort"
        best.message = ("final worst-case re-estimate found an unstable point "
                        f"at alpha={final.alpha_unstable.tolist()}")
    elif final.J > best.J_star + 1e-12:
        best.message = (f"final worst-case re-estimate raised J from "
                        f"{best.J_star:.6g} to {final.J:.6g}")
        best.alpha_star, best.J_star = final.alpha, final.J
    best.trace = trace
    return best


@dataclass
class VerifyReport:
    passed: bool
    J_ref: float
    max_alpha_violation: float
    max_gain_violation: float
    samples: int
    radius: float
    slack: float


def verify_saddle(system: ParamSystem, result: SaddleResult,
                  radius: float = 1e-2, samples: int = 200,
                  slack: float = 1e-3, seed: int = 0,
                  rel_tol: float = 1e-7) -> VerifyReport:
    """Sampled saddle-point check around a reported design.

    Draws ``samples`` parameter points near the reported maximizer
    (projected into the box) and ``samples`` masked strategy
    perturbations of size ``radius``; the point passes when no
    parameter sample beats the reported worst case and no strategy
    sample improves on it, each up to ``slack``.
    """
    rng = np.random.default_rng(seed)
    gamma = result.gamma_star
    alpha = project_params(result.alpha_star, system.box_lo, system.box_hi)
    J_ref = objective(system, gamma, alpha, rel_tol=rel_tol)
    if not np.isfinite(J_ref):
        return VerifyReport(passed=False, J_ref=J_ref,
                            max_alpha_violation=np.inf,
                            max_gain_violation=np.inf,
                            samples=samples, radius=radius, slack=slack)

    alpha_viol = 0.0
    for _ in range(samples):
        pt = project_params(alpha + radius * rng.uniform(-1, 1, system.n_params),
                            system.box_lo, system.box_hi)
        alpha_viol = max(alpha_viol, objective(system, gamma, pt, rel_tol=rel_tol) - J_ref)

    gain_viol = 0.0
    for _ in range(samples):
        delta = radius * rng.uniform(-1, 1, gamma.coeffs.shape)
        gamma_s = project_gains(gamma, gamma.coeffs + delta)
        gain_viol = max(gain_viol, J_ref - objective(system, gamma_s, alpha, rel_tol=rel_tol))

    return VerifyReport(passed=bool(alpha_viol <= slack and gain_viol <= slack),
                        J_ref=J_ref, max_alpha_violation=float(alpha_viol),
                        max_gain_violation=float(gain_viol),
                        samples=samples, radius=radius, slack=slack)
