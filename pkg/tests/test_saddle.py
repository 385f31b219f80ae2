from __future__ import annotations

import numpy as np
import pytest
from itertools import product

from structhinf.errors import ParseError
from structhinf.expr import BasisSet
from structhinf.saddle import (StepSchedule, inner_max, objective,
                               solve_saddle, verify_saddle)
from structhinf.system import (GainExpansion, Graph, ParamSystem, Partition,
                               eval_strategy, structure_masks)


def _flat_plant(eta_sources=("1",), design=None):
    """One-state plant 1/(s+1) that ignores its single parameter."""
    part = Partition(n=(1,), m_w=(1,), m_u=(1,), o_y=(1,), p=(1,))
    xi = BasisSet(("a",), ("1",))
    eta = BasisSet(("a",), eta_sources)
    one = np.ones((1, 1, 1))
    sys_ = ParamSystem(
        params=("a",), box_lo=[-1.0], box_hi=[1.0], partition=part,
        xi=xi, eta=eta,
        A_coef=-one, Bw_coef=one, Bu_coef=one, Cy_coef=one,
        Dyw_coef=np.zeros((1, 1, 1)),
        Cz=[[1.0]], Dzw=[[0.0]], Dzu=[[0.0]],
        control_graph=Graph.complete(1),
        design_graph=Graph.complete(1) if design is None else design)
    masks = structure_masks(part, sys_.design_graph, eta)
    zero = GainExpansion(eta, np.zeros_like(masks), masks)
    return sys_, zero


def test_step_schedule_parse_and_format():
    s = StepSchedule.parse("c/k:0.25")
    assert s.c == 0.25
    assert s.step(1) == 0.25
    assert s.step(5) == 0.05
    assert s.step(0) == 0.25  # the first move uses the full constant
    assert str(s) == "c/k:0.25"
    with pytest.raises(ParseError):
        StepSchedule.parse("harmonic:1")
    with pytest.raises(ParseError):
        StepSchedule.parse("c/k:banana")
    with pytest.raises(ValueError):
        StepSchedule(-1.0)


def test_objective_is_infinite_when_destabilized(example1):
    zero = GainExpansion(example1.system.eta,
                         np.zeros_like(example1.gamma0.coeffs),
                         example1.gamma0.masks)
    # the plant is stable open loop, so the zero strategy is finite
    assert np.isfinite(objective(example1.system, zero, [0.0, 0.0]))
    big = GainExpansion(example1.system.eta,
                        50.0 * example1.gamma0.masks,
                        example1.gamma0.masks)
    assert objective(example1.system, big, [1.0, 1.0]) == np.inf


def test_inner_max_keeps_start_on_flat_objective():
    # plant and strategy ignore the parameter, so J is constant over the
    # box, the ascent never moves, and ties keep the requested start
    sys_, zero = _flat_plant()
    res = inner_max(sys_, zero, [0.25], StepSchedule(0.1))
    assert res.J == pytest.approx(1.0, rel=1e-6)
    np.testing.assert_array_equal(res.alpha, [0.25])
    assert not res.destabilized


def test_solve_saddle_degenerates_to_inner_max_when_masks_forbid_all():
    # an empty design graph with parameter-dependent gain terms masks
    # every coefficient, so the strategy can never change
    sys_, zero = _flat_plant(eta_sources=("a",),
                             design=Graph(np.zeros((1, 1), dtype=int)))
    assert np.all(zero.masks == 0.0)
    r = solve_saddle(sys_, zero, [0.5], StepSchedule(0.1))
    assert r.status == "converged"
    np.testing.assert_array_equal(r.gamma_star.coeffs, zero.coeffs)
    assert r.J_star == pytest.approx(1.0, rel=1e-6)


def test_inner_max_finds_grid_argmax(example1):
    # worst case of the initial strategy against a dense reference grid
    prob = example1
    res = inner_max(prob.system, prob.gamma0, prob.alpha0, prob.solver.step,
                    eps=prob.solver.eps_inner)
    axes = [np.linspace(-1, 1, 101)] * 2
    grid_best = max(
        objective(prob.system, prob.gamma0, np.array(q))
        for q in product(*axes))
    assert abs(res.J - grid_best) <= 5e-3 * grid_best


def test_inner_max_flags_destabilizing_strategy(example1):
    big = GainExpansion(example1.system.eta,
                        50.0 * example1.gamma0.masks,
                        example1.gamma0.masks)
    res = inner_max(example1.system, big, [0.9, 0.9], StepSchedule(0.1))
    assert res.destabilized
    assert res.J == np.inf
    assert res.alpha_unstable is not None


def test_solve_saddle_converges_on_small_problem(example1):
    prob = example1
    r = solve_saddle(prob.system, prob.gamma0, prob.alpha0, prob.solver.step,
                     eps_inner=prob.solver.eps_inner,
                     eps_outer=prob.solver.eps_outer)
    assert r.status == "converged"
    assert np.isfinite(r.J_star)
    # the design must improve on the initial strategy's worst case
    J0 = inner_max(prob.system, prob.gamma0, prob.alpha0, prob.solver.step,
                   eps=prob.solver.eps_inner).J
    assert r.J_star < J0
    # disallowed entries stay exactly zero
    assert np.all(r.gamma_star.coeffs[prob.gamma0.masks == 0] == 0.0)
    # trace monotone in outer index and carries step norms
    outers = [t.outer for t in r.trace]
    assert outers == sorted(outers)
    assert r.trace[0].step_norm == 0.0
    assert all(t.step_norm >= 0.0 for t in r.trace)


def test_solve_saddle_is_deterministic(example1):
    prob = example1
    kw = dict(eps_inner=prob.solver.eps_inner,
              eps_outer=prob.solver.eps_outer)
    r1 = solve_saddle(prob.system, prob.gamma0, prob.alpha0,
                      prob.solver.step, **kw)
    r2 = solve_saddle(prob.system, prob.gamma0, prob.alpha0,
                      prob.solver.step, **kw)
    assert r1.J_star == r2.J_star
    np.testing.assert_array_equal(r1.gamma_star.coeffs, r2.gamma_star.coeffs)
    np.testing.assert_array_equal(r1.alpha_star, r2.alpha_star)


def test_solve_saddle_aborts_on_unstable_initial_strategy(platoon):
    # the platoon is open-loop marginally stable, so the zero strategy
    # has an infinite worst case and the precheck must catch it
    zero = GainExpansion(platoon.system.eta,
                         np.zeros_like(platoon.gamma0.coeffs),
                         platoon.gamma0.masks)
    r = solve_saddle(platoon.system, zero, platoon.alpha0,
                     platoon.solver.step)
    assert r.status == "instability-abort"
    assert r.J_star == np.inf
    assert "destabilizes" in r.message


def test_verify_saddle_passes_at_design_and_fails_when_shifted(example1):
    prob = example1
    r = solve_saddle(prob.system, prob.gamma0, prob.alpha0, prob.solver.step,
                     eps_inner=prob.solver.eps_inner,
                     eps_outer=prob.solver.eps_outer)
    rep = verify_saddle(prob.system, r)
    assert rep.passed
    assert rep.max_alpha_violation <= 1e-3
    assert rep.max_gain_violation <= 1e-3

    # moving one free entry off the design must break the certificate
    import copy
    bad = copy.copy(r)
    coeffs = r.gamma_star.coeffs.copy()
    idx = np.argwhere(r.gamma_star.masks == 1)[0]
    coeffs[tuple(idx)] += 0.5
    bad.gamma_star = r.gamma_star.with_coeffs(coeffs)
    rep_bad = verify_saddle(prob.system, bad)
    assert not rep_bad.passed


def test_strategy_evaluation_keeps_block_structure(example1, rng):
    prob = example1
    r = solve_saddle(prob.system, prob.gamma0, prob.alpha0, prob.solver.step,
                     eps_inner=prob.solver.eps_inner,
                     eps_outer=prob.solver.eps_outer)
    for _ in range(20):
        K = eval_strategy(r.gamma_star, rng.uniform(-1, 1, 2))
        assert K[0, 2] == 0.0 and K[1, 0] == 0.0 and K[1, 1] == 0.0
