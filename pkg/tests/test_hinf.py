from __future__ import annotations

import numpy as np
import pytest

from structhinf.errors import NumericsError
from structhinf.hinf import (hinf_norm, sigma_max, spectral_abscissa,
                             uniform_weights)
from structhinf.system import StateSpace

from oracles import oracle_hinf, random_stable_ss


def test_norm_matches_frequency_sweep_oracle(rng):
    for _ in range(15):
        n = int(rng.integers(2, 9))
        m = int(rng.integers(1, 5))
        o = int(rng.integers(1, 5))
        ss = StateSpace(*random_stable_ss(rng, n, m, o))
        got = hinf_norm(ss, rel_tol=1e-9).gamma
        ref = oracle_hinf(ss)
        assert abs(got - ref) <= 1e-4 * ref


def test_static_gain_is_sigma_max_of_d(rng):
    for _ in range(5):
        D = rng.standard_normal((3, 2))
        ss = StateSpace(A=-np.eye(2), B=np.zeros((2, 2)),
                        C=np.zeros((3, 2)), D=D)
        res = hinf_norm(ss)
        ref = np.linalg.svd(D, compute_uv=False)[0]
        assert abs(res.gamma - ref) <= 1e-12 * max(ref, 1.0)


def test_first_order_lag_peaks_at_zero():
    ss = StateSpace(A=[[-1.0]], B=[[1.0]], C=[[1.0]], D=[[0.0]])
    res = hinf_norm(ss)
    assert abs(res.gamma - 1.0) <= 1e-8
    assert res.stable
    assert any(p.omega == 0.0 for p in res.peaks)


def test_unstable_realization_reports_infinite_norm():
    ss = StateSpace(A=[[0.1]], B=[[1.0]], C=[[1.0]], D=[[0.0]])
    res = hinf_norm(ss)
    assert not res.stable
    assert res.gamma == np.inf


def test_peak_bases_are_orthonormal(rng):
    for _ in range(8):
        ss = StateSpace(*random_stable_ss(rng, 4, 3, 3))
        res = hinf_norm(ss)
        for p in res.peaks:
            gram = p.Q.conj().T @ p.Q
            np.testing.assert_allclose(gram, np.eye(p.multiplicity),
                                       atol=1e-10)
            assert abs(p.sigma - sigma_max(ss, p.omega)) <= 1e-9 * p.sigma


def test_repeated_channel_doubles_multiplicity():
    # two identical decoupled lags share their peak at omega = 0
    ss = StateSpace(A=-np.eye(2), B=np.eye(2), C=np.eye(2),
                    D=np.zeros((2, 2)))
    res = hinf_norm(ss)
    assert abs(res.gamma - 1.0) <= 1e-8
    top = max(res.peaks, key=lambda p: p.sigma)
    assert top.multiplicity == 2
    assert top.Q.shape == (2, 2)


def test_supremum_at_infinite_frequency_is_feedthrough():
    # T(jw) = 1 - 0.5/(jw + 1) climbs monotonically to sigma_max(D) = 1
    ss = StateSpace(A=[[-1.0]], B=[[1.0]], C=[[-0.5]], D=[[1.0]])
    res = hinf_norm(ss)
    assert abs(res.gamma - 1.0) <= 1e-8
    assert any(np.isinf(p.omega) for p in res.peaks)


def test_uniform_weights_sum_to_unit_trace(rng):
    for _ in range(6):
        ss = StateSpace(*random_stable_ss(rng, 3, 2, 2))
        res = hinf_norm(ss)
        w = uniform_weights(res)
        total = sum(np.trace(Y).real for Y in w.Y)
        assert abs(total - 1.0) <= 1e-12
        for Y in w.Y:
            np.testing.assert_allclose(Y, Y.conj().T, atol=1e-12)
            assert np.min(np.linalg.eigvalsh(Y)) >= -1e-12


def test_spectral_abscissa():
    assert spectral_abscissa(np.array([[-2.0, 0.0], [0.0, -0.5]])) == -0.5
    assert spectral_abscissa(np.array([[0.0, 1.0], [-1.0, 0.0]])) == 0.0
