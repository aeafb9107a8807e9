import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from numpy.polynomial import legendre

from krflow import p1flow as pf


@pytest.fixture(scope="module")
def fs_run():
    return pf.run_1d(pf.P1FlowConfig(resolution=24))


@pytest.fixture(scope="module")
def perturbed_run():
    return pf.run_1d(pf.P1FlowConfig(resolution=24, amplitude=0.1, mode=2), keep_profiles=True)


@pytest.mark.parametrize("k", range(6))
def test_legendre_operator_eigenfunctions(k):
    g = pf.ChebyshevGrid(24)
    P = legendre.Legendre.basis(k)(2 * g.tau - 1)
    assert np.max(np.abs(g.L @ P + k * (k + 1) * P)) < 1e-9


@given(st.integers(0, 20))
def test_quadrature_exact_on_polynomials(k):
    g = pf.ChebyshevGrid(24)
    assert g.integrate(g.tau ** k) == pytest.approx(1.0 / (k + 1), rel=1e-13)


def test_interpolation_reproduces_polynomials():
    g = pf.ChebyshevGrid(16)
    p = np.polynomial.Polynomial([0.3, -1.0, 2.0, 0.5])
    x = np.array([0.0, 0.013, 0.5, 0.77, 1.0])
    assert np.allclose(g.interpolate(p(g.tau), x), p(x), atol=1e-13)


def test_fubini_study_area_and_ricci():
    p = pf.fs_profile()
    assert pf.area(p) == pytest.approx(2 * math.pi, rel=1e-14)
    assert pf.area(pf.fs_profile(multiple=2)) == pytest.approx(4 * math.pi, rel=1e-14)
    # Ric(omega_FS) = 2 omega_FS pointwise
    assert np.max(np.abs(pf.ricci_ratio(p) - 2.0)) < 1e-8


def test_exact_shrinking_solution(fs_run):
    s = fs_run.series
    t = s.column("t")
    sel = t <= 0.95
    assert np.max(s.column("sup_psi")) < 1e-8
    assert np.max(np.abs(s.column("area")[sel] - 4 * math.pi * (1 - t[sel]))) < 1e-6 * 4 * math.pi
    assert abs(fs_run.singular_time - 1.0) < 1e-3
    assert fs_run.exit_code == 0
    assert np.max(s.column("round_deviation")) < 1e-8


def test_area_law_with_perturbation(perturbed_run):
    s = perturbed_run.series
    t = s.column("t")
    T = perturbed_run.singular_time
    assert abs(T - 1.0) < 1e-2
    assert np.mean(s.column("area_law_residual")[t <= 0.8 * T]) < 5e-3


def test_round_deviation_decreases(perturbed_run):
    s = perturbed_run.series
    t, rd = s.column("t"), s.column("round_deviation")
    T = perturbed_run.singular_time
    picks = [int(np.argmin(np.abs(t - f * T))) for f in (0.0, 0.3, 0.5, 0.7, 0.9)]
    assert np.all(np.diff(rd[picks]) < 0)


def test_pole_regularity_kept(perturbed_run):
    for prof in perturbed_run.profiles[::10]:
        assert pf.pole_regularity_residual(prof) < 1e-8


def test_round_deviation_scale_invariant():
    prob = pf.build_problem(pf.P1FlowConfig(amplitude=0.1))
    prof = pf.SymmetricProfile(prob, 0.0, np.zeros(prob.grid.N + 1))
    big = pf.build_problem(pf.P1FlowConfig(amplitude=0.3, scale=3.0))
    prof3 = pf.SymmetricProfile(big, 0.0, np.zeros(big.grid.N + 1))
    assert pf.round_deviation(prof) == pytest.approx(pf.round_deviation(prof3), rel=1e-8)


def test_dilated_round_metric_has_zero_deviation():
    prob = pf.build_problem(pf.P1FlowConfig(resolution=32))
    tau = prob.grid.tau
    # ratio of a dilated Fubini-Study form, potential chosen so the ratio matches
    target = 2 * pf.dilated_fs_ratio(1.7, tau)
    phi = np.linalg.lstsq(prob.grid.L, target - prob.r0, rcond=None)[0]
    prof = pf.SymmetricProfile(prob, 0.0, phi)
    assert pf.round_deviation(prof) < 1e-6


def test_reduced_right_side_matches_chart_engine(perturbed_run):
    prof = perturbed_run.profiles[20]
    coarse = pf.patch_rhs_deviation(prof, resolution=96)
    fine = pf.patch_rhs_deviation(prof, resolution=192)
    assert fine < 1e-5
    # fourth-order differences on the chart
    assert coarse / fine > 8


def test_short_evolution_matches_chart_engine(perturbed_run):
    dev, change, _ = pf.patch_evolution_deviation(perturbed_run.profiles[20], nsteps=4, resolution=192)
    assert dev < 1e-3 * change


def test_nonpositive_initial_data_rejected():
    with pytest.raises(pf.NotPositiveDefinite):
        pf.build_problem(pf.P1FlowConfig(amplitude=1.0, mode=2))


def test_t_max_exit_code():
    res = pf.run_1d(pf.P1FlowConfig(resolution=16, t_max=0.1))
    assert res.status == "t_max"
    assert res.exit_code == 2
