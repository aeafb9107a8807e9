import numpy as np
import pytest
from hypothesis import given, strategies as st

from krflow import geometry as geo
from krflow.verify import random_hermitian, smooth_field


def herm(seed, n, size=5):
    return random_hermitian(np.random.default_rng(seed), n, size)


@given(st.integers(0, 2**31), st.sampled_from([1, 2, 3]))
def test_inverse_and_det_match_numpy(seed, n):
    g = herm(seed, n)
    assert np.allclose(geo.hermitian_det(g), np.linalg.det(g).real)
    # g^{i jbar} is the transpose of the matrix inverse
    assert np.allclose(geo.inv_up(g), np.swapaxes(np.linalg.inv(g), -1, -2))


def test_check_positive_reports_worst_point():
    g = np.tile(np.eye(2, dtype=complex), (4, 4, 1, 1))
    g[2, 3] = np.diag([1.0, -0.5])
    with pytest.raises(geo.NotPositiveDefinite) as err:
        geo.check_positive(g)
    assert err.value.location == (2, 3)
    assert err.value.min_eig == pytest.approx(-0.5)


@pytest.mark.parametrize("scheme", ["spectral", "fd4"])
def test_derivative_of_single_mode(scheme):
    ch = geo.Chart(1, 32, scheme=scheme)
    x, y = ch.coordinates()
    f = np.sin(2 * np.pi * x)
    # d/dz = (d/dx - i d/dy) / 2
    exact = np.pi * np.cos(2 * np.pi * x)
    tol = 1e-12 if scheme == "spectral" else 1e-3
    assert np.max(np.abs(ch.d(f, 0) - exact)) < tol
    assert np.max(np.abs(ch.d(f, 0, bar=True) - exact)) < tol


def test_derivatives_commute_exactly(rng):
    ch = geo.Chart(2, 8)
    f = rng.normal(size=ch.shape)
    a = ch.d(ch.d(f, 0), 1, bar=True)
    b = ch.d(ch.d(f, 1, bar=True), 0)
    assert np.max(np.abs(a - b)) < 1e-12


def test_flat_metric_has_no_curvature():
    ch = geo.Chart(2, 6)
    m = geo.constant_metric(ch, np.array([[2.0, 0.3j], [-0.3j, 1.0]]))
    assert np.max(np.abs(m.curvature)) < 1e-14
    assert np.max(np.abs(geo.ricci(m))) < 1e-14


@pytest.mark.parametrize("n,res", [(1, 32), (2, 10)])
def test_curvature_symmetries_on_random_metric(n, res):
    ch = geo.Chart(n, res)
    phi = geo.random_potential(ch, np.random.default_rng(3), modes=1, min_eig=0.7)
    m = geo.metric_from_potential(ch, phi)
    for name, value in geo.curvature_symmetry_residuals(m.curvature).items():
        assert value < 1e-10, name
    assert geo.kahler_residual(m) < 1e-12
    assert geo.metric_parallel_residual(m) < 1e-12


def test_ricci_routes_agree_when_resolved():
    ch = geo.Chart(1, 64)
    phi = geo.random_potential(ch, np.random.default_rng(5), modes=1, min_eig=0.6)
    m = geo.metric_from_potential(ch, phi)
    assert np.max(np.abs(geo.ricci(m) - geo.ricci(m, "logdet"))) < 1e-8


def test_commutator_residual_small_on_resolved_metric():
    ch = geo.Chart(1, 64)
    phi = geo.random_potential(ch, np.random.default_rng(6), modes=1, min_eig=0.6)
    m = geo.metric_from_potential(ch, phi)
    X = smooth_field(ch)
    assert geo.commutator_residual(m, X, "vector") < 1e-8
    assert geo.commutator_residual(m, X, "form01") < 1e-8


def test_nonpositive_potential_rejected():
    ch = geo.Chart(1, 16)
    x, _ = ch.coordinates()
    with pytest.raises(geo.NotPositiveDefinite):
        geo.metric_from_potential(ch, 0.5 * np.cos(2 * np.pi * x))


def test_fubini_study_einstein():
    rng = np.random.default_rng(0)
    for n in (1, 2):
        pts = 3.0 * (rng.random((64, n)) - 0.5) + 1j * 3.0 * (rng.random((64, n)) - 0.5)
        assert geo.fs_ricci_residual(n, pts) < 1e-8


def test_fubini_study_derivatives_against_differences():
    fs = geo.FubiniStudy(2)
    z = np.array([0.4 - 0.2j, -0.7 + 1.1j])
    h = 1e-5
    for k in range(2):
        e = np.zeros(2, complex)
        e[k] = h
        dx = (fs.g(z + e) - fs.g(z - e)) / (2 * h)
        dy = (fs.g(z + 1j * e) - fs.g(z - 1j * e)) / (2 * h)
        assert np.allclose(fs.dg(z)[k], 0.5 * (dx - 1j * dy), atol=1e-8)


@pytest.mark.parametrize("point", [np.array([0.0]), np.array([1.5 - 0.5j]), np.array([0.3j, -0.8])])
def test_normal_coordinates(point):
    fs = geo.FubiniStudy(len(point))
    assert geo.normal_coordinates_check(fs, point) < 1e-12


def test_metric_field_is_read_only():
    ch = geo.Chart(1, 8)
    m = geo.constant_metric(ch, np.eye(1))
    with pytest.raises(ValueError):
        m.g[0, 0, 0, 0] = 2.0


def test_total_volume_of_constant_metric():
    ch = geo.Chart(2, 4, period=2.0)
    A = np.diag([2.0, 3.0]).astype(complex)
    m = geo.constant_metric(ch, A)
    # omega^2 = 2^2 2! det(A) dx1 dy1 dx2 dy2
    assert geo.total_volume(m) == pytest.approx(8 * 6.0 * 2.0 ** 4)
