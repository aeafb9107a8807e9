import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from krflow import diagnostics as dg
from krflow.geometry import trace_form
from krflow.verify import inequality_samples, random_hermitian, random_tensor


def series_from(**cols):
    names = dg.TORUS_COLUMNS
    m = len(next(iter(cols.values())))
    s = dg.MonitorSeries(names)
    for k in range(m):
        rec = {c: 0.0 for c in names}
        rec.update({c: v[k] for c, v in cols.items()})
        s.append(rec)
    return s


def flat_series(m=20):
    t = np.linspace(0, 1, m)
    return series_from(t=t, total_volume=np.ones(m), trace_monitor=np.full(m, 1.0))


def test_stationary_run_satisfies_everything():
    v = dg.audit_bounds(flat_series())
    assert all(x.satisfied for x in v.values())
    assert v["phi_oscillation"].constant == 0.0


def test_spike_reported_with_location():
    m = 30
    sp = np.linspace(1.0, 0.1, m)
    sp[17] += 0.5
    s = series_from(t=np.linspace(0, 1, m), total_volume=np.ones(m), sup_phidot=sp)
    v = dg.audit_bounds(s)["sup_phidot_monotone"]
    assert not v.satisfied
    assert v.location == 17
    assert "VIOLATED" in v.line()


def test_trace_monitor_margin():
    m = 10
    tm = np.linspace(0.0, 0.7, m)
    s = series_from(t=np.linspace(0, 1, m), total_volume=np.ones(m), trace_monitor=tm)
    assert dg.audit_bounds(s)["trace_monitor"].constant == pytest.approx(0.7)
    assert not dg.audit_bounds(s, trace_margin=0.5)["trace_monitor"].satisfied


def test_audit_is_pure():
    s = flat_series()
    assert dg.estimate_report(dg.audit_bounds(s)) == dg.estimate_report(dg.audit_bounds(s))


def test_empty_series_rejected():
    with pytest.raises(ValueError):
        dg.audit_bounds(dg.MonitorSeries(dg.TORUS_COLUMNS))


def test_normalized_mode_marks_monotonicity_not_applicable():
    v = dg.audit_bounds(flat_series(), mode="normalized")
    assert not v["P_monotone"].applicable
    assert "n/a" in v["jensen_monotone"].line()


def test_fit_recovers_constant():
    t = np.linspace(0, 8, 200)
    fit = dg.fit_decay(t, 3 * (t + 1) * np.exp(-t), "t1exp")
    assert fit.C == pytest.approx(3.0, rel=1e-12)
    assert fit.residual < 1e-10
    assert fit.bound_holds


def test_fit_exp_half():
    t = np.linspace(0, 8, 100)
    fit = dg.fit_decay(t, 0.25 * np.exp(-t / 2), "exp_half")
    assert fit.C == pytest.approx(0.25, rel=1e-12)


def test_constant_series_not_applicable():
    t = np.linspace(0, 8, 100)
    fit = dg.fit_decay(t, np.ones_like(t), "t1exp")
    assert not fit.applicable
    assert not fit.bound_holds


def test_fit_skips_nonpositive_samples():
    t = np.linspace(0, 8, 100)
    q = 2 * np.exp(-t / 2)
    q[-5] = 0.0
    assert dg.fit_decay(t, q, "exp_half").C == pytest.approx(2.0)


@given(st.lists(st.floats(-3, 3), min_size=5, max_size=5), st.integers(0, 2**31))
def test_sample_derivative_exact_on_quartics(coef, seed):
    rng = np.random.default_rng(seed)
    t = np.sort(rng.random(12)) + np.arange(12)
    p = np.polynomial.Polynomial(coef)
    assert np.allclose(dg.sample_derivative(t, p(t)), p.deriv()(t), atol=1e-6 * (1 + max(map(abs, coef))))


def test_csv_round_trip():
    s = flat_series(5)
    back = dg.MonitorSeries.from_csv(s.to_csv())
    assert back.columns == s.columns
    assert back.to_csv() == s.to_csv()


def test_pointwise_inequalities():
    dag, gap = inequality_samples(1000, seed=7)
    assert dag <= 1e-10
    assert gap >= -1e-10


def test_dagger_vanishes_for_zero_tensor():
    rng = np.random.default_rng(0)
    g0, g = random_hermitian(rng, 2, 3), random_hermitian(rng, 2, 3)
    assert np.allclose(dg.dagger_quantity(g0, g, np.zeros((3, 2, 2, 2))), 0.0)


def test_trace_bound_is_sharp_for_equal_metrics():
    g = random_hermitian(np.random.default_rng(1), 3, 4)
    # g = g0: tr = n, C = 1, so n * n^{n-1} - n
    assert np.allclose(dg.trace_bound_gap(g, g), 3 * 9 - 3)


# ----------------------------------------------------------------------------
# exterior algebra oracle: n omega^{n-1} ^ beta = (tr_omega beta) omega^n
# ----------------------------------------------------------------------------

def _wedge(a, b):
    out = {}
    for ka, va in a.items():
        for kb, vb in b.items():
            if set(ka) & set(kb):
                continue
            idx = list(ka + kb)
            sign = 1
            for i in range(len(idx)):
                for j in range(len(idx) - 1 - i):
                    if idx[j] > idx[j + 1]:
                        idx[j], idx[j + 1] = idx[j + 1], idx[j]
                        sign = -sign
            key = tuple(idx)
            out[key] = out.get(key, 0) + sign * va * vb
    return out


def _one_one(h):
    # sqrt(-1) h_{i jbar} dz^i ^ dzbar^j; basis index 2i is dz^i, 2j+1 is dzbar^j
    n = h.shape[0]
    return {(2 * i, 2 * j + 1): 1j * h[i, j] for i, j in itertools.product(range(n), range(n))}


@pytest.mark.parametrize("n", [1, 2, 3])
def test_trace_identity_against_exterior_algebra(n):
    rng = np.random.default_rng(n)
    g = random_hermitian(rng, n, 1)[0]
    b = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    b = b + b.conj().T
    w, beta = _one_one(g), _one_one(b)
    top = w
    for _ in range(n - 1):
        top = _wedge(top, w)
    lower = {(): 1.0}
    for _ in range(n - 1):
        lower = _wedge(lower, w)
    lhs = _wedge(lower, beta)
    key = tuple(range(2 * n))
    ratio = n * lhs[key] / top[key]
    assert ratio == pytest.approx(trace_form(g, b), rel=1e-12)
    assert abs(ratio.imag) < 1e-12
    # top power against the determinant: omega^n = n! det(g) (sqrt(-1))^n dz^1 ^ dzbar^1 ^ ...
    assert top[key] == pytest.approx(math.factorial(n) * np.linalg.det(g) * 1j ** n, rel=1e-12)


def test_symmetric_tensor_helper():
    D = random_tensor(np.random.default_rng(0), 2, 3)
    assert np.allclose(D, np.swapaxes(D, 1, 2))


def test_second_order_p_inequality_flags_increase():
    t = np.linspace(0, 2, 40)
    dP = -np.exp(-3 * t)
    dP[25] = 0.2
    s = series_from(t=t, total_volume=np.ones(40), dPdt_measured=dP, dPdt_formula=dP)
    v = dg.audit_bounds(s)["P_second_order"]
    assert not v.satisfied and v.location == 25
    clean = series_from(t=t, total_volume=np.ones(40), dPdt_measured=-np.exp(-3 * t),
                        dPdt_formula=-np.exp(-3 * t))
    # d2P/dt2 = -3 dP/dt, so the smallest constant is -3
    assert dg.audit_bounds(clean)["P_second_order"].constant == pytest.approx(-3.0, abs=1e-3)
