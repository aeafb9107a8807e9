"""Identity suites: analytic curvature, discrete curvature and pointwise inequalities."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from . import cones
from .diagnostics import dagger_quantity, trace_bound_gap
from .geometry import (
    Chart,
    commutator_residual,
    curvature_symmetry_residuals,
    fs_ricci_residual,
    kahler_residual,
    metric_from_potential,
    metric_parallel_residual,
    random_potential,
    ricci,
    ricci_closedness_residual,
)

ALGEBRAIC = ("swap_unbarred", "swap_barred", "conjugation", "kahler", "metric_parallel")
DISCRETE = ("ricci_routes", "ricci_closed", "commutator_vector", "commutator_form01")
ORDER = {"fd4": 4}
ALGEBRAIC_TOL = 1e-10
ROUNDOFF_FLOOR = 1e-8  # residuals this small are resolved; refinement only adds rounding noise


@dataclass(frozen=True)
class CheckRow:
    suite: str
    name: str
    value: float
    tol: float
    passed: bool
    detail: str = ""

    def line(self):
        mark = "PASS" if self.passed else "FAIL"
        d = f" ({self.detail})" if self.detail else ""
        return f"{mark}  {self.suite:<12} {self.name:<34} {self.value:.3e} tol {self.tol:.1e}{d}"


def smooth_field(chart):
    """Smooth periodic complex vector field (or (0,1)-form coefficients)."""
    x = chart.coordinates()
    comps = [np.cos(2 * np.pi * x[2 * i] / chart.period) + 0.3j * np.sin(2 * np.pi * x[2 * i + 1] / chart.period)
             for i in range(chart.n)]
    return np.stack(comps, axis=-1)


def curvature_residuals(chart, phi):
    """All discrete curvature identity residuals of the metric ``I + ddbar phi``."""
    m = metric_from_potential(chart, phi)
    out = dict(curvature_symmetry_residuals(m.curvature))
    out["kahler"] = kahler_residual(m)
    out["metric_parallel"] = metric_parallel_residual(m)
    ric = ricci(m)
    out["ricci_routes"] = float(np.max(np.abs(ric - ricci(m, "logdet"))))
    out["ricci_closed"] = ricci_closedness_residual(ric, chart)
    X = smooth_field(chart)
    out["commutator_vector"] = commutator_residual(m, X, "vector")
    out["commutator_form01"] = commutator_residual(m, X, "form01")
    return out


def nominal_ratio(scheme, coarse, fine):
    return (fine / coarse) ** ORDER[scheme]


def curvature_suite(n, resolutions, trials, seed=0, schemes=("spectral", "fd4"), min_eig=None):
    """Run the identity suite on ``trials`` random potentials.

    Each potential is generated from the same random stream on every grid,
    so refinement compares the same metric.  Returns the list of
    per-potential residual dicts keyed by ``(resolution, scheme)``.
    """
    if min_eig is None:
        min_eig = 0.6 if n == 1 else 0.7
    rng = np.random.default_rng(seed)
    results = []
    for _ in range(trials):
        s = int(rng.integers(2 ** 31))
        res = {}
        for r in resolutions:
            for scheme in schemes:
                chart = Chart(n, r, scheme=scheme)
                phi = random_potential(chart, np.random.default_rng(s), modes=1, min_eig=min_eig)
                res[(r, scheme)] = curvature_residuals(chart, phi)
        results.append(res)
    return results


def judge_curvature(n, resolutions, results, ratio_slack=2.0):
    """Turn suite results into pass/fail rows.

    Algebraic identities must hold to ``ALGEBRAIC_TOL`` on every grid.  The
    discretisation-dependent residuals must shrink under refinement for
    both schemes, and for fourth-order differences the ratio must lie within
    a factor ``ratio_slack`` of ``(fine / coarse)^4``.  Spectral
    differentiation has no fixed algebraic order, so only a decrease is
    demanded there.  Trials whose residual is already below
    ``ROUNDOFF_FLOOR`` on both grids are exempt from the ratio test.
    """
    coarse, fine = resolutions
    rows = []
    suite = f"curv n={n}"
    for name in ALGEBRAIC:
        worst = max(res[key][name] for res in results for key in res)
        rows.append(CheckRow(suite, name, worst, ALGEBRAIC_TOL, worst <= ALGEBRAIC_TOL))
    schemes = sorted({key[1] for key in results[0]})
    for name in DISCRETE:
        for scheme in schemes:
            ratios = [res[(coarse, scheme)][name] / max(res[(fine, scheme)][name], 1e-300)
                      for res in results
                      if max(res[(coarse, scheme)][name], res[(fine, scheme)][name]) > ROUNDOFF_FLOOR]
            worst = max(res[(fine, scheme)][name] for res in results)
            if not ratios:
                rows.append(CheckRow(suite, f"{name} [{scheme}]", worst, ROUNDOFF_FLOOR, True,
                                     "at rounding floor"))
                continue
            lo, hi = min(ratios), max(ratios)
            if scheme in ORDER:
                nom = nominal_ratio(scheme, coarse, fine)
                ok = nom / ratio_slack <= lo and hi <= nom * ratio_slack
                detail = f"ratio {lo:.2f}..{hi:.2f}, nominal {nom:.2f}"
            else:
                ok = lo > 1.0
                detail = f"ratio {lo:.3g}..{hi:.3g}"
            rows.append(CheckRow(suite, f"{name} [{scheme}]", worst, math.inf, bool(ok), detail))
    return rows


# ----------------------------------------------------------------------------
# random pointwise samples
# ----------------------------------------------------------------------------

def random_hermitian(rng, n, size, min_eig=0.05, spread=3.0):
    """Batch of positive definite Hermitian matrices with eigenvalues in ``[min_eig, min_eig + spread]``."""
    Z = rng.normal(size=(size, n, n)) + 1j * rng.normal(size=(size, n, n))
    Q, _ = np.linalg.qr(Z)
    lam = min_eig + spread * rng.random((size, n))
    return np.einsum("sij,sj,skj->sik", Q, lam, np.conj(Q))


def random_tensor(rng, n, size, symmetric=True):
    """Batch of tensors ``D[i, k, q]``, symmetric in ``i, k`` when requested."""
    D = rng.normal(size=(size, n, n, n)) + 1j * rng.normal(size=(size, n, n, n))
    if symmetric:
        D = 0.5 * (D + np.swapaxes(D, 1, 2))
    return D


def inequality_samples(samples=1000, seed=0, dims=(1, 2, 3)):
    """Worst values of the two pointwise inequalities over random samples.

    Returns ``(max dagger, min trace gap)``; the first must be non-positive
    and the second non-negative.
    """
    rng = np.random.default_rng(seed)
    worst_dagger = -math.inf
    worst_gap = math.inf
    per = [samples // len(dims) + (1 if i < samples % len(dims) else 0) for i in range(len(dims))]
    for n, m in zip(dims, per):
        g0 = random_hermitian(rng, n, m)
        g = random_hermitian(rng, n, m)
        D = random_tensor(rng, n, m)
        dq = dagger_quantity(g0, g, D)
        scale = np.einsum("sikq,sikq->s", D, np.conj(D)).real + 1.0
        worst_dagger = max(worst_dagger, float(np.max(dq / scale)))
        gap = trace_bound_gap(g0, g)
        worst_gap = min(worst_gap, float(np.min(gap / (1.0 + np.abs(gap)))))
    return worst_dagger, worst_gap


# ----------------------------------------------------------------------------
# full suite for the command line
# ----------------------------------------------------------------------------

def fs_points(n, count, rng, radius=3.0):
    pts = rng.normal(size=(count, n)) + 1j * rng.normal(size=(count, n))
    r = radius * rng.random(count) ** 0.5
    pts *= (r / np.linalg.norm(pts, axis=1))[:, None]
    pts[0] = 0.0
    pts[1] = 0.0
    pts[1, 0] = radius
    return pts


def run_suite(seed=0, resolution=32, trials=4, samples=1000, log=None):
    """Every identity check, as a list of :class:`CheckRow`.

    ``resolution`` is the coarse grid for ``n = 1`` (refined to twice that);
    ``n = 2`` uses the pair 12 and 16.
    """
    rows = []
    rng = np.random.default_rng(seed)
    for n in (1, 2):
        res = fs_ricci_residual(n, fs_points(n, 128, rng))
        rows.append(CheckRow("fs", f"einstein n={n}", res, 1e-8, res < 1e-8))
    for n, pair in ((1, (resolution, 2 * resolution)), (2, (12, 16))):
        t0 = time.perf_counter()
        results = curvature_suite(n, pair, trials, seed=seed + n)
        rows += judge_curvature(n, pair, results)
        if log:
            log(f"curvature suite n={n} took {time.perf_counter() - t0:.1f}s")
    dag, gap = inequality_samples(samples, seed)
    rows.append(CheckRow("pointwise", "dagger <= 0", max(dag, 0.0), 1e-10, dag <= 1e-10))
    rows.append(CheckRow("pointwise", "trace bound gap >= 0", max(-gap, 0.0), 1e-10, gap >= -1e-10))
    for name, cls, T, beh in CONE_CASES:
        rep = cones.terminal_behavior(cones.get_model(name), cls)
        ok = rep.T == T and rep.behavior == beh
        rows.append(CheckRow("cone", f"{name} {cls}", 0.0 if ok else 1.0, 0.0, ok,
                             f"T={rep.T} behavior={rep.behavior}"))
    return rows


CONE_CASES = (
    ("P1", (2,), 1, "a"),
    ("P1xP1", (2, 2), 2, "a"),
    ("P1xP1", (3, 1), 1, "d"),
    ("ExS", (1, 1), math.inf, "c"),
    ("BlpP2", (1, 3), 1, "d"),
    ("BlpP2", (1, 2), 1, "a"),
)


def table(rows):
    return "\n".join(r.line() for r in rows) + "\n"
