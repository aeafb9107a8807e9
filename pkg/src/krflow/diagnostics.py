"""Monitor series, a-priori estimate audits and decay-rate fits."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

TORUS_COLUMNS = ("t", "dt", "total_volume", "osc_phi", "sup_phidot", "P", "dPdt_measured",
                 "dPdt_formula", "ricci_residual", "min_eig", "trace_monitor", "jensen_integral")
P1_COLUMNS = ("t", "area", "area_law_residual", "sup_psi", "ricci_residual_rescaled",
              "round_deviation")


def _fmt(x):
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    return repr(x)


@dataclass
class MonitorSeries:
    """Time series of scalar monitors sampled at a fixed cadence.

    ``columns`` fixes the CSV layout; extra columns may follow the standard
    ones.
    """

    columns: tuple
    rows: list = field(default_factory=list)

    def append(self, record):
        missing = [c for c in self.columns if c not in record]
        if missing:
            raise KeyError(f"record lacks columns {missing}")
        self.rows.append(tuple(record[c] for c in self.columns))

    def __len__(self):
        return len(self.rows)

    def column(self, name):
        i = self.columns.index(name)
        return np.array([r[i] for r in self.rows], dtype=float)

    def set_column(self, name, values):
        i = self.columns.index(name)
        self.rows = [r[:i] + (float(v),) + r[i + 1:] for r, v in zip(self.rows, values)]

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([_fmt(x) for x in r])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text):
        rd = csv.reader(io.StringIO(text))
        header = tuple(next(rd))
        rows = [tuple(float(x) for x in r) for r in rd if r]
        return cls(header, rows)


def sample_derivative(t, f, width=5):
    """Derivative of samples ``f(t)`` from local Lagrange interpolation.

    Each point uses the ``width`` nearest samples (shifted inward at the
    ends), which gives fourth-order accuracy for ``width = 5`` on smooth data
    and handles uneven spacing.
    """
    t = np.asarray(t, dtype=float)
    f = np.asarray(f, dtype=float)
    m = len(t)
    if m < 2:
        return np.zeros(m)
    w = min(width, m)
    out = np.empty(m)
    for i in range(m):
        lo = min(max(i - w // 2, 0), m - w)
        idx = np.arange(lo, lo + w)
        h = np.max(np.abs(t[idx] - t[i])) or 1.0
        x = (t[idx] - t[i]) / h
        V = np.vander(x, w, increasing=True).T
        rhs_ = np.zeros(w)
        rhs_[1] = 1.0
        weights = np.linalg.solve(V, rhs_)
        out[i] = weights @ f[idx] / h
    return out


@dataclass(frozen=True)
class Verdict:
    """Outcome of one estimate check.

    ``constant`` is the smallest constant for which the checked bound holds
    on the samples (when meaningful); ``location`` is the offending sample
    index, or ``None``.
    """

    name: str
    satisfied: bool
    max_violation: float
    location: int | None = None
    constant: float | None = None
    applicable: bool = True

    def line(self):
        state = "n/a" if not self.applicable else ("ok" if self.satisfied else "VIOLATED")
        extra = "" if self.constant is None else f" constant={self.constant:.6g}"
        loc = "" if self.location is None else f" at sample {self.location}"
        return f"{self.name}: {state} max_violation={self.max_violation:.3e}{loc}{extra}"


def _monotone(name, values, slack, increasing=False):
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return Verdict(name, True, 0.0)
    jumps = np.diff(v) if not increasing else -np.diff(v)
    slack = np.broadcast_to(np.asarray(slack, dtype=float), jumps.shape)
    excess = jumps - slack
    k = int(np.argmax(excess))
    worst = float(max(excess[k], 0.0))
    return Verdict(name, bool(np.all(excess <= 0)), worst, None if worst == 0 else k + 1)


def audit_bounds(series, mode="unnormalized", trace_margin=1.0, phidot_slack=1e-10,
                 dpdt_rtol=0.05, dpdt_floor=1e-8, jensen_slack=1e-12, lemma_slack=1e-8):
    """Check the monitored estimates along a torus run.

    Returns a dict of :class:`Verdict` keyed by estimate name.  The trace
    monitor passes when it stays below its initial value plus
    ``trace_margin``; its reported constant is the smallest such margin.  The
    monotonicity checks for ``sup|phidot|``, ``P`` and the Jensen integral
    rely on ``c1 = 0`` and apply to unnormalized runs.
    """
    if len(series) == 0:
        raise ValueError("cannot audit an empty series")
    t = series.column("t")
    out = {}
    phi_osc = series.column("osc_phi")
    half = phi_osc[len(phi_osc) // 2:]
    out["phi_oscillation"] = Verdict("phi_oscillation", True, 0.0,
                                     constant=float(np.max(phi_osc)) if len(phi_osc) else 0.0)
    if len(half):
        out["phi_oscillation_late"] = Verdict("phi_oscillation_late", True, 0.0,
                                              constant=float(np.max(half)))

    tm = series.column("trace_monitor")
    if len(tm):
        excess = tm - (tm[0] + trace_margin)
        k = int(np.argmax(excess))
        out["trace_monitor"] = Verdict("trace_monitor", bool(np.all(excess <= 0)),
                                       float(max(excess[k], 0.0)),
                                       None if excess[k] <= 0 else k,
                                       constant=float(max(np.max(tm) - tm[0], 0.0)))

    vol = series.column("total_volume")
    if len(vol):
        drift = np.abs(vol - vol[0]) / abs(vol[0])
        out["volume_drift"] = Verdict("volume_drift", True, float(np.max(drift)),
                                      constant=float(np.max(drift)))

    unnorm = mode == "unnormalized"
    sp = series.column("sup_phidot")
    out["sup_phidot_monotone"] = _monotone("sup_phidot_monotone", sp, phidot_slack)
    if not unnorm:
        out["sup_phidot_monotone"] = _na(out["sup_phidot_monotone"])

    P = series.column("P")
    out["P_monotone"] = _monotone("P_monotone", P, 1e-12 * max(1.0, float(np.max(np.abs(P)))))
    meas = series.column("dPdt_measured")
    form = series.column("dPdt_formula")
    sel = np.abs(meas) > dpdt_floor
    if np.any(sel):
        rel = np.abs(meas[sel] - form[sel]) / np.abs(meas[sel])
        k = int(np.argmax(rel))
        idx = int(np.flatnonzero(sel)[k])
        out["dPdt_identity"] = Verdict("dPdt_identity", bool(rel[k] <= dpdt_rtol), float(rel[k]),
                                       idx if rel[k] > dpdt_rtol else None)
    else:
        out["dPdt_identity"] = Verdict("dPdt_identity", True, 0.0)

    # second-order inequality d2P/dt2 >= C dP/dt: log the smallest C, flag increases of P
    dP = meas
    d2P = sample_derivative(t, dP) if len(t) > 1 else np.zeros_like(dP)
    use = dP < -dpdt_floor
    ratio = d2P[use] / dP[use]
    wrong = np.flatnonzero(dP > dpdt_floor)
    out["P_second_order"] = Verdict("P_second_order", wrong.size == 0,
                                    float(np.max(dP[wrong])) if wrong.size else 0.0,
                                    int(wrong[0]) if wrong.size else None,
                                    constant=float(np.max(ratio)) if ratio.size else None)

    J = series.column("jensen_integral")
    out["jensen_monotone"] = _monotone("jensen_monotone", J, jensen_slack)
    if not unnorm:
        for k in ("P_monotone", "dPdt_identity", "P_second_order", "jensen_monotone"):
            out[k] = _na(out[k])

    if "lemma_min" in series.columns:
        q = series.column("lemma_min")
        ok = ~np.isnan(q)
        q = q[ok]
        if q.size:
            excess = q[0] - q - lemma_slack
            k = int(np.argmax(excess))
            out["lemma_min_at_start"] = Verdict("lemma_min_at_start", bool(np.all(excess <= 0)),
                                                float(max(excess[k], 0.0)),
                                                None if excess[k] <= 0 else k,
                                                constant=float(q[0]))
    return out


def _na(v):
    return Verdict(v.name, True, v.max_violation, v.location, v.constant, applicable=False)


DECAY_MODELS = {
    "t1exp": lambda t: (t + 1.0) * np.exp(-t),
    "exp_half": lambda t: np.exp(-0.5 * t),
}


@dataclass(frozen=True)
class DecayFit:
    model: str
    C: float
    C_sup: float
    residual: float
    slope: float
    bound_holds: bool
    applicable: bool


def fit_decay(t, q, model="t1exp", tail=0.8, slope_tol=0.05):
    """Least-squares fit of ``log q`` against ``log C + log model(t)``.

    The fit uses the last ``tail`` fraction of samples.  ``C`` is the fitted
    constant and ``C_sup`` the smallest constant making ``q <= C model`` hold
    at every sample.  If ``log(q / model)`` still trends upward (slope above
    ``slope_tol``) the model cannot bound the data and the fit is reported
    as not applicable.
    """
    if model not in DECAY_MODELS:
        raise ValueError(f"unknown decay model {model!r}")
    t = np.asarray(t, dtype=float)
    q = np.abs(np.asarray(q, dtype=float))
    start = int(math.floor((1.0 - tail) * len(t)))
    tt, qq = t[start:], q[start:]
    keep = qq > 0
    tt, qq = tt[keep], qq[keep]
    if tt.size < 3:
        return DecayFit(model, math.nan, math.nan, math.nan, math.nan, False, False)
    r = np.log(qq) - np.log(DECAY_MODELS[model](tt))
    logC = float(np.mean(r))
    A = np.vstack([np.ones_like(tt), tt]).T
    coef, *_ = np.linalg.lstsq(A, r, rcond=None)
    slope = float(coef[1])
    resid = float(np.sqrt(np.mean((r - logC) ** 2)))
    ratio = q[q > 0] / DECAY_MODELS[model](t[q > 0])
    C_sup = float(np.max(ratio)) if ratio.size else 0.0
    C = math.exp(logC)
    applicable = slope <= slope_tol
    holds = bool(np.all(q <= C * DECAY_MODELS[model](t) * (1 + 1e-9))) if applicable else False
    return DecayFit(model, C, C_sup, resid, slope, holds, applicable)


def estimate_report(verdicts):
    """Plain-text summary, one line per estimate."""
    return "\n".join(v.line() for v in verdicts.values()) + "\n"


def verdicts_csv(verdicts):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["estimate", "applicable", "satisfied", "max_violation", "location", "constant"])
    for v in verdicts.values():
        w.writerow([v.name, int(v.applicable), int(v.satisfied), _fmt(v.max_violation),
                    "" if v.location is None else v.location,
                    "" if v.constant is None else _fmt(v.constant)])
    return buf.getvalue()


# ----------------------------------------------------------------------------
# pointwise algebraic inequalities
# ----------------------------------------------------------------------------

def dagger_quantity(g0, g, D):
    """The quantity bounded above by zero in the trace estimate.

    ``-g0^{k lbar} g^{i jbar} g^{p qbar} D_{i k qbar} conj(D_{j l pbar}) / tr
    + |d tr|^2_g / tr^2`` with ``tr = tr_{g0} g`` and ``d_i tr = g0^{k lbar}
    D_{i k lbar}``.  ``D[..., i, k, q]`` stands for the background covariant
    derivative of ``g`` and must be symmetric in ``i, k``.
    """
    from .geometry import inv_up

    h0 = inv_up(g0)
    h = inv_up(g)
    tr = np.einsum("...kl,...kl->...", h0, g).real
    first = np.einsum("...kl,...ij,...pq,...ikq,...jlp->...", h0, h, h, D, np.conj(D)).real
    dtr = np.einsum("...kl,...ikl->...i", h0, D)
    grad2 = np.einsum("...ij,...i,...j->...", h, dtr, np.conj(dtr)).real
    return -first / tr + grad2 / tr ** 2


def trace_bound_gap(g0, g):
    """``n C1^{n-1} C - tr_g g0`` where ``C1 = tr_{g0} g`` and ``C`` bounds the volume ratio.

    ``C = max(det g / det g0, det g0 / det g)``; the gap is non-negative.
    """
    from .geometry import hermitian_det, trace_form

    n = g.shape[-1]
    C1 = trace_form(g0, g)
    ratio = hermitian_det(g) / hermitian_det(g0)
    C = np.maximum(ratio, 1.0 / ratio)
    return n * C1 ** (n - 1) * C - trace_form(g, g0)
