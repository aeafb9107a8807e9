"""Parabolic complex Monge-Ampere flow on flat complex tori.

The Kahler-Ricci flow ``d omega / dt = -Ric(omega)`` (or its normalized form
``-Ric(omega) - omega``) is solved at the level of a potential:

    omega(t) = omega_hat_t + ddbar phi,
    dphi/dt  = log(omega^n / Omega)            (unnormalized)
    dphi/dt  = log(omega^n / Omega) - phi      (normalized)

with reference path ``omega_hat_t = omega0 + t chi`` (unnormalized) or
``e^{-t} omega0 + (1 - e^{-t}) chi`` (normalized), and ``ddbar log Omega =
chi``.  On a torus ``c1 = 0``, so ``chi`` must be exact; by default it
vanishes and ``Omega`` is the constant density with the volume of
``omega0``.

Time stepping is classical RK4 with a CFL bound from the largest eigenvalue
of the linearised operator, periodic step-doubling error control, and step
halving when a stage loses positivity.
"""

from __future__ import annotations

import math
import time as _time
from dataclasses import dataclass, field, replace

import numpy as np

from .diagnostics import TORUS_COLUMNS, MonitorSeries, sample_derivative
from .geometry import (POSITIVITY_RTOL, Chart, HessianOperator, MetricField, NotPositiveDefinite,
                       check_positive, grad_norm_sq, hermitian_det, random_potential,
                       trace_form)

RK4_STABILITY = 2.785  # extent of the RK4 stability region on the negative real axis
MODES = ("unnormalized", "normalized")
PERTURBATIONS = ("cosine", "product", "random", "none")
FILTERS = ("none", "two_thirds")


class StiffnessRejection(RuntimeError):
    """A requested step exceeds the explicit stability bound."""

    def __init__(self, dt, dt_max):
        self.dt, self.dt_max = float(dt), float(dt_max)
        super().__init__(f"step {dt:.3e} exceeds the stability bound {dt_max:.3e}")


class SingularTime(RuntimeError):
    """Positivity could not be kept by halving; ``t_est`` estimates the blow-up time."""

    def __init__(self, t_last, dt_rejected):
        self.t_last = float(t_last)
        self.t_est = float(t_last + 0.5 * dt_rejected)
        super().__init__(f"singular time near t = {self.t_est:.6g} (last accepted t = {self.t_last:.6g})")


class InconsistentClass(ValueError):
    """The twisting form is not closed, or not in the class required by ``c1``."""


@dataclass(frozen=True)
class TorusFlowConfig:
    """Parameters of a torus run.  Times are in flow units, lengths in periods."""

    n: int = 1
    resolution: int = 32
    period: float = 1.0
    scheme: str = "spectral"
    mode: str = "unnormalized"
    perturbation: str = "cosine"
    amplitude: float = 0.05
    seed: int = 0
    chi_amplitude: float = 0.0
    t_max: float = 5.0
    ricci_tol: float = 1e-6
    monitor_dt: float = 0.01
    dt: float | None = None
    cfl_safety: float = 0.9
    error_check_every: int = 10
    error_tol: float = 1e-9
    max_halvings: int = 30
    enforce_cfl: bool = True
    filter: str = "none"
    trace_A: float = 1.0
    horizon: float | None = None
    lemma_eps: float = 0.1
    sample_times: tuple = ()

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.perturbation not in PERTURBATIONS:
            raise ValueError(f"perturbation must be one of {PERTURBATIONS}")
        if self.filter not in FILTERS:
            raise ValueError(f"filter must be one of {FILTERS}")
        if self.monitor_dt <= 0 or self.t_max <= 0:
            raise ValueError("monitor_dt and t_max must be positive")
        if self.dt is not None and self.dt <= 0:
            raise ValueError("dt must be positive")
        if not 0 < self.cfl_safety <= 1:
            raise ValueError("cfl_safety must lie in (0, 1]")
        if self.error_check_every < 0 or self.max_halvings < 0:
            raise ValueError("error_check_every and max_halvings must be non-negative")
        if self.horizon is not None and self.horizon <= 0:
            raise ValueError("horizon must be positive")


def initial_potential(config, chart):
    """Potential ``phi0`` with ``omega0 = I + ddbar phi0``."""
    x = chart.coordinates()
    L = chart.period
    eps = config.amplitude
    if config.perturbation == "cosine":
        return eps * np.cos(2 * np.pi * x[0] / L)
    if config.perturbation == "product":
        return eps * sum(np.cos(2 * np.pi * x[2 * i] / L) for i in range(chart.n))
    if config.perturbation == "random":
        rng = np.random.default_rng(config.seed)
        phi = random_potential(chart, rng, modes=2, amplitude=1.0)
        return eps * phi / np.max(np.abs(phi))
    return np.zeros(chart.shape)


def closedness_residual(chart, form):
    d = chart.grad(form)
    return float(np.max(np.abs(d - np.swapaxes(d, -3, -2))))


def build_volume_form(chart, g0, chi):
    """Return ``log`` of the density ``Omega / (n! 2^n dx dy...)`` with ``ddbar log Omega = chi``.

    ``chi`` must be a closed real (1,1)-form with zero average (the class
    ``-c1`` of a torus).  The density is normalised so that ``int Omega =
    int omega0^n``.
    """
    chi = np.asarray(chi, dtype=complex)
    n = chart.n
    scale = max(1.0, float(np.max(np.abs(chi))))
    if np.max(np.abs(chi - np.conj(np.swapaxes(chi, -1, -2)))) > 1e-12 * scale:
        raise InconsistentClass("twisting form is not real")
    if closedness_residual(chart, chi) > 1e-8 * scale:
        raise InconsistentClass("twisting form is not closed")
    mean = chart.mean(chi)
    if np.max(np.abs(mean)) > 1e-10 * scale:
        raise InconsistentClass("twisting form has nonzero average, so it is not in -c1 = 0")
    tr = sum(chi[..., i, i].real for i in range(n))
    T = np.fft.fftn(tr, axes=chart.axes)
    sym = sum(chart.symbol(i) * chart.symbol(i, bar=True) for i in range(n)).real
    safe = np.where(sym == 0, 1.0, sym)
    h = np.fft.ifftn(np.where(sym == 0, 0.0, T / safe), axes=chart.axes).real
    if np.max(np.abs(chart.ddbar(h) - chi)) > 1e-8 * scale:
        raise InconsistentClass("twisting form is not ddbar-exact on the chart")
    vol0 = np.mean(hermitian_det(g0))
    return h + math.log(vol0 / np.mean(np.exp(h)))


@dataclass(frozen=True, eq=False)
class TorusProblem:
    config: TorusFlowConfig
    chart: Chart
    phi0: np.ndarray
    g0: np.ndarray
    chi: np.ndarray
    log_omega: np.ndarray
    mask: np.ndarray | None
    op_max: float
    hessian: HessianOperator

    @property
    def n(self):
        return self.chart.n

    @property
    def normalized(self):
        return self.config.mode == "normalized"

    def flat_limit(self):
        """Constant metric in the class of ``omega0`` (the flat limit)."""
        return self.chart.mean(self.g0)


def build_problem(config):
    chart = Chart(config.n, config.resolution, config.period, config.scheme)
    phi0 = initial_potential(config, chart)
    g0 = chart.potential_hessian(phi0) + np.eye(config.n)
    check_positive(g0)
    if config.chi_amplitude:
        x = chart.coordinates()
        chi = chart.potential_hessian(config.chi_amplitude * np.sin(2 * np.pi * x[0] / chart.period))
    else:
        chi = np.zeros_like(g0)
    log_omega = build_volume_form(chart, g0, chi)
    mask = chart.two_thirds_mask() if config.filter == "two_thirds" else None
    if mask is None:
        op_max = chart.laplace_symbol_max
    else:
        full = sum(k ** 2 for k in chart._kappas_half)
        op_max = 0.25 * float(np.max(full * mask))
    return TorusProblem(config, chart, phi0, g0, chi, log_omega, mask, op_max,
                        HessianOperator(chart, mask))


@dataclass(frozen=True, eq=False)
class FlowState:
    t: float
    phi: np.ndarray
    steps: int = 0


def initial_state(problem):
    return FlowState(0.0, np.zeros(problem.chart.shape))


def reference_metric(problem, t):
    if problem.normalized:
        e = math.exp(-t)
        return e * problem.g0 + (1.0 - e) * problem.chi
    return problem.g0 + t * problem.chi


def metric_array(problem, t, phi, check=True):
    g = reference_metric(problem, t) + problem.hessian(phi)
    if check:
        check_positive(g)
    return g


def metric(problem, state):
    return MetricField(problem.chart, metric_array(problem, state.t, state.phi))


def _logdet(problem, t, phi):
    """``(log det g, smallest eigenvalue)`` with the positivity check."""
    if problem.n == 1:
        ref = reference_metric(problem, t)[..., 0, 0].real
        g = ref + problem.hessian.scalar(phi)
        lam = float(np.min(g))
        if not lam > 0:
            idx = np.unravel_index(np.argmin(g), g.shape)
            raise NotPositiveDefinite(idx, lam)
        return np.log(g), lam
    g = metric_array(problem, t, phi, check=False)
    lam = check_positive(g)
    return np.log(hermitian_det(g)), float(np.min(lam))


def _rhs_lam(problem, t, phi):
    logdet, lam = _logdet(problem, t, phi)
    out = logdet - problem.log_omega
    if problem.normalized:
        out -= phi
    return out, lam


def rhs(problem, t, phi):
    """``dphi/dt``; raises :class:`NotPositiveDefinite` if the metric degenerates."""
    return _rhs_lam(problem, t, phi)[0]


def stable_dt(problem, g):
    """Explicit stability bound for a metric array (or its smallest eigenvalue)."""
    lam_min = float(g) if np.ndim(g) == 0 else float(np.min(check_positive(g)))
    lam = problem.op_max / lam_min
    if problem.normalized:
        lam += 1.0
    return problem.config.cfl_safety * RK4_STABILITY / lam


def rk4(problem, t, phi, dt, k1=None):
    if k1 is None:
        k1 = rhs(problem, t, phi)
    k2 = rhs(problem, t + 0.5 * dt, phi + 0.5 * dt * k1)
    k3 = rhs(problem, t + 0.5 * dt, phi + 0.5 * dt * k2)
    k4 = rhs(problem, t + dt, phi + dt * k3)
    return phi + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def prepare(problem, state):
    """First RK4 stage and the stability bound at ``state``."""
    k1, lam = _rhs_lam(problem, state.t, state.phi)
    return k1, stable_dt(problem, lam)


def step(problem, state, dt, prepared=None):
    """One RK4 step; raises :class:`StiffnessRejection` above the stability bound."""
    k1, dt_max = prepared if prepared is not None else prepare(problem, state)
    if problem.config.enforce_cfl and dt > dt_max * (1 + 1e-12):
        raise StiffnessRejection(dt, dt_max)
    return FlowState(state.t + dt, rk4(problem, state.t, state.phi, dt, k1), state.steps + 1)


def advance(problem, state, dt, check_error=False, prepared=None, t_new=None):
    """Take one accepted step, halving ``dt`` on stiffness or positivity failure.

    Returns ``(new_state, dt_taken, rejections, dt_suggested, prepared_next)``.
    A step is accepted only if the new state's metric is positive; the first
    stage of the next step is computed on the way and returned.  With
    ``check_error`` the step is compared against two half steps; the
    half-step result is kept and the error estimate drives ``dt_suggested``.
    ``t_new`` pins the new time exactly (used to land on sample times).
    """
    cfg = problem.config
    if prepared is None:
        prepared = prepare(problem, state)
    rejections = 0
    last = None
    stiff = None
    for _ in range(cfg.max_halvings + 1):
        try:
            new = step(problem, state, dt, prepared)
            suggested = dt
            if check_error:
                half = rk4(problem, state.t, state.phi, 0.5 * dt, prepared[0])
                fine = rk4(problem, state.t + 0.5 * dt, half, 0.5 * dt)
                err = float(np.max(np.abs(fine - new.phi))) / 15.0
                if err > cfg.error_tol:
                    raise _ErrorTooLarge
                grow = 2.0 if err == 0 else min(2.0, 0.9 * (cfg.error_tol / err) ** 0.2)
                new = FlowState(new.t, fine, new.steps)
                suggested = dt * max(grow, 1.0)
            if t_new is not None and dt == t_new - state.t:
                new = FlowState(t_new, new.phi, new.steps)
            nxt = prepare(problem, new)
            return new, dt, rejections, suggested, nxt
        except StiffnessRejection as exc:
            stiff = exc
            dt = min(0.5 * dt, exc.dt_max)
        except (NotPositiveDefinite, _ErrorTooLarge):
            last = dt
            dt = 0.5 * dt
        rejections += 1
    if last is not None:
        raise SingularTime(state.t, last)
    raise stiff


class _ErrorTooLarge(Exception):
    pass


# ----------------------------------------------------------------------------
# monitors
# ----------------------------------------------------------------------------

def monitor_record(problem, state, dt):
    """Scalar monitors for one state (see ``TORUS_COLUMNS``)."""
    ch = problem.chart
    m = metric(problem, state)
    phi = state.phi
    phidot = np.log(m.det) - problem.log_omega
    if problem.normalized:
        phidot = phidot - phi
    dens = m.volume_density
    ric = -ch.ddbar(np.log(m.det))
    omega = np.exp(problem.log_omega)
    rec = {
        "t": state.t,
        "dt": dt,
        "total_volume": ch.integrate(dens),
        "osc_phi": float(np.max(phi) - np.min(phi)),
        "sup_phidot": float(np.max(np.abs(phidot))),
        "P": ch.integrate(phidot * dens),
        "dPdt_measured": math.nan,
        "dPdt_formula": -ch.integrate(grad_norm_sq(m, phidot) * dens),
        "ricci_residual": float(np.max(np.abs(ric))),
        "min_eig": float(np.min(m.min_eig)),
        "trace_monitor": float(np.max(np.log(trace_form(problem.g0, m.g)) - problem.config.trace_A * phi)),
        "jensen_integral": float(np.mean(phi * omega) / np.mean(omega)),
    }
    S = problem.config.horizon
    if S is not None:
        if state.t <= S + 1e-12:
            q = (S - state.t + problem.config.lemma_eps) * phidot + phi + problem.n * state.t
            rec["lemma_min"] = float(np.min(q))
        else:
            rec["lemma_min"] = math.nan
    return rec, m, ric


@dataclass
class RunResult:
    status: str
    state: FlowState
    series: MonitorSeries
    problem: TorusProblem
    snapshots: dict = field(default_factory=dict)
    singular_time: float | None = None
    rejections: int = 0
    steps: int = 0
    consistency: list = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def exit_code(self):
        return {"converged": 0, "t_max": 2, "singular": 3}[self.status]

    def final_metric(self):
        return metric(self.problem, self.state)

    def flat_deviation(self):
        """``sup |g - g_flat|`` against the constant metric in the class of omega0."""
        g = self.final_metric().g
        if self.problem.normalized:
            flat = math.exp(-self.state.t) * self.problem.flat_limit()
        else:
            flat = self.problem.flat_limit()
        return float(np.max(np.abs(g - flat)))

    def consistency_residual(self, floor=1e-6):
        """Worst relative mismatch between the sampled ``d omega/dt`` and the flow's right side.

        The right side is ``-Ric`` (or ``-Ric - omega`` when normalized);
        samples where it is below ``floor`` are skipped.
        """
        vals = [r / s for (_, r, s) in self.consistency if s > floor]
        return max(vals) if vals else 0.0


def _sample_schedule(cfg):
    k = int(math.floor(cfg.t_max / cfg.monitor_dt + 1e-9))
    times = {round(i * cfg.monitor_dt, 12) for i in range(1, k + 1)}
    times |= {float(s) for s in cfg.sample_times if 0 < s <= cfg.t_max}
    times.add(float(cfg.t_max))
    return sorted(times)


def run(config, progress=None):
    """Integrate until the Ricci residual falls below ``ricci_tol`` or ``t_max``.

    Monitors are recorded at multiples of ``monitor_dt`` (and at any extra
    ``sample_times``, where the potential is also stored).
    """
    wall0 = _time.perf_counter()
    problem = build_problem(config) if isinstance(config, TorusFlowConfig) else config
    cfg = problem.config
    state = initial_state(problem)
    extra = ("lemma_min",) if cfg.horizon is not None else ()
    series = MonitorSeries(TORUS_COLUMNS + extra)
    result = RunResult("t_max", state, series, problem)
    wanted = {float(s) for s in cfg.sample_times}

    prepared = prepare(problem, state)
    dt_ctrl = cfg.dt if cfg.dt is not None else prepared[1]
    rec, m, ric = monitor_record(problem, state, 0.0)
    series.append(rec)
    history = [(0.0, m.g, ric)]
    if 0.0 in wanted:
        result.snapshots[0.0] = state.phi.copy()

    dt_last = 0.0
    nsteps = 0
    for target in _sample_schedule(cfg):
        while state.t < target - 1e-13:
            dt = min(dt_ctrl, prepared[1]) if cfg.dt is None else dt_ctrl
            last_piece = dt >= target - state.t
            if last_piece:
                dt = target - state.t
            check = cfg.error_check_every > 0 and nsteps % cfg.error_check_every == 0
            try:
                state, dt_used, rej, dt_next, prepared = advance(
                    problem, state, dt, check_error=check, prepared=prepared, t_new=target)
            except SingularTime as exc:
                result.status = "singular"
                result.singular_time = exc.t_est
                result.state = state
                result.steps = nsteps
                result.wall_time = _time.perf_counter() - wall0
                _fill_measured_dpdt(series)
                return result
            result.rejections += rej
            nsteps += 1
            dt_last = dt_used
            if check:
                dt_ctrl = dt_next
            elif cfg.dt is not None and not last_piece:
                dt_ctrl = dt_used
        state = FlowState(target, state.phi, state.steps)
        rec, m, ric = monitor_record(problem, state, dt_last)
        series.append(rec)
        if target in wanted:
            result.snapshots[target] = state.phi.copy()
        history.append((target, m.g, ric))
        if len(history) > 3:
            history.pop(0)
        if len(history) == 3:
            (t0, g0, _), (t1, _, r1), (t2, g2, _) = history
            dgdt = (g2 - g0) / (t2 - t0)
            expected = -r1 - (history[1][1] if problem.normalized else 0.0)
            result.consistency.append((t1, float(np.max(np.abs(dgdt - expected))),
                                       float(np.max(np.abs(expected)))))
        if progress is not None:
            progress(rec)
        if rec["ricci_residual"] < cfg.ricci_tol:
            result.status = "converged"
            break
    result.state = state
    result.steps = nsteps
    _fill_measured_dpdt(series)
    result.wall_time = _time.perf_counter() - wall0
    return result


def _fill_measured_dpdt(series):
    series.set_column("dPdt_measured", sample_derivative(series.column("t"), series.column("P")))


def rescaling_deviation(unnormalized, normalized, times):
    """Largest ``|omega(t) - omega_u(e^t - 1) / e^t|`` over the given times.

    Both runs must hold snapshots of the potential at the needed times.
    """
    pu, pn = unnormalized.problem, normalized.problem
    worst = 0.0
    for t in times:
        s = math.expm1(t)
        key_u = _lookup(unnormalized.snapshots, s)
        key_n = _lookup(normalized.snapshots, t)
        gu = metric_array(pu, key_u, unnormalized.snapshots[key_u])
        gn = metric_array(pn, key_n, normalized.snapshots[key_n])
        worst = max(worst, float(np.max(np.abs(gn - gu / (s + 1.0)))))
    return worst


def _lookup(snapshots, t):
    for k in snapshots:
        if abs(k - t) <= 1e-9 * max(1.0, abs(t)):
            return k
    raise KeyError(f"no snapshot stored at t = {t}")


def with_overrides(config, **kw):
    return replace(config, **kw)
