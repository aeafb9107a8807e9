"""Kahler-Ricci flow of rotation-invariant metrics on the projective line.

Rotation-invariant functions on the line are functions of the moment
coordinate ``tau = |z|^2 / (1 + |z|^2)`` of the Fubini-Study form, which
runs over ``[0, 1]`` from the pole ``z = 0`` to the pole ``z = inf``.  For
such ``f``,

    sqrt(-1) ddbar f = (L f) omega_FS,    L f = d/dtau (tau (1 - tau) df/dtau),

and ``L`` is the Legendre operator: ``L P_k(2 tau - 1) = -k (k + 1) P_k``.
Writing ``omega = r(tau) omega_FS`` (``r`` is smooth and positive on the
closed interval for a smooth metric) and ``omega0 = 2 lam omega_FS + ddbar
phi0``, the flow with reference path ``omega_hat_t = (1 - t / lam) omega0``
and volume form ``Omega = c exp(-phi0 / lam) omega_FS`` reduces to

    dphi/dt = log((1 - t / lam) r0 + L phi) - log c + phi0 / lam,

with ``r0 = 2 lam + L phi0``.  The chart density of ``omega`` is
``rho = r (1 - tau)^2`` (``rho_FS = (1 - tau)^2``), and the area is
``2 pi int_0^1 r dtau``, so ``area(t) = 4 pi (lam - t)`` exactly.

The interval is discretised by Chebyshev-Lobatto collocation, which
clusters nodes at the poles.  Polynomials in ``tau`` are smooth functions on
the sphere and ``L`` maps polynomials of degree ``N`` to themselves, so no
pole boundary conditions are needed.
"""

from __future__ import annotations

import math
import time as _time
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numpy.polynomial import legendre
from scipy.optimize import minimize_scalar

from .diagnostics import P1_COLUMNS, MonitorSeries, sample_derivative
from .geometry import Chart, NotPositiveDefinite
from .maflow import RK4_STABILITY, SingularTime


@dataclass(frozen=True)
class ChebyshevGrid:
    """Chebyshev-Lobatto nodes on ``[0, 1]`` with ``N + 1`` points."""

    N: int

    def __post_init__(self):
        if self.N < 4:
            raise ValueError("need at least 4 intervals")

    @cached_property
    def tau(self):
        j = np.arange(self.N + 1)
        return 0.5 * (1.0 - np.cos(np.pi * j / self.N))

    @cached_property
    def D(self):
        """Differentiation matrix in ``tau``."""
        N = self.N
        x = np.cos(np.pi * np.arange(N + 1) / N)
        c = np.ones(N + 1)
        c[0] = c[-1] = 2.0
        c *= (-1.0) ** np.arange(N + 1)
        X = np.tile(x, (N + 1, 1)).T
        dX = X - X.T
        Dx = np.outer(c, 1.0 / c) / (dX + np.eye(N + 1))
        Dx -= np.diag(Dx.sum(axis=1))
        return -2.0 * Dx  # tau = (1 - x) / 2

    @cached_property
    def L(self):
        """Collocated Legendre operator ``d/dtau (tau (1 - tau) d/dtau)``."""
        t = self.tau
        return self.D @ (np.diag(t * (1.0 - t)) @ self.D)

    @cached_property
    def weights(self):
        """Clenshaw-Curtis weights for ``int_0^1 f dtau``."""
        N = self.N
        theta = np.pi * np.arange(N + 1) / N
        w = np.zeros(N + 1)
        v = np.ones(N - 1)
        inner = theta[1:-1]
        if N % 2 == 0:
            w[0] = w[N] = 1.0 / (N ** 2 - 1)
            for k in range(1, N // 2):
                v -= 2.0 * np.cos(2 * k * inner) / (4 * k ** 2 - 1)
            v -= np.cos(N * inner) / (N ** 2 - 1)
        else:
            w[0] = w[N] = 1.0 / N ** 2
            for k in range(1, (N - 1) // 2 + 1):
                v -= 2.0 * np.cos(2 * k * inner) / (4 * k ** 2 - 1)
        w[1:-1] = 2.0 * v / N
        return 0.5 * w

    @cached_property
    def _bary(self):
        w = (-1.0) ** np.arange(self.N + 1)
        w[0] *= 0.5
        w[-1] *= 0.5
        return w

    def interpolate(self, values, tau):
        """Evaluate the interpolating polynomial at arbitrary ``tau`` in ``[0, 1]``."""
        tau = np.asarray(tau, dtype=float)
        flat = tau.ravel()
        diff = flat[:, None] - self.tau[None, :]
        exact = diff == 0
        diff[exact] = 1.0
        k = self._bary / diff
        out = (k @ values) / k.sum(axis=1)
        hit = exact.any(axis=1)
        out[hit] = np.asarray(values)[np.argmax(exact[hit], axis=1)]
        return out.reshape(tau.shape)

    def integrate(self, f):
        return float(self.weights @ f)

    def average(self, f):
        """Average with respect to the Fubini-Study area (uniform in ``tau``)."""
        return self.integrate(f)


@dataclass(frozen=True)
class P1FlowConfig:
    """Rotation-invariant initial data ``omega0 = 2 scale omega_FS + ddbar(amplitude P_k(2 tau - 1))``."""

    resolution: int = 32
    scale: float = 1.0
    amplitude: float = 0.0
    mode: int = 2
    t_max: float | None = None
    monitor_dt: float = 0.01
    cfl_safety: float = 0.5
    area_floor: float = 1e-4
    max_halvings: int = 30
    singular_rtol: float = 1e-2

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        if self.mode < 0:
            raise ValueError("mode must be a non-negative integer")
        if self.monitor_dt <= 0:
            raise ValueError("monitor_dt must be positive")
        if not 0 < self.area_floor < 1:
            raise ValueError("area_floor must lie in (0, 1)")
        if self.t_max is not None and self.t_max <= 0:
            raise ValueError("t_max must be positive")


@dataclass(frozen=True, eq=False)
class P1Problem:
    config: P1FlowConfig
    grid: ChebyshevGrid
    phi0: np.ndarray
    r0: np.ndarray
    log_c: float

    @property
    def lam(self):
        return self.config.scale

    @property
    def T0(self):
        """Predicted singular time ``area(0) / 4 pi``."""
        return self.config.scale

    def phi0_at(self, tau):
        return self.config.amplitude * legendre.Legendre.basis(self.config.mode)(2.0 * np.asarray(tau) - 1.0)


def build_problem(config):
    grid = ChebyshevGrid(config.resolution)
    lam = config.scale
    phi0 = config.amplitude * legendre.Legendre.basis(config.mode)(2.0 * grid.tau - 1.0)
    r0 = 2.0 * lam + grid.L @ phi0
    if np.min(r0) <= 0:
        raise NotPositiveDefinite((int(np.argmin(r0)),), float(np.min(r0)))
    # int Omega = int omega0 = 4 pi lam, with int omega_FS = 2 pi
    c = 2.0 * lam / grid.integrate(np.exp(-phi0 / lam))
    return P1Problem(config, grid, phi0, r0, math.log(c))


@dataclass(frozen=True, eq=False)
class SymmetricProfile:
    """Potential ``phi`` at the Chebyshev nodes at time ``t``."""

    problem: P1Problem
    t: float
    phi: np.ndarray

    @property
    def grid(self):
        return self.problem.grid

    @property
    def ratio(self):
        """``omega / omega_FS`` at the nodes."""
        p = self.problem
        return (1.0 - self.t / p.lam) * p.r0 + p.grid.L @ self.phi

    @property
    def density(self):
        """Chart density ``rho`` with ``omega = sqrt(-1) rho dz dzbar``."""
        return self.ratio * (1.0 - self.grid.tau) ** 2

    @property
    def psi(self):
        """Potential with its Fubini-Study average removed (spatial constants do not move the metric)."""
        return self.phi - self.grid.average(self.phi)

    def area(self):
        return 2.0 * math.pi * self.grid.integrate(self.ratio)


def initial_profile(problem):
    return SymmetricProfile(problem, 0.0, np.zeros(problem.grid.N + 1))


def fs_profile(resolution=32, multiple=1.0):
    """Profile of ``multiple * omega_FS`` (ratio identically ``multiple``)."""
    return initial_profile(build_problem(P1FlowConfig(resolution=resolution, scale=0.5 * multiple)))


def area(profile):
    r = profile.ratio
    if not np.min(r) > 0:
        raise NotPositiveDefinite((int(np.argmin(r)),), float(np.min(r)))
    return profile.area()


def rhs(problem, t, phi):
    r = (1.0 - t / problem.lam) * problem.r0 + problem.grid.L @ phi
    rmin = float(np.min(r))
    if not rmin > 0:
        raise NotPositiveDefinite((int(np.argmin(r)),), rmin)
    return np.log(r) - problem.log_c + problem.phi0 / problem.lam, rmin


def stable_dt(problem, rmin):
    N = problem.grid.N
    return problem.config.cfl_safety * RK4_STABILITY * rmin / (N * (N + 1))


def step_1d(problem, profile, dt):
    """One RK4 step of the reduced equation (raises on loss of positivity)."""
    t, phi = profile.t, profile.phi
    k1, _ = rhs(problem, t, phi)
    k2, _ = rhs(problem, t + 0.5 * dt, phi + 0.5 * dt * k1)
    k3, _ = rhs(problem, t + 0.5 * dt, phi + 0.5 * dt * k2)
    k4, _ = rhs(problem, t + dt, phi + dt * k3)
    new = SymmetricProfile(problem, t + dt, phi + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4))
    rhs(problem, new.t, new.phi)
    return new


# ----------------------------------------------------------------------------
# geometric quantities of a profile
# ----------------------------------------------------------------------------

def ricci_ratio(profile):
    """``Ric(omega) / omega_FS = 2 - L log r``."""
    return 2.0 - profile.grid.L @ np.log(profile.ratio)


def ricci_residual_rescaled(profile):
    """``sup |Ric(w) - w| / omega_FS`` for ``w = omega / (area / 4 pi)``."""
    scale = profile.area() / (4.0 * math.pi)
    return float(np.max(np.abs(ricci_ratio(profile) - profile.ratio / scale)))


def dilated_fs_ratio(a, tau):
    """``(dilation by a)^* omega_FS / omega_FS`` as a function of ``tau``."""
    return a ** 2 / (1.0 - tau + a ** 2 * tau) ** 2


def round_deviation(profile):
    """Distance of the area-normalised metric from the round metric of area ``4 pi``.

    Compares ``omega / (area / 4 pi)`` with ``2 omega_FS`` pulled back by the
    best dilation ``z -> a z`` (the rotation-invariant Mobius gauge), in the
    sup norm of the ratio to ``omega_FS``.
    """
    tau = profile.grid.tau
    R = profile.ratio * 4.0 * math.pi / profile.area()

    def obj(b):
        return float(np.max(np.abs(R - 2.0 * dilated_fs_ratio(math.exp(b), tau))))

    res = minimize_scalar(obj, bounds=(-8.0, 8.0), method="bounded",
                          options={"xatol": 1e-10})
    return min(res.fun, obj(0.0))


def pole_regularity_residual(profile):
    """Radial derivative ``tau (1 - tau) dphi/dtau`` at the poles plus any loss of positivity there.

    A smooth rotation-invariant potential has vanishing radial derivative at
    both poles and a metric with positive, finite ratio to ``omega_FS``.
    """
    g = profile.grid
    flux = g.tau * (1.0 - g.tau) * (g.D @ profile.phi)
    r = profile.ratio
    bad = max(0.0, -r[0]) + max(0.0, -r[-1])
    return float(max(abs(flux[0]), abs(flux[-1])) + bad)


def monitor_record(profile, area_rate):
    area = profile.area()
    return {
        "t": profile.t,
        "area": area,
        "area_law_residual": abs(area_rate + 4.0 * math.pi) / (4.0 * math.pi),
        "sup_psi": float(np.max(np.abs(profile.psi))),
        "ricci_residual_rescaled": ricci_residual_rescaled(profile),
        "round_deviation": round_deviation(profile),
    }


@dataclass
class P1RunResult:
    status: str
    profile: SymmetricProfile
    series: MonitorSeries
    problem: P1Problem
    singular_time: float | None = None
    steps: int = 0
    rejections: int = 0
    profiles: list = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def exit_code(self):
        if self.status == "t_max":
            return 2
        if self.status == "singular":
            ok = abs(self.singular_time - self.problem.T0) <= self.problem.config.singular_rtol * self.problem.T0
            return 0 if ok else 3
        return 3


def run_1d(config, keep_profiles=False):
    """Evolve until the area falls below ``area_floor * area(0)`` (or ``t_max``).

    The singular time is estimated by extrapolating the measured area of the
    last two steps linearly to zero.  Loss of positivity that halving cannot
    cure also ends the run, with the estimate ``t + dt / 2``.
    """
    wall0 = _time.perf_counter()
    problem = build_problem(config) if isinstance(config, P1FlowConfig) else config
    cfg = problem.config
    prof = initial_profile(problem)
    area0 = prof.area()
    series = MonitorSeries(P1_COLUMNS)
    result = P1RunResult("t_max", prof, series, problem)
    records = []
    areas = [(0.0, area0)]
    t_end = cfg.t_max if cfg.t_max is not None else math.inf
    next_sample = 0.0

    def record(p):
        records.append(p)
        if keep_profiles:
            result.profiles.append(p)

    record(prof)
    next_sample += cfg.monitor_dt
    status = "t_max"
    while prof.t < t_end - 1e-14:
        _, rmin = rhs(problem, prof.t, prof.phi)
        dt = stable_dt(problem, rmin)
        target = min(next_sample, t_end)
        landing = dt >= target - prof.t
        if landing:
            dt = target - prof.t
        last = None
        for _ in range(cfg.max_halvings + 1):
            try:
                new = step_1d(problem, prof, dt)
                break
            except NotPositiveDefinite:
                last = dt
                dt *= 0.5
                landing = False
                result.rejections += 1
        else:
            result.singular_time = SingularTime(prof.t, last).t_est
            status = "singular"
            break
        if landing:
            new = SymmetricProfile(problem, target, new.phi)
        prof = new
        result.steps += 1
        a = prof.area()
        areas.append((prof.t, a))
        if landing:
            record(prof)
            next_sample += cfg.monitor_dt
        if a < cfg.area_floor * area0:
            (t1, a1), (t2, a2) = areas[-2], areas[-1]
            rate = (a2 - a1) / (t2 - t1)
            result.singular_time = t2 - a2 / rate if rate < 0 else t2
            if records[-1] is not prof:
                record(prof)
            status = "singular"
            break
    result.status = status
    result.profile = prof
    t = np.array([p.t for p in records])
    A = np.array([p.area() for p in records])
    rates = sample_derivative(t, A) if len(t) > 1 else np.array([-4.0 * math.pi])
    for p, rate in zip(records, rates):
        series.append(monitor_record(p, rate))
    result.wall_time = _time.perf_counter() - wall0
    return result


# ----------------------------------------------------------------------------
# agreement with the general two-dimensional engine
# ----------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ChartPatch:
    """Square patch ``|x|, |y| <= half_width`` of the affine chart, sampled on a periodic grid.

    Fourth-order differences are used; the wrap-around corrupts only a band
    near the edges, and comparisons are restricted to a central disc.
    """

    problem: P1Problem
    half_width: float = 1.0
    resolution: int = 192

    @cached_property
    def chart(self):
        return Chart(1, self.resolution, 2.0 * self.half_width, scheme="fd4")

    @cached_property
    def z(self):
        return self.chart.z()[0] - (1 + 1j) * self.half_width

    @cached_property
    def tau(self):
        q = np.abs(self.z) ** 2
        return q / (1.0 + q)

    @cached_property
    def g_fs(self):
        return (1.0 - self.tau) ** 2

    @cached_property
    def g0(self):
        p = self.problem
        h = self.chart.potential_hessian(p.phi0_at(self.tau))[..., 0, 0].real
        return 2.0 * p.lam * self.g_fs + h

    @cached_property
    def log_omega(self):
        p = self.problem
        return p.log_c - p.phi0_at(self.tau) / p.lam + np.log(self.g_fs)

    def sample(self, profile):
        return profile.grid.interpolate(profile.phi, self.tau)

    @cached_property
    def trusted(self):
        # the periodic wrap corrupts the edges; positivity is demanded on the inscribed disc only
        return self.disc(self.half_width - 8 * self.chart.spacing)

    def _metric(self, t, phi):
        p = self.problem
        return (1.0 - t / p.lam) * self.g0 + self.chart.potential_hessian(phi)[..., 0, 0].real

    def rhs(self, t, phi, where=None):
        g = self._metric(t, phi)
        inner = g[self.trusted if where is None else where]
        if not np.min(inner) > 0:
            raise NotPositiveDefinite((int(np.argmin(inner)),), float(np.min(inner)))
        return np.log(np.maximum(g, 1e-300)) - self.log_omega

    def stable_dt(self, t, phi, safety=0.5):
        g = self._metric(t, phi)[self.trusted]
        return safety * RK4_STABILITY * float(np.min(g)) / self.chart.laplace_symbol_max

    def disc(self, radius):
        return np.abs(self.z) <= radius


def patch_rhs_deviation(profile, half_width=1.0, resolution=192, radius=0.8):
    """Largest gap between the reduced right side and the general chart right side on a disc."""
    patch = ChartPatch(profile.problem, half_width, resolution)
    two_d = patch.rhs(profile.t, patch.sample(profile))
    one_d, _ = rhs(profile.problem, profile.t, profile.phi)
    reduced = profile.grid.interpolate(one_d, patch.tau)
    sel = patch.disc(radius)
    return float(np.max(np.abs(two_d - reduced)[sel]))


def patch_evolution_deviation(profile, nsteps=4, half_width=1.0, resolution=192, radius=0.25):
    """Evolve the same data with both engines for a few steps and compare on a central disc.

    Each step widens the band corrupted by the periodic wrap by 16 points, so
    the disc must stay well inside the patch.
    """
    problem = profile.problem
    patch = ChartPatch(problem, half_width, resolution)
    phi2 = patch.sample(profile)
    t = profile.t
    h = patch.chart.spacing
    if radius + (16 * nsteps + 4) * h > half_width:
        raise ValueError("comparison disc reaches the corrupted band; enlarge the patch")
    sel = patch.disc(radius)
    dt = min(patch.stable_dt(t, phi2), stable_dt(problem, float(np.min(profile.ratio))))
    prof = profile
    for _ in range(nsteps):
        k1 = patch.rhs(t, phi2, sel)
        k2 = patch.rhs(t + 0.5 * dt, phi2 + 0.5 * dt * k1, sel)
        k3 = patch.rhs(t + 0.5 * dt, phi2 + 0.5 * dt * k2, sel)
        k4 = patch.rhs(t + dt, phi2 + dt * k3, sel)
        phi2 = phi2 + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        prof = step_1d(problem, prof, dt)
        t += dt
    one_d = prof.grid.interpolate(prof.phi, patch.tau)
    change = float(np.max(np.abs(phi2 - patch.sample(profile))[sel]))
    return float(np.max(np.abs(phi2 - one_d)[sel])), change, t
