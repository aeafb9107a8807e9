"""Complex differential geometry on periodic grids and in closed form.

Conventions
-----------
A chart of complex dimension ``n`` carries real axes ``(x1, y1, x2, y2, ...)``
with ``z^i = x^i + sqrt(-1) y^i``.  Complex derivatives are
``d_i = (d_x - i d_y) / 2`` and ``d_ibar = (d_x + i d_y) / 2``.

Tensor components trail the grid axes.  A metric array ``g[..., i, j]`` holds
``g_{i jbar}``; ``inv_up(g)[..., i, j]`` holds ``g^{i jbar}`` so that
``g^{i qbar} g_{p qbar} = delta^i_p``.  Christoffel symbols are stored as
``gamma[..., i, k, p] = Gamma^i_{kp}`` and curvature as
``R[..., i, j, k, l] = R_{i jbar k lbar}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

POSITIVITY_RTOL = 1e-10
SCHEMES = ("spectral", "fd4")


class NotPositiveDefinite(ValueError):
    """Raised when a Hermitian metric field fails the positivity check."""

    def __init__(self, location, min_eig):
        self.location = tuple(int(i) for i in location)
        self.min_eig = float(min_eig)
        super().__init__(
            f"metric not positive definite at grid index {self.location}: "
            f"smallest eigenvalue {self.min_eig:.6e}"
        )


# ----------------------------------------------------------------------------
# pointwise Hermitian algebra (leading axes are arbitrary batch axes)
# ----------------------------------------------------------------------------

def hermitian_det(g):
    """Determinant of Hermitian matrices ``g[..., n, n]`` (real array)."""
    n = g.shape[-1]
    if n == 1:
        return g[..., 0, 0].real.copy()
    if n == 2:
        return (g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] * g[..., 1, 0]).real
    return np.linalg.det(g).real


def inv_up(g):
    """Return ``g^{i jbar}``, the transpose of the matrix inverse."""
    n = g.shape[-1]
    if n == 1:
        return 1.0 / g
    if n == 2:
        det = hermitian_det(g)[..., None, None]
        out = np.empty_like(g)
        out[..., 0, 0] = g[..., 1, 1]
        out[..., 1, 1] = g[..., 0, 0]
        out[..., 0, 1] = -g[..., 1, 0]
        out[..., 1, 0] = -g[..., 0, 1]
        return out / det
    return np.swapaxes(np.linalg.inv(g), -1, -2)


def min_eigenvalues(g):
    """Smallest eigenvalue of each Hermitian matrix in ``g[..., n, n]``."""
    n = g.shape[-1]
    if n == 1:
        return g[..., 0, 0].real.copy()
    if n == 2:
        a = g[..., 0, 0].real
        d = g[..., 1, 1].real
        b2 = np.abs(g[..., 0, 1]) ** 2
        return 0.5 * (a + d) - np.sqrt(0.25 * (a - d) ** 2 + b2)
    return np.linalg.eigvalsh(g)[..., 0]


def check_positive(g):
    """Raise :class:`NotPositiveDefinite` unless every matrix is positive.

    A matrix passes when its smallest eigenvalue exceeds ``1e-10`` times its
    trace.  Returns the array of smallest eigenvalues.
    """
    lam = min_eigenvalues(g)
    tr = np.einsum("...ii->...", g).real
    bad = ~(lam > POSITIVITY_RTOL * tr)
    if np.any(bad):
        idx = np.unravel_index(np.argmin(np.where(bad, lam, np.inf)), lam.shape)
        raise NotPositiveDefinite(idx, lam[idx])
    return lam


def christoffel_from(g, dg):
    """``Gamma^i_{kp} = g^{i qbar} d_k g_{p qbar}`` from ``dg[..., k, p, q]``."""
    return np.einsum("...iq,...kpq->...ikp", inv_up(g), dg)


def curvature_from(g, dg, dbg, ddg):
    """Curvature ``R_{i jbar k lbar}``.

    Parameters
    ----------
    g : metric ``g_{k lbar}``
    dg : ``dg[..., i, k, q] = d_i g_{k qbar}``
    dbg : ``dbg[..., j, p, l] = d_jbar g_{p lbar}``
    ddg : ``ddg[..., i, j, k, l] = d_i d_jbar g_{k lbar}``
    """
    quad = np.einsum("...pq,...ikq,...jpl->...ijkl", inv_up(g), dg, dbg)
    return -ddg + quad


def ricci_from_curvature(g, R):
    """Contract ``R_{i jbar} = g^{k lbar} R_{i jbar k lbar}``."""
    return np.einsum("...kl,...ijkl->...ij", inv_up(g), R)


def trace_form(g, beta):
    """``tr_omega beta = g^{i jbar} beta_{i jbar}`` (real part)."""
    return np.einsum("...ij,...ij->...", inv_up(g), beta).real


# ----------------------------------------------------------------------------
# periodic charts
# ----------------------------------------------------------------------------

def _kappa(freqs, h, scheme):
    k = 2.0 * np.pi * freqs
    if scheme == "spectral":
        return k
    return (8.0 * np.sin(k * h) - np.sin(2.0 * k * h)) / (6.0 * h)


@dataclass(frozen=True)
class Chart:
    """Periodic real grid of side ``period`` in each of ``2n`` real axes.

    ``scheme`` selects spectral differentiation (Nyquist mode dropped from
    first derivatives so that all derivative operators commute and compose
    consistently) or fourth-order central differences.  Both act as Fourier
    multipliers, which keeps mixed partials exactly symmetric.
    """

    n: int
    resolution: int
    period: float = 1.0
    scheme: str = "spectral"

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("complex dimension must be at least 1")
        if self.resolution < 4:
            raise ValueError("resolution must be at least 4")
        if not self.period > 0:
            raise ValueError("period must be positive")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")

    @property
    def dim(self):
        return 2 * self.n

    @property
    def spacing(self):
        return self.period / self.resolution

    @property
    def shape(self):
        return (self.resolution,) * self.dim

    @property
    def axes(self):
        return tuple(range(self.dim))

    @property
    def cell_volume(self):
        return self.spacing ** self.dim

    @property
    def total_coordinate_volume(self):
        return self.period ** self.dim

    def coordinates(self):
        x = np.arange(self.resolution) * self.spacing
        return np.meshgrid(*([x] * self.dim), indexing="ij")

    def z(self):
        """Complex coordinates ``[z^1, ..., z^n]`` on the grid."""
        c = self.coordinates()
        return [c[2 * i] + 1j * c[2 * i + 1] for i in range(self.n)]

    # -- Fourier symbols --------------------------------------------------

    def _kappa_axis(self, axis, half=False):
        N, h = self.resolution, self.spacing
        if half:
            f = np.fft.rfftfreq(N, d=h)
        else:
            f = np.fft.fftfreq(N, d=h)
        kap = _kappa(f, h, self.scheme)
        if self.scheme == "spectral" and N % 2 == 0:
            kap[np.isclose(np.abs(f), 0.5 / h)] = 0.0
        shape = [1] * self.dim
        shape[axis] = kap.size
        return kap.reshape(shape)

    @cached_property
    def _kappas(self):
        return [self._kappa_axis(a) for a in range(self.dim)]

    @cached_property
    def _kappas_half(self):
        last = self.dim - 1
        return [self._kappa_axis(a, half=(a == last)) for a in range(self.dim)]

    def symbol(self, i, bar=False):
        """Fourier multiplier of ``d_i`` (or ``d_ibar``)."""
        kx, ky = self._kappas[2 * i], self._kappas[2 * i + 1]
        if bar:
            return 0.5 * (1j * kx - ky)
        return 0.5 * (1j * kx + ky)

    @cached_property
    def laplace_symbol_max(self):
        """Largest value of ``sum_i |symbol(i)|^2`` over retained modes."""
        tot = sum(k ** 2 for k in self._kappas)
        return 0.25 * float(np.max(tot))

    # -- derivatives --------------------------------------------------------

    def _expand(self, sym, extra):
        return sym.reshape(sym.shape + (1,) * extra)

    def d(self, f, i, bar=False):
        """Complex derivative of ``f`` along the grid axes.

        Trailing axes beyond the grid are treated as tensor components.
        """
        f = np.asarray(f)
        extra = f.ndim - self.dim
        F = np.fft.fftn(f, axes=self.axes)
        return np.fft.ifftn(F * self._expand(self.symbol(i, bar), extra), axes=self.axes)

    def grad(self, f, bar=False):
        """Stack ``d_k f`` (or ``d_kbar f``) with ``k`` as the first tensor axis."""
        f = np.asarray(f)
        extra = f.ndim - self.dim
        F = np.fft.fftn(f, axes=self.axes)
        out = [np.fft.ifftn(F * self._expand(self.symbol(k, bar), extra), axes=self.axes)
               for k in range(self.n)]
        return np.stack(out, axis=self.dim)

    def ddbar(self, f):
        """``d_i d_jbar f`` as ``[..., i, j]`` for a (possibly complex) scalar."""
        F = np.fft.fftn(np.asarray(f), axes=self.axes)
        out = np.empty(self.shape + (self.n, self.n), dtype=complex)
        for i in range(self.n):
            for j in range(self.n):
                sym = self.symbol(i) * self.symbol(j, bar=True)
                out[..., i, j] = np.fft.ifftn(F * sym, axes=self.axes)
        return out

    def potential_hessian(self, phi, mask=None):
        """``d_i d_jbar phi`` for a real potential (see :class:`HessianOperator`)."""
        if mask is None:
            return self._hessian_op(phi)
        return HessianOperator(self, mask)(phi)

    @cached_property
    def _hessian_op(self):
        return HessianOperator(self)

    def two_thirds_mask(self):
        """Circular low-pass mask keeping modes with ``|m| <= N/3``."""
        N = self.resolution
        m2 = 0.0
        for a in range(self.dim):
            if a == self.dim - 1:
                m = np.fft.rfftfreq(N, d=1.0 / N)
            else:
                m = np.fft.fftfreq(N, d=1.0 / N)
            shape = [1] * self.dim
            shape[a] = m.size
            m2 = m2 + m.reshape(shape) ** 2
        return (m2 <= (N / 3.0) ** 2).astype(float)

    def mean(self, f):
        return np.mean(f, axis=self.axes)

    def integrate(self, density):
        """Integral of a coordinate density over the whole chart."""
        return float(np.mean(density) * self.total_coordinate_volume)


class HessianOperator:
    """Complex Hessian ``d_i d_jbar`` of real potentials via real transforms.

    The real and imaginary parts of each symbol are even functions of the
    wave vector, so every component is recovered with real inverse
    transforms.  ``mask`` is an optional real multiplier on the half
    spectrum (a spectral filter); symbols are precomputed once.
    """

    def __init__(self, chart, mask=None):
        self.chart = chart
        kap = chart._kappas_half
        self.terms = []
        for i in range(chart.n):
            kxi, kyi = kap[2 * i], kap[2 * i + 1]
            for j in range(i, chart.n):
                kxj, kyj = kap[2 * j], kap[2 * j + 1]
                re = -0.25 * (kxi * kxj + kyi * kyj)
                im = None if i == j else -0.25 * (kxi * kyj - kyi * kxj)
                if mask is not None:
                    re = re * mask
                    im = None if im is None else im * mask
                self.terms.append((i, j, re, im))

    def _irfft(self, F):
        ch = self.chart
        return np.fft.irfftn(F, s=ch.shape, axes=ch.axes)

    def scalar(self, phi):
        """``d_1 d_1bar phi`` as a real array (the whole Hessian when ``n = 1``)."""
        F = np.fft.rfftn(phi, axes=self.chart.axes)
        return self._irfft(F * self.terms[0][2])

    def __call__(self, phi):
        ch = self.chart
        F = np.fft.rfftn(np.asarray(phi, dtype=float), axes=ch.axes)
        out = np.empty(ch.shape + (ch.n, ch.n), dtype=complex)
        for i, j, re, im in self.terms:
            val = self._irfft(F * re).astype(complex)
            if im is not None:
                val += 1j * self._irfft(F * im)
                out[..., j, i] = np.conj(val)
            out[..., i, j] = val
        return out


# ----------------------------------------------------------------------------
# metric fields
# ----------------------------------------------------------------------------

def _frozen(a):
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class MetricField:
    """A Hermitian metric ``g_{i jbar}`` sampled on a chart.

    Construction checks the Hermitian property and positivity; derived
    quantities are cached on first use.
    """

    chart: Chart
    g: np.ndarray
    check: bool = True

    def __post_init__(self):
        n = self.chart.n
        g = np.asarray(self.g, dtype=complex)
        if g.shape != self.chart.shape + (n, n):
            raise ValueError(f"metric array has shape {g.shape}, expected {self.chart.shape + (n, n)}")
        herm = np.max(np.abs(g - np.conj(np.swapaxes(g, -1, -2))))
        scale = max(1.0, float(np.max(np.abs(g))))
        if herm > 1e-12 * scale:
            raise ValueError(f"metric is not Hermitian (deviation {herm:.3e})")
        object.__setattr__(self, "g", _frozen(g))
        if self.check:
            check_positive(self.g)

    @cached_property
    def inv_up(self):
        return inv_up(self.g)

    @cached_property
    def det(self):
        return hermitian_det(self.g)

    @cached_property
    def min_eig(self):
        return min_eigenvalues(self.g)

    @cached_property
    def dg(self):
        """``dg[..., k, p, q] = d_k g_{p qbar}``."""
        return self.chart.grad(self.g)

    @cached_property
    def dbg(self):
        """``dbg[..., j, p, l] = d_jbar g_{p lbar}``."""
        return self.chart.grad(self.g, bar=True)

    @cached_property
    def ddg(self):
        """``ddg[..., i, j, k, l] = d_i d_jbar g_{k lbar}``."""
        return np.moveaxis(self.chart.grad(self.dg, bar=True), self.chart.dim, self.chart.dim + 1)

    @cached_property
    def christoffel(self):
        return christoffel_from(self.g, self.dg)

    @cached_property
    def curvature(self):
        return curvature_from(self.g, self.dg, self.dbg, self.ddg)

    @cached_property
    def volume_density(self):
        """Density of ``omega^n`` against ``dx^1 dy^1 ... dx^n dy^n``."""
        n = self.chart.n
        return (2.0 ** n) * math.factorial(n) * self.det


def metric_from_potential(chart, phi, base=None, mask=None, check=True):
    """Build ``g = base + d dbar phi``; ``base`` defaults to the identity."""
    n = chart.n
    if base is None:
        base = np.eye(n)
    base = np.asarray(base, dtype=complex)
    g = chart.potential_hessian(phi, mask=mask) + base
    return MetricField(chart, g, check=check)


def constant_metric(chart, A):
    A = np.asarray(A, dtype=complex)
    return MetricField(chart, np.broadcast_to(A, chart.shape + A.shape))


def ricci(metric, route="contraction"):
    """Ricci form ``R_{i jbar}`` by contracting curvature or from ``log det g``."""
    if route == "contraction":
        return ricci_from_curvature(metric.g, metric.curvature)
    if route == "logdet":
        return -metric.chart.ddbar(np.log(metric.det))
    raise ValueError(f"unknown Ricci route {route!r}")


def kahler_residual(metric):
    """``max |d_k g_{i jbar} - d_i g_{k jbar}|``."""
    dg = metric.dg
    return float(np.max(np.abs(dg - np.swapaxes(dg, -3, -2))))


def trace(metric, beta):
    """``tr_omega beta`` for a real (1,1)-form given by its components."""
    return trace_form(metric.g, np.asarray(beta))


def laplacian(metric, f):
    return trace_form(metric.g, metric.chart.ddbar(f))


def grad_norm_sq(metric, f):
    """``|df|^2_g = g^{i jbar} d_i f d_jbar f``."""
    ch = metric.chart
    a = ch.grad(f)
    b = ch.grad(f, bar=True)
    return np.einsum("...ij,...i,...j->...", metric.inv_up, a, b).real


def volume_density(metric):
    return metric.volume_density


def total_volume(metric):
    return metric.chart.integrate(metric.volume_density)


def ricci_closedness_residual(ric, chart):
    """``max |d_k R_{i jbar} - d_i R_{k jbar}|``."""
    d = chart.grad(ric)
    return float(np.max(np.abs(d - np.swapaxes(d, -3, -2))))


def curvature_symmetry_residuals(R):
    """Residuals of the Kahler curvature symmetries.

    Returns a dict with the swap of unbarred indices, the swap of barred
    indices and the conjugation symmetry
    ``conj(R_{i jbar k lbar}) = R_{j ibar l kbar}``.
    """
    swap_unbarred = np.max(np.abs(R - np.swapaxes(R, -4, -2)))
    swap_barred = np.max(np.abs(R - np.swapaxes(R, -3, -1)))
    conj = np.max(np.abs(np.conj(R) - np.swapaxes(np.swapaxes(R, -4, -3), -2, -1)))
    return {"swap_unbarred": float(swap_unbarred), "swap_barred": float(swap_barred),
            "conjugation": float(conj)}


# ----------------------------------------------------------------------------
# covariant derivatives
# ----------------------------------------------------------------------------

FIELD_KINDS = ("vector", "antivector", "form10", "form01")


def covariant_derivative(metric, field, kind):
    """Covariant derivatives of a rank-one field.

    Parameters
    ----------
    field : array ``[..., n]`` of components
    kind : ``"vector"`` (X^i), ``"antivector"`` (Y^jbar), ``"form10"`` (a_i)
        or ``"form01"`` (b_jbar)

    Returns
    -------
    (nab, nabbar) with ``nab[..., k, i] = nabla_k F_i`` and
    ``nabbar[..., l, i] = nabla_lbar F_i``.
    """
    if kind not in FIELD_KINDS:
        raise ValueError(f"unknown field kind {kind!r}")
    ch = metric.chart
    field = np.asarray(field, dtype=complex)
    nab = ch.grad(field)
    nabbar = ch.grad(field, bar=True)
    G = metric.christoffel
    if kind == "vector":
        nab = nab + np.einsum("...ikp,...p->...ki", G, field)
    elif kind == "antivector":
        nabbar = nabbar + np.einsum("...jlq,...q->...lj", np.conj(G), field)
    elif kind == "form10":
        nab = nab - np.einsum("...pki,...p->...ki", G, field)
    else:
        nabbar = nabbar - np.einsum("...qlj,...q->...lj", np.conj(G), field)
    return nab, nabbar


def metric_parallel_residual(metric):
    """``max |nabla_k g_{i jbar}|`` where ``nabla_k g = d_k g - Gamma^p_{ki} g_{p jbar}``."""
    res = metric.dg - np.einsum("...pki,...pj->...kij", metric.christoffel, metric.g)
    return float(np.max(np.abs(res)))


def mixed_curvature(metric):
    """``R_{i jbar k}^p = g^{p lbar} R_{i jbar k lbar}`` as ``[..., i, j, k, p]``."""
    return np.einsum("...ijkl,...pl->...ijkp", metric.curvature, metric.inv_up)


def commutator_residual(metric, field, kind="vector"):
    """Residual of the commutation formula for ``[nabla_i, nabla_jbar]``.

    For a vector field the expected value is ``R_{i jbar k}^p X^k``; for a
    (0,1)-form it is ``conj(R_{j ibar q}^l) b_lbar``.  Second covariant
    derivatives are formed from the first-order table, so the residual
    measures the discretisation consistency of the curvature.
    """
    ch = metric.chart
    G = metric.christoffel
    Rm = mixed_curvature(metric)
    field = np.asarray(field, dtype=complex)
    nab, nabbar = covariant_derivative(metric, field, kind)
    if kind == "vector":
        # nabla_i (nabla_jbar X^p): the barred slot carries no holomorphic Christoffel term
        a = ch.grad(nabbar) + np.einsum("...piq,...jq->...ijp", G, nabbar)
        b = np.swapaxes(ch.grad(nab, bar=True), -3, -2)
        expected = np.einsum("...ijkp,...k->...ijp", Rm, field)
    elif kind == "form01":
        a = ch.grad(nabbar)
        t = ch.grad(nab, bar=True)  # [..., j, i, q]
        t = t - np.einsum("...ljq,...il->...jiq", np.conj(G), nab)
        b = np.swapaxes(t, -3, -2)
        expected = np.einsum("...jiql,...l->...ijq", np.conj(Rm), field)
    else:
        raise ValueError("commutator residual is implemented for 'vector' and 'form01'")
    return float(np.max(np.abs(a - b - expected)))


# ----------------------------------------------------------------------------
# random Kahler potentials
# ----------------------------------------------------------------------------

def random_potential(chart, rng, modes=2, amplitude=None, min_eig=0.3):
    """Random real trigonometric potential whose metric ``I + ddbar phi`` is positive.

    The potential mixes Fourier modes with integer wave numbers up to
    ``modes`` in each real axis.  The amplitude is scaled so that the smallest
    eigenvalue of the metric is at least ``min_eig``.
    """
    coords = chart.coordinates()
    L = chart.period
    phi = np.zeros(chart.shape)
    nterms = 3 * chart.dim
    for _ in range(nterms):
        kvec = rng.integers(-modes, modes + 1, size=chart.dim)
        if not np.any(kvec):
            kvec[rng.integers(chart.dim)] = 1
        arg = sum(2 * np.pi * k * c / L for k, c in zip(kvec, coords))
        phi += rng.normal() * np.cos(arg + rng.uniform(0, 2 * np.pi)) / (1.0 + np.sum(kvec ** 2))
    H = chart.potential_hessian(phi)
    lam = min_eigenvalues(H)
    worst = -float(np.min(lam))
    target = 1.0 - min_eig
    if amplitude is None:
        scale = target / worst if worst > 0 else 1.0
        scale *= rng.uniform(0.3, 1.0)
    else:
        scale = amplitude
    return scale * phi


# ----------------------------------------------------------------------------
# closed-form metrics
# ----------------------------------------------------------------------------

class AnalyticMetric:
    """Metric with closed-form values and coordinate derivatives.

    Subclasses implement ``g(z)``, ``dg(z)`` with ``dg[..., k, i, j] =
    d_k g_{i jbar}`` and ``ddg(z)`` with ``ddg[..., k, l, i, j] =
    d_k d_lbar g_{i jbar}``.  ``z`` has shape ``(..., n)``.
    """

    n: int

    def g(self, z):
        raise NotImplementedError

    def dg(self, z):
        raise NotImplementedError

    def ddg(self, z):
        raise NotImplementedError

    def dbg(self, z):
        """``dbg[..., j, p, l] = d_jbar g_{p lbar} = conj(d_j g_{l pbar})``."""
        return np.conj(np.swapaxes(self.dg(z), -1, -2))

    def christoffel(self, z):
        return christoffel_from(self.g(z), self.dg(z))

    def curvature(self, z):
        return curvature_from(self.g(z), self.dg(z), self.dbg(z), self.ddg(z))

    def ricci(self, z):
        return ricci_from_curvature(self.g(z), self.curvature(z))


class FlatMetric(AnalyticMetric):
    """Constant Hermitian metric ``A``."""

    def __init__(self, A):
        self.A = np.asarray(A, dtype=complex)
        self.n = self.A.shape[0]

    def g(self, z):
        z = np.asarray(z)
        return np.broadcast_to(self.A, z.shape[:-1] + self.A.shape).copy()

    def dg(self, z):
        z = np.asarray(z)
        return np.zeros(z.shape[:-1] + (self.n,) * 3, dtype=complex)

    def ddg(self, z):
        z = np.asarray(z)
        return np.zeros(z.shape[:-1] + (self.n,) * 4, dtype=complex)


class FubiniStudy(AnalyticMetric):
    """Fubini-Study metric on the standard affine chart of complex projective space.

    ``g_{i jbar} = ((1 + |z|^2) delta_ij - zbar_i z_j) / (1 + |z|^2)^2``.
    """

    def __init__(self, n):
        if n < 1:
            raise ValueError("dimension must be positive")
        self.n = n

    def _parts(self, z):
        z = np.asarray(z, dtype=complex)
        if z.shape[-1] != self.n:
            raise ValueError(f"expected points with {self.n} coordinates")
        s = 1.0 + np.sum(np.abs(z) ** 2, axis=-1)
        return z, np.conj(z), s

    def g(self, z):
        z, zb, s = self._parts(z)
        eye = np.eye(self.n)
        return eye / s[..., None, None] - zb[..., :, None] * z[..., None, :] / (s ** 2)[..., None, None]

    def dg(self, z):
        z, zb, s = self._parts(z)
        eye = np.eye(self.n)
        s2 = (s ** 2)[..., None, None, None]
        s3 = (s ** 3)[..., None, None, None]
        # index order k, i, j
        t1 = -eye[None, :, :] * zb[..., :, None, None] / s2
        t2 = -zb[..., None, :, None] * eye[:, None, :] / s2
        t3 = 2.0 * zb[..., None, :, None] * z[..., None, None, :] * zb[..., :, None, None] / s3
        return t1 + t2 + t3

    def ddg(self, z):
        z, zb, s = self._parts(z)
        n = self.n
        e = np.eye(n)
        s2 = (s ** 2)[..., None, None, None, None]
        s3 = (s ** 3)[..., None, None, None, None]
        s4 = (s ** 4)[..., None, None, None, None]
        # index order k, l, i, j; broadcast helpers
        zb_k = zb[..., :, None, None, None]
        z_l = z[..., None, :, None, None]
        zb_i = zb[..., None, None, :, None]
        z_j = z[..., None, None, None, :]
        d_ij = e[None, None, :, :]
        d_kl = e[:, :, None, None]
        d_il = np.einsum("il,kj->klij", e, np.ones((n, n)))
        d_jk = np.einsum("jk,li->klij", e, np.ones((n, n)))
        out = (-d_ij * d_kl / s2 + 2.0 * d_ij * zb_k * z_l / s3
               - d_jk * d_il / s2 + 2.0 * d_jk * zb_i * z_l / s3
               + 2.0 * (d_il * z_j * zb_k + zb_i * z_j * d_kl) / s3
               - 6.0 * zb_i * z_j * zb_k * z_l / s4)
        return out


def normal_coordinates(metric, p):
    """Holomorphic normal coordinates at ``p``.

    Returns ``(P, gamma)`` describing the map ``z = p + P (u - gamma(u, u) / 2)``
    where ``P`` normalises the metric to the identity at ``p`` and ``gamma``
    holds the Christoffel symbols in the normalised frame.
    """
    p = np.asarray(p, dtype=complex)
    G = metric.g(p)
    C = np.linalg.cholesky(G)
    P = np.linalg.inv(C).T
    dg = metric.dg(p)
    dgw = np.einsum("kij,ka,ib,jc->abc", dg, P, P, np.conj(P))
    gw = P.T @ G @ np.conj(P)
    gamma = christoffel_from(gw, dgw)
    return P, gamma


def normal_coordinates_check(metric, p):
    """Largest first derivative of the metric at ``p`` in normal coordinates.

    Uses the chain rule for the pullback under the quadratic coordinate
    change; the result vanishes up to rounding for a Kahler metric.
    """
    p = np.asarray(p, dtype=complex)
    P, gamma = normal_coordinates(metric, p)
    G = metric.g(p)
    dg = metric.dg(p)
    # Jacobian at u=0 is P; second derivatives d^2 z^i / du^e du^a = -P[i, c] gamma^c_{ea}
    d2z = -np.einsum("ic,cea->iea", P, gamma)
    first = np.einsum("kij,ke,ia,jb->eab", dg, P, P, np.conj(P))
    second = np.einsum("ij,iea,jb->eab", G, d2z, np.conj(P))
    return float(np.max(np.abs(first + second)))


def fs_ricci_residual(n, points):
    """``max |Ric(omega_FS) - (n + 1) g_FS|`` over ``points`` of shape ``(m, n)``."""
    fs = FubiniStudy(n)
    return float(np.max(np.abs(fs.ricci(points) - (n + 1) * fs.g(points))))
