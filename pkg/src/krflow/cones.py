"""Kahler cone bookkeeping: maximal existence time and terminal behavior.

A model stores its Kahler cone as the open polyhedral cone
``{v : l_k(v) > 0 for all facets k}`` in coordinates of a fixed basis of
real (1,1) cohomology, together with the coordinates of the first Chern
class.  Arithmetic is exact when the inputs are integers or fractions.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import math
from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational

import numpy as np

BEHAVIORS = {
    "a": "volume tends to zero",
    "b": "stationary",
    "c": "exists for all time",
    "d": "class reaches a nonzero boundary point of the cone",
}


class NotInCone(ValueError):
    """Raised when an initial class is not a Kahler class of the model."""


def _coerce(v):
    out = []
    for x in v:
        if isinstance(x, (bool, np.bool_)):
            raise TypeError("class coordinates must be numbers")
        if isinstance(x, Rational):
            out.append(Fraction(x))
        elif isinstance(x, (np.integer,)):
            out.append(Fraction(int(x)))
        elif isinstance(x, str):
            out.append(Fraction(x))
        else:
            out.append(float(x))
    return tuple(out)


def _is_exact(v):
    return all(isinstance(x, Fraction) for x in v)


def _dot(a, b):
    return sum(x * y for x, y in zip(a, b))


def _rank(rows):
    """Rank of a matrix of fractions by Gaussian elimination."""
    m = [list(map(Fraction, r)) for r in rows]
    rank, col = 0, 0
    ncol = len(m[0]) if m else 0
    while rank < len(m) and col < ncol:
        piv = next((r for r in range(rank, len(m)) if m[r][col] != 0), None)
        if piv is None:
            col += 1
            continue
        m[rank], m[piv] = m[piv], m[rank]
        for r in range(len(m)):
            if r != rank and m[r][col] != 0:
                f = m[r][col] / m[rank][col]
                m[r] = [a - f * b for a, b in zip(m[r], m[rank])]
        rank += 1
        col += 1
    return rank


@dataclass(frozen=True)
class ManifoldModel:
    """Cohomological data of a compact Kahler manifold.

    Attributes
    ----------
    name : catalogue label
    basis : labels of the basis classes
    facets : linear functionals ``l_k`` (rows) cutting out the Kahler cone
    c1 : coordinates of the first Chern class
    """

    name: str
    basis: tuple
    facets: tuple
    c1: tuple

    def __post_init__(self):
        d = len(self.basis)
        facets = tuple(tuple(Fraction(x) for x in f) for f in self.facets)
        c1 = tuple(Fraction(x) for x in self.c1)
        if len(c1) != d or any(len(f) != d for f in facets):
            raise ValueError("facet and Chern class dimensions must match the basis")
        if not facets:
            raise ValueError("a Kahler cone needs at least one facet")
        if _rank(facets) != d:
            raise ValueError("cone is not salient: facet functionals do not have full rank")
        object.__setattr__(self, "facets", facets)
        object.__setattr__(self, "c1", c1)
        object.__setattr__(self, "basis", tuple(self.basis))

    @property
    def dim(self):
        return len(self.basis)

    def values(self, v):
        """Facet values ``l_k(v)``."""
        v = _coerce(v)
        if len(v) != self.dim:
            raise ValueError(f"class has {len(v)} coordinates, model {self.name} needs {self.dim}")
        return tuple(_dot(f, v) for f in self.facets)

    def rescaled(self, scales, name=None, basis=None):
        """Same model in the basis ``e'_i = s_i e_i``."""
        s = tuple(Fraction(x) for x in scales)
        facets = tuple(tuple(a * b for a, b in zip(f, s)) for f in self.facets)
        c1 = tuple(c / b for c, b in zip(self.c1, s))
        return ManifoldModel(name or self.name, basis or self.basis, facets, c1)


def location(model, v):
    """Classify ``v`` as ``"interior"``, ``"boundary"`` or ``"outside"``.

    ``boundary`` means nef but not Kahler.  The three outcomes are mutually
    exclusive by construction.
    """
    vals = model.values(v)
    if all(x > 0 for x in vals):
        return "interior"
    if all(x >= 0 for x in vals):
        return "boundary"
    return "outside"


def in_cone(model, v):
    return location(model, v) == "interior"


def is_nef(model, v):
    return location(model, v) != "outside"


def max_time(model, omega0):
    """Supremum of ``t`` with ``[omega0] - t c1`` Kahler.

    Exact (a :class:`~fractions.Fraction`) for rational input; ``math.inf``
    when no facet decreases along the path.
    """
    omega0 = _coerce(omega0)
    if not in_cone(model, omega0):
        raise NotInCone(f"class {_fmt(omega0)} is not in the Kahler cone of {model.name}")
    vals = model.values(omega0)
    rates = model.values(model.c1)
    times = [a / b for a, b in zip(vals, rates) if b > 0]
    if not times:
        return math.inf
    return min(times)


def nef_time(model, omega0):
    """Largest ``t`` with ``[omega0] - t c1`` nef, found by linear programming.

    An independent floating-point route to :func:`max_time`.
    """
    from scipy.optimize import linprog

    A = np.array([[float(x) for x in f] for f in model.facets])
    w = np.array([float(x) for x in _coerce(omega0)])
    c = np.array([float(x) for x in model.c1])
    # maximise t subject to A (w - t c) >= 0, i.e. (A c) t <= A w
    res = linprog(c=[-1.0], A_ub=(A @ c)[:, None], b_ub=A @ w, bounds=[(0, None)],
                  method="highs")
    if res.status == 3:
        return math.inf
    if res.status != 0:
        raise RuntimeError(f"linear program failed: {res.message}")
    return float(res.x[0])


def class_path(model, omega0, t):
    """``[omega0] - t c1``."""
    omega0 = _coerce(omega0)
    t = _coerce([t])[0]
    return tuple(w - t * c for w, c in zip(omega0, model.c1))


def normalized_class_path(model, omega0, t):
    """``e^{-t} [omega0] + (1 - e^{-t}) (-c1)`` in floating point."""
    omega0 = [float(x) for x in _coerce(omega0)]
    e = math.exp(-float(t))
    return tuple(e * w + (1.0 - e) * (-float(c)) for w, c in zip(omega0, model.c1))


@dataclass(frozen=True)
class TerminalReport:
    model: str
    omega0: tuple
    T: object
    behavior: str
    boundary: tuple | None
    active_facets: tuple

    @property
    def description(self):
        return BEHAVIORS[self.behavior]

    def csv_row(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([self.model, _fmt(self.omega0), _fmt_scalar(self.T), self.behavior,
                    "" if self.boundary is None else _fmt(self.boundary)])
        return buf.getvalue()


CSV_HEADER = "model,omega0,T,behavior,boundary\n"


def terminal_behavior(model, omega0):
    """Classify how the class path ends.

    ``b`` when ``c1 = 0``; ``c`` when the path stays in the cone for all
    time; otherwise ``a`` when the limiting class is zero and ``d`` when it
    is a nonzero boundary point.
    """
    omega0 = _coerce(omega0)
    T = max_time(model, omega0)
    if all(c == 0 for c in model.c1):
        return TerminalReport(model.name, omega0, T, "b", None, ())
    if T == math.inf:
        return TerminalReport(model.name, omega0, T, "c", None, ())
    limit = class_path(model, omega0, T)
    if _is_exact(limit):
        zero = all(x == 0 for x in limit)
        active = tuple(k for k, x in enumerate(model.values(limit)) if x == 0)
    else:
        scale = max(1.0, max(abs(float(x)) for x in omega0))
        zero = all(abs(float(x)) <= 1e-12 * scale for x in limit)
        active = tuple(k for k, x in enumerate(model.values(limit)) if abs(float(x)) <= 1e-12 * scale)
    return TerminalReport(model.name, omega0, T, "a" if zero else "d", limit, active)


# ----------------------------------------------------------------------------
# catalogue
# ----------------------------------------------------------------------------

def riemann_surface(genus):
    """Compact Riemann surface of the given genus.

    The basis class has area ``2 pi`` (the Fubini-Study class when genus is
    zero), so that ``c1 = 2 - 2 genus`` by Gauss-Bonnet.
    """
    if genus < 0:
        raise ValueError("genus must be non-negative")
    return ManifoldModel(f"RiemannSurface({genus})", ("[A]",), ((1,),), (2 - 2 * genus,))


def product(*models, name=None):
    """Product manifold with the cone spanned by pulled-back classes.

    Valid for factors whose (1,1) cohomology is spanned by pullbacks, as for
    products of curves.
    """
    basis, facets, c1 = [], [], []
    total = sum(m.dim for m in models)
    offset = 0
    for m in models:
        basis += [f"{m.name}:{b}" for b in m.basis]
        for f in m.facets:
            row = [Fraction(0)] * total
            row[offset:offset + m.dim] = f
            facets.append(tuple(row))
        c1 += list(m.c1)
        offset += m.dim
    return ManifoldModel(name or " x ".join(m.name for m in models), tuple(basis),
                         tuple(facets), tuple(c1))


def _p1xp1():
    return ManifoldModel("P1xP1", ("alpha1", "alpha2"), ((1, 0), (0, 1)), (1, 1))


def _exs():
    # elliptic curve times a curve of higher genus; basis: flat class, Kahler-Einstein class
    return ManifoldModel("ExS", ("[omega_E]", "[omega_S]"), ((1, 0), (0, 1)), (0, -1))


def _blp2():
    # blow-up of the plane at a point; basis: fibre class pulled back from P1, plane class
    return ManifoldModel("BlpP2", ("[f*omega_P1]", "[pi*omega_P2]"), ((1, 0), (0, 1)), (1, 2))


def _torus():
    return ManifoldModel("T2", ("[omega_flat]",), ((1,),), (0,))


CATALOG = {
    "P1": lambda: dataclasses.replace(riemann_surface(0), name="P1"),
    "T2": _torus,
    "P1xP1": _p1xp1,
    "ExS": _exs,
    "BlpP2": _blp2,
}


def get_model(name):
    """Look up a catalogue entry, or ``RiemannSurface(g)``."""
    if name in CATALOG:
        return CATALOG[name]()
    if name.startswith("RiemannSurface(") and name.endswith(")"):
        return riemann_surface(int(name[len("RiemannSurface("):-1]))
    raise KeyError(f"unknown model {name!r}; known: {', '.join(sorted(CATALOG))}, RiemannSurface(g)")


def _fmt_scalar(x):
    if x == math.inf:
        return "inf"
    if isinstance(x, Fraction):
        return str(x)
    return repr(float(x))


def _fmt(v):
    return "(" + ", ".join(_fmt_scalar(x) for x in v) + ")"
