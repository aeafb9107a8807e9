import math
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from krflow import cones

pos = st.fractions(min_value=Fraction(1, 50), max_value=20).filter(lambda f: f > 0)


@pytest.mark.parametrize("name,cls,T,behavior,limit", [
    ("P1", (2,), 1, "a", (0,)),
    ("P1xP1", (2, 2), 2, "a", (0, 0)),
    ("P1xP1", (3, 1), 1, "d", (2, 0)),
    ("ExS", (1, 1), math.inf, "c", None),
    ("BlpP2", (1, 3), 1, "d", (0, 1)),
    ("BlpP2", (1, 2), 1, "a", (0, 0)),
    ("BlpP2", (2, 3), Fraction(3, 2), "d", (Fraction(1, 2), 0)),
    ("T2", (1,), math.inf, "b", None),
])
def test_catalog_values(name, cls, T, behavior, limit):
    rep = cones.terminal_behavior(cones.get_model(name), cls)
    assert rep.T == T
    assert rep.behavior == behavior
    assert rep.boundary == limit
    if T != math.inf:
        assert isinstance(rep.T, Fraction)


def test_outside_class_rejected():
    with pytest.raises(cones.NotInCone):
        cones.max_time(cones.get_model("BlpP2"), (-1, 2))
    with pytest.raises(cones.NotInCone):
        cones.max_time(cones.get_model("P1xP1"), (1, 0))


def test_riemann_surface_chern_class():
    for g in range(4):
        assert cones.riemann_surface(g).c1 == (2 - 2 * g,)
    assert cones.get_model("RiemannSurface(3)").c1 == (-4,)


def test_products_reproduce_catalog_entries():
    rs0 = cones.riemann_surface(0)
    pp = cones.product(rs0, rs0).rescaled((2, 2))
    assert pp.c1 == cones.get_model("P1xP1").c1
    es = cones.product(cones.riemann_surface(1), cones.riemann_surface(2)).rescaled((1, 2))
    assert es.c1 == cones.get_model("ExS").c1


def test_non_salient_cone_rejected():
    with pytest.raises(ValueError):
        cones.ManifoldModel("bad", ("a", "b"), ((1, 1),), (1, 1))


@given(pos, pos)
def test_exact_time_matches_linear_program(a, b):
    for name in ("P1xP1", "BlpP2", "ExS"):
        model = cones.get_model(name)
        if not cones.in_cone(model, (a, b)):
            continue
        T = cones.max_time(model, (a, b))
        lp = cones.nef_time(model, (a, b))
        if T == math.inf:
            assert lp == math.inf
        else:
            assert lp == pytest.approx(float(T), rel=1e-9)
            # the path at T is nef but not Kahler
            assert cones.location(model, cones.class_path(model, (a, b), T)) == "boundary"


@given(st.fractions(min_value=-5, max_value=5), st.fractions(min_value=-5, max_value=5))
def test_location_is_a_partition(a, b):
    model = cones.get_model("BlpP2")
    loc = cones.location(model, (a, b))
    assert loc in ("interior", "boundary", "outside")
    assert cones.in_cone(model, (a, b)) == (loc == "interior")
    assert cones.is_nef(model, (a, b)) == (loc != "outside")


def test_normalized_path_tends_to_minus_c1():
    model = cones.get_model("ExS")
    path = cones.normalized_class_path(model, (1, 1), 50.0)
    assert path == pytest.approx((0.0, 1.0), abs=1e-15)


def test_float_input_works():
    rep = cones.terminal_behavior(cones.get_model("P1xP1"), (3.0, 1.0))
    assert rep.T == pytest.approx(1.0)
    assert rep.behavior == "d"


def test_csv_row():
    rep = cones.terminal_behavior(cones.get_model("BlpP2"), (1, 3))
    assert cones.CSV_HEADER + rep.csv_row() == 'model,omega0,T,behavior,boundary\nBlpP2,"(1, 3)",1,d,"(0, 1)"\n'


def test_unknown_model():
    with pytest.raises(KeyError):
        cones.get_model("K3")
