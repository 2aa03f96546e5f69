import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maassdyn.algebra import (
    INF,
    GroupElement,
    QuadraticNumber,
    compose,
    derivative,
    inverse,
    load_group,
    mobius_apply,
    parse_quadratic,
    parse_word,
    power,
)
from maassdyn.config import group_path

fractions = st.fractions(min_value=-50, max_value=50, max_denominator=20)
quad2 = st.builds(lambda a, b: QuadraticNumber(a, b, 2), fractions, fractions)


@given(quad2, quad2, quad2)
def test_field_axioms(x, y, z):
    assert (x + y) + z == x + (y + z)
    assert x * (y + z) == x * y + x * z
    assert x - x == QuadraticNumber(0, 0, 2)
    if x:
        assert x * x.inverse() == QuadraticNumber(1, 0, 2)


@given(quad2, quad2)
def test_order_agrees_with_floats(x, y):
    if abs(float(x) - float(y)) > 1e-9:
        assert (x < y) == (float(x) < float(y))
    assert x.sign() == (0 if not x else int(math.copysign(1, float(x))))


@given(quad2)
def test_floor(x):
    assert x.floor() <= float(x) < x.floor() + 1


def test_parse_quadratic():
    assert parse_quadratic("(2+sqrt2)/3", 2) == QuadraticNumber(Fraction(2, 3), Fraction(1, 3), 2)
    assert parse_quadratic("sqrt8", 2) == QuadraticNumber(0, 2, 2)
    assert parse_quadratic("sqrt(4)", 1) == QuadraticNumber(2, 0, 1)
    with pytest.raises(ValueError):
        parse_quadratic("sqrt3", 2)
    with pytest.raises(ValueError):
        parse_quadratic(0.5, 2)
    with pytest.raises(ValueError):
        parse_quadratic("x + 1", 1)


def _elements():
    g = load_group(group_path("example"))
    gens = list(g.generators.values())
    return g, st.lists(st.sampled_from(gens + [inverse(x) for x in gens]), min_size=1, max_size=6)


EXAMPLE, WORDS = _elements()


def _prod(ws):
    out = EXAMPLE.identity()
    for w in ws:
        out = compose(out, w)
    return out


@settings(max_examples=50, deadline=None)
@given(WORDS, WORDS, WORDS)
def test_group_laws(a, b, c):
    x, y, z = _prod(a), _prod(b), _prod(c)
    assert compose(compose(x, y), z) == compose(x, compose(y, z))
    assert compose(x, inverse(x)).is_identity()
    assert (x.a * x.d - x.b * x.c) == 1


@settings(max_examples=50, deadline=None)
@given(WORDS, st.floats(-5, 5))
def test_mobius_matches_float_matrix(a, x):
    g = _prod(a)
    m = g.to_numpy()
    den = m[1, 0] * x + m[1, 1]
    if abs(den) < 1e-6:
        return
    assert float(mobius_apply(g, x)) == pytest.approx((m[0, 0] * x + m[0, 1]) / den, rel=1e-9, abs=1e-9)


def test_projective_normalization_ignores_sign_and_word():
    g = EXAMPLE.generators["g"]
    neg = GroupElement.from_entries([-e for e in g.entries()], 2)
    assert neg == g
    assert hash(neg) == hash(g)
    assert power(g, 4).is_identity()
    assert power(g, 3) == inverse(g)


def test_boundary_points_and_derivative():
    T = EXAMPLE.T
    assert mobius_apply(T, INF) is INF
    g = EXAMPLE.generators["g"]
    assert mobius_apply(g, INF) == g.a / g.c
    pole = -g.d / g.c
    assert mobius_apply(g, pole) is INF
    with pytest.raises(ZeroDivisionError):
        derivative(g, pole)


def test_relations_and_aliases():
    assert all(ok for _, ok in EXAMPLE.check_relations())
    assert EXAMPLE.aliases["k_1"] == GroupElement.from_entries((1, 0, 3, 1), 2)
    psl = load_group(group_path("psl2z"))
    assert all(ok for _, ok in psl.check_relations())
    assert parse_word("S T^-2 S") == (("S", 1), ("T", -2), ("S", 1))


@pytest.mark.parametrize(
    "data, message",
    [
        ({"d": 1, "lambda": "1", "T": "T", "generators": {}}, "no generators"),
        ({"d": 1, "lambda": "1", "T": "T", "generators": {"T": ["1", "1", "0", "2"]}}, "determinant"),
        ({"d": 4, "lambda": "1", "T": "T", "generators": {"T": ["1", "1", "0", "1"]}}, "square-free"),
        ({"d": 1, "lambda": "2", "T": "T", "generators": {"T": ["1", "1", "0", "1"]}}, "translation"),
    ],
)
def test_load_group_rejects(data, message):
    with pytest.raises(ValueError, match=message):
        load_group(data)


def test_numpy_export():
    g = EXAMPLE.generators["g"]
    m = g.to_numpy()
    assert np.linalg.det(m) == pytest.approx(1.0)
