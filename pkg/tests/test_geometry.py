import pytest

from maassdyn.algebra import QuadraticNumber, parse_quadratic
from maassdyn.config import RunConfig, build_tiling, load
from maassdyn.geometry import (
    ConditionAError,
    UnstableEnvelopeError,
    check_condition_A,
    compute_exterior,
    condition_A_report,
    tile,
    to_svg,
)


def test_example_cells(example):
    til = example.tiling
    cells = [(c.name, c.kind, c.left, c.right) for c in til.cells]
    q = lambda t: parse_quadratic(t, 2)
    assert cells == [
        ("A1", "triangle", q("0"), q("1/3")),
        ("A2", "rectangle", q("1/3"), q("(1+sqrt2)/3")),
        ("A3", "triangle", q("(1+sqrt2)/3"), q("(2+sqrt2)/3")),
    ]


@pytest.mark.parametrize("name", ["example", "psl2z", "hecke5"])
def test_cells_cover_one_period(name):
    til = build_tiling(RunConfig(group=name))
    total = sum((c.right - c.left for c in til.cells), QuadraticNumber(0, 0, til.lam.d))
    assert total == til.lam
    assert til.condition_a.holds
    assert condition_A_report(til.exterior).holds


def test_summit_condition_fails_for_lambda17():
    g = load(RunConfig(group="lambda17"))
    rep = check_condition_A(g, word_bound=4)
    assert not rep.holds
    assert rep.violations()
    with pytest.raises(ConditionAError):
        tile(compute_exterior(g, word_bound=4))


def test_small_word_bound_is_flagged():
    g = load(RunConfig(group="lambda17"))
    with pytest.raises(UnstableEnvelopeError):
        compute_exterior(g, word_bound=2)


def test_envelope_is_stable_in_word_bound():
    g = load(RunConfig(group="example"))
    base = parse_quadratic("0", 2)
    sigs = {compute_exterior(g, strip_base=base, word_bound=wb).signature() for wb in (3, 4, 5)}
    assert len(sigs) == 1


def test_locate_translates(example):
    til = example.tiling
    cell, n = til.locate(til.lam * 2, 1)
    assert (cell.name, n) == ("A1", 2)
    cell, n = til.locate(til.lam * -1, -1)
    assert cell.right + til.lam * n == til.lam * -1


def test_svg_output(example):
    svg = to_svg(example.tiling)
    assert svg.startswith("<svg") and svg.rstrip().endswith("</svg>")
