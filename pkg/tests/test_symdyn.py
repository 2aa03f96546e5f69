import json

import pytest

from maassdyn.algebra import INF, inverse, parse_quadratic
from maassdyn.config import RunConfig, build
from maassdyn.symdyn import StructureError, build_branches, dump_json, resolve_choices


def test_example_symbols(example):
    sy = example.system
    q = lambda t: parse_quadratic(t, 2)
    got = [(a.r, a.eps, a.kind, a.in_sigma_prime) for a in sy.symbols]
    assert got == [
        (q("0"), 1, "triangle", False),
        (q("(2+sqrt2)/3"), -1, "triangle", False),
        (q("1/3"), -1, "triangle", True),
        (q("1/3"), 1, "rectangle", True),
    ]
    g = example.group.generators["g"]
    assert sy.symbol(3).b == g and sy.symbol(4).b == g
    assert sy.tuples[3][0] == 4 and sy.tuples[4][0] == 3


def test_situations(example):
    assert {k: v.tag for k, v in example.op.situations.items()} == {1: "2a", 2: "2b", 3: "1b", 4: "3a"}


def test_branches_partition_intervals(example):
    br = build_branches(example.system, example.op)
    assert {b.source for b in br.branches} == {1, 2, 3, 4}
    assert len(br.branches) == example.op.term_count()


def test_operator_is_well_defined(example, modular):
    assert example.op.check_well_defined() == []
    assert modular.op.check_well_defined() == []


def test_modular_single_symbol(modular):
    (a,) = modular.system.symbols
    assert (a.r, a.eps, a.kind) == (parse_quadratic("1", 1), -1, "rectangle")
    assert a.interval() == (INF, a.r)


def test_bad_choices_are_rejected(example):
    with pytest.raises(StructureError):
        resolve_choices(example.comb, [], {"A2:g": 1})
    with pytest.raises(StructureError):
        resolve_choices(example.comb, ["A1:T"])


def test_shift_moves_the_third_symbol():
    p0 = build(RunConfig(group="example", preset="reference"))
    p1 = build(RunConfig(group="example", preset="reference", shifts={"A1:g": 1}))
    assert p1.system.symbol(3).r == p0.system.symbol(3).r + p0.system.lam
    T = p0.group.T
    assert p1.system.symbol(3).b == p0.system.symbol(3).b * inverse(T)


def test_json_is_deterministic(example):
    a = dump_json(example.system, build_branches(example.system, example.op))
    b = dump_json(example.system, build_branches(example.system, example.op))
    assert a == b
    assert len(json.loads(a)["symbols"]) == 4
