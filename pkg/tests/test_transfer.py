import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maassdyn.algebra import compose
from maassdyn.config import RunConfig, build
from maassdyn.transfer import (
    Chart,
    FunctionVector,
    apply,
    apply_pointwise,
    change_of_choice,
    charts_for,
    chebyshev_nodes,
    conjugate_operator,
    regularity_check,
    residual,
    transport,
)

S_VALUES = [0.5, 0.5 + 3j, 0.8 - 1.5j]


@settings(max_examples=60, deadline=None)
@given(st.floats(-3, 3), st.sampled_from([1, -1]), st.floats(0.2, 3), st.floats(-0.999, 0.999))
def test_chart_round_trip(r, eps, kappa, t):
    ch = Chart(r, eps, kappa)
    x = ch.x(t)
    assert ch.t(x) == pytest.approx(t, abs=1e-9)
    X, Z = ch.projective(t)
    assert X / Z == pytest.approx(x, rel=1e-12, abs=1e-12)


def _direct_tau(f, beta, gamma, x):
    m = np.linalg.inv(gamma.to_numpy())
    den = m[1, 0] * x + m[1, 1]
    y = (m[0, 0] * x + m[0, 1]) / den
    return np.exp(-f.s * np.log(den * den)) * f.value(beta, y)


@pytest.mark.parametrize("s", S_VALUES)
def test_tau_matches_defining_formula(example, s):
    rng = np.random.default_rng(0)
    f = FunctionVector.random(charts_for(example.system), 24, s, rng)
    for alpha in example.system.symbols:
        for beta, gamma in example.op.row_terms(alpha.index):
            ch = charts_for(example.system)[alpha.index - 1]
            x = ch.x(rng.uniform(-0.95, 0.95, 20))
            assert np.allclose(f.tau(beta, gamma, x), _direct_tau(f, beta, gamma, x), rtol=1e-10, atol=1e-12)


def test_tau_is_a_left_action(example):
    rng = np.random.default_rng(1)
    f = FunctionVector.random(charts_for(example.system), 24, 0.5 + 2j, rng)
    g = example.group.generators["g"]
    T = example.group.T
    # tau(T) tau(g) f_4 = tau(T g) f_4, sampled where g^-1 T^-1 x lies in (1/3, oo)
    h = compose(T, g)
    x = np.array([0.9, 1.0, 1.1])
    y = (np.linalg.inv(h.to_numpy()) @ np.vstack([x, np.ones_like(x)]))
    assert np.all(y[0] / y[1] > 1 / 3)
    lhs = f.tau(4, h, x)
    inner = lambda z: f.tau(4, g, z)
    mT = np.linalg.inv(T.to_numpy())
    rhs = inner((mT[0, 0] * x + mT[0, 1]) / (mT[1, 0] * x + mT[1, 1]))
    assert np.allclose(lhs, rhs, rtol=1e-12)


@pytest.mark.parametrize("s", S_VALUES)
def test_collocation_is_exact_at_nodes(example, s):
    rng = np.random.default_rng(2)
    N = 24
    f = FunctionVector.random(charts_for(example.system), N, s, rng)
    Lf = apply(example.op, s, f)
    for a, ch in zip(example.system.symbols, Lf.charts):
        x = ch.x(chebyshev_nodes(N))
        assert np.allclose(Lf.value(a.index, x), apply_pointwise(example.op, f, a.index, x), rtol=1e-9, atol=1e-12)


def test_identity_choice_map(example):
    cm = change_of_choice(example.system, example.system)
    assert cm.bijection == {a.index: a.index for a in example.system.symbols}
    assert all(g.is_identity() for g in cm.elements.values())


def test_conjugation_round_trip(example):
    other = build(RunConfig(group="example", preset="reference", shifts={"A1:g": 1}))
    cm = change_of_choice(example.system, other.system)
    back = conjugate_operator(conjugate_operator(example.op, cm), cm.inverse())
    for a in example.system.symbols:
        assert sorted(map(repr, back.row_terms(a.index))) == sorted(map(repr, example.op.row_terms(a.index)))


def test_transport_inverse(example):
    other = build(RunConfig(group="example", preset="reference", shifts={"A1:g": 1}))
    cm = change_of_choice(example.system, other.system)
    rng = np.random.default_rng(3)
    f = FunctionVector.random(charts_for(example.system), 32, 0.5 + 3j, rng, decay=0.5)
    g = transport(transport(f, cm, N=32), cm.inverse(), N=32)
    assert max(np.max(np.abs(a - b)) for a, b in zip(f.coeffs, g.coeffs)) < 1e-9


def test_residual_separates_eigenfunctions(modular_eigen):
    p, ref = modular_eigen
    assert ref.residual < 1e-8
    rng = np.random.default_rng(4)
    g = FunctionVector.random(ref.f.charts, ref.f.N, ref.s, rng)
    assert residual(p.op, ref.s, g) > 1e-2


def test_regularity_rejects_non_eigenfunctions(modular_eigen, example_eigen):
    for p, ref in (modular_eigen, example_eigen):
        assert regularity_check(p.op, ref.f).passed
        rng = np.random.default_rng(5)
        g = ref.f + FunctionVector.random(ref.f.charts, ref.f.N, ref.s, rng).scale(1e-3)
        assert not regularity_check(p.op, g).passed


def test_lewis_system_three_term_equation():
    lewis = build(RunConfig(group="psl2z", preset="lewis"))
    rng = np.random.default_rng(6)
    for s in (0.5, 0.5 + 3j):
        f = FunctionVector.random(charts_for(lewis.system), 24, s, rng)
        x = rng.uniform(0, 10, 100)
        lhs = apply_pointwise(lewis.op, f, 1, x)
        rhs = f.value(1, x + 1) + (x + 1) ** (-2 * s) * f.value(1, x / (x + 1))
        assert np.max(np.abs(lhs - rhs)) < 1e-12
