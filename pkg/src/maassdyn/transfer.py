"""Transfer operators built from the symbol system, and their numerics.

The exact part classifies each symbol by the cell on the far side of its
vertical geodesic and assembles the formal operator: a matrix whose entries
are finite sums of ``tau_s(gamma)``.  The numeric part represents function
vectors by Chebyshev expansions on a Moebius chart of each interval.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import chebyshev as C

from .algebra import (
    INF,
    GroupElement,
    Word,
    _concat_words,
    compose,
    format_quadratic,
    format_word,
    inverse,
    latex_quadratic,
    mobius_apply,
)
from .symdyn import (
    StructureError,
    SymbolComponent,
    SymbolSystem,
    arc_within,
    epsilon,
    image_interval,
)

SITUATION_TAGS = ("1a", "1b", "2a", "2b", "3a", "3b")


# ---------------------------------------------------------------------------
# classification and assembly


@dataclass(frozen=True)
class SituationData:
    alpha: int
    tag: str
    generator: int
    neighbor: str  # cell name of the neighbouring cell (before translating by T^n)
    n: int
    j: int | None = None  # cycle index for rectangle situations
    m: int | None = None  # shift of the triangle generator
    tuple_beta: int | None = None
    tuple_g: GroupElement | None = None


def _symbol_of(system: SymbolSystem, gi: int, j: int) -> int:
    for a in system.symbols:
        if a.generator == gi and a.j == j:
            return a.index
    raise StructureError(f"no symbol for generator {gi} and index {j}")


def _situation_terms(system: SymbolSystem, sit: SituationData) -> list[tuple[int, GroupElement]]:
    gi = sit.generator
    cell, h = system.choices.generators[gi]
    cyc = system.cycles[gi]
    Tn = system.T(sit.n)
    if sit.tag in ("1a", "1b"):
        k, cyl = cyc.length, cyc.cyl
        out = []
        for ell in range(k - 1):
            count = ell if sit.tag == "1a" else ell + 1
            gamma = Tn
            for i in range(count):
                gamma = compose(gamma, inverse(cyc.h(sit.j + i)))
            target_j = sit.j + ell if sit.tag == "1a" else sit.j + ell + 1
            out.append((_symbol_of(system, gi, (target_j - 1) % cyl + 1), gamma))
        return out
    f1, f2, f3 = (_symbol_of(system, gi, j) for j in (1, 2, 3))
    m = sit.m or 0
    hi = inverse(h)
    if sit.tag == "2a":
        return [(f1, compose(Tn, h)), (f3, compose(compose(Tn, h), system.T(-m)))]
    if sit.tag == "2b":
        return [(f2, compose(Tn, hi)), (f3, system.T(sit.n - m))]
    if sit.tag == "3a":
        return [(f1, Tn), (f2, compose(Tn, hi))]
    if sit.tag == "3b":
        return [(f1, compose(Tn, h)), (f2, Tn)]
    raise ValueError(f"unknown situation {sit.tag}")


def classify(system: SymbolSystem, alpha: int | SymbolComponent) -> SituationData:
    """Situation of ``C'_alpha`` from the cell adjacent on its backward side."""
    a = alpha if isinstance(alpha, SymbolComponent) else system.symbol(alpha)
    tiling = system.tiling
    lam = system.lam
    try:
        cell, n = tiling.locate(a.r, -a.eps)
    except Exception as exc:
        raise StructureError(f"{a.label}: no neighbouring cell") from exc
    beta, g = system.tuples[a.index]
    common = dict(alpha=a.index, neighbor=cell.name, n=n, tuple_beta=beta, tuple_g=g)
    Tn = system.T(n)
    for gi, ((gcell, h), cyc) in enumerate(zip(system.choices.generators, system.cycles)):
        if cyc.kind == "rectangle":
            for j in range(1, cyc.length + 1):
                if cyc.cell(j) != cell:
                    continue
                eps_j = epsilon(cyc.cell(j), cyc.h(j))
                if a.eps == eps_j and a.r == mobius_apply(compose(Tn, cyc.h(j - 1)), INF):
                    return SituationData(tag="1a", generator=gi, j=j, **common)
                if a.eps == -eps_j and a.r == mobius_apply(compose(Tn, inverse(cyc.h(j))), INF):
                    return SituationData(tag="1b", generator=gi, j=j, **common)
            continue
        partner = cyc.entries[1][0]
        if cell != gcell and cell != partner:
            continue
        eps1 = -epsilon(gcell, h)
        edge = a.r - lam * n
        if edge == cell.long_side_x():
            tag, expected = ("2a", partner) if a.eps == eps1 else ("2b", gcell)
        elif edge == cell.short_side_x():
            tag, expected = ("3a", gcell) if a.eps == eps1 else ("3b", partner)
        else:
            raise StructureError(f"{a.label}: base point is not a side of {cell.name}")
        if cell != expected:
            raise StructureError(f"{a.label}: situation {tag} expects neighbour {expected.name}, found {cell.name}")
        return SituationData(tag=tag, generator=gi, m=system.choices.shift(gi), **common)
    raise StructureError(f"{a.label}: neighbouring cell {cell.name} matches no generator")


@dataclass
class TransferOperator:
    """Formal matrix of ``tau_s`` sums; ``entries[(alpha, beta)]`` lists the elements."""

    system: SymbolSystem
    entries: dict[tuple[int, int], list[GroupElement]]
    situations: dict[int, SituationData] = field(default_factory=dict)
    order: dict[int, list[tuple[int, GroupElement]]] = field(default_factory=dict)

    @property
    def size(self) -> int:
        return len(self.system.symbols)

    @property
    def group(self):
        return self.system.group

    def row_terms(self, alpha: int) -> list[tuple[int, GroupElement]]:
        return list(self.order.get(alpha, []))

    def entry(self, alpha: int, beta: int) -> list[GroupElement]:
        return list(self.entries.get((alpha, beta), []))

    def term_count(self) -> int:
        return sum(len(v) for v in self.order.values())

    def check_well_defined(self) -> list[str]:
        """Terms whose ``gamma^-1.I_alpha`` escapes the closure of ``I_beta``
        (there ``tau_s(gamma) f_beta`` would not be defined on ``I_alpha``)."""
        bad = []
        for alpha, terms in self.order.items():
            a = self.system.symbol(alpha)
            for beta, gamma in terms:
                arc = image_interval(inverse(gamma), a.interval())
                if not arc_within(self.system.symbol(beta), arc):
                    bad.append(f"f{alpha} <- f{beta}: {format_word(gamma.word)}")
        return bad

    def to_dict(self, namer: "ElementNamer | None" = None) -> dict:
        namer = namer or ElementNamer(self.group)
        rows = []
        for a in self.system.symbols:
            row = []
            for b in self.system.symbols:
                row.append([{"word": namer.text(g), "matrix": g.to_strings()} for g in self.entry(a.index, b.index)])
            rows.append(row)
        return {
            "symbols": [
                {"name": a.label, "base": format_quadratic(a.r), "eps": a.eps, "interval": a.interval_str()}
                for a in self.system.symbols
            ],
            "situations": {f"f{k}": v.tag for k, v in sorted(self.situations.items())},
            "entries": rows,
        }

    def to_json(self, namer: "ElementNamer | None" = None) -> str:
        return json.dumps(self.to_dict(namer), indent=2, sort_keys=True)

    def to_latex(self, namer: "ElementNamer | None" = None) -> str:
        namer = namer or ElementNamer(self.group)
        lines = []
        for a in self.system.symbols:
            cells = []
            for b in self.system.symbols:
                terms = self.entry(a.index, b.index)
                if not terms:
                    cells.append("0")
                else:
                    cells.append(" + ".join("1" if g.is_identity() else rf"\tau_s({namer.latex(g)})" for g in terms))
            lines.append(" & ".join(cells))
        body = "\n\\\\\n".join(lines)
        return "\\begin{pmatrix}\n" + body + "\n\\end{pmatrix}"

    def equations(self, namer: "ElementNamer | None" = None) -> list[str]:
        namer = namer or ElementNamer(self.group)
        out = []
        for a in self.system.symbols:
            rhs = []
            for beta, g in self.row_terms(a.index):
                rhs.append(f"f{beta}" if g.is_identity() else f"tau_s({namer.text(g)}) f{beta}")
            out.append(f"f{a.index} = " + (" + ".join(rhs) if rhs else "0"))
        return out

    def to_text(self, namer: "ElementNamer | None" = None) -> str:
        lines = ["(i) domains:"]
        for a in self.system.symbols:
            lines.append(f"  f{a.index} real-analytic on {a.interval_str()}")
        lines.append("(ii) functional equations:")
        lines.extend("  " + e for e in self.equations(namer))
        return "\n".join(lines)


def build_operator(system: SymbolSystem) -> TransferOperator:
    entries: dict[tuple[int, int], list[GroupElement]] = {}
    order: dict[int, list[tuple[int, GroupElement]]] = {}
    situations = {}
    for a in system.symbols:
        sit = classify(system, a)
        situations[a.index] = sit
        terms = _situation_terms(system, sit)
        order[a.index] = terms
        for beta, gamma in terms:
            entries.setdefault((a.index, beta), []).append(gamma)
    return TransferOperator(system, entries, situations, order)


# ---------------------------------------------------------------------------
# display of group elements


class ElementNamer:
    """Short names for group elements: group aliases first, then the
    shortest word up to ``max_letters`` letters (fewer inverses preferred)."""

    def __init__(self, group, max_letters: int = 4):
        self.group = group
        self.max_letters = max_letters
        self._aliases: dict[GroupElement, tuple[str, int]] = {}
        for name, el in group.aliases.items():
            self._aliases.setdefault(el, (name, 1))
            self._aliases.setdefault(inverse(el), (name, -1))
        self._words: dict[GroupElement, Word] | None = None

    def _enumerate(self) -> dict[GroupElement, Word]:
        letters = [(name, e) for name in sorted(self.group.generators) for e in (1, -1)]
        ident = self.group.identity()
        best: dict[GroupElement, tuple] = {ident: (0, 0, "")}
        words: dict[GroupElement, Word] = {ident: ()}
        frontier = [((), ident)]
        for _ in range(self.max_letters):
            nxt = []
            for w, el in frontier:
                for name, e in letters:
                    w2 = _concat_words(w, ((name, e),))
                    gen = self.group.generators[name]
                    el2 = compose(el, gen if e > 0 else inverse(gen))
                    key = (sum(abs(x) for _, x in w2), sum(1 for _, x in w2 if x < 0), format_word(w2))
                    if el2 not in best or key < best[el2]:
                        best[el2], words[el2] = key, w2
                    nxt.append((w2, el2))
            frontier = nxt
        return words

    def word(self, g: GroupElement) -> Word | None:
        if self._words is None:
            self._words = self._enumerate()
        return self._words.get(g, g.word)

    def text(self, g: GroupElement) -> str:
        if g.is_identity():
            return "1"
        if g in self._aliases:
            name, e = self._aliases[g]
            return name if e == 1 else f"{name}^-1"
        w = self.word(g)
        if w is None:
            return "[[{}, {}], [{}, {}]]".format(*(format_quadratic(x) for x in g.entries()))
        return format_word(w)

    def latex(self, g: GroupElement) -> str:
        if g.is_identity():
            return "1"
        if g in self._aliases:
            name, e = self._aliases[g]
            return name if e == 1 else f"{name}^{{-1}}"
        w = self.word(g)
        if w is None:
            a, b, c, d = (latex_quadratic(x) for x in g.entries())
            return rf"\begin{{pmatrix}}{a}&{b}\\{c}&{d}\end{{pmatrix}}"
        parts = []
        for name, e in w:
            if e == 1:
                parts.append(name)
            elif 0 < e < 10:
                parts.append(f"{name}^{e}")
            else:
                parts.append(f"{name}^{{{e}}}")
        return "".join(parts)


# ---------------------------------------------------------------------------
# charts and function vectors


@dataclass(frozen=True)
class Chart:
    """``t in [-1, 1] -> r + eps*kappa*(1+t)/(1-t)``; ``t = 1`` is infinity."""

    r: float
    eps: int
    kappa: float = 1.0

    def x(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore"):
            return self.r + self.eps * self.kappa * (1 + t) / (1 - t)

    def t(self, x):
        u = self.eps * (np.asarray(x, dtype=float) - self.r) / self.kappa
        return (u - 1) / (u + 1)

    def projective(self, t):
        """Homogeneous coordinates ``(X, Z)`` with ``x = X/Z`` and ``Z >= 0``."""
        t = np.asarray(t, dtype=float)
        return self.r * (1 - t) + self.eps * self.kappa * (1 + t), 1 - t

    def weight(self, t, s):
        """``(1 + eps*(x-r)/kappa)**(-2s) = ((1-t)/2)**(2s)``."""
        base = (1 - np.asarray(t, dtype=float)) / 2
        with np.errstate(divide="ignore"):
            return np.where(base > 0, np.exp(2 * s * np.log(np.where(base > 0, base, 1.0))), 0.0)


def chebyshev_nodes(n: int) -> np.ndarray:
    return C.chebpts1(n)


def _float_matrix(g) -> np.ndarray:
    return g.to_numpy() if isinstance(g, GroupElement) else np.asarray(g, dtype=float)


def _inverse_matrix(g) -> np.ndarray:
    m = _float_matrix(g)
    return np.array([[m[1, 1], -m[0, 1]], [-m[1, 0], m[0, 0]]])


def pullback_geometry(gamma, source: Chart, X, Z):
    """For ``y = gamma^-1.x`` with ``x = X/Z``: the linear form ``A`` and the
    source chart coordinate of ``y``.

    ``tau_s(gamma) f_beta (x) = |A/(Z*kappa)|**(-2s) * phi_beta(t)`` where
    ``f_beta = w_beta * phi_beta``.  The sign of ``A`` follows the arbitrary
    sign of the homogeneous coordinates, so ``|A|`` is returned; ``t`` is a
    ratio and unaffected.
    """
    m = _inverse_matrix(gamma)
    P = m[0, 0] * X + m[0, 1] * Z
    Q = m[1, 0] * X + m[1, 1] * Z
    B = source.eps * (P - source.r * Q)
    D = source.kappa * Q
    A = B + D
    return np.abs(A), (B - D) / A


class FunctionVector:
    """``f_alpha = w_alpha * phi_alpha`` with ``phi_alpha`` a Chebyshev series in the chart variable."""

    def __init__(self, charts: Sequence[Chart], coeffs: Sequence[np.ndarray], s: complex):
        self.charts = list(charts)
        self.coeffs = [np.asarray(c, dtype=complex) for c in coeffs]
        self.s = complex(s)

    @property
    def size(self) -> int:
        return len(self.charts)

    @property
    def N(self) -> int:
        return len(self.coeffs[0])

    @classmethod
    def from_values(cls, charts, values: Sequence[np.ndarray], s) -> "FunctionVector":
        """Coefficients from ``phi`` values at first-kind Chebyshev nodes."""
        out = []
        for v in values:
            n = len(v)
            V = C.chebvander(chebyshev_nodes(n), n - 1)
            out.append(np.linalg.solve(V, np.asarray(v, dtype=complex)))
        return cls(charts, out, s)

    @classmethod
    def zeros(cls, charts, N: int, s) -> "FunctionVector":
        return cls(charts, [np.zeros(N, dtype=complex) for _ in charts], s)

    @classmethod
    def random(cls, charts, N: int, s, rng: np.random.Generator, decay: float = 0.7) -> "FunctionVector":
        k = np.arange(N)
        coeffs = [(rng.standard_normal(N) + 1j * rng.standard_normal(N)) * decay**k for _ in charts]
        return cls(charts, coeffs, s)

    def phi(self, alpha: int, t) -> np.ndarray:
        t = np.clip(np.asarray(t, dtype=float), -1.0, 1.0)
        return C.chebval(t, self.coeffs[alpha - 1])

    def node_values(self, alpha: int, N: int | None = None) -> np.ndarray:
        return self.phi(alpha, chebyshev_nodes(N or self.N))

    def value(self, alpha: int, x) -> np.ndarray:
        """``f_alpha(x)`` for ``x`` in the closure of ``I_alpha``."""
        ch = self.charts[alpha - 1]
        t = ch.t(x)
        return ch.weight(t, self.s) * self.phi(alpha, t)

    def tau(self, beta: int, gamma, x) -> np.ndarray:
        """``(tau_s(gamma) f_beta)(x)`` at finite real ``x``."""
        x = np.asarray(x, dtype=float)
        return self.tau_projective(beta, gamma, x, np.ones_like(x))

    def tau_projective(self, beta: int, gamma, X, Z) -> np.ndarray:
        """``(tau_s(gamma) f_beta)`` at ``X/Z`` multiplied by ``Z**(-2s)``."""
        ch = self.charts[beta - 1]
        A, t = pullback_geometry(gamma, ch, X, Z)
        if np.any(A == 0) or np.any(np.abs(t) > 1 + 1e-9):
            raise ValueError(f"tau_s evaluation leaves the interval of f{beta}")
        return np.exp(-2 * self.s * np.log(A / ch.kappa)) * self.phi(beta, t)

    def tau_scaled(self, beta: int, gamma, target: Chart, t) -> np.ndarray:
        """``tau_s(gamma) f_beta`` divided by the target chart weight."""
        X, Z = target.projective(t)
        return 2 ** (2 * self.s) * self.tau_projective(beta, gamma, X, Z)

    def norm(self) -> float:
        return max(float(np.max(np.abs(self.node_values(a)))) for a in range(1, self.size + 1))

    def __add__(self, other: "FunctionVector") -> "FunctionVector":
        return FunctionVector(self.charts, [a + b for a, b in zip(self.coeffs, other.coeffs)], self.s)

    def __sub__(self, other: "FunctionVector") -> "FunctionVector":
        return FunctionVector(self.charts, [a - b for a, b in zip(self.coeffs, other.coeffs)], self.s)

    def scale(self, c: complex) -> "FunctionVector":
        return FunctionVector(self.charts, [c * a for a in self.coeffs], self.s)

    def decay_ratio(self) -> float:
        return max(coefficient_decay_ratio(c) for c in self.coeffs)


def charts_for(system: SymbolSystem, kappa: float | None = None) -> list[Chart]:
    if kappa is None:
        kappa = system.group.chart_scale
    return [Chart(float(a.r), a.eps, kappa) for a in system.symbols]


def coefficient_decay_ratio(c: np.ndarray, floor: float = 1e-13) -> float:
    """Geometric decay rate of Chebyshev coefficients from a log-linear fit
    to their monotone envelope, above a relative noise floor."""
    a = np.abs(np.asarray(c))
    if not np.any(a):
        return 0.0
    env = np.maximum.accumulate(a[::-1])[::-1]
    keep = env > floor * env[0]
    k = np.nonzero(keep)[0]
    if len(k) < 3:
        return 0.0
    slope = np.polyfit(k, np.log(env[k]), 1)[0]
    return float(np.exp(slope))


def apply(op: TransferOperator, s: complex, f: FunctionVector) -> FunctionVector:
    """``L_s f`` sampled at the chart nodes and re-expanded."""
    if complex(s) != f.s:
        raise ValueError("function vector was built for a different s")
    nodes = chebyshev_nodes(f.N)
    values = []
    for a in op.system.symbols:
        ch = f.charts[a.index - 1]
        acc = np.zeros(f.N, dtype=complex)
        for beta, gamma in op.row_terms(a.index):
            acc += f.tau_scaled(beta, gamma, ch, nodes)
        values.append(acc)
    return FunctionVector.from_values(f.charts, values, f.s)


def residual(op: TransferOperator, s: complex, f: FunctionVector) -> float:
    """Sup over chart nodes of ``|L_s f - f|`` in the chart scale."""
    nodes = chebyshev_nodes(f.N)
    worst = 0.0
    for a in op.system.symbols:
        ch = f.charts[a.index - 1]
        acc = -f.phi(a.index, nodes)
        for beta, gamma in op.row_terms(a.index):
            acc = acc + f.tau_scaled(beta, gamma, ch, nodes)
        worst = max(worst, float(np.max(np.abs(acc))))
    return worst


@dataclass
class TermKernel:
    """Sampling data of one term ``tau_s(gamma) f_beta`` in row ``alpha`` at the row's nodes."""

    alpha: int
    beta: int
    log_A: np.ndarray  # log(A/(2 kappa_beta)); the factor is exp(-2s log_A)
    t: np.ndarray


def term_kernels(op: TransferOperator, N: int, kappa: float | None = None) -> list[TermKernel]:
    charts = charts_for(op.system, kappa)
    nodes = chebyshev_nodes(N)
    out = []
    for a in op.system.symbols:
        X, Z = charts[a.index - 1].projective(nodes)
        for beta, gamma in op.row_terms(a.index):
            src = charts[beta - 1]
            A, t = pullback_geometry(gamma, src, X, Z)
            if np.any(A == 0) or np.any(np.abs(t) > 1 + 1e-9):
                raise ValueError(f"term f{a.index} <- f{beta} leaves the interval")
            out.append(TermKernel(a.index, beta, np.log(A / (2 * src.kappa)), np.clip(t, -1, 1)))
    return out


# ---------------------------------------------------------------------------
# pointwise application to arbitrary function families


class PointwiseVector:
    """Anything exposing ``tau(beta, gamma, x)`` for finite real ``x``."""

    def tau(self, beta: int, gamma, x) -> np.ndarray:  # pragma: no cover - interface
        raise NotImplementedError


class CallableVector(PointwiseVector):
    """Function vector given by plain callables; ``tau`` uses the defining formula."""

    def __init__(self, funcs: dict[int, Callable], s: complex):
        self.funcs = funcs
        self.s = complex(s)

    def tau(self, beta, gamma, x):
        m = _inverse_matrix(gamma)
        x = np.asarray(x, dtype=float)
        den = m[1, 0] * x + m[1, 1]
        y = (m[0, 0] * x + m[0, 1]) / den
        return np.exp(self.s * np.log(den**-2.0)) * self.funcs[beta](y)


class AppliedVector(PointwiseVector):
    """``L_s f`` kept unevaluated, so ``tau`` composes with the row terms exactly."""

    def __init__(self, op: TransferOperator, f):
        self.op = op
        self.f = f

    def tau(self, beta, gamma, x):
        x = np.asarray(x, dtype=float)
        acc = np.zeros(x.shape, dtype=complex)
        for b, g in self.op.row_terms(beta):
            acc = acc + self.f.tau(b, compose(gamma, g), x)
        return acc


def apply_pointwise(op: TransferOperator, f, alpha: int, x) -> np.ndarray:
    """``(L_s f)_alpha(x)`` straight from the row terms."""
    x = np.asarray(x, dtype=float)
    acc = np.zeros(x.shape, dtype=complex)
    for beta, gamma in op.row_terms(alpha):
        acc = acc + f.tau(beta, gamma, x)
    return acc


# ---------------------------------------------------------------------------
# change of choices


@dataclass
class ChoiceMap:
    """``alpha -> alpha~`` with ``g_alpha`` carrying ``C'_alpha`` to ``C~'_alpha~``."""

    source: SymbolSystem
    target: SymbolSystem
    bijection: dict[int, int]
    elements: dict[int, GroupElement]

    def inverse(self) -> "ChoiceMap":
        return ChoiceMap(
            self.target,
            self.source,
            {v: k for k, v in self.bijection.items()},
            {self.bijection[k]: inverse(g) for k, g in self.elements.items()},
        )


def _same_group(g1, g2) -> bool:
    return g1.lam == g2.lam and g1.T == g2.T and set(g1.generators.values()) == set(g2.generators.values())


def change_of_choice(sys1: SymbolSystem, sys2: SymbolSystem) -> ChoiceMap:
    """Match each component of ``sys1`` with one of ``sys2``.

    Either ``g = T^n`` (same orientation, base shifted by ``n*lambda``) or,
    for a component based on a summit line, ``g = T^n b_alpha`` (orientation
    reversed, base ``T^n b_alpha.oo``).
    """
    if not _same_group(sys1.group, sys2.group):
        raise ValueError("choices belong to different groups")
    lam = sys1.lam
    bij, els = {}, {}
    for a in sys1.symbols:
        hits = []
        for b in sys2.symbols:
            if b.eps == a.eps:
                q = (b.r - a.r) / lam
                if q.is_rational() and q.a.denominator == 1:
                    hits.append((b.index, sys1.T(int(q.a))))
            if a.in_sigma_prime and b.eps == -a.eps:
                q = (b.r - mobius_apply(a.b, INF)) / lam
                if q.is_rational() and q.a.denominator == 1:
                    hits.append((b.index, compose(sys1.T(int(q.a)), a.b)))
        if len(hits) != 1:
            raise StructureError(f"{a.label}: expected one matching component, found {len(hits)}")
        bij[a.index], els[a.index] = hits[0]
    if sorted(bij.values()) != [b.index for b in sys2.symbols]:
        raise StructureError("component matching is not a bijection")
    return ChoiceMap(sys1, sys2, bij, els)


def conjugate_operator(op: TransferOperator, cmap: ChoiceMap) -> TransferOperator:
    """Terms ``g_alpha gamma g_beta^-1`` re-indexed by the target symbols."""
    if cmap.source is not op.system:
        raise ValueError("choice map does not start at the operator's symbol system")
    entries: dict = {}
    order: dict = {}
    for alpha, terms in op.order.items():
        at = cmap.bijection[alpha]
        new = []
        for beta, gamma in terms:
            g = compose(compose(cmap.elements[alpha], gamma), inverse(cmap.elements[beta]))
            new.append((cmap.bijection[beta], g))
            entries.setdefault((at, cmap.bijection[beta]), []).append(g)
        order[at] = new
    return TransferOperator(cmap.target, entries, {}, order)


class TransportedVector(PointwiseVector):
    """``f~_(alpha~) = tau_s(g_alpha) f_alpha`` for a function vector on the source choices."""

    def __init__(self, f, cmap: ChoiceMap):
        self.f = f
        self.cmap = cmap
        self._back = {v: k for k, v in cmap.bijection.items()}

    def tau(self, beta_t: int, gamma, x):
        beta = self._back[beta_t]
        return self.f.tau(beta, compose(gamma, self.cmap.elements[beta]), x)

    def to_function_vector(self, charts: Sequence[Chart], N: int) -> FunctionVector:
        nodes = chebyshev_nodes(N)
        vals = []
        ident = self.cmap.target.group.identity()
        for idx, ch in enumerate(charts, start=1):
            beta = self._back[idx]
            vals.append(self.f.tau_scaled(beta, compose(ident, self.cmap.elements[beta]), ch, nodes))
        return FunctionVector.from_values(charts, vals, self.f.s)


def transport(f: FunctionVector, cmap: ChoiceMap, kappa: float | None = None, N: int | None = None) -> FunctionVector:
    kappa = f.charts[0].kappa if kappa is None else kappa
    return TransportedVector(f, cmap).to_function_vector(charts_for(cmap.target, kappa), N or f.N)


# ---------------------------------------------------------------------------
# glued functions and regularity


@dataclass
class Piece:
    sign: int
    beta: int
    gamma: GroupElement


@dataclass
class GluedFunction:
    """``eps f_alpha`` on ``I_alpha`` and ``-eps tau_s(g) f_beta`` on the rest."""

    alpha: SymbolComponent
    inside: Piece
    outside: Piece
    f: FunctionVector

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.empty(x.shape, dtype=complex)
        r = float(self.alpha.r)
        ins = (x > r) if self.alpha.eps > 0 else (x < r)
        for mask, p in ((ins, self.inside), (~ins, self.outside)):
            if np.any(mask):
                out[mask] = p.sign * self.f.tau(p.beta, p.gamma, x[mask])
        return out

    def twisted(self, h: np.ndarray, x) -> np.ndarray:
        """``tau_s(h) psi`` for a real matrix ``h``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        hi = _inverse_matrix(h)
        y = (hi[0, 0] * x + hi[0, 1]) / (hi[1, 0] * x + hi[1, 1])
        r = float(self.alpha.r)
        ins = (y > r) if self.alpha.eps > 0 else (y < r)
        out = np.empty(x.shape, dtype=complex)
        for mask, p in ((ins, self.inside), (~ins, self.outside)):
            if np.any(mask):
                m = _float_matrix(h) @ _float_matrix(p.gamma)
                out[mask] = p.sign * self.f.tau(p.beta, m, x[mask])
        return out


def psi_assemble(system: SymbolSystem, alpha: int, f: FunctionVector) -> GluedFunction:
    a = system.symbol(alpha)
    beta, g = system.tuples[alpha]
    return GluedFunction(a, Piece(a.eps, alpha, system.group.identity()), Piece(-a.eps, beta, g), f)


def one_sided_derivatives(
    fn: Callable, x0: float, side: int, order: int, delta: float = 0.05, degree: int = 10
) -> tuple[np.ndarray, float, float]:
    """Derivatives of order ``<= order`` at ``x0`` of ``fn`` restricted to
    ``[x0, x0 + delta]`` (``side = +1``) or ``[x0 - delta, x0]`` (``side = -1``),
    the sup of ``|fn|`` on the samples and the relative size of the last two
    fit coefficients (small when the window is resolved).

    A low-degree Chebyshev fit on interior samples is differentiated, which
    avoids the ``n**(2k)`` noise growth of differentiating the full chart
    series at its endpoint.
    """
    a, b = (x0, x0 + delta) if side > 0 else (x0 - delta, x0)
    u = C.chebpts1(degree + 1)
    x = 0.5 * (a + b) + 0.5 * (b - a) * u
    y = fn(x)
    c = C.chebfit(u, y, degree)
    tail = float(np.max(np.abs(c[-2:])) / max(np.max(np.abs(c)), 1e-300))
    out = np.empty(order + 1, dtype=complex)
    u0 = -1.0 if side > 0 else 1.0
    for k in range(order + 1):
        out[k] = C.chebval(u0, c) * (2.0 / (b - a)) ** k
        c = C.chebder(c) if len(c) > 1 else np.zeros(1)
    return out, float(np.max(np.abs(y))), tail


def junction_derivatives(
    left: Callable, right: Callable, x0: float, order: int, delta: float = 0.1, degree: int = 12,
    resolve: float = 1e-13, max_halvings: int = 12,
):
    """One-sided derivatives of ``left`` and ``right`` at ``x0`` on a common
    window, halved until both fits are resolved."""
    for _ in range(max_halvings + 1):
        dl = one_sided_derivatives(left, x0, -1, order, delta, degree)
        dr = one_sided_derivatives(right, x0, +1, order, delta, degree)
        if max(dl[2], dr[2]) <= resolve:
            break
        delta /= 2
    return dl, dr, delta


@dataclass
class RegularityEntry:
    alpha: int
    condition: str  # "PF3" or "PF4"
    point: str  # "r" or "oo"
    mismatch: list[float]


@dataclass
class RegularityReport:
    entries: list[RegularityEntry]
    decay_ratio: float
    tol: float
    order: int

    @property
    def max_mismatch(self) -> float:
        return max((max(e.mismatch) for e in self.entries), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_mismatch < self.tol

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "tol": self.tol,
            "order": self.order,
            "max_mismatch": self.max_mismatch,
            "decay_ratio": self.decay_ratio,
            "entries": [e.__dict__ for e in self.entries],
        }


_FLIP = np.array([[0.0, -1.0], [1.0, 0.0]])


def _junction_mismatch(left, right, delta: float) -> list[float]:
    # Taylor coefficients in units of the window length, relative to the window sup
    (dl, sl, _), (dr, sr, _) = left, right
    scale = max(sl, sr, 1e-300)
    return [float(abs(dl[k] - dr[k]) * delta**k / math.factorial(k) / scale) for k in range(len(dl))]


def _piece_fn(f: FunctionVector, piece: Piece, twist) -> Callable:
    g = _float_matrix(piece.gamma)
    if twist is not None:
        g = twist @ g
    return lambda x: piece.sign * f.tau(piece.beta, g, x)


def regularity_check(
    op: TransferOperator, f: FunctionVector, order: int = 3, tol: float = 1e-5, delta: float = 0.1
) -> RegularityReport:
    """One-sided derivative matching of every glued function at its base
    point and, in the chart twisted by ``x -> -1/x``, at infinity.

    The order ``k`` mismatch is the difference of one-sided Taylor
    coefficients times ``w**k``, relative to the sup of ``psi`` on the two
    windows; ``w <= delta`` is the first resolved window length.
    """
    system = op.system
    entries = []
    for a in system.symbols:
        psi = psi_assemble(system, a.index, f)
        sit = op.situations.get(a.index)
        cond = "PF3" if sit is not None and sit.tag in ("1a", "3b") else "PF4"
        r = float(a.r)
        ins, out = psi.inside, psi.outside
        right, left = (ins, out) if a.eps > 0 else (out, ins)
        dl, dr, w = junction_derivatives(_piece_fn(f, left, None), _piece_fn(f, right, None), r, order, delta)
        entries.append(RegularityEntry(a.index, cond, "r", _junction_mismatch(dl, dr, w)))
        # x -> -1/x: x -> 0+ sees psi near -oo, x -> 0- sees psi near +oo
        plus_inf, minus_inf = (ins, out) if a.eps > 0 else (out, ins)
        dl, dr, w = junction_derivatives(
            _piece_fn(f, plus_inf, _FLIP), _piece_fn(f, minus_inf, _FLIP), 0.0, order, delta
        )
        entries.append(RegularityEntry(a.index, cond, "oo", _junction_mismatch(dl, dr, w)))
    return RegularityReport(entries, f.decay_ratio(), tol, order)
