"""Side pairings, cycles, the symbol set and the branch system.

Everything here is exact.  Cells are referred to by their position in the
fundamental family (``A1``, ``A2``, ...) ordered left to right.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .algebra import (
    INF,
    GroupElement,
    QuadraticNumber,
    compose,
    format_quadratic,
    format_word,
    inverse,
    mobius_apply,
    power,
)
from .geometry import Cell, Tiling, point_image


class StructureError(RuntimeError):
    """Combinatorial data is inconsistent (signals a geometry bug or bad input)."""


@dataclass(frozen=True)
class Pairing:
    cell: Cell
    side: int
    element: GroupElement
    target: Cell
    target_side: int


def side_pairings(tiling: Tiling) -> dict[tuple[int, int], Pairing]:
    """Pairing element ``k`` of every non-vertical side of every cell.

    ``k`` has the side on its isometric sphere and maps it onto a
    non-vertical side of a cell of the family.
    """
    lam, T = tiling.lam, tiling.group.T
    out: dict[tuple[int, int], Pairing] = {}
    for cell in tiling.cells:
        for si, side in enumerate(cell.sides):
            g = side.sphere.owner
            summit_img = mobius_apply(g, INF)
            vx, vy2 = point_image(g, side.vertex_x, side.vertex_y2)
            match = None
            for tc in tiling.cells:
                for ti, ts in enumerate(tc.sides):
                    if ts.sphere.radius_sq != side.sphere.radius_sq or ts.vertex_y2 != vy2:
                        continue
                    q = (ts.summit_x - summit_img) / lam
                    if not (q.is_rational() and q.a.denominator == 1):
                        continue
                    n = int(q.a)
                    if ts.vertex_x == vx + lam * n:
                        match = (tc, ti, n)
            if match is None:
                raise StructureError(f"no partner for side {si} of {cell.name}")
            tc, ti, n = match
            out[(cell.index, si)] = Pairing(cell, si, compose(power(T, n), g), tc, ti)
    return out


def epsilon(cell: Cell, h: GroupElement) -> int:
    """+1 if the cell lies right of ``Re z = h^-1.oo``, -1 if left."""
    x = mobius_apply(inverse(h), INF)
    if x is INF:
        raise StructureError("element fixes infinity")
    if cell.left >= x:
        return 1
    if cell.right <= x:
        return -1
    raise StructureError(f"{cell.name} straddles Re z = {format_quadratic(x)}")


@dataclass(frozen=True)
class Cycle:
    entries: tuple[tuple[Cell, GroupElement], ...]
    kind: str

    @property
    def length(self) -> int:
        return len(self.entries)

    @property
    def cyl(self) -> int:
        if self.kind != "rectangle":
            raise StructureError("cyl is defined for rectangle cycles only")
        first = self.entries[0][0]
        for ell in range(1, len(self.entries)):
            if self.entries[ell][0] == first:
                return ell
        return len(self.entries)

    def h(self, j: int) -> GroupElement:
        """``h_j`` with the index taken modulo the cycle length (1-based)."""
        return self.entries[(j - 1) % len(self.entries)][1]

    def cell(self, j: int) -> Cell:
        return self.entries[(j - 1) % len(self.entries)][0]


class Combinatorics:
    """Pairings and cycles of a tiling, with lookups by cell."""

    def __init__(self, tiling: Tiling, max_cycle: int = 10_000):
        self.tiling = tiling
        self.pairings = side_pairings(tiling)
        self.max_cycle = max_cycle
        self._check_pairing_involution()

    def _check_pairing_involution(self):
        for (ci, si), p in self.pairings.items():
            back = self.pairings[(p.target.index, p.target_side)]
            if back.element != inverse(p.element) or back.target.index != ci:
                raise StructureError(f"side pairing of {p.cell.name} is not an involution")

    def pairing_elements(self, cell: Cell) -> list[GroupElement]:
        return [self.pairings[(cell.index, i)].element for i in range(len(cell.sides))]

    def rectangle_by_vertex(self, x: QuadraticNumber, y2: QuadraticNumber) -> Cell:
        for c in self.tiling.cells:
            if c.kind == "rectangle" and c.vertex_x == x and c.vertex_y2 == y2:
                return c
        raise StructureError(f"no rectangle with inner vertex at {format_quadratic(x)}")

    def cycle(self, cell: Cell, h: GroupElement) -> Cycle:
        if cell.is_triangle:
            pairs = [p for p in self.pairings.values() if p.cell == cell and p.element == h]
            if not pairs:
                raise StructureError(f"{h!r} does not pair a side of {cell.name}")
            return Cycle(((cell, h), (pairs[0].target, inverse(h))), "triangle")
        ks = self.pairing_elements(cell)
        if h not in ks:
            raise StructureError(f"{h!r} does not pair a side of {cell.name}")
        v = (cell.vertex_x, cell.vertex_y2)
        entries = [(cell, h)]
        g = h
        prev = h
        for j in range(2, self.max_cycle + 2):
            cj = self.rectangle_by_vertex(*point_image(g, *v))
            k1, k2 = self.pairing_elements(cj)
            back = inverse(prev)
            if k1 == back:
                hj = k2
            elif k2 == back:
                hj = k1
            else:
                raise StructureError(f"cycle through {cj.name} does not continue")
            entries.append((cj, hj))
            g = compose(hj, g)
            prev = hj
            if g.is_identity() and j > 2:
                return Cycle(tuple(entries), "rectangle")
        raise StructureError("rectangle cycle does not terminate; pairing is broken")

    def classes(self) -> list[list[tuple[Cell, GroupElement]]]:
        """Equivalence classes of cycle generators, in order of first appearance."""
        parent: dict = {}

        def key(c, h):
            return (c.index, h)

        def find(x):
            while parent.setdefault(x, x) != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        def union(a, b):
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[rb] = ra

        members: dict = {}
        for c in self.tiling.cells:
            ks = self.pairing_elements(c)
            for h in ks:
                cyc = self.cycle(c, h)
                for cj, hj in cyc.entries:
                    members[key(cj, hj)] = (cj, hj)
                    union(key(c, h), key(cj, hj))
            for h in ks[1:]:
                union(key(c, ks[0]), key(c, h))
        groups: dict = {}
        for k in members:
            groups.setdefault(find(k), []).append(members[k])
        out = []
        for g in groups.values():
            g.sort(key=lambda e: (e[0].index, epsilon(e[0], e[1])))
            out.append(g)
        out.sort(key=lambda g: g[0][0].index)
        return out


@dataclass(frozen=True)
class ChoiceData:
    """Fundamental family, one generator per class, and shifts of triangle generators."""

    tiling: Tiling
    generators: tuple[tuple[Cell, GroupElement], ...]
    shifts: dict = field(default_factory=dict)  # generator index -> m

    @property
    def group(self):
        return self.tiling.group

    def shift(self, i: int) -> int:
        return self.shifts.get(i, 0)


def default_choices(comb: Combinatorics, overrides: Sequence[tuple[Cell, GroupElement]] = (), shifts: dict | None = None) -> ChoiceData:
    """Leftmost generator per class (ties: smaller epsilon), with overrides.

    ``shifts`` maps (cell, element) of a triangle generator to its ``m``.
    """
    classes = comb.classes()
    chosen = []
    for cls in classes:
        pick = cls[0]
        for oc, oh in overrides:
            if any(oc == c and oh == h for c, h in cls):
                pick = (oc, oh)
        chosen.append(pick)
    for oc, oh in overrides:
        if not any(oc == c and oh == h for c, h in chosen):
            raise StructureError(f"({oc.name}, {oh!r}) is not a cycle generator")
    chosen.sort(key=lambda e: (e[0].index, epsilon(*e)))
    m = {}
    for (sc, sh), val in (shifts or {}).items():
        for i, (c, h) in enumerate(chosen):
            if c == sc and h == sh:
                if not c.is_triangle:
                    raise StructureError("shifts apply to triangle generators only")
                m[i] = int(val)
                break
        else:
            raise StructureError(f"shift given for ({sc.name}, {sh!r}), which is not a chosen generator")
    return ChoiceData(comb.tiling, tuple(chosen), m)


def parse_cell_element(tiling: Tiling, text: str) -> tuple[Cell, GroupElement]:
    """Parse ``"A2:g"`` (cell name, colon, word in the generators)."""
    name, _, word = text.partition(":")
    if not word:
        raise ValueError(f"expected CELL:WORD, got {text!r}")
    try:
        cell = tiling.cell(name.strip())
    except (IndexError, ValueError) as exc:
        raise ValueError(f"unknown cell {name!r}") from exc
    return cell, tiling.group.parse_word(word)


def resolve_choices(comb: Combinatorics, generators: Sequence[str] = (), shifts: dict | None = None) -> ChoiceData:
    """Choices from textual overrides such as ``["A2:g"]`` and ``{"A1:g": 1}``."""
    overrides = [parse_cell_element(comb.tiling, t) for t in generators]
    sh = {parse_cell_element(comb.tiling, k): int(v) for k, v in (shifts or {}).items()}
    return default_choices(comb, overrides, sh)


@dataclass(frozen=True)
class SymbolComponent:
    """One oriented family of vertical geodesics based at ``r``."""

    index: int  # position in Sigma, 1-based
    generator: int  # index into ChoiceData.generators
    j: int
    r: QuadraticNumber
    eps: int
    kind: str  # "rectangle" | "triangle"
    in_sigma_prime: bool
    b: GroupElement | None  # b.r = oo for symbols based at a summit line

    @property
    def label(self) -> str:
        return f"f{self.index}"

    def interval(self) -> tuple:
        return (self.r, INF) if self.eps > 0 else (INF, self.r)

    def interval_str(self) -> str:
        r = format_quadratic(self.r)
        return f"({r}, oo)" if self.eps > 0 else f"(-oo, {r})"

    def contains(self, x) -> bool:
        return (x > self.r) if self.eps > 0 else (x < self.r)


@dataclass
class SymbolSystem:
    """Everything derived from a choice: cycles, symbols, tuples, triples."""

    choices: ChoiceData
    comb: Combinatorics
    cycles: list[Cycle]
    symbols: list[SymbolComponent]
    tuples: dict = field(default_factory=dict)  # alpha index -> (beta index, g)

    @property
    def tiling(self) -> Tiling:
        return self.choices.tiling

    @property
    def group(self):
        return self.choices.tiling.group

    @property
    def lam(self) -> QuadraticNumber:
        return self.choices.tiling.lam

    def T(self, n: int) -> GroupElement:
        return power(self.group.T, n)

    def symbol(self, i: int) -> SymbolComponent:
        return self.symbols[i - 1]

    def triple(self, i: int):
        a = self.symbol(i)
        if not a.in_sigma_prime:
            return None
        beta, g = self.tuples[i]
        return beta, g, a.b

    def to_dict(self) -> dict:
        out = []
        for a in self.symbols:
            c, h = self.choices.generators[a.generator]
            beta, g = self.tuples[a.index]
            d = {
                "symbol": a.label,
                "generator": [c.name, h.to_strings()],
                "j": a.j,
                "base": format_quadratic(a.r),
                "eps": a.eps,
                "interval": a.interval_str(),
                "sigma_prime": a.in_sigma_prime,
                "tuple": {"beta": f"f{beta}", "g": g.to_strings(), "word": format_word(g.word)},
            }
            if a.b is not None:
                d["b"] = a.b.to_strings()
            out.append(d)
        return {"symbols": out}


def build_cycles(comb: Combinatorics, choices: ChoiceData) -> list[Cycle]:
    return [comb.cycle(c, h) for c, h in choices.generators]


def build_components(choices: ChoiceData, comb: Combinatorics | None = None) -> SymbolSystem:
    comb = comb or Combinatorics(choices.tiling)
    lam, T = choices.tiling.lam, choices.tiling.group.T
    cycles = build_cycles(comb, choices)
    symbols: list[SymbolComponent] = []
    for gi, ((cell, h), cyc) in enumerate(zip(choices.generators, cycles)):
        if cyc.kind == "rectangle":
            for j in range(1, cyc.cyl + 1):
                cj, hj = cyc.entries[j - 1]
                r = mobius_apply(inverse(hj), INF)
                symbols.append(SymbolComponent(len(symbols) + 1, gi, j, r, epsilon(cj, hj), "rectangle", True, hj))
        else:
            eps = epsilon(cell, h)
            partner = cyc.entries[1][0]
            m = choices.shift(gi)
            r3 = mobius_apply(inverse(h), INF) + lam * m
            b3 = compose(h, power(T, -m))
            symbols.append(SymbolComponent(len(symbols) + 1, gi, 1, cell.vertex_x, -eps, "triangle", False, None))
            symbols.append(SymbolComponent(len(symbols) + 1, gi, 2, partner.vertex_x, eps, "triangle", False, None))
            symbols.append(SymbolComponent(len(symbols) + 1, gi, 3, r3, eps, "triangle", True, b3))
    system = SymbolSystem(choices, comb, cycles, symbols)
    system.tuples = {a.index: assign_tuple(system, a) for a in symbols}
    return system


def _integer_quotient(x: QuadraticNumber, lam: QuadraticNumber) -> int | None:
    q = x / lam
    if q.is_rational() and q.a.denominator == 1:
        return int(q.a)
    return None


def assign_tuple(system: SymbolSystem, alpha: SymbolComponent) -> tuple[int, GroupElement]:
    """The unique ``(beta, g)`` with ``g`` carrying ``C'_beta`` onto the
    opposite orientation at ``r_alpha``.

    Either ``g = T^n`` with ``eps_beta = -eps_alpha`` and
    ``r_beta + n*lam = r_alpha``, or ``g = T^n b_beta`` with
    ``eps_beta = eps_alpha`` and ``T^n b_beta.oo = r_alpha``.
    """
    lam = system.lam
    hits = []
    for beta in system.symbols:
        if beta.eps == -alpha.eps:
            n = _integer_quotient(alpha.r - beta.r, lam)
            if n is not None:
                hits.append((beta.index, system.T(n)))
        if beta.in_sigma_prime and beta.eps == alpha.eps:
            n = _integer_quotient(alpha.r - mobius_apply(beta.b, INF), lam)
            if n is not None:
                hits.append((beta.index, compose(system.T(n), beta.b)))
    if len(hits) != 1:
        raise StructureError(f"{alpha.label}: expected exactly one tuple, found {len(hits)}")
    return hits[0]


@dataclass(frozen=True)
class Branch:
    """``r -> g^-1.r`` maps ``interval`` (inside ``I_source``) onto ``I_target``."""

    source: int
    interval: tuple
    element: GroupElement
    target: int


@dataclass
class BranchSystem:
    branches: list[Branch]

    def for_source(self, i: int) -> list[Branch]:
        return [b for b in self.branches if b.source == i]


def image_interval(g: GroupElement, interval: tuple) -> tuple:
    """Image of the oriented arc ``(start, end)`` of the projective line."""
    return (mobius_apply(g, interval[0]), mobius_apply(g, interval[1]))


def arc_position(sym: SymbolComponent, x):
    """Position of ``x`` along the closure of ``I_sym`` as a sortable pair,
    or None when ``x`` lies outside."""
    if x is INF:
        return (2, 0) if sym.eps > 0 else (0, 0)
    if (sym.eps > 0 and x >= sym.r) or (sym.eps < 0 and x <= sym.r):
        return (1, _Exact(x))
    return None


class _Exact:
    __slots__ = ("x",)

    def __init__(self, x):
        self.x = x

    def __lt__(self, other):
        return self.x < other.x

    def __eq__(self, other):
        return self.x == other.x

    def __le__(self, other):
        return self.x <= other.x


def arc_within(sym: SymbolComponent, arc: tuple) -> bool:
    """Whether the positively oriented arc lies in the closure of ``I_sym``."""
    p0, p1 = arc_position(sym, arc[0]), arc_position(sym, arc[1])
    return p0 is not None and p1 is not None and p0 <= p1


def build_branches(system: SymbolSystem, operator) -> BranchSystem:
    """Branches read off the operator rows: a term ``tau(gamma) f_beta`` in
    row ``alpha`` is the branch on ``gamma^-1.I_alpha`` inside ``I_beta``."""
    out = []
    for alpha in system.symbols:
        for beta_i, gamma in operator.row_terms(alpha.index):
            gi = inverse(gamma)
            arc = image_interval(gi, alpha.interval())
            if not arc_within(system.symbol(beta_i), arc):
                raise StructureError(f"branch {format_word(gamma.word)} into {alpha.label} leaves I_{beta_i}")
            out.append(Branch(beta_i, arc, gi, alpha.index))
    bs = BranchSystem(out)
    for sym in system.symbols:
        _check_partition(sym, bs.for_source(sym.index))
    return bs


def _check_partition(sym: SymbolComponent, branches: list[Branch]):
    """Branch intervals of one source must tile ``I_sym`` exactly."""
    arcs = sorted((arc_position(sym, b.interval[0]), arc_position(sym, b.interval[1])) for b in branches)
    cur = arc_position(sym, sym.interval()[0])
    for a0, a1 in arcs:
        if a0 != cur:
            raise StructureError(f"branches of f{sym.index} leave a gap or overlap")
        cur = a1
    if cur != arc_position(sym, sym.interval()[1]):
        raise StructureError(f"branches of f{sym.index} do not reach the end of the interval")


def dump_json(system: SymbolSystem, branches: BranchSystem | None = None) -> str:
    d = system.to_dict()
    d["cycles"] = [
        {"kind": c.kind, "entries": [[cell.name, h.to_strings()] for cell, h in c.entries]}
        | ({"cyl": c.cyl} if c.kind == "rectangle" else {})
        for c in system.cycles
    ]
    if branches is not None:
        d["branches"] = [
            {
                "source": f"f{b.source}",
                "interval": [str(b.interval[0]), str(b.interval[1])],
                "element": b.element.to_strings(),
                "target": f"f{b.target}",
            }
            for b in branches.branches
        ]
    return json.dumps(d, indent=2, sort_keys=True)
