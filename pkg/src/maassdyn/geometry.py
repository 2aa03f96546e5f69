"""Ford-domain geometry: isometric spheres, their upper envelope, tiling.

The envelope is computed exactly.  A semicircle with center ``x0`` and
squared radius ``R`` satisfies ``y**2 = -x**2 + 2*x0*x + (R - x0**2)``, so
the upper envelope of semicircles is the upper envelope of the lines
``2*x0*x + (R - x0**2)`` shifted by the common ``-x**2``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .algebra import (
    INF,
    Group,
    GroupElement,
    QuadraticNumber,
    compose,
    format_quadratic,
    inverse,
    power,
)


class GeometryError(RuntimeError):
    pass


class UnstableEnvelopeError(GeometryError):
    """The envelope changed between consecutive word bounds."""


class ConditionAError(GeometryError):
    def __init__(self, report: "ConditionAReport"):
        super().__init__("condition (A) violated: " + "; ".join(w.describe() for w in report.violations()))
        self.report = report


@dataclass(frozen=True)
class IsometricSphere:
    owner: GroupElement
    center: QuadraticNumber
    radius_sq: QuadraticNumber

    @property
    def radius(self) -> float:
        return float(self.radius_sq) ** 0.5

    @property
    def key(self) -> tuple:
        return (self.center, self.radius_sq)

    def translate(self, T: GroupElement, n: int) -> "IsometricSphere":
        """Sphere of ``owner * T^-n``, i.e. this sphere moved right by ``n`` periods."""
        owner = compose(self.owner, power(T, -n))
        return IsometricSphere(owner, self.center + T.b * n, self.radius_sq)

    def height_sq(self, x: QuadraticNumber) -> QuadraticNumber:
        dx = x - self.center
        return self.radius_sq - dx * dx

    def __repr__(self):
        return f"IsometricSphere(center={format_quadratic(self.center)}, radius^2={format_quadratic(self.radius_sq)})"


def isometric_sphere(g: GroupElement) -> IsometricSphere:
    if g.c == 0:
        raise GeometryError(f"element {g!r} fixes infinity; it has no isometric sphere")
    return IsometricSphere(g, -g.d / g.c, 1 / (g.c * g.c))


def _reduce_into_strip(g: GroupElement, T: GroupElement, lam: QuadraticNumber) -> GroupElement:
    center = -g.d / g.c
    n = (center / lam).floor()
    return compose(g, power(T, n)) if n else g


def enumerate_spheres(group: Group, word_bound: int) -> dict[tuple, tuple[int, IsometricSphere]]:
    """Isometric spheres reachable by words of length <= ``word_bound``.

    Letters are the non-translation generators and their inverses.  Each
    sphere is stored once per T-orbit, with center in ``[0, lambda)``,
    together with the word length at which it was first reached.
    Between letters the right translation exponent is chosen near the value
    that minimizes the new lower-left entry, which keeps the spheres that
    can reach the envelope.
    """
    T, lam = group.T, group.lam
    letters: list[GroupElement] = []
    for g in group.generators.values():
        if g.c == 0:
            continue
        for x in (g, inverse(g)):
            if x not in letters:
                letters.append(x)
    if not letters:
        raise GeometryError("no generator moves infinity; the group has no isometric spheres")

    found: dict[tuple, tuple[int, IsometricSphere]] = {}
    frontier: list[GroupElement] = [group.identity()]
    for level in range(1, word_bound + 1):
        nxt: list[GroupElement] = []
        for g in frontier:
            for X in letters:
                if g.c == 0 or X.c == 0:
                    shifts: Iterable[int] = (0,)
                else:
                    m0 = (-(g.c * X.a + g.d * X.c) / (lam * g.c * X.c)).floor()
                    shifts = (m0, m0 + 1)
                for m in shifts:
                    h = compose(compose(g, power(T, m)), X) if m else compose(g, X)
                    if h.c == 0:
                        continue
                    h = _reduce_into_strip(h, T, lam)
                    sph = isometric_sphere(h)
                    if sph.key not in found:
                        found[sph.key] = (level, sph)
                        nxt.append(h)
        frontier = nxt
        if not frontier:
            break
    if not found:
        raise GeometryError("no isometric sphere found")
    return found


@dataclass(frozen=True)
class Arc:
    """Maximal piece of the envelope on one sphere, between two vertices."""

    sphere: IsometricSphere
    left: QuadraticNumber
    right: QuadraticNumber

    @property
    def left_height_sq(self) -> QuadraticNumber:
        return self.sphere.height_sq(self.left)

    @property
    def right_height_sq(self) -> QuadraticNumber:
        return self.sphere.height_sq(self.right)


@dataclass
class ExteriorBoundary:
    """Envelope of all enumerated spheres over a window around one period."""

    group: Group
    lam: QuadraticNumber
    strip_base: QuadraticNumber
    arcs: list[Arc]
    word_bound: int
    n_spheres: int

    def period_arcs(self) -> list[Arc]:
        lo, hi = self.strip_base, self.strip_base + self.lam
        return [a for a in self.arcs if a.right > lo and a.left < hi]

    def vertices(self) -> list[tuple[QuadraticNumber, QuadraticNumber]]:
        """Vertices ``(x, y^2)`` with ``x`` in ``[r0, r0 + lambda)``."""
        lo, hi = self.strip_base, self.strip_base + self.lam
        out = []
        for a, b in zip(self.arcs, self.arcs[1:]):
            if lo <= a.right < hi:
                out.append((a.right, a.right_height_sq))
        return out

    def infinite_vertices(self) -> list[QuadraticNumber]:
        return [x for x, y2 in self.vertices() if y2 == 0]

    def inner_vertices(self) -> list[tuple[QuadraticNumber, QuadraticNumber]]:
        return [(x, y2) for x, y2 in self.vertices() if y2 != 0]

    def signature(self) -> tuple:
        return tuple((a.sphere.key, a.left, a.right) for a in self.period_arcs())

    def to_dict(self) -> dict:
        return {
            "lambda": format_quadratic(self.lam),
            "strip_base": format_quadratic(self.strip_base),
            "word_bound": self.word_bound,
            "spheres_enumerated": self.n_spheres,
            "arcs": [
                {
                    "owner": a.sphere.owner.to_strings(),
                    "center": format_quadratic(a.sphere.center),
                    "radius_sq": format_quadratic(a.sphere.radius_sq),
                    "left": format_quadratic(a.left),
                    "right": format_quadratic(a.right),
                }
                for a in self.period_arcs()
            ],
            "vertices": [
                {"x": format_quadratic(x), "y_sq": format_quadratic(y2), "kind": "infinite" if y2 == 0 else "inner"}
                for x, y2 in self.vertices()
            ],
        }


def _upper_hull(lines: list[tuple[QuadraticNumber, QuadraticNumber, IsometricSphere]]):
    """Lines ``m*x + q`` on the upper envelope with a nondegenerate piece."""
    lines = sorted(lines, key=lambda l: (float(l[0]), float(l[1])))
    dedup: list = []
    for ln in lines:
        if dedup and dedup[-1][0] == ln[0]:
            if ln[1] > dedup[-1][1]:
                dedup[-1] = ln
            continue
        dedup.append(ln)
    # float sort may misorder exact ties; restore exact order
    dedup.sort(key=_ExactKey)
    hull: list = []
    for ln in dedup:
        while len(hull) >= 2:
            (m1, q1, _), (m2, q2, _) = hull[-2], hull[-1]
            m3, q3 = ln[0], ln[1]
            x12 = (q1 - q2) / (m2 - m1)
            x13 = (q1 - q3) / (m3 - m1)
            if x13 <= x12:
                hull.pop()
            else:
                break
        hull.append(ln)
    return hull


class _ExactKey:
    __slots__ = ("m",)

    def __init__(self, ln):
        self.m = ln[0]

    def __lt__(self, other):
        return self.m < other.m


def _envelope(group: Group, spheres: list[IsometricSphere], strip_base: QuadraticNumber, word_bound: int) -> ExteriorBoundary:
    T, lam = group.T, group.lam
    lo_c, hi_c = strip_base - 2 * lam, strip_base + 3 * lam
    lines = []
    for sph in spheres:
        n_lo = ((lo_c - sph.center) / lam).floor()
        n_hi = ((hi_c - sph.center) / lam).floor() + 1
        for n in range(n_lo, n_hi + 1):
            c = sph.center + lam * n
            if lo_c <= c <= hi_c:
                lines.append((2 * c, sph.radius_sq - c * c, (sph, n)))
    hull = [(m, q, sph.translate(T, n)) for m, q, (sph, n) in _upper_hull(lines)]
    win_lo, win_hi = strip_base - lam / 2, strip_base + lam + lam / 2
    arcs: list[Arc] = []
    for i, (m, q, sph) in enumerate(hull):
        left = None if i == 0 else (hull[i - 1][1] - q) / (m - hull[i - 1][0])
        right = None if i == len(hull) - 1 else (q - hull[i + 1][1]) / (hull[i + 1][0] - m)
        if left is None or right is None or right <= win_lo or left >= win_hi:
            continue
        arcs.append(Arc(sph, left, right))
    if not arcs:
        raise GeometryError("envelope is empty on the strip")
    for a, b in zip(arcs, arcs[1:]):
        if a.right_height_sq.sign() < 0:
            raise UnstableEnvelopeError(
                f"gap in the envelope near x = {float(a.right):.6g}; increase word_bound"
            )
    return ExteriorBoundary(group, lam, strip_base, arcs, word_bound, len(spheres))


def compute_exterior(
    group: Group,
    strip_base: QuadraticNumber | int | None = None,
    word_bound: int = 6,
    check_stability: bool = True,
) -> ExteriorBoundary:
    """Envelope of isometric spheres on ``[r0, r0 + lambda)``.

    With ``strip_base=None`` the strip starts at the smallest center in
    ``[0, lambda)`` of a relevant sphere.  Stability is certified by
    requiring the same envelope at ``word_bound - 1`` and ``word_bound``.
    """
    if word_bound < 1:
        raise ValueError("word_bound must be positive")
    found = enumerate_spheres(group, word_bound)
    spheres = [sph for _, sph in found.values()]
    base0 = QuadraticNumber(0, 0, group.field_d)
    eb = _envelope(group, spheres, base0, word_bound)
    if strip_base is None:
        lam = group.lam
        centers = []
        for a in eb.period_arcs():
            c = a.sphere.center
            c = c - lam * (c / lam).floor()
            centers.append(c)
        r0 = min(centers, key=_ExactCmp)
    else:
        r0 = strip_base if isinstance(strip_base, QuadraticNumber) else QuadraticNumber(strip_base, 0, group.field_d)
    eb = _envelope(group, spheres, r0, word_bound)
    if check_stability and word_bound > 1:
        older = [sph for lvl, sph in found.values() if lvl < word_bound]
        prev = _envelope(group, older, r0, word_bound - 1)
        if prev.signature() != eb.signature():
            raise UnstableEnvelopeError(
                f"envelope changed between word bounds {word_bound - 1} and {word_bound}; increase word_bound"
            )
    return eb


class _ExactCmp:
    __slots__ = ("x",)

    def __init__(self, x):
        self.x = x

    def __lt__(self, other):
        return self.x < other.x


def relevant_spheres(eb: ExteriorBoundary) -> list[IsometricSphere]:
    """Spheres contributing an arc of positive length, one per T-orbit."""
    lam = eb.lam
    out, seen = [], set()
    for a in eb.period_arcs():
        c = a.sphere.center
        n = ((c - eb.strip_base) / lam).floor()
        sph = a.sphere.translate(eb.group.T, -n) if n else a.sphere
        if sph.key not in seen:
            seen.add(sph.key)
            out.append(sph)
    return out


@dataclass(frozen=True)
class SummitWitness:
    center: QuadraticNumber
    radius_sq: QuadraticNumber
    arc_left: QuadraticNumber
    arc_right: QuadraticNumber
    status: str  # "interior" | "vertex" | "hidden"

    def describe(self) -> str:
        return (
            f"summit at {format_quadratic(self.center)} is {self.status} "
            f"(arc [{float(self.arc_left):.6g}, {float(self.arc_right):.6g}])"
        )


@dataclass
class ConditionAReport:
    holds: bool
    witnesses: list[SummitWitness]

    def violations(self) -> list[SummitWitness]:
        return [w for w in self.witnesses if w.status != "interior"]

    def to_dict(self) -> dict:
        return {
            "holds": self.holds,
            "witnesses": [
                {
                    "center": format_quadratic(w.center),
                    "radius_sq": format_quadratic(w.radius_sq),
                    "arc": [format_quadratic(w.arc_left), format_quadratic(w.arc_right)],
                    "status": w.status,
                }
                for w in self.witnesses
            ],
        }


def condition_A_report(eb: ExteriorBoundary) -> ConditionAReport:
    witnesses = []
    seen = set()
    for a in eb.arcs:
        c = a.sphere.center
        n = ((c - eb.strip_base) / eb.lam).floor()
        key = (c - eb.lam * n, a.sphere.radius_sq)
        if key in seen or not (eb.strip_base - eb.lam / 4 <= c <= eb.strip_base + eb.lam + eb.lam / 4):
            continue
        seen.add(key)
        if a.left < c < a.right:
            status = "interior"
        elif c == a.left or c == a.right:
            status = "vertex"
        else:
            status = "hidden"
        witnesses.append(SummitWitness(c, a.sphere.radius_sq, a.left, a.right, status))
    return ConditionAReport(all(w.status == "interior" for w in witnesses), witnesses)


def check_condition_A(group: Group, word_bound: int = 6, strip_base=None) -> ConditionAReport:
    return condition_A_report(compute_exterior(group, strip_base, word_bound))


@dataclass(frozen=True)
class NonVerticalSide:
    """Half of an isometric sphere between its summit and a vertex."""

    sphere: IsometricSphere
    summit_x: QuadraticNumber
    vertex_x: QuadraticNumber
    vertex_y2: QuadraticNumber

    @property
    def x_range(self) -> tuple[QuadraticNumber, QuadraticNumber]:
        if self.summit_x < self.vertex_x:
            return (self.summit_x, self.vertex_x)
        return (self.vertex_x, self.summit_x)


@dataclass(frozen=True)
class Cell:
    """Triangle (vertices oo, v, s with v on the real line) or rectangle
    (vertices oo, s1, v, s2 with v inner)."""

    index: int
    kind: str
    left: QuadraticNumber
    right: QuadraticNumber
    vertex_x: QuadraticNumber
    vertex_y2: QuadraticNumber
    sides: tuple[NonVerticalSide, ...]

    @property
    def name(self) -> str:
        return f"A{self.index}"

    @property
    def is_triangle(self) -> bool:
        return self.kind == "triangle"

    def long_side_x(self) -> QuadraticNumber:
        """Vertical side through the infinite vertex (a complete geodesic)."""
        if not self.is_triangle:
            raise GeometryError("rectangles have no long side")
        return self.vertex_x

    def short_side_x(self) -> QuadraticNumber:
        if not self.is_triangle:
            raise GeometryError("rectangles have no short side")
        return self.right if self.vertex_x == self.left else self.left

    def vertices(self) -> list:
        if self.is_triangle:
            s = self.sides[0]
            return [INF, (self.vertex_x, self.vertex_y2), (s.summit_x, s.sphere.radius_sq)]
        s1, s2 = self.sides
        return [INF, (s1.summit_x, s1.sphere.radius_sq), (self.vertex_x, self.vertex_y2), (s2.summit_x, s2.sphere.radius_sq)]

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "left": format_quadratic(self.left),
            "right": format_quadratic(self.right),
            "vertex": {"x": format_quadratic(self.vertex_x), "y_sq": format_quadratic(self.vertex_y2)},
            "sides": [
                {
                    "owner": s.sphere.owner.to_strings(),
                    "from": format_quadratic(s.summit_x),
                    "to": format_quadratic(s.vertex_x),
                }
                for s in self.sides
            ],
        }


@dataclass
class Tiling:
    exterior: ExteriorBoundary
    cells: list[Cell]
    condition_a: ConditionAReport = field(repr=False)

    @property
    def lam(self) -> QuadraticNumber:
        return self.exterior.lam

    @property
    def group(self) -> Group:
        return self.exterior.group

    @property
    def strip_base(self) -> QuadraticNumber:
        return self.exterior.strip_base

    def cell(self, name_or_index) -> Cell:
        if isinstance(name_or_index, str):
            name_or_index = int(name_or_index.lstrip("Aa"))
        return self.cells[name_or_index - 1]

    def locate(self, x: QuadraticNumber, side: int) -> tuple[Cell, int]:
        """Cell ``T^n A`` having a vertical side on ``Re z = x`` and lying on
        the given side (+1 right, -1 left) of it."""
        for c in self.cells:
            edge = c.left if side > 0 else c.right
            q = (x - edge) / self.lam
            if q.is_rational() and q.a.denominator == 1:
                return c, int(q.a)
        raise GeometryError(f"no cell has a vertical side at {format_quadratic(x)}")

    def to_dict(self) -> dict:
        return {
            "exterior": self.exterior.to_dict(),
            "condition_A": self.condition_a.to_dict(),
            "cells": [c.to_dict() for c in self.cells],
        }


def tile(eb: ExteriorBoundary) -> Tiling:
    """Split the Ford domain at summits and inner vertices into cells.

    Returns the family of cells whose left edge lies in ``[r0, r0 + lambda)``.
    """
    report = condition_A_report(eb)
    if not report.holds:
        raise ConditionAError(report)
    arcs = eb.arcs
    lo, hi = eb.strip_base, eb.strip_base + eb.lam
    raw = []
    for a, b in zip(arcs, arcs[1:]):
        v, y2 = a.right, a.right_height_sq
        sa, sb = a.sphere, b.sphere
        side_a = NonVerticalSide(sa, sa.center, v, y2)
        side_b = NonVerticalSide(sb, sb.center, v, y2)
        if y2.sign() > 0:
            raw.append(("rectangle", sa.center, sb.center, v, y2, (side_a, side_b)))
        else:
            raw.append(("triangle", sa.center, v, v, y2, (side_a,)))
            raw.append(("triangle", v, sb.center, v, y2, (side_b,)))
    chosen = sorted((r for r in raw if lo <= r[1] < hi), key=lambda r: float(r[1]))
    cells = [Cell(i + 1, *r) for i, r in enumerate(chosen)]
    total = sum((c.right - c.left for c in cells), QuadraticNumber(0, 0, eb.lam.d))
    if total != eb.lam:
        raise GeometryError("cells do not cover one period; envelope window too small")
    return Tiling(eb, cells, report)


def point_image(g: GroupElement, x: QuadraticNumber, y2: QuadraticNumber) -> tuple[QuadraticNumber, QuadraticNumber]:
    """Image of the point ``x + i*sqrt(y2)`` under ``g``, as ``(x', y'^2)``."""
    den = (g.c * x + g.d) ** 2 + g.c * g.c * y2
    re = ((g.a * x + g.b) * (g.c * x + g.d) + g.a * g.c * y2) / den
    return re, y2 / (den * den)


def to_svg(tiling: Tiling, width: int = 640, height: int = 360, periods: int = 1) -> str:
    """Ford domain and tiling as an SVG drawing in half-plane coordinates."""
    lam = float(tiling.lam)
    x0 = float(tiling.strip_base) - 0.1 * lam
    x1 = float(tiling.strip_base) + (periods + 0.1) * lam
    ymax = max(max(c.sides[0].sphere.radius for c in tiling.cells) * 2.2, 0.2 * lam)
    sx = width / (x1 - x0)
    sy = height / ymax

    def px(x, y):
        return f"{(x - x0) * sx:.3f},{height - y * sy:.3f}"

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<line x1="0" y1="{height}" x2="{width}" y2="{height}" stroke="black"/>',
    ]
    for p in range(periods):
        shift = p * lam
        for c in tiling.cells:
            for s in c.sides:
                cx, r = float(s.sphere.center) + shift, s.sphere.radius
                a, b = (float(t) + shift for t in s.x_range)
                pts = []
                for k in range(41):
                    x = a + (b - a) * k / 40
                    pts.append(px(x, max(r * r - (x - cx) ** 2, 0.0) ** 0.5))
                parts.append(f'<polyline fill="none" stroke="black" points="{" ".join(pts)}"/>')
            for xe in (float(c.left) + shift, float(c.right) + shift):
                parts.append(f'<line x1="{(xe - x0) * sx:.3f}" y1="0" x2="{(xe - x0) * sx:.3f}" y2="{height}" stroke="gray" stroke-dasharray="4 3"/>')
            xm = 0.5 * (float(c.left) + float(c.right)) + shift
            parts.append(f'<text x="{(xm - x0) * sx:.3f}" y="{height * 0.15:.3f}" font-size="12" text-anchor="middle">{c.name}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def dump_json(tiling: Tiling) -> str:
    return json.dumps(tiling.to_dict(), indent=2, sort_keys=True)
