"""Cocycles attached to period functions and the way back, together with
Green-form integration against invariant Laplace eigenfunctions.

Boundary functions are kept symbolic as finite sums ``sum c_k tau_s(h_k) F_k``
so that group actions compose exactly and evaluation happens only on
sample grids.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import mpmath
import numpy as np
from numpy.polynomial import chebyshev as C
from numpy.polynomial import polynomial as P
from scipy import integrate, special

from .algebra import (
    INF,
    GroupElement,
    QuadraticNumber,
    compose,
    format_word,
    inverse,
    mobius_apply,
    power,
)
from .symdyn import StructureError, SymbolSystem
from .transfer import (
    Chart,
    FunctionVector,
    GluedFunction,
    _float_matrix,
    _inverse_matrix,
    charts_for,
    chebyshev_nodes,
    psi_assemble,
)

_I2 = np.eye(2)


def sample_grid(n: int = 200) -> np.ndarray:
    """``tan`` of a midpoint grid on ``(-pi/2, pi/2)``: covers the real line."""
    return np.tan(np.pi * (np.arange(n) + 0.5) / n - np.pi / 2)


# ---------------------------------------------------------------------------
# boundary functions


def _nonzero(den: np.ndarray, floor: float = 1e-12) -> np.ndarray:
    # points sent to infinity: the slash factor and the decay at infinity cancel
    return np.where(np.abs(den) < floor, np.where(den < 0, -floor, floor), den)


class BoundaryFunction:
    """A function on the real line with the ``tau_s`` action available."""

    s: complex

    def twisted(self, h, x) -> np.ndarray:  # pragma: no cover - interface
        raise NotImplementedError

    def __call__(self, x) -> np.ndarray:
        return self.twisted(_I2, x)


class PlainFunction(BoundaryFunction):
    """A vectorized callable; ``tau_s(h)`` uses the defining formula."""

    def __init__(self, fn: Callable, s: complex):
        self.fn = fn
        self.s = complex(s)

    def twisted(self, h, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        m = _inverse_matrix(h)
        den = _nonzero(m[1, 0] * x + m[1, 1])
        y = (m[0, 0] * x + m[0, 1]) / den
        return np.exp(-self.s * np.log(den * den)) * self.fn(y)


class TauSum(BoundaryFunction):
    """``sum_k coef_k * tau_s(h_k) base_k`` with real matrices ``h_k``."""

    def __init__(self, s: complex, terms: Sequence[tuple[complex, np.ndarray, object]] = ()):
        self.s = complex(s)
        self.terms = list(terms)

    @classmethod
    def of(cls, base, s: complex) -> "TauSum":
        return cls(s, [(1.0, _I2, base)])

    def twisted(self, h, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.zeros(x.shape, dtype=complex)
        hm = _float_matrix(h)
        for coef, hk, base in self.terms:
            out += coef * base.twisted(hm @ hk, x)
        return out

    def act(self, g) -> "TauSum":
        """``tau_s(g)`` applied to this sum."""
        gm = _float_matrix(g)
        return TauSum(self.s, [(c, gm @ h, b) for c, h, b in self.terms])

    def scale(self, a: complex) -> "TauSum":
        return TauSum(self.s, [(a * c, h, b) for c, h, b in self.terms])

    def __add__(self, other: "TauSum") -> "TauSum":
        return TauSum(self.s, self.terms + other.terms)

    def __neg__(self) -> "TauSum":
        return self.scale(-1.0)

    def __sub__(self, other: "TauSum") -> "TauSum":
        return self + (-other)

    @property
    def is_zero(self) -> bool:
        return not self.terms


# ---------------------------------------------------------------------------
# cocycles


def translation_split(x: GroupElement, b: GroupElement, lam: QuadraticNumber, T: GroupElement):
    """``(k, m)`` with ``x = T^k b T^m``, or ``None``."""
    if b.c == 0 or not (x.c == b.c or x.c == -b.c):
        return None
    k = (mobius_apply(x, INF) - mobius_apply(b, INF)) / lam
    m = (mobius_apply(inverse(b), INF) - mobius_apply(inverse(x), INF)) / lam
    if not (k.is_rational() and m.is_rational() and k.a.denominator == 1 and m.a.denominator == 1):
        return None
    k, m = int(k.a), int(m.a)
    if compose(compose(power(T, k), b), power(T, m)) != x:
        return None
    return k, m


@dataclass
class Letter:
    name: str
    element: GroupElement
    value: TauSum
    symbol: int | None = None


class Cocycle:
    """Values on the generator set ``{b_alpha} u {T}`` with ``c_T = 0``,
    extended to words by ``c_{gh} = tau_s(h^-1) c_g + c_h``."""

    def __init__(self, system: SymbolSystem, s: complex, letters: list[Letter], period: FunctionVector | None = None):
        self.system = system
        self.s = complex(s)
        self.letters = letters
        self.period = period  # source period function, needed for the parabolic checks

    @property
    def group(self):
        return self.system.group

    def zero(self) -> TauSum:
        return TauSum(self.s)

    def _direct(self, x: GroupElement) -> TauSum | None:
        lam, T = self.system.lam, self.group.T
        for let in self.letters:
            km = translation_split(x, let.element, lam, T)
            if km is not None:
                return let.value.act(power(T, -km[1]))
        return None

    def lookup(self, x: GroupElement) -> TauSum:
        """``c_x`` for ``x`` a translation, ``T^k b T^m`` or the inverse of one."""
        if x.c == 0:
            if x.a != 1 or x.d != 1:
                raise StructureError(f"{x!r} fixes infinity but is not a translation")
            return self.zero()
        v = self._direct(x)
        if v is not None:
            return v
        v = self._direct(inverse(x))
        if v is not None:
            return -v.act(inverse(x))
        raise KeyError(f"{x!r} is neither a generator nor the inverse of one (up to translations)")

    def extend(self, elements: Sequence[GroupElement]) -> TauSum:
        """``c`` of the product ``x_1 x_2 ... x_n`` by a left fold."""
        acc = self.zero()
        for x in elements:
            acc = acc.act(inverse(x)) + self.lookup(x)
        return acc

    def extend_word(self, word) -> TauSum:
        """``c`` of a word in the group generators (text or parsed)."""
        from .algebra import parse_word

        w = parse_word(word) if isinstance(word, str) else word
        els = []
        for name, e in w:
            g = self.group.generators[name]
            els.extend([g if e > 0 else inverse(g)] * abs(e))
        return self.extend(els)


def cocycle_from_period(system: SymbolSystem, f: FunctionVector) -> Cocycle:
    """``c_T = 0`` and ``c_b = psi_alpha`` for every ``alpha`` in ``Sigma'``."""
    letters = []
    for a in system.symbols:
        if not a.in_sigma_prime:
            continue
        if a.b is None:
            raise StructureError(f"{a.label} lies in Sigma' but has no triple")
        letters.append(Letter(f"b{a.index}", a.b, TauSum.of(psi_assemble(system, a.index, f), f.s), a.index))
    return Cocycle(system, f.s, letters, f)


# ---------------------------------------------------------------------------
# cusps not equivalent to infinity


@dataclass
class CuspData:
    alpha: int
    v: QuadraticNumber
    p: GroupElement
    factors: list[GroupElement]  # product order: p = factors[0] * factors[1] * ...


def _cusp_cell(tiling, x: QuadraticNumber, side: int):
    cell, n = tiling.locate(x, side)
    if not cell.is_triangle or cell.vertex_x + tiling.lam * n != x:
        raise StructureError(f"no triangle has its cusp vertex at {x}")
    return cell, n


def cusp_walk(system: SymbolSystem, alpha: int, max_steps: int = 1000) -> CuspData:
    """Generator of the stabilizer of the cusp ``r_alpha`` for a triangle
    component: walk around the cusp through paired triangles."""
    a = system.symbol(alpha)
    if a.in_sigma_prime:
        raise StructureError(f"{a.label} is based at a cusp equivalent to infinity")
    tiling, comb, T = system.tiling, system.comb, system.group.T
    start, n0 = _cusp_cell(tiling, a.r, a.eps)
    factors = [power(T, -n0)]
    cell = start
    for _ in range(max_steps):
        pair = comb.pairings[(cell.index, 0)]
        factors.append(pair.element)
        nxt = pair.target
        side = 1 if nxt.left == nxt.vertex_x else -1
        cell, n = _cusp_cell(tiling, nxt.vertex_x, -side)
        factors.append(power(T, -n))
        if cell == start:
            break
    else:
        raise StructureError("cusp walk does not close")
    factors.append(power(T, n0))
    prod = list(reversed(factors))
    p = prod[0]
    for g in prod[1:]:
        p = compose(p, g)
    if mobius_apply(p, a.r) != a.r or (p.trace() != 2 and p.trace() != -2) or p.is_identity():
        raise StructureError(f"cusp walk at {a.label} did not produce a parabolic fixing r")
    prod = [g for g in prod if not g.is_identity()]
    return CuspData(alpha, a.r, p, prod)


# ---------------------------------------------------------------------------
# relation checks


@dataclass
class RelationDefect:
    name: str
    kind: str
    defect: float

    def to_dict(self, tol: float) -> dict:
        return {"name": self.name, "kind": self.kind, "defect": self.defect, "tol": tol, "pass": self.defect <= tol}


@dataclass
class RelationReport:
    defects: list[RelationDefect]
    scale: float
    tol: float
    samples: int

    @property
    def max_defect(self) -> float:
        return max((d.defect for d in self.defects), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_defect <= self.tol

    def by_kind(self, kind: str) -> list[RelationDefect]:
        return [d for d in self.defects if d.kind == kind]

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "tol": self.tol,
            "scale": self.scale,
            "samples": self.samples,
            "relations": [d.to_dict(self.tol) for d in self.defects],
        }


def _order_two_words(c: Cocycle) -> list[tuple[str, list[GroupElement]]]:
    system = c.system
    lam, T = system.lam, system.group.T
    seen, out = set(), []
    for p in system.comb.pairings.values():
        h = p.element
        if h.c == 0:
            continue
        m = -(h.a + h.d) / (lam * h.c)
        if not (m.is_rational() and m.a.denominator == 1):
            continue
        x = compose(power(T, int(m.a)), h)
        if x in seen or inverse(x) in seen:
            continue
        seen.add(x)
        out.append((f"(T^{int(m.a)} {format_word(h.word)})^2", [power(T, int(m.a)), h, power(T, int(m.a)), h]))
    return out


def relation_values(c: Cocycle) -> list[tuple[str, str, TauSum]]:
    """Every relation the cocycle must satisfy, as boundary functions that vanish."""
    system, T = c.system, c.group.T
    out: list[tuple[str, str, TauSum]] = [("T^3", "translation", c.extend([T, T, T]))]
    lam = system.lam
    for i, li in enumerate(c.letters):
        for lj in c.letters[i + 1 :]:
            km = translation_split(li.element, lj.element, lam, T)
            if km is not None:
                out.append((f"{li.name} ~ {lj.name}", "coset", li.value - lj.value.act(power(T, -km[1]))))
    for li in c.letters:
        inv = inverse(li.element)
        for lj in c.letters:
            km = translation_split(inv, lj.element, lam, T)
            if km is not None:
                out.append((f"{li.name} {lj.name}^-1", "inverse", li.value.act(li.element) + lj.value.act(power(T, -km[1]))))
    for k, cyc in enumerate(system.cycles):
        if cyc.kind != "rectangle":
            continue
        hs = [cyc.h(j) for j in range(cyc.length, 0, -1)]
        out.append((f"cycle {k + 1}", "cycle", c.extend(hs)))
    for name, word in _order_two_words(c):
        out.append((name, "order2", c.extend(word)))
    for w in system.group.relations:
        try:
            val = c.extend_word(w)
        except KeyError:
            continue
        out.append((format_word(w), "presentation", val))
    for a in system.symbols:
        if a.in_sigma_prime or c.period is None:
            continue
        cd = cusp_walk(system, a.index)
        phi = -TauSum.of(psi_assemble(system, a.index, c.period), c.s)
        val = phi.act(inverse(cd.p)) - phi - c.extend(cd.factors)
        out.append((f"parabolic at f{a.index}", "parabolic", val))
    return out


def verify_relations(c: Cocycle, tol: float = 1e-6, samples: int = 200) -> RelationReport:
    """Sup-norm defects of all relations on a grid covering the real line,
    relative to the largest generator value on the same grid."""
    x = sample_grid(samples)
    scale = max((float(np.max(np.abs(l.value(x)))) for l in c.letters), default=0.0)
    defects = []
    for name, kind, val in relation_values(c):
        raw = float(np.max(np.abs(val(x)))) if not val.is_zero else 0.0
        defects.append(RelationDefect(name, kind, raw / scale if scale > 0 else raw))
    return RelationReport(defects, scale, tol, samples)


# ---------------------------------------------------------------------------
# parabolic coboundaries


class ParabolicSolution(BoundaryFunction):
    """The decaying solution ``psi`` of ``c = tau_s(p^-1) psi - psi``.

    With ``q = [[0, 1], [-1, v]]`` the equation becomes
    ``psi~(y + mu) - psi~(y) = c~(y)`` for ``psi~ = tau_s(q) psi``; it is
    summed directly up to ``|y| = 2/delta`` and the remainder is a sum of
    Hurwitz zeta values built from the Taylor coefficients of ``c`` at ``v``.
    """

    def __init__(self, c: BoundaryFunction, p: GroupElement, s: complex, delta: float = 0.05, degree: int = 16, taylor_order: int = 10):
        if p.c == 0:
            raise ValueError("the parabolic element must not fix infinity")
        tr = p.trace()
        if not (tr == 2 or tr == -2) or p.is_identity():
            raise ValueError("element is not parabolic")
        self.c, self.p, self.s = c, p, complex(s)
        pm = p.to_numpy()
        self.v = (pm[0, 0] - pm[1, 1]) / (2 * pm[1, 0])
        q = np.array([[0.0, 1.0], [-1.0, self.v]])
        conj = q @ pm @ np.linalg.inv(q)
        self.mu = float(conj[0, 1] / conj[0, 0])
        self.delta = delta
        u = delta * C.chebpts1(degree + 1)
        cheb = C.Chebyshev.fit(u, c(self.v + u), degree, domain=[-delta, delta])
        self.taylor = cheb.convert(kind=P.Polynomial, domain=[-1, 1], window=[-1, 1]).coef[: taylor_order + 1]
        # psi(v) = lim Y^{2s} psi~(Y); only the linear Taylor term survives since c(v) = 0
        self.cusp_value = complex(self.taylor[1]) / (2 * self.s * self.mu) if len(self.taylor) > 1 else 0j
        # c~ near Y = 0 (x = oo) from a fit on nodes that avoid 0
        nodes = delta * C.chebpts1(degree + 2)
        self._near_inf = C.Chebyshev.fit(nodes, self._c_tilde_raw(nodes), degree + 1, domain=[-delta, delta])

    def _c_tilde_raw(self, Y: np.ndarray) -> np.ndarray:
        return np.exp(-self.s * np.log(Y * Y)) * self.c(self.v - 1.0 / Y)

    def _c_tilde(self, Y: np.ndarray) -> np.ndarray:
        Y = np.asarray(Y, dtype=float)
        small = np.abs(Y) < 1e-6
        out = np.empty(Y.shape, dtype=complex)
        if np.any(small):
            out[small] = self._near_inf(Y[small])
        if np.any(~small):
            out[~small] = self._c_tilde_raw(Y[~small])
        return out

    def _tail(self, a: float, sign: float) -> complex:
        # sum_{n >= 0} c~(sign*mu*(n + a)) through the Taylor expansion of c at v
        s2 = mpmath.mpc(2 * self.s)
        m = sign * self.mu
        total = mpmath.mpc(0)
        for k, ak in enumerate(self.taylor):
            if ak == 0:
                continue
            total += complex(ak) * (-1) ** k * m ** (-k) * abs(m) ** (-s2) * mpmath.zeta(s2 + k, a)
        return complex(total)

    def tilde(self, y) -> np.ndarray:
        y = np.atleast_1d(np.asarray(y, dtype=float))
        R, mu = 2.0 / self.delta, self.mu
        out = np.empty(y.shape, dtype=complex)
        for i, yi in enumerate(y):
            forward = np.sign(yi) == np.sign(mu) or abs(yi) <= R
            sign = 1.0 if forward else -1.0
            # forward: psi~(y) = -sum_{n>=0} c~(y + n mu); backward: sum_{n>=1} c~(y - n mu)
            n0 = 0 if forward else 1
            n_end = n0
            while True:
                Y = yi + sign * n_end * mu
                if abs(Y) > R and np.sign(Y) == np.sign(sign * mu):
                    break
                n_end += 1
            Ys = yi + sign * mu * np.arange(n0, n_end)
            direct = complex(np.sum(self._c_tilde(Ys))) if len(Ys) else 0.0
            total = direct + self._tail(n_end + sign * yi / mu, sign)
            out[i] = -total if forward else total
        return out

    def twisted(self, h, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        m = _inverse_matrix(h)
        den = _nonzero(m[1, 0] * x + m[1, 1])
        y = (m[0, 0] * x + m[0, 1]) / den
        w = self.v - y
        at_cusp = np.abs(w) < 1e-9
        vals = np.full(x.shape, self.cusp_value, dtype=complex)
        if np.any(~at_cusp):
            ww = w[~at_cusp]
            vals[~at_cusp] = np.exp(-self.s * np.log(ww * ww)) * self.tilde(1.0 / ww)
        return np.exp(-self.s * np.log(den * den)) * vals

    def identity_residual(self, x) -> float:
        """``sup |tau_s(p^-1) psi - psi - c|`` on ``x``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return float(np.max(np.abs(self.twisted(_inverse_matrix(self.p), x) - self(x) - self.c(x))))


def solve_parabolic(c: BoundaryFunction, p: GroupElement, s: complex | None = None, **kw) -> ParabolicSolution:
    s = c.s if s is None else s
    return ParabolicSolution(c, p, s, **kw)


def period_from_cocycle(c: Cocycle, N: int = 32, kappa: float | None = None, **parabolic_kw) -> FunctionVector:
    """``f_alpha = eps c_b`` on ``I_alpha`` for ``alpha`` in ``Sigma'``, and
    ``f_alpha = -eps psi`` with ``c_p = tau_s(p^-1) psi - psi`` otherwise."""
    system = c.system
    charts = charts_for(system, kappa)
    nodes = chebyshev_nodes(N)
    values = []
    for a in system.symbols:
        ch = charts[a.index - 1]
        x = ch.x(nodes)
        if a.in_sigma_prime:
            fx = a.eps * c.lookup(a.b)(x)
        else:
            cd = cusp_walk(system, a.index)
            cp = c.extend(cd.factors)
            if cp.is_zero:
                fx = np.zeros(N, dtype=complex)
            else:
                fx = -a.eps * solve_parabolic(cp, cd.p, c.s, **parabolic_kw)(x)
        values.append(fx / ch.weight(nodes, c.s))
    return FunctionVector.from_values(charts, values, c.s)


# ---------------------------------------------------------------------------
# invariant eigenfunctions


class InvariantEigenfunction:
    """A Laplace eigenfunction on H with value and ``d/dz`` available."""

    s: complex

    def value_and_dz(self, z) -> tuple[np.ndarray, np.ndarray]:  # pragma: no cover - interface
        raise NotImplementedError

    def __call__(self, z) -> np.ndarray:
        return self.value_and_dz(z)[0]


def reduce_psl2z(z: complex, max_steps: int = 10_000) -> tuple[complex, np.ndarray]:
    """Point of the standard fundamental domain and ``gamma`` with ``gamma.z`` equal to it."""
    g = np.eye(2)
    w = complex(z)
    for _ in range(max_steps):
        n = math.floor(w.real + 0.5)
        if n:
            w -= n
            g = np.array([[1.0, -n], [0.0, 1.0]]) @ g
        if abs(w) < 1 - 1e-15:
            w = -1 / w
            g = np.array([[0.0, -1.0], [1.0, 0.0]]) @ g
        else:
            return w, g
    raise RuntimeError("reduction did not terminate")


class FourierEigenfunction(InvariantEigenfunction):
    """``a y^s + b y^(1-s) + sum_n c_n sqrt(y) K_(s-1/2)(2 pi |n| y / lam) e(n x / lam)``,
    optionally evaluated after reduction to a fundamental domain."""

    def __init__(self, s: complex, a: complex, b: complex, coeffs: dict[int, complex], lam: float = 1.0, reducer=None):
        self.s = complex(s)
        self.a, self.b = complex(a), complex(b)
        self.coeffs = dict(coeffs)
        self.lam = lam
        self.reducer = reducer
        self.nu = self.s - 0.5
        self.tail_bound: float | None = None  # truncation bound, when known

    def _bessel(self, x: float, order: complex):
        if order.imag == 0:
            return float(special.kv(order.real, x))
        return complex(mpmath.besselk(order, x))

    def _raw(self, w: complex) -> tuple[complex, complex, complex]:
        x, y = w.real, w.imag
        s = self.s
        u = self.a * y**s + self.b * y ** (1 - s)
        ux = 0j
        uy = self.a * s * y ** (s - 1) + self.b * (1 - s) * y ** (-s)
        sy = math.sqrt(y)
        for n, cn in self.coeffs.items():
            k = 2 * math.pi * abs(n) / self.lam
            arg = k * y
            K = self._bessel(arg, self.nu)
            dK = -0.5 * (self._bessel(arg, self.nu - 1) + self._bessel(arg, self.nu + 1))
            e = np.exp(2j * math.pi * n * x / self.lam)
            u += cn * sy * K * e
            ux += cn * sy * K * e * (2j * math.pi * n / self.lam)
            uy += cn * e * (K / (2 * sy) + sy * k * dK)
        return u, ux, uy

    def value_and_dz(self, z):
        zs = np.atleast_1d(np.asarray(z, dtype=complex))
        vals = np.empty(zs.shape, dtype=complex)
        dz = np.empty(zs.shape, dtype=complex)
        for i, zi in enumerate(zs):
            if zi.imag <= 0:
                raise ValueError("point is not in the upper half plane")
            g = np.eye(2)
            w = zi
            if self.reducer is not None:
                w, g = self.reducer(zi)
            u, ux, uy = self._raw(w)
            # u(z) = U(g z): d/dz picks up (g z)' = (c z + d)^-2
            vals[i] = u
            dz[i] = 0.5 * (ux - 1j * uy) / (g[1, 0] * zi + g[1, 1]) ** 2
        return vals, dz


def _divisor_power_sum(n: int, e: complex) -> complex:
    return sum(d**e for d in range(1, n + 1) if n % d == 0)


def eisenstein_fourier(s: complex, terms: int = 30) -> FourierEigenfunction:
    """Non-holomorphic Eisenstein series of PSL2(Z) from its Fourier expansion;
    valid for any ``s`` away from the poles, e.g. inside the critical strip."""
    s = complex(s)
    with mpmath.workdps(30):
        ms = mpmath.mpc(s)
        xi = mpmath.pi ** (-ms) * mpmath.gamma(ms) * mpmath.zeta(2 * ms)
        scatter = mpmath.sqrt(mpmath.pi) * mpmath.gamma(ms - 0.5) * mpmath.zeta(2 * ms - 1) / (mpmath.gamma(ms) * mpmath.zeta(2 * ms))
        pref = complex(2 / xi)
    coeffs = {}
    for n in range(1, terms + 1):
        cn = pref * n ** (s - 0.5) * _divisor_power_sum(n, 1 - 2 * s)
        coeffs[n] = cn
        coeffs[-n] = cn
    u = FourierEigenfunction(s, 1.0, complex(scatter), coeffs, 1.0, reduce_psl2z)
    # reduced points have y >= sqrt(3)/2; the K-Bessel factor decays faster than geometrically
    y0 = math.sqrt(3) / 2
    u.tail_bound = sum(
        2 * abs(pref * n ** (s - 0.5) * _divisor_power_sum(n, 1 - 2 * s)) * math.sqrt(y0) * abs(u._bessel(2 * math.pi * n * y0, u.nu))
        for n in range(terms + 1, terms + 21)
    )
    return u


class CosetEisenstein(InvariantEigenfunction):
    """``sum Im(gamma z)^s`` over bottom rows ``(c, d)`` up to sign of ``Gamma_oo \\ Gamma``."""

    def __init__(self, s: complex, rows: np.ndarray, truncation: float, bound: float):
        self.s = complex(s)
        self.rows = rows
        self.truncation = truncation
        self.bound = bound

    def value_and_dz(self, z):
        zs = np.atleast_1d(np.asarray(z, dtype=complex))
        vals = np.empty(zs.shape, dtype=complex)
        dz = np.empty(zs.shape, dtype=complex)
        c, d = self.rows[:, 0], self.rows[:, 1]
        for i, zi in enumerate(zs):
            den = c * zi + d
            F = zi.imag / np.abs(den) ** 2
            Fs = np.exp(self.s * np.log(F))
            vals[i] = np.sum(Fs)
            dz[i] = np.sum(self.s * Fs * (1 / (zi - np.conj(zi)) - c / den))
        return vals, dz


def bottom_rows(group, bound: float, max_rows: int = 2_000_000) -> np.ndarray:
    """Bottom rows ``(c, d)`` (up to sign) with ``c^2 + d^2 <= bound`` reached
    from ``(0, 1)`` by right multiplication with generators inside the ball."""
    gens = []
    for g in group.generators.values():
        gens.append(g.to_numpy())
        gens.append(inverse(g).to_numpy())

    def key(v):
        if v[0] < -1e-12 or (abs(v[0]) <= 1e-12 and v[1] < 0):
            v = -v
        return (round(v[0], 9), round(v[1], 9)), v

    k0, v0 = key(np.array([0.0, 1.0]))
    seen = {k0: v0}
    frontier = [v0]
    while frontier:
        nxt = []
        for v in frontier:
            for g in gens:
                w = v @ g
                if w @ w > bound:
                    continue
                k, w = key(w)
                if k not in seen:
                    seen[k] = w
                    nxt.append(w)
        if len(seen) > max_rows:
            raise RuntimeError("coset enumeration exceeded its budget")
        frontier = nxt
    return np.array(list(seen.values()))


def eisenstein_oracle(group, s: complex, bound: float = 400.0, tol: float = 1e-6, max_bound: float = 1e6, z_probe: complex = 0.1 + 1.1j) -> CosetEisenstein:
    """Coset-sum Eisenstein series for ``Re s > 1``.

    The bound on ``c^2 + d^2`` is doubled until the truncation estimate at
    ``z_probe`` (the last increment scaled by the power law of the tail)
    falls below ``tol``.
    """
    s = complex(s)
    if s.real <= 1:
        raise ValueError("the coset sum converges only for Re s > 1")
    factor = 1.0 / (2 ** (s.real - 1) - 1)
    prev = None
    while True:
        rows = bottom_rows(group, bound)
        u = CosetEisenstein(s, rows, 0.0, bound)
        val = u(z_probe)[0]
        if prev is not None:
            est = abs(val - prev) * factor
            u.truncation = est
            if est <= tol:
                return u
            if bound * 2 > max_bound:
                raise RuntimeError(f"truncation estimate {est:.2e} above {tol:.1e} at bound {bound:g}")
        prev = val
        bound *= 2


# ---------------------------------------------------------------------------
# Green form


class GreenQuadratureError(RuntimeError):
    def __init__(self, message: str, diagnostics: dict):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass
class GreenPath:
    """Polygonal path; ``reparam`` maps ``[0, 1]`` onto itself monotonically
    (given with its derivative) and is applied on every segment."""

    points: list[complex]
    reparam: tuple[Callable, Callable] | None = None
    decay_asserted: bool = False

    def __post_init__(self):
        for p in self.points:
            if not np.isfinite(p) or p.imag <= 0:
                if not self.decay_asserted:
                    raise ValueError("cuspidal endpoints need a rapidly decaying eigenfunction")
                raise NotImplementedError("cuspidal endpoints are not integrated")


@dataclass
class GreenResult:
    value: complex
    error: float


def green_density(u: InvariantEigenfunction, s: complex, r: float, z: np.ndarray, dz: np.ndarray) -> np.ndarray:
    """``[u, R(r, .)^s]`` evaluated on tangent vectors ``dz`` at ``z``."""
    val, uz = u.value_and_dz(z)
    R = z.imag / ((r - z.real) ** 2 + z.imag**2)
    Rs = np.exp(s * np.log(R))
    dR = 0.5j / (r - np.conj(z)) ** 2
    return uz * Rs * dz + val * s * Rs / R * dR * np.conj(dz)


def green_integrate(u: InvariantEigenfunction, s: complex, r: float, path: GreenPath, epsabs: float = 1e-12, epsrel: float = 1e-11, limit: int = 400) -> GreenResult:
    s = complex(s)
    total, err = 0j, 0.0
    rp, drp = path.reparam if path.reparam else (lambda t: t, lambda t: np.ones_like(t))
    for a, b in zip(path.points, path.points[1:]):
        if a == b:
            continue

        def integrand(t, a=a, b=b):
            tt = np.atleast_1d(rp(t))
            z = a + (b - a) * tt
            dz = (b - a) * np.atleast_1d(drp(t))
            v = green_density(u, s, r, z, dz)[0]
            return np.array([v.real, v.imag])

        res, e, info = integrate.quad_vec(integrand, 0.0, 1.0, epsabs=epsabs, epsrel=epsrel, limit=limit, full_output=True)
        if not info.success:
            raise GreenQuadratureError("Green-form quadrature did not converge", {"segment": (a, b), "error": e, "intervals": info.intervals.shape[0]})
        total += complex(res[0], res[1])
        err += float(e)
    return GreenResult(total, err)
