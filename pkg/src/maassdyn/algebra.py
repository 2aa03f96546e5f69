"""Exact arithmetic in real quadratic fields and projective 2x2 matrices.

Geometry and combinatorics run on :class:`QuadraticNumber` entries so that
every predicate (equality, ordering, membership) is decided exactly.  The
numeric side (``to_numpy``, ``slash_factor``) is used for the
slash action and the spectral code.
"""

from __future__ import annotations

import ast
import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence, Union

import numpy as np

Rational = Union[int, Fraction]


def _squarefree_part(n: int) -> tuple[int, int]:
    """Return (k, m) with n = k**2 * m and m square-free."""
    if n <= 0:
        raise ValueError(f"expected a positive integer, got {n}")
    k, m, p = 1, n, 2
    while p * p <= m:
        while m % (p * p) == 0:
            m //= p * p
            k *= p
        p += 1
    return k, m


class QuadraticNumber:
    """The number ``a + b*sqrt(d)`` with rational ``a, b``.

    ``d = 1`` is the rational field; there ``b`` is folded into ``a``.
    """

    __slots__ = ("a", "b", "d")

    def __init__(self, a: Rational = 0, b: Rational = 0, d: int = 1):
        a, b = Fraction(a), Fraction(b)
        if d < 1:
            raise ValueError("d must be a positive square-free integer")
        if d == 1:
            a, b = a + b, Fraction(0)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "d", d)

    def __setattr__(self, name, value):
        raise AttributeError("QuadraticNumber is immutable")

    # -- coercion ---------------------------------------------------------
    def _coerce(self, other) -> "QuadraticNumber":
        if isinstance(other, QuadraticNumber):
            if other.d == self.d or other.b == 0:
                return other if other.d == self.d else QuadraticNumber(other.a, 0, self.d)
            if self.b == 0 and self.d == 1:
                return other
            raise ValueError(f"field mismatch: sqrt({self.d}) vs sqrt({other.d})")
        if isinstance(other, (int, Fraction)):
            return QuadraticNumber(other, 0, self.d)
        return NotImplemented

    def _field(self, other: "QuadraticNumber") -> int:
        return max(self.d, other.d)

    # -- arithmetic -------------------------------------------------------
    def __add__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        return QuadraticNumber(self.a + o.a, self.b + o.b, self._field(o))

    __radd__ = __add__

    def __neg__(self):
        return QuadraticNumber(-self.a, -self.b, self.d)

    def __sub__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        return QuadraticNumber(self.a - o.a, self.b - o.b, self._field(o))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        d = self._field(o)
        return QuadraticNumber(self.a * o.a + self.b * o.b * d, self.a * o.b + self.b * o.a, d)

    __rmul__ = __mul__

    def conjugate(self) -> "QuadraticNumber":
        return QuadraticNumber(self.a, -self.b, self.d)

    def norm(self) -> Fraction:
        return self.a * self.a - self.b * self.b * self.d

    def inverse(self) -> "QuadraticNumber":
        n = self.norm()
        if n == 0:
            raise ZeroDivisionError("division by zero in quadratic field")
        return QuadraticNumber(self.a / n, -self.b / n, self.d)

    def __truediv__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        return self * o.inverse()

    def __rtruediv__(self, other):
        return self.inverse() * other

    def __pow__(self, n: int):
        if not isinstance(n, int):
            return NotImplemented
        if n < 0:
            return self.inverse() ** (-n)
        out, base = QuadraticNumber(1, 0, self.d), self
        while n:
            if n & 1:
                out = out * base
            base = base * base
            n >>= 1
        return out

    # -- ordering ---------------------------------------------------------
    def sign(self) -> int:
        a, b = self.a, self.b
        sa = (a > 0) - (a < 0)
        sb = (b > 0) - (b < 0)
        if sb == 0:
            return sa
        if sa == 0 or sa == sb:
            return sb
        # opposite signs: compare a^2 against b^2 d
        lhs, rhs = a * a, b * b * self.d
        if lhs > rhs:
            return sa
        return sb  # equality impossible for square-free d > 1

    def _cmp(self, other) -> int:
        o = self._coerce(other)
        if o is NotImplemented:
            if isinstance(other, float):
                return (float(self) > other) - (float(self) < other)
            raise TypeError(f"cannot compare QuadraticNumber with {type(other).__name__}")
        return (self - o).sign()

    def __eq__(self, other):
        if isinstance(other, (QuadraticNumber, int, Fraction)):
            try:
                return self._cmp(other) == 0
            except ValueError:
                return False
        return NotImplemented

    def __lt__(self, other):
        return self._cmp(other) < 0

    def __le__(self, other):
        return self._cmp(other) <= 0

    def __gt__(self, other):
        return self._cmp(other) > 0

    def __ge__(self, other):
        return self._cmp(other) >= 0

    def __hash__(self):
        if self.b == 0:
            return hash(self.a)
        return hash((self.a, self.b, self.d))

    def __abs__(self):
        return -self if self.sign() < 0 else self

    def __bool__(self):
        return self.a != 0 or self.b != 0

    def __float__(self):
        return float(self.a) + float(self.b) * math.sqrt(self.d)

    def to_mpf(self):
        import mpmath

        return mpmath.mpf(self.a.numerator) / self.a.denominator + (
            mpmath.mpf(self.b.numerator) / self.b.denominator
        ) * mpmath.sqrt(self.d)

    def floor(self) -> int:
        n = math.floor(float(self))
        while self < n:
            n -= 1
        while self >= n + 1:
            n += 1
        return n

    def is_rational(self) -> bool:
        return self.b == 0

    def __repr__(self):
        return f"QuadraticNumber({self.a}, {self.b}, {self.d})"

    def __str__(self):
        return format_quadratic(self)


def format_quadratic(x: QuadraticNumber) -> str:
    """Exact string in the group-file syntax, e.g. ``(2+1*sqrt2)/3``."""
    a, b = x.a, x.b
    if b == 0:
        return str(a)
    den = math.lcm(a.denominator, b.denominator)
    na, nb = int(a * den), int(b * den)
    rad = f"{abs(nb)}*sqrt{x.d}"
    if na == 0:
        body = ("-" if nb < 0 else "") + rad
    else:
        body = f"{na}{'-' if nb < 0 else '+'}{rad}"
    if den == 1:
        return body
    return f"({body})/{den}"


def latex_quadratic(x: QuadraticNumber) -> str:
    a, b = x.a, x.b
    if b == 0:
        if a.denominator == 1:
            return str(a.numerator)
        sgn = "-" if a < 0 else ""
        return f"{sgn}\\frac{{{abs(a.numerator)}}}{{{a.denominator}}}"
    den = math.lcm(a.denominator, b.denominator)
    na, nb = int(a * den), int(b * den)
    coef = "" if abs(nb) == 1 else str(abs(nb))
    rad = f"{coef}\\sqrt{{{x.d}}}"
    if na == 0:
        body = ("-" if nb < 0 else "") + rad
    else:
        body = f"{na}{'-' if nb < 0 else '+'}{rad}"
    if den == 1:
        return body
    return f"\\frac{{{body}}}{{{den}}}"


def parse_quadratic(text: str | int | float, d: int) -> QuadraticNumber:
    """Parse an exact expression over Q(sqrt d).

    Accepted syntax: integers, ``+ - * /``, integer powers, parentheses and
    square roots written ``sqrtN`` or ``sqrt(N)``.  ``sqrtN`` must lie in
    Q(sqrt d).
    """
    if isinstance(text, bool):
        raise ValueError("boolean is not a number")
    if isinstance(text, int):
        return QuadraticNumber(text, 0, d)
    if isinstance(text, float):
        raise ValueError(f"inexact float {text!r}; write entries as exact strings")
    try:
        tree = ast.parse(str(text).strip(), mode="eval")
    except SyntaxError as exc:
        raise ValueError(f"cannot parse {text!r}") from exc

    def root(n: int) -> QuadraticNumber:
        k, m = _squarefree_part(n)
        if m == 1:
            return QuadraticNumber(k, 0, d)
        if m != d:
            raise ValueError(f"sqrt({n}) does not lie in Q(sqrt {d})")
        return QuadraticNumber(0, k, d)

    def ev(node) -> QuadraticNumber:
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, int) and not isinstance(node.value, bool):
            return QuadraticNumber(node.value, 0, d)
        if isinstance(node, ast.Name) and node.id.startswith("sqrt") and node.id[4:].isdigit():
            return root(int(node.id[4:]))
        if (
            isinstance(node, ast.Call)
            and isinstance(node.func, ast.Name)
            and node.func.id == "sqrt"
            and len(node.args) == 1
            and isinstance(node.args[0], ast.Constant)
            and isinstance(node.args[0].value, int)
        ):
            return root(node.args[0].value)
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            v = ev(node.operand)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.BinOp):
            if isinstance(node.op, ast.Pow):
                if not (isinstance(node.right, ast.Constant) and isinstance(node.right.value, int)):
                    raise ValueError("only integer exponents are allowed")
                return ev(node.left) ** node.right.value
            lhs, rhs = ev(node.left), ev(node.right)
            if isinstance(node.op, ast.Add):
                return lhs + rhs
            if isinstance(node.op, ast.Sub):
                return lhs - rhs
            if isinstance(node.op, ast.Mult):
                return lhs * rhs
            if isinstance(node.op, ast.Div):
                return lhs / rhs
        raise ValueError(f"unsupported expression in {text!r}")

    out = ev(tree)
    return QuadraticNumber(out.a, out.b, d)


class _Infinity:
    """The point at infinity of the real projective line."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "INF"

    def __str__(self):
        return "oo"

    def __reduce__(self):
        return (_Infinity, ())


INF = _Infinity()
BoundaryPoint = Union[QuadraticNumber, _Infinity]


def _q(x, d: int) -> QuadraticNumber:
    if isinstance(x, QuadraticNumber):
        if x.d != d and x.b != 0:
            raise ValueError(f"field mismatch: sqrt({x.d}) vs sqrt({d})")
        return x if x.d == d else QuadraticNumber(x.a, 0, d)
    return QuadraticNumber(x, 0, d)


Word = tuple  # tuple of (generator name, exponent)


def _concat_words(w1: Word | None, w2: Word | None) -> Word | None:
    if w1 is None or w2 is None:
        return None
    out = list(w1)
    for name, e in w2:
        if out and out[-1][0] == name:
            e2 = out[-1][1] + e
            out.pop()
            if e2:
                out.append((name, e2))
        else:
            out.append((name, e))
    return tuple(out)


@dataclass(frozen=True, eq=False)
class GroupElement:
    """An element of PSL2 over Q(sqrt d), stored sign-normalized.

    Equality and hashing ignore the optional ``word``.
    """

    a: QuadraticNumber
    b: QuadraticNumber
    c: QuadraticNumber
    d: QuadraticNumber
    word: Word | None = field(default=None, compare=False)

    @classmethod
    def from_entries(cls, entries: Sequence, field_d: int = 1, word: Word | None = None) -> "GroupElement":
        a, b, c, dd = (_q(x, field_d) for x in entries)
        if a * dd - b * c != 1:
            raise ValueError(f"determinant is {a * dd - b * c}, not 1")
        for x in (a, b, c, dd):
            if x:
                if x.sign() < 0:
                    a, b, c, dd = -a, -b, -c, -dd
                break
        return cls(a, b, c, dd, word)

    @classmethod
    def identity(cls, field_d: int = 1) -> "GroupElement":
        return cls.from_entries((1, 0, 0, 1), field_d, word=())

    @classmethod
    def translation(cls, lam, field_d: int = 1, name: str | None = None) -> "GroupElement":
        return cls.from_entries((1, lam, 0, 1), field_d, word=((name, 1),) if name else None)

    @property
    def field_d(self) -> int:
        return self.a.d

    def entries(self) -> tuple[QuadraticNumber, ...]:
        return (self.a, self.b, self.c, self.d)

    def __eq__(self, other):
        if not isinstance(other, GroupElement):
            return NotImplemented
        return self.entries() == other.entries()

    def __hash__(self):
        return hash(self.entries())

    def __mul__(self, other: "GroupElement") -> "GroupElement":
        return compose(self, other)

    def __pow__(self, n: int) -> "GroupElement":
        return power(self, n)

    def inverse(self) -> "GroupElement":
        return inverse(self)

    def is_identity(self) -> bool:
        return self.b == 0 and self.c == 0 and self.a == 1

    def fixes_infinity(self) -> bool:
        return self.c == 0

    def trace(self) -> QuadraticNumber:
        return self.a + self.d

    def to_numpy(self) -> np.ndarray:
        return np.array([[float(self.a), float(self.b)], [float(self.c), float(self.d)]])

    def to_mpmath(self):
        import mpmath

        return mpmath.matrix([[self.a.to_mpf(), self.b.to_mpf()], [self.c.to_mpf(), self.d.to_mpf()]])

    def __repr__(self):
        return "[[{}, {}], [{}, {}]]".format(*(format_quadratic(x) for x in self.entries()))

    def to_strings(self) -> list[list[str]]:
        return [[format_quadratic(self.a), format_quadratic(self.b)], [format_quadratic(self.c), format_quadratic(self.d)]]


def compose(g: GroupElement, h: GroupElement) -> GroupElement:
    if g.field_d != h.field_d and not (g.field_d == 1 or h.field_d == 1):
        raise ValueError(f"field mismatch: sqrt({g.field_d}) vs sqrt({h.field_d})")
    fd = max(g.field_d, h.field_d)
    return GroupElement.from_entries(
        (
            g.a * h.a + g.b * h.c,
            g.a * h.b + g.b * h.d,
            g.c * h.a + g.d * h.c,
            g.c * h.b + g.d * h.d,
        ),
        fd,
        _concat_words(g.word, h.word),
    )


def _invert_word(w: Word | None) -> Word | None:
    if w is None:
        return None
    return tuple((name, -e) for name, e in reversed(w))


def inverse(g: GroupElement) -> GroupElement:
    return GroupElement.from_entries((g.d, -g.b, -g.c, g.a), g.field_d, _invert_word(g.word))


def power(g: GroupElement, n: int) -> GroupElement:
    if n < 0:
        return power(inverse(g), -n)
    if g.c == 0 and g.a == 1:
        w = None
        if g.word is not None:
            w = ()
            for _ in range(n):
                w = _concat_words(w, g.word)
        return GroupElement.from_entries((1, g.b * n, 0, 1), g.field_d, w)
    out, base = GroupElement.identity(g.field_d), g
    while n:
        if n & 1:
            out = compose(out, base)
        base = compose(base, base)
        n >>= 1
    return out


def product(elements: Iterable[GroupElement], field_d: int = 1) -> GroupElement:
    out = GroupElement.identity(field_d)
    for g in elements:
        out = compose(out, g)
    return out


def mobius_apply(g: GroupElement, p):
    """Apply ``g`` to a boundary point (exact or float, or INF) or to a point of H."""
    if p is INF:
        return INF if g.c == 0 else g.a / g.c
    if isinstance(p, (QuadraticNumber, int, Fraction)):
        p = _q(p, g.field_d)
        den = g.c * p + g.d
        if den == 0:
            return INF
        return (g.a * p + g.b) / den
    m = g.to_numpy()
    z = p
    if isinstance(z, np.ndarray):
        return (m[0, 0] * z + m[0, 1]) / (m[1, 0] * z + m[1, 1])
    den = m[1, 0] * z + m[1, 1]
    if den == 0:
        return INF
    return (m[0, 0] * z + m[0, 1]) / den


def derivative(g: GroupElement, x):
    """Derivative ``(cx+d)**-2`` of the Moebius map ``g`` at a real point."""
    if isinstance(x, (QuadraticNumber, int, Fraction)):
        den = g.c * _q(x, g.field_d) + g.d
        if den == 0:
            raise ZeroDivisionError(f"pole of {g!r} at {x}")
        return 1 / (den * den)
    m = g.to_numpy()
    den = m[1, 0] * np.asarray(x, dtype=float) + m[1, 1]
    if np.any(den == 0):
        raise ZeroDivisionError(f"pole of {g!r} hit")
    return den ** -2.0


def numeric_moebius(m: np.ndarray, x):
    return (m[0, 0] * x + m[0, 1]) / (m[1, 0] * x + m[1, 1])


def slash_factor(m: np.ndarray, x, s):
    """``((gamma^{-1})'(x))**s`` for ``gamma^{-1}`` given as the float matrix ``m``.

    Uses the principal branch on the positive real base.
    """
    den = m[1, 0] * x + m[1, 1]
    base = 1.0 / (den * den)
    return np.exp(s * np.log(base))


def numeric_inverse(m: np.ndarray) -> np.ndarray:
    return np.array([[m[1, 1], -m[0, 1]], [-m[1, 0], m[0, 0]]])


def format_word(w: Word | None) -> str:
    if w is None:
        return "?"
    if not w:
        return "1"
    parts = []
    for name, e in w:
        parts.append(name if e == 1 else f"{name}^{e}")
    return " ".join(parts)


def center_key(g: GroupElement) -> tuple:
    """Bottom row normalized up to sign; identifies the coset Gamma_inf g."""
    c, d = g.c, g.d
    if c.sign() < 0 or (c == 0 and d.sign() < 0):
        c, d = -c, -d
    return (c, d)


@dataclass
class Group:
    """A finitely generated Fuchsian group with a cusp at infinity."""

    name: str
    field_d: int
    generators: dict[str, GroupElement]
    T: GroupElement
    lam: QuadraticNumber
    relations: list[Word] = field(default_factory=list)
    presets: dict = field(default_factory=dict)
    source: str | None = None
    aliases: dict[str, GroupElement] = field(default_factory=dict)
    chart_scale: float = 1.0  # default Chebyshev chart half-width

    @property
    def T_name(self) -> str:
        return self.T.word[0][0]

    def translation(self, n: int) -> GroupElement:
        return power(self.T, n)

    def identity(self) -> GroupElement:
        return GroupElement.identity(self.field_d)

    def word_element(self, word: Word) -> GroupElement:
        out = self.identity()
        for name, e in word:
            if name not in self.generators:
                raise KeyError(f"unknown generator {name!r}")
            out = compose(out, power(self.generators[name], e))
        return out

    def parse_word(self, text: str) -> GroupElement:
        return self.word_element(parse_word(text))

    def check_relations(self) -> list[tuple[str, bool]]:
        return [(format_word(w), self.word_element(w).is_identity()) for w in self.relations]


_WORD_TOKEN = re.compile(r"\s*([A-Za-z_][A-Za-z_0-9]*)(?:\^\(?(-?\d+)\)?)?\s*")


def parse_word(text: str) -> Word:
    """Parse ``"T^-1 g g"`` (or ``"T^-1*g"``) into a word; ``"1"`` is empty."""
    text = text.replace("*", " ").strip()
    if text in ("", "1", "id"):
        return ()
    out, pos = [], 0
    while pos < len(text):
        m = _WORD_TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ValueError(f"cannot parse word {text!r}")
        out.append((m.group(1), int(m.group(2)) if m.group(2) else 1))
        pos = m.end()
    return _concat_words((), tuple(out))


def load_group(source) -> Group:
    """Load a group presentation from a YAML file path or a mapping."""
    import yaml

    if isinstance(source, dict):
        data, origin = source, None
    else:
        origin = str(source)
        with open(source) as fh:
            data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ValueError("group file must be a mapping")
    d = int(data.get("d", 1))
    k, m = _squarefree_part(d)
    if k != 1:
        raise ValueError(f"d = {d} is not square-free")
    gens_raw = data.get("generators") or {}
    if not gens_raw:
        raise ValueError("group file lists no generators")
    gens = {}
    for name, entries in gens_raw.items():
        if len(entries) != 4:
            raise ValueError(f"generator {name!r} needs 4 entries")
        gens[name] = GroupElement.from_entries([parse_quadratic(e, d) for e in entries], d, word=((name, 1),))
    t_name = data.get("T")
    if t_name not in gens:
        raise ValueError("group file must designate a generator T fixing infinity")
    T = gens[t_name]
    lam = parse_quadratic(data["lambda"], d)
    if T.c != 0 or T.a != 1 or T.b != lam:
        raise ValueError(f"T must be the translation by lambda = {format_quadratic(lam)}")
    if lam.sign() <= 0:
        raise ValueError("lambda must be positive")
    rels = [parse_word(r) for r in data.get("relations") or []]
    group = Group(
        name=str(data.get("name", "group")),
        field_d=d,
        generators=gens,
        T=T,
        lam=lam,
        relations=rels,
        presets=data.get("presets") or {},
        source=origin,
        chart_scale=float(data.get("chart_scale", 1.0)),
    )
    for name, text in (data.get("aliases") or {}).items():
        w = parse_word(str(text))
        group.aliases[str(name)] = group.word_element(w)
    return group
