"""Exact polynomial vector fields, Lie brackets and hypothesis checkers.

Vector fields on R^m are stored with rational coefficients so that
nilpotency, constancy of brackets and the bracket identities are decided
exactly; floats only appear when a field is evaluated at a point.  The
bracket is

    [V, W]^i = V^l d_l W^i - W^l d_l V^i,

and iterated brackets are left-nested: [U_1 ... U_k] = [[U_1 ... U_{k-1}], U_k].
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from itertools import product as iter_product
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError

Exponent = tuple[int, ...]


@dataclass(frozen=True)
class Polynomial:
    """Polynomial in ``nvars`` variables with Fraction coefficients.

    ``terms`` maps exponent multi-indices to nonzero coefficients; the zero
    polynomial has an empty table.
    """

    nvars: int
    terms: dict[Exponent, Fraction]

    def __post_init__(self):
        clean = {}
        for expo, coeff in self.terms.items():
            e = tuple(int(k) for k in expo)
            if len(e) != self.nvars or any(k < 0 for k in e):
                raise DomainError(f"bad exponent {expo} for {self.nvars} variables")
            c = Fraction(coeff)
            if c != 0:
                clean[e] = c
        object.__setattr__(self, "terms", clean)

    # -- constructors -----------------------------------------------------
    @staticmethod
    def zero(nvars: int) -> "Polynomial":
        return Polynomial(nvars, {})

    @staticmethod
    def constant(nvars: int, c) -> "Polynomial":
        return Polynomial(nvars, {(0,) * nvars: Fraction(c)})

    @staticmethod
    def variable(nvars: int, k: int) -> "Polynomial":
        if not 0 <= k < nvars:
            raise DomainError(f"variable index {k} out of range")
        e = [0] * nvars
        e[k] = 1
        return Polynomial(nvars, {tuple(e): Fraction(1)})

    # -- algebra -----------------------------------------------------------
    def __add__(self, other: "Polynomial") -> "Polynomial":
        if self.nvars != other.nvars:
            raise DomainError("variable counts differ")
        out = dict(self.terms)
        for e, c in other.terms.items():
            out[e] = out.get(e, Fraction(0)) + c
        return Polynomial(self.nvars, out)

    def __neg__(self) -> "Polynomial":
        return Polynomial(self.nvars, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other: "Polynomial") -> "Polynomial":
        return self + (-other)

    def __mul__(self, other) -> "Polynomial":
        if isinstance(other, Polynomial):
            if self.nvars != other.nvars:
                raise DomainError("variable counts differ")
            out: dict[Exponent, Fraction] = {}
            for e1, c1 in self.terms.items():
                for e2, c2 in other.terms.items():
                    e = tuple(a + b for a, b in zip(e1, e2))
                    out[e] = out.get(e, Fraction(0)) + c1 * c2
            return Polynomial(self.nvars, out)
        c = Fraction(other)
        return Polynomial(self.nvars, {e: c * v for e, v in self.terms.items()})

    __rmul__ = __mul__

    def diff(self, k: int) -> "Polynomial":
        """Partial derivative with respect to variable ``k``."""
        out = {}
        for e, c in self.terms.items():
            if e[k] > 0:
                e2 = list(e)
                e2[k] -= 1
                out[tuple(e2)] = c * e[k]
        return Polynomial(self.nvars, out)

    def lift(self, total_vars: int, offset: int = 0) -> "Polynomial":
        """Reinterpret over a larger variable space, shifted by ``offset``."""
        if offset < 0 or offset + self.nvars > total_vars:
            raise DomainError("lift target does not contain the source variables")
        pad_left = (0,) * offset
        pad_right = (0,) * (total_vars - offset - self.nvars)
        return Polynomial(
            total_vars, {pad_left + e + pad_right: c for e, c in self.terms.items()}
        )

    # -- predicates ----------------------------------------------------------
    @property
    def is_zero(self) -> bool:
        return not self.terms

    @property
    def degree(self) -> int:
        """Total degree; -1 for the zero polynomial."""
        if not self.terms:
            return -1
        return max(sum(e) for e in self.terms)

    @property
    def is_constant(self) -> bool:
        return self.degree <= 0

    # -- evaluation ----------------------------------------------------------
    def __call__(self, x) -> float | np.ndarray:
        """Evaluate at a point (m,) or a batch of points (..., m)."""
        x = np.asarray(x, dtype=float)
        batch = x.ndim > 1
        out = np.zeros(x.shape[:-1]) if batch else 0.0
        for e, c in self.terms.items():
            term = float(c)
            for k, p in enumerate(e):
                if p:
                    term = term * x[..., k] ** p
            out = out + term
        return out

    def __str__(self) -> str:
        if not self.terms:
            return "0"
        parts = []
        for e, c in sorted(self.terms.items()):
            mono = "*".join(
                f"x{k+1}" + (f"^{p}" if p > 1 else "") for k, p in enumerate(e) if p
            )
            parts.append(f"{c}" + (f"*{mono}" if mono else ""))
        return " + ".join(parts)


@dataclass(frozen=True)
class PolyVectorField:
    """Vector field on R^m with polynomial components."""

    components: tuple[Polynomial, ...]

    def __post_init__(self):
        comps = tuple(self.components)
        object.__setattr__(self, "components", comps)
        if not comps:
            raise DomainError("vector field needs at least one component")
        m = len(comps)
        if any(c.nvars != m for c in comps):
            raise DomainError("every component must be a polynomial in m variables")

    @property
    def m(self) -> int:
        return len(self.components)

    def __add__(self, other: "PolyVectorField") -> "PolyVectorField":
        if self.m != other.m:
            raise DomainError("vector fields live on different spaces")
        return PolyVectorField(
            tuple(a + b for a, b in zip(self.components, other.components))
        )

    def __neg__(self) -> "PolyVectorField":
        return PolyVectorField(tuple(-c for c in self.components))

    def __sub__(self, other: "PolyVectorField") -> "PolyVectorField":
        return self + (-other)

    def __mul__(self, scalar) -> "PolyVectorField":
        return PolyVectorField(tuple(c * Fraction(scalar) for c in self.components))

    __rmul__ = __mul__

    @property
    def is_zero(self) -> bool:
        return all(c.is_zero for c in self.components)

    @property
    def degree(self) -> int:
        return max(c.degree for c in self.components)

    @property
    def is_constant(self) -> bool:
        return all(c.is_constant for c in self.components)

    def __call__(self, x) -> np.ndarray:
        """Evaluate at (m,) or batched (..., m) points; output matches."""
        x = np.asarray(x, dtype=float)
        vals = [c(x) for c in self.components]
        if x.ndim == 1:
            return np.array(vals)
        return np.stack(vals, axis=-1)

    def jacobian(self) -> list[list[Polynomial]]:
        """Matrix of partials J[i][l] = d_l V^i, as polynomials."""
        return [[c.diff(l) for l in range(self.m)] for c in self.components]

    def jacobian_at(self, x) -> np.ndarray:
        """Jacobian matrix evaluated at a point (m, m) or batch (..., m, m)."""
        x = np.asarray(x, dtype=float)
        rows = [[c.diff(l)(x) for l in range(self.m)] for c in self.components]
        if x.ndim == 1:
            return np.array(rows, dtype=float)
        return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)

    @staticmethod
    def zero(m: int) -> "PolyVectorField":
        return PolyVectorField(tuple(Polynomial.zero(m) for _ in range(m)))

    @staticmethod
    def from_arrays(m: int, entries: Sequence) -> "PolyVectorField":
        """Constant field from a length-m vector of rationals."""
        return PolyVectorField(
            tuple(Polynomial.constant(m, e) for e in entries)
        )

    def __str__(self) -> str:
        return "(" + ", ".join(str(c) for c in self.components) + ")"


def bracket(v: PolyVectorField, w: PolyVectorField) -> PolyVectorField:
    """Exact Lie bracket [V, W]^i = V^l d_l W^i - W^l d_l V^i."""
    if v.m != w.m:
        raise DomainError(f"bracket needs equal dimensions, got {v.m} and {w.m}")
    m = v.m
    comps = []
    for i in range(m):
        acc = Polynomial.zero(m)
        for l in range(m):
            acc = acc + v.components[l] * w.components[i].diff(l)
            acc = acc - w.components[l] * v.components[i].diff(l)
        comps.append(acc)
    return PolyVectorField(tuple(comps))


def iterated_bracket(fields: Sequence[PolyVectorField], word: Iterable[int]) -> PolyVectorField:
    """Left-nested bracket V_{i_1 ... i_k} = [V_{i_1} ... V_{i_k}]."""
    w = [int(i) for i in word]
    if not w:
        raise DomainError("word must have length >= 1")
    d = len(fields)
    if any(not 1 <= i <= d for i in w):
        raise DomainError(f"word {w} has letters outside 1..{d}")
    acc = fields[w[0] - 1]
    for i in w[1:]:
        acc = bracket(acc, fields[i - 1])
    return acc


def _words(d: int, k: int):
    return iter_product(range(1, d + 1), repeat=k)


def is_nilpotent(fields: Sequence[PolyVectorField], n: int) -> tuple[bool, tuple[int, ...] | None]:
    """True iff every order-n left-nested bracket vanishes identically.

    On failure returns a violating word as witness.
    """
    if n < 2:
        raise DomainError(f"nilpotency order must be >= 2, got {n}")
    for word in _words(len(fields), n):
        if not iterated_bracket(fields, word).is_zero:
            return False, word
    return True, None


def constant_brackets(fields: Sequence[PolyVectorField], up_to: int) -> bool:
    """True iff all brackets of order 2..up_to are constant vector fields."""
    if up_to < 2:
        raise DomainError(f"up_to must be >= 2, got {up_to}")
    for k in range(2, up_to + 1):
        for word in _words(len(fields), k):
            if not iterated_bracket(fields, word).is_constant:
                return False
    return True


def hormander_rank(fields: Sequence[PolyVectorField], x, up_to: int) -> int:
    """Rank of the span of all brackets of length <= up_to evaluated at x.

    Gaussian elimination with a fixed pivot tolerance; rows are scaled so
    the tolerance is meaningful across field magnitudes.
    """
    if up_to < 1:
        raise DomainError(f"up_to must be >= 1, got {up_to}")
    x = np.asarray(x, dtype=float)
    rows = []
    for k in range(1, up_to + 1):
        for word in _words(len(fields), k):
            rows.append(iterated_bracket(fields, word)(x))
    return _rank_by_elimination(np.array(rows), tol=1e-10)


def _rank_by_elimination(a: np.ndarray, tol: float) -> int:
    a = np.array(a, dtype=float)
    if a.size == 0:
        return 0
    scale = np.max(np.abs(a))
    if scale == 0.0:
        return 0
    a /= scale
    n_rows, n_cols = a.shape
    rank = 0
    for col in range(n_cols):
        pivot = rank + int(np.argmax(np.abs(a[rank:, col]))) if rank < n_rows else None
        if pivot is None or abs(a[pivot, col]) <= tol:
            continue
        a[[rank, pivot]] = a[[pivot, rank]]
        a[rank] /= a[rank, col]
        others = [r for r in range(n_rows) if r != rank]
        a[others] -= np.outer(a[others, col], a[rank])
        rank += 1
        if rank == n_rows:
            break
    return rank


# ---------------------------------------------------------------------------
# Parsing: polynomial expressions and field files
# ---------------------------------------------------------------------------

_TOKEN = re.compile(r"\s*(?:(\d+/\d+|\d+)|(x\d+)|(\*\*|[()+\-*^]))")


class _Parser:
    """Recursive-descent parser for polynomial expressions.

    Grammar: expr := ['+'|'-'] term (('+'|'-') term)*;
             term := factor (('*') factor)*;
             factor := atom (('^'|'**') nat)?;
             atom := rational | x<k> | '(' expr ')'.
    """

    def __init__(self, text: str, nvars: int):
        self.nvars = nvars
        self.tokens: list[str] = []
        pos = 0
        while pos < len(text):
            m = _TOKEN.match(text, pos)
            if m is None:
                if text[pos:].strip():
                    raise DomainError(f"cannot tokenize polynomial near {text[pos:]!r}")
                break
            self.tokens.append(next(g for g in m.groups() if g is not None))
            pos = m.end()
        self.pos = 0

    def peek(self) -> str | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def take(self) -> str:
        tok = self.peek()
        if tok is None:
            raise DomainError("unexpected end of polynomial expression")
        self.pos += 1
        return tok

    def parse(self) -> Polynomial:
        p = self.expr()
        if self.peek() is not None:
            raise DomainError(f"trailing tokens in polynomial: {self.tokens[self.pos:]}")
        return p

    def expr(self) -> Polynomial:
        sign = 1
        while self.peek() in ("+", "-"):
            if self.take() == "-":
                sign = -sign
        acc = self.term() * sign
        while self.peek() in ("+", "-"):
            op = self.take()
            acc = acc + self.term() * (1 if op == "+" else -1)
        return acc

    def term(self) -> Polynomial:
        acc = self.factor()
        while self.peek() == "*":
            self.take()
            acc = acc * self.factor()
        return acc

    def factor(self) -> Polynomial:
        base = self.atom()
        if self.peek() in ("^", "**"):
            self.take()
            tok = self.take()
            if not tok.isdigit():
                raise DomainError(f"exponent must be a nonnegative integer, got {tok!r}")
            power = int(tok)
            acc = Polynomial.constant(self.nvars, 1)
            for _ in range(power):
                acc = acc * base
            return acc
        return base

    def atom(self) -> Polynomial:
        tok = self.take()
        if tok == "(":
            inner = self.expr()
            if self.take() != ")":
                raise DomainError("unbalanced parenthesis in polynomial")
            return inner
        if tok == "-":
            return -self.atom()
        if tok.startswith("x"):
            k = int(tok[1:])
            if not 1 <= k <= self.nvars:
                raise DomainError(f"variable {tok} out of range for {self.nvars} variables")
            return Polynomial.variable(self.nvars, k - 1)
        if "/" in tok:
            num, den = tok.split("/")
            return Polynomial.constant(self.nvars, Fraction(int(num), int(den)))
        if tok.isdigit():
            return Polynomial.constant(self.nvars, int(tok))
        raise DomainError(f"unexpected token {tok!r} in polynomial")


def parse_polynomial(text: str, nvars: int) -> Polynomial:
    """Parse ``2*x2 - 4`` style expressions into an exact polynomial."""
    return _Parser(text, nvars).parse()


def parse_field_file(text: str) -> list[PolyVectorField]:
    """Parse a field file: an ``m d`` header, then d blocks of m component lines.

    ``#`` starts a comment; blank lines are ignored.
    """
    lines = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            lines.append(line)
    if not lines:
        raise DomainError("empty field file")
    header = lines[0].split()
    if len(header) != 2:
        raise DomainError(f"header must be 'm d', got {lines[0]!r}")
    m, d = int(header[0]), int(header[1])
    body = lines[1:]
    if len(body) != m * d:
        raise DomainError(f"expected {m * d} component lines for m={m}, d={d}, got {len(body)}")
    fields = []
    for block in range(d):
        comps = tuple(
            parse_polynomial(body[block * m + i], m) for i in range(m)
        )
        fields.append(PolyVectorField(comps))
    return fields


def format_field_file(fields: Sequence[PolyVectorField]) -> str:
    m = fields[0].m
    lines = [f"{m} {len(fields)}"]
    for f in fields:
        lines.extend(str(c) for c in f.components)
    return "\n".join(lines) + "\n"
