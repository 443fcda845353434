"""Nilpotent flow representation: permutation functionals and the exp flow.

For n-nilpotent driving fields the solution of dy = V_i(y) dx^i at time t
is the time-1 flow of a single frozen vector field,

    y_t = [exp(Z_t)](a),
    Z_t = sum_{k=1}^{n-1} sum_{words w of length k} V_w psi_t^w,

where V_w is the left-nested bracket of the driving fields along w and the
scalar functionals combine signature entries over all permutations,

    psi_t^{i_1..i_k} = sum_{sigma in S_k} (-1)^{e(sigma)}
                       / (k^2 binom(k-1, e(sigma)))
                       * B^{k, i_{tau(1)}, ..., i_{tau(k)}}_{0t},

with tau the inverse permutation and e(sigma) the descent count.  The
permutation sum is enumerated literally (k <= 5 keeps it tiny); the
exponential flow integrates dPsi/ds = Z(Psi) on [0, 1] with fixed-step RK4.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import permutations, product as iter_product
from typing import Callable, Sequence

import numpy as np

from .errors import BlowUpError, DomainError, PreconditionError
from .fbm import SamplePath
from .liefields import (
    PolyVectorField,
    bracket as lie_bracket,
    format_field_file,
    is_nilpotent,
)
from .signature import IteratedIntegrals, Word, path_signature

DEFAULT_FLOW_STEPS = 256


def descent_count(sigma: Sequence[int]) -> int:
    """Number of descents of a permutation of {1..k}, one-line notation."""
    s = tuple(int(x) for x in sigma)
    if sorted(s) != list(range(1, len(s) + 1)):
        raise DomainError(f"{sigma} is not a permutation of 1..{len(s)}")
    return sum(1 for a, b in zip(s[:-1], s[1:]) if a > b)


@lru_cache(maxsize=None)
def _psi_terms(k: int) -> tuple[tuple[tuple[int, ...], float], ...]:
    """Pairs (tau, coefficient) over S_k, tau = sigma^{-1}."""
    out = []
    for sigma in permutations(range(1, k + 1)):
        e = descent_count(sigma)
        coeff = (-1.0) ** e / (k**2 * math.comb(k - 1, e))
        tau = tuple(sigma.index(a) + 1 for a in range(1, k + 1))
        out.append((tau, coeff))
    return tuple(out)


def coefficient_abs_sum(k: int) -> float:
    """sum_{sigma in S_k} |coefficient(sigma)|; bounded by 1 for every k."""
    return sum(abs(c) for _, c in _psi_terms(k))


def psi(sig: IteratedIntegrals, word: Word) -> float:
    """Permutation functional psi^w built from the signature over [0, t]."""
    w = tuple(int(i) for i in word)
    k = len(w)
    if k > sig.level:
        raise DomainError(f"word {word} needs signature level {k}, have {sig.level}")
    total = 0.0
    for tau, coeff in _psi_terms(k):
        permuted = tuple(w[tau[a] - 1] for a in range(k))
        total += coeff * sig.value(permuted)
    return total


@dataclass(frozen=True)
class PsiTable:
    """All psi functionals up to a level, for one time t."""

    t: float
    d: int
    level: int
    table: dict[Word, float] = field(repr=False)

    def __getitem__(self, word: Word) -> float:
        return self.table[tuple(word)]


def psi_table(sig: IteratedIntegrals, level: int) -> PsiTable:
    table = {}
    for k in range(1, level + 1):
        for w in iter_product(range(1, sig.d + 1), repeat=k):
            table[w] = psi(sig, w)
    return PsiTable(t=sig.t, d=sig.d, level=level, table=table)


def fields_hash(fields: Sequence[PolyVectorField]) -> str:
    return hashlib.sha256(format_field_file(fields).encode()).hexdigest()[:16]


def bracket_table(
    fields: Sequence[PolyVectorField], n: int
) -> dict[Word, PolyVectorField]:
    """Left-nested brackets V_w for all words up to length n-1.

    Zero brackets are pruned as the table is built level by level, so
    nilpotent families stay cheap.
    """
    d = len(fields)
    table: dict[Word, PolyVectorField] = {}
    for i in range(1, d + 1):
        fld = fields[i - 1]
        if not fld.is_zero:
            table[(i,)] = fld
    for k in range(2, n):
        for w in list(table):
            if len(w) != k - 1:
                continue
            for i in range(1, d + 1):
                b = lie_bracket(table[w], fields[i - 1])
                if not b.is_zero:
                    table[w + (i,)] = b
    return table


@dataclass(frozen=True)
class FlowField:
    """Time-frozen vector field Z_t with its bracket/psi decomposition."""

    t: float
    m: int
    terms: tuple[tuple[Word, PolyVectorField, float], ...]
    provenance: dict = field(default_factory=dict, repr=False)

    @property
    def assembled(self) -> PolyVectorField:
        z = PolyVectorField.zero(self.m)
        for _, fld, scalar in self.terms:
            z = z + fld * scalar
        return z

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        for _, fld, scalar in self.terms:
            out = out + scalar * fld(x)
        return out

    def jacobian_at(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        shape = x.shape[:-1] + (self.m, self.m)
        out = np.zeros(shape)
        for _, fld, scalar in self.terms:
            out = out + scalar * fld.jacobian_at(x)
        return out

    @property
    def degree(self) -> int:
        return max((fld.degree for _, fld, _ in self.terms), default=-1)


def build_Z(
    fields: Sequence[PolyVectorField],
    sig: IteratedIntegrals,
    n: int,
    check_nilpotency: bool = True,
) -> FlowField:
    """Assemble Z_t = sum_w V_w psi^w from brackets and signature data.

    Verifies n-nilpotency of the fields first (override only when the
    caller has already certified it).
    """
    if n < 2:
        raise DomainError(f"nilpotency order must be >= 2, got {n}")
    if sig.level < n - 1:
        raise DomainError(f"need signature level >= {n - 1}, have {sig.level}")
    if len(fields) != sig.d:
        raise DomainError(f"{len(fields)} fields for alphabet size {sig.d}")
    if check_nilpotency:
        ok, witness = is_nilpotent(fields, n)
        if not ok:
            raise PreconditionError(
                f"fields are not {n}-nilpotent: bracket along {witness} is nonzero",
                name="nilpotency",
            )
    m = fields[0].m
    brackets = bracket_table(fields, n)
    terms = []
    for w, fld in brackets.items():
        scalar = psi(sig, w)
        if scalar != 0.0:
            terms.append((w, fld, scalar))
    return FlowField(
        t=sig.t,
        m=m,
        terms=tuple(terms),
        provenance={"t": sig.t, "fields_hash": fields_hash(fields)},
    )


def rk4(
    rhs: Callable[[np.ndarray], np.ndarray], y0: np.ndarray, steps: int
) -> np.ndarray:
    """Classical RK4 for the autonomous flow on s in [0, 1]."""
    if steps < 1:
        raise DomainError(f"steps must be >= 1, got {steps}")
    y = np.asarray(y0, dtype=float).copy()
    h = 1.0 / steps
    for k in range(steps):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * h * k1)
        k3 = rhs(y + 0.5 * h * k2)
        k4 = rhs(y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(y)):
            raise BlowUpError("exp-flow state became non-finite", when=(k + 1) * h)
    return y


def exp_flow(
    z: FlowField | PolyVectorField, a: np.ndarray, steps: int = DEFAULT_FLOW_STEPS
) -> np.ndarray:
    """[exp(Z)](a): integrate dPsi/ds = Z(Psi) from a over s in [0, 1]."""
    a = np.asarray(a, dtype=float)
    return rk4(lambda y: z(y), a, steps)


def strichartz_solve(
    fields: Sequence[PolyVectorField],
    p: SamplePath,
    a: np.ndarray,
    t: float,
    n: int,
    steps: int = DEFAULT_FLOW_STEPS,
    check_nilpotency: bool = True,
) -> np.ndarray:
    """Solution at time t via the nilpotent flow representation.

    Exact in the piecewise-linear driver up to the RK4 error of the time-1
    flow (the signature and bracket data carry no discretization error).
    """
    sig = path_signature(p, 0.0, t, n - 1)
    z = build_Z(fields, sig, n, check_nilpotency=check_nilpotency)
    return exp_flow(z, a, steps)


# ---------------------------------------------------------------------------
# Batched engine for Monte-Carlo sampling of nilpotent flows
# ---------------------------------------------------------------------------


def psi_batch(levels: list[np.ndarray], word: Word) -> np.ndarray:
    """psi^w for a batch of signatures (levels[k-1]: (n_paths, d, ..., d))."""
    w = tuple(int(i) for i in word)
    k = len(w)
    out = np.zeros(levels[0].shape[0])
    lvl = levels[k - 1]
    for tau, coeff in _psi_terms(k):
        idx = tuple(w[tau[a] - 1] - 1 for a in range(k))
        out += coeff * lvl[(slice(None),) + idx]
    return out


def build_Z_batch(
    fields: Sequence[PolyVectorField],
    levels: list[np.ndarray],
    n: int,
    check_nilpotency: bool = True,
) -> list[tuple[PolyVectorField, np.ndarray]]:
    """Bracket fields with per-path psi weights; input to exp_flow_batch."""
    if check_nilpotency:
        ok, witness = is_nilpotent(fields, n)
        if not ok:
            raise PreconditionError(
                f"fields are not {n}-nilpotent: bracket along {witness} is nonzero",
                name="nilpotency",
            )
    brackets = bracket_table(fields, n)
    return [(fld, psi_batch(levels, w)) for w, fld in brackets.items()]


def exp_flow_batch(
    terms: list[tuple[PolyVectorField, np.ndarray]],
    a: np.ndarray,
    steps: int = DEFAULT_FLOW_STEPS,
) -> np.ndarray:
    """Batched [exp(Z)](a) across paths; a is (m,) or (n_paths, m)."""
    if not terms:
        raise DomainError("empty flow decomposition")
    n_paths = terms[0][1].shape[0]
    m = terms[0][0].m
    y0 = np.asarray(a, dtype=float)
    if y0.ndim == 1:
        y0 = np.broadcast_to(y0, (n_paths, m)).copy()

    def rhs(y: np.ndarray) -> np.ndarray:
        out = np.zeros_like(y)
        for fld, scalars in terms:
            out += scalars[:, None] * fld(y)
        return out

    return rk4(rhs, y0, steps)
