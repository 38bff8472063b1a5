"""Raw and central moments of M_{n,q}, and the q-Stirling triangle.

Three independent routes give ``M_{n,q}(t^m; x)``:

* ``polynomial``: ``sum_j S_q(m, j) x^j / [n]^(m-j)`` from the q-Stirling table,
* ``recurrence1``: ``M(t^{m+1}; x) = sum_j C(m, j) x q^j / [n]^(m-j) M(t^j; x/q)``,
* ``series``: direct summation of the operator against ``t^m``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

from .errors import ParameterError
from .operator import apply_operator
from .qcore import DEFAULT_POLICY, QContext, SeriesPolicy, SignedLogValue, log_q_integer, q_integer

DEFAULT_MOMENT_CAP = 12
METHODS = ("polynomial", "recurrence1", "series")


@dataclass(frozen=True)
class QStirlingTable:
    """Triangle ``S_q(m, j)``, ``0 <= j <= m <= m_max``, as doubles at fixed q."""

    q: float
    m_max: int
    entries: tuple

    def __call__(self, m: int, j: int) -> float:
        if m < 0 or j < 0:
            raise ParameterError("indices must be non-negative")
        if j > m:
            return 0.0
        if m > self.m_max:
            raise ParameterError(f"table only holds m <= {self.m_max}")
        return self.entries[m][j]

    def rows(self):
        for m, row in enumerate(self.entries):
            for j, v in enumerate(row):
                yield m, j, v


def qstirling_table(m_max: int, ctx: QContext) -> QStirlingTable:
    """Fill ``S_q(m+1, j) = [j] S_q(m, j) + S_q(m, j-1)`` from ``S_q(0, 0) = 1``."""
    if m_max < 0:
        raise ParameterError("m_max must be >= 0")
    qints = [q_integer(j, ctx) for j in range(m_max + 1)]
    rows = [[1.0]]
    for m in range(m_max):
        prev = rows[-1]
        row = [0.0] * (m + 2)
        for j in range(1, m + 2):
            here = prev[j] if j <= m else 0.0
            row[j] = qints[j] * here + prev[j - 1]
        rows.append(row)
    return QStirlingTable(ctx.q, m_max, tuple(tuple(r) for r in rows))


def classical_stirling_table(m_max: int) -> tuple:
    """Stirling numbers of the second kind, as exact ints, by the explicit sum.

    ``S(m, j) = (1/j!) sum_i (-1)^i C(j, i) (j - i)^m``.
    """
    if m_max < 0:
        raise ParameterError("m_max must be >= 0")
    out = []
    for m in range(m_max + 1):
        row = []
        for j in range(m + 1):
            acc = sum((-1) ** i * math.comb(j, i) * (j - i) ** m for i in range(j + 1))
            row.append(acc // math.factorial(j))
        out.append(tuple(row))
    return tuple(out)


@dataclass(frozen=True)
class MomentPolynomial:
    """``M_{n,q}(t^m; x) = sum_{j=1..m} a_j x^j``; ``coeffs[j-1] = a_j``."""

    m: int
    coeffs: tuple

    def __call__(self, x: float) -> float:
        if self.m == 0:
            return 1.0
        acc = 0.0
        for a in reversed(self.coeffs):
            acc = acc * x + a
        return acc * x

    def coefficient(self, j: int) -> float:
        if j == 0:
            return 1.0 if self.m == 0 else 0.0
        return self.coeffs[j - 1]


@lru_cache(maxsize=256)
def _table(q: float, m_max: int) -> QStirlingTable:
    return qstirling_table(m_max, QContext(q))


def moment_polynomial(m: int, ctx: QContext, m_cap: int = DEFAULT_MOMENT_CAP) -> MomentPolynomial:
    """Coefficients ``a_j = S_q(m, j) / [n]^(m-j)`` (the power is taken in log space)."""
    if not 0 <= m <= m_cap:
        raise ParameterError(f"moment order must be in 0..{m_cap} (got {m})")
    if m == 0:
        return MomentPolynomial(0, ())
    table = _table(ctx.q, m)
    log_n = log_q_integer(ctx.n, ctx)
    coeffs = []
    for j in range(1, m + 1):
        s = table(m, j)
        scale = SignedLogValue.from_log(1, -(m - j) * log_n)
        coeffs.append(float(SignedLogValue.from_float(s) * scale))
    return MomentPolynomial(m, tuple(coeffs))


def _recurrence1(m: int, x: float, ctx: QContext) -> float:
    q = ctx.q
    qn = q_integer(ctx.n, ctx)

    @lru_cache(maxsize=None)
    def moment(j: int, depth: int) -> float:
        # M(t^j; x q^-depth)
        if j == 0:
            return 1.0
        y = x / q**depth
        mm = j - 1
        return math.fsum(
            math.comb(mm, i) * y * q**i / qn ** (mm - i) * moment(i, depth + 1)
            for i in range(mm + 1)
        )

    return moment(m, 0)


def raw_moment(
    m: int,
    x: float,
    ctx: QContext,
    method: str = "polynomial",
    policy: SeriesPolicy = DEFAULT_POLICY,
) -> float:
    """``M_{n,q}(t^m; x)`` by one of :data:`METHODS`."""
    if m < 0:
        raise ParameterError("m must be >= 0")
    if not x >= 0:
        raise ParameterError(f"x must be >= 0 (got {x})")
    if method == "polynomial":
        return moment_polynomial(m, ctx, m_cap=max(DEFAULT_MOMENT_CAP, m))(x)
    if method == "recurrence1":
        return _recurrence1(m, x, ctx)
    if method == "series":
        return apply_operator(lambda t: t**m, x, ctx, policy)
    raise ParameterError(f"unknown method {method!r}; choose from {METHODS}")


def _central_coefficients(r: int, q: float) -> list:
    """``T_e = sum_i C(r,i) (-1)^(r-i) S_q(i, i-e)``, so ``mu_r = sum_e T_e x^(r-e)/[n]^e``.

    Grouping the binomial expansion by powers of x before summing removes the
    cancellation between the large raw moments.
    """
    table = _table(q, r)
    out = []
    for e in range(r + 1):
        terms = [
            math.comb(r, i) * (-1) ** (r - i) * table(i, i - e) for i in range(e, r + 1)
        ]
        out.append(math.fsum(terms))
    return out


def central_moment(r: int, x: float, ctx: QContext) -> float:
    """``M_{n,q}((t - x)^r; x)`` from the binomial expansion of the moment polynomials."""
    if not 0 <= r <= 8:
        raise ParameterError(f"central moment order must be in 0..8 (got {r})")
    if r == 0:
        return 1.0
    qn = q_integer(ctx.n, ctx)
    coeffs = _central_coefficients(r, ctx.q)
    # e = 0 vanishes identically; e > r - 1 would need x^(<1), which has S_q(i, 0) = 0 for i > 0
    return math.fsum(coeffs[e] * x ** (r - e) / qn**e for e in range(1, r))


def reference_central_moment(r: int, x: float, ctx: QContext) -> float:
    """Closed forms of the second, third and fourth central moments."""
    q = ctx.q
    qn = q_integer(ctx.n, ctx)
    if r == 2:
        return x / qn
    if r == 3:
        return x / qn**2 + (q - 1.0) * x**2 / qn
    if r == 4:
        return x / qn**3 + (q * q + 3.0 * q - 1.0) * x**2 / qn**2 + (q - 1.0) ** 2 * x**3 / qn
    raise ParameterError(f"closed forms exist for r in 2..4 only (got {r})")
