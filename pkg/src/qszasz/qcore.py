"""q-calculus primitives for q > 1.

q-integers, q-factorials, q-binomials, the q-derivative and the two Jackson
q-exponentials.  Quantities that overflow a double for moderate arguments
(``[k]_q!``, ``q**(k*(k-1)/2)``, ``e_q(z)`` for large ``z``) are returned as
:class:`SignedLogValue`, which keeps a binary exponent outside the float.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import mpmath as mp

from .errors import (
    DomainError,
    NonFiniteValueError,
    ParameterError,
    QIntegerOverflowWarning,
    SeriesExhaustedError,
)

LN2 = math.log(2.0)
EPS = 2.0**-52

# below this size of (q-1)|z|/q^(j+1) the rest of the e_q product is summed in closed form
_TAIL_SWITCH = 2.0**-10
_HORNER_MAX = 8


@dataclass(frozen=True)
class QContext:
    """Validated operator parameters.

    ``q`` must satisfy ``q - 1 >= 1e-12``; ``q == 1`` is never special-cased
    (the classical Szász operator has its own implementation).
    """

    q: float
    n: int = 1
    classical_baseline: bool = False

    def __post_init__(self):
        q = float(self.q)
        if not math.isfinite(q) or not (q - 1.0 >= 1e-12):
            raise ParameterError(f"q must exceed 1 (got q={self.q!r})")
        if isinstance(self.n, bool) or int(self.n) != self.n or self.n < 1:
            raise ParameterError(f"n must be a positive integer (got n={self.n!r})")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "n", int(self.n))

    @property
    def qn(self) -> float:
        """The q-integer ``[n]_q``."""
        return q_integer(self.n, self)

    def with_n(self, n: int) -> "QContext":
        return QContext(self.q, n, self.classical_baseline)


@dataclass(frozen=True)
class SeriesPolicy:
    """Convergence controls shared by every truncated series."""

    rel_tol: float = 1e-14
    max_terms: int = 5000
    post_peak_window: int = 3

    def __post_init__(self):
        if not self.rel_tol > 0:
            raise ParameterError("rel_tol must be positive")
        if self.max_terms < 16:
            raise ParameterError("max_terms must be at least 16")
        if self.post_peak_window < 1:
            raise ParameterError("post_peak_window must be at least 1")


DEFAULT_POLICY = SeriesPolicy()


class SignedLogValue:
    """A real number stored as ``sign * mantissa * 2**exponent``.

    The exponent is an unbounded Python int, so products such as
    ``[n]^k x^k / [k]!`` never overflow.  ``log_abs`` is derived, and
    conversion back to ``float`` is exact whenever the value fits.
    """

    __slots__ = ("sign", "mantissa", "exponent")

    def __init__(self, sign: int, mantissa: float = 0.5, exponent: int = 0):
        if sign == 0 or mantissa == 0.0:
            sign, mantissa, exponent = 0, 0.0, 0
        else:
            m, e = math.frexp(abs(mantissa))
            mantissa, exponent = m, exponent + e
            sign = 1 if sign > 0 else -1
        object.__setattr__(self, "sign", sign)
        object.__setattr__(self, "mantissa", mantissa)
        object.__setattr__(self, "exponent", exponent)

    def __setattr__(self, name, value):
        raise AttributeError("SignedLogValue is immutable")

    @classmethod
    def from_float(cls, value: float) -> "SignedLogValue":
        if math.isnan(value) or math.isinf(value):
            raise NonFiniteValueError("SignedLogValue.from_float", value)
        if value == 0.0:
            return cls(0)
        return cls(1 if value > 0 else -1, value, 0)

    @classmethod
    def from_log(cls, sign: int, log_abs: float) -> "SignedLogValue":
        if sign == 0 or log_abs == -math.inf:
            return cls(0)
        if not math.isfinite(log_abs):
            raise NonFiniteValueError("SignedLogValue.from_log", log_abs)
        e = math.floor(log_abs / LN2)
        return cls(sign, math.exp(log_abs - e * LN2), e)

    @classmethod
    def one(cls) -> "SignedLogValue":
        return cls(1, 0.5, 1)

    @classmethod
    def zero(cls) -> "SignedLogValue":
        return cls(0)

    @property
    def log_abs(self) -> float:
        if self.sign == 0:
            return -math.inf
        return math.log(self.mantissa) + self.exponent * LN2

    def __float__(self) -> float:
        if self.sign == 0:
            return 0.0
        try:
            return self.sign * math.ldexp(self.mantissa, self.exponent)
        except OverflowError:
            return self.sign * math.inf

    def __mul__(self, other):
        if not isinstance(other, SignedLogValue):
            other = SignedLogValue.from_float(float(other))
        return SignedLogValue(
            self.sign * other.sign, self.mantissa * other.mantissa, self.exponent + other.exponent
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, SignedLogValue):
            other = SignedLogValue.from_float(float(other))
        if other.sign == 0:
            raise ZeroDivisionError("division by a zero SignedLogValue")
        return SignedLogValue(
            self.sign * other.sign, self.mantissa / other.mantissa, self.exponent - other.exponent
        )

    def __pow__(self, k: int):
        if int(k) != k or k < 0:
            raise ValueError("only non-negative integer powers are supported")
        result = SignedLogValue.one()
        base = self
        k = int(k)
        while k:
            if k & 1:
                result = result * base
            base = base * base
            k >>= 1
        return result

    def __neg__(self):
        return SignedLogValue(-self.sign, self.mantissa, self.exponent)

    def __bool__(self):
        return self.sign != 0

    def __eq__(self, other):
        if not isinstance(other, SignedLogValue):
            return NotImplemented
        return (self.sign, self.mantissa, self.exponent) == (
            other.sign,
            other.mantissa,
            other.exponent,
        )

    def __hash__(self):
        return hash((self.sign, self.mantissa, self.exponent))

    def __repr__(self):
        return f"SignedLogValue(sign={self.sign}, log_abs={self.log_abs!r})"


def q_integer(m: int, ctx: QContext) -> float:
    """Return ``[m]_q = (q**m - 1)/(q - 1)``.

    Small ``m`` are summed as ``1 + q + ... + q**(m-1)``.  Otherwise
    ``expm1``/``log1p`` is used when ``q**m`` is close to 1, so that
    ``q = 1 + 1e-12`` still gives ``[m]_q`` to full relative precision.
    Overflow returns ``inf`` with a :class:`QIntegerOverflowWarning`.
    """
    if m < 0:
        raise ParameterError(f"q_integer needs m >= 0 (got {m})")
    if m == 0:
        return 0.0
    q = ctx.q
    if m <= _HORNER_MAX:
        # 1 + q + ... + q^(m-1): every step rounds monotonically, so [m] stays nondecreasing in q
        value = 1.0
        for _ in range(m - 1):
            value = value * q + 1.0
        return value
    d = q - 1.0
    growth = m * math.log1p(d)
    if growth > 709.0:
        value = math.inf
    elif growth > 0.5:
        value = (q**m - 1.0) / d
    else:
        value = math.expm1(growth) / d
    if math.isinf(value):
        warnings.warn(f"[{m}]_q overflows for q={q}", QIntegerOverflowWarning, stacklevel=2)
    return value


def log_q_integer(m: int, ctx: QContext) -> float:
    """Natural log of ``[m]_q``, finite for every ``m >= 1``."""
    if m < 1:
        raise ParameterError("log_q_integer needs m >= 1")
    d = ctx.q - 1.0
    growth = m * math.log1p(d)
    if growth - math.log(d) > 700.0:
        # [m] = q^m (1 - q^-m)/(q-1)
        return growth + math.log1p(-math.exp(-growth)) - math.log(d)
    return math.log(q_integer(m, ctx))


def _q_integer_slv(j: int, ctx: QContext) -> SignedLogValue:
    if j * math.log1p(ctx.q - 1.0) - math.log(ctx.q - 1.0) <= 700.0:
        return SignedLogValue.from_float(q_integer(j, ctx))
    return SignedLogValue.from_log(1, log_q_integer(j, ctx))


def q_factorial(m: int, ctx: QContext) -> SignedLogValue:
    """``[m]_q! = [1][2]...[m]`` with ``[0]! = 1``."""
    if m < 0:
        raise ParameterError(f"q_factorial needs m >= 0 (got {m})")
    acc = SignedLogValue.one()
    for j in range(1, m + 1):
        acc = acc * _q_integer_slv(j, ctx)
    return acc


def q_binomial(m: int, k: int, ctx: QContext) -> SignedLogValue:
    """Gaussian binomial ``[m]!/([k]! [m-k]!)``."""
    if not 0 <= k <= m:
        raise ParameterError(f"q_binomial needs 0 <= k <= m (got m={m}, k={k})")
    k = min(k, m - k)
    num = SignedLogValue.one()
    den = SignedLogValue.one()
    for i in range(1, k + 1):
        num = num * _q_integer_slv(m - k + i, ctx)
        den = den * _q_integer_slv(i, ctx)
    return num / den


def _checked(value, where):
    v = float(value)
    if not math.isfinite(v):
        raise NonFiniteValueError(where, v)
    return v


def q_derivative(f: Callable[[float], float], x: float, ctx: QContext) -> float:
    """Jackson q-derivative ``(f(qx) - f(x)) / ((q-1) x)``.

    At ``x = 0`` the limit is estimated from the quotient at ``h = 1e-6`` and
    ``h/2`` with one Richardson step.
    """
    q = ctx.q

    def quotient(t):
        fqt = _checked(f(q * t), f"q*x={q * t!r}")
        ft = _checked(f(t), f"x={t!r}")
        return (fqt - ft) / ((q - 1.0) * t)

    if x != 0:
        return quotient(x)
    h = 1e-6
    return 2.0 * quotient(h / 2.0) - quotient(h)


def eq_tail_log(t: float, q: float, tol: float = 1e-17) -> float:
    """``sum_{i>=0} log(1 - t q**-i)`` for small ``t`` (closed-form geometric sums)."""
    total = 0.0
    tm = 1.0
    log_q = math.log(q)
    for m in range(1, 400):
        tm *= t
        term = tm / (m * -math.expm1(-m * log_q))
        total -= term
        if term < tol:
            return total
    raise SeriesExhaustedError("e_q tail", 400, f"t={t}")


def e_q(z: float, ctx: QContext, policy: SeriesPolicy = DEFAULT_POLICY) -> SignedLogValue:
    """Jackson's entire q-exponential ``sum z^k / [k]_q!`` for q > 1.

    For ``z >= 0`` the positive series is summed.  For ``z < 0`` the product
    ``prod_j (1 + (q-1) z / q^(j+1))`` is used with explicit sign tracking, which
    avoids cancellation in the alternating series.  The sign is 0 exactly when a
    factor vanishes to within one ulp.
    """
    if not math.isfinite(z):
        raise NonFiniteValueError("e_q argument", z)
    if z == 0.0:
        return SignedLogValue.one()
    if z > 0:
        return _e_q_series(z, ctx, policy)
    return _e_q_product(-z, ctx, policy)


def _e_q_series(z, ctx, policy):
    log_z = math.log(z)
    logs = [0.0]
    log_fact = 0.0
    running = 0.0  # log of partial sum
    below = 0
    k = 0
    while True:
        k += 1
        if k > policy.max_terms:
            raise SeriesExhaustedError("e_q series", policy.max_terms, f"z={z}")
        log_fact += log_q_integer(k, ctx)
        lt = k * log_z - log_fact
        logs.append(lt)
        running = running + math.log1p(math.exp(lt - running)) if lt <= running else (
            lt + math.log1p(math.exp(running - lt))
        )
        past_peak = lt < logs[-2]
        if past_peak and lt < math.log(policy.rel_tol) + running:
            below += 1
            if below >= policy.post_peak_window:
                break
        else:
            below = 0
    top = max(logs)
    total = math.fsum(math.exp(lt - top) for lt in logs)
    return SignedLogValue.from_log(1, top + math.log(total))


def _e_q_product(w, ctx, policy):
    """e_q(-w) for w > 0."""
    q = ctx.q
    t = (q - 1.0) * w / q
    acc = SignedLogValue.one()
    j = 0
    while t >= _TAIL_SWITCH:
        factor = 1.0 - t
        if abs(factor) <= EPS:
            return SignedLogValue.zero()
        acc = acc * factor
        j += 1
        if j > policy.max_terms:
            raise SeriesExhaustedError("e_q product", policy.max_terms, f"z={-w}")
        t /= q
    tail = eq_tail_log(t, q, tol=policy.rel_tol * 1e-3)
    return acc * SignedLogValue.from_log(1, tail)


def E_q(z: float, ctx: QContext, policy: SeriesPolicy = DEFAULT_POLICY) -> float:
    """Inverted-base q-exponential ``sum q^(k(k-1)/2) z^k / [k]_q!``.

    Only defined here for ``|z| < 1/(q-1)``; other arguments raise
    :class:`DomainError`.
    """
    q = ctx.q
    radius = 1.0 / (q - 1.0)
    if not abs(z) < radius:
        raise DomainError(f"E_q needs |z| < 1/(q-1) = {radius!r} (got z={z!r})")
    if z == 0.0:
        return 1.0
    log_q = math.log(q)
    log_z = math.log(abs(z))
    negative = z < 0
    terms = [1.0]
    log_fact = 0.0
    below = 0
    k = 0
    while True:
        k += 1
        if k > policy.max_terms:
            raise SeriesExhaustedError("E_q series", policy.max_terms, f"z={z}")
        log_fact += log_q_integer(k, ctx)
        lt = 0.5 * k * (k - 1) * log_q + k * log_z - log_fact
        term = math.exp(lt)
        if negative and k % 2:
            term = -term
        terms.append(term)
        if abs(term) < policy.rel_tol * abs(math.fsum(terms)):
            below += 1
            if below >= policy.post_peak_window:
                break
        else:
            below = 0
    total = math.fsum(terms)
    peak = max(abs(t) for t in terms)
    if negative and peak > abs(total) * 1e3:
        # alternating series: redo the sum with enough bits to absorb the cancellation
        return _E_q_extended(z, q, len(terms), peak / max(abs(total), 1e-300))
    return total


def _E_q_extended(z, q, count, cancellation):
    bits = 53 + 30 + math.ceil(math.log2(cancellation))
    with mp.workprec(bits):
        Q, Z = mp.mpf(q), mp.mpf(z)
        term = total = mp.mpf(1)
        qk = mp.mpf(1)
        for k in range(1, count):
            term = term * qk * Z * (Q - 1) / (Q * qk - 1)
            qk *= Q
            total += term
        return float(total)
