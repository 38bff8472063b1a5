"""The q-Szász operator M_{n,q} for q > 1 and the classical Szász baseline.

Weights::

    s_k(x) = q^{-k(k-1)/2} [n]^k x^k / [k]! * e_q(-[n] q^{-k} x)

For ``[n] x > q/(q-1)`` some ``e_q`` factors are negative and the weights
alternate in sign with magnitudes far above 1 (around 1e39 for q=3, n=12,
x=5) while still summing to exactly 1.  Sums against the weights are
therefore formed in extended precision (mpmath).  The working precision is
chosen from a cheap double-precision scan of ``log|s_k|`` and raised further
if cancellation in a particular sum demands it.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import mpmath as mp
import numpy as np
from scipy.special import gammaln

from .errors import NonFiniteValueError, ParameterError, SeriesExhaustedError
from .qcore import (
    DEFAULT_POLICY,
    EPS,
    QContext,
    SeriesPolicy,
    SignedLogValue,
    e_q,
    eq_tail_log,
    log_q_integer,
    q_integer,
)

log = logging.getLogger(__name__)

_TAIL_SWITCH = 2.0**-10
_GUARD_BITS = 40
_MAX_PRECISION = 1 << 16


@dataclass(frozen=True)
class WeightTable:
    """Truncated weight sequence ``s_0..s_K`` at one point ``x``.

    ``weights`` and ``nodes`` are doubles for reporting.  ``exact_weights`` and
    ``exact_nodes`` hold the same values as mpmath numbers at ``precision``
    bits, and every sum taken by this module goes through them.
    """

    ctx: QContext
    x: float
    K: int
    weights: tuple
    nodes: tuple
    tail_bound: float
    partition_defect: float
    precision: int = 53
    log_abs_sum: float = 0.0
    exact_weights: tuple = field(default=(), repr=False, compare=False)
    exact_nodes: tuple = field(default=(), repr=False, compare=False)

    @property
    def has_negative_weights(self) -> bool:
        return any(w < 0 for w in self.weights)


@dataclass
class _Scan:
    K: int
    log_abs: list
    signs: list
    log_abs_sum: float
    tail_ratio: float


def _z_of(x: float, ctx: QContext) -> float:
    z = q_integer(ctx.n, ctx) * x
    if not math.isfinite(z):
        raise ParameterError(f"[n]x overflows for q={ctx.q}, n={ctx.n}, x={x}")
    return z


def _logaddexp(a: float, b: float) -> float:
    if a == -math.inf:
        return b
    if b == -math.inf:
        return a
    if a < b:
        a, b = b, a
    return a + math.log1p(math.exp(b - a))


def _scan(x: float, ctx: QContext, policy: SeriesPolicy) -> _Scan:
    """Double-precision pass over log|s_k|: truncation index and magnitudes.

    Stops at the first K past the magnitude peak where the step ratio
    ``s_{k+1}/s_k`` is below one and ``post_peak_window`` consecutive terms
    are under ``rel_tol * min(1, sum|s_k|)``.
    """
    if x == 0.0:
        return _Scan(0, [0.0], [1], 0.0, 0.0)
    q = ctx.q
    log_q = math.log(q)
    z = _z_of(x, ctx)
    log_z = math.log(z)
    log_t0 = math.log(q - 1.0) + log_z - log_q  # t_i = (q-1) z / q^(i+1)

    # factors 1 - t_i above the tail switch, then the closed-form tail
    factor_logs = []
    factor_signs = []
    i = 0
    while True:
        t = math.exp(log_t0 - i * log_q)
        if t < _TAIL_SWITCH:
            break
        f = 1.0 - t
        if abs(f) <= EPS:
            factor_logs.append(-math.inf)
            factor_signs.append(0)
        else:
            factor_logs.append(math.log(abs(f)))
            factor_signs.append(1 if f > 0 else -1)
        i += 1
        if i > policy.max_terms:
            raise SeriesExhaustedError("weight scan (e_q factors)", policy.max_terms, f"x={x}")
    J = len(factor_logs)
    suffix_log = [0.0] * (J + 1)
    suffix_sign = [1] * (J + 1)
    suffix_log[J] = eq_tail_log(math.exp(log_t0 - J * log_q), q)
    for k in range(J - 1, -1, -1):
        suffix_log[k] = suffix_log[k + 1] + factor_logs[k]
        suffix_sign[k] = suffix_sign[k + 1] * factor_signs[k]

    log_rel = math.log(policy.rel_tol)
    logs = []
    signs = []
    log_c = 0.0
    abs_sum = -math.inf
    peak = -math.inf
    below = 0
    k = 0
    while True:
        if k > 0:
            log_c += log_z - log_q_integer(k, ctx) - (k - 1) * log_q
        if k <= J:
            lp, sg = suffix_log[k], suffix_sign[k]
        else:
            lp, sg = eq_tail_log(math.exp(log_t0 - k * log_q), q), 1
        ls = log_c + lp if sg != 0 else -math.inf
        logs.append(ls)
        signs.append(sg)
        abs_sum = _logaddexp(abs_sum, ls)
        peak = max(peak, ls)

        t_k = math.exp(log_t0 - k * log_q)
        ratio = math.inf
        if t_k < 1.0:
            ratio = math.exp(log_z - log_q_integer(k + 1, ctx) - k * log_q - math.log1p(-t_k))
        if ratio < 1.0 and ls < peak and ls < log_rel + min(0.0, abs_sum):
            below += 1
            if below >= policy.post_peak_window:
                return _Scan(k, logs, signs, abs_sum, ratio)
        else:
            below = 0
        k += 1
        if k > policy.max_terms:
            raise SeriesExhaustedError(
                "q-Szász weight series", policy.max_terms, f"q={q}, n={ctx.n}, x={x}"
            )


def _mp_q_integers(q, count):
    out = [mp.mpf(0)]
    for _ in range(count):
        out.append(out[-1] * q + 1)
    return out


def _mp_eq_neg(a, q, i0, prec):
    """``prod_{i>=i0} (1 - a/q^(i+1))`` at the current mp precision."""
    p = mp.mpf(1)
    t = a / q ** (i0 + 1)
    switch = mp.mpf(_TAIL_SWITCH)
    while t >= switch:
        p *= 1 - t
        t /= q
    # sum_i log(1 - t q^-i) = -sum_m t^m / (m (1 - q^-m))
    tiny = mp.mpf(2) ** (-prec - 8)
    s = mp.mpf(0)
    tm = mp.mpf(1)
    m = 0
    while True:
        m += 1
        tm *= t
        term = tm / (m * (1 - q ** (-m)))
        s += term
        if term < tiny:
            break
    return p * mp.exp(-s)


def _exact_weights(x, ctx, K, prec):
    with mp.workprec(prec):
        q = mp.mpf(ctx.q)
        qints = _mp_q_integers(q, max(K, ctx.n) + 1)
        N = qints[ctx.n]
        z = N * mp.mpf(x)
        a = (q - 1) * z
        c = [mp.mpf(1)]
        qpow = mp.mpf(1)  # q^(k-1)
        for k in range(1, K + 1):
            c.append(c[-1] * z / (qints[k] * qpow))
            qpow *= q
        P = _mp_eq_neg(a, q, K, prec)
        s = [None] * (K + 1)
        s[K] = c[K] * P
        qpow = q**K
        for k in range(K - 1, -1, -1):
            P *= 1 - a / qpow
            qpow /= q
            s[k] = c[k] * P
        nodes = [qints[k] / N for k in range(K + 1)]
        defect = abs(mp.fsum(s) - 1)
    return tuple(s), tuple(nodes), float(defect)


def _precision_for(log_abs_sum: float, K: int, policy: SeriesPolicy) -> int:
    bits = 53 + _GUARD_BITS + math.ceil(-math.log2(policy.rel_tol))
    bits += max(0, math.ceil(log_abs_sum / math.log(2.0))) + math.ceil(math.log2(K + 2))
    return int(min(bits, _MAX_PRECISION))


def weight_table(
    x: float,
    ctx: QContext,
    policy: SeriesPolicy = DEFAULT_POLICY,
    precision: int | None = None,
) -> WeightTable:
    """Truncated weights ``s_{n,0..K}(q; x)`` and nodes ``[k]/[n]``."""
    x = float(x)
    if not x >= 0 or not math.isfinite(x):
        raise ParameterError(f"x must be finite and >= 0 (got {x})")
    if x == 0.0:
        one = mp.mpf(1)
        return WeightTable(ctx, 0.0, 0, (1.0,), (0.0,), 0.0, 0.0, 53, 0.0, (one,), (mp.mpf(0),))
    scan = _scan(x, ctx, policy)
    prec = precision or _precision_for(scan.log_abs_sum, scan.K, policy)
    exact, exact_nodes, defect = _exact_weights(x, ctx, scan.K, prec)
    r = scan.tail_ratio
    tail = math.exp(scan.log_abs[-1]) * r / (1.0 - r) if r < 1.0 else math.inf
    return WeightTable(
        ctx=ctx,
        x=x,
        K=scan.K,
        weights=tuple(float(s) for s in exact),
        nodes=tuple(float(v) for v in exact_nodes),
        tail_bound=tail,
        partition_defect=defect,
        precision=prec,
        log_abs_sum=scan.log_abs_sum,
        exact_weights=exact,
        exact_nodes=exact_nodes,
    )


def _weight_slv(k, x, ctx, policy):
    z = _z_of(x, ctx)
    log_q = math.log(ctx.q)
    log_fact = sum(log_q_integer(j, ctx) for j in range(1, k + 1))
    coeff = SignedLogValue.from_log(1, k * math.log(z) - log_fact - 0.5 * k * (k - 1) * log_q)
    return coeff * e_q(-z * math.exp(-k * log_q), ctx, policy)


def weight(k: int, x: float, ctx: QContext, policy: SeriesPolicy = DEFAULT_POLICY) -> float:
    """Single weight ``s_{n,k}(q; x)`` assembled in signed-log form."""
    if k < 0:
        raise ParameterError("k must be >= 0")
    if not x >= 0:
        raise ParameterError(f"x must be >= 0 (got {x})")
    if x == 0.0:
        return 1.0 if k == 0 else 0.0
    return float(_weight_slv(k, x, ctx, policy))


class NodeValues:
    """Values of ``f`` at the nodes ``[k]/[n]``, cached across points ``x``.

    ``f`` is called with mpmath numbers; functions written with plain
    arithmetic or ``mpmath`` stay exact, anything else falls back to a double
    evaluation (flagged in ``float_fallback``).
    """

    def __init__(self, f: Callable):
        self.f = f
        self._cache = {}
        self.float_fallback = False

    def _eval(self, t):
        try:
            v = self.f(t)
            if isinstance(v, (mp.mpf, int)):
                return mp.mpf(v)
        except (TypeError, AttributeError):
            pass
        self.float_fallback = True
        return mp.mpf(float(self.f(float(t))))

    def at(self, k: int, node, prec: int):
        hit = self._cache.get(k)
        if hit is not None and hit[0] >= prec:
            return hit[1]
        with mp.workprec(prec):
            v = self._eval(node)
        self._cache[k] = (prec, v)
        return v

    def point(self, x: float, prec: int):
        with mp.workprec(prec):
            return self._eval(mp.mpf(x))


def _sum_against(table: WeightTable, values: NodeValues, centered: bool):
    prec = table.precision
    with mp.workprec(prec):
        fx = values.point(table.x, prec) if centered else mp.mpf(0)
        if centered and not mp.isfinite(fx):
            raise NonFiniteValueError(f"x={table.x!r}", float(fx))
        terms = []
        for k, (node, s) in enumerate(zip(table.exact_nodes, table.exact_weights)):
            v = values.at(k, node, prec)
            if not mp.isfinite(v):
                if s == 0:
                    continue
                raise NonFiniteValueError(f"node {float(node)!r} (k={k})", float(v))
            terms.append((v - fx) * s)
        total = mp.fsum(terms)
        mass = mp.fsum(abs(t) for t in terms)
    return total, mass


def _evaluate(f, x, ctx, policy, centered, values=None):
    values = values or NodeValues(f)
    table = weight_table(x, ctx, policy)
    total, mass = _sum_against(table, values, centered)
    # raise precision until the bits lost to cancellation are covered
    for _ in range(4):
        if mass == 0 or total == 0:
            break
        lost = float(mp.log(mass / abs(total), 2))
        need = int(lost + math.ceil(-math.log2(policy.rel_tol)) + _GUARD_BITS + math.log2(table.K + 2))
        if need <= table.precision or table.precision >= _MAX_PRECISION:
            break
        table = weight_table(x, ctx, policy, precision=min(need + 16, _MAX_PRECISION))
        total, mass = _sum_against(table, values, centered)
    if values.float_fallback and mass != 0 and float(mass) * EPS > policy.rel_tol * max(abs(float(total)), 1e-300):
        log.warning(
            "f does not accept mpmath arguments; result at x=%r is limited to about %.1e absolute",
            x,
            float(mass) * EPS,
        )
    return float(total)


def apply_operator(
    f: Callable, x: float, ctx: QContext, policy: SeriesPolicy = DEFAULT_POLICY
) -> float:
    """``M_{n,q}(f; x) = sum_k f([k]/[n]) s_k(x)`` over the truncated table."""
    return _evaluate(f, x, ctx, policy, centered=False)


def operator_deviation(
    f: Callable, x: float, ctx: QContext, policy: SeriesPolicy = DEFAULT_POLICY
) -> float:
    """``M_{n,q}(f; x) - f(x)``, with the subtraction done before rounding.

    Uses ``sum_k (f(node_k) - f(x)) s_k``, which equals the difference because
    the weights sum to one; small errors such as ``x/[n]`` for ``f = t^2`` keep
    full relative accuracy even when ``[n]`` is 1e12.
    """
    return _evaluate(f, x, ctx, policy, centered=True)


def deviation_on_grid(
    f: Callable, xs: Sequence[float], ctx: QContext, policy: SeriesPolicy = DEFAULT_POLICY
) -> np.ndarray:
    """``M(f;x) - f(x)`` for every ``x`` in ``xs``; f is evaluated once per node."""
    values = NodeValues(f)
    return np.array([_evaluate(f, float(x), ctx, policy, True, values) for x in xs])


def apply_on_grid(
    f: Callable, xs: Sequence[float], ctx: QContext, policy: SeriesPolicy = DEFAULT_POLICY
) -> np.ndarray:
    values = NodeValues(f)
    return np.array([_evaluate(f, float(x), ctx, policy, False, values) for x in xs])


# -- classical Szász-Mirakjan baseline -------------------------------------------------


def _poisson_weights(x: float, n: int, policy: SeriesPolicy):
    lam = n * x
    if lam == 0.0:
        return np.array([1.0])
    log_rel = math.log(policy.rel_tol)
    span = int(lam + 12.0 * math.sqrt(lam + 1.0) + 50)
    while True:
        count = min(span, policy.max_terms + 1)
        k = np.arange(count, dtype=float)
        logw = k * math.log(lam) - lam - gammaln(k + 1.0)
        # log of running sum of weights
        running = np.logaddexp.accumulate(logw)
        ok = (k > lam) & (logw < log_rel + running)
        # need post_peak_window consecutive hits
        w = policy.post_peak_window
        run = np.convolve(ok.astype(int), np.ones(w, dtype=int), mode="valid") == w
        hits = np.flatnonzero(run)
        if hits.size:
            K = int(hits[0] + w - 1)
            return np.exp(logw[: K + 1])
        if count > policy.max_terms:
            raise SeriesExhaustedError("classical Szász series", policy.max_terms, f"n={n}, x={x}")
        span *= 2


def _values_at(f, ts):
    try:
        out = np.asarray(f(ts), dtype=float)
        if out.shape == ts.shape:
            return out
    except (TypeError, ValueError, AttributeError):
        pass
    return np.array([float(f(float(t))) for t in ts])


def classical_szasz(
    f: Callable, x: float, n: int, policy: SeriesPolicy = DEFAULT_POLICY, centered: bool = False
) -> float:
    """Classical ``S_n(f; x) = sum_k f(k/n) e^{-nx} (nx)^k / k!``.

    With ``centered=True`` returns ``S_n(f; x) - f(x)`` summed termwise.
    """
    if n < 1 or int(n) != n:
        raise ParameterError(f"n must be a positive integer (got {n})")
    if not x >= 0:
        raise ParameterError(f"x must be >= 0 (got {x})")
    w = _poisson_weights(float(x), int(n), policy)
    nodes = np.arange(w.size) / n
    vals = _values_at(f, nodes)
    bad = np.flatnonzero(~np.isfinite(vals) & (w > 0))
    if bad.size:
        k = int(bad[0])
        raise NonFiniteValueError(f"node {nodes[k]!r} (k={k})", float(vals[k]))
    if centered:
        vals = vals - float(f(float(x)))
    return math.fsum(vals * w)


# -- diagnostics ---------------------------------------------------------------------


def _mp_single_weight(k, x, ctx, prec):
    with mp.workprec(prec):
        q = mp.mpf(ctx.q)
        qints = _mp_q_integers(q, max(k, ctx.n))
        N = qints[ctx.n]
        z = N * mp.mpf(x)
        c = mp.mpf(1)
        for j in range(1, k + 1):
            c = c * z / (qints[j] * q ** (j - 1))
        return c * _mp_eq_neg((q - 1) * z, q, k, prec), qints[k], N


def weight_identity_residual(
    k: int, x: float, ctx: QContext, policy: SeriesPolicy = DEFAULT_POLICY
) -> float:
    """``x D_q s_k(x) - [n]([k]/[n] - x) s_k(x)``; zero up to rounding.

    Both weights are formed in extended precision, so the residual reflects
    the identity rather than double-precision cancellation.
    """
    if not x > 0:
        raise ParameterError("weight_identity_residual needs x > 0")
    qx = ctx.q * x
    logs = [_weight_slv(k, v, ctx, policy).log_abs for v in (x, qx)]
    logs.append(math.log(q_integer(ctx.n, ctx) * qx))
    prec = _precision_for(max(0.0, *logs), k, policy)
    s_x, qk, N = _mp_single_weight(k, x, ctx, prec)
    s_qx, _, _ = _mp_single_weight(k, qx, ctx, prec)
    with mp.workprec(prec):
        q = mp.mpf(ctx.q)
        xm = mp.mpf(x)
        lhs = (s_qx - s_x) / (q - 1)
        rhs = (qk - N * xm) * s_x
        return float(lhs - rhs)


@dataclass
class PositivityReport:
    """Negative weights and e_q zeros met while scanning a grid of x."""

    ctx: QContext
    negative_weights: list  # (k, x, weight)
    zeros: list  # (j, z_j) with z_j = -q^(j+1)/(q-1)

    @property
    def positive(self) -> bool:
        return not self.negative_weights


def positivity_scan(
    ctx: QContext, x_grid: Sequence[float], policy: SeriesPolicy = DEFAULT_POLICY
) -> PositivityReport:
    """Record every weight below -1e-13 and the e_q zeros inside the scanned range.

    This is a diagnostic, it never raises on negative weights.
    """
    xs = [float(v) for v in x_grid]
    if any(not (math.isfinite(v) and v >= 0) for v in xs):
        raise ParameterError("x_grid must be finite and non-negative")
    negatives = []
    for x in xs:
        if x == 0.0:
            continue
        scan = _scan(x, ctx, policy)
        for k, (ls, sg) in enumerate(zip(scan.log_abs, scan.signs)):
            if sg < 0 and ls > -math.inf:
                w = -math.exp(ls) if ls < 709.0 else -math.inf
                if w < -1e-13:
                    negatives.append((k, x, w))
    zeros = []
    if xs:
        lowest = -q_integer(ctx.n, ctx) * max(xs)
        q = ctx.q
        j = 0
        while True:
            zj = -(q ** (j + 1)) / (q - 1.0)
            if zj < lowest:
                break
            zeros.append((j, zj))
            j += 1
    return PositivityReport(ctx, negatives, zeros)
