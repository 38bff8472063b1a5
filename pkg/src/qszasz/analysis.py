"""Weighted-space tools and the experiment harness.

Suprema are maxima over a uniform grid on ``[0, x_max]``.  Constants that
the theory only proves to exist are never assumed; the harness reports the
observed ratio of left to right side instead.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import NonFiniteValueError, ParameterError, SeriesExhaustedError
from .operator import classical_szasz, deviation_on_grid, operator_deviation
from .qcore import DEFAULT_POLICY, QContext, SeriesPolicy, q_integer

log = logging.getLogger(__name__)

MODULUS_SUBGRID = 32
PROFILE_POINTS = 256


@dataclass(frozen=True)
class WeightedFunction:
    """A function in the weighted space C_p, optionally with derivatives 2..4.

    A supplied ``f2`` is spot-checked against central differences at three
    points.
    """

    f: Callable
    p: int = 0
    f2: Callable | None = None
    f3: Callable | None = None
    f4: Callable | None = None

    def __post_init__(self):
        if self.p < 0 or int(self.p) != self.p:
            raise ParameterError(f"weight order p must be a non-negative integer (got {self.p})")
        if self.f2 is not None:
            h = 1e-3
            for x in (0.5, 1.0, 2.0):
                fd = (float(self.f(x + h)) - 2.0 * float(self.f(x)) + float(self.f(x - h))) / h**2
                exact = float(self.f2(x))
                if abs(fd - exact) > 1e-4 * (1.0 + abs(exact)):
                    raise ParameterError(
                        f"f2 disagrees with the finite-difference second derivative at x={x}: "
                        f"{exact} vs {fd}"
                    )


@dataclass(frozen=True)
class GridSpec:
    x_max: float = 10.0
    count: int = 2001
    spacing: str = "uniform"

    def __post_init__(self):
        if self.count < 2:
            raise ParameterError("grid needs at least 2 points")
        if not self.x_max > 0:
            raise ParameterError("x_max must be positive")
        if self.spacing != "uniform":
            raise ParameterError("only uniform spacing is supported")

    def points(self) -> np.ndarray:
        return np.linspace(0.0, self.x_max, self.count)

    @property
    def step(self) -> float:
        return self.x_max / (self.count - 1)


@dataclass
class ExperimentReport:
    """Rows keyed by column name, plus an optional log-linear fit."""

    columns: tuple
    rows: list = field(default_factory=list)
    fitted_slope: float | None = None
    fitted_intercept: float | None = None
    meta: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        return np.array([row[name] for row in self.rows], dtype=float)


def poly_weight(x, p: int):
    """``w_p(x) = 1/(1 + x^p)``, with ``w_0 = 1``."""
    if p == 0:
        return np.ones_like(np.asarray(x, dtype=float))
    return 1.0 / (1.0 + np.asarray(x, dtype=float) ** p)


def evaluate(f: Callable, xs) -> np.ndarray:
    """``f`` on an array of points as doubles; non-finite values raise."""
    xs = np.asarray(xs, dtype=float)
    try:
        vals = np.asarray(f(xs), dtype=float)
        if vals.shape != xs.shape:
            raise ValueError
    except (TypeError, ValueError, AttributeError):
        vals = np.array([float(f(float(x))) for x in xs.ravel()]).reshape(xs.shape)
    bad = ~np.isfinite(vals)
    if bad.any():
        i = np.flatnonzero(bad.ravel())[0]
        raise NonFiniteValueError(f"x={xs.ravel()[i]!r}", float(vals.ravel()[i]))
    return vals


def weighted_norm(wf: WeightedFunction, grid: GridSpec = GridSpec()) -> float:
    """Grid approximation of ``||f||_p = sup w_p(x) |f(x)|``."""
    xs = grid.points()
    return float(np.max(poly_weight(xs, wf.p) * np.abs(evaluate(wf.f, xs))))


def _second_difference_norms(f, p, hs, xs):
    """``||Delta_h^2 f||_p`` on the grid for each step in ``hs``."""
    w = poly_weight(xs, p)
    fx = evaluate(f, xs)
    out = np.empty(len(hs))
    for i, h in enumerate(hs):
        d2 = evaluate(f, xs + 2.0 * h) - 2.0 * evaluate(f, xs + h) + fx
        out[i] = np.max(w * np.abs(d2))
    return out


def modulus_steps(delta: float) -> np.ndarray:
    """Geometric subgrid of ``(0, delta]`` used for the sup over step sizes."""
    return np.geomspace(delta * 2.0**-10, delta, MODULUS_SUBGRID)


def second_modulus(wf: WeightedFunction, delta: float, grid: GridSpec = GridSpec()) -> float:
    """``omega_p^2(f; delta) = sup_{0<h<=delta} ||Delta_h^2 f||_p``."""
    if not delta > 0:
        raise ParameterError("delta must be positive")
    return float(np.max(_second_difference_norms(wf.f, wf.p, modulus_steps(delta), grid.points())))


def first_modulus(f: Callable, delta: float, grid: GridSpec = GridSpec()) -> float:
    """Uniform modulus of continuity: max ``|f(x) - f(y)|`` over grid pairs ``|x - y| <= delta``."""
    if not delta > 0:
        raise ParameterError("delta must be positive")
    vals = evaluate(f, grid.points())
    reach = min(int(math.floor(delta / grid.step * (1.0 + 1e-12))), grid.count - 1)
    best = 0.0
    for d in range(1, reach + 1):
        best = max(best, float(np.max(np.abs(vals[d:] - vals[:-d]))))
    return best


def _gauss_legendre(points: int):
    nodes, weights = np.polynomial.legendre.leggauss(points)
    return nodes, weights


def _steklov_mean(f, h, xs, quad_points):
    """``f_h`` on an array of points by tensor Gauss-Legendre on ``[0, h/2]^2``."""
    xi, om = _gauss_legendre(quad_points)
    s = 0.25 * h * (1.0 + xi)
    u = (s[:, None] + s[None, :]).ravel()
    w2 = (om[:, None] * om[None, :]).ravel() / 4.0  # weights sum to 1
    out = np.empty(len(xs))
    chunk = max(1, 2**20 // u.size)
    for start in range(0, len(xs), chunk):
        x = xs[start : start + chunk, None]
        g = 2.0 * evaluate(f, x + u[None, :]) - evaluate(f, x + 2.0 * u[None, :])
        out[start : start + chunk] = g @ w2
    return out


def _steklov_second(f, h, xs):
    def d2(step):
        return evaluate(f, xs + 2 * step) - 2 * evaluate(f, xs + step) + evaluate(f, xs)

    return (8.0 * d2(h / 2.0) - d2(h)) / h**2


def steklov(wf: WeightedFunction, h: float, x: float, quad_points: int = 64):
    """Steklov mean ``f_h(x)`` and its second derivative ``f_h''(x)``.

    The second derivative uses ``h^-2 (8 Delta_{h/2}^2 f(x) - Delta_h^2 f(x))``.
    """
    if not h > 0:
        raise ParameterError("h must be positive")
    if not x >= 0:
        raise ParameterError("x must be >= 0")
    xs = np.array([float(x)])
    return float(_steklov_mean(wf.f, h, xs, quad_points)[0]), float(_steklov_second(wf.f, h, xs)[0])


def steklov_report(
    wf: WeightedFunction,
    hs: Sequence[float],
    grid: GridSpec = GridSpec(),
    quad_points: int = 64,
) -> ExperimentReport:
    """Per h: ``||f - f_h||_p``, ``omega_p^2(f; h)``, and ``||f_h''||_p h^2 / omega_p^2(f; h)``."""
    xs = grid.points()
    w = poly_weight(xs, wf.p)
    fx = evaluate(wf.f, xs)
    report = ExperimentReport(("h", "norm_f_minus_fh", "omega2", "bound_holds", "fh2_ratio"))
    for h in hs:
        fh = _steklov_mean(wf.f, h, xs, quad_points)
        dist = float(np.max(w * np.abs(fx - fh)))
        om = second_modulus(wf, h, grid)
        fh2 = float(np.max(w * np.abs(_steklov_second(wf.f, h, xs))))
        report.rows.append(
            {
                "h": float(h),
                "norm_f_minus_fh": dist,
                "omega2": om,
                "bound_holds": int(dist <= om * (1.0 + 1e-6)),
                "fh2_ratio": fh2 * h * h / om if om > 0 else math.nan,
            }
        )
    return report


def _fit(xs, ys):
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    ok = np.isfinite(xs) & np.isfinite(ys)
    if ok.sum() < 2:
        return None, None
    slope, intercept = np.polyfit(xs[ok], ys[ok], 1)
    return float(slope), float(intercept)


def _deviations(f, xs, q, n, policy, classical):
    if classical:
        return np.array([classical_szasz(f, float(x), n, policy, centered=True) for x in xs])
    return deviation_on_grid(f, xs, QContext(q, n), policy)


def convergence_experiment(
    wf: WeightedFunction,
    q: float | None,
    n_range: Sequence[int],
    grid: GridSpec = GridSpec(),
    policy: SeriesPolicy = DEFAULT_POLICY,
    classical: bool = False,
) -> ExperimentReport:
    """Weighted sup error ``sup w_p(x) |M(f;x) - f(x)|`` for each n.

    For q > 1 the slope of ``ln(error)`` is fitted against n; for the
    classical baseline (``classical=True``) against ``ln n``.  A row whose
    series does not converge is kept with NaN error and listed in ``failures``.
    """
    ns = [int(n) for n in n_range]
    if not ns:
        raise ParameterError("n_range is empty")
    if not classical:
        QContext(q, 1)  # validates q
    xs = grid.points()
    w = poly_weight(xs, wf.p)
    report = ExperimentReport(("n", "q_integer_n", "sup_error", "log_error"))
    report.meta.update(q=q, p=wf.p, classical=classical, abscissa="ln n" if classical else "n")
    for n in ns:
        qn = float(n) if classical else q_integer(n, QContext(q, n))
        try:
            dev = _deviations(wf.f, xs, q, n, policy, classical)
            err = float(np.max(w * np.abs(dev)))
        except SeriesExhaustedError as exc:
            report.failures.append({"n": n, "reason": str(exc)})
            log.warning("n=%d: %s", n, exc)
            err = math.nan
        report.rows.append(
            {
                "n": n,
                "q_integer_n": qn,
                "sup_error": err,
                "log_error": math.log(err) if err > 0 else (-math.inf if err == 0 else math.nan),
            }
        )
    abscissa = [math.log(r["n"]) if classical else r["n"] for r in report.rows]
    report.fitted_slope, report.fitted_intercept = _fit(abscissa, report.column("log_error"))
    return report


def voronovskaja_scan(
    wf: WeightedFunction,
    q: float,
    x: float,
    n_range: Sequence[int],
    policy: SeriesPolicy = DEFAULT_POLICY,
) -> ExperimentReport:
    """``V_n = [n] (M_{n,q}(f; x) - f(x))`` next to two candidate limits.

    ``paper_limit`` is ``x f''(x) / 2``.  ``diagnostic_limit`` adds the third
    and fourth central-moment contributions ``(q-1) x^2 f'''/6`` and
    ``(q-1)^2 x^3 f''''/24`` (NaN unless both derivatives are supplied).  No
    claim is made about which one V_n approaches.
    """
    if wf.f2 is None:
        raise ParameterError("voronovskaja_scan needs the second derivative f2")
    if not x > 0:
        raise ParameterError("voronovskaja_scan needs x > 0")
    half_f2 = 0.5 * x * float(wf.f2(x))
    diag = math.nan
    if wf.f3 is not None and wf.f4 is not None:
        diag = (
            half_f2
            + (q - 1.0) * x * x / 6.0 * float(wf.f3(x))
            + (q - 1.0) ** 2 * x**3 / 24.0 * float(wf.f4(x))
        )
    report = ExperimentReport(("n", "V_n", "paper_limit", "diagnostic_limit"))
    report.meta.update(q=q, x=x)
    for n in n_range:
        ctx = QContext(q, int(n))
        report.rows.append(
            {
                "n": int(n),
                "V_n": ctx.qn * operator_deviation(wf.f, x, ctx, policy),
                "paper_limit": half_f2,
                "diagnostic_limit": diag,
            }
        )
    return report


BOUND_MODES = ("local", "global", "sqrtmod")


def bound_check(
    mode: str,
    wf: WeightedFunction,
    q: float,
    n_range: Sequence[int],
    grid: GridSpec = GridSpec(),
    policy: SeriesPolicy = DEFAULT_POLICY,
) -> ExperimentReport:
    """Compare the operator error with a theorem's right-hand side, per n.

    ``sqrtmod``: ``lhs = sup_x |M(f;x) - f(x)|``, ``rhs = 2 omega(f*; [n]^-1/2)``
    with ``f*(z) = f(z^2)`` on ``[0, sqrt(x_max)]``.  Violations are listed in
    ``meta["violations"]``.

    ``local``: ratio ``w_p(x)|M(g;x) - g(x)| / (||g''||_p x/[n])``, maximised
    over x > 0.

    ``global``: ratio ``w_p(x)|M(f;x) - f(x)| / omega_p^2(f; sqrt(x/[n]))``,
    maximised over x > 0; the modulus comes from a monotone profile over a
    256-point geometric set of steps.

    For ``local`` and ``global`` the largest ratio over n is the fitted
    constant (``meta["fitted_constant"]``).
    """
    if mode not in BOUND_MODES:
        raise ParameterError(f"mode must be one of {BOUND_MODES}")
    ns = [int(n) for n in n_range]
    if not ns:
        raise ParameterError("n_range is empty")
    xs = grid.points()
    w = poly_weight(xs, wf.p)
    report = ExperimentReport(("n", "lhs", "rhs", "ratio"))
    report.meta.update(mode=mode, q=q, p=wf.p)

    if mode == "local":
        if wf.f2 is None:
            raise ParameterError("local mode needs the second derivative f2")
        g2 = weighted_norm(WeightedFunction(wf.f2, wf.p), grid)
    if mode == "sqrtmod":
        zgrid = GridSpec(math.sqrt(grid.x_max), grid.count)

        def fstar(z):
            return wf.f(z * z)

    if mode == "global":
        qn_min = min(q_integer(n, QContext(q, n)) for n in ns)
        qn_max = max(q_integer(n, QContext(q, n)) for n in ns)
        h_hi = math.sqrt(grid.x_max / qn_min)
        h_lo = math.sqrt(xs[1] / qn_max) * 2.0**-10
        steps = np.geomspace(h_lo, h_hi, PROFILE_POINTS)
        profile = np.maximum.accumulate(_second_difference_norms(wf.f, wf.p, steps, xs))

        def omega(delta):
            idx = np.searchsorted(steps, delta * (1.0 + 1e-12), side="right") - 1
            return np.where(idx >= 0, profile[np.clip(idx, 0, None)], 0.0)

    positive = xs > 0
    for n in ns:
        ctx = QContext(q, n)
        qn = ctx.qn
        dev = deviation_on_grid(wf.f, xs, ctx, policy)
        if mode == "sqrtmod":
            lhs = float(np.max(np.abs(dev)))
            rhs = 2.0 * first_modulus(fstar, math.sqrt(1.0 / qn), zgrid)
        else:
            err = (w * np.abs(dev))[positive]
            if mode == "local":
                shape = g2 * xs[positive] / qn
            else:
                shape = omega(np.sqrt(xs[positive] / qn))
            with np.errstate(divide="ignore", invalid="ignore"):
                ratios = np.where(shape > 0, err / shape, np.where(err > 0, np.inf, 0.0))
            i = int(np.argmax(ratios))
            lhs, rhs = float(err[i]), float(shape[i])
        ratio = lhs / rhs if rhs > 0 else (math.inf if lhs > 0 else 0.0)
        report.rows.append({"n": n, "lhs": lhs, "rhs": rhs, "ratio": ratio})

    if mode == "sqrtmod":
        report.meta["violations"] = [r["n"] for r in report.rows if not r["lhs"] <= r["rhs"]]
    else:
        ratios = report.column("ratio")
        report.meta["fitted_constant"] = float(np.max(ratios))
        finite = ratios[np.isfinite(ratios) & (ratios > 0)]
        report.meta["constant_spread"] = float(finite.max() / finite.min()) if finite.size else math.nan
    return report
