import math

import mpmath as mp
import numpy as np
import pytest

from qszasz import (
    GridSpec,
    QContext,
    SeriesPolicy,
    WeightedFunction,
    bound_check,
    convergence_experiment,
    first_modulus,
    moment_polynomial,
    parse_function_spec,
    q_integer,
    second_modulus,
    steklov,
    steklov_report,
    voronovskaja_scan,
    weighted_norm,
)
from qszasz.errors import NonFiniteValueError, ParameterError

SMALL = GridSpec(10.0, 201)


def sq(t):
    return t * t


# -- types -------------------------------------------------------------------------


def test_grid_validation():
    assert GridSpec().count == 2001 and GridSpec().x_max == 10.0
    with pytest.raises(ParameterError):
        GridSpec(count=1)
    with pytest.raises(ParameterError):
        GridSpec(x_max=0)
    with pytest.raises(ParameterError):
        GridSpec(spacing="log")
    pts = GridSpec(2.0, 5).points()
    assert list(pts) == [0.0, 0.5, 1.0, 1.5, 2.0]


def test_weighted_function_checks_f2():
    WeightedFunction(sq, 2, lambda t: 2.0 + 0 * t)
    with pytest.raises(ParameterError):
        WeightedFunction(sq, 2, lambda t: 3.0 + 0 * t)
    with pytest.raises(ParameterError):
        WeightedFunction(sq, -1)


# -- norms and moduli --------------------------------------------------------------


def test_weighted_norm_examples():
    assert weighted_norm(WeightedFunction(lambda t: -3.5 + 0 * t, 0)) == 3.5
    assert weighted_norm(WeightedFunction(sq, 2)) == pytest.approx(100 / 101, rel=1e-15)
    assert weighted_norm(WeightedFunction(lambda t: t**3, 2)) == pytest.approx(1000 / 101, rel=1e-15)


def test_weighted_norm_non_finite_names_x():
    with pytest.raises(NonFiniteValueError, match="x="), np.errstate(divide="ignore"):
        weighted_norm(WeightedFunction(lambda t: 1.0 / (t - 5.0), 0), GridSpec(10.0, 11))


def test_second_modulus_examples():
    assert second_modulus(WeightedFunction(lambda t: 3 * t - 1, 0), 0.7) == pytest.approx(0.0, abs=1e-12)
    for d in (0.05, 0.3, 1.0):
        assert second_modulus(WeightedFunction(sq, 0), d) == pytest.approx(2 * d * d, rel=1e-12)


def test_second_modulus_expneg_against_brute_force():
    f = lambda t: np.exp(-t)  # noqa: E731
    grid = GridSpec(10.0, 401)
    xs = grid.points()
    hs = np.linspace(1e-4, 0.1, 2000)
    brute = max(np.max(np.abs(f(xs + 2 * h) - 2 * f(xs + h) + f(xs))) for h in hs)
    got = second_modulus(WeightedFunction(f, 0), 0.1, grid)
    assert got == pytest.approx(brute, rel=1e-10)
    assert got == pytest.approx((1 - math.exp(-0.1)) ** 2, rel=1e-12)


def test_second_modulus_rejects_bad_delta():
    with pytest.raises(ParameterError):
        second_modulus(WeightedFunction(sq, 0), 0.0)


def test_first_modulus_examples():
    assert first_modulus(lambda t: t, 0.25, GridSpec(10.0, 2001)) == pytest.approx(0.25, rel=1e-12)
    assert first_modulus(lambda t: 4.0 + 0 * t, 0.5) == 0.0
    fstar = lambda z: np.sqrt(z * z)  # noqa: E731
    zgrid = GridSpec(math.sqrt(10.0), 2001)
    # the largest grid lag not exceeding delta
    assert 0.1 - zgrid.step < first_modulus(fstar, 0.1, zgrid) <= 0.1


def test_first_modulus_against_pairwise_oracle():
    f = lambda t: np.sin(3 * t)  # noqa: E731
    grid = GridSpec(2.0, 81)
    xs = grid.points()
    vals = f(xs)
    brute = max(
        abs(vals[i] - vals[j]) for i in range(len(xs)) for j in range(len(xs)) if abs(xs[i] - xs[j]) <= 0.3 + 1e-12
    )
    assert first_modulus(f, 0.3, grid) == pytest.approx(brute, rel=1e-15)


# -- Steklov means -----------------------------------------------------------------


def test_steklov_affine():
    wf = WeightedFunction(lambda t: 2.0 - 0.5 * t, 0)
    fh, fh2 = steklov(wf, 0.3, 1.4)
    assert fh == pytest.approx(2.0 - 0.7, abs=1e-10)
    assert fh2 == pytest.approx(0.0, abs=1e-10)


def test_steklov_square():
    _, fh2 = steklov(WeightedFunction(sq, 2), 0.5, 1.0)
    assert fh2 == pytest.approx(2.0, rel=1e-12)


def test_steklov_mean_against_adaptive_quadrature():
    x, h = 0.7, 0.2
    wf = WeightedFunction(lambda t: np.exp(-t) * np.cos(t), 0)
    fh, _ = steklov(wf, h, x)
    g = lambda s, t: 2 * mp.exp(-(x + s + t)) * mp.cos(x + s + t) - mp.exp(-(x + 2 * (s + t))) * mp.cos(x + 2 * (s + t))  # noqa: E731
    ref = 4 / h**2 * mp.quad(g, [0, h / 2], [0, h / 2])
    assert fh == pytest.approx(float(ref), abs=1e-12)


def test_steklov_distance_bound_expneg():
    wf = WeightedFunction(lambda t: np.exp(-t), 0)
    rep = steklov_report(wf, [0.2])
    row = rep.rows[0]
    assert row["bound_holds"] == 1
    assert row["norm_f_minus_fh"] <= row["omega2"] * (1 + 1e-6)


def test_steklov_validation():
    with pytest.raises(ParameterError):
        steklov(WeightedFunction(sq, 0), 0.0, 1.0)
    with pytest.raises(ParameterError):
        steklov(WeightedFunction(sq, 0), 0.1, -1.0)


@pytest.mark.parametrize("kind", ["expneg", "invsq", "sin"])
def test_steklov_report_over_corpus(kind):
    wf = parse_function_spec(kind).weighted()
    rep = steklov_report(wf, [0.4, 0.2, 0.1])
    assert rep.columns == ("h", "norm_f_minus_fh", "omega2", "bound_holds", "fh2_ratio")
    for row in rep.rows:
        assert row["bound_holds"] == 1
        assert 0 < row["fh2_ratio"] <= 9.0


def test_grid_tail_is_negligible_for_steklov_distance():
    wf = parse_function_spec("expneg").weighted()
    a = steklov_report(wf, [0.2], GridSpec(10.0, 2001)).rows[0]["norm_f_minus_fh"]
    b = steklov_report(wf, [0.2], GridSpec(20.0, 4001)).rows[0]["norm_f_minus_fh"]
    assert abs(a - b) < 1e-3 * a


# -- convergence -------------------------------------------------------------------


def test_convergence_square_reproduces_closed_form():
    wf = parse_function_spec("mono:2").weighted()
    rep = convergence_experiment(wf, 2.0, range(1, 13), SMALL)
    assert rep.columns == ("n", "q_integer_n", "sup_error", "log_error")
    for row in rep.rows:
        assert row["q_integer_n"] == 2.0 ** row["n"] - 1
        assert row["sup_error"] == pytest.approx(0.5 / row["q_integer_n"], rel=1e-12)
        assert row["log_error"] == pytest.approx(math.log(row["sup_error"]), rel=1e-15)


def test_convergence_slope_is_the_least_squares_fit():
    wf = parse_function_spec("mono:2").weighted()
    rep = convergence_experiment(wf, 2.0, range(1, 13), SMALL)
    ns = np.arange(1, 13)
    oracle = np.polyfit(ns, np.log(0.5 / (2.0**ns - 1)), 1)[0]
    assert rep.fitted_slope == pytest.approx(oracle, rel=1e-9)
    # over n = 1..12 the pre-asymptotic [n] = 2^n - 1 pulls the slope off -ln 2
    assert rep.fitted_slope == pytest.approx(-0.7335, abs=1e-3)


def test_convergence_constant_function():
    wf = WeightedFunction(lambda t: 1.0 + 0 * t, 0)
    rep = convergence_experiment(wf, 1.7, range(1, 6), SMALL)
    assert all(row["sup_error"] <= 1e-12 for row in rep.rows)


def test_convergence_classical_baseline():
    wf = parse_function_spec("mono:2").weighted()
    rep = convergence_experiment(wf, None, range(4, 33, 4), SMALL, classical=True)
    for row in rep.rows:
        assert row["sup_error"] == pytest.approx(0.5 / row["n"], rel=1e-10)
    assert rep.fitted_slope == pytest.approx(-1.0, rel=1e-6)
    assert rep.meta["abscissa"] == "ln n"


def test_convergence_records_truncation_failures():
    wf = parse_function_spec("expneg").weighted()
    rep = convergence_experiment(wf, 1.05, [1, 30], GridSpec(10.0, 11), SeriesPolicy(max_terms=16))
    assert rep.failures and rep.failures[0]["n"] in (1, 30)
    assert any(math.isnan(r["sup_error"]) for r in rep.rows)


def test_convergence_rejects_empty_range():
    with pytest.raises(ParameterError):
        convergence_experiment(parse_function_spec("sin").weighted(), 2.0, [])


# -- Voronovskaja ------------------------------------------------------------------


@pytest.mark.parametrize("q", [1.2, 2.0, 3.0])
@pytest.mark.parametrize("x", [0.5, 2.0])
def test_voronovskaja_square(q, x):
    rep = voronovskaja_scan(parse_function_spec("mono:2").weighted(), q, x, range(1, 8))
    for row in rep.rows:
        assert row["V_n"] == pytest.approx(x, rel=1e-10)
        assert row["paper_limit"] == pytest.approx(x, rel=1e-15)


@pytest.mark.parametrize("q", [1.2, 2.0])
def test_voronovskaja_cube(q):
    x = 1.5
    rep = voronovskaja_scan(parse_function_spec("mono:3").weighted(), q, x, range(1, 9))
    for row in rep.rows:
        qn = q_integer(row["n"], QContext(q))
        assert row["V_n"] == pytest.approx((2 + q) * x * x + x / qn, rel=1e-10)
        assert row["paper_limit"] == pytest.approx(3 * x * x)
        assert row["diagnostic_limit"] == pytest.approx((2 + q) * x * x, rel=1e-14)


def test_voronovskaja_cube_limit_as_q_tends_to_one():
    x = 1.3
    gaps = []
    for j in range(1, 7):
        q = 1 + 10.0**-j
        n = math.ceil(math.log1p(1e8 * (q - 1)) / math.log(q))  # [n] about 1e8
        ctx = QContext(q, n)
        v = ctx.qn * (moment_polynomial(3, ctx)(x) - x**3)
        gaps.append(abs(v - 3 * x * x))
    assert all(b < a for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1] < 1e-3


@pytest.mark.parametrize("m", [1, 2, 3, 4])
def test_voronovskaja_matches_moment_polynomial(m):
    q, x = 1.6, 0.9
    rep = voronovskaja_scan(parse_function_spec(f"mono:{m}").weighted(), q, x, range(1, 7))
    for row in rep.rows:
        ctx = QContext(q, row["n"])
        algebraic = ctx.qn * (moment_polynomial(m, ctx)(x) - x**m)
        assert row["V_n"] == pytest.approx(algebraic, rel=1e-10, abs=1e-13)


def test_voronovskaja_diagnostic_nan_without_higher_derivatives():
    wf = WeightedFunction(sq, 2, lambda t: 2.0 + 0 * t)
    rep = voronovskaja_scan(wf, 2.0, 1.0, [1])
    assert math.isnan(rep.rows[0]["diagnostic_limit"])


def test_voronovskaja_preconditions():
    with pytest.raises(ParameterError):
        voronovskaja_scan(WeightedFunction(sq, 2), 2.0, 1.0, [1])
    with pytest.raises(ParameterError):
        voronovskaja_scan(parse_function_spec("mono:2").weighted(), 2.0, 0.0, [1])


# -- bound checks ------------------------------------------------------------------


def test_local_bound_ratio_is_n_independent():
    rep = bound_check("local", parse_function_spec("mono:2").weighted(), 2.0, range(1, 8), SMALL)
    ratios = rep.column("ratio")
    assert np.ptp(ratios) <= 1e-9 * ratios.max()
    assert rep.meta["fitted_constant"] == pytest.approx(ratios.max())


def test_global_bound_reports_finite_constant():
    rep = bound_check("global", parse_function_spec("expneg").weighted(), 2.0, range(1, 4), SMALL)
    c = rep.meta["fitted_constant"]
    assert math.isfinite(c) and c > 0
    assert rep.columns == ("n", "lhs", "rhs", "ratio")


def test_sqrtmod_lists_violations_consistently():
    rep = bound_check("sqrtmod", parse_function_spec("sqrt").weighted(), 2.0, range(1, 4), SMALL)
    rows = {r["n"]: r for r in rep.rows}
    assert rows[1]["lhs"] <= rows[1]["rhs"]
    assert rep.meta["violations"] == [n for n, r in rows.items() if r["lhs"] > r["rhs"]]
    for n, r in rows.items():
        # f* is the identity, so the right side is 2 [n]^(-1/2) up to grid resolution
        assert r["rhs"] == pytest.approx(2 / math.sqrt(q_integer(n, QContext(2.0))), rel=0.05)


def test_bound_check_validation():
    wf = parse_function_spec("sin").weighted()
    with pytest.raises(ParameterError):
        bound_check("bogus", wf, 2.0, [1])
    with pytest.raises(ParameterError):
        bound_check("local", WeightedFunction(np.sin, 0), 2.0, [1])
    with pytest.raises(ParameterError):
        bound_check("local", wf, 2.0, [])
