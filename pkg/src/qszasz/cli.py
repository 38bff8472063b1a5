"""Command-line front end: ``python -m qszasz <command> [flags]``.

Exit status: 0 success, 1 usage error, 2 numerical failure, 3 ``--assert``
violation.  Failures print one line ``qszasz: error kind=<kind> <message>``
on stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import analysis, moments, operator
from .errors import NonFiniteValueError, ParameterError, QSzaszError, SeriesExhaustedError
from .functions import FunctionSpecError, parse_function_spec
from .qcore import DEFAULT_POLICY, QContext, SeriesPolicy

log = logging.getLogger("qszasz")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_ASSERT = 0, 1, 2, 3

HEADERS = {
    "weights": ("k", "node", "weight"),
    "eval": ("x", "value"),
    "moments": ("m", "x", "value_poly", "value_series", "value_rec1"),
    "central-moments": ("r", "x", "value", "reference"),
    "stirling": ("m", "j", "value"),
    "converge": ("n", "q_integer_n", "sup_error", "log_error"),
    "voronovskaja": ("n", "V_n", "paper_limit", "diagnostic_limit"),
    "modulus": ("order", "delta", "value"),
    "steklov": ("h", "norm_f_minus_fh", "omega2", "bound_holds", "fh2_ratio"),
    "bound-check": ("n", "lhs", "rhs", "ratio"),
    "diagnose-positivity": ("kind", "k", "x", "value"),
}

LOG_LEVELS = {"quiet": logging.CRITICAL + 1, "info": logging.INFO, "debug": logging.DEBUG}


class UsageError(QSzaszError):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad flags; 2 is reserved for numerical failures here
    def error(self, message):
        raise UsageError(message)


@dataclass(frozen=True)
class RunConfig:
    command: str
    q: float | None = None
    n: int | None = None
    n_range: tuple = ()
    xs: tuple = ()
    grid: analysis.GridSpec = analysis.GridSpec()
    p: int | None = None
    policy: SeriesPolicy = DEFAULT_POLICY
    fmt: str = "csv"
    output: str | None = None
    options: dict = field(default_factory=dict)


@dataclass
class Result:
    rows: list
    violations: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)


# -- formatting -------------------------------------------------------------------


def format_cell(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def _json_cell(v):
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_, int, np.integer)):
        return int(v)
    v = float(v)
    return v if math.isfinite(v) else None


def render(rows: list, header: tuple, fmt: str) -> str:
    if fmt == "json":
        data = [{h: _json_cell(row[h]) for h in header} for row in rows]
        return json.dumps(data, indent=1) + "\n"
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_cell(row[h]) for h in header])
    return buf.getvalue()


# -- commands ---------------------------------------------------------------------


def _ctx(cfg: RunConfig, n=None) -> QContext:
    if cfg.q is None:
        raise UsageError("--q is required")
    return QContext(cfg.q, cfg.n if n is None else n)


def _function(cfg: RunConfig):
    text = cfg.options.get("f")
    if text is None:
        raise UsageError("--f is required")
    spec = parse_function_spec(text)
    return spec.weighted(cfg.p)


def _points(cfg: RunConfig):
    return list(cfg.xs) if cfg.xs else [float(v) for v in cfg.grid.points()]


def cmd_weights(cfg):
    ctx = _ctx(cfg)
    if len(cfg.xs) != 1:
        raise UsageError("weights needs exactly one --x")
    table = operator.weight_table(cfg.xs[0], ctx, cfg.policy)
    rows = [{"k": k, "node": v, "weight": w} for k, (v, w) in enumerate(zip(table.nodes, table.weights))]
    return Result(rows, summary={"K": table.K, "tail_bound": table.tail_bound, "precision": table.precision})


def cmd_eval(cfg):
    wf = _function(cfg)
    xs = _points(cfg)
    if cfg.options.get("classical"):
        if cfg.n is None:
            raise UsageError("--n is required")
        vals = [operator.classical_szasz(wf.f, x, cfg.n, cfg.policy) for x in xs]
    else:
        vals = operator.apply_on_grid(wf.f, xs, _ctx(cfg), cfg.policy)
    return Result([{"x": x, "value": v} for x, v in zip(xs, vals)])


def cmd_moments(cfg):
    ctx = _ctx(cfg)
    rows = []
    for x in _points(cfg):
        for m in range(cfg.options["mmax"] + 1):
            rows.append(
                {
                    "m": m,
                    "x": x,
                    "value_poly": moments.raw_moment(m, x, ctx, "polynomial", cfg.policy),
                    "value_series": moments.raw_moment(m, x, ctx, "series", cfg.policy),
                    "value_rec1": moments.raw_moment(m, x, ctx, "recurrence1", cfg.policy),
                }
            )
    return Result(rows)


def cmd_central_moments(cfg):
    ctx = _ctx(cfg)
    rows = []
    for x in _points(cfg):
        for r in range(cfg.options["rmax"] + 1):
            ref = moments.reference_central_moment(r, x, ctx) if 2 <= r <= 4 else math.nan
            rows.append({"r": r, "x": x, "value": moments.central_moment(r, x, ctx), "reference": ref})
    return Result(rows)


def cmd_stirling(cfg):
    m_max = cfg.options["mmax"]
    if cfg.options.get("classical"):
        table = moments.classical_stirling_table(m_max)
        rows = [{"m": m, "j": j, "value": v} for m, row in enumerate(table) for j, v in enumerate(row)]
    else:
        if cfg.q is None or not cfg.q > 1:
            raise UsageError("stirling needs --q > 1; the classical table is 'stirling --classical'")
        table = moments.qstirling_table(m_max, QContext(cfg.q))
        rows = [{"m": m, "j": j, "value": v} for m, j, v in table.rows()]
    return Result(rows)


def _n_range(cfg):
    if not cfg.n_range:
        raise UsageError("--nmin and --nmax are required")
    return cfg.n_range


def _fit_summary(report):
    return {"fitted_slope": report.fitted_slope, "fitted_intercept": report.fitted_intercept}


def cmd_converge(cfg):
    wf = _function(cfg)
    classical = bool(cfg.options.get("classical"))
    if not classical:
        _ctx(cfg, n=1)
    report = analysis.convergence_experiment(wf, cfg.q, _n_range(cfg), cfg.grid, cfg.policy, classical)
    log.info("fitted slope %s (against %s)", report.fitted_slope, report.meta["abscissa"])
    summary = _fit_summary(report)
    summary["failures"] = len(report.failures)
    return Result(report.rows, summary=summary)


def cmd_voronovskaja(cfg):
    wf = _function(cfg)
    if len(cfg.xs) != 1:
        raise UsageError("voronovskaja needs exactly one --x")
    _ctx(cfg, n=1)
    report = analysis.voronovskaja_scan(wf, cfg.q, cfg.xs[0], _n_range(cfg), cfg.policy)
    return Result(report.rows)


def cmd_modulus(cfg):
    wf = _function(cfg)
    deltas = cfg.options.get("delta") or [0.1]
    order = cfg.options["order"]
    rows = []
    for d in deltas:
        if order == 1:
            value = analysis.first_modulus(wf.f, d, cfg.grid)
        else:
            value = analysis.second_modulus(wf, d, cfg.grid)
        rows.append({"order": order, "delta": d, "value": value})
    return Result(rows)


def cmd_steklov(cfg):
    wf = _function(cfg)
    hs = cfg.options.get("h") or [0.4, 0.2, 0.1]
    report = analysis.steklov_report(wf, hs, cfg.grid)
    bad = [r["h"] for r in report.rows if not r["bound_holds"]]
    return Result(report.rows, violations=[f"h={h!r}" for h in bad])


def cmd_bound_check(cfg):
    wf = _function(cfg)
    _ctx(cfg, n=1)
    mode = cfg.options["mode"]
    report = analysis.bound_check(mode, wf, cfg.q, _n_range(cfg), cfg.grid, cfg.policy)
    violations = [f"n={n}" for n in report.meta.get("violations", [])]
    summary = {k: v for k, v in report.meta.items() if k in ("fitted_constant", "constant_spread")}
    return Result(report.rows, violations=violations, summary=summary)


def cmd_diagnose_positivity(cfg):
    ctx = _ctx(cfg)
    scan = operator.positivity_scan(ctx, _points(cfg), cfg.policy)
    rows = [{"kind": "negative_weight", "k": k, "x": x, "value": w} for k, x, w in scan.negative_weights]
    rows += [{"kind": "eq_zero", "k": j, "x": math.nan, "value": z} for j, z in scan.zeros]
    violations = ["negative weights present"] if not scan.positive else []
    return Result(rows, violations=violations, summary={"negative_weights": len(scan.negative_weights)})


COMMANDS = {
    "weights": cmd_weights,
    "eval": cmd_eval,
    "moments": cmd_moments,
    "central-moments": cmd_central_moments,
    "stirling": cmd_stirling,
    "converge": cmd_converge,
    "voronovskaja": cmd_voronovskaja,
    "modulus": cmd_modulus,
    "steklov": cmd_steklov,
    "bound-check": cmd_bound_check,
    "diagnose-positivity": cmd_diagnose_positivity,
}


# -- argument parsing -------------------------------------------------------------


def _common(sub: argparse.ArgumentParser, *, grid=False, nrange=False, f=False):
    sub.add_argument("--q", type=float)
    sub.add_argument("--n", type=int, default=1)
    sub.add_argument("--x", type=float, nargs="+", default=[])
    sub.add_argument("--p", type=int, help="weight order override (default: inferred from --f)")
    sub.add_argument("--tol", type=float, default=DEFAULT_POLICY.rel_tol)
    sub.add_argument("--max-terms", type=int, default=DEFAULT_POLICY.max_terms)
    fmt = sub.add_mutually_exclusive_group()
    fmt.add_argument("--format", choices=("csv", "json"), default="csv")
    fmt.add_argument("--csv", dest="format", action="store_const", const="csv")
    fmt.add_argument("--json", dest="format", action="store_const", const="json")
    sub.add_argument("-o", "--output")
    sub.add_argument("--assert", dest="assert_", action="store_true", help="exit 3 when the check fails")
    sub.add_argument("--summary", action="store_true", help="print fitted quantities on stderr")
    if grid:
        sub.add_argument("--xmax", type=float, default=analysis.GridSpec.x_max)
        sub.add_argument("--count", type=int, default=analysis.GridSpec.count)
    if nrange:
        sub.add_argument("--nmin", type=int)
        sub.add_argument("--nmax", type=int)
    if f:
        sub.add_argument("--f", required=True, help="poly:a0,a1,... | mono:m | expneg | invsq | sqrt | sin")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qszasz", description="q-Szász-Mirakjan operators: evaluation and experiments")
    subs = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    _common(subs.add_parser("weights", help="truncated weight table at one x"))
    s = subs.add_parser("eval", help="M_{n,q}(f; x)")
    _common(s, grid=True, f=True)
    s.add_argument("--classical", action="store_true")
    s = subs.add_parser("moments", help="raw moments by all three routes")
    _common(s, grid=True)
    s.add_argument("--mmax", type=int, default=4)
    s = subs.add_parser("central-moments", help="central moments and their closed forms")
    _common(s, grid=True)
    s.add_argument("--rmax", type=int, default=4)
    s = subs.add_parser("stirling", help="q-Stirling triangle")
    _common(s)
    s.add_argument("--mmax", type=int, default=6)
    s.add_argument("--classical", action="store_true")
    s = subs.add_parser("converge", help="weighted sup error against n")
    _common(s, grid=True, nrange=True, f=True)
    s.add_argument("--classical", action="store_true")
    _common(subs.add_parser("voronovskaja", help="[n](M f - f) at one x against n"), nrange=True, f=True)
    s = subs.add_parser("modulus", help="weighted moduli of smoothness")
    _common(s, grid=True, f=True)
    s.add_argument("--order", type=int, choices=(1, 2), default=2)
    s.add_argument("--delta", type=float, nargs="+")
    s = subs.add_parser("steklov", help="Steklov mean error against omega2")
    _common(s, grid=True, f=True)
    s.add_argument("--h", type=float, nargs="+")
    s = subs.add_parser("bound-check", help="error bound against n in one of three modes")
    _common(s, grid=True, nrange=True, f=True)
    s.add_argument("--mode", choices=analysis.BOUND_MODES, required=True)
    s = subs.add_parser("diagnose-positivity", help="negative weights and e_q zeros on a grid")
    _common(s, grid=True)
    return parser


_OPTION_KEYS = ("f", "classical", "mmax", "rmax", "order", "delta", "h", "mode", "assert_", "summary")


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    n_range = ()
    if getattr(ns, "nmin", None) is not None or getattr(ns, "nmax", None) is not None:
        if ns.nmin is None or ns.nmax is None:
            raise UsageError("--nmin and --nmax go together")
        if not 1 <= ns.nmin <= ns.nmax:
            raise UsageError("need 1 <= nmin <= nmax")
        n_range = tuple(range(ns.nmin, ns.nmax + 1))
    if ns.n < 1:
        raise UsageError("--n must be >= 1")
    grid = analysis.GridSpec()
    if hasattr(ns, "xmax"):
        grid = analysis.GridSpec(ns.xmax, ns.count)
    options = {k: getattr(ns, k) for k in _OPTION_KEYS if hasattr(ns, k)}
    return RunConfig(
        command=ns.command,
        q=ns.q,
        n=ns.n,
        n_range=n_range,
        xs=tuple(ns.x),
        grid=grid,
        p=ns.p,
        policy=SeriesPolicy(rel_tol=ns.tol, max_terms=ns.max_terms),
        fmt=ns.format,
        output=ns.output,
        options=options,
    )


def _fail(kind: str, message: str, code: int) -> int:
    line = " ".join(str(message).split())
    print(f"qszasz: error kind={kind} {line}", file=sys.stderr)
    return code


def run(cfg: RunConfig) -> int:
    """Execute one command, write its report, return the exit status."""
    try:
        result = COMMANDS[cfg.command](cfg)
    except (UsageError, ParameterError, FunctionSpecError) as exc:
        return _fail("usage", exc, EXIT_USAGE)
    except SeriesExhaustedError as exc:
        return _fail("series-exhausted", exc, EXIT_NUMERIC)
    except (NonFiniteValueError, QSzaszError) as exc:
        return _fail("numeric", exc, EXIT_NUMERIC)
    text = render(result.rows, HEADERS[cfg.command], cfg.fmt)
    if cfg.output:
        with open(cfg.output, "w", newline="\n", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if cfg.options.get("summary") and result.summary:
        print("summary " + " ".join(f"{k}={v!r}" for k, v in result.summary.items()), file=sys.stderr)
    if cfg.options.get("assert_") and result.violations:
        return _fail("assertion", f"{cfg.command}: " + ", ".join(result.violations), EXIT_ASSERT)
    return EXIT_OK


def _configure_logging():
    level_name = os.environ.get("QSZASZ_LOG", "").strip().lower()
    level = LOG_LEVELS.get(level_name, logging.WARNING)
    root = logging.getLogger("qszasz")
    for h in [h for h in root.handlers if getattr(h, "_qszasz_cli", False)]:
        root.removeHandler(h)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("qszasz: %(levelname)s %(name)s: %(message)s"))
    handler._qszasz_cli = True
    root.addHandler(handler)
    root.setLevel(level)
    root.propagate = False


def main(argv=None) -> int:
    _configure_logging()
    try:
        cfg = config_from_args(build_parser().parse_args(argv))
    except (UsageError, ParameterError) as exc:
        return _fail("usage", exc, EXIT_USAGE)
    return run(cfg)
