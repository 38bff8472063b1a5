"""Test functions addressed by short text specs (``mono:2``, ``poly:1,0,-0.5``, ``expneg``...).

Every function accepts floats, numpy arrays and mpmath numbers, so the
operator can evaluate it at the nodes in extended precision.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import mpmath as mp
import numpy as np

from .errors import QSzaszError

KINDS = ("poly", "mono", "expneg", "invsq", "sqrt", "sin")
MAX_MONO_DEGREE = 12

_NUMBER = re.compile(r"\s*[+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?\s*")


class FunctionSpecError(QSzaszError, ValueError):
    """Malformed function spec; ``position`` is the 0-based offset of the problem."""

    def __init__(self, message, text, position):
        self.text = text
        self.position = position
        super().__init__(f"{message} at position {position} in {text!r}")


class Polynomial:
    def __init__(self, coeffs):
        coeffs = [float(c) for c in coeffs]
        while len(coeffs) > 1 and coeffs[-1] == 0.0:
            coeffs.pop()
        self.coeffs = tuple(coeffs)

    @property
    def degree(self):
        return len(self.coeffs) - 1

    def __call__(self, t):
        acc = self.coeffs[-1] + 0 * t
        for c in reversed(self.coeffs[:-1]):
            acc = acc * t + c
        return acc

    def derivative(self):
        if self.degree == 0:
            return Polynomial([0.0])
        return Polynomial([k * c for k, c in enumerate(self.coeffs)][1:])

    def __repr__(self):
        return f"Polynomial({list(self.coeffs)})"


class Monomial(Polynomial):
    """``t**m``; exact at the nodes for every argument type."""

    def __init__(self, m):
        super().__init__([0.0] * m + [1.0])
        self.m = m

    def __call__(self, t):
        return t**self.m if self.m else 1.0 + 0 * t

    def __repr__(self):
        return f"Monomial({self.m})"


class _Elementary:
    def __init__(self, name, np_fn, mp_fn):
        self.name = name
        self._np = np_fn
        self._mp = mp_fn

    def __call__(self, t):
        if isinstance(t, mp.mpf):
            return self._mp(t)
        return self._np(t)

    def __repr__(self):
        return f"<{self.name}>"


def _expneg(sign):
    return _Elementary(
        f"{'-' if sign < 0 else ''}exp(-t)",
        lambda t: sign * np.exp(-t),
        lambda t: sign * mp.exp(-t),
    )


def _sin_shift(k):
    # k-th derivative of sin
    table = [
        ("sin", np.sin, mp.sin, 1),
        ("cos", np.cos, mp.cos, 1),
        ("-sin", np.sin, mp.sin, -1),
        ("-cos", np.cos, mp.cos, -1),
    ]
    name, f_np, f_mp, s = table[k % 4]
    return _Elementary(name, lambda t: s * f_np(t), lambda t: s * f_mp(t))


def _invsq(k):
    # 1/(1+t^2) and its derivatives; plain arithmetic keeps mpmath precision
    forms = [
        lambda t: 1.0 / (1.0 + t * t),
        lambda t: -2.0 * t / (1.0 + t * t) ** 2,
        lambda t: (6.0 * t * t - 2.0) / (1.0 + t * t) ** 3,
        lambda t: 24.0 * t * (1.0 - t * t) / (1.0 + t * t) ** 4,
        lambda t: 24.0 * (5.0 * t**4 - 10.0 * t * t + 1.0) / (1.0 + t * t) ** 5,
    ]
    return _Elementary(f"d^{k} 1/(1+t^2)", forms[k], forms[k])


def _sqrt(k):
    coef = [1.0, 0.5, -0.25, 0.375, -0.9375][k]
    power = 0.5 - k
    if k == 0:
        return _Elementary("sqrt", np.sqrt, mp.sqrt)
    return _Elementary(
        f"d^{k} sqrt",
        lambda t: coef * np.power(np.asarray(t, dtype=float), power),
        lambda t: coef * mp.power(t, power),
    )


@dataclass(frozen=True)
class FunctionSpec:
    kind: str
    params: tuple = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise FunctionSpecError(f"unknown kind {self.kind!r}", self.kind, 0)

    @property
    def weight_order(self) -> int:
        """The p of the smallest polynomial weight space holding the function."""
        if self.kind == "poly":
            return Polynomial(self.params).degree
        if self.kind == "mono":
            return int(self.params[0])
        return 0

    def derivative(self, order: int = 0):
        """Callable for the ``order``-th derivative (0..4)."""
        if not 0 <= order <= 4:
            raise ValueError("derivative order must be in 0..4")
        if self.kind in ("poly", "mono"):
            f = Monomial(int(self.params[0])) if self.kind == "mono" else Polynomial(self.params)
            for _ in range(order):
                f = f.derivative()
            return f
        if self.kind == "expneg":
            return _expneg(-1 if order % 2 else 1)
        if self.kind == "sin":
            return _sin_shift(order)
        if self.kind == "invsq":
            return _invsq(order)
        return _sqrt(order)

    def function(self):
        return self.derivative(0)

    def weighted(self, p: int | None = None, derivatives: bool = True):
        """Wrap as :class:`~qszasz.analysis.WeightedFunction`.

        ``sqrt`` never gets derivatives attached: its second derivative is
        unbounded at 0.
        """
        from .analysis import WeightedFunction

        p = self.weight_order if p is None else p
        if derivatives and self.kind != "sqrt":
            return WeightedFunction(
                self.function(), p, self.derivative(2), self.derivative(3), self.derivative(4)
            )
        return WeightedFunction(self.function(), p)

    def __str__(self):
        if self.kind == "poly":
            return "poly:" + ",".join(repr(float(c)) for c in self.params)
        if self.kind == "mono":
            return f"mono:{int(self.params[0])}"
        return self.kind


def parse_function_spec(text: str) -> FunctionSpec:
    """Parse ``poly:a0,a1,...``, ``mono:m``, ``expneg``, ``invsq``, ``sqrt`` or ``sin``."""
    if not text or not text.strip():
        raise FunctionSpecError("empty function spec", text or "", 0)
    kind, sep, rest = text.partition(":")
    kind = kind.strip()
    if kind not in KINDS:
        raise FunctionSpecError(f"unknown kind {kind!r}", text, 0)
    offset = len(kind) + len(sep)
    if kind in ("expneg", "invsq", "sqrt", "sin"):
        if sep:
            raise FunctionSpecError(f"{kind} takes no parameters", text, len(kind))
        return FunctionSpec(kind)
    if not sep:
        raise FunctionSpecError(f"{kind} needs parameters after ':'", text, len(text))
    if not rest.strip():
        raise FunctionSpecError("empty coefficient list", text, offset)
    values = []
    pos = offset
    for piece in rest.split(","):
        if not _NUMBER.fullmatch(piece):
            raise FunctionSpecError(f"malformed number {piece!r}", text, pos)
        values.append(float(piece))
        pos += len(piece) + 1
    if kind == "mono":
        if len(values) != 1:
            raise FunctionSpecError("mono takes exactly one degree", text, offset)
        m = values[0]
        if m != int(m) or not 0 <= m <= MAX_MONO_DEGREE:
            raise FunctionSpecError(f"mono degree must be an integer in 0..{MAX_MONO_DEGREE}", text, offset)
        return FunctionSpec("mono", (int(m),))
    return FunctionSpec("poly", tuple(values))
