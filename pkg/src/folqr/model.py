"""Fractional-order transfer functions and pseudo state-space realizations.

A transfer function is stored as two sparse lists of ``(coefficient, exponent)``
terms.  :func:`to_pseudo_state_space` turns it into a companion-form model

    D^n x = A x + B u,    y = C x

where each state carries its own differentiation order ``n_i``.  When all
exponents share a rational base order ``q`` the model has uniform order ``q``;
otherwise the states follow the chain of implicit orders ``m_i - m_{i-1}``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "ModelError",
    "TfSyntaxError",
    "SingularResolventError",
    "FractionalTransferFunction",
    "PseudoStateSpace",
    "parse_fractional_tf",
    "split_proper",
    "commensurate_base_order",
    "to_pseudo_state_space",
    "preset",
    "PRESETS",
    "lambda_diag",
    "resolvent_solve",
    "frequency_response",
]

Term = tuple[float, float]


class ModelError(ValueError):
    """Invalid transfer function or realization request."""


class TfSyntaxError(ModelError):
    def __init__(self, message: str, text: str, position: int):
        self.text = text
        self.position = position
        pointer = " " * position + "^"
        super().__init__(f"{message} at position {position}\n  {text}\n  {pointer}")


class SingularResolventError(ArithmeticError):
    def __init__(self, omega: float):
        self.omega = omega
        super().__init__(f"resolvent is singular at omega={omega!r}")


def _check_terms(terms: Sequence[Term], what: str) -> tuple[Term, ...]:
    out = tuple((float(c), float(e)) for c, e in terms)
    for c, e in out:
        if not (math.isfinite(c) and math.isfinite(e)):
            raise ModelError(f"{what} term ({c}, {e}) is not finite")
        if e < 0:
            raise ModelError(f"{what} exponent {e} is negative")
    exps = [e for _, e in out]
    for a, b in zip(exps, exps[1:]):
        if a == b:
            raise ModelError(f"duplicate {what} exponent {a}")
        if a < b:
            raise ModelError(f"{what} exponents must be strictly decreasing")
    return out


@dataclass(frozen=True)
class FractionalTransferFunction:
    """Strictly proper ratio of sums of real powers of ``s``.

    Both term lists are ``(coefficient, exponent)`` pairs in strictly
    descending exponent order.  An empty numerator is the zero function.
    """

    numerator_terms: tuple[Term, ...]
    denominator_terms: tuple[Term, ...]

    def __post_init__(self):
        num = _check_terms(self.numerator_terms, "numerator")
        den = _check_terms(self.denominator_terms, "denominator")
        if not den:
            raise ModelError("denominator has no terms")
        if den[0][0] == 0.0:
            raise ModelError("leading denominator coefficient is zero")
        if num and num[0][1] >= den[0][1]:
            raise ModelError(
                f"improper transfer function: numerator degree {num[0][1]} "
                f">= denominator degree {den[0][1]}"
            )
        object.__setattr__(self, "numerator_terms", num)
        object.__setattr__(self, "denominator_terms", den)

    @property
    def degree(self) -> float:
        return self.denominator_terms[0][1]

    def exponents(self) -> list[float]:
        """All nonzero exponents appearing in the numerator or denominator."""
        return sorted(
            {e for _, e in self.numerator_terms + self.denominator_terms if e > 0},
            reverse=True,
        )

    def evaluate(self, s: complex | np.ndarray) -> complex | np.ndarray:
        """Direct evaluation with principal-branch powers ``s**e``."""
        s = np.asarray(s, dtype=complex)
        num = sum((c * _cpow(s, e) for c, e in self.numerator_terms), np.zeros_like(s))
        den = sum((c * _cpow(s, e) for c, e in self.denominator_terms), np.zeros_like(s))
        out = num / den
        return out[()] if out.ndim == 0 else out

    def __str__(self) -> str:
        return f"({_poly_str(self.numerator_terms)}) / ({_poly_str(self.denominator_terms)})"


def _cpow(s: np.ndarray, e: float) -> np.ndarray:
    if e == 0:
        return np.ones_like(s)
    return np.where(s == 0, 0.0, np.power(s, e))


def _poly_str(terms: Sequence[Term]) -> str:
    if not terms:
        return "0"
    parts = []
    for c, e in terms:
        if e == 0:
            parts.append(f"{c:g}")
        elif e == 1:
            parts.append(f"{c:g}*s")
        else:
            parts.append(f"{c:g}*s^{e:g}")
    return " + ".join(parts).replace("+ -", "- ")


# -- parsing ---------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<op>[-+*/^()])|(?P<s>s))"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            bad = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise TfSyntaxError(f"unexpected character {text[bad]!r}", text, bad)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self) -> tuple[str, str, int]:
        return self.tokens[self.i]

    def take(self) -> tuple[str, str, int]:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def fail(self, message: str):
        raise TfSyntaxError(message, self.text, self.peek()[2])

    def expect(self, value: str):
        kind, val, _ = self.peek()
        if val != value:
            self.fail(f"expected {value!r}, found {val or 'end of input'!r}")
        self.take()

    def ratio(self) -> tuple[list[Term], list[Term]]:
        num = self.poly()
        self.expect("/")
        den = self.poly()
        if self.peek()[0] != "end":
            self.fail("trailing input")
        return num, den

    def poly(self) -> list[Term]:
        if self.peek()[1] == "(":
            self.take()
            terms = self.terms()
            self.expect(")")
            return terms
        return self.terms()

    def terms(self) -> list[Term]:
        terms = []
        sign = 1.0
        if self.peek()[1] in "+-" and self.peek()[0] == "op":
            sign = -1.0 if self.take()[1] == "-" else 1.0
        terms.append(self.term(sign))
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            sign = -1.0 if self.take()[1] == "-" else 1.0
            terms.append(self.term(sign))
        return terms

    def term(self, sign: float) -> Term:
        kind, val, _ = self.peek()
        coeff = 1.0
        has_coeff = False
        if kind == "num":
            coeff = float(self.take()[1])
            has_coeff = True
            if self.peek()[1] == "*":
                self.take()
                if self.peek()[0] != "s":
                    self.fail("expected 's' after '*'")
        if self.peek()[0] == "s":
            self.take()
            exponent = 1.0
            if self.peek()[1] == "^":
                self.take()
                if self.peek()[0] != "num":
                    self.fail("expected exponent after '^'")
                exponent = float(self.take()[1])
            return sign * coeff, exponent
        if not has_coeff:
            self.fail("expected a coefficient or 's'")
        return sign * coeff, 0.0


def _normalize_terms(terms: list[Term], text: str, what: str) -> list[Term]:
    seen = set()
    for _, e in terms:
        if e in seen:
            raise ModelError(f"duplicate {what} exponent {e:g} in {text!r}")
        seen.add(e)
    return sorted(terms, key=lambda t: -t[1])


def _parse_terms(text: str) -> tuple[list[Term], list[Term]]:
    num, den = _Parser(text).ratio()
    num = [t for t in _normalize_terms(num, text, "numerator") if t[0] != 0.0]
    den = [t for t in _normalize_terms(den, text, "denominator") if t[0] != 0.0]
    if not den:
        raise ModelError(f"denominator of {text!r} is zero")
    return num, den


def parse_fractional_tf(text: str) -> FractionalTransferFunction:
    """Parse ``"num / den"`` where each side is a sum of ``c*s^e`` terms.

    >>> parse_fractional_tf("1 / (s + 1)").denominator_terms
    ((1.0, 1.0), (1.0, 0.0))
    """
    num, den = _parse_terms(text)
    return FractionalTransferFunction(tuple(num), tuple(den))


def split_proper(text: str) -> tuple[float, FractionalTransferFunction]:
    """Parse a proper (possibly biproper) transfer function.

    Returns ``(d, g)`` with ``tf(s) = d + g(s)`` and ``g`` strictly proper.
    """
    num, den = _parse_terms(text)
    lead_c, lead_e = den[0]
    if num and num[0][1] > lead_e:
        raise ModelError(f"{text!r} is not proper")
    d = 0.0
    if num and num[0][1] == lead_e:
        d = num[0][0] / lead_c
        rem = {e: c for c, e in num}
        for c, e in den:
            rem[e] = rem.get(e, 0.0) - d * c
        num = [(c, e) for e, c in sorted(rem.items(), reverse=True) if c != 0.0 and e < lead_e]
    return d, FractionalTransferFunction(tuple(num), tuple(den))


# -- realization -------------------------------------------------------------


def commensurate_base_order(
    exponents: Sequence[float],
    max_denominator: int = 1000,
    tolerance: float = 1e-9,
    max_order: float = 1.0,
) -> Optional[float]:
    """Largest rational ``q = a/b`` (``b <= max_denominator``, ``q <= max_order``)
    such that every exponent is within ``tolerance`` of an integer multiple of ``q``.

    Returns ``None`` when no such ``q`` exists.
    """
    exps = np.asarray([e for e in exponents], dtype=float)
    if exps.size == 0 or np.any(exps <= 0):
        raise ValueError("exponents must be non-empty and positive")
    if max_denominator < 1:
        raise ValueError("max_denominator must be >= 1")
    best: Optional[Fraction] = None
    for b in range(1, max_denominator + 1):
        scaled = exps * b
        ints = np.rint(scaled)
        if np.any(np.abs(scaled - ints) > tolerance * b) or np.any(ints == 0):
            continue
        a = math.gcd(*(int(v) for v in ints))
        # valid bases for this b are a'/b with a' dividing a
        top = min(a, math.floor(max_order * b + 1e-12))
        a_fit = next((d for d in range(top, 0, -1) if a % d == 0), None)
        if a_fit is None:
            continue
        q = Fraction(a_fit, b)
        if np.all(np.abs(exps - np.rint(exps / float(q)) * float(q)) <= tolerance):
            if best is None or q > best:
                best = q
    return None if best is None else float(best)


def _readonly(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class PseudoStateSpace:
    """``D^n x = A x + B u``, ``y = C x`` with per-state orders ``n_i`` in (0, 1]."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    orders: np.ndarray
    base_order: Optional[float] = None
    name: str = field(default="", compare=False)

    def __post_init__(self):
        A = _readonly(self.A)
        n = A.shape[0] if A.ndim == 2 else -1
        if A.ndim != 2 or A.shape != (n, n):
            raise ModelError(f"A must be square, got shape {A.shape}")
        B = _readonly(np.reshape(self.B, (n, -1)))
        C = _readonly(np.reshape(self.C, (-1, n)))
        orders = _readonly(np.ravel(self.orders))
        if orders.shape != (n,):
            raise ModelError(f"{orders.size} orders given for {n} states")
        if np.any(orders <= 0) or np.any(orders > 1):
            raise ModelError(f"state orders must lie in (0, 1], got {orders.tolist()}")
        if self.base_order is not None:
            q = float(self.base_order)
            ratio = orders / q
            if np.any(np.abs(ratio - np.rint(ratio)) > 1e-9):
                raise ModelError(f"orders {orders.tolist()} are not multiples of base order {q}")
            object.__setattr__(self, "base_order", q)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "orders", orders)

    @property
    def n_states(self) -> int:
        return self.A.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.B.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.C.shape[0]

    def with_orders(self, orders) -> "PseudoStateSpace":
        orders = np.broadcast_to(np.asarray(orders, dtype=float), (self.n_states,))
        base = float(orders[0]) if np.all(orders == orders[0]) else None
        return PseudoStateSpace(self.A, self.B, self.C, orders, base, self.name)

    def transformed(self, T: np.ndarray) -> "PseudoStateSpace":
        """Similarity transform ``x -> T x`` (orders are kept as given)."""
        Ti = np.linalg.inv(T)
        return PseudoStateSpace(T @ self.A @ Ti, T @ self.B, self.C @ Ti,
                                self.orders, self.base_order, self.name)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "A": self.A.tolist(),
            "B": self.B.tolist(),
            "C": self.C.tolist(),
            "orders": self.orders.tolist(),
            "base_order": self.base_order,
        }


def to_pseudo_state_space(
    tf: FractionalTransferFunction,
    form: str = "bottom_row",
    *,
    force_chain: bool = False,
    max_denominator: int = 1000,
    tolerance: float = 1e-9,
) -> PseudoStateSpace:
    """Companion-form realization of a strictly proper fractional TF.

    ``bottom_row`` puts the negated monic denominator coefficients in the last
    row of A (superdiagonal ones, B = e_N); ``top_row`` is the same model with
    the state order reversed (subdiagonal ones, coefficients in the first row,
    B = e_1).
    """
    if form not in ("bottom_row", "top_row"):
        raise ValueError(f"unknown companion form {form!r}")
    lead = tf.denominator_terms[0][0]
    top = tf.degree
    den = {e: c / lead for c, e in tf.denominator_terms}
    num = {e: c / lead for c, e in tf.numerator_terms}

    q = None
    if not force_chain:
        q = commensurate_base_order(tf.exponents(), max_denominator, tolerance)

    if q is not None:
        n = int(round(top / q))
        levels = [k * q for k in range(n)]
        orders = [q] * n

        def level_of(e: float) -> int:
            k = int(round(e / q))
            if abs(e - k * q) > tolerance:
                raise ModelError(f"exponent {e} is not a multiple of base order {q}")
            return k
    else:
        ladder = sorted(e for e in den if e > 0)
        levels = [0.0] + ladder[:-1]
        orders = [b - a for a, b in zip(levels, ladder)]
        n = len(ladder)
        bad = [o for o in orders if not 0 < o <= 1 + 1e-12]
        if bad:
            raise ModelError(
                f"implicit orders {orders} fall outside (0, 1]; "
                "the chain construction cannot realize this denominator"
            )
        orders = [min(o, 1.0) for o in orders]

        def level_of(e: float) -> int:
            for k, lv in enumerate(levels):
                if abs(e - lv) <= tolerance:
                    return k
            raise ModelError(f"numerator exponent {e} is not on the state ladder {levels}")

    A = np.zeros((n, n))
    A[np.arange(n - 1), np.arange(1, n)] = 1.0
    for e, c in den.items():
        if e == top:
            continue
        A[n - 1, level_of(e)] = -c
    B = np.zeros((n, 1))
    B[n - 1, 0] = 1.0
    C = np.zeros((1, n))
    for e, c in num.items():
        C[0, level_of(e)] = c
    orders = np.asarray(orders)

    if form == "top_row":
        rev = slice(None, None, -1)
        A, B, C, orders = A[rev, rev], B[rev], C[:, rev], orders[rev]
    return PseudoStateSpace(A, B, C, orders, q, str(tf))


# -- presets -----------------------------------------------------------------


def _example1() -> PseudoStateSpace:
    A = [[0, 1, 0], [0, 0, 1], [-0.0005121, -0.05331, 0]]
    B = [[0], [0], [1 / 107.2882]]
    C = [[1, 0, 0]]
    return PseudoStateSpace(A, B, C, [0.93529, 0.87101, 0.93529], None, "example1_eq7")


def _example2() -> PseudoStateSpace:
    A = [
        [0, 0, -0.2, 0.05, 0, -0.01],
        [1, 0, 0, 0, 0, 0],
        [0, 1, 0, 0, 0, 0],
        [0, 0, 1, 0, 0, 0],
        [0, 0, 0, 1, 0, 0],
        [0, 0, 0, 0, 1, 0],
    ]
    B = [[1], [0], [0], [0], [0], [0]]
    C = [[0, 0, 0, 0, 0.01, 0.05]]
    return PseudoStateSpace(A, B, C, [0.32] * 6, 0.32, "example2_eq9")


PRESETS = {"example1_eq7": _example1, "example2_eq9": _example2}

PRESET_TF_TEXT = {
    "example1_eq7": "1 / (2012.409*s^1.8063 + 107.2882*s^0.93529 + 1.0305)",
    "example2_eq9": "(s^0.32 + 5) / (100*s^1.92 + 20*s^0.96 - 5*s^0.64 + 1)",
}


def preset(name: str) -> PseudoStateSpace:
    """The two case-study models, matrices as printed."""
    try:
        return PRESETS[name]()
    except KeyError:
        raise ModelError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


# -- frequency evaluation ----------------------------------------------------


def lambda_diag(orders: np.ndarray, omegas: np.ndarray, mode: str) -> np.ndarray:
    """Diagonal of the operator replacing ``s I`` at ``s = j omega``.

    Shape ``(len(omegas), len(orders))``.  ``fractional`` gives ``(j w)^{n_i}``
    on the principal branch, ``literal`` gives ``j w`` for every state.
    """
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    orders = np.asarray(orders, dtype=float)
    if mode == "fractional":
        mag = np.power.outer(omegas, orders)
        return mag * np.exp(1j * np.pi / 2 * orders)[None, :]
    if mode == "literal":
        return np.repeat((1j * omegas)[:, None], orders.size, axis=1)
    raise ValueError(f"unknown resolvent mode {mode!r}")


def resolvent_solve(A: np.ndarray, orders: np.ndarray, omegas, rhs: np.ndarray,
                    mode: str = "fractional") -> np.ndarray:
    """``(Lambda(j w) - A)^{-1} rhs`` for each omega; shape ``(k, N, m)``."""
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    lam = lambda_diag(orders, omegas, mode)
    n = A.shape[0]
    M = -np.broadcast_to(A, (omegas.size, n, n)).astype(complex)
    idx = np.arange(n)
    M[:, idx, idx] += lam
    rhs = np.broadcast_to(np.asarray(rhs, dtype=complex), (omegas.size,) + np.shape(rhs))
    try:
        out = np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError:
        out = np.full(rhs.shape, np.nan, dtype=complex)
        for k in range(omegas.size):
            try:
                out[k] = np.linalg.solve(M[k], rhs[k])
            except np.linalg.LinAlgError:
                raise SingularResolventError(float(omegas[k])) from None
    bad = ~np.all(np.isfinite(out), axis=tuple(range(1, out.ndim)))
    if np.any(bad):
        raise SingularResolventError(float(omegas[np.argmax(bad)]))
    return out


def frequency_response(ss: PseudoStateSpace, omega: float, mode: str = "fractional"):
    """``C (Lambda(j omega) - A)^{-1} B``; a complex scalar for SISO models."""
    if not math.isfinite(omega) or omega < 0:
        raise ValueError(f"omega must be finite and non-negative, got {omega}")
    x = resolvent_solve(ss.A, ss.orders, [omega], ss.B, mode)[0]
    g = ss.C @ x
    return complex(g[0, 0]) if g.shape == (1, 1) else g
