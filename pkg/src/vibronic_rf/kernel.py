"""Interaction-time integrals of the perturbative series.

Each order-M term carries a nested ordered integral over the M-1 interior
times, with a pure phase exp(i w_pp t_p) per time.  The result is a sum of
M complex polynomials times oscillating exponentials,

    f(t) = sum_j A_j(t) exp(i w_{1,j-1} t),        w_{1,0} = 0,

built by a backwards recursion that integrates the innermost time first.
A nonzero combined frequency divides by it; an exactly vanishing one
raises the polynomial degree instead, so every branch is covered.  The
frequencies form an upper triangle

    w_{kj} = -sum_{i=k..j} nu_i + ec_{kj} * omega21,   1 <= k <= j <= M-1,

where nu_i is the vibrational phase weight of time t_i and ec the +-1/0
electronic class set by the final state sigma.  Values below a relative
tolerance of the model's frequency scale are routed to the zero branch;
the general closed form is numerically catastrophic near them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "KernelError",
    "FrequencyTable",
    "TermPolynomial",
    "build_frequencies",
    "frequency_table",
    "build_polynomials",
    "closed_form_all_nonzero",
    "appendix_table",
    "f_eval",
    "f_value",
    "merge_by_frequency",
    "elec_class",
    "batched_polynomials",
]

ZERO_FREQ_RTOL = 1e-9


class KernelError(ValueError):
    """Raised for malformed tables or unsupported hard-coded patterns."""


def elec_class(k: int, j: int, sigma: int) -> int:
    """Integer multiplier of omega21 in w_{kj}; zero when j-k is odd."""
    return -(((-1) ** (k + sigma)) + ((-1) ** (j + sigma))) // 2


@dataclass(frozen=True)
class FrequencyTable:
    """Upper-triangular frequencies w_{kj} of one order-M term."""

    weights: np.ndarray  # nu_1..nu_{M-1}
    sigma: int
    omega21: float
    scale: float

    @property
    def m_intervals(self) -> int:
        return len(self.weights) + 1

    def value(self, k: int, j: int) -> float:
        """w_{kj}; zero for k > j by convention."""
        if k > j:
            return 0.0
        vib = float(np.sum(self.weights[k - 1 : j]))
        return -vib + elec_class(k, j, self.sigma) * self.omega21

    def is_zero(self, k: int, j: int) -> bool:
        return abs(self.value(k, j)) < ZERO_FREQ_RTOL * self.scale

    def zero_mask(self):
        """Set of (k, j) pairs treated as exactly zero."""
        m = self.m_intervals
        return frozenset(
            (k, j)
            for k in range(1, m)
            for j in range(k, m)
            if self.is_zero(k, j)
        )


def frequency_table(weights, sigma: int, omega21: float, scale: float) -> FrequencyTable:
    """Table from precomputed vibrational weights nu_1..nu_{M-1}."""
    return FrequencyTable(
        weights=np.asarray(weights, dtype=float),
        sigma=int(sigma),
        omega21=float(omega21),
        scale=float(scale),
    )


def build_frequencies(m, sigma: int, omega: float, omega21: float, scale=None) -> FrequencyTable:
    """Table of a single-mode term from its m-vector (m_0 unused here)."""
    m = np.asarray(m, dtype=float)
    if scale is None:
        scale = max(abs(omega), abs(omega21), 1e-300)
    return frequency_table(omega * m[1:], sigma, omega21, scale)


@dataclass(frozen=True)
class TermPolynomial:
    """One oscillating term A(t) exp(i frequency t) of an f function."""

    frequency: float
    coeffs: np.ndarray

    def __call__(self, t: float) -> complex:
        acc = 0.0 + 0.0j
        for c in self.coeffs[::-1]:
            acc = acc * t + c
        return acc


def _integrate_nonzero(src: np.ndarray, om: float) -> np.ndarray:
    """Antiderivative coefficients of src(s) e^{i om s}, upper limit part."""
    b = len(src) - 1
    inv = 1.0 / (1j * om)
    out = np.zeros(b + 1, dtype=complex)
    for r in range(b + 1):
        acc = 0.0 + 0.0j
        for s in range(r, b + 1):
            acc += (
                (math.factorial(s) // math.factorial(r))
                * (-1) ** (s - r)
                * src[s]
                * inv ** (s - r + 1)
            )
        out[r] = acc
    return out


def build_polynomials(table: FrequencyTable):
    """Run the integral recursion; returns TermPolynomial list, slot j = 1..M.

    Starts from a constant 1 and integrates the innermost time first.  The
    constant term of slot 1 closes each step so that f(0) vanishes exactly
    for M >= 2.
    """
    m = table.m_intervals
    polys = {1: np.array([1.0 + 0.0j])}
    for k in range(1, m):
        new = {}
        closing = 0.0 + 0.0j
        for j in range(2, k + 2):
            src = polys[j - 1]
            row, col = m - k, m - k + j - 2
            if table.is_zero(row, col):
                grown = np.concatenate(
                    ([0.0 + 0.0j], src / np.arange(1.0, len(src) + 1.0))
                )
                new[j] = grown
            else:
                coeffs = _integrate_nonzero(src, table.value(row, col))
                closing -= coeffs[0]
                new[j] = coeffs
        new[1] = np.array([closing])
        polys = new
    out = [TermPolynomial(0.0, polys[1])]
    for j in range(2, m + 1):
        out.append(TermPolynomial(table.value(1, j - 1), polys[j]))
    return out


def closed_form_all_nonzero(table: FrequencyTable):
    """Constant coefficients when no frequency vanishes.

    Equals the recursion output; rejects tables with masked entries.
    """
    m = table.m_intervals
    if table.zero_mask():
        raise KernelError("closed form requires all frequencies nonzero")
    out = []
    for j in range(1, m + 1):
        den = 1.0
        for k in range(1, j):
            den *= table.value(k, j - 1)
        for l in range(j, m):
            den *= table.value(j, l)
        coef = (-1.0) ** (m - j) * (1j) ** (1 - m) / den
        freq = 0.0 if j == 1 else table.value(1, j - 1)
        out.append(TermPolynomial(freq, np.array([coef])))
    return out


def f_eval(polys, t: float) -> complex:
    """Evaluate f(t) = sum_j A_j(t) exp(i w_j t).

    Slot 1 is added last so that the closing cancellation at t = 0 is
    bitwise exact.
    """
    acc = 0.0 + 0.0j
    for term in polys[1:]:
        acc += term(t) * np.exp(1j * term.frequency * t)
    return acc + polys[0](t)


def f_value(m, sigma: int, omega: float, omega21: float, t: float, scale=None) -> complex:
    """f for a single-mode m-vector; f = 1 identically at M = 1."""
    table = build_frequencies(m, sigma, omega, omega21, scale)
    return f_eval(build_polynomials(table), t)


def merge_by_frequency(polys, scale: float, rtol: float = 1e-7):
    """Group term polynomials whose frequencies coincide numerically.

    Returns a sorted list of (frequency, coeff array) with coefficients of
    coinciding slots summed; zero-frequency patterns make distinct slots
    share one oscillation, so only the merged form is well defined.
    """
    groups = []
    for term in polys:
        for g in groups:
            if abs(term.frequency - g[0]) < rtol * scale:
                n = max(len(g[1]), len(term.coeffs))
                c = np.zeros(n, dtype=complex)
                c[: len(g[1])] += g[1]
                c[: len(term.coeffs)] += term.coeffs
                g[1] = c
                break
        else:
            groups.append([term.frequency, np.array(term.coeffs, dtype=complex)])
    groups.sort(key=lambda g: g[0])
    return [(f, c) for f, c in groups]


# ----------------------------------------------------------------------
# Hard-coded low-order tables, used as an independent oracle for the
# recursion.  Each case lists the slots it replaces relative to the
# all-nonzero expressions; vanishing frequencies make several slots
# oscillate identically, so comparisons must go through
# merge_by_frequency.  Only patterns where the vibrational and electronic
# frequencies are incommensurate (zeros confined to odd j-k) are encoded.
# ----------------------------------------------------------------------


def _general_entry(table: FrequencyTable, j: int) -> np.ndarray:
    m = table.m_intervals
    w = table.value
    den = 1.0
    for k in range(1, j):
        den *= w(k, j - 1)
    for l in range(j, m):
        den *= w(j, l)
    return np.array([(-1.0) ** (m - j) * (1j) ** (1 - m) / den])


def _appendix_cases(m: int):
    """Listed zero patterns: (mask, replacement builder) per order."""

    def c(*vals):
        return np.array(vals, dtype=complex)

    if m == 2:
        return []
    if m == 3:
        return [
            (
                frozenset({(1, 2)}),
                lambda w: {
                    3: c(0.0, -1j / w(2, 2)),
                    1: c(1.0 / w(2, 2) ** 2),
                },
            )
        ]
    if m == 4:
        return [
            (
                # degree-1 denominator is w22*w33 (w33, not w23: quadrature
                # and the recursion agree, and the simultaneous-zero case
                # composes only with w33)
                frozenset({(1, 2)}),
                lambda w: {
                    3: c(0.0, 1.0 / (w(2, 2) * w(3, 3))),
                    1: c(-1.0 / (1j * w(2, 2) * w(3, 3)) * (1.0 / w(2, 2) - 1.0 / w(3, 3))),
                },
            ),
            (
                frozenset({(2, 3)}),
                lambda w: {
                    4: c(0.0, -1.0 / (w(1, 1) * w(3, 3))),
                    2: c(1.0 / (1j * w(1, 1) * w(3, 3)) * (1.0 / w(1, 3) + 1.0 / w(3, 3))),
                },
            ),
        ]
    if m == 5:
        return [
            (
                frozenset({(1, 2)}),
                lambda w: {
                    3: c(0.0, 1j / (w(2, 2) * w(3, 3) * w(3, 4))),
                    1: c(
                        -1.0
                        / (w(2, 2) * w(3, 3) * w(3, 4))
                        * (1.0 / w(2, 2) - 1.0 / w(3, 3) - 1.0 / w(3, 4))
                    ),
                },
            ),
            (
                frozenset({(1, 4)}),
                lambda w: {
                    5: c(0.0, 1j / (w(2, 4) * w(3, 4) * w(4, 4))),
                    1: c(
                        -1.0
                        / (w(2, 4) * w(3, 4) * w(4, 4))
                        * (1.0 / w(2, 4) + 1.0 / w(3, 4) + 1.0 / w(4, 4))
                    ),
                },
            ),
            (
                frozenset({(2, 3)}),
                lambda w: {
                    4: c(0.0, -1j / (w(1, 3) * w(3, 3) * w(4, 4))),
                    2: c(
                        1.0
                        / (w(1, 3) * w(3, 3) * w(4, 4))
                        * (1.0 / w(1, 3) + 1.0 / w(3, 3) - 1.0 / w(4, 4))
                    ),
                },
            ),
            (
                frozenset({(3, 4)}),
                lambda w: {
                    5: c(0.0, 1j / (w(1, 4) * w(2, 4) * w(4, 4))),
                    3: c(
                        -1.0
                        / (w(1, 4) * w(2, 4) * w(4, 4))
                        * (1.0 / w(1, 4) + 1.0 / w(2, 4) + 1.0 / w(4, 4))
                    ),
                },
            ),
            (
                frozenset({(1, 4), (3, 4), (1, 2)}),
                lambda w: {
                    5: c(0.0, 0.0, -1.0 / (2.0 * w(2, 4) * w(4, 4))),
                    3: c(0.0, -1j / (w(2, 4) * w(4, 4)) * (1.0 / w(2, 4) + 1.0 / w(4, 4))),
                    1: c(
                        1.0
                        / (w(2, 4) * w(4, 4))
                        * (
                            1.0 / w(2, 4) ** 2
                            + 1.0 / w(4, 4) ** 2
                            + 1.0 / (w(2, 4) * w(4, 4))
                        )
                    ),
                },
            ),
        ]
    if m == 6:
        return [
            (
                frozenset({(1, 2)}),
                lambda w: {
                    3: c(0.0, -1.0 / (w(2, 2) * w(3, 3) * w(3, 4) * w(3, 5))),
                    1: c(
                        1.0
                        / (1j * w(2, 2) * w(3, 3) * w(3, 4) * w(3, 5))
                        * (1.0 / w(2, 2) - 1.0 / w(3, 3) - 1.0 / w(3, 4) - 1.0 / w(3, 5))
                    ),
                },
            ),
            (
                frozenset({(1, 4)}),
                lambda w: {
                    5: c(0.0, -1.0 / (w(2, 4) * w(3, 4) * w(4, 4) * w(5, 5))),
                    1: c(
                        1.0
                        / (1j * w(2, 4) * w(3, 4) * w(4, 4) * w(5, 5))
                        * (1.0 / w(2, 4) + 1.0 / w(3, 4) + 1.0 / w(4, 4) - 1.0 / w(5, 5))
                    ),
                },
            ),
            (
                frozenset({(2, 3)}),
                lambda w: {
                    4: c(0.0, 1.0 / (w(1, 3) * w(3, 3) * w(4, 4) * w(4, 5))),
                    2: c(
                        -1.0
                        / (1j * w(1, 3) * w(3, 3) * w(4, 4) * w(4, 5))
                        * (1.0 / w(1, 3) + 1.0 / w(3, 3) - 1.0 / w(4, 4) - 1.0 / w(4, 5))
                    ),
                },
            ),
            (
                # merged constant carries -1/i, matching the recursion and
                # the same pattern one order up
                frozenset({(2, 5)}),
                lambda w: {
                    6: c(0.0, 1.0 / (w(1, 5) * w(3, 5) * w(4, 5) * w(5, 5))),
                    2: c(
                        -1.0
                        / (1j * w(1, 5) * w(3, 5) * w(4, 5) * w(5, 5))
                        * (1.0 / w(1, 5) + 1.0 / w(3, 5) + 1.0 / w(4, 5) + 1.0 / w(5, 5))
                    ),
                },
            ),
            (
                frozenset({(3, 4)}),
                lambda w: {
                    5: c(0.0, -1.0 / (w(1, 4) * w(2, 4) * w(4, 4) * w(5, 5))),
                    3: c(
                        1.0
                        / (1j * w(1, 4) * w(2, 4) * w(4, 4) * w(5, 5))
                        * (1.0 / w(1, 4) + 1.0 / w(2, 4) + 1.0 / w(4, 4) - 1.0 / w(5, 5))
                    ),
                },
            ),
            (
                frozenset({(4, 5)}),
                lambda w: {
                    6: c(0.0, 1.0 / (w(1, 5) * w(2, 5) * w(3, 5) * w(5, 5))),
                    4: c(
                        -1.0
                        / (1j * w(1, 5) * w(2, 5) * w(3, 5) * w(5, 5))
                        * (1.0 / w(1, 5) + 1.0 / w(2, 5) + 1.0 / w(3, 5) + 1.0 / w(5, 5))
                    ),
                },
            ),
            (
                frozenset({(1, 4), (3, 4), (1, 2)}),
                lambda w: {
                    5: c(0.0, 0.0, 1.0 / (2j * w(2, 4) * w(4, 4) * w(5, 5))),
                    3: c(
                        0.0,
                        1.0
                        / (w(2, 4) * w(4, 4) * w(5, 5))
                        * (1.0 / w(2, 4) + 1.0 / w(4, 4) - 1.0 / w(5, 5)),
                    ),
                    1: c(
                        -1.0
                        / (1j * w(2, 4) * w(4, 4) * w(5, 5))
                        * (
                            1.0 / w(2, 4) ** 2
                            + 1.0 / w(4, 4) ** 2
                            + 1.0 / w(5, 5) ** 2
                            + 1.0 / (w(2, 4) * w(4, 4))
                            - 1.0 / (w(2, 4) * w(5, 5))
                            - 1.0 / (w(4, 4) * w(5, 5))
                        )
                    ),
                },
            ),
            (
                frozenset({(2, 5), (4, 5), (2, 3)}),
                lambda w: {
                    6: c(0.0, 0.0, -1.0 / (2j * w(1, 5) * w(3, 5) * w(5, 5))),
                    4: c(
                        0.0,
                        -1.0
                        / (w(1, 5) * w(3, 5) * w(5, 5))
                        * (1.0 / w(1, 5) + 1.0 / w(3, 5) + 1.0 / w(5, 5)),
                    ),
                    2: c(
                        1.0
                        / (1j * w(1, 5) * w(3, 5) * w(5, 5))
                        * (
                            1.0 / w(1, 5) ** 2
                            + 1.0 / w(3, 5) ** 2
                            + 1.0 / w(5, 5) ** 2
                            + 1.0 / (w(1, 5) * w(3, 5))
                            + 1.0 / (w(1, 5) * w(5, 5))
                            + 1.0 / (w(3, 5) * w(5, 5))
                        )
                    ),
                },
            ),
        ]
    if m == 7:
        return [
            (
                frozenset({(1, 2)}),
                lambda w: {
                    3: c(0.0, -1j / (w(2, 2) * w(3, 3) * w(3, 4) * w(3, 5) * w(3, 6))),
                    1: c(
                        1.0
                        / (w(2, 2) * w(3, 3) * w(3, 4) * w(3, 5) * w(3, 6))
                        * (
                            1.0 / w(2, 2)
                            - 1.0 / w(3, 3)
                            - 1.0 / w(3, 4)
                            - 1.0 / w(3, 5)
                            - 1.0 / w(3, 6)
                        )
                    ),
                },
            ),
            (
                frozenset({(1, 4)}),
                lambda w: {
                    5: c(0.0, -1j / (w(2, 4) * w(3, 4) * w(4, 4) * w(5, 5) * w(5, 6))),
                    1: c(
                        1.0
                        / (w(2, 4) * w(3, 4) * w(4, 4) * w(5, 5) * w(5, 6))
                        * (
                            1.0 / w(2, 4)
                            + 1.0 / w(3, 4)
                            + 1.0 / w(4, 4)
                            - 1.0 / w(5, 5)
                            - 1.0 / w(5, 6)
                        )
                    ),
                },
            ),
            (
                frozenset({(1, 6)}),
                lambda w: {
                    7: c(0.0, -1j / (w(2, 6) * w(3, 6) * w(4, 6) * w(5, 6) * w(6, 6))),
                    1: c(
                        1.0
                        / (w(2, 6) * w(3, 6) * w(4, 6) * w(5, 6) * w(6, 6))
                        * (
                            1.0 / w(2, 6)
                            + 1.0 / w(3, 6)
                            + 1.0 / w(4, 6)
                            + 1.0 / w(5, 6)
                            + 1.0 / w(6, 6)
                        )
                    ),
                },
            ),
            (
                frozenset({(2, 3)}),
                lambda w: {
                    4: c(0.0, 1j / (w(1, 3) * w(3, 3) * w(4, 4) * w(4, 5) * w(4, 6))),
                    2: c(
                        -1.0
                        / (w(1, 3) * w(3, 3) * w(4, 4) * w(4, 5) * w(4, 6))
                        * (
                            1.0 / w(1, 3)
                            + 1.0 / w(3, 3)
                            - 1.0 / w(4, 4)
                            - 1.0 / w(4, 5)
                            - 1.0 / w(4, 6)
                        )
                    ),
                },
            ),
            (
                frozenset({(2, 5)}),
                lambda w: {
                    6: c(0.0, 1j / (w(1, 5) * w(3, 5) * w(4, 5) * w(5, 5) * w(6, 6))),
                    2: c(
                        -1.0
                        / (w(1, 5) * w(3, 5) * w(4, 5) * w(5, 5) * w(6, 6))
                        * (
                            1.0 / w(1, 5)
                            + 1.0 / w(3, 5)
                            + 1.0 / w(4, 5)
                            + 1.0 / w(5, 5)
                            - 1.0 / w(6, 6)
                        )
                    ),
                },
            ),
            (
                frozenset({(3, 4)}),
                lambda w: {
                    5: c(0.0, -1j / (w(1, 4) * w(2, 4) * w(4, 4) * w(5, 5) * w(5, 6))),
                    3: c(
                        1.0
                        / (w(1, 4) * w(2, 4) * w(4, 4) * w(5, 5) * w(5, 6))
                        * (
                            1.0 / w(1, 4)
                            + 1.0 / w(2, 4)
                            + 1.0 / w(4, 4)
                            - 1.0 / w(5, 5)
                            - 1.0 / w(5, 6)
                        )
                    ),
                },
            ),
            (
                frozenset({(3, 6)}),
                lambda w: {
                    7: c(0.0, -1j / (w(1, 6) * w(2, 6) * w(4, 6) * w(5, 6) * w(6, 6))),
                    3: c(
                        1.0
                        / (w(1, 6) * w(2, 6) * w(4, 6) * w(5, 6) * w(6, 6))
                        * (
                            1.0 / w(1, 6)
                            + 1.0 / w(2, 6)
                            + 1.0 / w(4, 6)
                            + 1.0 / w(5, 6)
                            + 1.0 / w(6, 6)
                        )
                    ),
                },
            ),
            (
                frozenset({(4, 5)}),
                lambda w: {
                    6: c(0.0, 1j / (w(1, 5) * w(2, 5) * w(3, 5) * w(5, 5) * w(6, 6))),
                    4: c(
                        -1.0
                        / (w(1, 5) * w(2, 5) * w(3, 5) * w(5, 5) * w(6, 6))
                        * (
                            1.0 / w(1, 5)
                            + 1.0 / w(2, 5)
                            + 1.0 / w(3, 5)
                            + 1.0 / w(5, 5)
                            - 1.0 / w(6, 6)
                        )
                    ),
                },
            ),
            (
                # w(5,6) = 0 merges slot 7 onto slot 5's oscillation; the
                # constant lands there too, and the degree-1 coefficient is
                # +i over the reduced product (the recursion and the merged
                # constant below fix the sign together).
                frozenset({(5, 6)}),
                lambda w: {
                    5: c(
                        1.0
                        / (w(1, 4) * w(2, 4) * w(3, 4) * w(4, 4) * w(5, 5))
                        * (
                            1.0 / w(5, 5)
                            - 1.0 / w(1, 4)
                            - 1.0 / w(2, 4)
                            - 1.0 / w(3, 4)
                            - 1.0 / w(4, 4)
                        ),
                        1j / (w(1, 4) * w(2, 4) * w(3, 4) * w(4, 4) * w(5, 5)),
                    ),
                    7: c(0.0),
                },
            ),
            (
                frozenset({(1, 4), (3, 4), (1, 2)}),
                lambda w: {
                    5: c(0.0, 0.0, 1.0 / (2.0 * w(2, 4) * w(4, 4) * w(5, 5) * w(5, 6))),
                    3: c(
                        0.0,
                        1j
                        / (w(2, 4) * w(4, 4) * w(5, 5) * w(5, 6))
                        * (1.0 / w(2, 4) + 1.0 / w(4, 4) - 1.0 / w(5, 5) - 1.0 / w(5, 6)),
                    ),
                    1: c(
                        -1.0
                        / (w(2, 4) * w(4, 4) * w(5, 5) * w(5, 6))
                        * (
                            1.0 / w(2, 4) ** 2
                            + 1.0 / w(4, 4) ** 2
                            + 1.0 / w(5, 5) ** 2
                            + 1.0 / w(5, 6) ** 2
                            + 1.0 / (w(2, 4) * w(4, 4))
                            - 1.0 / (w(2, 4) * w(5, 5))
                            - 1.0 / (w(2, 4) * w(5, 6))
                            - 1.0 / (w(4, 4) * w(5, 5))
                            - 1.0 / (w(4, 4) * w(5, 6))
                            + 1.0 / (w(5, 5) * w(5, 6))
                        )
                    ),
                },
            ),
            (
                frozenset({(2, 5), (4, 5), (2, 3)}),
                lambda w: {
                    6: c(0.0, 0.0, -1.0 / (2.0 * w(1, 5) * w(3, 5) * w(5, 5) * w(6, 6))),
                    4: c(
                        0.0,
                        -1j
                        / (w(1, 5) * w(3, 5) * w(5, 5) * w(6, 6))
                        * (1.0 / w(1, 5) + 1.0 / w(3, 5) + 1.0 / w(5, 5) - 1.0 / w(6, 6)),
                    ),
                    2: c(
                        1.0
                        / (w(1, 5) * w(3, 5) * w(5, 5) * w(6, 6))
                        * (
                            1.0 / w(1, 5) ** 2
                            + 1.0 / w(3, 5) ** 2
                            + 1.0 / w(5, 5) ** 2
                            + 1.0 / w(6, 6) ** 2
                            + 1.0 / (w(1, 5) * w(3, 5))
                            + 1.0 / (w(1, 5) * w(5, 5))
                            - 1.0 / (w(1, 5) * w(6, 6))
                            + 1.0 / (w(3, 5) * w(5, 5))
                            - 1.0 / (w(3, 5) * w(6, 6))
                            - 1.0 / (w(5, 5) * w(6, 6))
                        )
                    ),
                },
            ),
            (
                frozenset({(1, 6), (3, 6), (1, 2)}),
                lambda w: {
                    7: c(0.0, 0.0, 1.0 / (2.0 * w(2, 6) * w(4, 6) * w(5, 6) * w(6, 6))),
                    3: c(
                        0.0,
                        1j
                        / (w(2, 6) * w(4, 6) * w(5, 6) * w(6, 6))
                        * (1.0 / w(2, 6) + 1.0 / w(4, 6) + 1.0 / w(5, 6) + 1.0 / w(6, 6)),
                    ),
                    1: c(
                        -1.0
                        / (w(2, 6) * w(4, 6) * w(5, 6) * w(6, 6))
                        * (
                            1.0 / w(2, 6) ** 2
                            + 1.0 / w(4, 6) ** 2
                            + 1.0 / w(5, 6) ** 2
                            + 1.0 / w(6, 6) ** 2
                            + 1.0 / (w(2, 6) * w(4, 6))
                            + 1.0 / (w(2, 6) * w(5, 6))
                            + 1.0 / (w(2, 6) * w(6, 6))
                            + 1.0 / (w(4, 6) * w(5, 6))
                            + 1.0 / (w(4, 6) * w(6, 6))
                            + 1.0 / (w(5, 6) * w(6, 6))
                        )
                    ),
                },
            ),
            (
                frozenset({(3, 6), (5, 6), (3, 4)}),
                lambda w: {
                    7: c(0.0, 0.0, 1.0 / (2.0 * w(1, 6) * w(2, 6) * w(4, 6) * w(6, 6))),
                    5: c(
                        0.0,
                        1j
                        / (w(1, 6) * w(2, 6) * w(4, 6) * w(6, 6))
                        * (1.0 / w(1, 6) + 1.0 / w(2, 6) + 1.0 / w(4, 6) + 1.0 / w(6, 6)),
                    ),
                    3: c(
                        -1.0
                        / (w(1, 6) * w(2, 6) * w(4, 6) * w(6, 6))
                        * (
                            1.0 / w(1, 6) ** 2
                            + 1.0 / w(2, 6) ** 2
                            + 1.0 / w(4, 6) ** 2
                            + 1.0 / w(6, 6) ** 2
                            + 1.0 / (w(1, 6) * w(2, 6))
                            + 1.0 / (w(1, 6) * w(4, 6))
                            + 1.0 / (w(1, 6) * w(6, 6))
                            + 1.0 / (w(2, 6) * w(4, 6))
                            + 1.0 / (w(2, 6) * w(6, 6))
                            + 1.0 / (w(4, 6) * w(6, 6))
                        )
                    ),
                },
            ),
            (
                # quadratic part is negative; the recursion fixes the sign
                frozenset({(1, 6), (3, 6), (5, 6), (1, 2), (1, 4), (3, 4)}),
                lambda w: {
                    7: c(0.0, 0.0, 0.0, 1j / (6.0 * w(2, 6) * w(4, 6) * w(6, 6))),
                    5: c(
                        0.0,
                        0.0,
                        -0.5
                        / (w(2, 6) * w(4, 6) * w(6, 6))
                        * (1.0 / w(2, 6) + 1.0 / w(4, 6) + 1.0 / w(6, 6)),
                    ),
                    3: c(
                        0.0,
                        -1j
                        / (w(2, 6) * w(4, 6) * w(6, 6))
                        * (
                            1.0 / w(2, 6) ** 2
                            + 1.0 / w(4, 6) ** 2
                            + 1.0 / w(6, 6) ** 2
                            + 1.0 / (w(2, 6) * w(4, 6))
                            + 1.0 / (w(4, 6) * w(6, 6))
                            + 1.0 / (w(2, 6) * w(6, 6))
                        ),
                    ),
                    1: c(
                        1.0
                        / (w(2, 6) * w(4, 6) * w(6, 6))
                        * (
                            1.0 / w(2, 6) ** 3
                            + 1.0 / w(4, 6) ** 3
                            + 1.0 / w(6, 6) ** 3
                            + 1.0 / (w(2, 6) ** 2 * w(4, 6))
                            + 1.0 / (w(4, 6) ** 2 * w(6, 6))
                            + 1.0 / (w(2, 6) ** 2 * w(6, 6))
                            + 1.0 / (w(2, 6) * w(4, 6) ** 2)
                            + 1.0 / (w(4, 6) * w(6, 6) ** 2)
                            + 1.0 / (w(2, 6) * w(6, 6) ** 2)
                            + 1.0 / (w(2, 6) * w(4, 6) * w(6, 6))
                        )
                    ),
                },
            ),
        ]
    raise KernelError(f"no hard-coded table for M = {m}")


def _cover_mask(mask, cases, used_slots=frozenset()):
    """Partition mask into listed cases with disjoint slot replacements."""
    if not mask:
        return []
    for case_mask, slots, builder in cases:
        if case_mask <= mask and not (slots & used_slots):
            rest = _cover_mask(mask - case_mask, cases, used_slots | slots)
            if rest is None:
                continue
            return [builder] + rest
    return None


def appendix_table(table: FrequencyTable):
    """Low-order coefficients transcribed case by case (M = 2..7).

    Supports the all-nonzero case, each listed vanishing pattern, and
    simultaneous patterns with disjoint replacement slots.  Raises on
    anything else; the recursion remains the general implementation.
    """
    m = table.m_intervals
    if not 2 <= m <= 7:
        raise KernelError(f"hard-coded tables cover M = 2..7, got {m}")
    mask = table.zero_mask()
    for k, j in mask:
        if (j - k) % 2 == 0:
            # the electronic gap keeps these nonzero for incommensurate inputs
            raise KernelError(
                f"zero at even-separation frequency w_{k}{j}; not a listed pattern"
            )
    cases = [
        (case_mask, frozenset(builder(lambda k, j: 1.0).keys()), builder)
        for case_mask, builder in _appendix_cases(m)
    ]
    cases.sort(key=lambda c: len(c[0]), reverse=True)
    cover = _cover_mask(mask, cases)
    if cover is None:
        raise KernelError(f"zero pattern {sorted(mask)} is not a listed case")
    entries = {}
    for builder in cover:
        entries.update(builder(table.value))
    for j in range(1, m + 1):
        if j not in entries:
            entries[j] = _general_entry(table, j)
    out = []
    for j in range(1, m + 1):
        freq = 0.0 if j == 1 else table.value(1, j - 1)
        out.append(TermPolynomial(freq, np.asarray(entries[j], dtype=complex)))
    return out


# ----------------------------------------------------------------------
# Batched recursion over many frequency tables at once.  Used by the
# propagator layer, which aggregates Taylor terms by coverage and then
# needs one polynomial set per aggregated state.
# ----------------------------------------------------------------------


def batched_polynomials(nu: np.ndarray, sigma: int, omega21: float, scale: float):
    """Vectorized build_polynomials for a batch of weight rows.

    Parameters
    ----------
    nu : (n_states, M-1) array
        Vibrational weights of every state.
    sigma, omega21, scale
        As in frequency_table.

    Returns
    -------
    list indexed by slot j = 1..M of (n_states, deg_j + 1) complex arrays.
    """
    n, m1 = nu.shape
    m = m1 + 1
    tol = ZERO_FREQ_RTOL * scale
    prefix = np.concatenate([np.zeros((n, 1)), np.cumsum(nu, axis=1)], axis=1)

    def freq(k, j):
        vib = prefix[:, j] - prefix[:, k - 1]
        return -vib + elec_class(k, j, sigma) * omega21

    polys = {1: np.ones((n, 1), dtype=complex)}
    for k in range(1, m):
        new = {}
        closing = np.zeros(n, dtype=complex)
        for j in range(2, k + 2):
            src = polys[j - 1]
            b = src.shape[1] - 1
            om = freq(m - k, m - k + j - 2)
            zero = np.abs(om) < tol
            om_safe = np.where(zero, 1.0, om)
            inv = 1.0 / (1j * om_safe)
            # nonzero branch: integration by parts, degree preserved
            nz = np.zeros((n, b + 2), dtype=complex)
            ipow = inv.copy()
            for step in range(b + 1):
                # contribution of src[:, s] to out[:, s - step]
                for s in range(step, b + 1):
                    r = s - step
                    nz[:, r] += (
                        (math.factorial(s) // math.factorial(r))
                        * (-1.0) ** step
                        * src[:, s]
                        * ipow
                    )
                ipow = ipow * inv
            # zero branch: degree raised, no constant term
            zr = np.zeros((n, b + 2), dtype=complex)
            zr[:, 1:] = src / np.arange(1.0, b + 2.0)
            out = np.where(zero[:, None], zr, nz)
            closing -= out[:, 0]
            new[j] = out
        new[1] = closing[:, None]
        polys = new
    # trim trailing all-zero degrees
    result = []
    for j in range(1, m + 1):
        arr = polys[j]
        top = arr.shape[1]
        while top > 1 and not np.any(arr[:, top - 1]):
            top -= 1
        result.append(arr[:, :top])
    return result
