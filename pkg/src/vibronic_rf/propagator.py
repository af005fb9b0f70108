"""Propagators of the coupled excited manifold as truncated series.

Each order in the coupling is one fixed-pattern kernel whose Taylor sum is
aggregated by coverage (see combinatorics) and pushed through the
interaction-time integrals (see kernel).  The result of an order collapses
into a small set of buckets

    coef * t^r * exp(i(-omega_sigma - nu + ec*omega21) t)

for single-time propagators, and the analogous three-factor form for the
three-segment propagators that build third-order response functions.
Collection happens once per (model, pattern, truncation); evaluating a
time grid afterwards is essentially free, and the fixed aggregation order
makes results bit-reproducible.

Coverage state counts explode with the interval count, so the Taylor depth
of very high orders is trimmed to a state budget by default (the trimmed
tail is far below the series' own convergence floor; pass
``state_budget=None`` to force the requested depth).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import combinatorics as cb
from . import kernel as kn
from .model import ElectronicPattern, ModelError, ModelSpec

__all__ = [
    "SeriesResult",
    "diag_propagator",
    "offdiag_propagator",
    "multimode_propagator",
    "propagator",
    "dimer_reduced_propagator",
    "x1",
    "x2",
    "interaction_kernel",
    "effective_k_total",
    "collected_single_orders",
    "collected_pair_orders",
    "eval_single_orders",
    "eval_pair_orders",
    "clear_cache",
]

DEFAULT_STATE_BUDGET = 3_000_000
_CHUNK = 200_000

_cache: dict = {}


def clear_cache() -> None:
    _cache.clear()


@dataclass(frozen=True)
class SeriesResult:
    """A truncated series value with its per-order breakdown."""

    value: complex
    per_order: tuple  # ((order, partial), ...)
    k_total: int
    n_max: int

    def cumulative(self):
        """Partial sums through each included order."""
        out = []
        acc = 0.0 + 0.0j
        for order, part in self.per_order:
            acc += part
            out.append((order, acc))
        return out


def effective_k_total(
    m_intervals: int, k_total: int, n_groups: int = 1, state_budget=DEFAULT_STATE_BUDGET
) -> int:
    """Largest affordable Taylor depth <= k_total for this interval count."""
    if state_budget is None:
        return k_total
    k = k_total
    while k > 2 and cb.coverage_state_count(m_intervals, k) ** n_groups > state_budget:
        k -= 1
    return k


def _mode_groups(spec: ModelSpec):
    """Group indices of modes sharing a vibrational frequency."""
    freqs: list = []
    group_of_mode = []
    for w in spec.mode_freqs:
        for gi, wg in enumerate(freqs):
            if w == wg:
                group_of_mode.append(gi)
                break
        else:
            freqs.append(w)
            group_of_mode.append(len(freqs) - 1)
    return np.array(freqs), group_of_mode


def _pattern_h(spec: ModelSpec, pattern: ElectronicPattern) -> float:
    return sum(cb.h_general(pattern.z_entries(row)) for row in spec.displacements)


@dataclass(frozen=True)
class _CollectedSingle:
    order: int
    prefactor: complex
    omega_ref: float  # omega_sigma of the final state
    omega21: float
    nu: np.ndarray  # vibrational frequency per bucket
    ec: np.ndarray  # electronic class per bucket
    deg: np.ndarray  # power of t per bucket
    coef: np.ndarray

    def eval(self, ts: np.ndarray) -> np.ndarray:
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        freq = -self.omega_ref - self.nu + self.ec * self.omega21
        out = np.empty(ts.shape, dtype=complex)
        for i, t in enumerate(ts):
            out[i] = np.sum(self.coef * t**self.deg * np.exp(1j * freq * t))
        return self.prefactor * out


def _bucket_reduce(keys_parts, vals_parts):
    keys = np.concatenate(keys_parts)
    vals = np.concatenate(vals_parts)
    order = np.argsort(keys, kind="stable")
    keys = keys[order]
    uniq, start = np.unique(keys, return_index=True)
    return uniq, np.add.reduceat(vals[order], start)


def _merge_bucket_dicts(acc: dict, keys, vals) -> None:
    for k, v in zip(keys.tolist(), vals.tolist()):
        acc[k] = acc.get(k, 0.0 + 0.0j) + v


def _collect_segments(
    spec: ModelSpec,
    pattern: ElectronicPattern,
    segments,
    k_total: int,
):
    """Aggregate one pattern and emit buckets per requested segment.

    ``segments`` is a list of (first_interval, n_intervals, sigma) 1-based
    descriptors; a segment with n_intervals = 0 yields only its coverage
    digit (the central interval of three-segment propagators).  Returns a
    dict mapping packed keys to complex coefficients, where the key packs
    each segment's (coverage digit, elec class, degree).
    """
    group_freqs, group_of_mode = _mode_groups(spec)
    n_groups = len(group_freqs)
    jumps = [pattern.boundary_jumps(row) for row in spec.displacements]
    table = cb.coverage_weights(jumps, group_of_mode, k_total)
    weights_all = table.weights
    cov_all = table.coverage
    n_states = weights_all.size
    scale = spec.frequency_scale
    dig_base = 16**n_groups

    buckets: dict = {}
    for lo in range(0, n_states, _CHUNK):
        hi = min(lo + _CHUNK, n_states)
        w = weights_all[lo:hi]
        cov = [c[lo:hi] for c in cov_all]
        seg_arrays = []
        for first, count, sigma in segments:
            cols = slice(first - 1, first - 1 + count)
            if count == 0:
                digit = np.zeros(w.size, dtype=np.int64)
                for gi in range(n_groups):
                    digit += cov[gi][:, first - 1] << (4 * gi)
                seg_arrays.append([(digit, 0, 0, np.ones(w.size))])
                continue
            nu = np.zeros((w.size, count - 1))
            for gi in range(n_groups):
                nu += group_freqs[gi] * np.diff(cov[gi][:, cols], axis=1)
            polys = kn.batched_polynomials(nu, sigma, spec.omega21, scale)
            entries = []
            for j, arr in enumerate(polys, start=1):
                digit = np.zeros(w.size, dtype=np.int64)
                for gi in range(n_groups):
                    digit += cov[gi][:, first - 2 + j] << (4 * gi)
                ec = kn.elec_class(1, j - 1, sigma)
                for r in range(arr.shape[1]):
                    col = arr[:, r]
                    if not np.any(col):
                        continue
                    entries.append((digit, ec, r, col))
            seg_arrays.append(entries)
        # cross product of segment entries
        key_parts, val_parts = [], []

        def emit(si, key, val):
            if si == len(seg_arrays):
                key_parts.append(key)
                val_parts.append(val)
                return
            for digit, ec, r, col in seg_arrays[si]:
                k2 = ((key * dig_base + digit) * 4 + (ec + 1)) * 16 + r
                emit(si + 1, k2, val * col)

        emit(0, np.zeros(w.size, dtype=np.int64), w)
        keys, vals = _bucket_reduce(key_parts, val_parts)
        _merge_bucket_dicts(buckets, keys, vals)
    return buckets, group_freqs, dig_base


def _decode_segment(keys: np.ndarray, si: int, n_segments: int, group_freqs, dig_base):
    """Per-segment (nu, ec, deg) from packed bucket keys."""
    shift = n_segments - 1 - si
    part = keys // (dig_base * 64) ** shift
    deg = (part % 16).astype(np.int64)
    part //= 16
    ec = (part % 4).astype(np.int64) - 1
    digit = (part // 4) % dig_base
    nu = np.zeros(keys.shape, dtype=float)
    for gi, wg in enumerate(group_freqs):
        nu += wg * ((digit >> (4 * gi)) % 16)
    return nu, ec, deg


def _collect_single_order(spec: ModelSpec, pattern, sigma: int, k_total: int):
    buckets, group_freqs, dig_base = _collect_segments(
        spec, pattern, [(1, pattern.m_intervals, sigma)], k_total
    )
    keys = np.fromiter(buckets.keys(), dtype=np.int64, count=len(buckets))
    order_ix = np.argsort(keys)
    keys = keys[order_ix]
    coef = np.array(list(buckets.values()), dtype=complex)[order_ix]
    nu, ec, deg = _decode_segment(keys, 0, 1, group_freqs, dig_base)
    return nu, ec, deg, coef


def collected_single_orders(
    spec: ModelSpec,
    sigma_from: int,
    sigma_to: int,
    n_max: int,
    k_total: int,
    state_budget=DEFAULT_STATE_BUDGET,
):
    """Collected form of every included order of one propagator element."""
    diagonal = sigma_from == sigma_to
    orders = range(0 if diagonal else 1, n_max + 1, 2)
    out = []
    for order in orders:
        m_int = order + 1
        key = ("single", spec, sigma_from, sigma_to, order, k_total, state_budget)
        if key not in _cache:
            kt = effective_k_total(m_int, k_total, len(_mode_groups(spec)[0]), state_budget)
            if diagonal:
                pattern = ElectronicPattern.diagonal(m_int, sigma_to)
                coupling = abs(spec.eta) ** order
            else:
                pattern = ElectronicPattern.offdiagonal(m_int, sigma_to)
                amp = spec.eta if (sigma_from, sigma_to) == (2, 1) else np.conj(spec.eta)
                coupling = amp * abs(spec.eta) ** (order - 1)
            pref = (-1j) ** order * coupling * np.exp(_pattern_h(spec, pattern))
            if coupling == 0.0 and order > 0:
                nu = np.zeros(0)
                ec = np.zeros(0, dtype=int)
                deg = np.zeros(0, dtype=int)
                coef = np.zeros(0, dtype=complex)
            else:
                nu, ec, deg, coef = _collect_single_order(spec, pattern, sigma_to, kt)
            _cache[key] = _CollectedSingle(
                order=order,
                prefactor=pref,
                omega_ref=spec.level_freqs[sigma_to],
                omega21=spec.omega21,
                nu=nu,
                ec=ec,
                deg=deg,
                coef=coef,
            )
        out.append(_cache[key])
    return out


def eval_single_orders(orders, ts) -> np.ndarray:
    """(n_orders, n_times) array of per-order contributions."""
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    return np.array([o.eval(ts) for o in orders])


def _series_result(order_labels, parts, k_total, n_max) -> SeriesResult:
    per_order = tuple((o, complex(p)) for o, p in zip(order_labels, parts))
    return SeriesResult(
        value=complex(sum(p for _, p in per_order)),
        per_order=per_order,
        k_total=k_total,
        n_max=n_max,
    )


def propagator(
    spec: ModelSpec,
    sigma_from: int,
    sigma_to: int,
    t: float,
    n_max: int = 6,
    k_total: int = 8,
    state_budget=DEFAULT_STATE_BUDGET,
) -> SeriesResult:
    """<sigma_to; vac| U(t) |sigma_from; vac> as a truncated series."""
    orders = collected_single_orders(spec, sigma_from, sigma_to, n_max, k_total, state_budget)
    parts = eval_single_orders(orders, [t])[:, 0]
    return _series_result([o.order for o in orders], parts, k_total, n_max)


def diag_propagator(spec, sigma, t, n_max=6, k_total=8, **kw) -> SeriesResult:
    """Even-order series of the population-conserving element."""
    return propagator(spec, sigma, sigma, t, n_max, k_total, **kw)


def offdiag_propagator(spec, sigma_from, sigma_to, t, n_max=5, k_total=8, **kw) -> SeriesResult:
    """Odd-order series of the transfer element (sigma_from != sigma_to)."""
    if sigma_from == sigma_to:
        raise ModelError("off-diagonal element needs distinct excited states")
    return propagator(spec, sigma_from, sigma_to, t, n_max, k_total, **kw)


def multimode_propagator(spec, sigma_from, sigma_to, t, n_max=6, k_total=8, **kw) -> SeriesResult:
    """General entry point; dispatches on the diagonal/off-diagonal pattern."""
    return propagator(spec, sigma_from, sigma_to, t, n_max, k_total, **kw)


# ----------------------------------------------------------------------
# Degenerate-dimer reduced form: a single-mode series with modified slot
# bases that must reproduce the two-mode product.  The bases do not
# factorize over interval boundaries, so aggregation runs slot by slot.
# ----------------------------------------------------------------------


def _coverage_weights_from_bases(bases, slots, m_intervals: int, k_total: int):
    """Aggregated weights for arbitrary slot bases (single frequency group)."""
    keys = np.zeros(1, dtype=np.int64)  # packs (units used, coverage digits)
    wts = np.ones(1, dtype=np.complex128)
    cov_shift = np.array(
        [
            sum(16 ** (m_intervals - 1 - (i - 1)) for i in range(q, e + 1))
            for q, e in slots
        ],
        dtype=np.int64,
    )
    unit_shift = np.int64(16**m_intervals)
    for b, dcov in zip(bases, cov_shift):
        if b == 0.0:
            continue
        parts_k, parts_w = [keys], [wts]
        for j in range(1, k_total + 1):
            sel = (keys // unit_shift) + j <= k_total
            if not sel.any():
                break
            parts_k.append(keys[sel] + j * unit_shift + j * dcov)
            parts_w.append(wts[sel] * b**j / math.factorial(j))
        keys = np.concatenate(parts_k)
        wts = np.concatenate(parts_w)
        order = np.argsort(keys, kind="stable")
        keys = keys[order]
        uniq, start = np.unique(keys, return_index=True)
        wts = np.add.reduceat(wts[order], start)
        keys = uniq
    cov = np.zeros((keys.size, m_intervals), dtype=np.int64)
    for i in range(m_intervals):
        cov[:, i] = (keys >> (4 * (m_intervals - 1 - i))) % 16
    return cov, wts


def dimer_reduced_propagator(
    spec: ModelSpec,
    sigma_from: int,
    sigma_to: int,
    t: float,
    n_max: int = 6,
    k_total: int = 8,
) -> SeriesResult:
    """Propagator of a degenerate dimer via the reduced single-mode form.

    Requires model B with equal mode and level frequencies and one common
    displacement z_e; the series must agree with the two-mode product form.
    """
    if spec.model != "B":
        raise ModelError("the reduced form is a dimer (model B) construction")
    if spec.mode_freqs[0] != spec.mode_freqs[1] or spec.omega21 != 0.0:
        raise ModelError("reduced form needs a degenerate dimer (equal frequencies)")
    z_e = spec.displacements[0][1]
    if spec.displacements[1][2] != z_e or spec.displacements[0][2] != 0.0 or spec.displacements[1][1] != 0.0:
        raise ModelError("reduced form needs one common local displacement z_e")
    omega = spec.mode_freqs[0]
    diagonal = sigma_from == sigma_to
    orders = range(0 if diagonal else 1, n_max + 1, 2)
    labels, parts = [], []
    for order in orders:
        m_int = order + 1
        if diagonal:
            coupling = abs(spec.eta) ** order
        else:
            amp = spec.eta if (sigma_from, sigma_to) == (2, 1) else np.conj(spec.eta)
            coupling = amp * abs(spec.eta) ** (order - 1)
        pref = (-1j) ** order * coupling * np.exp(cb.h_dimer(m_int, z_e))
        bases = cb.dimer_reduced_bases(m_int, z_e, same_final=diagonal)
        slots = cb.run_slots(m_int)
        cov, wts = _coverage_weights_from_bases(bases, slots, m_int, k_total)
        nu = omega * np.diff(cov, axis=1)
        polys = kn.batched_polynomials(nu, sigma_to, 0.0, spec.frequency_scale)
        t_arr = float(t)
        total = 0.0 + 0.0j
        for j, arr in enumerate(polys, start=1):
            freq = -spec.level_freqs[sigma_to] - omega * cov[:, j - 1]
            poly_t = np.zeros(cov.shape[0], dtype=complex)
            for r in range(arr.shape[1] - 1, -1, -1):
                poly_t = poly_t * t_arr + arr[:, r]
            total += np.sum(wts * poly_t * np.exp(1j * freq * t_arr))
        labels.append(order)
        parts.append(pref * total)
    return _series_result(labels, parts, k_total, n_max)


# ----------------------------------------------------------------------
# Three-segment propagators: left and right coupled-manifold segments
# around one central adiabatic interval.
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class _CollectedPair:
    order: int
    n_left: int
    n_right: int
    prefactor: complex
    omega_left: float
    omega_center: float
    omega_right: float
    omega21: float
    nu_l: np.ndarray
    ec_l: np.ndarray
    deg_l: np.ndarray
    nu_c: np.ndarray
    nu_r: np.ndarray
    ec_r: np.ndarray
    deg_r: np.ndarray
    coef: np.ndarray

    def eval(self, t_l, t_c, t_r) -> np.ndarray:
        t_l = np.atleast_1d(np.asarray(t_l, dtype=float))
        t_c = np.atleast_1d(np.asarray(t_c, dtype=float))
        t_r = np.atleast_1d(np.asarray(t_r, dtype=float))
        f_l = -self.omega_left - self.nu_l + self.ec_l * self.omega21
        f_c = -self.omega_center - self.nu_c
        f_r = -self.omega_right - self.nu_r + self.ec_r * self.omega21
        out = np.empty(t_l.shape, dtype=complex)
        for i in range(t_l.size):
            out[i] = np.sum(
                self.coef
                * t_l[i] ** self.deg_l
                * t_r[i] ** self.deg_r
                * np.exp(1j * (f_l * t_l[i] + f_c * t_c[i] + f_r * t_r[i]))
            )
        return self.prefactor * out


def collected_pair_orders(
    spec: ModelSpec,
    kind: str,
    n_max: int,
    k_total: int,
    state_budget=DEFAULT_STATE_BUDGET,
):
    """Collected (n_left, n_right) contributions of a three-segment element."""
    if kind not in ("X1", "X2"):
        raise ModelError(f"unknown propagator kind {kind!r}")
    if kind == "X2" and spec.n_levels < 4:
        raise ModelError("the doubly-excited pathway needs model A")
    shift = 0 if kind == "X1" else 1
    pairs = []
    for s in range(0, n_max // 2 - shift + 1):
        for n_l in range(s + 1):
            pairs.append((n_l, s - n_l))
    out = []
    for n_l, n_r in pairs:
        key = ("pair", spec, kind, n_l, n_r, k_total, state_budget)
        if key not in _cache:
            _cache[key] = _collect_pair(spec, kind, n_l, n_r, k_total, state_budget)
        out.append(_cache[key])
    return out


def _collect_pair(spec, kind, n_l, n_r, k_total, state_budget):
    if kind == "X1":
        m_l, m_r = 2 * n_l + 1, 2 * n_r + 1
        center_state, sigma_r = 0, 1
        order = 2 * (n_l + n_r)
        coupling = abs(spec.eta) ** order
        omega_center = spec.level_freqs[0]
    else:
        m_l, m_r = 2 * n_l + 2, 2 * n_r + 2
        center_state, sigma_r = 3, 2
        order = 2 * (n_l + n_r + 1)
        coupling = abs(spec.eta) ** order
        omega_center = spec.level_freqs[3]
    m_int = m_l + 1 + m_r
    pattern = ElectronicPattern.three_segment(m_l, center_state, m_r)
    kt = effective_k_total(m_int, k_total, len(_mode_groups(spec)[0]), state_budget)
    pref = (-1j) ** order * coupling * np.exp(_pattern_h(spec, pattern))
    if coupling == 0.0 and order > 0:
        empty = np.zeros(0)
        return _CollectedPair(
            order, n_l, n_r, pref,
            spec.level_freqs[1], omega_center, spec.level_freqs[sigma_r], spec.omega21,
            empty, empty.astype(int), empty.astype(int), empty,
            empty, empty.astype(int), empty.astype(int), empty.astype(complex),
        )
    segments = [
        (1, m_l, 1),
        (m_l + 1, 0, 0),
        (m_l + 2, m_r, sigma_r),
    ]
    buckets, group_freqs, dig_base = _collect_segments(spec, pattern, segments, kt)
    keys = np.fromiter(buckets.keys(), dtype=np.int64, count=len(buckets))
    order_ix = np.argsort(keys)
    keys = keys[order_ix]
    coef = np.array(list(buckets.values()), dtype=complex)[order_ix]
    nu_l, ec_l, deg_l = _decode_segment(keys, 0, 3, group_freqs, dig_base)
    nu_c, _, _ = _decode_segment(keys, 1, 3, group_freqs, dig_base)
    nu_r, ec_r, deg_r = _decode_segment(keys, 2, 3, group_freqs, dig_base)
    return _CollectedPair(
        order, n_l, n_r, pref,
        spec.level_freqs[1], omega_center, spec.level_freqs[sigma_r], spec.omega21,
        nu_l, ec_l, deg_l, nu_c, nu_r, ec_r, deg_r, coef,
    )


def eval_pair_orders(pairs, t_l, t_c, t_r):
    """Per-order sums over (n_left, n_right) splits; dict order -> values."""
    out: dict = {}
    for p in pairs:
        vals = p.eval(t_l, t_c, t_r)
        if p.order in out:
            out[p.order] = out[p.order] + vals
        else:
            out[p.order] = vals
    return dict(sorted(out.items()))


def x1(
    spec: ModelSpec,
    t_l: float,
    t_c: float,
    t_r: float,
    n_max: int = 6,
    k_total: int = 8,
    state_budget=DEFAULT_STATE_BUDGET,
) -> SeriesResult:
    """Ground-centered three-segment propagator (even coupling orders)."""
    pairs = collected_pair_orders(spec, "X1", n_max, k_total, state_budget)
    per = eval_pair_orders(pairs, [t_l], [t_c], [t_r])
    return _series_result(list(per), [v[0] for v in per.values()], k_total, n_max)


def x2(
    spec: ModelSpec,
    t_l: float,
    t_c: float,
    t_r: float,
    n_max: int = 8,
    k_total: int = 8,
    state_budget=DEFAULT_STATE_BUDGET,
) -> SeriesResult:
    """Doubly-excited-centered three-segment propagator (model A only)."""
    pairs = collected_pair_orders(spec, "X2", n_max, k_total, state_budget)
    per = eval_pair_orders(pairs, [t_l], [t_c], [t_r])
    return _series_result(list(per), [v[0] for v in per.values()], k_total, n_max)


def interaction_kernel(spec: ModelSpec, pattern: ElectronicPattern, durations, k_total: int) -> complex:
    """Fixed-interaction-time kernel via the aggregated Taylor sum.

    The product over modes of exp(h) times the truncated displacement
    expansion, evaluated at explicit interval durations; cross-checked in
    the tests against the closed form and the operator-product reference.
    """
    durations = np.asarray(durations, dtype=float)
    group_freqs, group_of_mode = _mode_groups(spec)
    jumps = [pattern.boundary_jumps(row) for row in spec.displacements]
    table = cb.coverage_weights(jumps, group_of_mode, k_total)
    phase = np.zeros(table.weights.size)
    for gi, wg in enumerate(group_freqs):
        phase = phase + wg * (table.coverage[gi] @ durations)
    h = _pattern_h(spec, pattern)
    return complex(np.exp(h) * np.sum(table.weights * np.exp(-1j * phase)))
