"""Taylor multi-index machinery for the displacement expansion.

The oscillating exponent of an M-interval propagator kernel carries one
Taylor slot per contiguous run of intervals: M(M+1)/2 slots ordered by run
length p = 1..M and, inside each block, by starting interval q = 1..M-p+1.
Slot i = w(p) + q with w(p) = (p-1)M - (p-1)(p-2)/2 covers intervals
q..q+p-1, so the first M slots are the single intervals in order, the next
M-1 the double runs, and the last slot the full span.

k-vectors (one exponent per slot) and m-vectors (net per-interval phase
exponents) are plain integer sequences here.  Direct lexicographic
enumeration is exact but explodes combinatorially, so the heavy sums are
aggregated over "coverage" vectors c, where c_i counts how many run units
cover interval i; every quantity downstream (phases, frequencies, the
time-integral polynomials) depends on k only through c.  The aggregation
is an exact regrouping performed by a boundary sweep: a unit of slot
(q, e) opens at boundary q-1 with weight -g_{q-1} and closes at boundary e
with weight g_e, where g_l are the displacement jumps of the pattern, and
binomial matching of indistinguishable open units reproduces the 1/k!
factors exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "run_slots",
    "n_slots",
    "enumerate_k",
    "count_k",
    "m_of_k",
    "coverage_of_k",
    "h_general",
    "chi_bases",
    "chi",
    "h_dimer",
    "dimer_reduced_bases",
    "coverage_weights",
    "coverage_state_count",
    "taylor_sum_direct",
]

_MAX_KT = 15  # coverage digits are packed in nibbles

# Pascal triangle for exact small binomials
_COMB = np.zeros((_MAX_KT + 1, _MAX_KT + 1))
for _n in range(_MAX_KT + 1):
    for _d in range(_n + 1):
        _COMB[_n, _d] = math.comb(_n, _d)

_FACT = np.array([math.factorial(n) for n in range(_MAX_KT + 1)], dtype=float)


def n_slots(m_intervals: int) -> int:
    return m_intervals * (m_intervals + 1) // 2


def run_slots(m_intervals: int):
    """(start, end) interval pair of every slot, 1-based, in slot order."""
    out = []
    for p in range(1, m_intervals + 1):
        for q in range(1, m_intervals - p + 2):
            out.append((q, q + p - 1))
    return out


def count_k(m_intervals: int, k_total: int) -> int:
    """Number of k-vectors with sum <= k_total (stars and bars)."""
    length = n_slots(m_intervals)
    return math.comb(length + k_total, k_total)


def enumerate_k(m_intervals: int, k_total: int):
    """Yield every k-vector with sum <= k_total once, in lexicographic order.

    The order is ascending lexicographic on the tuple itself, e.g. for a
    two-slot vector and k_total = 1: (0, 0), (0, 1), (1, 0).
    """
    if m_intervals < 1 or k_total < 0:
        raise ValueError("need m_intervals >= 1 and k_total >= 0")
    length = n_slots(m_intervals)
    k = [0] * length

    def rec(pos, remaining):
        if pos == length:
            yield tuple(k)
            return
        for v in range(remaining + 1):
            k[pos] = v
            yield from rec(pos + 1, remaining - v)
        k[pos] = 0

    yield from rec(0, k_total)


def m_of_k(k, m_intervals: int) -> np.ndarray:
    """Net phase exponents m_0..m_{M-1} of one k-vector.

    m_p collects +k from runs starting at interval p+1 and -k from runs
    ending at interval p; the term's oscillation is
    exp(-i omega sum_p m_p t_p) with t_0 the outer time.  Interior entries
    can be negative.
    """
    slots = run_slots(m_intervals)
    if len(k) != len(slots):
        raise ValueError(f"k has length {len(k)}, expected {len(slots)}")
    m = np.zeros(m_intervals, dtype=int)
    for (q, e), kv in zip(slots, k):
        m[q - 1] += kv
        if e < m_intervals:
            m[e] -= kv
    return m


def coverage_of_k(k, m_intervals: int) -> np.ndarray:
    """Coverage counts c_1..c_M: run units covering each interval."""
    slots = run_slots(m_intervals)
    c = np.zeros(m_intervals, dtype=int)
    for (q, e), kv in zip(slots, k):
        c[q - 1 : e] += kv
    return c


def h_general(z_entries) -> float:
    """Time-independent exponent of the kernel for one mode.

    Computed from the displacement jumps across the M+1 interval
    boundaries (ground endpoints included): h = -(1/2) sum_l g_l^2.  This
    sign reproduces the closed forms of the diagonal, off-diagonal and
    dimer special cases.
    """
    z = np.concatenate(([0.0], np.asarray(z_entries, dtype=float), [0.0]))
    g = z[:-1] - z[1:]
    return -0.5 * float(g @ g)


def chi_bases(z_entries) -> np.ndarray:
    """Base of each Taylor slot for one mode: b(q, e) = -g_{q-1} g_e."""
    z = np.concatenate(([0.0], np.asarray(z_entries, dtype=float), [0.0]))
    g = z[:-1] - z[1:]
    m_intervals = len(z) - 2
    return np.array([-g[q - 1] * g[e] for q, e in run_slots(m_intervals)])


def chi(z_entries, k) -> float:
    """Taylor weight prod_i b_i^{k_i} / k_i! for one mode and one k-vector."""
    bases = chi_bases(z_entries)
    if len(k) != len(bases):
        raise ValueError(f"k has length {len(k)}, expected {len(bases)}")
    out = 1.0
    for b, kv in zip(bases, k):
        if kv:
            out *= b**kv / math.factorial(kv)
    return out


def h_dimer(m_intervals: int, z_e: float) -> float:
    """Reduced time-independent exponent of the degenerate dimer: -M z_e^2."""
    return -m_intervals * z_e * z_e


def dimer_reduced_bases(m_intervals: int, z_e: float, same_final: bool) -> np.ndarray:
    """Single-mode slot bases replacing the two-mode product for a
    degenerate dimer.

    The first and last slot of each run-length block carry (-1)^{p+1} z_e^2,
    interior slots twice that, and the full-span slot z_e^2 when initial and
    final electronic states coincide (zero otherwise).
    """
    ze2 = z_e * z_e
    out = []
    for p in range(1, m_intervals + 1):
        width = m_intervals - p + 1
        sign = 1.0 if p % 2 == 1 else -1.0
        for q in range(1, width + 1):
            if p == m_intervals:
                out.append(ze2 if same_final else 0.0)
            elif q == 1 or q == width:
                out.append(sign * ze2)
            else:
                out.append(2.0 * sign * ze2)
    return np.array(out)


@dataclass(frozen=True)
class CoverageTable:
    """Aggregated Taylor weights of one pattern.

    ``coverage[g]`` is an (n_states, M) integer array holding, per
    aggregated state, the summed coverage of frequency group g; ``weights``
    the matching complex Taylor weights (all k-vectors with that coverage,
    sum <= k_T).  States are sorted by their packed coverage key, so the
    layout is deterministic.
    """

    coverage: tuple
    weights: np.ndarray


def coverage_state_count(m_intervals: int, k_total: int) -> int:
    """Number of aggregated states for a single frequency group.

    Counts coverage vectors whose total rise sum(max(c_i - c_{i-1}, 0))
    stays within the unit budget; used to pick affordable truncations.
    """
    cur = {(0, 0): 1}
    for _ in range(m_intervals):
        nxt: dict = {}
        for (h, u), n in cur.items():
            for h2 in range(k_total + 1):
                u2 = u + max(h2 - h, 0)
                if u2 <= k_total:
                    key = (h2, u2)
                    nxt[key] = nxt.get(key, 0) + n
        cur = nxt
    return sum(cur.values())


def _merge(traj, o_cols, n, w):
    """Combine duplicate DP states; deterministic sorted order."""
    key = traj.astype(np.int64)
    for col in o_cols:
        key = key * 16 + col
    key = key * 16 + n
    order = np.argsort(key, kind="stable")
    key = key[order]
    _, start = np.unique(key, return_index=True)
    w_out = np.add.reduceat(w[order], start)
    take = order[start]
    return (
        traj[take],
        [col[take] for col in o_cols],
        n[take],
        w_out,
    )


def coverage_weights(jumps_per_mode, group_of_mode, k_total: int) -> CoverageTable:
    """Aggregate all truncated k-vector sums of a pattern by coverage.

    Parameters
    ----------
    jumps_per_mode : sequence of arrays
        Displacement jumps g_0..g_M of every mode along the pattern.
    group_of_mode : sequence of int
        Frequency-group index of every mode; modes sharing a vibrational
        frequency may share a group, in which case only their summed
        coverage is tracked.
    k_total : int
        Truncation of the total Taylor order, sum over all modes' slots.

    Returns
    -------
    CoverageTable
        One weight per distinct coverage, equal to the sum of
        prod_i b_i^{k_i}/k_i! over every contributing k assignment.
    """
    if k_total > _MAX_KT:
        raise ValueError(f"k_total must be <= {_MAX_KT}")
    jumps = [np.asarray(g, dtype=float) for g in jumps_per_mode]
    n_modes = len(jumps)
    m_intervals = len(jumps[0]) - 1
    groups = list(group_of_mode)
    n_groups = max(groups) + 1
    # widest merge key: trajectory digits so far + per-mode open counts + unit count
    nibbles = max(
        (m_intervals - 1) * n_groups + n_modes + 1,
        m_intervals * n_groups + 1,
    )
    if nibbles > 15:
        raise ValueError("pattern too large to pack the aggregation key")
    stride = 16**n_groups

    traj = np.zeros(1, dtype=np.int64)
    o_cols = [np.zeros(1, dtype=np.int64) for _ in range(n_modes)]
    n_used = np.zeros(1, dtype=np.int64)
    w = np.ones(1, dtype=np.complex128)

    for b in range(m_intervals + 1):
        last = b == m_intervals
        for m in range(n_modes):
            g = jumps[m][b]
            o = o_cols[m]
            if last:
                # every open unit must close at the final boundary
                w = w * np.where(o > 0, g.astype(float) ** o, 1.0)
                o_cols[m] = np.zeros_like(o)
                keep = w != 0.0
                if not keep.all():
                    traj, n_used, w = traj[keep], n_used[keep], w[keep]
                    o_cols = [col[keep] for col in o_cols]
                continue
            if g == 0.0:
                # opens and closes carry zero weight here; states pass through
                continue
            # closes: d units end here, binomially matched to the opens
            parts_t, parts_o, parts_n, parts_w = [], [], [], []
            o = o_cols[m]
            dmax = int(o.max(initial=0))
            for d in range(dmax + 1):
                sel = o >= d
                if not sel.any():
                    continue
                factor = _COMB[o[sel], d] * g**d
                parts_t.append(traj[sel])
                parts_o.append([col[sel] for col in o_cols])
                parts_o[-1][m] = parts_o[-1][m] - d
                parts_n.append(n_used[sel])
                parts_w.append(w[sel] * factor)
            traj = np.concatenate(parts_t)
            o_cols = [np.concatenate([p[i] for p in parts_o]) for i in range(n_modes)]
            n_used = np.concatenate(parts_n)
            w = np.concatenate(parts_w)
            traj, o_cols, n_used, w = _merge(traj, o_cols, n_used, w)
            # opens: u new units begin at the next interval
            parts_t, parts_o, parts_n, parts_w = [], [], [], []
            for u in range(k_total + 1):
                sel = n_used + u <= k_total
                if not sel.any():
                    break
                factor = (-g) ** u / _FACT[u]
                parts_t.append(traj[sel])
                parts_o.append([col[sel] for col in o_cols])
                parts_o[-1][m] = parts_o[-1][m] + u
                parts_n.append(n_used[sel] + u)
                parts_w.append(w[sel] * factor)
            traj = np.concatenate(parts_t)
            o_cols = [np.concatenate([p[i] for p in parts_o]) for i in range(n_modes)]
            n_used = np.concatenate(parts_n)
            w = np.concatenate(parts_w)
            traj, o_cols, n_used, w = _merge(traj, o_cols, n_used, w)
        if not last:
            digit = np.zeros_like(traj)
            for m in range(n_modes):
                digit += o_cols[m] * (16 ** groups[m])
            traj = traj * stride + digit

    # marginalize the unit count; all o columns are zero now
    traj, _, _, w = _merge(traj, [], np.zeros_like(traj), w)
    # decode per-group coverage digits
    cov = []
    for gidx in range(n_groups):
        arr = np.zeros((traj.size, m_intervals), dtype=np.int64)
        for i in range(m_intervals):
            shift = stride ** (m_intervals - 1 - i)
            arr[:, i] = (traj // shift // (16**gidx)) % 16
        cov.append(arr)
    return CoverageTable(coverage=tuple(cov), weights=w)


def taylor_sum_direct(bases, m_intervals: int, k_total: int, phase_of_k) -> complex:
    """Reference truncated Taylor sum by explicit k enumeration.

    Accumulates prod b^k/k! * phase_of_k(k) over every k-vector in
    lexicographic order; one slot list per mode, concatenated.  Exact but
    exponential, for cross-checks at small M only.
    """
    bases = np.asarray(bases, dtype=float)
    total = 0.0 + 0.0j
    per_mode = n_slots(m_intervals)
    n_modes = len(bases) // per_mode

    def weight(k):
        out = 1.0
        for b, kv in zip(bases, k):
            if kv:
                out *= b**kv / math.factorial(kv)
        return out

    length = per_mode * n_modes
    k = [0] * length

    def rec(pos, remaining):
        nonlocal total
        if pos == length:
            total += weight(k) * phase_of_k(k)
            return
        for v in range(remaining + 1):
            k[pos] = v
            rec(pos + 1, remaining - v)
        k[pos] = 0

    rec(0, k_total)
    return total
