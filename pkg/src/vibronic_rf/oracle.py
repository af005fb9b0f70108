"""Brute-force references in a truncated Fock space.

Everything here is built from dense (or sparse) matrices and numerical
exponentials, with no input from the analytical series: exact
diagonalization of the full Hamiltonian, products of numerically
exponentiated displacement operators, and nested Gauss-Legendre quadrature
of fixed-order perturbation terms.  These are the adjudicators for every
sign and index convention of the analytic layer.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh, expm
from scipy.sparse import csr_matrix, identity, kron
from scipy.sparse.linalg import expm_multiply

from .model import ModelSpec

__all__ = [
    "OracleError",
    "FockOperator",
    "build_hamiltonian",
    "exact_propagator",
    "exact_x1",
    "exact_x2",
    "exact_multitime",
    "displaced_sequence_expectation",
    "dyson_term_quadrature",
    "u0_product",
]

DENSE_DIM_CAP = 6000
ESCALATION_CAP = 160


class OracleError(RuntimeError):
    """Raised when a brute-force reference fails its own convergence check."""


def _destroy(n_fock: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, n_fock)), k=1).astype(complex)


def _mode_block(omega: float, z: float, n_fock: int) -> np.ndarray:
    """omega (a^+ + z)(a + z) on one truncated mode."""
    a = _destroy(n_fock)
    n_op = np.diag(np.arange(n_fock)).astype(complex)
    return omega * (n_op + z * (a + a.conj().T) + z * z * np.eye(n_fock))


def _level_vib_hamiltonian(spec: ModelSpec, xi: int, n_fock: int) -> np.ndarray:
    """Vibrational Hamiltonian of electronic level xi (all modes)."""
    out = None
    for zeta, omega in enumerate(spec.mode_freqs):
        blk = _mode_block(omega, spec.displacements[zeta][xi], n_fock)
        term = blk
        for other in range(spec.n_modes):
            if other == zeta:
                continue
            eye = np.eye(n_fock)
            term = np.kron(term, eye) if other > zeta else np.kron(eye, term)
        out = term if out is None else out + term
    return out + spec.level_freqs[xi] * np.eye(out.shape[0])


@dataclass
class FockOperator:
    """A dense operator on the electronic x Fock product space."""

    matrix: np.ndarray
    n_fock: int
    n_levels: int

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def hermiticity_residual(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T)))


def build_hamiltonian(spec: ModelSpec, n_max: int) -> FockOperator:
    """Full Hamiltonian on the truncated product space.

    Adiabatic blocks are displaced oscillators per electronic level; the
    coupling acts between levels 1 and 2 as the identity on vibrations.
    """
    if n_max < 1:
        raise OracleError("n_max must be >= 1")
    n_fock = n_max + 1
    vib_dim = n_fock**spec.n_modes
    dim = spec.n_levels * vib_dim
    if dim > DENSE_DIM_CAP:
        raise OracleError(
            f"dense dimension {dim} exceeds cap {DENSE_DIM_CAP}; lower n_max"
        )
    h = np.zeros((dim, dim), dtype=complex)
    for xi in range(spec.n_levels):
        sl = slice(xi * vib_dim, (xi + 1) * vib_dim)
        h[sl, sl] = _level_vib_hamiltonian(spec, xi, n_fock)
    eye = np.eye(vib_dim)
    h[vib_dim : 2 * vib_dim, 2 * vib_dim : 3 * vib_dim] = spec.eta * eye
    h[2 * vib_dim : 3 * vib_dim, vib_dim : 2 * vib_dim] = np.conj(spec.eta) * eye
    return FockOperator(matrix=h, n_fock=n_fock, n_levels=spec.n_levels)


def _excited_block(spec: ModelSpec, n_max: int):
    """H restricted to the coupled excited subspace {|1>, |2>}."""
    n_fock = n_max + 1
    h1 = _level_vib_hamiltonian(spec, 1, n_fock)
    h2 = _level_vib_hamiltonian(spec, 2, n_fock)
    vib_dim = h1.shape[0]
    h = np.zeros((2 * vib_dim, 2 * vib_dim), dtype=complex)
    h[:vib_dim, :vib_dim] = h1
    h[vib_dim:, vib_dim:] = h2
    h[:vib_dim, vib_dim:] = spec.eta * np.eye(vib_dim)
    h[vib_dim:, :vib_dim] = np.conj(spec.eta) * np.eye(vib_dim)
    return h, vib_dim


def _excited_block_sparse(spec: ModelSpec, n_max: int):
    n_fock = n_max + 1
    h1 = csr_matrix(_level_vib_hamiltonian(spec, 1, n_fock))
    h2 = csr_matrix(_level_vib_hamiltonian(spec, 2, n_fock))
    vib_dim = h1.shape[0]
    eye = identity(vib_dim, format="csr", dtype=complex)
    top = kron(csr_matrix(np.array([[1, 0], [0, 0]])), h1) + kron(
        csr_matrix(np.array([[0, 0], [0, 1]])), h2
    )
    coup = kron(csr_matrix(np.array([[0, 1], [0, 0]])), spec.eta * eye) + kron(
        csr_matrix(np.array([[0, 0], [1, 0]])), np.conj(spec.eta) * eye
    )
    return (top + coup).tocsr(), vib_dim


_eig_cache: dict = {}


def _excited_eig(spec: ModelSpec, n_max: int):
    key = (spec, n_max)
    if key not in _eig_cache:
        h, vib_dim = _excited_block(spec, n_max)
        lam, vec = eigh(h)
        _eig_cache[key] = (lam, vec, vib_dim)
    return _eig_cache[key]


def exact_propagator(
    spec: ModelSpec,
    sigma_from: int,
    sigma_to: int,
    times,
    n_max: int = 40,
    tail_tol: float = 1e-10,
):
    """<sigma_to; 0| exp(-iHt) |sigma_from; 0> on a time grid.

    Diagonalizes the coupled excited block when it is small enough and
    falls back to sparse Krylov propagation otherwise.  The Fock cutoff is
    doubled (up to a cap) until the population of the top Fock layer of
    the evolved state stays below ``tail_tol``.
    """
    ts = np.atleast_1d(np.asarray(times, dtype=float))
    if sigma_from not in (1, 2) or sigma_to not in (1, 2):
        raise OracleError("propagator endpoints must be excited levels 1 or 2")
    n = n_max
    while True:
        amps, tail = _propagate_once(spec, sigma_from, sigma_to, ts, n)
        if tail < tail_tol:
            break
        if 2 * n > ESCALATION_CAP:
            raise OracleError(
                f"Fock tail {tail:.2e} above {tail_tol:.0e} at cutoff {n}"
            )
        n *= 2
    return amps if np.ndim(times) else complex(amps[0])


def _top_layer_indices(n_fock: int, n_modes: int) -> np.ndarray:
    idx = np.arange(n_fock**n_modes)
    hit = np.zeros(idx.shape, dtype=bool)
    for _ in range(n_modes):
        hit |= idx % n_fock == n_fock - 1
        idx //= n_fock
    return np.nonzero(hit)[0]


def _propagate_once(spec, sigma_from, sigma_to, ts, n_max):
    n_fock = n_max + 1
    vib_dim = n_fock**spec.n_modes
    dim = 2 * vib_dim
    v0 = np.zeros(dim, dtype=complex)
    v0[(sigma_from - 1) * vib_dim] = 1.0
    pick = (sigma_to - 1) * vib_dim
    top = _top_layer_indices(n_fock, spec.n_modes)
    top_idx = np.concatenate([top, top + vib_dim])
    amps = np.zeros(len(ts), dtype=complex)
    tail = 0.0
    if dim <= DENSE_DIM_CAP:
        lam, vec, _ = _excited_eig(spec, n_max)
        w0 = vec.conj().T @ v0
        for i, t in enumerate(ts):
            psi = vec @ (np.exp(-1j * lam * t) * w0)
            amps[i] = psi[pick]
            tail = max(tail, float(np.sum(np.abs(psi[top_idx]) ** 2)))
        return amps, tail
    h, _ = _excited_block_sparse(spec, n_max)
    order = np.argsort(ts, kind="stable")
    psi = v0
    t_prev = 0.0
    for i in order:
        dt = ts[i] - t_prev
        if dt != 0.0:
            psi = expm_multiply(-1j * dt * h, psi)
            t_prev = ts[i]
        amps[i] = psi[pick]
        tail = max(tail, float(np.sum(np.abs(psi[top_idx]) ** 2)))
    return amps, tail


def _block_propagators(spec: ModelSpec, n_max: int):
    """Vibrational-space propagator factories for the three segments."""
    lam, vec, vib_dim = _excited_eig(spec, n_max)

    def u_excited(t: float) -> np.ndarray:
        return (vec * np.exp(-1j * lam * t)) @ vec.conj().T

    n_fock = n_max + 1
    diag_g = np.zeros(vib_dim)
    idx = np.arange(vib_dim)
    rem = idx.copy()
    for zeta in reversed(range(spec.n_modes)):
        diag_g = diag_g + spec.mode_freqs[zeta] * (rem % n_fock)
        rem //= n_fock
    diag_g = diag_g + spec.level_freqs[0]

    def u_ground(t: float) -> np.ndarray:
        return np.diag(np.exp(-1j * diag_g * t))

    if spec.n_levels > 3:
        hb = _level_vib_hamiltonian(spec, 3, n_fock)
        lam_b, vec_b = eigh(hb)

        def u_doubly(t: float) -> np.ndarray:
            return (vec_b * np.exp(-1j * lam_b * t)) @ vec_b.conj().T

    else:

        def u_doubly(t: float):
            raise OracleError("model has no doubly excited level")

    return u_excited, u_ground, u_doubly, vib_dim


def exact_x1(spec: ModelSpec, t_l: float, t_c: float, t_r: float, n_max: int = 40) -> complex:
    """<1;0|U(t_l)|1><0|U(t_c)|0><1|U(t_r)|1;0> by block diagonalization."""
    u_e, u_g, _, vib_dim = _block_propagators(spec, n_max)
    left = u_e(t_l)[:vib_dim, :vib_dim]
    right = u_e(t_r)[:vib_dim, :vib_dim]
    mid = u_g(t_c)
    vac = np.zeros(vib_dim, dtype=complex)
    vac[0] = 1.0
    return complex(vac @ (left @ (mid @ (right @ vac))))


def exact_x2(spec: ModelSpec, t_l: float, t_c: float, t_r: float, n_max: int = 40) -> complex:
    """<1;0|U(t_l)|2><3|U(t_c)|3><2|U(t_r)|1;0> by block diagonalization."""
    if spec.n_levels < 4:
        raise OracleError("doubly-excited pathway needs a four-level model")
    u_e, _, u_b, vib_dim = _block_propagators(spec, n_max)
    left = u_e(t_l)[:vib_dim, vib_dim:]
    right = u_e(t_r)[vib_dim:, :vib_dim]
    mid = u_b(t_c)
    vac = np.zeros(vib_dim, dtype=complex)
    vac[0] = 1.0
    return complex(vac @ (left @ (mid @ (right @ vac))))


def exact_multitime(spec: ModelSpec, pathway, t1: float, t2: float, t3: float, n_max: int = 40) -> complex:
    """Three-segment element of one pathway at waiting times (t1, t2, t3).

    ``pathway`` provides ``kind`` ("X1"|"X2") and ``time_map``; the bare
    element is returned, without sign or dipole prefactors.
    """
    t_l, t_c, t_r = pathway.map_times(t1, t2, t3)
    if pathway.kind == "X1":
        return exact_x1(spec, t_l, t_c, t_r, n_max)
    return exact_x2(spec, t_l, t_c, t_r, n_max)


def displaced_sequence_expectation(alphas, phases, n_max: int = 40) -> complex:
    """<0| prod_l D(alpha_l) exp(i phase_l n) |0> by dense matrix products.

    Displacement operators are numerically exponentiated generators
    (scaling and squaring); the free evolutions are diagonal phases.
    """
    alphas = [complex(a) for a in alphas]
    phases = [float(p) for p in phases]
    if len(alphas) != len(phases):
        raise OracleError("need one phase per displacement")
    if not alphas:
        raise OracleError("empty sequence")
    biggest = max(abs(a) for a in alphas)
    if biggest * len(alphas) > 0.5 * np.sqrt(n_max):
        warnings.warn(
            f"displacements up to {biggest:.3f} may exceed the n_max={n_max} cutoff",
            stacklevel=2,
        )
    n_fock = n_max + 1
    a = _destroy(n_fock)
    levels = np.arange(n_fock)
    v = np.zeros(n_fock, dtype=complex)
    v[0] = 1.0
    for alpha, phi in zip(reversed(alphas), reversed(phases)):
        v = np.exp(1j * phi * levels) * v
        v = expm(alpha * a.conj().T - np.conj(alpha) * a) @ v
    return complex(v[0])


def u0_product(spec: ModelSpec, sigma: int, t: float) -> complex:
    """Adiabatic diagonal propagator: one displaced-oscillator factor per mode."""
    out = np.exp(-1j * spec.level_freqs[sigma] * t)
    for zeta, omega in enumerate(spec.mode_freqs):
        z = spec.displacements[zeta][sigma]
        out *= np.exp(z * z * (np.exp(-1j * omega * t) - 1.0))
    return complex(out)


def _h0_eigenbasis(spec: ModelSpec, n_max: int):
    """Eigen-decomposition of the adiabatic part, plus the coupling matrix."""
    n_fock = n_max + 1
    vib_dim = n_fock**spec.n_modes
    dim = spec.n_levels * vib_dim
    lam = np.zeros(dim)
    p = np.zeros((dim, dim), dtype=complex)
    for xi in range(spec.n_levels):
        sl = slice(xi * vib_dim, (xi + 1) * vib_dim)
        lx, vx = eigh(_level_vib_hamiltonian(spec, xi, n_fock))
        lam[sl] = lx
        p[sl, sl] = vx
    v = np.zeros((dim, dim), dtype=complex)
    eye = np.eye(vib_dim)
    v[vib_dim : 2 * vib_dim, 2 * vib_dim : 3 * vib_dim] = spec.eta * eye
    v[2 * vib_dim : 3 * vib_dim, vib_dim : 2 * vib_dim] = np.conj(spec.eta) * eye
    v_tilde = p.conj().T @ v @ p
    return lam, p, v_tilde, vib_dim


def _nested_ordered_integral(f, t: float, depth: int, nodes: int):
    """Iterated Gauss-Legendre over the ordered simplex t > t_1 > ... > 0."""
    x, w = np.polynomial.legendre.leggauss(nodes)

    def level(upper, prefix):
        half = 0.5 * upper
        ts = half * (x + 1.0)
        ws = half * w
        acc = 0.0 + 0.0j
        for ti, wi in zip(ts, ws):
            if len(prefix) + 1 == depth:
                acc += wi * f(prefix + (ti,))
            else:
                acc += wi * level(ti, prefix + (ti,))
        return acc

    return level(t, ())


def dyson_term_quadrature(
    spec: ModelSpec,
    sigma_from: int,
    sigma_to: int,
    n_insertions: int,
    t: float,
    n_max: int = 14,
    nodes: int = 64,
    check_rtol: float = 1e-7,
) -> complex:
    """Fixed-order term of the coupling expansion by nested quadrature.

    Integrates (-i)^n <sigma_to;0| e^{-iH0 t} V_I(t_1)..V_I(t_n) |sigma_from;0>
    over the ordered simplex, the integrand evaluated with numerically
    exponentiated operators in the adiabatic eigenbasis.  A halved-node
    evaluation provides a convergence estimate; disagreement raises.
    """
    if n_insertions > 3:
        raise OracleError("quadrature cost grows as nodes^n; capped at n = 3")
    lam, p, v_tilde, vib_dim = _h0_eigenbasis(spec, n_max)
    ket = np.zeros(p.shape[0], dtype=complex)
    ket[sigma_from * vib_dim] = 1.0
    bra = np.zeros(p.shape[0], dtype=complex)
    bra[sigma_to * vib_dim] = 1.0
    ket_e = p.conj().T @ ket
    bra_e = p.conj().T @ bra

    def integrand(times) -> complex:
        vec = ket_e
        for tp in reversed(times):
            vec = np.exp(-1j * lam * tp) * vec
            vec = v_tilde @ vec
            vec = np.exp(1j * lam * tp) * vec
        vec = np.exp(-1j * lam * t) * vec
        return complex(bra_e.conj() @ vec)

    if n_insertions == 0:
        return integrand(())
    pref = (-1j) ** n_insertions
    fine = pref * _nested_ordered_integral(integrand, t, n_insertions, nodes)
    coarse = pref * _nested_ordered_integral(integrand, t, n_insertions, nodes // 2)
    scale = max(abs(fine), 1e-12)
    if abs(fine - coarse) > check_rtol * scale:
        raise OracleError(
            f"quadrature not converged: {abs(fine - coarse) / scale:.2e} relative"
        )
    return fine
