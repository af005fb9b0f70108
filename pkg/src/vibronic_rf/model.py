"""Model parameters and electronic interval patterns.

Two model families are supported: model A is a four-level system (ground,
two non-adiabatically coupled excited states, one doubly excited state)
with a single vibrational mode; model B is a three-level dimer with one
localized mode per monomer.  All energies share one unit (hbar = 1); the
coupling strength eta sets the natural scale, and times are reported in
units of 1/|eta|.
"""

from __future__ import annotations

import cmath
import json
from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "ModelError",
    "ModelSpec",
    "ElectronicPattern",
    "validate",
    "load_config",
    "dump_config",
    "model_a_example",
    "model_b_example",
    "symmetric_dimer_example",
]

_MODEL_SHAPE = {"A": (4, 1), "B": (3, 2)}


class ModelError(ValueError):
    """Raised when a model configuration violates an invariant."""


@dataclass(frozen=True)
class ModelSpec:
    """All Hamiltonian parameters of one model instance.

    Attributes
    ----------
    model : str
        "A" (4 levels, 1 mode) or "B" (3 levels, 2 modes).
    mode_freqs : tuple of float
        Vibrational frequencies omega_zeta, one per mode.
    level_freqs : tuple of float
        Electronic level frequencies omega_xi, indexed 0..N-1 with the
        ground level fixed at zero.
    displacements : tuple of tuple of float
        G x N real matrix z[zeta][xi]; column 0 is identically zero
        (the ground state defines the origin of each oscillator).
    eta : complex
        Non-adiabatic coupling between levels 1 and 2.
    dipole_01, dipole_23 : complex
        Transition dipoles; pure prefactors of the response functions.
    """

    model: str
    mode_freqs: tuple
    level_freqs: tuple
    displacements: tuple
    eta: complex
    dipole_01: complex = 1.0 + 0.0j
    dipole_23: complex = 1.0 + 0.0j

    @property
    def n_levels(self) -> int:
        return len(self.level_freqs)

    @property
    def n_modes(self) -> int:
        return len(self.mode_freqs)

    @property
    def omega21(self) -> float:
        return self.level_freqs[2] - self.level_freqs[1]

    @property
    def frequency_scale(self) -> float:
        """Reference scale for zero-frequency decisions."""
        return max(max(self.mode_freqs), abs(self.omega21), abs(self.eta), 1e-300)

    def z_column(self, xi: int) -> tuple:
        """Displacements of every mode in electronic level xi."""
        return tuple(row[xi] for row in self.displacements)


def validate(spec: ModelSpec) -> ModelSpec:
    """Check every invariant; return the spec unchanged if all hold.

    Raises ModelError naming the violated invariant otherwise.
    Validation is idempotent.
    """
    if spec.model not in _MODEL_SHAPE:
        raise ModelError(f"unknown model {spec.model!r}; expected 'A' or 'B'")
    n_req, g_req = _MODEL_SHAPE[spec.model]
    if spec.n_levels != n_req:
        raise ModelError(
            f"model {spec.model} requires {n_req} levels, got {spec.n_levels}"
        )
    if spec.n_modes != g_req:
        raise ModelError(
            f"model {spec.model} requires {g_req} modes, got {spec.n_modes}"
        )
    for w in spec.mode_freqs:
        if not (float(w) > 0.0):
            raise ModelError(f"mode frequencies must be positive, got {w}")
    if len(spec.displacements) != spec.n_modes:
        raise ModelError("displacement matrix must have one row per mode")
    for zeta, row in enumerate(spec.displacements):
        if len(row) != spec.n_levels:
            raise ModelError("displacement matrix must have one column per level")
        for z in row:
            if isinstance(z, complex) or not np.isfinite(float(z)):
                raise ModelError(f"displacements must be finite reals, got {z!r}")
        if row[0] != 0.0:
            raise ModelError(
                f"ground-state displacement of mode {zeta} must be zero (got {row[0]})"
            )
    if spec.level_freqs[0] != 0.0:
        raise ModelError("level 0 defines the zero of energy; omega_0 must be 0")
    if not all(np.isfinite(float(w)) for w in spec.level_freqs):
        raise ModelError("level frequencies must be finite")
    if not np.isfinite(abs(spec.eta)):
        raise ModelError("eta must be finite")
    return spec


@dataclass(frozen=True)
class ElectronicPattern:
    """Electronic state index per time interval of one propagator term.

    ``js`` holds j_0 .. j_{M+1}: the M interval states plus the two
    ground-state endpoints.  Intervals are counted with index 1 the most
    recent one (counterclockwise around the diagram, starting from the
    bottom right corner).
    """

    js: tuple

    @property
    def m_intervals(self) -> int:
        return len(self.js) - 2

    @staticmethod
    def diagonal(m_intervals: int, sigma: int) -> "ElectronicPattern":
        """Even-order (diagonal) pattern: sigma on odd slots, 3-sigma on even."""
        if m_intervals % 2 == 0:
            raise ModelError("diagonal patterns need an odd interval count")
        js = [0]
        for k in range(1, m_intervals + 1):
            js.append(sigma if k % 2 == 1 else 3 - sigma)
        js.append(0)
        return ElectronicPattern(tuple(js))

    @staticmethod
    def offdiagonal(m_intervals: int, sigma_final: int) -> "ElectronicPattern":
        """Odd-order pattern ending in sigma_final (interval 1 is the last one)."""
        if m_intervals % 2 == 1:
            raise ModelError("off-diagonal patterns need an even interval count")
        js = [0]
        for k in range(1, m_intervals + 1):
            js.append(sigma_final if k % 2 == 1 else 3 - sigma_final)
        js.append(0)
        return ElectronicPattern(tuple(js))

    @staticmethod
    def three_segment(m_left: int, center_state: int, m_right: int) -> "ElectronicPattern":
        """Multitime pattern: alternating 1/2 with a central interval replaced.

        The left block has ``m_left`` intervals, then one central interval in
        ``center_state`` (0 for a ground-state segment, 3 for the doubly
        excited one), then ``m_right`` intervals.
        """
        m_total = m_left + 1 + m_right
        js = [0]
        for k in range(1, m_total + 1):
            js.append(1 if k % 2 == 1 else 2)
        js.append(0)
        js[m_left + 1] = center_state
        return ElectronicPattern(tuple(js))

    def z_entries(self, displacement_row) -> np.ndarray:
        """Displacements z_{j_1}..z_{j_M} of one mode along this pattern."""
        return np.array([displacement_row[j] for j in self.js[1:-1]], dtype=float)

    def boundary_jumps(self, displacement_row) -> np.ndarray:
        """Displacement jumps g_l = z_{j_l} - z_{j_{l+1}}, l = 0..M."""
        z = np.array([displacement_row[j] for j in self.js], dtype=float)
        return z[:-1] - z[1:]


def _require_keys(cfg: dict, keys, path: str) -> None:
    missing = [k for k in keys if k not in cfg]
    if missing:
        raise ModelError(f"{path}: missing config keys {missing}")


def load_config(path: str) -> ModelSpec:
    """Load and validate a model from a JSON config file.

    Expected keys: ``model`` ("A"|"B"), ``omega_modes``, ``omega_levels``,
    ``displacements`` (row-major G x N), ``eta_re``, ``eta_im``, ``mu01``,
    ``mu23``.  With ``normalize_eta`` true, all energies are taken in units
    of |eta| and rescaled so that |eta| = 1 internally.
    """
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ModelError(f"{path}: cannot read config ({exc})") from exc
    _require_keys(
        cfg, ["model", "omega_modes", "omega_levels", "displacements", "eta_re", "eta_im"], path
    )
    eta = complex(cfg["eta_re"], cfg["eta_im"])
    modes = [float(w) for w in cfg["omega_modes"]]
    levels = [float(w) for w in cfg["omega_levels"]]
    n_levels = len(levels)
    disp_flat = [float(z) for z in cfg["displacements"]]
    if n_levels == 0 or len(disp_flat) % n_levels != 0:
        raise ModelError(f"{path}: displacements must be a row-major G x N list")
    rows = [
        tuple(disp_flat[i * n_levels : (i + 1) * n_levels])
        for i in range(len(disp_flat) // n_levels)
    ]
    if cfg.get("normalize_eta", False):
        scale = abs(eta)
        if scale == 0.0:
            raise ModelError(f"{path}: normalize_eta requires a nonzero eta")
        modes = [w / scale for w in modes]
        levels = [w / scale for w in levels]
        eta = eta / scale
    spec = ModelSpec(
        model=str(cfg["model"]),
        mode_freqs=tuple(modes),
        level_freqs=tuple(levels),
        displacements=tuple(rows),
        eta=eta,
        dipole_01=complex(cfg.get("mu01", 1.0)),
        dipole_23=complex(cfg.get("mu23", 1.0)),
    )
    return validate(spec)


def dump_config(spec: ModelSpec, path: str) -> None:
    """Write a config file that ``load_config`` reads back identically."""
    cfg = {
        "model": spec.model,
        "omega_modes": list(spec.mode_freqs),
        "omega_levels": list(spec.level_freqs),
        "displacements": [z for row in spec.displacements for z in row],
        "eta_re": spec.eta.real,
        "eta_im": spec.eta.imag,
        "mu01": abs(spec.dipole_01),
        "mu23": abs(spec.dipole_23),
        "normalize_eta": False,
    }
    with open(path, "w") as fh:
        json.dump(cfg, fh, indent=2)
        fh.write("\n")


def model_a_example(eta: complex = 1.0 + 0.0j) -> ModelSpec:
    """Four-level single-mode reference parameters (energies in units of |eta|)."""
    return validate(
        ModelSpec(
            model="A",
            mode_freqs=(1.587,),
            level_freqs=(0.0, 14.29, 17.14, 31.43),
            displacements=((0.0, 0.1, 0.2, 0.15),),
            eta=complex(eta),
        )
    )


def model_b_example(eta: complex = 1.0 + 0.0j) -> ModelSpec:
    """Dimer reference parameters: each excited level displaces its own mode."""
    return validate(
        ModelSpec(
            model="B",
            mode_freqs=(1.587, 1.587),
            level_freqs=(0.0, 14.29, 17.14),
            displacements=((0.0, 0.1, 0.0), (0.0, 0.0, 0.1)),
            eta=complex(eta),
        )
    )


def symmetric_dimer_example(eta: complex = 1.0 + 0.0j, z_e: float = 0.1) -> ModelSpec:
    """Degenerate dimer (omega_1 = omega_2) for the reduced single-mode form."""
    return validate(
        ModelSpec(
            model="B",
            mode_freqs=(1.587, 1.587),
            level_freqs=(0.0, 14.29, 14.29),
            displacements=((0.0, z_e, 0.0), (0.0, 0.0, z_e)),
            eta=complex(eta),
        )
    )


def swap_excited_levels(spec: ModelSpec) -> ModelSpec:
    """Exchange the roles of levels 1 and 2 (frequencies and displacements)."""
    lf = list(spec.level_freqs)
    lf[1], lf[2] = lf[2], lf[1]
    rows = []
    for row in spec.displacements:
        r = list(row)
        r[1], r[2] = r[2], r[1]
        rows.append(tuple(r))
    return replace(spec, level_freqs=tuple(lf), displacements=tuple(rows))
