"""SiV ground/excited orbital doublets in a magnetic field and static strain.

Each manifold is a 4x4 problem in the product basis
{|e+ up>, |e+ dn>, |e- up>, |e- dn>} (orbital x spin) with

    H = -(lambda_so / 2) tau_z sigma_z
        + strain_x tau_x + strain_y tau_y
        + q gamma_L B_z tau_z
        + (gamma_s / 2) B . sigma

which is traceless.  Energies are angular frequencies (rad/s).  Optical
strengths use a dipole operator that is the identity on spin and couples
e+ -> e+, e- -> e- equally, i.e. strength = |<excited|ground>|^2.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np
from scipy.optimize import brentq

from .signals import Spectrum

TWO_PI = 2 * np.pi

_TZ = np.diag([1.0, -1.0]).astype(complex)
_TX = np.array([[0, 1], [1, 0]], dtype=complex)
_TY = np.array([[0, -1j], [1j, 0]], dtype=complex)
_I2 = np.eye(2, dtype=complex)
SIGMA = tuple(np.kron(_I2, s) for s in (_TX, _TY, _TZ))
SZ = SIGMA[2]

# calibrated so the lower ground doublet splits by 3 GHz at 0.12 T transverse
OPERATING_STRAIN_GROUND = TWO_PI * 49.588416e9
OPERATING_STRAIN_EXCITED = TWO_PI * 50e9


@dataclass(frozen=True)
class LevelParams:
    lambda_so_ground: float = TWO_PI * 50e9
    lambda_so_excited: float = TWO_PI * 260e9
    b_field: tuple = (0.0, 0.0, 0.0)
    strain_ground: tuple = (0.0, 0.0)
    strain_excited: tuple = (0.0, 0.0)
    gyromagnetic_spin: float = TWO_PI * 28.0e9
    gyromagnetic_orbital: float = TWO_PI * 28.0e9
    orbital_quenching: float = 0.1

    def __post_init__(self):
        if self.lambda_so_ground <= 0 or self.lambda_so_excited <= 0:
            raise ValueError("spin-orbit splittings must be > 0")
        if not 0.0 <= self.orbital_quenching <= 1.0:
            raise ValueError("orbital_quenching must lie in [0, 1]")
        if self.gyromagnetic_spin <= 0:
            raise ValueError("gyromagnetic_spin must be > 0")
        object.__setattr__(self, "b_field", tuple(float(v) for v in self.b_field))
        object.__setattr__(self, "strain_ground", tuple(float(v) for v in self.strain_ground))
        object.__setattr__(self, "strain_excited", tuple(float(v) for v in self.strain_excited))
        if len(self.b_field) != 3 or len(self.strain_ground) != 2 or len(self.strain_excited) != 2:
            raise ValueError("b_field needs 3 components, strains need 2")


def operating_point_params(**overrides):
    """0.12 T normal to the SiV axis with the calibrated strain configuration."""
    angle = np.deg2rad(30.0)
    base = LevelParams(
        b_field=(0.12, 0.0, 0.0),
        strain_ground=(OPERATING_STRAIN_GROUND, 0.0),
        strain_excited=(OPERATING_STRAIN_EXCITED * np.cos(angle), OPERATING_STRAIN_EXCITED * np.sin(angle)),
    )
    return replace(base, **overrides)


def _manifold_terms(params, manifold):
    if manifold == "ground":
        return params.lambda_so_ground, params.strain_ground
    if manifold == "excited":
        return params.lambda_so_excited, params.strain_excited
    raise ValueError(f"manifold must be 'ground' or 'excited', not {manifold!r}")


def build_hamiltonian(params: LevelParams, manifold: str) -> np.ndarray:
    lam, (ux, uy) = _manifold_terms(params, manifold)
    bx, by, bz = params.b_field
    h = -0.5 * lam * np.kron(_TZ, _TZ)
    h = h + ux * np.kron(_TX, _I2) + uy * np.kron(_TY, _I2)
    h = h + params.orbital_quenching * params.gyromagnetic_orbital * bz * np.kron(_TZ, _I2)
    h = h + 0.5 * params.gyromagnetic_spin * (bx * SIGMA[0] + by * SIGMA[1] + bz * SIGMA[2])
    return h


@dataclass(frozen=True)
class EigenSystem:
    energies: np.ndarray
    states: np.ndarray  # columns are eigenvectors
    manifold: str
    zero_field_lower: float = 0.0

    def spin_expectation(self):
        """<sigma_x, sigma_y, sigma_z> per eigenstate, shape (4, 3)."""
        return np.array([[np.real(v.conj() @ s @ v) for s in SIGMA] for v in self.states.T])

    def splitting(self, i=0, j=1):
        return float(self.energies[j] - self.energies[i])

    def reconstruct(self):
        return (self.states * self.energies) @ self.states.conj().T


def _fix_phase(v):
    k = int(np.argmax(np.abs(v)))
    return v * (abs(v[k]) / v[k])


def _diagonalize(h):
    scale = max(float(np.max(np.abs(h))), 1.0)
    off_spin = np.abs(h[np.ix_([0, 2], [1, 3])]).max()
    if off_spin == 0.0:
        # Sz is conserved: diagonalize each spin sector so states stay spin-pure
        energies, states = [], []
        for sector in ([0, 2], [1, 3]):
            e, u = np.linalg.eigh(h[np.ix_(sector, sector)])
            for k in range(2):
                v = np.zeros(4, dtype=complex)
                v[sector] = u[:, k]
                energies.append(e[k])
                states.append(v)
        energies = np.array(energies)
        states = np.array(states).T
    else:
        energies, states = np.linalg.eigh(h)
        # rotate degenerate clusters onto Sz eigenstates
        k = 0
        while k < 4:
            m = k + 1
            while m < 4 and abs(energies[m] - energies[k]) <= 1e-9 * scale:
                m += 1
            if m - k > 1:
                block = states[:, k:m]
                _, rot = np.linalg.eigh(block.conj().T @ SZ @ block)
                states[:, k:m] = block @ rot
            k = m
    sz = np.real(np.einsum("ik,ij,jk->k", states.conj(), SZ, states))
    # ties in energy resolve by ascending <Sz>
    rounded = np.round(energies / (1e-9 * scale))
    order = np.lexsort((sz, rounded))
    energies = energies[order]
    states = np.stack([_fix_phase(states[:, k]) for k in order], axis=1)
    return energies, states


def eigensystem(params: LevelParams, manifold: str) -> EigenSystem:
    energies, states = _diagonalize(build_hamiltonian(params, manifold))
    zero_field = replace(params, b_field=(0.0, 0.0, 0.0))
    e0 = np.linalg.eigvalsh(build_hamiltonian(zero_field, manifold))[0]
    return EigenSystem(energies=energies, states=states, manifold=manifold, zero_field_lower=float(e0))


class Transition(NamedTuple):
    label: str
    lower: int
    upper: int
    freq: float  # rad/s offset from the zero-field C line
    strength: float
    spin_conserving: bool


@dataclass(frozen=True)
class TransitionTable:
    rows: tuple

    def __iter__(self):
        return iter(self.rows)

    def __len__(self):
        return len(self.rows)

    def by_label(self, label):
        for r in self.rows:
            if r.label == label:
                return r
        raise KeyError(label)

    def family(self, letter):
        return [r for r in self.rows if r.label.startswith(letter)]


# (excited branch, ground branch) -> family letter; branch 0 = lower doublet
_FAMILY = {(1, 0): "A", (1, 1): "B", (0, 0): "C", (0, 1): "D"}


def transition_table(ground: EigenSystem, excited: EigenSystem) -> TransitionTable:
    """All 16 ground -> excited lines, labelled A1..D4 (C1..C4 is the C line)."""
    overlap = np.abs(excited.states.conj().T @ ground.states) ** 2  # [excited, ground]
    sg = ground.spin_expectation()
    se = excited.spin_expectation()
    ref = excited.zero_field_lower - ground.zero_field_lower
    raw = []
    for i in range(4):
        for j in range(4):
            freq = excited.energies[j] - ground.energies[i] - ref
            conserving = bool(sg[i] @ se[j] > 0)
            raw.append((_FAMILY[(j // 2, i // 2)], i, j, freq, overlap[j, i], conserving))
    norm = max((r[4] for r in raw if r[5]), default=0.0) or max(r[4] for r in raw) or 1.0
    rows = []
    for letter in "ABCD":
        fam = {(r[1] % 2, r[2] % 2): r for r in raw if r[0] == letter}
        for n, key in enumerate(_SUBLINE_ORDER, start=1):
            _, i, j, freq, s, cons = fam[key]
            rows.append(Transition(f"{letter}{n}", i, j, float(freq), float(s / norm), cons))
    return TransitionTable(tuple(rows))


# (ground index, excited index) within the two doublets, for sub-lines 1..4;
# this is descending frequency whenever the excited doublet splits less than
# the ground doublet, and lines 2 and 4 share their excited state
_SUBLINE_ORDER = ((0, 1), (0, 0), (1, 1), (1, 0))


def ple_spectrum(table, linewidth, laser_detuning_grid, families="C") -> Spectrum:
    """Sum of Lorentzians (FWHM ``linewidth``) with unit peak times line strength."""
    if linewidth <= 0:
        raise ValueError("linewidth must be > 0")
    x = np.asarray(laser_detuning_grid, dtype=float)
    if x.size == 0:
        raise ValueError("detuning grid is empty")
    hw2 = (0.5 * linewidth) ** 2
    y = np.zeros_like(x)
    for row in table:
        if row.label[0] in families and row.strength > 0:
            y += row.strength * hw2 / ((x - row.freq) ** 2 + hw2)
    return Spectrum(x=x, y=y, kind="laser")


def ground_splitting(params: LevelParams) -> float:
    """Splitting of the lower ground doublet (rad/s)."""
    return eigensystem(params, "ground").splitting(0, 1)


def calibrate_ground_strain(params: LevelParams, target_splitting: float, max_strain=None) -> LevelParams:
    """Scale the ground strain (keeping its direction) to hit a lower-doublet splitting."""
    ux, uy = params.strain_ground
    mag = np.hypot(ux, uy)
    direction = (1.0, 0.0) if mag == 0 else (ux / mag, uy / mag)
    hi = max_strain if max_strain is not None else 20 * params.lambda_so_ground

    def resid(u):
        trial = replace(params, strain_ground=(u * direction[0], u * direction[1]))
        return ground_splitting(trial) - target_splitting

    if resid(0.0) * resid(hi) > 0:
        raise ValueError("target splitting not reachable by scaling the ground strain")
    u = brentq(resid, 0.0, hi, xtol=1e-6 * TWO_PI, rtol=1e-13)
    return replace(params, strain_ground=(u * direction[0], u * direction[1]))
