"""Realizable trap in coordinate space.

Potential: V(x) = (1/2) m omega^2 x^2 + V0 cos^2[pi (x - dx_offset)/d_lattice],
a harmonic confinement plus an optical-lattice term whose displacement
dx_offset biases the double well.  The module builds the finite-difference
Hamiltonian (stored as H/hbar, rad/s), solves for the lowest eigenpairs,
forms the left/right basis from the symmetric trap's ground and first
excited states, and extracts the effective two-level rates (delta, lambda)
from matrix elements.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .constants import HBAR, M_RB87

DEFAULT_X_MIN = -15e-6
DEFAULT_X_MAX = 15e-6
DEFAULT_N_POINTS = 2048

EIGEN_RESIDUAL_RTOL = 1e-8
CONSISTENCY_RTOL = 1e-6
NEAR_DEGENERATE_FRACTION = 1e-3


class EigensolverError(RuntimeError):
    """Eigensolve failed or produced out-of-contract results."""


class TwoLevelBreakdownError(RuntimeError):
    """The +R and -L bias estimates disagree: two-level model is breaking down."""


@dataclass(frozen=True)
class TrapParameters:
    """Lattice-plus-harmonic trap parameters (SI units)."""

    v0: float  # lattice height, J
    omega: float  # harmonic angular frequency, rad/s
    dx_offset: float = 200e-9  # lattice displacement, m
    d_lattice: float = 5.18e-6  # lattice constant, m
    mass: float = M_RB87  # atomic mass, kg

    def __post_init__(self):
        if self.d_lattice <= 0 or self.mass <= 0:
            raise ValueError("d_lattice and mass must be positive")
        if self.omega < 0 or self.v0 < 0:
            raise ValueError("omega and v0 must be nonnegative")

    def symmetric(self) -> "TrapParameters":
        """Same trap with the lattice displacement removed."""
        return replace(self, dx_offset=0.0)


@dataclass(frozen=True)
class Grid1D:
    """Uniform spatial grid; n_points is a power of two for the FFT propagator."""

    x_min: float
    x_max: float
    n_points: int

    def __post_init__(self):
        if self.x_max <= self.x_min:
            raise ValueError("x_max must exceed x_min")
        n = self.n_points
        if n < 64 or (n & (n - 1)) != 0:
            raise ValueError("n_points must be a power of two, at least 64")

    @property
    def spacing(self) -> float:
        return (self.x_max - self.x_min) / (self.n_points - 1)

    @cached_property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.n_points)


def default_grid() -> Grid1D:
    """30 um box at 2048 points; fits the d_l = 5.18 um double well with
    wavefunction tails below 1e-10 at the edges."""
    return Grid1D(DEFAULT_X_MIN, DEFAULT_X_MAX, DEFAULT_N_POINTS)


def potential(params: TrapParameters, x) -> np.ndarray:
    """Trap potential in joules at position(s) x."""
    x = np.asarray(x, dtype=float)
    harm = 0.5 * params.mass * params.omega**2 * x * x
    lat = params.v0 * np.cos(np.pi * (x - params.dx_offset) / params.d_lattice) ** 2
    return harm + lat


@dataclass(frozen=True)
class TridiagonalOperator:
    """Symmetric tridiagonal H/hbar (rad/s) with Dirichlet boundaries."""

    diag: np.ndarray
    offdiag: np.ndarray
    grid: Grid1D

    def matvec(self, v: np.ndarray) -> np.ndarray:
        out = self.diag * v
        out[:-1] += self.offdiag * v[1:]
        out[1:] += self.offdiag * v[:-1]
        return out

    def norm_bound(self) -> float:
        """Infinity-norm bound on H/hbar."""
        return float(np.abs(self.diag).max() + 2.0 * np.abs(self.offdiag).max())

    def expectation(self, a: np.ndarray, b: np.ndarray) -> float:
        """<a|H/hbar|b> for real grid vectors normalized with dx weight."""
        return float(a @ self.matvec(b)) * self.grid.spacing


def hamiltonian_for_potential(v_joule, grid: Grid1D, mass: float) -> TridiagonalOperator:
    """Three-point finite-difference H/hbar for an arbitrary potential array."""
    dx = grid.spacing
    kin = HBAR / (mass * dx * dx)  # hbar^2/(m dx^2) / hbar
    diag = kin + np.asarray(v_joule, dtype=float) / HBAR
    off = np.full(grid.n_points - 1, -0.5 * kin)
    return TridiagonalOperator(diag, off, grid)


def hamiltonian_matrix(params: TrapParameters, grid: Grid1D) -> TridiagonalOperator:
    """Finite-difference H/hbar for the lattice-plus-harmonic trap."""
    return hamiltonian_for_potential(potential(params, grid.x), grid, params.mass)


@dataclass(frozen=True)
class SpectralDecomposition:
    """Lowest eigenpairs: energies in rad/s ascending, unit-norm real states."""

    energies: np.ndarray
    states: np.ndarray  # shape (k, n), sum |psi|^2 dx = 1
    grid: Grid1D

    def __post_init__(self):
        if np.any(np.diff(self.energies) <= 0):
            raise EigensolverError("eigenvalues not strictly ascending")


def _apply_sign_conventions(states, energies, grid, sign_reference, degeneracy_scale):
    x = grid.x
    pos = x > 0
    for i in range(states.shape[0]):
        psi = states[i]
        use_reference = (
            sign_reference is not None
            and i >= 1
            and degeneracy_scale is not None
            and degeneracy_scale > 0
            and energies[i] - energies[i - 1]
            < NEAR_DEGENERATE_FRACTION * degeneracy_scale
        )
        if use_reference:
            # lobe extremum is ill-conditioned for near-degenerate doublets;
            # follow the previous time slice instead
            if psi @ sign_reference[i] < 0:
                states[i] = -psi
        elif i == 0:
            if psi[np.argmax(np.abs(psi))] < 0:
                states[i] = -psi
        else:
            lobe = np.argmax(np.abs(psi) * pos)
            if psi[lobe] < 0:
                states[i] = -psi
    return states


def lowest_eigenpairs(
    h: TridiagonalOperator,
    k: int,
    sign_reference: np.ndarray | None = None,
    degeneracy_scale: float | None = None,
) -> SpectralDecomposition:
    """Lowest k eigenpairs of the tridiagonal H/hbar.

    Bisection plus inverse iteration (LAPACK *stebz/*stein via scipy).
    States are normalized so sum |psi|^2 spacing = 1, with the ground state
    positive at its global maximum and excited states positive at their
    x > 0 lobe extremum.  When ``sign_reference`` (states of a neighboring
    time slice) is given, near-degenerate excited states take their sign
    from continuity instead.

    Raises
    ------
    EigensolverError
        On solver failure or residual above 1e-8 * ||H||.
    """
    if k < 1 or k > 6:
        raise ValueError("k must be between 1 and 6")
    try:
        w, v = eigh_tridiagonal(
            h.diag, h.offdiag, select="i", select_range=(0, k - 1)
        )
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure path
        raise EigensolverError(f"tridiagonal eigensolve failed: {exc}") from exc
    dx = h.grid.spacing
    states = (v / math.sqrt(dx)).T.copy()  # rows are states, dx-normalized

    hnorm = h.norm_bound()
    for i in range(k):
        resid = np.linalg.norm(h.matvec(states[i]) - w[i] * states[i])
        if resid > EIGEN_RESIDUAL_RTOL * hnorm * np.linalg.norm(states[i]):
            raise EigensolverError(
                f"eigenpair {i} residual {resid:.3e} exceeds "
                f"{EIGEN_RESIDUAL_RTOL:.0e} * ||H|| = {EIGEN_RESIDUAL_RTOL * hnorm:.3e}"
            )
    states = _apply_sign_conventions(states, w, h.grid, sign_reference, degeneracy_scale)
    return SpectralDecomposition(w, states, h.grid)


def lr_basis_from_states(ground: np.ndarray, excited: np.ndarray):
    """L = (g - e)/sqrt(2), R = (g + e)/sqrt(2)."""
    inv = 1.0 / math.sqrt(2.0)
    return inv * (ground - excited), inv * (ground + excited)


def lr_basis(params: TrapParameters, grid: Grid1D, **eig_kwargs):
    """Left/right-localized basis of the symmetric trap (dx_offset forced to 0).

    Returns orthonormal (L, R) with R localized on x > 0.
    """
    h0 = hamiltonian_matrix(params.symmetric(), grid)
    dec = lowest_eigenpairs(h0, 2, **eig_kwargs)
    return lr_basis_from_states(dec.states[0], dec.states[1])


def extract_two_level(
    params_full: TrapParameters,
    left: np.ndarray,
    right: np.ndarray,
    grid: Grid1D,
    check_consistency: bool = False,
    consistency_rtol: float = CONSISTENCY_RTOL,
):
    """Effective two-level rates from coordinate-space matrix elements.

        delta  = -2 <L|H/hbar|R>
        lambda =  <R|H/hbar|R> - <L|H/hbar|L>

    The bias equals both spec forms 2(<R|H - Lambda|R>)/hbar and
    -2(<L|H - Lambda|L>)/hbar whenever they agree; their average is
    independent of the shift Lambda and is what is returned.  With
    ``check_consistency`` the two forms are evaluated against
    Lambda = (E- + E+)/2 of the full Hamiltonian and their disagreement
    (a measure of leakage out of the two lowest levels) is required to stay
    below ``consistency_rtol`` relative to the level splitting.

    Returns (delta, lambda) in rad/s.
    """
    h = hamiltonian_matrix(params_full, grid)
    delta = -2.0 * h.expectation(left, right)
    h_rr = h.expectation(right, right)
    h_ll = h.expectation(left, left)
    lam = h_rr - h_ll
    if check_consistency:
        dec = lowest_eigenpairs(h, 2)
        shift = 0.5 * (dec.energies[0] + dec.energies[1])
        lam_r = 2.0 * (h_rr - shift)
        lam_l = -2.0 * (h_ll - shift)
        scale = max(dec.energies[1] - dec.energies[0], abs(lam_r), abs(lam_l))
        if abs(lam_r - lam_l) > consistency_rtol * scale:
            raise TwoLevelBreakdownError(
                f"bias estimates disagree: {lam_r:.6e} vs {lam_l:.6e} rad/s "
                f"(tolerance {consistency_rtol:.1e} relative to {scale:.3e})"
            )
    return delta, lam


def decomposition_to_csv(dec: SpectralDecomposition, path) -> None:
    """Write (x, psi0, psi1, ...) columns with a header row."""
    k = dec.states.shape[0]
    header = "x," + ",".join(f"psi{i}" for i in range(k))
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for j, xj in enumerate(dec.grid.x):
            row = [xj] + [dec.states[i][j] for i in range(k)]
            fh.write(",".join("{:.11e}".format(v) for v in row) + "\n")
