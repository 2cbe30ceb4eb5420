"""Map an abstract (delta, lambda) schedule onto realizable trap controls.

For each time slice the pair (V0, omega) is found by Nelder-Mead
minimization of the dimensionless matching cost

    F = [w_d (delta_id - delta)^2 + w_l (lambda_id - lambda)^2] / omega0^2

where (delta, lambda) are extracted from the coordinate-space Hamiltonian.
Slices are solved sequentially with warm starts; once the ideal tunneling
drops below a configurable floor the lattice height is held (optimizing the
trap frequency only) so V0 does not grow without bound chasing delta -> 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import lattice1d
from .constants import HBAR
from .lattice1d import Grid1D, TrapParameters
from .protocols import ControlProtocol, TabulatedProtocol

REFLECTION = 1.0
EXPANSION = 2.0
CONTRACTION = 0.5
SHRINK = 0.5

DEFAULT_RESIDUAL_MAX = 1e-6
DEFAULT_DELTA_FLOOR_FRACTION = 1e-3
TRAJECTORY_CSV_HEADER = "t,V0_joule,omega_rad_s,residual"


class SimplexMaxIterError(RuntimeError):
    """Nelder-Mead ran out of iterations; carries the best point seen."""

    def __init__(self, message, best, value):
        super().__init__(message)
        self.best = best
        self.value = value


class MappingError(RuntimeError):
    """A slice could not be matched; carries the slice index and time."""

    def __init__(self, message, slice_index=None, time=None):
        super().__init__(message)
        self.slice_index = slice_index
        self.time = time


def nelder_mead(cost, start, scale, tol=1e-9, max_iter=500):
    """Minimize ``cost`` from ``start`` with the Nelder-Mead simplex.

    Coefficients: reflection 1, expansion 2, contraction 1/2, shrink 1/2.
    Terminates when the simplex diameter falls below tol*scale in every
    coordinate or the value spread falls below tol^2; returns
    (argmin, value) for the best vertex.

    Raises
    ------
    SimplexMaxIterError
        After max_iter iterations, carrying the best point so far.
    """
    start = np.asarray(start, dtype=float)
    scale = np.broadcast_to(np.asarray(scale, dtype=float), start.shape)
    n = start.size
    pts = [start.copy()]
    for i in range(n):
        p = start.copy()
        p[i] += scale[i]
        pts.append(p)
    vals = [float(cost(p)) for p in pts]
    if not math.isfinite(vals[0]):
        raise ValueError("cost not finite at start")

    for _ in range(max_iter):
        order = np.argsort(vals)
        pts = [pts[i] for i in order]
        vals = [vals[i] for i in order]
        diam = np.max(np.abs(np.array(pts[1:]) - pts[0]), axis=0)
        if np.all(diam < tol * np.abs(scale)) or vals[-1] - vals[0] < tol * tol:
            return pts[0], vals[0]

        centroid = np.mean(pts[:-1], axis=0)
        xr = centroid + REFLECTION * (centroid - pts[-1])
        fr = float(cost(xr))
        if fr < vals[0]:
            xe = centroid + EXPANSION * (centroid - pts[-1])
            fe = float(cost(xe))
            if fe < fr:
                pts[-1], vals[-1] = xe, fe
            else:
                pts[-1], vals[-1] = xr, fr
            continue
        if fr < vals[-2]:
            pts[-1], vals[-1] = xr, fr
            continue
        if fr < vals[-1]:  # outside contraction
            xc = centroid + CONTRACTION * (xr - centroid)
        else:  # inside contraction
            xc = centroid + CONTRACTION * (pts[-1] - centroid)
        fc = float(cost(xc))
        if fc < min(fr, vals[-1]):
            pts[-1], vals[-1] = xc, fc
            continue
        for i in range(1, n + 1):  # shrink toward the best vertex
            pts[i] = pts[0] + SHRINK * (pts[i] - pts[0])
            vals[i] = float(cost(pts[i]))

    order = np.argsort(vals)
    raise SimplexMaxIterError(
        f"no convergence in {max_iter} iterations",
        best=pts[order[0]],
        value=vals[order[0]],
    )


@dataclass(frozen=True)
class MappedTrajectory:
    """Realizable control series: times, lattice heights, trap frequencies."""

    times: np.ndarray
    v0_series: np.ndarray
    omega_series: np.ndarray
    residuals: np.ndarray

    def __post_init__(self):
        n = len(self.times)
        if not (
            len(self.v0_series) == len(self.omega_series) == len(self.residuals) == n
        ):
            raise ValueError("all trajectory series must have equal length")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly ascending")

    @property
    def t_final(self) -> float:
        return float(self.times[-1])

    def to_csv(self, path, comments: list[str] | None = None) -> None:
        with open(path, "w") as fh:
            for c in comments or []:
                fh.write(f"# {c}\n")
            fh.write(TRAJECTORY_CSV_HEADER + "\n")
            for row in zip(self.times, self.v0_series, self.omega_series, self.residuals):
                fh.write(",".join("{:.11e}".format(v) for v in row) + "\n")

    @classmethod
    def from_csv(cls, path):
        comments = []
        with open(path) as fh:
            line = fh.readline()
            while line.startswith("#"):
                comments.append(line[1:].strip())
                line = fh.readline()
            if line.strip() != TRAJECTORY_CSV_HEADER:
                raise ValueError(f"bad trajectory CSV header: {line.strip()!r}")
            data = np.loadtxt(fh, delimiter=",", ndmin=2)
        traj = cls(data[:, 0], data[:, 1], data[:, 2], data[:, 3])
        return traj, comments


def _slice_cost(target_delta, target_lam, fixed, grid, omega0_sq, weights, v0_max):
    w_d, w_l = weights

    def cost(p):
        v0, omega = p
        if v0 < 0.0 or omega < 0.0 or v0 > v0_max:
            return math.inf
        params = TrapParameters(
            v0=v0,
            omega=omega,
            dx_offset=fixed.dx_offset,
            d_lattice=fixed.d_lattice,
            mass=fixed.mass,
        )
        left, right = lattice1d.lr_basis(params, grid)
        delta, lam = lattice1d.extract_two_level(params, left, right, grid)
        return (
            w_d * (target_delta - delta) ** 2 + w_l * (target_lam - lam) ** 2
        ) / omega0_sq

    return cost


def map_protocol(
    target: ControlProtocol,
    fixed: TrapParameters,
    initial_guess,
    n_slices: int,
    grid: Grid1D,
    residual_max: float = DEFAULT_RESIDUAL_MAX,
    v0_max: float | None = None,
    delta_floor_fraction: float = DEFAULT_DELTA_FLOOR_FRACTION,
    weights=(1.0, 1.0),
    nm_tol: float = 1e-7,
    nm_max_iter: int = 400,
) -> MappedTrajectory:
    """Match (V0(t), omega(t)) to the target schedule slice by slice.

    Parameters
    ----------
    target : ControlProtocol
        Ideal (delta, lambda) schedule.
    fixed : TrapParameters
        Supplies dx_offset, d_lattice and mass; its v0/omega are ignored.
    initial_guess : (v0, omega)
        Start for the first slice (the harmonic start maps to v0 ~ 0).
    n_slices : int
        Number of uniform slices over [0, t_final]; at least 100.
    grid : Grid1D
        Spatial grid for the eigensolves.
    residual_max : float
        Acceptance threshold on the dimensionless slice cost.
    v0_max : float
        Lattice-height cap; slices demanding more raise MappingError.
        Defaults to 40 hbar omega0.
    delta_floor_fraction : float
        Once delta_id < fraction * omega0 the lattice height is held and only
        omega is optimized (full reoptimization if the residual degrades).

    Raises
    ------
    MappingError
        If a slice residual stays above ``residual_max`` after a restart with
        an enlarged simplex (unreachable target), identifying the slice.
    """
    if n_slices < 100:
        raise ValueError("n_slices must be at least 100")
    times = np.linspace(0.0, target.t_final, n_slices)
    omega0 = float(target.eval(0.0)[0])
    if omega0 <= 0:
        raise ValueError("target must start from a positive tunneling rate")
    omega0_sq = omega0 * omega0
    if v0_max is None:
        v0_max = 40.0 * HBAR * omega0

    v_char = HBAR * omega0
    w_char = omega0
    v0s = np.empty(n_slices)
    omegas = np.empty(n_slices)
    residuals = np.empty(n_slices)
    current = np.asarray(initial_guess, dtype=float)
    scale = np.array([0.05 * v_char, 0.02 * w_char])
    frozen_v0 = None

    for i, t in enumerate(times):
        delta_id, lam_id = (float(v) for v in target.eval(float(t)))
        cost2d = _slice_cost(delta_id, lam_id, fixed, grid, omega0_sq, weights, v0_max)

        if frozen_v0 is None and delta_id < delta_floor_fraction * omega0:
            frozen_v0 = current[0]

        try:
            if frozen_v0 is not None:
                # hold the lattice height; track the bias with omega alone
                def cost1d(p, _v0=frozen_v0):
                    return cost2d(np.array([_v0, p[0]]))

                best, value = nelder_mead(
                    cost1d, current[1:2], scale[1:2], tol=nm_tol, max_iter=nm_max_iter
                )
                candidate = np.array([frozen_v0, best[0]])
                if value > residual_max:  # cannot hold V0 and stay matched
                    candidate, value = nelder_mead(
                        cost2d, current, scale, tol=nm_tol, max_iter=nm_max_iter
                    )
                    frozen_v0 = candidate[0]
                current, value = candidate, value
            else:
                current, value = nelder_mead(
                    cost2d, current, scale, tol=nm_tol, max_iter=nm_max_iter
                )
        except SimplexMaxIterError as exc:
            current, value = np.asarray(exc.best), exc.value

        if value > residual_max:
            # restart once with an enlarged simplex before giving up
            current, value = nelder_mead(
                cost2d, current, 10.0 * scale, tol=nm_tol, max_iter=4 * nm_max_iter
            )
            if value > residual_max:
                raise MappingError(
                    f"slice {i} at t = {t:.6e} s: residual {value:.3e} exceeds "
                    f"{residual_max:.1e} (unreachable target)",
                    slice_index=i,
                    time=t,
                )
        v0s[i], omegas[i] = current
        residuals[i] = value
        if i >= 1:
            # warm-start scale follows the local slice-to-slice variation
            dv = abs(v0s[i] - v0s[i - 1])
            dw = abs(omegas[i] - omegas[i - 1])
            scale = np.array(
                [max(4.0 * dv, 1e-6 * v_char), max(4.0 * dw, 1e-6 * w_char)]
            )
    return MappedTrajectory(times, v0s, omegas, residuals)


def trajectory_two_level(
    traj: MappedTrajectory, fixed: TrapParameters, grid: Grid1D
) -> TabulatedProtocol:
    """Extract the realized (delta, lambda) series from a mapped trajectory."""
    deltas = np.empty_like(traj.times)
    lams = np.empty_like(traj.times)
    for i, (v0, omega) in enumerate(zip(traj.v0_series, traj.omega_series)):
        params = TrapParameters(
            v0=v0,
            omega=omega,
            dx_offset=fixed.dx_offset,
            d_lattice=fixed.d_lattice,
            mass=fixed.mass,
        )
        left, right = lattice1d.lr_basis(params, grid)
        deltas[i], lams[i] = lattice1d.extract_two_level(params, left, right, grid)
    return TabulatedProtocol(traj.times, deltas, lams)
