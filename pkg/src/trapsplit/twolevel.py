"""Two-level (left/right well) model: Hamiltonian, eigensystem, propagation.

The model Hamiltonian divided by hbar is

    H/hbar = (1/2) [[-lambda, -delta],
                    [-delta,  +lambda]]

in the ordered bare basis (|L>, |R>) of left/right-localized states, so a
positive bias ``lambda`` lifts the right well.  All energies are stored as
angular frequencies (rad/s); hbar is absorbed by convention.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DEFAULT_MAX_STEPS = 20000
PHASE_CONVENTION_EPS = 1e-12


class DegenerateHamiltonianError(ValueError):
    """Raised when (lambda, delta) = (0, 0) leaves the mixing angle undefined."""


@dataclass(frozen=True)
class TwoLevelHamiltonian:
    """Instantaneous two-level Hamiltonian, stored as H/hbar.

    Parameters
    ----------
    lambda_bias : float
        Bias between the wells in rad/s (relative gap divided by hbar).
    delta_tunnel : float
        Tunneling rate in rad/s; nonnegative for physical protocols.
    """

    lambda_bias: float
    delta_tunnel: float

    def matrix(self) -> np.ndarray:
        """H/hbar as a 2x2 array in the (|L>, |R>) basis."""
        lam, delta = self.lambda_bias, self.delta_tunnel
        return 0.5 * np.array([[-lam, -delta], [-delta, lam]])

    def norm(self) -> float:
        """Operator norm of H/hbar (largest |eigenvalue|), rad/s."""
        return 0.5 * math.hypot(self.lambda_bias, self.delta_tunnel)


@dataclass(frozen=True)
class TwoLevelAmplitudes:
    """Complex amplitude pair (c_L, c_R) in the moving bare basis."""

    c_L: complex
    c_R: complex

    def as_array(self) -> np.ndarray:
        return np.array([self.c_L, self.c_R], dtype=complex)

    @staticmethod
    def from_array(vec) -> "TwoLevelAmplitudes":
        return TwoLevelAmplitudes(complex(vec[0]), complex(vec[1]))

    def norm(self) -> float:
        return math.sqrt(abs(self.c_L) ** 2 + abs(self.c_R) ** 2)


def mixing_angle(lambda_bias: float, delta_tunnel: float) -> float:
    """Mixing angle alpha in radians with tan(alpha) = delta/lambda.

    Continuous across lambda = 0 at fixed delta > 0 (alpha -> pi/2).
    """
    if lambda_bias == 0.0 and delta_tunnel == 0.0:
        raise DegenerateHamiltonianError(
            "mixing angle undefined for lambda = delta = 0"
        )
    return math.atan2(delta_tunnel, lambda_bias)


def _fix_phase(vec: np.ndarray) -> np.ndarray:
    """Global-phase convention: real nonnegative c_L, else real nonnegative c_R."""
    pivot = vec[0] if abs(vec[0]) > PHASE_CONVENTION_EPS else vec[1]
    if abs(pivot) == 0.0:
        return vec
    phase = pivot / abs(pivot)
    out = vec / phase
    # strip the residual ~1e-16 imaginary parts the division leaves behind
    if abs(out.imag).max() < 1e-14 * abs(out.real).max():
        out = out.real.astype(complex)
    return out


def eigensystem(h: TwoLevelHamiltonian):
    """Instantaneous eigensystem of the two-level Hamiltonian.

    Returns
    -------
    (E_minus, E_plus, psi_minus, psi_plus)
        Eigenvalues -+(1/2)sqrt(lambda^2 + delta^2) in rad/s and the
        corresponding normalized eigenvectors

            psi_minus = cos(a/2)|L> + sin(a/2)|R>
            psi_plus  = sin(a/2)|L> - cos(a/2)|R>

        with mixing angle a, under the real-nonnegative-c_L phase convention.
    """
    alpha = mixing_angle(h.lambda_bias, h.delta_tunnel)
    e = 0.5 * math.hypot(h.lambda_bias, h.delta_tunnel)
    c, s = math.cos(0.5 * alpha), math.sin(0.5 * alpha)
    psi_minus = _fix_phase(np.array([c, s], dtype=complex))
    psi_plus = _fix_phase(np.array([s, -c], dtype=complex))
    return (
        -e,
        e,
        TwoLevelAmplitudes.from_array(psi_minus),
        TwoLevelAmplitudes.from_array(psi_plus),
    )


def adiabaticity_parameter(lam: float, delta: float, delta_dot: float) -> float:
    """|lambda * delta_dot| / (2 (lambda^2 + delta^2)^(3/2)), dimensionless."""
    if lam == 0.0 and delta == 0.0:
        raise DegenerateHamiltonianError(
            "adiabaticity parameter undefined for lambda = delta = 0"
        )
    return abs(lam * delta_dot) / (2.0 * (lam * lam + delta * delta) ** 1.5)


def fidelity(a: TwoLevelAmplitudes, b: TwoLevelAmplitudes) -> float:
    """Overlap magnitude |<a|b>| for normalized amplitude pairs."""
    return abs(a.c_L.conjugate() * b.c_L + a.c_R.conjugate() * b.c_R)


def default_timestep(protocol, t_final: float, n_samples: int = 2001) -> float:
    """Fixed RK4 step: min(t_final/20000, 2 pi / (200 max||H/hbar||)).

    The norm is estimated by sampling the protocol on a uniform grid.
    """
    ts = np.linspace(0.0, t_final, n_samples)
    hnorm = 0.0
    for t in ts:
        delta, lam = protocol.eval(t)
        hnorm = max(hnorm, 0.5 * math.hypot(lam, delta))
    dt = t_final / DEFAULT_MAX_STEPS
    if hnorm > 0.0:
        dt = min(dt, 2.0 * math.pi / (200.0 * hnorm))
    return dt


def propagate(
    protocol,
    psi0: TwoLevelAmplitudes,
    t_final: float,
    dt: float | None = None,
) -> TwoLevelAmplitudes:
    """Propagate amplitudes under i d(psi)/dt = (H(t)/hbar) psi with RK4.

    Parameters
    ----------
    protocol : object with ``eval(t) -> (delta, lambda)``
        Control schedule defined on [0, t_final]; evaluation failures propagate.
    psi0 : TwoLevelAmplitudes
        Initial state.
    t_final : float
        Duration in seconds.
    dt : float, optional
        Fixed step; defaults to :func:`default_timestep`.  The actual step is
        adjusted so an integer number of steps lands exactly on t_final.

    Notes
    -----
    Classic RK4, fourth-order accurate in dt.  The norm is never adjusted;
    with the default step it is conserved to better than 1e-10 per run.
    """
    if t_final < 0.0:
        raise ValueError("t_final must be nonnegative")
    if t_final == 0.0:
        return psi0
    if dt is None:
        dt = default_timestep(protocol, t_final)
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    n_steps = max(1, math.ceil(t_final / dt - 1e-9))
    h = t_final / n_steps

    def rhs(t, psi):
        delta, lam = protocol.eval(t)
        # -i (H/hbar) psi, written out for the 2x2 case
        hl = 0.5 * (-lam * psi[0] - delta * psi[1])
        hr = 0.5 * (-delta * psi[0] + lam * psi[1])
        return np.array([-1j * hl, -1j * hr])

    psi = psi0.as_array()
    t = 0.0
    for i in range(n_steps):
        t = i * h
        k1 = rhs(t, psi)
        k2 = rhs(t + 0.5 * h, psi + 0.5 * h * k1)
        k3 = rhs(t + 0.5 * h, psi + 0.5 * h * k2)
        k4 = rhs(t + h, psi + h * k3)
        psi = psi + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return TwoLevelAmplitudes.from_array(psi)
