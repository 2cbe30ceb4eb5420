"""Control-schedule design for fast trap splitting.

Produces (delta(t), lambda(t)) pairs on [0, t_final]:

* the fast-quasi-adiabatic (FAQUAD) closed form, which holds the
  adiabaticity parameter constant at the value ``c``,
* the invariant-based inverse-engineered schedule built from polynomial
  angle ansaetze theta (degree 5) and phi (degree 4),
* a straight-line reference schedule and tabulated (sampled) schedules,
* the scalar linear ramp used for coordinate-space comparisons.

Rates are angular frequencies (rad/s); times are seconds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy.integrate import quad
from scipy.interpolate import CubicSpline

CSV_HEADER = "t,delta,lambda"
CSV_FLOAT_FMT = "{:.11e}"
TABULATION_POINTS = 4001

# fall back to the quadratic Taylor expansion of sin when its argument is
# below this size (spec'd interior fallback window)
SIN_FALLBACK = 1e-8


class ProtocolSingularError(ValueError):
    """Invariant-engineered schedule is singular inside (0, t_final)."""


def _polyval(coeffs, t):
    return npoly.polyval(np.asarray(t, dtype=float), coeffs)


class ControlProtocol:
    """Base class: a (delta, lambda) schedule on [0, t_final].

    Subclasses set ``kind`` and implement ``eval``; evaluation accepts
    scalars or arrays and is safe to call from concurrent workers.
    """

    kind = "abstract"
    t_final: float

    def eval(self, t):
        raise NotImplementedError

    def sample(self, n: int = TABULATION_POINTS):
        """Uniform sampling; returns (t, delta, lambda) arrays."""
        t = np.linspace(0.0, self.t_final, n)
        delta, lam = self.eval(t)
        return t, np.asarray(delta, dtype=float), np.asarray(lam, dtype=float)

    def to_csv(self, path, n: int = TABULATION_POINTS) -> None:
        """Write the schedule as CSV with columns (t, delta, lambda)."""
        t, delta, lam = self.sample(n)
        write_protocol_csv(path, t, delta, lam)


def write_protocol_csv(path, t, delta, lam) -> None:
    with open(path, "w") as fh:
        fh.write(CSV_HEADER + "\n")
        for row in zip(t, delta, lam):
            fh.write(",".join(CSV_FLOAT_FMT.format(v) for v in row) + "\n")


def read_protocol_csv(path) -> "TabulatedProtocol":
    with open(path) as fh:
        header = fh.readline().strip()
        if header != CSV_HEADER:
            raise ValueError(f"bad protocol CSV header: {header!r}")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    return TabulatedProtocol(data[:, 0], data[:, 1], data[:, 2])


@dataclass(frozen=True)
class FaquadProtocol(ControlProtocol):
    """FAQUAD schedule: constant bias, tunneling held at constant adiabaticity.

        delta_fa(t) = omega0 * lambda * (t_f - t)
                      / sqrt(lambda^2 t_f^2 + omega0^2 t (2 t_f - t))

    with lambda(t) = lambda_const.  The adiabaticity parameter equals

        c = omega0 / (2 lambda sqrt(omega0^2 + lambda^2) t_f)

    for all t in [0, t_f].
    """

    omega0: float
    lambda_const: float
    t_final: float
    kind = "faquad"

    def __post_init__(self):
        if self.omega0 <= 0 or self.lambda_const <= 0 or self.t_final <= 0:
            raise ValueError("omega0, lambda_const and t_final must be positive")

    @property
    def c(self) -> float:
        w, lam, tf = self.omega0, self.lambda_const, self.t_final
        return w / (2.0 * lam * math.hypot(w, lam) * tf)

    def eval(self, t):
        scalar = np.ndim(t) == 0
        t = np.atleast_1d(np.asarray(t, dtype=float))
        w, lam, tf = self.omega0, self.lambda_const, self.t_final
        denom = np.sqrt(lam * lam * tf * tf + w * w * t * (2.0 * tf - t))
        delta = w * lam * (tf - t) / denom
        lam_arr = np.full_like(delta, lam)
        if scalar:
            return float(delta[0]), float(lam_arr[0])
        return delta, lam_arr

    def delta_dot(self, t):
        """Analytic time derivative of delta_fa."""
        t = np.asarray(t, dtype=float)
        w, lam, tf = self.omega0, self.lambda_const, self.t_final
        d = lam * lam * tf * tf + w * w * t * (2.0 * tf - t)
        return -w * lam * (lam * lam + w * w) * tf * tf * d ** -1.5


@dataclass(frozen=True)
class LinearReferenceProtocol(ControlProtocol):
    """Straight-line (delta, lambda) interpolation between the endpoints.

    Two-level reference only; the coordinate-space linear protocol ramps the
    lattice height instead (see :func:`linear_ramp`).
    """

    omega0: float
    lambda_f: float
    t_final: float
    kind = "linear_reference"

    def eval(self, t):
        scalar = np.ndim(t) == 0
        s = np.atleast_1d(np.asarray(t, dtype=float)) / self.t_final
        delta, lam = self.omega0 * (1.0 - s), self.lambda_f * s
        if scalar:
            return float(delta[0]), float(lam[0])
        return delta, lam


@dataclass(frozen=True)
class ScalarRamp:
    """Linear scalar schedule v(t) = v_final * t / t_final."""

    v_final: float
    t_final: float

    def __call__(self, t):
        return self.v_final * np.asarray(t, dtype=float) / self.t_final


def linear_ramp(v0_final: float, t_final: float) -> ScalarRamp:
    """Linear lattice-height ramp from 0 to v0_final over [0, t_final]."""
    if t_final <= 0:
        raise ValueError("t_final must be positive")
    return ScalarRamp(v0_final, t_final)


class TabulatedProtocol(ControlProtocol):
    """Sampled schedule with cubic interpolation between nodes."""

    kind = "tabulated"

    def __init__(self, times, deltas, lambdas):
        times = np.asarray(times, dtype=float)
        if times.size < 4:
            raise ValueError("tabulated protocol needs at least 4 samples")
        if np.any(np.diff(times) <= 0):
            raise ValueError("times must be strictly ascending")
        self.times = times
        self.deltas = np.asarray(deltas, dtype=float)
        self.lambdas = np.asarray(lambdas, dtype=float)
        self.t_final = float(times[-1])
        self._sd = CubicSpline(times, self.deltas)
        self._sl = CubicSpline(times, self.lambdas)

    @classmethod
    def from_protocol(cls, protocol: ControlProtocol, n: int = TABULATION_POINTS):
        return cls(*protocol.sample(n))

    def eval(self, t):
        if np.ndim(t) == 0:
            return float(self._sd(t)), float(self._sl(t))
        t = np.asarray(t, dtype=float)
        return self._sd(t), self._sl(t)


@dataclass(frozen=True)
class AnglePair:
    """Polynomial auxiliary angles for the invariant-based schedule.

    theta(t) = sum_j theta_coeffs[j] t^j  (degree 5, six coefficients)
    phi(t)   = sum_j phi_coeffs[j] t^j    (degree 4, five coefficients)

    The coefficients satisfy the boundary conditions

        theta(0) = pi/2, theta'(0) = theta''(0) = 0,
        theta'''(0) = -omega0 * lambda_dot0,
        theta(t_f) = theta'(t_f) = 0,
        phi(0) = pi, phi'(0) = 0, phi''(0) = -lambda_dot0,
        phi(t_f) = pi/2, phi'(t_f) = -lambda_f / 3.
    """

    theta_coeffs: tuple
    phi_coeffs: tuple
    t_final: float

    def _a(self):
        return np.asarray(self.theta_coeffs, dtype=float)

    def _b(self):
        return np.asarray(self.phi_coeffs, dtype=float)

    def theta(self, t):
        return _polyval(self._a(), t)

    def theta_dot(self, t):
        return _polyval(npoly.polyder(self._a()), t)

    def theta_ddot(self, t):
        return _polyval(npoly.polyder(self._a(), 2), t)

    def theta_dddot(self, t):
        return _polyval(npoly.polyder(self._a(), 3), t)

    def phi(self, t):
        return _polyval(self._b(), t)

    def phi_dot(self, t):
        return _polyval(npoly.polyder(self._b()), t)

    def phi_ddot(self, t):
        return _polyval(npoly.polyder(self._b(), 2), t)

    def boundary_residuals(self, omega0: float, lambda_f: float, lambda_dot0: float):
        """Relative residuals of the eleven boundary conditions."""
        tf = self.t_final
        scale_th = math.pi / 2.0
        scale_rate = max(abs(omega0 * lambda_dot0), 1e-300)
        res = {
            "theta(0)": (self.theta(0.0) - math.pi / 2) / scale_th,
            "theta_dot(0)": self.theta_dot(0.0) * tf / scale_th,
            "theta_ddot(0)": self.theta_ddot(0.0) * tf**2 / scale_th,
            "theta_dddot(0)": (self.theta_dddot(0.0) + omega0 * lambda_dot0)
            / scale_rate,
            "theta(tf)": self.theta(tf) / scale_th,
            "theta_dot(tf)": self.theta_dot(tf) * tf / scale_th,
            "phi(0)": (self.phi(0.0) - math.pi) / math.pi,
            "phi_dot(0)": self.phi_dot(0.0) * tf / math.pi,
            "phi_ddot(0)": (self.phi_ddot(0.0) + lambda_dot0)
            / max(abs(lambda_dot0), 1e-300),
            "phi(tf)": (self.phi(tf) - math.pi / 2) / math.pi,
            "phi_dot(tf)": (self.phi_dot(tf) + lambda_f / 3.0)
            / max(abs(lambda_f), 1e-300),
        }
        return res


def design_invariant_angles(
    omega0: float, lambda_f: float, lambda_dot0: float, t_final: float
) -> AnglePair:
    """Solve the boundary systems for the polynomial angle coefficients.

    The four initial-time conditions are diagonal in the monomial basis and
    fix the low-order coefficients directly; the final-time conditions leave
    a 2x2 linear system per angle, solved in rescaled time u = t/t_f for
    conditioning.
    """
    if lambda_dot0 == 0.0:
        raise ValueError("lambda_dot0 must be nonzero")
    if omega0 <= 0.0 or lambda_f <= 0.0:
        raise ValueError("omega0 and lambda_f must be positive")
    if t_final <= 0.0:
        raise ValueError("t_final must be positive (singular system otherwise)")
    tf = t_final

    # theta: a0..a3 from t=0 conditions; a4, a5 from theta(tf) = theta'(tf) = 0
    a0 = math.pi / 2.0
    a3 = -omega0 * lambda_dot0 / 6.0
    a3s = a3 * tf**3  # scaled: a_j t_f^j
    m_th = np.array([[1.0, 1.0], [4.0, 5.0]])
    rhs_th = np.array([-(a0 + a3s), -3.0 * a3s])
    a4s, a5s = np.linalg.solve(m_th, rhs_th)
    theta_coeffs = (a0, 0.0, 0.0, a3, a4s / tf**4, a5s / tf**5)

    # phi: b0..b2 from t=0 conditions; b3, b4 from phi(tf), phi'(tf)
    b0 = math.pi
    b2 = -lambda_dot0 / 2.0
    b2s = b2 * tf**2
    m_ph = np.array([[1.0, 1.0], [3.0, 4.0]])
    rhs_ph = np.array(
        [math.pi / 2.0 - b0 - b2s, -lambda_f * tf / 3.0 - 2.0 * b2s]
    )
    b3s, b4s = np.linalg.solve(m_ph, rhs_ph)
    phi_coeffs = (b0, 0.0, b2, b3s / tf**3, b4s / tf**4)

    angles = AnglePair(theta_coeffs, phi_coeffs, tf)
    res = angles.boundary_residuals(omega0, lambda_f, lambda_dot0)
    worst = max(abs(v) for v in res.values())
    if worst > 1e-10:
        raise ArithmeticError(f"boundary system residual {worst:.3e} exceeds 1e-10")
    return angles


def _sin_ratio(x):
    """x / sin(x), continuous through x = 0 (quadratic fallback below 1e-8)."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < SIN_FALLBACK
    safe = np.where(small, 1.0, x)
    out = np.where(small, 1.0 + x * x / 6.0, safe / np.sin(safe))
    return out


class InvariantProtocol(ControlProtocol):
    """Inverse-engineered schedule from an :class:`AnglePair`.

        delta = -theta_dot / sin(phi)
        lambda = -delta * cot(theta) * cos(phi) - phi_dot

    The 0/0 indeterminacies at t = 0 and t = t_final are resolved by the
    analytic limits delta(0) = theta'''(0)/phi''(0), lambda(0) = 0,
    delta(t_f) = 0 and lambda(t_f) = -3 phi_dot(t_f).  Near-singular points
    are evaluated through exactly recentered polynomials so no numerical
    epsilon offsets are needed; an interior zero of sin(phi) or theta is
    rejected as a singular design.
    """

    kind = "invariant"

    def __init__(self, angles: AnglePair, validate: bool = True):
        self.angles = angles
        self.t_final = float(angles.t_final)
        a = np.asarray(angles.theta_coeffs, dtype=float)
        b = np.asarray(angles.phi_coeffs, dtype=float)
        tf = self.t_final

        # theta_dot(t) = t^2 * pa(t); (phi(t) - pi) = t^2 * pb(t)
        # (valid because a1 = a2 = b1 = 0 and b0 = pi exactly by construction)
        self._pa = np.array([3.0 * a[3], 4.0 * a[4], 5.0 * a[5]])
        self._pb = np.array([b[2], b[3], b[4]])
        self._db = npoly.polyder(b)

        # recentred at t_final: theta = tau^2 * pd(tau), theta_dot = tau * pn(tau),
        # phi - pi/2 = tau * pe(tau) with tau = t - t_final
        d = _taylor_shift(a, tf)
        e = _taylor_shift(b, tf)
        d[0] = 0.0  # theta(tf) = 0 and theta_dot(tf) = 0 by construction
        d[1] = 0.0
        e[0] = 0.0  # phi(tf) = pi/2 by construction
        self._pd = np.array([d[2], d[3], d[4], d[5]])
        self._pn = np.array([2.0 * d[2], 3.0 * d[3], 4.0 * d[4], 5.0 * d[5]])
        self._pe = np.array([e[1], e[2], e[3], e[4]])
        if abs(d[2]) < 1e-14 * max(1.0, np.abs(d).max()):
            raise ProtocolSingularError(
                "theta vanishes beyond quadratic order at t_final"
            )

        self._delta0 = self._pa[0] / self._pb[0]
        self._lambda_f = -3.0 * float(self._pe[0])
        if validate:
            self._validate()

    # -- raw evaluation ----------------------------------------------------
    def _delta_raw(self, t):
        """delta = theta_dot / sin(phi - pi) via the factored polynomials."""
        pa = _polyval(self._pa, t)
        pb = _polyval(self._pb, t)
        bad = np.abs(pb) < 1e-12 * abs(self._pb[0])
        if np.any(bad & (np.abs(pa) > 1e-12 * abs(self._pa[0]))):
            raise ProtocolSingularError("sin(phi) vanishes at an interior point")
        eps = t * t * pb
        return (pa / pb) * _sin_ratio(eps)

    def _lambda_far(self, t, delta):
        """Direct formula, valid away from t_final."""
        theta = self.angles.theta(t)
        eps = t * t * _polyval(self._pb, t)  # phi - pi
        cos_phi = -np.cos(eps)
        return -delta * cos_phi * np.cos(theta) / np.sin(theta) - _polyval(
            self._db, t
        )

    def _lambda_near(self, t):
        """Recentred formula, exact through t = t_final."""
        tau = t - self.t_final
        pd = _polyval(self._pd, tau)
        pn = _polyval(self._pn, tau)
        pe = _polyval(self._pe, tau)
        theta = tau * tau * pd
        rho = tau * pe  # phi - pi/2
        if np.any(np.abs(pd) < 1e-12 * abs(self._pd[0])):
            raise ProtocolSingularError("theta vanishes at an interior point")
        # -delta cot(theta) cos(phi) with sin(theta)/theta and sin(rho)/rho
        # factored out so every ratio stays finite through tau = 0
        t1 = (
            -(pn / pd)
            * np.cos(theta)
            * pe
            * _sin_ratio(theta)
            / (_sin_ratio(rho) * np.cos(rho))
        )
        return t1 - _polyval(self._db, t)

    def eval(self, t):
        scalar = np.isscalar(t) or np.ndim(t) == 0
        t = np.atleast_1d(np.asarray(t, dtype=float))
        tf = self.t_final
        delta = self._delta_raw(t)
        near = t > 0.5 * tf
        lam = np.empty_like(delta)
        if np.any(~near):
            lam[~near] = self._lambda_far(t[~near], delta[~near])
        if np.any(near):
            lam[near] = self._lambda_near(t[near])
        # hard-coded analytic endpoint limits
        at0 = t == 0.0
        attf = t == tf
        delta[at0], lam[at0] = self._delta0, 0.0
        delta[attf], lam[attf] = 0.0, self._lambda_f
        if scalar:
            return float(delta[0]), float(lam[0])
        return delta, lam

    def _validate(self, n: int = 4001):
        t = np.linspace(0.0, self.t_final, n)[1:-1]
        theta = self.angles.theta(t)
        if np.any(theta <= 0.0):
            raise ProtocolSingularError("theta reaches zero inside (0, t_final)")
        # an interior sign change of (phi - pi)/t^2 means sin(phi) crosses
        # zero where theta_dot does not vanish: reject, do not regularize
        pb = _polyval(self._pb, t)
        if np.any(np.sign(pb) != np.sign(self._pb[0])):
            raise ProtocolSingularError("sin(phi) vanishes inside (0, t_final)")
        delta, lam = self.eval(t)
        if not (np.all(np.isfinite(delta)) and np.all(np.isfinite(lam))):
            raise ProtocolSingularError("schedule not finite inside (0, t_final)")


def _taylor_shift(coeffs, shift):
    """Coefficients of p(shift + tau) as a polynomial in tau (exact binomials)."""
    n = len(coeffs)
    out = np.zeros(n)
    for j, cj in enumerate(coeffs):
        for k in range(j + 1):
            out[k] += cj * math.comb(j, k) * shift ** (j - k)
    return out


def protocol_from_angles(angles: AnglePair) -> InvariantProtocol:
    """Build the (delta, lambda) schedule driven by the invariant's angles."""
    return InvariantProtocol(angles)


def faquad_schedule(
    omega0: float, lambda_const: float, t_final: float
) -> FaquadProtocol:
    """FAQUAD schedule with constant bias; see :class:`FaquadProtocol`."""
    return FaquadProtocol(omega0, lambda_const, t_final)


def faquad_min_time(protocol: ControlProtocol) -> float:
    """Minimum time bound 2 pi / phi12 with phi12 the mean level splitting.

    phi12 = integral_0^1 sqrt(lambda^2 + delta^2)(s t_final) ds, evaluated by
    adaptive quadrature to 1e-8 relative accuracy or better.
    """
    tf = protocol.t_final

    def omega12(s):
        delta, lam = protocol.eval(s * tf)
        return math.hypot(float(delta), float(lam))

    phi12, _ = quad(omega12, 0.0, 1.0, epsabs=0.0, epsrel=1e-10, limit=200)
    return 2.0 * math.pi / phi12
