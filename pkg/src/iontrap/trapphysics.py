"""Classical motion of an ion in a linear rf Paul trap.

The radial potential is q V_o cos(Omega_T t) (x^2 - y^2) / (2 R^2) with the
geometric factor set to 1, giving

    x'' = -(q_x Omega_T^2 / 2) cos(Omega_T t) x,   y'' = +(q_x Omega_T^2 / 2) cos(Omega_T t) y.

For |q_x| << 1 the solution is x(t) ~ X (1 + (q_x/2) cos Omega_T t) cos(omega t + phi)
with secular frequency omega = q_x Omega_T / (2 sqrt 2).
"""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import constants
from scipy.optimize import least_squares

from .errors import IonLostError

BE9_MASS = 9.012182 * constants.atomic_mass
Q_MAX = 0.4
Q_WARN = 0.2
STEPS_PER_RF_PERIOD = 50


@dataclass(frozen=True)
class TrapParams:
    """Linear Paul trap drive and ion.

    Attributes:
        V_o: rf amplitude (V).
        Omega_T: rf drive frequency (rad/s).
        R: distance from the trap axis to the electrodes (m).
        m: ion mass (kg).
        q_charge: ion charge (C).
        omega_z: axial secular frequency (rad/s).  Treated as an independent
            static harmonic well; it does not enter the radial dynamics.
    """

    V_o: float
    Omega_T: float
    R: float
    m: float = BE9_MASS
    q_charge: float = constants.e
    omega_z: float = 2 * np.pi * 29e6

    def __post_init__(self):
        for name in ("V_o", "Omega_T", "R", "m", "q_charge", "omega_z"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive and finite, got {value}")
        q = q_parameter(self)
        if q > Q_MAX:
            raise ValueError(f"q_x = {q:.3g} exceeds {Q_MAX}; the pseudopotential picture does not apply")
        if q > Q_WARN * (1 + 1e-9):
            warnings.warn(f"q_x = {q:.3g} > {Q_WARN}: pseudopotential approximation is marginal", stacklevel=3)

    @classmethod
    def from_q(cls, q_x: float, Omega_T: float, R: float = 200e-6, m: float = BE9_MASS,
               q_charge: float = constants.e, omega_z: float = 2 * np.pi * 29e6) -> TrapParams:
        """Choose V_o so that the trap has the requested q_x."""
        V_o = q_x * m * R**2 * Omega_T**2 / (2 * q_charge)
        return cls(V_o, Omega_T, R, m, q_charge, omega_z)


def q_parameter(p: TrapParams) -> float:
    """q_x = 2 q V_o / (m R^2 Omega_T^2); q_y = -q_x."""
    return 2 * p.q_charge * p.V_o / (p.m * p.R**2 * p.Omega_T**2)


def secular_frequency(p: TrapParams) -> float:
    """omega_x = omega_y = q V_o / (sqrt(2) m R^2 Omega_T)."""
    return p.q_charge * p.V_o / (np.sqrt(2) * p.m * p.R**2 * p.Omega_T)


def pseudopotential(x, y, p: TrapParams):
    """Time-averaged potential energy m omega^2 (x^2 + y^2) / 2 (J)."""
    w = secular_frequency(p)
    return 0.5 * p.m * w**2 * (np.asarray(x) ** 2 + np.asarray(y) ** 2)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Sampled radial motion; all arrays share one length."""

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    vx: np.ndarray
    vy: np.ndarray

    def __post_init__(self):
        arrays = [np.asarray(getattr(self, k), dtype=float) for k in ("t", "x", "y", "vx", "vy")]
        if len({a.shape for a in arrays}) != 1 or arrays[0].ndim != 1:
            raise ValueError("trajectory columns must be 1-D arrays of equal length")
        if not all(np.all(np.isfinite(a)) for a in arrays):
            raise ValueError("trajectory contains non-finite values")
        if np.any(np.diff(arrays[0]) <= 0):
            raise ValueError("trajectory times must be strictly increasing")
        for k, a in zip(("t", "x", "y", "vx", "vy"), arrays):
            a.setflags(write=False)
            object.__setattr__(self, k, a)

    @property
    def samples(self) -> list[tuple[float, float, float, float, float]]:
        return list(zip(*(a.tolist() for a in (self.t, self.x, self.y, self.vx, self.vy))))

    @property
    def duration(self) -> float:
        return float(self.t[-1] - self.t[0])

    def to_csv(self, path=None) -> str:
        """Write ``t,x,y,vx,vy`` rows at 12 significant digits; returns the text."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["t", "x", "y", "vx", "vy"])
        for row in np.column_stack([self.t, self.x, self.y, self.vx, self.vy]):
            writer.writerow([f"{v:.12g}" for v in row])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


def integrate_trajectory(p: TrapParams, x0: float, y0: float, v0=(0.0, 0.0), duration: float = 1e-6,
                         dt: float | None = None) -> Trajectory:
    """Integrate the full time-dependent equations of motion with fixed-step RK4.

    ``dt`` defaults to 2 pi / (50 Omega_T), the coarsest step allowed.

    Raises:
        ValueError: if ``dt`` is too coarse to resolve micromotion.
        IonLostError: if |x| or |y| ever exceeds R.
    """
    dt_max = 2 * np.pi / (STEPS_PER_RF_PERIOD * p.Omega_T)
    if dt is None:
        dt = dt_max
    if not 0 < dt <= dt_max * (1 + 1e-12):
        raise ValueError(f"dt={dt:.3g} s must lie in (0, {dt_max:.3g}] to resolve micromotion")
    if duration <= 0:
        raise ValueError("duration must be positive")
    n_steps = int(np.ceil(duration / dt - 1e-9))
    k = q_parameter(p) * p.Omega_T**2 / 2
    # x and y obey the same equation with opposite sign of the drive
    sign = np.array([1.0, -1.0])

    def accel(t, pos):
        return -k * np.cos(p.Omega_T * t) * sign * pos

    pos = np.array([x0, y0], dtype=float)
    vel = np.array(v0, dtype=float)
    out = np.empty((n_steps + 1, 5))
    out[0] = (0.0, *pos, *vel)
    t = 0.0
    for i in range(1, n_steps + 1):
        a1 = accel(t, pos)
        p2 = pos + 0.5 * dt * vel
        v2 = vel + 0.5 * dt * a1
        a2 = accel(t + dt / 2, p2)
        p3 = pos + 0.5 * dt * v2
        v3 = vel + 0.5 * dt * a2
        a3 = accel(t + dt / 2, p3)
        p4 = pos + dt * v3
        v4 = vel + dt * a3
        a4 = accel(t + dt, p4)
        pos = pos + dt / 6 * (vel + 2 * v2 + 2 * v3 + v4)
        vel = vel + dt / 6 * (a1 + 2 * a2 + 2 * a3 + a4)
        t = i * dt
        if np.any(np.abs(pos) > p.R) or not np.all(np.isfinite(pos)):
            raise IonLostError(f"ion left the trap at t={t:.3g} s (x={pos[0]:.3g} m, y={pos[1]:.3g} m)")
        out[i] = (t, *pos, *vel)
    return Trajectory(*out.T)


@dataclass(frozen=True)
class SecularFit:
    amplitude: float
    phase: float
    omega: float
    micromotion_ratio: float
    max_deviation: float


def _model(t, X, phi, w, r, Omega):
    return X * (1 + r * np.cos(Omega * t)) * np.cos(w * t + phi)


def _spectral_guess(t: np.ndarray, x: np.ndarray, Omega: float) -> tuple[float, float]:
    """Peak of the zero-padded spectrum below Omega/2, and the amplitude at t=0."""
    dt = t[1] - t[0]
    n = 8 * len(x)
    spec = np.abs(np.fft.rfft(x - x.mean(), n))
    freqs = 2 * np.pi * np.fft.rfftfreq(n, dt)
    band = (freqs > 0) & (freqs < Omega / 2)
    w = freqs[band][np.argmax(spec[band])]
    return float(w), float(np.max(np.abs(x)))


def fit_secular_motion(traj: Trajectory, p: TrapParams, axis: str = "x", fit_micromotion: bool = True) -> SecularFit:
    """Least-squares fit of X (1 + r cos Omega_T t) cos(omega t + phi) to one axis.

    The secular frequency starts from a spectral estimate and is refined by
    the fit.  With ``fit_micromotion=False`` the ratio r stays at q_x / 2.
    """
    t = traj.t
    u = np.asarray(getattr(traj, axis))
    q = q_parameter(p)
    w_secular = secular_frequency(p)
    if traj.duration < 3 * 2 * np.pi / w_secular:
        raise ValueError("trajectory must span at least 3 secular periods to fit")
    scale = float(np.max(np.abs(u)))
    if scale == 0:
        raise ValueError("trajectory is identically zero; nothing to fit")
    w0, _ = _spectral_guess(t, u, p.Omega_T)
    r_fixed = q / 2

    def residual(params):
        X, phi, w = params[:3]
        r = params[3] if fit_micromotion else r_fixed
        return (_model(t, X, phi, w, r, p.Omega_T) - u) / scale

    # phase guess from the first sample and initial velocity sign
    best = None
    for phi0 in np.linspace(-np.pi, np.pi, 8, endpoint=False):
        x0 = [scale / (1 + r_fixed), phi0, w0] + ([r_fixed] if fit_micromotion else [])
        sol = least_squares(residual, x0, x_scale=[scale, 1.0, w0] + ([1.0] if fit_micromotion else []))
        if best is None or sol.cost < best.cost:
            best = sol
    X, phi, w = best.x[:3]
    r = best.x[3] if fit_micromotion else r_fixed
    if X < 0:
        X, phi = -X, phi + np.pi
    phi = float(np.angle(np.exp(1j * phi)))
    dev = np.max(np.abs(_model(t, X, phi, w, r, p.Omega_T) - u)) / X
    return SecularFit(float(X), phi, float(w), float(r), float(dev))


def compare_to_secular_approx(traj: Trajectory, p: TrapParams, axis: str = "x") -> float:
    """max |x_num - x_approx| / X after fitting X, phi and omega with r = q_x/2.

    omega is refined because the leading-order formula drifts in phase over
    many periods; see :func:`secular_frequency` for the formula itself.  The
    micromotion ratio is held at q_x / 2.
    """
    return fit_secular_motion(traj, p, axis, fit_micromotion=False).max_deviation
