"""Resonant laser pulses on a trapped ion coupled to one motional mode.

Each resonant transition couples disjoint pairs of levels,
{|lower, n>, |upper, n + dn>}, so a pulse is a block-diagonal unitary made of
2x2 rotations.  Every pair rotates with its own Rabi frequency Omega_{n,n'}.
Exact frequencies use the matrix element <n'| exp(i eta (a + a^dag)) |n>;
the Lamb-Dicke-limit mode uses g, g eta sqrt(n), g eta sqrt(n+1).

Rabi angles follow the convention 2 Omega tau, so a "pi pulse" for the
reference pair has angle pi and transfers it completely.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np

from .errors import TruncationError
from .fockspace import (
    DEFAULT_HEADROOM,
    FockSpace,
    HybridState,
    InternalLevel,
    _displacement,
    check_truncation,
    displacement_matrix,
)

DOWN, UP, AUX = InternalLevel.DOWN, InternalLevel.UP, InternalLevel.AUX


class Transition(Enum):
    CARRIER = "carrier"
    RED_SB = "red"
    BLUE_SB = "blue"
    BLUE_SB_AUX = "blue_aux"


@dataclass(frozen=True)
class _Pairing:
    lower: InternalLevel
    upper: InternalLevel
    dn: int
    # lower-level n of the pair that defines the pulse angle
    reference_n: int


# BLUE_SB_AUX takes AUX as the lower level: |aux, n> <-> |up, n+1>.  This
# leaves |up, 0> without a partner, which is what makes the CN gate work.
_PAIRINGS = {
    Transition.CARRIER: _Pairing(DOWN, UP, 0, 0),
    Transition.RED_SB: _Pairing(DOWN, UP, -1, 1),
    Transition.BLUE_SB: _Pairing(DOWN, UP, +1, 0),
    Transition.BLUE_SB_AUX: _Pairing(AUX, UP, +1, 0),
}


@dataclass(frozen=True)
class CouplingParams:
    """Laser-ion coupling.

    Attributes:
        g: base coupling strength (rad/s).
        eta: Lamb-Dicke parameter.
        omega_x: trap frequency (rad/s).
        delta: Raman detuning from the internal resonance (rad/s).  Pulses are
            always taken as resonant; this is bookkeeping only.
        ld_limit: use Lamb-Dicke-limit Rabi frequencies instead of exact
            matrix elements.
    """

    g: float = 2 * np.pi * 500e3
    eta: float = 0.2
    omega_x: float = 2 * np.pi * 11e6
    delta: float = 0.0
    ld_limit: bool = False

    def __post_init__(self):
        if not self.g > 0:
            raise ValueError(f"g must be positive, got {self.g}")
        if not 0 <= self.eta < 1:
            raise ValueError(f"eta must lie in [0, 1), got {self.eta}")
        if not self.omega_x > 0:
            raise ValueError(f"omega_x must be positive, got {self.omega_x}")

    def with_ld_limit(self, ld_limit: bool = True) -> CouplingParams:
        return CouplingParams(self.g, self.eta, self.omega_x, self.delta, ld_limit)


@dataclass(frozen=True)
class PulseSpec:
    transition: Transition
    angle: float
    phase: float = 0.0
    ion_index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "transition", Transition(self.transition))
        if self.angle < 0:
            raise ValueError(f"pulse angle must be >= 0, got {self.angle}")
        if self.ion_index < 0:
            raise ValueError("ion_index must be >= 0")

    def inverse(self) -> PulseSpec:
        """The same pulse with its phase advanced by pi, which undoes it."""
        return PulseSpec(self.transition, self.angle, self.phase + np.pi, self.ion_index)


def coupling_matrix_element(eta: float, n: int, n_prime: int, space: FockSpace) -> complex:
    """<n'| exp(i eta (a + a^dag)) |n> computed by matrix exponential on ``space``.

    ``space`` must leave at least five levels of headroom above max(n, n').
    """
    if min(n, n_prime) < 0:
        raise ValueError("number states must be non-negative")
    if space.n_max < max(n, n_prime) + DEFAULT_HEADROOM:
        raise TruncationError(
            f"n_max={space.n_max} leaves less than {DEFAULT_HEADROOM} levels of headroom "
            f"above max(n, n')={max(n, n_prime)}"
        )
    return complex(displacement_matrix(1j * eta, space)[n_prime, n])


@lru_cache(maxsize=256)
def _pair_omegas(g: float, eta: float, ld_limit: bool, transition: Transition, dim: int) -> np.ndarray:
    """Rabi frequency of every pair, indexed by the lower-level n; 0 where the partner is missing."""
    pairing = _PAIRINGS[transition]
    n = np.arange(dim)
    n_up = n + pairing.dn
    valid = (n_up >= 0) & (n_up < dim)
    omegas = np.zeros(dim)
    if ld_limit:
        if pairing.dn == 0:
            omegas[:] = g
        elif pairing.dn < 0:
            omegas = g * eta * np.sqrt(n)
        else:
            omegas = g * eta * np.sqrt(n + 1)
    else:
        m = _displacement(1j * eta, dim + DEFAULT_HEADROOM + 5)
        omegas[valid] = g * np.abs(m[n_up[valid], n[valid]])
    omegas[~valid] = 0.0
    omegas.setflags(write=False)
    return omegas


def rabi_frequency(c: CouplingParams, n: int, transition: Transition, ld_limit: bool | None = None) -> float:
    """Omega_{n,n'} for the pair whose lower level has vibrational quantum number n.

    For the red sideband n >= 1 is required (|down, 0> has no partner).
    ``ld_limit`` overrides ``c.ld_limit`` when given.
    """
    transition = Transition(transition)
    pairing = _PAIRINGS[transition]
    if n < 0 or n + pairing.dn < 0:
        raise ValueError(f"n={n} has no partner level on the {transition.value} transition")
    ld = c.ld_limit if ld_limit is None else ld_limit
    return float(_pair_omegas(c.g, c.eta, ld, transition, n + 2)[n])


def _rotate_pairs(arr: np.ndarray, pulse: PulseSpec, c: CouplingParams) -> np.ndarray:
    """Apply ``pulse`` to an array laid out as (level, n, ...)."""
    pairing = _PAIRINGS[pulse.transition]
    dim = arr.shape[1]
    omegas = _pair_omegas(c.g, c.eta, c.ld_limit, pulse.transition, dim)
    omega_ref = omegas[pairing.reference_n]
    if omega_ref == 0:
        raise ValueError(f"the {pulse.transition.value} transition has zero coupling at eta={c.eta}")
    n_lo = np.arange(dim)
    n_up = n_lo + pairing.dn
    valid = (n_up >= 0) & (n_up < dim)
    n_lo, n_up = n_lo[valid], n_up[valid]
    theta = pulse.angle * omegas[valid] / omega_ref
    shape = (-1,) + (1,) * (arr.ndim - 2)
    cos = np.cos(theta / 2).reshape(shape)
    sin = np.sin(theta / 2).reshape(shape)
    c_lo = arr[pairing.lower, n_lo]
    c_up = arr[pairing.upper, n_up]
    out = arr.copy()
    out[pairing.lower, n_lo] = cos * c_lo - 1j * sin * np.exp(-1j * pulse.phase) * c_up
    out[pairing.upper, n_up] = cos * c_up - 1j * sin * np.exp(1j * pulse.phase) * c_lo
    return out


def apply_pulse(tensor: np.ndarray, pulse: PulseSpec, c: CouplingParams) -> np.ndarray:
    """Apply a pulse to ion ``pulse.ion_index`` of a register tensor.

    The tensor has one length-3 axis per ion followed by the shared motional
    axis, i.e. shape ``(3,) * N + (n_max + 1,)``.
    """
    n_ions = tensor.ndim - 1
    if pulse.ion_index >= n_ions:
        raise IndexError(f"ion {pulse.ion_index} does not exist in a {n_ions}-ion register")
    moved = np.moveaxis(tensor, [pulse.ion_index, n_ions], [0, 1])
    out = _rotate_pairs(moved, pulse, c)
    return np.moveaxis(out, [0, 1], [pulse.ion_index, n_ions])


def evolve_pulse(state: HybridState, pulse: PulseSpec, c: CouplingParams) -> HybridState:
    """Apply one resonant pulse to a single-ion state.

    A :class:`~iontrap.errors.TruncationWarning` is issued if the top retained
    level ends up with more than 1e-6 population.
    """
    if pulse.ion_index != 0:
        raise IndexError("single-ion states only have ion 0")
    out = HybridState(_rotate_pairs(state.amplitudes, pulse, c))
    check_truncation(np.sum(np.abs(out.amplitudes) ** 2, axis=0), headroom=1)
    return out


def spin_selective_displacement(state: HybridState, alpha: complex, selected: InternalLevel) -> HybridState:
    """Displace only the motional amplitudes attached to ``selected``."""
    amps = np.array(state.amplitudes)
    level = InternalLevel(selected)
    amps[level] = displacement_matrix(alpha, state.space) @ amps[level]
    out = HybridState(amps)
    check_truncation(np.sum(np.abs(amps) ** 2, axis=0))
    return out


def free_precession(tensor: np.ndarray, phase: float, ion_index: int | None = None) -> np.ndarray:
    """Rotating-frame phase accumulation exp(-i (phase/2) sigma_z) on one ion, or all ions.

    AUX amplitudes are left untouched.
    """
    n_ions = tensor.ndim - 1
    ions = range(n_ions) if ion_index is None else [ion_index]
    factors = np.array([np.exp(1j * phase / 2), np.exp(-1j * phase / 2), 1.0])
    out = tensor
    for k in ions:
        shape = [1] * tensor.ndim
        shape[k] = 3
        out = out * factors.reshape(shape)
    return out
