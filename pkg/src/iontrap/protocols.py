"""Composite pulse procedures: cooling, cat states, CN gates, GHZ preparation.

Register states hold one three-level axis per ion followed by the shared
centre-of-mass (COM) mode, i.e. amplitude tensors of shape
``(3,) * N + (n_max + 1,)``.  Ion indices are zero-based.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .dynamics import (
    CouplingParams,
    PulseSpec,
    Transition,
    _rotate_pairs,
    apply_pulse,
    evolve_pulse,
    spin_selective_displacement,
)
from .errors import PreconditionError, TruncationError
from .fockspace import (
    N_LEVELS,
    NORM_TOL,
    TRUNCATION_TOL,
    FockSpace,
    HybridState,
    InternalLevel,
    MotionalDensityMatrix,
    coherent_amplitudes,
)

DOWN, UP, AUX = InternalLevel.DOWN, InternalLevel.UP, InternalLevel.AUX
MAX_IONS = 6

# Phase of the first carrier pulse of the CN sequence.  With the pulse
# convention of ``dynamics`` this choice makes the gate exactly
# |e1>|e2> -> |e1>|e1 xor e2> with no extra phase.
CN_CARRIER_PHASE = -np.pi / 2


# ---------------------------------------------------------------- cooling


@dataclass(frozen=True)
class CoolingParams:
    n_bar_doppler: float = 1.0
    cycles: int = 5
    gamma_linewidth: float = 2 * np.pi * 19.4e6
    omega_x: float = 2 * np.pi * 11e6

    def __post_init__(self):
        if self.n_bar_doppler < 0:
            raise ValueError("n_bar_doppler must be >= 0")
        if self.cycles < 0:
            raise ValueError("cycles must be >= 0")


def sideband_cooling_limit(gamma: float, omega_x: float) -> float:
    """Resolved-sideband cooling limit <n>_min ~ (gamma / 2 omega_x)^2."""
    if gamma < 0 or omega_x <= 0:
        raise ValueError("gamma must be >= 0 and omega_x > 0")
    return (gamma / (2 * omega_x)) ** 2


def thermal_state(n_bar: float, space: FockSpace) -> MotionalDensityMatrix:
    """Thermal motional state, P_n = n_bar^n / (n_bar + 1)^(n + 1)."""
    if n_bar < 0:
        raise ValueError("n_bar must be >= 0")
    if n_bar == 0:
        return MotionalDensityMatrix.pure(space.basis(0))
    ratio = n_bar / (n_bar + 1)
    tail = ratio ** (space.n_max + 1)
    if tail > TRUNCATION_TOL:
        raise TruncationError(f"thermal tail beyond n_max={space.n_max} is {tail:.3g}")
    p = ratio ** np.arange(space.dim) / (n_bar + 1)
    return MotionalDensityMatrix.from_populations(p / p.sum())


def _apply_pulse_density(rho: np.ndarray, pulse: PulseSpec, c: CouplingParams) -> np.ndarray:
    """U rho U^dag for rho laid out as (level, n, level, n)."""
    left = _rotate_pairs(rho, pulse, c)
    right = _rotate_pairs(np.conj(left.transpose(2, 3, 0, 1)), pulse, c)
    return np.conj(right.transpose(2, 3, 0, 1))


def _as_hybrid_density(state) -> np.ndarray:
    if isinstance(state, HybridState):
        a = state.amplitudes
        return np.einsum("ij,kl->ijkl", a, a.conj())
    rho = np.asarray(state, dtype=complex)
    if rho.ndim == 2:
        dim = rho.shape[0] // N_LEVELS
        rho = rho.reshape(N_LEVELS, dim, N_LEVELS, dim)
    if rho.ndim != 4 or rho.shape[0] != N_LEVELS or rho.shape[2] != N_LEVELS:
        raise ValueError(f"not a hybrid density matrix: shape {rho.shape}")
    return rho


def repump(state) -> np.ndarray:
    """Incoherent optical pumping UP -> DOWN at fixed n (recoil-free).

    Accepts a HybridState or a hybrid density matrix (flattened
    ``(3 d, 3 d)`` in HybridState.vector() order, or ``(3, d, 3, d)``) and
    returns the flattened density matrix.  Kraus operators are
    |down><down|, |down><up| and |aux><aux|, each times the motional identity.
    """
    rho = _as_hybrid_density(state)
    out = np.zeros_like(rho)
    out[DOWN, :, DOWN, :] = rho[DOWN, :, DOWN, :] + rho[UP, :, UP, :]
    out[AUX, :, AUX, :] = rho[AUX, :, AUX, :]
    d = rho.shape[1]
    return out.reshape(N_LEVELS * d, N_LEVELS * d)


def _trace_internal(rho: np.ndarray) -> MotionalDensityMatrix:
    return MotionalDensityMatrix(np.einsum("injm->nm", rho))


def cooling_trajectory(rho_in: MotionalDensityMatrix, c: CouplingParams, cycles: int) -> list[MotionalDensityMatrix]:
    """Motional state before cooling and after each red-sideband/repump cycle."""
    if cycles < 0:
        raise ValueError("cycles must be >= 0")
    d = rho_in.n_max + 1
    rho = np.zeros((N_LEVELS, d, N_LEVELS, d), dtype=complex)
    rho[DOWN, :, DOWN, :] = rho_in.elements
    pulse = PulseSpec(Transition.RED_SB, np.pi)
    history = [rho_in]
    for _ in range(cycles):
        rho = _apply_pulse_density(rho, pulse, c)
        rho = repump(rho).reshape(N_LEVELS, d, N_LEVELS, d)
        history.append(_trace_internal(rho))
    return history


def sideband_cool(rho_in: MotionalDensityMatrix, c: CouplingParams, cycles: int = 5) -> MotionalDensityMatrix:
    """Resolved-sideband cooling with the ion starting in DOWN.

    Each cycle is a red-sideband pi pulse (angle referenced to the n=1 pair)
    followed by :func:`repump`.
    """
    return cooling_trajectory(rho_in, c, cycles)[-1]


# ---------------------------------------------------------------- cat states


def prepare_cat(alpha1: complex, alpha2: complex, phi: float, c: CouplingParams, space: FockSpace) -> HybridState:
    """Build (|down>|alpha1> + e^{i phi}|up>|alpha2>)/sqrt(2) from |down, 0>.

    Sequence: carrier pi/2, displace the UP branch by alpha1, carrier pi
    (swapping the branches), displace the UP branch by alpha2.  The result
    matches the target up to a global phase.
    """
    state = HybridState.basis(DOWN, 0, space)
    state = evolve_pulse(state, PulseSpec(Transition.CARRIER, np.pi / 2, phi + np.pi / 2), c)
    state = spin_selective_displacement(state, alpha1, UP)
    state = evolve_pulse(state, PulseSpec(Transition.CARRIER, np.pi, phi), c)
    return spin_selective_displacement(state, alpha2, UP)


def cat_target(alpha1: complex, alpha2: complex, phi: float, space: FockSpace) -> HybridState:
    amps = np.zeros((N_LEVELS, space.dim), dtype=complex)
    amps[DOWN] = coherent_amplitudes(alpha1, space)
    amps[UP] = np.exp(1j * phi) * coherent_amplitudes(alpha2, space)
    return HybridState(amps / np.sqrt(2))


def cat_interference(state: HybridState, probe_phase: float, c: CouplingParams) -> float:
    """P(DOWN) after a carrier pi/2 analysis pulse with phase ``probe_phase``."""
    out = evolve_pulse(state, PulseSpec(Transition.CARRIER, np.pi / 2, probe_phase), c)
    return out.level_population(DOWN)


def fringe_visibility(state: HybridState, c: CouplingParams, n_phases: int = 8) -> float:
    """(max - min)/(max + min) of the cat interference fringe.

    The fringe is exactly sinusoidal in the probe phase, so the contrast is
    read off the first Fourier component of a uniform sweep.
    """
    if n_phases < 3:
        raise ValueError("need at least 3 probe phases")
    phases = np.linspace(0, 2 * np.pi, n_phases, endpoint=False)
    p = np.array([cat_interference(state, ph, c) for ph in phases])
    return float(2 * abs(np.mean(p * np.exp(-1j * phases))) / np.mean(p))


# ---------------------------------------------------------------- CN gates


def _cn_pulses(target_ion: int) -> list[PulseSpec]:
    return [
        PulseSpec(Transition.CARRIER, np.pi / 2, CN_CARRIER_PHASE, target_ion),
        PulseSpec(Transition.BLUE_SB_AUX, 2 * np.pi, 0.0, target_ion),
        PulseSpec(Transition.CARRIER, np.pi / 2, CN_CARRIER_PHASE + np.pi, target_ion),
    ]


def cn_gate(state: HybridState, c: CouplingParams) -> HybridState:
    """Single-ion CN: control = motion (|0>, |1>), target = spin (DOWN, UP)."""
    aux = state.level_population(AUX)
    if aux > 1e-9:
        raise PreconditionError(f"AUX population {aux:.3g} on input to the CN gate", residual=aux)
    for pulse in _cn_pulses(0):
        state = evolve_pulse(state, pulse, c)
    return state


@dataclass(frozen=True, eq=False)
class RegisterState:
    """N ions sharing one COM mode; see the module docstring for the layout."""

    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex)
        n_ions = amps.ndim - 1
        if n_ions < 1 or any(s != N_LEVELS for s in amps.shape[:-1]) or amps.shape[-1] < 2:
            raise ValueError(f"register amplitudes must have shape (3,)*N + (n_max+1,), got {amps.shape}")
        if n_ions > MAX_IONS:
            raise ValueError(f"at most {MAX_IONS} ions are supported, got {n_ions}")
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > NORM_TOL:
            raise ValueError(f"register norm {norm!r} differs from 1")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def from_terms(cls, terms, n_ions: int, space: FockSpace) -> RegisterState:
        """Normalized sum over ``(coefficient, levels, n)`` with ``levels`` one entry per ion."""
        amps = np.zeros((N_LEVELS,) * n_ions + (space.dim,), dtype=complex)
        for coeff, levels, n in terms:
            if len(levels) != n_ions:
                raise ValueError(f"expected {n_ions} levels, got {len(levels)}")
            amps[tuple(InternalLevel(l) for l in levels) + (n,)] += coeff
        return cls(amps / np.linalg.norm(amps))

    @classmethod
    def basis(cls, levels: Sequence[InternalLevel], n: int, space: FockSpace) -> RegisterState:
        return cls.from_terms([(1.0, levels, n)], len(levels), space)

    @property
    def n_ions(self) -> int:
        return self.amplitudes.ndim - 1

    @property
    def n_max(self) -> int:
        return self.amplitudes.shape[-1] - 1

    def com_populations(self) -> np.ndarray:
        axes = tuple(range(self.n_ions))
        return np.sum(np.abs(self.amplitudes) ** 2, axis=axes)

    def com_excitation(self) -> float:
        """Population outside the COM ground state."""
        return float(self.com_populations()[1:].sum())

    def ion_populations(self, ion: int) -> np.ndarray:
        """(P_down, P_up, P_aux) of one ion."""
        axes = tuple(k for k in range(self.amplitudes.ndim) if k != ion)
        return np.sum(np.abs(self.amplitudes) ** 2, axis=axes)

    def amplitude(self, levels: Sequence[InternalLevel], n: int = 0) -> complex:
        return complex(self.amplitudes[tuple(InternalLevel(l) for l in levels) + (n,)])

    def overlap(self, other: RegisterState) -> complex:
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def fidelity(self, other: RegisterState) -> float:
        return abs(self.overlap(other)) ** 2


class KeyboardDirection(Enum):
    ENCODE = "encode"
    DECODE = "decode"


def _register_pulse(state: RegisterState, pulse: PulseSpec, c: CouplingParams) -> RegisterState:
    return RegisterState(apply_pulse(state.amplitudes, pulse, c))


def keyboard_map(state: RegisterState, m: int, direction: KeyboardDirection, c: CouplingParams) -> RegisterState:
    """Map ion m's spin onto the COM mode (ENCODE) or back (DECODE).

    ENCODE is a red-sideband pi pulse,
    (a|down> + b|up>)|0> -> |down>(a|0> - i b|1>); DECODE is the same pulse
    with its phase advanced by pi, so DECODE after ENCODE is the identity.
    """
    direction = KeyboardDirection(direction)
    if not 0 <= m < state.n_ions:
        raise IndexError(f"ion {m} does not exist in a {state.n_ions}-ion register")
    encode = PulseSpec(Transition.RED_SB, np.pi, 0.0, m)
    if direction is KeyboardDirection.ENCODE:
        residual = state.com_excitation()
        if residual > 1e-9:
            raise PreconditionError(f"ENCODE needs the COM mode in |0>; excited population {residual:.3g}", residual)
        return _register_pulse(state, encode, c)
    residual = float(state.ion_populations(m)[[UP, AUX]].sum())
    if residual > 1e-9:
        raise PreconditionError(f"DECODE needs ion {m} in DOWN; other population {residual:.3g}", residual)
    return _register_pulse(state, encode.inverse(), c)


def cn_on_register(state: RegisterState, target: int, c: CouplingParams) -> RegisterState:
    """CN with the COM mode as control and ion ``target`` as the target."""
    residual = float(state.ion_populations(target)[AUX])
    if residual > 1e-9:
        raise PreconditionError(f"AUX population {residual:.3g} on ion {target}", residual)
    for pulse in _cn_pulses(target):
        state = _register_pulse(state, pulse, c)
    return state


def cn_between_ions(state: RegisterState, m: int, k: int, c: CouplingParams) -> RegisterState:
    """CN from ion m (control) to ion k (target) through the COM mode."""
    if m == k:
        raise ValueError("control and target ions must differ")
    state = keyboard_map(state, m, KeyboardDirection.ENCODE, c)
    state = cn_on_register(state, k, c)
    return keyboard_map(state, m, KeyboardDirection.DECODE, c)


def carrier_rotation(state: RegisterState, ion: int, angle: float, phase: float, c: CouplingParams) -> RegisterState:
    return _register_pulse(state, PulseSpec(Transition.CARRIER, angle, phase, ion), c)


def prepare_ghz(N: int, phi: float, c: CouplingParams, n_max: int = 3) -> RegisterState:
    """(|down...down> + e^{i phi}|up...up>)/sqrt(2) (x) |0> via a pi/2 pulse and N-1 CN gates.

    Gates are ideal only with ``c.ld_limit`` set.
    """
    if not 2 <= N <= MAX_IONS:
        raise ValueError(f"N must lie in [2, {MAX_IONS}], got {N}")
    state = RegisterState.basis([DOWN] * N, 0, FockSpace(n_max))
    state = carrier_rotation(state, 0, np.pi / 2, phi + np.pi / 2, c)
    for k in range(1, N):
        state = cn_between_ions(state, 0, k, c)
    return state


def ghz_target(N: int, phi: float, n_max: int = 3) -> RegisterState:
    terms = [(1.0, [DOWN] * N, 0), (np.exp(1j * phi), [UP] * N, 0)]
    return RegisterState.from_terms(terms, N, FockSpace(n_max))
