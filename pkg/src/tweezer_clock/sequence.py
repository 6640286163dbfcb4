"""Four-level model of the clock interferometer.

Basis order is (g;1, g;2, e;1, e;2): internal clock state g/e, arm 1 (upper)
or arm 2 (lower). Pulses and tweezer splitters are ideal, instantaneous
unitaries; phase accumulation is diagonal.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

G1, G2, E1, E2 = range(4)
BASIS_LABELS = ("g;1", "g;2", "e;1", "e;2")

UNITARITY_TOL = 1e-12
NORM_TOL = 1e-12

# Sign conventions for the closed forms. The direct operator product gives
# the printed expressions with eps -> -eps; PRINTED keeps them as written.
MATRIX_CONVENTION = -1
PRINTED_CONVENTION = +1

_SQRT_HALF = 1 / math.sqrt(2)


@dataclass(frozen=True, eq=False)
class StateVector4:
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.shape != (4,):
            raise InvalidInputError("state must have 4 amplitudes")
        if abs(np.vdot(amps, amps).real - 1) > NORM_TOL:
            raise InvalidInputError("state is not normalized")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def basis(cls, index: int) -> StateVector4:
        amps = np.zeros(4, dtype=complex)
        amps[index] = 1
        return cls(amps)

    @property
    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


@dataclass(frozen=True, eq=False)
class Unitary4:
    entries: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.entries, dtype=complex)
        if m.shape != (4, 4):
            raise InvalidInputError("unitary must be 4x4")
        if unitarity_residual(m) > UNITARITY_TOL:
            raise InvalidInputError("matrix is not unitary")
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)

    @classmethod
    def _trusted(cls, m: np.ndarray) -> Unitary4:
        # products and adjoints of checked unitaries skip the residual check
        obj = object.__new__(cls)
        m.setflags(write=False)
        object.__setattr__(obj, "entries", m)
        return obj

    @property
    def dagger(self) -> Unitary4:
        return Unitary4._trusted(self.entries.conj().T.copy())

    def __matmul__(self, other):
        if isinstance(other, Unitary4):
            return Unitary4._trusted(self.entries @ other.entries)
        if isinstance(other, StateVector4):
            return StateVector4(self.entries @ other.amplitudes)
        return NotImplemented


_EYE4 = np.eye(4)


def unitarity_residual(m: np.ndarray) -> float:
    """max |U^dagger U - I| entry."""
    return float(np.max(np.abs(m.conj().T @ m - _EYE4)))


@dataclass(frozen=True)
class SequenceParams:
    """One interferometer realization.

    T: phase-accumulation time (s); drive_detuning: omega - omega0;
    lower_detuning: (E_g2 - E_g1)/hbar; epsilon: redshift; omega: drive
    frequency (only enters the rotating-frame transform). All rad/s.
    """

    T: float
    drive_detuning: float = 0.0
    lower_detuning: float = 0.0
    epsilon: float = 0.0
    omega: float = 0.0

    def __post_init__(self):
        if not self.T > 0:
            raise InvalidInputError("T must be positive")
        for name in ("drive_detuning", "lower_detuning", "epsilon", "omega"):
            if not math.isfinite(getattr(self, name)):
                raise InvalidInputError(f"{name} must be finite")


_BS = _SQRT_HALF * np.array(
    [[1, 1, 0, 0], [1, -1, 0, 0], [0, 0, 1, 1], [0, 0, 1, -1]], dtype=complex
)
_PI_HALF = _SQRT_HALF * np.array(
    [[1, 0, -1, 0], [0, 1, 0, -1], [1, 0, 1, 0], [0, 1, 0, 1]], dtype=complex
)
# lower-arm pi pulse; the bracketed matrix alone is the unitary (no 1/sqrt2)
_PI_LOWER = np.array(
    [[1, 0, 0, 0], [0, 0, 0, -1], [0, 0, 1, 0], [0, 1, 0, 0]], dtype=complex
)


def u_bs() -> Unitary4:
    """Spatial beam splitter acting on the arm index."""
    return Unitary4(_BS.copy())


def u_pi_half() -> Unitary4:
    """pi/2 clock pulse applied to both arms."""
    return Unitary4(_PI_HALF.copy())


def u_pi_lower() -> Unitary4:
    """pi clock pulse on the lower arm only."""
    return Unitary4(_PI_LOWER.copy())


def _phase_diagonal(T, drive, lower, eps):
    T, drive, lower, eps = np.broadcast_arrays(
        *(np.asarray(v, dtype=float) for v in (T, drive, lower, eps))
    )
    # phases -lower T, (drive + eps) T and (drive - lower) T, built from the
    # same rounded arguments the closed forms use; at T*detuning ~ 1e6 rad
    # the product of separately rounded phases would differ by ~1e-10
    u = np.exp(-1j * (T * (lower + eps / 2)))
    v = np.exp(1j * (T * (drive + eps / 2)))
    w = np.exp(1j * (T * eps / 2))
    return np.stack([np.ones_like(u), w * u, v * w, v * u], axis=-1)


def u_phase(p: SequenceParams) -> Unitary4:
    """Free evolution for time T in the drive's rotating frame."""
    # same arguments as _phase_diagonal, scalar arithmetic; unit modulus by construction
    T, eps = p.T, p.epsilon
    u = cmath.exp(-1j * (T * (p.lower_detuning + eps / 2)))
    v = cmath.exp(1j * (T * (p.drive_detuning + eps / 2)))
    w = cmath.exp(1j * (T * eps / 2))
    return Unitary4._trusted(np.diag(np.array([1, w * u, v * w, v * u], dtype=complex)))


def u_rot(p: SequenceParams) -> Unitary4:
    """Rotating-frame transformation at time T."""
    ph = cmath.exp(1j * p.omega * p.T)
    return Unitary4._trusted(np.diag(np.array([1, 1, ph, ph], dtype=complex)))


_U_BS, _U_PI_HALF, _U_PI_LOWER = u_bs(), u_pi_half(), u_pi_lower()

# Everything after the phase stage except the frame rotation, and the state
# entering it; both are parameter-free.
_AFTER_PHASE = _PI_HALF.conj().T @ _BS.conj().T @ _PI_LOWER
_BEFORE_PHASE = _BS @ _PI_HALF @ np.array([1, 0, 0, 0], dtype=complex)


def final_amplitudes(T, drive_detuning, lower_detuning, epsilon, omega=0.0) -> np.ndarray:
    """Vectorized final amplitudes, shape broadcast(inputs) + (4,).

    Same operator product as ``final_state`` but over arrays of parameters,
    for Monte Carlo use.
    """
    diag = _phase_diagonal(T, drive_detuning, lower_detuning, epsilon)
    psi = np.einsum("ij,...j->...i", _AFTER_PHASE, diag * _BEFORE_PHASE)
    rot = np.exp(-1j * np.asarray(omega, dtype=float) * np.asarray(T, dtype=float))
    psi[..., 2:] *= np.asarray(rot)[..., None]
    return psi


def final_state(p: SequenceParams) -> StateVector4:
    """Compose the full interferometer sequence acting on |g;1>."""
    u = (
        u_rot(p).dagger
        @ _U_PI_HALF.dagger
        @ _U_BS.dagger
        @ _U_PI_LOWER
        @ u_phase(p)
        @ _U_BS
        @ _U_PI_HALF
    )
    return u @ StateVector4.basis(G1)


def p_upper_port(s: StateVector4) -> float:
    a = s.amplitudes
    return float(abs(a[G1]) ** 2 + abs(a[E1]) ** 2)


def p_lower_port(s: StateVector4) -> float:
    a = s.amplitudes
    return float(abs(a[G2]) ** 2 + abs(a[E2]) ** 2)


def p_ground(s: StateVector4) -> float:
    a = s.amplitudes
    return float(abs(a[G1]) ** 2 + abs(a[G2]) ** 2)


def p_excited(s: StateVector4) -> float:
    a = s.amplitudes
    return float(abs(a[E1]) ** 2 + abs(a[E2]) ** 2)


def closed_form_p1(p: SequenceParams, sign: int = MATRIX_CONVENTION):
    """Upper-port exit probability from the analytic expression.

    ``sign`` multiplies epsilon everywhere it appears; -1 reproduces the
    operator product exactly, +1 is the expression as usually quoted.
    """
    eps = sign * p.epsilon
    return 0.5 * (
        1
        - math.sin(p.T * (p.lower_detuning - eps / 2))
        * math.sin(p.T * (p.drive_detuning - eps / 2))
    )


def closed_form_pg(p: SequenceParams, sign: int = MATRIX_CONVENTION):
    """Clock ground-state probability from the analytic expression."""
    eps = sign * p.epsilon
    return 0.5 * (1 + math.sin(p.T * (p.drive_detuning - eps / 2)) * math.sin(p.T * eps / 2))


def fringe_amplitude(T: float, drive_detuning: float, epsilon: float, sign: int = MATRIX_CONVENTION) -> float:
    """Amplitude A of the exit-port oscillation, 1/2 |sin(T(Delta - s eps/2))|."""
    return 0.5 * abs(math.sin(T * (drive_detuning - sign * epsilon / 2)))


def visibility(T: float, epsilon: float) -> float:
    """Ground-state fringe visibility sin(T eps / 2)."""
    if not T > 0:
        raise InvalidInputError("T must be positive")
    return math.sin(T * epsilon / 2)


def visibility_no_pi_pulse(T: float, epsilon: float) -> float:
    """Small-eps visibility of the same sequence without the lower-arm pi pulse."""
    return 1 - (T * epsilon) ** 2 / 8


def joint_probabilities(T, drive_detuning, lower_detuning, epsilon) -> np.ndarray:
    """|amplitude|^2 in basis order, renormalized against rounding."""
    probs = np.abs(final_amplitudes(T, drive_detuning, lower_detuning, epsilon)) ** 2
    return probs / probs.sum(axis=-1, keepdims=True)


def collapsed_probabilities(T, drive_detuning, lower_detuning, epsilon) -> np.ndarray:
    """Joint outcome probabilities when the atom collapses onto one arm after splitting.

    Density-matrix propagation with the arm coherences zeroed right after
    the beam splitter, then the ideal remaining sequence.
    """
    diag = _phase_diagonal(T, drive_detuning, lower_detuning, epsilon)
    probs = np.zeros(diag.shape, dtype=float)
    for arm in (0, 1):
        # project onto arm `arm` (indices arm and arm+2), weight 1/2 each
        proj = np.zeros(4, dtype=complex)
        proj[[arm, arm + 2]] = _BEFORE_PHASE[[arm, arm + 2]]
        psi = np.einsum("ij,...j->...i", _AFTER_PHASE, diag * proj)
        probs += np.abs(psi) ** 2
    return probs / probs.sum(axis=-1, keepdims=True)
