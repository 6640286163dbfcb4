"""1D Schroedinger dynamics of the two-tweezer splitter.

Internally everything runs in units with hbar = m = 1 and lengths in units of
the tweezer waist sigma, so energies are in hbar^2/(m sigma^2) and times in
m sigma^2/hbar. Inputs and outputs of the public functions are SI.

Coordinate x points up: the well at +d/2 is arm 1 (upper, initially deeper)
and the well at -d/2 is arm 2 (lower).
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Callable

import numpy as np
from scipy import linalg

from .errors import ConfigError, InvalidInputError, SolverError, StabilityError
from .params import CONSTANTS, DEFAULT_TRAP, YB171

NORM_TOL = 1e-8
NORM_ABORT = 1e-6

# Splitting runs in a shallow trap: at the 300 uK pulse depth the tunnel
# coupling switches on far too abruptly to follow adiabatically within
# seconds of simulated time.
SPLIT_DEPTH_TEMPERATURE = 3e-6  # K
SPLIT_DELTA_MAX = 0.061  # level-crossing bound for the default trap, floored


@dataclass(frozen=True)
class TrapProtocol:
    """Splitting protocol for two Gaussian tweezers (all SI)."""

    v0: float = CONSTANTS.kB * SPLIT_DEPTH_TEMPERATURE
    sigma: float = DEFAULT_TRAP.waist
    d_max: float = 3e-6
    d_min: float = 0.9e-6
    delta_max: float = SPLIT_DELTA_MAX
    t_split: float = 0.3
    gravity: bool = False
    compensation_gradient: float = 0.0
    mass: float = YB171.mass
    g: float = CONSTANTS.g_earth

    def __post_init__(self):
        if not (self.v0 > 0 and self.sigma > 0 and self.t_split > 0 and self.mass > 0):
            raise InvalidInputError("v0, sigma, t_split and mass must be positive")
        if not self.d_max > self.d_min > 0:
            raise InvalidInputError("need d_max > d_min > 0")
        if not 0 <= self.delta_max < 1:
            raise InvalidInputError("delta_max must lie in [0, 1)")

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> TrapProtocol:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown keys in protocol: {sorted(unknown)}")
        return cls(**data)

    # unit conversions -------------------------------------------------
    @property
    def energy_unit(self) -> float:
        return CONSTANTS.hbar**2 / (self.mass * self.sigma**2)

    @property
    def time_unit(self) -> float:
        return self.mass * self.sigma**2 / CONSTANTS.hbar

    def slope(self) -> float:
        """Total linear potential slope (J/m): gravity plus compensation."""
        return (self.mass * self.g if self.gravity else 0.0) + self.compensation_gradient


def _check_time(t, p: TrapProtocol):
    t = np.asarray(t, dtype=float)
    # allow rounding slop from accumulated time steps
    tol = 1e-9 * p.t_split
    if np.any(t < -tol) or np.any(t > p.t_split + tol):
        raise InvalidInputError("time outside [0, t_split]")
    return np.clip(t, 0.0, p.t_split)


def separation_schedule(t, p: TrapProtocol):
    """Trap separation d(t): cosine from d_max down to d_min and back."""
    t = _check_time(t, p)
    d = 0.5 * (p.d_max + p.d_min) + 0.5 * (p.d_max - p.d_min) * np.cos(2 * np.pi * t / p.t_split)
    return d if d.ndim else float(d)


def detuning_schedule(t, p: TrapProtocol):
    """Relative depth difference: linear ramp to zero over the first half, then zero."""
    t = _check_time(t, p)
    out = np.where(t < p.t_split / 2, p.delta_max * (1 - 2 * t / p.t_split), 0.0)
    return out if out.ndim else float(out)


def _potential_reduced(x, d, delta, v0, slope):
    # reduced units: x, d in sigma; v0, slope*x in hbar^2/(m sigma^2)
    return -v0 * (np.exp(-2 * (x - d / 2) ** 2) + (1 - delta) * np.exp(-2 * (x + d / 2) ** 2)) + slope * x


def potential(x, t, p: TrapProtocol):
    """Double-tweezer potential (J) at positions x (m) and time t (s)."""
    d = separation_schedule(t, p)
    delta = detuning_schedule(t, p)
    x = np.asarray(x, dtype=float)
    v = -p.v0 * (
        np.exp(-2 * (x - d / 2) ** 2 / p.sigma**2)
        + (1 - delta) * np.exp(-2 * (x + d / 2) ** 2 / p.sigma**2)
    ) + p.slope() * x
    return v if v.ndim else float(v)


@dataclass(frozen=True)
class Grid1D:
    """Periodic grid symmetric about x = 0 (x=0 is a grid point)."""

    x_min: float
    x_max: float
    n_points: int
    dt: float

    def __post_init__(self):
        n = self.n_points
        if n < 4 or n & (n - 1):
            raise InvalidInputError("n_points must be a power of two")
        if not (self.x_max > 0 > self.x_min and self.dt > 0):
            raise InvalidInputError("grid must straddle x = 0 and dt must be positive")

    @classmethod
    def for_protocol(cls, p: TrapProtocol, n_points: int = 2048, dt: float | None = None,
                     margin: float = 3.0) -> Grid1D:
        """Grid spanning d_max plus ``margin`` waists on each side.

        Default dt is 0.8 of the stability bound 2 pi hbar / (10 V0),
        shrunk so that t_split is an integer number of steps.
        """
        half = p.d_max / 2 + margin * p.sigma
        # periodic grid: points -N/2 .. N/2-1 times dx
        dx = 2 * half / n_points
        if dt is None:
            bound = 2 * math.pi * CONSTANTS.hbar / (10 * p.v0)
            dt = p.t_split / math.ceil(p.t_split / (0.8 * bound))
        return cls(-half, -half + (n_points - 1) * dx, n_points, dt)

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.n_points - 1)

    @property
    def x(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.n_points)

    def stable_for(self, p: TrapProtocol) -> bool:
        return self.dt < 2 * math.pi * CONSTANTS.hbar / (10 * p.v0)


@dataclass(frozen=True, eq=False)
class WaveFunction1D:
    """Samples psi(x_k) normalized so that sum |psi|^2 dx = 1."""

    samples: np.ndarray
    dx: float
    t: float = 0.0

    @property
    def norm(self) -> float:
        return float(np.sum(np.abs(self.samples) ** 2) * self.dx)

    @property
    def density(self) -> np.ndarray:
        return np.abs(self.samples) ** 2

    def overlap(self, other: WaveFunction1D) -> float:
        """|<self|other>|^2."""
        return float(abs(np.vdot(self.samples, other.samples) * self.dx) ** 2)

    def mean_position(self, x: np.ndarray) -> float:
        return float(np.sum(x * self.density) * self.dx)


def arm_populations(psi: WaveFunction1D) -> tuple[float, float]:
    """(upper, lower): probability on x > 0 and x < 0; the x = 0 sample is shared."""
    rho = psi.density * psi.dx
    n = rho.size
    center = n // 2  # index of x = 0 on the symmetric grid
    upper = rho[center + 1:].sum() + 0.5 * rho[center]
    lower = rho[:center].sum() + 0.5 * rho[center]
    return float(upper), float(lower)


class _Reduced:
    """Protocol and grid converted to hbar = m = sigma = 1 units."""

    def __init__(self, p: TrapProtocol, grid: Grid1D):
        self.p = p
        self.grid = grid
        self.eu = p.energy_unit
        self.tu = p.time_unit
        self.x = grid.x / p.sigma
        self.dx = grid.dx / p.sigma
        self.dt = grid.dt / self.tu
        self.v0 = p.v0 / self.eu
        self.slope = p.slope() * p.sigma / self.eu
        k = 2 * np.pi * np.fft.fftfreq(grid.n_points, d=self.dx)
        self.kinetic = 0.5 * k**2
        self._envelope = -self.v0 * np.exp(-2 * self.x**2)
        self._linear = self.slope * self.x

    def V(self, t_si: float) -> np.ndarray:
        # scalar copy of the two schedules; the array versions cost more
        # than the rest of a time step
        p = self.p
        t = min(max(t_si, 0.0), p.t_split)
        d = 0.5 * (p.d_max + p.d_min) + 0.5 * (p.d_max - p.d_min) * math.cos(2 * math.pi * t / p.t_split)
        delta = p.delta_max * (1 - 2 * t / p.t_split) if t < p.t_split / 2 else 0.0
        # exp(-2(x -+ a)^2) = exp(-2x^2) exp(-2a^2) exp(+-4ax): one exp per call
        a = d / (2 * p.sigma)
        e = np.exp(4 * a * self.x)
        return self._envelope * math.exp(-2 * a * a) * (e + (1 - delta) / e) + self._linear

    def wavefunction(self, samples: np.ndarray, t: float) -> WaveFunction1D:
        # SI normalization: sum |psi|^2 dx_SI = 1
        return WaveFunction1D(samples / math.sqrt(self.p.sigma), self.grid.dx, t)

    def samples(self, psi: WaveFunction1D) -> np.ndarray:
        return np.asarray(psi.samples, dtype=complex) * math.sqrt(self.p.sigma)


def _normalize(psi: np.ndarray, dx: float) -> np.ndarray:
    return psi / math.sqrt(float(np.sum(np.abs(psi) ** 2)) * dx)


def _energy(psi: np.ndarray, V: np.ndarray, kinetic: np.ndarray, dx: float) -> float:
    kin = np.fft.ifft(kinetic * np.fft.fft(psi))
    return float(np.real(np.vdot(psi, kin + V * psi)) * dx)


def imaginary_time_states(V: np.ndarray, kinetic: np.ndarray, dx: float, guesses: np.ndarray,
                          dtau: float, tol: float, max_steps: int = 200_000,
                          check_every: int = 20) -> tuple[np.ndarray, np.ndarray]:
    """Lowest len(guesses) eigenstates by imaginary-time subspace iteration.

    Strang-split exp(-H dtau) with Gram-Schmidt after each step. Stops when
    every Ritz energy changes by less than ``tol`` per step.
    """
    offset = float(V.min())
    V = V - offset
    half_v = np.exp(-0.5 * dtau * V)
    kin = np.exp(-dtau * kinetic)
    states = np.array(guesses, dtype=complex, copy=True)
    if states.ndim == 1:
        states = states[None, :]
    energies = np.full(len(states), np.inf)
    for step in range(1, max_steps + 1):
        states = half_v * np.fft.ifft(kin * np.fft.fft(half_v * states, axis=1), axis=1)
        states = _orthonormalize(states, dx)
        if step % check_every == 0:
            new = _ritz(states, V, kinetic, dx)
            if np.all(np.abs(new - energies) < tol * check_every):
                return states, np.sort(new) + offset
            energies = new
    raise SolverError("imaginary-time propagation did not converge")


def _orthonormalize(states: np.ndarray, dx: float) -> np.ndarray:
    q, _ = np.linalg.qr(states.T)
    return q.T / math.sqrt(dx)


def _ritz(states, V, kinetic, dx) -> np.ndarray:
    hs = np.fft.ifft(kinetic * np.fft.fft(states, axis=1), axis=1) + V * states
    h = states.conj() @ hs.T * dx
    return np.linalg.eigvalsh(0.5 * (h + h.conj().T))


def _well_guess(x: np.ndarray, centers, weights, width: float) -> np.ndarray:
    psi = sum(w * np.exp(-((x - c) ** 2) / (2 * width**2)) for c, w in zip(centers, weights))
    return psi.astype(complex)


def ground_state(p: TrapProtocol, grid: Grid1D, t: float = 0.0, tol: float = 1e-12,
                 dtau: float | None = None) -> WaveFunction1D:
    """Ground state of the frozen potential at time t by imaginary-time propagation.

    Converged when the energy changes by less than tol * V0 per step. The
    final stage uses the real-time step so the state is stationary under
    the same splitting used by ``evolve``.
    """
    r = _Reduced(p, grid)
    V = r.V(t)
    d = separation_schedule(t, p) / p.sigma
    delta = detuning_schedule(t, p)
    omega = math.sqrt(4 * r.v0)
    guess = _well_guess(r.x, (d / 2, -d / 2), (1.0, 1.0 if delta == 0 else 0.1), 1 / math.sqrt(omega))
    stages = [dtau] if dtau is not None else [20 * r.dt, 4 * r.dt, r.dt]
    psi = guess[None, :]
    for i, step in enumerate(stages):
        last = i == len(stages) - 1
        psi, _ = imaginary_time_states(V, r.kinetic, r.dx, psi, step,
                                       tol * r.v0 if last else 1e3 * tol * r.v0)
    out = _normalize(psi[0], r.dx)
    # fix global phase: real and positive at the density maximum
    k = int(np.argmax(np.abs(out)))
    out = out * np.exp(-1j * np.angle(out[k]))
    return r.wavefunction(out, t)


def energy(psi: WaveFunction1D, p: TrapProtocol, grid: Grid1D, t: float = 0.0) -> float:
    """<H> (J) of psi in the frozen potential at time t."""
    r = _Reduced(p, grid)
    return _energy(r.samples(psi), r.V(t), r.kinetic, r.dx) * r.eu


@dataclass
class Trajectory:
    times: np.ndarray
    snapshots: list[WaveFunction1D]
    max_norm_error: float
    reverse: bool = False

    @property
    def final(self) -> WaveFunction1D:
        return self.snapshots[-1]

    def populations(self) -> np.ndarray:
        return np.array([arm_populations(s) for s in self.snapshots])


def split_step(psi: np.ndarray, kinetic: np.ndarray, potential_at: Callable[[float], np.ndarray],
               t0: float, dt: float, n_steps: int) -> np.ndarray:
    """Strang split-step (half kinetic, full potential at midpoint, half kinetic).

    Reduced units. Consecutive half kinetic steps are fused.
    """
    half_k = np.exp(-0.5j * dt * kinetic)
    full_k = half_k * half_k
    phi = np.fft.fft(psi) * half_k
    for n in range(n_steps):
        psi = np.fft.ifft(phi)
        psi *= np.exp(-1j * dt * potential_at(t0 + (n + 0.5) * dt))
        phi = np.fft.fft(psi)
        phi *= full_k if n < n_steps - 1 else half_k
    return np.fft.ifft(phi)


def evolve(psi0: WaveFunction1D, p: TrapProtocol, grid: Grid1D, n_snapshots: int = 21,
           reverse: bool = False) -> Trajectory:
    """Real-time propagation over [0, t_split].

    ``reverse`` runs the time-reversed protocol (the combiner), i.e. the
    potential at protocol time t_split - t.
    """
    r = _Reduced(p, grid)
    if abs(psi0.norm - 1) > NORM_TOL:
        raise InvalidInputError("initial wavefunction is not normalized")
    n_total = int(round(p.t_split / grid.dt))
    if n_total < 1:
        raise InvalidInputError("t_split shorter than one time step")
    dt_red = p.t_split / n_total / r.tu
    edges = np.linspace(0, n_total, max(n_snapshots, 2)).round().astype(int)

    def v_at(t_red: float) -> np.ndarray:
        t_si = min(t_red * r.tu, p.t_split)
        return r.V(p.t_split - t_si if reverse else t_si)

    psi = r.samples(psi0)
    snaps = [r.wavefunction(psi.copy(), 0.0)]
    times = [0.0]
    max_err = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        if b > a:
            psi = split_step(psi, r.kinetic, v_at, a * dt_red, dt_red, b - a)
        norm = float(np.sum(np.abs(psi) ** 2) * r.dx)
        err = abs(norm - 1)
        max_err = max(max_err, err)
        if not np.isfinite(norm) or err > NORM_ABORT:
            raise StabilityError(f"norm drifted by {err:.3g}; reduce dt")
        t_si = b * dt_red * r.tu
        snaps.append(r.wavefunction(psi.copy(), t_si))
        times.append(t_si)
    return Trajectory(np.array(times), snaps, max_err, reverse)


def hamiltonian_matrix(p: TrapProtocol, grid: Grid1D, t: float) -> np.ndarray:
    """Dense Fourier-grid Hamiltonian (reduced units) of the frozen potential at t."""
    r = _Reduced(p, grid)
    # periodic spectral kinetic operator is circulant: T_ij = c[i - j]
    h = linalg.circulant(np.fft.ifft(r.kinetic).real)
    h[np.diag_indices_from(h)] += r.V(t)
    return h


def lowest_states(p: TrapProtocol, grid: Grid1D, t: float, k: int = 2) -> tuple[np.ndarray, np.ndarray]:
    """Lowest k eigenpairs of the frozen potential at t.

    Returns (energies in J, states as rows normalized in reduced units).
    Exact diagonalization, so near-degenerate levels are resolved.
    """
    r = _Reduced(p, grid)
    e, v = linalg.eigh(hamiltonian_matrix(p, grid, t), subset_by_index=[0, k - 1])
    return e * r.eu, (v / math.sqrt(r.dx)).T.astype(complex)


def snapshot_weights(trajectory: Trajectory, p: TrapProtocol, grid: Grid1D) -> list[float]:
    """Weight of each snapshot inside the span of the lowest two instantaneous eigenstates."""
    if not trajectory.snapshots:
        raise InvalidInputError("empty trajectory")
    r = _Reduced(p, grid)
    out = []
    for t, snap in zip(trajectory.times, trajectory.snapshots):
        t_proto = p.t_split - t if trajectory.reverse else t
        _, basis = lowest_states(p, grid, min(max(t_proto, 0.0), p.t_split), 2)
        psi = r.samples(snap)
        out.append(float(np.sum(np.abs(basis.conj() @ psi * r.dx) ** 2)))
    return out


def adiabaticity(trajectory: Trajectory, p: TrapProtocol, grid: Grid1D) -> float:
    """Minimum over snapshots of the weight inside the lowest two instantaneous eigenstates."""
    return min(snapshot_weights(trajectory, p, grid))


def level_crossing_bound(p: TrapProtocol, grid: Grid1D | None = None, resolution: float = 1e-4) -> float:
    """Largest delta_max (to within ``resolution``) keeping the t = 0 level order.

    At d_max the wells are decoupled, so each well is treated on its own:
    the shallow-well ground level must stay below the deep-well first
    excited level. Gravity is ignored (a protocol property).
    """
    grid = grid or Grid1D.for_protocol(p)
    r = _Reduced(replace(p, gravity=False, compensation_gradient=0.0), grid)
    deep = _single_well_levels(r, 1.0)
    lo, hi = 0.0, 0.5
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        if _single_well_levels(r, 1 - mid)[0] < deep[1]:
            lo = mid
        else:
            hi = mid
    return math.floor(lo / resolution) * resolution


def _single_well_levels(r: _Reduced, depth: float) -> np.ndarray:
    # two lowest levels of an isolated tweezer at the origin
    V = -r.v0 * depth * np.exp(-2 * r.x**2)
    w = 1 / math.sqrt(math.sqrt(4 * r.v0 * depth))
    g = np.exp(-r.x**2 / (2 * w**2))
    _, e = imaginary_time_states(V, r.kinetic, r.dx, np.array([g, r.x * g], dtype=complex),
                                 4 * r.dt, 1e-9 * r.v0)
    return e
