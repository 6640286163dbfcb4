"""Physical constants, atom/trap/geometry specs and derived quantities.

All values are SI. Constants are frozen at CODATA 2018 so that golden
outputs never move with a library upgrade.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

from .errors import ConfigError, InvalidInputError

ATOMIC_MASS_UNIT = 1.66053906660e-27  # kg


@dataclass(frozen=True)
class PhysicalConstants:
    c: float = 299_792_458.0
    hbar: float = 1.054571817e-34
    kB: float = 1.380649e-23
    g_earth: float = 9.81

    def __post_init__(self):
        for f in fields(self):
            if not getattr(self, f.name) > 0:
                raise InvalidInputError(f"{f.name} must be positive")


CONSTANTS = PhysicalConstants()


@dataclass(frozen=True)
class AtomSpec:
    mass: float
    clock_wavelength: float
    magic_wavelength: float
    name: str = ""

    def __post_init__(self):
        if not self.mass > 0:
            raise InvalidInputError("atom mass must be positive")
        if not (self.clock_wavelength > 0 and self.magic_wavelength > 0):
            raise InvalidInputError("wavelengths must be positive")


YB171 = AtomSpec(
    mass=170.9363302 * ATOMIC_MASS_UNIT,
    clock_wavelength=578e-9,
    magic_wavelength=759e-9,
    name="171Yb",
)


@dataclass(frozen=True)
class TrapSpec:
    """Gaussian tweezer: depth given as a temperature, waist as 1/e^2 radius."""

    depth_temperature: float
    waist: float

    def __post_init__(self):
        if not (self.depth_temperature > 0 and self.waist > 0):
            raise InvalidInputError("trap depth and waist must be positive")

    @property
    def depth(self) -> float:
        """Depth V0 in joules."""
        return CONSTANTS.kB * self.depth_temperature


DEFAULT_TRAP = TrapSpec(depth_temperature=300e-6, waist=1e-6)


@dataclass(frozen=True)
class Geometry:
    arm_separation: float = 0.01
    phase_duration: float = 10.0

    def __post_init__(self):
        if self.arm_separation < 0:
            raise InvalidInputError("arm separation must be >= 0 (arm 1 is the upper arm)")
        if not self.phase_duration > 0:
            raise InvalidInputError("phase duration must be positive")


def clock_angular_frequency(atom: AtomSpec | float) -> float:
    """Clock transition angular frequency 2*pi*c/lambda (rad/s).

    Accepts an AtomSpec or a bare wavelength in metres.
    """
    wavelength = atom.clock_wavelength if isinstance(atom, AtomSpec) else float(atom)
    if not wavelength > 0:
        raise InvalidInputError("clock wavelength must be positive")
    return 2 * math.pi * CONSTANTS.c / wavelength


def gravitational_redshift(omega0: float, g: float, h: float) -> float:
    """Redshift between arms separated by height h, as an angular frequency."""
    if h < 0:
        raise InvalidInputError("arm separation must be >= 0")
    return omega0 / CONSTANTS.c**2 * g * h


def trap_frequencies(atom: AtomSpec, trap: TrapSpec) -> tuple[float, float]:
    """Radial and axial harmonic frequencies of a Gaussian tweezer.

    Standard expansion of -V0 exp(-2r^2/w^2) / (1 + z^2/zR^2) about its
    minimum, with Rayleigh range zR = pi w^2 / lambda_magic.
    """
    v0 = trap.depth
    w = trap.waist
    z_r = math.pi * w**2 / atom.magic_wavelength
    omega_r = math.sqrt(4 * v0 / (atom.mass * w**2))
    omega_z = math.sqrt(2 * v0 / (atom.mass * z_r**2))
    return omega_r, omega_z


def ground_state_extent(atom: AtomSpec, omega_trap: float) -> float:
    # x0 = sqrt(hbar / 2 m w): rms width of the harmonic ground state
    if not omega_trap > 0:
        raise InvalidInputError("trap frequency must be positive")
    return math.sqrt(CONSTANTS.hbar / (2 * atom.mass * omega_trap))


def lamb_dicke(atom: AtomSpec, omega_trap: float) -> float:
    """Lamb-Dicke parameter for the clock photon recoil."""
    return 2 * math.pi / atom.clock_wavelength * ground_state_extent(atom, omega_trap)


def _from_dict(cls, data: dict[str, Any], where: str):
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


@dataclass(frozen=True)
class SetupConfig:
    """Atom, trap and geometry bundle, as loaded from a JSON config."""

    atom: AtomSpec = YB171
    trap: TrapSpec = DEFAULT_TRAP
    geometry: Geometry = field(default_factory=Geometry)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> SetupConfig:
        unknown = set(data) - {"atom", "trap", "geometry"}
        if unknown:
            raise ConfigError(f"unknown keys in setup config: {sorted(unknown)}")
        atom = YB171
        if "atom" in data:
            atom_data = dict(data["atom"])
            if "mass_amu" in atom_data:
                atom_data["mass"] = atom_data.pop("mass_amu") * ATOMIC_MASS_UNIT
            atom = _from_dict(AtomSpec, {**asdict(YB171), **atom_data}, "atom")
        trap = _from_dict(TrapSpec, {**asdict(DEFAULT_TRAP), **data.get("trap", {})}, "trap")
        geometry = _from_dict(Geometry, data.get("geometry", {}), "geometry")
        return cls(atom=atom, trap=trap, geometry=geometry)

    @classmethod
    def load(cls, path: str | Path) -> SetupConfig:
        return cls.from_dict(json.loads(Path(path).read_text()))


def derived_quantities(setup: SetupConfig | None = None) -> dict[str, Any]:
    """Every derived number of the setup, keyed with its unit."""
    setup = setup or SetupConfig()
    atom, trap, geo = setup.atom, setup.trap, setup.geometry
    omega0 = clock_angular_frequency(atom)
    eps = gravitational_redshift(omega0, CONSTANTS.g_earth, geo.arm_separation)
    omega_r, omega_z = trap_frequencies(atom, trap)
    return {
        "atom": atom.name,
        "mass_kg": atom.mass,
        "clock_wavelength_m": atom.clock_wavelength,
        "magic_wavelength_m": atom.magic_wavelength,
        "trap_depth_K": trap.depth_temperature,
        "trap_depth_J": trap.depth,
        "waist_m": trap.waist,
        "arm_separation_m": geo.arm_separation,
        "phase_duration_s": geo.phase_duration,
        "omega0_rad_per_s": omega0,
        "epsilon_rad_per_s": eps,
        "visibility": math.sin(geo.phase_duration * eps / 2),
        "omega_radial_rad_per_s": omega_r,
        "omega_axial_rad_per_s": omega_z,
        "rayleigh_range_m": math.pi * trap.waist**2 / atom.magic_wavelength,
        "eta_radial": lamb_dicke(atom, omega_r),
        "eta_axial": lamb_dicke(atom, omega_z),
    }
