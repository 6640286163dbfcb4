import math

import pytest

from tweezer_clock.errors import InvalidInputError
from tweezer_clock.params import (
    CONSTANTS,
    DEFAULT_TRAP,
    YB171,
    AtomSpec,
    SetupConfig,
    TrapSpec,
    clock_angular_frequency,
    derived_quantities,
    gravitational_redshift,
    lamb_dicke,
    trap_frequencies,
)
from tweezer_clock.errors import ConfigError


def test_clock_frequency_yb():
    # 2*pi*299792458/578e-9 by hand: 3.2589e15
    assert clock_angular_frequency(YB171) == pytest.approx(3.259e15, rel=1e-3)


def test_clock_frequency_definition_and_limit():
    assert clock_angular_frequency(CONSTANTS.c) == pytest.approx(2 * math.pi)
    assert clock_angular_frequency(1e30) < 1e-20


@pytest.mark.parametrize("wl", [0.0, -1e-7])
def test_clock_frequency_rejects_bad_wavelength(wl):
    with pytest.raises(InvalidInputError):
        clock_angular_frequency(wl)


def test_redshift_value():
    eps = gravitational_redshift(3.259e15, 9.81, 0.01)
    assert eps == pytest.approx(3.557e-3, rel=1e-3)
    # consistent with a visibility of about 0.02 at T = 10 s
    assert math.sin(10 * eps / 2) == pytest.approx(0.0178, abs=1e-4)


def test_redshift_zero_and_linear():
    w0 = clock_angular_frequency(YB171)
    assert gravitational_redshift(w0, 9.81, 0.0) == 0.0
    e1 = gravitational_redshift(w0, 9.81, 0.01)
    assert gravitational_redshift(w0, 9.81, 0.02) == pytest.approx(2 * e1, rel=1e-15)
    assert gravitational_redshift(2 * w0, 9.81, 0.01) == pytest.approx(2 * e1, rel=1e-15)
    assert gravitational_redshift(w0, 3 * 9.81, 0.01) == pytest.approx(3 * e1, rel=1e-15)


def test_redshift_rejects_negative_height():
    with pytest.raises(InvalidInputError):
        gravitational_redshift(1e15, 9.81, -0.01)


def test_trap_frequencies():
    w_r, w_z = trap_frequencies(YB171, DEFAULT_TRAP)
    assert w_r == pytest.approx(2.41e5, rel=5e-3)
    assert w_z == pytest.approx(4.12e4, rel=5e-3)
    w_r4, w_z4 = trap_frequencies(YB171, TrapSpec(4 * 300e-6, 1e-6))
    assert w_r4 == pytest.approx(2 * w_r)
    assert w_z4 == pytest.approx(2 * w_z)


def test_lamb_dicke_reproduces_quoted_values():
    w_r, w_z = trap_frequencies(YB171, DEFAULT_TRAP)
    assert lamb_dicke(YB171, w_r) == pytest.approx(0.30, rel=0.03)
    assert lamb_dicke(YB171, w_z) == pytest.approx(0.73, rel=0.03)
    assert lamb_dicke(YB171, 1e30) < 1e-10


def test_specs_validate():
    with pytest.raises(InvalidInputError):
        AtomSpec(mass=-1, clock_wavelength=1, magic_wavelength=1)
    with pytest.raises(InvalidInputError):
        TrapSpec(0, 1e-6)
    assert YB171.clock_wavelength == 578e-9 and YB171.magic_wavelength == 759e-9


def test_derived_quantities_pure():
    a, b = derived_quantities(), derived_quantities()
    assert a == b
    assert a["eta_radial"] == pytest.approx(0.301, abs=1e-3)


def test_config_rejects_unknown_keys():
    with pytest.raises(ConfigError):
        SetupConfig.from_dict({"trap": {"depth_temperature": 1e-4, "wasit": 1e-6}})
    with pytest.raises(ConfigError):
        SetupConfig.from_dict({"atoms": {}})
    cfg = SetupConfig.from_dict({"geometry": {"arm_separation": 0.02}})
    assert cfg.geometry.arm_separation == 0.02
