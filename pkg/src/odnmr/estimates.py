"""Closed-form coupling, ion-count, and linewidth estimators."""
from __future__ import annotations

import math

__all__ = [
    "HBAR",
    "PLANCK_H",
    "MU_BOHR",
    "GAMMA_EU151",
    "GAMMA_PROTON",
    "nuclear_moment",
    "electron_moment",
    "dipolar_coupling",
    "distance_for_coupling",
    "probed_ion_count",
    "linewidth_to_t2star",
]

HBAR = 1.054571817e-34  # J s
PLANCK_H = 6.62607015e-34  # J s
MU_BOHR = 9.2740100783e-24  # J/T
_MU0_OVER_4PI = 1e-7  # T m / A

GAMMA_EU151 = 6.65e7  # rad/s/T, I = 5/2
GAMMA_PROTON = 2.68e8  # rad/s/T, I = 1/2


def nuclear_moment(gamma: float, spin: float) -> float:
    """mu = gamma * hbar * I, in J/T."""
    return gamma * HBAR * spin


def electron_moment(g: float = 2.0, spin: float = 0.5) -> float:
    """mu = g * mu_B * S, in J/T."""
    return g * MU_BOHR * spin


def dipolar_coupling(mu_a: float, mu_b: float, r: float) -> float:
    """Magnetic dipole-dipole interaction (mu0/4pi) mu_a mu_b / r^3, as a
    frequency in Hz.  Moments in J/T, distance in meters."""
    if not r > 0:
        raise ValueError("distance must be > 0")
    return _MU0_OVER_4PI * mu_a * mu_b / r**3 / PLANCK_H


def distance_for_coupling(mu_a: float, mu_b: float, coupling_hz: float) -> float:
    """Distance (m) at which two moments couple at the given frequency."""
    if not coupling_hz > 0:
        raise ValueError("coupling must be > 0")
    return (_MU0_OVER_4PI * mu_a * mu_b / (coupling_hz * PLANCK_H)) ** (1.0 / 3.0)


def probed_ion_count(c_eu: float, v: float, eta_h: float, eta_151: float,
                     eta_s: float) -> float:
    """Number of ions contributing to one spin measurement:
    concentration (ions/cm^3) x volume (cm^3) x the three selection
    fractions (optical, isotope, spin)."""
    factors = (c_eu, v, eta_h, eta_151, eta_s)
    if any(f < 0 for f in factors):
        raise ValueError("all factors must be >= 0")
    return c_eu * v * eta_h * eta_151 * eta_s


def linewidth_to_t2star(gamma_h_khz: float) -> float:
    """T2* = 1/(pi Gamma_h), Gamma_h in kHz, result in us.

    Example: 310 kHz -> 1.03 us.  Note: applied to the narrowest spin
    hole (11.64 kHz) this gives 27.3 us, and to its half-width 54.7 us;
    neither reproduces the 19.3 us sometimes quoted alongside that hole,
    so downstream consumers should state which convention they use.
    """
    if not gamma_h_khz > 0:
        raise ValueError("linewidth must be > 0")
    return 1e3 / (math.pi * gamma_h_khz)
