"""Level structure and inhomogeneous ensemble of Eu-151 ground-state spins.

The ground quadrupole structure is collapsed to three doublet levels
|+-1/2>, |+-3/2>, |+-5/2> (no magnetic field anywhere in scope), indexed
0, 1, 2.  Transition frequencies are inputs, not derived from a
Hamiltonian.  Pair 0 couples levels (0, 1) at ``f_12``; pair 1 couples
levels (1, 2) at ``f_23``.

Units: optical detunings MHz, spin detunings kHz, times microseconds.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "ConfigError",
    "LevelScheme",
    "InhomogeneousDistribution",
    "CorrelationModel",
    "IonClass",
    "EnsembleConfig",
    "EnsembleArrays",
    "thermal_populations",
    "sample_ensemble",
    "sample_ensemble_arrays",
    "derive_seed",
    "PAIR_LEVELS",
]

# levels coupled by each RF pair index
PAIR_LEVELS = ((0, 1), (1, 2))

# exact-summing thermal occupation of the three doublets
_THERMAL = np.array([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0])
_THERMAL[2] = 1.0 - _THERMAL[0] - _THERMAL[1]


class ConfigError(ValueError):
    """Invalid configuration value."""


@dataclass(frozen=True)
class LevelScheme:
    """Ground quadrupole transition frequencies, MHz."""

    f_12: float = 21.475
    f_23: float = 33.944
    excited_splittings: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.f_12 <= 0 or self.f_23 <= 0:
            raise ConfigError("transition frequencies must be positive")
        if self.f_12 == self.f_23:
            raise ConfigError("f_12 and f_23 must differ")

    def pair_frequency(self, pair: int) -> float:
        return (self.f_12, self.f_23)[pair]

    def nearest_pair(self, frequency_mhz: float) -> int:
        """RF pair addressed by a drive at ``frequency_mhz``."""
        return int(abs(frequency_mhz - self.f_23) < abs(frequency_mhz - self.f_12))


@dataclass(frozen=True)
class InhomogeneousDistribution:
    """Static frequency spread: 'lorentzian' or 'gaussian', center/fwhm in one unit.

    ``sampling='random'`` draws iid values; ``'stratified'`` places one
    value per equal-probability stratum (inverse CDF at midpoints, then a
    seeded shuffle).  Stratified ensembles represent the ~10^10-ion
    continuum without shot noise, which matters when a kHz-wide response
    would otherwise resolve the discreteness of the sampled line.
    """

    shape: str
    center: float
    fwhm: float
    sampling: str = "random"

    def __post_init__(self):
        if self.shape not in ("lorentzian", "gaussian"):
            raise ConfigError(f"unknown distribution shape {self.shape!r}")
        if self.sampling not in ("random", "stratified"):
            raise ConfigError(f"unknown sampling mode {self.sampling!r}")
        if not self.fwhm > 0:
            raise ConfigError("fwhm must be > 0")

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Draw n values; deterministic given the generator state."""
        return self.center + self.fwhm * _unit_deviates(self.shape, rng, n, self.sampling)

    def pdf(self, x: np.ndarray | float) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.shape == "lorentzian":
            g = self.fwhm / 2.0
            return (g / np.pi) / ((x - self.center) ** 2 + g * g)
        s = self.fwhm / (2.0 * np.sqrt(2.0 * np.log(2.0)))
        return np.exp(-0.5 * ((x - self.center) / s) ** 2) / (s * np.sqrt(2.0 * np.pi))


def _norm_ppf(u: np.ndarray) -> np.ndarray:
    """Standard normal quantile (Acklam's rational approximation, |rel err| < 2e-9)."""
    a = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
         1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
    b = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
         6.680131188771972e+01, -1.328068155288572e+01)
    c = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
         -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
    d = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
         3.754408661907416e+00)
    u = np.asarray(u, dtype=float)
    out = np.empty_like(u)
    p_low, p_high = 0.02425, 1.0 - 0.02425
    lo = u < p_low
    hi = u > p_high
    mid = ~(lo | hi)
    if np.any(mid):
        q = u[mid] - 0.5
        r = q * q
        out[mid] = ((((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q
                    / (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0))
    for m, sign, uu in ((lo, 1.0, u[lo]), (hi, -1.0, 1.0 - u[hi])):
        if np.any(m):
            q = np.sqrt(-2.0 * np.log(uu))
            out[m] = sign * ((((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5])
                             / ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0))
    return out


def _unit_quantile(shape: str, u: np.ndarray) -> np.ndarray:
    """Inverse CDF of the centered unit-FWHM line shape."""
    if shape == "lorentzian":
        return 0.5 * np.tan(np.pi * (u - 0.5))
    return _norm_ppf(u) / (2.0 * np.sqrt(2.0 * np.log(2.0)))


def _unit_deviates(shape: str, rng: np.random.Generator, n: int,
                   sampling: str = "random") -> np.ndarray:
    """Centered deviates of unit FWHM."""
    if sampling == "stratified":
        u = (np.arange(n) + 0.5) / n
        return rng.permutation(_unit_quantile(shape, u))
    if shape == "lorentzian":
        u = np.clip(rng.random(n), 1e-12, 1.0 - 1e-12)
        return _unit_quantile(shape, u)
    return rng.standard_normal(n) / (2.0 * np.sqrt(2.0 * np.log(2.0)))


@dataclass(frozen=True)
class CorrelationModel:
    """Spin-frequency dependence on optical detuning.

    ``gradient``: spin-center shift, kHz per GHz of optical detuning.
    ``broadening_profile``: optional piecewise-linear table
    [(optical detuning GHz, extra spin FWHM kHz), ...], interpolated in
    detuning; outside the table the edge value holds.  Default: no extra
    broadening.
    """

    gradient: float = -4.0
    broadening_profile: tuple[tuple[float, float], ...] = ()

    def center_shift_khz(self, delta_opt_mhz: np.ndarray | float) -> np.ndarray:
        return self.gradient * np.asarray(delta_opt_mhz, dtype=float) * 1e-3

    def extra_fwhm_khz(self, delta_opt_mhz: np.ndarray | float) -> np.ndarray:
        d_ghz = np.asarray(delta_opt_mhz, dtype=float) * 1e-3
        if not self.broadening_profile:
            return np.zeros_like(d_ghz)
        xs = np.array([p[0] for p in self.broadening_profile])
        ys = np.array([p[1] for p in self.broadening_profile])
        order = np.argsort(xs)
        return np.interp(d_ghz, xs[order], ys[order])


@dataclass
class IonClass:
    """One homogeneous sub-ensemble.

    ``populations`` spans the 3 ground doublets and sums to 1;
    ``bloch`` = (u, v, w) of the addressed pair, unnormalized (w is the
    raw population difference, |bloch| <= pair population <= 1).
    ``addressed_pair`` is -1 until an RF pulse selects one.
    """

    delta_opt: float  # MHz from optical line center
    delta_spin: float  # kHz from nominal spin transition
    weight: float
    populations: np.ndarray
    bloch: np.ndarray
    optical_level: int = 0  # ground level whose optical line sits at delta_opt
    addressed_pair: int = -1


@dataclass(frozen=True)
class EnsembleConfig:
    optical_dist: InhomogeneousDistribution
    spin_dist: InhomogeneousDistribution
    n_classes: int = 20000
    correlation: CorrelationModel = field(default_factory=CorrelationModel)
    rng_seed: int = 1
    isotope_fraction: float = 0.5
    levels: LevelScheme = field(default_factory=LevelScheme)
    # importance window (MHz): sample delta_opt over [lo, hi] with pdf
    # weights instead of drawing from the full optical line.  Required at
    # desk scale when only ions within a few MHz of the pit matter.
    optical_window: tuple[float, float] | None = None
    # concentrate the window sampling density around the window center with
    # a Cauchy profile of this HWHM (MHz); weights compensate exactly.
    # Readout lives within ~gamma_h of the pit center, so focusing there
    # buys orders of magnitude in effective ions per probe.
    optical_focus: float | None = None

    def __post_init__(self):
        if self.n_classes < 1:
            raise ConfigError("n_classes must be >= 1")
        if not 0.0 <= self.isotope_fraction <= 1.0:
            raise ConfigError("isotope_fraction must be in [0, 1]")
        if self.optical_window is not None and not self.optical_window[0] < self.optical_window[1]:
            raise ConfigError("optical_window must be (lo, hi) with lo < hi")
        if self.optical_focus is not None:
            if self.optical_window is None:
                raise ConfigError("optical_focus requires optical_window")
            if not self.optical_focus > 0:
                raise ConfigError("optical_focus must be > 0")


@dataclass
class EnsembleArrays:
    """Struct-of-arrays mirror of a list of IonClass, used by the engine."""

    delta_opt: np.ndarray  # (n,) MHz
    delta_spin: np.ndarray  # (n,) kHz
    weight: np.ndarray  # (n,)
    populations: np.ndarray  # (n, 3)
    uv: np.ndarray  # (n, 2) transverse Bloch of the addressed pair
    optical_level: np.ndarray  # (n,) int
    addressed_pair: np.ndarray  # (n,) int, -1 = none
    levels: LevelScheme

    @property
    def n(self) -> int:
        return self.delta_opt.shape[0]

    def copy(self) -> "EnsembleArrays":
        return EnsembleArrays(
            self.delta_opt.copy(), self.delta_spin.copy(), self.weight.copy(),
            self.populations.copy(), self.uv.copy(), self.optical_level.copy(),
            self.addressed_pair.copy(), self.levels,
        )

    def pair_w(self) -> np.ndarray:
        """Population difference p[hi] - p[lo] of each ion's addressed pair (0 if none)."""
        w = np.zeros(self.n)
        for pair, (a, b) in enumerate(PAIR_LEVELS):
            m = self.addressed_pair == pair
            w[m] = self.populations[m, b] - self.populations[m, a]
        return w

    def to_ion_classes(self) -> list[IonClass]:
        w = self.pair_w()
        return [
            IonClass(
                delta_opt=float(self.delta_opt[i]),
                delta_spin=float(self.delta_spin[i]),
                weight=float(self.weight[i]),
                populations=self.populations[i].copy(),
                bloch=np.array([self.uv[i, 0], self.uv[i, 1], w[i]]),
                optical_level=int(self.optical_level[i]),
                addressed_pair=int(self.addressed_pair[i]),
            )
            for i in range(self.n)
        ]


def thermal_populations() -> np.ndarray:
    """Equal occupation of the three doublets (4.2 K >> MHz splittings)."""
    return _THERMAL.copy()


def derive_seed(rng_seed: int, index: int) -> int:
    """Deterministic child seed for partition/sweep-point ``index``."""
    return int(np.random.SeedSequence((int(rng_seed), int(index))).generate_state(1)[0])


_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def sample_ensemble_arrays(cfg: EnsembleConfig) -> EnsembleArrays:
    rng = np.random.default_rng(np.random.SeedSequence(int(cfg.rng_seed)))
    n = cfg.n_classes
    stratified = cfg.spin_dist.sampling == "stratified"

    if cfg.optical_window is None:
        delta_opt = cfg.optical_dist.sample(rng, n)
        weight = np.ones(n)
    else:
        lo, hi = cfg.optical_window
        if cfg.optical_dist.sampling == "stratified":
            u = (np.arange(n) + 0.5) / n
        else:
            u = rng.random(n)
        if cfg.optical_focus is None:
            delta_opt = lo + (hi - lo) * u
            weight = cfg.optical_dist.pdf(delta_opt) * (hi - lo)
        else:
            # truncated-Cauchy sampling density centered on the window,
            # importance weights = target pdf / sampling density
            s = cfg.optical_focus
            mid = 0.5 * (lo + hi)
            f_lo = math.atan((lo - mid) / s) / math.pi + 0.5
            f_hi = math.atan((hi - mid) / s) / math.pi + 0.5
            delta_opt = mid + s * np.tan(np.pi * (f_lo + (f_hi - f_lo) * u - 0.5))
            q = (s / np.pi) / ((delta_opt - mid) ** 2 + s * s) / (f_hi - f_lo)
            weight = cfg.optical_dist.pdf(delta_opt) / q

    if stratified:
        # pair spin strata to optical rank via a golden-ratio Kronecker
        # sequence: any narrow optical slice (e.g. the probe's view, a few
        # hundred kHz of a GHz-wide line) then carries a low-discrepancy
        # spin sample instead of a shot-noisy subset
        order = np.argsort(delta_opt, kind="stable")
        u = np.empty(n)
        u[order] = (0.5 / n + _GOLDEN * np.arange(n)) % 1.0
        spin_dev = _unit_quantile(cfg.spin_dist.shape, u)
    else:
        spin_dev = _unit_deviates(cfg.spin_dist.shape, rng, n, cfg.spin_dist.sampling)
    fwhm_eff = cfg.spin_dist.fwhm + cfg.correlation.extra_fwhm_khz(delta_opt)
    delta_spin = (
        cfg.spin_dist.center
        + spin_dev * fwhm_eff
        + cfg.correlation.center_shift_khz(delta_opt)
    )

    pops = np.tile(thermal_populations(), (n, 1))
    if stratified:
        optical_level = np.empty(n, dtype=np.int64)
        optical_level[np.argsort(delta_opt, kind="stable")] = np.arange(n) % 3
    else:
        optical_level = np.arange(n) % 3
    return EnsembleArrays(
        delta_opt=delta_opt,
        delta_spin=delta_spin,
        weight=weight,
        populations=pops,
        uv=np.zeros((n, 2)),
        optical_level=optical_level,
        addressed_pair=np.full(n, -1, dtype=np.int64),
        levels=cfg.levels,
    )


def sample_ensemble(cfg: EnsembleConfig) -> list[IonClass]:
    """Draw the discretized inhomogeneous ensemble; bit-identical per (cfg, seed)."""
    return sample_ensemble_arrays(cfg).to_ion_classes()
