"""Simulation engine: optical pumping, coherent RF Bloch dynamics,
Ornstein-Uhlenbeck dephasing, spin relaxation, optical observables.

Internal unit system: frequencies MHz, times us (so a detuning in MHz is
directly cycles per us); the OU bath coupling ``ou_sigma`` is rad/s and
``ou_tau_c``/``t1_*`` are seconds, matching how those numbers are quoted.

RF pulses apply the exact constant-field rotation about
(Omega cos(phi), Omega sin(phi), Delta), so off-resonant saturation and
power broadening emerge from the dynamics rather than a phenomenological
term.  Free evolution precesses the transverse components and relaxes
populations toward thermal with a two-channel double-exponential kernel
applied per event.  OU dephasing acts only in Monte Carlo mode; the
analytic closed form (``ou_visibility_analytic``) is the companion
description used by the experiment layer and the oracle suite.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .levels import (
    PAIR_LEVELS,
    ConfigError,
    EnsembleArrays,
    EnsembleConfig,
    LevelScheme,
    sample_ensemble_arrays,
    thermal_populations,
)
from .pulses import OpticalPulse, PulseSequence, ReadoutWindow, RfPulse, Wait

__all__ = [
    "NoiseModel",
    "OpticalModel",
    "SimState",
    "b_khz_to_sigma",
    "sigma_to_b_khz",
    "make_state",
    "apply_rf_pulse",
    "apply_optical_pulse",
    "apply_wait",
    "apply_event",
    "simulate_sequence",
    "simulate_signals",
    "mc_pair_visibility",
    "ou_trajectory",
    "ou_visibility_analytic",
    "ou_time_to_1e",
    "mc_cpmg_visibility",
    "optical_fid_signal",
    "photon_echo_amplitude",
]

# minimum OU sub-steps per wait interval; dt alone under-resolves short
# refocusing intervals (tau ~ tau_c/100) and biases echo statistics
_MIN_WAIT_SUBSTEPS = 64

_POP_TOL = 1e-12
_POP_HARD = 1e-9


def b_khz_to_sigma(b_khz: float) -> float:
    """Bath coupling quoted in kHz -> sigma in rad/s."""
    return 2.0 * math.pi * 1e3 * b_khz


def sigma_to_b_khz(sigma: float) -> float:
    return sigma / (2.0 * math.pi * 1e3)


def _default_branching() -> np.ndarray:
    # decay from each level feeds the two other levels equally
    b = np.full((3, 3), 0.5)
    np.fill_diagonal(b, 0.0)
    return b


@dataclass(frozen=True)
class NoiseModel:
    """OU bath (sigma rad/s, tau_c s) plus two-channel T1 relaxation."""

    ou_sigma: float = 0.0
    ou_tau_c: float = 13e-3
    t1_short: float = 4.4
    t1_long: float = 120.0
    t1_weight: float = 0.5
    mode: str = "analytic"  # or "montecarlo"
    n_trajectories: int = 2000
    dt: float | None = None  # s; default tau_c/100

    def __post_init__(self):
        if self.ou_sigma < 0:
            raise ConfigError("ou_sigma must be >= 0")
        if not self.ou_tau_c > 0:
            raise ConfigError("ou_tau_c must be > 0")
        if self.t1_short > self.t1_long:
            raise ConfigError("t1_short must be <= t1_long")
        if not 0.0 <= self.t1_weight <= 1.0:
            raise ConfigError("t1_weight must be in [0, 1]")
        if self.mode not in ("analytic", "montecarlo"):
            raise ConfigError(f"unknown noise mode {self.mode!r}")
        if self.mode == "montecarlo":
            if self.n_trajectories < 1:
                raise ConfigError("n_trajectories must be >= 1")
            if not self.dt_s < self.ou_tau_c / 10.0:
                raise ConfigError("MonteCarlo dt must be < ou_tau_c/10")

    @property
    def dt_s(self) -> float:
        return self.ou_tau_c / 100.0 if self.dt is None else self.dt

    @property
    def monte_carlo(self) -> bool:
        return self.mode == "montecarlo"

    def t1_kernel(self, t_us: np.ndarray | float) -> np.ndarray | float:
        """Fraction of the deviation from thermal that survives a wait."""
        t = np.asarray(t_us, dtype=float) * 1e-6
        return (self.t1_weight * np.exp(-t / self.t1_short)
                + (1.0 - self.t1_weight) * np.exp(-t / self.t1_long))


@dataclass(frozen=True)
class OpticalModel:
    """Optical line and pumping parameters."""

    gamma_h: float = 310.0  # homogeneous linewidth, kHz
    t2_opt: float = 2.13  # us
    t2_star_opt: float = 0.77  # us
    pump_efficiency: float = 3.2  # rate per (power unit * s) at unit overlap
    branching: np.ndarray = field(default_factory=_default_branching)

    def __post_init__(self):
        if not self.gamma_h > 0:
            raise ConfigError("gamma_h must be > 0")
        b = np.asarray(self.branching, dtype=float)
        if b.shape != (3, 3) or np.any(b < 0) or np.any(np.abs(b.sum(axis=1) - 1.0) > _POP_TOL):
            raise ConfigError("branching must be 3x3 row-stochastic with entries >= 0")
        object.__setattr__(self, "branching", b)

    def chirp_overlap(self, line_mhz: np.ndarray, start_mhz: float, stop_mhz: float) -> np.ndarray:
        """Time-averaged peak-1 Lorentzian overlap of lines against a linear chirp."""
        g = self.gamma_h * 1e-3 / 2.0  # HWHM in MHz
        line = np.asarray(line_mhz, dtype=float)
        if stop_mhz == start_mhz:
            return g * g / ((line - start_mhz) ** 2 + g * g)
        span = stop_mhz - start_mhz
        integral = g * (np.arctan((line - start_mhz) / g) - np.arctan((line - stop_mhz) / g))
        return np.abs(integral / span)


@dataclass
class SimState:
    """Mutable simulation state.

    In Monte Carlo mode the ensemble is tiled ``n_trajectories`` times
    (trajectory-major lanes) and ``ou_delta`` carries the current OU
    value (rad/s) per lane.
    """

    ions: EnsembleArrays
    noise: NoiseModel
    optics: OpticalModel
    clock: float = 0.0  # us
    rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0))
    n_trajectories: int = 1
    ou_delta: np.ndarray | None = None
    # rotating frame of the most recent RF pulse; waits precess in it
    frame_frequency: float | None = None

    @property
    def n_per_traj(self) -> int:
        return self.ions.n // self.n_trajectories

    def as_ion_classes(self):
        return self.ions.to_ion_classes()


def make_state(cfg: EnsembleConfig, noise: NoiseModel, optics: OpticalModel,
               seed: int | None = None, dynamics_seed: int | None = None) -> SimState:
    """Sample the ensemble and initialize the dynamic state.

    ``seed`` overrides the ensemble sampling seed; ``dynamics_seed``
    seeds only the stochastic dynamics (OU draws), so sweeps can vary the
    noise realization per point over a fixed ensemble.
    """
    if seed is not None:
        cfg = replace(cfg, rng_seed=int(seed))
    base = sample_ensemble_arrays(cfg)
    if dynamics_seed is None:
        dynamics_seed = cfg.rng_seed
    rng = np.random.default_rng(np.random.SeedSequence((int(dynamics_seed), 0x0D)))
    if noise.monte_carlo:
        k = noise.n_trajectories
        ions = EnsembleArrays(
            delta_opt=np.tile(base.delta_opt, k),
            delta_spin=np.tile(base.delta_spin, k),
            weight=np.tile(base.weight, k),
            populations=np.tile(base.populations, (k, 1)),
            uv=np.tile(base.uv, (k, 1)),
            optical_level=np.tile(base.optical_level, k),
            addressed_pair=np.tile(base.addressed_pair, k),
            levels=base.levels,
        )
        ou = rng.standard_normal(ions.n) * noise.ou_sigma  # stationary start
        return SimState(ions, noise, optics, rng=rng, n_trajectories=k, ou_delta=ou)
    return SimState(base, noise, optics, rng=rng)


def _check_populations(p: np.ndarray):
    bad = p < -_POP_HARD
    if np.any(bad):
        raise FloatingPointError(f"population went negative: min {p.min():.3e}")
    np.clip(p, 0.0, None, out=p)
    s = p.sum(axis=1)
    if np.any(np.abs(s - 1.0) > _POP_HARD):
        raise FloatingPointError("population sum drifted from 1")


def _rotate(uvw: np.ndarray, bx: np.ndarray, by: np.ndarray, bz: np.ndarray,
            t_us: float) -> np.ndarray:
    """Exact rotation of Bloch rows about the constant field (bx,by,bz) [MHz]."""
    mag = np.sqrt(bx * bx + by * by + bz * bz)
    angle = 2.0 * math.pi * mag * t_us
    safe = np.where(mag == 0.0, 1.0, mag)
    nx, ny, nz = bx / safe, by / safe, bz / safe
    c, s = np.cos(angle), np.sin(angle)
    u, v, w = uvw[:, 0], uvw[:, 1], uvw[:, 2]
    ndot = nx * u + ny * v + nz * w
    k = 1.0 - c
    return np.stack([
        u * c + (ny * w - nz * v) * s + nx * ndot * k,
        v * c + (nz * u - nx * w) * s + ny * ndot * k,
        w * c + (nx * v - ny * u) * s + nz * ndot * k,
    ], axis=1)


def _ou_step(state: SimState, h_us: float):
    """Advance every lane's OU value by h (exact discretization)."""
    tau_us = state.noise.ou_tau_c * 1e6
    alpha = math.exp(-h_us / tau_us)
    sd = state.noise.ou_sigma * math.sqrt(max(0.0, 1.0 - alpha * alpha))
    state.ou_delta = state.ou_delta * alpha + sd * state.rng.standard_normal(state.ions.n)


def _ou_delta_mhz(state: SimState) -> np.ndarray | float:
    if state.ou_delta is None:
        return 0.0
    return state.ou_delta / (2.0 * math.pi) * 1e-6  # rad/s -> MHz


def apply_rf_pulse(state: SimState, pulse: RfPulse, k_rabi: float) -> SimState:
    """Drive the spin pair nearest ``pulse.frequency`` for its duration.

    The Bloch vector rotates about (Omega cos phi, Omega sin phi, Delta)
    with Omega = k_rabi sqrt(P); populations of the addressed pair follow
    the rotated w, the spectator level is untouched.  In Monte Carlo mode
    Delta additionally includes the OU value, piecewise-constant over
    sub-steps of at most ``noise.dt``.
    """
    ions = state.ions
    pair = ions.levels.nearest_pair(pulse.frequency)
    a, b = PAIR_LEVELS[pair]

    # entering a different pair drops the old coherence
    switched = ions.addressed_pair != pair
    ions.uv[switched] = 0.0
    ions.addressed_pair[:] = pair

    omega_mhz = k_rabi * math.sqrt(pulse.power) * 1e-3
    det_mhz = pulse.frequency - (ions.levels.pair_frequency(pair) + ions.delta_spin * 1e-3)
    phi = math.radians(pulse.phase)

    w = ions.populations[:, b] - ions.populations[:, a]
    uvw = np.concatenate([ions.uv, w[:, None]], axis=1)

    if state.noise.monte_carlo and state.noise.ou_sigma > 0:
        n_sub = max(1, math.ceil(pulse.duration / (state.noise.dt_s * 1e6)))
        h = pulse.duration / n_sub
        for _ in range(n_sub):
            bz = det_mhz + _ou_delta_mhz(state)
            uvw = _rotate(uvw, np.full_like(bz, omega_mhz * math.cos(phi)),
                          np.full_like(bz, omega_mhz * math.sin(phi)), bz, h)
            _ou_step(state, h)
    else:
        bx = np.full_like(det_mhz, omega_mhz * math.cos(phi))
        by = np.full_like(det_mhz, omega_mhz * math.sin(phi))
        uvw = _rotate(uvw, bx, by, det_mhz, pulse.duration)

    pair_sum = ions.populations[:, a] + ions.populations[:, b]
    ions.uv[:] = uvw[:, :2]
    ions.populations[:, a] = (pair_sum - uvw[:, 2]) / 2.0
    ions.populations[:, b] = (pair_sum + uvw[:, 2]) / 2.0
    _check_populations(ions.populations)
    state.clock += pulse.duration
    state.frame_frequency = pulse.frequency
    return state


def apply_wait(state: SimState, wait: Wait, noise: NoiseModel | None = None) -> SimState:
    """Free evolution: transverse precession by the static detuning (plus
    the OU phase in Monte Carlo mode) and double-exponential relaxation of
    populations toward thermal; the transverse components are damped by
    the same kernel."""
    noise = state.noise if noise is None else noise
    ions = state.ions
    t = wait.duration

    has_coherence = np.any(ions.uv)
    if has_coherence:
        # static precession in the frame of the last RF pulse, exact over t
        det_mhz = np.zeros(ions.n)
        for pair in (0, 1):
            m = ions.addressed_pair == pair
            if np.any(m):
                frame = state.frame_frequency
                if frame is None:
                    frame = ions.levels.pair_frequency(pair)
                det_mhz[m] = frame - (ions.levels.pair_frequency(pair)
                                      + ions.delta_spin[m] * 1e-3)
        phase = 2.0 * math.pi * det_mhz * t
        if noise.monte_carlo and noise.ou_sigma > 0:
            n_sub = max(_MIN_WAIT_SUBSTEPS, math.ceil(t / (noise.dt_s * 1e6)))
            h = t / n_sub
            ou_phase = np.zeros(ions.n)
            for _ in range(n_sub):
                ou_phase += state.ou_delta * h * 1e-6  # rad
                _ou_step(state, h)
            phase = phase + ou_phase
        c, s = np.cos(phase), np.sin(phase)
        u = ions.uv[:, 0].copy()
        v = ions.uv[:, 1].copy()
        ions.uv[:, 0] = u * c - v * s
        ions.uv[:, 1] = u * s + v * c
    elif noise.monte_carlo and noise.ou_sigma > 0:
        _ou_advance_exact(state, t)

    g = noise.t1_kernel(t)
    eq = thermal_populations()
    ions.populations[:] = eq[None, :] + (ions.populations - eq[None, :]) * g
    ions.uv *= g
    _check_populations(ions.populations)
    state.clock += t
    return state


def _ou_advance_exact(state: SimState, t_us: float):
    """Jump the OU state over an interval with no coherence to dephase."""
    tau_us = state.noise.ou_tau_c * 1e6
    alpha = math.exp(-min(t_us / tau_us, 700.0))
    sd = state.noise.ou_sigma * math.sqrt(max(0.0, 1.0 - alpha * alpha))
    state.ou_delta = state.ou_delta * alpha + sd * state.rng.standard_normal(state.ions.n)


def _optical_line_mhz(ions: EnsembleArrays) -> np.ndarray:
    """Detuning of each ion's addressed optical line (== delta_opt)."""
    return ions.delta_opt


def apply_optical_pulse(state: SimState, pulse: OpticalPulse,
                        optics: OpticalModel | None = None) -> tuple[SimState, float]:
    """Pump or probe through each ion's optical line.

    Burn/probe pumping empties the ion's addressed ground level at rate
    pump_efficiency * power * overlap, redistributing via the branching
    matrix; erase relaxes populations symmetrically toward thermal.  The
    returned signal is the overlap- and weight-summed population of the
    addressed level (trajectory-averaged in Monte Carlo mode); probes
    with zero power leave the state unchanged.
    """
    optics = state.optics if optics is None else optics
    ions = state.ions
    ov = optics.chirp_overlap(_optical_line_mhz(ions), pulse.detuning_start, pulse.detuning_stop)
    duration_s = pulse.duration * 1e-6

    signal = 0.0
    if pulse.role in ("probe",):
        lane = ions.weight * ov * ions.populations[np.arange(ions.n), ions.optical_level]
        signal = float(lane.sum() / state.n_trajectories)

    rate = optics.pump_efficiency * pulse.power * ov * duration_s
    if pulse.role == "erase":
        if pulse.power > 0:
            decay = np.exp(-rate)
            eq = thermal_populations()
            ions.populations[:] = eq[None, :] + (ions.populations - eq[None, :]) * decay[:, None]
            ions.uv *= decay[:, None]
    elif pulse.power > 0:  # burn, or probe with pumping
        lvl = ions.optical_level
        rows = np.arange(ions.n)
        b_div = 1.0 - optics.branching[lvl, lvl]
        survive = np.exp(-rate * b_div)
        moved = ions.populations[rows, lvl] * (1.0 - survive)
        ions.populations[rows, lvl] -= moved
        for m in range(3):
            frac = optics.branching[lvl, m] / np.where(b_div > 0, b_div, 1.0)
            ions.populations[:, m] += np.where(m == lvl, 0.0, moved * frac)
        # pumping out of a coherent pair level damps the coherence
        for pair, (a, b) in enumerate(PAIR_LEVELS):
            m = (ions.addressed_pair == pair) & ((lvl == a) | (lvl == b))
            ions.uv[m] *= np.sqrt(survive[m])[:, None]

    if state.noise.monte_carlo and state.noise.ou_sigma > 0:
        _ou_advance_exact(state, pulse.duration)

    _check_populations(ions.populations)
    state.clock += pulse.duration
    return state, signal


def _apply_readout(state: SimState, ev: ReadoutWindow) -> float:
    ions = state.ions
    ov = state.optics.chirp_overlap(_optical_line_mhz(ions), ev.detuning, ev.detuning)
    lane = ions.weight * ov * ions.populations[np.arange(ions.n), ions.optical_level]
    if state.noise.monte_carlo and state.noise.ou_sigma > 0:
        _ou_advance_exact(state, ev.duration)
    state.clock += ev.duration
    return float(lane.sum() / state.n_trajectories)


def apply_event(state: SimState, ev, k_rabi: float) -> tuple[SimState, float | None]:
    if isinstance(ev, RfPulse):
        return apply_rf_pulse(state, ev, k_rabi), None
    if isinstance(ev, Wait):
        return apply_wait(state, ev, state.noise), None
    if isinstance(ev, OpticalPulse):
        state, sig = apply_optical_pulse(state, ev, state.optics)
        return state, (sig if ev.role == "probe" else None)
    if isinstance(ev, ReadoutWindow):
        return state, _apply_readout(state, ev)
    raise TypeError(f"unknown event {ev!r}")


def simulate_sequence(seq: PulseSequence, cfg: EnsembleConfig, noise: NoiseModel,
                      optics: OpticalModel, k_rabi: float = 1.48,
                      seed: int | None = None,
                      state: SimState | None = None) -> list[tuple[int, float]]:
    """Fold the sequence over a fresh (or supplied) state; every probe or
    readout window appends (event_index, signal).  Deterministic per seed;
    Monte Carlo signals are trajectory averages."""
    if state is None:
        state = make_state(cfg, noise, optics, seed=seed)
    out = []
    for idx, ev in enumerate(seq.events):
        state, sig = apply_event(state, ev, k_rabi)
        if sig is not None:
            out.append((idx, sig))
    return out


def simulate_signals(seq: PulseSequence, cfg: EnsembleConfig, noise: NoiseModel,
                     optics: OpticalModel, k_rabi: float = 1.48,
                     seed: int | None = None) -> list[float]:
    """Signals only, in probe order."""
    return [s for _, s in simulate_sequence(seq, cfg, noise, optics, k_rabi, seed=seed)]


def mc_pair_visibility(seq_plus: PulseSequence, seq_minus: PulseSequence,
                       cfg: EnsembleConfig, noise: NoiseModel, optics: OpticalModel,
                       k_rabi: float = 1.48, seed: int | None = None,
                       dynamics_seed: int | None = None,
                       probe_index: int = -1) -> tuple[float, float]:
    """Per-trajectory paired visibility of the two final-phase arms.

    Both arms replay identical OU realizations (same seed), the lab's
    interleaved-acquisition analogue; returns (mean, standard error) of
    (S+ - S-)/(S+ + S-) over trajectories.  Requires Monte Carlo mode.
    """
    if not noise.monte_carlo:
        raise ConfigError("mc_pair_visibility requires MonteCarlo noise mode")
    lanes = []
    for seq in (seq_plus, seq_minus):
        state = make_state(cfg, noise, optics, seed=seed, dynamics_seed=dynamics_seed)
        n_per = state.n_per_traj
        lane_signals = []
        for ev in seq.events:
            if isinstance(ev, OpticalPulse) and ev.role == "probe":
                ov = state.optics.chirp_overlap(_optical_line_mhz(state.ions),
                                                ev.detuning_start, ev.detuning_stop)
                per = state.ions.weight * ov * state.ions.populations[
                    np.arange(state.ions.n), state.ions.optical_level]
                lane_signals.append(per.reshape(noise.n_trajectories, n_per).sum(axis=1))
            state, _ = apply_event(state, ev, k_rabi)
        lanes.append(lane_signals[probe_index] if lane_signals else None)
    sp, sm = lanes
    if sp is None or sm is None:
        raise ConfigError("sequences carry no probe events")
    denom = sp + sm
    ok = denom != 0
    v = np.where(ok, (sp - sm) / np.where(ok, denom, 1.0), 0.0)
    n = v.size
    if n < 2:
        return float(v.mean()), float("inf")
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(n))


# ---------------------------------------------------------------------------
# Ornstein-Uhlenbeck bath: trajectories and the closed-form visibility

def ou_trajectory(noise: NoiseModel, duration: float, dt: float,
                  rng: np.random.Generator) -> np.ndarray:
    """Stationary OU samples on a dt grid covering ``duration`` (seconds).

    Exact discretization: delta_{n+1} = delta_n e^{-dt/tau_c}
    + sigma sqrt(1 - e^{-2 dt/tau_c}) xi_n, with delta_0 ~ N(0, sigma^2).
    """
    if not dt > 0:
        raise ConfigError("dt must be > 0")
    n_steps = int(math.floor(duration / dt + 1e-9))
    out = np.empty(n_steps + 1)
    sigma, tau_c = noise.ou_sigma, noise.ou_tau_c
    out[0] = rng.standard_normal() * sigma
    alpha = math.exp(-dt / tau_c)
    sd = sigma * math.sqrt(1.0 - alpha * alpha)
    noise_draws = rng.standard_normal(n_steps)
    for i in range(n_steps):
        out[i + 1] = out[i] * alpha + sd * noise_draws[i]
    return out


def _sech(x: np.ndarray) -> np.ndarray:
    ax = np.abs(x)
    return 2.0 * np.exp(-ax) / (1.0 + np.exp(-2.0 * ax))


def ou_visibility_analytic(n: int, tau: float | np.ndarray, sigma: float,
                           tau_c: float, amplitude: float = 1.0) -> float | np.ndarray:
    """Closed-form CPMG visibility under an OU bath.

    ``tau`` is the inter-pulse period (total evolution t = n * tau), in
    the same time unit as ``tau_c``; a Hahn echo with half-delay T is
    n = 1, tau = 2 T.
    """
    if n < 1:
        raise ConfigError("n must be >= 1")
    tau_arr = np.asarray(tau, dtype=float)
    if np.any(tau_arr <= 0):
        raise ConfigError("tau must be > 0")
    t = n * tau_arr
    x = tau_arr / (2.0 * tau_c)
    bracket1 = (1.0 / tau_c - (2.0 / tau_arr) * np.tanh(x)) * t
    bracket2 = (1.0 + (-1.0) ** (n + 1) * np.exp(-t / tau_c)) * (1.0 - _sech(x)) ** 2
    chi = (sigma * tau_c) ** 2 * (bracket1 - bracket2)
    result = amplitude * np.exp(-chi)
    return float(result) if np.isscalar(tau) else result


def ou_time_to_1e(n: int, sigma: float, tau_c: float) -> float:
    """Total evolution time where the closed-form visibility hits 1/e."""
    if sigma <= 0:
        return math.inf
    lo, hi = 1e-12, 1e-9
    while ou_visibility_analytic(n, hi / n, sigma, tau_c) > math.exp(-1.0):
        hi *= 2.0
        if hi > 1e12:
            return math.inf
    lo = hi / 2.0
    for _ in range(200):
        mid = math.sqrt(lo * hi)
        if ou_visibility_analytic(n, mid / n, sigma, tau_c) > math.exp(-1.0):
            lo = mid
        else:
            hi = mid
    return math.sqrt(lo * hi)


def mc_cpmg_visibility(noise: NoiseModel, n: int, tau: float,
                       seed: int = 0) -> tuple[float, float]:
    """Monte Carlo CPMG visibility with ideal (instantaneous) pulses.

    Plays the +-1 toggling pattern of n refocusing pulses over OU
    trajectories and returns (mean, standard error) of cos(net phase).
    This is the dedicated oracle path checked against
    ``ou_visibility_analytic``.
    """
    if not noise.monte_carlo:
        raise ConfigError("mc_cpmg_visibility requires MonteCarlo noise mode")
    n_traj = noise.n_trajectories
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), 0x0E)))
    sigma, tau_c = noise.ou_sigma, noise.ou_tau_c
    delta = rng.standard_normal(n_traj) * sigma
    phase = np.zeros(n_traj)
    sign = 1.0
    intervals = [tau / 2.0] + [tau] * (n - 1) + [tau / 2.0]
    for iv in intervals:
        n_sub = max(_MIN_WAIT_SUBSTEPS, math.ceil(iv / noise.dt_s))
        h = iv / n_sub
        alpha = math.exp(-h / tau_c)
        sd = sigma * math.sqrt(1.0 - alpha * alpha)
        for _ in range(n_sub):
            phase += sign * delta * h
            delta = delta * alpha + sd * rng.standard_normal(n_traj)
        sign = -sign
    c = np.cos(phase)
    if n_traj < 2:
        return float(c.mean()), math.inf
    return float(c.mean()), float(c.std(ddof=1) / math.sqrt(n_traj))


# ---------------------------------------------------------------------------
# optical coherence observables

def optical_fid_signal(t_grid: np.ndarray | list[float], t2_star: float,
                       f_het: float) -> np.ndarray:
    """Heterodyne FID: exp(-t/T2*) cos(2 pi f_het t), t in us, f in MHz."""
    if not t2_star > 0:
        raise ConfigError("t2_star must be > 0")
    t = np.asarray(t_grid, dtype=float)
    return np.exp(-t / t2_star) * np.cos(2.0 * math.pi * f_het * t)


def photon_echo_amplitude(two_tau_grid: np.ndarray | list[float], t2_opt: float,
                          a0: float = 1.0) -> np.ndarray:
    """Two-pulse echo amplitude A0 exp(-(2 tau)/T2) on a 2*tau grid (us)."""
    if not t2_opt > 0:
        raise ConfigError("t2_opt must be > 0")
    tt = np.asarray(two_tau_grid, dtype=float)
    return a0 * np.exp(-tt / t2_opt)
