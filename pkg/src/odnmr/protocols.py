"""Prebuilt pulse sequences for every experiment protocol.

Every builder emits pit preparation first and the erase block last
unless ``bare=True`` (unit-test mode: just the core events).  The pi
pulse duration convention is 1/(2*Omega_R) with Omega_R = k*sqrt(P) in
cycles per second, so 14 kHz -> 35.71 us.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

from .pulses import OpticalPulse, PulseSequence, RfPulse, SequenceError, Wait

__all__ = [
    "ProtocolOptions",
    "rabi_rate_khz",
    "pi_duration_us",
    "build_pit_preparation",
    "build_erase",
    "build_rabi",
    "build_hahn_echo",
    "build_cpmg",
    "build_odnmr_scan",
    "build_spin_holeburn",
]

PIT_SPAN_MHZ = 10.0
PIT_CHIRP_MS = 300.0
PIT_REPEATS = 20
ERASE_SPAN_MHZ = 100.0
REFERENCE_SPAN_MHZ = 15.0


@dataclass(frozen=True)
class ProtocolOptions:
    """Shared builder knobs; defaults follow the measured protocols."""

    k_rabi: float = 1.48  # kHz per sqrt(W)
    burn_power: float = 1.0
    erase_power: float = 1.0
    probe_power: float = 0.0  # 0 = ideal non-destructive probe
    probe_duration: float = 1000.0  # us
    optical_center: float = 0.0  # MHz, pit center in the optical line
    hahn_pi_phase: float = 0.0  # same-axis by default
    bare: bool = False


DEFAULTS = ProtocolOptions()


def rabi_rate_khz(power_w: float, k_rabi: float = DEFAULTS.k_rabi) -> float:
    """Omega_R = k * sqrt(P)."""
    return k_rabi * power_w ** 0.5


def pi_duration_us(power_w: float, k_rabi: float = DEFAULTS.k_rabi) -> float:
    """Half period of the Rabi rate: 1/(2 k sqrt(P)), in us."""
    omega_khz = rabi_rate_khz(power_w, k_rabi)
    if omega_khz <= 0:
        raise SequenceError("pi pulse requires positive RF power")
    return 1e3 / (2.0 * omega_khz)


def _pit_events(opt: ProtocolOptions) -> list:
    c = opt.optical_center
    half = PIT_SPAN_MHZ / 2.0
    return [
        OpticalPulse(c - half, c + half, opt.burn_power, PIT_CHIRP_MS * 1e3, "burn")
        for _ in range(PIT_REPEATS)
    ]


def _erase_events(opt: ProtocolOptions) -> list:
    c = opt.optical_center
    half = ERASE_SPAN_MHZ / 2.0
    return [
        OpticalPulse(c - half, c + half, opt.erase_power, PIT_CHIRP_MS * 1e3, "erase")
        for _ in range(PIT_REPEATS)
    ]


def _reference_probe(opt: ProtocolOptions) -> OpticalPulse:
    c = opt.optical_center
    half = REFERENCE_SPAN_MHZ / 2.0
    return OpticalPulse(c - half, c + half, opt.probe_power, opt.probe_duration, "probe")


def _center_probe(opt: ProtocolOptions) -> OpticalPulse:
    c = opt.optical_center
    return OpticalPulse(c, c, opt.probe_power, opt.probe_duration, "probe")


def _wrap(core: list, opt: ProtocolOptions, label: str) -> PulseSequence:
    if opt.bare:
        return PulseSequence(tuple(core), label=label)
    events = _pit_events(opt) + [_reference_probe(opt)] + core + [_center_probe(opt)] + _erase_events(opt)
    return PulseSequence(tuple(events), label=label)


def build_pit_preparation(opt: ProtocolOptions = DEFAULTS) -> PulseSequence:
    """20 burn chirps, 10 MHz span / 300 ms each."""
    return PulseSequence(tuple(_pit_events(opt)), label="pit-preparation")


def build_erase(opt: ProtocolOptions = DEFAULTS) -> PulseSequence:
    """20 erase chirps, 100 MHz span / 300 ms each."""
    return PulseSequence(tuple(_erase_events(opt)), label="erase")


def build_rabi(duration: float, frequency: float, power: float,
               opt: ProtocolOptions = DEFAULTS) -> PulseSequence:
    """Single RF drive pulse of the given duration (us) between probes."""
    if not duration > 0:
        raise SequenceError("rabi pulse duration must be > 0")
    core = [RfPulse(frequency, power, 0.0, duration)]
    return _wrap(core, opt, label=f"rabi-{duration}us")


def build_hahn_echo(tau: float, frequency: float, power: float, final_phase: float,
                    opt: ProtocolOptions = DEFAULTS) -> PulseSequence:
    """pi/2 - tau - pi - tau - pi/2(final_phase); tau in us."""
    t_pi = pi_duration_us(power, opt.k_rabi)
    if tau <= t_pi:
        raise SequenceError(f"tau = {tau} us must exceed the pi duration {t_pi:.3f} us")
    core = [
        RfPulse(frequency, power, 0.0, t_pi / 2.0),
        Wait(tau),
        RfPulse(frequency, power, opt.hahn_pi_phase, t_pi),
        Wait(tau),
        RfPulse(frequency, power, final_phase, t_pi / 2.0),
    ]
    return _wrap(core, opt, label=f"hahn-tau{tau}-ph{final_phase}")


def build_cpmg(n: int, tau: float, frequency: float, power: float, final_phase: float,
               opt: ProtocolOptions = DEFAULTS) -> PulseSequence:
    """pi/2(0) - [tau/2 - pi(90) - tau/2] x n - pi/2(final_phase); tau in us."""
    if n < 1:
        raise SequenceError("cpmg needs n >= 1")
    t_pi = pi_duration_us(power, opt.k_rabi)
    if tau / 2.0 <= t_pi:
        raise SequenceError(f"tau/2 = {tau / 2.0} us must exceed the pi duration {t_pi:.3f} us")
    core = [RfPulse(frequency, power, 0.0, t_pi / 2.0)]
    for _ in range(n):
        core += [Wait(tau / 2.0), RfPulse(frequency, power, 90.0, t_pi), Wait(tau / 2.0)]
    core.append(RfPulse(frequency, power, final_phase, t_pi / 2.0))
    return _wrap(core, opt, label=f"cpmg{n}-tau{tau}-ph{final_phase}")


def build_odnmr_scan(f_list: list[float], rf_power: float, rf_duration: float = 1000.0,
                     opt: ProtocolOptions = DEFAULTS) -> list[PulseSequence]:
    """Point-by-point spin spectrum: one sequence per RF frequency (MHz)."""
    if not f_list:
        raise SequenceError("f_list must be non-empty")
    return [
        _wrap([RfPulse(f, rf_power, 0.0, rf_duration)], opt, label=f"odnmr-{f}MHz")
        for f in f_list
    ]


def build_spin_holeburn(burn_freq: float, burn_power: float, scan: list[float],
                        rf_power: float = 92.0, rf_duration: float = 1000.0,
                        opt: ProtocolOptions = DEFAULTS) -> list[PulseSequence]:
    """ODNMR scan with a resonant pi pulse first, removing one spin class."""
    if not scan:
        raise SequenceError("scan list must be non-empty")
    out = []
    for f in scan:
        core: list = []
        if burn_power > 0:
            core.append(RfPulse(burn_freq, burn_power, 0.0,
                                pi_duration_us(burn_power, opt.k_rabi)))
        core.append(RfPulse(f, rf_power, 0.0, rf_duration))
        out.append(_wrap(core, opt, label=f"holeburn-{f}MHz"))
    return out
