"""End-to-end protocol runners: sweep generation, simulation, and fits.

Each experiment kind regenerates one measurement protocol at desk scale:
optical line scan, spectral hole burning, optical FID, photon echo, pit
lifetime, ODNMR spectra, spin hole burning, the spin-vs-optical
correlation scan, Rabi oscillations and the sqrt(P) law, Hahn echo, CPMG,
and the coherence-time scaling study.

Runners simulate the shared protocol prefix (pit preparation + reference
probe) once per experiment and restore that checkpoint for every sweep
point; this is exactly equivalent to running prepare/erase around every
point (erase resets the state the checkpoint restore reproduces) and
keeps desk-scale runtimes in seconds.

Raw tables carry one row per (sweep point, repetition) plus one averaged
row per point (repetition = -1).  Reruns with the same spec and seed are
byte-identical, at any parallelism degree: every sweep point derives its
own seeds from the experiment seed.
"""
from __future__ import annotations

import copy
import math
import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import protocols
from .engine import (
    NoiseModel,
    OpticalModel,
    SimState,
    apply_event,
    make_state,
    mc_pair_visibility,
    ou_time_to_1e,
    ou_visibility_analytic,
    optical_fid_signal,
    photon_echo_amplitude,
)
from .fitting import (
    FitError,
    fit,
    fit_damped_cosine,
    fit_ou_bath,
    fit_scaling,
    linear_fit,
    make_model,
    visibility,
)
from .levels import ConfigError, EnsembleConfig, derive_seed
from .protocols import ProtocolOptions, build_cpmg, build_hahn_echo, pi_duration_us, rabi_rate_khz
from .pulses import OpticalPulse, PulseSequence, RfPulse, Wait

__all__ = [
    "ExperimentSpec",
    "ExperimentResult",
    "EXPERIMENT_KINDS",
    "run_experiment",
    "calibrate_bath",
]

EXPERIMENT_KINDS = (
    "ple_scan", "shb", "optical_fid", "photon_echo", "pit_t1",
    "odnmr_scan", "spin_holeburn", "correlation_scan",
    "rabi", "rabi_power_sweep", "hahn_echo", "cpmg", "scaling_study",
)

# per-kind parameter schema: name -> default (None = computed later)
_SCHEMAS: dict[str, dict] = {
    "ple_scan": {"span_mhz": None, "n_points": 61, "class_multiplier": 10},
    "shb": {"burn_power": 0.08, "burn_duration_s": 2.0, "span_mhz": 2.0, "n_points": 61},
    "optical_fid": {"t_max_us": 4.0, "n_points": 160, "f_het_mhz": 2.0},
    "photon_echo": {"two_tau_max_us": 8.0, "n_points": 80},
    "pit_t1": {"t_min_s": 0.2, "t_max_s": 600.0, "n_points": 25},
    "odnmr_scan": {"transition": "f_12", "rf_power": 92.0, "rf_duration_us": 1000.0,
                   "span_khz": None, "n_points": 41},
    "spin_holeburn": {"transition": "f_12", "burn_offset_khz": 0.0, "burn_power": 92.0,
                      "rf_power": 92.0, "rf_duration_us": 1000.0,
                      "span_khz": 100.0, "n_points": 41},
    "correlation_scan": {"transition": "f_12", "rf_power": 92.0, "rf_duration_us": 1000.0,
                         "n_detunings": 13, "span_factor": 1.5,
                         "odnmr_span_khz": None, "odnmr_points": 41},
    "rabi": {"power_w": 92.0, "n_periods": 8.0, "n_points": 96},
    "rabi_power_sweep": {"powers_w": (6.0, 23.0, 52.0, 92.0), "n_periods": 8.0,
                         "n_points": 96},
    "hahn_echo": {"power_w": 92.0, "tau_grid_us": None, "n_points": 25},
    "cpmg": {"n_pulses": 8, "power_w": 92.0, "tau_grid_us": None, "n_points": 25},
    "scaling_study": {"n_list": (1, 2, 4, 8), "power_w": 92.0, "n_points": 14},
}

_COMMON = {"repetitions": 5, "readout_noise_rel": 0.0, "rf_frequency": None}


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str
    parameters: dict = field(default_factory=dict)
    seed: int = 1

    def __post_init__(self):
        if self.kind not in EXPERIMENT_KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}")
        schema = dict(_SCHEMAS[self.kind]) | dict(_COMMON)
        unknown = set(self.parameters) - set(schema)
        if unknown:
            raise ConfigError(f"unknown parameter(s) for {self.kind}: {sorted(unknown)}")
        merged = schema | dict(self.parameters)
        if merged["repetitions"] < 1:
            raise ConfigError("repetitions must be >= 1")
        object.__setattr__(self, "parameters", merged)

    def p(self, name: str):
        return self.parameters[name]


@dataclass
class ExperimentResult:
    kind: str
    header: list[str]
    rows: list[tuple]
    fits: list[dict]
    meta: dict

    def averaged(self) -> list[tuple]:
        return [r for r in self.rows if r[1] == -1]


# ---------------------------------------------------------------------------
# shared machinery

@dataclass(frozen=True)
class _Ctx:
    spec: ExperimentSpec
    cfg: EnsembleConfig
    noise: NoiseModel
    optics: OpticalModel
    k_rabi: float
    jobs: int = 1


def _rng(master: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((int(master),) + tuple(int(k) for k in key)))


# Sweep-point fan-out.  Workers are forked so they inherit the parent's
# prepared checkpoint through this module global (copy-on-write); results
# come back in sweep order, so any parallelism degree is byte-identical
# to the serial run.
_TASK_STATE: dict = {}


def _parallel_map(worker, args_list: list, jobs: int) -> list:
    if jobs <= 1 or len(args_list) < 2 or multiprocessing.get_start_method(allow_none=True) not in (None, "fork"):
        return [worker(a) for a in args_list]
    try:
        mp_ctx = multiprocessing.get_context("fork")
    except ValueError:
        return [worker(a) for a in args_list]
    with ProcessPoolExecutor(max_workers=min(jobs, len(args_list)), mp_context=mp_ctx) as ex:
        return list(ex.map(worker, args_list))


def _run_events(state: SimState, events, k_rabi: float) -> list[float]:
    sigs = []
    for ev in events:
        state, s = apply_event(state, ev, k_rabi)
        if s is not None:
            sigs.append(s)
    return sigs


def _prep_checkpoint(ctx: _Ctx, opt: ProtocolOptions) -> tuple[SimState, float, float]:
    """Thermal probe + pit preparation + reference probe, once.

    Returns (state after prep, thermal center signal, reference signal).
    """
    state = make_state(ctx.cfg, ctx.noise, ctx.optics, seed=ctx.spec.seed)
    thermal = _run_events(state, [protocols._center_probe(opt)], ctx.k_rabi)[0]
    _run_events(state, protocols._pit_events(opt), ctx.k_rabi)
    reference = _run_events(state, [protocols._reference_probe(opt)], ctx.k_rabi)[0]
    return state, thermal, reference


def _expand_rows(points: list[tuple], signals: list[float], extras: list[tuple],
                 spec: ExperimentSpec) -> list[tuple]:
    """Repetition rows (readout noise if configured) plus averaged rows."""
    reps = spec.p("repetitions")
    noise_rel = spec.p("readout_noise_rel")
    rows = []
    for i, (sw, sig, extra) in enumerate(zip(points, signals, extras)):
        vals = []
        for r in range(reps):
            s = sig
            if noise_rel > 0:
                g = _rng(spec.seed, 0xBEEF, i, r)
                s = sig + noise_rel * abs(sig) * g.standard_normal()
            vals.append(s)
            rows.append((sw, r, s) + extra)
        rows.append((sw, -1, float(np.mean(vals))) + extra)
    return rows


def _fit_payload(res) -> dict:
    return res.to_dict()


# ---------------------------------------------------------------------------
# optical-domain kinds

def _run_ple_scan(ctx: _Ctx) -> ExperimentResult:
    spec, cfg = ctx.spec, ctx.cfg
    span = spec.p("span_mhz") or 2.5 * cfg.optical_dist.fwhm
    grid = np.linspace(-span, span, spec.p("n_points"))
    cfg_big = replace(cfg, n_classes=cfg.n_classes * spec.p("class_multiplier"),
                      optical_window=None)
    state0 = make_state(cfg_big, ctx.noise, ctx.optics, seed=spec.seed)
    signals = []
    for d in grid:
        # zero-power probes never change populations; the state is reusable
        probe = OpticalPulse(float(d), float(d), 0.0, 100.0, "probe")
        signals.append(_run_events(state0, [probe], ctx.k_rabi)[0])
    shape = cfg.optical_dist.shape
    model = make_model(shape)
    sig = np.array(signals)
    init = np.array([sig.max() - sig.min(), grid[np.argmax(sig)],
                     cfg.optical_dist.fwhm, sig.min()])
    f = fit(model, grid, sig, init=init)
    rows = _expand_rows(list(grid), signals, [()] * len(grid), spec)
    return ExperimentResult("ple_scan", ["sweep_param", "repetition", "signal"], rows,
                            [_fit_payload(f)],
                            {"sweep": "laser_detuning_mhz", "fitted_fwhm_mhz": f["fwhm"]})


def _run_shb(ctx: _Ctx) -> ExperimentResult:
    spec = ctx.spec
    span = spec.p("span_mhz")
    grid = np.linspace(-span, span, spec.p("n_points"))
    cfg = ctx.cfg
    if cfg.optical_window is None:
        cfg = replace(cfg, optical_window=(-1.5 * span, 1.5 * span))
    burn = OpticalPulse(0.0, 0.0, spec.p("burn_power"),
                        spec.p("burn_duration_s") * 1e6, "burn")
    state0 = make_state(cfg, ctx.noise, ctx.optics, seed=spec.seed)
    burned_state = copy.deepcopy(state0)
    _run_events(burned_state, [burn], ctx.k_rabi)
    burned, unburned = [], []
    for d in grid:
        # zero-power probes never change populations; states are reusable
        probe = OpticalPulse(float(d), float(d), 0.0, 100.0, "probe")
        burned.append(_run_events(burned_state, [probe], ctx.k_rabi)[0])
        unburned.append(_run_events(state0, [probe], ctx.k_rabi)[0])
    hole = np.array(unburned) - np.array(burned)
    init = np.array([hole.max(), 0.0, 2e-3 * ctx.optics.gamma_h, 0.0])
    f = fit(make_model("lorentzian"), grid, hole, init=init)
    extras = list(zip(unburned, hole))
    rows = _expand_rows(list(grid), burned, extras, spec)
    return ExperimentResult(
        "shb", ["sweep_param", "repetition", "signal", "unburned", "hole_depth"],
        rows, [_fit_payload(f)],
        {"sweep": "probe_detuning_mhz", "hole_fwhm_mhz": f["fwhm"],
         "expected_fwhm_mhz": 2e-3 * ctx.optics.gamma_h})


def _run_optical_fid(ctx: _Ctx) -> ExperimentResult:
    spec = ctx.spec
    t = np.linspace(0.0, spec.p("t_max_us"), spec.p("n_points"))
    sig = optical_fid_signal(t, ctx.optics.t2_star_opt, spec.p("f_het_mhz"))
    f = fit_damped_cosine(t, sig, f_init=spec.p("f_het_mhz"))
    t2_star = 1.0 / f["decay_rate"] if f["decay_rate"] > 0 else math.inf
    rows = _expand_rows(list(t), list(sig), [()] * t.size, spec)
    return ExperimentResult("optical_fid", ["sweep_param", "repetition", "signal"],
                            rows, [_fit_payload(f)],
                            {"sweep": "time_us", "fitted_t2_star_us": t2_star})


def _run_photon_echo(ctx: _Ctx) -> ExperimentResult:
    spec = ctx.spec
    tt = np.linspace(0.0, spec.p("two_tau_max_us"), spec.p("n_points"))
    amp = photon_echo_amplitude(tt, ctx.optics.t2_opt)
    f = fit(make_model("exponential"), tt, amp,
            init=np.array([1.0, 2.0 / max(tt[-1], 1e-9)]))
    t2 = 1.0 / f["rate"] if f["rate"] > 0 else math.inf
    rows = _expand_rows(list(tt), list(amp), [()] * tt.size, spec)
    return ExperimentResult("photon_echo", ["sweep_param", "repetition", "signal"],
                            rows, [_fit_payload(f)],
                            {"sweep": "two_tau_us", "fitted_t2_opt_us": t2})


# ---------------------------------------------------------------------------
# spin-domain kinds

def _default_opt(ctx: _Ctx, **kw) -> ProtocolOptions:
    return ProtocolOptions(k_rabi=ctx.k_rabi, **kw)


def _pit_t1_grid(spec: ExperimentSpec) -> np.ndarray:
    return np.geomspace(spec.p("t_min_s"), spec.p("t_max_s"), spec.p("n_points"))


def _run_pit_t1(ctx: _Ctx) -> ExperimentResult:
    spec = ctx.spec
    opt = _default_opt(ctx)
    state0, thermal, _ = _prep_checkpoint(ctx, opt)
    grid = _pit_t1_grid(spec)
    reps = spec.p("repetitions")
    noise_rel = spec.p("readout_noise_rel")
    probe = protocols._center_probe(opt)
    rows = []
    depths_mean = []
    for i, t_s in enumerate(grid):
        st = copy.deepcopy(state0)
        _run_events(st, [Wait(t_s * 1e6)], ctx.k_rabi)
        s = _run_events(st, [probe], ctx.k_rabi)[0]
        depth = (thermal - s) / thermal
        vals = []
        for r in range(reps):
            d = depth
            if noise_rel > 0:
                g = _rng(spec.seed, 0xBEEF, i, r)
                d = depth + noise_rel * abs(depth) * g.standard_normal()
            vals.append(d)
            rows.append((float(t_s), r, d, s))
        m = float(np.mean(vals))
        depths_mean.append(m)
        rows.append((float(t_s), -1, m, s))
    y = np.array(depths_mean)
    a0 = y[0] / 2.0
    init = np.array([a0, 10.0 / grid[-1], a0, 1.0 / grid[-1]])
    f = fit(make_model("double_exponential"), grid, y, init=init)
    r1, r2 = f["rate_1"], f["rate_2"]
    t_short, t_long = sorted([1.0 / r1 if r1 > 0 else math.inf,
                              1.0 / r2 if r2 > 0 else math.inf])
    return ExperimentResult(
        "pit_t1", ["sweep_param", "repetition", "signal", "probe_signal"],
        rows, [_fit_payload(f)],
        {"sweep": "wait_s", "t1_short_s": t_short, "t1_long_s": t_long})


def _transition_mhz(ctx: _Ctx, spec: ExperimentSpec) -> float:
    name = spec.p("transition")
    if name not in ("f_12", "f_23"):
        raise ConfigError("transition must be 'f_12' or 'f_23'")
    return getattr(ctx.cfg.levels, name)


def _rf_probe_task(args) -> float:
    """One sweep point: restore the checkpoint, drive, probe."""
    events = args
    state0, probe, k_rabi = _TASK_STATE["rf_probe"]
    st = copy.deepcopy(state0)
    _run_events(st, list(events), k_rabi)
    return _run_events(st, [probe], k_rabi)[0]


def _odnmr_signals(ctx: _Ctx, f_grid_mhz: np.ndarray, rf_power: float,
                   rf_duration: float, opt: ProtocolOptions,
                   pre_events: tuple = ()) -> tuple[list[float], float]:
    state0, _, _ = _prep_checkpoint(ctx, opt)
    if pre_events:
        _run_events(state0, list(pre_events), ctx.k_rabi)
    probe = protocols._center_probe(opt)
    _TASK_STATE["rf_probe"] = (state0, probe, ctx.k_rabi)
    tasks = [(RfPulse(float(fmhz), rf_power, 0.0, rf_duration),) for fmhz in f_grid_mhz]
    out = _parallel_map(_rf_probe_task, tasks, ctx.jobs)
    baseline = _run_events(copy.deepcopy(state0), [probe], ctx.k_rabi)[0]
    return out, baseline


def _fit_line(ctx: _Ctx, grid_khz: np.ndarray, sig: np.ndarray, shape: str):
    model = make_model(shape)
    init = np.array([sig.max() - sig.min(), float(grid_khz[np.argmax(sig)]),
                     ctx.cfg.spin_dist.fwhm, sig.min()])
    return fit(model, grid_khz, sig, init=init)


def _run_odnmr_scan(ctx: _Ctx) -> ExperimentResult:
    spec = ctx.spec
    f0 = _transition_mhz(ctx, spec)
    span = spec.p("span_khz") or 3.5 * ctx.cfg.spin_dist.fwhm
    grid_khz = np.linspace(-span, span, spec.p("n_points"))
    f_grid = f0 + grid_khz * 1e-3
    opt = _default_opt(ctx)
    sig, baseline = _odnmr_signals(ctx, f_grid, spec.p("rf_power"),
                                   spec.p("rf_duration_us"), opt)
    f = _fit_line(ctx, grid_khz, np.array(sig), ctx.cfg.spin_dist.shape)
    extras = [(float(fm), float(s - baseline)) for fm, s in zip(f_grid, sig)]
    rows = _expand_rows(list(grid_khz), sig, extras, spec)
    return ExperimentResult(
        "odnmr_scan",
        ["sweep_param", "repetition", "signal", "rf_frequency_mhz", "refill"],
        rows, [_fit_payload(f)],
        {"sweep": "rf_offset_khz", "center_mhz": f0 + f["center"] * 1e-3,
         "center_offset_khz": f["center"], "fwhm_khz": f["fwhm"],
         "baseline": baseline})


def _run_spin_holeburn(ctx: _Ctx) -> ExperimentResult:
    spec = ctx.spec
    f0 = _transition_mhz(ctx, spec)
    span = spec.p("span_khz")
    grid_khz = np.linspace(-span, span, spec.p("n_points"))
    f_grid = f0 + grid_khz * 1e-3
    opt = _default_opt(ctx)
    burn_f = f0 + spec.p("burn_offset_khz") * 1e-3
    burn_power = spec.p("burn_power")
    pre = ()
    if burn_power > 0:
        pre = (RfPulse(burn_f, burn_power, 0.0, pi_duration_us(burn_power, ctx.k_rabi)),)
    burned, _ = _odnmr_signals(ctx, f_grid, spec.p("rf_power"),
                               spec.p("rf_duration_us"), opt, pre_events=pre)
    unburned, _ = _odnmr_signals(ctx, f_grid, spec.p("rf_power"),
                                 spec.p("rf_duration_us"), opt)
    diff = np.array(burned) - np.array(unburned)
    meta = {"sweep": "rf_offset_khz"}
    try:
        init = np.array([diff.min(), spec.p("burn_offset_khz"), 15.0, 0.0])
        f = fit(make_model("gaussian"), grid_khz, diff, init=init)
        fit_doc = _fit_payload(f)
        meta["hole_center_khz"] = f["center"]
        meta["hole_fwhm_khz"] = abs(f["fwhm"])
    except FitError as exc:  # flat difference spectrum (e.g. zero burn power)
        fit_doc = {"model": "gaussian", "converged": False, "message": str(exc),
                   "n_points": int(diff.size)}
        meta["hole_center_khz"] = math.nan
        meta["hole_fwhm_khz"] = math.nan
    extras = [(float(u), float(d)) for u, d in zip(unburned, diff)]
    rows = _expand_rows(list(grid_khz), burned, extras, spec)
    return ExperimentResult(
        "spin_holeburn",
        ["sweep_param", "repetition", "signal", "unburned", "difference"],
        rows, [fit_doc], meta)


def _run_correlation_scan(ctx: _Ctx) -> ExperimentResult:
    spec, cfg = ctx.spec, ctx.cfg
    span_ghz = spec.p("span_factor") * cfg.optical_dist.fwhm * 1e-3
    detunings_ghz = np.linspace(-span_ghz, span_ghz, spec.p("n_detunings"))
    odnmr_span = spec.p("odnmr_span_khz") or 3.5 * cfg.spin_dist.fwhm
    centers, fwhms = [], []
    window = cfg.optical_window or (-12.0, 12.0)
    half = (window[1] - window[0]) / 2.0
    for i, d_ghz in enumerate(detunings_ghz):
        d_mhz = d_ghz * 1e3
        sub_cfg = replace(cfg, optical_window=(d_mhz - half, d_mhz + half),
                          rng_seed=derive_seed(spec.seed, i))
        sub_spec = ExperimentSpec("odnmr_scan", {
            "transition": spec.p("transition"), "rf_power": spec.p("rf_power"),
            "rf_duration_us": spec.p("rf_duration_us"),
            "span_khz": odnmr_span, "n_points": spec.p("odnmr_points"),
            "repetitions": 1,
        }, seed=derive_seed(spec.seed, 1000 + i))
        sub_ctx = _Ctx(sub_spec, sub_cfg, ctx.noise, ctx.optics, ctx.k_rabi, ctx.jobs)
        sub = _run_odnmr_scan_at(sub_ctx, optical_center=d_mhz)
        centers.append(sub.meta["center_offset_khz"])
        fwhms.append(sub.meta["fwhm_khz"])
    slope, intercept, slope_se, _ = linear_fit(detunings_ghz, np.array(centers))
    extras = [(float(w),) for w in fwhms]
    rows = _expand_rows(list(detunings_ghz), centers, extras, spec)
    fit_doc = {"model": "linear", "params": {"slope_khz_per_ghz": slope,
                                             "intercept_khz": intercept},
               "std_errors": {"slope_khz_per_ghz": slope_se},
               "converged": True, "n_points": len(centers)}
    return ExperimentResult(
        "correlation_scan",
        ["sweep_param", "repetition", "signal", "fwhm_khz"],
        rows, [fit_doc],
        {"sweep": "optical_detuning_ghz", "gradient_khz_per_ghz": slope,
         "gradient_stderr": slope_se})


def _run_odnmr_scan_at(ctx: _Ctx, optical_center: float) -> ExperimentResult:
    """ODNMR scan with all optical events parked at a detuned pit center."""
    spec = ctx.spec
    f0 = _transition_mhz(ctx, spec)
    span = spec.p("span_khz") or 3.5 * ctx.cfg.spin_dist.fwhm
    grid_khz = np.linspace(-span, span, spec.p("n_points"))
    f_grid = f0 + grid_khz * 1e-3
    opt = _default_opt(ctx, optical_center=optical_center)
    sig, baseline = _odnmr_signals(ctx, f_grid, spec.p("rf_power"),
                                   spec.p("rf_duration_us"), opt)
    f = _fit_line(ctx, grid_khz, np.array(sig), ctx.cfg.spin_dist.shape)
    rows = _expand_rows(list(grid_khz), sig, [()] * len(sig), spec)
    return ExperimentResult(
        "odnmr_scan", ["sweep_param", "repetition", "signal"], rows, [_fit_payload(f)],
        {"sweep": "rf_offset_khz", "center_offset_khz": f["center"],
         "fwhm_khz": f["fwhm"], "baseline": baseline})


def _rabi_grid_us(power_w: float, k_rabi: float, n_periods: float, n_points: int) -> np.ndarray:
    period_us = 1e3 / rabi_rate_khz(power_w, k_rabi)
    return np.linspace(1.0, n_periods * period_us, n_points)


def _rabi_curve(ctx: _Ctx, power_w: float, frequency: float,
                grid_us: np.ndarray, opt: ProtocolOptions) -> list[float]:
    state0, _, _ = _prep_checkpoint(ctx, opt)
    _TASK_STATE["rf_probe"] = (state0, protocols._center_probe(opt), ctx.k_rabi)
    tasks = [(RfPulse(frequency, power_w, 0.0, float(t)),) for t in grid_us]
    return _parallel_map(_rf_probe_task, tasks, ctx.jobs)


def _extract_rabi_khz(grid_us: np.ndarray, sig: np.ndarray):
    f = fit_damped_cosine(grid_us, sig)
    return f["frequency"] * 1e3, f  # MHz (cycles/us) -> kHz


def _run_rabi(ctx: _Ctx) -> ExperimentResult:
    spec = ctx.spec
    power = spec.p("power_w")
    f_rf = spec.p("rf_frequency") or ctx.cfg.levels.f_12
    grid = _rabi_grid_us(power, ctx.k_rabi, spec.p("n_periods"), spec.p("n_points"))
    sig = _rabi_curve(ctx, power, f_rf, grid, _default_opt(ctx))
    omega_khz, f = _extract_rabi_khz(grid, np.array(sig))
    rows = _expand_rows(list(grid), sig, [()] * len(sig), spec)
    return ExperimentResult(
        "rabi", ["sweep_param", "repetition", "signal"], rows, [_fit_payload(f)],
        {"sweep": "rf_duration_us", "power_w": power,
         "rabi_frequency_khz": omega_khz,
         "expected_khz": rabi_rate_khz(power, ctx.k_rabi)})


def _run_rabi_power_sweep(ctx: _Ctx) -> ExperimentResult:
    spec = ctx.spec
    powers = [float(p) for p in spec.p("powers_w")]
    f_rf = spec.p("rf_frequency") or ctx.cfg.levels.f_12
    fits = []
    omegas = []
    for power in powers:
        grid = _rabi_grid_us(power, ctx.k_rabi, spec.p("n_periods"), spec.p("n_points"))
        sig = _rabi_curve(ctx, power, f_rf, grid, _default_opt(ctx))
        omega_khz, f = _extract_rabi_khz(grid, np.array(sig))
        omegas.append(omega_khz)
        fits.append(_fit_payload(f))
    k_fit = fit(make_model("sqrt_power"), np.array(powers), np.array(omegas),
                init=np.array([ctx.k_rabi]))
    fits.insert(0, _fit_payload(k_fit))
    extras = [(rabi_rate_khz(p, ctx.k_rabi),) for p in powers]
    rows = _expand_rows(powers, omegas, extras, spec)
    return ExperimentResult(
        "rabi_power_sweep",
        ["sweep_param", "repetition", "signal", "expected_khz"],
        rows, fits,
        {"sweep": "rf_power_w", "k_khz_per_sqrt_w": k_fit["k"],
         "k_stderr": k_fit.stderr("k"), "omegas_khz": omegas})


# ---------------------------------------------------------------------------
# echo family

def _echo_tau_grid_us(ctx: _Ctx, n_pulses: int, n_points: int) -> np.ndarray:
    """Inter-pulse spacings (CPMG convention) covering 0.3..1.6 x t_1e."""
    sigma, tau_c = ctx.noise.ou_sigma, ctx.noise.ou_tau_c
    if sigma > 0:
        t1e_us = ou_time_to_1e(n_pulses, sigma, tau_c) * 1e6
    else:
        t1e_us = 1000.0
    t_pi = pi_duration_us(ctx.spec.p("power_w"), ctx.k_rabi)
    lo = max(0.3 * t1e_us, 2.2 * n_pulses * t_pi)
    return np.linspace(lo, 1.6 * t1e_us, n_points) / n_pulses


def _echo_builders(ctx: _Ctx, n_pulses: int, tau_us: float, kind: str):
    """Sequence pair for one echo point: (inverting arm, restoring arm).

    ``tau_us`` is the CPMG inter-pulse spacing (total evolution
    t = n * tau); the Hahn builder's half-delay is tau/2.  The arm whose
    final pi/2 inverts the prepared population difference refills the pit
    and is the visibility's s_plus.
    """
    spec = ctx.spec
    power = spec.p("power_w")
    f_rf = spec.p("rf_frequency") or ctx.cfg.levels.f_12
    opt = _default_opt(ctx)
    if kind == "hahn":
        return (build_hahn_echo(tau_us / 2.0, f_rf, power, 180.0, opt),
                build_hahn_echo(tau_us / 2.0, f_rf, power, 0.0, opt))
    return (build_cpmg(n_pulses, tau_us, f_rf, power, 0.0, opt),
            build_cpmg(n_pulses, tau_us, f_rf, power, 180.0, opt))


def _echo_point_task(args) -> tuple[float, float, float]:
    """One echo sweep point -> (visibility, s_plus, s_minus)."""
    point_index, tau_us = args
    ctx, kind, n_pulses, state0 = _TASK_STATE["echo"]
    seq_plus, seq_minus = _echo_builders(ctx, n_pulses, tau_us, kind)

    if ctx.noise.monte_carlo:
        dyn_seed = derive_seed(ctx.spec.seed, 7000 + 131 * n_pulses + point_index)
        v, _ = mc_pair_visibility(seq_plus, seq_minus, ctx.cfg, ctx.noise,
                                  ctx.optics, ctx.k_rabi, seed=ctx.spec.seed,
                                  dynamics_seed=dyn_seed)
        return v, math.nan, math.nan

    opt = _default_opt(ctx)
    signals = []
    for seq in (seq_plus, seq_minus):
        # core events sit between the reference probe and the center probe
        core = [e for e in seq.events if isinstance(e, (RfPulse, Wait))]
        st = copy.deepcopy(state0)
        _run_events(st, core, ctx.k_rabi)
        signals.append(_run_events(st, [protocols._center_probe(opt)], ctx.k_rabi)[0])
    sp, sm = signals
    v_static = float(visibility([sp], [sm])[0])
    rho = ou_visibility_analytic(n_pulses, tau_us * 1e-6,
                                 ctx.noise.ou_sigma, ctx.noise.ou_tau_c)
    return v_static * rho, sp, sm


def _stretched_fit(t_us: np.ndarray, v: np.ndarray):
    vmax = max(float(np.nanmax(v)), 1e-9)
    idx = int(np.nanargmin(np.abs(v / vmax - math.exp(-1.0))))
    init = np.array([vmax, max(float(t_us[idx]), 1e-6), 1.5])
    return fit(make_model("stretched_exponential"), t_us, v, init=init)


def _run_echo_family(ctx: _Ctx, kind: str, n_pulses: int) -> ExperimentResult:
    spec = ctx.spec
    taus = spec.p("tau_grid_us")
    if taus is None:
        taus = _echo_tau_grid_us(ctx, n_pulses, spec.p("n_points"))
    taus = np.asarray(taus, dtype=float)
    state0 = None
    if not ctx.noise.monte_carlo:
        state0, _, _ = _prep_checkpoint(ctx, _default_opt(ctx))
    _TASK_STATE["echo"] = (ctx, kind, n_pulses, state0)
    points = _parallel_map(_echo_point_task,
                           [(i, float(t)) for i, t in enumerate(taus)], ctx.jobs)
    vis = [p[0] for p in points]
    sps = [p[1] for p in points]
    sms = [p[2] for p in points]
    t_total = taus * n_pulses
    f = _stretched_fit(t_total, np.array(vis))
    extras = [(float(t), float(sp), float(sm)) for t, sp, sm in zip(t_total, sps, sms)]
    rows = _expand_rows(list(taus), vis, extras, spec)
    name = "hahn_echo" if kind == "hahn" else "cpmg"
    return ExperimentResult(
        name,
        ["sweep_param", "repetition", "signal", "total_time_us", "s_plus", "s_minus"],
        rows, [_fit_payload(f)],
        {"sweep": "tau_us", "n_pulses": n_pulses,
         "t2_us": f["t_1e"], "stretch_beta": f["beta"]})


def _run_hahn_echo(ctx: _Ctx) -> ExperimentResult:
    return _run_echo_family(ctx, "hahn", 1)


def _run_cpmg(ctx: _Ctx) -> ExperimentResult:
    return _run_echo_family(ctx, "cpmg", ctx.spec.p("n_pulses"))


def _run_scaling_study(ctx: _Ctx) -> ExperimentResult:
    spec = ctx.spec
    n_list = [int(n) for n in spec.p("n_list")]
    rows = []
    t2_by_n = []
    curves = []
    fits = []
    for n in n_list:
        sub_spec = ExperimentSpec("cpmg", {
            "n_pulses": n, "power_w": spec.p("power_w"),
            "n_points": spec.p("n_points"),
            "repetitions": spec.p("repetitions"),
            "readout_noise_rel": spec.p("readout_noise_rel"),
            "rf_frequency": spec.p("rf_frequency"),
        }, seed=spec.seed)  # one crystal: every curve shares the ensemble
        sub = _run_cpmg(_Ctx(sub_spec, ctx.cfg, ctx.noise, ctx.optics,
                             ctx.k_rabi, ctx.jobs))
        t2_by_n.append((n, sub.meta["t2_us"]))
        taus = np.array([r[0] for r in sub.averaged()])
        v = np.array([r[2] for r in sub.averaged()])
        curves.append((n, taus * 1e-6, v))
        fits.append(sub.fits[0])
        for r in sub.rows:
            rows.append((float(r[3]), r[1], r[2], float(n)))
    scaling = fit_scaling(t2_by_n)
    bath = fit_ou_bath(curves, tau_c_init=ctx.noise.ou_tau_c if ctx.noise.ou_sigma else None)
    fits.insert(0, {"model": "power_law_scaling",
                    "params": {"beta": scaling.beta, "t2_echo_us": scaling.t2_echo},
                    "std_errors": {"beta": scaling.beta_stderr,
                                   "t2_echo_us": scaling.t2_echo_stderr},
                    "converged": True, "n_points": len(t2_by_n)})
    fits.insert(1, {"model": "ou_cpmg_joint", **bath.to_dict()})
    return ExperimentResult(
        "scaling_study",
        ["sweep_param", "repetition", "signal", "n_pulses"],
        rows, fits,
        {"sweep": "total_time_us", "beta": scaling.beta,
         "beta_stderr": scaling.beta_stderr, "t2_echo_us": scaling.t2_echo,
         "t2_by_n_us": t2_by_n, "bath_sigma": bath.sigma,
         "bath_tau_c": bath.tau_c})


_RUNNERS = {
    "ple_scan": _run_ple_scan,
    "shb": _run_shb,
    "optical_fid": _run_optical_fid,
    "photon_echo": _run_photon_echo,
    "pit_t1": _run_pit_t1,
    "odnmr_scan": _run_odnmr_scan,
    "spin_holeburn": _run_spin_holeburn,
    "correlation_scan": _run_correlation_scan,
    "rabi": _run_rabi,
    "rabi_power_sweep": _run_rabi_power_sweep,
    "hahn_echo": _run_hahn_echo,
    "cpmg": _run_cpmg,
    "scaling_study": _run_scaling_study,
}


def run_experiment(spec: ExperimentSpec, cfg: EnsembleConfig, noise: NoiseModel,
                   optics: OpticalModel, k_rabi: float = 1.48,
                   jobs: int = 1) -> ExperimentResult:
    """Run one experiment kind end to end.

    Fully deterministic per spec.seed (which overrides the ensemble's
    sampling seed so a manifest reproduces the run exactly), at any
    ``jobs`` value: sweep points derive their own sub-seeds and results
    are assembled in sweep order.
    """
    ctx = _Ctx(spec, cfg, noise, optics, k_rabi, max(1, int(jobs)))
    result = _RUNNERS[spec.kind](ctx)
    result.meta.setdefault("seed", spec.seed)
    result.meta.setdefault("repetitions", spec.p("repetitions"))
    return result


def calibrate_bath(target_t2_echo: float, tau_c: float) -> float:
    """Bath coupling sigma (rad/s) whose Hahn 1/e total time equals the
    target (seconds), by bisection on the monotone map sigma -> t_1e;
    residual below 0.1%."""
    if not (target_t2_echo > 0 and tau_c > 0):
        raise ConfigError("targets must be > 0")
    lo, hi = 1e-6, 1e12
    if not (ou_time_to_1e(1, hi, tau_c) < target_t2_echo < ou_time_to_1e(1, lo, tau_c)):
        raise FitError(f"target {target_t2_echo} s not bracketed by sigma in [{lo}, {hi}]")
    for _ in range(200):
        mid = math.sqrt(lo * hi)
        t = ou_time_to_1e(1, mid, tau_c)
        if t > target_t2_echo:
            lo = mid
        else:
            hi = mid
        if abs(t - target_t2_echo) < 1e-3 * target_t2_echo:
            return mid
    return math.sqrt(lo * hi)
