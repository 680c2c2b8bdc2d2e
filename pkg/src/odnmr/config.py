"""Run configuration: TOML file -> validated dataclasses -> manifest echo.

Field names mirror the dataclasses; units are part of the key name
wherever the bare name would be ambiguous.  The OU coupling must be
given with an explicit unit tag: ``ou_sigma_rad_s`` (rad/s) or
``ou_b_khz`` (kHz, converted as sigma = 2 pi 1e3 b).
"""
from __future__ import annotations

import json
import platform
import sys
from dataclasses import dataclass, field

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from . import __version__
from .engine import NoiseModel, OpticalModel, b_khz_to_sigma
from .experiments import ExperimentSpec
from .levels import (
    ConfigError,
    CorrelationModel,
    EnsembleConfig,
    InhomogeneousDistribution,
    LevelScheme,
)

__all__ = ["RunConfig", "load_config", "runconfig_from_dict", "config_to_dict",
           "manifest_dict", "OracleConfig"]


@dataclass(frozen=True)
class RunConfig:
    ensemble: EnsembleConfig
    noise: NoiseModel
    optics: OpticalModel
    experiment: ExperimentSpec
    k_rabi: float = 1.48
    output_dir: str = "out"

    def __post_init__(self):
        if not self.k_rabi > 0:
            raise ConfigError("k_rabi must be > 0")


@dataclass(frozen=True)
class OracleConfig:
    """MC-vs-closed-form equivalence suite parameters."""

    n_list: tuple[int, ...] = (1, 2, 4, 8)
    taus_per_n: int = 10
    sigma: float = 26214.0  # rad/s
    tau_c: float = 13e-3  # s
    n_trajectories: int = 2000
    analytic_sigma: float | None = None  # fault injection: mismatched closed form
    seed: int = 1
    z_limit: float = 3.0


def _take(table: dict, key: str, default=None, required: bool = False):
    if key in table:
        return table.pop(key)
    if required:
        raise ConfigError(f"missing required key {key!r}")
    return default


def _no_leftovers(table: dict, where: str):
    if table:
        raise ConfigError(f"unknown key(s) in [{where}]: {sorted(table)}")


def _dist(table: dict, where: str) -> InhomogeneousDistribution:
    d = dict(table)
    out = InhomogeneousDistribution(
        shape=str(_take(d, "shape", "lorentzian")),
        center=float(_take(d, "center", 0.0)),
        fwhm=float(_take(d, "fwhm", required=True)),
        sampling=str(_take(d, "sampling", "random")),
    )
    _no_leftovers(d, where)
    return out


def runconfig_from_dict(doc: dict) -> RunConfig:
    doc = {k: (dict(v) if isinstance(v, dict) else v) for k, v in doc.items()}

    lv = dict(doc.pop("levels", {}))
    excited = _take(lv, "excited_splittings", None)
    levels = LevelScheme(
        f_12=float(_take(lv, "f_12", 21.475)),
        f_23=float(_take(lv, "f_23", 33.944)),
        excited_splittings=tuple(excited) if excited else None,
    )
    _no_leftovers(lv, "levels")

    en = dict(doc.pop("ensemble", {}))
    corr_tbl = dict(_take(en, "correlation", {}))
    profile = _take(corr_tbl, "broadening_profile", ())
    correlation = CorrelationModel(
        gradient=float(_take(corr_tbl, "gradient", -4.0)),
        broadening_profile=tuple((float(a), float(b)) for a, b in profile),
    )
    _no_leftovers(corr_tbl, "ensemble.correlation")
    window = _take(en, "optical_window", None)
    focus = _take(en, "optical_focus", None)
    ensemble = EnsembleConfig(
        optical_dist=_dist(_take(en, "optical_dist", required=True), "ensemble.optical_dist"),
        spin_dist=_dist(_take(en, "spin_dist", required=True), "ensemble.spin_dist"),
        n_classes=int(_take(en, "n_classes", 20000)),
        correlation=correlation,
        rng_seed=int(_take(en, "rng_seed", 1)),
        isotope_fraction=float(_take(en, "isotope_fraction", 0.5)),
        levels=levels,
        optical_window=tuple(float(x) for x in window) if window else None,
        optical_focus=float(focus) if focus is not None else None,
    )
    _no_leftovers(en, "ensemble")

    nz = dict(doc.pop("noise", {}))
    sigma_rad = _take(nz, "ou_sigma_rad_s", None)
    b_khz = _take(nz, "ou_b_khz", None)
    if sigma_rad is not None and b_khz is not None:
        raise ConfigError("give ou_sigma_rad_s or ou_b_khz, not both")
    sigma = (b_khz_to_sigma(float(b_khz)) if b_khz is not None
             else float(sigma_rad) if sigma_rad is not None else 0.0)
    noise = NoiseModel(
        ou_sigma=sigma,
        ou_tau_c=float(_take(nz, "ou_tau_c_s", 13e-3)),
        t1_short=float(_take(nz, "t1_short_s", 4.4)),
        t1_long=float(_take(nz, "t1_long_s", 120.0)),
        t1_weight=float(_take(nz, "t1_weight", 0.5)),
        mode=str(_take(nz, "mode", "analytic")),
        n_trajectories=int(_take(nz, "n_trajectories", 2000)),
        dt=(float(nz.pop("dt_s")) if "dt_s" in nz else None),
    )
    _no_leftovers(nz, "noise")

    op = dict(doc.pop("optics", {}))
    branching = _take(op, "branching", None)
    kwargs = {}
    if branching is not None:
        kwargs["branching"] = np.asarray(branching, dtype=float)
    optics = OpticalModel(
        gamma_h=float(_take(op, "gamma_h_khz", 310.0)),
        t2_opt=float(_take(op, "t2_opt_us", 2.13)),
        t2_star_opt=float(_take(op, "t2_star_opt_us", 0.77)),
        pump_efficiency=float(_take(op, "pump_efficiency", 3.2)),
        **kwargs,
    )
    _no_leftovers(op, "optics")

    ex = dict(doc.pop("experiment", {}))
    kind = str(_take(ex, "kind", required=True))
    seed = int(_take(ex, "seed", ensemble.rng_seed))
    params = dict(_take(ex, "parameters", {}))
    spec = ExperimentSpec(kind=kind, parameters=params, seed=seed)
    _no_leftovers(ex, "experiment")

    run = dict(doc.pop("run", {}))
    k_rabi = float(_take(run, "k_rabi", 1.48))
    output_dir = str(_take(run, "output_dir", "out"))
    _no_leftovers(run, "run")
    _no_leftovers(doc, "config")

    return RunConfig(ensemble=ensemble, noise=noise, optics=optics,
                     experiment=spec, k_rabi=k_rabi, output_dir=output_dir)


def load_config(path: str) -> RunConfig:
    with open(path, "rb") as fh:
        try:
            doc = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    return runconfig_from_dict(doc)


def oracle_config_from_dict(doc: dict) -> OracleConfig:
    t = dict(doc.get("oracle", doc))
    sigma_rad = _take(t, "sigma_rad_s", None)
    b_khz = _take(t, "b_khz", None)
    sigma = (b_khz_to_sigma(float(b_khz)) if b_khz is not None
             else float(sigma_rad) if sigma_rad is not None else 26214.0)
    ana = _take(t, "analytic_sigma_rad_s", None)
    out = OracleConfig(
        n_list=tuple(int(n) for n in _take(t, "n_list", (1, 2, 4, 8))),
        taus_per_n=int(_take(t, "taus_per_n", 10)),
        sigma=sigma,
        tau_c=float(_take(t, "tau_c_s", 13e-3)),
        n_trajectories=int(_take(t, "n_trajectories", 2000)),
        analytic_sigma=float(ana) if ana is not None else None,
        seed=int(_take(t, "seed", 1)),
        z_limit=float(_take(t, "z_limit", 3.0)),
    )
    _no_leftovers(t, "oracle")
    return out


def config_to_dict(rc: RunConfig) -> dict:
    """Complete echo of a RunConfig; runconfig_from_dict inverts it."""
    en = rc.ensemble
    noise = rc.noise
    doc = {
        "levels": {
            "f_12": en.levels.f_12,
            "f_23": en.levels.f_23,
        },
        "ensemble": {
            "n_classes": en.n_classes,
            "rng_seed": en.rng_seed,
            "isotope_fraction": en.isotope_fraction,
            "optical_dist": vars(en.optical_dist).copy(),
            "spin_dist": vars(en.spin_dist).copy(),
            "correlation": {
                "gradient": en.correlation.gradient,
                "broadening_profile": [list(p) for p in en.correlation.broadening_profile],
            },
        },
        "noise": {
            "ou_sigma_rad_s": noise.ou_sigma,
            "ou_tau_c_s": noise.ou_tau_c,
            "t1_short_s": noise.t1_short,
            "t1_long_s": noise.t1_long,
            "t1_weight": noise.t1_weight,
            "mode": noise.mode,
            "n_trajectories": noise.n_trajectories,
        },
        "optics": {
            "gamma_h_khz": rc.optics.gamma_h,
            "t2_opt_us": rc.optics.t2_opt,
            "t2_star_opt_us": rc.optics.t2_star_opt,
            "pump_efficiency": rc.optics.pump_efficiency,
            "branching": rc.optics.branching.tolist(),
        },
        "experiment": {
            "kind": rc.experiment.kind,
            "seed": rc.experiment.seed,
            "parameters": _jsonable(rc.experiment.parameters),
        },
        "run": {
            "k_rabi": rc.k_rabi,
            "output_dir": rc.output_dir,
        },
    }
    if en.levels.excited_splittings:
        doc["levels"]["excited_splittings"] = list(en.levels.excited_splittings)
    if en.optical_window:
        doc["ensemble"]["optical_window"] = list(en.optical_window)
    if en.optical_focus is not None:
        doc["ensemble"]["optical_focus"] = en.optical_focus
    if noise.dt is not None:
        doc["noise"]["dt_s"] = noise.dt
    return doc


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer, np.floating)):
        return obj.item()
    return obj


def manifest_dict(rc: RunConfig, seed: int, jobs: int) -> dict:
    return {
        "config": config_to_dict(rc),
        "seed": seed,
        "jobs": jobs,
        "versions": {
            "odnmr": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
    }
