"""Deterministic simulator and analysis suite for optically detected NMR
of Eu-151 nuclear spins in a molecular crystal."""

__version__ = "0.1.0"

from .levels import (  # noqa: F401
    ConfigError,
    CorrelationModel,
    EnsembleConfig,
    InhomogeneousDistribution,
    IonClass,
    LevelScheme,
    derive_seed,
    sample_ensemble,
    thermal_populations,
)
from .pulses import (  # noqa: F401
    OpticalPulse,
    PulseSequence,
    ReadoutWindow,
    RfPulse,
    SequenceError,
    SweepSpec,
    Wait,
    format_sequence,
    parse_sequence,
)
from .protocols import (  # noqa: F401
    ProtocolOptions,
    build_cpmg,
    build_erase,
    build_hahn_echo,
    build_odnmr_scan,
    build_pit_preparation,
    build_rabi,
    build_spin_holeburn,
    pi_duration_us,
    rabi_rate_khz,
)
from .engine import (  # noqa: F401
    NoiseModel,
    OpticalModel,
    SimState,
    apply_optical_pulse,
    apply_rf_pulse,
    apply_wait,
    b_khz_to_sigma,
    make_state,
    mc_cpmg_visibility,
    mc_pair_visibility,
    optical_fid_signal,
    ou_time_to_1e,
    ou_trajectory,
    ou_visibility_analytic,
    photon_echo_amplitude,
    simulate_sequence,
)
from .fitting import (  # noqa: F401
    FitError,
    FitModel,
    FitResult,
    fit,
    fit_damped_cosine,
    fit_ou_bath,
    fit_scaling,
    linear_fit,
    make_model,
    visibility,
)
from .estimates import (  # noqa: F401
    dipolar_coupling,
    distance_for_coupling,
    electron_moment,
    linewidth_to_t2star,
    nuclear_moment,
    probed_ion_count,
)
from .experiments import (  # noqa: F401
    EXPERIMENT_KINDS,
    ExperimentResult,
    ExperimentSpec,
    calibrate_bath,
    run_experiment,
)
