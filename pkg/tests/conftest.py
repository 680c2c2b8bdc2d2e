import numpy as np
import pytest

from odnmr import (
    EnsembleConfig,
    InhomogeneousDistribution,
    NoiseModel,
    OpticalModel,
)


@pytest.fixture(scope="session")
def optics():
    return OpticalModel()


@pytest.fixture(scope="session")
def quiet_noise():
    return NoiseModel(ou_sigma=0.0)


def desk_config(n_classes=20000, spin_fwhm=154.0, seed=11, spin_shape="lorentzian"):
    """Paper-anchored desk-scale ensemble around the pit."""
    return EnsembleConfig(
        optical_dist=InhomogeneousDistribution("lorentzian", 0.0, 1940.0, "stratified"),
        spin_dist=InhomogeneousDistribution(spin_shape, 0.0, spin_fwhm, "stratified"),
        n_classes=n_classes,
        rng_seed=seed,
        optical_window=(-12.0, 12.0),
        optical_focus=0.62,
    )


@pytest.fixture(scope="session")
def desk_cfg():
    return desk_config()
