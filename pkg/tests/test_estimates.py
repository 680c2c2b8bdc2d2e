import pytest

from odnmr import (
    dipolar_coupling,
    distance_for_coupling,
    electron_moment,
    linewidth_to_t2star,
    nuclear_moment,
    probed_ion_count,
)
from odnmr.estimates import GAMMA_EU151, GAMMA_PROTON

MU_EU = nuclear_moment(GAMMA_EU151, 2.5)
MU_H = nuclear_moment(GAMMA_PROTON, 0.5)


def test_eu_proton_coupling_at_4_and_8_angstrom():
    e4 = dipolar_coupling(MU_EU, MU_H, 4e-10)
    e8 = dipolar_coupling(MU_EU, MU_H, 8e-10)
    assert e4 == pytest.approx(583.0, rel=0.03)
    assert e8 == pytest.approx(72.0, rel=0.03)
    assert e4 / e8 == pytest.approx(8.0, rel=1e-12)  # exact r^-3 law


def test_r_cubed_law_exact():
    for r in (2e-10, 5e-10, 13e-10):
        assert dipolar_coupling(MU_EU, MU_H, r) / dipolar_coupling(MU_EU, MU_H, 2 * r) \
            == pytest.approx(8.0, rel=1e-12)


def test_electron_distance_inversion():
    mu_e = electron_moment(g=2.0, spin=0.5)
    r = distance_for_coupling(MU_EU, mu_e, 12e3)
    assert r == pytest.approx(13e-10, rel=0.03)
    # inversion consistency
    assert dipolar_coupling(MU_EU, mu_e, r) == pytest.approx(12e3, rel=1e-12)


def test_probed_ion_count_si_factors():
    n = probed_ion_count(9.6e20, 1e-4, 1.0 / 23000.0, 0.5, 0.2 * 11.6 / 154.0)
    assert 1e10 <= n < 1e11  # order 10^10


def test_probed_ion_count_linearity_and_zero():
    args = (9.6e20, 1e-4, 1.0 / 23000.0, 0.5, 0.015)
    base = probed_ion_count(*args)
    doubled = probed_ion_count(args[0], 2 * args[1], *args[2:])
    assert doubled == pytest.approx(2 * base, rel=1e-12)
    assert probed_ion_count(args[0], 0.0, *args[2:]) == 0.0
    with pytest.raises(ValueError):
        probed_ion_count(-1.0, 1.0, 1.0, 1.0, 1.0)


def test_linewidth_to_t2star():
    assert linewidth_to_t2star(310.0) == pytest.approx(1.03, abs=0.01)
    assert linewidth_to_t2star(1.0 / 3.141592653589793) == pytest.approx(1000.0, rel=1e-9)
    assert linewidth_to_t2star(1e9) < 1e-5  # Gamma -> inf, T -> 0
    with pytest.raises(ValueError):
        linewidth_to_t2star(0.0)
