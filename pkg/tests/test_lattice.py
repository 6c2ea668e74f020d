import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.special import ellipk

from jrlattice.adiabatic import relaxed_kink
from jrlattice.fermions import FermionParams, gauge_eigensystem
from jrlattice.lattice import (
    LatticeSpec,
    ScalarState,
    SolitonProfile,
    continuum_zero_mode,
    ellipk_agm,
    energy_density,
    kink_antikink_profile,
    kink_profile,
    scalar_dispersion,
    site_coordinates,
    site_parity,
    soliton_mass_reference,
    tadpole_mass,
    topological_charge,
    total_energy,
    zero_crossings,
)

from conftest import cached_kink


def test_spec_from_kink_and_invariants():
    spec = LatticeSpec.from_kink(160, 3.0, 1.0)
    assert spec.m0_sq == -2.0
    assert spec.lam == pytest.approx(2.0 / 9.0)
    assert spec.Phi0 == pytest.approx(3.0)
    assert spec.xi0 == pytest.approx(1.0)
    for bad in (dict(N=4, m0_sq=-1, lam=1), dict(N=10, m0_sq=-1, lam=0), dict(N=10, m0_sq=-1, lam=-1), dict(N=10, m0_sq=-1, lam=1, a=0)):
        with pytest.raises(ValueError):
            LatticeSpec(**bad)
    LatticeSpec(N=64, m0_sq=1.0, lam=0.0)


def test_coordinates_and_parity():
    x = site_coordinates(160)
    assert x[0] == -79 and x[-1] == 80
    p = site_parity(160)
    assert p[79] == 1.0 and p[80] == -1.0
    assert site_coordinates(161)[80] == 0


def test_kink_profile_values():
    spec = LatticeSpec.from_kink(160, 3.0, 1.0)
    st_ = kink_profile(spec)
    x = spec.sites
    assert st_.phi[x == 0][0] == 0.0
    assert st_.phi[x == 1][0] == pytest.approx(2.284782, abs=1e-6)
    assert st_.phi[-1] == pytest.approx(3.0, abs=1e-12)
    assert st_.phi[0] == pytest.approx(-3.0, abs=1e-12)
    assert np.all(st_.pi == 0)
    anti = kink_profile(spec, SolitonProfile(q_t=-1, width=1.0))
    np.testing.assert_array_equal(anti.phi, -st_.phi)
    with pytest.raises(ValueError):
        kink_profile(LatticeSpec(N=16, m0_sq=1.0, lam=1.0))


def test_kink_antikink_profile_cases():
    spec = LatticeSpec.from_kink(200, 3.0, 1.0)
    far = kink_antikink_profile(spec, 100.0)
    assert far.phi[0] == pytest.approx(-3.0, abs=1e-12)
    assert far.phi[-1] == pytest.approx(-3.0, abs=1e-12)
    assert far.phi[np.argmin(np.abs(spec.sites))] == pytest.approx(3.0, abs=1e-12)
    np.testing.assert_allclose(kink_antikink_profile(spec, 0.0).phi, -3.0, atol=1e-14)
    assert abs(topological_charge(spec, far)) < 1e-12


def test_uniform_state_energy():
    spec = LatticeSpec.from_kink(50, 3.0, 2.0)
    vac = ScalarState(np.full(50, 3.0))
    expected = -50 * spec.m0_sq**2 / (4 * spec.lam)
    assert total_energy(spec, vac) == pytest.approx(expected, rel=1e-13)
    dens = energy_density(spec, vac)
    assert np.ptp(dens) == 0.0


def test_relaxed_kink_mass_matches_continuum():
    spec, kink = cached_kink(160, 3.0, 6.0)
    e = total_energy(spec, kink) - spec.N * spec.a * spec.vacuum_energy_density
    M0 = soliton_mass_reference(spec.m0_sq, spec.lam)
    assert e == pytest.approx(M0, rel=0.01)


def test_momentum_shift_energy():
    spec, kink = cached_kink(160, 3.0, 1.0)
    pi = np.linspace(-0.1, 0.2, 160)
    base = ScalarState(kink.phi, pi)
    c = 0.3
    shifted = ScalarState(kink.phi, pi + c)
    delta = total_energy(spec, shifted) - total_energy(spec, base)
    assert delta == pytest.approx(spec.a * (160 * c**2 / 2 + c * pi.sum()), rel=1e-10)


def test_energy_density_peaks_at_kink():
    spec, kink = cached_kink(160, 3.0, 1.0)
    dens = energy_density(spec, kink)
    assert abs(spec.sites[np.argmax(dens)] - 0.5) <= 1.5 * spec.xi0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 2.0))
def test_energy_additivity_and_z2(seed, g):
    r = np.random.default_rng(seed)
    spec = LatticeSpec.from_kink(24, 2.0, 1.5)
    state = ScalarState(r.normal(size=24) * 2, r.normal(size=24))
    occ = r.uniform(size=24)
    dens = energy_density(spec, state, g, occ)
    assert total_energy(spec, state, g, occ) == spec.a * np.sum(dens)
    flipped = ScalarState(-state.phi, -state.pi)
    assert total_energy(spec, flipped) == pytest.approx(total_energy(spec, state), rel=1e-14)


def test_kink_antikink_degeneracy():
    spec = LatticeSpec.from_kink(80, 3.0, 2.0)
    k = kink_profile(spec, SolitonProfile(1, 0.3, 2.0))
    ak = kink_profile(spec, SolitonProfile(-1, 0.3, 2.0))
    assert abs(total_energy(spec, k) - total_energy(spec, ak)) < 1e-12


@pytest.mark.parametrize("N,xi", [(40, 1.0), (40, 2.0), (60, 3.0), (160, 3.0)])
def test_topological_charge_of_kinks(N, xi):
    spec = LatticeSpec.from_kink(N, 3.0, xi)
    assert topological_charge(spec, kink_profile(spec)) == pytest.approx(1.0, abs=1e-6)
    anti = kink_profile(spec, SolitonProfile(-1, 0.0, xi))
    assert topological_charge(spec, anti) == pytest.approx(-1.0, abs=1e-6)
    assert topological_charge(spec, ScalarState(np.full(N, -3.0))) == 0.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_topological_charge_ignores_interior(seed):
    r = np.random.default_rng(seed)
    spec = LatticeSpec.from_kink(40, 3.0, 1.0)
    base = kink_profile(spec)
    phi = base.phi + np.where(np.isin(np.arange(40), [3, 36]), 0.0, r.normal(size=40))
    assert topological_charge(spec, ScalarState(phi)) == topological_charge(spec, base)


def test_soliton_mass_reference():
    assert soliton_mass_reference(-2.0, 2.0 / 9.0) == pytest.approx(12.0, rel=1e-14)
    assert soliton_mass_reference(-2.0, 1e9) < 1e-8
    for mu in (0.3, 1.0, 4.0):
        assert soliton_mass_reference(-mu**2, 0.5, True) < soliton_mass_reference(-mu**2, 0.5)
    with pytest.raises(ValueError):
        soliton_mass_reference(1.0, 1.0)


def test_scalar_dispersion():
    spec = LatticeSpec(N=32, m0_sq=0.7, lam=0.0)
    assert scalar_dispersion(0.0, spec) == pytest.approx(np.sqrt(0.7))
    assert scalar_dispersion(np.pi, spec) == pytest.approx(np.sqrt(0.7 + 4.0))
    k = np.array([1e-2, 2e-2, 4e-2])
    err = np.abs(scalar_dispersion(k, spec) ** 2 - (0.7 + k**2))
    assert np.all(err <= k**4 / 12 * 1.01)
    with pytest.raises(ValueError):
        scalar_dispersion(0.0, LatticeSpec.from_kink(32, 1.0, 1.0))


@pytest.mark.parametrize("m", [0.0, 0.1, 0.5, 0.9, 0.999])
def test_ellipk_against_scipy(m):
    assert ellipk_agm(m) == pytest.approx(ellipk(m), rel=1e-12)


def test_tadpole_mass():
    assert tadpole_mass(1.3, 0.0) == 1.3
    expected = 1.0 - 3 / (2 * np.pi) / np.sqrt(2) * ellipk(0.5)
    assert tadpole_mass(1.0, 1.0, a=2.0) == pytest.approx(expected, rel=1e-12)
    # the correction vanishes as mu a grows
    assert abs(tadpole_mass(1e8, 1.0) - 1e8) < 1e-2
    with pytest.raises(ValueError):
        tadpole_mass(0.0, 1.0)


def test_continuum_zero_mode_shape_and_norm():
    args = dict(g=0.5, lam=2 / 9, xi=2.0, c_f=6.0, x0=0.3)
    x = np.linspace(-10, 10, 201)
    psi = continuum_zero_mode(x, **args)
    assert psi.shape == (201, 2)
    dens = np.sum(np.abs(psi) ** 2, axis=1)
    assert x[np.argmax(dens)] == pytest.approx(0.3, abs=0.05)
    np.testing.assert_allclose(psi[:, 1], 1j * psi[:, 0])
    norm, _ = quad(lambda u: np.sum(np.abs(continuum_zero_mode([u], **args)) ** 2), -np.inf, np.inf, epsabs=1e-12)
    assert norm == pytest.approx(1.0, abs=1e-8)


def test_continuum_zero_mode_matches_lattice():
    # wide kink, moderate coupling: the lattice zero mode approaches the continuum one
    spec, kink = cached_kink(160, 3.0, 6.0)
    p = FermionParams(J=3.0, g=0.3)
    eps, v = gauge_eigensystem(kink.phi, p)
    k = int(np.argmin(np.abs(eps)))
    lat = v[:, k] ** 2
    x = spec.sites
    cont = continuum_zero_mode(x, p.g, spec.lam, spec.xi0, 2 * p.J, x0=0.5)
    target = 2 * np.sum(np.abs(cont) ** 2, axis=1)
    # the lattice mode lives on one sublattice: compare two-site cell sums
    lat_cells = lat[0::2] + lat[1::2]
    cont_cells = 0.5 * (target[0::2] + target[1::2])
    assert np.max(np.abs(lat_cells - cont_cells)) < 1e-2


def test_zero_crossings():
    np.testing.assert_allclose(zero_crossings([-1.0, 1.0, 3.0], [0.0, 1.0, 2.0]), [0.5])
    np.testing.assert_allclose(zero_crossings([-1.0, 0.0, 1.0], [0.0, 1.0, 2.0]), [1.0])
    assert zero_crossings(np.ones(5)).size == 0
