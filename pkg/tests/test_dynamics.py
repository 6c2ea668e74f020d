import numpy as np
import pytest

from jrlattice.adiabatic import relaxed_kink
from jrlattice.dynamics import IntegratorConfig, RelaxationError, evolve, relax, step
from jrlattice.lattice import LatticeSpec, ScalarState, SolitonProfile, kink_profile, soliton_mass_reference, total_energy, zero_crossings
from jrlattice.twa import fit_kink

from conftest import cached_kink


def test_integrator_config_validation():
    for bad in (dict(dt=0.0), dict(dt=-1.0), dict(dt=0.1, kappa=-1.0), dict(dt=0.1, steps=-1)):
        with pytest.raises(ValueError):
            IntegratorConfig(**bad)


def test_vacuum_is_fixed_point():
    spec = LatticeSpec.from_kink(64, 3.0, 1.0)
    vac = ScalarState(np.full(64, 3.0))
    out = evolve(vac, spec, IntegratorConfig(0.01, steps=500)).final
    np.testing.assert_allclose(out.phi, 3.0, atol=1e-13)
    np.testing.assert_allclose(out.pi, 0.0, atol=1e-13)


def test_energy_drift_short_run():
    spec, kink = cached_kink(100, 3.0, 2.0)
    r = np.random.default_rng(0)
    start = ScalarState(kink.phi + 1e-3 * r.normal(size=100))
    obs = {"E": lambda t, s: total_energy(spec, s)}
    tr = evolve(start, spec, IntegratorConfig(0.01, steps=20_000), observers=obs, stride=100)
    E = tr.samples["E"]
    assert np.max(np.abs(E - E[0])) / abs(E[0]) < 1e-6


def test_damping_is_monotone():
    spec = LatticeSpec.from_kink(60, 3.0, 1.0)
    r = np.random.default_rng(1)
    start = ScalarState(kink_profile(spec).phi + 0.2 * r.normal(size=60), 0.3 * r.normal(size=60))
    obs = {"E": lambda t, s: total_energy(spec, s)}
    E = evolve(start, spec, IntegratorConfig(0.02, kappa=0.5, steps=2000), observers=obs).samples["E"]
    assert np.all(np.diff(E) <= 1e-12 * np.abs(E[1:]))


def test_relax_site_centred_stays():
    spec = LatticeSpec.from_kink(61, 3.0, 2.0)
    out = relax(kink_profile(spec, SolitonProfile(1, 0.0, 1.3)), spec)
    assert zero_crossings(out.phi)[0] == 0.0


@pytest.mark.parametrize("xi", [3.0, 4.0, 6.0])
def test_relax_link_centred_width(xi):
    spec, kink = cached_kink(120, 3.0, xi)
    fit = fit_kink(kink.phi)
    assert fit.params["xi"] == pytest.approx(xi, rel=0.02)
    assert fit.params["n0"] == pytest.approx(0.5, abs=1e-8)


def test_relax_vacuum_unchanged():
    spec = LatticeSpec.from_kink(40, 2.0, 1.0)
    vac = ScalarState(np.full(40, -2.0))
    np.testing.assert_array_equal(relax(vac, spec).phi, vac.phi)


def test_relax_raises_when_out_of_steps():
    spec = LatticeSpec.from_kink(40, 2.0, 1.0)
    start = ScalarState(np.linspace(-3, 3, 40))
    with pytest.raises(RelaxationError):
        relax(start, spec, max_steps=5)
    with pytest.raises(ValueError):
        relax(start, spec, kappa=0.0)


def test_evolve_zero_steps_and_stride():
    spec, kink = cached_kink(60, 3.0, 1.0)
    tr = evolve(kink, spec, IntegratorConfig(0.01, steps=0), observers={"phi": lambda t, s: s.phi})
    np.testing.assert_array_equal(tr.final.phi, kink.phi)
    assert tr.times.tolist() == [0.0]
    tr = evolve(kink, spec, IntegratorConfig(0.01, steps=5), observers={"phi": lambda t, s: s.phi}, stride=10)
    assert tr.times.tolist() == [0.0]
    assert tr.samples["phi"].shape == (1, 60)


def test_time_reversal():
    spec, kink = cached_kink(80, 3.0, 2.0)
    r = np.random.default_rng(2)
    start = ScalarState(kink.phi + 0.05 * r.normal(size=80), 0.05 * r.normal(size=80))
    cfg = IntegratorConfig(0.01, steps=5000)
    mid = evolve(start, spec, cfg).final
    back = evolve(ScalarState(mid.phi, -mid.pi), spec, cfg).final
    assert np.max(np.abs(back.phi - start.phi)) < 1e-8
    assert np.max(np.abs(-back.pi - start.pi)) < 1e-8


def test_step_force_and_errors():
    spec = LatticeSpec.from_kink(20, 1.0, 1.0)
    vac = ScalarState(np.ones(20))
    f = np.zeros(20)
    f[5] = 1.0
    out = step(vac, spec, IntegratorConfig(0.1), force=f)
    assert out.pi[5] == pytest.approx(0.1, rel=0.05)
    assert abs(out.pi[4]) < 1e-3 and out.pi[0] == 0.0
    called = []
    step(vac, spec, IntegratorConfig(0.1), force=lambda t, s: called.append(t) or f, t=0.7)
    assert called == [0.7]
    with pytest.raises(ValueError):
        step(vac, spec, IntegratorConfig(0.1), force=np.zeros(3))
    with pytest.raises(FloatingPointError), np.errstate(over="ignore", invalid="ignore"):
        step(ScalarState(np.full(20, 1e100)), spec, IntegratorConfig(0.1))


def test_site_vs_link_energy_gap_small_for_wide_kinks():
    spec = LatticeSpec.from_kink(160, 3.0, 6.0)
    link = relaxed_kink(spec, 0.5)
    site = relaxed_kink(spec, 0.0)
    M0 = soliton_mass_reference(spec.m0_sq, spec.lam)
    bound = np.exp(-np.pi * spec.xi0) * M0 * 10
    assert abs(total_energy(spec, link) - total_energy(spec, site)) < bound
