"""Acceptance runs at the stated parameters and tolerances.

Each test records one PASS/FAIL line (printed in the terminal summary) and
then asserts the verdict. Runs longer than a few minutes carry the ``slow``
marker.
"""

import math

import numpy as np
import pytest

from jrlattice.adiabatic import pn_barrier, pn_scan, relaxed_kink, translate_kink, zero_mode_energy_scan
from jrlattice.dynamics import IntegratorConfig, evolve
from jrlattice.fermions import (
    FermionParams,
    accumulated_charge,
    chern_simons_extrapolated,
    default_filling,
    eigensystem,
    fermion_hamiltonian,
    gauge_eigensystem,
    ground_correlation,
)
from jrlattice.ions import TrapParams, bare_mass, critical_ratio, fermi_velocity, ion_dispersion, lattice_parameters
from jrlattice.lattice import LatticeSpec, ScalarState, scalar_dispersion, site_coordinates, total_energy
from jrlattice.modes import elasticity_matrix, lowest_omega_sq_extended, normal_modes, wigner_ground_state
from jrlattice.twa import (
    ExperimentConfig,
    collision_experiment,
    collision_setup,
    fit_power_law,
    release_front_speed,
    run_ensemble,
    separation_oscillation,
    width_series,
)

from conftest import cached_kink, report


def test_criterion_01_fractional_charge():
    spec, kink = cached_kink(160, 3.0, 1.0)
    es = eigensystem(fermion_hamiltonian(kink.phi, FermionParams(3.0, 0.8)))
    C = ground_correlation(es)
    exclusion = 3
    dq = accumulated_charge(C, exclusion)
    total = dq[-1]
    zero = np.abs(es.modes[:, default_filling(spec.N) - 1]) ** 2
    # running half zero-mode weight over sites up to the left end of each link
    expected = 0.5 * np.cumsum(zero)[exclusion : spec.N - 1 - exclusion]
    pointwise = float(np.max(np.abs(dq - expected)))
    ok_total = abs(total - 0.5) <= 0.02
    ok_point = pointwise <= 0.01
    report(1, ok_total and ok_point, f"dQ = {total:.4f} (0.50 +- 0.02), max pointwise deviation {pointwise:.3g} (tol 0.01)")
    assert ok_total
    assert ok_point


def test_criterion_02_zero_mode_pinning():
    spec, link = cached_kink(160, 3.0, 1.0)
    p = FermionParams(3.0, 0.8)
    n_f = default_filling(spec.N)
    site = relaxed_kink(spec, 0.0)
    eps_site = gauge_eigensystem(site.phi, p)[0][n_f - 1]
    grid = np.array([-1.5, -0.5, 0.5, 1.5, 2.5])
    v = zero_mode_energy_scan(spec, p, grid, relaxed=link).values
    left, right = v[1], v[2]
    period = max(abs(v[0] - right), abs(v[1] - v[3]), abs(v[2] - v[4]))
    ok = (
        abs(eps_site) < 1e-10
        and min(abs(left), abs(right)) > 1e-3
        and abs(left - right) > 1e-3
        and period < 1e-8
    )
    report(2, ok, f"site eps = {eps_site:.2e}; links eps = {left:.4f}, {right:.4f}; period-2 residual {period:.1e}")
    assert ok


def test_criterion_03_pn_periodicity_and_doubling():
    spec, kink = cached_kink(160, 3.0, 1.0)
    grid = 0.5 + np.arange(-16, 17) / 8.0

    def scan(g):
        return pn_scan(spec, FermionParams(3.0, g), grid, relaxed=kink)

    v0 = scan(0.0).values
    period1 = float(np.max(np.abs(v0[8:] - v0[:-8])))
    subs = {g: pn_barrier(scan(g))["sub_barriers"] for g in (0.2, 0.4, 0.8)}
    two = len(subs[0.2]) == 2 and subs[0.2][0] > subs[0.2][1] * (1 + 1e-3)
    big = [subs[g][0] for g in (0.2, 0.4, 0.8)]
    growing = big[0] < big[1] < big[2]
    ok = period1 < 1e-8 and two and growing
    report(3, ok, f"g=0 period-1 residual {period1:.1e}; g=0.2 sub-barriers {np.round(subs[0.2], 4).tolist()}; larger barrier {np.round(big, 4).tolist()}")
    assert ok


def test_criterion_04_linear_stability():
    rows = []
    for xi in np.arange(1.0, 6.01, 0.5):
        spec = LatticeSpec.from_kink(160, 3.0, float(xi))
        site = lowest_omega_sq_extended(relaxed_kink(spec, 0.0), spec)
        link = lowest_omega_sq_extended(relaxed_kink(spec, 0.5), spec)
        rows.append((xi, site, link))
    ok = all(s < 0 < l for _, s, l in rows)
    worst = min(rows, key=lambda r: min(-r[1], r[2]))
    report(4, ok, f"site < 0 < link for xi0 in [1, 6]; smallest |Omega0^2| {worst[2]:.2e} at xi0 = {worst[0]}")
    assert ok


def test_criterion_05_integrator_quality():
    spec, kink = cached_kink(160, 3.0, 1.0)
    r = np.random.default_rng(5)
    start = ScalarState(kink.phi + 0.01 * r.standard_normal(160), 0.01 * r.standard_normal(160))
    cfg = IntegratorConfig(0.01, steps=100_000)
    tr = evolve(start, spec, cfg, observers={"E": lambda t, s: total_energy(spec, s)}, stride=1000)
    E = tr.samples["E"]
    drift = float(np.max(np.abs(E - E[0])) / abs(E[0]))
    back = evolve(ScalarState(tr.final.phi, -tr.final.pi), spec, cfg).final
    rev = float(max(np.max(np.abs(back.phi - start.phi)), np.max(np.abs(back.pi + start.pi))))
    ok = drift < 1e-6 and rev < 1e-8
    report(5, ok, f"|dE|/E = {drift:.2e} over 1e5 steps; time-reversal error {rev:.2e}")
    assert ok


def test_criterion_06_twa_exactness_oracle():
    spec = LatticeSpec(N=64, m0_sq=1.0, lam=0.0)
    x = site_coordinates(64)
    bg = ScalarState(0.8 * np.exp(-((x / 4.0) ** 2)), 0.3 * np.sin(x / 3.0) * np.exp(-((x / 8.0) ** 2)))
    w = wigner_ground_state(bg, spec)
    cfg = ExperimentConfig(spec, None, w, 0.01, 20.0, record_stride=50, n_traj=2000, seed=6, observables=("phi",))
    res = run_ensemble(cfg)
    basis = normal_modes(elasticity_matrix(bg, spec))
    M, omega = basis.modes, np.sqrt(basis.omega_sq)
    q0, p0 = M.T @ bg.phi, M.T @ bg.pi
    exact = np.array([M @ (q0 * np.cos(omega * t) + p0 / omega * np.sin(omega * t)) for t in res.times])
    z = np.abs(res.mean["phi"] - exact) / res.stderr["phi"]
    worst = float(z.max())
    ok = worst < 5.0
    report(6, ok, f"max |<phi> - exact| / stderr = {worst:.2f} over {res.times.size} times x 64 sites (tol 5)")
    assert ok


@pytest.mark.slow
def test_criterion_07_diffusion_exponent():
    spec, kink = cached_kink(100, 5.0, 3.0)
    with pytest.warns(RuntimeWarning):
        w = wigner_ground_state(kink, spec)
    cfg = ExperimentConfig(spec, None, w, 0.01, 30.0, record_stride=10, n_traj=500, seed=11, observables=("phi",))
    res = run_ensemble(cfg)
    t, xi, _ = width_series(res.times, res.mean["phi"])
    fit = fit_power_law(t, xi)
    alpha = fit.params["alpha"]
    ok = abs(alpha - 0.61) <= 0.15
    report(7, ok, f"alpha = {alpha:.3f} +- {fit.ci95['alpha']:.3f} (0.61 +- 0.15), fit window t <= {t[-1]:.1f}")
    assert ok


@pytest.fixture(scope="module")
def pinning_runs():
    spec, kink = cached_kink(160, 3.0, 1.0)
    w = wigner_ground_state(kink, spec)
    out = {}
    for g in (10.0 / 3.0, 0.0):
        cfg = ExperimentConfig(
            spec, FermionParams(10.0, g), w, 0.02, 15.0, record_stride=25, n_traj=500, seed=7, observables=("phi",)
        )
        res = run_ensemble(cfg)
        t, xi, _ = width_series(res.times, res.mean["phi"])
        out[g] = (res, t, xi)
    return out


@pytest.mark.slow
def test_criterion_08_back_reaction_pinning(pinning_runs):
    _, t_pin, xi_pin = pinning_runs[10.0 / 3.0]
    _, t_free, xi_free = pinning_runs[0.0]
    r_pin = xi_pin[-1] / xi_pin[0]
    r_free = xi_free[-1] / xi_free[0]
    full = t_pin[-1] == pytest.approx(15.0) and t_free[-1] == pytest.approx(15.0)
    ok = full and r_pin < 1.5 and r_free > 3.0
    report(8, ok, f"xi(15)/xi(0): pinned {r_pin:.3f} (< 1.5), g=0 {r_free:.3f} (> 3)")
    assert ok


@pytest.mark.slow
def test_criterion_09_fermion_state_invariants(pinning_runs):
    res = pinning_runs[10.0 / 3.0][0]
    tr = res.diagnostics["trace_error"]
    idem = res.diagnostics["idempotency_error"]
    ok = tr < 1e-8 and idem < 1e-6
    report(9, ok, f"max |tr C - N_f| = {tr:.1e}, max |C^2 - C| = {idem:.1e} over {res.n_traj} trajectories")
    assert ok


def _classical_collision(g, J, t_max, stride, observables):
    spec = LatticeSpec.from_kink(160, 5.0, 5.0)
    w, _ = collision_setup(spec, 40.0, -2.0, frozen_all=True)
    cfg = ExperimentConfig(
        spec, FermionParams(J, g), w, 0.1, t_max, record_stride=stride, zero_mode_occupation="both", observables=observables
    )
    return collision_experiment(cfg, 40.0, -2.0)


def test_criterion_10_classical_collision_regimes():
    verdict = {}
    for g in (0.02, 0.24):
        res, summary = _classical_collision(g, 3.0, 200.0, 5, ("phi",))
        sep = res.per_trajectory["separation"][0]
        verdict[g] = (summary["classes"][0], separation_oscillation(sep, summary["initial_separation"]))
    osc = verdict[0.24][1]
    regimes = verdict[0.02][0] == "reflection" and verdict[0.24][0] == "bion" and osc["bounded"] and osc["mergers"] >= 2

    speeds = {}
    for J in (0.3, 3.0):
        res, _ = _classical_collision(0.06, J, 90.0, 2, ("phi", "dq"))
        t = res.times
        sep = res.per_trajectory["separation"][0]
        k = np.searchsorted(t, 15.0)
        soliton = -np.polyfit(t[:k], 0.5 * sep[:k], 1)[0]
        front, _, _ = release_front_speed(t, res.mean["dq"], sep)
        speeds[J] = (front, soliton)
    slow_ok = speeds[0.3][0] <= speeds[0.3][1]
    fast_ok = abs(speeds[3.0][0] - 6.0) <= 0.25 * 6.0
    ok = regimes and slow_ok and fast_ok
    report(
        10,
        ok,
        f"g=0.02 {verdict[0.02][0]}, g=0.24 {verdict[0.24][0]} (bounded {osc['bounded']}, {osc['mergers']} mergers); "
        f"fronts Ja=0.3 {speeds[0.3][0]:.2f} (soliton {speeds[0.3][1]:.2f}), Ja=3 {speeds[3.0][0]:.2f} (2Ja = 6)",
    )
    assert ok


@pytest.mark.slow
def test_criterion_11_twa_collisions():
    spec = LatticeSpec.from_kink(160, 5.0, 5.0)
    out = {}
    for g in (0.02, 0.24):
        w, _ = collision_setup(spec, 40.0, -2.0)
        cfg = ExperimentConfig(
            spec, FermionParams(3.0, g), w, 0.1, 120.0, record_stride=5, n_traj=500, seed=3,
            zero_mode_occupation="both", observables=("phi",),
        )
        _, summary = collision_experiment(cfg, 40.0, -2.0)
        out[g] = summary
    ok = out[0.02]["mean_field_class"] == "reflection" and out[0.24]["mean_field_class"] == "bion"
    report(
        11,
        ok,
        f"ensemble-mean class g=0.02 {out[0.02]['mean_field_class']} {out[0.02]['counts']}, "
        f"g=0.24 {out[0.24]['mean_field_class']} {out[0.24]['counts']}",
    )
    assert ok


def test_criterion_12_chern_simons():
    plus = chern_simons_extrapolated(1.0, 1.0)
    minus = chern_simons_extrapolated(1.0, -1.0)
    ok = abs(plus - 0.5) < 1e-3 and abs(minus + 0.5) < 1e-3
    report(12, ok, f"CS(q_t=+1) = {plus:.6f}, CS(q_t=-1) = {minus:.6f}")
    assert ok


def test_criterion_13_ion_mapping():
    m = 171 * 1.66053906660e-27
    wx, wy, a, n = 2 * np.pi * 1e5, 2 * np.pi * 5e6, 5e-6, 200

    def trap(wz):
        return TrapParams.from_mass(wx, wy, wz, n, a, m)

    wz_c = wx / math.sqrt(critical_ratio(trap(2 * np.pi * 1e6)))
    crit = trap(wz_c)
    m_lat = abs(lattice_parameters(crit)["m0_sq"])
    m_rel = abs(bare_mass(crit)) / abs(bare_mass(trap(2 * wz_c)))
    vf = fermi_velocity([0.7], a=2.0)
    near = trap(1.05 * wz_c)
    lat = lattice_parameters(near)
    spec = LatticeSpec(N=n, m0_sq=lat["m0_sq"], lam=lat["lam"])
    worst = 0.0
    for qa in (0.02, 0.05, 0.1, 0.2):
        ion = ion_dispersion(np.pi / a - qa / a, near) * a / lat["c_b"]
        latt = scalar_dispersion(qa, spec)
        worst = max(worst, abs(ion**2 - latt**2) / (qa**2 * (lat["m0_sq"] + qa**2)))
    ok = m_lat < 1e-12 and m_rel < 1e-12 and vf == 2 * 2.0 * 0.7 and worst <= 1.0
    report(13, ok, f"lattice m0^2 at critical ratio {m_lat:.1e}; v_F = {vf} (2aJ = 2.8); dispersion mismatch {worst:.2f} x q^2(m^2+q^2)")
    assert ok
