"""Born-Oppenheimer scans of the kink energy landscape.

Kinks are moved by re-sampling a relaxed profile at shifted coordinates; the
fermions, when included, sit in the instantaneous ground state of ``h(phi)``.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator

from .dynamics import relax, scalar_force, verlet_step
from .fermions import (
    FermionParams,
    default_filling,
    gauge_eigensystem,
    midgap_levels,
)
from .lattice import (
    LatticeSpec,
    ScalarState,
    SolitonProfile,
    kink_profile,
    site_parity,
    total_energy,
    zero_crossings,
)

__all__ = [
    "ScanResult",
    "relaxed_kink",
    "translate_kink",
    "pn_scan",
    "pn_barrier",
    "pn_fourier_estimate",
    "zero_mode_energy_scan",
    "kink_antikink_potential",
    "born_oppenheimer_terms",
]


@dataclass
class ScanResult:
    """Energies (or levels) along a grid of soliton positions or separations."""

    positions: np.ndarray
    values: np.ndarray
    metadata: dict = field(default_factory=dict)
    components: dict = field(default_factory=dict)

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.positions.shape != self.values.shape:
            raise ValueError("positions and values must have equal length")
        if np.any(np.diff(self.positions) <= 0):
            raise ValueError("positions must be strictly increasing")

    def to_csv(self, path) -> None:
        """Write ``position, value, <components>`` with one header row."""
        names = sorted(self.components)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["position", "value", *names])
            for i, x in enumerate(self.positions):
                w.writerow([repr(float(x)), repr(float(self.values[i]))] + [repr(float(self.components[n][i])) for n in names])


def relaxed_kink(spec: LatticeSpec, center: float = 0.5, q_t: int = 1, tol: float = 1e-12) -> ScalarState:
    """Relax an analytic kink placed at ``center`` (a link by default)."""
    start = kink_profile(spec, SolitonProfile(q_t, center, spec.xi0 / spec.a))
    return relax(start, spec, tol=tol)


def translate_kink(
    relaxed: ScalarState, x0_shift: float, method: str = "pchip", exclusion: int = 3
) -> ScalarState:
    """Move a stationary kink by ``x0_shift`` sites.

    Fractional shifts re-sample the profile with monotone cubic interpolation
    of the wall coordinate ``artanh(phi / Phi_inf)``, which is exactly linear
    for a continuum kink; ``method="linear"`` interpolates ``phi`` linearly
    instead. Integer shifts are index shifts. Sites beyond the original chain
    take the asymptotic vacuum values.

    Raises
    ------
    ValueError
        If the shifted center falls within ``exclusion`` sites of an end.
    """
    phi = np.asarray(relaxed.phi)
    N = phi.size
    x = np.arange(N) - (N - 1) // 2
    centers = zero_crossings(phi, x)
    if centers.size == 0:
        raise ValueError("profile has no wall to translate")
    new_center = centers[np.argmin(np.abs(centers))] + x0_shift
    if not (x[exclusion] < new_center < x[N - 1 - exclusion]):
        raise ValueError(f"shift moves the kink to {new_center}, inside the boundary zone")
    left, right = phi[0], phi[-1]
    if float(x0_shift).is_integer():
        k = int(x0_shift)
        out = np.empty_like(phi)
        if k > 0:
            out[:k] = left
            out[k:] = phi[: N - k]
        elif k < 0:
            out[k:] = right
            out[:k] = phi[-k:]
        else:
            out[:] = phi
        return ScalarState(out)
    xs = x - x0_shift
    if method == "linear":
        out = np.interp(xs, x, phi, left=left, right=right)
    elif method == "pchip":
        scale = max(abs(left), abs(right))
        lim = 1.0 - 1e-15
        u = np.arctanh(np.clip(phi / scale, -lim, lim))
        v = PchipInterpolator(x, u, extrapolate=False)(xs)
        v = np.where(xs < x[0], u[0], np.where(xs > x[-1], u[-1], v))
        out = scale * np.tanh(v)
    else:
        raise ValueError(f"unknown interpolation method {method!r}")
    return ScalarState(out)


def born_oppenheimer_terms(phi, p: FermionParams, n_filled: int | None = None):
    """Yukawa energy ``sum_n g (-1)^n phi_n C_nn`` and spectrum in the ground state of ``h(phi)``.

    Returns ``(yukawa, eps, occ)``.
    """
    phi = np.asarray(phi)
    eps, v = gauge_eigensystem(phi, p)
    n_f = default_filling(phi.size) if n_filled is None else n_filled
    occ = np.sum(v[:, :n_f] ** 2, axis=1)
    yuk = float(p.g * np.sum(site_parity(phi.size) * phi * occ))
    return yuk, eps, occ


def _map(fn, items, threads):
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(fn, items))
    return [fn(i) for i in items]


def pn_scan(
    spec: LatticeSpec,
    p: FermionParams | None,
    x0_grid,
    with_fermions: bool = True,
    relaxed: ScalarState | None = None,
    base_center: float = 0.5,
    method: str = "pchip",
    threads: int = 1,
) -> ScanResult:
    """Static energy of a kink translated to each position in ``x0_grid``.

    The static energy uses the full lattice Hamiltonian at ``pi = 0``. With
    fermions, the Yukawa expectation in the instantaneous ground state (filled
    through the zero mode) is added.
    """
    if relaxed is None:
        relaxed = relaxed_kink(spec, base_center)
    grid = np.asarray(x0_grid, dtype=float)
    use_f = with_fermions and p is not None and p.g > 0

    def point(x0):
        st = translate_kink(relaxed, x0 - base_center, method)
        e = total_energy(spec, st)
        if not use_f:
            return e, 0.0, np.nan
        yuk, eps, _ = born_oppenheimer_terms(st.phi, p)
        return e + yuk, yuk, eps[default_filling(spec.N) - 1]

    res = np.array(_map(point, grid, threads))
    meta = {"kind": "pn_scan", "with_fermions": bool(use_f), "method": method}
    if p is not None:
        meta.update(J=p.J, g=p.g, m_f=p.m_f)
    comps = {"scalar": res[:, 0] - res[:, 1], "yukawa": res[:, 1]}
    if use_f:
        comps["zero_mode_energy"] = res[:, 2]
    out = ScanResult(grid, res[:, 0], meta, comps)
    out.metadata["reference"] = float(np.min(out.values))
    return out


def pn_barrier(scan: ScanResult, period: float | None = None) -> dict:
    """Barrier ``max - min`` and the escape barrier of each inequivalent well.

    A well is a local minimum with maxima on both sides within the scan; its
    escape barrier is the lower of those two maxima minus its value. Wells
    are grouped by position modulo ``period`` (2 sites when the scan includes
    fermions, else 1) and one barrier per class is returned, largest first.
    """
    v = scan.values
    x = scan.positions
    out = {"barrier": float(np.max(v) - np.min(v))}
    if period is None:
        period = 2.0 if scan.metadata.get("with_fermions") else 1.0
    mins = [i for i in range(1, v.size - 1) if v[i] <= v[i - 1] and v[i] < v[i + 1]]
    maxs = [i for i in range(1, v.size - 1) if v[i] >= v[i - 1] and v[i] > v[i + 1]]
    step = np.min(np.diff(x)) if x.size > 1 else 1.0
    classes = {}
    for i in mins:
        lo = [j for j in maxs if j < i]
        hi = [j for j in maxs if j > i]
        if not lo or not hi:
            continue
        key = int(np.round((x[i] % period) / step)) % max(int(np.round(period / step)), 1)
        classes.setdefault(key, float(min(v[lo[-1]], v[hi[0]]) - v[i]))
    out["sub_barriers"] = sorted(classes.values(), reverse=True)
    return out


def pn_fourier_estimate(spec: LatticeSpec) -> float:
    """Leading-harmonic amplitude ``V0`` of the continuum PN potential.

    ``V(x0) ~ M0 + V0 cos(2 pi x0 / a)`` with ``V0 = 2 Vt(2 pi / a)`` from the
    Poisson sum over lattice sites, where
    ``Vt(q) = (pi m^2 / 3 lam) q (1 + q^2/m^2) / sinh(pi q / m)`` is the
    Fourier transform of the kink energy density and ``m = sqrt(2 |m0^2|)``
    the fluctuation mass (``Vt(0) = M0``).
    """
    if not spec.broken:
        raise ValueError("requires m0_sq < 0")
    m = np.sqrt(-2.0 * spec.m0_sq)
    q = 2.0 * np.pi / spec.a
    arg = np.pi * q / m
    # q / sinh(arg) written to stay finite for large arguments
    ratio = 2.0 * q * np.exp(-arg) / (-np.expm1(-2.0 * arg))
    return float(2.0 * np.pi * m**2 / (3.0 * spec.lam) * ratio * (1.0 + q**2 / m**2))


def zero_mode_energy_scan(
    spec: LatticeSpec,
    p: FermionParams,
    x0_grid,
    relaxed: ScalarState | None = None,
    base_center: float = 0.5,
    method: str = "pchip",
    threads: int = 1,
) -> ScanResult:
    """Energy ``eps_{N_f}`` of the last filled level versus kink position."""
    if relaxed is None:
        relaxed = relaxed_kink(spec, base_center)
    grid = np.asarray(x0_grid, dtype=float)
    n_f = default_filling(spec.N)

    def point(x0):
        st = translate_kink(relaxed, x0 - base_center, method)
        eps, _ = gauge_eigensystem(st.phi, p)
        return eps[n_f - 1]

    vals = np.array(_map(point, grid, threads))
    return ScanResult(grid, vals, {"kind": "zero_mode_energy", "J": p.J, "g": p.g})


def _pair_profile(kink: ScalarState, d: float, Phi0: float, center: float = 0.0) -> np.ndarray:
    # relaxed kink at center - d/2 plus relaxed antikink at center + d/2 on a -Phi0 background
    c = zero_crossings(kink.phi)
    c = c[np.argmin(np.abs(c))]
    left = translate_kink(kink, center - d / 2 - c, exclusion=0).phi
    right = translate_kink(kink, center + d / 2 - c, exclusion=0).phi
    return left - right - Phi0


def _constrained_relax(phi, spec: LatticeSpec, kappa=0.2, tol=1e-9, max_steps=200_000):
    """Damped relaxation with both wall-translation directions projected out."""
    x = spec.sites
    mask_l = x < 0
    dt = 0.05

    def basis(f):
        grad = np.gradient(f)
        t1 = np.where(mask_l, grad, 0.0)
        t2 = np.where(mask_l, 0.0, grad)
        q, _ = np.linalg.qr(np.stack([t1, t2], axis=1))
        return q

    pi = np.zeros_like(phi)
    Q = basis(phi)
    for n in range(max_steps):
        phi, pi = verlet_step(phi, pi, spec, dt, kappa)
        if n % 10 == 0:
            Q = basis(phi)
        pi = pi - Q @ (Q.T @ pi)
        if n % 20 == 0:
            f = scalar_force(phi, spec)
            f = f - Q @ (Q.T @ f)
            if max(np.max(np.abs(f)), np.max(np.abs(pi))) < tol:
                break
    return phi


def kink_antikink_potential(
    spec: LatticeSpec,
    p: FermionParams | None,
    d_grid,
    with_fermions: bool = True,
    mode: str = "interpolated",
    occupation: str = "both",
    d_ref: float | None = None,
    threads: int = 1,
    tol: float = 1e-9,
) -> ScanResult:
    """Interaction energy of a kink-antikink pair versus separation ``d``.

    ``mode="interpolated"`` superposes a translated relaxed kink and antikink.
    ``mode="relaxed"`` additionally relaxes that superposition with both wall
    translations projected out; a relaxed point is kept only if both walls
    stay within 0.25 sites of ``-/+ d/2``, otherwise the superposition is used
    (``components["relaxed"]`` records which). ``d <= 0`` always uses the
    superposition. The value at ``d_ref`` (default ``N a / 2``) is subtracted.

    ``occupation`` fills ``both``, ``one`` or ``none`` of the two mid-gap levels.
    """
    if mode not in ("relaxed", "interpolated"):
        raise ValueError(f"unknown mode {mode!r}")
    kink = relaxed_kink(spec, 0.5)
    use_f = with_fermions and p is not None and p.g > 0
    grid = np.asarray(d_grid, dtype=float)
    if d_ref is None:
        d_ref = spec.N / 2.0

    def energy(d):
        phi = _pair_profile(kink, d, spec.Phi0)
        relaxed = 0.0
        if mode == "relaxed" and d > 0:
            trial = _constrained_relax(phi.copy(), spec, tol=tol)
            walls = zero_crossings(trial)
            if walls.size == 2 and np.all(np.abs(walls - np.array([-d / 2, d / 2])) < 0.25):
                phi, relaxed = trial, 1.0
        e = total_energy(spec, ScalarState(phi))
        yuk = 0.0
        if use_f:
            eps, _ = gauge_eigensystem(phi, p)
            n_f = pair_filling(eps, occupation)
            yuk, _, _ = born_oppenheimer_terms(phi, p, n_f)
        return e + yuk, yuk, relaxed

    res = np.array(_map(energy, grid, threads))
    ref, ref_y, _ = energy(d_ref)
    meta = {"kind": "kink_antikink", "mode": mode, "occupation": occupation, "d_ref": d_ref, "reference": ref, "with_fermions": bool(use_f)}
    if p is not None:
        meta.update(J=p.J, g=p.g)
    return ScanResult(grid, res[:, 0] - ref, meta, {"yukawa": res[:, 1] - ref_y, "relaxed": res[:, 2]})


def pair_filling(eps, occupation: str = "both") -> int:
    """Number of filled levels for a kink-antikink pair.

    Everything below the two mid-gap levels is filled, plus two, one or none
    of them.
    """
    extra = {"both": 2, "one": 1, "none": 0}
    if occupation not in extra:
        raise ValueError(f"occupation must be one of {sorted(extra)}")
    low = midgap_levels(eps, 2)[0]
    return int(low + extra[occupation])
