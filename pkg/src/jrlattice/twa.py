"""Truncated-Wigner ensembles of the scalar field coupled to a fermionic Gaussian state.

Each trajectory samples ``(phi, pi)`` from a Wigner distribution and evolves
it classically while the fermions carry a full correlation matrix. The
fermion state is stored as its occupied orbitals in the real gauge
(``c_n -> i^n c_n``), so ``C = conj(W) W^T`` and the site densities are
``sum_nu |W_n nu|^2``.

Per step (``splitting="lie"``): a velocity-Verlet step of the scalar field
under the lambda-phi^4 force plus ``-(g/a) (-1)^n C_nn(t)``, then the exact
fermion step ``exp(-i h dt)`` with ``h = h(phi(t + dt))``. ``splitting="strang"``
wraps the scalar step in two fermion half steps with ``h(phi(t))`` and
``h(phi(t + dt))``, using the density at mid step.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.linalg import eigh_tridiagonal

from .adiabatic import _pair_profile, pair_filling, relaxed_kink
from .dynamics import verlet_step
from .fermions import (
    FermionParams,
    default_filling,
    density_observables,
)
from .lattice import LatticeSpec, ScalarState, scalar_dispersion, site_coordinates, site_parity, zero_crossings
from .modes import ModeBasis, WignerSpec, elasticity_matrix, normal_modes, sample_initial, wigner_ground_state

__all__ = [
    "ExperimentConfig",
    "TrajectoryRecord",
    "EnsembleResult",
    "FitResult",
    "TrajectoryError",
    "trajectory_rng",
    "run_trajectory",
    "run_ensemble",
    "fit_kink",
    "width_series",
    "fit_accumulated_charge",
    "fit_power_law",
    "link_coordinates",
    "wall_separation",
    "classify_separation",
    "collision_setup",
    "collision_experiment",
    "separation_oscillation",
    "charge_fronts",
    "collision_time",
    "release_front_speed",
    "front_speed",
    "light_cone_violation",
    "max_group_velocity",
]

OBSERVABLES = ("phi", "energy", "rho", "dq", "condensate")


class TrajectoryError(RuntimeError):
    """A trajectory of an ensemble failed; ``index`` identifies it."""

    def __init__(self, index: int, cause: BaseException):
        super().__init__(f"trajectory {index} failed: {cause}")
        self.index = index


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything that determines an ensemble run.

    Parameters
    ----------
    spec : LatticeSpec
    fparams : FermionParams or None
        ``None`` removes the fermion sector entirely.
    wigner : WignerSpec
        Initial phase-space distribution.
    dt, t_max : float
        Time step and final time; ``round(t_max / dt)`` steps are taken.
    record_stride : int
        Observables are recorded every ``record_stride`` steps, starting at 0.
    n_traj : int
    seed : int
        Unsigned 64-bit seed; trajectory ``i`` uses the stream ``(seed, i)``.
    fermion_mode : {"unitary", "adiabatic"}
        ``adiabatic`` re-projects onto the instantaneous ground state every step.
    zero_mode_occupation : {"default", "both", "one", "none"}
        ``default`` fills ``(N + 1) // 2`` levels (single-kink sector); the
        others fill the levels below the two mid-gap states plus two, one or
        none of them (kink-antikink sector).
    splitting : {"lie", "strang"}
    propagator : {"spectral", "taylor"}
        Fermion step from the eigendecomposition of ``h`` or from a Taylor
        series of ``exp(-i h dt)`` on the tridiagonal ``h``, truncated below
        roundoff. Both are exact to machine precision.
    observables : tuple of str
        Subset of ``phi, energy, rho, dq, condensate, separation``.
    exclusion : int
        Links dropped at each end of the accumulated charge.
    threads : int
        Worker threads; results do not depend on it.
    check_invariants : bool
        Record ``|tr C - N_f|`` and ``max|C^2 - C|`` at every recorded time.
    """

    spec: LatticeSpec
    fparams: FermionParams | None
    wigner: WignerSpec
    dt: float
    t_max: float
    record_stride: int = 1
    n_traj: int = 1
    seed: int = 0
    fermion_mode: str = "unitary"
    zero_mode_occupation: str = "default"
    splitting: str = "lie"
    propagator: str = "spectral"
    observables: tuple = OBSERVABLES
    exclusion: int = 3
    threads: int = 1
    check_invariants: bool = True

    def __post_init__(self):
        if not (self.dt > 0 and np.isfinite(self.dt)):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.t_max >= 0:
            raise ValueError("t_max must be non-negative")
        if int(self.n_traj) != self.n_traj or self.n_traj < 1:
            raise ValueError(f"n_traj must be >= 1, got {self.n_traj}")
        if self.record_stride < 1:
            raise ValueError("record_stride must be >= 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if self.fermion_mode not in ("unitary", "adiabatic"):
            raise ValueError(f"unknown fermion_mode {self.fermion_mode!r}")
        if self.zero_mode_occupation not in ("default", "both", "one", "none"):
            raise ValueError(f"unknown zero_mode_occupation {self.zero_mode_occupation!r}")
        if self.splitting not in ("lie", "strang"):
            raise ValueError(f"unknown splitting {self.splitting!r}")
        if self.propagator not in ("spectral", "taylor"):
            raise ValueError(f"unknown propagator {self.propagator!r}")
        unknown = set(self.observables) - set(OBSERVABLES) - {"separation"}
        if unknown:
            raise ValueError(f"unknown observables {sorted(unknown)}")
        if self.wigner.background.N != self.spec.N:
            raise ValueError("Wigner background and lattice disagree on N")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        object.__setattr__(self, "observables", tuple(self.observables))

    @property
    def n_steps(self) -> int:
        return int(round(self.t_max / self.dt))

    @property
    def coupled(self) -> bool:
        return self.fparams is not None and self.fparams.g != 0

    @property
    def times(self) -> np.ndarray:
        idx = np.arange(0, self.n_steps + 1, self.record_stride)
        return idx * self.dt


@dataclass
class TrajectoryRecord:
    """Recorded observables of one trajectory, each with leading time axis."""

    times: np.ndarray
    data: dict
    diagnostics: dict = field(default_factory=dict)

    def __getitem__(self, name):
        return self.data[name]


@dataclass
class EnsembleResult:
    """Per-time means and standard errors over ``n_traj`` trajectories."""

    times: np.ndarray
    mean: dict
    stderr: dict
    n_traj: int
    diagnostics: dict = field(default_factory=dict)
    per_trajectory: dict = field(default_factory=dict)

    def to_jsonl(self, path, manifest_hash: str | None = None) -> None:
        """One JSON object per recorded time with means and standard errors."""
        with open(path, "w") as fh:
            for k, t in enumerate(self.times):
                rec = {"t": float(t)}
                if manifest_hash is not None:
                    rec["manifest"] = manifest_hash
                for name in sorted(self.mean):
                    rec[name] = np.asarray(self.mean[name][k]).tolist()
                    rec[name + "_err"] = np.asarray(self.stderr[name][k]).tolist()
                fh.write(json.dumps(rec) + "\n")


def trajectory_rng(seed: int, index: int) -> np.random.Generator:
    """Counter-based stream for trajectory ``index``: Philox keyed by ``(seed, index)``."""
    if not (0 <= seed < 2**64 and 0 <= index < 2**64):
        raise ValueError("seed and index must be unsigned 64-bit integers")
    return np.random.Generator(np.random.Philox(key=(int(seed) << 64) | int(index)))


# --- fermion orbitals in the real gauge -------------------------------------


def _filling(cfg: ExperimentConfig, eps) -> int:
    if cfg.zero_mode_occupation == "default":
        return default_filling(cfg.spec.N)
    return pair_filling(eps, cfg.zero_mode_occupation)


def _propagate(Wr, Wi, eps, v, tau):
    # W <- v diag(exp(-i eps tau)) v^T W with W = Wr + i Wi kept as two real blocks
    n = Wr.shape[1]
    X = v.T @ np.hstack([Wr, Wi])
    c = np.cos(eps * tau)[:, None]
    s = np.sin(eps * tau)[:, None]
    Xr, Xi = X[:, :n], X[:, n:]
    Y = v @ np.hstack([c * Xr + s * Xi, c * Xi - s * Xr])
    return Y[:, :n], Y[:, n:]


def _taylor_propagate(Wr, Wi, d, J, tau):
    # exp(-i h tau) W by a Taylor series on the tridiagonal h, substepped so |h| tau <= 1
    bound = (np.max(np.abs(d)) + 2.0 * abs(J)) * abs(tau)
    sub = max(1, int(np.ceil(bound)))
    h = tau / sub
    n = Wr.shape[1]
    S = np.hstack([Wr, Wi])
    dcol = d[:, None]
    for _ in range(sub):
        out = S.copy()
        term = S
        k = 1
        while True:
            HS = dcol * term
            HS[:-1] -= J * term[1:]
            HS[1:] -= J * term[:-1]
            c = h / k
            # multiplying by -i maps (re, im) to (im, -re)
            term = np.hstack([c * HS[:, n:], -c * HS[:, :n]])
            out += term
            if np.max(np.abs(term)) < 1e-18 or k > 60:
                break
            k += 1
        S = out
    return np.ascontiguousarray(S[:, :n]), np.ascontiguousarray(S[:, n:])


def _density(Wr, Wi):
    return np.sum(Wr * Wr, axis=1) + np.sum(Wi * Wi, axis=1)


def _state_invariants(Wr, Wi, n_f):
    W = Wr + 1j * Wi
    C = W.conj() @ W.T
    return abs(np.trace(C).real - n_f), float(np.max(np.abs(C @ C - C)))


def _eig(phi, p: FermionParams):
    d = p.mass_profile(phi)
    eps, v = eigh_tridiagonal(d, np.full(d.size - 1, -p.J))
    if not np.all(np.isfinite(eps)):
        raise np.linalg.LinAlgError("fermion eigensolver failed")
    return eps, v


# --- observables --------------------------------------------------------------


def _energy_density(spec: LatticeSpec, phi, pi, g, occ):
    # same expression as lattice.energy_density, for arrays of shape (..., N)
    a = spec.a
    grad = np.zeros_like(phi)
    grad[..., :-1] = (phi[..., 1:] - phi[..., :-1]) / a
    dens = 0.5 * pi**2 + 0.5 * grad**2 + 0.5 * spec.m0_sq * phi**2 + 0.25 * spec.lam * phi**4
    if occ is not None and g:
        dens = dens + g * site_parity(spec.N) * phi * occ / a
    return dens


def wall_separation(phi, x=None) -> np.ndarray:
    """Distance between outermost zero crossings of each profile (0 if fewer than two)."""
    phi = np.atleast_2d(phi)
    out = np.zeros(phi.shape[0])
    for i, row in enumerate(phi):
        z = zero_crossings(row, x)
        out[i] = z[-1] - z[0] if z.size >= 2 else 0.0
    return out


def _observe(cfg: ExperimentConfig, phi, pi, occ):
    g = cfg.fparams.g if cfg.fparams is not None else 0.0
    obs = {}
    names = cfg.observables
    if "phi" in names:
        obs["phi"] = np.array(phi)
    if "energy" in names:
        obs["energy"] = _energy_density(cfg.spec, phi, pi, g, occ)
    if "separation" in names:
        sep = wall_separation(phi, site_coordinates(cfg.spec.N) * cfg.spec.a)
        obs["separation"] = sep if np.ndim(phi) > 1 else sep[0]
    if occ is not None:
        dens = density_observables(np.broadcast_to(occ, np.shape(phi)), cfg.exclusion)
        obs.update((k, v) for k, v in dens.items() if k in names)
    return obs


# --- single trajectory ---------------------------------------------------------


def run_trajectory(cfg: ExperimentConfig, sample) -> TrajectoryRecord:
    """Evolve one sampled initial condition and record observables.

    Parameters
    ----------
    cfg : ExperimentConfig
    sample : tuple of ndarray
        Initial ``(phi0, pi0)``, each of length N.

    Returns
    -------
    TrajectoryRecord
        ``data[name]`` has shape ``(n_records, ...)``. When the fermions are
        coupled and ``cfg.check_invariants`` is set, ``diagnostics`` holds the
        largest ``|tr C - N_f|`` and ``max|C^2 - C|`` seen.
    """
    spec = cfg.spec
    phi = np.array(sample[0], dtype=float)
    pi = np.array(sample[1], dtype=float)
    if phi.shape != (spec.N,) or pi.shape != (spec.N,):
        raise ValueError(f"sample must hold two arrays of length {spec.N}")
    if not (np.all(np.isfinite(phi)) and np.all(np.isfinite(pi))):
        raise FloatingPointError("non-finite initial sample")
    p = cfg.fparams
    dt = cfg.dt
    a = spec.a
    parity = site_parity(spec.N)

    occ = None
    diag = {}
    if p is not None:
        eps, v = _eig(phi, p)
        n_f = _filling(cfg, eps)
        Wr = np.ascontiguousarray(v[:, :n_f])
        Wi = np.zeros_like(Wr)
        occ = _density(Wr, Wi)
        diag = {"n_filled": n_f, "trace_error": 0.0, "idempotency_error": 0.0}
    coupled = cfg.coupled

    def fstep(phi_h, Wr, Wi, tau):
        if cfg.propagator == "taylor":
            return _taylor_propagate(Wr, Wi, p.mass_profile(phi_h), p.J, tau)
        eps_h, v_h = _eig(phi_h, p)
        return _propagate(Wr, Wi, eps_h, v_h, tau)

    records = {}
    times = []

    def record(n):
        times.append(n * dt)
        for name, val in _observe(cfg, phi, pi, occ).items():
            records.setdefault(name, []).append(val)
        if coupled and cfg.check_invariants:
            tr, idem = _state_invariants(Wr, Wi, n_f)
            diag["trace_error"] = max(diag["trace_error"], tr)
            diag["idempotency_error"] = max(diag["idempotency_error"], idem)

    record(0)
    for n in range(1, cfg.n_steps + 1):
        if not coupled:
            phi, pi = verlet_step(phi, pi, spec, dt)
        elif cfg.fermion_mode == "adiabatic":
            phi, pi = verlet_step(phi, pi, spec, dt, 0.0, -p.g * parity * occ / a)
            eps, v = _eig(phi, p)
            Wr = np.ascontiguousarray(v[:, :n_f])
            occ = _density(Wr, Wi)
        elif cfg.splitting == "lie":
            phi, pi = verlet_step(phi, pi, spec, dt, 0.0, -p.g * parity * occ / a)
            Wr, Wi = fstep(phi, Wr, Wi, dt)
            occ = _density(Wr, Wi)
        else:
            Wr, Wi = fstep(phi, Wr, Wi, 0.5 * dt)
            occ = _density(Wr, Wi)
            phi, pi = verlet_step(phi, pi, spec, dt, 0.0, -p.g * parity * occ / a)
            Wr, Wi = fstep(phi, Wr, Wi, 0.5 * dt)
            occ = _density(Wr, Wi)
        if n % cfg.record_stride == 0:
            if not (np.all(np.isfinite(phi)) and np.all(np.isfinite(pi))):
                raise FloatingPointError(f"non-finite field at step {n}; reduce dt")
            record(n)
    if not (np.all(np.isfinite(phi)) and np.all(np.isfinite(pi))):
        raise FloatingPointError("non-finite field; reduce dt")
    data = {k: np.asarray(v) for k, v in records.items()}
    return TrajectoryRecord(np.asarray(times), data, diag)


# --- ensembles -------------------------------------------------------------------


class _Welford:
    """Running mean and sum of squared deviations, updated in trajectory order."""

    def __init__(self):
        self.count = 0
        self.mean = {}
        self.m2 = {}

    def add(self, data):
        self.count += 1
        k = self.count
        for name, x in data.items():
            x = np.asarray(x, dtype=float)
            if k == 1:
                self.mean[name] = x.copy()
                self.m2[name] = np.zeros_like(x)
                continue
            delta = x - self.mean[name]
            self.mean[name] += delta / k
            self.m2[name] += delta * (x - self.mean[name])

    def stderr(self):
        n = self.count
        if n < 2:
            return {k: np.zeros_like(v) for k, v in self.m2.items()}
        return {k: np.sqrt(v / (n - 1) / n) for k, v in self.m2.items()}


def _batched_scalar(cfg: ExperimentConfig, samples):
    # all trajectories advanced together; elementwise kernels keep rows identical to single runs
    phi = np.array([s[0] for s in samples], dtype=float)
    pi = np.array([s[1] for s in samples], dtype=float)
    occ = None
    if cfg.fparams is not None:
        eps, v = _eig(phi[0], cfg.fparams)
        n_f = _filling(cfg, eps)
        W = np.ascontiguousarray(v[:, :n_f])
        occ = _density(W, np.zeros_like(W))
    frames = []
    times = []

    def record(n):
        times.append(n * cfg.dt)
        frames.append(_observe(cfg, phi, pi, occ))

    record(0)
    for n in range(1, cfg.n_steps + 1):
        phi, pi = verlet_step(phi, pi, cfg.spec, cfg.dt)
        if n % cfg.record_stride == 0:
            if not np.all(np.isfinite(phi)):
                bad = int(np.flatnonzero(~np.all(np.isfinite(phi), axis=1))[0])
                raise TrajectoryError(bad, FloatingPointError(f"non-finite field at step {n}"))
            record(n)
    names = frames[0].keys()
    stacked = {k: np.stack([f[k] for f in frames], axis=1) for k in names}
    for i in range(len(samples)):
        yield TrajectoryRecord(np.asarray(times), {k: v[i] for k, v in stacked.items()}, {})


def run_ensemble(cfg: ExperimentConfig, keep=(), batch: bool | None = None) -> EnsembleResult:
    """Average ``cfg.n_traj`` trajectories with counter-based initial conditions.

    Trajectory ``i`` draws its initial state from :func:`trajectory_rng`
    ``(cfg.seed, i)``; means and standard errors are reduced in index order,
    so the result is independent of ``cfg.threads``.

    Parameters
    ----------
    cfg : ExperimentConfig
    keep : iterable of str
        Observables whose per-trajectory series are returned in
        ``per_trajectory`` with shape ``(n_traj, n_records, ...)``.
    batch : bool, optional
        Advance all trajectories as one array. Only valid when the fermions
        are decoupled; defaults to ``True`` in that case.

    Raises
    ------
    TrajectoryError
        If any trajectory fails; ``index`` names the first failing one.
    """
    coupled = cfg.coupled
    if batch is None:
        batch = not coupled
    if batch and coupled:
        raise ValueError("batched evolution requires decoupled fermions")
    keep = tuple(keep)

    def draw(i):
        return sample_initial(cfg.wigner, trajectory_rng(cfg.seed, i))

    acc = _Welford()
    kept = {k: [] for k in keep}
    diag = {"trace_error": 0.0, "idempotency_error": 0.0}

    def consume(rec):
        acc.add(rec.data)
        for k in keep:
            kept[k].append(rec.data[k])
        for k in ("trace_error", "idempotency_error"):
            if k in rec.diagnostics:
                diag[k] = max(diag[k], rec.diagnostics[k])

    times = cfg.times
    if batch:
        samples = [draw(i) for i in range(cfg.n_traj)]
        for rec in _batched_scalar(cfg, samples):
            consume(rec)
    else:

        def work(i):
            try:
                return run_trajectory(cfg, draw(i))
            except Exception as exc:  # re-raised with the trajectory index
                return TrajectoryError(i, exc)

        if cfg.threads == 1:
            results = map(work, range(cfg.n_traj))
            pool = None
        else:
            pool = ThreadPoolExecutor(cfg.threads)
            results = pool.map(work, range(cfg.n_traj))
        try:
            for rec in results:
                if isinstance(rec, TrajectoryError):
                    raise rec
                consume(rec)
        finally:
            if pool is not None:
                pool.shutdown(cancel_futures=True)
    if not coupled:
        diag = {}
    per = {k: np.asarray(v) for k, v in kept.items()}
    return EnsembleResult(times, acc.mean, acc.stderr(), cfg.n_traj, diag, per)


# --- fits ------------------------------------------------------------------------


@dataclass
class FitResult:
    """Least-squares estimates with 95% confidence half-widths.

    Attributes
    ----------
    params, ci95 : dict
        Estimates and half-widths keyed by parameter name.
    residual_norm : float
        Euclidean norm of the residual vector at the optimum.
    window : tuple
        Inclusive index range of the data used.
    converged : bool
    diagnostics : dict
    """

    params: dict
    ci95: dict
    residual_norm: float
    window: tuple
    converged: bool = True
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.residual_norm >= 0:
            raise ValueError("residual norm must be non-negative")


def _gauss_newton(model, x, y, p0, max_iter=200, tol=1e-12):
    """Minimise ``|y - f(x; p)|^2`` with backtracking; ``model`` returns ``(f, jacobian)``."""
    p = np.asarray(p0, dtype=float)
    f, Jm = model(x, p)
    r = y - f
    sse = float(r @ r)
    for _ in range(max_iter):
        step, *_ = np.linalg.lstsq(Jm, r, rcond=None)
        small = np.max(np.abs(step)) <= tol * (1.0 + np.max(np.abs(p)))
        t = 1.0
        while t > 1e-10:
            trial = p + t * step
            f_t, J_t = model(x, trial)
            r_t = y - f_t
            sse_t = float(r_t @ r_t)
            if np.isfinite(sse_t) and sse_t <= sse:
                break
            t *= 0.5
        else:
            # no descent left along the Gauss-Newton direction
            return p, Jm, r, bool(small or sse < 1e-28)
        gain = sse - sse_t
        p, f, Jm, r, sse = trial, f_t, J_t, r_t, sse_t
        if small or gain <= 1e-14 * sse or sse < 1e-28:
            return p, Jm, r, True
    return p, Jm, r, False


def _confidence(Jm, r, level=0.95):
    m, k = Jm.shape
    dof = m - k
    if dof <= 0:
        return np.full(k, np.nan)
    s2 = float(r @ r) / dof
    try:
        cov = s2 * np.linalg.inv(Jm.T @ Jm)
    except np.linalg.LinAlgError:
        return np.full(k, np.nan)
    return stats.t.ppf(0.5 + level / 2, dof) * np.sqrt(np.clip(np.diag(cov), 0, None))


def _tanh_model(with_offset):
    def model(x, p):
        amp, x0, w = p[:3]
        u = (x - x0) / w
        th = np.tanh(u)
        sech2 = 1.0 - th * th
        cols = [th, -amp * sech2 / w, -amp * sech2 * u / w]
        f = amp * th
        if with_offset:
            f = f + p[3]
            cols.append(np.ones_like(x))
        return f, np.stack(cols, axis=1)

    return model


def _rise_guess(x, y, lo, hi):
    # centre from the mid-level crossing, width from the 10-90% rise distance
    mid = 0.5 * (lo + hi)
    amp = 0.5 * (hi - lo)
    z = zero_crossings(y - mid, x)
    if z.size == 0:
        raise ValueError("profile does not cross its mid level")
    x0 = z[np.argmin(np.abs(z - 0.5 * (x[0] + x[-1])))]
    lo_c = zero_crossings(y - (mid - 0.8 * amp), x)
    hi_c = zero_crossings(y - (mid + 0.8 * amp), x)
    if lo_c.size and hi_c.size:
        rise = abs(hi_c[np.argmin(np.abs(hi_c - x0))] - lo_c[np.argmin(np.abs(lo_c - x0))])
        w = rise / (2.0 * np.arctanh(0.8))
    else:
        w = 0.25 * (x[-1] - x[0])
    return x0, max(w, 1e-3 * (x[1] - x[0]))


def fit_kink(phi, x=None, exclusion: int = 3, max_iter: int = 200) -> FitResult:
    """Fit ``Phi0 tanh((x - n0) / xi)`` to a single-wall profile.

    ``x`` defaults to the site coordinates (lattice units); ``exclusion``
    sites are dropped at each end. ``Phi0`` carries the sign of the wall.
    """
    phi = np.asarray(phi, dtype=float)
    x = site_coordinates(phi.size) if x is None else np.asarray(x, dtype=float)
    sl = slice(exclusion, phi.size - exclusion)
    xs, ys = x[sl], phi[sl]
    if zero_crossings(ys, xs).size == 0:
        raise ValueError("profile has no zero crossing inside the window")
    k = max(1, ys.size // 10)
    left, right = np.mean(ys[:k]), np.mean(ys[-k:])
    amp0 = 0.5 * (right - left)
    x0, w = _rise_guess(xs, ys, min(left, right), max(left, right))
    p, Jm, r, ok = _gauss_newton(_tanh_model(False), xs, ys, [amp0, x0, w], max_iter)
    ci = _confidence(Jm, r)
    names = ("Phi0", "n0", "xi")
    p[2] = abs(p[2])
    return FitResult(
        dict(zip(names, map(float, p))),
        dict(zip(names, map(float, ci))),
        float(np.linalg.norm(r)),
        (exclusion, phi.size - exclusion - 1),
        bool(ok),
    )


def width_series(times, phi_mean, x=None, exclusion: int = 3, max_width: float | None = None):
    """Kink width ``xi(t)`` from a series of mean profiles, cut at the end of validity.

    Each profile is fitted with :func:`fit_kink`. The series stops at the
    first time the fit fails to converge, loses its zero crossing, or reports
    ``xi >= max_width`` (default a quarter of the chain length), since a
    single-wall tanh no longer describes the mean profile beyond that.

    Returns
    -------
    times, xi : ndarray
        The valid part of the series.
    fits : list of FitResult
    """
    t = np.asarray(times, dtype=float)
    prof = np.atleast_2d(np.asarray(phi_mean, dtype=float))
    n = prof.shape[1]
    x = site_coordinates(n) if x is None else np.asarray(x, dtype=float)
    limit = 0.25 * (x[-1] - x[0]) if max_width is None else float(max_width)
    fits = []
    for row in prof:
        try:
            f = fit_kink(row, x, exclusion)
        except ValueError:
            break
        if not f.converged or not f.params["xi"] < limit:
            break
        fits.append(f)
    k = len(fits)
    return t[:k], np.array([f.params["xi"] for f in fits]), fits


def link_coordinates(N: int, exclusion: int = 3, a: float = 1.0) -> np.ndarray:
    """Midpoints of the links kept by ``accumulated_charge(..., exclusion)``."""
    x = site_coordinates(N) * a
    mid = 0.5 * (x[:-1] + x[1:])
    return mid[exclusion : N - 1 - exclusion]


def fit_accumulated_charge(dq, x=None, max_iter: int = 200) -> FitResult:
    """Fit ``A tanh((x - n0) / xi_f) + B`` to an accumulated-charge profile.

    ``x`` defaults to link midpoints for a profile computed with
    ``exclusion=3``; pass :func:`link_coordinates` otherwise.
    """
    dq = np.asarray(dq, dtype=float)
    if x is None:
        x = link_coordinates(dq.size + 7, 3)
    x = np.asarray(x, dtype=float)
    if x.shape != dq.shape:
        raise ValueError("x and dq must have equal length")
    k = max(1, dq.size // 10)
    left, right = np.mean(dq[:k]), np.mean(dq[-k:])
    amp0 = 0.5 * (right - left)
    x0, w = _rise_guess(x, dq, min(left, right), max(left, right))
    p, Jm, r, ok = _gauss_newton(_tanh_model(True), x, dq, [amp0, x0, w, 0.5 * (left + right)], max_iter)
    p[2] = abs(p[2])
    ci = _confidence(Jm, r)
    names = ("A", "n0", "xi_f", "B")
    return FitResult(
        dict(zip(names, map(float, p))),
        dict(zip(names, map(float, ci))),
        float(np.linalg.norm(r)),
        (0, dq.size - 1),
        bool(ok),
    )


def fit_power_law(times, xi, skip: float = 0.1, tol: float = 0.15) -> FitResult:
    """Fit ``xi = c t^alpha`` by linear regression of ``log xi`` on ``log t``.

    The first ``skip`` fraction of samples and any ``t <= 0`` are excluded.
    The fit is accepted when the rms log residual is below ``tol``;
    ``diagnostics`` also reports whether the series looks like a bounded
    oscillation: at least four crossings of its mean and no net growth
    (mean of the last third below 1.5 times the mean of the first third).

    Raises
    ------
    ValueError
        If the window contains non-positive widths or fewer than three points.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(xi, dtype=float)
    start = int(np.ceil(skip * t.size))
    idx = np.arange(start, t.size)
    idx = idx[t[idx] > 0]
    if idx.size < 3:
        raise ValueError("need at least three points in the fit window")
    if np.any(y[idx] <= 0) or not np.all(np.isfinite(y[idx])):
        raise ValueError("widths in the fit window must be positive")
    X = np.stack([np.ones(idx.size), np.log(t[idx])], axis=1)
    ly = np.log(y[idx])
    coef, *_ = np.linalg.lstsq(X, ly, rcond=None)
    r = ly - X @ coef
    ci = _confidence(X, r)
    rms = float(np.sqrt(np.mean(r * r)))
    w = y[idx]
    centred = w - w.mean()
    crossings = int(np.sum(np.signbit(centred[1:]) != np.signbit(centred[:-1])))
    third = max(1, w.size // 3)
    growth = float(np.mean(w[-third:]) / np.mean(w[:third]))
    bounded = bool(growth < 1.5 and crossings >= 4)
    return FitResult(
        {"c": float(np.exp(coef[0])), "alpha": float(coef[1])},
        {"c": float(np.exp(coef[0]) * ci[0]), "alpha": float(ci[1])},
        float(np.linalg.norm(r)),
        (int(idx[0]), int(idx[-1])),
        True,
        {"rms_log_residual": rms, "accepted": rms < tol, "bounded_oscillation": bounded, "mean_crossings": crossings, "growth": growth},
    )


# --- collisions --------------------------------------------------------------------


def classify_separation(times, separation, s0: float, a: float = 1.0) -> str:
    """``reflection``, ``bion`` or ``mixed`` from a wall-separation series.

    Reflection: final separation above ``s0 + 2a``. Bion: the maximum over
    the final third of the run stays below ``s0``.
    """
    s = np.asarray(separation, dtype=float)
    if s.size < 3:
        raise ValueError("separation series too short")
    if s[-1] > s0 + 2 * a:
        return "reflection"
    tail = s[int(2 * s.size / 3) :]
    if np.max(tail) < s0:
        return "bion"
    return "mixed"


def separation_oscillation(separation, s0: float) -> dict:
    """Boundedness and oscillation count of a wall separation after the first merger.

    Returns ``bounded`` (the separation never regains ``s0`` after the walls
    first meet), ``mergers`` (number of separate returns to zero separation)
    and ``max_after`` (largest separation after the first merger).
    """
    s = np.asarray(separation, dtype=float)
    hit = np.flatnonzero(s <= 0.0)
    if hit.size == 0:
        return {"bounded": False, "mergers": 0, "max_after": float("nan")}
    after = s[hit[0] :]
    merged = after <= 0.0
    mergers = 1 + int(np.count_nonzero(merged[1:] & ~merged[:-1]))
    peak = float(np.max(after))
    return {"bounded": bool(peak < s0), "mergers": mergers, "max_after": peak}


def _reflection_parity(mode):
    return float(mode @ mode[::-1])


def _reflection_adapted(basis: ModeBasis, count: int = 2) -> ModeBasis:
    # the Goldstone pair of distant walls is degenerate to roundoff, so the
    # eigensolver may return any rotation of it; rotate to reflection eigenvectors
    low = basis.modes[:, :count]
    R = low.T @ low[::-1]
    _, rot = np.linalg.eigh(0.5 * (R + R.T))
    modes = np.array(basis.modes)
    modes[:, :count] = low @ rot
    idx = np.argmax(np.abs(modes[:, :count]), axis=0)
    modes[:, :count] *= np.sign(modes[idx, np.arange(count)])
    modes.flags.writeable = False
    return ModeBasis(basis.omega_sq, modes, basis.a)


def collision_setup(spec: LatticeSpec, d: float, p_bar: float, frozen_all: bool = False, center: float = 0.5):
    """Kink-antikink background and Wigner state for a head-on collision.

    The background superposes a relaxed kink at ``center - d/2`` and a relaxed
    antikink at ``center + d/2`` on the ``-Phi0`` vacuum. The two lowest
    (Goldstone) modes are frozen; the one even under reflection about
    ``center`` receives the mean momentum ``p_bar``. With the sign convention
    of :func:`~jrlattice.modes.normal_modes` a negative ``p_bar`` drives the
    walls towards each other. ``frozen_all`` freezes every mode (classical run).

    Returns
    -------
    wigner : WignerSpec
    even : int
        Index of the even Goldstone mode.
    """
    if 2 * center != round(2 * center) or (spec.N % 2 == 0) != (center % 1 == 0.5):
        raise ValueError("center must be the reflection centre of the chain")
    kink = relaxed_kink(spec, 0.5)
    phi = _pair_profile(kink, d, spec.Phi0, center)
    bg = ScalarState(phi)
    basis = _reflection_adapted(normal_modes(elasticity_matrix(bg, spec), spec.a))
    low = basis.modes[:, :2]
    par = [_reflection_parity(low[:, k]) for k in range(2)]
    even = int(np.argmax(par))
    frozen = range(spec.N) if frozen_all else (0, 1)
    w = wigner_ground_state(bg, spec, frozen=frozen, p_mean={even: p_bar}, basis=basis)
    return w, even


def collision_experiment(cfg: ExperimentConfig, d: float, p_bar: float = None) -> tuple:
    """Run a collision ensemble and classify each trajectory.

    ``cfg.wigner`` must come from :func:`collision_setup` with the same ``d``
    (``p_bar`` is then only used for bookkeeping). ``separation`` is always
    recorded.

    Returns
    -------
    result : EnsembleResult
        ``per_trajectory["separation"]`` holds every trajectory's series.
    summary : dict
        Per-trajectory classes, their counts, and the class of the ensemble
        mean field (separation of the zero crossings of ``<phi>``).
    """
    obs = tuple(cfg.observables)
    if "separation" not in obs:
        obs = obs + ("separation",)
    if "phi" not in obs:
        obs = obs + ("phi",)
    cfg = _replace(cfg, observables=obs)
    res = run_ensemble(cfg, keep=("separation",))
    a = cfg.spec.a
    x = site_coordinates(cfg.spec.N) * a
    seps = res.per_trajectory["separation"]
    s0 = float(seps[0, 0]) if seps.size else float(d)
    classes = [classify_separation(res.times, s, s0, a) for s in seps]
    mean_sep = wall_separation(res.mean["phi"], x)
    counts = {c: classes.count(c) for c in ("reflection", "bion", "mixed")}
    summary = {
        "d": float(d),
        "p_bar": None if p_bar is None else float(p_bar),
        "initial_separation": s0,
        "classes": classes,
        "counts": counts,
        "mean_field_separation": mean_sep,
        "mean_field_class": classify_separation(res.times, mean_sep, s0, a),
    }
    return res, summary


def _replace(cfg, **changes):
    from dataclasses import replace

    return replace(cfg, **changes)


def charge_fronts(profile, reference=None, x=None, center: float = 0.5, threshold: float = 0.01, margin: int = 3):
    """Outermost points on each side of ``center`` where a charge profile has changed.

    Parameters
    ----------
    profile : array, shape (n_times, n)
        Link charge or accumulated charge per recorded time.
    reference : array, shape (n,), optional
        Profile the change is measured against (defaults to ``1/2``, the
        half-filled link charge).
    x : array, optional
        Coordinates of the ``n`` points; defaults to the link coordinates of
        a chain with ``n + 1`` sites.
    threshold : float
        Minimum ``|profile - reference|`` counted as changed.
    margin : int
        Points ignored at each end.

    Returns
    -------
    left, right : ndarray
        Distances of the outermost changed points from ``center`` (0 when
        nothing exceeds the threshold on that side).
    """
    prof = np.atleast_2d(np.asarray(profile, dtype=float))
    n = prof.shape[1]
    ref = 0.5 if reference is None else np.asarray(reference, dtype=float)
    if x is None:
        x = link_coordinates(n + 1, 0)
    x = np.asarray(x, dtype=float)
    keep = np.zeros(n, dtype=bool)
    keep[margin : n - margin] = True
    left = np.zeros(prof.shape[0])
    right = np.zeros(prof.shape[0])
    for k, row in enumerate(prof):
        hot = keep & (np.abs(row - ref) > threshold)
        lx = x[hot & (x < center)]
        rx = x[hot & (x > center)]
        left[k] = center - lx.min() if lx.size else 0.0
        right[k] = rx.max() - center if rx.size else 0.0
    return left, right


def collision_time(times, separation) -> float:
    """First recorded time at which the walls have merged (separation 0); ``nan`` if never."""
    sep = np.asarray(separation, dtype=float)
    hit = np.flatnonzero(sep <= 0.0)
    return float(np.asarray(times)[hit[0]]) if hit.size else float("nan")


def release_front_speed(times, dq, separation, x=None, threshold: float = 0.02, window: float = 20.0, margin: int = 3):
    """Speed of the accumulated-charge front released by a collision.

    The front is the outermost point where ``dq`` differs from its profile at
    the collision time by more than ``threshold``; its mean outward distance
    is fitted linearly over ``window`` time units after the collision, cut
    where the front first reaches ``margin`` points from an end.

    Returns
    -------
    speed : float
    t_c : float
        Collision time.
    front : ndarray
        Mean of the left and right front distances after ``t_c``.
    """
    t = np.asarray(times, dtype=float)
    dq = np.atleast_2d(np.asarray(dq, dtype=float))
    t_c = collision_time(t, separation)
    if not np.isfinite(t_c):
        raise ValueError("the walls never merge; no collision to measure")
    k = int(np.searchsorted(t, t_c))
    n = dq.shape[1]
    if x is None:
        x = np.arange(n) - (n - 1) / 2.0
    x = np.asarray(x, dtype=float)
    center = 0.5 * (x[0] + x[-1])
    left, right = charge_fronts(dq[k:], dq[k], x, center, threshold, margin)
    front = 0.5 * (left + right)
    reach = 0.5 * (x[-1] - x[0]) - margin - 1
    stop = t_c + window
    at_end = np.flatnonzero(np.maximum(left, right) >= reach)
    if at_end.size:
        stop = min(stop, t[k + at_end[0]])
    return front_speed(t[k:], front, t_c, stop), t_c, front


def front_speed(times, front, t_start: float, t_stop: float) -> float:
    """Least-squares slope of a front position over ``[t_start, t_stop]``."""
    t = np.asarray(times, dtype=float)
    f = np.asarray(front, dtype=float)
    sel = (t >= t_start) & (t <= t_stop)
    if np.count_nonzero(sel) < 2:
        raise ValueError("need at least two samples in the window")
    return float(np.polyfit(t[sel], f[sel], 1)[0])


def max_group_velocity(spec: LatticeSpec, mass_sq: float | None = None, n_k: int = 4001) -> float:
    """Largest ``d omega / dk`` of the lattice Klein-Gordon band.

    ``mass_sq`` defaults to the fluctuation mass ``2|m0^2|`` in the broken
    phase and ``m0^2`` otherwise.
    """
    if mass_sq is None:
        mass_sq = -2.0 * spec.m0_sq if spec.broken else spec.m0_sq
    k = np.linspace(0.0, np.pi / spec.a, n_k)
    w = scalar_dispersion(k, spec, mass_sq)
    return float(np.max(np.gradient(w, k)))


def light_cone_violation(times, field_series, sources, speed: float, x=None, margin: float = 3.0) -> float:
    """Largest ``|f(t) - f(0)|`` outside the union of cones ``|x - x_s| <= speed (t - t_s) + margin``.

    ``sources`` is a sequence of ``(x_s, t_s)``. Points earlier than every
    source time count as outside.
    """
    f = np.asarray(field_series, dtype=float)
    t = np.asarray(times, dtype=float)
    if x is None:
        x = site_coordinates(f.shape[1])
    x = np.asarray(x, dtype=float)
    inside = np.zeros(f.shape, dtype=bool)
    for xs, ts in sources:
        reach = speed * (t - ts) + margin
        inside |= (t[:, None] >= ts) & (np.abs(x[None, :] - xs) <= reach[:, None])
    dev = np.abs(f - f[0])
    dev[inside] = 0.0
    return float(dev.max())
