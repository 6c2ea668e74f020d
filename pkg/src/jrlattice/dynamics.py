"""Symplectic (velocity Verlet) evolution and damped relaxation of the scalar field.

The stepping kernels accept arrays of shape ``(..., N)`` so that ensembles of
independent trajectories can be advanced together; every operation is
elementwise along the leading axes, so a batched run reproduces single runs
bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .lattice import LatticeSpec, ScalarState

__all__ = [
    "IntegratorConfig",
    "Trajectory",
    "scalar_force",
    "laplacian",
    "verlet_step",
    "step",
    "evolve",
    "relax",
    "RelaxationError",
]


class RelaxationError(RuntimeError):
    """Raised when damped relaxation does not reach the requested tolerance."""


@dataclass(frozen=True)
class IntegratorConfig:
    """Time step, damping rate and number of steps."""

    dt: float
    kappa: float = 0.0
    steps: int = 0

    def __post_init__(self):
        if not (self.dt > 0 and np.isfinite(self.dt)):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.kappa < 0:
            raise ValueError("kappa must be non-negative")
        if self.steps < 0:
            raise ValueError("steps must be non-negative")


@dataclass
class Trajectory:
    """Recorded samples of an evolution: times, final state and observer output."""

    times: np.ndarray
    final: ScalarState
    samples: dict = field(default_factory=dict)


def laplacian(phi: np.ndarray, a: float = 1.0) -> np.ndarray:
    """Discrete Laplacian with zero-gradient ghost sites at both ends.

    Written as ``(left + right) - 2 phi`` so that a configuration odd under
    reflection stays exactly odd in floating point.
    """
    left = np.concatenate([phi[..., :1], phi[..., :-1]], axis=-1)
    right = np.concatenate([phi[..., 1:], phi[..., -1:]], axis=-1)
    return ((left + right) - 2.0 * phi) / a**2


def scalar_force(phi: np.ndarray, spec: LatticeSpec) -> np.ndarray:
    """Conservative force ``-(1/a) dH/dphi`` of the lambda-phi^4 Hamiltonian."""
    # phi*phi*phi rather than phi**3: the vectorised pow is not exactly odd
    return laplacian(phi, spec.a) - spec.m0_sq * phi - spec.lam * (phi * phi * phi)


def verlet_step(phi, pi, spec: LatticeSpec, dt: float, kappa: float = 0.0, extra=None):
    """One velocity-Verlet step on raw arrays.

    Damping ``-kappa * pi`` enters the first half-kick explicitly and the
    second implicitly. ``extra`` is an additional force held fixed over the
    step (the fermion back-reaction in the coupled problem).
    """
    f = scalar_force(phi, spec)
    if extra is not None:
        f = f + extra
    pi_half = pi + 0.5 * dt * (f - kappa * pi)
    phi_new = phi + dt * pi_half
    f_new = scalar_force(phi_new, spec)
    if extra is not None:
        f_new = f_new + extra
    pi_new = pi_half + 0.5 * dt * f_new
    if kappa:
        pi_new = pi_new / (1.0 + 0.5 * dt * kappa)
    return phi_new, pi_new


def step(state: ScalarState, spec: LatticeSpec, cfg: IntegratorConfig, force=None, t: float = 0.0) -> ScalarState:
    """Advance ``state`` by one step of ``cfg.dt``.

    ``force`` is an optional extra force: an array of length N or a callable
    ``force(t, state)`` evaluated at the start of the step.
    """
    if state.N != spec.N:
        raise ValueError(f"state has {state.N} sites, spec has {spec.N}")
    extra = force(t, state) if callable(force) else force
    if extra is not None:
        extra = np.asarray(extra, dtype=float)
        if extra.shape != (spec.N,) or not np.all(np.isfinite(extra)):
            raise ValueError(f"force must be a finite array of length {spec.N}")
    phi, pi = verlet_step(state.phi, state.pi, spec, cfg.dt, cfg.kappa, extra)
    if not (np.all(np.isfinite(phi)) and np.all(np.isfinite(pi))):
        raise FloatingPointError(f"non-finite field after step at t={t}; reduce dt")
    return ScalarState(phi, pi)


def evolve(
    initial: ScalarState,
    spec: LatticeSpec,
    cfg: IntegratorConfig,
    force: np.ndarray | Callable[[float, ScalarState], np.ndarray] | None = None,
    observers: Mapping[str, Callable[[float, ScalarState], object]] | None = None,
    stride: int = 1,
) -> Trajectory:
    """Integrate ``cfg.steps`` steps and record observers every ``stride`` steps.

    Parameters
    ----------
    initial : ScalarState
        Starting configuration.
    spec : LatticeSpec
    cfg : IntegratorConfig
    force : array or callable, optional
        Extra force, either fixed or evaluated as ``force(t, state)`` at the
        start of every step.
    observers : mapping, optional
        ``name -> f(t, state)``; the initial state is always recorded.
    stride : int
        Recording interval in steps.

    Returns
    -------
    Trajectory
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if initial.N != spec.N:
        raise ValueError(f"state has {initial.N} sites, spec has {spec.N}")
    observers = dict(observers or {})
    phi = np.array(initial.phi)
    pi = np.array(initial.pi)
    samples = {name: [] for name in observers}
    times = []

    def record(t):
        st = ScalarState(phi, pi)
        times.append(t)
        for name, obs in observers.items():
            samples[name].append(obs(t, st))

    record(0.0)
    for n in range(1, cfg.steps + 1):
        t0 = (n - 1) * cfg.dt
        extra = force(t0, ScalarState(phi, pi)) if callable(force) else force
        phi, pi = verlet_step(phi, pi, spec, cfg.dt, cfg.kappa, extra)
        if n % stride == 0:
            if not (np.all(np.isfinite(phi)) and np.all(np.isfinite(pi))):
                raise FloatingPointError(f"non-finite field at step {n}; reduce dt")
            record(n * cfg.dt)
    if not (np.all(np.isfinite(phi)) and np.all(np.isfinite(pi))):
        raise FloatingPointError("non-finite field; reduce dt")
    out = {name: np.asarray(v) if _is_numeric(v) else v for name, v in samples.items()}
    return Trajectory(np.asarray(times), ScalarState(phi, pi), out)


def _is_numeric(values):
    try:
        np.asarray(values, dtype=float)
    except (TypeError, ValueError):
        return False
    return True


def _stable_dt(phi, spec: LatticeSpec) -> float:
    # Gershgorin bound on the largest normal-mode frequency
    w2 = 4.0 / spec.a**2 + np.max(spec.m0_sq + 3.0 * spec.lam * phi**2)
    return float(min(0.1, 0.3 / np.sqrt(max(w2, 1e-12))))


def relax(
    initial: ScalarState,
    spec: LatticeSpec,
    kappa: float = 0.2,
    tol: float = 1e-10,
    max_steps: int = 200_000,
    dt: float | None = None,
) -> ScalarState:
    """Damped relaxation to a stationary configuration.

    Iterates damped Verlet steps until ``max|pi|`` and ``max|F|`` fall below
    ``tol``. The time step defaults to a fraction of the inverse band top.

    Raises
    ------
    RelaxationError
        If the tolerance is not reached within ``max_steps``.
    """
    if kappa <= 0:
        raise ValueError("relaxation needs kappa > 0")
    phi = np.array(initial.phi)
    pi = np.array(initial.pi)
    h = _stable_dt(phi, spec) if dt is None else dt
    for n in range(max_steps):
        phi, pi = verlet_step(phi, pi, spec, h, kappa)
        if n % 20 == 0:
            f = scalar_force(phi, spec)
            res = max(np.max(np.abs(pi)), np.max(np.abs(f)))
            if not np.isfinite(res):
                raise RelaxationError("relaxation diverged")
            if res < tol:
                return ScalarState(phi, np.zeros_like(phi))
    raise RelaxationError(f"residual {res:.3e} above tol {tol:.1e} after {max_steps} steps")
