"""Mapping from trapped-ion trap and laser parameters to field-theory couplings.

All inputs are SI quantities (angular frequencies in rad/s, lengths in m,
masses in kg). :func:`lattice_parameters` converts the scalar couplings to
the dimensionless lattice units used by the rest of the package, with length
unit ``a``, time unit ``a / c_b`` and energy unit ``hbar c_b / a``. A
homogeneous ion spacing is assumed throughout.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from fractions import Fraction
from math import cos, pi, sin, sqrt

import numpy as np
from scipy import constants

__all__ = [
    "TrapParams",
    "LaserParams",
    "eta_zeta",
    "ion_dispersion",
    "sound_velocity",
    "zigzag_gap_sq",
    "bare_mass",
    "critical_ratio",
    "quartic_coupling",
    "rigidity",
    "lattice_parameters",
    "compton_length",
    "spin_couplings",
    "coupling_table",
    "fermi_velocity",
    "long_range_dispersion",
    "bessel_j0",
    "yukawa",
    "lamb_dicke",
    "effective_couplings",
]

HBAR = constants.hbar


@dataclass(frozen=True)
class TrapParams:
    """Secular frequencies, ion number, spacing, Coulomb length and ion mass.

    ``ell`` is defined by ``ell^3 = e^2 / (4 pi eps0 m_a omega_x^2)``; use
    :meth:`from_mass` to compute it.
    """

    omega_x: float
    omega_y: float
    omega_z: float
    N_ions: int
    a: float
    ell: float
    m_a: float

    def __post_init__(self):
        for name in ("omega_x", "omega_y", "omega_z", "a", "ell", "m_a"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive, got {v}")
        if int(self.N_ions) != self.N_ions or self.N_ions < 2:
            raise ValueError(f"N_ions must be an integer >= 2, got {self.N_ions}")
        if not self.omega_y > self.omega_z:
            warnings.warn("expected omega_y >> omega_z for the transverse spin couplings", stacklevel=2)

    @classmethod
    def from_mass(cls, omega_x, omega_y, omega_z, N_ions, a, m_a) -> "TrapParams":
        """Build the parameters with ``ell`` from the singly charged Coulomb length."""
        e2 = constants.e**2 / (4 * pi * constants.epsilon_0)
        ell = (e2 / (m_a * omega_x**2)) ** (1.0 / 3.0)
        return cls(omega_x, omega_y, omega_z, N_ions, a, ell, m_a)

    @property
    def kappa_x(self) -> float:
        """Trap frequency ratio ``(omega_x / omega_z)^2``."""
        return (self.omega_x / self.omega_z) ** 2

    @property
    def kappa_y(self) -> float:
        """Trap frequency ratio ``(omega_x / omega_y)^2``."""
        return (self.omega_x / self.omega_y) ** 2


@dataclass(frozen=True)
class LaserParams:
    """Raman (spin-spin) and cross-beam (Yukawa) laser parameters.

    Attributes
    ----------
    Omega_L, delta_L, Delta_k : float
        Two-photon Rabi frequency, detuning and wavevector difference of the
        spin-spin beams.
    Omega_tilde, Delta_k_tilde, z0, q_z : float
        Ac-Stark shift and wavevector of the dipole-force beams, transverse
        zigzag coordinate and micromotion parameter.
    eta_x : float
        Lamb-Dicke parameter; see :func:`lamb_dicke`.
    """

    Omega_L: float
    delta_L: float
    Delta_k: float
    Omega_tilde: float
    Delta_k_tilde: float
    z0: float
    q_z: float
    eta_x: float

    def __post_init__(self):
        for name in ("Omega_L", "delta_L", "Delta_k", "Omega_tilde", "Delta_k_tilde", "z0", "q_z", "eta_x"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.delta_L == 0:
            raise ValueError("delta_L must be nonzero")


def lamb_dicke(Delta_k: float, m_a: float, omega_x: float, hbar: float = HBAR) -> float:
    """Lamb-Dicke parameter ``Delta_k sqrt(hbar / (2 m_a omega_x))``."""
    return Delta_k * sqrt(hbar / (2.0 * m_a * omega_x))


def eta_zeta(N: int, s: float) -> tuple[float, float]:
    """Partial sums ``eta_N(s) = sum (-1)^(r+1) / r^s`` and ``zeta_N(s) = sum 1 / r^s`` over ``r <= N/2``."""
    if N < 2:
        raise ValueError("N must be at least 2")
    r = np.arange(1, N // 2 + 1, dtype=float)
    terms = r**-s
    sign = np.where(r % 2 == 1, 1.0, -1.0)
    # largest-first summation is fine here: the terms decrease monotonically
    return float(np.sum((sign * terms)[::-1])), float(np.sum(terms[::-1]))


def ion_dispersion(k, trap: TrapParams):
    """Zigzag-branch phonon frequency ``omega(k)`` of the homogeneous chain.

    Returns ``nan`` where the square root argument is negative (unstable
    linear chain).
    """
    k = np.asarray(k, dtype=float)
    r = np.arange(1, trap.N_ions // 2 + 1, dtype=float)
    s = np.sum(4.0 / r**3 * np.sin(0.5 * k[..., None] * trap.a * r) ** 2, axis=-1)
    w2 = trap.omega_z**2 * (1.0 - trap.kappa_x * (trap.ell / trap.a) ** 3 * s)
    with np.errstate(invalid="ignore"):
        return np.sqrt(w2)


def sound_velocity(trap: TrapParams) -> float:
    """Transverse sound velocity ``c_b = a omega_x (ell/a)^(3/2) sqrt(eta_N(1))``."""
    eta, _ = eta_zeta(trap.N_ions, 1)
    return float(sqrt(trap.a**2 * trap.omega_x**2 * (trap.ell / trap.a) ** 3 * eta))


def zigzag_gap_sq(trap: TrapParams) -> float:
    """Squared frequency ``m0^2 c_b^4 / hbar^2 = omega_z^2 - (7/2) omega_x^2 (ell/a)^3 zeta_N(3)``."""
    _, zeta3 = eta_zeta(trap.N_ions, 3)
    return float(trap.omega_z**2 - 3.5 * trap.omega_x**2 * (trap.ell / trap.a) ** 3 * zeta3)


def bare_mass(trap: TrapParams, hbar: float = HBAR) -> float:
    """Bare mass squared ``m0^2 = (hbar^2 / c_b^4) (omega_z^2 - (7/2) omega_x^2 (ell/a)^3 zeta_N(3))``."""
    cb = sound_velocity(trap)
    return hbar**2 / cb**4 * zigzag_gap_sq(trap)


def critical_ratio(trap: TrapParams) -> float:
    """Critical ``kappa_x = 2 a^3 / (7 ell^3 zeta_N(3))`` where the bare mass vanishes."""
    _, zeta3 = eta_zeta(trap.N_ions, 3)
    return 2.0 * trap.a**3 / (7.0 * trap.ell**3 * zeta3)


def rigidity(trap: TrapParams, hbar: float = HBAR) -> float:
    """Dimensionless rigidity ``K = m_a a c_b / hbar``."""
    return trap.m_a * trap.a * sound_velocity(trap) / hbar


def quartic_coupling(trap: TrapParams, hbar: float = HBAR) -> float:
    """Self-interaction ``lambda = 243 zeta_N(5) m_a^3 omega_x^2 ell^3 / (4 K^4)``."""
    _, zeta5 = eta_zeta(trap.N_ions, 5)
    K = rigidity(trap, hbar)
    return 243.0 * zeta5 * trap.m_a**3 * trap.omega_x**2 * trap.ell**3 / (4.0 * K**4)


def lattice_parameters(trap: TrapParams, hbar: float = HBAR) -> dict:
    """Scalar couplings in lattice units.

    Returns ``m0_sq = m0^2 c_b^2 a^2 / hbar^2`` (the zigzag gap in units of
    ``c_b / a``, squared), ``lam = lambda a^2 c_b / hbar^3`` (equal to
    ``243 zeta_N(5) / (4 K eta_N(1))``), ``K``, ``c_b`` and the time unit
    ``a / c_b``.
    """
    cb = sound_velocity(trap)
    return {
        "m0_sq": zigzag_gap_sq(trap) * trap.a**2 / cb**2,
        "lam": quartic_coupling(trap, hbar) * trap.a**2 * cb / hbar**3,
        "K": rigidity(trap, hbar),
        "c_b": cb,
        "time_unit": trap.a / cb,
    }


def compton_length(trap: TrapParams, laser: LaserParams) -> float:
    """Effective Compton length ``|1 / (m0^2 c_b^4 - delta_L^2)|`` in units of ``ell``.

    Frequencies enter in units of ``omega_x``.
    """
    den = (zigzag_gap_sq(trap) - laser.delta_L**2) / trap.omega_x**2
    if den == 0:
        raise ValueError("detuning resonant with the zigzag gap")
    return abs(1.0 / den)


def spin_couplings(trap: TrapParams, laser: LaserParams, n, l):
    """Exchange coupling ``J_nl`` between ions ``n`` and ``l`` (rad/s).

    Dipolar tail plus an alternating exponential with the effective Compton
    length. The bracket is dimensionless: lengths in units of ``ell`` and
    frequencies in units of ``omega_x``. The prefactor is
    ``J_0 = 2 Omega_L^2 eta_x^2 / (omega_x eta_N(1))``.
    """
    n = np.asarray(n)
    l = np.asarray(l)
    d = np.abs(n - l)
    if np.any(d == 0):
        raise ValueError("n and l must differ")
    eta1, _ = eta_zeta(trap.N_ions, 1)
    J0 = 2.0 * laser.Omega_L**2 * laser.eta_x**2 / (trap.omega_x * eta1)
    r = d * trap.a / trap.ell
    dip = trap.omega_x**4 * eta1 / (trap.omega_y**2 - laser.delta_L**2) ** 2 / r**3
    lc = compton_length(trap, laser)
    sign = np.where(d % 2 == 0, 1.0, -1.0)
    osc = sign * lc * (trap.a / trap.ell) ** 2 * np.exp(-r / lc)
    return J0 * (dip - osc)


def coupling_table(trap: TrapParams, laser: LaserParams, max_range: int | None = None) -> np.ndarray:
    """Couplings ``J_{n, n+d}`` for ``d = 1 .. max_range`` (default ``N_ions // 2``)."""
    dmax = trap.N_ions // 2 if max_range is None else int(max_range)
    if dmax < 1:
        raise ValueError("max_range must be at least 1")
    d = np.arange(1, dmax + 1)
    return np.asarray(spin_couplings(trap, laser, 0, d), dtype=float)


def fermi_velocity(couplings, a: float = 1.0) -> float:
    """Effective light speed ``c_f = 2 a sum_r (2r-1) (-1)^(r-1) J_{2r-1}``.

    ``couplings[d-1]`` is the coupling at range ``d``; even ranges do not
    contribute.
    """
    J = np.asarray(couplings, dtype=float)
    d = np.arange(1, J.size + 1)
    odd = d % 2 == 1
    r = (d[odd] + 1) // 2
    sign = np.where(r % 2 == 1, 1.0, -1.0)
    return float(2.0 * a * np.sum(d[odd] * sign * J[odd]))


def long_range_dispersion(k, couplings, a: float = 1.0):
    """Single-particle band ``sum_d 2 J_d cos(k a d)`` of the long-range XY chain.

    At half filling the Fermi points sit at ``k = +-pi/(2a)``, where the
    slope magnitude equals :func:`fermi_velocity`.
    """
    J = np.asarray(couplings, dtype=float)
    d = np.arange(1, J.size + 1)
    k = np.asarray(k, dtype=float)
    return np.sum(2.0 * J * np.cos(k[..., None] * a * d), axis=-1)


_FLOAT_SERIES_MAX = 12.0
_SERIES_MAX = 20.0


def _j0_series(x: float) -> float:
    q = x * x / 4.0
    term = 1.0
    total = 1.0
    k = 0
    while True:
        k += 1
        term = -term * q / (k * k)
        total += term
        if abs(term) < 1e-17 and k > q:
            return total


def _j0_series_exact(x: float) -> float:
    # exact rational arithmetic: the alternating terms reach ~1e7 at |x| = 20
    q = Fraction(x) ** 2 / 4
    term = Fraction(1)
    total = Fraction(1)
    k = 0
    while True:
        k += 1
        term = -term * q / (k * k)
        total += term
        if abs(term) < Fraction(1, 10**20) and k > q:
            return float(total)


def _j0_asymptotic(x: float) -> float:
    # Hankel expansion with P, Q series truncated at the smallest term
    x = abs(x)
    mu = 0.0
    P = 0.0
    Q = 0.0
    coef = 1.0
    last = np.inf
    for k in range(0, 60):
        # a_k(0) = prod_{j=1..k} (-(2j-1)^2) / (k! 8^k)
        if k > 0:
            coef *= (mu - (2 * k - 1) ** 2) / (k * 8.0)
        term = coef / x**k
        if abs(term) > last:
            break
        last = abs(term)
        if k % 2 == 0:
            P += term * (-1) ** (k // 2)
        else:
            Q += term * (-1) ** (k // 2)
    chi = x - pi / 4
    return sqrt(2.0 / (pi * x)) * (P * cos(chi) - Q * sin(chi))


def bessel_j0(x):
    """Bessel function ``J_0`` from its power series (``|x| <= 20``) or Hankel expansion.

    The series is summed in floating point up to ``|x| = 12`` and in exact
    rational arithmetic beyond, where cancellation would cost precision.

    Accurate to about ``1e-12`` absolute on the real line.
    """
    xs = np.asarray(x, dtype=float)
    out = np.empty(xs.shape)
    for idx, v in np.ndenumerate(xs):
        if not np.isfinite(v):
            raise ValueError("x must be finite")
        if abs(v) <= _FLOAT_SERIES_MAX:
            out[idx] = _j0_series(v)
        elif abs(v) <= _SERIES_MAX:
            out[idx] = _j0_series_exact(v)
        else:
            out[idx] = _j0_asymptotic(v)
    return out if xs.ndim else float(out)


def yukawa(laser: LaserParams) -> float:
    """Yukawa coupling ``g = (Omega_tilde/2) J_0(q_z Delta_k_tilde z0 / 2) cos(Delta_k_tilde z0)``."""
    arg = laser.Delta_k_tilde * laser.z0
    return 0.5 * laser.Omega_tilde * bessel_j0(0.5 * laser.q_z * arg) * cos(arg)


def effective_couplings(trap: TrapParams, laser: LaserParams | None = None, hbar: float = HBAR) -> dict:
    """All effective couplings for a trap (and optional laser) configuration.

    Keys: ``c_b``, ``m0_sq``, ``lam``, ``K``, ``kappa_x``, ``kappa_x_c`` and
    the lattice-unit ``lattice_m0_sq``, ``lattice_lam``; with a laser also
    ``J_table``, ``c_f`` and ``g``.
    """
    lat = lattice_parameters(trap, hbar)
    out = {
        "c_b": lat["c_b"],
        "m0_sq": bare_mass(trap, hbar),
        "lam": quartic_coupling(trap, hbar),
        "K": lat["K"],
        "kappa_x": trap.kappa_x,
        "kappa_x_c": critical_ratio(trap),
        "lattice_m0_sq": lat["m0_sq"],
        "lattice_lam": lat["lam"],
    }
    if laser is not None:
        table = coupling_table(trap, laser)
        out["J_table"] = table
        out["c_f"] = fermi_velocity(table, trap.a)
        out["g"] = yukawa(laser)
    return out
