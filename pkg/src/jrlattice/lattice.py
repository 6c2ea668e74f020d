"""Lattice lambda-phi^4 model: parameters, profiles, energies and reference values.

Sites are labelled by an integer coordinate ``x_j = j - (N - 1) // 2`` so that
the central site sits at ``x = 0``. The same coordinate fixes the staggering
sign ``(-1)**x`` used by the fermion sector, which makes the central site even.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

__all__ = [
    "LatticeSpec",
    "ScalarState",
    "SolitonProfile",
    "site_coordinates",
    "site_parity",
    "kink_profile",
    "kink_antikink_profile",
    "total_energy",
    "energy_density",
    "topological_charge",
    "soliton_mass_reference",
    "scalar_dispersion",
    "ellipk_agm",
    "tadpole_mass",
    "continuum_zero_mode",
    "zero_crossings",
]


def site_coordinates(N: int) -> np.ndarray:
    """Integer site coordinates ``x_j = j - (N - 1) // 2`` as floats."""
    return np.arange(N, dtype=float) - (N - 1) // 2


def site_parity(N: int) -> np.ndarray:
    """Staggering sign ``(-1)**x_j``; the central site is even."""
    x = np.arange(N) - (N - 1) // 2
    return np.where(x % 2 == 0, 1.0, -1.0)


@dataclass(frozen=True)
class LatticeSpec:
    """Parameters of the discretised scalar field theory.

    Parameters
    ----------
    N : int
        Number of sites, at least 8.
    m0_sq : float
        Bare mass squared; negative values select the broken phase.
    lam : float
        Quartic coupling, positive; zero is accepted when ``m0_sq > 0``.
    a : float
        Lattice spacing.
    boundary : str
        Only ``"open"`` (free ends) is supported.
    """

    N: int
    m0_sq: float
    lam: float
    a: float = 1.0
    boundary: str = "open"

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 8:
            raise ValueError(f"N must be an integer >= 8, got {self.N}")
        if not (self.a > 0 and np.isfinite(self.a)):
            raise ValueError(f"lattice spacing must be positive, got {self.a}")
        if not np.isfinite(self.m0_sq):
            raise ValueError("m0_sq must be finite")
        # lam = 0 is admitted only for the free massive chain
        if not (np.isfinite(self.lam) and (self.lam > 0 or (self.lam == 0 and self.m0_sq > 0))):
            raise ValueError(f"lam must be positive (or zero with m0_sq > 0), got {self.lam}")
        if self.boundary != "open":
            raise ValueError(f"unsupported boundary {self.boundary!r}")

    @classmethod
    def from_kink(cls, N: int, Phi0: float, xi0: float, a: float = 1.0) -> "LatticeSpec":
        """Build the broken-phase model with vacuum ``Phi0`` and kink width ``xi0``.

        Uses ``m0_sq = -2 / xi0**2`` and ``lam = -m0_sq / Phi0**2``.
        """
        if Phi0 <= 0 or xi0 <= 0:
            raise ValueError("Phi0 and xi0 must be positive")
        m0_sq = -2.0 / xi0**2
        return cls(N=N, m0_sq=m0_sq, lam=-m0_sq / Phi0**2, a=a)

    @property
    def broken(self) -> bool:
        return self.m0_sq < 0

    @property
    def Phi0(self) -> float:
        """Vacuum expectation value ``sqrt(-m0_sq / lam)``."""
        if not self.broken:
            raise ValueError("Phi0 is only defined in the broken phase")
        return float(np.sqrt(-self.m0_sq / self.lam))

    @property
    def xi0(self) -> float:
        """Continuum kink width ``sqrt(2 / |m0_sq|)``."""
        if not self.broken:
            raise ValueError("xi0 is only defined in the broken phase")
        return float(np.sqrt(-2.0 / self.m0_sq))

    @property
    def sites(self) -> np.ndarray:
        return site_coordinates(self.N)

    @property
    def parity(self) -> np.ndarray:
        return site_parity(self.N)

    @property
    def vacuum_energy_density(self) -> float:
        """Potential energy per site of the homogeneous vacuum."""
        if not self.broken:
            return 0.0
        return -self.m0_sq**2 / (4.0 * self.lam)


@dataclass(frozen=True)
class ScalarState:
    """Immutable snapshot of the field ``phi`` and its conjugate momentum ``pi``."""

    phi: np.ndarray
    pi: np.ndarray = field(default=None)

    def __post_init__(self):
        phi = np.array(self.phi, dtype=float)
        pi = np.zeros_like(phi) if self.pi is None else np.array(self.pi, dtype=float)
        if phi.ndim != 1 or pi.shape != phi.shape:
            raise ValueError("phi and pi must be 1-d arrays of equal length")
        if not (np.all(np.isfinite(phi)) and np.all(np.isfinite(pi))):
            raise ValueError("state contains non-finite values")
        phi.flags.writeable = False
        pi.flags.writeable = False
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "pi", pi)

    @property
    def N(self) -> int:
        return self.phi.size


@dataclass(frozen=True)
class SolitonProfile:
    """Analytic soliton: topological charge, center (sites) and width (sites)."""

    q_t: int = 1
    center: float = 0.0
    width: float = 1.0

    def __post_init__(self):
        if self.q_t not in (1, -1):
            raise ValueError("q_t must be +1 or -1")
        if self.width <= 0:
            raise ValueError("width must be positive")


def kink_profile(spec: LatticeSpec, profile: SolitonProfile | None = None) -> ScalarState:
    """Static kink ``q_t * Phi0 * tanh(a (x - x0) / xi0)`` with zero momentum.

    ``profile.width`` is in units of the lattice spacing; by default the kink
    has the continuum width ``xi0 / a`` and sits on the central site.
    """
    if not spec.broken:
        raise ValueError("kinks require m0_sq < 0")
    if profile is None:
        profile = SolitonProfile(width=spec.xi0 / spec.a)
    phi = profile.q_t * spec.Phi0 * np.tanh((spec.sites - profile.center) / profile.width)
    return ScalarState(phi)


def kink_antikink_profile(
    spec: LatticeSpec, d: float, width: float | None = None, center: float = 0.0
) -> ScalarState:
    """Kink at ``center - d/2`` and antikink at ``center + d/2`` (sites).

    The field approaches ``-Phi0`` at both ends. For ``d < 0`` the walls are
    swapped and the region between them sits near ``-3 Phi0``.
    """
    if not spec.broken:
        raise ValueError("kinks require m0_sq < 0")
    w = spec.xi0 / spec.a if width is None else width
    x = spec.sites - center
    P = spec.Phi0
    phi = -P * np.tanh((x - d / 2) / w) + P * np.tanh((x + d / 2) / w) - P
    return ScalarState(phi)


def _occupation_diagonal(corr, N):
    c = np.asarray(corr)
    occ = np.real(np.diagonal(c)) if c.ndim == 2 else np.real(c)
    if occ.shape != (N,):
        raise ValueError(f"correlation data has shape {c.shape}, expected N={N}")
    return occ


def energy_density(spec: LatticeSpec, state: ScalarState, g: float = 0.0, corr=None) -> np.ndarray:
    """Site-resolved energy density.

    The forward-difference gradient of link ``(n, n+1)`` is assigned to site
    ``n``. When a correlation matrix ``corr`` (``C = a * Gamma``, or just its
    diagonal) is given, the Yukawa term ``g (-1)^n phi_n Gamma_nn`` is added.
    """
    if state.N != spec.N:
        raise ValueError(f"state has {state.N} sites, spec has {spec.N}")
    a = spec.a
    phi = state.phi
    grad = np.zeros_like(phi)
    grad[:-1] = (phi[1:] - phi[:-1]) / a
    dens = 0.5 * state.pi**2 + 0.5 * grad**2 + 0.5 * spec.m0_sq * phi**2 + 0.25 * spec.lam * phi**4
    if corr is not None:
        occ = _occupation_diagonal(corr, spec.N)
        dens = dens + g * spec.parity * phi * occ / a
    return dens


def total_energy(spec: LatticeSpec, state: ScalarState, g: float = 0.0, corr=None) -> float:
    """Lattice Hamiltonian ``a * sum(energy_density)``."""
    return float(spec.a * np.sum(energy_density(spec, state, g, corr)))


def topological_charge(spec: LatticeSpec, state: ScalarState, offset: int = 3) -> float:
    """``(phi[N-1-offset] - phi[offset]) / (2 Phi0)``, skipping ``offset`` end sites."""
    if state.N != spec.N:
        raise ValueError(f"state has {state.N} sites, spec has {spec.N}")
    if not 0 <= offset < spec.N // 2:
        raise ValueError("offset out of range")
    return float((state.phi[spec.N - 1 - offset] - state.phi[offset]) / (2.0 * spec.Phi0))


def soliton_mass_reference(m0_sq: float, lam: float, quantum_corrected: bool = False) -> float:
    """Continuum kink mass ``(2 sqrt(2) / 3) |m0|^3 / lam``.

    With ``quantum_corrected`` the one-loop shift ``2 mu (1/(2 sqrt 3) - 3/(2 pi))``
    with ``mu = |m0|`` is added.
    """
    if m0_sq >= 0:
        raise ValueError("the kink mass requires m0_sq < 0")
    if lam <= 0:
        raise ValueError("lam must be positive")
    m = np.sqrt(-m0_sq)
    M = 2.0 * np.sqrt(2.0) / 3.0 * m**3 / lam
    if quantum_corrected:
        M += 2.0 * m * (1.0 / (2.0 * np.sqrt(3.0)) - 3.0 / (2.0 * np.pi))
    return float(M)


def scalar_dispersion(k, spec: LatticeSpec, mass_sq: float | None = None) -> np.ndarray:
    """Lattice Klein-Gordon frequency ``sqrt(m^2 + (4/a^2) sin^2(k a / 2))``.

    ``mass_sq`` defaults to ``spec.m0_sq``; broken-phase callers pass the
    fluctuation mass ``2 |m0_sq|``.
    """
    m2 = spec.m0_sq if mass_sq is None else mass_sq
    a = spec.a
    w2 = m2 + 4.0 / a**2 * np.sin(np.asarray(k, dtype=float) * a / 2) ** 2
    if np.any(w2 < 0):
        raise ValueError("negative frequency squared; use the fluctuation mass in the broken phase")
    return np.sqrt(w2)


def ellipk_agm(m: float, tol: float = 1e-15) -> float:
    """Complete elliptic integral ``K(m) = int_0^{pi/2} (1 - m sin^2)^{-1/2}``.

    Evaluated with the arithmetic-geometric mean ``K = pi / (2 agm(1, sqrt(1-m)))``.
    """
    if not m < 1:
        raise ValueError(f"K(m) diverges for m >= 1, got {m}")
    x, y = 1.0, np.sqrt(1.0 - m)
    for _ in range(64):
        if abs(x - y) <= tol * x:
            break
        x, y = 0.5 * (x + y), np.sqrt(x * y)
    return float(np.pi / (x + y))


def tadpole_mass(mu_sq: float, lam: float, a: float = 1.0) -> float:
    """Bare mass from the one-loop normal-ordering (tadpole) counterterm.

    ``m0^2 = mu^2 - (3 lam / 2 pi) (1 + mu^2 a^2 / 4)^{-1/2} K(1 / (1 + mu^2 a^2 / 4))``
    """
    s = 1.0 + mu_sq * a**2 / 4.0
    if mu_sq <= 0 or s <= 1.0:
        raise ValueError("the tadpole integral diverges unless mu^2 a^2 > 0")
    return float(mu_sq - 3.0 * lam / (2.0 * np.pi) / np.sqrt(s) * ellipk_agm(1.0 / s))


def continuum_zero_mode(
    x, g: float, lam: float, xi: float, c_f: float = 1.0, x0: float = 0.0, q_t: int = 1
) -> np.ndarray:
    """Normalised Jackiw-Rebbi zero mode of the continuum kink.

    Returns an array of shape ``(len(x), 2)`` holding the two spinor
    components ``N cosh^{-p}((x - x0)/xi) (1, i q_t) / sqrt(2)`` with
    ``p = sqrt(2 g^2 / (lam c_f^2))``.
    """
    if g <= 0 or lam <= 0 or xi <= 0 or c_f <= 0:
        raise ValueError("g, lam, xi and c_f must be positive")
    if q_t not in (1, -1):
        raise ValueError("q_t must be +1 or -1")
    p = np.sqrt(2.0 * g**2 / (lam * c_f**2))
    # int cosh^{-2p}(u/xi) du = xi sqrt(pi) Gamma(p) / Gamma(p + 1/2)
    log_norm = 0.5 * (gammaln(p + 0.5) - gammaln(p) - np.log(xi * np.sqrt(np.pi)))
    u = np.abs((np.asarray(x, dtype=float) - x0) / xi)
    # cosh^{-p}(u) = (2 e^{-u} / (1 + e^{-2u}))^p, stable for large u
    amp = np.exp(log_norm + p * (np.log(2.0) - u - np.log1p(np.exp(-2.0 * u))))
    spinor = np.array([1.0, 1j * q_t]) / np.sqrt(2.0)
    return amp[:, None] * spinor[None, :]


def zero_crossings(phi, x=None) -> np.ndarray:
    """Linearly interpolated positions where ``phi`` changes sign.

    Exact zeros count once; ``x`` defaults to the site coordinates.
    """
    phi = np.asarray(phi, dtype=float)
    x = site_coordinates(phi.size) if x is None else np.asarray(x, dtype=float)
    s = np.sign(phi)
    out = []
    i = 0
    n = phi.size
    while i < n - 1:
        if s[i] == 0:
            out.append(x[i])
            i += 1
            continue
        if s[i] * s[i + 1] < 0:
            out.append(x[i] - phi[i] * (x[i + 1] - x[i]) / (phi[i + 1] - phi[i]))
        i += 1
    if n and s[-1] == 0:
        out.append(x[-1])
    return np.asarray(out)
