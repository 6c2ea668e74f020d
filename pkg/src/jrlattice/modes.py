"""Small oscillations around a static background and the Wigner initial state."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from decimal import Decimal, localcontext

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .lattice import LatticeSpec, ScalarState

__all__ = [
    "ModeBasis",
    "WignerSpec",
    "elasticity_matrix",
    "elasticity_bands",
    "normal_modes",
    "stability_classify",
    "lowest_omega_sq_extended",
    "wigner_ground_state",
    "sample_initial",
]


def elasticity_bands(background: ScalarState, spec: LatticeSpec):
    """Diagonal and off-diagonal of the (tridiagonal) elasticity matrix."""
    if background.N != spec.N:
        raise ValueError(f"background has {background.N} sites, spec has {spec.N}")
    a = spec.a
    diag = 2.0 + a**2 * (spec.m0_sq + 3.0 * spec.lam * background.phi**2)
    diag[0] -= 1.0
    diag[-1] -= 1.0
    off = -np.ones(spec.N - 1)
    return diag, off


def elasticity_matrix(background: ScalarState, spec: LatticeSpec) -> np.ndarray:
    """Dense elasticity matrix ``K`` with eigenvalues ``a^2 Omega^2``.

    Diagonal ``2 + m0^2 a^2 + 3 a^2 lam phi_n^2`` (``1 + ...`` on the free
    end rows), off-diagonal ``-1``.
    """
    diag, off = elasticity_bands(background, spec)
    return np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)


@dataclass(frozen=True)
class ModeBasis:
    """Ascending squared frequencies and orthonormal mode columns."""

    omega_sq: np.ndarray
    modes: np.ndarray
    a: float = 1.0


def _fix_signs(vecs):
    idx = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vecs * signs


def normal_modes(K: np.ndarray, a: float = 1.0) -> ModeBasis:
    """Eigendecomposition of a symmetric elasticity matrix.

    Eigenvalues are returned as ``Omega^2 = eig / a^2`` in ascending order;
    each eigenvector has its largest-magnitude component positive.
    """
    K = np.asarray(K, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise ValueError("K must be square")
    if not np.allclose(K, K.T, atol=1e-12, rtol=0):
        raise ValueError("K must be symmetric")
    n = K.shape[0]
    if np.all(np.triu(K, 2) == 0):
        w, v = eigh_tridiagonal(np.diag(K).copy(), np.diag(K, 1).copy())
    else:
        w, v = np.linalg.eigh(K)
    if n and not np.all(np.isfinite(w)):
        raise np.linalg.LinAlgError("eigensolver did not converge")
    v = _fix_signs(v)
    for arr in (w, v):
        arr.flags.writeable = False
    return ModeBasis(w / a**2, v, a)


def stability_classify(background: ScalarState, spec: LatticeSpec, threshold: float = -1e-10, extended: bool = False) -> str:
    """``"unstable"`` if the lowest elasticity eigenvalue is below ``threshold``.

    With ``extended`` the sign of :func:`lowest_omega_sq_extended` decides
    instead, which resolves wide kinks whose lowest eigenvalue is below
    double-precision roundoff.
    """
    if extended:
        return "unstable" if lowest_omega_sq_extended(background, spec) < 0 else "stable"
    diag, off = elasticity_bands(background, spec)
    low = eigh_tridiagonal(diag, off, eigvals_only=True, select="i", select_range=(0, 0))[0]
    return "unstable" if low < threshold else "stable"


def _bands_decimal(phi, m2a2, lama2):
    n = len(phi)
    diag = [2 + m2a2 + 3 * lama2 * p * p for p in phi]
    diag[0] -= 1
    diag[-1] -= 1
    resid = []
    for i, p in enumerate(phi):
        left = phi[i - 1] if i > 0 else p
        right = phi[i + 1] if i < n - 1 else p
        resid.append(2 * p - left - right + (m2a2 + lama2 * p * p) * p)
    return diag, resid


def _solve_tridiagonal(diag, rhs):
    # diag on the diagonal, -1 off the diagonal
    n = len(diag)
    c = [Decimal(0)] * n
    d = [Decimal(0)] * n
    c[0] = -1 / diag[0]
    d[0] = rhs[0] / diag[0]
    for i in range(1, n):
        den = diag[i] + c[i - 1]
        c[i] = -1 / den
        d[i] = (rhs[i] + d[i - 1]) / den
    x = [Decimal(0)] * n
    x[-1] = d[-1]
    for i in range(n - 2, -1, -1):
        x[i] = d[i] - c[i] * x[i + 1]
    return x


def _count_below(diag, sigma):
    # Sturm count: eigenvalues of the tridiagonal matrix below sigma
    count = 0
    q = diag[0] - sigma
    for i in range(1, len(diag) + 1):
        if q == 0:
            q = Decimal(10) ** -200
        if q < 0:
            count += 1
        if i < len(diag):
            q = diag[i] - sigma - 1 / q
    return count


def lowest_omega_sq_extended(background: ScalarState, spec: LatticeSpec, digits: int = 60, max_newton: int = 30) -> float:
    """Lowest ``Omega^2`` of the stationary configuration nearest ``background``.

    Works in ``digits``-digit decimal arithmetic: Newton iterations refine
    ``background`` to a stationary point, then bisection on the Sturm count
    of the elasticity matrix locates its lowest eigenvalue to a relative
    accuracy far below double-precision roundoff. Needed for wide kinks,
    whose lowest mode is exponentially close to zero.

    Raises
    ------
    ArithmeticError
        If Newton does not reach a stationary point.
    """
    if background.N != spec.N:
        raise ValueError(f"background has {background.N} sites, spec has {spec.N}")
    with localcontext() as ctx:
        ctx.prec = digits
        a2 = Decimal(spec.a) ** 2
        m2a2 = Decimal(spec.m0_sq) * a2
        lama2 = Decimal(spec.lam) * a2
        phi = [Decimal(float(v)) for v in background.phi]
        tol = Decimal(10) ** (10 - digits)
        for _ in range(max_newton):
            diag, resid = _bands_decimal(phi, m2a2, lama2)
            if max(abs(r) for r in resid) < tol:
                break
            step = _solve_tridiagonal(diag, [-r for r in resid])
            phi = [p + s for p, s in zip(phi, step)]
        else:
            raise ArithmeticError("Newton refinement did not reach a stationary point")
        lo = min(diag) - 2
        hi = max(diag) + 2
        floor = Decimal(10) ** (20 - digits)
        while hi - lo > floor + Decimal(10) ** (12 - digits // 2) * min(abs(lo), abs(hi)):
            mid = (lo + hi) / 2
            if _count_below(diag, mid) >= 1:
                hi = mid
            else:
                lo = mid
        return float((lo + hi) / 2 / a2)


@dataclass(frozen=True)
class WignerSpec:
    """Gaussian Wigner distribution of the normal-mode amplitudes.

    Attributes
    ----------
    background : ScalarState
    basis : ModeBasis
    var_q, var_p : ndarray
        Per-mode variances of ``Q_nu`` and ``P_nu``.
    p_mean : ndarray
        Per-mode mean momentum shift.
    frozen : ndarray of bool
        Modes held at ``Q = 0``, ``P = p_mean`` without fluctuations.
    """

    background: ScalarState
    basis: ModeBasis
    var_q: np.ndarray
    var_p: np.ndarray
    p_mean: np.ndarray
    frozen: np.ndarray

    def __post_init__(self):
        n = self.background.N
        for name in ("var_q", "var_p", "p_mean", "frozen"):
            arr = np.array(getattr(self, name))
            if arr.shape != (n,):
                raise ValueError(f"{name} must have length {n}")
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        live = ~self.frozen
        if np.any(self.var_q[live] < 0) or np.any(self.var_p[live] < 0):
            raise ValueError("variances must be non-negative")


def wigner_ground_state(
    background: ScalarState,
    spec: LatticeSpec,
    frozen=(),
    p_mean=None,
    basis: ModeBasis | None = None,
) -> WignerSpec:
    """Harmonic ground-state Wigner function around ``background``.

    Stable modes get ``var_q = 1/(2 a Omega)`` and ``var_p = a Omega / 2``
    (``1/(2 Omega)`` and ``Omega / 2`` in lattice units). Frozen modes and
    modes with ``Omega^2 <= 0`` are not sampled; the latter must be listed in
    ``frozen`` or sampling will fail.

    Parameters
    ----------
    frozen : iterable of int
        Mode indices excluded from sampling.
    p_mean : array_like or dict, optional
        Mean momentum per mode; a dict maps mode index to shift.
    """
    if basis is None:
        basis = normal_modes(elasticity_matrix(background, spec), spec.a)
    n = spec.N
    a = spec.a
    mask = np.zeros(n, dtype=bool)
    mask[list(frozen)] = True
    eig = basis.omega_sq * a**2
    with np.errstate(invalid="ignore", divide="ignore"):
        w = np.sqrt(np.where(eig > 0, eig, np.nan))
        var_q = np.where(eig > 0, 0.5 / w, np.nan)
        var_p = np.where(eig > 0, 0.5 * w, np.nan)
    var_q[mask] = 0.0
    var_p[mask] = 0.0
    shift = np.zeros(n)
    if isinstance(p_mean, dict):
        for k, v in p_mean.items():
            shift[k] = v
    elif p_mean is not None:
        shift[:] = p_mean
    if spec.broken and not mask[0] and eig[0] > 0 and var_q[0] > 0.1 * spec.Phi0**2:
        warnings.warn(
            f"lowest mode variance {var_q[0]:.3g} exceeds 0.1 Phi0^2; the Gaussian "
            "state is a poor description of the soliton position",
            RuntimeWarning,
            stacklevel=2,
        )
    return WignerSpec(background, basis, var_q, var_p, shift, mask)


def sample_initial(wspec: WignerSpec, rng: np.random.Generator):
    """Draw ``(phi, pi)`` from the Wigner distribution.

    Two blocks of ``N`` standard normals are drawn per call (amplitudes then
    momenta) so the stream layout does not depend on which modes are frozen.
    """
    live = ~wspec.frozen
    if np.any(live & ~np.isfinite(wspec.var_q)) or np.any(live & ~np.isfinite(wspec.var_p)):
        bad = np.flatnonzero(live & ~(np.isfinite(wspec.var_q) & np.isfinite(wspec.var_p)))
        raise ValueError(f"modes {bad.tolist()} are not stable and must be frozen")
    z = rng.standard_normal((2, wspec.background.N))
    sq = np.where(live, np.sqrt(np.where(live, wspec.var_q, 0.0)), 0.0)
    sp = np.where(live, np.sqrt(np.where(live, wspec.var_p, 0.0)), 0.0)
    Q = sq * z[0]
    P = wspec.p_mean + sp * z[1]
    M = wspec.basis.modes
    phi = wspec.background.phi + M @ Q
    pi = wspec.background.pi + (M @ P) / wspec.basis.a
    return phi, pi
