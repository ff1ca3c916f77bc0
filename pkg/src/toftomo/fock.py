"""Truncated Fock-basis state algebra.

Conventions used throughout the package:

* ``x/x0 = a + a^dag`` and ``p/p0 = i (a^dag - a)`` with
  ``x0 = sqrt(hbar / (2 m w))`` and ``p0 = sqrt(m hbar w / 2)``.
* Quadrature values are dimensionless, ``u = p_tilde / p0``.  The quadrature
  at angle ``theta`` is the momentum observed after harmonic evolution for
  ``t = theta / w``: ``u = (p/p0) cos(theta) - (x/x0) sin(theta)``.
* Density matrices are plain complex ``ndarray`` objects indexed by Fock
  occupation, ``rho[m, n] = <m|rho|n>``.
"""

from dataclasses import dataclass
from math import lgamma, log, sqrt
from typing import NamedTuple

import numpy as np
from scipy.special import eval_genlaguerre

from .constants import DEFAULT_N_MAX, HBAR
from .exceptions import TruncationError, UnsupportedStateError
from .validation import check_density_matrix, check_same_dim

__all__ = [
    "OscillatorSpec",
    "WignerGrid",
    "Negativity",
    "annihilation",
    "number_operator",
    "position_operator",
    "momentum_operator",
    "fock_state",
    "fock_density",
    "pure_to_density",
    "coherent_state",
    "hermite",
    "hermite_functions",
    "quadrature_overlap",
    "quadrature_overlaps",
    "fock_momentum_density_2d",
    "hermitian_function",
    "sqrtm_psd",
    "unitary_from_generator",
    "displacement_matrix",
    "displacement_leakage",
    "squeeze_parameter",
    "squeeze_from_depth_jump",
    "trace_distance",
    "fidelity",
    "purity",
    "wigner",
    "negativity",
]


@dataclass(frozen=True)
class OscillatorSpec:
    """Harmonic oscillator along the tomography axis.

    Parameters
    ----------
    mass : float
        Particle mass in kg.
    omega : float
        Angular trap frequency in rad/s.
    n_max : int
        Highest retained Fock occupation; the basis dimension is ``n_max + 1``.
    """

    mass: float
    omega: float
    n_max: int = DEFAULT_N_MAX

    def __post_init__(self):
        if not self.mass > 0:
            raise ValueError(f"mass must be positive, got {self.mass}")
        if not self.omega > 0:
            raise ValueError(f"omega must be positive, got {self.omega}")
        if int(self.n_max) != self.n_max or self.n_max < 1:
            raise ValueError(f"n_max must be an integer >= 1, got {self.n_max}")

    @property
    def dim(self):
        return int(self.n_max) + 1

    @property
    def x0(self):
        return sqrt(HBAR / (2.0 * self.mass * self.omega))

    @property
    def p0(self):
        return sqrt(self.mass * HBAR * self.omega / 2.0)

    @classmethod
    def from_frequency(cls, mass, freq_hz, n_max=DEFAULT_N_MAX):
        return cls(mass=mass, omega=2.0 * np.pi * freq_hz, n_max=n_max)

    def with_omega(self, omega):
        return OscillatorSpec(self.mass, omega, self.n_max)


# ---------------------------------------------------------------------------
# Operators and states


def annihilation(dim):
    return np.diag(np.sqrt(np.arange(1, dim, dtype=float)), 1)


def number_operator(dim):
    return np.diag(np.arange(dim, dtype=float))


def position_operator(dim):
    """``x/x0 = a + a^dag`` truncated to ``dim`` levels."""
    a = annihilation(dim)
    return a + a.T


def momentum_operator(dim):
    """``p/p0 = i (a^dag - a)`` truncated to ``dim`` levels."""
    a = annihilation(dim)
    return 1j * (a.T - a)


def fock_state(n, dim):
    if not 0 <= n < dim:
        raise ValueError(f"Fock index {n} outside basis of dimension {dim}")
    psi = np.zeros(dim, dtype=complex)
    psi[n] = 1.0
    return psi


def pure_to_density(psi, atol=1e-12):
    psi = np.asarray(psi, dtype=complex)
    norm = np.linalg.norm(psi)
    if abs(norm - 1.0) > atol:
        raise ValueError(f"state vector is not normalized (norm={norm})")
    return np.outer(psi, psi.conj())


def fock_density(populations, dim):
    """Diagonal density matrix with the given Fock populations."""
    populations = np.asarray(populations, dtype=float)
    if populations.size > dim:
        raise ValueError("more populations than basis states")
    rho = np.zeros((dim, dim), dtype=complex)
    rho[np.arange(populations.size), np.arange(populations.size)] = populations
    return rho


def coherent_state(alpha, dim):
    """Truncated coherent-state amplitudes (not renormalized)."""
    amp = np.empty(dim, dtype=complex)
    amp[0] = np.exp(-abs(alpha) ** 2 / 2.0)
    for k in range(1, dim):
        amp[k] = amp[k - 1] * alpha / sqrt(k)
    return amp


# ---------------------------------------------------------------------------
# Hermite functions and quadrature overlaps


def hermite(n, x):
    """Physicists' Hermite polynomial ``H_n(x)`` by three-term recurrence."""
    if int(n) != n or n < 0:
        raise ValueError(f"Hermite order must be a non-negative integer, got {n}")
    x = np.asarray(x, dtype=float)
    h_prev = np.ones_like(x)
    if n == 0:
        return h_prev if h_prev.ndim else float(h_prev)
    h = 2.0 * x
    for k in range(1, int(n)):
        h_prev, h = h, 2.0 * x * h - 2.0 * k * h_prev
    return h if h.ndim else float(h)


def hermite_functions(n_max, u):
    """Normalized oscillator eigenfunctions on the dimensionless axis ``u``.

    Returns an array of shape ``(n_max + 1, len(u))`` holding
    ``(2 pi)^(-1/4) H_n(u/sqrt 2) / sqrt(2^n n!) exp(-u^2/4)``.  The
    normalized recurrence avoids the overflow of ``H_n`` and ``n!``.
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    out = np.empty((n_max + 1, u.size))
    out[0] = (2.0 * np.pi) ** -0.25 * np.exp(-(u ** 2) / 4.0)
    if n_max >= 1:
        out[1] = u * out[0]
    for n in range(1, n_max):
        out[n + 1] = (u * out[n] - sqrt(n) * out[n - 1]) / sqrt(n + 1)
    return out


def quadrature_overlaps(n_max, u, theta):
    """Matrix of overlaps ``<n|u, theta>`` for many quadrature points.

    Parameters
    ----------
    n_max : int
    u, theta : array_like
        Broadcast-compatible dimensionless quadrature values and angles.

    Returns
    -------
    ndarray, shape (npoints, n_max + 1)
        Row ``j`` is the vector ``v_j`` with ``Pi_j = v_j v_j^dag``; the
        normalization is that of a density in ``u``.
    """
    u, theta = np.broadcast_arrays(np.asarray(u, dtype=float), np.asarray(theta, dtype=float))
    u = u.ravel()
    theta = theta.ravel()
    psi = hermite_functions(n_max, u).T
    n = np.arange(n_max + 1)
    phase = 1j * np.exp(1j * np.outer(theta + np.pi / 2.0, n))
    return psi * phase


def quadrature_overlap(n, u, theta, spec=None):
    """Overlap ``<n|p_tilde, theta>`` between a Fock state and a quadrature eigenstate.

    With ``spec`` given the result carries the ``1/sqrt(p0)`` factor of a
    density in physical momentum; otherwise it is normalized in ``u``.
    """
    if int(n) != n or n < 0:
        raise ValueError(f"Fock index must be a non-negative integer, got {n}")
    if spec is not None and n > spec.n_max:
        raise ValueError(f"Fock index {n} exceeds n_max={spec.n_max}")
    u_arr = np.asarray(u, dtype=float)
    theta_arr = np.asarray(theta, dtype=float)
    shape = np.broadcast(u_arr, theta_arr).shape
    vals = quadrature_overlaps(int(n), u_arr, theta_arr)[:, int(n)].reshape(shape)
    if spec is not None:
        vals = vals / sqrt(spec.p0)
    return vals if vals.ndim else complex(vals)


def fock_momentum_density_2d(n_x, p_x, p_y, p0x, p0y):
    """Closed-form 2-D momentum density of ``|n_x, n_y=0>``.

    Only ``n_x`` in {0, 1, 2} is available in closed form; higher states go
    through :func:`quadrature_overlaps`.
    """
    if p0x <= 0 or p0y <= 0:
        raise ValueError("characteristic momenta must be positive")
    if n_x not in (0, 1, 2):
        raise UnsupportedStateError(f"closed-form density only for n_x in (0, 1, 2), got {n_x}")
    sx = np.asarray(p_x, dtype=float) / p0x
    sy = np.asarray(p_y, dtype=float) / p0y
    envelope = np.exp(-(sx ** 2 + sy ** 2) / 2.0)
    if n_x == 0:
        return envelope / (2.0 * np.pi * p0x * p0y)
    if n_x == 1:
        return sx ** 2 * envelope / (2.0 * np.pi * p0x * p0y)
    return (sx ** 2 - 1.0) ** 2 * envelope / (4.0 * np.pi * p0x * p0y)


# ---------------------------------------------------------------------------
# Matrix functions


def hermitian_function(mat, func):
    """Apply ``func`` to the eigenvalues of a Hermitian matrix."""
    w, v = np.linalg.eigh(mat)
    return (v * func(w)) @ v.conj().T


def sqrtm_psd(mat):
    """Square root of a PSD matrix; negative round-off eigenvalues are clamped."""
    return hermitian_function(mat, lambda w: np.sqrt(np.clip(w, 0.0, None)))


def unitary_from_generator(gen):
    """``exp(gen)`` for an anti-Hermitian generator, via ``eigh(i gen)``."""
    herm = 1j * gen
    herm = 0.5 * (herm + herm.conj().T)
    return hermitian_function(herm, lambda w: np.exp(-1j * w))


def _displacement_generator(alpha, dim):
    a = annihilation(dim)
    return alpha * (a.T - a)


def displacement_leakage(x_i, spec, pad=60):
    """Population of ``D(x_i)|0>`` that lands above ``n_max``."""
    alpha = x_i / (2.0 * spec.x0)
    big = spec.dim + pad + int(4 * alpha ** 2)
    col = unitary_from_generator(_displacement_generator(alpha, big))[:, 0]
    return float(np.sum(np.abs(col[spec.dim:]) ** 2))


def displacement_matrix(x_i, spec):
    """Truncated displacement ``exp(-i p x_i / hbar)`` (positive ``x_i`` shifts ``<x>`` up).

    Raises
    ------
    TruncationError
        If ``|x_i| / (2 x0) > n_max / 4``.
    """
    alpha = x_i / (2.0 * spec.x0)
    if abs(alpha) > spec.n_max / 4.0:
        raise TruncationError(
            f"displacement {x_i:.3g} m (alpha={alpha:.3g}) exceeds truncation limit n_max/4={spec.n_max / 4}",
            leakage=displacement_leakage(x_i, spec),
        )
    if alpha == 0:
        return np.eye(spec.dim, dtype=complex)
    return unitary_from_generator(_displacement_generator(alpha, spec.dim))


def squeeze_parameter(depth_ratio):
    """Squeeze parameter of a sudden depth jump, ``r = ln(depth_ratio) / 4``."""
    if not depth_ratio > 0:
        raise ValueError(f"depth ratio must be positive, got {depth_ratio}")
    return 0.25 * log(depth_ratio)


def squeeze_from_depth_jump(depth_ratio, spec, pad=40):
    """Basis change from the pre-jump trap to the post-jump trap.

    Column ``n`` holds old-trap Fock state ``|n>`` expanded in the Fock basis of
    the new trap (``omega_new = sqrt(depth_ratio) * omega_old``).  The state
    itself is unchanged by a sudden jump; only the reference oscillator moves,
    which acts as ``S = exp(r/2 (a^dag^2 - a^2))``.  The exponential is taken
    in a padded basis and cropped, so low columns are accurate.
    """
    r = squeeze_parameter(depth_ratio)
    if r == 0:
        return np.eye(spec.dim, dtype=complex)
    big = spec.dim + pad
    a = annihilation(big)
    gen = 0.5 * r * (a.T @ a.T - a @ a)
    return unitary_from_generator(gen)[: spec.dim, : spec.dim]


# ---------------------------------------------------------------------------
# Metrics


def trace_distance(a, b):
    """``T = 1/2 Tr |a - b|``."""
    check_same_dim(a, b)
    diff = np.asarray(a) - np.asarray(b)
    diff = 0.5 * (diff + diff.conj().T)
    return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh(diff))))


def fidelity(a, b):
    """Uhlmann fidelity ``(Tr sqrt(sqrt(a) b sqrt(a)))^2``, clipped to [0, 1]."""
    check_same_dim(a, b)
    sa = sqrtm_psd(np.asarray(a))
    inner = sa @ np.asarray(b) @ sa
    inner = 0.5 * (inner + inner.conj().T)
    w = np.linalg.eigvalsh(inner)
    val = float(np.sum(np.sqrt(np.clip(w, 0.0, None))) ** 2)
    return min(max(val, 0.0), 1.0)


def purity(rho):
    rho = np.asarray(rho)
    return float(np.real(np.trace(rho @ rho)))


# ---------------------------------------------------------------------------
# Wigner function


@dataclass(frozen=True)
class WignerGrid:
    """Wigner function sampled on a rectangular phase-space grid.

    ``values[i, j]`` is ``W(x_axis[j], p_axis[i])`` with both axes in units of
    ``x0`` and ``p0``.  A pure ``|1>`` reaches ``-1/pi``; the normalization is
    ``int W dx dp / hbar = 1``, i.e. ``sum(W) dX dP / 2 = 1`` on the
    dimensionless grid.
    """

    x_axis: np.ndarray
    p_axis: np.ndarray
    values: np.ndarray
    imag_residue: float = 0.0

    def integral(self):
        dx = np.gradient(self.x_axis)
        dp = np.gradient(self.p_axis)
        return float(np.sum(self.values * np.outer(dp, dx)) / 2.0)

    def value_at(self, x, p):
        """Value at the grid node nearest to ``(x, p)``."""
        j = int(np.argmin(np.abs(self.x_axis - x)))
        i = int(np.argmin(np.abs(self.p_axis - p)))
        return float(self.values[i, j])


class Negativity(NamedTuple):
    value: float
    x: float
    p: float
    negative: bool


def _wigner_radial_terms(dim, r2):
    """Yield ``(k, delta, B)`` with ``B = (-1)^k e^{-r2/2} sqrt(k!/(k+d)!) r^d L_k^d(r2)``."""
    r = np.sqrt(r2)
    envelope = np.exp(-r2 / 2.0)
    for delta in range(dim):
        r_pow = r ** delta
        for k in range(dim - delta):
            coef = (-1) ** k * np.exp(0.5 * (lgamma(k + 1) - lgamma(k + delta + 1)))
            yield k, delta, coef * envelope * r_pow * eval_genlaguerre(k, delta, r2)


def wigner(rho, x_axis, p_axis, check=True):
    """Evaluate the Wigner function of ``rho`` on a grid.

    Parameters
    ----------
    rho : ndarray
        Density matrix in the Fock basis.
    x_axis, p_axis : array_like
        Monotone axes in units of ``x0`` and ``p0``.

    Returns
    -------
    WignerGrid
    """
    rho = np.asarray(rho, dtype=complex)
    if check:
        check_density_matrix(rho)
    x_axis = np.asarray(x_axis, dtype=float)
    p_axis = np.asarray(p_axis, dtype=float)
    for name, ax in (("x_axis", x_axis), ("p_axis", p_axis)):
        if ax.ndim != 1 or not np.all(np.isfinite(ax)):
            raise ValueError(f"{name} must be a finite 1-D array")
        if ax.size > 1 and not (np.all(np.diff(ax) > 0) or np.all(np.diff(ax) < 0)):
            raise ValueError(f"{name} must be monotone")
    X, P = np.meshgrid(x_axis, p_axis)
    alpha = X + 1j * P
    r2 = np.abs(alpha) ** 2
    phase = np.exp(-1j * np.angle(alpha))
    dim = rho.shape[0]
    total = np.zeros(r2.shape, dtype=complex)
    phase_pow = {0: np.ones_like(phase)}
    for k, delta, base in _wigner_radial_terms(dim, r2):
        if delta == 0:
            total += rho[k, k] * base
            continue
        if delta not in phase_pow:
            phase_pow[delta] = phase ** delta
        ph = phase_pow[delta]
        # m - n = +delta for rho[k+delta, k], -delta for rho[k, k+delta]
        total += base * (rho[k + delta, k] * ph + rho[k, k + delta] * ph.conj())
    total /= np.pi
    return WignerGrid(x_axis, p_axis, total.real, float(np.max(np.abs(total.imag))))


def negativity(w):
    """Minimum of a Wigner grid and where it occurs.

    A positive minimum is returned unchanged with ``negative=False``.
    """
    idx = np.unravel_index(np.argmin(w.values), w.values.shape)
    val = float(w.values[idx])
    return Negativity(val, float(w.x_axis[idx[1]]), float(w.p_axis[idx[0]]), val < 0)
