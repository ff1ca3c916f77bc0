"""Harmonic and anharmonic motion in the truncated Fock basis."""

import threading
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .exceptions import TruncationWarning
from .fock import (
    OscillatorSpec,
    annihilation,
    displacement_matrix,
    momentum_operator,
    quadrature_overlaps,
    squeeze_from_depth_jump,
)
from .validation import check_density_matrix

__all__ = [
    "TrapModel",
    "MixtureSpec",
    "EvolutionResult",
    "build_hamiltonian",
    "hamiltonian_eigensystem",
    "evolve",
    "quadrature_distribution",
    "momentum_expectation_trace",
    "prepare_state",
    "rescale_trap",
    "buffer_population",
    "trap_eigenstate_indices",
]

LAMBDA_LIMIT = 0.1
BUFFER_FRACTION = 0.2
BUFFER_WARN = 1e-4


@dataclass(frozen=True)
class TrapModel:
    """Harmonic trap with an optional quartic (and stabilizing sextic) term.

    ``lam`` is the dimensionless quartic strength ``Lambda x0^4 / (hbar w)``.
    The sextic term ``(2 lam^2 / 3)(x/x0)^6`` is switched on automatically
    for negative ``lam``.
    """

    spec: OscillatorSpec
    lam: float = 0.0
    include_sextic: bool = None

    def __post_init__(self):
        if not abs(self.lam) < LAMBDA_LIMIT:
            raise ValueError(f"|lambda| must be < {LAMBDA_LIMIT}, got {self.lam}")
        if self.include_sextic is None:
            object.__setattr__(self, "include_sextic", self.lam < 0)
        elif self.lam < 0 and not self.include_sextic:
            raise ValueError("negative lambda requires the sextic stabilizer")


@dataclass(frozen=True)
class MixtureSpec:
    """Populations ``(P0, P1, P2)`` of the three lowest trap eigenstates."""

    populations: tuple = (1.0, 0.0, 0.0)

    def __post_init__(self):
        pops = tuple(float(p) for p in self.populations)
        if len(pops) != 3:
            raise ValueError("mixture needs exactly three populations")
        if min(pops) < 0:
            raise ValueError(f"populations must be non-negative, got {pops}")
        if abs(sum(pops) - 1.0) > 1e-10:
            raise ValueError(f"populations must sum to 1, got {sum(pops)}")
        object.__setattr__(self, "populations", pops)


@dataclass(frozen=True)
class EvolutionResult:
    rho_t: np.ndarray = field(repr=False)
    t_e: float
    theta_equivalent: float


def _padded_dim(dim):
    return dim + 4


@lru_cache(maxsize=64)
def _hamiltonian_cached(dim, lam, sextic):
    big = _padded_dim(dim)
    a = annihilation(big)
    x = a + a.T
    k = a.T - a
    x2 = x @ x
    h = -0.25 * (k @ k) + 0.25 * x2
    if lam:
        x4 = x2 @ x2
        h = h + lam * x4
        if sextic:
            h = h + (2.0 * lam ** 2 / 3.0) * (x4 @ x2)
    h = h[:dim, :dim]
    h = 0.5 * (h + h.T)
    h.setflags(write=False)
    return h


def build_hamiltonian(model):
    """Hamiltonian in units of ``hbar * omega`` on the truncated Fock basis.

    Powers of ``x/x0`` are formed in a slightly larger basis and cropped, so
    every retained matrix element is exact.
    """
    return np.array(_hamiltonian_cached(model.spec.dim, float(model.lam), bool(model.include_sextic)), dtype=complex)


_eig_lock = threading.Lock()


@lru_cache(maxsize=256)
def _eigensystem_cached(dim, lam_key, sextic):
    h = _hamiltonian_cached(dim, lam_key, sextic)
    w, v = np.linalg.eigh(h)
    # deterministic phase: largest component of each eigenvector real positive
    idx = np.argmax(np.abs(v), axis=0)
    v = v * np.sign(v[idx, np.arange(dim)])
    w.setflags(write=False)
    v.setflags(write=False)
    return w, v


def _quantize(lam):
    if lam == 0:
        return 0.0
    # 1e-6 relative quantization keeps fit-time cache hits stable
    exp = np.floor(np.log10(abs(lam)))
    return float(np.round(lam / 10 ** exp, 6) * 10 ** exp)


def hamiltonian_eigensystem(model):
    """Eigenvalues (units of ``hbar w``) and eigenvectors of the trap Hamiltonian.

    Cached per ``(dim, lambda, sextic)``; the Hamiltonian in these units does
    not depend on ``omega``.
    """
    with _eig_lock:
        return _eigensystem_cached(model.spec.dim, _quantize(float(model.lam)), bool(model.include_sextic))


def buffer_population(rho, fraction=BUFFER_FRACTION):
    """Population in the top ``fraction`` of Fock levels."""
    dim = rho.shape[0]
    start = dim - max(1, int(round(fraction * dim)))
    return float(np.real(np.trace(rho) - np.trace(rho[:start, :start])))


def _warn_buffer(rho, where):
    pop = buffer_population(rho)
    if pop > BUFFER_WARN:
        warnings.warn(
            f"{where}: {pop:.2e} population in the top {int(BUFFER_FRACTION * 100)}% of Fock levels; "
            "results may suffer from basis truncation",
            TruncationWarning,
            stacklevel=3,
        )


def _evolve_matrix(rho, w, v, phase_scale):
    rho_e = v.T @ rho @ v
    ph = np.exp(-1j * phase_scale * w)
    rho_e = ph[:, None] * rho_e * ph.conj()[None, :]
    out = v @ rho_e @ v.T
    return 0.5 * (out + out.conj().T)


def evolve(rho, model, t_e, warn=True):
    """Evolve ``rho`` under the trap Hamiltonian for ``t_e`` seconds."""
    rho = check_density_matrix(rho)
    w, v = hamiltonian_eigensystem(model)
    rho_t = _evolve_matrix(rho, w, v, model.spec.omega * t_e)
    if warn:
        _warn_buffer(rho_t, "evolve")
    theta = float(np.mod(model.spec.omega * t_e, 2.0 * np.pi))
    return EvolutionResult(rho_t, float(t_e), theta)


def quadrature_distribution(rho, theta, u_grid, spec=None):
    """Probability density of the quadrature ``u`` at angle ``theta``.

    The density is per unit ``u``; with ``spec`` given it is converted to a
    density per unit physical momentum (``/ p0``).
    """
    rho = np.asarray(rho, dtype=complex)
    n_max = rho.shape[0] - 1
    v = quadrature_overlaps(n_max, u_grid, theta)
    prob = np.real(np.sum(v.conj() * (v @ rho.T), axis=1))
    prob = np.clip(prob, 0.0, None).reshape(np.shape(u_grid))
    if spec is not None:
        prob = prob / spec.p0
    return prob


def momentum_expectation_trace(rho0, model, times):
    """Mean momentum ``<p>(t)`` in kg m/s for each time in ``times``."""
    rho0 = check_density_matrix(rho0)
    times = np.asarray(times, dtype=float)
    w, v = hamiltonian_eigensystem(model)
    rho_e = v.T @ rho0 @ v
    p_e = v.T @ momentum_operator(model.spec.dim) @ v
    # <p>(t) = sum_kl rho_kl p_lk exp(-i w t (E_k - E_l))
    c = (rho_e * p_e.T).ravel()
    de = (w[:, None] - w[None, :]).ravel()
    keep = np.abs(c) > 1e-300
    phases = np.exp(-1j * model.spec.omega * np.outer(times, de[keep]))
    return model.spec.p0 * np.real(phases @ c[keep])


def trap_eigenstate_indices(model, count=3):
    """Eigenvector columns adiabatically connected to Fock states ``0 .. count-1``.

    For strongly negative ``lambda`` the truncated basis can hold spurious
    states living in the top levels whose energies sort among the lowest few;
    selecting by largest overlap with ``|n>`` skips them.
    """
    _, v = hamiltonian_eigensystem(model)
    weight = np.abs(v[:count, :]) ** 2
    idx = [int(np.argmax(weight[n])) for n in range(count)]
    if len(set(idx)) != count:
        raise ValueError(f"trap eigenstates are not separable from Fock states (lambda={model.lam})")
    return idx


def _eigen_mixture(populations, model):
    _, v = hamiltonian_eigensystem(model)
    idx = trap_eigenstate_indices(model, len(populations))
    dim = model.spec.dim
    rho = np.zeros((dim, dim), dtype=complex)
    for n, pop in enumerate(populations):
        if pop:
            rho += pop * np.outer(v[:, idx[n]], v[:, idx[n]])
    return rho


def prepare_state(mix, model, x_i=0.0, depth_jump_ratio=1.0):
    """Initial state: eigenstate mixture, optional depth jump, then displacement.

    The mixture is built from eigenstates of the pre-jump trap (the model
    rescaled to depth ``1 / depth_jump_ratio``), expressed in the Fock basis
    of ``model`` through the sudden-jump basis change, and finally displaced
    by ``x_i`` meters.
    """
    if not isinstance(mix, MixtureSpec):
        mix = MixtureSpec(tuple(mix))
    if depth_jump_ratio == 1.0:
        rho = _eigen_mixture(mix.populations, model)
    else:
        before, _ = rescale_trap(model, 1.0 / depth_jump_ratio)
        rho_old = _eigen_mixture(mix.populations, before)
        s = squeeze_from_depth_jump(depth_jump_ratio, model.spec)
        rho = s @ rho_old @ s.conj().T
    if x_i:
        d = displacement_matrix(x_i, model.spec)
        rho = d @ rho @ d.conj().T
    rho = 0.5 * (rho + rho.conj().T)
    return rho / np.real(np.trace(rho))


def rescale_trap(model, depth_ratio, x_i=None, displacement_ratio=1.0):
    """Rescale a trap model to a new depth.

    With the Hamiltonian linear in depth ``V``, ``omega ~ sqrt(V)`` and
    ``lambda ~ 1/sqrt(V)``.  The displacement is scaled by the explicit
    ``displacement_ratio``.

    Returns
    -------
    (TrapModel, float or None)
    """
    if not depth_ratio > 0:
        raise ValueError("depth ratio must be positive")
    root = np.sqrt(depth_ratio)
    spec = model.spec.with_omega(model.spec.omega * root)
    new = TrapModel(spec, model.lam / root, None if model.lam >= 0 else True)
    return new, (None if x_i is None else x_i * displacement_ratio)
