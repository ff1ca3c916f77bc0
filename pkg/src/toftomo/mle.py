"""Iterative maximum-likelihood density-matrix reconstruction.

The estimator repeatedly applies ``rho <- R rho R / Tr(...)`` with
``R = sum_j f_j / P_j Pi_j``.  When a full step would lower the likelihood,
a diluted step ``(1 + eps R) rho (1 + eps R)`` with shrinking ``eps`` is
taken instead, which keeps the likelihood trace nondecreasing.
"""

from dataclasses import dataclass, field

import numpy as np

from .constants import DEFAULT_N_MAX, MLE_MAX_ITERATIONS, MLE_TOLERANCE
from .exceptions import DegenerateDataError
from .fock import quadrature_overlaps, sqrtm_psd, trace_distance
from .quadrature import QuadratureDataset
from .validation import check_density_matrix

__all__ = [
    "MleConfig",
    "MleResult",
    "PROBABILITY_FLOOR",
    "projector",
    "predicted_probability",
    "predicted_probabilities",
    "r_operator",
    "log_likelihood",
    "mle_step",
    "reconstruct",
]

PROBABILITY_FLOOR = 1e-12
_MAX_DILUTIONS = 40


@dataclass(frozen=True)
class MleConfig:
    """Reconstruction settings.

    Parameters
    ----------
    n_max : int
        Highest Fock level of the reconstructed density matrix.
    tolerance : float
        Stop once the trace distance between successive iterates drops below this.
    max_iterations : int
    safeguard : bool
        Fall back to diluted steps whenever a full step lowers the likelihood.
    initial : {"identity", "ones"}
        Starting matrix.  ``"ones"`` is rank one, and since ``R rho R``
        preserves rank its iterates stay pure; use it only for pure targets.
    """

    n_max: int = DEFAULT_N_MAX
    tolerance: float = MLE_TOLERANCE
    max_iterations: int = MLE_MAX_ITERATIONS
    safeguard: bool = True
    initial: str = "identity"

    def __post_init__(self):
        if int(self.n_max) != self.n_max or self.n_max < 0:
            raise ValueError(f"n_max must be a non-negative integer, got {self.n_max}")
        if not self.tolerance > 0:
            raise ValueError(f"tolerance must be > 0, got {self.tolerance}")
        if int(self.max_iterations) != self.max_iterations or self.max_iterations < 1:
            raise ValueError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if self.initial not in ("identity", "ones"):
            raise ValueError(f"initial must be 'identity' or 'ones', got {self.initial!r}")


@dataclass(frozen=True)
class MleResult:
    rho: np.ndarray = field(repr=False)
    iterations_used: int
    final_step: float
    log_likelihood_trace: np.ndarray = field(repr=False)
    converged: bool
    clamped_input: bool = False
    diluted_steps: int = 0

    @property
    def n_max(self):
        return self.rho.shape[0] - 1

    @property
    def log_likelihood(self):
        return float(self.log_likelihood_trace[-1])


def _as_dataset(data):
    if isinstance(data, QuadratureDataset):
        return data
    theta, u, w = data
    return QuadratureDataset(theta, u, w)


def projector(theta, u, n_max, spec=None):
    """Rank-one projector ``|u, theta><u, theta|`` truncated to ``n_max``.

    Normalized as a density in ``u`` (or in physical momentum when ``spec``
    is given).
    """
    v = quadrature_overlaps(n_max, np.atleast_1d(u), np.atleast_1d(theta))[0]
    pi = np.outer(v, v.conj())
    if spec is not None:
        pi = pi / spec.p0
    return pi


def predicted_probabilities(rho, theta, u):
    """``Tr(rho Pi_j)`` for each quadrature point (density in ``u``)."""
    rho = np.asarray(rho, dtype=complex)
    v = quadrature_overlaps(rho.shape[0] - 1, u, theta)
    return _probabilities(rho, v)


def predicted_probability(rho, theta, u):
    """Scalar version of :func:`predicted_probabilities`."""
    return float(predicted_probabilities(rho, np.atleast_1d(theta), np.atleast_1d(u))[0])


def _probabilities(rho, v):
    # P_j = v_j^dag rho v_j with Pi_j = v_j v_j^dag
    return np.real(np.sum(v.conj() * (v @ rho.T), axis=1))


def _r_from(v, f, prob):
    if np.all(prob < PROBABILITY_FLOOR):
        raise DegenerateDataError("every predicted probability is below the division floor")
    c = f / np.maximum(prob, PROBABILITY_FLOOR)
    r = v.T @ (c[:, None] * v.conj())
    return 0.5 * (r + r.conj().T)


def _loglik(f, prob):
    return float(np.sum(f * np.log(np.maximum(prob, PROBABILITY_FLOOR))))


def r_operator(rho, data, spec=None):
    """The operator ``R(rho) = sum_j f_j / P_j Pi_j`` with ``sum_j f_j = 1``.

    ``spec`` is accepted for symmetry with :func:`projector`; ``R`` is
    dimensionless and does not depend on the momentum scale.
    """
    data = _as_dataset(data).canonical()
    rho = np.asarray(rho, dtype=complex)
    v = quadrature_overlaps(rho.shape[0] - 1, data.u, data.theta)
    return _r_from(v, data.frequencies, _probabilities(rho, v))


def log_likelihood(rho, data):
    """``sum_j f_j log P_j`` with normalized frequencies."""
    data = _as_dataset(data).canonical()
    rho = np.asarray(rho, dtype=complex)
    v = quadrature_overlaps(rho.shape[0] - 1, data.u, data.theta)
    return _loglik(data.frequencies, _probabilities(rho, v))


def _normalize(rho):
    rho = 0.5 * (rho + rho.conj().T)
    return rho / np.real(np.trace(rho))


def _sandwich(g, root):
    """``g rho g`` from ``root = rho**0.5``; PSD by construction."""
    m = g @ root
    return _normalize(m @ m.conj().T)


def mle_step(rho, data):
    """One undiluted ``R rho R`` update, renormalized."""
    rho = np.asarray(rho, dtype=complex)
    return _sandwich(r_operator(rho, data), sqrtm_psd(rho))


def reconstruct(data, cfg=None, spec=None, rho0=None):
    """Maximum-likelihood density matrix for a quadrature dataset.

    Parameters
    ----------
    data : QuadratureDataset
    cfg : MleConfig, optional
    spec : OscillatorSpec, optional
        When given, its ``n_max`` must match ``cfg.n_max``.
    rho0 : ndarray, optional
        Starting point; overrides ``cfg.initial``.

    Returns
    -------
    MleResult
        Non-convergence is reported through ``converged=False``.
    """
    cfg = cfg or MleConfig()
    if spec is not None and spec.n_max != cfg.n_max:
        raise ValueError(f"spec.n_max={spec.n_max} disagrees with cfg.n_max={cfg.n_max}")
    data = _as_dataset(data).canonical()
    dim = cfg.n_max + 1
    if rho0 is None:
        if cfg.initial == "ones":
            rho = np.ones((dim, dim), dtype=complex) / dim
        else:
            rho = np.eye(dim, dtype=complex) / dim
    else:
        rho = check_density_matrix(rho0).copy()
        if rho.shape[0] != dim:
            raise ValueError(f"rho0 has dimension {rho.shape[0]}, expected {dim}")

    v = quadrature_overlaps(cfg.n_max, data.u, data.theta)
    f = data.frequencies
    prob = _probabilities(rho, v)
    ll = _loglik(f, prob)
    trace = [ll]
    step = float("inf")
    converged = False
    diluted = 0
    eye = np.eye(dim)
    it = 0
    for it in range(1, cfg.max_iterations + 1):
        r = _r_from(v, f, prob)
        root = sqrtm_psd(rho)
        cand = _sandwich(r, root)
        cand_prob = _probabilities(cand, v)
        cand_ll = _loglik(f, cand_prob)
        if cfg.safeguard and cand_ll < ll:
            eps = 1.0
            accepted = False
            for _ in range(_MAX_DILUTIONS):
                g = eye + eps * r
                trial = _sandwich(g, root)
                trial_prob = _probabilities(trial, v)
                trial_ll = _loglik(f, trial_prob)
                if trial_ll >= ll:
                    cand, cand_prob, cand_ll = trial, trial_prob, trial_ll
                    accepted = True
                    break
                eps *= 0.5
            diluted += 1
            if not accepted:
                # no ascent direction left at floating-point resolution
                step = 0.0
                converged = True
                break
        step = trace_distance(cand, rho)
        rho, prob, ll = cand, cand_prob, cand_ll
        trace.append(ll)
        if step < cfg.tolerance:
            converged = True
            break
    return MleResult(
        rho=rho,
        iterations_used=it,
        final_step=step,
        log_likelihood_trace=np.asarray(trace),
        converged=converged,
        clamped_input=bool(data.clamped),
        diluted_steps=diluted,
    )
