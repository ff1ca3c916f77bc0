"""scikit-learn style wrappers around the reconstruction, deconvolution and fit routines."""

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .constants import DEFAULT_N_MAX, MLE_MAX_ITERATIONS, MLE_TOLERANCE, RL_FILTER_FLOOR, RL_ITERATIONS
from .fitting import TimeSeries, damped_sinusoid, fit_damped_sinusoid
from .fock import fidelity, wigner
from .imaging import ImageFrame, ImagingGeometry, PsfModel, richardson_lucy
from .mle import MleConfig, PROBABILITY_FLOOR, predicted_probabilities, reconstruct
from .quadrature import QuadratureDataset
from .validation import check_quadrature_array

__all__ = ["QuadratureTomography", "RichardsonLucyDeconvolver", "DampedSinusoidRegressor"]


class QuadratureTomography(BaseEstimator):
    """Maximum-likelihood density matrix from quadrature samples.

    Parameters
    ----------
    n_max : int
        Highest Fock level of the reconstruction.
    tol : float
        Trace-distance stopping threshold between successive iterates.
    max_iter : int
    initial : {"identity", "ones"}
    safeguard : bool
        Use diluted steps when a full step would lower the likelihood.

    Attributes
    ----------
    rho_ : ndarray of shape (n_max + 1, n_max + 1)
    n_iter_ : int
    converged_ : bool
    log_likelihood_trace_ : ndarray
    result_ : MleResult

    Notes
    -----
    ``X`` has two columns ``(theta, u)``: the quadrature angle in radians and
    the quadrature value in units of ``p0``.  ``sample_weight`` holds counts or
    frequencies of each ``(theta, u)`` bin.
    """

    def __init__(self, n_max=DEFAULT_N_MAX, tol=MLE_TOLERANCE, max_iter=MLE_MAX_ITERATIONS,
                 initial="identity", safeguard=True):
        self.n_max = n_max
        self.tol = tol
        self.max_iter = max_iter
        self.initial = initial
        self.safeguard = safeguard

    def _config(self):
        return MleConfig(n_max=self.n_max, tolerance=self.tol, max_iterations=self.max_iter,
                         safeguard=self.safeguard, initial=self.initial)

    def fit(self, X, y=None, sample_weight=None):
        X, w = check_quadrature_array(X, sample_weight)
        res = reconstruct(QuadratureDataset(X[:, 0], X[:, 1], w), self._config())
        self.result_ = res
        self.rho_ = res.rho
        self.n_iter_ = res.iterations_used
        self.converged_ = res.converged
        self.log_likelihood_trace_ = res.log_likelihood_trace
        self.n_features_in_ = 2
        return self

    def score_samples(self, X):
        """Log of the predicted probability density at each ``(theta, u)``."""
        check_is_fitted(self, "rho_")
        X, _ = check_quadrature_array(X)
        p = predicted_probabilities(self.rho_, X[:, 0], X[:, 1])
        return np.log(np.maximum(p, PROBABILITY_FLOOR))

    def score(self, X, y=None, sample_weight=None):
        """Weighted mean log-likelihood per sample (higher is better)."""
        X, w = check_quadrature_array(X, sample_weight)
        return float(np.sum(w * self.score_samples(X)) / w.sum())

    def wigner(self, x_axis, p_axis=None):
        """Wigner function of the fitted state on a grid (units ``x0``, ``p0``)."""
        check_is_fitted(self, "rho_")
        return wigner(self.rho_, x_axis, x_axis if p_axis is None else p_axis, check=False)

    def fidelity(self, rho):
        check_is_fitted(self, "rho_")
        return fidelity(self.rho_, rho)


class RichardsonLucyDeconvolver(TransformerMixin, BaseEstimator):
    """Stateless Richardson-Lucy deconvolution of camera frames.

    ``transform`` accepts an :class:`ImageFrame` or a 2-D count array and
    returns an array of the same shape.
    """

    def __init__(self, psf=None, iterations=RL_ITERATIONS, filter_floor=RL_FILTER_FLOOR, geometry=None):
        self.psf = psf
        self.iterations = iterations
        self.filter_floor = filter_floor
        self.geometry = geometry

    def fit(self, X=None, y=None):
        if self.iterations < 0 or int(self.iterations) != self.iterations:
            raise ValueError(f"iterations must be a non-negative integer, got {self.iterations}")
        if self.filter_floor < 0:
            raise ValueError(f"filter_floor must be >= 0, got {self.filter_floor}")
        self.psf_ = self.psf if self.psf is not None else PsfModel()
        self.geometry_ = self.geometry if self.geometry is not None else ImagingGeometry()
        return self

    def transform(self, X):
        check_is_fitted(self, "psf_")
        frame = X if isinstance(X, ImageFrame) else ImageFrame(np.asarray(X, dtype=float), self.geometry_)
        return richardson_lucy(frame, self.psf_, int(self.iterations), float(self.filter_floor)).counts


class DampedSinusoidRegressor(RegressorMixin, BaseEstimator):
    """``A exp(-t / tau) cos(2 pi f t + phi) + c`` fitted by trust-region least squares.

    ``X`` is the time column (shape ``(n,)`` or ``(n, 1)``) in seconds.
    ``sample_weight`` is interpreted as inverse variance.

    Attributes
    ----------
    params_ : dict
        ``amplitude, frequency, phase, decay, offset``.
    errors_ : dict
    result_ : FitResult
    """

    def _times(self, X):
        t = np.asarray(X, dtype=float)
        if t.ndim == 2:
            if t.shape[1] != 1:
                raise ValueError(f"expected a single time column, got shape {t.shape}")
            t = t[:, 0]
        return t

    def fit(self, X, y, sample_weight=None):
        t = self._times(X)
        order = np.argsort(t)
        err = None
        if sample_weight is not None:
            sw = np.asarray(sample_weight, dtype=float)
            if np.any(sw <= 0):
                raise ValueError("sample_weight must be positive")
            err = 1.0 / np.sqrt(sw[order])
        series = TimeSeries(t[order], np.asarray(y, dtype=float)[order], err)
        self.result_ = fit_damped_sinusoid(series)
        self.params_ = self.result_.parameters
        self.errors_ = self.result_.errors
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "params_")
        return damped_sinusoid(self._times(X), **self.params_)
