"""Least-squares fits for oscillation traces, expansion, calibration and populations."""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares, nnls

from .constants import GRAVITY, RB87_MASS
from .dynamics import TrapModel, momentum_expectation_trace, prepare_state
from .fock import fock_momentum_density_2d, position_operator
from .imaging import convolve_psf, momentum_to_image
from .validation import check_time_series

__all__ = [
    "FitResult",
    "TimeSeries",
    "fit_damped_sinusoid",
    "damped_sinusoid",
    "fit_ballistic",
    "fit_gravity_drop",
    "fit_anharmonic_model",
    "anharmonic_trace",
    "significance_ratio",
    "fit_fock_mixture",
    "center_of_mass_trace",
]


@dataclass(frozen=True)
class TimeSeries:
    """Samples ``y(t)`` with optional one-sigma errors."""

    t: np.ndarray
    y: np.ndarray
    y_err: np.ndarray = None

    def __post_init__(self):
        t, y, err = check_time_series(self.t, self.y, self.y_err)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "y_err", err)

    def __len__(self):
        return self.t.size

    def without(self, index):
        keep = np.ones(self.t.size, dtype=bool)
        keep[index] = False
        err = None if self.y_err is None else self.y_err[keep]
        return TimeSeries(self.t[keep], self.y[keep], err)


@dataclass(frozen=True)
class FitResult:
    """Named best-fit parameters with standard errors and covariance."""

    names: tuple
    values: np.ndarray
    standard_errors: np.ndarray
    covariance: np.ndarray = field(repr=False)
    residual_norm: float
    converged: bool
    message: str = ""
    derived: dict = field(default_factory=dict)

    @property
    def parameters(self):
        return dict(zip(self.names, (float(v) for v in self.values)))

    @property
    def errors(self):
        return dict(zip(self.names, (float(v) for v in self.standard_errors)))

    def __getitem__(self, name):
        if name in self.names:
            return float(self.values[self.names.index(name)])
        return self.derived[name]


def _covariance(jac, resid, n_params, absolute):
    """Parameter covariance from a Jacobian in fit units."""
    jtj = jac.T @ jac
    try:
        cov = np.linalg.pinv(jtj)
    except np.linalg.LinAlgError:
        cov = np.full((n_params, n_params), np.inf)
    if not absolute:
        dof = max(1, resid.size - n_params)
        cov = cov * (resid @ resid) / dof
    cov = 0.5 * (cov + cov.T)
    return cov


def _package(names, x, scale, sol, absolute, converged=None, message=None, derived=None, offset=None):
    offset = np.zeros_like(scale) if offset is None else offset
    values = offset + x * scale
    cov = _covariance(sol.jac, sol.fun, len(names), absolute) * np.outer(scale, scale)
    errs = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    return FitResult(
        names=tuple(names),
        values=values,
        standard_errors=errs,
        covariance=cov,
        residual_norm=float(np.linalg.norm(sol.fun)),
        converged=bool(sol.success) if converged is None else converged,
        message=sol.message if message is None else message,
        derived=derived or {},
    )


def _weights(series, yscale):
    """Residual weights for data divided by ``yscale``."""
    return np.ones_like(series.y) if series.y_err is None else yscale / series.y_err


# ---------------------------------------------------------------------------
# Damped sinusoid


def damped_sinusoid(t, amplitude, frequency, phase, decay, offset):
    """``A exp(-t / tau) cos(2 pi f t + phi) + c``."""
    t = np.asarray(t, dtype=float)
    return amplitude * np.exp(-t / decay) * np.cos(2.0 * np.pi * frequency * t + phase) + offset


def _fft_seed(t, y):
    """Dominant frequency and its phase from a zero-padded periodogram."""
    n = t.size
    span = t[-1] - t[0]
    dt = span / (n - 1)
    tu = np.linspace(t[0], t[-1], n)
    yu = np.interp(tu, t, y - y.mean())
    pad = 16 * int(2 ** np.ceil(np.log2(n)))
    spec = np.fft.rfft(yu * np.hanning(n), pad)
    freqs = np.fft.rfftfreq(pad, dt)
    k = 1 + int(np.argmax(np.abs(spec[1:])))
    f = freqs[k]
    phase = float(np.angle(np.sum(yu * np.exp(-2j * np.pi * f * (tu - t[0])))))
    # phase above is referenced to t[0]; move it to t = 0
    return f, phase - 2.0 * np.pi * f * t[0]


def fit_damped_sinusoid(series):
    """Fit a damped sinusoid with an FFT-seeded frequency.

    Returns
    -------
    FitResult
        Parameters ``amplitude, frequency (Hz), phase (rad), decay (s), offset``.
    """
    if len(series) < 6:
        raise ValueError("need at least 6 points")
    t, y = series.t, series.y
    span = t[-1] - t[0]
    scale_y = float(np.max(np.abs(y - y.mean())))
    names = ("amplitude", "frequency", "phase", "decay", "offset")
    if not scale_y > 1e-12 * float(np.max(np.abs(y))):
        cov = np.full((5, 5), np.inf)
        return FitResult(names, np.array([0.0, np.nan, np.nan, np.nan, float(y.mean())]),
                         np.full(5, np.inf), cov, 0.0, False,
                         "series has no oscillating component; frequency is unidentifiable")
    f0, ph0 = _fft_seed(t, y)
    if f0 * span < 1.0:
        raise ValueError("series must span at least one period")
    w = _weights(series, scale_y)
    # fit units: t in span, y in scale_y, frequency in f0, decay in span
    ts = t / span
    ys = y / scale_y
    ws = w

    def resid(p):
        a, fr, ph, dec, c = p
        return ws * (damped_sinusoid(ts, a, fr * f0 * span, ph, dec, c) - ys)

    amp0 = float(np.sqrt(2.0) * np.std(ys))
    x0 = np.array([amp0, 1.0, ph0, 1.0, float(ys.mean())])
    lower = [-np.inf, 0.0, -np.inf, 1e-6, -np.inf]
    sol = least_squares(resid, x0, bounds=(lower, np.inf), method="trf", x_scale="jac",
                        xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=20000)
    x = sol.x.copy()
    if x[0] < 0:
        x[0] = -x[0]
        x[2] += np.pi
    x[2] = float(np.mod(x[2] + np.pi, 2.0 * np.pi) - np.pi)
    scale = np.array([scale_y, f0, 1.0, span, scale_y])
    converged = bool(sol.success) and x[1] > 0
    message = sol.message
    if abs(x[0]) < 1e-8:
        converged = False
        message = "fitted amplitude vanishes; frequency is unidentifiable"
    return _package(names, x, scale, sol, series.y_err is not None, converged, message)


def center_of_mass_trace(data, omega, extractor="mean"):
    """Per-angle quadrature center as a time series ``t_e = theta / omega``.

    Parameters
    ----------
    data : QuadratureDataset
    omega : float
        Angular trap frequency used to convert angles to evolution times.
    extractor : {"mean", "gaussian"}
        ``"mean"`` takes the weighted mean of ``u``; ``"gaussian"`` fits a
        Gaussian profile per angle and reports its center, which is less
        sensitive to noise in the wings.

    Returns
    -------
    TimeSeries
        Centers in units of ``p0``.
    """
    if extractor not in ("mean", "gaussian"):
        raise ValueError(f"extractor must be 'mean' or 'gaussian', got {extractor!r}")
    angles = data.angles
    centers = []
    for theta in angles:
        u, w = data.slice(theta)
        mean = float(np.sum(u * w) / np.sum(w))
        if extractor == "mean":
            centers.append(mean)
            continue
        sd = float(np.sqrt(max(np.sum(w * (u - mean) ** 2) / np.sum(w), 1e-12)))
        top = float(np.max(w))

        def resid(p):
            a, c, s = p
            return a * np.exp(-0.5 * ((u - c) / s) ** 2) - w / top

        sol = least_squares(resid, [1.0, mean, sd], bounds=([0.0, -np.inf, 1e-6], np.inf), method="trf")
        centers.append(float(sol.x[1]))
    return TimeSeries(angles / omega, np.array(centers))


# ---------------------------------------------------------------------------
# Ballistic expansion


def fit_ballistic(series, mass=RB87_MASS):
    """Fit ``sigma(t) = sqrt(2 E t^2 / m + sigma0^2)``.

    Returns
    -------
    FitResult
        Parameters ``e_ke`` (J) and ``sigma0`` (m), both non-negative.
    """
    if len(series) < 3:
        raise ValueError("need at least 3 points")
    t, y = series.t, series.y
    # seed: straight line in (t^2, sigma^2)
    slope, icpt = np.polyfit(t ** 2, y ** 2, 1)
    v0 = np.sqrt(max(slope, 0.0))
    s0 = np.sqrt(max(icpt, 0.0))
    tscale = float(np.max(np.abs(t))) or 1.0
    yscale = float(np.max(np.abs(y))) or 1.0
    vscale = yscale / tscale
    w = _weights(series, yscale)

    def resid(p):
        v, s = p
        return w * (np.sqrt((v * t / tscale) ** 2 + s ** 2) - y / yscale)

    x0 = np.array([max(v0 / vscale, 1e-3), max(s0 / yscale, 1e-3)])
    sol = least_squares(resid, x0, bounds=([0.0, 0.0], np.inf), method="trf",
                        xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=10000)
    v, s = sol.x * np.array([vscale, yscale])
    # report E = m v^2 / 2 with a delta-method error
    base = _package(("v", "sigma0"), sol.x, np.array([vscale, yscale]), sol, series.y_err is not None)
    jac = np.diag([mass * v, 1.0])
    cov = jac @ base.covariance @ jac.T
    return FitResult(
        names=("e_ke", "sigma0"),
        values=np.array([0.5 * mass * v ** 2, s]),
        standard_errors=np.sqrt(np.clip(np.diag(cov), 0.0, None)),
        covariance=cov,
        residual_norm=base.residual_norm,
        converged=base.converged,
        message=base.message,
        derived={"velocity_rms": float(v)},
    )


# ---------------------------------------------------------------------------
# Gravity drop


def fit_gravity_drop(series, g=GRAVITY):
    """Fit ``y(t) = y0 + a t^2 / 2`` to image-plane positions.

    The magnification ``a / g`` and its error are reported in ``derived``.
    """
    if len(series) < 3:
        raise ValueError("need at least 3 points")
    t, y = series.t, series.y
    slope, icpt = np.polyfit(0.5 * t ** 2, y, 1)
    tscale = float(np.max(np.abs(t))) or 1.0
    yscale = float(np.max(np.abs(y))) or 1.0
    ascale = yscale / tscale ** 2
    w = _weights(series, yscale)

    def resid(p):
        y0, a = p
        return w * (y0 + 0.5 * a * (t / tscale) ** 2 - y / yscale)

    sol = least_squares(resid, np.array([icpt / yscale, slope / ascale]), method="lm",
                        xtol=1e-15, ftol=1e-15, gtol=1e-15)
    res = _package(("y0", "acceleration"), sol.x, np.array([yscale, ascale]), sol, series.y_err is not None)
    res.derived["magnification"] = float(res.values[1] / g)
    res.derived["magnification_error"] = float(res.standard_errors[1] / g)
    return res


# ---------------------------------------------------------------------------
# Anharmonic center-of-mass model


def anharmonic_trace(times, lam, omega, x_i, spec):
    """Mean momentum of a displaced ground state under the anharmonic trap."""
    model = TrapModel(spec.with_omega(omega), lam)
    rho0 = prepare_state((1.0, 0.0, 0.0), model, x_i=x_i)
    return momentum_expectation_trace(rho0, model, times)


def significance_ratio(rho, lam):
    """``4 |lambda| <(x/x0)^4> / <(x/x0)^2>`` in the state ``rho``."""
    x = position_operator(rho.shape[0] + 4)
    x2 = (x @ x)[: rho.shape[0], : rho.shape[0]]
    x4 = (x @ x @ x @ x)[: rho.shape[0], : rho.shape[0]]
    m2 = float(np.real(np.trace(rho @ x2)))
    m4 = float(np.real(np.trace(rho @ x4)))
    return 4.0 * abs(lam) * m4 / m2


def fit_anharmonic_model(series, spec, lam0=0.0, fix_lambda=None, lam_bound=0.05):
    """Fit ``(lambda, omega, x_i)`` to a mean-momentum trace in kg m/s.

    Every evaluation prepares the displaced ground state and propagates it
    through the truncated-basis dynamics.  Frequency is seeded from the
    trace's FFT peak and ``x_i`` from its amplitude.

    Parameters
    ----------
    series : TimeSeries
    spec : OscillatorSpec
        Supplies mass and basis size; its ``omega`` is only a fallback seed.
    fix_lambda : float, optional
        Hold ``lambda`` at this value and fit ``omega, x_i`` only.

    Returns
    -------
    FitResult
        ``derived`` carries ``significance_ratio`` at the fitted point.
    """
    if len(series) < 20:
        raise ValueError("need at least 20 points")
    t, y = series.t, series.y
    f_seed, _ = _fft_seed(t, y)
    omega0 = 2.0 * np.pi * f_seed if f_seed > 0 else spec.omega
    if omega0 * (t[-1] - t[0]) < 2.0 * np.pi * 3:
        raise ValueError("series must span at least three periods")
    amp = float(np.max(np.abs(y)))
    x_seed = amp / (spec.mass * omega0)
    yscale = amp or 1.0
    w = _weights(series, yscale)
    lam_scale = 0.01

    def unpack(p):
        if fix_lambda is None:
            lam, om, xi = p
        else:
            om, xi = p
            lam = fix_lambda / lam_scale
        return lam * lam_scale, om * omega0, xi * x_seed

    def resid(p):
        lam, om, xi = unpack(p)
        return w * (anharmonic_trace(t, lam, om, xi, spec) - y) / yscale

    if fix_lambda is None:
        x0 = np.array([lam0 / lam_scale, 1.0, 1.0])
        bounds = ([-lam_bound / lam_scale, 0.5, 0.0], [lam_bound / lam_scale, 2.0, np.inf])
        names = ("lambda", "omega", "x_i")
        scale = np.array([lam_scale, omega0, x_seed])
    else:
        x0 = np.array([1.0, 1.0])
        bounds = ([0.5, 0.0], [2.0, np.inf])
        names = ("omega", "x_i")
        scale = np.array([omega0, x_seed])
    # finite-difference step well above the eigensystem cache quantization
    sol = least_squares(resid, x0, bounds=bounds, method="trf", diff_step=1e-4,
                        xtol=1e-12, ftol=1e-12, gtol=1e-12, max_nfev=2000)
    res = _package(names, sol.x, scale, sol, series.y_err is not None)
    lam, om, xi = unpack(sol.x)
    model = TrapModel(spec.with_omega(om), lam)
    rho0 = prepare_state((1.0, 0.0, 0.0), model, x_i=xi)
    res.derived["significance_ratio"] = significance_ratio(rho0, lam)
    res.derived["frequency_hz"] = float(om / (2.0 * np.pi))
    return res


# ---------------------------------------------------------------------------
# Fock-mixture populations


def _mixture_templates(shape, geometry, psf, spec, spec_y):
    temps = []
    for n in range(3):
        def dens(px, py, n=n):
            return fock_momentum_density_2d(n, px, py, spec.p0, spec_y.p0)

        frame = momentum_to_image(dens, geometry, spec, shape, spec_y)
        if psf is not None:
            frame = convolve_psf(frame, psf)
        temps.append(frame.counts.ravel())
    return np.array(temps).T


def fit_fock_mixture(image, psf, spec, geometry=None, spec_y=None):
    """Fit populations of ``|0>, |1>, |2>`` to a background-subtracted image.

    Template widths are fixed by the trap frequency and flight time.  Each
    template is fitted with a free non-negative amplitude, and populations are
    the amplitudes divided by their sum, so they lie on the simplex.
    ``derived["unmodeled"]`` is the fraction of image counts the fitted
    templates, summed over the frame, do not account for; it is
    signed because background-subtracted noise can push it below zero.
    """
    geometry = geometry or image.geometry
    spec_y = spec_y or spec
    a = _mixture_templates(image.shape, geometry, psf, spec, spec_y)
    b = image.counts.ravel()
    total = float(b.sum())
    if not total > 0:
        raise ValueError("image has no positive total")
    amp, rnorm = nnls(a, b)
    fitted = float(amp.sum())
    if not fitted > 0:
        raise ValueError("no template has positive weight in the image")
    p = amp / fitted
    dof = max(1, b.size - 3)
    amp_cov = np.linalg.pinv(a.T @ a) * rnorm**2 / dof
    # delta method for p = amp / sum(amp)
    jac = (np.eye(3) - p[:, None]) / fitted
    cov = jac @ amp_cov @ jac.T
    cov = 0.5 * (cov + cov.T)
    return FitResult(
        names=("P0", "P1", "P2"),
        values=p,
        standard_errors=np.sqrt(np.clip(np.diag(cov), 0.0, None)),
        covariance=cov,
        residual_norm=float(rnorm),
        converged=True,
        message="nnls",
        derived={"unmodeled": 1.0 - float(amp @ a.sum(axis=0)) / total, "amplitudes": amp},
    )
