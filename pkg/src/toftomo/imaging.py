"""Time-of-flight imaging: forward model to camera frames and the inverse steps.

Frames are ``(ny, nx)`` arrays; columns run along the tomography (horizontal)
axis and rows along the transverse (vertical) axis.  A camera pixel of pitch
``pixel_pitch`` samples ``pixel_pitch / magnification`` in the atom plane,
and after a flight time ``t_f`` an atom-plane distance ``x`` corresponds to
momentum ``p = m x / t_f``.
"""

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.signal import fftconvolve

from .constants import (
    AVERAGED_NOISE_AMPLITUDE,
    CAMERA_PIXEL,
    CIC_RATE,
    COUNT_OFFSET,
    EM_GAIN_COUNTS,
    EXPOSURE,
    EXPOSURE_MOTION_BLUR,
    FLIGHT_TIME,
    INITIAL_SIZE_BLUR,
    MAGNIFICATION,
    NOISE_SCALE_PRESETS,
    PHOTONS_PER_COUNT,
    PHOTONS_PER_SHOT,
    PSF_SIGMA_X,
    PSF_SIGMA_Y,
    READOUT_SIGMA,
    RL_FILTER_FLOOR,
    RL_ITERATIONS,
)
from .dynamics import quadrature_distribution
from .exceptions import AliasingError, DegenerateDataError
from .quadrature import QuadratureDataset

__all__ = [
    "ImagingGeometry",
    "PsfModel",
    "NoiseModel",
    "ImageFrame",
    "SHOT_MODE_LIMIT",
    "signal_counts",
    "ballistic_sigma",
    "pixel_momentum_axes",
    "momentum_to_image",
    "quadrature_image",
    "psf_kernel",
    "convolve_psf",
    "sample_camera_noise",
    "synthesize_background",
    "subtract_background",
    "richardson_lucy",
    "image_to_quadrature",
]

#: Averaged frames with at most this many shots are simulated shot by shot.
SHOT_MODE_LIMIT = 64
#: Below this value of ``omega * t_f`` the initial size is not negligible.
FAR_FIELD_MIN = 5.0


@dataclass(frozen=True)
class ImagingGeometry:
    """Magnification, flight time, camera pixel pitch and exposure (SI units)."""

    magnification: float = MAGNIFICATION
    flight_time: float = FLIGHT_TIME
    pixel_pitch: float = CAMERA_PIXEL
    exposure: float = EXPOSURE

    def __post_init__(self):
        for name in ("magnification", "flight_time", "pixel_pitch", "exposure"):
            val = getattr(self, name)
            if not (np.isfinite(val) and val > 0):
                raise ValueError(f"{name} must be positive, got {val}")

    @property
    def atom_pitch(self):
        """Atom-plane distance sampled by one camera pixel."""
        return self.pixel_pitch / self.magnification

    def momentum_step(self, mass):
        """Momentum spanned by one pixel (kg m/s)."""
        return mass * self.atom_pitch / self.flight_time


@dataclass(frozen=True)
class PsfModel:
    """Astigmatic Gaussian point-spread function with atom-plane RMS widths."""

    sigma_x: float = PSF_SIGMA_X
    sigma_y: float = PSF_SIGMA_Y

    def __post_init__(self):
        if not (self.sigma_x > 0 and self.sigma_y > 0):
            raise ValueError(f"PSF widths must be positive, got ({self.sigma_x}, {self.sigma_y})")

    @classmethod
    def delta(cls):
        """A PSF narrow enough to be represented by a single pixel."""
        return cls(1e-12, 1e-12)

    def broadened(self, *extra):
        """Add further Gaussian blur terms in quadrature to both axes.

        Without arguments the initial-size and exposure-motion terms are used.
        """
        extra = extra or (INITIAL_SIZE_BLUR, EXPOSURE_MOTION_BLUR)
        add = float(np.sum(np.square(extra)))
        return PsfModel(np.sqrt(self.sigma_x ** 2 + add), np.sqrt(self.sigma_y ** 2 + add))


@dataclass(frozen=True)
class NoiseModel:
    """EMCCD noise description.

    Parameters
    ----------
    cic_rate : float
        Probability of a clock-induced-charge event per pixel per shot.
    em_gain_mean : float
        Mean amplitude in counts of one amplified event.
    readout_sigma : float
        Gaussian readout noise in counts.
    offset : float
        Constant count offset.
    averaged_noise_amplitude : float
        ``A`` in ``sigma = A / sqrt(N)`` for frames averaged over ``N`` shots.
    noise_scale_factor : float
        Multiplier applied to the averaged-frame noise.
    column_amplitudes : array_like, optional
        Per-column ``A`` values overriding ``averaged_noise_amplitude``.
    """

    cic_rate: float = CIC_RATE
    em_gain_mean: float = EM_GAIN_COUNTS
    readout_sigma: float = READOUT_SIGMA
    offset: float = COUNT_OFFSET
    averaged_noise_amplitude: float = AVERAGED_NOISE_AMPLITUDE
    noise_scale_factor: float = 1.0
    column_amplitudes: tuple = None

    def __post_init__(self):
        for name in ("cic_rate", "em_gain_mean", "readout_sigma", "offset",
                     "averaged_noise_amplitude", "noise_scale_factor"):
            val = getattr(self, name)
            if not (np.isfinite(val) and val >= 0):
                raise ValueError(f"{name} must be >= 0, got {val}")
        if self.cic_rate > 1:
            raise ValueError(f"cic_rate is a probability, got {self.cic_rate}")
        if self.column_amplitudes is not None:
            cols = tuple(float(a) for a in np.ravel(self.column_amplitudes))
            if any(not (np.isfinite(a) and a >= 0) for a in cols):
                raise ValueError("column amplitudes must be finite and >= 0")
            object.__setattr__(self, "column_amplitudes", cols)

    @classmethod
    def preset(cls, name, **kwargs):
        """Noise model with one of the measured per-dataset scale factors."""
        if name not in NOISE_SCALE_PRESETS:
            raise KeyError(f"unknown preset {name!r}; choose from {sorted(NOISE_SCALE_PRESETS)}")
        return cls(noise_scale_factor=NOISE_SCALE_PRESETS[name], **kwargs)

    @classmethod
    def zero(cls):
        return cls(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)

    @classmethod
    def gaussian(cls, sigma):
        """Pure zero-mean Gaussian noise of per-pixel RMS ``sigma`` at ``N = 1``."""
        return cls(0.0, 0.0, 0.0, 0.0, float(sigma), 1.0)

    @property
    def mean_background(self):
        """Mean counts per pixel with no signal."""
        return self.offset + self.cic_rate * self.em_gain_mean

    def amplitudes(self, nx):
        if self.column_amplitudes is None:
            return np.full(nx, self.averaged_noise_amplitude)
        if len(self.column_amplitudes) != nx:
            raise ValueError(f"{len(self.column_amplitudes)} column amplitudes for {nx} columns")
        return np.asarray(self.column_amplitudes)

    def sigma(self, n_averaged, nx=1):
        """Per-column RMS of a frame averaged over ``n_averaged`` shots (Gaussian limit)."""
        return self.noise_scale_factor * self.amplitudes(nx) / np.sqrt(n_averaged)


@dataclass(frozen=True)
class ImageFrame:
    """A camera frame averaged over ``n_averaged`` shots."""

    counts: np.ndarray = field(repr=False)
    geometry: ImagingGeometry = ImagingGeometry()
    n_averaged: int = 1

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=float)
        if counts.ndim != 2:
            raise ValueError(f"frame must be 2-D, got shape {counts.shape}")
        if not np.all(np.isfinite(counts)):
            raise ValueError("frame contains non-finite values")
        if int(self.n_averaged) != self.n_averaged or self.n_averaged < 1:
            raise ValueError(f"n_averaged must be an integer >= 1, got {self.n_averaged}")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "n_averaged", int(self.n_averaged))

    @property
    def shape(self):
        return self.counts.shape

    def with_counts(self, counts):
        return replace(self, counts=counts)


def signal_counts(photons_per_shot=PHOTONS_PER_SHOT, photons_per_count=PHOTONS_PER_COUNT):
    """Total counts of one averaged frame for a given detected photon number."""
    return photons_per_shot / photons_per_count


def ballistic_sigma(e_ke, t, sigma0, mass):
    """RMS size ``sqrt(2 E t^2 / m + sigma0^2)`` after free flight.

    Parameters
    ----------
    e_ke : float
        Kinetic energy along the axis (J).
    t : float
        Flight time (s).
    sigma0 : float
        Initial RMS size (m).
    mass : float
        Particle mass (kg).
    """
    if e_ke < 0 or sigma0 < 0:
        raise ValueError("energy and initial size must be non-negative")
    return float(np.sqrt(2.0 * e_ke * np.square(t) / mass + sigma0 ** 2))


def pixel_momentum_axes(shape, geometry, mass):
    """Momentum at each column and row center, zero at the geometric center."""
    ny, nx = shape
    step = geometry.momentum_step(mass)
    px = (np.arange(nx) - (nx - 1) / 2.0) * step
    py = (np.arange(ny) - (ny - 1) / 2.0) * step
    return px, py


def _check_sampling(geometry, spec, spec_y):
    step = geometry.momentum_step(spec.mass)
    for s, axis in ((spec, "horizontal"), (spec_y, "vertical")):
        if step > 0.5 * s.p0:
            raise AliasingError(
                f"{axis} momentum step {step / s.p0:.3f} p0 exceeds 0.5 p0; "
                "increase magnification or flight time"
            )
    if spec.omega * geometry.flight_time < FAR_FIELD_MIN:
        warnings.warn(
            f"omega * t_f = {spec.omega * geometry.flight_time:.2f}; the initial cloud size is not "
            "negligible against the ballistic expansion",
            RuntimeWarning,
            stacklevel=3,
        )


def momentum_to_image(density, geometry, spec, shape, spec_y=None, total_counts=None, n_averaged=1):
    """Render a 2-D momentum density onto the camera grid.

    Parameters
    ----------
    density : callable or ndarray
        ``density(p_x, p_y)`` in (kg m/s)^-2, or an array already sampled at
        the pixel momenta.
    geometry : ImagingGeometry
    spec : OscillatorSpec
        Horizontal oscillator; sets the mass and the sampling check.
    shape : tuple
        ``(ny, nx)``.
    spec_y : OscillatorSpec, optional
        Vertical oscillator for the sampling check; defaults to ``spec``.
    total_counts : float, optional
        Rescale the frame to this total.  Without it each pixel holds the
        probability of landing there, so the frame sums to the density's
        integral over the grid.

    Returns
    -------
    ImageFrame
    """
    spec_y = spec_y or spec
    _check_sampling(geometry, spec, spec_y)
    px, py = pixel_momentum_axes(shape, geometry, spec.mass)
    if callable(density):
        PX, PY = np.meshgrid(px, py)
        values = np.asarray(density(PX, PY), dtype=float)
    else:
        values = np.asarray(density, dtype=float)
        if values.shape != tuple(shape):
            raise ValueError(f"density shape {values.shape} != {tuple(shape)}")
    step = geometry.momentum_step(spec.mass)
    img = values * step ** 2
    if total_counts is not None:
        tot = img.sum()
        if tot <= 0:
            raise DegenerateDataError("density has no weight on the camera grid")
        img = img * (total_counts / tot)
    return ImageFrame(img, geometry, n_averaged)


def quadrature_image(rho, theta, geometry, spec, shape, spec_y=None, total_counts=None, n_averaged=1):
    """Frame of a state's quadrature distribution at ``theta``.

    The horizontal profile is the quadrature distribution of ``rho``; the
    vertical profile is the ground state of ``spec_y``.
    """
    spec_y = spec_y or spec
    _check_sampling(geometry, spec, spec_y)
    px, py = pixel_momentum_axes(shape, geometry, spec.mass)
    prof_x = quadrature_distribution(rho, theta, px / spec.p0, spec)
    sy = py / spec_y.p0
    prof_y = np.exp(-0.5 * sy ** 2) / (np.sqrt(2.0 * np.pi) * spec_y.p0)
    return momentum_to_image(np.outer(prof_y, prof_x), geometry, spec, shape, spec_y, total_counts, n_averaged)


def psf_kernel(psf, geometry):
    """Normalized, sampled PSF kernel on the atom-plane pixel grid.

    Widths below a tenth of a pixel collapse to a single-pixel kernel.
    """
    sig = np.array([psf.sigma_y, psf.sigma_x]) / geometry.atom_pitch
    axes = []
    for s in sig:
        if s < 0.1:
            axes.append(np.ones(1))
            continue
        half = int(np.ceil(5.0 * s))
        k = np.arange(-half, half + 1)
        g = np.exp(-0.5 * (k / s) ** 2)
        axes.append(g / g.sum())
    return np.outer(axes[0], axes[1])


def _convolve(img, kernel):
    if kernel.size == 1:
        return img * kernel.flat[0]
    return fftconvolve(img, kernel, mode="same")


def convolve_psf(frame, psf):
    """Blur a frame with the PSF (zero boundary, output on the same grid)."""
    out = _convolve(frame.counts, psf_kernel(psf, frame.geometry))
    return frame.with_counts(out)


def _rng(seed, *stream):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, stream)])))


def _single_shots(shape, noise, rng, n):
    total = np.zeros(shape)
    for _ in range(n):
        shot = rng.normal(noise.offset, noise.readout_sigma, shape) if noise.readout_sigma else np.full(shape, noise.offset)
        if noise.cic_rate and noise.em_gain_mean:
            hit = rng.random(shape) < noise.cic_rate
            shot = shot + hit * rng.exponential(noise.em_gain_mean, shape)
        total += shot
    return total / n


def sample_camera_noise(frame, noise, seed, stream=0, mode="auto", gain=1.0):
    """Add camera noise to a frame.

    Parameters
    ----------
    frame : ImageFrame
    noise : NoiseModel
    seed : int
    stream : int
        Extra key (e.g. a replica or angle index) for independent draws.
    mode : {"auto", "shots", "gaussian"}
        ``"shots"`` simulates every shot (CIC events with exponential
        amplitudes, readout noise, offset) and averages them.
        ``"gaussian"`` adds the mean background plus Gaussian noise of RMS
        ``scale * A / sqrt(N)`` per column.  ``"auto"`` simulates shots up to
        ``SHOT_MODE_LIMIT`` averaged shots.
    gain : float
        Frame units per camera count; the sampled noise is multiplied by it.

    Returns
    -------
    ImageFrame
    """
    if mode not in ("auto", "shots", "gaussian"):
        raise ValueError(f"unknown noise mode {mode!r}")
    if mode == "auto":
        mode = "shots" if frame.n_averaged <= SHOT_MODE_LIMIT else "gaussian"
    rng = _rng(seed, stream)
    shape = frame.shape
    if mode == "shots":
        add = _single_shots(shape, noise, rng, frame.n_averaged)
    else:
        sig = noise.sigma(frame.n_averaged, shape[1])
        add = noise.mean_background + rng.standard_normal(shape) * sig[None, :]
    return frame.with_counts(frame.counts + gain * add)


def synthesize_background(shape, geometry, noise, n_averaged, seed, stream=0, mode="auto", gain=1.0):
    """A signal-free frame with camera noise."""
    empty = ImageFrame(np.zeros(shape), geometry, n_averaged)
    return sample_camera_noise(empty, noise, seed, stream, mode, gain)


def subtract_background(signal, background):
    """Element-wise difference; negative residuals are kept."""
    if signal.shape != background.shape:
        raise ValueError(f"frame shapes differ: {signal.shape} vs {background.shape}")
    if signal.geometry != background.geometry:
        raise ValueError("frames were taken with different imaging geometries")
    return signal.with_counts(signal.counts - background.counts)


def richardson_lucy(frame, psf, iterations=RL_ITERATIONS, filter_floor=RL_FILTER_FLOOR):
    """Richardson-Lucy deconvolution starting from a frame of ones.

    Negative input pixels are clamped to zero.  Wherever the re-blurred
    estimate falls below ``filter_floor`` counts the ratio image is set to
    zero.  Only FFT round-off below zero is removed from the iterates.
    """
    if int(iterations) != iterations or iterations < 1:
        raise ValueError(f"iterations must be an integer >= 1, got {iterations}")
    if filter_floor < 0:
        raise ValueError("filter floor must be non-negative")
    image = np.clip(frame.counts, 0.0, None)
    if not np.any(image > 0):
        raise DegenerateDataError("image has no positive pixels")
    kernel = psf_kernel(psf, frame.geometry)
    mirror = kernel[::-1, ::-1]
    est = np.ones_like(image)
    for _ in range(int(iterations)):
        blurred = _convolve(est, kernel)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = image / blurred
        bad = ~(blurred >= filter_floor) | ~(blurred > 0)
        ratio = np.where(bad, 0.0, ratio)
        est = np.clip(est * _convolve(ratio, mirror), 0.0, None)
    return frame.with_counts(est)


def image_to_quadrature(frame, theta, spec, recenter=False, u_max=None):
    """Integrate the vertical axis and convert columns to quadrature values.

    Parameters
    ----------
    frame : ImageFrame
    theta : float
        Phase angle assigned to the frame.
    spec : OscillatorSpec
    recenter : bool
        Shift the ``u`` axis so the profile centroid sits at zero instead of
        using the geometric center of the frame.
    u_max : float, optional
        Keep only bins with ``|u| <= u_max``.

    Returns
    -------
    QuadratureDataset
        One angle; weights are clamped at zero and normalized to sum 1.
    """
    px, _ = pixel_momentum_axes(frame.shape, frame.geometry, spec.mass)
    u = px / spec.p0
    prof = frame.counts.sum(axis=0)
    clamped = bool(np.any(prof < 0))
    prof = np.clip(prof, 0.0, None)
    if recenter and prof.sum() > 0:
        u = u - np.sum(u * prof) / prof.sum()
    if u_max is not None:
        keep = np.abs(u) <= u_max
        u, prof = u[keep], prof[keep]
    total = prof.sum()
    if not total > 0:
        raise DegenerateDataError("integrated profile has no positive weight")
    bw = float(u[1] - u[0]) if u.size > 1 else float("nan")
    return QuadratureDataset(np.full(u.size, float(theta)), u, prof / total, bw, clamped)
