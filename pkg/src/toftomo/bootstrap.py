"""Parametric bootstrap of reconstructed states and noise-bias sweeps."""

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from .constants import RL_FILTER_FLOOR, RL_ITERATIONS, SIMULATED_FRAME_COUNTS
from .exceptions import DegenerateDataError
from .fock import fidelity, negativity, wigner
from .imaging import (
    ImageFrame,
    ImagingGeometry,
    NoiseModel,
    PsfModel,
    convolve_psf,
    image_to_quadrature,
    quadrature_image,
    richardson_lucy,
    signal_counts,
)
from .mle import MleConfig, reconstruct
from .quadrature import QuadratureDataset
from .validation import check_density_matrix

__all__ = [
    "BootstrapConfig",
    "BootstrapReport",
    "NoiseBiasTable",
    "MAX_FAILURE_FRACTION",
    "synthesize_replica",
    "run_bootstrap",
    "noise_bias_sweep",
    "wigner_minimum_location",
]

MAX_FAILURE_FRACTION = 0.2


@dataclass(frozen=True)
class BootstrapConfig:
    """Ensemble settings for a parametric bootstrap.

    Parameters
    ----------
    n_replicas : int
        Number of synthetic datasets; at least 2.
    noise : NoiseModel
        Only the averaged-frame Gaussian level ``noise.sigma(n_averaged)`` is
        used; offsets and CIC events are assumed background-subtracted.
    rl_iterations, rl_filter_floor :
        Deconvolution settings applied to every replica.
    seed : int
    geometry : ImagingGeometry
    psf : PsfModel
    shape : tuple
        ``(ny, nx)`` of the rendered frames.
    total_counts : float
        Signal counts per noiseless frame.
    n_averaged : int
        Shots per averaged frame, entering the noise level.
    blur : bool
        Convolve the rendered frames with ``psf`` before adding noise.
    u_max : float
        Quadrature range kept after integration.
    projection_shots : int, optional
        If set, replace each frame by a multinomial sample of this many
        detected atoms before adding camera noise.
    noise_gain : float, optional
        Factor converting camera-count noise into frame units.  The default
        ``total_counts / signal_counts()`` keeps the measured signal-to-noise
        ratio when frames carry more counts than a real averaged image.
    """

    n_replicas: int = 50
    noise: NoiseModel = NoiseModel.preset("displaced_n1")
    rl_iterations: int = RL_ITERATIONS
    rl_filter_floor: float = RL_FILTER_FLOOR
    seed: int = 0
    geometry: ImagingGeometry = ImagingGeometry()
    psf: PsfModel = PsfModel()
    shape: tuple = (64, 256)
    total_counts: float = SIMULATED_FRAME_COUNTS
    n_averaged: int = 11320
    blur: bool = True
    u_max: float = 10.0
    projection_shots: int = None
    noise_gain: float = None

    def __post_init__(self):
        if int(self.n_replicas) != self.n_replicas or self.n_replicas < 2:
            raise ValueError(f"n_replicas must be an integer >= 2, got {self.n_replicas}")
        if self.rl_filter_floor < 0:
            raise ValueError("rl_filter_floor must be >= 0")
        if int(self.rl_iterations) != self.rl_iterations or self.rl_iterations < 1:
            raise ValueError("rl_iterations must be an integer >= 1")
        if self.total_counts <= 0:
            raise ValueError("total_counts must be positive")
        if self.n_averaged < 1:
            raise ValueError("n_averaged must be >= 1")
        if self.projection_shots is not None and self.projection_shots < 1:
            raise ValueError("projection_shots must be >= 1")
        if self.noise_gain is not None and not self.noise_gain > 0:
            raise ValueError("noise_gain must be positive")
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))

    @property
    def effective_noise_gain(self):
        return self.noise_gain if self.noise_gain is not None else self.total_counts / signal_counts()

    @property
    def noise_sigma(self):
        """Per-pixel Gaussian RMS added to each rendered frame."""
        return float(self.noise.sigma(self.n_averaged)[0] * self.effective_noise_gain)


@dataclass(frozen=True)
class BootstrapReport:
    """Statistics over the successful replicas of a bootstrap run."""

    replica_rhos: list = field(repr=False)
    negativities: np.ndarray = field(repr=False)
    negativity_mean: float
    negativity_std: float
    negativity_band: tuple
    element_means: np.ndarray = field(repr=False)
    element_stds: np.ndarray = field(repr=False)
    population_band: np.ndarray = field(repr=False)
    fidelities: np.ndarray = field(repr=False)
    converged: np.ndarray = field(repr=False)
    failures: list = field(default_factory=list)

    @property
    def n_successful(self):
        return len(self.replica_rhos)


def _rng(seed, *stream):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, stream)])))


def synthesize_replica(rho_mle, angles, cfg, replica_index, spec):
    """One synthetic dataset drawn around ``rho_mle``.

    For every angle the predicted quadrature distribution is rendered as a
    frame, optionally blurred, given Gaussian camera noise, deconvolved when
    blurred and integrated exactly like measured data.  Randomness is keyed by
    ``(cfg.seed, replica_index, angle index)``.
    """
    rho_mle = check_density_matrix(rho_mle)
    sigma = cfg.noise_sigma
    parts = []
    for k, theta in enumerate(np.asarray(angles, dtype=float)):
        frame = quadrature_image(rho_mle, theta, cfg.geometry, spec, cfg.shape,
                                 total_counts=cfg.total_counts, n_averaged=cfg.n_averaged)
        if cfg.blur:
            frame = convolve_psf(frame, cfg.psf)
        rng = _rng(cfg.seed, replica_index, k)
        counts = frame.counts
        if cfg.projection_shots:
            p = np.clip(counts, 0.0, None).ravel()
            hits = rng.multinomial(cfg.projection_shots, p / p.sum())
            counts = hits.reshape(counts.shape) * (cfg.total_counts / cfg.projection_shots)
        if sigma > 0:
            counts = counts + sigma * rng.standard_normal(counts.shape)
        frame = ImageFrame(counts, frame.geometry, frame.n_averaged)
        if cfg.blur:
            frame = richardson_lucy(frame, cfg.psf, cfg.rl_iterations, cfg.rl_filter_floor)
        parts.append(image_to_quadrature(frame, theta, spec, u_max=cfg.u_max))
    return QuadratureDataset.concatenate(parts)


def _wigner_axes(extent=4.0, step=0.05):
    n = int(round(2 * extent / step)) + 1
    return np.linspace(-extent, extent, n)


def run_bootstrap(rho_mle, angles, cfg, mle_cfg=None, spec=None, wigner_extent=4.0, wigner_step=0.05):
    """Reconstruct an ensemble of replicas and summarize it.

    Only degenerate-data errors count as replica failures; non-converged
    reconstructions are kept and flagged.  More than 20% failures abort.
    """
    if spec is None:
        raise ValueError("an OscillatorSpec is required")
    mle_cfg = mle_cfg or MleConfig(n_max=spec.n_max)
    rho_mle = check_density_matrix(rho_mle)
    axis = _wigner_axes(wigner_extent, wigner_step)
    rhos, negs, fids, conv, failures = [], [], [], [], []
    for idx in range(cfg.n_replicas):
        try:
            data = synthesize_replica(rho_mle, angles, cfg, idx, spec)
            res = reconstruct(data, mle_cfg, spec)
        except DegenerateDataError as exc:
            failures.append((idx, str(exc)))
            if len(failures) > MAX_FAILURE_FRACTION * cfg.n_replicas:
                raise DegenerateDataError(
                    f"bootstrap aborted: {len(failures)} of {idx + 1} replicas failed "
                    f"(limit {MAX_FAILURE_FRACTION:.0%} of {cfg.n_replicas}); last error: {exc}"
                ) from exc
            continue
        rhos.append(res.rho)
        negs.append(negativity(wigner(res.rho, axis, axis, check=False)).value)
        fids.append(fidelity(rho_mle, res.rho))
        conv.append(res.converged)
    stack = np.array(rhos)
    negs = np.asarray(negs)
    pops = np.real(np.diagonal(stack, axis1=1, axis2=2))
    return BootstrapReport(
        replica_rhos=rhos,
        negativities=negs,
        negativity_mean=float(negs.mean()),
        negativity_std=float(negs.std(ddof=1)) if negs.size > 1 else 0.0,
        negativity_band=tuple(float(q) for q in np.percentile(negs, [2.5, 97.5])),
        element_means=stack.mean(axis=0),
        element_stds=np.sqrt(stack.real.var(axis=0, ddof=1) + stack.imag.var(axis=0, ddof=1)),
        population_band=np.percentile(pops, [2.5, 97.5], axis=0),
        fidelities=np.asarray(fids),
        converged=np.asarray(conv, dtype=bool),
        failures=failures,
    )


def wigner_minimum_location(rho, extent=4.0, step=0.05):
    """Grid location ``(x_m, p_m)`` of the Wigner minimum of ``rho``."""
    axis = _wigner_axes(extent, step)
    neg = negativity(wigner(rho, axis, axis))
    return neg.x, neg.p


@dataclass(frozen=True)
class NoiseBiasTable:
    """Per-level reconstruction statistics of a noise sweep.

    ``populations`` has shape ``(levels, sims, n_show)`` and
    ``wigner_values`` shape ``(levels, sims)``.
    """

    noise_levels: np.ndarray
    populations: np.ndarray = field(repr=False)
    wigner_values: np.ndarray = field(repr=False)
    wigner_point: tuple
    base_populations: np.ndarray = field(repr=False)
    base_wigner: float

    @property
    def population_means(self):
        return self.populations.mean(axis=1)

    @property
    def population_bands(self):
        return np.percentile(self.populations, [2.5, 97.5], axis=1)

    @property
    def wigner_means(self):
        return self.wigner_values.mean(axis=1)

    @property
    def wigner_bands(self):
        return np.percentile(self.wigner_values, [2.5, 97.5], axis=1)

    def high_n_population(self, n_min=3):
        """Summed population of levels ``>= n_min`` per simulation."""
        return self.populations[:, :, n_min:].sum(axis=2)

    def trend(self, values):
        """One-sided Spearman test that ``values`` increase with noise level.

        All ``(level, value)`` pairs are pooled.  Returns ``(rho, p_value)``.
        """
        values = np.asarray(values)
        levels = np.repeat(self.noise_levels, values.shape[1])
        res = stats.spearmanr(levels, values.ravel(), alternative="greater")
        return float(res.statistic), float(res.pvalue)


def noise_bias_sweep(base_rho, noise_levels, cfg, spec, angles, mle_cfg=None, n_sims=50, n_show=None,
                     wigner_point=None):
    """Reconstruct ``n_sims`` noisy datasets of ``base_rho`` per noise level.

    Each level is a per-pixel Gaussian RMS in counts.  The Wigner function
    is tracked at ``wigner_point`` (default: the base state's minimum).
    Simulation ``s`` at every level reuses the noise stream ``s``, so the
    levels differ only by the noise amplitude.
    """
    levels = np.asarray(noise_levels, dtype=float)
    if levels.size < 2 or not np.any(levels == 0):
        raise ValueError("need at least two noise levels including 0")
    if np.any(levels < 0):
        raise ValueError("noise levels must be non-negative")
    base_rho = check_density_matrix(base_rho)
    mle_cfg = mle_cfg or MleConfig(n_max=spec.n_max)
    n_show = n_show or base_rho.shape[0]
    if wigner_point is None:
        wigner_point = wigner_minimum_location(base_rho)
    xm, pm = wigner_point
    base_w = float(wigner(base_rho, [xm], [pm]).values[0, 0])
    pops = np.zeros((levels.size, n_sims, n_show))
    wvals = np.zeros((levels.size, n_sims))
    for li, level in enumerate(levels):
        level_cfg = replace(cfg, noise=NoiseModel.gaussian(level), n_averaged=1,
                            n_replicas=max(2, n_sims), noise_gain=1.0)
        sims = 1 if level == 0 else n_sims
        for s in range(sims):
            data = synthesize_replica(base_rho, angles, level_cfg, s, spec)
            rho = reconstruct(data, mle_cfg, spec).rho
            pops[li, s] = np.real(np.diag(rho))[:n_show]
            wvals[li, s] = wigner(rho, [xm], [pm], check=False).values[0, 0]
        if sims == 1:
            # noiseless replicas are identical
            pops[li, 1:] = pops[li, 0]
            wvals[li, 1:] = wvals[li, 0]
    return NoiseBiasTable(levels, pops, wvals, (float(xm), float(pm)),
                          np.real(np.diag(base_rho))[:n_show], base_w)
