"""End-to-end tomography scenarios and the systematic studies built on them."""

from dataclasses import dataclass, field, replace

import numpy as np

from .bootstrap import BootstrapConfig, noise_bias_sweep, run_bootstrap
from .constants import (
    DEFAULT_N_MAX,
    FIT_DISPLACEMENT,
    FIT_LAMBDA,
    FIT_TRAP_FREQ_HZ,
    RB87_MASS,
    RL_FILTER_FLOOR,
    RL_ITERATIONS,
    SIMULATED_FRAME_COUNTS,
    TRAP_FREQ_N0_HZ,
    TRAP_FREQ_N1_HZ,
)
from .dynamics import MixtureSpec, TrapModel, evolve, prepare_state, quadrature_distribution, rescale_trap
from .exceptions import TomographyError
from .fock import OscillatorSpec, fidelity, negativity, wigner
from .imaging import (
    ImagingGeometry,
    NoiseModel,
    PsfModel,
    convolve_psf,
    image_to_quadrature,
    quadrature_image,
    richardson_lucy,
    sample_camera_noise,
    signal_counts,
    subtract_background,
    synthesize_background,
)
from .mle import MleConfig, reconstruct
from .quadrature import QuadratureDataset, uniform_angles

__all__ = [
    "simulate_dataset",
    "render_frame",
    "ScenarioConfig",
    "ScenarioResult",
    "RobustnessMap",
    "NOISE_BIAS_STUDIES",
    "DEFAULT_NOISE_LEVELS",
    "ROBUSTNESS_DEPTH_RATIO",
    "ROBUSTNESS_DISPLACEMENT_RATIO",
    "simplex_grid",
    "wigner_axes",
    "run_tomography_scenario",
    "robustness_trap",
    "robustness_point",
    "run_anharmonic_robustness",
    "noise_bias_base_state",
    "run_noise_bias_study",
]

#: Depth ratio between the tomography trap and the trap used for the
#: center-of-mass fit (3.6 uK / 2.4 uK).
ROBUSTNESS_DEPTH_RATIO = 1.5
#: Displacement ratio between the two experiments (140 nm / 180 nm).
ROBUSTNESS_DISPLACEMENT_RATIO = 140.0 / 180.0

DEFAULT_NOISE_LEVELS = (0.0, 10.0, 20.0, 30.0, 40.0, 50.0)


def wigner_axes(extent=5.0, step=0.05):
    n = int(round(2 * extent / step)) + 1
    return np.linspace(-extent, extent, n)


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything needed to simulate and reconstruct one tomography dataset.

    ``noise=None`` gives noiseless frames; ``blur=False`` skips both the PSF
    blur and the deconvolution that would undo it.  The
    evolution time for angle ``theta`` is ``theta / trap.spec.omega``.
    """

    trap: TrapModel
    mixture: MixtureSpec = MixtureSpec()
    displacement: float = 0.0
    depth_jump_ratio: float = 1.0
    angles: np.ndarray = field(default_factory=lambda: uniform_angles(64))
    imaging: ImagingGeometry = ImagingGeometry()
    psf: PsfModel = PsfModel()
    noise: NoiseModel = None
    mle: MleConfig = MleConfig()
    seed: int = 0
    shape: tuple = (64, 256)
    total_counts: float = SIMULATED_FRAME_COUNTS
    n_averaged: int = 11320
    blur: bool = True
    rl_iterations: int = RL_ITERATIONS
    rl_filter_floor: float = RL_FILTER_FLOOR
    u_max: float = 10.0
    bootstrap_replicas: int = 0
    noise_gain: float = None

    def __post_init__(self):
        if not isinstance(self.mixture, MixtureSpec):
            object.__setattr__(self, "mixture", MixtureSpec(tuple(self.mixture)))
        angles = np.asarray(self.angles, dtype=float).ravel()
        if angles.size < 1 or not np.all(np.isfinite(angles)):
            raise ValueError("angles must be a non-empty finite array")
        object.__setattr__(self, "angles", angles)
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))
        if self.mle.n_max != self.trap.spec.n_max:
            raise ValueError(f"mle.n_max={self.mle.n_max} differs from trap n_max={self.trap.spec.n_max}")
        if not self.depth_jump_ratio > 0:
            raise ValueError("depth_jump_ratio must be positive")
        if self.bootstrap_replicas == 1 or self.bootstrap_replicas < 0:
            raise ValueError("bootstrap_replicas must be 0 (off) or >= 2")

    @property
    def effective_noise_gain(self):
        return self.noise_gain if self.noise_gain is not None else self.total_counts / signal_counts()

    def bootstrap_config(self):
        return BootstrapConfig(
            n_replicas=max(2, self.bootstrap_replicas),
            noise=self.noise or NoiseModel.zero(),
            rl_iterations=self.rl_iterations,
            rl_filter_floor=self.rl_filter_floor,
            seed=self.seed + 1,
            geometry=self.imaging,
            psf=self.psf,
            shape=self.shape,
            total_counts=self.total_counts,
            n_averaged=self.n_averaged,
            blur=self.blur,
            u_max=self.u_max,
            noise_gain=self.effective_noise_gain,
        )


@dataclass(frozen=True)
class ScenarioResult:
    rho_true: np.ndarray = field(repr=False)
    dataset: QuadratureDataset = field(repr=False)
    mle: object = field(repr=False)
    wigner: object = field(repr=False)
    negativity: object
    fidelity: float
    bootstrap: object = field(default=None, repr=False)


def _stage(name, func, *args, **kwargs):
    try:
        return func(*args, **kwargs)
    except TomographyError as exc:
        raise type(exc)(f"[{name}] {exc}") from exc


def render_frame(cfg, rho0, k, theta):
    """Background-subtracted camera frame for angle index ``k``, before deconvolution."""
    model = cfg.trap
    t_e = theta / model.spec.omega
    rho_t = evolve(rho0, model, t_e, warn=False).rho_t
    frame = quadrature_image(rho_t, 0.0, cfg.imaging, model.spec, cfg.shape,
                             total_counts=cfg.total_counts, n_averaged=cfg.n_averaged)
    if cfg.blur:
        frame = convolve_psf(frame, cfg.psf)
    if cfg.noise is not None:
        gain = cfg.effective_noise_gain
        frame = sample_camera_noise(frame, cfg.noise, cfg.seed, 2 * k, gain=gain)
        bg = synthesize_background(cfg.shape, cfg.imaging, cfg.noise, cfg.n_averaged, cfg.seed, 2 * k + 1,
                                   gain=gain)
        frame = subtract_background(frame, bg)
    return frame


def simulate_dataset(cfg, rho0=None):
    """Forward model and inverse image processing for every angle."""
    model = cfg.trap
    if rho0 is None:
        rho0 = prepare_state(cfg.mixture, model, cfg.displacement, cfg.depth_jump_ratio)
    parts = []
    for k, theta in enumerate(cfg.angles):
        frame = _stage("render", render_frame, cfg, rho0, k, theta)
        if cfg.blur:
            frame = _stage("deconvolve", richardson_lucy, frame, cfg.psf, cfg.rl_iterations, cfg.rl_filter_floor)
        parts.append(_stage("integrate", image_to_quadrature, frame, theta, model.spec, u_max=cfg.u_max))
    return rho0, QuadratureDataset.concatenate(parts)


def run_tomography_scenario(cfg, wigner_extent=5.0, wigner_step=0.05):
    """Simulate, reconstruct and optionally bootstrap one scenario.

    Returns
    -------
    ScenarioResult
    """
    rho0, data = simulate_dataset(cfg)
    res = _stage("reconstruct", reconstruct, data, cfg.mle, cfg.trap.spec)
    axis = wigner_axes(wigner_extent, wigner_step)
    grid = wigner(res.rho, axis, axis, check=False)
    boot = None
    if cfg.bootstrap_replicas:
        boot = _stage("bootstrap", run_bootstrap, res.rho, cfg.angles, cfg.bootstrap_config(), cfg.mle,
                      cfg.trap.spec)
    return ScenarioResult(rho0, data, res, grid, negativity(grid), fidelity(rho0, res.rho), boot)


# ---------------------------------------------------------------------------
# Anharmonic robustness


def simplex_grid(step=0.05):
    """Barycentric grid ``(P0, P1, P2)`` with spacing ``step``, ``P0`` slowest."""
    n = int(round(1.0 / step))
    if not np.isclose(n * step, 1.0):
        raise ValueError(f"step must divide 1, got {step}")
    pts = [(i / n, j / n, (n - i - j) / n) for i in range(n + 1) for j in range(n + 1 - i)]
    return np.array(pts)


@dataclass(frozen=True)
class RobustnessMap:
    """Fidelity and negativity shift over a grid of initial populations."""

    populations: np.ndarray
    fidelity: np.ndarray
    gamma_true: np.ndarray
    gamma_mle: np.ndarray
    lam: float
    omega: float
    displacement: float
    grid_step: float = float("nan")

    @property
    def delta_gamma(self):
        return self.gamma_true - self.gamma_mle

    def lookup(self, populations, atol=1e-9):
        idx = np.where(np.all(np.abs(self.populations - np.asarray(populations)) < atol, axis=1))[0]
        if idx.size == 0:
            raise KeyError(f"populations {populations} are not on the grid")
        return int(idx[0])


def robustness_trap(n_max=DEFAULT_N_MAX, depth_ratio=ROBUSTNESS_DEPTH_RATIO,
                    displacement_ratio=ROBUSTNESS_DISPLACEMENT_RATIO, lam=FIT_LAMBDA,
                    freq_hz=FIT_TRAP_FREQ_HZ, x_i=FIT_DISPLACEMENT, mass=RB87_MASS):
    """Fitted anharmonic trap rescaled to the tomography depth and displacement.

    Returns
    -------
    (TrapModel, float)
        The trap and the rescaled displacement in meters.
    """
    fitted = TrapModel(OscillatorSpec.from_frequency(mass, freq_hz, n_max), lam)
    return rescale_trap(fitted, depth_ratio, x_i, displacement_ratio)


def _exact_dataset(rho0, trap, angles, u_grid):
    """Momentum distributions after anharmonic evolution for ``theta / omega``."""
    table = []
    for theta in angles:
        rho_t = evolve(rho0, trap, theta / trap.spec.omega, warn=False).rho_t
        table.append(quadrature_distribution(rho_t, 0.0, u_grid))
    return QuadratureDataset.from_distributions(angles, u_grid, np.array(table))


def robustness_point(populations, trap, displacement, mle_cfg=None, angles=None, u_grid=None,
                     wigner_extent=5.0, wigner_step=0.05):
    """Fidelity and negativities for one initial population triplet.

    Returns
    -------
    dict
        ``fidelity``, ``gamma_true``, ``gamma_mle``, ``rho_true``, ``rho_mle``.
    """
    mle_cfg = mle_cfg or MleConfig(n_max=trap.spec.n_max)
    angles = uniform_angles(64) if angles is None else np.asarray(angles, dtype=float)
    u_grid = np.linspace(-10.0, 10.0, 201) if u_grid is None else np.asarray(u_grid, dtype=float)
    rho0 = prepare_state(MixtureSpec(tuple(populations)), trap, x_i=displacement)
    data = _exact_dataset(rho0, trap, angles, u_grid)
    res = reconstruct(data, mle_cfg, trap.spec)
    axis = wigner_axes(wigner_extent, wigner_step)
    g_true = negativity(wigner(rho0, axis, axis, check=False)).value
    g_mle = negativity(wigner(res.rho, axis, axis, check=False)).value
    return {
        "fidelity": fidelity(rho0, res.rho),
        "gamma_true": g_true,
        "gamma_mle": g_mle,
        "rho_true": rho0,
        "rho_mle": res.rho,
    }


def run_anharmonic_robustness(p_grid, trap, displacement, mle_cfg=None, angles=None, u_grid=None,
                              grid_step=float("nan"), progress=None):
    """Evaluate :func:`robustness_point` over a grid of populations.

    Noiseless, blur-free momentum distributions after evolution in ``trap``
    are reconstructed with the harmonic MLE model.
    """
    p_grid = np.atleast_2d(np.asarray(p_grid, dtype=float))
    fids, gt, gm = [], [], []
    for i, pops in enumerate(p_grid):
        out = robustness_point(pops, trap, displacement, mle_cfg, angles, u_grid)
        fids.append(out["fidelity"])
        gt.append(out["gamma_true"])
        gm.append(out["gamma_mle"])
        if progress is not None:
            progress(i, pops, out)
    return RobustnessMap(p_grid, np.array(fids), np.array(gt), np.array(gm), float(trap.lam),
                         float(trap.spec.omega), float(displacement), float(grid_step))


# ---------------------------------------------------------------------------
# Noise-bias studies

#: Base states: populations, trap frequency (Hz), displacement (m), depth-jump ratio.
NOISE_BIAS_STUDIES = {
    "displaced_n0": ((0.93, 0.07, 0.00), TRAP_FREQ_N0_HZ, 180e-9, 1.0),
    "n1": ((0.260, 0.651, 0.089), TRAP_FREQ_N1_HZ, 0.0, 2.0),
    "displaced_n1": ((0.260, 0.651, 0.089), TRAP_FREQ_N1_HZ, 140e-9, 2.0),
}


def noise_bias_base_state(study, n_max=DEFAULT_N_MAX, mass=RB87_MASS):
    """Diagonal mixture, squeezed and displaced as in the named study.

    Returns
    -------
    (ndarray, OscillatorSpec)
    """
    if study not in NOISE_BIAS_STUDIES:
        raise KeyError(f"unknown study {study!r}; choose from {sorted(NOISE_BIAS_STUDIES)}")
    pops, freq, x_i, ratio = NOISE_BIAS_STUDIES[study]
    spec = OscillatorSpec.from_frequency(mass, freq, n_max)
    return prepare_state(MixtureSpec(pops), TrapModel(spec), x_i, ratio), spec


def run_noise_bias_study(study="n1", noise_levels=DEFAULT_NOISE_LEVELS, n_sims=50, cfg=None, angles=None,
                         mle_cfg=None, n_max=DEFAULT_N_MAX):
    """Noise sweep on one of the named base states.

    Returns
    -------
    NoiseBiasTable
    """
    rho, spec = noise_bias_base_state(study, n_max)
    cfg = cfg or BootstrapConfig(n_replicas=max(2, n_sims))
    angles = uniform_angles(64) if angles is None else angles
    mle_cfg = mle_cfg or MleConfig(n_max=n_max)
    return noise_bias_sweep(rho, noise_levels, replace(cfg, n_replicas=max(2, n_sims)), spec, angles,
                            mle_cfg, n_sims=n_sims)
