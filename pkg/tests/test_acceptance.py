"""Acceptance checks; each prints one PASS/FAIL line with its measured values.

Run alone with ``pytest tests/test_acceptance.py -s``.
"""

import hashlib
import os
import subprocess
import sys
import textwrap
import time

import numpy as np
import pytest

from conftest import exact_dataset, random_density
from toftomo.constants import K_B, RB87_MASS, FIT_DISPLACEMENT, FIT_LAMBDA, FIT_TRAP_FREQ_HZ
from toftomo.fitting import TimeSeries, anharmonic_trace, fit_anharmonic_model
from toftomo.fock import OscillatorSpec, fidelity, fock_density, negativity, wigner
from toftomo.imaging import ImagingGeometry, PsfModel, ballistic_sigma, convolve_psf, quadrature_image, richardson_lucy
from toftomo.mle import MleConfig, reconstruct
from toftomo.pipeline import (
    DEFAULT_NOISE_LEVELS,
    noise_bias_base_state,
    robustness_point,
    robustness_trap,
    run_noise_bias_study,
)
from toftomo.quadrature import QuadratureDataset, uniform_angles

pytestmark = pytest.mark.acceptance


@pytest.fixture
def report(capsys):
    def emit(label, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} {label}: {detail}", flush=True)
        assert ok, detail
    return emit


def test_wigner_minimum_of_fock_one(report):
    start = time.perf_counter()
    axis = np.linspace(-6.0, 6.0, 241)
    neg = negativity(wigner(fock_density([0.0, 1.0], 26), axis, axis))
    elapsed = time.perf_counter() - start
    err = abs(neg.value + 1.0 / np.pi)
    report("1 wigner |1> minimum", err <= 1e-6 and elapsed < 5.0,
           f"min={neg.value:.12f} |err|={err:.2e} at ({neg.x:g}, {neg.p:g}) in {elapsed:.2f}s")


def test_mle_round_trip_of_squeezed_displaced_mixture(report):
    start = time.perf_counter()
    rho0, _ = noise_bias_base_state("displaced_n1")
    data = exact_dataset(rho0, uniform_angles(64), np.linspace(-10.0, 10.0, 201))
    res = reconstruct(data, MleConfig(n_max=25, tolerance=1e-4, max_iterations=500))
    elapsed = time.perf_counter() - start
    f = fidelity(rho0, res.rho)
    report("2 mle round trip", f >= 0.99 and res.iterations_used <= 500 and elapsed < 120.0,
           f"F={f:.5f} iterations={res.iterations_used} converged={res.converged} in {elapsed:.1f}s")


def test_harmonic_mle_under_anharmonic_evolution(report):
    start = time.perf_counter()
    trap, x_i = robustness_trap()
    out = robustness_point((0.28, 0.57, 0.15), trap, x_i, MleConfig(n_max=25, tolerance=1e-4, max_iterations=500))
    elapsed = time.perf_counter() - start
    dg = abs(out["gamma_true"] - out["gamma_mle"])
    ok = out["fidelity"] >= 0.95 and dg <= 0.01 and out["gamma_mle"] < 0 and elapsed < 600.0
    report("3 anharmonic robustness at P=(0.28, 0.57, 0.15)", ok,
           f"F={out['fidelity']:.4f} gamma_true={out['gamma_true']:.4f} gamma_mle={out['gamma_mle']:.4f} "
           f"|dgamma|={dg:.4f} lambda={trap.lam:.6f} f={trap.spec.omega / (2 * np.pi):.2f}Hz "
           f"x_i={x_i * 1e9:.2f}nm in {elapsed:.1f}s")


def test_noise_bias_trends(report):
    start = time.perf_counter()
    assert len(DEFAULT_NOISE_LEVELS) >= 6 and 0.0 in DEFAULT_NOISE_LEVELS
    table = run_noise_bias_study("n1", DEFAULT_NOISE_LEVELS, n_sims=50)
    elapsed = time.perf_counter() - start
    rho_hi, p_hi = table.trend(table.high_n_population(3))
    rho_w, p_w = table.trend(table.wigner_values)
    ok = p_hi < 0.05 and p_w < 0.05 and table.populations.shape[1] == 50 and elapsed < 3600.0
    means_hi = table.high_n_population(3).mean(axis=1)
    report("4 noise bias", ok,
           f"high-n rho={rho_hi:.3f} p={p_hi:.2e} means={np.round(means_hi, 4).tolist()}; "
           f"W(min) rho={rho_w:.3f} p={p_w:.2e} means={np.round(table.wigner_means, 4).tolist()} in {elapsed:.0f}s")


def test_anharmonic_fit_self_consistency(report):
    start = time.perf_counter()
    spec = OscillatorSpec.from_frequency(RB87_MASS, FIT_TRAP_FREQ_HZ)
    omega = 2 * np.pi * FIT_TRAP_FREQ_HZ
    t = np.linspace(0.0, 0.5e-3, 40)
    y = anharmonic_trace(t, FIT_LAMBDA, omega, FIT_DISPLACEMENT, spec)
    res = fit_anharmonic_model(TimeSeries(t, y), spec)
    elapsed = time.perf_counter() - start
    rel = {k: abs(res[k] / ref - 1) for k, ref in (("lambda", FIT_LAMBDA), ("omega", omega),
                                                    ("x_i", FIT_DISPLACEMENT))}
    ratio = res["significance_ratio"]
    ok = max(rel.values()) <= 0.05 and abs(ratio - 0.13) <= 0.02 and elapsed < 600.0
    report("5 anharmonic fit", ok,
           f"relative errors {', '.join(f'{k}={v:.2e}' for k, v in rel.items())}; ratio={ratio:.4f} "
           f"in {elapsed:.1f}s")


def test_ballistic_size_after_flight(report):
    start = time.perf_counter()
    sigma = ballistic_sigma(K_B * 0.256e-6 / 2, 0.5e-3, 0.0, RB87_MASS)
    elapsed = time.perf_counter() - start
    report("6 ballistic size", 2.3e-6 <= sigma <= 2.5e-6 and elapsed < 1.0, f"sigma={sigma * 1e6:.4f}um")


def test_mle_likelihood_is_monotone(report):
    start = time.perf_counter()
    worst = np.inf
    rng = np.random.default_rng(7)
    u_grid = np.linspace(-7.0, 7.0, 71)
    for k in range(20):
        rho = random_density(11, rank=int(rng.integers(1, 6)), seed=100 + k, support=6)
        exact = exact_dataset(rho, uniform_angles(int(rng.integers(6, 17))), u_grid)
        counts = rng.multinomial(20000, exact.weight / exact.weight.sum()).astype(float)
        data = QuadratureDataset(exact.theta, exact.u, counts, exact.bin_width)
        res = reconstruct(data, MleConfig(n_max=10, tolerance=1e-7, max_iterations=300))
        worst = min(worst, float(np.min(np.diff(res.log_likelihood_trace))))
    elapsed = time.perf_counter() - start
    report("7 mle monotone", worst >= -1e-9 and elapsed < 300.0,
           f"smallest step change={worst:.3e} over 20 datasets in {elapsed:.1f}s")


def test_richardson_lucy_improves_blurred_fringe(report):
    start = time.perf_counter()
    spec = OscillatorSpec.from_frequency(RB87_MASS, 9.05e3)
    truth = quadrature_image(fock_density([0.0, 1.0], 26), 0.0, ImagingGeometry(), spec, (64, 256),
                             total_counts=1e5)
    blurred = convolve_psf(truth, PsfModel())
    base = np.linalg.norm(blurred.counts - truth.counts)
    errs = {(k, f): np.linalg.norm(richardson_lucy(blurred, PsfModel(), k, f).counts - truth.counts)
            for k in (2, 10) for f in (0.0, 0.69)}
    elapsed = time.perf_counter() - start
    report("8 richardson-lucy", all(e < base for e in errs.values()) and elapsed < 30.0,
           f"blurred L2={base:.2f}; " + ", ".join(f"{k}it/floor {f}: {e:.2f}" for (k, f), e in errs.items()))


DETERMINISM_SCRIPT = textwrap.dedent("""
    import hashlib
    import numpy as np
    from toftomo.fock import OscillatorSpec
    from toftomo.constants import RB87_MASS, TRAP_FREQ_N1_HZ
    from toftomo.dynamics import TrapModel
    from toftomo.imaging import NoiseModel
    from toftomo.mle import MleConfig
    from toftomo.pipeline import ScenarioConfig, run_noise_bias_study, run_tomography_scenario
    from toftomo.quadrature import uniform_angles

    h = hashlib.sha256()
    spec = OscillatorSpec.from_frequency(RB87_MASS, TRAP_FREQ_N1_HZ, n_max=10)
    cfg = ScenarioConfig(TrapModel(spec), (0.26, 0.651, 0.089), 140e-9, 2.0, angles=uniform_angles(16),
                         noise=NoiseModel.preset("displaced_n1"), mle=MleConfig(n_max=10), seed=3,
                         bootstrap_replicas=2)
    res = run_tomography_scenario(cfg)
    for arr in (res.dataset.weight, res.mle.rho, res.wigner.values, res.bootstrap.negativities):
        h.update(np.ascontiguousarray(arr).tobytes())
    table = run_noise_bias_study("n1", (0.0, 20.0), n_sims=2, angles=uniform_angles(16),
                                 mle_cfg=MleConfig(n_max=10), n_max=10)
    h.update(table.populations.tobytes())
    h.update(table.wigner_values.tobytes())
    print(h.hexdigest())
""")


def test_seeded_runs_are_bit_identical_across_thread_counts(report):
    start = time.perf_counter()
    digests = {}
    for threads in ("1", "2", "4"):
        env = dict(os.environ, OMP_NUM_THREADS=threads, OPENBLAS_NUM_THREADS=threads, MKL_NUM_THREADS=threads)
        out = subprocess.run([sys.executable, "-c", DETERMINISM_SCRIPT], env=env, capture_output=True,
                             text=True, check=True)
        digests[threads] = out.stdout.strip()
    elapsed = time.perf_counter() - start
    same = len(set(digests.values())) == 1
    report("9 determinism", same, f"digests by thread count {digests} in {elapsed:.1f}s")
