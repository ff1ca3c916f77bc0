import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import expm

from conftest import random_density
from toftomo.constants import FIT_DISPLACEMENT, FIT_LAMBDA, FIT_TRAP_FREQ_HZ, RB87_MASS
from toftomo.dynamics import (
    MixtureSpec,
    TrapModel,
    build_hamiltonian,
    buffer_population,
    evolve,
    hamiltonian_eigensystem,
    momentum_expectation_trace,
    prepare_state,
    quadrature_distribution,
    rescale_trap,
    trap_eigenstate_indices,
)
from toftomo.exceptions import TruncationWarning
from toftomo.fock import OscillatorSpec, annihilation, fock_density, purity, trace_distance
from toftomo.pipeline import robustness_trap

# Tr rho^2 of the 140 nm displaced mixture (0.26, 0.651, 0.089) in the 9.05 kHz
# trap: displacement by expm in a 120-level basis, cropped to 26 levels and
# renormalized.
DISPLACED_MIXTURE_PURITY = 0.4993220000000002


@pytest.fixture
def harmonic(spec):
    return TrapModel(spec)


@pytest.fixture
def fitted_trap():
    return TrapModel(OscillatorSpec.from_frequency(RB87_MASS, FIT_TRAP_FREQ_HZ), FIT_LAMBDA)


class TestTrapModel:
    def test_sextic_follows_sign(self, spec):
        assert TrapModel(spec, -0.001).include_sextic
        assert not TrapModel(spec, 0.001).include_sextic

    def test_negative_lambda_needs_sextic(self, spec):
        with pytest.raises(ValueError):
            TrapModel(spec, -0.001, include_sextic=False)

    def test_rejects_large_lambda(self, spec):
        with pytest.raises(ValueError):
            TrapModel(spec, 0.2)

    def test_mixture_validation(self):
        with pytest.raises(ValueError):
            MixtureSpec((0.5, 0.6, 0.0))
        with pytest.raises(ValueError):
            MixtureSpec((1.1, -0.1, 0.0))


class TestHamiltonian:
    def test_harmonic_spectrum(self, harmonic):
        w, _ = hamiltonian_eigensystem(harmonic)
        assert np.allclose(w[:20], np.arange(20) + 0.5, atol=1e-9)

    def test_quartic_ground_shift(self, spec):
        w, _ = hamiltonian_eigensystem(TrapModel(spec, 0.001))
        # first-order shift lambda <0|(x/x0)^4|0> = 3 lambda
        assert w[0] - 0.5 == pytest.approx(3 * 0.001, rel=0.1)

    def test_fitted_lambda_bounded_below(self, fitted_trap):
        w, _ = hamiltonian_eigensystem(fitted_trap)
        assert np.all(np.isfinite(w))
        assert 0.4 < w[0] < 0.5
        assert np.all(np.diff(w) >= 0)

    def test_hermitian(self, fitted_trap):
        h = build_hamiltonian(fitted_trap)
        assert np.allclose(h, h.conj().T)

    def test_matrix_elements_exact_despite_truncation(self, spec):
        lam = 0.002
        h = build_hamiltonian(TrapModel(spec, lam))
        a = annihilation(60)
        x = a + a.T
        x2 = x @ x
        ref = (np.diag(np.arange(60) + 0.5) + lam * x2 @ x2)[:26, :26]
        assert np.allclose(h, ref, atol=1e-12)

    def test_fock_like_eigenstates_skip_spurious_levels(self, fitted_trap):
        # at the fitted lambda a top-level state sorts between n = 1 and n = 2
        idx = trap_eigenstate_indices(fitted_trap)
        _, v = hamiltonian_eigensystem(fitted_trap)
        for n, k in enumerate(idx):
            assert abs(v[n, k]) ** 2 > 0.95


class TestEvolve:
    def test_zero_time(self, harmonic):
        rho = random_density(26, seed=1, support=8)
        assert trace_distance(evolve(rho, harmonic, 0.0).rho_t, rho) < 1e-12

    def test_full_period(self, harmonic):
        rho = random_density(26, seed=2, support=8)
        out = evolve(rho, harmonic, 2 * np.pi / harmonic.spec.omega)
        assert trace_distance(out.rho_t, rho) < 1e-8
        assert out.theta_equivalent == pytest.approx(0.0, abs=1e-9) or out.theta_equivalent == pytest.approx(
            2 * np.pi, abs=1e-9)

    @given(st.floats(0, 2e-3), st.integers(0, 1000))
    def test_preserves_trace_hermiticity_and_energy(self, t, seed):
        model = TrapModel(OscillatorSpec.from_frequency(RB87_MASS, FIT_TRAP_FREQ_HZ), -0.003)
        rho = random_density(26, seed=seed, support=6)
        rho_t = evolve(rho, model, t, warn=False).rho_t
        h = build_hamiltonian(model)
        assert abs(np.trace(rho_t) - 1) < 1e-9
        assert np.max(np.abs(rho_t - rho_t.conj().T)) < 1e-9
        e0 = np.real(np.trace(h @ rho))
        assert np.real(np.trace(h @ rho_t)) == pytest.approx(e0, rel=1e-9)

    def test_matches_matrix_exponential(self, spec):
        model = TrapModel(spec, 0.004)
        rho = random_density(26, seed=4, support=5)
        t = 0.37e-4
        u = expm(-1j * build_hamiltonian(model) * spec.omega * t)
        assert np.allclose(evolve(rho, model, t).rho_t, u @ rho @ u.conj().T, atol=1e-10)

    def test_buffer_warning(self, harmonic):
        rho = fock_density(np.r_[np.zeros(25), 1.0], 26)
        assert buffer_population(rho) == pytest.approx(1.0)
        with pytest.warns(TruncationWarning):
            evolve(rho, harmonic, 1e-5)

    def test_no_warning_for_low_states(self, harmonic):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            evolve(fock_density([0.5, 0.5], 26), harmonic, 1e-5)


class TestQuadratureDistribution:
    @given(st.floats(0, 2 * np.pi))
    def test_ground_state_gaussian(self, theta):
        u = np.linspace(-10, 10, 2001)
        p = quadrature_distribution(fock_density([1.0], 26), theta, u)
        du = u[1] - u[0]
        assert np.sum(p) * du == pytest.approx(1.0, abs=1e-9)
        assert np.sqrt(np.sum(p * u ** 2) * du) == pytest.approx(1.0, abs=1e-9)
        assert p[1000] == pytest.approx((2 * np.pi) ** -0.5, rel=1e-12)

    @given(st.floats(0, 2 * np.pi))
    def test_first_excited_null(self, theta):
        assert quadrature_distribution(fock_density([0, 1.0], 26), theta, np.array([0.0]))[0] < 1e-30

    @given(st.floats(0, 2 * np.pi), st.integers(0, 1000))
    def test_rotation_equals_evolution(self, theta, seed):
        model = TrapModel(OscillatorSpec.from_frequency(RB87_MASS, 9.05e3))
        rho = random_density(26, seed=seed, support=10)
        u = np.linspace(-8, 8, 161)
        evolved = evolve(rho, model, theta / model.spec.omega, warn=False).rho_t
        assert np.allclose(quadrature_distribution(evolved, 0.0, u), quadrature_distribution(rho, theta, u), atol=1e-8)

    def test_physical_units(self, spec):
        u = np.linspace(-2, 2, 5)
        rho = fock_density([1.0], 26)
        assert np.allclose(quadrature_distribution(rho, 0.0, u, spec), quadrature_distribution(rho, 0.0, u) / spec.p0)


class TestMomentumTrace:
    def test_undisplaced_mixture_is_zero(self, fitted_trap):
        rho = prepare_state((0.3, 0.5, 0.2), fitted_trap)
        trace = momentum_expectation_trace(rho, fitted_trap, np.linspace(0, 1e-3, 200))
        assert np.max(np.abs(trace)) / fitted_trap.spec.p0 < 1e-10

    def test_harmonic_coherent_motion(self, spec):
        model = TrapModel(spec)
        x_i = 120e-9
        rho = prepare_state((1, 0, 0), model, x_i)
        t = np.linspace(0, 5e-4, 400)
        ref = -spec.mass * spec.omega * x_i * np.sin(spec.omega * t)
        got = momentum_expectation_trace(rho, model, t)
        assert np.max(np.abs(got - ref)) < 1e-6 * np.max(np.abs(ref))

    def test_matches_stepwise_evolution(self, fitted_trap):
        rho = prepare_state((1, 0, 0), fitted_trap, FIT_DISPLACEMENT)
        a = annihilation(26)
        p_op = 1j * (a.T - a) * fitted_trap.spec.p0
        for t in (0.0, 3e-5, 2.2e-4):
            rho_t = evolve(rho, fitted_trap, t, warn=False).rho_t
            ref = np.real(np.trace(rho_t @ p_op))
            got = momentum_expectation_trace(rho, fitted_trap, [t])[0]
            assert got == pytest.approx(ref, abs=1e-9 * fitted_trap.spec.p0)

    def test_anharmonic_envelope_decays(self, fitted_trap):
        rho = prepare_state((1, 0, 0), fitted_trap, FIT_DISPLACEMENT)
        period = 2 * np.pi / fitted_trap.spec.omega
        t = np.linspace(0, 1e-3, 20001)
        trace = np.abs(momentum_expectation_trace(rho, fitted_trap, t))
        n_periods = int(1e-3 / period)
        env = [trace[(t >= k * period) & (t < (k + 1) * period)].max() for k in range(n_periods)]
        assert np.all(np.diff(env) < 0)


class TestPrepareState:
    def test_ground_state(self, harmonic):
        rho = prepare_state((1, 0, 0), harmonic)
        assert np.allclose(rho, fock_density([1.0], 26))

    def test_undisplaced_populations_in_eigenbasis(self):
        trap, _ = robustness_trap()
        pops = (0.28, 0.57, 0.15)
        rho = prepare_state(pops, trap)
        _, v = hamiltonian_eigensystem(trap)
        diag = np.real(np.diag(v.T @ rho @ v))
        idx = trap_eigenstate_indices(trap)
        assert np.allclose(diag[idx], pops, atol=1e-12)
        assert np.real(np.trace(rho)) == pytest.approx(1.0)

    def test_displaced_mixture_purity(self, spec):
        rho = prepare_state((0.26, 0.651, 0.089), TrapModel(spec), 140e-9)
        assert purity(rho) == pytest.approx(DISPLACED_MIXTURE_PURITY, abs=1e-9)

    def test_depth_jump_squeezes(self, spec):
        rho = prepare_state((1, 0, 0), TrapModel(spec), 0.0, depth_jump_ratio=2.0)
        u = np.linspace(-8, 8, 1601)
        du = u[1] - u[0]
        var = [np.sum(quadrature_distribution(rho, th, u) * u ** 2) * du for th in (0.0, np.pi / 2)]
        # post-jump frequency is sqrt(2) higher: momentum variance 2^-1/2, position 2^1/2
        assert var[0] == pytest.approx(2 ** -0.5, rel=1e-6)
        assert var[1] == pytest.approx(2 ** 0.5, rel=1e-6)

    def test_accepts_tuple(self, harmonic):
        assert np.allclose(prepare_state([0.5, 0.5, 0.0], harmonic), prepare_state(MixtureSpec((0.5, 0.5, 0)), harmonic))


class TestRescale:
    def test_depth_scaling_laws(self, fitted_trap):
        new, x = rescale_trap(fitted_trap, 1.5, 166e-9, 140 / 180)
        assert new.spec.omega == pytest.approx(fitted_trap.spec.omega * np.sqrt(1.5))
        assert new.lam == pytest.approx(fitted_trap.lam / np.sqrt(1.5))
        assert x == pytest.approx(166e-9 * 140 / 180)
        assert new.include_sextic

    def test_round_trip(self, fitted_trap):
        there, _ = rescale_trap(fitted_trap, 2.0)
        back, _ = rescale_trap(there, 0.5)
        assert back.lam == pytest.approx(fitted_trap.lam)
        assert back.spec.omega == pytest.approx(fitted_trap.spec.omega)

    def test_rejects_nonpositive(self, fitted_trap):
        with pytest.raises(ValueError):
            rescale_trap(fitted_trap, 0.0)
