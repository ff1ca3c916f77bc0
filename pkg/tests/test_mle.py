import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import exact_dataset, random_density
from toftomo.dynamics import TrapModel, prepare_state
from toftomo.exceptions import DegenerateDataError
from toftomo.fock import displacement_matrix, fidelity, fock_density, number_operator, trace_distance
from toftomo.mle import (
    MleConfig,
    log_likelihood,
    mle_step,
    predicted_probabilities,
    predicted_probability,
    projector,
    r_operator,
    reconstruct,
)
from toftomo.quadrature import QuadratureDataset, uniform_angles
from toftomo.validation import density_matrix_violations

U201 = np.linspace(-10.0, 10.0, 201)


def noisy_dataset(rho, n_angles, seed, u_grid=U201):
    """Exact distributions with multiplicative noise, as non-negative weights."""
    data = exact_dataset(rho, uniform_angles(n_angles, 0.1), u_grid)
    rng = np.random.default_rng(seed)
    w = data.weight * rng.uniform(0.5, 1.5, data.weight.size) + rng.uniform(0, 1e-3, data.weight.size)
    return QuadratureDataset(data.theta, data.u, w)


class TestProjector:
    @given(st.floats(-6, 6), st.floats(0, 2 * np.pi))
    def test_rank_one(self, u, theta):
        pi = projector(theta, u, 10)
        tr = np.real(np.trace(pi))
        assert tr > 0
        assert np.allclose(pi @ pi, tr * pi, atol=1e-10)
        assert np.allclose(pi, pi.conj().T)

    @given(st.floats(0, 2 * np.pi))
    def test_completeness_at_one_angle(self, theta):
        u = np.linspace(-8, 8, 1601)
        total = sum(projector(theta, uj, 10) for uj in u) * (u[1] - u[0])
        assert np.max(np.abs(total - np.eye(11))) < 1e-3

    def test_physical_units(self, spec):
        assert np.allclose(projector(0.2, 0.5, 4, spec), projector(0.2, 0.5, 4) / spec.p0)


class TestPredictedProbability:
    def test_first_excited_null(self):
        assert predicted_probability(fock_density([0, 1.0], 26), 0.7, 0.0) == pytest.approx(0.0, abs=1e-30)

    @given(st.floats(0, 2 * np.pi))
    def test_ground_state_peak(self, theta):
        assert predicted_probability(fock_density([1.0], 26), theta, 0.0) == pytest.approx((2 * np.pi) ** -0.5)

    @given(st.integers(0, 10_000), st.floats(0, 2 * np.pi))
    def test_normalized(self, seed, theta):
        rho = random_density(26, seed=seed)
        u = np.linspace(-14, 14, 2801)
        total = predicted_probabilities(rho, np.full(u.size, theta), u).sum() * (u[1] - u[0])
        assert total == pytest.approx(1.0, abs=1e-4)


class TestROperator:
    def test_identity_at_exact_fixed_point(self):
        rho = random_density(8, seed=5)
        data = exact_dataset(rho, uniform_angles(16), np.linspace(-12, 12, 481))
        assert np.max(np.abs(r_operator(rho, data) - np.eye(8))) < 1e-3

    def test_single_record_is_rank_one(self):
        rho = random_density(6, seed=1)
        data = QuadratureDataset([0.4], [1.1], [3.0])
        r = r_operator(rho, data)
        pi = projector(0.4, 1.1, 5)
        assert np.linalg.matrix_rank(r, tol=1e-10) == 1
        assert np.allclose(r, pi / np.real(np.trace(rho @ pi)))

    def test_weight_scaling_invariance(self):
        rho = random_density(6, seed=2)
        data = noisy_dataset(rho, 4, seed=0)
        scaled = QuadratureDataset(data.theta, data.u, 4.0 * data.weight)
        assert np.array_equal(r_operator(rho, data), r_operator(rho, scaled))

    def test_floor_raises_when_all_probabilities_vanish(self):
        data = QuadratureDataset([0.0, 0.0], [60.0, 61.0], [1.0, 1.0])
        with pytest.raises(DegenerateDataError):
            r_operator(fock_density([1.0], 4), data)


class TestReconstruct:
    def test_first_excited_round_trip(self):
        data = exact_dataset(fock_density([0, 1.0], 26), uniform_angles(64), U201)
        res = reconstruct(data, MleConfig(tolerance=1e-5))
        assert res.converged
        assert fidelity(res.rho, fock_density([0, 1.0], 26)) >= 0.999

    def test_displaced_mixture_populations(self, spec):
        pops = (0.26, 0.651, 0.089)
        d = displacement_matrix(140e-9, spec)
        rho = d @ fock_density(pops, 26) @ d.conj().T
        res = reconstruct(exact_dataset(rho, uniform_angles(64), U201))
        back = d.conj().T @ res.rho @ d
        assert np.allclose(np.real(np.diag(back))[:3], pops, atol=0.02)

    def test_rank_one_start_stays_positive(self, spec):
        rho = prepare_state((0.26, 0.651, 0.089), TrapModel(spec), 0.0, 2.0)
        data = exact_dataset(rho, uniform_angles(32), U201)
        for k in (2, 6, 50):
            res = reconstruct(data, MleConfig(max_iterations=k, initial="ones", tolerance=1e-14))
            assert np.min(np.linalg.eigvalsh(res.rho)) > -1e-12

    def test_identity_start_recovers_mixture(self, spec):
        rho = prepare_state((0.26, 0.651, 0.089), TrapModel(spec), 0.0, 2.0)
        res = reconstruct(exact_dataset(rho, uniform_angles(32), U201), MleConfig(max_iterations=300))
        assert fidelity(res.rho, rho) > 0.99

    def test_result_metadata(self):
        data = exact_dataset(fock_density([1.0], 6), uniform_angles(4), U201)
        res = reconstruct(data, MleConfig(n_max=5, max_iterations=3, tolerance=1e-12))
        assert res.iterations_used == 3 and not res.converged
        assert res.log_likelihood_trace.size == 4
        assert res.n_max == 5
        assert res.log_likelihood == res.log_likelihood_trace[-1]

    def test_spec_must_agree(self, spec):
        data = exact_dataset(fock_density([1.0], 6), uniform_angles(4), U201)
        with pytest.raises(ValueError):
            reconstruct(data, MleConfig(n_max=5), spec)

    def test_rho0_overrides_initial(self):
        data = exact_dataset(fock_density([1.0], 6), uniform_angles(4), U201)
        start = fock_density([0.5, 0.5], 6)
        one = reconstruct(data, MleConfig(n_max=5, max_iterations=1), rho0=start)
        assert np.allclose(one.rho, mle_step(start, data))

    @pytest.mark.parametrize("kwargs", [dict(tolerance=0), dict(max_iterations=0), dict(initial="zeros"),
                                        dict(n_max=2.5)])
    def test_config_validation(self, kwargs):
        with pytest.raises(ValueError):
            MleConfig(**kwargs)

    def test_accepts_plain_tuples(self):
        data = exact_dataset(fock_density([1.0], 4), uniform_angles(3), U201)
        a = reconstruct(data, MleConfig(n_max=3, max_iterations=5))
        b = reconstruct((data.theta, data.u, data.weight), MleConfig(n_max=3, max_iterations=5))
        assert np.array_equal(a.rho, b.rho)


class TestAngleCount:
    """Eight angles fix off-diagonals up to the third; the fifth aliases onto the third."""

    @staticmethod
    def nullity(n_angles, offsets, dim=11):
        th = np.repeat(uniform_angles(n_angles), U201.size)
        uu = np.tile(U201, n_angles)
        cols = []
        for k in offsets:
            for n in range(dim - k):
                for part in (1.0, 1j):
                    delta = np.zeros((dim, dim), dtype=complex)
                    delta[n, n + k] = part
                    delta[n + k, n] = np.conj(part)
                    cols.append(predicted_probabilities(delta, th, uu))
        s = np.linalg.svd(np.array(cols).T, compute_uv=False)
        return int(np.sum(s < 1e-10 * s[0]))

    def test_low_coherences_identifiable(self):
        assert self.nullity(8, (1, 2, 3)) == 0

    def test_fifth_coherence_aliased_with_eight_angles(self):
        assert self.nullity(8, (3, 5)) > 0
        assert self.nullity(16, (3, 5)) == 0

    def test_indistinguishable_states(self):
        dim = 11
        th8 = np.repeat(uniform_angles(8), U201.size)
        uu8 = np.tile(U201, 8)
        basis = []
        for k in (3, 5):
            for n in range(dim - k):
                for part in (1.0, 1j):
                    delta = np.zeros((dim, dim), dtype=complex)
                    delta[n, n + k] = part
                    delta[n + k, n] = np.conj(part)
                    basis.append(delta)
        a = np.array([predicted_probabilities(b, th8, uu8) for b in basis]).T
        _, s, vt = np.linalg.svd(a)
        coef = vt[-1]
        delta = sum(c * b for c, b in zip(coef, basis))
        assert np.max(np.abs(np.diagonal(delta, 5))) > 1e-3
        rho_a = np.eye(dim, dtype=complex) / dim
        rho_b = rho_a + 0.5 * delta / (dim * np.max(np.abs(np.linalg.eigvalsh(delta))))
        assert not density_matrix_violations(rho_b)
        p_a = predicted_probabilities(rho_a, th8, uu8)
        p_b = predicted_probabilities(rho_b, th8, uu8)
        assert np.allclose(p_a, p_b, atol=1e-12)
        th16 = np.repeat(uniform_angles(16), U201.size)
        uu16 = np.tile(U201, 16)
        diff = predicted_probabilities(rho_b, th16, uu16) - predicted_probabilities(rho_a, th16, uu16)
        assert np.max(np.abs(diff)) > 1e-4


class TestInvariants:
    @given(st.integers(0, 10_000), st.integers(2, 8), st.integers(1, 12))
    def test_likelihood_nondecreasing_and_iterates_valid(self, seed, dim, n_angles):
        rho = random_density(dim, seed=seed)
        data = noisy_dataset(rho, n_angles, seed, np.linspace(-8, 8, 61))
        cfg = MleConfig(n_max=dim - 1, tolerance=1e-10, max_iterations=40)
        res = reconstruct(data, cfg)
        assert np.all(np.diff(res.log_likelihood_trace) >= -1e-9)
        for k in (1, 5, 40):
            it = reconstruct(data, MleConfig(n_max=dim - 1, tolerance=1e-10, max_iterations=k)).rho
            assert not density_matrix_violations(it, atol=1e-9)

    def test_order_invariance(self):
        rho = random_density(6, seed=9)
        data = noisy_dataset(rho, 5, seed=3, u_grid=np.linspace(-8, 8, 41))
        perm = np.random.default_rng(0).permutation(len(data))
        shuffled = QuadratureDataset(data.theta[perm], data.u[perm], data.weight[perm])
        cfg = MleConfig(n_max=5, max_iterations=30)
        assert np.array_equal(reconstruct(data, cfg).rho, reconstruct(shuffled, cfg).rho)

    @given(st.floats(-np.pi, np.pi))
    def test_angle_shift_covariance(self, delta):
        rho = random_density(6, seed=11)
        data = noisy_dataset(rho, 6, seed=4, u_grid=np.linspace(-8, 8, 61))
        start = random_density(6, seed=12)
        phase = np.exp(1j * delta * np.arange(6))
        rot = np.diag(phase)
        cfg = MleConfig(n_max=5, max_iterations=25, tolerance=1e-12)
        base = reconstruct(data, cfg, rho0=start).rho
        shifted = reconstruct(data.rotated(delta), cfg, rho0=rot @ start @ rot.conj().T).rho
        assert trace_distance(shifted, rot @ base @ rot.conj().T) < 1e-6

    def test_fixed_point(self):
        rho = random_density(8, seed=21)
        data = exact_dataset(rho, uniform_angles(16), np.linspace(-12, 12, 481))
        assert trace_distance(mle_step(rho, data), rho) < 1e-6

    def test_log_likelihood_maximal_at_truth(self):
        rho = random_density(5, seed=2)
        data = exact_dataset(rho, uniform_angles(8), np.linspace(-10, 10, 201))
        other = random_density(5, seed=3)
        assert log_likelihood(rho, data) > log_likelihood(other, data)

    def test_number_expectation_of_reconstruction(self):
        rho = fock_density([0.2, 0.5, 0.3], 8)
        res = reconstruct(exact_dataset(rho, uniform_angles(16), U201), MleConfig(n_max=7, tolerance=1e-6))
        assert np.real(np.trace(res.rho @ number_operator(8))) == pytest.approx(1.1, abs=5e-3)
