"""scikit-learn style estimators and the input validation helpers."""

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from conftest import exact_dataset, random_density
from toftomo.estimators import DampedSinusoidRegressor, QuadratureTomography, RichardsonLucyDeconvolver
from toftomo.fitting import damped_sinusoid
from toftomo.fock import coherent_state, fock_density
from toftomo.imaging import ImageFrame, PsfModel, richardson_lucy
from toftomo.mle import MleConfig, reconstruct
from toftomo.quadrature import uniform_angles
from toftomo.validation import (
    check_density_matrix,
    check_quadrature_array,
    check_same_dim,
    check_time_series,
    density_matrix_violations,
)


def _as_xy(data):
    return np.column_stack([data.theta, data.u]), data.weight


@pytest.fixture(scope="module")
def fock_one_data():
    return exact_dataset(fock_density([0, 1], 9), uniform_angles(12), np.linspace(-6, 6, 81))


class TestQuadratureTomography:
    def test_matches_functional_route(self, fock_one_data):
        X, w = _as_xy(fock_one_data)
        est = QuadratureTomography(n_max=8, tol=1e-6, max_iter=3000).fit(X, sample_weight=w)
        ref = reconstruct(fock_one_data, MleConfig(n_max=8, tolerance=1e-6, max_iterations=3000))
        np.testing.assert_array_equal(est.rho_, ref.rho)
        assert est.n_iter_ == ref.iterations_used
        assert est.converged_
        assert est.fidelity(fock_density([0, 1], 9)) > 0.999

    def test_get_params_and_clone(self):
        est = QuadratureTomography(n_max=5, tol=1e-3)
        assert est.get_params()["n_max"] == 5
        twin = clone(est)
        assert twin.get_params() == est.get_params()
        assert not hasattr(twin, "rho_")

    def test_unfitted_use_raises(self):
        with pytest.raises(NotFittedError):
            QuadratureTomography().score_samples(np.zeros((1, 2)))

    def test_score_prefers_the_source_state(self, fock_one_data):
        X, w = _as_xy(fock_one_data)
        good = QuadratureTomography(n_max=8, tol=1e-6, max_iter=3000).fit(X, sample_weight=w)
        ket = coherent_state(1.5, 9)
        other = exact_dataset(np.outer(ket, ket.conj()), uniform_angles(12), np.linspace(-6, 6, 81))
        bad = QuadratureTomography(n_max=8, tol=1e-6, max_iter=3000).fit(*_as_xy(other)[:1],
                                                                         sample_weight=other.weight)
        assert good.score(X, sample_weight=w) > bad.score(X, sample_weight=w)

    def test_wigner_of_fock_one_is_negative_at_origin(self, fock_one_data):
        X, w = _as_xy(fock_one_data)
        est = QuadratureTomography(n_max=8, tol=1e-6, max_iter=3000).fit(X, sample_weight=w)
        grid = est.wigner(np.array([0.0]))
        assert grid.values[0, 0] < -0.3

    def test_unweighted_rows_count_once(self):
        rng = np.random.default_rng(4)
        X = np.column_stack([rng.uniform(0, 2 * np.pi, 400), rng.normal(size=400)])
        a = QuadratureTomography(n_max=4, tol=1e-6).fit(X)
        b = QuadratureTomography(n_max=4, tol=1e-6).fit(X, sample_weight=np.ones(400))
        np.testing.assert_array_equal(a.rho_, b.rho_)

    @pytest.mark.parametrize("X", [np.zeros((3, 3)), np.zeros((0, 2)), np.array([[0.0, np.nan]])])
    def test_bad_input_is_rejected(self, X):
        with pytest.raises(ValueError):
            QuadratureTomography().fit(X)


class TestRichardsonLucyDeconvolver:
    def test_matches_functional_route(self):
        rng = np.random.default_rng(0)
        counts = rng.uniform(0, 10, size=(16, 24))
        psf = PsfModel()
        out = RichardsonLucyDeconvolver(psf=psf, iterations=3, filter_floor=0.5).fit().transform(counts)
        ref = richardson_lucy(ImageFrame(counts), psf, 3, 0.5).counts
        np.testing.assert_array_equal(out, ref)

    def test_accepts_frames(self):
        frame = ImageFrame(np.ones((8, 8)))
        out = RichardsonLucyDeconvolver().fit_transform(frame)
        assert out.shape == (8, 8)

    @pytest.mark.parametrize("kwargs", [{"iterations": -1}, {"iterations": 1.5}, {"filter_floor": -0.1}])
    def test_invalid_parameters(self, kwargs):
        with pytest.raises(ValueError):
            RichardsonLucyDeconvolver(**kwargs).fit()

    def test_unfitted_transform_raises(self):
        with pytest.raises(NotFittedError):
            RichardsonLucyDeconvolver().transform(np.ones((4, 4)))


class TestDampedSinusoidRegressor:
    PARAMS = dict(amplitude=1.3, frequency=7840.0, phase=0.4, decay=6.3e-4, offset=0.2)

    def test_recovers_parameters_from_shuffled_column(self):
        t = np.linspace(0, 1.5e-3, 120)
        y = damped_sinusoid(t, **self.PARAMS)
        perm = np.random.default_rng(1).permutation(t.size)
        reg = DampedSinusoidRegressor().fit(t[perm, None], y[perm])
        assert reg.params_["frequency"] == pytest.approx(7840.0, rel=1e-6)
        assert reg.params_["decay"] == pytest.approx(6.3e-4, rel=1e-6)
        assert reg.score(t[:, None], y) == pytest.approx(1.0, abs=1e-9)
        np.testing.assert_allclose(reg.predict(t), y, atol=1e-9)

    def test_rejects_non_positive_weights(self):
        t = np.linspace(0, 1e-3, 10)
        with pytest.raises(ValueError, match="positive"):
            DampedSinusoidRegressor().fit(t, np.sin(t), sample_weight=np.zeros(10))

    def test_rejects_multiple_columns(self):
        with pytest.raises(ValueError, match="single time column"):
            DampedSinusoidRegressor().fit(np.zeros((5, 2)), np.zeros(5))


class TestValidation:
    def test_random_density_passes(self):
        rho = random_density(5, seed=3)
        assert density_matrix_violations(rho) == []
        assert check_density_matrix(rho).dtype == complex

    @pytest.mark.parametrize("rho, message", [
        (np.array([[0.5, 0.1], [0.0, 0.5]]), "Hermitian"),
        (np.diag([0.5, 0.6]), "trace"),
        (np.diag([1.2, -0.2]), "PSD"),
        (np.array([[np.nan, 0], [0, 1]]), "non-finite"),
    ])
    def test_each_violation_is_named(self, rho, message):
        with pytest.raises(ValueError, match=message):
            check_density_matrix(rho)

    def test_shape_checks(self):
        with pytest.raises(ValueError, match="square"):
            check_density_matrix(np.ones(3))
        with pytest.raises(ValueError, match="mismatch"):
            check_same_dim(np.eye(2), np.eye(3))

    @pytest.mark.parametrize("w, message", [
        (np.ones(2), "one entry"),
        (np.array([1.0, -1.0, 1.0]), "non-negative"),
        (np.zeros(3), "sums to zero"),
    ])
    def test_weight_checks(self, w, message):
        with pytest.raises(ValueError, match=message):
            check_quadrature_array(np.zeros((3, 2)), w)

    @pytest.mark.parametrize("t, y, err, message", [
        ([0, 1], [1], None, "lengths"),
        ([1, 0], [1, 2], None, "increasing"),
        ([0, 1], [1, np.inf], None, "non-finite"),
        ([0, 1], [1, 2], [1, 0], "y_err"),
    ])
    def test_time_series_checks(self, t, y, err, message):
        with pytest.raises(ValueError, match=message):
            check_time_series(t, y, err)
