import numpy as np
import pytest
import scipy.stats

from regret_tune.lti import Dataset, TransferFunction, impulse_response, simulate
from regret_tune.sysid import (
    build_regressor,
    estimate_from_dict,
    estimate_to_dict,
    f_cdf,
    f_quantile,
    least_squares_fir,
    mahalanobis_sq,
    membership,
    read_dataset_csv,
    uncertainty_set,
    write_dataset_csv,
)

from .oracles import f_quantile_quadrature


def _simulated_fit(tf, N, n, noise_std, seed):
    u = np.random.default_rng(seed).standard_normal(N)
    data = simulate(tf, u, noise_std, seed=seed + 1)
    return least_squares_fir(data, n)


class TestRegressor:
    def test_zero_prewindowing(self):
        phi = build_regressor([1.0, 2.0, 3.0], 2)
        assert np.array_equal(phi, [[1, 0], [2, 1], [3, 2]])

    def test_single_sample(self):
        assert np.array_equal(build_regressor([5.0], 1), [[5.0]])

    def test_white_noise_full_rank(self):
        u = np.random.default_rng(0).standard_normal(500)
        phi = build_regressor(u, 20)
        assert np.linalg.matrix_rank(phi) == 20


class TestLeastSquares:
    def test_exact_fir_recovery(self):
        taps = np.array([0.8, -0.4, 0.2, 0.6])
        est = _simulated_fit(TransferFunction(taps), N=200, n=4, noise_std=0.0, seed=2)
        assert np.allclose(est.g_hat, taps, atol=1e-8)
        assert est.sigma_v_sq_hat <= 1e-16

    def test_pure_gain(self):
        u = np.random.default_rng(1).standard_normal(32)
        est = least_squares_fir(Dataset(u=u, y=2.0 * u), 1)
        assert est.g_hat[0] == pytest.approx(2.0, abs=1e-12)

    def test_noise_free_recovery_of_rational_plant(self, lowpass_plant):
        # with enough taps the fit reproduces the leading impulse response
        u = np.random.default_rng(4).standard_normal(500)
        data = simulate(lowpass_plant, u, 0.0, seed=0)
        est = least_squares_fir(data, 100)
        taps = impulse_response(lowpass_plant, 100).taps
        assert np.allclose(est.g_hat, taps, atol=1e-8)

    def test_noise_variance_estimate_band(self, lowpass_plant):
        # the estimator should land near the injected variance of 0.5
        vals = [
            _simulated_fit(lowpass_plant, N=1000, n=100, noise_std=np.sqrt(0.5),
                           seed=s).sigma_v_sq_hat
            for s in range(20)
        ]
        assert all(0.4 <= v <= 0.6 for v in vals)

    def test_insufficient_data(self):
        u = np.ones(5)
        with pytest.raises(ValueError, match="insufficient data"):
            least_squares_fir(Dataset(u=u, y=u), 4)

    def test_insufficient_excitation(self):
        u = np.zeros(50)
        y = np.random.default_rng(0).standard_normal(50)
        with pytest.raises(ValueError, match="insufficient excitation"):
            least_squares_fir(Dataset(u=u, y=y), 3)

    def test_residual_orthogonality(self, lowpass_plant):
        for seed in range(5):
            u = np.random.default_rng(seed).standard_normal(300)
            data = simulate(lowpass_plant, u, 0.3, seed=seed)
            est = least_squares_fir(data, 12)
            phi = build_regressor(data.u, 12)
            resid = data.y - phi @ est.g_hat
            assert np.linalg.norm(phi.T @ resid) <= 1e-8 * np.linalg.norm(data.y)

    def test_statistical_unbiasedness(self):
        taps = np.array([1.0, 0.5, -0.3])
        tf = TransferFunction(taps)
        errs = []
        ses = []
        for seed in range(200):
            est = _simulated_fit(tf, N=120, n=3, noise_std=0.4, seed=seed)
            errs.append(est.g_hat - taps)
            ses.append(np.sqrt(np.diag(est.sigma_hat)))
        mean_err = np.mean(errs, axis=0)
        mean_se = np.mean(ses, axis=0) / np.sqrt(200)
        assert np.linalg.norm(mean_err) <= 3.0 * np.linalg.norm(mean_se)

    def test_covariance_shrinks_with_data(self, lowpass_plant):
        # paired draws: the longer record extends the shorter one
        ratios = []
        for seed in range(20):
            t1 = _simulated_fit(lowpass_plant, 800, 10, 0.5, seed)
            t2 = _simulated_fit(lowpass_plant, 1600, 10, 0.5, seed)
            ratios.append(np.trace(t2.sigma_hat) / np.trace(t1.sigma_hat))
        assert all(0.4 <= r <= 0.6 for r in ratios)

    def test_covariance_symmetric_pd(self, lowpass_plant):
        est = _simulated_fit(lowpass_plant, 300, 25, 0.5, seed=9)
        assert np.max(np.abs(est.sigma_hat - est.sigma_hat.T)) <= 1e-12
        np.linalg.cholesky(est.sigma_hat)


class TestFQuantile:
    def test_symmetric_median_is_one(self):
        for d in (3, 10, 50):
            assert f_quantile(0.5, d, d) == pytest.approx(1.0, abs=1e-9)

    def test_against_density_quadrature(self):
        val = f_quantile(0.95, 1, 10)
        assert val == pytest.approx(4.9646, abs=1e-3)
        assert val == pytest.approx(f_quantile_quadrature(0.95, 1, 10), abs=1e-8)

    def test_against_scipy(self):
        for prob, d1, d2 in [(0.9, 3, 7), (0.99, 100, 900), (0.25, 2, 30)]:
            assert f_quantile(prob, d1, d2) == pytest.approx(
                scipy.stats.f.ppf(prob, d1, d2), rel=1e-8, abs=1e-9
            )

    def test_cdf_round_trip(self):
        v = f_quantile(0.99, 100, 900)
        assert f_cdf(v, 100, 900) == pytest.approx(0.99, abs=1e-8)

    def test_strictly_increasing(self):
        probs = np.linspace(0.05, 0.99, 15)
        vals = [f_quantile(p, 7, 45) for p in probs]
        assert all(b > a for a, b in zip(vals, vals[1:]))

    def test_rejects_bad_prob(self):
        with pytest.raises(ValueError):
            f_quantile(1.0, 3, 3)


class TestUncertaintySet:
    @pytest.fixture()
    def est(self, lowpass_plant):
        return _simulated_fit(lowpass_plant, N=400, n=12, noise_std=0.4, seed=21)

    def test_center_is_member(self, est):
        uset = uncertainty_set(est, 0.01)
        assert membership(uset, est.g_hat)
        assert mahalanobis_sq(uset, est.g_hat) == 0.0

    def test_radius_shrinks_as_alpha_grows(self, est):
        radii = [uncertainty_set(est, a).radius_sq for a in (0.01, 0.05, 0.2, 0.5)]
        assert all(b < a for a, b in zip(radii, radii[1:]))

    def test_scale_by_n_multiplies_radius(self, est):
        bare = uncertainty_set(est, 0.01)
        scaled = uncertainty_set(est, 0.01, scale_by_n=True)
        assert scaled.radius_sq == pytest.approx(est.n * bare.radius_sq, rel=1e-12)

    def test_boundary_crossing_along_eigenvector(self, est):
        uset = uncertainty_set(est, 0.05, scale_by_n=True)
        lams, vecs = np.linalg.eigh(est.sigma_hat)
        for j in (0, est.n - 1):
            t_star = np.sqrt(uset.radius_sq * lams[j])
            v = vecs[:, j]
            assert membership(uset, est.g_hat + 0.999 * t_star * v)
            assert not membership(uset, est.g_hat + 1.001 * t_star * v)

    def test_far_point_excluded(self, est):
        uset = uncertainty_set(est, 0.01, scale_by_n=True)
        direction = np.linalg.cholesky(est.sigma_hat) @ np.ones(est.n)
        g_far = est.g_hat + 10.0 * np.sqrt(uset.radius_sq / est.n) * direction
        assert not membership(uset, g_far)

    def test_dimension_mismatch(self, est):
        uset = uncertainty_set(est, 0.01)
        with pytest.raises(ValueError, match="dimension mismatch"):
            membership(uset, np.zeros(est.n + 1))

    def test_exact_fit_has_no_set(self):
        # zero residual variance leaves nothing to build an ellipsoid from
        u = np.random.default_rng(3).standard_normal(40)
        exact = least_squares_fir(Dataset(u=u, y=1.5 * u), 1)
        if exact.sigma_v_sq_hat == 0.0:
            with pytest.raises(ValueError, match="zero residual"):
                uncertainty_set(exact, 0.01)
        else:
            assert exact.sigma_v_sq_hat <= 1e-30

    def test_coverage_small_model(self, lowpass_plant):
        # exact-region coverage of a known FIR truth at the 90% level
        taps = impulse_response(lowpass_plant, 4).taps
        tf = TransferFunction(taps)
        hits = 0
        reps = 200
        for seed in range(reps):
            est = _simulated_fit(tf, N=60, n=4, noise_std=0.5, seed=seed)
            uset = uncertainty_set(est, 0.1, scale_by_n=True)
            hits += membership(uset, taps)
        assert hits / reps >= 0.84

    def test_serialization_round_trip(self, est, tmp_path):
        uset = uncertainty_set(est, 0.01, scale_by_n=True)
        doc = estimate_to_dict(est, uset)
        est2, uset2 = estimate_from_dict(doc)
        assert np.allclose(est2.g_hat, est.g_hat)
        assert np.allclose(est2.sigma_hat, est.sigma_hat, atol=1e-14)
        assert uset2.radius_sq == uset.radius_sq
        assert uset2.scale_by_n


class TestDatasetCsv:
    def test_round_trip(self, tmp_path):
        data = Dataset(u=np.array([1.0, -2.5]), y=np.array([0.125, 3.0]))
        path = tmp_path / "d.csv"
        write_dataset_csv(data, path)
        back = read_dataset_csv(path)
        assert np.array_equal(back.u, data.u)
        assert np.array_equal(back.y, data.y)

    def test_bad_header(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(ValueError, match="line 1"):
            read_dataset_csv(path)

    def test_bad_row_reports_line(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("u,y\n1.0,2.0\n3.0,oops\n")
        with pytest.raises(ValueError, match="line 3"):
            read_dataset_csv(path)
