"""
Unit tests for priors, likelihoods and posteriors of the calibration modes.
"""

import numpy as np
import pytest
from scipy import stats

from app.exceptions import ConfigurationError, ModeMismatchError, PriorError
from app.models.calibration import (
    CalibrationMode,
    DiscrepancyHypers,
    GammaPrior,
    NoiseModel,
    PriorSet,
    SurrogateHypers,
)
from app.models.data import DesignBox, ExperimentalDataset, SyntheticDataset
from app.models.physics import CellProfile, reference_parameters
from app.services.calibration import (
    CalibrationData,
    CalibrationPosterior,
    ParameterLayout,
    default_priors,
    log_posterior,
    log_prior,
    loglik_bcd,
    loglik_bce,
    loglik_bced,
    loglik_bi,
    mode_requirements,
    physical_theta,
    surrogate_predict,
)
from app.services.gp import Standardizer, kernel_joint, se_matrix
from tests.conftest import toy_eta

S_HYPERS = SurrogateHypers(beta_x=0.3, beta_theta=2.0, lambda_x=1.5)
D_HYPERS = DiscrepancyHypers(beta_d=0.25, lambda_d=0.4)
THETA = np.array([1.2, 0.8, 1.5, 0.9])


def make_data(m: int = 3, standardized: bool = False, seed: int = 0) -> CalibrationData:
    rng = np.random.default_rng(seed)
    xi = np.sort(rng.uniform(0, 1, m))
    z = toy_eta(np.ones(4), xi) + rng.normal(0, 0.01, m)
    std = Standardizer.from_data(z) if standardized else Standardizer.identity()
    return CalibrationData(xi=xi, z=z, standardizer=std)


def make_synth(n: int = 3, seed: int = 1) -> SyntheticDataset:
    rng = np.random.default_rng(seed)
    x = rng.uniform(0, 1, n)
    theta = rng.uniform(0.1, 6.0, (n, 4))
    y = np.array([toy_eta(t, np.array([xx]))[0] for xx, t in zip(x, theta)])
    return SyntheticDataset(x=x, theta=theta, y=y)


def dense_surrogate_cov(data, synth, theta, sigma, d_hypers=None) -> np.ndarray:
    """Stacked covariance built entry by entry from the pairwise kernel."""
    points = [(np.array([x]), theta) for x in data.xi] + [
        (np.array([x]), t) for x, t in zip(synth.x, synth.theta)
    ]
    n, m = len(points), len(data)
    K = np.array([[kernel_joint(p, q, S_HYPERS) for q in points] for p in points])
    K[np.diag_indices(n)] += np.r_[
        np.full(m, sigma**2), np.full(n - m, 1e-8 * S_HYPERS.lambda_x)
    ]
    if d_hypers is not None:
        for i in range(m):
            for j in range(m):
                dx = data.xi[i] - data.xi[j]
                K[i, j] += d_hypers.lambda_d * np.exp(-(dx**2) / (2 * d_hypers.beta_d**2))
    return K


class TestNoiseModel:
    def test_sample_moments(self):
        """Errors are centred with the requested spread."""
        draws = NoiseModel(sigma=0.05).sample(np.random.default_rng(4), 20000)
        assert abs(draws.mean()) < 0.002
        assert draws.std() == pytest.approx(0.05, rel=0.03)

    def test_seeded(self):
        """Same generator seed gives the same errors."""
        model = NoiseModel(sigma=2.0)
        a = model.sample(np.random.default_rng(1), 5)
        b = model.sample(np.random.default_rng(1), 5)
        np.testing.assert_array_equal(a, b)

    def test_rejects_nonpositive_sigma(self):
        """sigma must be positive."""
        with pytest.raises(ValueError):
            NoiseModel(sigma=0.0)


class TestParameterLayout:
    """Test cases for per-mode packing."""

    @pytest.mark.parametrize(
        "mode,names",
        [
            (CalibrationMode.BI, ("tau_n", "chi", "b", "j", "sigma")),
            (
                CalibrationMode.BCE,
                ("tau_n", "chi", "b", "j", "beta_x", "beta_theta", "lambda_x", "sigma"),
            ),
            (CalibrationMode.BCD, ("tau_n", "chi", "b", "j", "beta_d", "lambda_d", "sigma")),
            (
                CalibrationMode.BCED,
                (
                    "tau_n", "chi", "b", "j", "beta_x", "beta_theta", "lambda_x",
                    "beta_d", "lambda_d", "sigma",
                ),
            ),
        ],
    )
    def test_packing_order(self, mode, names):
        """Test the parameter order of each mode."""
        assert ParameterLayout(mode).names == names

    def test_pack_unpack(self):
        """Test unpack inverts pack and scales are stored as logs."""
        layout = ParameterLayout(CalibrationMode.BCD)
        scales = {"beta_d": 0.2, "lambda_d": 0.5, "sigma": 0.05}
        vector = layout.pack(THETA, scales)
        assert vector[-1] == pytest.approx(np.log(0.05))
        theta, back = layout.unpack(vector)
        np.testing.assert_allclose(theta, THETA)
        assert back == pytest.approx(scales)

    def test_unpack_wrong_size(self):
        """Test vectors of the wrong length are rejected."""
        with pytest.raises(ValueError) as exc_info:
            ParameterLayout(CalibrationMode.BI).unpack(np.zeros(3))
        assert "expects 5" in str(exc_info.value)

    def test_to_natural_physical(self):
        """Test reporting units: physical theta and exponentiated scales."""
        layout = ParameterLayout(CalibrationMode.BI)
        vector = layout.pack(np.array([2.0, 1.0, 1.0, 1.0]), {"sigma": 0.1})
        natural = layout.to_natural(vector[None, :], reference_parameters())
        assert natural[0, 0] == pytest.approx(reference_parameters().tau_n / 2)
        assert natural[0, -1] == pytest.approx(0.1)

    def test_physical_theta(self):
        """Test multipliers map to physical values."""
        ref = reference_parameters()
        values = physical_theta(np.ones(4), ref)
        np.testing.assert_allclose(values, ref.as_array())

    def test_mode_requirements(self):
        """Test surrogate modes need synthetic data, the others the model."""
        assert mode_requirements(CalibrationMode.BCE) == {"synthetic"}
        assert mode_requirements(CalibrationMode.BCD) == {"model"}


class TestDefaultPriors:
    """Test cases for empirical priors."""

    def test_bi_has_only_sigma(self):
        """Test BI priors hold only the noise scale."""
        priors = default_priors(make_data(5), None, CalibrationMode.BI)
        assert list(priors.scales) == ["sigma"]
        assert priors.theta_box == DesignBox()

    def test_lengthscale_mean(self):
        """Test Gamma(5, 5/d) has mean d, the mean pairwise distance."""
        data = make_data(5)
        priors = default_priors(data, None, CalibrationMode.BCD)
        diffs = np.abs(data.xi[:, None] - data.xi[None, :])
        d_bar = diffs[np.triu_indices(5, k=1)].mean()
        assert priors.scales["beta_d"].shape == 5.0
        assert priors.scales["beta_d"].mean == pytest.approx(d_bar)

    def test_sigma_moment_matching(self):
        """Test the noise prior has shape 100 and mean 0.1 mean|z|."""
        data = make_data(5)
        priors = default_priors(data, None, CalibrationMode.BI)
        sigma = priors.scales["sigma"]
        y_bar = np.mean(np.abs(data.z))
        assert sigma.shape == pytest.approx(100.0)
        assert sigma.mean == pytest.approx(0.1 * y_bar)
        assert sigma.sd == pytest.approx(0.01 * y_bar)

    def test_sigma_prior_agrees_across_modes(self):
        """Test BI and BCD give the same noise prior mean in c_sat units."""
        xi = np.linspace(0.0, 1.0, 30)
        z = 0.3 + 0.05 * np.sin(2 * np.pi * xi)
        raw = CalibrationData(xi=xi, z=z, standardizer=Standardizer.identity())
        std = Standardizer.from_data(z)
        scaled = CalibrationData(xi=xi, z=z, standardizer=std)
        bi = default_priors(raw, None, CalibrationMode.BI).scales["sigma"]
        bcd = default_priors(scaled, None, CalibrationMode.BCD).scales["sigma"]
        assert bi.mean == pytest.approx(0.03, rel=1e-3)
        assert std.inverse_scale(bcd.mean) == pytest.approx(bi.mean)
        assert bcd.shape == pytest.approx(bi.shape)

    def test_beta_theta_from_synthetic(self):
        """Test the parameter lengthscale uses synthetic parameter distances."""
        synth = make_synth(6)
        priors = default_priors(make_data(5, True), synth, CalibrationMode.BCE)
        diffs = np.linalg.norm(synth.theta[:, None] - synth.theta[None, :], axis=-1)
        d_theta = diffs[np.triu_indices(6, k=1)].mean()
        assert priors.scales["beta_theta"].mean == pytest.approx(d_theta)
        assert set(priors.scales) == {"beta_x", "beta_theta", "lambda_x", "sigma"}

    def test_too_few_points(self):
        """Test a single observation cannot form distances."""
        with pytest.raises(PriorError) as exc_info:
            default_priors(make_data(1), None, CalibrationMode.BI)
        assert "pairwise" in str(exc_info.value)

    def test_surrogate_mode_needs_synthetic(self):
        """Test surrogate modes reject a missing synthetic dataset."""
        with pytest.raises(PriorError):
            default_priors(make_data(5, True), None, CalibrationMode.BCED)


class TestLogPrior:
    """Test cases for the prior density."""

    def setup_method(self):
        self.priors = default_priors(make_data(5), None, CalibrationMode.BCD)

    def test_sum_of_components(self):
        """Test the centre value equals the sum of component densities."""
        box = self.priors.theta_box
        scales = self.priors.scales
        params = np.r_[box.center, [scales[n].mean for n in ("beta_d", "lambda_d", "sigma")]]
        expected = -np.sum(np.log(box.hi - box.lo)) + sum(
            stats.gamma.logpdf(scales[n].mean, a=scales[n].shape, scale=1 / scales[n].rate)
            for n in ("beta_d", "lambda_d", "sigma")
        )
        assert log_prior(params, self.priors) == pytest.approx(expected, rel=1e-12)

    def test_outside_box(self):
        """Test theta outside the box has zero prior mass."""
        params = np.array([7.0, 1.0, 1.0, 1.0, 0.2, 0.5, 0.01])
        assert log_prior(params, self.priors) == -np.inf

    def test_nonpositive_scale(self):
        """Test nonpositive scales have zero prior mass."""
        params = np.array([1.0, 1.0, 1.0, 1.0, 0.2, 0.5, 0.0])
        assert log_prior(params, self.priors) == -np.inf

    def test_gamma_mode_is_maximum(self):
        """Test the Gamma log density peaks at its mode."""
        prior = GammaPrior(shape=5.0, rate=10.0)
        grid = np.linspace(0.01, 2.0, 2000)
        values = [prior.logpdf(v) for v in grid]
        assert grid[int(np.argmax(values))] == pytest.approx(prior.mode, abs=1e-3)


class TestLikelihoodBI:
    """Test cases for the direct likelihood."""

    def test_exact_fit(self):
        """Test residual-free data gives -M/2 log(2 pi sigma^2)."""
        xi = np.linspace(0, 1, 4)
        data = CalibrationData(xi, toy_eta(THETA, xi), Standardizer.identity())
        sigma = 0.05
        expected = -2.0 * np.log(2 * np.pi * sigma**2)
        assert loglik_bi(THETA, sigma, data, toy_eta) == pytest.approx(expected)

    def test_doubling_sigma(self):
        """Test the closed-form change when sigma doubles."""
        data = make_data(6)
        sigma = 0.02
        rss = float(np.sum((data.z - toy_eta(THETA, data.xi)) ** 2))
        change = loglik_bi(THETA, 2 * sigma, data, toy_eta) - loglik_bi(
            THETA, sigma, data, toy_eta
        )
        assert change == pytest.approx(-6 * np.log(2) + 0.375 * rss / sigma**2)

    def test_scalar_oracle(self):
        """Test M = 3 against a product of normal densities."""
        data = make_data(3)
        sigma = 0.03
        expected = np.sum(stats.norm.logpdf(data.z, toy_eta(THETA, data.xi), sigma))
        assert loglik_bi(THETA, sigma, data, toy_eta) == pytest.approx(expected, abs=1e-12)

    def test_model_failure_rejected(self):
        """Test a failing forward model yields -inf."""

        def broken(theta, xi):
            return np.full(xi.shape, np.nan)

        assert loglik_bi(THETA, 0.1, make_data(3), broken) == -np.inf

    def test_nonpositive_sigma(self):
        """Test sigma must be positive."""
        with pytest.raises(ValueError):
            loglik_bi(THETA, 0.0, make_data(3), toy_eta)


class TestLikelihoodBCD:
    """Test cases for the likelihood with discrepancy."""

    def test_dense_oracle(self):
        """Test M = 3 against a dense multivariate normal."""
        data = make_data(3)
        sigma = 0.05
        cov = se_matrix(data.xi, data.xi, D_HYPERS.lambda_d, D_HYPERS.beta_d)
        cov += sigma**2 * np.eye(3)
        expected = stats.multivariate_normal.logpdf(
            data.z, mean=toy_eta(THETA, data.xi), cov=cov
        )
        value = loglik_bcd(THETA, D_HYPERS, sigma, data, toy_eta)
        assert value == pytest.approx(expected, abs=1e-10)

    def test_vanishing_discrepancy(self):
        """Test lambda_d -> 0 recovers the direct likelihood."""
        data = make_data(5)
        tiny = DiscrepancyHypers(beta_d=0.25, lambda_d=1e-12 * np.var(data.z))
        a = loglik_bcd(THETA, tiny, 0.05, data, toy_eta)
        b = loglik_bi(THETA, 0.05, data, toy_eta)
        assert a == pytest.approx(b, abs=1e-6)

    def test_permutation(self):
        """Test reordering observations leaves the value unchanged."""
        data = make_data(5)
        order = np.array([3, 0, 4, 1, 2])
        shuffled = CalibrationData(data.xi[order], data.z[order], data.standardizer)
        a = loglik_bcd(THETA, D_HYPERS, 0.05, data, toy_eta)
        b = loglik_bcd(THETA, D_HYPERS, 0.05, shuffled, toy_eta)
        assert a == pytest.approx(b, abs=1e-10)

    def test_discrepancy_never_hurts_at_best_hypers(self):
        """Test the best BCD evidence is at least the BI evidence on a misfit."""
        xi = np.linspace(0, 1, 8)
        z = toy_eta(THETA, xi) + 0.05 * np.sin(3 * np.pi * xi)
        data = CalibrationData(xi, z, Standardizer.identity())
        sigma = 0.01
        best = max(
            loglik_bcd(THETA, DiscrepancyHypers(beta_d=b, lambda_d=lam), sigma, data, toy_eta)
            for b in (0.05, 0.1, 0.2, 0.4)
            for lam in (1e-12, 1e-4, 1e-3, 1e-2)
        )
        assert best >= loglik_bi(THETA, sigma, data, toy_eta) - 1e-6


class TestLikelihoodSurrogate:
    """Test cases for the surrogate likelihoods."""

    def test_bce_dense_oracle(self):
        """Test 2 experimental + 3 synthetic points against a dense normal."""
        data = make_data(2, standardized=True)
        synth = make_synth(3)
        sigma = 0.2
        K = dense_surrogate_cov(data, synth, THETA, sigma)
        values = np.r_[data.standardizer.forward(data.z), data.standardizer.forward(synth.y)]
        expected = stats.multivariate_normal.logpdf(values, mean=np.zeros(5), cov=K)
        value = loglik_bce(THETA, S_HYPERS, sigma, data, synth)
        assert value == pytest.approx(expected, abs=1e-10)

    def test_bced_dense_oracle(self):
        """Test the discrepancy enters the experimental block only."""
        data = make_data(2, standardized=True)
        synth = make_synth(3)
        sigma = 0.2
        K = dense_surrogate_cov(data, synth, THETA, sigma, D_HYPERS)
        values = np.r_[data.standardizer.forward(data.z), data.standardizer.forward(synth.y)]
        expected = stats.multivariate_normal.logpdf(values, mean=np.zeros(5), cov=K)
        value = loglik_bced(THETA, S_HYPERS, D_HYPERS, sigma, data, synth)
        assert value == pytest.approx(expected, abs=1e-10)

    def test_prior_only_degenerate(self):
        """Test no synthetic data and vanishing lambda_x gives iid normals."""
        data = make_data(4, standardized=True)
        tiny = SurrogateHypers(beta_x=0.3, beta_theta=2.0, lambda_x=1e-14)
        sigma = 0.5
        expected = np.sum(stats.norm.logpdf(data.standardized_z, 0.0, sigma))
        value = loglik_bce(THETA, tiny, sigma, data, SyntheticDataset.empty())
        assert value == pytest.approx(expected, abs=1e-6)

    def test_synthetic_permutation(self):
        """Test reordering synthetic records leaves the value unchanged."""
        data = make_data(3, standardized=True)
        synth = make_synth(6)
        order = np.array([5, 2, 0, 4, 1, 3])
        shuffled = SyntheticDataset(synth.x[order], synth.theta[order], synth.y[order])
        a = loglik_bce(THETA, S_HYPERS, 0.2, data, synth)
        b = loglik_bce(THETA, S_HYPERS, 0.2, data, shuffled)
        assert a == pytest.approx(b, abs=1e-10)

    def test_bced_nests_bce(self):
        """Test lambda_d -> 0 recovers the surrogate-only likelihood."""
        data = make_data(3, standardized=True)
        synth = make_synth(4)
        tiny = DiscrepancyHypers(beta_d=0.25, lambda_d=1e-12)
        a = loglik_bced(THETA, S_HYPERS, tiny, 0.2, data, synth)
        b = loglik_bce(THETA, S_HYPERS, 0.2, data, synth)
        assert a == pytest.approx(b, abs=1e-6)

    def test_surrogate_predict_interpolates(self):
        """Test the surrogate reproduces a synthetic record at its own theta."""
        xs = np.linspace(0, 1, 9)
        xi = np.array([0.2, 0.5, 0.9])
        z = toy_eta(THETA, xi)
        data = CalibrationData(xi, z, Standardizer.from_data(z))
        synth = SyntheticDataset(
            x=xs, theta=np.tile(THETA, (9, 1)), y=toy_eta(THETA, xs)
        )
        hypers = SurrogateHypers(beta_x=0.3, beta_theta=2.0, lambda_x=1.0)
        curve = surrogate_predict(THETA, hypers, 0.1, data, synth, xs[[2, 6]])
        np.testing.assert_allclose(curve.mean, toy_eta(THETA, xs[[2, 6]]), atol=1e-3)
        assert np.all(curve.sd >= 0.0)


class TestPosterior:
    """Test cases for the composed posterior."""

    def setup_method(self):
        self.data = make_data(5)
        self.priors = default_priors(self.data, None, CalibrationMode.BI)

    def test_composition(self):
        """Test posterior = prior + likelihood + log-scale Jacobian."""
        posterior = CalibrationPosterior(CalibrationMode.BI, self.data, self.priors, toy_eta)
        sigma = self.priors.scales["sigma"].mean
        vector = posterior.layout.pack(THETA, {"sigma": sigma})
        expected = (
            log_prior(np.r_[THETA, sigma], self.priors)
            + np.log(sigma)
            + loglik_bi(THETA, sigma, self.data, toy_eta)
        )
        assert posterior(vector) == pytest.approx(expected, rel=1e-12)

    def test_log_space_jacobian(self):
        """Test the log-sigma density is sigma times the sigma density."""
        posterior = CalibrationPosterior(CalibrationMode.BI, self.data, self.priors, toy_eta)
        mean = self.priors.scales["sigma"].mean
        for sigma in (0.8 * mean, mean, 1.2 * mean):
            vector = np.r_[THETA, np.log(sigma)]
            density = log_prior(np.r_[THETA, sigma], self.priors) + loglik_bi(
                THETA, sigma, self.data, toy_eta
            )
            assert posterior(vector) - density == pytest.approx(np.log(sigma))

    def test_out_of_box(self):
        """Test out-of-box theta is rejected regardless of likelihood."""
        vector = np.r_[[0.05, 1.0, 1.0, 1.0], np.log(0.01)]
        value = log_posterior(
            CalibrationMode.BI, vector, self.data, None, self.priors, toy_eta
        )
        assert value == -np.inf

    def test_deterministic(self):
        """Test repeated evaluation gives identical values."""
        vector = np.r_[THETA, np.log(0.01)]
        args = (CalibrationMode.BI, vector, self.data, None, self.priors, toy_eta)
        assert log_posterior(*args) == log_posterior(*args)

    def test_mode_mismatch(self):
        """Test priors of another mode are rejected."""
        with pytest.raises(ModeMismatchError):
            CalibrationPosterior(CalibrationMode.BCD, self.data, self.priors, toy_eta)

    def test_missing_model(self):
        """Test forward-model modes require a model."""
        with pytest.raises(ConfigurationError) as exc_info:
            CalibrationPosterior(CalibrationMode.BI, self.data, self.priors)
        assert "forward model" in str(exc_info.value)

    def test_missing_synthetic(self):
        """Test surrogate modes require synthetic data."""
        priors = PriorSet(mode=CalibrationMode.BCE, scales={})
        with pytest.raises(ConfigurationError):
            CalibrationPosterior(CalibrationMode.BCE, self.data, priors)


class TestCalibrationData:
    """Test cases for scaling experimental data."""

    def test_from_experiment(self, consts):
        """Test GP modes standardize while BI keeps raw values."""
        x = np.linspace(0, consts.L, 6)
        u = np.linspace(0.1, 0.6, 6) * consts.c_sat
        dataset = ExperimentalDataset(
            u0=CellProfile(x=x, u=u), observed=CellProfile(x=x, u=u)
        )
        bi = CalibrationData.from_experiment(dataset, consts, CalibrationMode.BI)
        bce = CalibrationData.from_experiment(dataset, consts, CalibrationMode.BCE)
        np.testing.assert_allclose(bi.xi, x / consts.L)
        np.testing.assert_allclose(bi.standardized_z, u / consts.c_sat)
        assert bce.standardizer.mean == pytest.approx(0.35)
        assert np.std(bce.standardized_z, ddof=1) == pytest.approx(1.0)
