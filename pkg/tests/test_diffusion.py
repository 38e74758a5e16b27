"""Noise schedule, preconditioning, denoiser, loss and ODE sampler."""

import numpy as np
import pytest
import torch
from scipy import stats

from npebench.diffusion import (Denoiser, EdmConfig, denoise, diffusion_loss,
                                euler_sample, euler_sample_batch, loss_weight,
                                precondition_coeffs, sample_training_sigma,
                                sigma_schedule)
from npebench.errors import ConfigError, DomainError, SamplingDiverged

from helpers import PointMassOracle, StandardNormalOracle


class TestSchedule:
    def test_endpoints_and_terminal_zero(self):
        s = sigma_schedule(EdmConfig())
        assert s[0] == pytest.approx(80.0, rel=1e-12)
        assert s[17] == pytest.approx(0.002, rel=1e-12)
        assert s[18] == 0.0
        assert len(s) == 19

    def test_strictly_decreasing(self):
        s = sigma_schedule(EdmConfig())
        assert np.all(np.diff(s) < 0)

    def test_interior_value(self):
        # direct evaluation of the warped interpolation at i=9, N=18, rho=7
        s = sigma_schedule(EdmConfig())
        assert s[9] == pytest.approx(1.9233398, rel=1e-6)

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            EdmConfig(sigma_min=1.0, sigma_max=0.5)
        with pytest.raises(ConfigError):
            EdmConfig(n_steps=1)


class TestPreconditioning:
    def test_weight_cancels_output_scale(self):
        sigma = torch.logspace(-3, 2, 100, dtype=torch.float64)
        _, c_out, _, _ = precondition_coeffs(sigma, 0.5)
        assert torch.max(torch.abs(loss_weight(sigma, 0.5) * c_out ** 2 - 1)) < 1e-12

    def test_skip_identity(self):
        sigma = torch.logspace(-3, 2, 100, dtype=torch.float64)
        c_skip, _, _, _ = precondition_coeffs(sigma, 0.5)
        assert torch.max(torch.abs(c_skip * (sigma ** 2 + 0.25) - 0.25)) < 1e-12

    def test_small_sigma_limits(self):
        c_skip, c_out, _, _ = precondition_coeffs(torch.tensor(1e-8), 0.5)
        assert c_skip == pytest.approx(1.0)
        assert c_out == pytest.approx(0.0, abs=1e-7)

    def test_at_data_scale(self):
        c_skip, c_out, c_in, c_noise = precondition_coeffs(torch.tensor(0.5), 0.5)
        assert c_skip == pytest.approx(0.5)
        assert c_out == pytest.approx(0.5 / np.sqrt(2.0))
        assert c_in == pytest.approx(1.0 / np.sqrt(0.5))

    def test_noise_channel_log(self):
        _, _, _, c_noise = precondition_coeffs(torch.tensor(1.0), 0.5)
        assert float(c_noise) == 0.0

    def test_negative_sigma_rejected(self):
        with pytest.raises(DomainError):
            precondition_coeffs(torch.tensor(-0.1), 0.5)

    def test_no_sqrt_variant(self):
        _, _, c_in, _ = precondition_coeffs(torch.tensor(0.5), 0.5, sqrt_c_in=False)
        assert c_in == pytest.approx(2.0)


class TestDenoiser:
    def test_zero_initialized_net_returns_skip_path(self):
        model = Denoiser(3, 0, EdmConfig(), width=16, n_hidden=2, embed_dim=8)
        theta_t = torch.randn(9, 3)
        out = model.denoise(theta_t, 0.8, None)
        c_skip, _, _, _ = precondition_coeffs(torch.tensor(0.8), 0.5)
        assert torch.allclose(out, c_skip * theta_t)

    def test_skip_path_linearity_with_zero_net(self):
        model = Denoiser(2, 0, EdmConfig(), width=8, n_hidden=2, embed_dim=4)
        theta_t = torch.randn(5, 2)
        d1 = model.denoise(theta_t, 0.5, None)
        d2 = model.denoise(2 * theta_t, 0.5, None)
        c_skip, _, _, _ = precondition_coeffs(torch.tensor(0.5), 0.5)
        assert torch.allclose(d2 - d1, c_skip * theta_t)

    def test_functional_wrapper_single_vector(self):
        model = Denoiser(2, 3, EdmConfig(), width=8, n_hidden=2, embed_dim=4)
        out = denoise(model, np.zeros(2), 1.0, np.ones(3))
        assert out.shape == (2,)

    def test_context_dim_checked(self):
        from npebench.errors import ShapeError

        model = Denoiser(2, 3, EdmConfig(), width=8, n_hidden=2, embed_dim=4)
        with pytest.raises(ShapeError):
            model.denoise(torch.zeros(4, 2), 1.0, torch.zeros(4, 5))


class TestTrainingSigma:
    def test_lognormal_stats(self, torch_gen):
        cfg = EdmConfig()
        draws = sample_training_sigma(cfg, torch_gen, (1_000_000,)).numpy()
        assert np.all(draws > 0)
        assert np.median(draws) == pytest.approx(np.exp(-1.2), rel=0.01)
        # one-sigma upper tail of the underlying normal
        frac = float(np.mean(draws > np.exp(-1.2 + 1.2)))
        assert frac == pytest.approx(stats.norm.sf(1.0), abs=0.005)


class TestLoss:
    def test_nonnegative(self, torch_gen):
        model = Denoiser(2, 0, EdmConfig(), width=8, n_hidden=2, embed_dim=4)
        for _ in range(10):
            loss = diffusion_loss(model, torch.randn(16, 2, generator=torch_gen),
                                  None, torch_gen)
            assert float(loss.detach()) >= 0.0

    def test_point_mass_oracle_zero_loss(self, torch_gen):
        oracle = PointMassOracle(3, value=1.7)
        theta0 = torch.full((64, 3), 1.7)
        loss = diffusion_loss(oracle, theta0, None, torch_gen)
        assert float(loss) == pytest.approx(0.0, abs=1e-10)

    def test_gaussian_toy_expected_loss(self, torch_gen):
        # E[lambda(sigma) ||mu* - theta0||^2] = lambda(sigma) P sigma^2/(1+sigma^2)
        oracle = StandardNormalOracle(3)
        theta0 = torch.randn(200_000, 3, generator=torch_gen)
        sigma = torch.ones(200_000)
        loss = diffusion_loss(oracle, theta0, None, torch_gen, sigma=sigma)
        lam = float(loss_weight(torch.tensor(1.0), 0.5))
        assert float(loss) == pytest.approx(lam * 3 * 0.5, rel=0.03)

    def test_differentiable_through_all_parameters(self, torch_gen):
        model = Denoiser(2, 0, EdmConfig(), width=8, n_hidden=2, embed_dim=4)
        loss = diffusion_loss(model, torch.randn(8, 2, generator=torch_gen),
                              None, torch_gen)
        loss.backward()
        grads = [p.grad for p in model.parameters()]
        assert all(g is not None for g in grads)


class TestEulerSampler:
    def test_point_mass_oracle_lands_exactly(self, torch_gen):
        oracle = PointMassOracle(2, value=-0.75)
        draws = euler_sample(oracle, None, 64, torch_gen)
        assert torch.all(draws == -0.75)

    def test_same_seed_bit_identical(self):
        oracle = StandardNormalOracle(1)
        outs = []
        for _ in range(2):
            g = torch.Generator()
            g.manual_seed(99)
            outs.append(euler_sample(oracle, None, 200, g))
        assert torch.equal(outs[0], outs[1])

    def test_gaussian_marginal_preserved_with_fine_schedule(self):
        # plain Euler needs a fine discretization; 18 steps leave a visible
        # variance deficit, so marginal checks run at 512 steps
        g = torch.Generator()
        g.manual_seed(3)
        oracle = StandardNormalOracle(1)
        draws = euler_sample(oracle, None, 10_000, g, n_steps=512).squeeze().numpy()
        se_mean = 1.0 / np.sqrt(len(draws))
        se_var = np.sqrt(2.0 / len(draws))
        assert abs(draws.mean()) < 3 * se_mean
        assert abs(draws.var() - 1.0) < 3 * se_var
        assert stats.kstest(draws, "norm").pvalue > 0.01

    def test_literal_unit_init_variant_collapses(self):
        # the unit-variance initialization shrinks through the ODE
        g = torch.Generator()
        g.manual_seed(4)
        oracle = StandardNormalOracle(1, EdmConfig(scaled_init=False))
        draws = euler_sample(oracle, None, 4000, g, n_steps=256).squeeze().numpy()
        assert draws.std() < 0.1

    def test_divergence_reports_step(self, torch_gen):
        class ExplodingOracle(StandardNormalOracle):
            def mean(self, theta_t, sigma):
                return theta_t * 1e30

        with pytest.raises(SamplingDiverged, match="step"):
            euler_sample(ExplodingOracle(1), None, 16, torch_gen)

    def test_batched_contexts_shape(self, torch_gen):
        model = Denoiser(2, 3, EdmConfig(n_steps=4), width=8, n_hidden=2,
                         embed_dim=4)
        ctx = torch.randn(5, 3)
        draws = euler_sample_batch(model, ctx, 7, torch_gen)
        assert draws.shape == (5, 7, 2)
