"""Shared test fixtures: analytic denoisers and small model builders."""

import torch
import torch.nn as nn

from npebench.diffusion import EdmConfig, precondition_coeffs


class AnalyticDenoiser(nn.Module):
    """Denoiser whose posterior mean is given in closed form.

    Subclasses override ``mean``; the raw-network view is derived so the
    training-loss and sampling code paths treat it like a learned model.
    """

    def __init__(self, theta_dim: int, cfg: EdmConfig = EdmConfig()):
        super().__init__()
        self.theta_dim = theta_dim
        self.context_dim = 0
        self.cfg = cfg
        self._anchor = nn.Parameter(torch.zeros(1))

    def mean(self, theta_t: torch.Tensor, sigma: torch.Tensor) -> torch.Tensor:
        raise NotImplementedError

    def raw_forward(self, theta_t, sigma, context):
        c_skip, c_out, _, _ = precondition_coeffs(sigma, self.cfg.sigma_data)
        mu = self.mean(theta_t, sigma)
        return (mu - c_skip.unsqueeze(-1) * theta_t) / c_out.unsqueeze(-1)

    def denoise(self, theta_t, sigma, context=None):
        sigma = torch.as_tensor(sigma, dtype=theta_t.dtype)
        if sigma.ndim == 0:
            sigma = sigma.expand(theta_t.shape[0])
        return self.mean(theta_t, sigma)

    forward = denoise


class StandardNormalOracle(AnalyticDenoiser):
    """Optimal denoiser for theta0 ~ N(0, I): E[theta0 | theta_t] = theta_t/(1+sigma^2)."""

    def mean(self, theta_t, sigma):
        return theta_t / (1.0 + sigma * sigma).unsqueeze(-1)


class PointMassOracle(AnalyticDenoiser):
    """Optimal denoiser for a point-mass prior at ``value``."""

    def __init__(self, theta_dim: int, value: float, cfg: EdmConfig = EdmConfig()):
        super().__init__(theta_dim, cfg)
        self.value = value

    def mean(self, theta_t, sigma):
        return torch.full_like(theta_t, self.value)
