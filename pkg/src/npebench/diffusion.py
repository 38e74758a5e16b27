"""Conditional diffusion decoder with EDM parameterization.

Noise lives on a sigma scale with alpha(t) = 1, beta(t) = t.  The denoiser
wraps a raw MLP in skip/output/input/noise preconditioning; training draws
log-normal noise levels and minimizes a weighted mean-prediction loss whose
weight cancels the output scaling exactly.  Sampling integrates the
probability-flow ODE with a plain Euler scheme over a rho-warped
discretization with an appended terminal zero, so the final step returns
the denoised estimate itself.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn

from .errors import ConfigError, DomainError, SamplingDiverged, ShapeError
from .nets import MLP, positional_embed


@dataclass(frozen=True)
class EdmConfig:
    sigma_data: float = 0.5
    sigma_min: float = 0.002
    sigma_max: float = 80.0
    rho: float = 7.0
    n_steps: int = 18
    p_mean: float = -1.2
    p_std: float = 1.2
    # Use 1/sqrt(sigma^2 + sigma_data^2) for the input scaling (unit input
    # variance); the no-sqrt variant is kept for A/B comparison.
    sqrt_c_in: bool = True
    # Initialize the reverse ODE at N(0, sigma_max^2 I); the literal
    # unit-variance variant is kept behind this flag.
    scaled_init: bool = True

    def __post_init__(self):
        if not (0.0 < self.sigma_min < self.sigma_max):
            raise ConfigError("need 0 < sigma_min < sigma_max")
        if self.rho <= 0 or self.p_std <= 0:
            raise ConfigError("rho and p_std must be positive")
        if self.n_steps < 2:
            raise ConfigError("n_steps must be at least 2")


def sigma_schedule(cfg: EdmConfig) -> np.ndarray:
    """Decreasing noise levels sigma_0 .. sigma_{N-1} plus a terminal zero."""
    i = np.arange(cfg.n_steps, dtype=np.float64)
    inv_rho = 1.0 / cfg.rho
    sigmas = (cfg.sigma_max ** inv_rho
              + i / (cfg.n_steps - 1) * (cfg.sigma_min ** inv_rho - cfg.sigma_max ** inv_rho)
              ) ** cfg.rho
    return np.append(sigmas, 0.0)


def precondition_coeffs(sigma, sigma_data: float, sqrt_c_in: bool = True):
    """Skip, output, input and noise-channel scalings for one noise level.

    c_skip keeps the denoiser near the identity at small sigma; c_out and
    c_in normalize the residual target and the network input; c_noise is
    the log-scale channel fed to the embedding.
    """
    if not isinstance(sigma, torch.Tensor):
        sigma = torch.as_tensor(sigma, dtype=torch.get_default_dtype())
    if (sigma < 0).any():
        raise DomainError("sigma must be non-negative")
    sd2 = sigma_data * sigma_data
    denom = sigma * sigma + sd2
    c_skip = sd2 / denom
    c_out = sigma * sigma_data / denom.sqrt()
    c_in = denom.rsqrt() if sqrt_c_in else 1.0 / denom
    c_noise = 0.25 * torch.log(sigma)
    return c_skip, c_out, c_in, c_noise


def loss_weight(sigma, sigma_data: float):
    """lambda(sigma) = 1 / c_out(sigma)^2."""
    _, c_out, _, _ = precondition_coeffs(sigma, sigma_data)
    return 1.0 / (c_out * c_out)


class Denoiser(nn.Module):
    """Preconditioned mean predictor E[theta_0 | theta_t, context]."""

    def __init__(self, theta_dim: int, context_dim: int, cfg: EdmConfig,
                 width: int = 256, n_hidden: int = 4, embed_dim: int = 32):
        super().__init__()
        self.theta_dim = theta_dim
        self.context_dim = context_dim
        self.cfg = cfg
        self.embed_dim = embed_dim
        self.net = MLP(theta_dim + embed_dim + context_dim, width, theta_dim,
                       n_hidden=n_hidden, zero_init_last=True)

    def raw_forward(self, theta_t: torch.Tensor, sigma: torch.Tensor,
                    context: torch.Tensor | None) -> torch.Tensor:
        """The inner network F applied to preconditioned inputs."""
        _, _, c_in, c_noise = precondition_coeffs(
            sigma, self.cfg.sigma_data, self.cfg.sqrt_c_in)
        parts = [c_in.unsqueeze(-1) * theta_t,
                 positional_embed(c_noise, self.embed_dim).to(theta_t.dtype)]
        if self.context_dim:
            if context is None or context.shape[-1] != self.context_dim:
                got = None if context is None else context.shape[-1]
                raise ShapeError(f"expected context dim {self.context_dim}, got {got}")
            parts.append(context)
        return self.net(torch.cat(parts, dim=-1))

    def denoise(self, theta_t: torch.Tensor, sigma, context: torch.Tensor | None) -> torch.Tensor:
        sigma = torch.as_tensor(sigma, dtype=theta_t.dtype)
        if sigma.ndim == 0:
            sigma = sigma.expand(theta_t.shape[0])
        c_skip, c_out, _, _ = precondition_coeffs(
            sigma, self.cfg.sigma_data, self.cfg.sqrt_c_in)
        raw = self.raw_forward(theta_t, sigma, context)
        return c_skip.unsqueeze(-1) * theta_t + c_out.unsqueeze(-1) * raw

    forward = denoise


def denoise(model: Denoiser, theta_t, sigma, summary=None) -> torch.Tensor:
    theta_t = torch.as_tensor(theta_t, dtype=torch.get_default_dtype())
    single = theta_t.ndim == 1
    if single:
        theta_t = theta_t.unsqueeze(0)
        if summary is not None:
            summary = torch.as_tensor(summary, dtype=theta_t.dtype).unsqueeze(0)
    out = model.denoise(theta_t, sigma, summary)
    return out.squeeze(0) if single else out


def sample_training_sigma(cfg: EdmConfig, gen: torch.Generator,
                          shape=()) -> torch.Tensor:
    """Log-normal training noise level: log sigma ~ N(p_mean, p_std^2)."""
    z = torch.randn(shape, generator=gen)
    return torch.exp(cfg.p_mean + cfg.p_std * z)


def diffusion_loss(model: Denoiser, theta0: torch.Tensor,
                   context: torch.Tensor | None, gen: torch.Generator,
                   sigma: torch.Tensor | None = None,
                   noise: torch.Tensor | None = None) -> torch.Tensor:
    """Weighted denoising loss, differentiable through decoder and summary.

    Computed in the raw-network space, ||F - (theta0 - c_skip theta_t)/c_out||^2,
    which equals lambda(sigma) ||mu - theta0||^2 exactly but stays finite as
    sigma approaches zero.  ``sigma`` and ``noise`` can be frozen for
    deterministic evaluation.
    """
    if theta0.ndim != 2:
        raise ShapeError("theta0 must be a (batch, dim) tensor")
    b = theta0.shape[0]
    if sigma is None:
        sigma = sample_training_sigma(model.cfg, gen, (b,)).to(theta0.dtype)
    if noise is None:
        noise = sigma.unsqueeze(-1) * torch.randn(
            theta0.shape, generator=gen, dtype=theta0.dtype)
    theta_t = theta0 + noise
    c_skip, c_out, _, _ = precondition_coeffs(
        sigma, model.cfg.sigma_data, model.cfg.sqrt_c_in)
    raw = model.raw_forward(theta_t, sigma, context)
    target = (theta0 - c_skip.unsqueeze(-1) * theta_t) / c_out.unsqueeze(-1)
    return ((raw - target) ** 2).sum(dim=1).mean()


def euler_sample_batch(model: Denoiser, contexts: torch.Tensor | None,
                       count: int, gen: torch.Generator,
                       n_steps: int | None = None) -> torch.Tensor:
    """``count`` reverse-ODE draws per context row; returns (B, count, P)."""
    cfg = model.cfg if n_steps is None else dataclasses.replace(
        model.cfg, n_steps=n_steps)
    n_ctx = 1 if contexts is None else contexts.shape[0]
    flat_ctx = None
    if contexts is not None:
        flat_ctx = contexts.repeat_interleave(count, dim=0)
    sigmas = sigma_schedule(cfg)
    dtype = next(model.parameters()).dtype
    x = torch.randn((n_ctx * count, model.theta_dim), generator=gen, dtype=dtype)
    if cfg.scaled_init:
        x = x * cfg.sigma_max
    with torch.no_grad():
        for i in range(cfg.n_steps):
            s_cur, s_next = sigmas[i], sigmas[i + 1]
            denoised = model.denoise(x, float(s_cur), flat_ctx)
            x = x - (s_cur - s_next) / s_cur * (x - denoised)
            if not torch.isfinite(x).all():
                raise SamplingDiverged(f"non-finite sample at step {i}")
    return x.reshape(n_ctx, count, model.theta_dim)


def euler_sample(model: Denoiser, summary: torch.Tensor | None, count: int,
                 gen: torch.Generator, n_steps: int | None = None) -> torch.Tensor:
    """``count`` posterior draws for a single conditioning vector."""
    ctx = None
    if summary is not None:
        ctx = torch.as_tensor(summary, dtype=torch.get_default_dtype())
        if ctx.ndim == 1:
            ctx = ctx.unsqueeze(0)
        if ctx.shape[0] != 1:
            raise ShapeError("euler_sample takes one conditioning vector")
    return euler_sample_batch(model, ctx, count, gen, n_steps=n_steps)[0]
