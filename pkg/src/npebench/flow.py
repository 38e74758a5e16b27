"""Conditional normalizing-flow baseline with affine coupling layers.

Each flow permutes the coordinates with a fixed shuffle, then rescales and
shifts the second half conditioned on the first half and the context.
Scales are soft-clamped so a deep stack stays numerically stable; the
log-determinant is the sum of clamped scales, giving an exact density in
both directions.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn

from .errors import ConfigError, NumericsError
from .nets import MLP, Amortizer, LossTracker, OptimizerState, adam_step, backprop, simulate_batch

log = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class FlowConfig:
    n_flows: int = 32
    alpha: float = 0.1
    width: int = 80
    n_hidden: int = 2
    clamp_kind: str = "tanh"
    permutation_seed: int = 7

    def __post_init__(self):
        if self.n_flows < 1 or self.alpha <= 0 or self.width < 1:
            raise ConfigError("invalid flow configuration")
        if self.clamp_kind not in ("tanh", "atan"):
            raise ConfigError(f"unknown clamp kind {self.clamp_kind!r}")


def soft_clamp(s: torch.Tensor, alpha: float, kind: str = "tanh") -> torch.Tensor:
    """Bound raw scales to (-alpha, alpha) while keeping unit slope at zero."""
    if kind == "tanh":
        return alpha * torch.tanh(s / alpha)
    return (2.0 * alpha / math.pi) * torch.atan(math.pi * s / (2.0 * alpha))


class CouplingFlow(nn.Module):
    """Stack of conditional affine couplings with fixed per-flow shuffles."""

    def __init__(self, theta_dim: int, context_dim: int,
                 cfg: FlowConfig = FlowConfig()):
        super().__init__()
        if theta_dim < 2:
            raise ConfigError("affine coupling needs at least 2 dimensions")
        self.theta_dim = theta_dim
        self.context_dim = context_dim
        self.cfg = cfg
        self.passive_dim = (theta_dim + 1) // 2
        self.active_dim = theta_dim // 2
        perm_rng = np.random.default_rng(cfg.permutation_seed)
        perms, inverses = [], []
        for _ in range(cfg.n_flows):
            p = perm_rng.permutation(theta_dim)
            perms.append(torch.as_tensor(p, dtype=torch.long))
            inverses.append(torch.as_tensor(np.argsort(p), dtype=torch.long))
        self.permutations = perms
        self.inverse_permutations = inverses
        self.conditioners = nn.ModuleList(
            MLP(self.passive_dim + context_dim, cfg.width, 2 * self.active_dim,
                n_hidden=cfg.n_hidden, zero_init_last=True)
            for _ in range(cfg.n_flows))

    def _scale_shift(self, idx: int, passive: torch.Tensor,
                     context: torch.Tensor | None):
        inp = passive if context is None else torch.cat([passive, context], dim=-1)
        try:
            raw = self.conditioners[idx](inp)
        except NumericsError as exc:
            raise NumericsError(f"flow {idx}: {exc}") from exc
        s, t = raw.chunk(2, dim=-1)
        return soft_clamp(s, self.cfg.alpha, self.cfg.clamp_kind), t

    def forward(self, z: torch.Tensor, context: torch.Tensor | None = None):
        """Sampling direction, base point to parameter; returns (theta, log_det)."""
        log_det = torch.zeros(z.shape[0], dtype=z.dtype)
        for idx in range(self.cfg.n_flows):
            z = z[:, self.permutations[idx]]
            passive, active = z[:, : self.passive_dim], z[:, self.passive_dim:]
            s, t = self._scale_shift(idx, passive, context)
            active = active * torch.exp(s) + t
            log_det = log_det + s.sum(dim=-1)
            z = torch.cat([passive, active], dim=-1)
        return z, log_det

    def inverse(self, theta: torch.Tensor, context: torch.Tensor | None = None):
        """Density direction, parameter to base point; returns (z, log_det)."""
        log_det = torch.zeros(theta.shape[0], dtype=theta.dtype)
        for idx in reversed(range(self.cfg.n_flows)):
            passive, active = theta[:, : self.passive_dim], theta[:, self.passive_dim:]
            s, t = self._scale_shift(idx, passive, context)
            active = (active - t) * torch.exp(-s)
            log_det = log_det - s.sum(dim=-1)
            theta = torch.cat([passive, active], dim=-1)[:, self.inverse_permutations[idx]]
        return theta, log_det

    def log_prob(self, theta: torch.Tensor, context: torch.Tensor | None = None):
        z, log_det = self.inverse(theta, context)
        base = -0.5 * (z * z + LOG_2PI).sum(dim=-1)
        return base + log_det

    def sample(self, count: int, context: torch.Tensor | None,
               gen: torch.Generator) -> torch.Tensor:
        dtype = next(self.parameters()).dtype
        z = torch.randn((count, self.theta_dim), generator=gen, dtype=dtype)
        ctx = None
        if context is not None:
            ctx = context.unsqueeze(0).expand(count, -1) if context.ndim == 1 else context
        theta, _ = self.forward(z, ctx)
        return theta

    def sample_batch(self, contexts: torch.Tensor | None, count: int,
                     gen: torch.Generator) -> torch.Tensor:
        """``count`` draws per context row; returns (B, count, P)."""
        n_ctx = 1 if contexts is None else contexts.shape[0]
        flat_ctx = None
        if contexts is not None:
            flat_ctx = contexts.repeat_interleave(count, dim=0)
        dtype = next(self.parameters()).dtype
        z = torch.randn((n_ctx * count, self.theta_dim), generator=gen, dtype=dtype)
        theta, _ = self.forward(z, flat_ctx)
        return theta.reshape(n_ctx, count, self.theta_dim)


def coupling_forward(model: CouplingFlow, z, summary=None):
    z = torch.as_tensor(z, dtype=next(model.parameters()).dtype)
    single = z.ndim == 1
    if single:
        z = z.unsqueeze(0)
        if summary is not None:
            summary = torch.as_tensor(summary, dtype=z.dtype).unsqueeze(0)
    theta, log_det = model.forward(z, summary)
    if single:
        return theta.squeeze(0), log_det.squeeze(0)
    return theta, log_det


def coupling_inverse(model: CouplingFlow, theta, summary=None):
    theta = torch.as_tensor(theta, dtype=next(model.parameters()).dtype)
    single = theta.ndim == 1
    if single:
        theta = theta.unsqueeze(0)
        if summary is not None:
            summary = torch.as_tensor(summary, dtype=theta.dtype).unsqueeze(0)
    z, log_det = model.inverse(theta, summary)
    if single:
        return z.squeeze(0), log_det.squeeze(0)
    return z, log_det


def flow_log_prob(model: CouplingFlow, theta, summary=None) -> torch.Tensor:
    theta = torch.as_tensor(theta, dtype=next(model.parameters()).dtype)
    single = theta.ndim == 1
    if single:
        theta = theta.unsqueeze(0)
        if summary is not None:
            summary = torch.as_tensor(summary, dtype=theta.dtype).unsqueeze(0)
    lp = model.log_prob(theta, summary)
    return lp.squeeze(0) if single else lp


def flow_train_step(model: Amortizer, problem, opt_state: OptimizerState,
                    batch_size: int, rng: np.random.Generator,
                    gen: torch.Generator, tracker: LossTracker | None = None,
                    lr: float | None = None) -> float:
    """One joint maximum-likelihood step for the flow decoder.

    Mirrors the diffusion training iteration with the negative log-density
    objective; gradients flow into the summary network as well.  Divergence
    shows up in the tracked loss rather than being masked.
    """
    thetas, xs, _ = simulate_batch(problem, batch_size, rng)
    theta = torch.as_tensor(thetas, dtype=torch.float32)
    x_proc = torch.as_tensor(xs, dtype=torch.float32)
    context = model.context(x_proc)
    loss = -model.decoder.log_prob(theta, context).mean()
    named = dict(model.named_parameters())
    grads, _ = backprop(loss, named)
    adam_step(opt_state, named, grads, lr=lr)
    value = float(loss.detach())
    if tracker is not None:
        tracker.update(value)
    return value
