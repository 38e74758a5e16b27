"""Raw networks, gradients, optimizer and the joint training step.

The denoiser core is a time-conditioned MLP; dataset summaries come from a
permutation-invariant DeepSet (IID data) or a bidirectional LSTM
(sequential data).  Training takes joint gradient steps through both the
decoder and the summary network.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ConfigError, NumericsError, ShapeError

log = logging.getLogger(__name__)

EMBED_BASE = 1.0e4


def positional_embed(c_noise, dim: int) -> torch.Tensor:
    """Sin/cos embedding of the noise-level channel.

    Frequencies decay geometrically from 1 to 1/EMBED_BASE so the embedding
    is 1-Lipschitz in c_noise per pair; entries stay in [-1, 1].
    """
    if dim % 2 != 0:
        raise ConfigError(f"embedding dim must be even, got {dim}")
    half = dim // 2
    c = c_noise if isinstance(c_noise, torch.Tensor) else torch.as_tensor(
        c_noise, dtype=torch.get_default_dtype())
    if half == 1:
        freqs = torch.ones(1, dtype=c.dtype)
    else:
        j = torch.arange(half, dtype=c.dtype)
        freqs = EMBED_BASE ** (-j / (half - 1))
    angles = c.unsqueeze(-1) * freqs
    return torch.stack([angles.sin(), angles.cos()], dim=-1).flatten(-2)


class MLP(nn.Module):
    """Dense stack with a configurable activation and finite-value checks."""

    def __init__(self, in_dim: int, hidden: int, out_dim: int, n_hidden: int,
                 activation: str = "silu", zero_init_last: bool = False):
        super().__init__()
        dims = [in_dim] + [hidden] * n_hidden + [out_dim]
        self.layers = nn.ModuleList(
            nn.Linear(dims[i], dims[i + 1]) for i in range(len(dims) - 1))
        self.activation = activation
        if zero_init_last:
            nn.init.zeros_(self.layers[-1].weight)
            nn.init.zeros_(self.layers[-1].bias)

    def _act(self, x):
        if self.activation == "silu":
            return F.silu(x)
        if self.activation == "relu":
            return F.relu(x)
        if self.activation == "tanh":
            return torch.tanh(x)
        raise ConfigError(f"unknown activation {self.activation!r}")

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-1] != self.layers[0].in_features:
            raise ShapeError(
                f"expected input dim {self.layers[0].in_features}, got {x.shape[-1]}")
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if not torch.isfinite(x).all():
                raise NumericsError(f"non-finite activation after layer {i}")
            if i < len(self.layers) - 1:
                x = self._act(x)
        return x


def mlp_forward(net: MLP, x) -> torch.Tensor:
    return net(torch.as_tensor(x, dtype=next(net.parameters()).dtype))


class DeepSetSummary(nn.Module):
    """Permutation-invariant set summary with sum pooling.

    Rows are normalized by the per-set mean and (floored) standard
    deviation; the pooled per-row features are concatenated with
    learnably-scaled mean, standard deviation and set-size channels.
    """

    kind = "deepset"

    def __init__(self, data_dim: int, out_dim: int, width: int = 128,
                 eps: float = 1e-8):
        super().__init__()
        self.data_dim = data_dim
        self.out_dim = out_dim
        self.eps = eps
        self.row_net = MLP(data_dim, width, width, n_hidden=2)
        self.post_net = MLP(width + 2 * data_dim + 1, width, out_dim, n_hidden=2)
        self.mean_scale = nn.Parameter(torch.ones(data_dim))
        self.std_scale = nn.Parameter(torch.ones(data_dim))
        self.count_scale = nn.Parameter(torch.tensor(0.01))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.ndim == 2:
            return self.forward(x.unsqueeze(0)).squeeze(0)
        if x.shape[-1] != self.data_dim:
            raise ShapeError(f"expected {self.data_dim} data columns, got {x.shape[-1]}")
        n = x.shape[1]
        mean = x.mean(dim=1)
        std = x.std(dim=1, unbiased=False).clamp_min(self.eps)
        normed = (x - mean.unsqueeze(1)) / std.unsqueeze(1)
        pooled = self.row_net(normed).sum(dim=1)
        count = torch.full((x.shape[0], 1), float(n), dtype=x.dtype)
        features = torch.cat([pooled, mean * self.mean_scale,
                              std * self.std_scale, count * self.count_scale], dim=1)
        return self.post_net(features)


class BiLstmSummary(nn.Module):
    """Sequence summary: kernel-1 convolution lift, then a bidirectional LSTM.

    The final hidden states of the forward and backward passes are
    concatenated and projected to the summary dimension.
    """

    kind = "bilstm"

    def __init__(self, data_dim: int, out_dim: int, hidden: int = 64,
                 lift_dim: int = 64, num_layers: int = 1):
        super().__init__()
        self.data_dim = data_dim
        self.out_dim = out_dim
        self.lift = nn.Conv1d(data_dim, lift_dim, kernel_size=1)
        self.lstm = nn.LSTM(lift_dim, hidden, num_layers=num_layers,
                            batch_first=True, bidirectional=True)
        self.head = nn.Linear(2 * hidden, out_dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.ndim == 2:
            return self.forward(x.unsqueeze(0)).squeeze(0)
        if x.shape[-1] != self.data_dim:
            raise ShapeError(f"expected {self.data_dim} data columns, got {x.shape[-1]}")
        lifted = self.lift(x.transpose(1, 2)).transpose(1, 2)
        _, (h_n, _) = self.lstm(lifted)
        summary = torch.cat([h_n[-2], h_n[-1]], dim=1)
        return self.head(summary)


def deepset_summary(net: DeepSetSummary, x) -> torch.Tensor:
    return net(torch.as_tensor(x, dtype=next(net.parameters()).dtype))


def bilstm_summary(net: BiLstmSummary, x) -> torch.Tensor:
    return net(torch.as_tensor(x, dtype=next(net.parameters()).dtype))


def count_parameters(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())


def backprop(loss: torch.Tensor,
             named_params: Dict[str, torch.Tensor]) -> tuple[Dict[str, torch.Tensor], list[str]]:
    """Gradients of ``loss`` for every named parameter.

    Parameters with no path to the loss get a zero gradient and are
    reported in the returned diagnostic list instead of failing.
    """
    names = list(named_params)
    params = [named_params[k] for k in names]
    grads = torch.autograd.grad(loss, params, allow_unused=True)
    detached = [n for n, g in zip(names, grads) if g is None]
    out = {n: (torch.zeros_like(named_params[n]) if g is None else g)
           for n, g in zip(names, grads)}
    return out, detached


@dataclass
class OptimizerState:
    """Bias-corrected first/second moment accumulators (Adam).

    An optional exponential moving average of the parameters is kept for
    evaluation; its decay ramps up from zero so early iterates do not
    dominate.
    """

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    ema_decay: float = 0.0
    step: int = 0
    m: Dict[str, torch.Tensor] = field(default_factory=dict)
    v: Dict[str, torch.Tensor] = field(default_factory=dict)
    ema: Dict[str, torch.Tensor] = field(default_factory=dict)


def adam_step(state: OptimizerState, named_params: Dict[str, torch.Tensor],
              grads: Dict[str, torch.Tensor], lr: float | None = None) -> None:
    """One Adam update, in place.  NaN gradients abort the whole step."""
    bad = [n for n, g in grads.items() if not torch.isfinite(g).all()]
    if bad:
        raise NumericsError(f"non-finite gradient for {bad}; step aborted")
    state.step += 1
    lr = state.lr if lr is None else lr
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    with torch.no_grad():
        for name, p in named_params.items():
            g = grads[name]
            if name not in state.m:
                state.m[name] = torch.zeros_like(p)
                state.v[name] = torch.zeros_like(p)
            state.m[name].mul_(state.beta1).add_(g, alpha=1.0 - state.beta1)
            state.v[name].mul_(state.beta2).addcmul_(g, g, value=1.0 - state.beta2)
            m_hat = state.m[name] / bc1
            v_hat = state.v[name] / bc2
            p.add_(m_hat / (v_hat.sqrt() + state.eps), alpha=-lr)
        if state.ema_decay > 0.0:
            decay = min(state.ema_decay, (state.step + 1) / (state.step + 10))
            for name, p in named_params.items():
                if name not in state.ema:
                    state.ema[name] = p.detach().clone()
                else:
                    state.ema[name].mul_(decay).add_(p.detach(), alpha=1.0 - decay)


def swap_in_ema(state: OptimizerState,
                named_params: Dict[str, torch.Tensor]) -> Dict[str, torch.Tensor]:
    """Load averaged weights into the model, returning the live ones."""
    backup = {}
    with torch.no_grad():
        for name, p in named_params.items():
            backup[name] = p.detach().clone()
            if name in state.ema:
                p.copy_(state.ema[name])
    return backup


def restore_params(named_params: Dict[str, torch.Tensor],
                   backup: Dict[str, torch.Tensor]) -> None:
    with torch.no_grad():
        for name, p in named_params.items():
            p.copy_(backup[name])


class Amortizer(nn.Module):
    """Summary network plus decoder, trained jointly.

    With no summary network the preprocessed single observation conditions
    the decoder directly.
    """

    def __init__(self, decoder: nn.Module, summary: nn.Module | None = None):
        super().__init__()
        self.decoder = decoder
        self.summary = summary

    def context(self, x_proc: torch.Tensor) -> torch.Tensor:
        """Conditioning vector(s) for a batch of preprocessed datasets."""
        if self.summary is None:
            if x_proc.ndim == 3:
                if x_proc.shape[1] != 1:
                    raise ShapeError("no-summary path expects single-row datasets")
                return x_proc[:, 0, :]
            return x_proc.reshape(x_proc.shape[0], -1) if x_proc.ndim == 2 else x_proc
        return self.summary(x_proc)


def simulate_batch(problem, batch_size: int, rng: np.random.Generator,
                   n: int | None = None) -> tuple[np.ndarray, np.ndarray, int]:
    """A rectangular batch of preprocessed (theta, dataset) pairs.

    One dataset size is drawn per batch so datasets stack into a tensor;
    sizes still vary across batches.
    """
    from .sim import base as sim_base

    if n is None:
        n_min, n_max = problem.n_range
        n = int(rng.integers(n_min, n_max + 1))
    thetas, xs = [], []
    for _ in range(batch_size):
        theta_raw = sim_base.sample_prior(problem, rng)
        x_raw = sim_base.sample_dataset(problem, theta_raw, n, rng)
        theta_proc, x_proc = sim_base.preprocess(problem, theta_raw, x_raw)
        thetas.append(theta_proc)
        xs.append(x_proc)
    return np.stack(thetas), np.stack(xs), n


class LossTracker:
    """Running mean used for the instability warning."""

    def __init__(self, horizon: int = 100, blowup: float = 100.0):
        self.horizon = horizon
        self.blowup = blowup
        self.mean = None

    def update(self, value: float) -> None:
        if self.mean is not None and value > self.blowup * max(abs(self.mean), 1e-12):
            log.warning("loss %.4g exceeds 100x running average %.4g", value, self.mean)
        if self.mean is None:
            self.mean = value
        else:
            w = 1.0 / self.horizon
            self.mean = (1.0 - w) * self.mean + w * value


def train_step(model: Amortizer, problem, opt_state: OptimizerState,
               batch_size: int, rng: np.random.Generator,
               gen: torch.Generator, tracker: LossTracker | None = None,
               lr: float | None = None) -> float:
    """One joint training iteration for the diffusion decoder.

    Simulates a fresh batch, summarizes it, evaluates the denoising loss
    and applies one optimizer step to all parameters.
    """
    from .diffusion import diffusion_loss

    thetas, xs, _ = simulate_batch(problem, batch_size, rng)
    theta0 = torch.as_tensor(thetas, dtype=torch.float32)
    x_proc = torch.as_tensor(xs, dtype=torch.float32)
    context = model.context(x_proc)
    loss = diffusion_loss(model.decoder, theta0, context, gen)
    named = dict(model.named_parameters())
    grads, _ = backprop(loss, named)
    adam_step(opt_state, named, grads, lr=lr)
    value = float(loss.detach())
    if tracker is not None:
        tracker.update(value)
    return value
