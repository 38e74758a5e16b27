"""Closed-form posteriors for the conjugate benchmark problems.

These are textbook updates used as ground-truth oracles by the calibration
tests.  Each family can draw posterior samples in natural units and evaluate
marginal CDFs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from ..errors import DomainError


@dataclass(frozen=True)
class DirichletPosterior:
    """theta | counts ~ Dirichlet(alpha + counts)."""

    alpha: np.ndarray
    family = "dirichlet"

    def __post_init__(self):
        if np.any(self.alpha <= 0):
            raise DomainError("Dirichlet concentration must be positive")

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.dirichlet(self.alpha, size=size)

    def marginal_cdf(self, j: int, x) -> np.ndarray:
        a = self.alpha[j]
        b = self.alpha.sum() - a
        return stats.beta(a, b).cdf(x)


@dataclass(frozen=True)
class NormalInvGammaPosterior:
    """sigma^2 ~ InvGamma(a, b); mu | sigma^2 ~ N(m, sigma^2 / kappa).

    Samples are returned as (mu, sigma) pairs, matching the raw parameter
    layout of the normal-gamma problem.
    """

    m: float
    kappa: float
    a: float
    b: float
    family = "normal_inv_gamma"

    def __post_init__(self):
        if self.kappa <= 0 or self.a <= 0 or self.b <= 0:
            raise DomainError("normal-inverse-gamma parameters must be positive")

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        sigma2 = stats.invgamma(self.a, scale=self.b).rvs(size=size, random_state=rng)
        mu = rng.normal(self.m, np.sqrt(sigma2 / self.kappa))
        return np.column_stack([mu, np.sqrt(sigma2)])

    def marginal_cdf(self, j: int, x) -> np.ndarray:
        if j == 0:
            # mu marginal is Student-t with 2a dof
            scale = np.sqrt(self.b / (self.a * self.kappa))
            return stats.t(2 * self.a, loc=self.m, scale=scale).cdf(x)
        # sigma marginal via the inverse-gamma CDF of sigma^2
        x = np.asarray(x, dtype=float)
        return stats.invgamma(self.a, scale=self.b).cdf(np.square(np.maximum(x, 0.0)))


@dataclass(frozen=True)
class GammaPosterior:
    """Independent per-coordinate Gamma(shape_j, scale) posteriors."""

    shape: np.ndarray
    scale: float
    family = "gamma"

    def __post_init__(self):
        if np.any(self.shape <= 0) or self.scale <= 0:
            raise DomainError("Gamma parameters must be positive")

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.gamma(self.shape[None, :], self.scale, size=(size, len(self.shape)))

    def marginal_cdf(self, j: int, x) -> np.ndarray:
        return stats.gamma(self.shape[j], scale=self.scale).cdf(x)


@dataclass(frozen=True)
class NormalInvWishartPosterior:
    """Sigma ~ InvWishart(nu, psi); mu | Sigma ~ N(m, Sigma / kappa).

    Samples are raw parameter vectors: mu followed by the lower triangle
    of Sigma (diagonal included), matching the normal-Wishart problem.
    """

    m: np.ndarray
    kappa: float
    nu: float
    psi: np.ndarray
    family = "normal_inv_wishart"

    def __post_init__(self):
        d = len(self.m)
        if self.nu <= d - 1:
            raise DomainError("Wishart dof must exceed dim - 1")
        if self.kappa <= 0:
            raise DomainError("kappa must be positive")
        try:
            np.linalg.cholesky(self.psi)
        except np.linalg.LinAlgError:
            raise DomainError("Wishart scale matrix must be positive definite")

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        d = len(self.m)
        sigmas = stats.invwishart(df=self.nu, scale=self.psi).rvs(
            size=size, random_state=rng)
        sigmas = sigmas.reshape(size, d, d)
        chols = np.linalg.cholesky(sigmas / self.kappa)
        mus = self.m[None, :] + np.einsum(
            "bij,bj->bi", chols, rng.standard_normal((size, d)))
        il = np.tril_indices(d)
        return np.concatenate([mus, sigmas[:, il[0], il[1]]], axis=1)

    def marginal_cdf(self, j: int, x) -> np.ndarray:
        d = len(self.m)
        if j < d:
            # mu_j marginal is Student-t with nu - d + 1 dof
            dof = self.nu - d + 1
            scale = np.sqrt(self.psi[j, j] / (self.kappa * dof))
            return stats.t(dof, loc=self.m[j], scale=scale).cdf(x)
        il = np.tril_indices(d)
        r, c = il[0][j - d], il[1][j - d]
        if r == c:
            # Sigma_jj marginal is InvGamma((nu - d + 1)/2, psi_jj/2)
            a = (self.nu - d + 1) / 2.0
            return stats.invgamma(a, scale=self.psi[r, r] / 2.0).cdf(x)
        raise DomainError("no closed-form CDF for off-diagonal covariance entries")


ConjugatePosterior = (DirichletPosterior | NormalInvGammaPosterior
                      | GammaPosterior | NormalInvWishartPosterior)
