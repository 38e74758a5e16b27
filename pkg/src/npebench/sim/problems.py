"""The registered benchmark generative processes.

Each problem declares its prior, likelihood and the transform to the
unconstrained parameter space the decoders operate in.  Hyperparameter
defaults are overridable through the run configuration.
"""

from __future__ import annotations

from typing import Any, Dict

import numpy as np
from scipy import stats
from scipy.special import expit, logit

from .base import Problem, register
from .conjugate import (DirichletPosterior, GammaPosterior,
                        NormalInvGammaPosterior, NormalInvWishartPosterior)
from .processes import fbm_sample_path, gk_transform, lv_integrate, var_sample_coefficients


@register
class SumOfCosines(Problem):
    """Two phase-like parameters observed through a sum of three cosines.

    The likelihood mean cos(pi(t1 - t2)) + cos(pi(2 t1 + t2)) +
    cos(pi(3 t1 - 4 t2)) makes the posterior multimodal and ridge-shaped.
    """

    name = "cosines"
    data_kind = "single"
    defaults = {"scale": 4.0}

    def theta_dim(self):
        return 2

    def data_dim(self):
        return 1

    def sample_prior(self, rng):
        return rng.uniform(-1.0, 1.0, size=2)

    def mean_fn(self, theta):
        t1, t2 = theta[..., 0] * np.pi, theta[..., 1] * np.pi
        return np.cos(t1 - t2) + np.cos(2 * t1 + t2) + np.cos(3 * t1 - 4 * t2)

    def sample_dataset(self, theta_raw, n, rng):
        mu = self.mean_fn(np.asarray(theta_raw))
        return (mu + rng.standard_normal(n))[:, None]

    def preprocess_data(self, x_raw):
        return np.asarray(x_raw, dtype=float) / self.hyperparams["scale"]

    def in_support(self, theta_raw):
        return bool(np.all(np.abs(theta_raw) < 1.0))


@register
class WitchHat(Problem):
    """Uniform brim plus a sharp Gaussian peak at the parameter.

    Rows are drawn from delta * U([0,1]^d) + (1-delta) * N(theta, sigma^2 I)
    with theta uniform on [0.1, 0.9]^d;  no preprocessing is applied.
    """

    name = "witch_hat"
    data_kind = "single"
    defaults = {"d": 5, "sigma": 0.02, "delta": 0.05}

    def theta_dim(self):
        return int(self.hyperparams["d"])

    def data_dim(self):
        return int(self.hyperparams["d"])

    def sample_prior(self, rng):
        d = int(self.hyperparams["d"])
        return rng.uniform(0.1, 0.9, size=d)

    def sample_dataset(self, theta_raw, n, rng):
        d = int(self.hyperparams["d"])
        sigma, delta = self.hyperparams["sigma"], self.hyperparams["delta"]
        gauss = theta_raw[None, :] + sigma * rng.standard_normal((n, d))
        unif = rng.uniform(0.0, 1.0, size=(n, d))
        from_brim = rng.random(n) < delta
        return np.where(from_brim[:, None], unif, gauss)

    def in_support(self, theta_raw):
        return bool(np.all((theta_raw >= 0.1) & (theta_raw <= 0.9)))


class _SimplexProblem(Problem):
    """Shared transform for simplex-valued parameters.

    The last component is dropped and the rest reported as differences to
    it; reconstruction uses theta_K = (1 - sum d_i) / K, theta_i = d_i + theta_K.
    """

    def simplex_dim(self) -> int:
        raise NotImplementedError

    def theta_dim(self):
        return self.simplex_dim() - 1

    def theta_dim_raw(self):
        return self.simplex_dim()

    def preprocess_theta(self, theta_raw):
        return theta_raw[:-1] - theta_raw[-1]

    def inverse_theta(self, theta_proc):
        k = self.simplex_dim()
        last = (1.0 - np.sum(theta_proc)) / k
        return np.append(theta_proc + last, last)

    def in_support(self, theta_raw):
        return bool(np.all(theta_raw > 0)
                    and abs(float(np.sum(theta_raw)) - 1.0) < 1e-8)


@register
class DirichletMultinomial(_SimplexProblem):
    """Multinomial counts with a Dirichlet prior on the class probabilities.

    The concentration vector is fixed per problem instance: drawn once from
    Gamma(5, scale=0.5) with a dedicated seed (overridable), so the
    conjugate posterior Dirichlet(alpha + counts) is exact.
    """

    name = "dirichlet_multinomial"
    data_kind = "single"
    defaults = {"K": 5, "n_multi": 300, "alpha": None, "alpha_seed": 20240214}

    def finalize_hyperparams(self, hp: Dict[str, Any]) -> Dict[str, Any]:
        if hp["alpha"] is None:
            gen = np.random.default_rng(int(hp["alpha_seed"]))
            hp["alpha"] = tuple(gen.gamma(5.0, 0.5, size=int(hp["K"])))
        else:
            hp["alpha"] = tuple(float(a) for a in hp["alpha"])
            hp["K"] = len(hp["alpha"])
        return hp

    def simplex_dim(self):
        return int(self.hyperparams["K"])

    def data_dim(self):
        return int(self.hyperparams["K"])

    def sample_prior(self, rng):
        return rng.dirichlet(np.asarray(self.hyperparams["alpha"]))

    def sample_dataset(self, theta_raw, n, rng):
        probs = np.clip(np.asarray(theta_raw, dtype=float), 0.0, None)
        probs = probs / probs.sum()
        return rng.multinomial(int(self.hyperparams["n_multi"]), probs,
                               size=n).astype(float)

    def preprocess_data(self, x_raw):
        return np.asarray(x_raw, dtype=float) / self.hyperparams["n_multi"]

    def conjugate_posterior(self, x_raw):
        counts = np.asarray(x_raw, dtype=float).sum(axis=0)
        return DirichletPosterior(np.asarray(self.hyperparams["alpha"]) + counts)


@register
class PoissonGamma(Problem):
    """Independent Poisson counts with per-coordinate Gamma(shape, rate) priors."""

    name = "poisson_gamma"
    data_kind = "single"
    defaults = {"shape": 2.0, "rate": 1.0, "dim": 10}

    def theta_dim(self):
        return int(self.hyperparams["dim"])

    def data_dim(self):
        return int(self.hyperparams["dim"])

    def sample_prior(self, rng):
        hp = self.hyperparams
        return rng.gamma(hp["shape"], 1.0 / hp["rate"], size=int(hp["dim"]))

    def sample_dataset(self, theta_raw, n, rng):
        return rng.poisson(theta_raw[None, :], size=(n, len(theta_raw))).astype(float)

    def preprocess_theta(self, theta_raw):
        return np.log(theta_raw)

    def inverse_theta(self, theta_proc):
        return np.exp(theta_proc)

    def preprocess_data(self, x_raw):
        return np.log(np.asarray(x_raw, dtype=float) + 1.0)

    def in_support(self, theta_raw):
        return bool(np.all(theta_raw > 0))

    def conjugate_posterior(self, x_raw):
        x = np.asarray(x_raw, dtype=float)
        hp = self.hyperparams
        shape = hp["shape"] + x.sum(axis=0)
        return GammaPosterior(shape, 1.0 / (hp["rate"] + x.shape[0]))


@register
class Socks(Problem):
    """Draws-until-first-matching-pair counts across several dryers.

    Each dryer holds a negative-binomial number of socks; a shared
    proportion of them come in pairs.  One observation is the vector of
    draw counts at which the first matched pair appeared, per dryer.
    """

    name = "socks"
    data_kind = "single"
    defaults = {"K": 10, "mu": 30.0, "sigma": 15.0,
                "alpha1": 30.0, "beta1": 4.0, "alpha2": 50.0, "beta2": 50.0,
                "mixing_coefficient": 0.75}

    def theta_dim(self):
        return int(self.hyperparams["K"]) + 1

    def data_dim(self):
        return int(self.hyperparams["K"])

    def sample_prior(self, rng):
        hp = self.hyperparams
        mu, var = hp["mu"], hp["sigma"] ** 2
        r = mu * mu / (var - mu)
        totals = rng.negative_binomial(r, mu / var, size=int(hp["K"]))
        if rng.random() < hp["mixing_coefficient"]:
            prop = rng.beta(hp["alpha1"], hp["beta1"])
        else:
            prop = rng.beta(hp["alpha2"], hp["beta2"])
        return np.append(totals.astype(float), prop)

    @staticmethod
    def _first_match(total: int, prop: float, rng) -> int:
        if total < 2:
            return total
        n_pairs = int(total * prop / 2.0)
        labels = np.concatenate([np.repeat(np.arange(n_pairs), 2),
                                 np.arange(n_pairs, total - n_pairs)])
        rng.shuffle(labels)
        seen = set()
        for i, lab in enumerate(labels):
            if lab in seen:
                return i + 1
            seen.add(lab)
        return total

    def sample_dataset(self, theta_raw, n, rng):
        k = int(self.hyperparams["K"])
        totals, prop = theta_raw[:k].astype(int), float(theta_raw[k])
        out = np.empty((n, k))
        for i in range(n):
            out[i] = [self._first_match(t, prop, rng) for t in totals]
        return out

    def preprocess_theta(self, theta_raw):
        k = int(self.hyperparams["K"])
        out = theta_raw.copy()
        out[:k] = out[:k] / self.hyperparams["mu"]
        return out

    def inverse_theta(self, theta_proc):
        k = int(self.hyperparams["K"])
        out = theta_proc.copy()
        out[:k] = out[:k] * self.hyperparams["mu"]
        return out

    def preprocess_data(self, x_raw):
        return np.asarray(x_raw, dtype=float) / self.hyperparams["mu"]

    def in_support(self, theta_raw):
        k = int(self.hyperparams["K"])
        return bool(np.all(theta_raw[:k] >= 0) and 0.0 < theta_raw[k] < 1.0)


@register
class SpeciesSampling(Problem):
    """Multinomial species counts observed through imperfect detection.

    Surveys have Poisson totals; detection of the first species is a
    mixture of an easy and a hard regime, which weakens identification of
    the true proportions.
    """

    name = "species_sampling"
    data_kind = "single"
    defaults = {"n_species": 3, "lambda_total": 50.0, "alpha_dirichlet": 2.0,
                "p_mixture": 0.7, "p_easy": 0.9, "p_hard": 0.3,
                "p_species2": 0.6, "p_species3": 0.7}

    def theta_dim(self):
        return int(self.hyperparams["n_species"]) - 1

    def theta_dim_raw(self):
        return int(self.hyperparams["n_species"])

    def data_dim(self):
        return int(self.hyperparams["n_species"])

    def sample_prior(self, rng):
        hp = self.hyperparams
        alpha = np.full(int(hp["n_species"]), float(hp["alpha_dirichlet"]))
        return rng.dirichlet(alpha)

    def sample_dataset(self, theta_raw, n, rng):
        hp = self.hyperparams
        probs = np.clip(np.asarray(theta_raw, dtype=float), 0.0, None)
        probs = probs / probs.sum()
        out = np.empty((n, int(hp["n_species"])))
        for i in range(n):
            total = rng.poisson(hp["lambda_total"])
            true_counts = rng.multinomial(total, probs)
            p1 = hp["p_easy"] if rng.random() < hp["p_mixture"] else hp["p_hard"]
            det = np.array([p1, hp["p_species2"], hp["p_species3"]])
            out[i] = rng.binomial(true_counts, det[: len(true_counts)])
        return out

    def preprocess_theta(self, theta_raw):
        return theta_raw[:-1] - theta_raw[-1]

    def inverse_theta(self, theta_proc):
        k = int(self.hyperparams["n_species"])
        last = (1.0 - np.sum(theta_proc)) / k
        return np.append(theta_proc + last, last)

    def preprocess_data(self, x_raw):
        return np.asarray(x_raw, dtype=float) / self.hyperparams["lambda_total"]

    def in_support(self, theta_raw):
        return bool(np.all(theta_raw > 0)
                    and abs(float(np.sum(theta_raw)) - 1.0) < 1e-8)


@register
class NormalGamma(Problem):
    """IID normal data with a normal-inverse-gamma prior on (mu, sigma).

    sigma^2 ~ InvGamma(d/2, scale=2/eta) and mu | sigma ~ N(0, sigma/sqrt(kappa)).
    """

    name = "normal_gamma"
    data_kind = "iid"
    defaults = {"kappa": 1.0, "d": 8.0, "eta": 8.0}

    def theta_dim(self):
        return 2

    def data_dim(self):
        return 1

    def _prior_params(self):
        hp = self.hyperparams
        return 0.0, hp["kappa"], hp["d"] / 2.0, 2.0 / hp["eta"]

    def sample_prior(self, rng):
        m0, kappa, a0, b0 = self._prior_params()
        sigma2 = b0 / rng.gamma(a0)  # InvGamma(a0, scale=b0)
        mu = rng.normal(m0, np.sqrt(sigma2 / kappa))
        return np.array([mu, np.sqrt(sigma2)])

    def sample_dataset(self, theta_raw, n, rng):
        mu, sigma = theta_raw
        return rng.normal(mu, sigma, size=(n, 1))

    def preprocess_theta(self, theta_raw):
        return np.array([theta_raw[0], np.log(theta_raw[1])])

    def inverse_theta(self, theta_proc):
        return np.array([theta_proc[0], np.exp(theta_proc[1])])

    def in_support(self, theta_raw):
        return bool(np.isfinite(theta_raw[0]) and theta_raw[1] > 0)

    def conjugate_posterior(self, x_raw):
        x = np.asarray(x_raw, dtype=float).ravel()
        m0, kappa0, a0, b0 = self._prior_params()
        n = len(x)
        if n == 0:
            return NormalInvGammaPosterior(m0, kappa0, a0, b0)
        xbar = x.mean()
        kappa_n = kappa0 + n
        m_n = (kappa0 * m0 + n * xbar) / kappa_n
        a_n = a0 + n / 2.0
        b_n = (b0 + 0.5 * np.sum((x - xbar) ** 2)
               + kappa0 * n * (xbar - m0) ** 2 / (2.0 * kappa_n))
        return NormalInvGammaPosterior(m_n, kappa_n, a_n, b_n)


def pack_mean_cov(mu: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    """Raw layout for mean/covariance parameters: mu then tril(Sigma)."""
    il = np.tril_indices(len(mu))
    return np.concatenate([mu, sigma[il]])


def unpack_mean_cov(theta_raw: np.ndarray, d: int) -> tuple[np.ndarray, np.ndarray]:
    mu = theta_raw[:d]
    sigma = np.zeros((d, d))
    sigma[np.tril_indices(d)] = theta_raw[d:]
    sigma = sigma + np.tril(sigma, -1).T
    return mu, sigma


@register
class NormalWishart(Problem):
    """Multivariate normal data with a normal-inverse-Wishart prior.

    Covariance matrices travel as Cholesky factors with log-diagonal, so
    the preprocessed space is unconstrained.
    """

    name = "normal_wishart"
    data_kind = "iid"
    defaults = {"x_dim": 4, "kappa0": 1.0, "nu_extra": 2.0}

    def _d(self):
        return int(self.hyperparams["x_dim"])

    def theta_dim(self):
        d = self._d()
        return d + d * (d + 1) // 2

    def data_dim(self):
        return self._d()

    def sample_prior(self, rng):
        d = self._d()
        nu0 = d + self.hyperparams["nu_extra"]
        sigma = stats.invwishart(df=nu0, scale=np.eye(d)).rvs(random_state=rng)
        sigma = np.atleast_2d(sigma)
        mu = rng.multivariate_normal(np.zeros(d), sigma / self.hyperparams["kappa0"])
        return pack_mean_cov(mu, sigma)

    def sample_dataset(self, theta_raw, n, rng):
        mu, sigma = unpack_mean_cov(theta_raw, self._d())
        return rng.multivariate_normal(mu, sigma, size=n)

    def preprocess_theta(self, theta_raw):
        d = self._d()
        mu, sigma = unpack_mean_cov(theta_raw, d)
        chol = np.linalg.cholesky(sigma)
        entries = chol[np.tril_indices(d)]
        diag_pos = np.cumsum(np.arange(1, d + 1)) - 1
        entries[diag_pos] = np.log(entries[diag_pos])
        return np.concatenate([mu, entries])

    def inverse_theta(self, theta_proc):
        d = self._d()
        mu = theta_proc[:d]
        entries = theta_proc[d:].copy()
        diag_pos = np.cumsum(np.arange(1, d + 1)) - 1
        entries[diag_pos] = np.exp(entries[diag_pos])
        chol = np.zeros((d, d))
        chol[np.tril_indices(d)] = entries
        sigma = chol @ chol.T
        return pack_mean_cov(mu, sigma)

    def in_support(self, theta_raw):
        _, sigma = unpack_mean_cov(theta_raw, self._d())
        try:
            np.linalg.cholesky(sigma)
        except np.linalg.LinAlgError:
            return False
        return True

    def conjugate_posterior(self, x_raw):
        x = np.atleast_2d(np.asarray(x_raw, dtype=float))
        d = self._d()
        kappa0, nu0 = self.hyperparams["kappa0"], d + self.hyperparams["nu_extra"]
        mu0, psi0 = np.zeros(d), np.eye(d)
        n = x.shape[0]
        xbar = x.mean(axis=0)
        centered = x - xbar
        s = centered.T @ centered
        kappa_n = kappa0 + n
        mu_n = (kappa0 * mu0 + n * xbar) / kappa_n
        psi_n = psi0 + s + (kappa0 * n / kappa_n) * np.outer(xbar - mu0, xbar - mu0)
        return NormalInvWishartPosterior(mu_n, kappa_n, nu0 + n, psi_n)


@register
class GAndK(Problem):
    """Equicorrelated normals pushed through the g-and-k quantile transform.

    theta = (a, b, g, k) controls location, scale, skewness and kurtosis;
    the latent correlation gives the margins upper-tail dependence.
    """

    name = "g_and_k"
    data_kind = "iid"
    defaults = {"a_mean": 0.0, "a_std": 1.0, "b_shape": 5.0, "b_scale": 0.2,
                "g_mean": 0.0, "g_std": 1.0, "k_shape": 7.0, "k_scale": 1.0 / 7.0,
                "c": 0.8, "dim": 5, "rho": 0.5,
                "scale_odds_order": 5.0, "scale_even_order": 2.0, "scale_x": 10.0}

    def theta_dim(self):
        return 4

    def data_dim(self):
        return int(self.hyperparams["dim"])

    def sample_prior(self, rng):
        hp = self.hyperparams
        return np.array([
            rng.normal(hp["a_mean"], hp["a_std"]),
            rng.gamma(hp["b_shape"], hp["b_scale"]),
            rng.normal(hp["g_mean"], hp["g_std"]),
            rng.gamma(hp["k_shape"], hp["k_scale"]),
        ])

    def sample_dataset(self, theta_raw, n, rng):
        hp = self.hyperparams
        a, b, g, k = theta_raw
        d, rho = int(hp["dim"]), hp["rho"]
        z = rng.standard_normal((n, d))
        if d > 1 and rho != 0.0:
            shared = rng.standard_normal((n, 1))
            z = np.sqrt(1.0 - rho) * z + np.sqrt(rho) * shared
        return gk_transform(z, a, b, g, k, hp["c"])

    def preprocess_theta(self, theta_raw):
        hp = self.hyperparams
        a, b, g, k = theta_raw
        return np.array([a / hp["scale_odds_order"],
                         np.log(b) / hp["scale_even_order"],
                         g / hp["scale_odds_order"],
                         np.log(k) / hp["scale_even_order"]])

    def inverse_theta(self, theta_proc):
        hp = self.hyperparams
        return np.array([theta_proc[0] * hp["scale_odds_order"],
                         np.exp(theta_proc[1] * hp["scale_even_order"]),
                         theta_proc[2] * hp["scale_odds_order"],
                         np.exp(theta_proc[3] * hp["scale_even_order"])])

    def preprocess_data(self, x_raw):
        return np.tanh(np.asarray(x_raw, dtype=float) / self.hyperparams["scale_x"])

    def in_support(self, theta_raw):
        return bool(theta_raw[1] > 0 and theta_raw[3] > 0)


@register
class LotkaVolterra(Problem):
    """Predator-prey ODE observed with correlated Gaussian noise.

    Noise is added to the integrated trajectory only; the dynamics stay
    deterministic.  The grid uses fixed spacing dt so varying lengths vary
    the observation horizon.
    """

    name = "lotka_volterra"
    data_kind = "sequential"
    defaults = {"x0_prey": 30.0, "x0_predator": 1.0, "dt": 0.1,
                "sigma_shape": 5.0, "sigma_scale": 0.2,
                "rho_min": -0.1, "rho_max": 0.1}

    def theta_dim(self):
        return 7

    def data_dim(self):
        return 2

    def sample_prior(self, rng):
        hp = self.hyperparams
        return np.array([
            rng.uniform(0.5, 1.0),     # prey growth
            rng.uniform(0.01, 0.1),    # predation
            rng.uniform(0.01, 0.5),    # predator decay
            rng.uniform(0.005, 0.05),  # predator growth
            rng.gamma(hp["sigma_shape"], hp["sigma_scale"]),
            rng.gamma(hp["sigma_shape"], hp["sigma_scale"]),
            rng.uniform(hp["rho_min"], hp["rho_max"]),
        ])

    def sample_dataset(self, theta_raw, n, rng):
        hp = self.hyperparams
        alpha, beta, gamma, delta, s1, s2, rho = theta_raw
        t = hp["dt"] * np.arange(n + 1)
        traj = lv_integrate(alpha, beta, gamma, delta,
                            (hp["x0_prey"], hp["x0_predator"]), t)[1:]
        cov = np.array([[s1 * s1, rho * s1 * s2], [rho * s1 * s2, s2 * s2]])
        noise = rng.multivariate_normal(np.zeros(2), cov, size=n)
        return traj + noise

    def in_support(self, theta_raw):
        a, b, g, d, s1, s2, rho = theta_raw
        return bool(0.5 <= a <= 1.0 and 0.01 <= b <= 0.1 and 0.01 <= g <= 0.5
                    and 0.005 <= d <= 0.05 and s1 > 0 and s2 > 0
                    and self.hyperparams["rho_min"] <= rho <= self.hyperparams["rho_max"])


@register
class FractionalBrownianMotion(Problem):
    """Fractional Brownian motion with a sinusoidal drift.

    theta = (hurst, tau^2, amplitude, phase, period); the path is
    sqrt(tau^2) * B_H(t) + amplitude * cos(2 pi t / period + phase).
    The period prior defaults are invented (none are published) and
    configurable.
    """

    name = "fbm"
    data_kind = "sequential"
    defaults = {"hurst_alpha": 1.0, "hurst_beta": 1.0,
                "tau2_alpha": 20.0, "tau2_beta": 1.0,
                "amplitude_alpha": 3.0, "amplitude_beta": 0.2,
                "phase_min": 0.0, "phase_max": 2.0 * np.pi,
                "period_min": 4.0, "period_max": 32.0, "dt": 0.25}

    def theta_dim(self):
        return 5

    def data_dim(self):
        return 1

    def sample_prior(self, rng):
        hp = self.hyperparams
        return np.array([
            rng.beta(hp["hurst_alpha"], hp["hurst_beta"]),
            rng.gamma(hp["tau2_alpha"], hp["tau2_beta"]),
            rng.gamma(hp["amplitude_alpha"], hp["amplitude_beta"]),
            rng.uniform(hp["phase_min"], hp["phase_max"]),
            rng.uniform(hp["period_min"], hp["period_max"]),
        ])

    def sample_dataset(self, theta_raw, n, rng):
        hp = self.hyperparams
        hurst, tau2, amp, phase, period = theta_raw
        t = hp["dt"] * np.arange(1, n + 1)
        path = np.sqrt(tau2) * fbm_sample_path(hurst, t, rng)
        drift = amp * np.cos(2.0 * np.pi * t / period + phase)
        return (path + drift)[:, None]

    def preprocess_theta(self, theta_raw):
        hurst, tau2, amp, phase, period = theta_raw
        return np.array([logit(hurst), np.log(tau2), np.log(amp),
                         np.tan((phase - np.pi) / 2.0), period])

    def inverse_theta(self, theta_proc):
        return np.array([expit(theta_proc[0]), np.exp(theta_proc[1]),
                         np.exp(theta_proc[2]),
                         np.pi + 2.0 * np.arctan(theta_proc[3]),
                         theta_proc[4]])

    def in_support(self, theta_raw):
        hp = self.hyperparams
        hurst, tau2, amp, phase, period = theta_raw
        return bool(0.0 < hurst < 1.0 and tau2 > 0 and amp > 0
                    and hp["phase_min"] <= phase <= hp["phase_max"]
                    and hp["period_min"] <= period <= hp["period_max"])


@register
class StochasticVolatility(Problem):
    """AR(1) log-volatility driving heteroskedastic observations.

    The latent process starts from its stationary distribution.
    """

    name = "stochastic_volatility"
    data_kind = "sequential"
    defaults = {"mu_mean": -1.0, "mu_std": 0.5,
                "phi_min": 0.9, "phi_max": 0.999,
                "sigma_eta_min": 0.1, "sigma_eta_max": 0.3}

    def theta_dim(self):
        return 3

    def data_dim(self):
        return 1

    def sample_prior(self, rng):
        hp = self.hyperparams
        return np.array([
            rng.normal(hp["mu_mean"], hp["mu_std"]),
            rng.uniform(hp["phi_min"], hp["phi_max"]),
            rng.uniform(hp["sigma_eta_min"], hp["sigma_eta_max"]),
        ])

    def sample_dataset(self, theta_raw, n, rng):
        mu, phi, sigma_eta = theta_raw
        h = np.empty(n)
        h[0] = rng.normal(mu, sigma_eta / np.sqrt(1.0 - phi * phi))
        innov = rng.standard_normal(n)
        for t in range(1, n):
            h[t] = mu + phi * (h[t - 1] - mu) + sigma_eta * innov[t]
        return (np.exp(h / 2.0) * rng.standard_normal(n))[:, None]

    def in_support(self, theta_raw):
        hp = self.hyperparams
        mu, phi, sigma_eta = theta_raw
        return bool(np.isfinite(mu) and hp["phi_min"] <= phi <= hp["phi_max"]
                    and hp["sigma_eta_min"] <= sigma_eta <= hp["sigma_eta_max"])


@register
class MarkovSwitching(Problem):
    """Two-regime factor model with Markov switching loadings.

    The latent factor is a random walk; the regime chain starts from its
    stationary distribution.  Numeric prior defaults are invented (only the
    families are published) and configurable.
    """

    name = "markov_switching"
    data_kind = "sequential"
    defaults = {"beta1_mean": 1.0, "beta2_mean": -1.0, "beta_tau": 0.5,
                "sigma_y_shape": 2.0, "sigma_y_scale": 0.5,
                "sigma_x_shape": 2.0, "sigma_x_scale": 0.5,
                "p_a": 20.0, "p_b": 2.0, "scale_factor": 1.0}

    def theta_dim(self):
        return 6

    def data_dim(self):
        return 1

    def sample_prior(self, rng):
        hp = self.hyperparams
        sigma_y = rng.gamma(hp["sigma_y_shape"], hp["sigma_y_scale"])
        sigma_x = rng.gamma(hp["sigma_x_shape"], hp["sigma_x_scale"])
        beta1 = rng.normal(hp["beta1_mean"], hp["beta_tau"] * sigma_y)
        beta2 = rng.normal(hp["beta2_mean"], hp["beta_tau"] * sigma_y)
        p1 = rng.beta(hp["p_a"], hp["p_b"])
        p2 = rng.beta(hp["p_a"], hp["p_b"])
        return np.array([beta1, beta2, sigma_y, sigma_x, p1, p2])

    def sample_dataset(self, theta_raw, n, rng):
        beta1, beta2, sigma_y, sigma_x, p1, p2 = theta_raw
        betas = np.array([beta1, beta2])
        stay = np.array([p1, p2])
        # stationary probability of regime 0
        pi0 = (1.0 - p2) / max((1.0 - p1) + (1.0 - p2), 1e-12)
        regime = 0 if rng.random() < pi0 else 1
        x = 0.0
        y = np.empty(n)
        for t in range(n):
            if rng.random() > stay[regime]:
                regime = 1 - regime
            x = x + sigma_x * rng.standard_normal()
            y[t] = betas[regime] * x + sigma_y * rng.standard_normal()
        return y[:, None]

    def preprocess_theta(self, theta_raw):
        sf = self.hyperparams["scale_factor"]
        beta1, beta2, sigma_y, sigma_x, p1, p2 = theta_raw
        return np.array([beta1, beta2, np.log(sigma_y), np.log(sigma_x),
                         logit(p1) / sf, logit(p2) / sf])

    def inverse_theta(self, theta_proc):
        sf = self.hyperparams["scale_factor"]
        return np.array([theta_proc[0], theta_proc[1],
                         np.exp(theta_proc[2]), np.exp(theta_proc[3]),
                         expit(theta_proc[4] * sf), expit(theta_proc[5] * sf)])

    def in_support(self, theta_raw):
        beta1, beta2, sigma_y, sigma_x, p1, p2 = theta_raw
        return bool(sigma_y > 0 and sigma_x > 0
                    and 0.0 < p1 < 1.0 and 0.0 < p2 < 1.0)


@register
class VarP(Problem):
    """Stationary VAR(p) with a lag-decaying coefficient prior.

    Raw layout: lag matrices row-major, then the diagonal noise variances.
    """

    name = "var_p"
    data_kind = "sequential"
    defaults = {"dims": 3, "lags": 2, "tau": 0.45, "theta_shrink": 0.25,
                "sigma_shape": 2.0, "sigma_scale": 1.0 / 6.0,
                "scale_sigma": 3.0, "scale_x": 100.0, "burn_in": 50}

    def _shape(self):
        return int(self.hyperparams["dims"]), int(self.hyperparams["lags"])

    def theta_dim(self):
        d, p = self._shape()
        return p * d * d + d

    def data_dim(self):
        return int(self.hyperparams["dims"])

    def sample_prior(self, rng):
        hp = self.hyperparams
        d, p = self._shape()
        gammas, sigma = var_sample_coefficients(
            hp["tau"], hp["theta_shrink"], d, p, rng,
            sigma_shape=hp["sigma_shape"], sigma_scale=hp["sigma_scale"])
        return np.concatenate([gammas.ravel(), np.diag(sigma)])

    def _unpack(self, theta_raw):
        d, p = self._shape()
        gammas = theta_raw[: p * d * d].reshape(p, d, d)
        return gammas, theta_raw[p * d * d:]

    def sample_dataset(self, theta_raw, n, rng):
        hp = self.hyperparams
        d, p = self._shape()
        gammas, sigma_diag = self._unpack(theta_raw)
        scale = np.sqrt(sigma_diag)
        burn = int(hp["burn_in"])
        hist = np.zeros((p, d))
        out = np.empty((n, d))
        for t in range(burn + n):
            x = sum(gammas[h] @ hist[h] for h in range(p))
            x = x + scale * rng.standard_normal(d)
            hist = np.roll(hist, 1, axis=0)
            hist[0] = x
            if t >= burn:
                out[t - burn] = x
        return out

    def preprocess_theta(self, theta_raw):
        hp = self.hyperparams
        gammas, sigma_diag = self._unpack(theta_raw)
        return np.concatenate([gammas.ravel(),
                               np.log(sigma_diag) / hp["scale_sigma"]])

    def inverse_theta(self, theta_proc):
        hp = self.hyperparams
        d, p = self._shape()
        out = theta_proc.copy()
        out[p * d * d:] = np.exp(out[p * d * d:] * hp["scale_sigma"])
        return out

    def preprocess_data(self, x_raw):
        return np.asarray(x_raw, dtype=float) / self.hyperparams["scale_x"]

    def in_support(self, theta_raw):
        from .processes import companion_matrix, spectral_radius

        gammas, sigma_diag = self._unpack(theta_raw)
        return bool(np.all(sigma_diag > 0)
                    and spectral_radius(companion_matrix(gammas)) < 1.0)


@register
class GaussianToy(Problem):
    """Standard-normal parameters with an uninformative constant observation.

    The posterior equals the prior for every dataset, which makes the
    optimal denoiser and calibration behaviour analytically known; used by
    the diagnostic and acceptance runs.
    """

    name = "gaussian_toy"
    data_kind = "single"
    defaults = {"dim": 1}

    def theta_dim(self):
        return int(self.hyperparams["dim"])

    def data_dim(self):
        return 1

    def sample_prior(self, rng):
        return rng.standard_normal(int(self.hyperparams["dim"]))

    def sample_dataset(self, theta_raw, n, rng):
        return np.zeros((n, 1))
