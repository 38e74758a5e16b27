"""Stochastic-process and quantile-function primitives used by the simulators."""

from __future__ import annotations

import numpy as np
from scipy import stats

from ..errors import CholeskyError, DomainError, IntegrationError, StationarityError

__all__ = ["gk_quantile", "gk_transform", "fbm_covariance", "fbm_sample_path",
           "lv_integrate", "var_sample_coefficients", "companion_matrix",
           "spectral_radius", "lv_rk4_step"]


def gk_quantile(u, a: float, b: float, g: float, k: float, c: float = 0.8):
    """g-and-k quantile function.

    Maps a standard-normal quantile z = Phi^{-1}(u) through
    ``a + b * (1 + c*tanh(g*z/2)) * (1 + z^2)^k * z``.  Monotone increasing
    in u for b > 0, k > -0.5 and moderate |g| at c = 0.8.
    """
    u = np.asarray(u, dtype=float)
    if np.any(u <= 0.0) or np.any(u >= 1.0):
        raise DomainError("g-and-k quantile requires u in (0, 1)")
    if b <= 0:
        raise DomainError("g-and-k scale b must be positive")
    if k <= -0.5:
        raise DomainError("g-and-k kurtosis k must exceed -0.5")
    z = stats.norm.ppf(u)
    return a + b * (1.0 + c * np.tanh(g * z / 2.0)) * (1.0 + z * z) ** k * z


def gk_transform(z, a: float, b: float, g: float, k: float, c: float = 0.8):
    """The same transform applied directly to standard-normal draws z."""
    z = np.asarray(z, dtype=float)
    return a + b * (1.0 + c * np.tanh(g * z / 2.0)) * (1.0 + z * z) ** k * z


def fbm_covariance(times: np.ndarray, hurst: float) -> np.ndarray:
    """Fractional-Brownian-motion covariance C(s,t) on a time grid.

    C(s, t) = 0.5 * (t^{2H} + s^{2H} - |t - s|^{2H}).
    """
    t = np.asarray(times, dtype=float)
    h2 = 2.0 * hurst
    return 0.5 * (t[:, None] ** h2 + t[None, :] ** h2
                  - np.abs(t[:, None] - t[None, :]) ** h2)


def fbm_sample_path(hurst: float, times: np.ndarray,
                    rng: np.random.Generator) -> np.ndarray:
    """Exact fBm path on ``times`` via Cholesky factorization of the covariance.

    Grids are expected to stay small (<= 1024 points); a tiny diagonal
    jitter is retried before giving up on a numerically non-PD matrix.
    """
    t = np.asarray(times, dtype=float)
    if t.ndim != 1 or len(t) < 1:
        raise DomainError("times must be a non-empty 1-d grid")
    if np.any(t <= 0) or np.any(np.diff(t) <= 0):
        raise DomainError("times must be strictly increasing and positive")
    if not (0.0 < hurst < 1.0):
        raise DomainError("hurst must lie in (0, 1)")
    cov = fbm_covariance(t, hurst)
    scale = float(np.max(np.diag(cov)))
    chol = None
    for jitter in (0.0, 1e-12, 1e-10, 1e-8):
        try:
            chol = np.linalg.cholesky(cov + jitter * scale * np.eye(len(t)))
            break
        except np.linalg.LinAlgError:
            continue
    if chol is None:
        raise CholeskyError(f"fBm covariance not positive definite (H={hurst})")
    return chol @ rng.standard_normal(len(t))


def lv_rk4_step(state: np.ndarray, h: float, alpha: float, beta: float,
                gamma: float, delta: float) -> np.ndarray:
    def f(s):
        x, y = s
        return np.array([alpha * x - beta * x * y, -gamma * y + delta * x * y])

    k1 = f(state)
    k2 = f(state + 0.5 * h * k1)
    k3 = f(state + 0.5 * h * k2)
    k4 = f(state + h * k3)
    return state + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def lv_integrate(alpha: float, beta: float, gamma: float, delta: float,
                 x0, t_grid: np.ndarray, substeps: int = 4) -> np.ndarray:
    """Predator-prey ODE trajectory on ``t_grid`` via fixed-step RK4.

    Uses ``substeps`` RK4 steps per grid interval (step h = spacing / 4 by
    default).  Observation noise is the caller's responsibility; the ODE
    itself is deterministic.
    """
    t = np.asarray(t_grid, dtype=float)
    state = np.asarray(x0, dtype=float).copy()
    if state.shape != (2,) or np.any(state <= 0):
        raise DomainError("x0 must be two positive populations")
    out = np.empty((len(t), 2))
    out[0] = state
    for i in range(1, len(t)):
        h = (t[i] - t[i - 1]) / substeps
        for _ in range(substeps):
            state = lv_rk4_step(state, h, alpha, beta, gamma, delta)
        if not np.all(np.isfinite(state)):
            raise IntegrationError(f"non-finite state at t={t[i]:g}")
        out[i] = state
    return out


def companion_matrix(gammas: np.ndarray) -> np.ndarray:
    """Companion form of a VAR(p) coefficient stack of shape (p, d, d)."""
    p, d, _ = gammas.shape
    comp = np.zeros((p * d, p * d))
    comp[:d] = np.concatenate(list(gammas), axis=1)
    if p > 1:
        comp[d:, : (p - 1) * d] = np.eye((p - 1) * d)
    return comp


def spectral_radius(m: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(m))))


def var_sample_coefficients(tau: float, theta_shrink: float, dims: int, lags: int,
                            rng: np.random.Generator,
                            sigma_shape: float = 2.0,
                            sigma_scale: float = 1.0 / 6.0,
                            shrink_factor: float = 0.98,
                            max_steps: int = 1000) -> tuple[np.ndarray, np.ndarray]:
    """Draw VAR(p) coefficients from a lag-decaying normal prior.

    Every entry of the lag-h matrix is N(tau/h, (theta_shrink/h)^2); the whole
    stack is multiplicatively shrunk until the companion matrix is stable.
    Noise variances are diagonal with inverse-gamma entries.
    """
    if dims < 1 or lags < 1:
        raise DomainError("dims and lags must be at least 1")
    gammas = np.empty((lags, dims, dims))
    for h in range(1, lags + 1):
        gammas[h - 1] = rng.normal(tau / h, theta_shrink / h, size=(dims, dims))
    for _ in range(max_steps):
        if spectral_radius(companion_matrix(gammas)) < 1.0:
            break
        gammas *= shrink_factor
    else:
        raise StationarityError(
            f"VAR shrinkage did not stabilize in {max_steps} steps")
    sigma_diag = sigma_scale / rng.gamma(sigma_shape, size=dims)
    return gammas, np.diag(sigma_diag)
