"""Posterior-quality diagnostics: rank calibration, coverage, uniformity.

Rank statistics are computed in raw (natural-unit) parameter space;
coverage distances in the preprocessed space where margins are scale
balanced.  Both reduce to samples that should be U(0,1) under a correct
posterior, scored by their distance to the uniform distribution.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ValidationError
from .sim.base import Problem, sample_dataset, sample_prior

log = logging.getLogger(__name__)

HIST_BINS = 20
COVERAGE_GRID = np.round(np.arange(0.01, 1.0, 0.01), 2)


def wasserstein_to_uniform(u: np.ndarray) -> float:
    """Exact integral of |F_n(x) - x| on [0, 1] from the order statistics."""
    u = np.sort(np.asarray(u, dtype=float))
    c = len(u)
    knots = np.concatenate([[0.0], u, [1.0]])
    total = 0.0
    for j in range(c + 1):
        a, b = knots[j], knots[j + 1]
        if b <= a:
            continue
        f = j / c
        if f <= a:
            total += ((b - f) ** 2 - (a - f) ** 2) / 2.0
        elif f >= b:
            total += ((f - a) ** 2 - (f - b) ** 2) / 2.0
        else:
            total += ((f - a) ** 2 + (b - f) ** 2) / 2.0
    return float(total)


def dist_to_uniform(u: np.ndarray) -> tuple[float, float, float]:
    """(Wasserstein, total-variation, Hellinger) distance to U(0,1).

    Wasserstein is exact; TV and Hellinger use a fixed 20-bin histogram
    estimate of the density.
    """
    u = np.asarray(u, dtype=float)
    if len(u) < 2:
        raise DomainError("need at least 2 values")
    if np.any(u < 0.0) or np.any(u > 1.0) or not np.all(np.isfinite(u)):
        raise DomainError("values must lie in [0, 1]")
    wd = wasserstein_to_uniform(u)
    counts, _ = np.histogram(u, bins=HIST_BINS, range=(0.0, 1.0))
    p = counts / len(u)
    q = 1.0 / HIST_BINS
    tv = 0.5 * float(np.abs(p - q).sum())
    hellinger = float(np.sqrt(0.5 * np.sum((np.sqrt(p) - np.sqrt(q)) ** 2)))
    return wd, tv, hellinger


def ecp_score(u: np.ndarray) -> float:
    """Wasserstein distance of the coverage statistic to U(0,1).

    Stored unscaled; the report layer multiplies by 1e3 for display only.
    """
    return dist_to_uniform(u)[0]


def uniform_wd_null(c: int, trials: int, rng: np.random.Generator) -> np.ndarray:
    """Monte-Carlo null distribution of the Wasserstein statistic."""
    return np.sort([wasserstein_to_uniform(rng.uniform(size=c)) for _ in range(trials)])


@dataclass
class CalibrationRounds:
    """Simulated truth and posterior draws for C calibration rounds."""

    problem: Problem
    theta_star_raw: np.ndarray   # (C, raw_dim)
    theta_star_proc: np.ndarray  # (C, proc_dim)
    draws_raw: np.ndarray        # (C, L, raw_dim)
    draws_proc: np.ndarray       # (C, L, proc_dim)
    skipped: int = 0
    support_violations: int = 0


def make_rounds(problem: Problem, theta_star_raw: np.ndarray,
                draws_raw: np.ndarray, skipped: int = 0) -> CalibrationRounds:
    """Assemble rounds from raw arrays, preprocessing as needed."""
    c, l, raw_dim = draws_raw.shape
    star_proc = np.stack([problem.preprocess_theta(t) for t in theta_star_raw])
    flat = draws_raw.reshape(c * l, raw_dim)
    violations = sum(not problem.in_support(t) for t in flat)
    proc = np.stack([problem.preprocess_theta(t) for t in flat])
    if violations:
        log.info("%s: %d / %d posterior draws outside the prior support",
                 problem.name, violations, c * l)
    return CalibrationRounds(
        problem=problem,
        theta_star_raw=np.asarray(theta_star_raw, dtype=float),
        theta_star_proc=star_proc,
        draws_raw=draws_raw,
        draws_proc=proc.reshape(c, l, -1),
        skipped=skipped,
        support_violations=int(violations),
    )


def calibration_rounds(problem: Problem, posterior_sampler, c: int, l: int,
                       rng: np.random.Generator,
                       skip_limit: float = 0.05) -> CalibrationRounds:
    """Run C rounds of simulate-then-sample with a per-round sampler.

    ``posterior_sampler(x_raw, n, rng) -> (L, raw_dim)`` raw-unit draws.
    Failing rounds are skipped and counted; more than ``skip_limit`` of
    them aborts the run.
    """
    stars, draws = [], []
    skipped = 0
    attempts = 0
    while len(stars) < c:
        attempts += 1
        if skipped > skip_limit * c:
            raise ValidationError(
                f"{skipped} of {attempts} calibration rounds failed")
        theta_raw = sample_prior(problem, rng)
        n = int(rng.integers(problem.n_range[0], problem.n_range[1] + 1))
        x_raw = sample_dataset(problem, theta_raw, n, rng)
        try:
            sample = np.asarray(posterior_sampler(x_raw, n, rng), dtype=float)
        except Exception as exc:  # noqa: BLE001 - sampler is caller-supplied
            log.warning("calibration round failed: %s", exc)
            skipped += 1
            continue
        if sample.shape != (l, len(theta_raw)):
            raise ValidationError(
                f"sampler returned shape {sample.shape}, expected {(l, len(theta_raw))}")
        stars.append(theta_raw)
        draws.append(sample)
    return make_rounds(problem, np.stack(stars), np.stack(draws), skipped=skipped)


def sbc_from_rounds(rounds: CalibrationRounds) -> np.ndarray:
    """Per-margin rank fractions U_j = mean(theta*_j <= draw_j), shape (raw_dim, C)."""
    star = rounds.theta_star_raw[:, None, :]
    return (star <= rounds.draws_raw).mean(axis=1).T.copy()


def sbc_ranks(problem: Problem, posterior_sampler, c: int, l: int,
              rng: np.random.Generator) -> np.ndarray:
    rounds = calibration_rounds(problem, posterior_sampler, c, l, rng)
    return sbc_from_rounds(rounds)


def tarp_from_rounds(rounds: CalibrationRounds,
                     rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Coverage statistic per round and its empirical CDF on a credibility grid.

    Per round, U is the fraction of posterior draws that sit closer to a
    random reference point than the true parameter does; equivalently the
    true parameter's distance rank inside the reference-centered ball, which
    is U(0,1) exactly when the sampler matches the posterior.  Reference
    points are uniform over the axis-aligned bounding box of the simulated
    true parameters; distances are Euclidean in preprocessed space.
    """
    star = rounds.theta_star_proc
    lo, hi = star.min(axis=0), star.max(axis=0)
    refs = rng.uniform(lo, hi, size=star.shape)
    d_draws = np.linalg.norm(rounds.draws_proc - refs[:, None, :], axis=2)
    d_star = np.linalg.norm(star - refs, axis=1)
    u = (d_draws < d_star[:, None]).mean(axis=1)
    curve = np.column_stack([COVERAGE_GRID,
                             (u[None, :] <= COVERAGE_GRID[:, None]).mean(axis=1)])
    return u, curve


def tarp_coverage(problem: Problem, posterior_sampler, c: int, l: int,
                  rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    rounds = calibration_rounds(problem, posterior_sampler, c, l, rng)
    return tarp_from_rounds(rounds, rng)


@dataclass
class CalibrationReport:
    """Summary of one calibration evaluation."""

    per_margin_ranks: np.ndarray        # (raw_dim, C)
    tarp_u: np.ndarray                  # (C,)
    per_margin_wd: np.ndarray           # (raw_dim,)
    wd_avg: float
    wd_worst: float
    tv: float
    hellinger: float
    ecp: float
    coverage_curve: np.ndarray          # (99, 2): credibility, empirical coverage
    skipped: int = 0
    support_violations: int = 0

    def to_dict(self) -> dict:
        return {
            "wd_avg": self.wd_avg,
            "wd_worst": self.wd_worst,
            "tv": self.tv,
            "hellinger": self.hellinger,
            "ecp": self.ecp,
            "per_margin_wd": [float(v) for v in self.per_margin_wd],
            "skipped": self.skipped,
            "support_violations": self.support_violations,
            "coverage_curve": [[float(a), float(b)] for a, b in self.coverage_curve],
        }


def report_from_rounds(rounds: CalibrationRounds,
                       rng: np.random.Generator) -> CalibrationReport:
    ranks = sbc_from_rounds(rounds)
    per_margin = np.array([dist_to_uniform(r) for r in ranks])
    u, curve = tarp_from_rounds(rounds, rng)
    return CalibrationReport(
        per_margin_ranks=ranks,
        tarp_u=u,
        per_margin_wd=per_margin[:, 0],
        wd_avg=float(per_margin[:, 0].mean()),
        wd_worst=float(per_margin[:, 0].max()),
        tv=float(per_margin[:, 1].mean()),
        hellinger=float(per_margin[:, 2].mean()),
        ecp=ecp_score(u),
        coverage_curve=curve,
        skipped=rounds.skipped,
        support_violations=rounds.support_violations,
    )


def calibration_report(problem: Problem, posterior_sampler, c: int, l: int,
                       rng: np.random.Generator) -> CalibrationReport:
    rounds = calibration_rounds(problem, posterior_sampler, c, l, rng)
    return report_from_rounds(rounds, rng)
