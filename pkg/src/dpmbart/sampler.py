"""Full Gibbs samplers and posterior summaries.

Each sweep of the mixture-error sampler has three blocks: (1) the weighted
backfitting pass over the trees given the per-observation error parameters,
(2) the cluster reallocation and redraw given the fit, and (3) the
concentration-parameter draw given the occupied cluster count. The plain
homoscedastic sampler replaces blocks (2)-(3) with a single conjugate
variance draw.

The level of the fitted function and the mean of the error distribution are
only jointly identified; reporting follows the draws as sampled, with the
error density summarized about zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bart import BackfitState, backfit_sweep, draw_sigma_bart
from .data import Dataset, PerObsErrorParams, build_cutpoints
from .dpm import ClusterState, draw_alpha, ew_draw_a, ew_draw_b, \
    marginal_g0_density
from .priors import Priors, calibrate_priors
from .trees import Ensemble

PLAIN_MODE = "plain_bart"
DPM_MODE = "dpmbart"
MODES = (PLAIN_MODE, DPM_MODE)


class ChainError(RuntimeError):
    """Raised when a chain hits an internal invariant failure."""


@dataclass
class ChainConfig:
    """Sampler settings. Defaults target a full-length run; tests and demos
    pass smaller budgets explicitly."""

    n_iter: int = 10000
    n_burn: int = 5000
    keep_every: int = 1
    m: int = 200
    seed: int = 0
    mode: str = DPM_MODE
    num_cut: int = 100
    min_leaf: int = 0
    fixed_sigma: float | None = None
    check_cache: bool = False
    track_acceptance: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode}")
        if not (0 <= self.n_burn < self.n_iter):
            raise ValueError(
                f"need 0 <= n_burn < n_iter, got ({self.n_burn}, "
                f"{self.n_iter})")
        if self.keep_every < 1:
            raise ValueError(f"keep_every must be >= 1, got "
                             f"{self.keep_every}")
        if self.m < 1:
            raise ValueError(f"m must be >= 1, got {self.m}")
        if self.fixed_sigma is not None and self.fixed_sigma <= 0:
            raise ValueError("fixed_sigma must be positive when set")


@dataclass
class DrawRecord:
    """One kept posterior draw."""

    fit: np.ndarray
    sigma: float | None = None
    alpha: float | None = None
    cluster_mu: np.ndarray | None = None
    cluster_sigma: np.ndarray | None = None
    cluster_count: np.ndarray | None = None


@dataclass
class ChainResult:
    draws: list
    traces: dict
    config: ChainConfig
    priors: Priors
    data: Dataset
    ensemble: Ensemble | None = None
    acceptance_log: list | None = None


def run_chain(data: Dataset, config: ChainConfig | None = None,
              priors: Priors | None = None) -> ChainResult:
    """Run one MCMC chain.

    Tree moves, error-model draws, and concentration draws consume three
    independent substreams spawned from the seed, so the tree stream is
    unaffected by which error model runs.
    """
    if config is None:
        config = ChainConfig()
    if priors is None:
        priors = calibrate_priors(data, m=config.m)
    grid = build_cutpoints(data, num_cut=config.num_cut)

    # substreams 2-4 of the seed; 0-1 are reserved for data generation
    children = np.random.SeedSequence(config.seed).spawn(5)[2:]
    rng_trees, rng_err, rng_alpha = (
        np.random.Generator(np.random.PCG64(c)) for c in children)

    state = BackfitState(Ensemble.of_single_leaves(config.m), data.x,
                         track_acceptance=config.track_acceptance)
    dpm_mode = config.mode == DPM_MODE
    g0 = priors.g0
    if dpm_mode:
        if g0.point_mass is not None:
            mu0, sigma0 = g0.point_mass
        else:
            mu0, sigma0 = 0.0, priors.sigma.sigma_hat
        clusters = ClusterState(data.n, mu0, sigma0)
        alpha = float(priors.alpha.grid[priors.alpha.grid.size // 2])
        trace_i = [clusters.i_unique]
        trace_alpha = [alpha]
        theta = clusters.theta()
    else:
        sigma = (config.fixed_sigma if config.fixed_sigma is not None
                 else priors.sigma.sigma_hat)
        trace_sigma = [sigma]
        theta = PerObsErrorParams.homoscedastic(data.n, sigma)

    draws: list[DrawRecord] = []
    for t in range(1, config.n_iter + 1):
        y_shift = data.y - theta.mu
        w = 1.0 / (theta.sigma * theta.sigma)
        backfit_sweep(state, data.x, y_shift, w, grid, priors.tree,
                      priors.mu, rng_trees, min_leaf=config.min_leaf,
                      check_cache=config.check_cache)
        if not np.all(np.isfinite(state.total_fit)):
            raise ChainError(f"non-finite fit at iteration {t}")
        resid = data.y - state.total_fit

        if dpm_mode:
            ew_draw_a(resid, clusters, alpha, g0, rng_err)
            ew_draw_b(resid, clusters, g0, rng_err)
            if config.check_cache:
                clusters.validate()
            alpha = draw_alpha(clusters.i_unique, priors.alpha, rng_alpha)
            theta = clusters.theta()
            trace_i.append(clusters.i_unique)
            trace_alpha.append(alpha)
        else:
            if config.fixed_sigma is None:
                sigma = draw_sigma_bart(resid, priors.sigma.nu,
                                        priors.sigma.lam, rng_err)
            theta = PerObsErrorParams.homoscedastic(data.n, sigma)
            trace_sigma.append(sigma)

        if t > config.n_burn and (t - config.n_burn - 1) \
                % config.keep_every == 0:
            if dpm_mode:
                mu_c, sig_c, cnt_c = clusters.snapshot()
                draws.append(DrawRecord(fit=state.total_fit.copy(),
                                        alpha=alpha, cluster_mu=mu_c,
                                        cluster_sigma=sig_c,
                                        cluster_count=cnt_c))
            else:
                draws.append(DrawRecord(fit=state.total_fit.copy(),
                                        sigma=sigma))

    if dpm_mode:
        traces = {"i_unique": np.array(trace_i, dtype=np.int64),
                  "alpha": np.array(trace_alpha)}
    else:
        traces = {"sigma": np.array(trace_sigma)}
    return ChainResult(draws=draws, traces=traces, config=config,
                       priors=priors, data=data, ensemble=state.ensemble,
                       acceptance_log=state.acceptance_log)


# ---------------------------------------------------------------------------
# Summaries

def fit_matrix(draws: list) -> np.ndarray:
    if len(draws) < 2:
        raise ValueError("need at least 2 kept draws to summarize")
    return np.stack([d.fit for d in draws])


def summarize_fit(draws: list, lo: float = 0.025, hi: float = 0.975):
    """Pointwise posterior mean and equal-tailed interval of the fit.

    Returns (fhat, lo_band, hi_band). Quantiles interpolate linearly
    between order statistics.
    """
    fits = fit_matrix(draws)
    fhat = fits.mean(axis=0)
    lo_band = np.quantile(fits, lo, axis=0)
    hi_band = np.quantile(fits, hi, axis=0)
    return fhat, lo_band, hi_band


def default_density_grid(resid: np.ndarray, size: int = 512) -> np.ndarray:
    """Evaluation grid covering the residual range plus one sd on each
    side."""
    resid = np.asarray(resid, dtype=float)
    sd = float(resid.std())
    return np.linspace(float(resid.min()) - sd, float(resid.max()) + sd,
                       size)


def _normal_mixture_density(grid, mu, sigma, weights):
    z = (grid[None, :] - np.asarray(mu)[:, None]) \
        / np.asarray(sigma)[:, None]
    comp = np.exp(-0.5 * z * z) / (np.asarray(sigma)[:, None]
                                   * math.sqrt(2.0 * math.pi))
    return np.asarray(weights) @ comp


@dataclass
class DensitySummary:
    e: np.ndarray
    mean: np.ndarray
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None


def predictive_error_density(draws: list, grid: np.ndarray, g0,
                             lo: float = 0.025,
                             hi: float = 0.975) -> DensitySummary:
    """Posterior predictive error density of the mixture model.

    Per draw the density is the cluster mixture plus the new-cluster term:
    sum_c count_c/(n + alpha) N(e | mu_c, sig_c^2)
    + alpha/(n + alpha) * marginal_g0_density(e). Returns the pointwise
    mean and equal-tailed band over draws.
    """
    grid = np.asarray(grid, dtype=float)
    g0_dens = marginal_g0_density(grid, g0)
    rows = np.empty((len(draws), grid.size))
    for d, rec in enumerate(draws):
        if rec.cluster_mu is None:
            raise ValueError("draw has no cluster parameters; this summary "
                             "needs mixture-model draws")
        n = float(rec.cluster_count.sum())
        denom = n + rec.alpha
        rows[d] = _normal_mixture_density(
            grid, rec.cluster_mu, rec.cluster_sigma,
            rec.cluster_count / denom)
        rows[d] += rec.alpha / denom * g0_dens
    return DensitySummary(e=grid, mean=rows.mean(axis=0),
                          lo=np.quantile(rows, lo, axis=0),
                          hi=np.quantile(rows, hi, axis=0))


def bart_error_density(draws: list, grid: np.ndarray) -> DensitySummary:
    """Averaged homoscedastic error density: mean over kept sigma draws of
    N(e | 0, sigma^2)."""
    grid = np.asarray(grid, dtype=float)
    if any(d.sigma is None for d in draws):
        raise ValueError("draw has no sigma; this summary needs "
                         "homoscedastic-model draws")
    sigmas = np.array([d.sigma for d in draws], dtype=float)
    z = grid[None, :] / sigmas[:, None]
    rows = np.exp(-0.5 * z * z) / (sigmas[:, None]
                                   * math.sqrt(2.0 * math.pi))
    return DensitySummary(e=grid, mean=rows.mean(axis=0))


# ---------------------------------------------------------------------------
# Metrics

def rmse(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.sqrt(np.mean((a - b) ** 2)))


def l1_distance(grid: np.ndarray, f: np.ndarray, g: np.ndarray) -> float:
    """Trapezoid integral of |f - g| over the grid."""
    trap = getattr(np, "trapezoid", None) or np.trapz
    return float(trap(np.abs(np.asarray(f) - np.asarray(g)),
                      np.asarray(grid)))


def mean_interval_width(lo: np.ndarray, hi: np.ndarray) -> float:
    return float(np.mean(np.asarray(hi) - np.asarray(lo)))


def steady_state_stats(i_trace: np.ndarray) -> dict:
    """Where the cluster-count trace settles.

    The steady band is mean +/- max(4 sd, 2) over the second half of the
    trace (the initial state at index 0 excluded); hit_iter is the first
    iteration inside the band.
    """
    i_trace = np.asarray(i_trace, dtype=float)
    path = i_trace[1:]
    tail = path[path.size // 2:]
    mean = float(tail.mean())
    half_width = max(4.0 * float(tail.std()), 2.0)
    inside = np.abs(path - mean) <= half_width
    hit = int(np.argmax(inside)) + 1 if inside.any() else path.size + 1
    return {"steady_mean": mean, "band_half_width": half_width,
            "hit_iter": hit, "n_iter": int(path.size)}
