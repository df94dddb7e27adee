"""Prior families and their data-based calibrations.

Scale priors are scaled-inverse-chi-square throughout: sigma^2 ~ nu*lam/chisq_nu
with lam chosen so a stated quantile of sigma lands on a data-based estimate.
The error-model base distribution adds a conditional normal location,
mu | sigma ~ N(mu0, sigma^2/k0), making the marginal location a scaled t.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.special import gammaln

from .data import Dataset, least_squares_fit

# Default settings. The error-model scale prior is looser in df and uses a
# higher quantile than the single-variance tree model because individual
# mixture components may sit well inside or outside the overall residual
# spread.
BART_SIGMA_NU = 3.0
BART_SIGMA_Q = 0.90
G0_NU = 10.0
G0_Q = 0.95
G0_KS = 10.0
TREE_SPLIT_BASE = 0.95
TREE_SPLIT_POWER = 2.0
MU_SHRINK_K = 2.0
DEFAULT_NUM_TREES = 200
DEFAULT_NUM_CUT = 100
ALPHA_I_MIN = 1
ALPHA_PSI = 0.5
ALPHA_GRID_SIZE = 100
ALPHA_SEARCH_LO = 1e-3


class CalibrationError(ValueError):
    """Raised when a data-based calibration is degenerate or infeasible."""


def default_i_max(n: int) -> int:
    """Upper anchor for the expected number of clusters: one tenth of the
    sample, but at least 2."""
    return max(2, int(math.floor(0.1 * n)))


@dataclass
class TreePrior:
    """Branching-process tree prior: a depth-d node splits with probability
    split_base * (1 + d) ** -split_power, and rules are uniform over the
    feasible (predictor, cutpoint) pairs."""

    split_base: float = TREE_SPLIT_BASE
    split_power: float = TREE_SPLIT_POWER

    def __post_init__(self):
        if not (0.0 < self.split_base < 1.0):
            raise CalibrationError(
                f"split_base must lie in (0, 1), got {self.split_base}")
        if self.split_power < 0:
            raise CalibrationError(
                f"split_power must be >= 0, got {self.split_power}")

    def p_split(self, depth: int) -> float:
        return self.split_base * (1.0 + depth) ** (-self.split_power)


@dataclass
class MuPrior:
    """Leaf means are iid N(0, tau^2)."""

    tau: float

    def __post_init__(self):
        if not (self.tau > 0 and math.isfinite(self.tau)):
            raise CalibrationError(f"tau must be positive, got {self.tau}")


@dataclass
class SigmaPrior:
    """Homoscedastic error variance prior sigma^2 ~ nu*lam/chisq_nu."""

    nu: float
    lam: float
    sigma_hat: float
    q: float


@dataclass
class BaselineG0:
    """Base distribution of the error mixture.

    sigma^2 ~ nu*lam/chisq_nu and mu | sigma ~ N(mu0, sigma^2/k0). The
    marginal for mu is mu0 + sqrt(lam/k0) * t_nu.

    point_mass, when set to (mu, sigma), collapses every draw from the base
    distribution and its posteriors to exactly that pair. Debug knob: it
    reduces the heteroscedastic model to the homoscedastic one.
    """

    nu: float
    lam: float
    mu0: float
    k0: float
    point_mass: tuple | None = None

    def __post_init__(self):
        if self.point_mass is not None:
            return
        if not (self.nu > 0 and self.lam > 0 and self.k0 > 0):
            raise CalibrationError(
                f"need nu, lam, k0 > 0, got ({self.nu}, {self.lam}, "
                f"{self.k0})")


def calibrate_lambda(sigma_hat: float, nu: float, q: float) -> float:
    """Scale lam so that P(sigma < sigma_hat) = q under
    sigma^2 ~ nu*lam/chisq_nu, i.e. lam = sigma_hat^2 * Q_chisq_nu(1-q) / nu.
    """
    if not (sigma_hat > 0 and math.isfinite(sigma_hat)):
        raise CalibrationError(
            f"sigma_hat must be positive and finite, got {sigma_hat}; "
            "an exact pilot fit leaves nothing to calibrate against")
    if not (0.0 < q < 1.0):
        raise CalibrationError(f"q must lie in (0, 1), got {q}")
    if nu <= 0:
        raise CalibrationError(f"nu must be positive, got {nu}")
    return sigma_hat ** 2 * stats.chi2.ppf(1.0 - q, nu) / nu


def calibrate_tau(y: np.ndarray, shrink_k: float = MU_SHRINK_K,
                  m: int = DEFAULT_NUM_TREES) -> float:
    """Leaf-mean scale putting the response range at +/- shrink_k prior sds
    of the ensemble total: tau = range(y) / (2 * shrink_k * sqrt(m))."""
    y = np.asarray(y, dtype=float)
    rng_y = float(y.max() - y.min())
    if rng_y <= 0:
        raise CalibrationError("response is constant; tau is undefined")
    if shrink_k <= 0 or m < 1:
        raise CalibrationError(
            f"need shrink_k > 0 and m >= 1, got ({shrink_k}, {m})")
    return rng_y / (2.0 * shrink_k * math.sqrt(m))


def calibrate_sigma_prior(sigma_hat: float, nu: float = BART_SIGMA_NU,
                          q: float = BART_SIGMA_Q) -> SigmaPrior:
    lam = calibrate_lambda(sigma_hat, nu, q)
    return SigmaPrior(nu=nu, lam=lam, sigma_hat=sigma_hat, q=q)


def calibrate_g0(e: np.ndarray, nu: float = G0_NU, q: float = G0_Q,
                 ks: float = G0_KS, mu0: float = 0.0,
                 abs_resid_quantile: float | None = None) -> BaselineG0:
    """Calibrate the mixture base distribution from pilot residuals.

    lam comes from quantile-matching the sample sd of e (ddof=1). k0 is set
    so the most extreme residual sits ks marginal-prior sds of mu out:
    spread = ks * sqrt(lam / k0) with spread = max|e|, giving
    k0 = ks^2 * lam / max|e|^2. abs_resid_quantile swaps max|e| for an upper
    quantile of |e| when the extremes are too wild to anchor on.
    """
    e = np.asarray(e, dtype=float)
    if e.size < 2:
        raise CalibrationError("need at least 2 residuals to calibrate")
    sd = float(np.std(e, ddof=1))
    lam = calibrate_lambda(sd, nu, q)
    if abs_resid_quantile is None:
        spread = float(np.max(np.abs(e)))
    else:
        if not (0.0 < abs_resid_quantile <= 1.0):
            raise CalibrationError(
                f"abs_resid_quantile must lie in (0, 1], got "
                f"{abs_resid_quantile}")
        spread = float(np.quantile(np.abs(e), abs_resid_quantile))
    if spread <= 0:
        raise CalibrationError("residuals have no spread; k0 is undefined")
    k0 = ks ** 2 * lam / spread ** 2
    return BaselineG0(nu=nu, lam=lam, mu0=mu0, k0=k0)


def marginal_mu_quantile(g0: BaselineG0, p: float) -> float:
    """Quantile of the marginal location distribution
    mu0 + sqrt(lam/k0) * t_nu."""
    if g0.point_mass is not None:
        return float(g0.point_mass[0])
    return g0.mu0 + math.sqrt(g0.lam / g0.k0) * float(stats.t.ppf(p, g0.nu))


# ---------------------------------------------------------------------------
# Concentration-parameter prior

@dataclass
class AlphaPrior:
    """Discrete prior for the mixture concentration alpha.

    The support is a grid on [alpha_min, alpha_max] with weights
    proportional to (1 - (alpha - alpha_min)/(alpha_max - alpha_min))**psi,
    so mass decreases from alpha_min to zero at alpha_max. The endpoints are
    chosen so the prior mode of the cluster count I is i_min at alpha_min
    and i_max at alpha_max.
    """

    n: int
    i_min: int
    i_max: int
    psi: float
    alpha_min: float
    alpha_max: float
    grid: np.ndarray
    weights: np.ndarray
    log_weights: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.grid.shape != self.weights.shape or self.grid.ndim != 1:
            raise CalibrationError("grid and weights must be matching 1-d")
        if np.any(np.diff(self.weights) > 1e-12):
            raise CalibrationError("weights must be nonincreasing")
        with np.errstate(divide="ignore"):
            self.log_weights = np.log(self.weights)


def stirling_log_row(n: int, _cache={}) -> np.ndarray:
    """log |s(n, i)| for i = 0..n, unsigned Stirling numbers of the first
    kind, by the triangular recurrence |s(n+1,i)| = |s(n,i-1)| + n|s(n,i)|
    carried in log scale. Rows are cached per n."""
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    if n in _cache:
        return _cache[n]
    row = np.array([0.0])
    for k in range(n):
        new = np.full(k + 2, -np.inf)
        new[1:] = row
        with np.errstate(divide="ignore"):
            shifted = np.concatenate([row, [-np.inf]]) + math.log(max(k, 1))
        if k > 0:
            new = np.logaddexp(new, shifted)
        row = new
    _cache[n] = row
    row.flags.writeable = False
    return row


def log_p_clusters_given_alpha(i: int, n: int, alpha: float) -> float:
    """log P(I = i | alpha, n) = log|s(n,i)| + i log alpha
    + logGamma(alpha) - logGamma(alpha + n)."""
    if not (1 <= i <= n):
        raise ValueError(f"need 1 <= i <= n, got i={i}, n={n}")
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    row = stirling_log_row(n)
    return float(row[i] + i * math.log(alpha)
                 + gammaln(alpha) - gammaln(alpha + n))


def cluster_count_mode(n: int, alpha: float) -> int:
    """Mode of P(I | alpha, n); ties resolve to the smaller count."""
    row = stirling_log_row(n)
    i = np.arange(1, n + 1)
    return int(np.argmax(row[1:] + i * math.log(alpha))) + 1


def _alpha_reaching_mode(n: int, target: int, search_lo: float) -> float:
    """Smallest alpha in [search_lo, n] whose induced mode of the cluster
    count is target, by bisection. The mode is nondecreasing in alpha and
    steps through every integer, so the boundary is well defined."""
    lo, hi = search_lo, float(n)
    if cluster_count_mode(n, lo) >= target:
        return lo
    if cluster_count_mode(n, hi) < target:
        raise CalibrationError(
            f"no alpha <= {n} puts the cluster-count mode at {target} "
            f"(mode at alpha={n} is {cluster_count_mode(n, hi)})")
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if cluster_count_mode(n, mid) >= target:
            hi = mid
        else:
            lo = mid
    return hi


def calibrate_alpha_prior(n: int, i_min: int = ALPHA_I_MIN,
                          i_max: int | None = None, psi: float = ALPHA_PSI,
                          grid_size: int = ALPHA_GRID_SIZE,
                          search_lo: float = ALPHA_SEARCH_LO) -> AlphaPrior:
    """Build the alpha grid by matching prior modes of the cluster count at
    the endpoints."""
    if i_max is None:
        i_max = default_i_max(n)
    if not (1 <= i_min <= i_max <= n):
        raise CalibrationError(
            f"need 1 <= i_min <= i_max <= n, got ({i_min}, {i_max}, {n})")
    if grid_size < 1:
        raise CalibrationError(f"grid_size must be >= 1, got {grid_size}")
    if psi < 0:
        raise CalibrationError(f"psi must be >= 0, got {psi}")
    alpha_min = _alpha_reaching_mode(n, i_min, search_lo)
    alpha_max = _alpha_reaching_mode(n, i_max, search_lo)
    if alpha_max - alpha_min < 1e-12 or grid_size == 1:
        grid = np.array([alpha_min])
        weights = np.array([1.0])
    else:
        grid = np.linspace(alpha_min, alpha_max, grid_size)
        weights = (1.0 - (grid - alpha_min) / (alpha_max - alpha_min)) ** psi
    return AlphaPrior(n=n, i_min=i_min, i_max=i_max, psi=psi,
                      alpha_min=alpha_min, alpha_max=alpha_max,
                      grid=grid, weights=weights)


# ---------------------------------------------------------------------------
# Whole-model calibration bundle

@dataclass
class Priors:
    """Everything run_chain needs besides the data and chain settings."""

    tree: TreePrior
    mu: MuPrior
    sigma: SigmaPrior
    g0: BaselineG0
    alpha: AlphaPrior


def calibrate_priors(data: Dataset, m: int = DEFAULT_NUM_TREES,
                     nu_bart: float = BART_SIGMA_NU,
                     q_bart: float = BART_SIGMA_Q,
                     nu_g0: float = G0_NU, q_g0: float = G0_Q,
                     ks: float = G0_KS, mu0: float = 0.0,
                     shrink_k: float = MU_SHRINK_K,
                     split_base: float = TREE_SPLIT_BASE,
                     split_power: float = TREE_SPLIT_POWER,
                     i_min: int = ALPHA_I_MIN, i_max: int | None = None,
                     psi: float = ALPHA_PSI,
                     naive: bool = False,
                     naive_fraction: float = 1.0) -> Priors:
    """Run the pilot regression and calibrate every prior from the data.

    naive=True swaps the pilot residual sd for naive_fraction * sd(y) as the
    variance anchor; the base-distribution spread still comes from the pilot
    residuals.
    """
    pilot = least_squares_fit(data)
    if naive:
        sigma_hat = naive_fraction * float(np.std(data.y, ddof=1))
    elif pilot.resid_sd == 0.0:
        sigma_hat = 0.0
    else:
        sigma_hat = float(np.std(pilot.residuals, ddof=1))
    sigma = calibrate_sigma_prior(sigma_hat, nu=nu_bart, q=q_bart)
    g0 = calibrate_g0(pilot.residuals, nu=nu_g0, q=q_g0, ks=ks, mu0=mu0)
    tau = calibrate_tau(data.y, shrink_k=shrink_k, m=m)
    alpha = calibrate_alpha_prior(data.n, i_min=i_min, i_max=i_max, psi=psi)
    return Priors(tree=TreePrior(split_base, split_power),
                  mu=MuPrior(tau=tau), sigma=sigma, g0=g0, alpha=alpha)
