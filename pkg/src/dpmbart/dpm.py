"""Error-mixture updates: cluster reallocation, within-cluster redraws, and
the concentration-parameter draw.

The mixture over per-observation error parameters theta_i = (mu_i, sigma_i)
has a conjugate base distribution (see priors.BaselineG0), so reallocation
integrates theta out for the new-cluster weight and redraws use closed-form
posterior parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .data import PerObsErrorParams
from .priors import AlphaPrior, BaselineG0

_LOG_2PI = math.log(2.0 * math.pi)


class ClusterState:
    """Partition of observations into clusters with per-cluster (mu, sigma).

    Cluster slots are kept compact in parallel arrays for vectorized weight
    computation; labels hold persistent cluster ids so slot compaction never
    touches the label vector.
    """

    def __init__(self, n: int, mu: float, sigma: float):
        if n < 1:
            raise ValueError(f"need n >= 1 observations, got {n}")
        if sigma <= 0:
            raise ValueError(f"sigma must be positive, got {sigma}")
        cap = 16
        self._mu = np.zeros(cap)
        self._sig2 = np.ones(cap)
        self._count = np.zeros(cap, dtype=np.int64)
        self._ids = np.zeros(cap, dtype=np.int64)
        self._log_norm = np.zeros(cap)   # -0.5 * log(2 pi sig2)
        self._half_prec = np.zeros(cap)  # 0.5 / sig2
        self._n_live = 1
        self._id_to_slot = {0: 0}
        self._next_id = 1
        self._free_ids: list[int] = []
        self.labels = np.zeros(n, dtype=np.int64)
        self._set_slot(0, mu, sigma * sigma)
        self._count[0] = n
        self._ids[0] = 0

    # -- slot bookkeeping ---------------------------------------------------

    def _set_slot(self, slot: int, mu: float, sig2: float):
        self._mu[slot] = mu
        self._sig2[slot] = sig2
        self._log_norm[slot] = -0.5 * (_LOG_2PI + math.log(sig2))
        self._half_prec[slot] = 0.5 / sig2

    def _grow_capacity(self):
        for name in ("_mu", "_sig2", "_log_norm", "_half_prec"):
            arr = getattr(self, name)
            new = np.zeros(arr.size * 2)
            new[:arr.size] = arr
            setattr(self, name, new)
        for name in ("_count", "_ids"):
            arr = getattr(self, name)
            new = np.zeros(arr.size * 2, dtype=np.int64)
            new[:arr.size] = arr
            setattr(self, name, new)

    def _detach(self, i: int) -> None:
        """Remove observation i from its cluster, deleting the cluster if it
        empties."""
        cid = int(self.labels[i])
        slot = self._id_to_slot[cid]
        self._count[slot] -= 1
        if self._count[slot] == 0:
            last = self._n_live - 1
            if slot != last:
                for arr in (self._mu, self._sig2, self._count, self._ids,
                            self._log_norm, self._half_prec):
                    arr[slot] = arr[last]
                self._id_to_slot[int(self._ids[slot])] = slot
            del self._id_to_slot[cid]
            self._free_ids.append(cid)
            self._n_live = last

    def _attach(self, i: int, slot: int) -> None:
        self.labels[i] = self._ids[slot]
        self._count[slot] += 1

    def _new_cluster(self, i: int, mu: float, sigma: float) -> int:
        if self._n_live == self._mu.size:
            self._grow_capacity()
        slot = self._n_live
        cid = self._free_ids.pop() if self._free_ids else self._next_id
        if cid == self._next_id:
            self._next_id += 1
        self._set_slot(slot, mu, sigma * sigma)
        self._count[slot] = 1
        self._ids[slot] = cid
        self._id_to_slot[cid] = slot
        self.labels[i] = cid
        self._n_live += 1
        return slot

    # -- views ----------------------------------------------------------------

    @property
    def n_obs(self) -> int:
        return self.labels.size

    @property
    def i_unique(self) -> int:
        """Number of occupied clusters."""
        return self._n_live

    def counts(self) -> np.ndarray:
        return self._count[:self._n_live].copy()

    def snapshot(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(mu, sigma, count) arrays over occupied clusters."""
        k = self._n_live
        return (self._mu[:k].copy(), np.sqrt(self._sig2[:k]),
                self._count[:k].copy())

    def slot_labels(self) -> np.ndarray:
        """Per-observation slot index (dense, 0..i_unique-1)."""
        lookup = np.empty(self._next_id, dtype=np.int64)
        lookup[self._ids[:self._n_live]] = np.arange(self._n_live)
        return lookup[self.labels]

    def theta(self) -> PerObsErrorParams:
        """Per-observation error parameters implied by the partition."""
        slots = self.slot_labels()
        return PerObsErrorParams(mu=self._mu[slots],
                                 sigma=np.sqrt(self._sig2[slots]))

    def validate(self):
        counts = np.bincount(self.slot_labels(), minlength=self._n_live)
        if not np.array_equal(counts, self._count[:self._n_live]):
            raise RuntimeError("cluster counts disagree with labels")
        if int(self._count[:self._n_live].sum()) != self.n_obs:
            raise RuntimeError("cluster counts do not sum to n")
        if np.any(self._sig2[:self._n_live] <= 0):
            raise RuntimeError("non-positive cluster variance")


# ---------------------------------------------------------------------------
# Base-distribution densities and posterior draws

def marginal_g0_logpdf(e, g0: BaselineG0):
    """Log density of one error under the base distribution with theta
    integrated out: a t_nu location-scale density centered at mu0 with
    scale sqrt(lam * (1 + 1/k0))."""
    e = np.asarray(e, dtype=float)
    if g0.point_mass is not None:
        pm_mu, pm_sigma = g0.point_mass
        z = (e - pm_mu) / pm_sigma
        return -0.5 * (_LOG_2PI + z * z) - math.log(pm_sigma)
    scale = math.sqrt(g0.lam * (1.0 + 1.0 / g0.k0))
    z = (e - g0.mu0) / scale
    log_const = (gammaln(0.5 * (g0.nu + 1.0)) - gammaln(0.5 * g0.nu)
                 - 0.5 * math.log(g0.nu * math.pi) - math.log(scale))
    return log_const - 0.5 * (g0.nu + 1.0) * np.log1p(z * z / g0.nu)


def marginal_g0_density(e, g0: BaselineG0):
    return np.exp(marginal_g0_logpdf(e, g0))


def g0_posterior_params(e: np.ndarray, g0: BaselineG0):
    """Conjugate update of (nu, lam, mu0, k0) given errors e; with no data
    this returns the base parameters unchanged."""
    e = np.asarray(e, dtype=float)
    nc = e.size
    if nc == 0:
        return g0.nu, g0.lam, g0.mu0, g0.k0
    ebar = float(e.mean())
    ss = float(((e - ebar) ** 2).sum())
    k_n = g0.k0 + nc
    nu_n = g0.nu + nc
    nu_lam_n = (g0.nu * g0.lam + ss
                + g0.k0 * nc / k_n * (ebar - g0.mu0) ** 2)
    return nu_n, nu_lam_n / nu_n, (g0.k0 * g0.mu0 + nc * ebar) / k_n, k_n


def draw_g0_posterior(e: np.ndarray, g0: BaselineG0,
                      rng: np.random.Generator) -> tuple[float, float]:
    """Draw (mu, sigma) from the base-distribution posterior given errors e.
    Empty e gives a draw from the base distribution itself."""
    if g0.point_mass is not None:
        return float(g0.point_mass[0]), float(g0.point_mass[1])
    nu_n, lam_n, mu_n, k_n = g0_posterior_params(e, g0)
    sig2 = nu_n * lam_n / rng.chisquare(nu_n)
    mu = rng.normal(mu_n, math.sqrt(sig2 / k_n))
    return float(mu), float(math.sqrt(sig2))


# ---------------------------------------------------------------------------
# The two partition draws

def ew_draw_a(eps: np.ndarray, state: ClusterState, alpha: float,
              g0: BaselineG0, rng: np.random.Generator) -> None:
    """Reallocation sweep: each observation in turn leaves its cluster and
    rejoins an existing cluster with weight count * N(eps_i | mu_c, sig_c^2)
    or opens a new one with weight alpha * marginal_g0_density(eps_i),
    drawing the new cluster's parameters from the single-observation
    posterior. Weights are normalized in log space."""
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    eps = np.asarray(eps, dtype=float)
    log_new = math.log(alpha) + marginal_g0_logpdf(eps, g0)
    for i in range(eps.size):
        state._detach(i)
        k = state._n_live
        e_i = eps[i]
        diff = e_i - state._mu[:k]
        logw = np.empty(k + 1)
        logw[:k] = (np.log(state._count[:k])
                    + state._log_norm[:k]
                    - diff * diff * state._half_prec[:k])
        logw[k] = log_new[i]
        logw -= logw.max()
        probs = np.exp(logw)
        cum = np.cumsum(probs)
        pick = int(np.searchsorted(cum, rng.random() * cum[-1],
                                   side="right"))
        if pick >= k:
            mu, sigma = draw_g0_posterior(eps[i:i + 1], g0, rng)
            state._new_cluster(i, mu, sigma)
        else:
            state._attach(i, pick)


def ew_draw_b(eps: np.ndarray, state: ClusterState, g0: BaselineG0,
              rng: np.random.Generator) -> None:
    """Within-cluster redraw: every occupied cluster's (mu, sigma) is
    redrawn from its conjugate posterior given its members' errors. The
    partition is unchanged."""
    eps = np.asarray(eps, dtype=float)
    slots = state.slot_labels()
    order = np.argsort(slots, kind="stable")
    counts = state._count[:state._n_live]
    bounds = np.concatenate([[0], np.cumsum(counts)])
    for slot in range(state._n_live):
        members = order[bounds[slot]:bounds[slot + 1]]
        mu, sigma = draw_g0_posterior(eps[members], g0, rng)
        state._set_slot(slot, mu, sigma * sigma)


# ---------------------------------------------------------------------------
# Concentration parameter

def draw_alpha(i_unique: int, prior: AlphaPrior,
               rng: np.random.Generator) -> float:
    """Draw alpha from its grid posterior given the occupied cluster count:
    weight_k proportional to P(I = i_unique | alpha_k, n) * prior weight.
    The Stirling factor is constant across the grid and drops out."""
    if not (1 <= i_unique <= prior.n):
        raise ValueError(
            f"i_unique must lie in [1, {prior.n}], got {i_unique}")
    grid = prior.grid
    if grid.size == 1:
        return float(grid[0])
    logw = (prior.log_weights + i_unique * np.log(grid)
            + gammaln(grid) - gammaln(grid + prior.n))
    logw = logw - logw.max()
    probs = np.exp(logw)
    cum = np.cumsum(probs)
    pick = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
    return float(grid[min(pick, grid.size - 1)])
