"""Backfitting kernel for the sum-of-trees fit.

All tree-structure moves integrate the leaf means out analytically, so the
Metropolis-Hastings ratio only involves per-leaf sufficient statistics of
the weighted residuals. Observation weights w_i = 1/sigma_i^2 come from the
error model, which makes the same kernel serve both the homoscedastic and
the mixture-error samplers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import CutpointGrid
from .priors import MuPrior, TreePrior
from .trees import Ensemble, Node, Tree

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class LeafSuffStats:
    """Sufficient statistics of one leaf's weighted residuals.

    count, prec_sum = sum w_i, weighted_resid_sum = sum w_i r_i, plus the
    two accumulators (weighted_sq_sum = sum w_i r_i^2 and
    log_norm_sum = sum log(2 pi sigma_i^2)) needed for the data-only part of
    the marginal likelihood. All five add across disjoint leaves.
    """

    count: int = 0
    prec_sum: float = 0.0
    weighted_resid_sum: float = 0.0
    weighted_sq_sum: float = 0.0
    log_norm_sum: float = 0.0

    @classmethod
    def from_data(cls, r: np.ndarray, w: np.ndarray) -> "LeafSuffStats":
        r = np.asarray(r, dtype=float)
        w = np.asarray(w, dtype=float)
        wr = w * r
        return cls(count=int(r.size),
                   prec_sum=float(w.sum()),
                   weighted_resid_sum=float(wr.sum()),
                   weighted_sq_sum=float((wr * r).sum()),
                   log_norm_sum=float(np.log(2.0 * np.pi / w).sum()))

    def merge(self, other: "LeafSuffStats") -> "LeafSuffStats":
        return LeafSuffStats(
            count=self.count + other.count,
            prec_sum=self.prec_sum + other.prec_sum,
            weighted_resid_sum=self.weighted_resid_sum
            + other.weighted_resid_sum,
            weighted_sq_sum=self.weighted_sq_sum + other.weighted_sq_sum,
            log_norm_sum=self.log_norm_sum + other.log_norm_sum)


def _collapsed_term(prec_sum: float, weighted_resid_sum: float,
                    tau: float) -> float:
    """Partition-dependent part of the leaf marginal:
    0.5 log(v/tau^2) + mhat^2/(2v) with v = 1/(1/tau^2 + prec_sum) and
    mhat = v * weighted_resid_sum. The data-only terms cancel between a
    parent leaf and its children, so move ratios use only this."""
    tau2 = tau * tau
    denom = 1.0 / tau2 + prec_sum
    return (-0.5 * math.log1p(tau2 * prec_sum)
            + 0.5 * weighted_resid_sum * weighted_resid_sum / denom)


def leaf_log_marginal(stats: LeafSuffStats, tau: float) -> float:
    """Log of integral prod_i N(r_i | mu, 1/w_i) N(mu | 0, tau^2) dmu.

    An empty leaf integrates to exactly 1.
    """
    data_part = -0.5 * (stats.log_norm_sum + stats.weighted_sq_sum)
    return data_part + _collapsed_term(stats.prec_sum,
                                       stats.weighted_resid_sum, tau)


def _growable_flags(tree: Tree, grid: CutpointGrid):
    """Leaves, their feasible ranges, and which are growable."""
    leaves = tree.leaves()
    ranges = [tree.feasible_ranges(leaf, grid) for leaf in leaves]
    flags = [bool(np.any(rg[1] > rg[0])) for rg in ranges]
    return leaves, ranges, flags


def birth_death_step(tree: Tree, labels: np.ndarray, x: np.ndarray,
                     r: np.ndarray, w: np.ndarray, grid: CutpointGrid,
                     tree_prior: TreePrior, tau: float,
                     rng: np.random.Generator,
                     min_leaf: int = 0) -> tuple[bool, str]:
    """One birth/death Metropolis-Hastings move on a tree's structure.

    labels maps observations to leaf uids and is updated in place alongside
    accepted moves. Leaf means of nodes created by an accepted move are
    placeholders; draw_leaf_means must follow before the tree's fit is used.
    Returns (accepted, move_kind).
    """
    leaves, ranges, flags = _growable_flags(tree, grid)
    n_growable = sum(flags)
    has_birth = n_growable > 0
    has_death = not tree.root.is_leaf
    if not has_birth and not has_death:
        return False, "none"
    if has_birth and has_death:
        do_birth = rng.random() < 0.5
    else:
        do_birth = has_birth

    if do_birth:
        return _birth(tree, labels, x, r, w, grid, tree_prior, tau, rng,
                      min_leaf, leaves, ranges, flags, n_growable, has_death)
    return _death(tree, labels, r, w, grid, tree_prior, tau, rng,
                  leaves, flags, n_growable, has_birth)


def _birth(tree, labels, x, r, w, grid, tree_prior, tau, rng, min_leaf,
           leaves, ranges, flags, n_growable, has_death):
    growable = [k for k, ok in enumerate(flags) if ok]
    pick = growable[rng.integers(n_growable)]
    leaf, rg = leaves[pick], ranges[pick]
    avail = np.flatnonzero(rg[1] > rg[0])
    var = int(avail[rng.integers(avail.size)])
    lo, hi = int(rg[0, var]), int(rg[1, var])
    cut_index = lo + int(rng.integers(hi - lo))
    cut_value = grid.value(var, cut_index)

    mask = labels == leaf.uid
    idx = np.flatnonzero(mask)
    go_left = x[idx, var] < cut_value
    n_left = int(go_left.sum())
    n_right = idx.size - n_left
    if min_leaf > 0 and (n_left < min_leaf or n_right < min_leaf):
        # children below the minimum leaf size have zero posterior mass
        return False, "birth"

    w_leaf = w[idx]
    wr_leaf = w_leaf * r[idx]
    s_left = float(w_leaf[go_left].sum())
    t_left = float(wr_leaf[go_left].sum())
    s_par = float(w_leaf.sum())
    t_par = float(wr_leaf.sum())
    s_right = s_par - s_left
    t_right = t_par - t_left

    depth = leaf.depth
    ps_d = tree_prior.p_split(depth)
    ps_d1 = tree_prior.p_split(depth + 1)
    log_prior = (math.log(ps_d) + 2.0 * math.log1p(-ps_d1)
                 - math.log1p(-ps_d))
    log_lik = (_collapsed_term(s_left, t_left, tau)
               + _collapsed_term(s_right, t_right, tau)
               - _collapsed_term(s_par, t_par, tau))

    # transition terms: forward picks among growable leaves, reverse picks
    # among the proposed tree's no-grandchild nodes
    parent = leaf.parent
    parent_was_nog = (parent is not None and parent.left.is_leaf
                      and parent.right.is_leaf)
    n_nog_new = len(tree.nog_nodes()) + 1 - (1 if parent_was_nog else 0)
    hi_left = rg[1].copy()
    hi_left[var] = cut_index
    lo_right = rg[0].copy()
    lo_right[var] = cut_index + 1
    n_child_growable = (int(np.any(hi_left > rg[0]))
                        + int(np.any(rg[1] > lo_right)))
    n_growable_new = n_growable - 1 + n_child_growable

    p_birth_here = 0.5 if has_death else 1.0
    p_death_new = 0.5 if n_growable_new > 0 else 1.0
    log_move = (math.log(p_death_new) - math.log(n_nog_new)
                - math.log(p_birth_here) + math.log(n_growable))

    log_ratio = log_prior + log_lik + log_move
    if rng.random() < math.exp(min(0.0, log_ratio)):
        left, right = tree.grow(leaf, var, cut_index, cut_value)
        labels[idx[go_left]] = left.uid
        labels[idx[~go_left]] = right.uid
        return True, "birth"
    return False, "birth"


def _death(tree, labels, r, w, grid, tree_prior, tau, rng,
           leaves, flags, n_growable, has_birth):
    nogs = tree.nog_nodes()
    nog = nogs[rng.integers(len(nogs))]

    mask_left = labels == nog.left.uid
    mask_right = labels == nog.right.uid
    wl, wr_ = w[mask_left], w[mask_right]
    s_left = float(wl.sum())
    t_left = float((wl * r[mask_left]).sum())
    s_right = float(wr_.sum())
    t_right = float((wr_ * r[mask_right]).sum())
    s_par = s_left + s_right
    t_par = t_left + t_right

    depth = nog.depth
    ps_d = tree_prior.p_split(depth)
    ps_d1 = tree_prior.p_split(depth + 1)
    log_prior = (math.log1p(-ps_d) - math.log(ps_d)
                 - 2.0 * math.log1p(-ps_d1))
    log_lik = (_collapsed_term(s_par, t_par, tau)
               - _collapsed_term(s_left, t_left, tau)
               - _collapsed_term(s_right, t_right, tau))

    flag_by_id = {id(leaf): ok for leaf, ok in zip(leaves, flags)}
    n_growable_new = (n_growable - flag_by_id[id(nog.left)]
                      - flag_by_id[id(nog.right)] + 1)
    death_avail_new = nog.parent is not None
    p_death_here = 0.5 if has_birth else 1.0
    p_birth_new = 0.5 if death_avail_new else 1.0
    log_move = (math.log(p_birth_new) - math.log(n_growable_new)
                + math.log(len(nogs)) - math.log(p_death_here))

    log_ratio = log_prior + log_lik + log_move
    if rng.random() < math.exp(min(0.0, log_ratio)):
        merged = tree.prune(nog)
        labels[mask_left | mask_right] = merged.uid
        return True, "death"
    return False, "death"


def draw_leaf_means(tree: Tree, labels: np.ndarray, r: np.ndarray,
                    w: np.ndarray, tau: float,
                    rng: np.random.Generator) -> np.ndarray:
    """Conjugate draw of every leaf mean (depth-first order) given the tree
    structure; returns the tree's fitted vector. An empty leaf draws from
    the N(0, tau^2) prior."""
    fit = np.empty(labels.size)
    inv_tau2 = 1.0 / (tau * tau)
    for leaf in tree.leaves():
        mask = labels == leaf.uid
        w_leaf = w[mask]
        v = 1.0 / (inv_tau2 + float(w_leaf.sum()))
        mhat = v * float((w_leaf * r[mask]).sum())
        leaf.mu = mhat + math.sqrt(v) * rng.standard_normal()
        fit[mask] = leaf.mu
    return fit


def uid_assignment(tree: Tree, x: np.ndarray) -> np.ndarray:
    """Leaf uid of each observation."""
    out = np.empty(x.shape[0], dtype=np.int64)

    def descend(node, idx):
        if node.is_leaf:
            out[idx] = node.uid
            return
        go_left = x[idx, node.var] < node.cut_value
        descend(node.left, idx[go_left])
        descend(node.right, idx[~go_left])

    descend(tree.root, np.arange(x.shape[0]))
    return out


class BackfitState:
    """Per-chain cache of leaf assignments and fitted vectors.

    The cache is rebuilt from scratch every refresh_every sweeps to stop
    float drift in the running total; with check enabled the rebuild also
    verifies the incremental cache (debug mode).
    """

    def __init__(self, ensemble: Ensemble, x: np.ndarray,
                 refresh_every: int = 1000,
                 track_acceptance: bool = False):
        self.ensemble = ensemble
        self.labels = [uid_assignment(t, x) for t in ensemble.trees]
        self.tree_fits = [self._fit_from_tree(t, lab)
                          for t, lab in zip(ensemble.trees, self.labels)]
        self.total_fit = np.sum(self.tree_fits, axis=0)
        self.refresh_every = refresh_every
        self.sweeps = 0
        self.acceptance_log: list | None = [] if track_acceptance else None

    @staticmethod
    def _fit_from_tree(tree: Tree, labels: np.ndarray) -> np.ndarray:
        fit = np.empty(labels.size)
        for leaf in tree.leaves():
            fit[labels == leaf.uid] = leaf.mu
        return fit

    def refresh(self, x: np.ndarray, check: bool = False):
        labels = [uid_assignment(t, x) for t in self.ensemble.trees]
        fits = [self._fit_from_tree(t, lab)
                for t, lab in zip(self.ensemble.trees, labels)]
        total = np.sum(fits, axis=0)
        if check:
            for j, (old, new) in enumerate(zip(self.labels, labels)):
                if not np.array_equal(old, new):
                    raise RuntimeError(
                        f"cache inconsistency: tree {j} leaf assignment "
                        "drifted from its rules")
            err = float(np.max(np.abs(self.total_fit - total)))
            if err > 1e-8:
                raise RuntimeError(
                    f"cache inconsistency: running fit total off by {err}")
        self.labels = labels
        self.tree_fits = fits
        self.total_fit = total


def backfit_sweep(state: BackfitState, x: np.ndarray, y_shift: np.ndarray,
                  w: np.ndarray, grid: CutpointGrid, tree_prior: TreePrior,
                  mu_prior: MuPrior, rng: np.random.Generator,
                  min_leaf: int = 0, check_cache: bool = False):
    """One full pass over the ensemble: for each tree, one structure move
    then a redraw of its leaf means, against the residual that excludes the
    tree's own fit. y_shift is the response minus the error-model means."""
    tau = mu_prior.tau
    total = state.total_fit
    for j, tree in enumerate(state.ensemble.trees):
        offsets = total - state.tree_fits[j]
        r = y_shift - offsets
        accepted, move = birth_death_step(
            tree, state.labels[j], x, r, w, grid, tree_prior, tau, rng,
            min_leaf=min_leaf)
        if state.acceptance_log is not None:
            state.acceptance_log.append((move, accepted))
        fit_j = draw_leaf_means(tree, state.labels[j], r, w, tau, rng)
        total = offsets + fit_j
        state.tree_fits[j] = fit_j
    state.total_fit = total
    state.sweeps += 1
    if state.sweeps % state.refresh_every == 0:
        state.refresh(x, check=check_cache)


def draw_sigma_bart(resid: np.ndarray, nu: float, lam: float,
                    rng: np.random.Generator) -> float:
    """Conjugate draw of the homoscedastic error sd:
    sigma^2 = (nu*lam + sum r_i^2) / chisq_{nu + n}. With no residuals this
    is a draw from the prior."""
    resid = np.asarray(resid, dtype=float)
    n = resid.size
    return math.sqrt((nu * lam + float(resid @ resid))
                     / rng.chisquare(nu + n))
