"""CSV writers and the saved-draws archive.

Column contracts:
  fits.csv     x1..xp, fhat, lo95, hi95 [, f_true]
  density.csv  e [, dpm_mean, dpm_lo, dpm_hi] [, bart_mean] [, true_density]
  trace.csv    iter, sigma            (homoscedastic model)
               iter, i_unique, alpha  (mixture model)
Row 0 of a trace is the chain's initial state. Floats are written with 17
significant digits so a reload is bit-exact.
"""

from __future__ import annotations

import csv

import numpy as np

from .sampler import ChainResult, DrawRecord
from .priors import BaselineG0

_FMT = "%.17g"


def _write_table(path, header: list[str], columns: list[np.ndarray]):
    n = len(columns[0])
    for col in columns:
        if len(col) != n:
            raise ValueError("column lengths disagree")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(n):
            writer.writerow([_FMT % float(col[i]) for col in columns])


def write_fits_csv(path, x: np.ndarray, fhat, lo95, hi95, f_true=None):
    x = np.asarray(x, dtype=float)
    header = [f"x{j + 1}" for j in range(x.shape[1])]
    columns = [x[:, j] for j in range(x.shape[1])]
    header += ["fhat", "lo95", "hi95"]
    columns += [np.asarray(fhat), np.asarray(lo95), np.asarray(hi95)]
    if f_true is not None:
        header.append("f_true")
        columns.append(np.asarray(f_true))
    _write_table(path, header, columns)


def write_density_csv(path, e, dpm=None, bart_mean=None, true_density=None):
    """dpm, when given, is a (mean, lo, hi) triple on the grid e."""
    header = ["e"]
    columns = [np.asarray(e)]
    if dpm is not None:
        mean, lo, hi = dpm
        header += ["dpm_mean", "dpm_lo", "dpm_hi"]
        columns += [np.asarray(mean), np.asarray(lo), np.asarray(hi)]
    if bart_mean is not None:
        header.append("bart_mean")
        columns.append(np.asarray(bart_mean))
    if true_density is not None:
        header.append("true_density")
        columns.append(np.asarray(true_density))
    _write_table(path, header, columns)


def write_trace_csv(path, traces: dict):
    if "sigma" in traces:
        header = ["iter", "sigma"]
        cols = [np.arange(len(traces["sigma"])), traces["sigma"]]
    else:
        header = ["iter", "i_unique", "alpha"]
        cols = [np.arange(len(traces["i_unique"])), traces["i_unique"],
                traces["alpha"]]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in zip(*cols):
            out = [str(int(row[0]))]
            if header[1] == "i_unique":
                out.append(str(int(row[1])))
                out.append(_FMT % float(row[2]))
            else:
                out.append(_FMT % float(row[1]))
            writer.writerow(out)


def save_draws(path, result: ChainResult, f_true=None):
    """Archive kept draws plus everything summarize needs to rebuild the
    standard outputs."""
    cfg = result.config
    payload = {
        "mode": np.array(cfg.mode),
        "seed": np.array(cfg.seed),
        "n_iter": np.array(cfg.n_iter),
        "n_burn": np.array(cfg.n_burn),
        "keep_every": np.array(cfg.keep_every),
        "m": np.array(cfg.m),
        "x": result.data.x,
        "y": result.data.y,
        "y_mean": np.array(result.data.y_mean),
        "fit": np.stack([d.fit for d in result.draws]),
        "g0_params": np.array([result.priors.g0.nu, result.priors.g0.lam,
                               result.priors.g0.mu0, result.priors.g0.k0]),
    }
    if f_true is not None:
        payload["f_true"] = np.asarray(f_true)
    if cfg.mode == "dpmbart":
        counts = [d.cluster_count.size for d in result.draws]
        offsets = np.concatenate([[0], np.cumsum(counts)])
        payload["alpha"] = np.array([d.alpha for d in result.draws])
        payload["cluster_offsets"] = offsets
        payload["cluster_mu"] = np.concatenate(
            [d.cluster_mu for d in result.draws])
        payload["cluster_sigma"] = np.concatenate(
            [d.cluster_sigma for d in result.draws])
        payload["cluster_count"] = np.concatenate(
            [d.cluster_count for d in result.draws])
        payload["trace_i_unique"] = result.traces["i_unique"]
        payload["trace_alpha"] = result.traces["alpha"]
    else:
        payload["sigma"] = np.array([d.sigma for d in result.draws])
        payload["trace_sigma"] = result.traces["sigma"]
    np.savez_compressed(path, **payload)


class SavedDraws:
    """Reload of a save_draws archive: records plus ancillary arrays."""

    def __init__(self, path):
        with np.load(path, allow_pickle=False) as z:
            self.mode = str(z["mode"])
            self.x = z["x"]
            self.y = z["y"]
            self.y_mean = float(z["y_mean"])
            self.f_true = z["f_true"] if "f_true" in z.files else None
            g = z["g0_params"]
            self.g0 = BaselineG0(nu=float(g[0]), lam=float(g[1]),
                                 mu0=float(g[2]), k0=float(g[3]))
            fits = z["fit"]
            self.traces = {}
            if self.mode == "dpmbart":
                offsets = z["cluster_offsets"]
                self.draws = [
                    DrawRecord(
                        fit=fits[d],
                        alpha=float(z["alpha"][d]),
                        cluster_mu=z["cluster_mu"][offsets[d]:offsets[d + 1]],
                        cluster_sigma=z["cluster_sigma"][
                            offsets[d]:offsets[d + 1]],
                        cluster_count=z["cluster_count"][
                            offsets[d]:offsets[d + 1]])
                    for d in range(fits.shape[0])]
                self.traces["i_unique"] = z["trace_i_unique"]
                self.traces["alpha"] = z["trace_alpha"]
            else:
                self.draws = [DrawRecord(fit=fits[d],
                                         sigma=float(z["sigma"][d]))
                              for d in range(fits.shape[0])]
                self.traces["sigma"] = z["trace_sigma"]


def load_draws(path) -> SavedDraws:
    return SavedDraws(path)
