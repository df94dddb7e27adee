"""Datasets, cutpoint grids, and CSV ingestion.

The response is always stored centered; the sampled function lives on the
centered scale and the stored mean is added back at reporting time.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np


class DataError(ValueError):
    """Raised for malformed or degenerate input data."""


@dataclass
class Dataset:
    """Predictor matrix and centered response.

    Attributes
    ----------
    x : ndarray, shape (n, p)
        Predictor matrix. Binary indicators are stored as 0/1 reals.
    y : ndarray, shape (n,)
        Centered response.
    y_mean : float
        Mean removed from the raw response.
    """

    x: np.ndarray
    y: np.ndarray
    y_mean: float = 0.0

    @classmethod
    def from_xy(cls, x, y) -> "Dataset":
        """Validate raw arrays, center y, and build a Dataset."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2:
            raise DataError(f"x must be 2-d, got shape {x.shape}")
        n, p = x.shape
        if n < 1 or p < 1:
            raise DataError(f"need n >= 1 and p >= 1, got shape {x.shape}")
        if y.shape != (n,):
            raise DataError(f"y shape {y.shape} does not match x rows {n}")
        if not np.all(np.isfinite(x)):
            raise DataError("x contains non-finite entries")
        if not np.all(np.isfinite(y)):
            raise DataError("y contains non-finite entries")
        y_mean = float(y.mean())
        yc = y - y_mean
        # one more pass kills the last ulp of the mean for large offsets
        yc = yc - yc.mean()
        return cls(x=x, y=yc, y_mean=y_mean)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]


@dataclass
class CutpointGrid:
    """Per-predictor ordered cutpoint values.

    values[j] is a strictly increasing 1-d array for predictor j. A constant
    predictor gets an empty array and is never proposed for a split.
    """

    values: list = field(default_factory=list)

    @property
    def p(self) -> int:
        return len(self.values)

    def n_cuts(self, j: int) -> int:
        return len(self.values[j])

    def value(self, j: int, idx: int) -> float:
        return float(self.values[j][idx])

    def index_of(self, j: int, value: float) -> int:
        """Exact-match lookup of a cutpoint value. Returns -1 if absent."""
        grid = self.values[j]
        pos = int(np.searchsorted(grid, value))
        if pos < len(grid) and grid[pos] == value:
            return pos
        return -1


def build_cutpoints(data: Dataset, num_cut: int = 100) -> CutpointGrid:
    """Build per-predictor cutpoint grids.

    Each predictor gets num_cut equally spaced interior points strictly
    between its observed min and max. A 0/1 binary column gets the single
    cutpoint 0.5; a constant column gets an empty grid.
    """
    if num_cut < 1:
        raise DataError(f"num_cut must be >= 1, got {num_cut}")
    grids = []
    for j in range(data.p):
        col = data.x[:, j]
        lo, hi = float(col.min()), float(col.max())
        if lo == hi:
            grids.append(np.empty(0))
            continue
        uniq = np.unique(col)
        if len(uniq) == 2 and uniq[0] == 0.0 and uniq[1] == 1.0:
            grids.append(np.array([0.5]))
            continue
        k = np.arange(1, num_cut + 1)
        grids.append(lo + (hi - lo) * k / (num_cut + 1))
    return CutpointGrid(values=grids)


@dataclass
class PerObsErrorParams:
    """Per-observation error location and scale used by the weighted tree
    updates."""

    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=float)
        self.sigma = np.asarray(self.sigma, dtype=float)
        if self.mu.shape != self.sigma.shape or self.mu.ndim != 1:
            raise DataError("mu and sigma must be 1-d arrays of equal length")
        if not np.all(np.isfinite(self.mu)):
            raise DataError("mu contains non-finite entries")
        if not (np.all(np.isfinite(self.sigma)) and np.all(self.sigma > 0)):
            raise DataError("sigma must be finite and positive")

    @classmethod
    def homoscedastic(cls, n: int, sigma: float) -> "PerObsErrorParams":
        return cls(mu=np.zeros(n), sigma=np.full(n, float(sigma)))


@dataclass
class LinearFit:
    """Least-squares pilot fit of y on x with an intercept."""

    coef: np.ndarray          # intercept first
    residuals: np.ndarray
    resid_sd: float           # sqrt(RSS / (n - rank)), 0.0 for an exact fit
    r2: float


def least_squares_fit(data: Dataset) -> LinearFit:
    """Pilot regression used for data-based prior calibration."""
    n = data.n
    design = np.column_stack([np.ones(n), data.x])
    coef, _, rank, _ = np.linalg.lstsq(design, data.y, rcond=None)
    resid = data.y - design @ coef
    rss = float(resid @ resid)
    dof = n - rank
    resid_sd = float(np.sqrt(rss / dof)) if dof > 0 else 0.0
    tss = float(data.y @ data.y)
    # residual variation at float-noise level below the response scale is an
    # exact fit; report it as such so calibration can refuse cleanly
    if tss > 0 and rss <= 1e-20 * tss:
        resid_sd = 0.0
    r2 = 1.0 - rss / tss if tss > 0 else 0.0
    return LinearFit(coef=coef, residuals=resid, resid_sd=resid_sd, r2=r2)


def load_csv(path, response: str, predictors: list[str]) -> Dataset:
    """Load a numeric CSV with a header row into a Dataset.

    Raises DataError naming the offending row and column for missing or
    non-numeric cells, and for a constant response.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        cols = {name: i for i, name in enumerate(header)}
        for name in [response, *predictors]:
            if name not in cols:
                raise DataError(f"{path}: no column named {name!r} "
                                f"(found {header})")
        want = [cols[response]] + [cols[name] for name in predictors]
        names = [response, *predictors]
        rows = []
        for rownum, rec in enumerate(reader, start=2):
            if not rec or all(cell.strip() == "" for cell in rec):
                continue
            vals = []
            for name, idx in zip(names, want):
                if idx >= len(rec) or rec[idx].strip() == "":
                    raise DataError(
                        f"{path}: missing value at row {rownum}, "
                        f"column {name!r}")
                try:
                    vals.append(float(rec[idx]))
                except ValueError:
                    raise DataError(
                        f"{path}: non-numeric value {rec[idx]!r} at row "
                        f"{rownum}, column {name!r}") from None
            rows.append(vals)
    if not rows:
        raise DataError(f"{path}: no data rows")
    arr = np.asarray(rows)
    y = arr[:, 0]
    x = arr[:, 1:]
    if np.all(y == y[0]):
        raise DataError(f"{path}: response {response!r} is constant")
    return Dataset.from_xy(x, y)
