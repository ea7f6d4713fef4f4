"""Transformations of zero-inflated intensity matrices.

A raw intensity matrix holds nonnegative values where an exact zero encodes
a point mass value (PMV).  Two representations are produced from it:

* component split: a binary presence matrix D plus a continuous matrix U of
  log intensities with PMVs filled at the per-column mean of the logged
  non-PMVs, and
* single-matrix imputation: a matrix X of log intensities with PMVs filled
  at half the global minimum of the logged non-PMVs.

Also provided: PMV-share column filtering, scale standardization, and the
residual-offset regression used to absorb demographic covariates.
"""

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DegenerateColumnError, InvalidInputError, SchemaError

LOG_FUNCS = {"natural": np.log, "base2": np.log2}


# ---------------------------------------------------------------------------
# Containers
# ---------------------------------------------------------------------------

@dataclass
class IntensityMatrix:
    """Nonnegative raw intensities; an exact zero is a PMV."""

    values: np.ndarray
    column_ids: list
    row_ids: Optional[list] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise InvalidInputError("intensity values must be a 2-d array")
        n, q = self.values.shape
        if len(self.column_ids) != q:
            raise InvalidInputError(
                f"{len(self.column_ids)} column ids for {q} columns")
        if self.row_ids is not None and len(self.row_ids) != n:
            raise InvalidInputError(f"{len(self.row_ids)} row ids for {n} rows")
        if not np.isfinite(self.values).all():
            raise InvalidInputError("intensities contain NaN or infinite entries")
        if (self.values < 0).any():
            raise InvalidInputError("intensities must be nonnegative (0 encodes a PMV)")

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]

    def subset_rows(self, idx) -> "IntensityMatrix":
        rows = None if self.row_ids is None else [self.row_ids[i] for i in idx]
        return IntensityMatrix(self.values[np.asarray(idx)], list(self.column_ids), rows)

    def subset_columns(self, mask) -> "IntensityMatrix":
        mask = np.asarray(mask)
        if mask.dtype == bool:
            cols = [c for c, keep in zip(self.column_ids, mask) if keep]
            vals = self.values[:, mask]
        else:
            cols = [self.column_ids[j] for j in mask]
            vals = self.values[:, mask]
        return IntensityMatrix(vals, cols, self.row_ids)


@dataclass
class TransformStats:
    """Statistics that define (and allow replaying) the transformations.

    u_fill is per column (mean of logged non-PMVs); x_fill is one global
    value; col_sd is the standard deviation of the logged non-PMVs and is
    the scale used for standardizing U and X columns.  Columns without any
    non-PMV are degenerate: they are dropped and listed in dropped_columns.
    """

    log_base: str
    column_ids: list
    u_fill: np.ndarray
    n_plus: np.ndarray
    col_sd: np.ndarray
    pmv_share: np.ndarray
    x_fill: Optional[float] = None
    x_fill_rule: str = "half-min-log"
    dropped_columns: list = field(default_factory=list)

    @property
    def n_cols(self) -> int:
        return len(self.column_ids)

    def scales(self) -> np.ndarray:
        """Per-column standardization scale; zero-sd columns fall back to 1."""
        return np.where(self.col_sd > 0, self.col_sd, 1.0)


@dataclass
class ComponentBundle:
    """Derived design blocks sharing the column order of TransformStats.

    U and X are on the raw log scale (fills applied, not yet standardized);
    D is the 0/1 presence indicator.  u_std / x_std are the standardized
    versions actually entering the estimators.
    """

    U: np.ndarray
    D: np.ndarray
    transform: TransformStats
    X: Optional[np.ndarray] = None
    _u_std: Optional[np.ndarray] = None
    _x_std: Optional[np.ndarray] = None

    @property
    def column_ids(self) -> list:
        return self.transform.column_ids

    @property
    def n_rows(self) -> int:
        return self.U.shape[0]

    @property
    def u_std(self) -> np.ndarray:
        if self._u_std is None:
            self._u_std = self.U / self.transform.scales()
        return self._u_std

    @property
    def x_std(self) -> np.ndarray:
        if self.X is None:
            raise InvalidInputError("bundle was built without the imputed matrix X")
        if self._x_std is None:
            self._x_std = self.X / self.transform.scales()
        return self._x_std


@dataclass
class OffsetModel:
    """Least-squares fit of the outcome on demographic covariates."""

    covariate_names: list
    coefficients: np.ndarray  # intercept first

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=np.float64)
        if self.coefficients.shape[0] != len(self.covariate_names) + 1:
            raise InvalidInputError("coefficient count must be covariate count + 1")

    def predict(self, covariates) -> np.ndarray:
        covariates = np.atleast_2d(np.asarray(covariates, dtype=np.float64))
        if covariates.shape[1] != len(self.covariate_names):
            raise SchemaError(
                f"offset model expects {len(self.covariate_names)} covariates, "
                f"got {covariates.shape[1]}")
        return self.coefficients[0] + covariates @ self.coefficients[1:]


@dataclass
class PreparedMatrix:
    """Memory-lean view of an intensity matrix for prediction.

    logpos holds log(z) at non-PMVs and 0 at PMVs; D is the presence
    indicator as float.  Fill and scale arithmetic is deferred to the
    prediction step so that no per-model copies of large matrices arise.
    """

    logpos: np.ndarray
    D: np.ndarray
    column_ids: list

    @property
    def n_rows(self) -> int:
        return self.logpos.shape[0]


# ---------------------------------------------------------------------------
# Core operations
# ---------------------------------------------------------------------------

def _column_stats(Z: IntensityMatrix, log_base: str):
    if log_base not in LOG_FUNCS:
        raise InvalidInputError(f"unknown log base {log_base!r}")
    vals = Z.values
    n = vals.shape[0]
    if n == 0 or vals.shape[1] == 0:
        raise InvalidInputError("empty intensity matrix")
    positive = vals > 0
    logf = LOG_FUNCS[log_base]
    with np.errstate(divide="ignore"):
        logs = np.where(positive, logf(np.where(positive, vals, 1.0)), 0.0)
    n_plus = positive.sum(axis=0)
    return positive, logs, n_plus


def split_components(Z: IntensityMatrix, log_base: str = "natural") -> ComponentBundle:
    """Represent intensities by a binary presence part and a filled log part.

    D_ij = 1(z_ij > 0).  U_ij is log(z_ij) at non-PMVs and the per-column
    mean of the logged non-PMVs at PMVs.  Columns consisting only of PMVs
    are dropped with a warning and recorded in the transform stats.
    """
    positive, logs, n_plus = _column_stats(Z, log_base)
    degenerate = n_plus == 0
    dropped = [c for c, bad in zip(Z.column_ids, degenerate) if bad]
    if dropped:
        warnings.warn(
            f"dropping {len(dropped)} all-PMV column(s): {dropped[:5]}"
            + ("..." if len(dropped) > 5 else ""))
        keep = ~degenerate
        positive, logs, n_plus = positive[:, keep], logs[:, keep], n_plus[keep]
        column_ids = [c for c, bad in zip(Z.column_ids, degenerate) if not bad]
    else:
        column_ids = list(Z.column_ids)
    n = Z.n_rows

    sums = logs.sum(axis=0)  # PMV cells contribute 0
    u_fill = sums / n_plus
    # sd over the logged non-PMVs only (ddof=1); single-observation columns get 0
    sq = (logs * logs).sum(axis=0)
    var = np.zeros_like(u_fill)
    multi = n_plus > 1
    var[multi] = (sq[multi] - n_plus[multi] * u_fill[multi] ** 2) / (n_plus[multi] - 1)
    col_sd = np.sqrt(np.maximum(var, 0.0))

    D = positive.astype(np.float64)
    U = np.where(positive, logs, u_fill)
    stats = TransformStats(
        log_base=log_base,
        column_ids=column_ids,
        u_fill=u_fill,
        n_plus=n_plus.astype(np.int64),
        col_sd=col_sd,
        pmv_share=1.0 - n_plus / n,
        dropped_columns=dropped,
    )
    return ComponentBundle(U=U, D=D, transform=stats)


def impute_transform(Z: IntensityMatrix, log_base: str = "natural",
                     x_fill_rule: str = "half-min-log"):
    """Single-matrix representation: log transform with a global PMV fill.

    Returns (X, x_fill).  Under the default rule the fill is half the
    minimum of the logged non-PMVs; under "half-min-raw" it is the log of
    half the minimum raw non-PMV.
    """
    positive, logs, n_plus = _column_stats(Z, log_base)
    if not positive.any():
        raise InvalidInputError("matrix has no positive entries to transform")
    if x_fill_rule == "half-min-log":
        x_fill = 0.5 * logs[positive].min()
    elif x_fill_rule == "half-min-raw":
        x_fill = LOG_FUNCS[log_base](0.5 * Z.values[positive].min())
    else:
        raise InvalidInputError(f"unknown x_fill_rule {x_fill_rule!r}")
    X = np.where(positive, logs, x_fill)
    return X, float(x_fill)


def make_bundle(Z: IntensityMatrix, log_base: str = "natural",
                x_fill_rule: str = "half-min-log") -> ComponentBundle:
    """Full bundle: component split plus the imputed matrix X."""
    bundle = split_components(Z, log_base)
    if bundle.transform.dropped_columns:
        keep = [c in set(bundle.column_ids) for c in Z.column_ids]
        Z = Z.subset_columns(np.asarray(keep))
    X, x_fill = impute_transform(Z, log_base, x_fill_rule)
    bundle.X = X
    bundle.transform.x_fill = x_fill
    bundle.transform.x_fill_rule = x_fill_rule
    return bundle


def filter_max_pmv(Z: IntensityMatrix, max_pmv: float) -> IntensityMatrix:
    """Keep exactly the columns whose PMV share does not exceed max_pmv."""
    if not 0 <= max_pmv <= 1:
        raise InvalidInputError("max_pmv must lie in [0, 1]")
    share = (Z.values == 0).mean(axis=0)
    return Z.subset_columns(share <= max_pmv)


def standardize(M: np.ndarray, sds: np.ndarray) -> np.ndarray:
    """Divide each column by its scale; scales must be strictly positive."""
    M = np.asarray(M, dtype=np.float64)
    sds = np.asarray(sds, dtype=np.float64)
    if sds.shape[0] != M.shape[1]:
        raise InvalidInputError("one scale per column required")
    bad = np.nonzero(sds <= 0)[0]
    if bad.size:
        raise DegenerateColumnError(
            f"non-positive standard deviation for column index {bad[0]}")
    return M / sds


def residual_offset(covariates: np.ndarray, y: np.ndarray,
                    covariate_names=None):
    """OLS of the outcome on covariates; fitted values become the offset.

    Downstream penalized fits then target y minus this offset, and the
    stored model supplies offsets for new rows.
    """
    covariates = np.atleast_2d(np.asarray(covariates, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    n, p = covariates.shape
    if y.shape[0] != n:
        raise InvalidInputError("covariates and outcome lengths differ")
    if p + 1 > n:
        raise InvalidInputError("more covariates (plus intercept) than observations")
    design = np.column_stack([np.ones(n), covariates])
    coef, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    if rank < p + 1:
        raise InvalidInputError("covariate matrix is rank deficient")
    if covariate_names is None:
        covariate_names = [f"c{j}" for j in range(p)]
    model = OffsetModel(list(covariate_names), coef)
    return model, design @ coef


def prepare_matrix(Z: IntensityMatrix, log_base: str = "natural") -> PreparedMatrix:
    """Precompute the log-positive part and presence mask for prediction."""
    positive, logs, _ = _column_stats(Z, log_base)
    return PreparedMatrix(logpos=logs, D=positive.astype(np.float64),
                          column_ids=list(Z.column_ids))


def transform_with_stats(Z: IntensityMatrix, stats: TransformStats):
    """Apply training-time fills and scales to new rows.

    Returns (u_std, D, x_std); x_std is None when the stats carry no x_fill.
    Columns must match the stats' column ids exactly (order included).
    """
    if list(Z.column_ids) != list(stats.column_ids):
        raise SchemaError("column ids of new data do not match the transform stats")
    positive, logs, _ = _column_stats(Z, stats.log_base)
    scales = stats.scales()
    D = positive.astype(np.float64)
    u_std = np.where(positive, logs, stats.u_fill) / scales
    x_std = None
    if stats.x_fill is not None:
        x_std = np.where(positive, logs, stats.x_fill) / scales
    return u_std, D, x_std
