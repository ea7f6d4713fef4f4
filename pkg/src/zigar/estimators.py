"""The fitting strategies: one-stage, two-stage, and oracle baselines.

Method tags and the component blocks each one estimates:

=============  =======================  ====================  ============
method         stage 1                  stage 2               coefficients
=============  =======================  ====================  ============
oracle-ols     true predictors, U + D   -                     U, D
oracle-ridge   true predictors, U + D   -                     U, D
ridge          U + D                    -                     U, D
lasso          X                        -                     X
lasso-ridge    X (lasso)                selected U + D        U, D
ridge-lasso    U + D (ridge)            X + D, weighted       X, D
ridge-garrote  U + D (ridge)            nonneg shrinkage c    U, D
=============  =======================  ====================  ============

Intercepts are handled by centering the response and the design columns
before solving and restoring the intercept afterwards; the intercept is
never penalized.  All designs use standardized U/X columns and the raw 0/1
presence matrix D.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import InvalidInputError, RankDeficiencyError, SchemaError
from .preprocess import (ComponentBundle, IntensityMatrix, OffsetModel,
                         PreparedMatrix, TransformStats, prepare_matrix)
from .solvers import PenaltySpec, SolverOptions, coord_descent, ridge_solve

COMPONENTS = {
    "oracle-ols": ("U", "D"),
    "oracle-ridge": ("U", "D"),
    "ridge": ("U", "D"),
    "lasso": ("X",),
    "lasso-ridge": ("U", "D"),
    "ridge-lasso": ("X", "D"),
    "ridge-garrote": ("U", "D"),
}
METHODS = tuple(COMPONENTS)
SELECTING_METHODS = ("lasso", "lasso-ridge", "ridge-lasso", "ridge-garrote")


@dataclass
class FittedModel:
    """Immutable result of one fit; sufficient for prediction on new data."""

    method: str
    intercept: float
    transform: TransformStats
    coef_u: Optional[np.ndarray] = None
    coef_d: Optional[np.ndarray] = None
    coef_x: Optional[np.ndarray] = None
    garrote_c: Optional[np.ndarray] = None
    penalties: tuple = ()
    offset_model: Optional[OffsetModel] = None
    retained: Optional[np.ndarray] = None        # bool mask; None = all columns
    intercept_only: bool = False
    stage1_coef: Optional[tuple] = None          # (beta_u, beta_d) of stage 1
    stage2_weights: Optional[np.ndarray] = None  # per-predictor lasso weights
    excluded: list = field(default_factory=list)  # infinite-weight predictors

    @property
    def column_ids(self) -> list:
        return self.transform.column_ids

    def retained_mask(self) -> np.ndarray:
        if self.retained is None:
            return np.ones(len(self.column_ids), dtype=bool)
        return self.retained

    def coef_map(self) -> dict:
        """(predictor_id, component) -> coefficient, for retained predictors."""
        arrays = {"U": self.coef_u, "D": self.coef_d, "X": self.coef_x}
        ids = self.column_ids
        mask = self.retained_mask()
        out = {}
        for comp in COMPONENTS[self.method]:
            arr = arrays[comp]
            if arr is None:
                continue
            for j, pid in enumerate(ids):
                if mask[j]:
                    out[(pid, comp)] = float(arr[j])
        return out


# ---------------------------------------------------------------------------
# Fit helpers
# ---------------------------------------------------------------------------

def _effective_y(y, offset):
    y = np.asarray(y, dtype=np.float64)
    if offset is None:
        return y
    offset = np.asarray(offset, dtype=np.float64)
    if offset.shape != y.shape:
        raise InvalidInputError("offset and outcome lengths differ")
    return y - offset


def _centered(A, y_eff):
    mu = A.mean(axis=0)
    ym = float(y_eff.mean())
    return A - mu, y_eff - ym, mu, ym


def _ridge_ud(bundle: ComponentBundle, y_eff, lam):
    """Stage-1 ridge on [U | D] with one penalty on both blocks."""
    q = len(bundle.column_ids)
    A = np.hstack([bundle.u_std, bundle.D])
    Ac, yc, mu, ym = _centered(A, y_eff)
    beta = ridge_solve(Ac, yc, lam)
    intercept = ym - mu @ beta
    return beta[:q], beta[q:], intercept


def fit_one_stage(method: str, bundle: ComponentBundle, y, lam: float,
                  offset=None, opts: Optional[SolverOptions] = None) -> FittedModel:
    """Ridge on [U | D] or lasso on X at a single penalty value."""
    y_eff = _effective_y(y, offset)
    if method == "ridge":
        bu, bd, intercept = _ridge_ud(bundle, y_eff, lam)
        return FittedModel("ridge", intercept, bundle.transform,
                           coef_u=bu, coef_d=bd, penalties=(lam,))
    if method == "lasso":
        Ac, yc, mu, ym = _centered(bundle.x_std, y_eff)
        bx = coord_descent(Ac, yc, PenaltySpec(lam), opts)
        return FittedModel("lasso", ym - mu @ bx, bundle.transform,
                           coef_x=bx, penalties=(lam,),
                           intercept_only=not bx.any())
    raise InvalidInputError(f"fit_one_stage handles ridge/lasso, not {method!r}")


def fit_lasso_ridge(bundle: ComponentBundle, y, lam1: float, lam2: float,
                    offset=None, opts: Optional[SolverOptions] = None) -> FittedModel:
    """Lasso selection on X, then ridge on the U/D components of the survivors."""
    y_eff = _effective_y(y, offset)
    Ac, yc, mu, ym = _centered(bundle.x_std, y_eff)
    bx = coord_descent(Ac, yc, PenaltySpec(lam1), opts)
    support = np.nonzero(bx)[0]
    q = len(bundle.column_ids)
    bu = np.zeros(q)
    bd = np.zeros(q)
    if support.size == 0:
        return FittedModel("lasso-ridge", ym, bundle.transform,
                           coef_u=bu, coef_d=bd, penalties=(lam1, lam2),
                           intercept_only=True,
                           stage1_coef=(bx, None))
    A2 = np.hstack([bundle.u_std[:, support], bundle.D[:, support]])
    A2c, yc2, mu2, ym2 = _centered(A2, y_eff)
    beta2 = ridge_solve(A2c, yc2, lam2)
    bu[support] = beta2[:support.size]
    bd[support] = beta2[support.size:]
    return FittedModel("lasso-ridge", ym2 - mu2 @ beta2, bundle.transform,
                       coef_u=bu, coef_d=bd, penalties=(lam1, lam2),
                       intercept_only=False, stage1_coef=(bx, None))


def ridge_lasso_weights(beta_u, beta_d):
    """Per-predictor weight: reciprocal summed magnitude of the stage-1 pair."""
    denom = np.abs(beta_u) + np.abs(beta_d)
    with np.errstate(divide="ignore"):
        return np.where(denom > 0, 1.0 / denom, np.inf)


def fit_ridge_lasso(bundle: ComponentBundle, y, lam1: float, lam2: float,
                    offset=None, opts: Optional[SolverOptions] = None) -> FittedModel:
    """Ridge on [U | D], then a weighted lasso on [X | D].

    Both columns of predictor j carry the same weight, but the X and D
    components are selected independently at the second stage.
    """
    y_eff = _effective_y(y, offset)
    bu1, bd1, _ = _ridge_ud(bundle, y_eff, lam1)
    w = ridge_lasso_weights(bu1, bd1)
    excluded = [bundle.column_ids[j] for j in np.nonzero(~np.isfinite(w))[0]]
    A2 = np.hstack([bundle.x_std, bundle.D])
    A2c, yc, mu, ym = _centered(A2, y_eff)
    q = len(bundle.column_ids)
    beta2 = coord_descent(A2c, yc, PenaltySpec(lam2, np.concatenate([w, w])), opts)
    bx, bd = beta2[:q], beta2[q:]
    return FittedModel("ridge-lasso", ym - mu @ beta2, bundle.transform,
                       coef_x=bx, coef_d=bd, penalties=(lam1, lam2),
                       intercept_only=not beta2.any(),
                       stage1_coef=(bu1, bd1), stage2_weights=w,
                       excluded=excluded)


def garrote_design(bundle: ComponentBundle, beta_u, beta_d) -> np.ndarray:
    """One column per predictor: its stage-1 fitted contribution U_j b_Uj + D_j b_Dj."""
    return bundle.u_std * beta_u + bundle.D * beta_d


def fit_ridge_garrote(bundle: ComponentBundle, y, lam1: float, lam2: float,
                      offset=None, opts: Optional[SolverOptions] = None) -> FittedModel:
    """Ridge on [U | D], then nonnegative shrinkage factors on the q contributions.

    The factor c_j multiplies both stage-1 coefficients of predictor j, so a
    predictor is kept or dropped as a whole; c_j = 0 deselects it.
    """
    y_eff = _effective_y(y, offset)
    bu1, bd1, _ = _ridge_ud(bundle, y_eff, lam1)
    V = garrote_design(bundle, bu1, bd1)
    Vc, yc, mu, ym = _centered(V, y_eff)
    c = coord_descent(Vc, yc, PenaltySpec(lam2, sign_constraint="nonnegative"), opts)
    return FittedModel("ridge-garrote", ym - mu @ c, bundle.transform,
                       coef_u=c * bu1, coef_d=c * bd1, garrote_c=c,
                       penalties=(lam1, lam2),
                       intercept_only=not c.any(), stage1_coef=(bu1, bd1))


def _resolve_true_mask(bundle: ComponentBundle, true_set) -> np.ndarray:
    ids = bundle.column_ids
    mask = np.zeros(len(ids), dtype=bool)
    index = {pid: j for j, pid in enumerate(ids)}
    for t in true_set:
        if isinstance(t, (int, np.integer)):
            mask[int(t)] = True
        else:
            if t not in index:
                raise SchemaError(f"true predictor {t!r} not among the columns")
            mask[index[t]] = True
    return mask


def fit_oracle(kind: str, bundle: ComponentBundle, y, true_set, lam=None,
               offset=None) -> FittedModel:
    """OLS or ridge benchmark on the U/D columns of the true predictors only.

    Constant columns (e.g. a presence indicator that is all ones) carry no
    information beyond the intercept; the OLS variant drops them with a zero
    coefficient instead of failing, mirroring how aliased terms are treated
    in standard regression software.
    """
    if kind not in ("ols", "ridge"):
        raise InvalidInputError(f"oracle kind must be ols or ridge, not {kind!r}")
    y_eff = _effective_y(y, offset)
    mask = _resolve_true_mask(bundle, true_set)
    idx = np.nonzero(mask)[0]
    q = len(bundle.column_ids)
    A = np.hstack([bundle.u_std[:, idx], bundle.D[:, idx]])
    Ac, yc, mu, ym = _centered(A, y_eff)
    if kind == "ols":
        keep = np.abs(Ac).max(axis=0) > 0
        try:
            beta_kept = ridge_solve(Ac[:, keep], yc, 0.0)
        except RankDeficiencyError as exc:
            raise RankDeficiencyError(
                "oracle-ols design is rank deficient; use oracle-ridge") from exc
        beta = np.zeros(A.shape[1])
        beta[keep] = beta_kept
        lam_used = 0.0
    else:
        if lam is None:
            raise InvalidInputError("oracle-ridge requires a penalty value")
        beta = ridge_solve(Ac, yc, lam)
        lam_used = lam
    bu = np.zeros(q)
    bd = np.zeros(q)
    bu[idx] = beta[:idx.size]
    bd[idx] = beta[idx.size:]
    return FittedModel(f"oracle-{kind}", ym - mu @ beta, bundle.transform,
                       coef_u=bu, coef_d=bd, penalties=(lam_used,),
                       retained=mask)


def fit_method(method: str, bundle: ComponentBundle, y, penalties,
               offset=None, true_set=None,
               opts: Optional[SolverOptions] = None) -> FittedModel:
    """Dispatch a method tag plus penalty tuple to the right fitting routine."""
    if method not in METHODS:
        raise InvalidInputError(f"unknown method {method!r}")
    penalties = tuple(np.atleast_1d(penalties)) if penalties is not None else ()
    if method in ("ridge", "lasso"):
        return fit_one_stage(method, bundle, y, penalties[0], offset, opts)
    if method == "lasso-ridge":
        return fit_lasso_ridge(bundle, y, *penalties[:2], offset=offset, opts=opts)
    if method == "ridge-lasso":
        return fit_ridge_lasso(bundle, y, *penalties[:2], offset=offset, opts=opts)
    if method == "ridge-garrote":
        return fit_ridge_garrote(bundle, y, *penalties[:2], offset=offset, opts=opts)
    if true_set is None:
        raise InvalidInputError("oracle methods need the true predictor set")
    kind = method.split("-", 1)[1]
    lam = penalties[0] if penalties else None
    return fit_oracle(kind, bundle, y, true_set, lam=lam, offset=offset)


# ---------------------------------------------------------------------------
# Prediction and selection
# ---------------------------------------------------------------------------

def _align_prepared(prep: PreparedMatrix, ids) -> PreparedMatrix:
    if list(prep.column_ids) == list(ids):
        return prep
    index = {pid: j for j, pid in enumerate(prep.column_ids)}
    try:
        pos = [index[pid] for pid in ids]
    except KeyError as exc:
        raise SchemaError(f"prediction data misses column {exc.args[0]!r}") from exc
    return PreparedMatrix(prep.logpos[:, pos], prep.D[:, pos], list(ids))


def predict(model: FittedModel, data, covariates=None) -> np.ndarray:
    """Apply a fitted model to new data.

    ``data`` may be the training ComponentBundle, a raw IntensityMatrix, or
    a PreparedMatrix.  Raw data is transformed with the training-time fills
    and scales.  When the model was fit against an offset, matching
    covariate rows must be supplied.
    """
    stats = model.transform
    if isinstance(data, ComponentBundle):
        if data.transform is not stats:
            raise SchemaError("bundle was built with different transform stats; "
                              "pass the raw intensities instead")
        n = data.n_rows
        contrib = np.zeros(n)
        if model.coef_u is not None and model.coef_u.any():
            contrib += data.u_std @ model.coef_u
        if model.coef_x is not None and model.coef_x.any():
            contrib += data.x_std @ model.coef_x
        if model.coef_d is not None and model.coef_d.any():
            contrib += data.D @ model.coef_d
    else:
        if isinstance(data, IntensityMatrix):
            prep = prepare_matrix(data, stats.log_base)
        elif isinstance(data, PreparedMatrix):
            prep = data
        else:
            raise SchemaError(f"cannot predict from {type(data).__name__}")
        prep = _align_prepared(prep, stats.column_ids)
        scales = stats.scales()
        q = len(stats.column_ids)
        w_log = np.zeros(q)     # weight on log(z) at non-PMVs
        w_d = np.zeros(q)       # weight on the presence indicator
        const = 0.0
        if model.coef_u is not None:
            wu = model.coef_u / scales
            fill_u = stats.u_fill * wu
            w_log += wu
            w_d -= fill_u
            const += fill_u.sum()
        if model.coef_x is not None:
            if stats.x_fill is None:
                raise SchemaError("model uses X but transform stats carry no x_fill")
            wx = model.coef_x / scales
            fill_x = stats.x_fill * wx
            w_log += wx
            w_d -= fill_x
            const += fill_x.sum()
        if model.coef_d is not None:
            w_d += model.coef_d
        contrib = prep.logpos @ w_log + prep.D @ w_d + const
    offset = 0.0
    if model.offset_model is not None:
        if covariates is None:
            raise SchemaError("model carries an offset; covariates are required")
        offset = model.offset_model.predict(covariates)
    return model.intercept + offset + contrib


def selected_set(model: FittedModel) -> set:
    """Predictors present in the final model.

    Selection methods count a predictor as soon as any of its stored
    components is nonzero (the garrote couples both components through its
    shrinkage factor).  Ridge and the oracles perform no selection, so all
    retained predictors are included.
    """
    ids = np.asarray(model.column_ids, dtype=object)
    if model.method in ("ridge", "oracle-ols", "oracle-ridge"):
        return set(ids[model.retained_mask()])
    if model.method == "ridge-garrote":
        return set(ids[model.garrote_c > 0])
    mask = np.zeros(len(ids), dtype=bool)
    for arr in (model.coef_u, model.coef_d, model.coef_x):
        if arr is not None:
            mask |= arr != 0
    return set(ids[mask])


def coef_table(model: FittedModel):
    """Long-form coefficient table (predictor_id, component, coefficient)."""
    import pandas as pd

    rows = [(pid, comp, val) for (pid, comp), val in sorted(model.coef_map().items())]
    return pd.DataFrame(rows, columns=["predictor_id", "component", "coefficient"])
