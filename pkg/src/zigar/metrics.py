"""Estimands per replicate and their aggregation across a scenario.

Undefined values (calibration slope of constant predictions, discovery rate
of an empty selection, ...) are carried as NaN; aggregation ignores them
and reports how many were dropped.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import InvalidInputError


@dataclass
class ReplicateRecord:
    """All estimands of one (scenario, replicate, method) evaluation."""

    scenario_id: int
    rep_index: int
    method: str
    rmspe: float
    relative_rmspe: float
    r2: float
    calib_slope: float
    q_selected: int
    tpdr: float
    fndr: float
    selected_ids: frozenset
    penalties: tuple = ()
    fit_seconds: float = float("nan")
    error: Optional[str] = None


@dataclass
class MethodSummary:
    method: str
    n_reps: int
    means: dict
    sds: dict
    undefined_counts: dict
    mcse_rmspe: float
    pif: np.ndarray


@dataclass
class ScenarioSummary:
    scenario_id: int
    predictor_ids: list
    per_method: dict = field(default_factory=dict)  # method -> MethodSummary


# ---------------------------------------------------------------------------
# Per-replicate estimands
# ---------------------------------------------------------------------------

def prediction_metrics(y, yhat):
    """(rmspe, r2, calibration slope) of predictions against observations.

    r2 is the squared correlation; the calibration slope is the slope of the
    regression of observed on predicted.  Both are NaN when the predictions
    (or observations) are constant; the rmspe is always defined.
    """
    y = np.asarray(y, dtype=np.float64)
    yhat = np.asarray(yhat, dtype=np.float64)
    if y.shape != yhat.shape or y.ndim != 1 or y.shape[0] < 2:
        raise InvalidInputError("need two equal-length vectors of at least 2 entries")
    rmspe = float(np.sqrt(np.mean((y - yhat) ** 2)))
    var_hat = yhat.var()
    var_y = y.var()
    if var_hat <= 0 or var_y <= 0:
        return rmspe, float("nan"), float("nan")
    cov = np.mean((y - y.mean()) * (yhat - yhat.mean()))
    r2 = cov * cov / (var_y * var_hat)
    return rmspe, float(r2), float(cov / var_hat)


def relative_rmspe(method_rmspe: float, oracle_ridge_rmspe: float) -> float:
    """Per-replicate ratio against the oracle-ridge benchmark."""
    if not oracle_ridge_rmspe > 0:
        return float("nan")
    return float(method_rmspe) / float(oracle_ridge_rmspe)


def selection_metrics(selected, true_set, q: int):
    """(q_selected, tpdr, fndr) for one fitted model.

    tpdr: share of true predictors among the selected (NaN when nothing is
    selected).  fndr: share of missed true predictors among the non-selected
    (NaN when everything is selected).
    """
    selected = set(selected)
    true_set = set(true_set)
    n_sel = len(selected)
    tpdr = len(selected & true_set) / n_sel if n_sel else float("nan")
    n_unsel = q - n_sel
    fndr = len(true_set - selected) / n_unsel if n_unsel else float("nan")
    return n_sel, tpdr, fndr


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------

ESTIMAND_FIELDS = ("rmspe", "relative_rmspe", "r2", "calib_slope",
                   "q_selected", "tpdr", "fndr")


def _nan_mean_sd(values: np.ndarray):
    ok = values[~np.isnan(values)]
    n_undef = values.size - ok.size
    mean = float(ok.mean()) if ok.size else float("nan")
    sd = float(ok.std(ddof=1)) if ok.size > 1 else float("nan")
    return mean, sd, n_undef


def summarize(records, predictor_ids) -> ScenarioSummary:
    """Scenario-level aggregation: per-method means/SDs, MCSE, inclusion rates.

    The predictor inclusion frequency of column j is the share of replicates
    (of that method) whose selected set contains j.
    """
    records = [r for r in records if r.error is None]
    if not records:
        raise InvalidInputError("no successful replicate records to summarize")
    summary = ScenarioSummary(scenario_id=records[0].scenario_id,
                              predictor_ids=list(predictor_ids))
    col_index = {pid: j for j, pid in enumerate(predictor_ids)}
    by_method = {}
    for rec in records:
        by_method.setdefault(rec.method, []).append(rec)
    for method, recs in by_method.items():
        means, sds, undef = {}, {}, {}
        for name in ESTIMAND_FIELDS:
            vals = np.array([getattr(r, name) for r in recs], dtype=np.float64)
            means[name], sds[name], undef[name] = _nan_mean_sd(vals)
        reps = len(recs)
        mcse = sds["rmspe"] / np.sqrt(reps) if reps > 1 else float("nan")
        pif = np.zeros(len(predictor_ids))
        for r in recs:
            for pid in r.selected_ids:
                pif[col_index[pid]] += 1.0
        pif /= reps
        summary.per_method[method] = MethodSummary(
            method=method, n_reps=reps, means=means, sds=sds,
            undefined_counts=undef, mcse_rmspe=float(mcse), pif=pif)
    return summary


# ---------------------------------------------------------------------------
# Tabular views (consumed by the CLI writers)
# ---------------------------------------------------------------------------

def records_frame(records):
    import pandas as pd

    rows = []
    for r in records:
        rows.append({
            "scenario_id": r.scenario_id,
            "rep_index": r.rep_index,
            "method": r.method,
            "rmspe": r.rmspe,
            "relative_rmspe": r.relative_rmspe,
            "r2": r.r2,
            "calib_slope": r.calib_slope,
            "q_selected": r.q_selected,
            "tpdr": r.tpdr,
            "fndr": r.fndr,
            "penalties": ";".join(repr(p) for p in r.penalties),
            "fit_seconds": r.fit_seconds,
            "error": r.error or "",
        })
    return pd.DataFrame(rows)


def summary_frame(summary: ScenarioSummary):
    import pandas as pd

    rows = []
    for method in sorted(summary.per_method):
        ms = summary.per_method[method]
        row = {"scenario_id": summary.scenario_id, "method": method,
               "n_reps": ms.n_reps, "mcse_rmspe": ms.mcse_rmspe}
        for name in ESTIMAND_FIELDS:
            row[f"mean_{name}"] = ms.means[name]
            row[f"sd_{name}"] = ms.sds[name]
            row[f"undefined_{name}"] = ms.undefined_counts[name]
        rows.append(row)
    return pd.DataFrame(rows)


def pif_frame(summary: ScenarioSummary):
    import pandas as pd

    rows = []
    for method in sorted(summary.per_method):
        ms = summary.per_method[method]
        for pid, value in zip(summary.predictor_ids, ms.pif):
            rows.append({"scenario_id": summary.scenario_id, "method": method,
                         "predictor_id": pid, "pif": value})
    return pd.DataFrame(rows)
