"""Penalized least-squares solvers.

Two primitives drive every estimator in the package:

* an exact ridge solve of the regularized normal equations, plus a
  factorized variant (RidgePath) for sweeping many penalty values on one
  design, and
* cyclic coordinate descent for the L1 objective
  ``||y - A b||^2 + lam * sum_j w_j |b_j|`` (no 1/n factor), optionally
  under the sign constraint b >= 0.

The coordinate loop works on the Gram matrix, so each sweep costs O(m^2)
independent of the sample size, and is JIT-compiled.  Convergence requires
both a small relative coefficient change and a small KKT residual; the KKT
conditions are therefore a property of every returned solution, not just a
stopping heuristic.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit

from .errors import ConvergenceError, InvalidInputError, RankDeficiencyError

# ---------------------------------------------------------------------------
# Containers
# ---------------------------------------------------------------------------

@dataclass
class DesignMatrix:
    """Design with per-column (predictor, component) keys."""

    A: np.ndarray
    column_keys: list  # [(predictor_id, component), ...]

    def __post_init__(self):
        self.A = np.ascontiguousarray(self.A, dtype=np.float64)
        if self.A.ndim != 2:
            raise InvalidInputError("design must be 2-d")
        if len(self.column_keys) != self.A.shape[1]:
            raise InvalidInputError("one column key per design column required")


@dataclass
class PenaltySpec:
    """L1 penalty: level, per-column weights (inf allowed), sign constraint."""

    lam: float
    weights: Optional[np.ndarray] = None
    sign_constraint: str = "none"  # "none" | "nonnegative"

    def __post_init__(self):
        if self.lam < 0:
            raise InvalidInputError("penalty level must be nonnegative")
        if self.sign_constraint not in ("none", "nonnegative"):
            raise InvalidInputError(f"unknown sign constraint {self.sign_constraint!r}")
        if self.weights is not None:
            self.weights = np.asarray(self.weights, dtype=np.float64)
            if (self.weights < 0).any() or np.isnan(self.weights).any():
                raise InvalidInputError("penalty weights must be nonnegative")


@dataclass
class SolverOptions:
    """Coordinate-descent controls.

    tol is the relative max coefficient change per sweep; kkt_tol scales the
    stationarity residual required on exit.  Updates cycle in fixed
    ascending column order, so results are reproducible by construction.
    """

    tol: float = 1e-7
    max_iter: int = 100_000
    kkt_tol: float = 1e-9

    def __post_init__(self):
        if self.tol <= 0 or self.max_iter < 1:
            raise InvalidInputError("tol must be positive and max_iter >= 1")


# ---------------------------------------------------------------------------
# Ridge
# ---------------------------------------------------------------------------

def _as_array(A):
    return A.A if isinstance(A, DesignMatrix) else np.asarray(A, dtype=np.float64)


def soft_threshold(z, gamma):
    """sign(z) * max(|z| - gamma, 0); gamma must be nonnegative."""
    if np.any(np.asarray(gamma) < 0):
        raise InvalidInputError("threshold must be nonnegative")
    return np.sign(z) * np.maximum(np.abs(z) - gamma, 0.0)


def ridge_solve(A, y, lam: float, penalized=None) -> np.ndarray:
    """Exact solve of the regularized normal equations.

    Minimizes ||y - A b||^2 + lam * ||b_penalized||^2.  Columns with
    penalized=False (e.g. an explicit intercept column) receive no
    shrinkage.  With lam = 0 the design must have full column rank.
    """
    A = _as_array(A)
    y = np.asarray(y, dtype=np.float64)
    if lam < 0:
        raise InvalidInputError("ridge penalty must be nonnegative")
    m = A.shape[1]
    G = A.T @ A
    if penalized is None:
        G_reg = G + lam * np.eye(m)
    else:
        penalized = np.asarray(penalized, dtype=bool)
        G_reg = G + lam * np.diag(penalized.astype(np.float64))
    rhs = A.T @ y
    if lam == 0 or (penalized is not None and not penalized.all()):
        # an exactly singular unpenalized block must surface as an error
        if np.linalg.matrix_rank(G_reg) < m:
            raise RankDeficiencyError("singular system; increase the penalty "
                                      "or drop collinear columns")
    try:
        return np.linalg.solve(G_reg, rhs)
    except np.linalg.LinAlgError as exc:
        raise RankDeficiencyError(str(exc)) from exc


class RidgePath:
    """Factorized ridge solver for many penalties on a fixed design.

    One SVD up front; each penalty afterwards costs O(m * rank).  Agrees
    with ridge_solve on every lam > 0 (and on lam = 0 for full-rank
    designs).
    """

    def __init__(self, A, y):
        A = _as_array(A)
        self._y = np.asarray(y, dtype=np.float64)
        self._U, self._s, self._Vt = np.linalg.svd(A, full_matrices=False)
        self._Uty = self._U.T @ self._y
        self.m = A.shape[1]

    def solve(self, lam: float) -> np.ndarray:
        if lam < 0:
            raise InvalidInputError("ridge penalty must be nonnegative")
        s = self._s
        if lam == 0:
            tiny = s <= s[0] * max(self._U.shape[0], self.m) * np.finfo(float).eps
            if s.size < self.m or tiny.any():
                raise RankDeficiencyError("lam = 0 requires a full-rank design")
            d = self._Uty / s
        else:
            d = s * self._Uty / (s * s + lam)
        return self._Vt.T @ d


# ---------------------------------------------------------------------------
# Coordinate descent (Gram form, JIT compiled)
# ---------------------------------------------------------------------------

# status codes for the kernel
_CONVERGED, _MAX_ITER, _NOT_MONOTONE = 0, 1, 2


@njit(cache=True, nogil=True)
def _cd_gram(G, Aty, yty, lam, w, beta, nonneg, tol, kkt_target, max_iter):
    """Cyclic coordinate descent on the Gram system.

    beta is updated in place (warm start in, solution out).  Maintains
    grad = Aty - G beta incrementally; a fresh gradient is recomputed
    before every KKT check so accumulated drift cannot certify a bogus
    solution.  Returns (sweeps, status, kkt_residual).
    """
    m = beta.shape[0]
    grad = Aty - np.dot(G, beta)
    halfpen = np.empty(m)
    skip = np.zeros(m, np.bool_)
    for j in range(m):
        if not np.isfinite(w[j]) or G[j, j] <= 0.0:
            skip[j] = True
            halfpen[j] = 0.0
            if beta[j] != 0.0:  # warm start not feasible for this column
                d = -beta[j]
                for i in range(m):
                    grad[i] -= G[i, j] * d
                beta[j] = 0.0
        else:
            halfpen[j] = 0.5 * lam * w[j]

    prev_obj = np.inf
    sweeps = 0
    status = _MAX_ITER
    kkt = np.inf
    while sweeps < max_iter:
        # full sweep over all columns, fixed ascending order
        maxd = 0.0
        maxb = 0.0
        for j in range(m):
            if skip[j]:
                continue
            gjj = G[j, j]
            bj = beta[j]
            z = grad[j] + gjj * bj
            hp = halfpen[j]
            if nonneg:
                bnew = (z - hp) / gjj if z > hp else 0.0
            else:
                if z > hp:
                    bnew = (z - hp) / gjj
                elif z < -hp:
                    bnew = (z + hp) / gjj
                else:
                    bnew = 0.0
            d = bnew - bj
            if d != 0.0:
                for i in range(m):
                    grad[i] -= G[i, j] * d
                beta[j] = bnew
                ad = abs(d)
                if ad > maxd:
                    maxd = ad
            ab = abs(beta[j])
            if ab > maxb:
                maxb = ab
        sweeps += 1

        # objective must never increase across sweeps
        pen = 0.0
        for j in range(m):
            if beta[j] != 0.0:
                pen += w[j] * abs(beta[j])
        obj = yty - np.dot(beta, Aty) - np.dot(beta, grad) + lam * pen
        if obj > prev_obj + 1e-9 * (1.0 + abs(prev_obj)):
            status = _NOT_MONOTONE
            break
        prev_obj = obj

        if maxd <= tol * max(1.0, maxb):
            # coefficient change has settled; certify stationarity exactly
            grad = Aty - np.dot(G, beta)
            viol = 0.0
            for j in range(m):
                if skip[j]:
                    continue
                g2 = 2.0 * grad[j]
                lw = 2.0 * halfpen[j]
                if beta[j] > 0.0:
                    v = abs(g2 - lw)
                elif beta[j] < 0.0:
                    v = abs(g2 + lw)
                elif nonneg:
                    v = g2 - lw if g2 > lw else 0.0
                else:
                    v = abs(g2) - lw if abs(g2) > lw else 0.0
                if v > viol:
                    viol = v
            kkt = viol
            if viol <= kkt_target or maxd <= 1e-15 * max(1.0, maxb):
                # either certified, or at the floating-point fixed point
                status = _CONVERGED
                break
            continue  # sharpen with further full sweeps

        # active-set acceleration: iterate on the nonzero coordinates
        while sweeps < max_iter:
            maxd_a = 0.0
            maxb_a = 0.0
            for j in range(m):
                if skip[j] or beta[j] == 0.0:
                    continue
                gjj = G[j, j]
                bj = beta[j]
                z = grad[j] + gjj * bj
                hp = halfpen[j]
                if nonneg:
                    bnew = (z - hp) / gjj if z > hp else 0.0
                else:
                    if z > hp:
                        bnew = (z - hp) / gjj
                    elif z < -hp:
                        bnew = (z + hp) / gjj
                    else:
                        bnew = 0.0
                d = bnew - bj
                if d != 0.0:
                    for i in range(m):
                        grad[i] -= G[i, j] * d
                    beta[j] = bnew
                    ad = abs(d)
                    if ad > maxd_a:
                        maxd_a = ad
                ab = abs(beta[j])
                if ab > maxb_a:
                    maxb_a = ab
            sweeps += 1
            if maxd_a <= tol * max(1.0, maxb_a):
                break
    return sweeps, status, kkt


def _gram_inputs(A, y):
    A = np.ascontiguousarray(_as_array(A))
    y = np.asarray(y, dtype=np.float64)
    if A.shape[0] != y.shape[0]:
        raise InvalidInputError("design and response lengths differ")
    return A, y, A.T @ A, A.T @ y, float(y @ y)


def _resolve_weights(penalty: PenaltySpec, m: int) -> np.ndarray:
    if penalty.weights is None:
        return np.ones(m)
    if penalty.weights.shape[0] != m:
        raise InvalidInputError("one penalty weight per column required")
    return penalty.weights


def kkt_residual(A, y, beta, penalty: PenaltySpec) -> float:
    """Max violation of the stationarity conditions of the L1 objective.

    At nonzero coefficients the residual |2 A_j'(y - A b) - lam w_j sign(b_j)|
    is scaled by max(1, lam); at zeros the slack max(0, |2 A_j'r| - lam w_j)
    (one-sided under the nonnegativity constraint) enters unscaled.
    """
    A = _as_array(A)
    beta = np.asarray(beta, dtype=np.float64)
    w = _resolve_weights(penalty, A.shape[1])
    r = np.asarray(y, dtype=np.float64) - A @ beta
    g2 = 2.0 * (A.T @ r)
    lw = penalty.lam * w
    scale = max(1.0, penalty.lam)
    viol = 0.0
    for j in range(beta.shape[0]):
        if not np.isfinite(w[j]):
            continue
        if beta[j] > 0:
            v = abs(g2[j] - lw[j]) / scale
        elif beta[j] < 0:
            v = abs(g2[j] + lw[j]) / scale
        elif penalty.sign_constraint == "nonnegative":
            v = max(0.0, g2[j] - lw[j])
        else:
            v = max(0.0, abs(g2[j]) - lw[j])
        viol = max(viol, v)
    return float(viol)


def coord_descent(A, y, penalty: PenaltySpec, opts: Optional[SolverOptions] = None,
                  warm_start: Optional[np.ndarray] = None) -> np.ndarray:
    """Minimize ||y - A b||^2 + lam sum_j w_j |b_j| by coordinate descent.

    With sign_constraint="nonnegative" the solution additionally satisfies
    b >= 0 exactly.  Columns with infinite weight (or zero norm) keep a
    zero coefficient.  Raises ConvergenceError, carrying the last iterate
    and its KKT residual, if the sweep budget is exhausted.
    """
    opts = opts or SolverOptions()
    A, y, G, Aty, yty = _gram_inputs(A, y)
    m = A.shape[1]
    w = _resolve_weights(penalty, m)
    beta = np.zeros(m) if warm_start is None else np.array(warm_start, dtype=np.float64)
    if beta.shape[0] != m:
        raise InvalidInputError("warm start length mismatch")
    beta, sweeps, status = cd_gram_solve(
        G, Aty, yty, penalty.lam, w, beta,
        nonneg=penalty.sign_constraint == "nonnegative", opts=opts)
    if status == _MAX_ITER:
        raise ConvergenceError(
            f"coordinate descent did not converge within {opts.max_iter} sweeps",
            beta=beta, kkt_residual=kkt_residual(A, y, beta, penalty), n_iter=sweeps)
    if status == _NOT_MONOTONE:
        raise ConvergenceError(
            "objective increased across a sweep (numerically inconsistent inputs)",
            beta=beta, kkt_residual=kkt_residual(A, y, beta, penalty), n_iter=sweeps)
    return beta


def cd_gram_solve(G, Aty, yty, lam, w, beta, nonneg: bool,
                  opts: Optional[SolverOptions] = None):
    """Gram-space entry point used by the tuning loops (warm starts in place).

    Returns (beta, sweeps, status); callers that accept only certified
    solutions should go through coord_descent.
    """
    opts = opts or SolverOptions()
    kkt_target = opts.kkt_tol * max(1.0, lam, 2.0 * float(np.abs(Aty).max(initial=0.0)))
    sweeps, status, _ = _cd_gram(
        np.ascontiguousarray(G), np.ascontiguousarray(Aty), yty, lam,
        np.ascontiguousarray(w, dtype=np.float64), beta,
        nonneg, opts.tol, kkt_target, opts.max_iter)
    return beta, sweeps, status


def lasso_lambda_max(A, y, weights=None) -> float:
    """Smallest penalty that forces the all-zero solution.

    Computed against the centered response: 2 max_j |A_j'(y - mean(y))| / w_j.
    """
    A = _as_array(A)
    y = np.asarray(y, dtype=np.float64)
    yc = y - y.mean()
    score = 2.0 * np.abs(A.T @ yc)
    if weights is not None:
        weights = np.asarray(weights, dtype=np.float64)
        with np.errstate(divide="ignore", invalid="ignore"):
            score = np.where(np.isfinite(weights) & (weights > 0),
                             score / weights,
                             np.where(weights == 0, np.inf, 0.0))
    return float(score.max(initial=0.0))
