"""Gross-exposure constrained minimum-variance allocation and risk bounds.

The allocation problem is min w' S w subject to sum(w) = 1 and ||w||_1 <= c.
It is solved as a convex QP in the split variables w = u - v with u, v >= 0,
so the L1 constraint becomes linear. The exposure cap c bounds the short
side by (c - 1) / 2 and, through the sup-norm estimation error a_p of the
covariance matrix, controls how far perceived, actual and oracle risks can
drift apart: every gap is at most a multiple of a_p * c^2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from cvxopt import matrix as cvxmatrix
from cvxopt import solvers as cvxsolvers

from .estimators import CovEstimate
from .exceptions import IndefiniteMatrixError, InfeasibleError, SolverError

POSITION_THRESHOLD = 1e-3
TRADING_DAYS_PER_YEAR = 252

_QP_OPTIONS = {
    "show_progress": False,
    "abstol": 1e-11,
    "reltol": 1e-11,
    "feastol": 1e-10,
    "maxiters": 300,
}
# tiny ridge on the split-variable Hessian: keeps the KKT system
# non-singular along the u+v direction and biases ties to minimum norm
_RIDGE = 1e-12


@dataclass(frozen=True)
class PortfolioWeights:
    """An allocation vector with gross-exposure accounting.

    Long/short position counts use the reporting threshold of 0.001 absolute
    weight.
    """

    w: np.ndarray
    gross_exposure: float
    n_long: int
    n_short: int
    max_weight: float
    min_weight: float

    @classmethod
    def from_vector(cls, w: np.ndarray) -> "PortfolioWeights":
        w = np.asarray(w, dtype=np.float64)
        if abs(w.sum() - 1.0) > 1e-8:
            raise ValueError(f"weights sum to {w.sum()}, not 1")
        return cls(
            w=w,
            gross_exposure=float(np.abs(w).sum()),
            n_long=int(np.sum(w > POSITION_THRESHOLD)),
            n_short=int(np.sum(w < -POSITION_THRESHOLD)),
            max_weight=float(w.max()),
            min_weight=float(w.min()),
        )


@dataclass(frozen=True)
class RiskReport:
    """Perceived/actual/oracle risks (annualized std) and their error bound.

    The ``gap_*`` fields are the raw variance gaps the theory bounds:
    actual-vs-oracle by 2 a_p c^2, the other two by a_p c^2.
    """

    perceived_risk: float
    actual_risk: float
    oracle_risk: float
    a_p: float
    bound_2apc2: float
    gap_actual_oracle: float
    gap_actual_perceived: float
    gap_oracle_perceived: float


def _as_matrix(sigma) -> tuple[np.ndarray, float]:
    if isinstance(sigma, CovEstimate):
        return sigma.matrix, sigma.window_days
    return np.asarray(sigma, dtype=np.float64), 1.0


def solve_min_variance(sigma, c: float) -> PortfolioWeights:
    """Minimize w' S w subject to sum(w) = 1 and ||w||_1 <= c.

    ``sigma`` is a CovEstimate or a plain symmetric PSD matrix (indefinite
    beyond -1e-8 relative is rejected; project first). ``c`` must be at
    least 1, otherwise the constraints are contradictory. The solution is
    deterministic for fixed inputs; among exactly tied optima the solver
    settles on the minimum-norm candidate.
    """
    s, _ = _as_matrix(sigma)
    p = s.shape[0]
    if s.shape != (p, p):
        raise ValueError("covariance matrix must be square")
    if c < 1.0:
        raise InfeasibleError(f"gross exposure c={c} < 1 is infeasible with sum(w)=1")
    s = (s + s.T) / 2.0
    scale = max(np.abs(s).max(), 1e-300)
    ss = s / scale
    lam_min = float(np.linalg.eigvalsh(ss)[0])
    if lam_min < -1e-8:
        raise IndefiniteMatrixError(
            f"matrix has scaled eigenvalue {lam_min:.3e} < -1e-8; project to PSD first"
        )

    n = 2 * p
    P = np.zeros((n, n))
    P[:p, :p] = 2.0 * ss
    P[p:, p:] = 2.0 * ss
    P[:p, p:] = -2.0 * ss
    P[p:, :p] = -2.0 * ss
    P[np.diag_indices(n)] += 2.0 * _RIDGE
    q = np.zeros(n)
    G = np.vstack([-np.eye(n), np.ones((1, n))])
    h = np.concatenate([np.zeros(n), [c]])
    A = np.concatenate([np.ones(p), -np.ones(p)])[None, :]
    b = np.array([1.0])

    sol = cvxsolvers.qp(
        cvxmatrix(P), cvxmatrix(q), cvxmatrix(G), cvxmatrix(h),
        cvxmatrix(A), cvxmatrix(b), options=dict(_QP_OPTIONS),
    )
    if sol["status"] != "optimal":
        # the interior point can stall just short of the very tight declared
        # tolerances; accept the iterate when it meets the 1e-8 contract
        residuals = (
            float(sol["gap"]),
            float(sol["primal infeasibility"]),
            float(sol["dual infeasibility"]),
        )
        if max(residuals) > 1e-9:
            raise SolverError(
                f"QP did not converge: status {sol['status']!r}, "
                f"residuals {residuals}"
            )
    z = np.asarray(sol["x"]).ravel()
    w = z[:p] - z[p:]

    feas_sum = abs(w.sum() - 1.0)
    feas_l1 = max(np.abs(w).sum() - c, 0.0)
    gap = float(sol["gap"])
    if max(feas_sum, feas_l1, gap) > 1e-8:
        raise SolverError(
            f"KKT residual too large: sum {feas_sum:.2e}, l1 {feas_l1:.2e}, gap {gap:.2e}"
        )
    return PortfolioWeights.from_vector(w)


def portfolio_risk(weights, sigma, annualize: bool = False) -> float:
    """Portfolio risk sqrt(w' S w), optionally annualized by the window.

    Annualization multiplies by sqrt(252 / window_days). A negative
    quadratic form (indefinite matrix) raises instead of returning NaN.
    """
    w = weights.w if isinstance(weights, PortfolioWeights) else np.asarray(weights)
    s, window_days = _as_matrix(sigma)
    if s.shape[0] != len(w):
        raise ValueError(f"dimension mismatch: {s.shape[0]} vs {len(w)}")
    q = float(w @ s @ w)
    scale = max(np.abs(s).max(), 1e-300)
    if q < -1e-12 * scale:
        raise IndefiniteMatrixError(f"negative portfolio variance {q:.3e}")
    risk = np.sqrt(max(q, 0.0))
    if annualize:
        risk *= np.sqrt(TRADING_DAYS_PER_YEAR / window_days)
    return float(risk)


def max_elementwise_error(est, oracle) -> float:
    """Sup-norm distance a_p = max_ij |est_ij - oracle_ij|."""
    a, _ = _as_matrix(est)
    b, _ = _as_matrix(oracle)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.abs(a - b).max())


_BOUND_SLACK = 1e-8


def risk_gap_report(sigma_est, sigma_oracle, c: float) -> RiskReport:
    """Solve the allocation under both matrices and report all risk gaps.

    The three variance gaps are bounded by a_p c^2 (perceived vs actual and
    perceived-oracle cross) and 2 a_p c^2 (actual vs oracle); these hold by
    a direct argument when both problems are solved exactly, so a violation
    beyond solver slack raises SolverError.
    """
    s_est, wd_est = _as_matrix(sigma_est)
    s_ora, wd_ora = _as_matrix(sigma_oracle)
    if s_est.shape != s_ora.shape:
        raise ValueError("dimension mismatch between estimate and oracle")
    if wd_est != wd_ora:
        raise ValueError("estimate and oracle cover different windows")
    w_hat = solve_min_variance(sigma_est, c)
    w_opt = solve_min_variance(sigma_oracle, c)

    r_hat_perceived = float(w_hat.w @ s_est @ w_hat.w)
    r_hat_actual = float(w_hat.w @ s_ora @ w_hat.w)
    r_opt = float(w_opt.w @ s_ora @ w_opt.w)
    a_p = max_elementwise_error(s_est, s_ora)
    bound = 2.0 * a_p * c * c

    gap_actual_oracle = abs(r_hat_actual - r_opt)
    gap_actual_perceived = abs(r_hat_actual - r_hat_perceived)
    gap_oracle_perceived = abs(r_opt - r_hat_perceived)
    half = a_p * c * c + _BOUND_SLACK
    if gap_actual_oracle > bound + _BOUND_SLACK or gap_actual_perceived > half \
            or gap_oracle_perceived > half:
        raise SolverError(
            "risk gaps violate their a_p c^2 bounds; the QP solves are suspect"
        )

    ann = np.sqrt(TRADING_DAYS_PER_YEAR / wd_ora)
    return RiskReport(
        perceived_risk=float(np.sqrt(max(r_hat_perceived, 0.0)) * ann),
        actual_risk=float(np.sqrt(max(r_hat_actual, 0.0)) * ann),
        oracle_risk=float(np.sqrt(max(r_opt, 0.0)) * ann),
        a_p=a_p,
        bound_2apc2=bound,
        gap_actual_oracle=gap_actual_oracle,
        gap_actual_perceived=gap_actual_perceived,
        gap_oracle_perceived=gap_oracle_perceived,
    )


def save_weights(weights: PortfolioWeights, asset_ids, path) -> None:
    """Write a weights CSV: ``asset_id,weight``."""
    with open(path, "w") as fh:
        fh.write("asset_id,weight\n")
        for asset, wi in zip(asset_ids, weights.w):
            fh.write(f"{asset},{wi:.17g}\n")
