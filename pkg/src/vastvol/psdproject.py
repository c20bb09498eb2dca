"""Positive semi-definite projection of estimated correlation matrices.

Elementwise covariance estimation can produce indefinite matrices. Rather
than repairing the covariance directly, the matrix is decomposed into
per-asset volatilities and a correlation matrix; the correlation matrix is
projected (eigenvalue clipping, or shifting by the negative part of the
minimum eigenvalue) and recombined, which leaves each asset's volatility
estimate intact.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .estimators import CovEstimate

DEFAULT_VOL_FLOOR = 1e-10


@dataclass
class CorrDecomposition:
    """Volatility/correlation split of a covariance estimate.

    ``vols`` are per-window volatilities (square roots of the floored
    diagonal); ``corr`` has unit diagonal but may hold off-diagonal entries
    beyond [-1, 1] before projection. ``floored_assets`` lists assets whose
    non-positive diagonal hit the floor; ``exceeds_unit`` flags pairs with
    |corr| > 1.
    """

    vols: np.ndarray
    corr: np.ndarray
    source: CovEstimate
    floored_assets: tuple[str, ...]
    exceeds_unit: tuple[tuple[str, str], ...]


def cov_to_corr(est: CovEstimate, floor: float = DEFAULT_VOL_FLOOR) -> CorrDecomposition:
    """Split a covariance estimate into volatilities and a correlation matrix.

    Non-positive diagonal entries (possible for two-scale estimates on short
    noisy series) are floored before the square root and flagged.
    """
    mat = est.matrix
    diag = np.diag(mat).copy()
    floored = [est.asset_ids[i] for i in range(est.p) if diag[i] < floor]
    vols = np.sqrt(np.maximum(diag, floor))
    corr = mat / np.outer(vols, vols)
    np.fill_diagonal(corr, 1.0)
    corr = (corr + corr.T) / 2.0
    exceeds = []
    for i in range(est.p):
        for j in range(i + 1, est.p):
            if abs(corr[i, j]) > 1.0:
                exceeds.append((est.asset_ids[i], est.asset_ids[j]))
    return CorrDecomposition(
        vols=vols,
        corr=corr,
        source=est,
        floored_assets=tuple(floored),
        exceeds_unit=tuple(exceeds),
    )


def _symmetric_eig(a: np.ndarray):
    # symmetrize first: parallel assembly can leave round-off asymmetry
    s = (a + a.T) / 2.0
    try:
        return np.linalg.eigh(s)
    except np.linalg.LinAlgError as exc:
        raise ArithmeticError(f"eigendecomposition failed: {exc}") from exc


def project_clip(corr: np.ndarray) -> np.ndarray:
    """Project to PSD by clipping negative eigenvalues at zero.

    Eigenvectors are unchanged; the diagonal is generally no longer exactly
    one afterwards. PSD inputs are fixed points up to round-off.
    """
    lam, vec = _symmetric_eig(np.asarray(corr, dtype=np.float64))
    lam_plus = np.maximum(lam, 0.0)
    out = (vec * lam_plus) @ vec.T
    return (out + out.T) / 2.0


def project_shift(corr: np.ndarray) -> np.ndarray:
    """Project to PSD by shifting with the negative part of the minimum eigenvalue.

    Returns (A + lam_min^- I) / (1 + lam_min^-). The eigenvector set, the
    eigenvalue ordering and a unit diagonal are all preserved exactly; PSD
    inputs pass through unchanged.
    """
    a = np.asarray(corr, dtype=np.float64)
    a = (a + a.T) / 2.0
    lam, _ = _symmetric_eig(a)
    lam_neg = max(-float(lam[0]), 0.0)
    if lam_neg == 0.0:
        return a
    return (a + lam_neg * np.eye(a.shape[0])) / (1.0 + lam_neg)


def corr_to_cov(dec: CorrDecomposition, projected_corr: np.ndarray,
                projection: str = "shift") -> CovEstimate:
    """Recombine volatilities with a (projected) correlation matrix.

    Metadata is copied from the source estimate with the projection method
    recorded.
    """
    c = np.asarray(projected_corr, dtype=np.float64)
    if c.shape != dec.corr.shape:
        raise ValueError(f"shape mismatch: {c.shape} vs {dec.corr.shape}")
    mat = np.outer(dec.vols, dec.vols) * c
    mat = (mat + mat.T) / 2.0
    out = replace(dec.source, matrix=mat, projection=projection)
    out.validate()
    return out


def project_cov(est: CovEstimate, method: str = "shift",
                floor: float = DEFAULT_VOL_FLOOR) -> CovEstimate:
    """Full pipeline: decompose, project the correlation matrix, recombine.

    ``method`` is 'shift' (default), 'clip' or 'none'.
    """
    if method == "none":
        return est
    if method not in ("shift", "clip"):
        raise ValueError(f"projection must be 'shift', 'clip' or 'none', got {method!r}")
    dec = cov_to_corr(est, floor)
    projected = project_shift(dec.corr) if method == "shift" else project_clip(dec.corr)
    return corr_to_cov(dec, projected, projection=method)


@dataclass(frozen=True)
class ConditionDiagnostics:
    min_eig: float
    max_eig: float
    condition_number: float


def condition_diagnostics(est: CovEstimate | np.ndarray) -> ConditionDiagnostics:
    """Extreme eigenvalues and their ratio.

    The condition number is max/min for positive-definite input and infinite
    once the minimum eigenvalue is non-positive.
    """
    mat = est.matrix if isinstance(est, CovEstimate) else np.asarray(est, dtype=np.float64)
    lam, _ = _symmetric_eig(mat)
    lo, hi = float(lam[0]), float(lam[-1])
    cond = hi / lo if lo > 0 else float("inf")
    return ConditionDiagnostics(min_eig=lo, max_eig=hi, condition_number=cond)


def distortion(corr: np.ndarray, projected: np.ndarray) -> float:
    """Elementwise sup-norm distance between a matrix and its projection."""
    return float(np.abs(np.asarray(corr) - np.asarray(projected)).max())
