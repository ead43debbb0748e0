# drmtools/baselines.py
"""
Least-squares importance fitting on Gaussian-kernel linear models.

    H = alpha (1/n) Phi_X^T Phi_X + (1 - alpha) (1/m) Phi_Z^T Phi_Z
    h = (1/n) Phi_X^T 1
    theta = (H + reg I)^{-1} h

alpha = 0 is uLSIF; alpha in (0, 1) is RuLSIF and targets p / (alpha p + (1 - alpha) q).
Model selection is k-fold CV on J(theta) = 1/2 theta^T H theta - h^T theta.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from .errors import SingularSystem
from .metrics import median_heuristic
from .models import KernelRatioModel, kernel_design_matrix
from .rng import make_rng

log = logging.getLogger(__name__)

__all__ = [
    "MAX_CENTERS",
    "SIGMA_FACTORS",
    "REG_GRID",
    "UlsifSolution",
    "select_centers",
    "default_grids",
    "ls_moments",
    "ls_criterion",
    "ulsif_fit",
    "rulsif_fit",
    "cv_score",
    "cv_select",
    "fit_lsif",
]

MAX_CENTERS = 100
SIGMA_FACTORS = (0.5, 1.0, 2.0, 5.0)
REG_GRID = (1e-3, 1e-2, 1e-1, 1.0)
CV_FOLDS = 5


@dataclass(frozen=True)
class UlsifSolution:
    theta: np.ndarray
    sigma: float
    reg: float
    centers: np.ndarray
    alpha: float = 0.0
    residual: float = 0.0

    def as_model(self) -> KernelRatioModel:
        """Prediction model with negative weights clamped to 0."""
        return KernelRatioModel(self.centers, np.maximum(self.theta, 0.0), self.sigma)


def select_centers(X: np.ndarray, b: int = MAX_CENTERS, seed: int = 0) -> np.ndarray:
    """Up to ``b`` rows of X, subsampled without replacement."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[0] <= b:
        return X.copy()
    idx = make_rng(seed).permutation(X.shape[0])[:b]
    return X[np.sort(idx)]


def default_grids(X: np.ndarray, Z: np.ndarray) -> Tuple[Tuple[float, ...], Tuple[float, ...]]:
    med = median_heuristic(np.vstack([X, Z]))
    return tuple(f * med for f in SIGMA_FACTORS), REG_GRID


def ls_moments(phi_X: np.ndarray, phi_Z: np.ndarray, alpha: float = 0.0) -> Tuple[np.ndarray, np.ndarray]:
    """(H, h) from design matrices."""
    H = (1.0 - alpha) * (phi_Z.T @ phi_Z) / phi_Z.shape[0]
    if alpha > 0:
        H = H + alpha * (phi_X.T @ phi_X) / phi_X.shape[0]
    h = phi_X.mean(axis=0)
    return H, h


def ls_criterion(H: np.ndarray, h: np.ndarray, theta: np.ndarray) -> float:
    return float(0.5 * theta @ H @ theta - h @ theta)


def _solve(H: np.ndarray, h: np.ndarray, reg: float) -> Tuple[np.ndarray, float]:
    b = H.shape[0]
    A = H + reg * np.eye(b)
    if reg == 0 and np.linalg.matrix_rank(H) < b:
        raise SingularSystem(f"H is rank deficient ({np.linalg.matrix_rank(H)} < {b}) and reg = 0")
    try:
        theta = linalg.solve(A, h, assume_a="sym")
    except linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    residual = float(np.max(np.abs(A @ theta - h)))
    return theta, residual


def rulsif_fit(X, Z, alpha: float, centers, sigma: float, reg: float) -> UlsifSolution:
    """Relative least-squares fit; ``alpha = 0`` reduces to uLSIF."""
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"alpha must lie in [0, 1), got {alpha}")
    if reg < 0:
        raise ValueError(f"reg must be >= 0, got {reg}")
    centers = np.atleast_2d(np.asarray(centers, dtype=np.float64))
    H, h = ls_moments(kernel_design_matrix(X, centers, sigma), kernel_design_matrix(Z, centers, sigma), alpha)
    theta, residual = _solve(H, h, reg)
    return UlsifSolution(theta, float(sigma), float(reg), centers, float(alpha), residual)


def ulsif_fit(X, Z, centers, sigma: float, reg: float) -> UlsifSolution:
    return rulsif_fit(X, Z, 0.0, centers, sigma, reg)


def _fold_labels(count: int, k: int, rng: np.random.Generator) -> np.ndarray:
    labels = np.empty(count, dtype=int)
    labels[rng.permutation(count)] = np.floor(np.arange(count) * k / count).astype(int)
    return labels


def cv_score(X, Z, centers, sigma: float, reg: float, k: int = CV_FOLDS, *,
             alpha: float = 0.0, seed: int = 0) -> float:
    """Mean held-out J over k folds (same fold split for every grid point given ``seed``)."""
    if k < 2:
        raise ValueError(f"need at least 2 folds, got {k}")
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
    rng = make_rng(seed)
    fold_X = _fold_labels(X.shape[0], k, rng)
    fold_Z = _fold_labels(Z.shape[0], k, rng)
    phi_X = kernel_design_matrix(X, centers, sigma)
    phi_Z = kernel_design_matrix(Z, centers, sigma)
    scores = []
    for fold in range(k):
        tr_X, te_X = phi_X[fold_X != fold], phi_X[fold_X == fold]
        tr_Z, te_Z = phi_Z[fold_Z != fold], phi_Z[fold_Z == fold]
        if min(len(tr_X), len(te_X), len(tr_Z), len(te_Z)) == 0:
            continue
        try:
            theta, _ = _solve(*ls_moments(tr_X, tr_Z, alpha), reg)
        except SingularSystem:
            return float("inf")
        scores.append(ls_criterion(*ls_moments(te_X, te_Z, alpha), theta))
    return float(np.mean(scores)) if scores else float("inf")


def cv_select(
    X,
    Z,
    sigmas: Sequence[float],
    regs: Sequence[float],
    k: int = CV_FOLDS,
    *,
    centers: Optional[np.ndarray] = None,
    alpha: float = 0.0,
    seed: int = 0,
) -> Tuple[float, float]:
    """
    Grid pair minimizing the k-fold held-out criterion. Ties go to the larger reg,
    then the larger sigma; duplicate grid entries are ignored.
    """
    sigma_grid = sorted(set(float(s) for s in sigmas))
    reg_grid = sorted(set(float(r) for r in regs))
    if not sigma_grid or not reg_grid:
        raise ValueError("sigma and reg grids must be non-empty")
    if len(sigma_grid) == 1 and len(reg_grid) == 1:
        return sigma_grid[0], reg_grid[0]
    if centers is None:
        centers = select_centers(X, seed=seed)
    best = None
    for sigma in sigma_grid:
        for reg in reg_grid:
            score = cv_score(X, Z, centers, sigma, reg, k, alpha=alpha, seed=seed)
            key = (score, -reg, -sigma)
            if best is None or key < best[0]:
                best = (key, sigma, reg)
    log.debug("cv_select: sigma=%.4g reg=%.4g score=%.6g", best[1], best[2], best[0][0])
    return best[1], best[2]


def fit_lsif(X, Z, *, alpha: float = 0.0, b: int = MAX_CENTERS, k: int = CV_FOLDS,
             seed: int = 0) -> UlsifSolution:
    """Centers, default grids, CV and the final fit in one call."""
    centers = select_centers(X, b, seed)
    sigmas, regs = default_grids(X, Z)
    sigma, reg = cv_select(X, Z, sigmas, regs, k, centers=centers, alpha=alpha, seed=seed)
    return rulsif_fit(X, Z, alpha, centers, sigma, reg)
