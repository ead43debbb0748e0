# drmtools/metrics.py
"""
Evaluation quantities.

    gaussian_true_ratio, gaussian_kl   analytic oracles for identity-covariance pairs
    l2_error                           Monte-Carlo squared L2 error against the oracle
    drm_estimate                       DRM value of a trained model on held-out data
    mmd2                               biased Gaussian-kernel MMD^2
    kde_nll                            validation NLL under a Gaussian KDE
    summarize_errors                   mean / median / std over trials
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Tuple

import numpy as np
from scipy.spatial.distance import cdist, pdist
from scipy.special import logsumexp

from .models import GaussianOracle, ratio_forward
from .objectives import ObjectiveSpec, khat, likelihood_part

__all__ = [
    "GaussianPairSpec",
    "EvalReport",
    "gaussian_true_ratio",
    "gaussian_kl",
    "l2_error",
    "drm_estimate",
    "median_heuristic",
    "mmd2",
    "scott_bandwidth",
    "kde_nll",
    "summarize_errors",
]

DENSITY_FLOOR = 1e-300
MEDIAN_SUBSAMPLE = 1000
_CHUNK = 2048


@dataclass(frozen=True)
class GaussianPairSpec:
    """P = N(mu_p, I_d), Q = N(mu_q, I_d)."""

    d: int
    mu_p: Tuple[float, ...]
    mu_q: Tuple[float, ...]

    def __post_init__(self) -> None:
        if self.d < 1:
            raise ValueError(f"dimension must be >= 1, got {self.d}")
        mp = tuple(float(x) for x in self.mu_p)
        mq = tuple(float(x) for x in self.mu_q)
        if len(mp) != self.d or len(mq) != self.d:
            raise ValueError(f"means must have length d={self.d}")
        object.__setattr__(self, "mu_p", mp)
        object.__setattr__(self, "mu_q", mq)

    @classmethod
    def unit_shift(cls, d: int, shift: float = 1.0) -> "GaussianPairSpec":
        """mu_p = 0, mu_q = shift * e1; a negative shift swaps the roles (mu_p = |shift| e1, mu_q = 0)."""
        e1 = np.zeros(d)
        e1[0] = abs(shift)
        zero = np.zeros(d)
        if shift >= 0:
            return cls(d, tuple(zero), tuple(e1))
        return cls(d, tuple(e1), tuple(zero))

    @classmethod
    def identical(cls, d: int) -> "GaussianPairSpec":
        zero = tuple(np.zeros(d))
        return cls(d, zero, zero)


@dataclass(frozen=True)
class EvalReport:
    mean: float
    median: float
    std: float
    trials: int
    drm_estimate: Optional[float] = None
    mmd: Optional[float] = None
    nll: Optional[float] = None


def gaussian_true_ratio(x, spec: GaussianPairSpec):
    """exp(-||x - mu_p||^2/2 + ||x - mu_q||^2/2); scalar for one point, array for a batch."""
    arr = np.asarray(x, dtype=np.float64)
    r, _ = GaussianOracle.from_spec(spec).forward(arr)
    return float(r[0]) if arr.ndim <= 1 else r


def gaussian_kl(spec: GaussianPairSpec) -> float:
    diff = np.asarray(spec.mu_p) - np.asarray(spec.mu_q)
    return float(0.5 * diff @ diff)


def l2_error(model, spec: GaussianPairSpec, eval_points: np.ndarray, side: str = "forward") -> float:
    """
    forward: mean (r_hat(z) - r*(z))^2 over points from Q.
    inverse: mean (1/r_hat(x) - 1/r*(x))^2 over points from P.
    """
    pts = np.atleast_2d(np.asarray(eval_points, dtype=np.float64))
    r_hat, _ = ratio_forward(model, pts)
    r_true, _ = GaussianOracle.from_spec(spec).forward(pts)
    if side == "forward":
        return float(np.mean((r_hat - r_true) ** 2))
    if side == "inverse":
        return float(np.mean((1.0 / r_hat - 1.0 / r_true) ** 2))
    raise ValueError(f"side must be 'forward' or 'inverse', got {side!r}")


def drm_estimate(model, lam: float, X_eval: np.ndarray, Z_eval: np.ndarray,
                 convention: str = "likelihood") -> float:
    """
    DRM value of a trained model on held-out (X, Z).

    ``likelihood``: lam * mean log r(X) - (1 - lam) * mean log r(Z).
    ``khat``: the full stratified objective, i.e. likelihood part minus the penalties.
    """
    r_X, logr_X = ratio_forward(model, X_eval)
    r_Z, logr_Z = ratio_forward(model, Z_eval)
    if convention == "likelihood":
        return likelihood_part(lam, logr_X, logr_Z)
    if convention == "khat":
        return khat(ObjectiveSpec(lam=lam), r_X, logr_X, r_Z, logr_Z)
    raise ValueError(f"convention must be 'likelihood' or 'khat', got {convention!r}")


def median_heuristic(points: np.ndarray) -> float:
    """Median pairwise Euclidean distance over (at most the first 1000) points."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))[:MEDIAN_SUBSAMPLE]
    if pts.shape[0] < 2:
        return 1.0
    med = float(np.median(pdist(pts)))
    return med if med > 0 else 1.0


def _kernel_mean(A: np.ndarray, B: np.ndarray, sigma: float) -> float:
    total = 0.0
    for start in range(0, A.shape[0], _CHUNK):
        sq = cdist(A[start:start + _CHUNK], B, metric="sqeuclidean")
        total += float(np.exp(-sq / (2.0 * sigma * sigma)).sum())
    return total / (A.shape[0] * B.shape[0])


def mmd2(A: np.ndarray, B: np.ndarray, sigma: Optional[float] = None) -> float:
    """
    Biased MMD^2 with a Gaussian kernel.

    ``B`` is the validation set: with ``sigma=None`` the bandwidth is the median
    heuristic on B alone, so every ``A`` compared against the same B shares one
    kernel. The GAN loop computes that bandwidth once and passes it explicitly.
    """
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    B = np.atleast_2d(np.asarray(B, dtype=np.float64))
    if sigma is None:
        sigma = median_heuristic(B)
    if sigma <= 0:
        raise ValueError(f"kernel bandwidth must be positive, got {sigma}")
    value = _kernel_mean(A, A, sigma) + _kernel_mean(B, B, sigma) - 2.0 * _kernel_mean(A, B, sigma)
    return max(value, 0.0)


def scott_bandwidth(points: np.ndarray) -> float:
    """Scott's rule n^(-1/(d+4)) times the average per-dimension std."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    n, d = pts.shape
    std = float(np.mean(pts.std(axis=0, ddof=1))) if n > 1 else 1.0
    if std <= 0:
        std = 1.0
    return std * n ** (-1.0 / (d + 4))


def kde_nll(generated: np.ndarray, validation: np.ndarray, bandwidth: Optional[float] = None) -> float:
    """-(1/|V|) sum_v log p_hat(v) for an isotropic Gaussian KDE on ``generated``."""
    G = np.asarray(generated, dtype=np.float64)
    V = np.asarray(validation, dtype=np.float64)
    if G.ndim == 1:
        G = G.reshape(-1, 1)
    if V.ndim == 1:
        V = V.reshape(-1, 1)
    h = scott_bandwidth(G) if bandwidth is None else float(bandwidth)
    if h <= 0:
        raise ValueError(f"bandwidth must be positive, got {h}")
    d = G.shape[1]
    log_norm = np.log(G.shape[0]) + 0.5 * d * np.log(2.0 * np.pi * h * h)
    logp = np.empty(V.shape[0])
    for start in range(0, V.shape[0], _CHUNK):
        sq = cdist(V[start:start + _CHUNK], G, metric="sqeuclidean")
        logp[start:start + _CHUNK] = logsumexp(-sq / (2.0 * h * h), axis=1) - log_norm
    logp = np.maximum(logp, np.log(DENSITY_FLOOR))
    return float(-logp.mean())


def summarize_errors(errors: Iterable[float], **extra) -> EvalReport:
    """mean / median / sample std (ddof=1; 0 for a single trial)."""
    arr = np.asarray(list(errors), dtype=np.float64)
    if arr.size == 0:
        raise ValueError("need at least one trial")
    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return EvalReport(float(arr.mean()), float(np.median(arr)), std, int(arr.size), **extra)
