# drmtools/objectives.py
"""
Scalar training objectives on batch ratio values.

The numpy functions take 1-D arrays of r and log r evaluated on X (from P) and
Z (from Q). ``khat`` and friends are in maximization form, the losses in
minimization form. ``build_loss`` puts the same quantities on an autodiff Graph
for the trainers.

Variants
    ukl_p                      -mean log r(X) + mean r(Z)
    ukl_q                       mean log r(Z) + mean 1/r(X)
    stratified                 -Khat
    stratified_exp             -Khat written on g = log r (same value)
    stratified_exp_unweighted  as above with unweighted penalty terms
    nn_stratified              non-negative corrected Khat (branch switched)
    ipm                        -(lam * mean g(X) - (1 - lam) * mean g(Z))
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np

from .autodiff import Graph, Var
from .errors import NonFiniteValue, NonPositiveRatio
from .models import DEFAULT_RBAR

log = logging.getLogger(__name__)

__all__ = [
    "VARIANTS",
    "ObjectiveSpec",
    "BatchStats",
    "batch_stats",
    "khat_from_stats",
    "ukl_loss",
    "khat",
    "khat_exp",
    "khat_exp_unweighted",
    "likelihood_part",
    "objective_value",
    "nn_branch",
    "nnukl_loss",
    "build_loss",
    "LossTerms",
]

VARIANTS = (
    "ukl_p",
    "ukl_q",
    "stratified",
    "stratified_exp",
    "stratified_exp_unweighted",
    "nn_stratified",
    "ipm",
)

# Accept many spellings
_VARIANT_ALIASES = {
    "ukl": "ukl_p",
    "uklp": "ukl_p",
    "uklq": "ukl_q",
    "strat": "stratified",
    "drm": "stratified",
    "khat": "stratified",
    "exp": "stratified_exp",
    "stratifiedexp": "stratified_exp",
    "stratifiedexpunweighted": "stratified_exp_unweighted",
    "stratifiedexppaper": "stratified_exp_unweighted",
    "unweighted": "stratified_exp_unweighted",
    "nn": "nn_stratified",
    "nndrm": "nn_stratified",
    "nnstratified": "nn_stratified",
    "wd": "ipm",
}


def normalize_variant(name: str) -> str:
    key = name.strip().lower()
    if key in VARIANTS:
        return key
    squashed = key.replace("_", "").replace("-", "").replace(" ", "")
    if squashed in _VARIANT_ALIASES:
        return _VARIANT_ALIASES[squashed]
    raise ValueError(f"unknown objective variant {name!r}; expected one of {', '.join(VARIANTS)}")


@dataclass(frozen=True)
class ObjectiveSpec:
    """
    lam           mixing weight in [0, 1]
    variant       one of VARIANTS (aliases accepted)
    C             non-negative correction constant; None -> 1/rbar for nn_stratified, else 0
    rbar          clip bound shared with the model
    nn_normalize  margins from per-sample means (True) or from raw batch sums
    """

    lam: float = 0.5
    variant: str = "stratified"
    C: Optional[float] = None
    rbar: float = DEFAULT_RBAR
    nn_normalize: bool = True

    def __post_init__(self) -> None:
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must lie in [0, 1], got {self.lam}")
        if not self.rbar > 1.0:
            raise ValueError(f"rbar must exceed 1, got {self.rbar}")
        object.__setattr__(self, "variant", normalize_variant(self.variant))
        if self.C is None:
            c = 1.0 / self.rbar if self.variant == "nn_stratified" else 0.0
            object.__setattr__(self, "C", c)
        if self.C < 0:
            raise ValueError(f"correction constant C must be >= 0, got {self.C}")

    @property
    def corrected(self) -> bool:
        return self.variant == "nn_stratified" and self.C > 0

    def with_lambda(self, lam: float) -> "ObjectiveSpec":
        return replace(self, lam=lam)


@dataclass(frozen=True)
class BatchStats:
    mean_log_r_X: float
    mean_log_r_Z: float
    mean_inv_r_X: float
    mean_r_Z: float
    n: int
    m: int


def _positive(*arrays: np.ndarray) -> Tuple[np.ndarray, ...]:
    out = []
    for a in arrays:
        a = np.asarray(a, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(a)):
            raise NonFiniteValue("ratio values must be finite")
        if np.any(a <= 0):
            raise NonPositiveRatio("ratio values must be strictly positive")
        out.append(a)
    return tuple(out)


def _finite(*arrays: np.ndarray) -> Tuple[np.ndarray, ...]:
    out = []
    for a in arrays:
        a = np.asarray(a, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(a)):
            raise NonFiniteValue("log-ratio values must be finite")
        out.append(a)
    return tuple(out)


def batch_stats(r_X, r_Z, logr_X=None, logr_Z=None) -> BatchStats:
    r_X, r_Z = _positive(r_X, r_Z)
    lx = np.log(r_X) if logr_X is None else _finite(logr_X)[0]
    lz = np.log(r_Z) if logr_Z is None else _finite(logr_Z)[0]
    return BatchStats(float(lx.mean()), float(lz.mean()), float(np.mean(1.0 / r_X)),
                      float(r_Z.mean()), r_X.size, r_Z.size)


def ukl_loss(r_X, r_Z) -> float:
    """-(1/n) sum log r(X_i) + (1/m) sum r(Z_j)."""
    r_X, r_Z = _positive(r_X, r_Z)
    return float(-np.mean(np.log(r_X)) + np.mean(r_Z))


def khat(spec: ObjectiveSpec, r_X, logr_X, r_Z, logr_Z) -> float:
    """Stratified empirical objective (maximization form)."""
    return khat_from_stats(spec.lam, batch_stats(r_X, r_Z, logr_X, logr_Z))


def khat_from_stats(lam: float, stats: BatchStats) -> float:
    return float(
        lam * stats.mean_log_r_X
        - (1.0 - lam) * stats.mean_log_r_Z
        - (1.0 - lam) * stats.mean_inv_r_X
        - lam * stats.mean_r_Z
    )


def khat_exp(lam: float, g_X, g_Z) -> float:
    """Khat for r = exp(g), with the lambda-weighted penalties."""
    g_X, g_Z = _finite(g_X, g_Z)
    with np.errstate(over="ignore"):
        value = (lam * g_X.mean() - (1.0 - lam) * g_Z.mean()
                 - (1.0 - lam) * np.mean(np.exp(-g_X)) - lam * np.mean(np.exp(g_Z)))
    if not np.isfinite(value):
        raise NonFiniteValue("exponential objective overflowed")
    return float(value)


def khat_exp_unweighted(lam: float, g_X, g_Z) -> float:
    """Exponential objective with unweighted penalty terms."""
    g_X, g_Z = _finite(g_X, g_Z)
    with np.errstate(over="ignore"):
        value = (lam * g_X.mean() - (1.0 - lam) * g_Z.mean()
                 - np.mean(np.exp(-g_X)) - np.mean(np.exp(g_Z)))
    if not np.isfinite(value):
        raise NonFiniteValue("exponential objective overflowed")
    return float(value)


def likelihood_part(lam: float, logr_X, logr_Z) -> float:
    """lam * mean log r(X) - (1 - lam) * mean log r(Z); the reported DRM value."""
    logr_X, logr_Z = _finite(logr_X, logr_Z)
    return float(lam * logr_X.mean() - (1.0 - lam) * logr_Z.mean())


def nn_branch(spec: ObjectiveSpec, sum_r_X: float, sum_r_Z: float, sum_inv_r_X: float,
              sum_inv_r_Z: float, n: int, m: int) -> Tuple[bool, bool]:
    """
    (forward, inverse) margin tests; True means the corrected term is descended.
    Boundaries are inclusive. With ``spec.nn_normalize`` the sums are divided by
    their batch sizes before comparison.
    """
    C = spec.C
    if spec.nn_normalize:
        fwd = sum_r_Z / m - C * sum_r_X / n
        inv = sum_inv_r_X / n - C * sum_inv_r_Z / m
    else:
        fwd = sum_r_Z - C * sum_r_X
        inv = sum_inv_r_X - C * sum_inv_r_Z
    return bool(fwd >= 0), bool(inv >= 0)


def nnukl_loss(r_X, logr_X, r_Z, C: float, *, normalize: bool = False) -> float:
    """
    -sum(log r(X_i) - C r(X_i)) + max(0, sum r(Z_j) - C sum r(X_i)).
    ``normalize`` replaces each sum by the matching sample mean.
    """
    r_X, r_Z = _positive(r_X, r_Z)
    (logr_X,) = _finite(logr_X)
    agg = np.mean if normalize else np.sum
    return float(-agg(logr_X - C * r_X) + max(0.0, agg(r_Z) - C * agg(r_X)))


def objective_value(spec: ObjectiveSpec, r_X, logr_X, r_Z, logr_Z) -> float:
    """The variant's objective in maximization form (the negated training loss)."""
    v = spec.variant
    if v == "ukl_p":
        return -ukl_loss(r_X, r_Z)
    if v == "ukl_q":
        r_X, r_Z = _positive(r_X, r_Z)
        return -float(np.mean(_finite(logr_Z)[0]) + np.mean(1.0 / r_X))
    if v in ("stratified", "nn_stratified"):
        return khat(spec, r_X, logr_X, r_Z, logr_Z)
    if v == "stratified_exp":
        return khat_exp(spec.lam, logr_X, logr_Z)
    if v == "stratified_exp_unweighted":
        return khat_exp_unweighted(spec.lam, logr_X, logr_Z)
    return likelihood_part(spec.lam, logr_X, logr_Z)


# ---------- graph form ----------

@dataclass
class LossTerms:
    loss: Var
    branch_forward: bool = True
    branch_inverse: bool = True


def _agg(graph: Graph, x: Var, normalize: bool) -> Var:
    return graph.mean(x) if normalize else graph.sum(x)


def build_loss(spec: ObjectiveSpec, graph: Graph, r_X: Var, logr_X: Var,
               r_Z: Var, logr_Z: Var) -> LossTerms:
    """
    Descent loss for ``spec`` on n x 1 ratio nodes.

    For nn_stratified, each half of Khat is replaced by the ascent term on its
    violated margin. An active margin leaves that half identical to the plain
    stratified graph, since the C terms of the corrected loss cancel there.
    """
    lam = spec.lam
    v = spec.variant
    if v == "ukl_p":
        return LossTerms(r_Z.mean() - logr_X.mean())
    if v == "ukl_q":
        return LossTerms(logr_Z.mean() + graph.reciprocal(r_X).mean())
    if v == "ipm":
        return LossTerms(logr_Z.mean() * (1.0 - lam) - logr_X.mean() * lam)
    if v == "stratified_exp":
        inv_X = graph.exp(graph.neg(logr_X))
        r_Zx = graph.exp(logr_Z)
        fwd = (r_Zx.mean() - logr_X.mean()) * lam
        inv = (logr_Z.mean() + inv_X.mean()) * (1.0 - lam)
        return LossTerms(fwd + inv)
    if v == "stratified_exp_unweighted":
        inv_X = graph.exp(graph.neg(logr_X))
        r_Zx = graph.exp(logr_Z)
        like = logr_Z.mean() * (1.0 - lam) - logr_X.mean() * lam
        return LossTerms(like + inv_X.mean() + r_Zx.mean())

    inv_X = graph.reciprocal(r_X)
    fwd = (r_Z.mean() - logr_X.mean()) * lam
    inv = (logr_Z.mean() + inv_X.mean()) * (1.0 - lam)
    if v == "stratified" or not spec.corrected:
        return LossTerms(fwd + inv)

    norm = spec.nn_normalize
    inv_Z = graph.reciprocal(r_Z)
    n, m = r_X.shape[0], r_Z.shape[0]
    ok_fwd, ok_inv = nn_branch(
        spec,
        float(r_X.value.sum()), float(r_Z.value.sum()),
        float(inv_X.value.sum()), float(inv_Z.value.sum()), n, m,
    )
    C = spec.C
    if not ok_fwd:
        margin = _agg(graph, r_Z, norm) - _agg(graph, r_X, norm) * C
        fwd = graph.neg(margin) * lam
    if not ok_inv:
        margin = _agg(graph, inv_X, norm) - _agg(graph, inv_Z, norm) * C
        inv = graph.neg(margin) * (1.0 - lam)
    log.debug("nn branches: forward=%s inverse=%s", ok_fwd, ok_inv)
    return LossTerms(fwd + inv, ok_fwd, ok_inv)
