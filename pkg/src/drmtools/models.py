# drmtools/models.py
"""
Positive ratio models r: R^d -> (0, inf).

MlpRatioModel      3-layer ReLU perceptron d -> hidden -> hidden -> 1 producing the
                   log-ratio g(x); r = exp(clip(g, +-log Rbar)) in exponential mode.
KernelRatioModel   linear-in-parameter Gaussian-kernel expansion r = max(theta^T phi(x), floor).
GaussianOracle     the analytic ratio of a GaussianPairSpec (optionally scaled), used as
                   an "exact" model by the metrics and the optimality checks.

Every model exposes ``forward(X) -> (r, log r)`` on an n x d batch; ``ratio_forward``
is the checked entry point.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Dict, Optional, Protocol, Tuple

import numpy as np
from scipy.spatial.distance import cdist

from .autodiff import Graph, SpectralState, Var, init_spectral_state, spectral_weight
from .errors import NonFiniteValue, ShapeMismatch
from .rng import make_rng

__all__ = [
    "DEFAULT_RBAR",
    "OUTPUT_MODES",
    "KERNEL_FLOOR",
    "HypothesisClass",
    "RatioModel",
    "MlpRatioModel",
    "KernelRatioModel",
    "GaussianOracle",
    "mlp_init",
    "ratio_forward",
    "kernel_design_matrix",
]

DEFAULT_RBAR = 1e6
OUTPUT_MODES = ("exponential", "clipped_softplus")
KERNEL_FLOOR = 1e-12
LAYERS = ("1", "2", "3")


class RatioModel(Protocol):
    def forward(self, X: np.ndarray) -> Tuple[np.ndarray, np.ndarray]: ...


@dataclass(frozen=True)
class HypothesisClass:
    """
    The bounded model family: r (ratio), g = log r (exponential mode), Rbar (clip
    bound) and the family name. Every member satisfies 1/Rbar <= r <= Rbar.
    """

    family: str
    rbar: float
    output_mode: str = "exponential"

    @property
    def log_bound(self) -> float:
        return float(np.log(self.rbar))

    @property
    def bounds(self) -> Tuple[float, float]:
        return 1.0 / self.rbar, self.rbar


# ---------- MLP ----------

@dataclass
class MlpRatioModel:
    params: Dict[str, np.ndarray]
    output_mode: str = "exponential"
    rbar: float = DEFAULT_RBAR
    spectral_norm: bool = False
    spectral: Dict[str, SpectralState] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.output_mode not in OUTPUT_MODES:
            raise ValueError(f"output_mode must be one of {OUTPUT_MODES}, got {self.output_mode!r}")
        if not self.rbar > 1.0:
            raise ValueError(f"clip bound rbar must exceed 1, got {self.rbar}")

    @property
    def input_dim(self) -> int:
        return self.params["W1"].shape[0]

    @property
    def hidden(self) -> int:
        return self.params["W1"].shape[1]

    @property
    def n_params(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    @property
    def hypothesis(self) -> HypothesisClass:
        return HypothesisClass("mlp", self.rbar, self.output_mode)

    def copy(self) -> "MlpRatioModel":
        return copy.deepcopy(self)

    # graph construction
    def build_weights(self, graph: Graph, *, trainable: bool = True,
                      update_spectral: bool = False) -> Dict[str, Var]:
        """
        Put the layer parameters on ``graph``. With spectral normalization the
        weight nodes are W / sigma(W); ``update_spectral`` runs the power iteration
        and persists the new u on the model.
        """
        leaf = graph.param if trainable else (lambda _name, value: graph.const(value))
        weights: Dict[str, Var] = {}
        for key in sorted(self.params):
            weights[key] = leaf(key, self.params[key])
        if self.spectral_norm:
            for layer in LAYERS:
                key = f"W{layer}"
                weights[key], state = spectral_weight(graph, weights[key], self.spectral[key],
                                                      update=update_spectral)
                if update_spectral:
                    self.spectral[key] = state
        return weights

    def log_ratio_graph(self, graph: Graph, weights: Dict[str, Var], X) -> Var:
        """Unclipped network output g(X) as an n x 1 node."""
        h = X if isinstance(X, Var) else graph.const(X)
        for layer in ("1", "2"):
            h = graph.relu(graph.bias_add(h @ weights[f"W{layer}"], weights[f"b{layer}"]))
        return graph.bias_add(h @ weights["W3"], weights["b3"])

    def ratio_graph(self, graph: Graph, weights: Dict[str, Var], X) -> Tuple[Var, Var]:
        """(r, log r) nodes for batch X, clipping applied."""
        g = self.log_ratio_graph(graph, weights, X)
        bound = float(np.log(self.rbar))
        if self.output_mode == "exponential":
            logr = graph.clip(g, -bound, bound)
            return graph.exp(logr), logr
        # clipped softplus: log(1 + e^g), then clamped to [1/Rbar, Rbar]
        soft = graph.log(graph.add(graph.exp(graph.clip(g, -bound, bound)), graph.const(1.0)))
        r = graph.clip(soft, 1.0 / self.rbar, self.rbar)
        return r, graph.log(r)

    def forward(self, X: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.input_dim:
            raise ShapeMismatch(f"model expects n x {self.input_dim} input, got {X.shape}")
        graph = Graph()
        weights = self.build_weights(graph, trainable=False)
        r, logr = self.ratio_graph(graph, weights, X)
        return r.value[:, 0].copy(), logr.value[:, 0].copy()

    def ratio(self, X: np.ndarray) -> np.ndarray:
        return self.forward(X)[0]

    def spectral_sigmas(self) -> Dict[str, float]:
        """Current sigma estimate of every weight (u held fixed)."""
        out = {}
        for layer in LAYERS:
            key = f"W{layer}"
            W = self.params[key]
            if self.spectral_norm:
                u = self.spectral[key].u
                v = W.T @ u
                v = v / np.linalg.norm(v)
                out[key] = float(u @ W @ v)
            else:
                out[key] = float(np.linalg.norm(W, 2))
        return out


def mlp_init(
    d: int,
    hidden: int = 32,
    seed: int = 0,
    *,
    output_mode: str = "exponential",
    rbar: float = DEFAULT_RBAR,
    spectral_norm: bool = False,
    n_power_iters: int = 1,
) -> MlpRatioModel:
    """
    Uniform fan-in initialization U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and
    hidden biases, final bias 0. Deterministic given ``seed``.
    """
    if d < 1 or hidden < 1:
        raise ValueError(f"need d >= 1 and hidden >= 1, got d={d}, hidden={hidden}")
    rng = make_rng(seed)
    shapes = [(d, hidden), (hidden, hidden), (hidden, 1)]
    params: Dict[str, np.ndarray] = {}
    for layer, (fan_in, fan_out) in zip(LAYERS, shapes):
        bound = 1.0 / np.sqrt(fan_in)
        params[f"W{layer}"] = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        if layer == "3":
            params[f"b{layer}"] = np.zeros((1, fan_out))
        else:
            params[f"b{layer}"] = rng.uniform(-bound, bound, size=(1, fan_out))
    spectral: Dict[str, SpectralState] = {}
    if spectral_norm:
        for layer in LAYERS:
            key = f"W{layer}"
            spectral[key] = init_spectral_state(params[key].shape[0], rng, n_power_iters)
    return MlpRatioModel(params, output_mode, rbar, spectral_norm, spectral)


# ---------- kernel models ----------

def kernel_design_matrix(points: np.ndarray, centers: np.ndarray, sigma: float) -> np.ndarray:
    """Gaussian features exp(-||x_i - c_j||^2 / (2 sigma^2)), shape n x b."""
    if sigma <= 0:
        raise ValueError(f"kernel bandwidth must be positive, got {sigma}")
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    centers = np.atleast_2d(np.asarray(centers, dtype=np.float64))
    sq = cdist(points, centers, metric="sqeuclidean")
    return np.exp(-sq / (2.0 * sigma * sigma))


@dataclass
class KernelRatioModel:
    centers: np.ndarray
    theta: np.ndarray
    sigma: float
    floor: float = KERNEL_FLOOR

    def __post_init__(self) -> None:
        self.centers = np.atleast_2d(np.asarray(self.centers, dtype=np.float64))
        self.theta = np.asarray(self.theta, dtype=np.float64).reshape(-1)
        if self.theta.shape[0] != self.centers.shape[0]:
            raise ShapeMismatch(f"{self.theta.shape[0]} weights for {self.centers.shape[0]} centers")
        if self.sigma <= 0:
            raise ValueError(f"kernel bandwidth must be positive, got {self.sigma}")

    @property
    def input_dim(self) -> int:
        return self.centers.shape[1]

    @property
    def hypothesis(self) -> HypothesisClass:
        return HypothesisClass("gaussian-kernel", 1.0 / self.floor, "linear")

    def copy(self) -> "KernelRatioModel":
        return copy.deepcopy(self)

    def design(self, X: np.ndarray) -> np.ndarray:
        return kernel_design_matrix(X, self.centers, self.sigma)

    def forward(self, X: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        r = np.maximum(self.design(X) @ self.theta, self.floor)
        return r, np.log(r)

    def ratio(self, X: np.ndarray) -> np.ndarray:
        return self.forward(X)[0]


@dataclass(frozen=True)
class GaussianOracle:
    """alpha * r*(x) for identity-covariance Gaussians with means mu_p, mu_q."""

    mu_p: Tuple[float, ...]
    mu_q: Tuple[float, ...]
    alpha: float = 1.0

    @classmethod
    def from_spec(cls, spec, alpha: float = 1.0) -> "GaussianOracle":
        return cls(tuple(spec.mu_p), tuple(spec.mu_q), alpha)

    @property
    def input_dim(self) -> int:
        return len(self.mu_p)

    def forward(self, X: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        mp = np.asarray(self.mu_p)
        mq = np.asarray(self.mu_q)
        logr = -0.5 * np.sum((X - mp) ** 2, axis=1) + 0.5 * np.sum((X - mq) ** 2, axis=1)
        logr = logr + np.log(self.alpha)
        return np.exp(logr), logr


def ratio_forward(model: RatioModel, X: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(r, log r) for an n x d batch, checking the input and the positivity contract."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if not np.all(np.isfinite(X)):
        raise NonFiniteValue("input batch contains NaN/Inf")
    dim: Optional[int] = getattr(model, "input_dim", None)
    if dim is not None and X.shape[1] != dim:
        raise ShapeMismatch(f"model expects {dim} input columns, got {X.shape[1]}")
    r, logr = model.forward(X)
    if not (np.all(np.isfinite(r)) and np.all(np.isfinite(logr))):
        raise NonFiniteValue("model produced a non-finite ratio")
    return r, logr
