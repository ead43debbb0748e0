# drmtools/trainers.py
"""
Minibatch training loops.

train_dre     Adam on the descent loss of ``cfg.spec`` (every variant, nn_stratified
              included) for an MlpRatioModel.
train_kliep   projected gradient ascent for a KernelRatioModel under the empirical
              constraint mean r(Z) = 1.

An epoch draws an independent permutation of X and of Z and pairs them into
N = ceil(min(n, m) / batch_size) minibatches (``np.array_split`` on both, so
asymmetric n, m keep their proportions). No early stopping.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd
from tqdm.auto import tqdm

from .autodiff import AdamState, Graph, adam_step, evaluate_with_grad
from .datasets import SamplePair
from .errors import DegenerateConstraint, NonFiniteValue, ShapeMismatch
from .metrics import GaussianPairSpec, l2_error
from .models import KernelRatioModel, MlpRatioModel, mlp_init
from .objectives import ObjectiveSpec, build_loss, objective_value
from .rng import child_rng

log = logging.getLogger(__name__)

__all__ = [
    "TrainConfig",
    "HistoryRow",
    "TrainHistory",
    "HISTORY_COLUMNS",
    "init_model",
    "minibatches",
    "train_dre",
    "kliep_project",
    "train_kliep",
]

SHUFFLE_STREAM = 7
HISTORY_COLUMNS = ("epoch", "objective", "l2_error", "branch_fwd_ascends", "branch_inv_ascends")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 128
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    spectral_norm: bool = True
    n_power_iters: int = 1
    hidden: int = 32
    output_mode: str = "exponential"
    spec: ObjectiveSpec = field(default_factory=ObjectiveSpec)
    eval_every: int = 10
    eval_points: int = 10000

    def __post_init__(self) -> None:
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("Adam betas must lie in [0, 1)")
        if self.n_power_iters < 1:
            raise ValueError("n_power_iters must be >= 1")
        if self.eval_every < 1:
            raise ValueError("eval_every must be >= 1")
        if self.eval_points < 1:
            raise ValueError("eval_points must be >= 1")

    def with_spec(self, **changes) -> "TrainConfig":
        return replace(self, spec=replace(self.spec, **changes))


@dataclass(frozen=True)
class HistoryRow:
    epoch: int
    objective: float
    l2_error: Optional[float]
    branch_fwd_ascends: int
    branch_inv_ascends: int


@dataclass
class TrainHistory:
    rows: List[HistoryRow] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rows)

    def append(self, row: HistoryRow) -> None:
        if self.rows and row.epoch <= self.rows[-1].epoch:
            raise ValueError("history epochs must increase")
        self.rows.append(row)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([asdict(r) for r in self.rows], columns=list(HISTORY_COLUMNS))


def init_model(d: int, cfg: TrainConfig) -> MlpRatioModel:
    """The MLP described by ``cfg`` (width, output mode, clip bound, spectral norm)."""
    return mlp_init(
        d, cfg.hidden, cfg.seed,
        output_mode=cfg.output_mode,
        rbar=cfg.spec.rbar,
        spectral_norm=cfg.spectral_norm,
        n_power_iters=cfg.n_power_iters,
    )


def minibatches(rng: np.random.Generator, n: int, m: int, batch_size: int):
    """One epoch of paired (X index, Z index) minibatches."""
    count = math.ceil(min(n, m) / batch_size)
    xs = np.array_split(rng.permutation(n), count)
    zs = np.array_split(rng.permutation(m), count)
    return list(zip(xs, zs))


def _evaluate(model, data: SamplePair, spec: ObjectiveSpec, truth, eval_points) -> Tuple[float, Optional[float]]:
    r_X, logr_X = model.forward(data.X)
    r_Z, logr_Z = model.forward(data.Z)
    value = objective_value(spec, r_X, logr_X, r_Z, logr_Z)
    err = None
    if truth is not None and eval_points is not None:
        err = l2_error(model, truth, eval_points, "forward")
    return value, err


def train_dre(
    model: MlpRatioModel,
    data: SamplePair,
    cfg: TrainConfig,
    *,
    truth: Optional[GaussianPairSpec] = None,
    eval_points: Optional[np.ndarray] = None,
    verbose: bool = False,
) -> Tuple[MlpRatioModel, TrainHistory]:
    """
    Train a copy of ``model`` on ``data``; the input model is left untouched.

    History rows are written every ``cfg.eval_every`` epochs and after the last
    one. Branch counters are cumulative ascent steps on the forward / inverse
    correction margins (always 0 unless the nn variant has C > 0).
    """
    if data.d != model.input_dim:
        raise ShapeMismatch(f"data has d={data.d}, model expects {model.input_dim}")
    model = model.copy()
    history = TrainHistory()
    if cfg.epochs == 0:
        return model, history

    spec = cfg.spec
    rng = child_rng(cfg.seed, SHUFFLE_STREAM)
    adam = AdamState(lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps)
    fwd_ascends = inv_ascends = 0
    log.debug("train_dre: variant=%s lam=%.3f n=%d m=%d epochs=%d",
              spec.variant, spec.lam, data.n, data.m, cfg.epochs)

    for epoch in tqdm(range(1, cfg.epochs + 1), desc=f"train {spec.variant}",
                      disable=not verbose, leave=False):
        try:
            for ix, iz in minibatches(rng, data.n, data.m, cfg.batch_size):
                graph = Graph()
                weights = model.build_weights(graph, update_spectral=model.spectral_norm)
                r_X, logr_X = model.ratio_graph(graph, weights, data.X[ix])
                r_Z, logr_Z = model.ratio_graph(graph, weights, data.Z[iz])
                terms = build_loss(spec, graph, r_X, logr_X, r_Z, logr_Z)
                fwd_ascends += not terms.branch_forward
                inv_ascends += not terms.branch_inverse
                _, grads = evaluate_with_grad(graph, terms.loss)
                model.params, adam = adam_step(model.params, grads, adam)
            if epoch % cfg.eval_every == 0 or epoch == cfg.epochs:
                value, err = _evaluate(model, data, spec, truth, eval_points)
                history.append(HistoryRow(epoch, value, err, fwd_ascends, inv_ascends))
        except NonFiniteValue as exc:
            exc.epoch = epoch
            log.error("training diverged: %s", exc)
            raise
    return model, history


def kliep_project(theta: np.ndarray, mean_phi_Z: np.ndarray) -> np.ndarray:
    """Clamp to theta >= 0 and rescale so that mean r(Z) = mean_phi_Z . theta = 1."""
    theta = np.maximum(theta, 0.0)
    scale = float(mean_phi_Z @ theta)
    if not scale > 0:
        raise DegenerateConstraint("mean r(Z) is zero; the normalization constraint cannot be met")
    return theta / scale


def train_kliep(
    model: KernelRatioModel,
    data: SamplePair,
    cfg: TrainConfig,
    *,
    lr: Optional[float] = None,
    verbose: bool = False,
) -> KernelRatioModel:
    """
    Full-batch projected ascent on (1/n) sum log r(X_i) subject to (1/m) sum r(Z_j) = 1
    and theta >= 0. Runs ``cfg.epochs`` steps with step size ``lr`` (default ``cfg.lr``).
    """
    if data.d != model.input_dim:
        raise ShapeMismatch(f"data has d={data.d}, model expects {model.input_dim}")
    model = model.copy()
    step = cfg.lr if lr is None else lr
    phi_X = model.design(data.X)
    mean_phi_Z = model.design(data.Z).mean(axis=0)
    theta = kliep_project(model.theta, mean_phi_Z)
    for _ in tqdm(range(cfg.epochs), desc="train kliep", disable=not verbose, leave=False):
        r_X = np.maximum(phi_X @ theta, model.floor)
        theta = theta + step * phi_X.T @ (1.0 / r_X) / data.n
        # pull back onto the constraint plane before clamping
        theta = theta + mean_phi_Z * (1.0 - mean_phi_Z @ theta) / (mean_phi_Z @ mean_phi_Z)
        theta = kliep_project(theta, mean_phi_Z)
    model.theta = theta
    return model
