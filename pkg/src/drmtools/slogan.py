# drmtools/slogan.py
"""
GAN on 2-D shapes whose discriminator is a stratified-likelihood ratio model.

The discriminator r ascends Khat(r; X_real, Z_gen) for ``d_steps`` minibatches,
then the generator takes one descent step on the Z-dependent part of Khat,

    -(1 - lam) * mean log r(G(eps)) - lam * mean r(G(eps)),

with gradients flowing through the (frozen) discriminator into G.

Seeds: real data, validation data, discriminator init and generator init use
``split_seed(cfg.seed, i)`` for i = 0, 1, 5, 6; noise and minibatch indices
use child streams 2 and 3; the evaluation noise (stream 4) is drawn once.
"""
from __future__ import annotations

import copy
import logging
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Tuple, Union

import numpy as np
import pandas as pd
from tqdm.auto import tqdm

from .autodiff import AdamState, Graph, Var, adam_step, evaluate_with_grad
from .datasets import ShapeSpec, normalize_shape, sample_shape2d
from .errors import NonFiniteValue, ShapeMismatch
from .metrics import drm_estimate, kde_nll, median_heuristic, mmd2
from .models import DEFAULT_RBAR, MlpRatioModel, mlp_init
from .objectives import ObjectiveSpec, build_loss, likelihood_part
from .rng import box_muller, child_rng, make_rng, split_seed

log = logging.getLogger(__name__)

__all__ = [
    "Generator",
    "GanConfig",
    "GanRow",
    "GanHistory",
    "generator_init",
    "generator_graph",
    "generator_forward",
    "smooth_curve",
    "train_slogan",
]

SMOOTH_WINDOW = 10
GEN_LAYERS = ("1", "2", "3")


@dataclass
class Generator:
    params: Dict[str, np.ndarray]

    @property
    def noise_dim(self) -> int:
        return self.params["W1"].shape[0]

    @property
    def out_dim(self) -> int:
        return self.params["W3"].shape[1]

    def copy(self) -> "Generator":
        return copy.deepcopy(self)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return generator_forward(self, box_muller(rng, (n, self.noise_dim)))


def generator_init(noise_dim: int = 8, hidden: int = 64, seed: int = 0, out_dim: int = 2) -> Generator:
    """Fan-in uniform weights, zero output bias."""
    rng = make_rng(seed)
    shapes = [(noise_dim, hidden), (hidden, hidden), (hidden, out_dim)]
    params: Dict[str, np.ndarray] = {}
    for layer, (fan_in, fan_out) in zip(GEN_LAYERS, shapes):
        bound = 1.0 / np.sqrt(fan_in)
        params[f"W{layer}"] = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        params[f"b{layer}"] = (np.zeros((1, fan_out)) if layer == "3"
                               else rng.uniform(-bound, bound, size=(1, fan_out)))
    return Generator(params)


def generator_graph(graph: Graph, gen: Generator, noise, *, trainable: bool = True) -> Var:
    if noise.shape[1] != gen.noise_dim:
        raise ShapeMismatch(f"generator expects n x {gen.noise_dim} noise, got {noise.shape}")
    leaf = graph.param if trainable else (lambda _name, value: graph.const(value))
    w = {key: leaf(key, gen.params[key]) for key in sorted(gen.params)}
    h = noise if isinstance(noise, Var) else graph.const(noise)
    for layer in ("1", "2"):
        h = graph.relu(graph.bias_add(h @ w[f"W{layer}"], w[f"b{layer}"]))
    return graph.bias_add(h @ w["W3"], w["b3"])


def generator_forward(gen: Generator, noise: np.ndarray) -> np.ndarray:
    """Samples G(noise), n x 2."""
    noise = np.atleast_2d(np.asarray(noise, dtype=np.float64))
    if noise.ndim != 2 or noise.shape[1] != gen.noise_dim:
        raise ShapeMismatch(f"generator expects n x {gen.noise_dim} noise, got {noise.shape}")
    graph = Graph()
    return generator_graph(graph, gen, noise, trainable=False).value.copy()


def smooth_curve(values, window: int = SMOOTH_WINDOW) -> np.ndarray:
    """Trailing moving average; the first window-1 points average what is available."""
    if window < 1:
        raise ValueError("window must be >= 1")
    return pd.Series(np.asarray(values, dtype=np.float64)).rolling(window, min_periods=1).mean().to_numpy()


@dataclass(frozen=True)
class GanConfig:
    lam: float = 0.5
    d_steps: int = 2
    epochs: int = 2000
    batch_size: int = 256
    lr_gen: float = 2e-4
    lr_disc: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    noise_dim: int = 8
    hidden: int = 64
    disc_hidden: int = 32
    spectral_norm: bool = True
    rbar: float = DEFAULT_RBAR
    n_real: int = 20000
    n_validation: int = 2000
    eval_samples: int = 5000
    eval_every: int = 100
    seed: int = 0
    train_generator: bool = True

    def __post_init__(self) -> None:
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must lie in [0, 1], got {self.lam}")
        if self.d_steps < 1:
            raise ValueError(f"d_steps must be >= 1, got {self.d_steps}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        for name in ("batch_size", "noise_dim", "hidden", "disc_hidden", "n_real",
                     "n_validation", "eval_samples", "eval_every"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.lr_gen <= 0 or self.lr_disc <= 0:
            raise ValueError("learning rates must be positive")

    @property
    def objective(self) -> ObjectiveSpec:
        return ObjectiveSpec(lam=self.lam, variant="stratified", rbar=self.rbar)


@dataclass(frozen=True)
class GanRow:
    epoch: int
    drm_estimate: float
    mmd: float
    nll: float


@dataclass
class GanHistory:
    rows: List[GanRow] = field(default_factory=list)
    drm_trace: List[float] = field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([asdict(r) for r in self.rows], columns=["epoch", "drm_estimate", "mmd", "nll"])

    def divergence_frame(self, window: int = SMOOTH_WINDOW) -> pd.DataFrame:
        trace = np.asarray(self.drm_trace, dtype=np.float64)
        return pd.DataFrame({
            "iteration": np.arange(1, trace.size + 1),
            "drm": trace,
            "drm_smoothed": smooth_curve(trace, window) if trace.size else trace,
        })

    @property
    def improved(self) -> bool:
        return len(self.rows) > 1 and self.rows[-1].mmd < self.rows[0].mmd


def _disc_step(disc: MlpRatioModel, X: np.ndarray, Z: np.ndarray, spec: ObjectiveSpec,
               adam: AdamState) -> Tuple[AdamState, float]:
    graph = Graph()
    weights = disc.build_weights(graph, update_spectral=disc.spectral_norm)
    r_X, logr_X = disc.ratio_graph(graph, weights, X)
    r_Z, logr_Z = disc.ratio_graph(graph, weights, Z)
    terms = build_loss(spec, graph, r_X, logr_X, r_Z, logr_Z)
    _, grads = evaluate_with_grad(graph, terms.loss)
    disc.params, adam = adam_step(disc.params, grads, adam)
    return adam, likelihood_part(spec.lam, logr_X.value, logr_Z.value)


def _gen_step(gen: Generator, disc: MlpRatioModel, noise: np.ndarray, lam: float,
              adam: AdamState) -> AdamState:
    graph = Graph()
    Z = generator_graph(graph, gen, noise)
    weights = disc.build_weights(graph, trainable=False)
    r_Z, logr_Z = disc.ratio_graph(graph, weights, Z)
    loss = graph.neg(logr_Z.mean() * (1.0 - lam) + r_Z.mean() * lam)
    _, grads = evaluate_with_grad(graph, loss)
    gen.params, adam = adam_step(gen.params, grads, adam)
    return adam


def train_slogan(
    shape: Union[str, ShapeSpec],
    cfg: GanConfig,
    *,
    verbose: bool = False,
) -> Tuple[Generator, MlpRatioModel, GanHistory]:
    """
    Alternating minimax training. History gets an epoch-0 row, one row every
    ``cfg.eval_every`` epochs and one after the last epoch; ``drm_trace`` holds
    the batch DRM value of the last discriminator step of every epoch.
    """
    name = normalize_shape(shape)
    real = sample_shape2d(shape, cfg.n_real, split_seed(cfg.seed, 0))
    validation = sample_shape2d(shape, cfg.n_validation, split_seed(cfg.seed, 1))
    noise_rng = child_rng(cfg.seed, 2)
    batch_rng = child_rng(cfg.seed, 3)
    eval_noise = box_muller(child_rng(cfg.seed, 4), (cfg.eval_samples, cfg.noise_dim))
    sigma = median_heuristic(validation)

    disc = mlp_init(2, cfg.disc_hidden, split_seed(cfg.seed, 5), rbar=cfg.rbar,
                    spectral_norm=cfg.spectral_norm)
    gen = generator_init(cfg.noise_dim, cfg.hidden, split_seed(cfg.seed, 6))
    spec = cfg.objective
    adam_d = AdamState(lr=cfg.lr_disc, beta1=cfg.beta1, beta2=cfg.beta2)
    adam_g = AdamState(lr=cfg.lr_gen, beta1=cfg.beta1, beta2=cfg.beta2)
    history = GanHistory()

    def evaluate(epoch: int) -> None:
        samples = generator_forward(gen, eval_noise)
        row = GanRow(
            epoch,
            drm_estimate(disc, cfg.lam, validation, samples),
            mmd2(samples, validation, sigma),
            kde_nll(samples, validation),
        )
        history.rows.append(row)
        log.debug("gan %s epoch %d: drm=%.4f mmd=%.3e nll=%.4f", name, epoch, row.drm_estimate, row.mmd, row.nll)

    evaluate(0)
    for epoch in tqdm(range(1, cfg.epochs + 1), desc=f"gan {name}", disable=not verbose, leave=False):
        try:
            value = float("nan")
            for _ in range(cfg.d_steps):
                X = real[batch_rng.integers(0, cfg.n_real, size=cfg.batch_size)]
                Z = generator_forward(gen, box_muller(noise_rng, (cfg.batch_size, cfg.noise_dim)))
                adam_d, value = _disc_step(disc, X, Z, spec, adam_d)
            history.drm_trace.append(value)
            if cfg.train_generator:
                noise = box_muller(noise_rng, (cfg.batch_size, cfg.noise_dim))
                adam_g = _gen_step(gen, disc, noise, cfg.lam, adam_g)
            if epoch % cfg.eval_every == 0 or epoch == cfg.epochs:
                evaluate(epoch)
        except NonFiniteValue as exc:
            exc.epoch = epoch
            log.error("GAN training diverged on %s: %s", name, exc)
            raise
    return gen, disc, history
