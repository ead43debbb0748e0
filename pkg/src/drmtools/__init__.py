# drmtools/__init__.py
"""
drmtools: density-ratio estimation with stratified (DRM) objectives

Typical use:
    import drmtools as dt

    spec = dt.GaussianPairSpec.unit_shift(d=2, shift=1.0)
    pair = dt.sample_gaussian_pair(spec, n=1000, m=1000, seed=0)

    cfg = dt.TrainConfig(epochs=200).with_spec(lam=0.5, variant="stratified")
    model, history = dt.train_dre(dt.init_model(2, cfg), pair, cfg)

Baselines:
    dt.fit_lsif(pair.X, pair.Z)              # uLSIF, CV over (sigma, reg)
    dt.fit_lsif(pair.X, pair.Z, alpha=0.1)   # RuLSIF

GAN on a 2-D shape:
    gen, disc, hist = dt.train_slogan("MoG", dt.GanConfig(epochs=500))

Command line:
    drmtools benchmark --config configs/gaussian_grid.ini --out runs/gaussian_grid
"""

# --- package version ---------------------------------------------------------
try:
    from importlib.metadata import version as _pkg_version
    __version__ = _pkg_version("drmtools")
except Exception:  # pragma: no cover
    __version__ = "0+local"

# --- submodules as namespaces ------------------------------------------------
from . import autodiff as autodiff
from . import models as models
from . import objectives as objectives
from . import metrics as metrics
from . import datasets as datasets
from . import trainers as trainers
from . import baselines as baselines
from . import slogan as slogan
from . import config as config
from . import drmio as drmio

# --- top-level conveniences --------------------------------------------------
from .errors import (
    DrmError,
    ShapeMismatch,
    NonScalarOutput,
    NonFiniteValue,
    ZeroMatrix,
    NonPositiveRatio,
    DegenerateConstraint,
    SingularSystem,
    UnknownShape,
    UnknownMethod,
    ParseError,
    UnknownKey,
    ConfigRangeError,
)
from .rng import make_rng, child_rng, split_seed

from .models import HypothesisClass, MlpRatioModel, KernelRatioModel, GaussianOracle, mlp_init
from .objectives import ObjectiveSpec, objective_value, VARIANTS
from .metrics import GaussianPairSpec, gaussian_true_ratio, gaussian_kl, l2_error, drm_estimate, mmd2, kde_nll
from .datasets import SamplePair, sample_gaussian_pair, sample_eval_points, sample_shape2d, normalize_shape
from .datasets import MOG, BANANA, RINGS, SQUARE, COSINE, FUNNEL
from .trainers import TrainConfig, TrainHistory, init_model, train_dre, train_kliep
from .baselines import ulsif_fit, rulsif_fit, cv_select, fit_lsif
from .slogan import GanConfig, GanHistory, train_slogan
from .config import RunConfig, parse_config, print_config
from .drmio import RunRecord, write_records, summarize, save_checkpoint, load_checkpoint

__all__ = [
    # submodules
    "autodiff", "models", "objectives", "metrics", "datasets", "trainers",
    "baselines", "slogan", "config", "drmio",
    # errors
    "DrmError", "ShapeMismatch", "NonScalarOutput", "NonFiniteValue", "ZeroMatrix",
    "NonPositiveRatio", "DegenerateConstraint", "SingularSystem", "UnknownShape",
    "UnknownMethod", "ParseError", "UnknownKey", "ConfigRangeError",
    # randomness
    "make_rng", "child_rng", "split_seed",
    # models
    "HypothesisClass", "MlpRatioModel", "KernelRatioModel", "GaussianOracle", "mlp_init",
    # objectives and metrics
    "ObjectiveSpec", "objective_value", "VARIANTS",
    "GaussianPairSpec", "gaussian_true_ratio", "gaussian_kl", "l2_error", "drm_estimate", "mmd2", "kde_nll",
    # data
    "SamplePair", "sample_gaussian_pair", "sample_eval_points", "sample_shape2d", "normalize_shape",
    "MOG", "BANANA", "RINGS", "SQUARE", "COSINE", "FUNNEL",
    # training
    "TrainConfig", "TrainHistory", "init_model", "train_dre", "train_kliep",
    "ulsif_fit", "rulsif_fit", "cv_select", "fit_lsif",
    "GanConfig", "GanHistory", "train_slogan",
    # config and io
    "RunConfig", "parse_config", "print_config",
    "RunRecord", "write_records", "summarize", "save_checkpoint", "load_checkpoint",
    # meta
    "__version__",
]
