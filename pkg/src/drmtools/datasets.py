# drmtools/datasets.py
"""
Seeded samplers for the synthetic benchmarks.

Gaussian pairs draw X from stream 0 and Z from stream 1 of the seed (see
``drmtools.rng``), so changing m never perturbs X. Held-out evaluation points
use streams 2 (from Q) and 3 (from P).

2-D shapes (all clipped to the box in ``DEFAULT_SHAPES``):

    MoG     8 equally weighted Gaussians on a circle of radius 2, std 0.1
    Banana  (x, y) ~ N(0, I), then y -> y + b x^2 - b with b = 0.5
    Rings   radii 1 and 2 with equal weight, isotropic noise std 0.05
    Square  uniform on the boundary of [-1, 1]^2, noise std 0.05
    Cosine  x ~ U(-2, 2), y = cos(pi x) + N(0, 0.1^2)
    Funnel  v ~ N(0, 1.5^2), x ~ N(0, exp(v)); points are (x, v)
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Tuple, Union

import numpy as np

from .errors import UnknownShape
from .metrics import GaussianPairSpec
from .rng import box_muller, child_rng, make_rng

__all__ = [
    "SamplePair",
    "ShapeSpec",
    "DEFAULT_SHAPES",
    "MOG", "BANANA", "RINGS", "SQUARE", "COSINE", "FUNNEL",
    "normalize_shape",
    "sample_gaussian_pair",
    "sample_eval_points",
    "sample_shape2d",
]

X_STREAM, Z_STREAM, EVAL_Q_STREAM, EVAL_P_STREAM = 0, 1, 2, 3


@dataclass(frozen=True)
class SamplePair:
    X: np.ndarray
    Z: np.ndarray
    spec: Union[GaussianPairSpec, str, None] = None
    seed: int | None = None

    def __post_init__(self) -> None:
        X = np.atleast_2d(np.asarray(self.X, dtype=np.float64))
        Z = np.atleast_2d(np.asarray(self.Z, dtype=np.float64))
        if X.shape[0] < 1 or Z.shape[0] < 1:
            raise ValueError("both sample sets need at least one point")
        if X.shape[1] != Z.shape[1]:
            raise ValueError(f"X has {X.shape[1]} columns, Z has {Z.shape[1]}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Z))):
            raise ValueError("sample sets must be finite")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Z", Z)

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def m(self) -> int:
        return self.Z.shape[0]


def _draw_normal(mu, count: int, seed: int, stream: int) -> np.ndarray:
    mu = np.asarray(mu, dtype=np.float64)
    return mu + box_muller(child_rng(seed, stream), (count, mu.shape[0]))


def sample_gaussian_pair(spec: GaussianPairSpec, n: int, m: int, seed: int) -> SamplePair:
    """X ~ N(mu_p, I) (n rows), Z ~ N(mu_q, I) (m rows), Box-Muller on Philox."""
    if n < 1 or m < 1:
        raise ValueError(f"need n, m >= 1, got n={n}, m={m}")
    X = _draw_normal(spec.mu_p, n, seed, X_STREAM)
    Z = _draw_normal(spec.mu_q, m, seed, Z_STREAM)
    return SamplePair(X, Z, spec, seed)


def sample_eval_points(spec: GaussianPairSpec, count: int, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """Held-out (from_Q, from_P) points, disjoint streams from the training pair."""
    return (_draw_normal(spec.mu_q, count, seed, EVAL_Q_STREAM),
            _draw_normal(spec.mu_p, count, seed, EVAL_P_STREAM))


# ---------- 2-D shapes ----------

class _Key(str):
    pass


MOG = _Key("MoG")
BANANA = _Key("Banana")
RINGS = _Key("Rings")
SQUARE = _Key("Square")
COSINE = _Key("Cosine")
FUNNEL = _Key("Funnel")


@dataclass(frozen=True)
class ShapeSpec:
    name: str
    box: Tuple[Tuple[float, float], Tuple[float, float]]
    params: Dict[str, Any] = field(default_factory=dict)


DEFAULT_SHAPES: Dict[str, ShapeSpec] = {
    MOG: ShapeSpec(MOG, ((-2.5, 2.5), (-2.5, 2.5)), {"modes": 8, "radius": 2.0, "std": 0.1}),
    BANANA: ShapeSpec(BANANA, ((-4.0, 4.0), (-4.0, 8.0)), {"curvature": 0.5}),
    RINGS: ShapeSpec(RINGS, ((-2.5, 2.5), (-2.5, 2.5)), {"radii": (1.0, 2.0), "std": 0.05}),
    SQUARE: ShapeSpec(SQUARE, ((-1.5, 1.5), (-1.5, 1.5)), {"half_width": 1.0, "std": 0.05}),
    COSINE: ShapeSpec(COSINE, ((-2.0, 2.0), (-1.5, 1.5)), {"x_range": 2.0, "std": 0.1}),
    FUNNEL: ShapeSpec(FUNNEL, ((-4.0, 4.0), (-4.0, 4.0)), {"scale": 1.5}),
}

# Accept many spellings
_ALIASES: Dict[str, str] = {
    "mog": MOG, "gmm": MOG, "mixture": MOG, "8gaussians": MOG, "mixtureofgaussians": MOG,
    "banana": BANANA,
    "ring": RINGS, "rings": RINGS, "circles": RINGS,
    "square": SQUARE, "box": SQUARE,
    "cosine": COSINE, "cos": COSINE,
    "funnel": FUNNEL, "neal": FUNNEL, "nealsfunnel": FUNNEL,
}


def normalize_shape(name: Union[str, ShapeSpec]) -> str:
    if isinstance(name, ShapeSpec):
        return name.name
    if isinstance(name, _Key):
        return str(name)
    if not isinstance(name, str):
        raise TypeError(f"Unsupported shape selector: {name!r}")
    key = _ALIASES.get(name.strip().lower().replace("_", "").replace("-", "").replace(" ", ""))
    if key is None:
        raise UnknownShape(f"unknown shape {name!r}; expected one of {', '.join(DEFAULT_SHAPES)}")
    return key


def _mog(rng, n, p):
    k = p["modes"]
    idx = rng.integers(0, k, size=n)
    angle = 2.0 * np.pi * idx / k
    centers = p["radius"] * np.column_stack([np.cos(angle), np.sin(angle)])
    return centers + p["std"] * box_muller(rng, (n, 2))


def _banana(rng, n, p):
    b = p["curvature"]
    z = box_muller(rng, (n, 2))
    return np.column_stack([z[:, 0], z[:, 1] + b * z[:, 0] ** 2 - b])


def _rings(rng, n, p):
    radii = np.asarray(p["radii"])
    idx = rng.integers(0, radii.size, size=n)
    angle = 2.0 * np.pi * rng.random(n)
    pts = radii[idx, None] * np.column_stack([np.cos(angle), np.sin(angle)])
    return pts + p["std"] * box_muller(rng, (n, 2))


def _square(rng, n, p):
    a = p["half_width"]
    side = rng.integers(0, 4, size=n)
    t = rng.uniform(-a, a, size=n)
    x = np.where(side == 0, -a, np.where(side == 1, a, t))
    y = np.where(side == 2, -a, np.where(side == 3, a, t))
    return np.column_stack([x, y]) + p["std"] * box_muller(rng, (n, 2))


def _cosine(rng, n, p):
    x = rng.uniform(-p["x_range"], p["x_range"], size=n)
    y = np.cos(np.pi * x) + p["std"] * box_muller(rng, n)
    return np.column_stack([x, y])


def _funnel(rng, n, p):
    z = box_muller(rng, (n, 2))
    v = p["scale"] * z[:, 1]
    x = np.exp(0.5 * v) * z[:, 0]
    return np.column_stack([x, v])


_RECIPES: Dict[str, Callable[[np.random.Generator, int, Dict[str, Any]], np.ndarray]] = {
    MOG: _mog,
    BANANA: _banana,
    RINGS: _rings,
    SQUARE: _square,
    COSINE: _cosine,
    FUNNEL: _funnel,
}


def sample_shape2d(shape: Union[str, ShapeSpec], n: int, seed: int) -> np.ndarray:
    """n x 2 draws from a named 2-D shape, clipped to its documented box."""
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    spec = shape if isinstance(shape, ShapeSpec) else DEFAULT_SHAPES[normalize_shape(shape)]
    pts = _RECIPES[spec.name](make_rng(seed), n, spec.params)
    (x_lo, x_hi), (y_lo, y_hi) = spec.box
    return np.column_stack([np.clip(pts[:, 0], x_lo, x_hi), np.clip(pts[:, 1], y_lo, y_hi)])
