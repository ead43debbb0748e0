# drmtools/config.py
"""
Run configuration: a sectioned ``key = value`` text file.

    [dataset]   d, n, m, mu_p, mu_q, shape
    [objective] lambda, variant, C, rbar, nn_normalize
    [train]     epochs, batch_size, lr, beta1, beta2, eps, seed, spectral_norm,
                n_power_iters, hidden, output_mode, eval_every, eval_points
    [benchmark] methods, dims, lambdas, trials | seeds, n, m, alpha, shift,
                kernel_centers, cv_folds, plots
    [gan]       shape, lambda, d_steps, epochs, batch_size, lr_gen, lr_disc,
                noise_dim, hidden, n_real, n_validation, eval_samples, eval_every,
                seed, plots

``#`` and ``;`` start comments. Lists are comma separated; integer lists accept
ranges (``seeds = 0-9, 12``). ``mu_p``/``mu_q`` take a full vector or one number
s meaning s * e1. Every key is optional; ``print_config`` writes the fully
defaulted file back out and re-parses to an equal configuration.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Optional, Tuple, Union

from .datasets import normalize_shape
from .errors import ConfigRangeError, ParseError, UnknownKey, UnknownMethod
from .metrics import GaussianPairSpec
from .models import OUTPUT_MODES
from .objectives import ObjectiveSpec, normalize_variant
from .slogan import GanConfig
from .trainers import TrainConfig

__all__ = [
    "METHODS",
    "DatasetConfig",
    "BenchmarkConfig",
    "GanRunConfig",
    "RunConfig",
    "normalize_method",
    "parse_int_list",
    "format_int_list",
    "parse_config",
    "parse_config_text",
    "print_config",
]

METHODS = ("drm", "wd", "nndrm", "ukl", "kliep", "ulsif", "rulsif")

# Accept many spellings
_METHOD_ALIASES: Dict[str, str] = {
    "drm": "drm", "stratified": "drm", "mple": "drm",
    "wd": "wd", "ipm": "wd", "wasserstein": "wd",
    "nndrm": "nndrm", "nn": "nndrm", "nnstratified": "nndrm",
    "ukl": "ukl", "uklp": "ukl",
    "kliep": "kliep",
    "ulsif": "ulsif", "lsif": "ulsif",
    "rulsif": "rulsif", "relativeulsif": "rulsif",
}


def normalize_method(name: str) -> str:
    key = re.sub(r"[\s_\-]+", "", name.strip().lower())
    if key not in _METHOD_ALIASES:
        raise UnknownMethod(f"unknown method {name!r}; expected one of {', '.join(METHODS)}")
    return _METHOD_ALIASES[key]


def parse_int_list(spec: Union[int, str, Iterable[int]]) -> List[int]:
    """
    Accept 3, [0, 4], "0-9, 12" and return a flat list of ints.
    """
    if isinstance(spec, int):
        return [spec]
    if isinstance(spec, str):
        out: List[int] = []
        for part in re.split(r"[,\s]+", spec.strip()):
            if not part:
                continue
            m = re.fullmatch(r"(\d+)-(\d+)", part)
            if m:
                a, b = int(m.group(1)), int(m.group(2))
                if b < a:
                    raise ValueError(f"descending range {part!r}")
                out.extend(range(a, b + 1))
            else:
                out.append(int(part))
        return out
    return [int(x) for x in spec]


def format_int_list(values: Iterable[int]) -> str:
    """Inverse of parse_int_list; consecutive runs collapse to a-b."""
    vals = list(values)
    parts: List[str] = []
    i = 0
    while i < len(vals):
        j = i
        while j + 1 < len(vals) and vals[j + 1] == vals[j] + 1:
            j += 1
        parts.append(str(vals[i]) if j - i < 2 else f"{vals[i]}-{vals[j]}")
        if 0 < j - i < 2:
            parts.extend(str(v) for v in vals[i + 1:j + 1])
        i = j + 1
    return ", ".join(parts)


# ---------- config blocks ----------

@dataclass(frozen=True)
class DatasetConfig:
    d: int = 2
    n: int = 1000
    m: int = 1000
    mu_p: Tuple[float, ...] = (0.0,)
    mu_q: Tuple[float, ...] = (1.0,)
    shape: str = "gaussian"

    def _mean(self, mu: Tuple[float, ...], d: int) -> Tuple[float, ...]:
        if len(mu) == d:
            return tuple(mu)
        if len(mu) == 1:
            return (float(mu[0]),) + (0.0,) * (d - 1)
        raise ValueError(f"mean vector has length {len(mu)}, expected 1 or {d}")

    def pair_spec(self, d: Optional[int] = None) -> GaussianPairSpec:
        d = self.d if d is None else d
        return GaussianPairSpec(d, self._mean(self.mu_p, d), self._mean(self.mu_q, d))


@dataclass(frozen=True)
class BenchmarkConfig:
    methods: Tuple[str, ...] = ("drm", "ulsif")
    dims: Tuple[int, ...] = (2,)
    lambdas: Tuple[float, ...] = (0.1, 0.5)
    seeds: Tuple[int, ...] = tuple(range(10))
    n: Optional[int] = None
    m: Optional[int] = None
    alpha: float = 0.1
    shift: float = 1.0
    kernel_centers: int = 100
    cv_folds: int = 5
    plots: bool = False


@dataclass(frozen=True)
class GanRunConfig:
    shape: str = "MoG"
    plots: bool = False
    gan: GanConfig = field(default_factory=GanConfig)


@dataclass(frozen=True)
class RunConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    objective: ObjectiveSpec = field(default_factory=ObjectiveSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    benchmark: BenchmarkConfig = field(default_factory=BenchmarkConfig)
    gan: GanRunConfig = field(default_factory=GanRunConfig)
    # [objective] C as written; None is auto. The nndrm benchmark method reads it directly.
    objective_C: Optional[float] = None

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(self, train=replace(self.train, seed=seed),
                       gan=replace(self.gan, gan=replace(self.gan.gan, seed=seed)))


# ---------- value codecs ----------

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in _TRUE:
        return True
    if t in _FALSE:
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _floats(text: str) -> Tuple[float, ...]:
    return tuple(float(p) for p in re.split(r"[,\s]+", text.strip()) if p)


def _ints(text: str) -> Tuple[int, ...]:
    return tuple(parse_int_list(text))


def _names(text: str) -> Tuple[str, ...]:
    return tuple(p for p in re.split(r"[,\s]+", text.strip()) if p)


def _opt_int(text: str) -> Optional[int]:
    return None if text.strip().lower() in {"", "none", "auto"} else int(text)


def _fmt(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        if value and all(isinstance(v, int) and not isinstance(v, bool) for v in value):
            return format_int_list(value)
        return ", ".join(_fmt(v) for v in value)
    if value is None:
        return "auto"
    return str(value)


@dataclass(frozen=True)
class _Setting:
    block: str                       # which dataclass receives the value
    attr: str
    parse: Callable[[str], Any]
    check: Optional[Callable[[Any], bool]] = None
    rule: str = ""


def _pos(x) -> bool:
    return x > 0


def _ge1(x) -> bool:
    return x >= 1


def _unit(x) -> bool:
    return 0.0 <= x <= 1.0


_SCHEMA: Dict[str, Dict[str, _Setting]] = {
    "dataset": {
        "d": _Setting("dataset", "d", int, _ge1, ">= 1"),
        "n": _Setting("dataset", "n", int, _ge1, ">= 1"),
        "m": _Setting("dataset", "m", int, _ge1, ">= 1"),
        "mu_p": _Setting("dataset", "mu_p", _floats, bool, "non-empty"),
        "mu_q": _Setting("dataset", "mu_q", _floats, bool, "non-empty"),
        "shape": _Setting("dataset", "shape", str.strip),
    },
    "objective": {
        "lambda": _Setting("objective", "lam", float, _unit, "in [0, 1]"),
        "variant": _Setting("objective", "variant", normalize_variant),
        "C": _Setting("run", "objective_C", lambda t: None if t.strip().lower() == "auto" else float(t),
                  lambda x: x is None or x >= 0, ">= 0"),
        "rbar": _Setting("objective", "rbar", float, lambda x: x > 1, "> 1"),
        "nn_normalize": _Setting("objective", "nn_normalize", _bool),
    },
    "train": {
        "epochs": _Setting("train", "epochs", int, lambda x: x >= 0, ">= 0"),
        "batch_size": _Setting("train", "batch_size", int, _ge1, ">= 1"),
        "lr": _Setting("train", "lr", float, _pos, "> 0"),
        "beta1": _Setting("train", "beta1", float, lambda x: 0 <= x < 1, "in [0, 1)"),
        "beta2": _Setting("train", "beta2", float, lambda x: 0 <= x < 1, "in [0, 1)"),
        "eps": _Setting("train", "eps", float, _pos, "> 0"),
        "seed": _Setting("train", "seed", int, lambda x: x >= 0, ">= 0"),
        "spectral_norm": _Setting("train", "spectral_norm", _bool),
        "n_power_iters": _Setting("train", "n_power_iters", int, _ge1, ">= 1"),
        "hidden": _Setting("train", "hidden", int, _ge1, ">= 1"),
        "output_mode": _Setting("train", "output_mode", str.strip, lambda x: x in OUTPUT_MODES,
                            f"one of {', '.join(OUTPUT_MODES)}"),
        "eval_every": _Setting("train", "eval_every", int, _ge1, ">= 1"),
        "eval_points": _Setting("train", "eval_points", int, _ge1, ">= 1"),
    },
    "benchmark": {
        "methods": _Setting("benchmark", "methods", lambda t: tuple(normalize_method(x) for x in _names(t)),
                        bool, "non-empty"),
        "dims": _Setting("benchmark", "dims", _ints, lambda x: bool(x) and min(x) >= 1, "non-empty, >= 1"),
        "lambdas": _Setting("benchmark", "lambdas", _floats, lambda x: bool(x) and all(map(_unit, x)),
                        "non-empty, each in [0, 1]"),
        "trials": _Setting("benchmark", "seeds", lambda t: tuple(range(int(t))), bool, ">= 1"),
        "seeds": _Setting("benchmark", "seeds", _ints, bool, "non-empty"),
        "n": _Setting("benchmark", "n", _opt_int, lambda x: x is None or x >= 1, ">= 1"),
        "m": _Setting("benchmark", "m", _opt_int, lambda x: x is None or x >= 1, ">= 1"),
        "alpha": _Setting("benchmark", "alpha", float, lambda x: 0 <= x < 1, "in [0, 1)"),
        "shift": _Setting("benchmark", "shift", float),
        "kernel_centers": _Setting("benchmark", "kernel_centers", int, _ge1, ">= 1"),
        "cv_folds": _Setting("benchmark", "cv_folds", int, lambda x: x >= 2, ">= 2"),
        "plots": _Setting("benchmark", "plots", _bool),
    },
    "gan": {
        "shape": _Setting("gan_run", "shape", normalize_shape),
        "lambda": _Setting("gan", "lam", float, _unit, "in [0, 1]"),
        "d_steps": _Setting("gan", "d_steps", int, _ge1, ">= 1"),
        "epochs": _Setting("gan", "epochs", int, lambda x: x >= 0, ">= 0"),
        "batch_size": _Setting("gan", "batch_size", int, _ge1, ">= 1"),
        "lr_gen": _Setting("gan", "lr_gen", float, _pos, "> 0"),
        "lr_disc": _Setting("gan", "lr_disc", float, _pos, "> 0"),
        "noise_dim": _Setting("gan", "noise_dim", int, _ge1, ">= 1"),
        "hidden": _Setting("gan", "hidden", int, _ge1, ">= 1"),
        "n_real": _Setting("gan", "n_real", int, _ge1, ">= 1"),
        "n_validation": _Setting("gan", "n_validation", int, _ge1, ">= 1"),
        "eval_samples": _Setting("gan", "eval_samples", int, _ge1, ">= 1"),
        "eval_every": _Setting("gan", "eval_every", int, _ge1, ">= 1"),
        "seed": _Setting("gan", "seed", int, lambda x: x >= 0, ">= 0"),
        "plots": _Setting("gan_run", "plots", _bool),
    },
}

# keys match case-insensitively; print_config writes the schema spelling
_KEY_CASE: Dict[str, Dict[str, str]] = {s: {k.lower(): k for k in keys} for s, keys in _SCHEMA.items()}

_SECTION = re.compile(r"^\[\s*(?P<name>[A-Za-z_]+)\s*\]$")
_ASSIGN = re.compile(
    r"""
    ^(?P<key>[A-Za-z_][A-Za-z0-9_]*)
    \s*=\s*
    (?P<value>.*?)
    $
    """,
    re.VERBOSE,
)


def _strip_comment(line: str) -> str:
    return re.split(r"[#;]", line, maxsplit=1)[0].strip()


def parse_config_text(text: str) -> RunConfig:
    values: Dict[str, Dict[str, Any]] = {b: {} for b in
                                         ("dataset", "objective", "train", "benchmark", "gan", "gan_run", "run")}
    seen: Dict[Tuple[str, str], int] = {}
    section: Optional[str] = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw)
        if not line:
            continue
        m = _SECTION.match(line)
        if m:
            section = m.group("name").lower()
            if section not in _SCHEMA:
                raise UnknownKey(f"unknown section [{section}]", lineno=lineno)
            continue
        m = _ASSIGN.match(line)
        if not m:
            raise ParseError(f"expected 'key = value' or '[section]', got {raw.strip()!r}", lineno=lineno)
        if section is None:
            raise ParseError("key outside of any [section]", lineno=lineno)
        key, text_value = m.group("key"), m.group("value")
        name = _KEY_CASE[section].get(key.lower())
        if name is None:
            raise UnknownKey(f"unknown key {key!r} in [{section}]", lineno=lineno)
        key, spec = name, _SCHEMA[section][name]
        slot = (spec.block, spec.attr)
        if slot in seen:
            raise ParseError(f"{section}.{key} given twice (first on line {seen[slot]})", lineno=lineno)
        seen[slot] = lineno
        try:
            value = spec.parse(text_value)
        except (ValueError, KeyError) as exc:
            raise ParseError(f"{section}.{key}: cannot parse {text_value!r} ({exc})", lineno=lineno) from None
        if spec.check is not None and not spec.check(value):
            raise ConfigRangeError(f"{section}.{key}", f"must be {spec.rule}, got {text_value!r}")
        values[spec.block][spec.attr] = value
    return _build(values)


def _build(values: Dict[str, Dict[str, Any]]) -> RunConfig:
    raw_C = values["run"].get("objective_C")
    ds = values["dataset"]
    if ds.get("shape", "gaussian").lower() != "gaussian":
        ds["shape"] = normalize_shape(ds["shape"])
    else:
        ds["shape"] = "gaussian"
    dataset = DatasetConfig(**ds)
    for key in ("mu_p", "mu_q"):
        mu = getattr(dataset, key)
        if len(mu) not in (1, dataset.d):
            raise ConfigRangeError(f"dataset.{key}", f"needs 1 or d={dataset.d} entries, got {len(mu)}")
    try:
        objective = ObjectiveSpec(C=raw_C, **values["objective"])
    except ValueError as exc:
        raise ConfigRangeError("objective", str(exc)) from None
    train = TrainConfig(spec=objective, **values["train"])
    benchmark = BenchmarkConfig(**values["benchmark"])
    gan = GanConfig(**{**values["gan"], "rbar": objective.rbar})
    gan_run = GanRunConfig(gan=gan, **values["gan_run"])
    return RunConfig(dataset, objective, train, benchmark, gan_run, objective_C=raw_C)


def parse_config(path: Union[str, Path, None]) -> RunConfig:
    """Parse a config file; ``None`` gives the all-defaults configuration."""
    if path is None:
        return parse_config_text("")
    return parse_config_text(Path(path).read_text(encoding="utf-8"))


def _block(cfg: RunConfig, name: str):
    return {
        "dataset": cfg.dataset,
        "objective": cfg.objective,
        "train": cfg.train,
        "benchmark": cfg.benchmark,
        "gan": cfg.gan.gan,
        "gan_run": cfg.gan,
        "run": cfg,
    }[name]


def print_config(cfg: RunConfig) -> str:
    """The configuration in file form, every key written out."""
    lines: List[str] = []
    for section, keys in _SCHEMA.items():
        if lines:
            lines.append("")
        lines.append(f"[{section}]")
        for key, spec in keys.items():
            if section == "benchmark" and key == "trials":
                continue
            value = getattr(_block(cfg, spec.block), spec.attr)
            lines.append(f"{key} = {_fmt(value)}")
    return "\n".join(lines) + "\n"


def config_fields() -> Dict[str, List[str]]:
    """Section -> accepted keys, for documentation and error hints."""
    return {section: list(keys) for section, keys in _SCHEMA.items()}
