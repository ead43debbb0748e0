# drmtools/plots.py
"""
Best-effort SVG figures. Needs the ``viz`` extra (matplotlib, seaborn).
"""
from __future__ import annotations

import importlib
import logging
from pathlib import Path
from typing import Any, Dict, Tuple, Union

import numpy as np
import pandas as pd

log = logging.getLogger(__name__)

__all__ = ["plotting_libs", "ratio_grid", "error_boxplot", "divergence_curve", "ratio_contour"]

PathLike = Union[str, Path]


def plotting_libs() -> Dict[str, Any]:
    """Import matplotlib (Agg backend) and seaborn, or explain how to get them."""
    out: Dict[str, Any] = {}
    missing = []
    for alias, modname in (("mpl", "matplotlib"), ("sns", "seaborn")):
        try:
            out[alias] = importlib.import_module(modname)
        except ModuleNotFoundError:
            missing.append(modname)
    if missing:
        raise RuntimeError(
            "Missing packages: " + ", ".join(missing) + "\n"
            "Install with:\n"
            "  pip install -e '.[viz]'\n"
            "or minimally:\n"
            f"  pip install {' '.join(missing)}\n"
        )
    out["mpl"].use("Agg")
    out["plt"] = importlib.import_module("matplotlib.pyplot")
    return out


def ratio_grid(model, box: Tuple[Tuple[float, float], Tuple[float, float]], steps: int = 100):
    """(xx, yy, r) with r the model ratio on a steps x steps grid over ``box``."""
    (x0, x1), (y0, y1) = box
    xx, yy = np.meshgrid(np.linspace(x0, x1, steps), np.linspace(y0, y1, steps))
    r, _ = model.forward(np.column_stack([xx.ravel(), yy.ravel()]))
    return xx, yy, r.reshape(xx.shape)


def _save(fig, path: PathLike, plt) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", bbox_inches="tight")
    plt.close(fig)
    log.info("wrote %s", path)
    return path


def error_boxplot(records: pd.DataFrame, path: PathLike, value: str = "sq_error_fwd") -> Path:
    """Squared errors per method, one box per lambda, one panel per dimension."""
    libs = plotting_libs()
    plt, sns = libs["plt"], libs["sns"]
    ok = records[records["error"].fillna("") == ""].copy()
    ok["cell"] = [m if np.isnan(lam) else f"{m} ({lam:g})" for m, lam in zip(ok["method"], ok["lambda"])]
    dims = sorted(ok["d"].unique())
    fig, axes = plt.subplots(1, max(len(dims), 1), figsize=(4.5 * max(len(dims), 1), 4), squeeze=False)
    for ax, d in zip(axes[0], dims):
        sns.boxplot(data=ok[ok["d"] == d], x="cell", y=value, ax=ax)
        ax.set_title(f"d = {d}")
        ax.set_xlabel("")
        ax.tick_params(axis="x", rotation=45)
    return _save(fig, path, plt)


def divergence_curve(frame: pd.DataFrame, path: PathLike) -> Path:
    """Raw and smoothed per-iteration DRM trace."""
    libs = plotting_libs()
    plt = libs["plt"]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(frame["iteration"], frame["drm"], alpha=0.3, label="batch")
    ax.plot(frame["iteration"], frame["drm_smoothed"], label="smoothed")
    ax.set_xlabel("generator iteration")
    ax.set_ylabel("DRM estimate")
    ax.legend()
    return _save(fig, path, plt)


def ratio_contour(model, box, samples: np.ndarray, path: PathLike) -> Path:
    """Learned log-ratio over ``box`` with a sample cloud on top."""
    libs = plotting_libs()
    plt = libs["plt"]
    xx, yy, r = ratio_grid(model, box)
    fig, ax = plt.subplots(figsize=(5, 5))
    cs = ax.contourf(xx, yy, np.log(r), levels=20)
    fig.colorbar(cs, ax=ax, label="log r")
    ax.scatter(samples[:, 0], samples[:, 1], s=1, c="white", alpha=0.3)
    return _save(fig, path, plt)
