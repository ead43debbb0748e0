# drmtools/drmio.py
"""
File output: benchmark CSVs and summaries, training / GAN histories, sample
dumps and model checkpoints.

Checkpoint format (``.npz``, no pickles):
    __header__        0-d unicode array holding a JSON object
                      {"format": 1, "kind": "mlp" | "kernel", ...}
    <param name>      one float64 array per parameter, shape preserved
    spectral.<name>   persisted power-iteration vector u (MLP with spectral norm)
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Iterable, Union

import numpy as np
import pandas as pd

from .autodiff import SpectralState
from .datasets import SamplePair
from .metrics import EvalReport, summarize_errors
from .models import KernelRatioModel, MlpRatioModel

log = logging.getLogger(__name__)

__all__ = [
    "RunRecord",
    "RECORD_COLUMNS",
    "records_frame",
    "write_records",
    "summarize",
    "write_summary",
    "write_frame",
    "dump_sample_pair",
    "dump_points",
    "save_checkpoint",
    "load_checkpoint",
]

PathLike = Union[str, Path]
CHECKPOINT_FORMAT = 1
GROUP_KEYS = ["method", "lambda", "d", "n", "m"]


@dataclass(frozen=True)
class RunRecord:
    method: str
    lam: float
    d: int
    n: int
    m: int
    seed: int
    sq_error_fwd: float = float("nan")
    sq_error_inv: float = float("nan")
    drm_estimate_likelihood: float = float("nan")
    drm_estimate_khat: float = float("nan")
    wall_time_s: float = float("nan")
    error: str = ""


RECORD_COLUMNS = [("lambda" if f.name == "lam" else f.name) for f in fields(RunRecord)]


def records_frame(records: Iterable[RunRecord], *, walltime: bool = True) -> pd.DataFrame:
    rows = [asdict(r) for r in records]
    df = pd.DataFrame(rows, columns=[f.name for f in fields(RunRecord)]).rename(columns={"lam": "lambda"})
    if not walltime:
        df = df.drop(columns=["wall_time_s"])
    return df


def write_frame(df: pd.DataFrame, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, lineterminator="\n")
    log.info("wrote %s (%d rows)", path, len(df))
    return path


def write_records(records: Iterable[RunRecord], path: PathLike, *, walltime: bool = True) -> Path:
    """One row per (method, trial) with the documented header."""
    return write_frame(records_frame(records, walltime=walltime), path)


SUMMARY_COLUMNS = [*GROUP_KEYS, "mean", "median", "std", "count", "drm_mean"]


def summarize(df: pd.DataFrame, value: str = "sq_error_fwd") -> pd.DataFrame:
    """One :class:`EvalReport` of ``value`` per cell, errored trials excluded."""
    ok = df[df["error"].fillna("") == ""] if "error" in df else df
    rows = []
    for keys, group in ok.groupby(GROUP_KEYS, sort=False, dropna=False):
        errors = group[value].dropna()
        drm = float(group["drm_estimate_likelihood"].mean())
        if errors.empty:
            # shape datasets carry no L2 error
            report = EvalReport(math.nan, math.nan, 0.0, 0, drm_estimate=drm)
        else:
            report = summarize_errors(errors, drm_estimate=drm)
        rows.append([*keys, report.mean, report.median, report.std, report.trials, report.drm_estimate])
    return pd.DataFrame(rows, columns=SUMMARY_COLUMNS)


def write_summary(df: pd.DataFrame, path: PathLike) -> pd.DataFrame:
    summary = summarize(df)
    write_frame(summary, path)
    return summary


def dump_sample_pair(pair: SamplePair, path: PathLike) -> Path:
    """CSV with header dim0,...,dim{d-1},source where source is P or Q."""
    cols = [f"dim{i}" for i in range(pair.d)]
    df = pd.concat([
        pd.DataFrame(pair.X, columns=cols).assign(source="P"),
        pd.DataFrame(pair.Z, columns=cols).assign(source="Q"),
    ], ignore_index=True)
    return write_frame(df, path)


def dump_points(points: np.ndarray, path: PathLike) -> Path:
    points = np.atleast_2d(points)
    return write_frame(pd.DataFrame(points, columns=[f"dim{i}" for i in range(points.shape[1])]), path)


# ---------- checkpoints ----------

def save_checkpoint(model, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = {}
    if isinstance(model, MlpRatioModel):
        header = {
            "format": CHECKPOINT_FORMAT,
            "kind": "mlp",
            "output_mode": model.output_mode,
            "rbar": model.rbar,
            "spectral_norm": model.spectral_norm,
            "n_power_iters": {k: s.n_power_iters for k, s in model.spectral.items()},
        }
        arrays.update({k: np.asarray(v, dtype=np.float64) for k, v in model.params.items()})
        arrays.update({f"spectral.{k}": s.u for k, s in model.spectral.items()})
    elif isinstance(model, KernelRatioModel):
        header = {"format": CHECKPOINT_FORMAT, "kind": "kernel", "sigma": model.sigma, "floor": model.floor}
        arrays.update({"centers": model.centers, "theta": model.theta})
    else:
        raise TypeError(f"cannot checkpoint {type(model).__name__}")
    with open(path, "wb") as fh:
        np.savez(fh, __header__=np.array(json.dumps(header, sort_keys=True)), **arrays)
    return path


def load_checkpoint(path: PathLike):
    with np.load(Path(path), allow_pickle=False) as archive:
        header = json.loads(str(archive["__header__"]))
        arrays = {k: archive[k].copy() for k in archive.files if k != "__header__"}
    if header.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"unsupported checkpoint format {header.get('format')!r}")
    if header["kind"] == "kernel":
        return KernelRatioModel(arrays["centers"], arrays["theta"], header["sigma"], header["floor"])
    if header["kind"] != "mlp":
        raise ValueError(f"unknown checkpoint kind {header['kind']!r}")
    params = {k: v for k, v in arrays.items() if not k.startswith("spectral.")}
    spectral = {
        k[len("spectral."):]: SpectralState(v, header["n_power_iters"][k[len("spectral."):]])
        for k, v in arrays.items() if k.startswith("spectral.")
    }
    return MlpRatioModel(params, header["output_mode"], header["rbar"], header["spectral_norm"], spectral)
