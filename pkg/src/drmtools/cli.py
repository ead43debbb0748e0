# drmtools/cli.py
"""
Command-line entry point.

    drmtools estimate  --config run.ini --out out/     one DRE run, history + checkpoint
    drmtools drm       --config run.ini --out out/     DRM value of a (P, Q) pair
    drmtools benchmark --config gaussian_grid.ini --out out/  seeded multi-trial sweep
    drmtools gan       --config gan_mog.ini --out out/ GAN training run

Shared flags: --config PATH, --seed N, --out DIR, --print-config, --no-walltime,
--jobs N, -v/--verbose, -q/--quiet. Exit code is 0 unless a trial errored (1) or
the run could not start (2).
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Iterator, List, Optional, Tuple

import numpy as np
import pandas as pd
from tqdm.auto import tqdm

from .baselines import fit_lsif, select_centers
from .config import RunConfig, parse_config, print_config
from .datasets import DEFAULT_SHAPES, SamplePair, sample_eval_points, sample_gaussian_pair, sample_shape2d
from .drmio import (
    RunRecord,
    dump_points,
    dump_sample_pair,
    records_frame,
    save_checkpoint,
    write_frame,
    write_summary,
)
from .errors import DrmError
from .metrics import GaussianPairSpec, drm_estimate, gaussian_kl, l2_error, median_heuristic
from .models import KernelRatioModel
from .objectives import ObjectiveSpec
from .rng import box_muller, child_rng, split_seed
from .slogan import train_slogan
from .trainers import TrainConfig, init_model, train_dre, train_kliep

log = logging.getLogger(__name__)

__all__ = ["main", "run_trial", "run_benchmark", "run_estimate", "run_drm", "run_gan", "benchmark_cells"]

KLIEP_STEPS = 1000
KLIEP_LR = 0.1
LAMBDA_FREE = ("ukl", "kliep", "ulsif", "rulsif")
FREE_EVAL_LAMBDA = 0.5

_VARIANT_FOR = {"drm": "stratified", "wd": "ipm", "nndrm": "nn_stratified", "ukl": "ukl_p"}


# ---------- benchmark ----------

def benchmark_cells(cfg: RunConfig, master_seed: int) -> Iterator[Tuple[str, float, int, int, int, int]]:
    """(method, lambda, d, n, m, trial_seed) in output order; lambda is NaN for lambda-free methods."""
    b = cfg.benchmark
    n = b.n or cfg.dataset.n
    m = b.m or cfg.dataset.m
    for d in b.dims:
        for method in b.methods:
            if method in LAMBDA_FREE:
                lams: Tuple[float, ...] = (math.nan,)
            elif method == "wd":
                lams = (0.5,)
            else:
                lams = b.lambdas
            for lam in lams:
                for i in b.seeds:
                    yield method, lam, d, n, m, split_seed(master_seed, i)


def _fit(method: str, lam: float, pair: SamplePair, cfg: RunConfig, seed: int):
    b = cfg.benchmark
    if method in _VARIANT_FOR:
        C = cfg.objective_C if method == "nndrm" else None
        spec = ObjectiveSpec(lam=0.5 if math.isnan(lam) else lam, variant=_VARIANT_FOR[method],
                             C=C, rbar=cfg.objective.rbar, nn_normalize=cfg.objective.nn_normalize)
        tcfg: TrainConfig = replace(cfg.train, spec=spec, seed=seed)
        model, _ = train_dre(init_model(pair.d, tcfg), pair, tcfg)
        return model
    if method == "kliep":
        centers = select_centers(pair.X, b.kernel_centers, seed)
        sigma = median_heuristic(np.vstack([pair.X, pair.Z]))
        start = KernelRatioModel(centers, np.ones(len(centers)), sigma)
        return train_kliep(start, pair, replace(cfg.train, epochs=KLIEP_STEPS), lr=KLIEP_LR)
    alpha = b.alpha if method == "rulsif" else 0.0
    return fit_lsif(pair.X, pair.Z, alpha=alpha, b=b.kernel_centers, k=b.cv_folds, seed=seed).as_model()


def run_trial(method: str, lam: float, d: int, n: int, m: int, seed: int, cfg: RunConfig) -> RunRecord:
    """One benchmark trial; failures are captured in the ``error`` field."""
    t0 = time.perf_counter()
    try:
        spec = GaussianPairSpec.unit_shift(d, cfg.benchmark.shift)
        pair = sample_gaussian_pair(spec, n, m, seed)
        from_q, from_p = sample_eval_points(spec, cfg.train.eval_points, seed)
        model = _fit(method, lam, pair, cfg, seed)
        eval_lam = FREE_EVAL_LAMBDA if math.isnan(lam) else lam
        return RunRecord(
            method, lam, d, n, m, seed,
            sq_error_fwd=l2_error(model, spec, from_q, "forward"),
            sq_error_inv=l2_error(model, spec, from_p, "inverse"),
            drm_estimate_likelihood=drm_estimate(model, eval_lam, from_p, from_q, "likelihood"),
            drm_estimate_khat=drm_estimate(model, eval_lam, from_p, from_q, "khat"),
            wall_time_s=time.perf_counter() - t0,
        )
    except Exception as exc:  # recorded per trial; the sweep continues
        log.warning("trial %s lam=%s d=%d seed=%d failed: %s", method, lam, d, seed, exc)
        return RunRecord(method, lam, d, n, m, seed, wall_time_s=time.perf_counter() - t0,
                         error=f"{type(exc).__name__}: {exc}")


def _run_cell(args) -> RunRecord:
    return run_trial(*args)


def run_benchmark(cfg: RunConfig, out: Path, *, master_seed: int, jobs: int = 1,
                  walltime: bool = True, verbose: bool = True) -> Tuple[pd.DataFrame, int]:
    """Writes records.csv and summary.csv under ``out``; returns (records, error count)."""
    cells = [(*cell, cfg) for cell in benchmark_cells(cfg, master_seed)]
    log.info("benchmark: %d trials, master seed %d, %d job(s)", len(cells), master_seed, jobs)
    records: List[RunRecord] = []
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for rec in tqdm(pool.map(_run_cell, cells), total=len(cells), desc="benchmark", disable=not verbose):
                records.append(rec)
    else:
        for cell in tqdm(cells, desc="benchmark", disable=not verbose):
            records.append(_run_cell(cell))

    df = records_frame(records, walltime=walltime)
    write_frame(df, out / "records.csv")
    errors = int((df["error"] != "").sum())
    if errors < len(df):
        summary = write_summary(df, out / "summary.csv")
        log.info("summary of squared L2 error:\n%s", summary.to_string(index=False))
    if cfg.benchmark.plots:
        _best_effort_plot("error_boxplot", df, out / "errors.svg")
    if errors:
        log.warning("%d of %d trials failed; see the error column", errors, len(df))
    return df, errors


def _best_effort_plot(name: str, *args) -> None:
    try:
        from . import plots
        getattr(plots, name)(*args)
    except RuntimeError as exc:
        log.warning("skipping plot: %s", exc)


# ---------- single runs ----------

def _estimate_pair(cfg: RunConfig, seed: int) -> Tuple[SamplePair, Optional[GaussianPairSpec]]:
    ds = cfg.dataset
    if ds.shape == "gaussian":
        spec = ds.pair_spec()
        return sample_gaussian_pair(spec, ds.n, ds.m, seed), spec
    X = sample_shape2d(ds.shape, ds.n, split_seed(seed, 0))
    Z = box_muller(child_rng(seed, 1), (ds.m, 2))
    return SamplePair(X, Z, ds.shape, seed), None


def run_estimate(cfg: RunConfig, out: Path, *, seed: int, verbose: bool = True) -> dict:
    pair, spec = _estimate_pair(cfg, seed)
    tcfg = replace(cfg.train, seed=seed)
    from_q = from_p = None
    if spec is not None:
        from_q, from_p = sample_eval_points(spec, tcfg.eval_points, seed)
    model, history = train_dre(init_model(pair.d, tcfg), pair, tcfg, truth=spec, eval_points=from_q,
                               verbose=verbose)
    write_frame(history.to_frame(), out / "history.csv")
    dump_sample_pair(pair, out / "dataset.csv")
    save_checkpoint(model, out / "model.npz")
    r_Z, _ = model.forward(pair.Z)
    r_X, _ = model.forward(pair.X)
    result = {"mean_r_Z": float(r_Z.mean()), "mean_inv_r_X": float(np.mean(1.0 / r_X))}
    if spec is not None:
        result["sq_error_fwd"] = l2_error(model, spec, from_q, "forward")
        result["sq_error_inv"] = l2_error(model, spec, from_p, "inverse")
    write_frame(pd.DataFrame([result]), out / "estimate.csv")
    _print_block(result)
    return result


def run_drm(cfg: RunConfig, out: Path, *, seed: int, verbose: bool = True) -> dict:
    """Train the ratio model at the configured lambda and report the DRM on held-out data."""
    pair, spec = _estimate_pair(cfg, seed)
    if spec is None:
        from_p = sample_shape2d(cfg.dataset.shape, cfg.train.eval_points, split_seed(seed, 2))
        from_q = box_muller(child_rng(seed, 3), (cfg.train.eval_points, 2))
    else:
        from_q, from_p = sample_eval_points(spec, cfg.train.eval_points, seed)
    tcfg = replace(cfg.train, seed=seed)
    model, _ = train_dre(init_model(pair.d, tcfg), pair, tcfg, verbose=verbose)
    lam = tcfg.spec.lam
    result = {
        "lambda": lam,
        "drm_estimate_likelihood": drm_estimate(model, lam, from_p, from_q, "likelihood"),
        "drm_estimate_khat": drm_estimate(model, lam, from_p, from_q, "khat"),
    }
    if spec is not None:
        # identity covariances: KL(P||Q) = KL(Q||P)
        result["reference_kl_mix"] = gaussian_kl(spec)
    write_frame(pd.DataFrame([result]), out / "drm.csv")
    _print_block(result)
    return result


def run_gan(cfg: RunConfig, out: Path, *, verbose: bool = True) -> dict:
    g = cfg.gan
    gen, disc, history = train_slogan(g.shape, g.gan, verbose=verbose)
    write_frame(history.to_frame(), out / "history.csv")
    divergence = history.divergence_frame()
    write_frame(divergence, out / "divergence.csv")
    samples = gen.sample(g.gan.eval_samples, child_rng(g.gan.seed, 4))
    dump_points(samples, out / "samples.csv")
    save_checkpoint(disc, out / "discriminator.npz")
    first, last = history.rows[0], history.rows[-1]
    result = {"initial_mmd": first.mmd, "final_mmd": last.mmd, "improved": history.improved,
              "final_nll": last.nll, "final_drm": last.drm_estimate}
    write_frame(pd.DataFrame([result]), out / "gan_summary.csv")
    if g.plots:
        _best_effort_plot("divergence_curve", divergence, out / "divergence.svg")
        _best_effort_plot("ratio_contour", disc, DEFAULT_SHAPES[g.shape].box, samples, out / "discriminator.svg")
    _print_block(result)
    return result


def _print_block(values: dict) -> None:
    for k, v in values.items():
        print(f"{k:>24}: {v}")


# ---------- entry point ----------

def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="Run configuration file (defaults if omitted)")
    common.add_argument("--seed", type=int, metavar="N", help="Master seed (overrides the config)")
    common.add_argument("--out", metavar="DIR", default="out", help="Output directory (default: out)")
    common.add_argument("--print-config", action="store_true", help="Print the fully defaulted config and exit")
    common.add_argument("--no-walltime", action="store_true", help="Omit the wall_time_s column")
    common.add_argument("--jobs", type=int, default=1, metavar="N", help="Parallel benchmark trials")
    noise = common.add_mutually_exclusive_group()
    noise.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    noise.add_argument("-q", "--quiet", action="store_true", help="Warnings only, no progress bars")

    ap = argparse.ArgumentParser(prog="drmtools", description="Density-ratio estimation experiments.")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("estimate", parents=[common], help="Fit one density-ratio model")
    sub.add_parser("drm", parents=[common], help="Estimate the DRM between P and Q")
    sub.add_parser("benchmark", parents=[common], help="Run a seeded benchmark sweep")
    sub.add_parser("gan", parents=[common], help="Train the DRM-based GAN on a 2-D shape")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = parse_config(args.config)
    except (DrmError, OSError) as exc:
        log.error("%s", exc)
        return 2
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if args.print_config:
        sys.stdout.write(print_config(cfg))
        return 0

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    verbose = not args.quiet
    log.info("%s: writing to %s", args.command, out)
    try:
        if args.command == "benchmark":
            _, errors = run_benchmark(cfg, out, master_seed=cfg.train.seed, jobs=args.jobs,
                                      walltime=not args.no_walltime, verbose=verbose)
            return 1 if errors else 0
        if args.command == "estimate":
            run_estimate(cfg, out, seed=cfg.train.seed, verbose=verbose)
        elif args.command == "drm":
            run_drm(cfg, out, seed=cfg.train.seed, verbose=verbose)
        else:
            run_gan(cfg, out, verbose=verbose)
    except DrmError as exc:
        log.error("%s failed: %s", args.command, exc)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
