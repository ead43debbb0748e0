from dataclasses import replace

import numpy as np
import pytest

from drmtools.autodiff import Graph, evaluate_with_grad, finite_diff_grad
from drmtools.datasets import MOG
from drmtools.models import mlp_init
from drmtools.rng import box_muller, make_rng, split_seed
from drmtools.slogan import (
    GanConfig,
    generator_forward,
    generator_graph,
    generator_init,
    smooth_curve,
    train_slogan,
)


def _tiny(**kw):
    base = dict(epochs=6, batch_size=32, hidden=8, disc_hidden=8, noise_dim=4, n_real=200,
                n_validation=100, eval_samples=100, eval_every=3, seed=0)
    base.update(kw)
    return GanConfig(**base)


# ---------- generator ----------

def test_zeroed_generator_outputs_its_bias():
    gen = generator_init(4, 8, seed=0)
    for key in gen.params:
        gen.params[key] = np.zeros_like(gen.params[key])
    gen.params["b3"] = np.array([[0.25, -1.5]])
    out = generator_forward(gen, box_muller(make_rng(0), (10, 4)))
    np.testing.assert_array_equal(out, np.tile([0.25, -1.5], (10, 1)))


def test_generator_is_deterministic():
    a = generator_init(8, 16, seed=3)
    b = generator_init(8, 16, seed=3)
    assert all(np.array_equal(a.params[k], b.params[k]) for k in a.params)
    assert a.sample(5, make_rng(1)).shape == (5, 2)
    np.testing.assert_array_equal(a.sample(5, make_rng(1)), b.sample(5, make_rng(1)))


def test_generator_gradient_through_frozen_discriminator():
    gen = generator_init(4, 8, seed=1)
    disc = mlp_init(2, 8, seed=2)
    noise = box_muller(make_rng(3), (16, 4))
    lam = 0.3

    def loss_value(b3):
        trial = gen.copy()
        trial.params["b3"] = b3
        r, logr = disc.forward(generator_forward(trial, noise))
        return -((1 - lam) * logr.mean() + lam * r.mean())

    graph = Graph()
    Z = generator_graph(graph, gen, noise)
    r_Z, logr_Z = disc.ratio_graph(graph, disc.build_weights(graph, trainable=False), Z)
    loss = graph.neg(logr_Z.mean() * (1.0 - lam) + r_Z.mean() * lam)
    value, grads = evaluate_with_grad(graph, loss)
    assert value[0, 0] == pytest.approx(loss_value(gen.params["b3"]), rel=1e-12)
    assert set(grads) == set(gen.params)
    np.testing.assert_allclose(grads["b3"], finite_diff_grad(loss_value, gen.params["b3"]), rtol=1e-5, atol=1e-9)


def test_smooth_curve():
    np.testing.assert_allclose(smooth_curve([1.0, 3.0, 5.0, 7.0], window=2), [1.0, 2.0, 4.0, 6.0])
    np.testing.assert_array_equal(smooth_curve([2.0, 4.0], window=1), [2.0, 4.0])
    with pytest.raises(ValueError):
        smooth_curve([1.0], window=0)


@pytest.mark.parametrize("bad", [{"lam": 2.0}, {"d_steps": 0}, {"epochs": -1}, {"lr_gen": 0.0}])
def test_gan_config_validation(bad):
    with pytest.raises(ValueError):
        GanConfig(**bad)


# ---------- training ----------

def test_zero_epochs_gives_a_single_row():
    _, _, history = train_slogan("Square", _tiny(epochs=0))
    frame = history.to_frame()
    assert list(frame["epoch"]) == [0]
    assert np.isfinite(frame[["mmd", "nll"]].to_numpy()).all()
    assert len(history.drm_trace) == 0
    assert not history.improved


def test_small_run_stays_finite_and_repeats():
    cfg = _tiny()
    gen_a, _, hist_a = train_slogan("Rings", cfg)
    gen_b, _, hist_b = train_slogan("rings", cfg)
    frame = hist_a.to_frame()
    assert list(frame["epoch"]) == [0, 3, 6]
    assert np.isfinite(frame.to_numpy()).all()
    assert len(hist_a.drm_trace) == cfg.epochs
    assert frame.equals(hist_b.to_frame())
    assert all(np.array_equal(gen_a.params[k], gen_b.params[k]) for k in gen_a.params)
    div = hist_a.divergence_frame(window=2)
    assert list(div.columns) == ["iteration", "drm", "drm_smoothed"]
    assert len(div) == cfg.epochs


def test_frozen_generator_only_trains_the_discriminator():
    cfg = _tiny(train_generator=False)
    gen, disc, _ = train_slogan("Square", cfg)
    start = generator_init(cfg.noise_dim, cfg.hidden, split_seed(cfg.seed, 6))
    assert all(np.array_equal(gen.params[k], start.params[k]) for k in gen.params)
    untouched = mlp_init(2, cfg.disc_hidden, split_seed(cfg.seed, 5), rbar=cfg.rbar, spectral_norm=True)
    assert not np.array_equal(disc.params["W1"], untouched.params["W1"])


@pytest.mark.slow
def test_mixture_training_lowers_mmd():
    cfg = GanConfig(epochs=2000, eval_every=500)
    wins = sum(train_slogan(MOG, replace(cfg, seed=seed))[2].improved for seed in range(5))
    assert wins >= 4
