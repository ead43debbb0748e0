import math

import numpy as np
import pytest

from drmtools.autodiff import Graph, finite_diff_grad
from drmtools.errors import NonPositiveRatio
from drmtools.metrics import GaussianPairSpec, gaussian_true_ratio
from drmtools.datasets import sample_gaussian_pair
from drmtools.objectives import (
    BatchStats,
    ObjectiveSpec,
    batch_stats,
    build_loss,
    khat,
    khat_exp,
    khat_exp_unweighted,
    khat_from_stats,
    likelihood_part,
    nn_branch,
    nnukl_loss,
    normalize_variant,
    objective_value,
    ukl_loss,
)
from drmtools.rng import make_rng

E = math.e


def _batch(rng, n=None, m=None):
    n = n or int(rng.integers(1, 40))
    m = m or int(rng.integers(1, 40))
    g_X = rng.normal(scale=1.5, size=n)
    g_Z = rng.normal(scale=1.5, size=m)
    return np.exp(g_X), g_X, np.exp(g_Z), g_Z


# ---------- unnormalized KL ----------

@pytest.mark.parametrize(
    "r_X, r_Z, expected",
    [
        ([1.0, 1.0], [1.0], 1.0),
        ([E], [2.0], 1.0),
        ([1.0, E ** 2], [0.5, 1.5], 0.0),
    ],
)
def test_ukl_examples(r_X, r_Z, expected):
    assert ukl_loss(r_X, r_Z) == pytest.approx(expected, abs=1e-12)


def test_ukl_rejects_non_positive():
    with pytest.raises(NonPositiveRatio):
        ukl_loss([1.0, 0.0], [1.0])


# ---------- Khat ----------

@pytest.mark.parametrize("lam", [0.0, 0.1, 0.5, 1.0])
def test_khat_at_identity_ratio(lam):
    ones = np.ones(7)
    assert khat(ObjectiveSpec(lam=lam), ones, np.zeros(7), ones[:3], np.zeros(3)) == pytest.approx(-1.0)


def test_lambda_endpoint_reductions():
    rng = make_rng(0)
    for _ in range(1000):
        r_X, g_X, r_Z, g_Z = _batch(rng)
        one = khat(ObjectiveSpec(lam=1.0), r_X, g_X, r_Z, g_Z)
        assert abs(one + ukl_loss(r_X, r_Z)) < 1e-12
        zero = khat(ObjectiveSpec(lam=0.0), r_X, g_X, r_Z, g_Z)
        assert abs(zero + ukl_loss(1.0 / r_Z, 1.0 / r_X)) < 1e-12


def test_half_lambda_swap_inversion_symmetry():
    rng = make_rng(1)
    spec = ObjectiveSpec(lam=0.5)
    for _ in range(1000):
        r_X, g_X, r_Z, g_Z = _batch(rng)
        forward = khat(spec, r_X, g_X, r_Z, g_Z)
        swapped = khat(spec, 1.0 / r_Z, -g_Z, 1.0 / r_X, -g_X)
        assert abs(forward - swapped) < 1e-12


def test_khat_is_concave_in_each_ratio_value():
    # concave in r(X_i) and in 1/r(Z_j)
    rng = make_rng(2)
    h = 1e-3
    for lam in (0.0, 0.3, 1.0):
        spec = ObjectiveSpec(lam=lam)
        r_X, _, r_Z, _ = _batch(rng, 6, 5)

        def at(which, i, t):
            rx, rz = r_X.copy(), r_Z.copy()
            if which == "X":
                rx[i] = t
            else:
                rz[i] = 1.0 / t
            return khat(spec, rx, np.log(rx), rz, np.log(rz))

        for which, arr in (("X", r_X), ("Z", 1.0 / r_Z)):
            for i, t in enumerate(arr):
                t = max(t, 2 * h)
                curvature = at(which, i, t + h) - 2 * at(which, i, t) + at(which, i, t - h)
                assert curvature <= 1e-12


def test_khat_population_maximum_is_at_the_true_ratio():
    spec = GaussianPairSpec.unit_shift(2)
    pair = sample_gaussian_pair(spec, 100_000, 100_000, seed=0)
    r_X = gaussian_true_ratio(pair.X, spec)
    r_Z = gaussian_true_ratio(pair.Z, spec)
    alphas = np.round(np.arange(0.5, 1.5001, 0.05), 2)
    for lam in (0.1, 0.5, 0.9):
        obj = ObjectiveSpec(lam=lam)
        values = [khat(obj, a * r_X, np.log(a * r_X), a * r_Z, np.log(a * r_Z)) for a in alphas]
        assert alphas[int(np.argmax(values))] == 1.0


# ---------- exponential forms ----------

@pytest.mark.parametrize("lam", [0.0, 0.5, 1.0])
def test_khat_exp_at_zero(lam):
    assert khat_exp(lam, np.zeros(4), np.zeros(3)) == pytest.approx(-1.0)
    assert khat_exp_unweighted(lam, np.zeros(4), np.zeros(3)) == pytest.approx(-2.0)


def test_batch_stats_hand_values():
    stats = batch_stats([1.0, E], [E, E ** 2, 1.0])
    expected = BatchStats(0.5, 1.0, (1 + 1 / E) / 2, (E + E ** 2 + 1) / 3, 2, 3)
    for field in ("mean_log_r_X", "mean_log_r_Z", "mean_inv_r_X", "mean_r_Z"):
        assert getattr(stats, field) == pytest.approx(getattr(expected, field), abs=1e-12)
    assert (stats.n, stats.m) == (2, 3)
    assert khat_from_stats(1.0, stats) == pytest.approx(0.5 - stats.mean_r_Z)


def test_batch_stats_rejects_non_positive_ratio():
    with pytest.raises(ValueError):
        batch_stats([1.0, 0.0], [1.0])


def test_khat_exp_agrees_with_khat():
    rng = make_rng(3)
    for _ in range(200):
        lam = float(rng.uniform())
        r_X, g_X, r_Z, g_Z = _batch(rng)
        assert abs(khat_exp(lam, g_X, g_Z) - khat(ObjectiveSpec(lam=lam), r_X, g_X, r_Z, g_Z)) < 1e-12


def test_khat_exp_hand_value():
    assert khat_exp(0.5, [1.0], [-1.0]) == pytest.approx(1 - math.exp(-1), abs=1e-15)


def test_likelihood_part():
    assert likelihood_part(0.25, [2.0, 4.0], [1.0]) == pytest.approx(0.25 * 3.0 - 0.75 * 1.0)


# ---------- non-negative correction ----------

def test_nn_branch_boundary_is_inclusive():
    spec = ObjectiveSpec(variant="nn_stratified", C=1.0, nn_normalize=False)
    assert nn_branch(spec, 4.0, 4.0, 4.0, 4.0, 4, 4) == (True, True)


def test_nn_branch_zero_correction_always_passes():
    spec = ObjectiveSpec(variant="nn_stratified", C=0.0)
    rng = make_rng(4)
    for _ in range(50):
        sums = rng.uniform(0.01, 100.0, size=4)
        assert nn_branch(spec, *sums, 10, 3) == (True, True)


def test_nn_branch_forward_violation():
    spec = ObjectiveSpec(variant="nn_stratified", C=1.0, nn_normalize=False)
    fwd, inv = nn_branch(spec, 20.0, 2.0, 0.2, 2.0, 2, 2)
    assert fwd is False
    assert inv is False


def test_nnukl_examples():
    assert nnukl_loss([1.0], [0.0], [1.0], C=0.0) == pytest.approx(1.0)
    assert nnukl_loss([2.0], [math.log(2.0)], [3.0], C=1.0) == pytest.approx(2.3069, abs=1e-4)


def test_nnukl_hinge_is_flat_when_inactive():
    r_X = np.array([3.0, 4.0])
    r_Z = np.array([0.5, 0.5])
    grad = finite_diff_grad(lambda z: nnukl_loss(r_X, np.log(r_X), z, C=1.0), r_Z)
    np.testing.assert_allclose(grad, 0.0, atol=1e-9)


def test_nnukl_normalized_uses_means():
    r_X = np.array([1.0, 1.0])
    assert nnukl_loss(r_X, np.zeros(2), np.array([2.0, 2.0, 2.0]), C=0.0, normalize=True) == pytest.approx(2.0)


# ---------- ObjectiveSpec ----------

def test_spec_defaults():
    assert ObjectiveSpec().C == 0.0
    nn = ObjectiveSpec(variant="nnDRM", rbar=100.0)
    assert nn.variant == "nn_stratified"
    assert nn.C == pytest.approx(0.01)
    assert nn.corrected
    assert not ObjectiveSpec(variant="nn_stratified", C=0.0).corrected
    assert nn.with_lambda(0.2).lam == 0.2


@pytest.mark.parametrize("bad", [{"lam": 1.5}, {"lam": -0.1}, {"rbar": 1.0}, {"C": -1.0}])
def test_objective_spec_validation(bad):
    with pytest.raises(ValueError):
        ObjectiveSpec(**bad)


@pytest.mark.parametrize(
    "alias, name",
    [("DRM", "stratified"), ("nn-drm", "nn_stratified"), ("WD", "ipm"), ("ukl", "ukl_p"),
     ("stratified_exp", "stratified_exp"), ("stratified_exp_paper", "stratified_exp_unweighted")],
)
def test_variant_aliases(alias, name):
    assert normalize_variant(alias) == name


def test_unknown_variant():
    with pytest.raises(ValueError):
        normalize_variant("hinge")


# ---------- graph losses ----------

@pytest.mark.parametrize(
    "variant", ["ukl_p", "ukl_q", "stratified", "stratified_exp", "stratified_exp_unweighted", "ipm"]
)
def test_graph_loss_is_negated_objective(variant):
    rng = make_rng(6)
    spec = ObjectiveSpec(lam=0.3, variant=variant)
    for _ in range(20):
        r_X, g_X, r_Z, g_Z = _batch(rng)
        g = Graph()
        terms = build_loss(spec, g, g.const(r_X[:, None]), g.const(g_X[:, None]),
                           g.const(r_Z[:, None]), g.const(g_Z[:, None]))
        expected = -objective_value(spec, r_X, g_X, r_Z, g_Z)
        assert terms.loss.value[0, 0] == pytest.approx(expected, rel=1e-12, abs=1e-12)
        assert terms.branch_forward and terms.branch_inverse


def test_graph_loss_without_correction_matches_stratified():
    rng = make_rng(7)
    r_X, g_X, r_Z, g_Z = _batch(rng, 5, 5)
    values = []
    for spec in (ObjectiveSpec(variant="stratified"), ObjectiveSpec(variant="nn_stratified", C=0.0)):
        g = Graph()
        values.append(build_loss(spec, g, g.const(r_X[:, None]), g.const(g_X[:, None]),
                                 g.const(r_Z[:, None]), g.const(g_Z[:, None])).loss.value[0, 0])
    assert values[0] == values[1]


def test_graph_loss_ascends_violated_margins():
    spec = ObjectiveSpec(lam=0.5, variant="nn_stratified", C=1.0, nn_normalize=False)
    r_X = np.array([[10.0], [10.0]])
    r_Z = np.array([[1.0], [1.0]])
    g = Graph()
    terms = build_loss(spec, g, g.const(r_X), g.const(np.log(r_X)), g.const(r_Z), g.const(np.log(r_Z)))
    assert (terms.branch_forward, terms.branch_inverse) == (False, False)
    # -(2 - 20) / 2 - (0.2 - 2) / 2
    assert terms.loss.value[0, 0] == pytest.approx(9.9)
