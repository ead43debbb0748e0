import math

import numpy as np
import pytest

from drmtools.autodiff import (
    AdamState,
    Graph,
    SpectralState,
    adam_step,
    evaluate_with_grad,
    finite_diff_grad,
    init_spectral_state,
    power_iteration,
    spectral_normalize,
    spectral_weight,
)
from drmtools.errors import NonFiniteValue, NonScalarOutput, ShapeMismatch, ZeroMatrix
from drmtools.rng import make_rng


# ---------- worked examples ----------

def test_identity_graph():
    g = Graph()
    x = g.param("x", 3.0)
    value, grads = evaluate_with_grad(g, x)
    assert value[0, 0] == 3.0
    assert grads["x"][0, 0] == 1.0


def test_log_value_and_grad():
    g = Graph()
    x = g.param("x", 2.0)
    value, grads = evaluate_with_grad(g, x.log())
    assert value[0, 0] == pytest.approx(math.log(2.0), abs=1e-15)
    assert grads["x"][0, 0] == pytest.approx(0.5, abs=1e-15)


def test_relu_masks_negative_preactivation():
    g = Graph()
    W = g.param("W", [[1.0, -1.0]])
    x = g.const([[2.0], [3.0]])
    value, grads = evaluate_with_grad(g, (W @ x).relu().sum())
    assert value[0, 0] == 0.0
    np.testing.assert_array_equal(grads["W"], [[0.0, 0.0]])


def test_constants_get_no_gradient_and_unused_params_get_zero():
    g = Graph()
    a = g.param("a", [[1.0, 2.0]])
    g.param("unused", [[5.0]])
    c = g.const([[3.0, 4.0]])
    _, grads = evaluate_with_grad(g, (a * c).sum())
    assert set(grads) == {"a", "unused"}
    np.testing.assert_array_equal(grads["a"], [[3.0, 4.0]])
    np.testing.assert_array_equal(grads["unused"], [[0.0]])


def test_non_scalar_output_rejected():
    g = Graph()
    a = g.param("a", [[1.0, 2.0]])
    with pytest.raises(NonScalarOutput):
        evaluate_with_grad(g, a.exp())


def test_non_finite_forward_value_raises():
    g = Graph()
    a = g.const(-1.0)
    with pytest.raises(NonFiniteValue):
        g.log(a)


def test_matmul_shape_mismatch():
    g = Graph()
    with pytest.raises(ShapeMismatch):
        g.matmul(g.const(np.ones((2, 3))), g.const(np.ones((2, 3))))


def test_mixing_graphs_is_an_error():
    g1, g2 = Graph(), Graph()
    with pytest.raises(ValueError):
        g1.add(g1.const(1.0), g2.const(1.0))


# ---------- finite differences ----------

@pytest.mark.parametrize(
    "f, x, expected, tol",
    [
        (lambda x: x ** 2, 1.0, 2.0, 1e-8),
        (np.exp, 0.0, 1.0, 1e-8),
        (lambda x: 1.0 / x, 2.0, -0.25, 1e-7),
    ],
)
def test_finite_diff_examples(f, x, expected, tol):
    assert float(finite_diff_grad(f, x, h=1e-5)) == pytest.approx(expected, abs=tol)


def test_finite_diff_rejects_divergent_probe():
    with pytest.raises(NonFiniteValue):
        finite_diff_grad(lambda x: 1.0 / x if x > 0 else np.inf, 0.0, h=1e-5)


def test_finite_diff_needs_positive_step():
    with pytest.raises(ValueError):
        finite_diff_grad(lambda x: x, 1.0, h=0.0)


# ---------- gradient check per operator ----------

def _away_from(a, points, gap=1e-3):
    """Push entries of ``a`` at least ``gap`` away from each of ``points``."""
    for p in points:
        near = np.abs(a - p) < gap
        a = np.where(near, p + np.sign(a - p + 1e-300) * 2 * gap, a)
    return a


def _case(op, rng):
    """(initial value, builder) for a random scalar-output graph exercising ``op``."""
    A = rng.normal(size=(2, 3))
    W = rng.normal(size=(2, 3))
    if op == "matmul":
        B = rng.normal(size=(3, 2))
        return A, lambda g, a: g.sum(g.mul(g.matmul(a, g.const(B)), g.const(rng_fixed(W, (2, 2)))))
    if op == "add":
        B = rng.normal(size=(1, 3))
        return A, lambda g, a: g.sum(g.mul(g.add(a, g.const(B)), g.const(W)))
    if op == "bias_add":
        B = rng.normal(size=(4, 3))
        return A[:1], lambda g, a: g.sum(g.mul(g.bias_add(g.const(B), a), g.const(rng_fixed(W, (4, 3)))))
    if op == "mul":
        B = rng.normal(size=(2, 3))
        return A, lambda g, a: g.sum(g.mul(g.mul(a, a), g.const(B)))
    if op == "neg":
        return A, lambda g, a: g.sum(g.mul(g.neg(a), g.const(W)))
    if op == "relu":
        return _away_from(A, [0.0]), lambda g, a: g.sum(g.mul(g.relu(a), g.const(W)))
    if op == "exp":
        return A, lambda g, a: g.sum(g.mul(g.exp(a), g.const(W)))
    if op == "log":
        P = rng.uniform(0.5, 3.0, size=(2, 3))
        return P, lambda g, a: g.sum(g.mul(g.log(a), g.const(W)))
    if op == "reciprocal":
        P = rng.uniform(0.5, 3.0, size=(2, 3))
        return P, lambda g, a: g.sum(g.mul(g.reciprocal(a), g.const(W)))
    if op == "sum":
        return A, lambda g, a: g.mul(g.sum(g.mul(a, g.const(W))), g.sum(a))
    if op == "mean":
        return A, lambda g, a: g.mul(g.mean(g.mul(a, g.const(W))), g.mean(a))
    if op == "maximum":
        return _away_from(A, [0.2]), lambda g, a: g.sum(g.mul(g.maximum(a, 0.2), g.const(W)))
    if op == "clip":
        return _away_from(A, [-0.5, 0.5]), lambda g, a: g.sum(g.mul(g.clip(a, -0.5, 0.5), g.const(W)))
    raise AssertionError(op)


def rng_fixed(W, shape):
    return np.resize(W, shape)


OPS = ["matmul", "add", "bias_add", "mul", "neg", "relu", "exp", "log",
       "reciprocal", "sum", "mean", "maximum", "clip"]


@pytest.mark.parametrize("op", OPS)
def test_gradients_match_finite_differences(op):
    rng = make_rng(1234)
    worst = 0.0
    for _ in range(100):
        A0, build = _case(op, rng)

        def f(a):
            g = Graph()
            return build(g, g.param("a", a)).value[0, 0]

        g = Graph()
        _, grads = evaluate_with_grad(g, build(g, g.param("a", A0)))
        fd = finite_diff_grad(f, A0, h=1e-5)
        scale = np.maximum(np.abs(fd), 1.0)
        worst = max(worst, float(np.max(np.abs(grads["a"] - fd) / scale)))
    assert worst < 1e-5


def test_gradient_accumulation_is_order_independent():
    rng = make_rng(5)
    x0 = rng.normal(size=(3, 2))
    ws = [0.5 * rng.normal(size=(3, 2)) for _ in range(4)]

    def grads_for(order):
        g = Graph()
        x = g.param("x", x0)
        terms = [g.sum(g.mul(g.exp(g.mul(x, g.const(ws[i]))), g.const(ws[i]))) for i in order]
        total = terms[0]
        for t in terms[1:]:
            total = total + t
        return evaluate_with_grad(g, total)[1]["x"]

    a = grads_for([0, 1, 2, 3])
    b = grads_for([3, 1, 0, 2])
    assert np.max(np.abs(a - b)) < 1e-12


# ---------- Adam ----------

def test_adam_zero_gradient_is_fixed_point():
    params = {"w": np.array([[1.0, -2.0]])}
    new, state = adam_step(params, {"w": np.zeros((1, 2))}, AdamState())
    np.testing.assert_array_equal(new["w"], params["w"])
    np.testing.assert_array_equal(state.m["w"], 0.0)
    np.testing.assert_array_equal(state.v["w"], 0.0)
    assert state.t == 1


@pytest.mark.parametrize("g", [0.3, -4.0])
def test_adam_first_step_is_lr_times_sign(g):
    lr = 1e-3
    new, _ = adam_step({"w": np.array([[0.0]])}, {"w": np.array([[g]])}, AdamState(lr=lr))
    assert new["w"][0, 0] == pytest.approx(-lr * np.sign(g), rel=1e-6)


def test_adam_step_size_non_increasing_under_constant_gradient():
    params = {"w": np.array([[1.0]])}
    grads = {"w": np.array([[0.7]])}
    state = AdamState(lr=1e-2)
    p1, state = adam_step(params, grads, state)
    p2, state = adam_step(p1, grads, state)
    d1 = abs(p1["w"][0, 0] - params["w"][0, 0])
    d2 = abs(p2["w"][0, 0] - p1["w"][0, 0])
    assert d2 <= d1 * (1 + 1e-9)
    assert state.t == 2


def test_adam_is_pure():
    params = {"w": np.array([[1.0]])}
    state = AdamState()
    adam_step(params, {"w": np.array([[1.0]])}, state)
    assert params["w"][0, 0] == 1.0
    assert state.t == 0 and not state.m


def test_adam_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        adam_step({"w": np.zeros((1, 2))}, {"w": np.zeros((2, 1))}, AdamState())


# ---------- spectral normalization ----------

def _matrix_with_gap(rng, rows, cols, ratio=0.7):
    k = min(rows, cols)
    U, _ = np.linalg.qr(rng.normal(size=(rows, k)))
    V, _ = np.linalg.qr(rng.normal(size=(cols, k)))
    top = rng.uniform(1.0, 5.0)
    rest = np.sort(rng.uniform(0.05, ratio, size=k - 1))[::-1] * top
    s = np.concatenate([[top], rest])
    return U @ np.diag(s) @ V.T


def test_diagonal_matrix():
    W = np.array([[2.0, 0.0], [0.0, 1.0]])
    W_sn, sigma, _ = spectral_normalize(W, SpectralState(np.array([1.0, 0.0]), 1))
    assert sigma == pytest.approx(2.0, abs=1e-12)
    np.testing.assert_allclose(W_sn, [[1.0, 0.0], [0.0, 0.5]], atol=1e-12)


def test_unit_norm_matrix_is_unchanged():
    t = 0.3
    W = np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])
    W_sn, sigma, _ = spectral_normalize(W, init_spectral_state(2, make_rng(0), 5))
    np.testing.assert_allclose(W_sn, W, atol=1e-9)


def test_sigma_matches_svd_oracle():
    rng = make_rng(99)
    for trial in range(100):
        rows, cols = (3, 3) if trial < 10 else tuple(rng.integers(2, 17, size=2))
        W = _matrix_with_gap(rng, rows, cols)
        s = init_spectral_state(rows, rng, n_power_iters=50)
        W_sn, sigma, s2 = spectral_normalize(W, s)
        oracle = np.linalg.svd(W, compute_uv=False)[0]
        assert abs(sigma - oracle) < 1e-6
        assert 1 - 1e-4 <= np.linalg.norm(W_sn, 2) <= 1 + 1e-4
        assert abs(np.linalg.norm(s2.u) - 1.0) < 1e-9


def test_persisted_u_warm_starts_the_next_call():
    rng = make_rng(3)
    W = _matrix_with_gap(rng, 6, 4)
    s = init_spectral_state(6, rng, n_power_iters=1)
    for _ in range(60):
        _, sigma, s = spectral_normalize(W, s)
        assert abs(np.linalg.norm(s.u) - 1.0) < 1e-9
    assert sigma == pytest.approx(np.linalg.svd(W, compute_uv=False)[0], abs=1e-6)


def test_zero_matrix_rejected():
    with pytest.raises(ZeroMatrix):
        spectral_normalize(np.zeros((2, 2)), SpectralState(np.array([1.0, 0.0])))


def test_u_length_must_match_rows():
    with pytest.raises(ShapeMismatch):
        power_iteration(np.ones((3, 2)), SpectralState(np.array([1.0, 0.0])))


def test_graph_level_weight_matches_numpy_normalization():
    rng = make_rng(8)
    W0 = _matrix_with_gap(rng, 4, 3)
    s = init_spectral_state(4, rng, n_power_iters=3)
    expected, _, _ = spectral_normalize(W0, s)
    g = Graph()
    node, state = spectral_weight(g, g.param("W", W0), s)
    np.testing.assert_allclose(node.value, expected, atol=1e-12)
    assert state.u.shape == (4,)
