import json

import numpy as np
import pytest
from conftest import constant_cell, fd_gradient, gradients_match, random_cell, relu_margin
from hypothesis import assume, given
from hypothesis import strategies as st

from mortsim import neural
from mortsim.errors import CheckpointMismatch, EmptyBatch, InvalidSpec, ShapeMismatch
from mortsim.neural import CellSpec


def oracle_forward(cell, xi):
    """Straight-line loop over layers and neurons."""
    z = list(map(float, xi))
    n_layers = len(cell.weights)
    for k in range(n_layers):
        w, b = cell.weights[k], cell.biases[k]
        nxt = []
        for r in range(w.shape[0]):
            a = b[r] + sum(w[r, c] * z[c] for c in range(w.shape[1]))
            nxt.append(a if k == n_layers - 1 else max(a, 0.0))
        z = nxt
    return z[0]


# ---------------------------------------------------------------- spec and init

def test_spec_dims_and_params():
    spec = CellSpec(40, 6, 64)
    assert spec.dims == [40, 64, 64, 64, 64, 1]
    assert spec.n_params == 40 * 64 + 64 + 3 * (64 * 64 + 64) + 64 + 1


@pytest.mark.parametrize("args", [(0, 3, 4), (4, 1, 4), (4, 3, 0)])
def test_spec_rejects_degenerate(args):
    with pytest.raises(InvalidSpec):
        CellSpec(*args)


def test_init_truncation_and_bias():
    cell = neural.init_cell(CellSpec(40, 6, 64), 0.1, 0.1, seed=3)
    for w in cell.weights:
        assert np.abs(w).max() <= 0.2
    for b in cell.biases:
        assert np.all(b == 0.1)
    # redraw keeps the spread of a normal truncated at two sigma (sd ~ 0.088 sigma units)
    allw = np.concatenate([w.ravel() for w in cell.weights])
    assert 0.08 < allw.std() < 0.095


def test_init_is_deterministic():
    a = neural.init_cell(CellSpec(5, 3, 7), 0.1, 0.1, seed=9)
    b = neural.init_cell(CellSpec(5, 3, 7), 0.1, 0.1, seed=9)
    np.testing.assert_array_equal(a.flat(), b.flat())
    c = neural.init_cell(CellSpec(5, 3, 7), 0.1, 0.1, seed=10)
    assert not np.array_equal(a.flat(), c.flat())


@pytest.mark.parametrize("b,s", [(0.0, 0.1), (0.1, 0.0), (-1, 0.1)])
def test_init_rejects_nonpositive(b, s):
    with pytest.raises(InvalidSpec):
        neural.init_cell(CellSpec(3, 2, 2), b, s, 0)


def test_wrong_shapes_rejected():
    spec = CellSpec(3, 2, 2)
    with pytest.raises(ShapeMismatch):
        neural.DenseCell(spec, [np.zeros((1, 4))], [np.zeros(1)])


# ---------------------------------------------------------------- forward and rollout

def test_forward_zero_weights_returns_output_bias():
    spec = CellSpec(4, 2, 1)
    cell = neural.DenseCell(spec, [np.zeros((1, 4))], [np.array([-3.25])])
    assert neural.forward(cell, [1.0, -2.0, 5.0, 0.3]) == -3.25


def test_forward_relu_clamp():
    cell = constant_cell(3, 0.7, k=3, h=2)
    cell.weights[0][:] = 1.0
    cell.biases[0][:] = -100.0  # hidden pre-activation negative for small inputs
    cell.weights[1][:] = 5.0
    assert neural.forward(cell, [1.0, 2.0, 3.0]) == 0.7


@given(st.integers(0, 10_000), st.integers(1, 6), st.integers(2, 4), st.integers(1, 6))
def test_forward_matches_loop_oracle(seed, n, k, h):
    cell = random_cell(seed, n, k, h)
    xi = np.random.default_rng(seed).normal(-4, 1, n)
    assert neural.forward(cell, xi) == pytest.approx(oracle_forward(cell, xi), abs=1e-12)


def test_forward_batch_equals_rows():
    cell = random_cell(1, 5, 3, 6)
    batch = np.random.default_rng(0).normal(size=(7, 5))
    out = neural.forward(cell, batch)
    assert out.shape == (7,)
    for row, o in zip(batch, out):
        assert neural.forward(cell, row) == pytest.approx(o, abs=1e-14)


def test_forward_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        neural.forward(random_cell(0, 4), [1.0, 2.0])


def test_relu_region_scaling():
    # positive weights, biases and inputs keep every unit active: the cell is affine
    cell = neural.init_cell(CellSpec(4, 3, 5), 0.1, 0.1, 0)
    for w in cell.weights:
        w[...] = np.abs(w)
    xi = np.array([0.5, 1.0, 0.2, 0.8])
    offset = neural.forward(cell, np.zeros(4))
    assert neural.forward(cell, 2 * xi) - offset == pytest.approx(2 * (neural.forward(cell, xi) - offset), rel=1e-12)


def test_rollout_k1_and_k2():
    cell = random_cell(4, 5, 3, 4)
    xi = np.random.default_rng(4).normal(-5, 1, 5)
    out = neural.rollout(cell, xi, 2)
    f1 = neural.forward(cell, xi)
    assert out[0] == f1
    assert out[1] == pytest.approx(neural.forward(cell, np.append(xi[1:], f1)), abs=1e-14)


def test_rollout_constant_cell():
    np.testing.assert_array_equal(neural.rollout(constant_cell(3, -2.5), [1, 2, 3], 6), np.full(6, -2.5))


@given(st.integers(0, 1000), st.integers(1, 8), st.integers(1, 8))
def test_rollout_prefix_property(seed, k, extra):
    cell = random_cell(seed, 4, 3, 4, sigma=0.3)
    xi = np.random.default_rng(seed).normal(-3, 1, 4)
    short = neural.rollout(cell, xi, k)
    long = neural.rollout(cell, xi, k + extra)
    np.testing.assert_array_equal(short, long[:k])


def test_rollout_rejects_zero_steps():
    with pytest.raises(ShapeMismatch):
        neural.rollout(random_cell(0), np.zeros(4), 0)


# ---------------------------------------------------------------- loss

def test_loss_zero_for_perfect_targets():
    cell = random_cell(2, 4)
    w = np.random.default_rng(2).normal(size=(5, 4))
    assert neural.loss(cell, w, neural.rollout(cell, w, 3)) == 0.0


def test_loss_single_pair():
    cell = random_cell(2, 4)
    xi = np.array([[-1.0, -2.0, -3.0, -4.0]])
    o = neural.forward(cell, xi[0])
    assert neural.loss(cell, xi, [[0.25]]) == pytest.approx((o - 0.25) ** 2, abs=1e-15)


def test_loss_brute_force(rng):
    cell = random_cell(6, 3, 3, 4)
    w = rng.normal(-3, 1, (6, 3))
    t = rng.normal(-3, 1, (6, 4))
    total = 0.0
    for b in range(6):
        out = neural.rollout(cell, w[b], 4)
        for j in range(4):
            total += (out[j] - t[b, j]) ** 2
    assert neural.loss(cell, w, t) == pytest.approx(total / 6, rel=1e-13)


def test_loss_empty_batch():
    with pytest.raises(EmptyBatch):
        neural.loss(random_cell(0), np.zeros((0, 4)), np.zeros((0, 2)))


# ---------------------------------------------------------------- backward

def test_backward_zero_at_minimum():
    cell = random_cell(3, 4)
    w = np.random.default_rng(3).normal(size=(4, 4))
    value, g = neural.backward(cell, w, neural.rollout(cell, w, 3))
    assert value == 0.0
    assert np.all(g.flat() == 0.0)


@given(st.integers(0, 100_000), st.integers(1, 8), st.integers(2, 4), st.integers(1, 8),
       st.integers(1, 4), st.integers(1, 4))
def test_backward_matches_finite_differences(seed, n, k, h, n_train, batch):
    cell = random_cell(seed, n, k, h, sigma=0.4)
    r = np.random.default_rng(seed)
    w = r.normal(-1, 1, (batch, n))
    t = r.normal(-1, 1, (batch, n_train))
    assume(relu_margin(cell, w, n_train) > 1e-3)
    _, g = neural.backward(cell, w, t)
    assert gradients_match(g.flat(), fd_gradient(cell, w, t))


def test_single_step_backward_has_no_recursion_term(rng):
    cell = random_cell(8, 5, 3, 6)
    w = rng.normal(size=(4, 5))
    t = rng.normal(size=(4, 1))
    _, full = neural.backward(cell, w, t)
    _, cut = neural.backward(cell, w, t, stop_gradient=True)
    np.testing.assert_array_equal(full.flat(), cut.flat())


def test_stop_gradient_equals_sum_of_single_step_gradients(rng):
    # treating fed-back predictions as data gives the sum of one-step gradients
    cell = random_cell(8, 5, 3, 6)
    w = rng.normal(size=(3, 5))
    t = rng.normal(size=(3, 3))
    _, cut = neural.backward(cell, w, t, stop_gradient=True)
    outs = neural.rollout(cell, w, 3)
    total = np.zeros_like(cut.flat())
    win = w
    for j in range(3):
        _, gj = neural.backward(cell, win, t[:, j:j + 1])
        total += gj.flat()
        win = np.concatenate([win[:, 1:], outs[:, j:j + 1]], axis=1)
    np.testing.assert_allclose(cut.flat(), total, rtol=1e-12, atol=1e-14)
    _, full = neural.backward(cell, w, t)
    assert not np.allclose(full.flat(), cut.flat())


# ---------------------------------------------------------------- rmsprop

def test_rmsprop_zero_gradient_is_stationary():
    cell = random_cell(0)
    state = neural.RmsPropState.fresh(cell, 1e-3)
    zero = neural.Gradients([np.zeros_like(w) for w in cell.weights], [np.zeros_like(b) for b in cell.biases])
    _, after = neural.rmsprop_step(state, cell, zero)
    np.testing.assert_array_equal(after.flat(), cell.flat())


def _scalar_cell(p: float):
    return neural.DenseCell(CellSpec(1, 2, 1), [np.array([[p]])], [np.array([0.0])])


def test_rmsprop_hand_evaluated_update():
    cell = _scalar_cell(0.5)
    state = neural.RmsPropState.fresh(cell, 1e-4, 0.9, 1e-10)
    g = neural.Gradients([np.array([[1.0]])], [np.array([0.0])])
    s1, c1 = neural.rmsprop_step(state, cell, g)
    assert c1.weights[0][0, 0] - 0.5 == pytest.approx(-1e-4 / (np.sqrt(0.1) + 1e-10), rel=1e-12)
    assert s1.acc_w[0][0, 0] == pytest.approx(0.1)
    # a second identical step is smaller: the accumulator has grown to 0.19
    _, c2 = neural.rmsprop_step(s1, c1, g)
    step2 = c2.weights[0][0, 0] - c1.weights[0][0, 0]
    assert step2 == pytest.approx(-1e-4 / np.sqrt(0.19), rel=1e-9)
    assert abs(step2) < abs(c1.weights[0][0, 0] - 0.5)
    # the functional form leaves its inputs untouched
    assert cell.weights[0][0, 0] == 0.5 and state.acc_w[0][0, 0] == 0.0


def test_rmsprop_shape_mismatch():
    cell = _scalar_cell(0.5)
    state = neural.RmsPropState.fresh(cell, 1e-4)
    bad = neural.Gradients([np.zeros((2, 2))], [np.zeros(1)])
    with pytest.raises(ShapeMismatch):
        neural.rmsprop_step(state, cell, bad)


# ---------------------------------------------------------------- jacobian

def test_jacobian_constant_cell():
    assert np.all(neural.input_jacobian(constant_cell(4, -1.0), np.ones(4), 5) == 0)


def test_jacobian_linear_path():
    # single active path from input 2 with weights 2 * 3 = 6
    spec = CellSpec(4, 3, 2)
    w0 = np.zeros((2, 4))
    w0[0, 2] = 2.0
    w1 = np.array([[3.0, 0.0]])
    cell = neural.DenseCell(spec, [w0, w1], [np.array([1.0, 0.0]), np.array([0.0])])
    jac = neural.input_jacobian(cell, np.array([0.1, 0.2, 0.3, 0.4]), 1)
    np.testing.assert_allclose(jac, [[0.0, 0.0, 6.0, 0.0]])


@given(st.integers(0, 10_000), st.integers(1, 12))
def test_jacobian_matches_finite_differences(seed, k):
    cell = random_cell(seed, 5, 3, 6, sigma=0.4)
    xi = np.random.default_rng(seed).normal(-1, 1, 5)
    assume(relu_margin(cell, xi, k) > 1e-3)
    jac = neural.input_jacobian(cell, xi, k)
    h = 1e-6
    for m in range(5):
        e = np.zeros(5)
        e[m] = h
        fd = (neural.rollout(cell, xi + e, k) - neural.rollout(cell, xi - e, k)) / (2 * h)
        assert gradients_match(jac[:, m], fd, rel=1e-4, abs_=1e-8)


# ---------------------------------------------------------------- checkpoint

def test_checkpoint_round_trip(tmp_path):
    cell = random_cell(5, 6, 4, 3)
    path = tmp_path / "c.json"
    neural.save_checkpoint(path, cell, seed=17, extra={"sex": "F"})
    back, meta = neural.load_checkpoint(path)
    assert back.spec == cell.spec
    np.testing.assert_array_equal(back.flat(), cell.flat())
    assert meta == {"seed": 17, "sex": "F"}
    doc = json.loads(path.read_text())
    assert doc["format"] == "mortsim-dense-cell" and doc["version"] == 1
    # row-major payload
    assert doc["layers"][0]["weights"][:3] == cell.weights[0].ravel()[:3].tolist()


def test_checkpoint_mismatch(tmp_path):
    path = tmp_path / "c.json"
    neural.save_checkpoint(path, random_cell(0), seed=1)
    doc = json.loads(path.read_text())
    doc["spec"]["hidden_width"] = 9
    path.write_text(json.dumps(doc))
    with pytest.raises(CheckpointMismatch):
        neural.load_checkpoint(path)
    doc["format"] = "other"
    path.write_text(json.dumps(doc))
    with pytest.raises(CheckpointMismatch):
        neural.load_checkpoint(path)
