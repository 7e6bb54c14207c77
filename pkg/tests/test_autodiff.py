import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from grplan.autodiff import (
    Adam,
    AdamState,
    CheckpointError,
    ExponentialSchedule,
    HalvingSchedule,
    ShapeError,
    Tensor,
    adam_step,
    affine,
    concat,
    conv2d,
    default_dtype,
    finite_diff_check,
    get_default_dtype,
    graph_conv,
    l1_loss,
    load_checkpoint,
    make_schedule,
    mean_all,
    relu,
    reshape,
    save_checkpoint,
    scale,
    softmax,
    softmax_cross_entropy,
    sum_all,
    window,
)
from oracles import conv2d_loops, graph_conv_loops


def param(rng, *shape):
    return Tensor(rng.normal(size=shape), requires_grad=True)


def off_zero(rng, *shape, margin=0.05):
    """Random values kept away from ReLU kinks."""
    v = rng.normal(size=shape)
    return np.where(np.abs(v) < margin, margin * np.sign(v + 1e-12), v)


# Forward values against loop oracles ------------------------------------------

@pytest.mark.parametrize("pad", ["same", "valid"])
def test_conv2d_matches_direct_loops(pad):
    rng = np.random.default_rng(0)
    x = rng.normal(size=(3, 5, 6))
    k = rng.normal(size=(4, 3, 3, 3))
    b = rng.normal(size=4)
    out = conv2d(Tensor(x), Tensor(k), Tensor(b), padding=pad).data
    np.testing.assert_allclose(out, conv2d_loops(x, k, b, 1 if pad == "same" else 0), atol=1e-12)


def test_conv2d_batched_equals_per_sample():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(3, 2, 4, 4))
    k, b = param(rng, 5, 2, 3, 3), param(rng, 5)
    batched = conv2d(Tensor(x), k, b).data
    for i in range(3):
        np.testing.assert_allclose(batched[i], conv2d(Tensor(x[i]), k, b).data, atol=1e-12)


def test_batched_gradient_is_sum_of_per_sample_gradients():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(4, 2, 5, 5))
    k, b = param(rng, 3, 2, 3, 3), param(rng, 3)
    sum_all(relu(conv2d(Tensor(x), k, b))).backward()
    batched = k.grad.copy()
    total = np.zeros_like(batched)
    for i in range(4):
        k.zero_grad()
        sum_all(relu(conv2d(Tensor(x[i]), k, b))).backward()
        total += k.grad
    np.testing.assert_allclose(batched, total, atol=1e-10)


def test_conv2d_shape_errors():
    rng = np.random.default_rng(0)
    with pytest.raises(ShapeError):
        conv2d(Tensor(rng.normal(size=(2, 4, 4))), param(rng, 1, 3, 3, 3), param(rng, 1))
    with pytest.raises(ShapeError):
        conv2d(Tensor(rng.normal(size=(3, 4, 4))), param(rng, 1, 3, 2, 2), param(rng, 1))
    with pytest.raises(ShapeError):
        conv2d(Tensor(rng.normal(size=(3, 2, 2))), param(rng, 1, 3, 3, 3), param(rng, 1), padding="valid")


def test_window_zero_pads_at_borders():
    x = Tensor(np.arange(2 * 3 * 3, dtype=float).reshape(1, 2, 3, 3))
    out = window(x, [(0, 0)], 3).data.reshape(2, 3, 3)
    assert out[0, 0].tolist() == [0, 0, 0]
    assert out[0, :, 0].tolist() == [0, 0, 0]
    assert out[0, 1, 1] == 0.0 and out[0, 2, 2] == 4.0
    assert out[1, 1, 1] == 9.0


def test_window_k1_reads_centre_cell():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(2, 4, 5, 6))
    out = window(Tensor(x), [(1, 2), (4, 5)], 1).data
    np.testing.assert_array_equal(out[0], x[0, :, 1, 2])
    np.testing.assert_array_equal(out[1], x[1, :, 4, 5])


def test_graph_conv_matches_loop_oracle():
    rng = np.random.default_rng(4)
    n, c, c2 = 5, 3, 4
    adj = rng.random((n, n)) < 0.6
    adj = np.triu(adj, 1)
    adj = adj | adj.T
    w = np.triu(rng.random((n, n)), 1)
    w = (w + w.T) * adj
    x, theta, bias = rng.normal(size=(n, c)), rng.normal(size=(2 * c + 1, c2)), rng.normal(size=c2)
    out = graph_conv(Tensor(x), adj, w, Tensor(theta), Tensor(bias)).data
    np.testing.assert_allclose(out, graph_conv_loops(x, adj, w, theta, bias), atol=1e-12)


def test_graph_conv_isolated_node_outputs_zero():
    rng = np.random.default_rng(5)
    adj = np.zeros((3, 3), dtype=bool)
    adj[0, 1] = adj[1, 0] = True
    theta, bias = Tensor(rng.normal(size=(7, 4))), Tensor(np.abs(rng.normal(size=4)) + 1)
    out = graph_conv(Tensor(rng.normal(size=(3, 3))), adj, adj * 0.5, theta, bias).data
    assert np.all(out[2] == 0.0)


def test_graph_conv_single_edge_hand_computed():
    # nodes 0 - 1 with weight 0.25, C = 1, C' = 1
    x = np.array([[2.0], [-1.0]])
    adj = np.array([[False, True], [True, False]])
    w = np.array([[0.0, 0.25], [0.25, 0.0]])
    theta = np.array([[0.5], [1.0], [4.0]])  # neighbour, self, edge weight
    bias = np.array([0.1])
    out = graph_conv(Tensor(x), adj, w, Tensor(theta), Tensor(bias)).data
    # node 0: 0.5*(-1) + 1*2 + 4*0.25 + 0.1 = 2.6 ; node 1: 0.5*2 + 1*(-1) + 1 + 0.1 = 1.1
    np.testing.assert_allclose(out[:, 0], [2.6, 1.1])


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 7), st.integers(0, 10_000))
def test_graph_conv_permutation_equivariant(n, seed):
    rng = np.random.default_rng(seed)
    adj = np.triu(rng.random((n, n)) < 0.7, 1)
    adj = adj | adj.T
    w = np.triu(rng.random((n, n)), 1)
    w = (w + w.T) * adj
    x = rng.normal(size=(n, 3))
    theta, bias = Tensor(rng.normal(size=(7, 5))), Tensor(rng.normal(size=5))
    perm = rng.permutation(n)
    out = graph_conv(Tensor(x), adj, w, theta, bias).data
    out_p = graph_conv(Tensor(x[perm]), adj[np.ix_(perm, perm)], w[np.ix_(perm, perm)], theta, bias).data
    np.testing.assert_allclose(out_p, out[perm], atol=1e-12)


def test_softmax_cross_entropy_value():
    logits = Tensor(np.array([[1.0, 2.0, 3.0], [0.0, 0.0, 0.0]]))
    loss, probs = softmax_cross_entropy(logits, [2, 0])
    expected = np.mean([-np.log(np.exp(3) / np.exp([1, 2, 3]).sum()), np.log(3)])
    assert loss.data == pytest.approx(expected, abs=1e-12)
    np.testing.assert_allclose(probs.sum(axis=1), 1.0)


def test_softmax_cross_entropy_is_stable_for_large_logits():
    loss, _ = softmax_cross_entropy(Tensor(np.array([[1000.0, -1000.0]])), [0])
    assert np.isfinite(loss.data) and loss.data == pytest.approx(0.0, abs=1e-12)


def test_softmax_cross_entropy_rejects_bad_labels():
    with pytest.raises(IndexError):
        softmax_cross_entropy(Tensor(np.zeros((1, 3))), [3])


def test_masked_softmax_gives_zero_to_illegal_entries():
    p = softmax(np.array([5.0, 1.0, 2.0]), np.array([False, True, True]))
    assert p[0] == 0.0 and p.sum() == pytest.approx(1.0)


def test_l1_loss_value():
    loss = l1_loss(Tensor(np.array([1.0, -2.0, 0.5])), np.array([0.0, 0.0, 0.5]))
    assert loss.data == pytest.approx(1.0)


# Finite differences --------------------------------------------------------------

def _check(forward, inputs):
    report = finite_diff_check(forward, inputs)
    assert report.passed, report
    assert report.max_rel_error < 1e-4


def test_gradcheck_elementwise_and_shape_ops():
    rng = np.random.default_rng(6)
    a = Tensor(off_zero(rng, 3, 4), requires_grad=True)
    b = Tensor(rng.normal(size=(4,)), requires_grad=True)
    target = rng.normal(size=12) + 4.0
    _check(lambda: l1_loss(reshape(relu(a + b), (12,)), target), [a, b])
    _check(lambda: mean_all(concat([a, relu(a)], axis=1)), [a])


def test_gradcheck_affine_and_losses():
    rng = np.random.default_rng(7)
    x = Tensor(rng.normal(size=(5, 4)), requires_grad=True)
    W, b = param(rng, 3, 4), param(rng, 3)
    labels = rng.integers(0, 3, size=5)
    _check(lambda: softmax_cross_entropy(affine(x, W, b), labels)[0], [x, W, b])
    target = rng.normal(size=(5, 3)) + 5.0
    _check(lambda: l1_loss(affine(x, W, b), target), [x, W, b])


@pytest.mark.parametrize("pad", ["same", "valid"])
def test_gradcheck_conv2d(pad):
    rng = np.random.default_rng(8)
    x = Tensor(rng.normal(size=(2, 3, 5, 4)), requires_grad=True)
    k, b = param(rng, 2, 3, 3, 3), param(rng, 2)
    proj = rng.normal(size=(2, 2, 5, 4) if pad == "same" else (2, 2, 3, 2))
    _check(lambda: l1_loss(conv2d(x, k, b, pad), proj), [x, k, b])


def test_gradcheck_window():
    rng = np.random.default_rng(9)
    x = Tensor(rng.normal(size=(2, 2, 4, 4)), requires_grad=True)
    target = rng.normal(size=(2, 18)) + 3.0
    _check(lambda: l1_loss(window(x, [(0, 3), (2, 1)], 3), target), [x])


def test_gradcheck_graph_conv():
    rng = np.random.default_rng(10)
    n = 5
    adj = np.triu(rng.random((2, n, n)) < 0.7, 1)
    adj = adj | np.swapaxes(adj, 1, 2)
    w = np.triu(rng.random((2, n, n)), 1)
    w = (w + np.swapaxes(w, 1, 2)) * adj
    x = Tensor(rng.normal(size=(2, n, 3)), requires_grad=True)
    theta, bias = param(rng, 7, 4), param(rng, 4)
    target = rng.normal(size=(2, n, 4)) + 4.0
    _check(lambda: l1_loss(graph_conv(x, adj, w, theta, bias), target), [x, theta, bias])
    _check(lambda: l1_loss(graph_conv(x, adj, w, theta, bias, activation=False), target), [x, theta, bias])


def test_gradcheck_detects_a_wrong_gradient():
    x = Tensor(np.array([0.3, -0.7]), requires_grad=True)

    def broken():
        out = Tensor(x.data ** 2, _parents=(x,))
        out._backward = lambda g: x._accumulate(g * x.data)  # should be 2x
        return sum_all(out)

    assert not finite_diff_check(broken, [x]).passed


# Optimiser -----------------------------------------------------------------------

def test_schedules():
    h = HalvingSchedule(lr0=0.01, period=5)
    assert [h(e) for e in (0, 4, 5, 10)] == [0.01, 0.01, 0.005, 0.0025]
    e = ExponentialSchedule(lr0=0.01, rate=0.95)
    assert e(3) == pytest.approx(0.01 * 0.95 ** 3)
    assert make_schedule("halving", 0.1, period=2)(2) == pytest.approx(0.05)
    with pytest.raises(ValueError):
        make_schedule("cosine", 0.1)


def test_adam_first_step_moves_by_lr_times_sign():
    p = np.array([1.0, -2.0, 3.0])
    g = np.array([0.5, -0.1, 0.0])
    state = AdamState(HalvingSchedule(lr0=0.1, period=100))
    adam_step([p], [g], state, epoch=0)
    # bias-corrected first step is lr * g / (|g| + eps)
    np.testing.assert_allclose(p, [0.9, -1.9, 3.0], atol=1e-6)


def test_adam_clips_by_global_norm():
    # a clipped 300 must act exactly like a 10 on the optimiser moments
    runs = []
    for first, clip in ((300.0, 10.0), (10.0, 10.0), (300.0, None)):
        p, s = np.zeros(1), AdamState(HalvingSchedule(1.0, 100))
        adam_step([p], [np.array([first])], s, epoch=0, clip_norm=clip)
        adam_step([p], [np.array([-10.0])], s, epoch=0, clip_norm=clip)
        runs.append(p.copy())
    np.testing.assert_allclose(runs[0], runs[1])
    assert not np.allclose(runs[0], runs[2])


def test_adam_rejects_non_finite_gradients():
    with pytest.raises(FloatingPointError):
        adam_step([np.zeros(2)], [np.array([np.nan, 0.0])], AdamState(HalvingSchedule()), epoch=0)


def test_adam_minimises_a_quadratic():
    x = Tensor(np.array([3.0, -4.0]), requires_grad=True)
    opt = Adam([x], HalvingSchedule(lr0=0.1, period=1000))
    for _ in range(500):
        opt.zero_grad()
        sum_all(relu(x) + relu(scale(x, -1.0))).backward()
        opt.step(0)
    assert np.all(np.abs(x.data) < 0.2)


# Checkpoints ---------------------------------------------------------------------

def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(11)
    params = {"a.weight": rng.normal(size=(3, 4)), "b": rng.normal(size=(2,))}
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, params, {"class": "X", "params": {"depth": 2}})
    loaded, meta = load_checkpoint(path)
    assert list(loaded) == list(params)
    for k in params:
        np.testing.assert_array_equal(loaded[k], params[k])
    assert meta == {"class": "X", "params": {"depth": 2}}


@pytest.mark.parametrize("damage", ["magic", "flip", "truncate", "append", "version"])
def test_checkpoint_corruption_is_detected(tmp_path, damage):
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, {"w": np.arange(6.0)}, {})
    blob = bytearray(path.read_bytes())
    if damage == "magic":
        blob[0] ^= 0xFF
    elif damage == "flip":
        blob[-3] ^= 0x01
    elif damage == "truncate":
        blob = blob[:-5]
    elif damage == "append":
        blob += b"\x00"
    else:
        blob[8:12] = struct.pack("<I", 99)
    path.write_bytes(bytes(blob))
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_default_dtype_context():
    assert get_default_dtype() is np.float64
    with default_dtype("float32"):
        assert Tensor([1.0]).data.dtype == np.float32
    assert Tensor([1.0]).data.dtype == np.float64
