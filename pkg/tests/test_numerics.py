import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from morphparse.numerics import autodiff as ad
from morphparse.numerics.autodiff import DimensionError, Parameter, Tensor
from morphparse.numerics.gradcheck import check_gradients, relative_error
from morphparse.numerics.layers import MLP, BiLSTM, Highway, LSTMParams, ParamStore, bilstm, lstm_params, lstm_step
from morphparse.numerics.optim import AdamState, adam_step, clip_gradients, global_norm

TOL = 1e-4


def rand(rng, *shape):
    return Tensor(rng.standard_normal(shape), requires_grad=True)


# --- affine -------------------------------------------------------------------------

def test_affine_identity(f64):
    W = Parameter("W", np.eye(2))
    assert np.allclose(ad.affine(Tensor([3.0, -1.0]), W).data, [3.0, -1.0])


def test_affine_hand_value(f64):
    W = Parameter("W", [[1.0, 2.0], [3.0, 4.0]])
    assert np.allclose(ad.affine(Tensor([1.0, 1.0]), W).data, [3.0, 7.0])


def test_affine_grad_is_column_sums(f64):
    rng = np.random.default_rng(0)
    W = Parameter("W", rng.standard_normal((5, 7)))
    x = rand(rng, 7)
    ad.backward(ad.tsum(ad.affine(x, W)))
    assert np.allclose(x.grad, W.data.sum(axis=0))
    errs = check_gradients(lambda: ad.tsum(ad.affine(x, W)), [x, W])
    assert max(errs.values()) < TOL


def test_affine_shape_error_names_shapes(f64):
    W = Parameter("W", np.zeros((2, 3)))
    with pytest.raises(DimensionError, match=r"\(4,\).*\(2, 3\)"):
        ad.affine(Tensor(np.zeros(4)), W)


# --- elementwise and structural ops -------------------------------------------------

@pytest.mark.parametrize("op", [ad.tanh, ad.sigmoid, ad.exp, lambda t: ad.log(ad.add(ad.mul(t, t), 1.0)),
                                lambda t: ad.relu(ad.add(t, 0.05))])
def test_unary_gradients(f64, op):
    x = rand(np.random.default_rng(1), 3, 4)
    assert max(check_gradients(lambda: ad.tsum(ad.mul(op(x), op(x))), [x]).values()) < TOL


def test_binary_broadcast_gradients(f64):
    rng = np.random.default_rng(2)
    a, b = rand(rng, 3, 1, 4), rand(rng, 2, 4)
    f = lambda: ad.tsum(ad.tanh(ad.add(ad.mul(a, b), ad.sub(b, a))))
    assert max(check_gradients(f, [a, b]).values()) < TOL


def test_shape_ops_gradients(f64):
    rng = np.random.default_rng(3)
    x = rand(rng, 4, 3, 2)
    lengths = np.array([4, 2, 3])

    def f():
        y = ad.reshape(ad.reverse_padded(x, lengths), (4, 6))
        picked = ad.stack([x[0, 0], x[1, 2], x[3, 1]], 0)  # (3, 2)
        z = ad.concat([y, ad.transpose(picked, (1, 0))[[0, 1, 0, 1]]], axis=1)
        return ad.tsum(ad.mul(ad.tanh(z), ad.reshape(ad.tmax(z, axis=1), (4, 1))))

    assert max(check_gradients(f, [x]).values()) < TOL


def test_einsum_and_softmax_gradients(f64):
    rng = np.random.default_rng(4)
    a, b = rand(rng, 2, 3, 4), rand(rng, 2, 4)
    w = rng.standard_normal((2, 3))
    f = lambda: ad.tsum(ad.mul(ad.log_softmax(ad.einsum("bkd,bd->bk", a, b), axis=-1), w))
    g = lambda: ad.tsum(ad.mul(ad.softmax(ad.einsum("bkd,bd->bk", a, b), axis=-1), w))
    assert max(check_gradients(f, [a, b]).values()) < TOL
    assert max(check_gradients(g, [a, b]).values()) < TOL


def test_take_rows_repeated_ids_accumulate(f64):
    table = rand(np.random.default_rng(5), 4, 3)
    ids = np.array([[0, 2], [2, 2]])
    ad.backward(ad.tsum(ad.take_rows(table, ids)))
    assert np.allclose(table.grad[:, 0], [1, 0, 3, 0])


def test_unfold_max_pool_gradients(f64):
    x = rand(np.random.default_rng(6), 2, 5, 3)
    assert max(check_gradients(lambda: ad.tsum(ad.tmax(ad.tanh(ad.unfold(x, 2)), axis=1)), [x]).values()) < TOL


# --- softmax cross-entropy ----------------------------------------------------------

def test_softmax_ce_uniform(f64):
    for gold in range(4):
        assert math.isclose(ad.softmax_cross_entropy(Tensor(np.zeros(4)), gold).item(), math.log(4), rel_tol=1e-12)


def test_softmax_ce_saturated(f64):
    assert ad.softmax_cross_entropy(Tensor(np.eye(5)[2] * 1000.0), 2).item() < 1e-12


def test_softmax_ce_hand_value(f64):
    expected = -math.log(math.exp(3) / (math.exp(1) + math.exp(2) + math.exp(3)))
    assert math.isclose(ad.softmax_cross_entropy(Tensor([1.0, 2.0, 3.0]), 2).item(), expected, rel_tol=1e-12)


def test_softmax_ce_out_of_range(f64):
    with pytest.raises(IndexError):
        ad.softmax_cross_entropy(Tensor([1.0, 2.0]), 2)


def test_softmax_ce_gradient(f64):
    x = rand(np.random.default_rng(7), 6)
    assert check_gradients(lambda: ad.softmax_cross_entropy(x, 3), [x])[0] < TOL


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=1, max_size=12))
def test_softmax_normalizes(values):
    with ad.default_dtype(np.float64), ad.no_grad():
        p = ad.softmax(Tensor(values), axis=-1).data
    assert np.all(p >= 0)
    assert abs(p.sum() - 1.0) < 1e-6


# --- LSTM -----------------------------------------------------------------------------

def _params(store, n_in, hidden):
    return lstm_params(store, "lstm", n_in, hidden)


def test_lstm_zero_case(f64):
    p = LSTMParams(Parameter("Wx", np.zeros((8, 3))), Parameter("Wh", np.zeros((8, 2))), Parameter("b", np.zeros(8)))
    h, c = lstm_step(Tensor(np.zeros(3)), Tensor(np.zeros(2)), Tensor(np.zeros(2)), p)
    assert np.all(h.data == 0) and np.all(c.data == 0)


def test_lstm_saturated_gates(f64):
    # input and forget gates fully open: c = c_prev + tanh(candidate)
    b = np.array([100.0, 100.0, 0.0, 0.0])
    Wx = np.array([[0.0], [0.0], [0.0], [0.7]])
    p = LSTMParams(Parameter("Wx", Wx), Parameter("Wh", np.zeros((4, 1))), Parameter("b", b))
    h, c = lstm_step(Tensor([1.5]), Tensor([0.3]), Tensor([0.4]), p)
    assert math.isclose(c.data[0], 0.4 + math.tanh(0.7 * 1.5), rel_tol=1e-9)
    assert math.isclose(h.data[0], 0.5 * math.tanh(c.data[0]), rel_tol=1e-9)


def test_lstm_step_gradients(f64):
    rng = np.random.default_rng(8)
    store = ParamStore(seed=3)
    p = _params(store, 3, 4)
    x, h0, c0 = rand(rng, 2, 3), rand(rng, 2, 4), rand(rng, 2, 4)

    def f():
        h, c = lstm_step(x, h0, c0, p)
        return ad.tsum(ad.mul(h, c))

    assert max(check_gradients(f, [x, h0, c0, p.Wx, p.Wh, p.b]).values()) < TOL


def test_lstm_step_dimension_error(f64):
    p = _params(ParamStore(), 3, 4)
    with pytest.raises(DimensionError):
        lstm_step(Tensor(np.zeros(2)), Tensor(np.zeros(4)), Tensor(np.zeros(4)), p)
    with pytest.raises(DimensionError):
        lstm_step(Tensor(np.zeros(3)), Tensor(np.zeros(3)), Tensor(np.zeros(4)), p)


def test_forget_bias_initialised_to_one():
    p = _params(ParamStore(), 3, 4)
    assert np.all(p.b.data[4:8] == 1.0)
    assert np.all(p.b.data[:4] == 0.0) and np.all(p.b.data[8:] == 0.0)


def test_bilstm_single_step(f64):
    net = BiLSTM(ParamStore(seed=1), "bi", 3, 2)
    x = Tensor(np.random.default_rng(0).standard_normal(3))
    (out,) = bilstm([x], net)
    hf, _ = lstm_step(x, Tensor(np.zeros(2)), Tensor(np.zeros(2)), net.fwd[0])
    hb, _ = lstm_step(x, Tensor(np.zeros(2)), Tensor(np.zeros(2)), net.bwd[0])
    assert np.allclose(out.data, np.concatenate([hf.data, hb.data]))


def test_bilstm_empty_sequence():
    with pytest.raises(ValueError):
        bilstm([], BiLSTM(ParamStore(), "bi", 3, 2))


def test_bilstm_palindrome_symmetry(f64):
    net = BiLSTM(ParamStore(seed=2), "bi", 3, 2)
    for name in ("Wx", "Wh", "b"):
        getattr(net.bwd[0], name).data[...] = getattr(net.fwd[0], name).data
    rng = np.random.default_rng(1)
    a, b = rng.standard_normal(3), rng.standard_normal(3)
    xs = [Tensor(v) for v in (a, b, a + b, b, a)]
    out = np.stack([o.data for o in bilstm(xs, net)])
    n = len(xs)
    for i in range(n):
        assert np.allclose(out[i, :2], out[n - 1 - i, 2:])


def test_bilstm_gradients_with_padding(f64):
    rng = np.random.default_rng(9)
    store = ParamStore(seed=4)
    net = BiLSTM(store, "bi", 3, 2, layers=2)
    X = rand(rng, 4, 2, 3)
    lengths = np.array([4, 2])
    w = rng.standard_normal((4, 2, 4)) * (np.arange(4)[:, None] < lengths[None, :])[..., None]
    f = lambda: ad.tsum(ad.mul(net.run(X, lengths), w))
    g = lambda: ad.tsum(ad.mul(net.final_states(X, lengths), w[0]))
    assert max(check_gradients(f, [X] + list(store)).values()) < TOL
    assert max(check_gradients(g, [X] + list(store)).values()) < TOL


def test_bilstm_padding_does_not_leak(f64):
    net = BiLSTM(ParamStore(seed=5), "bi", 3, 2)
    rng = np.random.default_rng(2)
    seq = rng.standard_normal((2, 1, 3))
    X = np.concatenate([seq, rng.standard_normal((3, 1, 3))])
    alone = net.run(Tensor(seq), [2]).data
    padded = net.run(Tensor(X), [2]).data
    assert np.allclose(alone, padded[:2])


def test_highway_and_mlp_gradients(f64):
    rng = np.random.default_rng(10)
    store = ParamStore(seed=6)
    hw, mlp = Highway(store, "hw", 4), MLP(store, "mlp", [4, 5, 3])
    x = rand(rng, 3, 4)
    f = lambda: ad.tsum(ad.mul(mlp(hw(x)), mlp(x)))
    assert max(check_gradients(f, [x] + list(store)).values()) < TOL


# --- Adam, clipping, dropout --------------------------------------------------------

def test_adam_zero_gradient_leaves_parameters():
    p = Parameter("p", [1.0, -2.0])
    adam_step(AdamState(), [p])
    assert np.array_equal(p.data, np.array([1.0, -2.0], dtype=p.dtype))


def test_adam_first_step_moves_by_lr(f64):
    p = Parameter("p", [0.5])
    p.grad = np.array([1.0])
    adam_step(AdamState(lr=0.001), [p])
    assert abs((0.5 - p.data[0]) - 0.001) < 1e-6


def test_adam_empty_is_noop():
    adam_step(AdamState(), [])


def test_clip_to_five(f64):
    p = Parameter("p", np.zeros(2))
    p.grad = np.array([30.0, 40.0])
    assert clip_gradients([p], 5.0) == pytest.approx(50.0)
    assert global_norm([p]) == pytest.approx(5.0)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=10))
def test_clipped_norm_bounded(values):
    p = Parameter("p", np.zeros(len(values)), dtype=np.float64)
    p.grad = np.array(values, dtype=np.float64)
    clip_gradients([p], 5.0)
    assert global_norm([p]) <= 5.0 + 1e-9


def test_dropout_identities(f64):
    x = Tensor(np.arange(6.0))
    rng = np.random.default_rng(0)
    assert ad.dropout(x, 0.0, True, rng) is x
    assert ad.dropout(x, 0.5, False, rng) is x


def test_dropout_mean_preserved(f64):
    y = ad.dropout(Tensor(np.ones(100_000)), 0.5, True, np.random.default_rng(0))
    assert abs(y.data.mean() - 1.0) < 0.02


def test_dropout_rate_one_rejected():
    with pytest.raises(ValueError):
        ad.dropout(Tensor(np.ones(3)), 1.0, True, np.random.default_rng(0))


def test_forward_is_deterministic():
    def run():
        store = ParamStore(seed=11)
        net = BiLSTM(store, "bi", 3, 2)
        X = Tensor(np.random.default_rng(1).standard_normal((3, 2, 3)))
        return net.run(X, [3, 3]).data.tobytes()

    assert run() == run()


def test_relative_error_definition():
    assert relative_error(np.zeros(3), np.zeros(3)) == 0.0
    assert relative_error(np.array([1.0, 0.0]), np.array([0.0, 0.0])) == 1.0
