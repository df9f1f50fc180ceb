import numpy as np
import pytest

from tagfm import autodiff as ad
from tagfm.autodiff import Adam, Tape, Tensor, load_archive, save_archive

from fdcheck import check_gradients


def test_softmax_singleton(f64):
    out = ad.softmax(Tensor([3.7]), axis=0)
    assert np.allclose(out.values, [1.0])


def test_softmax_rows_sum_to_one(f64, rng):
    x = Tensor(rng.standard_normal((5, 7)))
    out = ad.softmax(x, axis=1)
    assert np.allclose(out.values.sum(axis=1), 1.0, atol=1e-6)


def test_leaky_relu_negative_slope(f64):
    out = ad.leaky_relu(Tensor([-1.0, 2.0]), slope=0.01)
    assert np.allclose(out.values, [-0.01, 2.0])


def test_sum_of_squares_gradient(f64):
    # d/dx sum(x*x) at [1, 2] is [2, 4]
    x = ad.param(np.array([1.0, 2.0]))
    check_gradients(lambda: ad.tsum(ad.mul(x, x)), [x])
    x.zero_grad()
    with Tape() as tape:
        loss = ad.tsum(ad.mul(x, x))
        tape.backward(loss)
    assert np.allclose(x.grad, [2.0, 4.0])


def test_backward_constant_loss_leaves_grads_zero(f64):
    w = ad.param(np.array([2.0]))
    with Tape() as tape:
        loss = ad.mul(Tensor(np.array([5.0])), Tensor(np.array([3.0])))
        tape.backward(loss)
    assert w.grad is None


def test_backward_linear(f64):
    w = ad.param(np.array([4.0]))
    with Tape() as tape:
        loss = ad.scale(w, 3.0)
        tape.backward(loss)
    assert np.allclose(w.grad, [3.0])


def test_backward_requires_scalar(f64):
    w = ad.param(np.array([1.0, 2.0]))
    with Tape() as tape:
        y = ad.mul(w, w)
        with pytest.raises(ValueError):
            tape.backward(y)


def test_backward_accumulates_across_passes(f64):
    w = ad.param(np.array([4.0]))
    for _ in range(2):
        with Tape() as tape:
            loss = ad.scale(w, 3.0)
            tape.backward(loss)
    assert np.allclose(w.grad, [6.0])
    w.zero_grad()
    assert w.grad is None


@pytest.mark.parametrize("op,domain", [
    (lambda x: ad.tsum(ad.sigmoid(x)), None),
    (lambda x: ad.tsum(ad.softplus(x)), None),
    (lambda x: ad.tsum(ad.exp(x)), None),
    (lambda x: ad.tsum(ad.log(x)), "positive"),
    (lambda x: ad.tsum(ad.leaky_relu(x, 0.01)), None),
    (lambda x: ad.tsum(ad.mul(ad.softmax(x, axis=0),
                              Tensor(np.linspace(-1.0, 2.0, 6)))), None),
    (lambda x: ad.tsum(ad.mul(ad.softmax(x, axis=0), x)), None),
])
def test_elementwise_gradients(f64, rng, op, domain):
    vals = rng.standard_normal(6)
    if domain == "positive":
        vals = np.abs(vals) + 0.5
    x = ad.param(vals)
    check_gradients(lambda: op(x), [x])


def test_matmul_concat_slice_gradients(f64, rng):
    a = ad.param(rng.standard_normal((3, 4)))
    b = ad.param(rng.standard_normal((4, 2)))

    def loss():
        prod = ad.matmul(a, b)
        cat = ad.concat([prod, ad.scale(prod, 2.0)], axis=1)
        sl = ad.slice_axis(cat, 1, 1, 3)
        return ad.tsum(ad.mul(sl, sl))

    check_gradients(loss, [a, b])


def test_gather_segment_gradients(f64, rng):
    x = ad.param(rng.standard_normal((5, 3)))
    idx = np.array([0, 2, 2, 4])
    seg = np.array([0, 0, 1, 1])

    def loss():
        g = ad.gather_rows(x, idx)
        s = ad.segment_sum(g, seg, 2)
        return ad.tsum(ad.mul(s, s))

    check_gradients(loss, [x])


def test_div_broadcast_gradients(f64, rng):
    a = ad.param(np.abs(rng.standard_normal((4, 3))) + 1.0)
    b = ad.param(np.abs(rng.standard_normal((4, 1))) + 1.0)
    check_gradients(lambda: ad.tsum(ad.div(a, b)), [a, b])


def test_dropout_identity_cases(f64, rng):
    x = Tensor(rng.standard_normal((4, 4)))
    assert ad.dropout(x, 0.0, True, 7) is x
    assert ad.dropout(x, 0.9, False, 7) is x


def test_dropout_deterministic_and_scaled(f64, rng):
    x = Tensor(np.ones((100, 10)))
    a = ad.dropout(x, 0.25, True, 42)
    b = ad.dropout(x, 0.25, True, 42)
    assert np.array_equal(a.values, b.values)
    kept = a.values != 0
    assert np.allclose(a.values[kept], 1.0 / 0.75)


def test_log_domain_checked(f64):
    with pytest.raises(FloatingPointError):
        ad.log(Tensor([0.0]))


def test_adam_defaults_and_first_step(f64):
    # single scalar parameter, gradient 1: first bias-corrected step moves
    # the parameter down by about lr
    w = ad.param(np.array([1.0]))
    opt = Adam({"w": w})
    assert opt.lr == 0.001
    w.grad = np.array([1.0])
    opt.step()
    # hand evaluation at t=1: mhat = 1, vhat = 1, delta = lr / (1 + eps)
    expected = 1.0 - 0.001 / (1.0 + 1e-8)
    assert abs(w.values[0] - expected) < 1e-12


def test_adam_zero_grad_is_noop(f64):
    w = ad.param(np.array([1.5]))
    opt = Adam({"w": w})
    opt.step()  # no gradient populated
    assert w.values[0] == 1.5


def test_archive_roundtrip_bit_exact(tmp_path, f64, rng):
    arrays = {
        "a": rng.standard_normal((3, 4)),
        "b": rng.standard_normal(7).astype(np.float32),
    }
    path = tmp_path / "ck.bin"
    save_archive(str(path), arrays, {"note": 1})
    loaded, meta = load_archive(str(path))
    assert meta["note"] == 1
    for k in arrays:
        assert loaded[k].dtype == arrays[k].dtype
        assert np.array_equal(loaded[k], arrays[k])


def test_archive_rejects_corruption(tmp_path, rng):
    path = tmp_path / "ck.bin"
    save_archive(str(path), {"a": rng.standard_normal(4)}, {})
    raw = bytearray(path.read_bytes())
    raw[-1] ^= 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(ValueError):
        load_archive(str(path))
