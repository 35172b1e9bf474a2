import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import motionflow.engine as E
from motionflow.errors import NonDeterministic, NonFinite, ShapeMismatch


def ad_vs_fd(f, tensors, tol=1e-5, h=1e-6):
    err = E.grad_check(f, tensors, h=h)
    assert err < tol, f"max relative gradient error {err:.2e}"


def arr(rng, *shape):
    return rng.standard_normal(shape)


@pytest.fixture(autouse=True)
def double_precision():
    with E.precision("double"):
        yield


# -- forward semantics ---------------------------------------------------------

def test_softmax_symmetry():
    out = E.softmax(E.tensor([0.0, 0.0, 0.0]))
    assert np.allclose(out.data, [1 / 3] * 3)


def test_matmul_identity():
    a = np.random.default_rng(0).standard_normal((3, 4))
    out = E.matmul(E.tensor(np.eye(3)), E.tensor(a))
    assert np.allclose(out.data, a)


def test_layer_norm_constant_vector():
    out = E.layer_norm(E.tensor(np.full((2, 8), 3.7)))
    assert np.abs(out.data).max() < 1e-6


def test_masked_softmax_exact_zeros():
    x = E.tensor([[1.0, 2.0, 3.0]])
    mask = np.array([[True, False, True]])
    p = E.softmax(x, mask=mask)
    assert p.data[0, 1] == 0.0
    assert np.isclose(p.data.sum(), 1.0)


def test_no_general_broadcast():
    with pytest.raises(ShapeMismatch):
        E.add(E.tensor(np.zeros((3, 1, 4))), E.tensor(np.zeros((3, 5, 2))))


def test_nonfinite_surfaces_eagerly():
    with pytest.raises(NonFinite):
        E.exp(E.tensor([1000.0]))
    with pytest.raises(NonFinite):
        E.tensor([np.inf])


def test_forward_determinism():
    rng = np.random.default_rng(1)
    x = E.param(arr(rng, 6, 6))
    w = E.param(arr(rng, 6, 6))
    a = E.softmax(E.matmul(x, w)).data
    b = E.softmax(E.matmul(x, w)).data
    assert np.array_equal(a, b)


# -- backward vs central differences, op by op ----------------------------------

def test_grad_add_bias_broadcast(rng):
    x = E.param(arr(rng, 5, 4))
    b = E.param(arr(rng, 4))
    ad_vs_fd(lambda: E.sum_(E.mul(E.add(x, b), E.add(x, b))), [x, b])


def test_grad_sub_mul(rng):
    x = E.param(arr(rng, 3, 4))
    y = E.param(arr(rng, 3, 4))
    ad_vs_fd(lambda: E.mean(E.mul(E.sub(x, y), x)), [x, y])


def test_grad_matmul_2d(rng):
    a = E.param(arr(rng, 4, 3))
    b = E.param(arr(rng, 3, 5))
    ad_vs_fd(lambda: E.sum_(E.mul(E.matmul(a, b), E.matmul(a, b))), [a, b])


def test_grad_matmul_batched(rng):
    a = E.param(arr(rng, 2, 4, 3))
    b = E.param(arr(rng, 3, 5))
    ad_vs_fd(lambda: E.mean(E.mul(E.matmul(a, b), E.matmul(a, b))), [a, b])
    c = E.param(arr(rng, 2, 3, 5))
    ad_vs_fd(lambda: E.mean(E.mul(E.matmul(a, c), E.matmul(a, c))), [a, c])


def test_grad_affine(rng):
    x = E.param(arr(rng, 6, 3))
    w = E.param(arr(rng, 3, 4))
    b = E.param(arr(rng, 4))
    ad_vs_fd(lambda: E.mean(E.mul(E.affine(x, w, b), E.affine(x, w, b))), [x, w, b])


def test_grad_reshape_transpose_narrow_concat(rng):
    x = E.param(arr(rng, 4, 6))
    y = E.param(arr(rng, 2, 6))

    def f():
        t = E.transpose(E.reshape(x, (2, 2, 6)), (1, 0, 2))
        s = E.narrow(E.concat([E.reshape(t, (4, 6)), y], axis=0), 0, 1, 4)
        return E.sum_(E.mul(s, s))

    ad_vs_fd(f, [x, y])


def test_grad_reductions(rng):
    x = E.param(arr(rng, 3, 5))
    ad_vs_fd(lambda: E.sum_(E.mul(E.mean(x, axis=0, keepdims=True), E.mean(x, axis=0, keepdims=True))), [x])
    ad_vs_fd(lambda: E.mul(E.sum_(E.mul(x, x)), 0.5), [x])


def test_grad_softmax_masked(rng):
    x = E.param(arr(rng, 2, 6))
    mask = np.array([[True, True, False, True, True, True],
                     [True, True, True, True, False, True]])
    w = arr(rng, 2, 6)
    ad_vs_fd(lambda: E.sum_(E.mul(E.softmax(x, mask=mask), E.tensor(w))), [x])


def test_grad_layer_norm(rng):
    x = E.param(arr(rng, 4, 8))
    w = arr(rng, 4, 8)
    ad_vs_fd(lambda: E.sum_(E.mul(E.layer_norm(x), E.tensor(w))), [x])


def test_grad_silu_exp_logsigmoid(rng):
    x = E.param(arr(rng, 3, 4))
    ad_vs_fd(lambda: E.sum_(E.silu(x)), [x])
    ad_vs_fd(lambda: E.sum_(E.exp(E.mul(x, 0.3))), [x])
    ad_vs_fd(lambda: E.sum_(E.logsigmoid(x)), [x])


def test_grad_clip_minimum(rng):
    x = E.param(arr(rng, 8))
    y = E.param(arr(rng, 8))
    ad_vs_fd(lambda: E.sum_(E.clip(x, -0.5, 0.5)), [x], h=1e-7)
    ad_vs_fd(lambda: E.sum_(E.mul(E.minimum(x, y), E.minimum(x, y))), [x, y], h=1e-7)


def test_grad_embedding(rng):
    table = E.param(arr(rng, 7, 4))
    ids = np.array([1, 3, 3, 0])
    ad_vs_fd(lambda: E.sum_(E.mul(E.embedding_lookup(table, ids),
                                  E.embedding_lookup(table, ids))), [table])


def test_grad_rope(rng):
    x = E.param(arr(rng, 2, 5, 8))
    pos = np.arange(5)
    w = arr(rng, 2, 5, 8)
    ad_vs_fd(lambda: E.sum_(E.mul(E.rope(x, pos, 100.0), E.tensor(w))), [x])


def test_grad_joint_attention(rng):
    q = E.param(arr(rng, 2, 12, 6))
    k = E.param(arr(rng, 2, 12, 6))
    v = E.param(arr(rng, 2, 12, 6))

    def f():
        out = E.joint_attention(q, k, v, 3, 2, block=4)
        return E.sum_(E.mul(out, out))

    ad_vs_fd(f, [q, k, v])


@settings(max_examples=15, deadline=None)
@given(st.integers(1, 4), st.integers(1, 5), st.integers(0, 4), st.integers(2, 6))
def test_grad_joint_attention_shapes(n_text, n_motion, radius, dh):
    rng = np.random.default_rng(n_text * 100 + n_motion * 10 + radius)
    s = n_text + n_motion
    q = E.param(rng.standard_normal((1, s, dh * 2)))
    k = E.param(rng.standard_normal((1, s, dh * 2)))
    v = E.param(rng.standard_normal((1, s, dh * 2)))

    def f():
        out = E.joint_attention(q, k, v, n_text, radius, block=3)
        return E.sum_(E.mul(out, out))

    ad_vs_fd(f, [q, k, v], tol=2e-5)


def test_joint_attention_matches_dense_reference(rng):
    from motionflow.model import build_mask
    h, m, n, dh, radius = 2, 3, 17, 8, 4
    s = m + n
    q, k, v = (E.tensor(arr(rng, h, s, dh)) for _ in range(3))
    fused = E.joint_attention(q, k, v, m, radius, block=5)
    mask = build_mask(m, n, radius)
    logits = E.mul(E.matmul(q, E.transpose(k)), 1 / np.sqrt(dh))
    dense = E.matmul(E.softmax(logits, mask=mask[None]), v)
    assert np.abs(fused.data - dense.data).max() < 1e-12


# -- graph mechanics -------------------------------------------------------------

def test_gradient_accumulation_over_calls(rng):
    x = E.param(arr(rng, 4))
    E.sum_(E.mul(x, x)).backward()
    g1 = x.grad.copy()
    E.sum_(E.mul(x, x)).backward()
    assert np.allclose(x.grad, 2 * g1)


def test_backward_requires_scalar(rng):
    x = E.param(arr(rng, 3))
    with pytest.raises(ShapeMismatch):
        E.mul(x, 2.0).backward()


def test_no_grad_blocks_graph(rng):
    x = E.param(arr(rng, 3))
    with E.no_grad():
        y = E.sum_(E.mul(x, x))
    assert not y.requires_grad


def test_grad_check_detects_nondeterminism(rng):
    x = E.param(arr(rng, 3))
    state = {"k": 0.0}

    def f():
        state["k"] += 1.0
        return E.sum_(E.mul(x, state["k"]))

    with pytest.raises(NonDeterministic):
        E.grad_check(f, [x])


def test_checkpoint_bit_exact_round_trip(tmp_path, rng):
    tensors = {
        "a": rng.standard_normal((3, 4)).astype(np.float32),
        "b": rng.standard_normal(7),
        "c": np.arange(5, dtype=np.int64),
    }
    meta = {"note": "hello", "num": 3}
    path = tmp_path / "state.ckpt"
    E.save_checkpoint(path, tensors, meta)
    back, meta2 = E.load_checkpoint(path)
    assert meta2 == meta
    for k in tensors:
        assert back[k].dtype == tensors[k].dtype
        assert np.array_equal(back[k], tensors[k])


def test_adamw_converges_and_decays(rng):
    x = E.param(np.array([5.0, -3.0]))
    opt = E.AdamW({"x": x}, lr=0.1)
    for _ in range(200):
        opt.zero_grad()
        E.sum_(E.mul(x, x)).backward()
        opt.step()
    assert np.abs(x.data).max() < 1e-2

    y = E.param(np.array([1.0]))
    opt = E.AdamW({"y": y}, lr=0.1, weight_decay=0.5)
    opt.zero_grad()
    E.mul(E.sum_(E.mul(y, 0.0)), 0.0).backward()   # zero gradient; only decay acts
    opt.step()
    assert y.data[0] < 1.0
