import numpy as np
import pytest

import motionflow.engine as E
from motionflow.errors import CheckpointMismatch, ConfigInvalid, ShapeMismatch, UnknownToken
from motionflow.model import (
    Conditioning, ModelConfig, MotionDiT, build_mask, manifest, receptive_field,
    tiny_config,
)


@pytest.fixture(scope="module")
def test_cfg(tokenizer):
    return ModelConfig(d_model=32, n_heads=2, n_dual_blocks=2, n_single_blocks=2,
                       vocab_size=tokenizer.size, time_embed_dim=32, band_radius=3,
                       max_text_tokens=12)


@pytest.fixture(scope="module")
def live_model(test_cfg):
    """Model with randomized gates/output so the deep path is active."""
    model = MotionDiT.create(test_cfg, seed=0)
    rng = np.random.default_rng(42)
    for name, t in model.p.items():
        t.data = (t.data + rng.normal(0, 0.02, t.data.shape)).astype(t.data.dtype)
    return model


# -- masks ------------------------------------------------------------------

def test_build_mask_radius_zero():
    m = build_mask(2, 3, 0)
    assert m.shape == (5, 5)
    for i in range(2, 5):
        allowed = set(np.nonzero(m[i])[0])
        assert allowed == {0, 1, i}
    for i in range(2):
        assert set(np.nonzero(m[i])[0]) == {0, 1}


def test_build_mask_full_band():
    m = build_mask(1, 4, 3)      # radius >= n_motion - 1
    assert m[1:, 1:].all()


def test_build_mask_121_window():
    m = build_mask(1, 300, 60)
    row = m[1 + 150, 1:]
    allowed = np.nonzero(row)[0]
    assert allowed.min() == 90 and allowed.max() == 210
    assert len(allowed) == 121


def test_mask_validation():
    with pytest.raises(ConfigInvalid):
        build_mask(0, 3, 1)


# -- rope ---------------------------------------------------------------------

def test_rope_position_zero_unrotated(rng):
    x = E.tensor(rng.standard_normal((1, 3, 8)))
    out = E.rope(x, np.array([0, 1, 2]), 10000.0)
    assert np.array_equal(out.data[:, 0], x.data[:, 0])


def test_rope_hand_computed_two_dim():
    x = E.tensor(np.array([[[1.0, 0.0]]]))
    out = E.rope(x, np.array([1]), 10000.0)
    assert np.allclose(out.data, [[[np.cos(1.0), np.sin(1.0)]]])


def test_rope_shift_invariance(rng):
    dh = 16
    q = rng.standard_normal((1, 4, dh))
    k = rng.standard_normal((1, 4, dh))
    pos = np.arange(4)

    def logits(offset):
        qr = E.rope(E.tensor(q), pos + offset, 10000.0)
        kr = E.rope(E.tensor(k), pos + offset, 10000.0)
        return (qr.data @ np.swapaxes(kr.data, -1, -2))

    assert np.abs(logits(0) - logits(5)).max() < 1e-5


def test_rope_odd_head_dim():
    from motionflow.errors import OddHeadDim
    with pytest.raises(OddHeadDim):
        E.rope(E.tensor(np.zeros((1, 2, 5))), np.arange(2), 100.0)


# -- sub-ops ---------------------------------------------------------------------

def test_embed_motion_bias_and_linearity(live_model):
    d = live_model.cfg.d_model
    zero = live_model.embed_motion(np.zeros((1, 201), dtype=np.float32))
    assert np.allclose(zero.data[0], live_model.p["motion_in.b"].data)
    f = np.random.default_rng(0).standard_normal((1, 201)).astype(np.float32)
    e2 = live_model.embed_motion((2 * f).astype(np.float32)).data - zero.data
    e1 = live_model.embed_motion(f).data - zero.data
    assert np.abs(e2 - 2 * e1).max() < 1e-4
    manual = f @ live_model.p["motion_in.w"].data + live_model.p["motion_in.b"].data
    assert np.abs(live_model.embed_motion(f).data - manual).max() < 1e-6


def test_refine_text_shapes_and_errors(live_model):
    out = live_model.refine_text(np.array([3]))
    assert out.shape == (1, live_model.cfg.d_model)
    with pytest.raises(ShapeMismatch):
        live_model.refine_text(np.array([], dtype=np.int64))
    with pytest.raises(UnknownToken):
        live_model.refine_text(np.array([live_model.cfg.vocab_size]))
    with pytest.raises(ShapeMismatch):
        live_model.refine_text(np.arange(live_model.cfg.max_text_tokens + 1))


def test_refine_text_bidirectional(live_model):
    a = live_model.refine_text(np.array([3, 7, 9])).data
    b = live_model.refine_text(np.array([9, 7, 3])).data
    # swapping the outer tokens changes the refined vectors at both positions
    assert np.abs(a[0] - b[0]).max() > 1e-6
    assert np.abs(a[2] - b[2]).max() > 1e-6


def test_adaln_zero_init_identity(test_cfg, tokenizer):
    model = MotionDiT.create(test_cfg, seed=1)
    x = np.random.default_rng(1).standard_normal((6, 201)).astype(np.float32)
    cond = Conditioning(tokenizer.encode("a person walks forward"), 0.5)
    v = model.forward(x, cond)
    assert np.array_equal(v.data, np.zeros_like(v.data))   # output bias, zero-init
    # block identity at init: the deep stream passes through unchanged
    h = E.tensor(np.random.default_rng(2).standard_normal((6, test_cfg.d_model)))
    state = model.encode_text(cond.text_tokens)
    cond_vec = model.cond_vector(0.5, state.global_vec)
    h_out, _ = model._dual_block(0, h, state.refined, cond_vec)
    assert np.array_equal(h_out.data, h.data)


def test_adaln_responds_to_conditioning(live_model, tokenizer):
    d = live_model.cfg.d_model
    h = E.tensor(np.random.default_rng(3).standard_normal((4, d)))
    rng4 = np.random.default_rng(4)
    g = rng4.standard_normal(d)
    g2 = rng4.standard_normal(d)      # different direction, not a uniform shift
    a = live_model.adaln(h, 0.2, g).data
    b = live_model.adaln(h, 0.9, g).data
    c = live_model.adaln(h, 0.2, g2).data
    assert np.abs(a - b).max() > 1e-7
    assert np.abs(a - c).max() > 1e-7


def test_timestep_validation(live_model, tokenizer):
    x = np.zeros((3, 201), dtype=np.float32)
    with pytest.raises(ConfigInvalid):
        live_model.forward(x, Conditioning(tokenizer.encode("walk"), 1.5))


# -- isolation and locality -------------------------------------------------------

def test_text_isolation_bit_exact(live_model, tokenizer):
    tokens = tokenizer.encode("a person walks forward")
    state = live_model.encode_text(tokens)
    cond_vec = live_model.cond_vector(0.3, state.global_vec)
    rng = np.random.default_rng(5)
    x1 = rng.standard_normal((8, 201)).astype(np.float32)
    x2 = rng.standard_normal((8, 201)).astype(np.float32)

    def text_trace(x):
        h_m = live_model.embed_motion(x)
        h_t = state.refined
        trace = []
        for i in range(live_model.cfg.n_dual_blocks):
            h_m, h_t = live_model._dual_block(i, h_m, h_t, cond_vec)
            trace.append(h_t.data.copy())
        seq = E.concat([h_t, h_m], axis=0)
        m = h_t.shape[0]
        for i in range(live_model.cfg.n_single_blocks):
            seq = live_model._single_block(i, seq, cond_vec, m)
            trace.append(seq.data[:m].copy())
        return trace

    for a, b in zip(text_trace(x1), text_trace(x2)):
        assert np.array_equal(a, b)


def test_band_locality_exact(live_model, tokenizer):
    cfg = live_model.cfg
    n = 30
    field = receptive_field(cfg.n_dual_blocks + cfg.n_single_blocks, cfg.band_radius)
    assert field < n - 2
    tokens = tokenizer.encode("a person walks forward")
    rng = np.random.default_rng(6)
    x = rng.standard_normal((n, 201)).astype(np.float32)
    cond = Conditioning(tokens, 0.4)
    with E.no_grad():
        base = live_model.forward(x, cond).data
        x2 = x.copy()
        x2[0] += 1.0
        moved = live_model.forward(x2, cond).data
    delta = np.abs(moved - base).max(axis=1)
    assert delta[: field + 1].max() > 0
    assert np.array_equal(delta[field + 1:], np.zeros(n - field - 1))


# -- persistence --------------------------------------------------------------------

def test_manifest_and_param_count(test_cfg):
    shapes = manifest(test_cfg)
    model = MotionDiT.create(test_cfg, seed=0)
    assert set(shapes) == set(model.p)
    assert model.n_params() == sum(int(np.prod(s)) for s in shapes.values())


def test_checkpoint_round_trip_and_mismatch(tmp_path, live_model, tokenizer):
    path = tmp_path / "m.ckpt"
    live_model.save(path, extra_tensors={"norm.mean": np.zeros(201)}, meta={"vocab": tokenizer.vocab})
    back, meta, extra = MotionDiT.load(path)
    assert meta["vocab"] == tokenizer.vocab
    assert "norm.mean" in extra
    x = np.random.default_rng(7).standard_normal((5, 201)).astype(np.float32)
    cond = Conditioning(tokenizer.encode("a person jumps once"), 0.6)
    with E.no_grad():
        assert np.array_equal(live_model.forward(x, cond).data, back.forward(x, cond).data)

    bad = {k: t.data for k, t in live_model.p.items()}
    bad["motion_in.w"] = bad["motion_in.w"][:, :-1]
    E.save_checkpoint(tmp_path / "bad.ckpt", bad, {"model_config": live_model.cfg.to_dict()})
    with pytest.raises(CheckpointMismatch):
        MotionDiT.load(tmp_path / "bad.ckpt")


def test_config_validation():
    with pytest.raises(ConfigInvalid):
        ModelConfig(d_model=30, n_heads=4)
    with pytest.raises(ConfigInvalid):
        ModelConfig(band_radius=-1)
    assert tiny_config().d_model == 128
