import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from motionflow.clip import (
    FRAME_DIM, Frame, MotionClip, assemble_frames, canonicalize, load_clip,
    recompute_positions, resample, save_clip, segment,
)
from motionflow.errors import ConfigInvalid, DegenerateFacing, IoError, TooShort
from motionflow.rotations import identity_rot6d, matrix_to_rot6d, rot6d_to_matrix, rot_y
from motionflow.skeleton import fk_positions
from motionflow.synth import ActionSpec, generate_clip


def _straight_clip(skeleton, n=40, v=1.2, fps=30.0):
    trans = np.stack([np.zeros(n), np.full(n, 0.9), v * np.arange(n) / fps], axis=1)
    root6 = np.tile(identity_rot6d(), (n, 1))
    j6 = np.tile(identity_rot6d((21,)), (n, 1, 1))
    pos = fk_positions(root6, j6, skeleton)
    return MotionClip(fps=fps, frames=assemble_frames(trans, root6, j6, pos))


def _rigid_transform(clip, angle, offset_xz):
    r = rot_y(angle)
    f = clip.frames.copy()
    n = clip.n_frames
    f[:, 0:3] = f[:, 0:3] @ r.T + np.array([offset_xz[0], 0.0, offset_xz[1]])
    f[:, 3:9] = matrix_to_rot6d(r[None] @ rot6d_to_matrix(f[:, 3:9]))
    f[:, 135:201] = (f[:, 135:201].reshape(n, 22, 3) @ r.T).reshape(n, 66)
    return clip.with_frames(f)


def test_frame_layout_round_trip():
    v = np.arange(FRAME_DIM, dtype=float)
    f = Frame.from_vector(v)
    assert f.joint_rotations.shape == (21, 6)
    assert f.joint_positions.shape == (22, 3)
    assert np.array_equal(f.to_vector(), v)


def test_clip_invariants(skeleton):
    c = _straight_clip(skeleton)
    with pytest.raises(TooShort):
        MotionClip(fps=30, frames=c.frames[:1])
    with pytest.raises(ConfigInvalid):
        MotionClip(fps=0, frames=c.frames)


def test_canonicalize_postconditions(skeleton):
    c = _rigid_transform(_straight_clip(skeleton), 1.1, (4.0, -2.0))
    cc = canonicalize(c, skeleton)
    assert abs(cc.frames[0, 0]) < 1e-9 and abs(cc.frames[0, 2]) < 1e-9
    assert abs(cc.world_positions()[:, :, 1].min()) < 1e-6
    # frame-0 heading along +Z
    pos0 = cc.joint_positions()[0]
    fwd = np.cross(pos0[1] - pos0[2], [0, 1, 0])
    assert abs(fwd[0]) < 1e-6 and fwd[2] > 0


def test_canonicalize_idempotent(skeleton):
    cc = canonicalize(_straight_clip(skeleton), skeleton)
    again = canonicalize(cc, skeleton)
    assert np.abs(again.frames - cc.frames).max() < 1e-6


@settings(max_examples=20, deadline=None)
@given(st.floats(-3.0, 3.0), st.floats(-5.0, 5.0), st.floats(-5.0, 5.0))
def test_canonicalize_rigid_invariance(angle, ox, oz):
    from motionflow.skeleton import load_default_skeleton
    skeleton = load_default_skeleton()
    base = canonicalize(_straight_clip(skeleton), skeleton)
    moved = canonicalize(_rigid_transform(base, angle, (ox, oz)), skeleton)
    assert np.abs(moved.frames - base.frames).max() < 1e-5


def test_degenerate_facing(skeleton):
    c = _straight_clip(skeleton)
    f = c.frames.copy()
    pos = f[:, 135:201].reshape(c.n_frames, 22, 3)
    pos[:, 1] = pos[:, 2] + np.array([0.0, 0.5, 0.0])   # hips vertically stacked
    f[:, 135:201] = pos.reshape(c.n_frames, 66)
    with pytest.raises(DegenerateFacing):
        canonicalize(c.with_frames(f), skeleton)


def test_resample_identity(skeleton):
    c = _straight_clip(skeleton)
    assert np.array_equal(resample(c, 30.0).frames, c.frames)


def test_resample_decimation(skeleton):
    c = _straight_clip(skeleton, n=41, fps=60.0)
    half = resample(c, 30.0)
    assert half.n_frames == 21
    assert np.abs(half.frames - c.frames[::2]).max() < 1e-9


def test_resample_linear_translation(skeleton):
    c = _straight_clip(skeleton, n=25, v=1.0, fps=24.0)
    up = resample(c, 30.0)
    t = np.arange(up.n_frames) / 30.0
    assert np.abs(up.frames[:, 2] - t).max() < 1e-6


def test_resample_too_short(skeleton):
    c = _straight_clip(skeleton, n=3, fps=30.0)
    with pytest.raises(TooShort):
        resample(c, 1.0)


def test_segment_short_clip_unchanged(skeleton):
    c = _straight_clip(skeleton, n=240)   # 8 s
    segs = segment(c, 12.0, skeleton, recanonicalize=False)
    assert len(segs) == 1
    assert np.array_equal(segs[0].frames, c.frames)


def test_segment_twelve_second_chunks(skeleton):
    base = _straight_clip(skeleton, n=720)   # 24 s at 30 fps
    segs = segment(base, 12.0, skeleton, recanonicalize=False)
    assert [s.n_frames for s in segs] == [360, 360]
    base = _straight_clip(skeleton, n=750)   # 25 s
    segs = segment(base, 12.0, skeleton, recanonicalize=False)
    assert [s.n_frames for s in segs] == [360, 360, 30]


def test_segment_never_single_frame_tail(skeleton):
    base = _straight_clip(skeleton, n=721)
    segs = segment(base, 12.0, skeleton, recanonicalize=False)
    assert [s.n_frames for s in segs] == [360, 359, 2]
    assert np.array_equal(np.concatenate([s.frames for s in segs]), base.frames)


def test_segment_concatenation_exact(skeleton):
    base = _straight_clip(skeleton, n=500)
    segs = segment(base, 5.0, skeleton, recanonicalize=False)
    assert np.array_equal(np.concatenate([s.frames for s in segs]), base.frames)
    recanon = segment(base, 5.0, skeleton, recanonicalize=True)
    for s in recanon:
        assert abs(s.frames[0, 0]) < 1e-9 and abs(s.frames[0, 2]) < 1e-9


def test_json_round_trip(tmp_path, skeleton):
    c = _straight_clip(skeleton)
    c.meta["label"] = "demo"
    path = tmp_path / "clip.json"
    save_clip(c, path)
    back = load_clip(path)
    assert np.array_equal(back.frames, c.frames)
    assert back.fps == c.fps
    assert back.meta["label"] == "demo"


def test_json_version_check(tmp_path, skeleton):
    path = tmp_path / "clip.json"
    save_clip(_straight_clip(skeleton), path)
    import json
    obj = json.loads(path.read_text())
    obj["version"] = 99
    path.write_text(json.dumps(obj))
    with pytest.raises(IoError):
        load_clip(path)


def test_generated_positions_match_fk(skeleton):
    clip, _, _ = generate_clip(ActionSpec("walk", seed=4), skeleton)
    rebuilt = recompute_positions(clip, skeleton)
    assert np.abs(rebuilt.frames - clip.frames).max() < 1e-5
