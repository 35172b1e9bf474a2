import numpy as np
import pytest

from motionflow.clip import MotionClip, assemble_frames
from motionflow.curation import (
    FilterConfig, clip_distance, dedupe, detect_static, displacement_anomaly,
    foot_slide_score, load_reports, pose_violations, run_pipeline, save_reports,
    velocity_outliers,
)
from motionflow.errors import ConfigInvalid
from motionflow.rotations import identity_rot6d, matrix_to_rot6d, rot6d_to_matrix, rot_x, rot_y
from motionflow.skeleton import FOOT_JOINTS, fk_positions
from motionflow.synth import ActionSpec, generate_clip, plant_defect


def _static_clip(skeleton, n=60):
    trans = np.tile([0.0, 0.9, 0.0], (n, 1))
    root6 = np.tile(identity_rot6d(), (n, 1))
    j6 = np.tile(identity_rot6d((21,)), (n, 1, 1))
    pos = fk_positions(root6, j6, skeleton)
    return MotionClip(fps=30, frames=assemble_frames(trans, root6, np.broadcast_to(j6, (n, 21, 6)), np.broadcast_to(pos, (n, 22, 3))))


def _feet_on_ground_clip(skeleton, n=31, travel=0.0):
    """Both feet at world Y=0; root translates `travel` meters in Z."""
    c = _static_clip(skeleton, n)
    f = c.frames.copy()
    f[:, 2] = np.linspace(0.0, travel, n)
    pos = f[:, 135:201].reshape(n, 22, 3)
    for j in FOOT_JOINTS:
        pos[:, j, 1] = -f[:, 1]     # world y = trans_y + rel_y = 0
    f[:, 135:201] = pos.reshape(n, 66)
    return c.with_frames(f)


def test_velocity_outliers_static_and_planted(skeleton):
    assert velocity_outliers(_static_clip(skeleton), 10.0) == []
    clip, _, _ = generate_clip(ActionSpec("walk", seed=0), skeleton)
    assert velocity_outliers(clip, 10.0) == []
    f = clip.frames.copy()
    k = 12
    pos = f[:, 135:201].reshape(clip.n_frames, 22, 3)
    pos[k:, 5] += 1.0    # one joint teleports 1 m: 30 m/s at 30 fps
    f[:, 135:201] = pos.reshape(clip.n_frames, 66)
    out = velocity_outliers(clip.with_frames(f), 10.0)
    assert (5, k - 1) in out
    assert all(j == 5 for j, _ in out)


def test_detect_static_cases(skeleton):
    assert detect_static(_static_clip(skeleton), 0.02, 0.9)
    walk, _, _ = generate_clip(ActionSpec("walk", seed=1), skeleton)
    assert not detect_static(walk, 0.02, 0.9)
    # 95% frozen, 5% moving
    c = _static_clip(skeleton, 100)
    f = c.frames.copy()
    f[95:, 0] += np.linspace(0.1, 0.5, 5)
    assert detect_static(c.with_frames(f), 0.02, 0.9)
    assert not detect_static(c.with_frames(f), 0.02, 0.96)


def test_foot_slide_analytic(skeleton):
    planted = _feet_on_ground_clip(skeleton, travel=0.0)
    assert foot_slide_score(planted) == 0.0
    skating = _feet_on_ground_clip(skeleton, n=31, travel=1.0)
    assert abs(foot_slide_score(skating) - 1.0) < 1e-9
    # airborne travel does not count
    jumpy = _feet_on_ground_clip(skeleton, n=31, travel=1.0)
    f = jumpy.frames.copy()
    pos = f[:, 135:201].reshape(31, 22, 3)
    for j in FOOT_JOINTS:
        pos[1:-1, j, 1] += 0.5      # feet high above contact band mid-flight
    f[:, 135:201] = pos.reshape(31, 66)
    assert foot_slide_score(jumpy.with_frames(f)) < 0.08


def test_foot_slide_zero_when_never_grounded(skeleton):
    c = _static_clip(skeleton)
    f = c.frames.copy()
    f[:, 1] += 1.0    # whole body lifted: feet never below contact height
    f[:, 2] = np.linspace(0, 2.0, c.n_frames)
    assert foot_slide_score(c.with_frames(f)) == 0.0


def test_displacement_anomaly_trio(skeleton):
    assert displacement_anomaly(_static_clip(skeleton), 0.2) == []
    walk, _, _ = generate_clip(ActionSpec("walk", seed=2), skeleton)
    assert displacement_anomaly(walk, 0.2) == []
    f = walk.frames.copy()
    f[20:, 0] += 0.5
    assert displacement_anomaly(walk.with_frames(f), 0.2) == [19]


def test_pose_violations(skeleton):
    clip, _, _ = generate_clip(ActionSpec("squat", seed=3), skeleton)
    assert pose_violations(clip, 170.0) == []
    f = clip.frames.copy()
    bent = matrix_to_rot6d(rot_x(np.radians(175.0)))
    f[10, 9 + 6 * 3: 9 + 6 * 4] = bent    # joint 4 swings 175 degrees
    out = pose_violations(clip.with_frames(f), 170.0)
    assert (4, 10) in out


def test_dedupe_identical_and_noise(skeleton):
    a, _, _ = generate_clip(ActionSpec("walk", seed=4), skeleton)
    b = a.with_frames(a.frames.copy())
    noisy = a.with_frames(a.frames + 1e-6)
    wave, _, _ = generate_clip(ActionSpec("wave_left", seed=4), skeleton)
    kept, dup = dedupe([a, b, noisy, wave], 0.01)
    assert kept == [0, 3]
    assert dup == {1: 0, 2: 0}
    # oracle distance: walk vs wave are far apart
    assert clip_distance(a, wave) > 0.1


def test_run_pipeline_empty_and_invalid():
    kept, reports = run_pipeline([], FilterConfig())
    assert kept == [] and reports == []
    with pytest.raises(ConfigInvalid):
        run_pipeline([], FilterConfig(vel_max=-1.0))


def test_run_pipeline_order_insensitive_verdicts(skeleton):
    clips = []
    for i, cls in enumerate(["walk", "run", "squat", "wave_left"]):
        c, _, _ = generate_clip(ActionSpec(cls, seed=i), skeleton)
        c.meta["id"] = cls
        clips.append(c)
    clips.append(plant_defect(clips[0], "teleport", 0.5, seed=0))
    clips[-1].meta["id"] = "bad"
    cfg = FilterConfig()
    _, r1 = run_pipeline(clips, cfg)
    _, r2 = run_pipeline(clips[::-1], cfg)
    verdicts1 = {r.clip_id: r.verdict for r in r1}
    verdicts2 = {r.clip_id: r.verdict for r in r2}
    assert verdicts1 == verdicts2


def test_filters_invariant_to_y_rotation(skeleton):
    clip, _, _ = generate_clip(ActionSpec("walk", seed=5), skeleton)
    r = rot_y(0.8)
    f = clip.frames.copy()
    n = clip.n_frames
    f[:, 0:3] = f[:, 0:3] @ r.T
    f[:, 3:9] = matrix_to_rot6d(r[None] @ rot6d_to_matrix(f[:, 3:9]))
    f[:, 135:201] = (f[:, 135:201].reshape(n, 22, 3) @ r.T).reshape(n, 66)
    rotated = clip.with_frames(f)
    assert abs(foot_slide_score(clip) - foot_slide_score(rotated)) < 1e-6
    pos_a = clip.world_positions()
    pos_b = rotated.world_positions()
    va = (np.linalg.norm(np.diff(pos_a, axis=0), axis=-1) * clip.fps).max()
    vb = (np.linalg.norm(np.diff(pos_b, axis=0), axis=-1) * clip.fps).max()
    assert abs(va - vb) < 1e-6
    assert detect_static(clip, 0.02, 0.9) == detect_static(rotated, 0.02, 0.9)


def test_reports_round_trip(tmp_path, skeleton):
    clips = [plant_defect(generate_clip(ActionSpec("walk", seed=6), skeleton)[0], "slide", 1.0)]
    clips[0].meta["id"] = "slider"
    _, reports = run_pipeline(clips, FilterConfig())
    path = tmp_path / "reports.jsonl"
    save_reports(reports, path)
    back = load_reports(path)
    assert back[0].clip_id == "slider"
    assert back[0].verdict == "rejected"
    assert any(t.name == "slide" for t in back[0].triggered)
    assert all(t.value > t.threshold for t in back[0].triggered if t.name == "slide")
