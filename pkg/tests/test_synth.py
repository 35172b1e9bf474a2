import numpy as np
import pytest

from motionflow.clip import recompute_positions
from motionflow.curation import (
    FilterConfig, detect_static, displacement_anomaly, foot_slide_score,
    run_pipeline, velocity_outliers,
)
from motionflow.errors import EmptyPrompt, InvalidSpec
from motionflow.skeleton import L_WRIST, R_WRIST
from motionflow.synth import (
    ActionSpec, CLASS_NAMES, TAXONOMY, all_training_captions, generate_clip,
    heldout_prompts, normalize_prompt, plant_defect, predict_duration,
)

DYNAMIC_CLASSES = [c for c in CLASS_NAMES if c != "idle"]


def test_determinism_per_spec_seed(skeleton):
    a, cap_a, _ = generate_clip(ActionSpec("run", seed=9), skeleton)
    b, cap_b, _ = generate_clip(ActionSpec("run", seed=9), skeleton)
    assert np.array_equal(a.frames, b.frames)
    assert cap_a == cap_b
    c, _, _ = generate_clip(ActionSpec("run", seed=10), skeleton)
    assert not np.array_equal(a.frames, c.frames)


def test_invalid_specs(skeleton):
    with pytest.raises(InvalidSpec):
        generate_clip(ActionSpec("moonwalk"), skeleton)
    with pytest.raises(InvalidSpec):
        generate_clip(ActionSpec("walk", duration=0.2), skeleton)


def test_positions_fk_consistent_all_classes(skeleton):
    for cls in CLASS_NAMES:
        clip, _, _ = generate_clip(ActionSpec(cls, seed=1), skeleton)
        rebuilt = recompute_positions(clip, skeleton)
        assert np.abs(rebuilt.frames - clip.frames).max() < 1e-5, cls


def test_idle_is_static(skeleton):
    clip, _, _ = generate_clip(ActionSpec("idle", seed=2), skeleton)
    assert detect_static(clip, 0.02, 0.9)


def test_walk_travels_commanded_distance(skeleton):
    spec = ActionSpec("walk", duration=4.0, seed=3, params={"v": 1.2})
    clip, _, _ = generate_clip(spec, skeleton)
    assert abs(clip.frames[-1, 2] - 4.8) < 4.8 * 0.05


def test_wave_side_encoded_in_motion(skeleton):
    left, _, _ = generate_clip(ActionSpec("wave_left", seed=4), skeleton)
    right, _, _ = generate_clip(ActionSpec("wave_right", seed=4), skeleton)
    lw = left.world_positions()[:, L_WRIST, 1]
    rw = left.world_positions()[:, R_WRIST, 1]
    assert lw.max() - lw.min() > rw.max() - rw.min()
    lw2 = right.world_positions()[:, L_WRIST, 1]
    rw2 = right.world_positions()[:, R_WRIST, 1]
    assert rw2.max() - rw2.min() > lw2.max() - lw2.min()


def test_captions_bind_side(skeleton):
    _, cap_l, _ = generate_clip(ActionSpec("wave_left", seed=5), skeleton)
    _, cap_r, _ = generate_clip(ActionSpec("wave_right", seed=5), skeleton)
    assert "left" in cap_l and "right" in cap_r


def test_dynamic_classes_pass_default_pipeline(skeleton):
    clips = []
    for cls in DYNAMIC_CLASSES:
        for s in (0, 1):
            c, _, _ = generate_clip(ActionSpec(cls, seed=s), skeleton)
            c.meta["id"] = f"{cls}-{s}"
            clips.append(c)
    kept, reports = run_pipeline(clips, FilterConfig())
    rejected = [r for r in reports if r.verdict == "rejected"]
    assert not rejected, [(r.clip_id, [t.name for t in r.triggered]) for r in rejected]


# -- defect injection ---------------------------------------------------------

def test_jitter_zero_magnitude_is_identity(skeleton):
    clip, _, _ = generate_clip(ActionSpec("walk", seed=6), skeleton)
    out = plant_defect(clip, "jitter", 0.0, seed=3)
    assert np.array_equal(out.frames, clip.frames)


def test_slide_magnitude_sets_score(skeleton):
    clip, _, _ = generate_clip(ActionSpec("wave_left", seed=7), skeleton)
    slid = plant_defect(clip, "slide", 1.0, seed=3)
    score = foot_slide_score(slid)
    assert 0.9 < score < 1.3


def test_teleport_single_displacement_anomaly(skeleton):
    clip, _, _ = generate_clip(ActionSpec("squat", seed=8), skeleton)
    tele = plant_defect(clip, "teleport", 0.5, seed=3)
    frames = displacement_anomaly(tele, 0.2)
    assert frames == [clip.n_frames // 2 - 1]
    assert len(velocity_outliers(tele, 10.0)) > 0


def test_freeze_triggers_reverse_static(skeleton):
    clip, _, _ = generate_clip(ActionSpec("walk", seed=9), skeleton)
    frozen = plant_defect(clip, "freeze", 0.95, seed=3)
    rev = frozen.with_frames(frozen.frames[::-1].copy())
    assert detect_static(rev, 0.02, 0.9)
    assert not detect_static(frozen, 0.02, 0.9)


@pytest.mark.parametrize("kind,metric", [
    ("jitter", lambda c: max((j for j, _ in velocity_outliers(c, 0.0)), default=0)),
    ("slide", foot_slide_score),
])
def test_defect_metric_monotone_in_magnitude(skeleton, kind, metric):
    clip, _, _ = generate_clip(ActionSpec("wave_right", seed=10), skeleton)

    def measured(mag):
        d = plant_defect(clip, kind, mag, seed=5)
        if kind == "jitter":
            pos = d.world_positions()
            return float((np.linalg.norm(np.diff(pos, axis=0), axis=-1) * d.fps).max())
        return metric(d)

    vals = [measured(m) for m in (0.25, 0.5, 1.0, 2.0)]
    assert all(a < b for a, b in zip(vals, vals[1:]))


def test_unknown_defect_kind(skeleton):
    clip, _, _ = generate_clip(ActionSpec("walk", seed=11), skeleton)
    with pytest.raises(InvalidSpec):
        plant_defect(clip, "meltdown", 1.0)


# -- duration prediction and prompt normalization -------------------------------

def test_duration_table_lookup():
    seconds, low_conf = predict_duration("a person jumps once")
    assert seconds == TAXONOMY["jump"].duration == 1.5
    assert not low_conf


def test_duration_explicit_override():
    seconds, _ = predict_duration("walk forward for 5 seconds")
    assert seconds == 5.0
    seconds, _ = predict_duration("walk forward for 2.5 s")
    assert seconds == 2.5


def test_duration_fallback_low_confidence():
    seconds, low_conf = predict_duration("do something cool")
    assert seconds == 4.0
    assert low_conf


def test_normalize_prompt_synonyms_and_sides():
    assert normalize_prompt("someone strolls ahead").class_id == "walk"
    assert normalize_prompt("a man jogs quickly").class_id == "run"
    assert normalize_prompt("please hop now").class_id == "jump"
    assert normalize_prompt("wave your right hand").class_id == "wave_right"
    assert normalize_prompt("wave the left arm").class_id == "wave_left"
    assert normalize_prompt("a person crouches low").class_id == "squat"


def test_normalize_prompt_compositions():
    n = normalize_prompt("a person walks forward then waves the left hand")
    assert n.class_id == "walk_then_wave_left"
    n = normalize_prompt("someone crouches and then leaps")
    assert n.class_id == "squat_then_jump"


def test_normalize_prompt_empty():
    with pytest.raises(EmptyPrompt):
        normalize_prompt("   ")


def test_taxonomy_paraphrase_counts():
    for cls in TAXONOMY.values():
        assert len(cls.templates) >= 3
        assert len(cls.heldout) >= 1
    for cls in CLASS_NAMES:
        assert heldout_prompts(cls)
    assert len(all_training_captions()) > 30
