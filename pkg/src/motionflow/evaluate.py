"""Oracle-based evaluation of a trained checkpoint, plus clip export."""
from __future__ import annotations

import csv
import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .clip import FRAME_DIM, MotionClip, canonicalize, load_clip, save_clip
from .curation import foot_slide_score
from .errors import IoError, UnknownAction
from .flow import Normalizer
from .model import MotionDiT, Tokenizer
from .sampling import SamplerConfig, sample_ode
from .skeleton import Skeleton, load_default_skeleton
from .synth import TAXONOMY, normalize_prompt, predict_duration


def jitter_score(c: MotionClip) -> float:
    """Mean squared second difference of world joint positions, times fps^2."""
    pos = c.world_positions()
    if c.n_frames < 3:
        return 0.0
    d2 = pos[2:] - 2.0 * pos[1:-1] + pos[:-2]
    return float((d2 ** 2).mean() * c.fps ** 2)


@dataclass
class EvalRecord:
    prompt: str
    class_id: str
    category: str
    hit: bool
    predicted_class: str
    foot_slide: float
    jitter: float
    duration_error: float
    pred_duration: float
    n_frames: int

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EvalReport:
    records: list[EvalRecord] = field(default_factory=list)

    def aggregates(self) -> dict:
        out: dict = {"overall": self._agg(self.records)}
        for cat in sorted({r.category for r in self.records}):
            out[cat] = self._agg([r for r in self.records if r.category == cat])
        return out

    @staticmethod
    def _agg(records: list[EvalRecord]) -> dict:
        if not records:
            return {"count": 0}
        return {
            "count": len(records),
            "oracle_accuracy": float(np.mean([r.hit for r in records])),
            "mean_foot_slide": float(np.mean([r.foot_slide for r in records])),
            "mean_jitter": float(np.mean([r.jitter for r in records])),
            "mean_duration_error": float(np.mean([r.duration_error for r in records])),
        }

    def to_dict(self) -> dict:
        return {"records": [r.to_dict() for r in self.records],
                "aggregates": self.aggregates()}

    def save(self, path) -> None:
        try:
            with open(path, "w") as f:
                json.dump(self.to_dict(), f, sort_keys=True, indent=1)
        except OSError as e:
            raise IoError(f"cannot write report to {path}: {e}") from e


def evaluate_model(model: MotionDiT, normalizer: Normalizer, tokenizer: Tokenizer,
                   prompts: list[str], oracle, seed: int = 0, n_steps: int = 16,
                   skeleton: Skeleton | None = None) -> EvalReport:
    """Sample one clip per prompt and score class hit + quality metrics."""
    skeleton = skeleton or load_default_skeleton()
    report = EvalReport()
    for i, prompt in enumerate(prompts):
        norm_prompt = normalize_prompt(prompt)
        if norm_prompt.class_id is None:
            raise UnknownAction(f"prompt {prompt!r} is outside the taxonomy")
        cls = norm_prompt.class_id
        seconds, _ = predict_duration(prompt)
        n_frames = int(np.clip(round(seconds * 30.0), 16, 360))
        cfg = SamplerConfig(n_steps=n_steps, seed=seed * 100003 + i)
        clip = sample_ode(model, tokenizer.encode(prompt), n_frames, cfg,
                          normalizer=normalizer, skeleton=skeleton,
                          meta={"prompt": prompt})
        clip = canonicalize(clip, skeleton)
        probs = oracle.class_probs(clip)
        predicted = oracle.classes[int(np.argmax(probs))]
        report.records.append(EvalRecord(
            prompt=prompt,
            class_id=cls,
            category=TAXONOMY[cls].category,
            hit=predicted == cls,
            predicted_class=predicted,
            foot_slide=foot_slide_score(clip),
            jitter=jitter_score(clip),
            duration_error=abs(n_frames / clip.fps - seconds),
            pred_duration=seconds,
            n_frames=n_frames,
        ))
    return report


def export_clip(clip: MotionClip, fmt: str, path) -> None:
    """Write a clip as JSON (lossless) or CSV (one row per frame, time first)."""
    if fmt == "json":
        save_clip(clip, path)
    elif fmt == "csv":
        try:
            with open(path, "w", newline="") as f:
                writer = csv.writer(f)
                writer.writerow(["time"] + [f"f{i}" for i in range(FRAME_DIM)])
                for i, row in enumerate(clip.frames):
                    writer.writerow([f"{i / clip.fps:.17g}"] + [f"{v:.17g}" for v in row])
        except OSError as e:
            raise IoError(f"cannot write csv to {path}: {e}") from e
    else:
        raise IoError(f"unknown export format {fmt!r}")


def import_csv(path) -> MotionClip:
    """Read a clip back from the CSV export (fps inferred from the time column)."""
    try:
        with open(path) as f:
            rows = list(csv.reader(f))
    except OSError as e:
        raise IoError(f"cannot read csv from {path}: {e}") from e
    data = np.array([[float(v) for v in row[1:]] for row in rows[1:]])
    times = np.array([float(row[0]) for row in rows[1:]])
    fps = 1.0 / (times[1] - times[0]) if len(times) > 1 and times[1] > 0 else 30.0
    return MotionClip(fps=round(fps, 6), frames=data)
