"""Command-line surface: synth, curate, train, dpo, grpo, sample, eval, export.

Every command takes a --seed where randomness is involved and produces
byte-identical outputs across runs. Relative --out/--run paths resolve under
$MOTIONFLOW_RUNS when that variable is set. A config snapshot is written
into every run directory.

Exit codes: 0 success, 2 config error, 3 data error, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import errors as err
from .alignment import GRPOConfig, RewardConfig, grpo_step, train_dpo
from .clip import load_clip, save_clip
from .curation import FilterConfig, run_pipeline, save_reports
from .engine import AdamW
from .evaluate import EvalReport, evaluate_model, export_clip, import_csv
from .flow import FINETUNE_LR_FACTOR, Normalizer, TrainConfig, TrainExample, train
from .model import ModelConfig, MotionDiT, Tokenizer, manifest, small_config, tiny_config
from .oracle import SemanticOracle, train_oracle
from .sampling import SamplerConfig, sample_ode
from .skeleton import load_default_skeleton
from .synth import (
    ActionSpec, CLASS_NAMES, DEFECT_KINDS, TAXONOMY, all_training_captions,
    generate_clip, heldout_prompts, plant_defect, predict_duration,
)

CONFIG_ERROR, DATA_ERROR, NUMERIC_ERROR = 2, 3, 4


def _resolve_out(path: str) -> str:
    root = os.environ.get("MOTIONFLOW_RUNS")
    if root and not os.path.isabs(path):
        return os.path.join(root, path)
    return path


def _snapshot(out_dir: str, args: argparse.Namespace) -> None:
    os.makedirs(out_dir, exist_ok=True)
    snap = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    with open(os.path.join(out_dir, "config.json"), "w") as f:
        json.dump(snap, f, sort_keys=True, indent=1)


def _default_tokenizer() -> Tokenizer:
    return Tokenizer.from_texts(all_training_captions())


def _model_config(name: str, vocab_size: int) -> ModelConfig:
    if name == "tiny":
        return tiny_config(vocab_size=vocab_size)
    if name == "small":
        return small_config(vocab_size=vocab_size)
    raise err.ConfigInvalid(f"unknown model preset {name!r} (use tiny or small)")


def _load_ckpt(path: str) -> tuple[MotionDiT, dict, Normalizer, Tokenizer]:
    model, meta, extra = MotionDiT.load(path)
    normalizer = Normalizer.from_state(extra)
    tokenizer = Tokenizer(meta["vocab"])
    return model, meta, normalizer, tokenizer


def _get_oracle(path_or_none: str | None, out_dir: str, seed: int) -> SemanticOracle:
    if path_or_none:
        return SemanticOracle.load(path_or_none)
    cache = os.path.join(out_dir, "oracle.ckpt")
    if os.path.exists(cache):
        return SemanticOracle.load(cache)
    skel = load_default_skeleton()
    clips, labels = [], []
    for ci, cls in enumerate(CLASS_NAMES):
        for k in range(18):
            c, _, _ = generate_clip(ActionSpec(cls, seed=seed * 1009 + k * 13 + ci * 101), skel)
            clips.append(c)
            labels.append(cls)
    oracle = train_oracle(clips, labels, CLASS_NAMES)
    oracle.save(cache)
    return oracle


# -- subcommands --------------------------------------------------------------

def cmd_synth(args) -> int:
    out = _resolve_out(args.out)
    _snapshot(out, args)
    clips_dir = os.path.join(out, "clips")
    os.makedirs(clips_dir, exist_ok=True)
    skel = load_default_skeleton()
    classes = args.classes.split(",") if args.classes else CLASS_NAMES
    for c in classes:
        if c not in TAXONOMY:
            raise err.InvalidSpec(f"unknown class {c!r}")
    rng = np.random.default_rng(args.seed)
    rows = []
    for i in range(args.n):
        cls = classes[i % len(classes)]
        seed = int(rng.integers(2**31 - 1))
        clip, caption, duration = generate_clip(ActionSpec(cls, seed=seed), skel)
        if args.defect_fraction > 0 and (i % max(int(round(1 / args.defect_fraction)), 1)) == 0:
            kind = DEFECT_KINDS[i % len(DEFECT_KINDS)]
            mag = {"jitter": 2.0, "slide": 1.0, "teleport": 0.5, "freeze": 0.95}[kind]
            clip = plant_defect(clip, kind, mag, seed=seed)
        name = f"clip_{i:05d}.json"
        clip.meta["id"] = f"clip_{i:05d}"
        save_clip(clip, os.path.join(clips_dir, name))
        rows.append({"clip_path": os.path.join("clips", name), "caption": caption,
                     "class": cls, "duration": duration, "seed": seed})
    with open(os.path.join(out, "manifest.jsonl"), "w") as f:
        for row in rows:
            f.write(json.dumps(row, sort_keys=True) + "\n")

    if args.pairs > 0:
        pairs_dir = os.path.join(out, "pairs")
        os.makedirs(pairs_dir, exist_ok=True)
        pair_rows = []
        kinds = ("jitter", "slide")
        for i in range(args.pairs):
            cls = classes[i % len(classes)]
            seed = int(rng.integers(2**31 - 1))
            winner, caption, _ = generate_clip(ActionSpec(cls, seed=seed), skel)
            if i % 3 == 2:
                other = classes[(i * 7 + 1) % len(classes)]
                if other == cls:
                    other = classes[(i * 7 + 2) % len(classes)]
                loser, _, _ = generate_clip(ActionSpec(other, seed=seed + 1), skel)
            else:
                kind = kinds[i % 2]
                loser = plant_defect(winner, kind, 1.0 if kind == "slide" else 1.5, seed=seed)
            wp = os.path.join("pairs", f"pair_{i:05d}_w.json")
            lp = os.path.join("pairs", f"pair_{i:05d}_l.json")
            save_clip(winner, os.path.join(out, wp))
            save_clip(loser, os.path.join(out, lp))
            pair_rows.append({"prompt": caption, "winner_path": wp, "loser_path": lp})
        with open(os.path.join(out, "pairs.jsonl"), "w") as f:
            for row in pair_rows:
                f.write(json.dumps(row, sort_keys=True) + "\n")
    return 0


def cmd_curate(args) -> int:
    out = _resolve_out(args.out)
    _snapshot(out, args)
    data = _resolve_out(args.data)
    manifest_path = os.path.join(data, "manifest.jsonl")
    if not os.path.exists(manifest_path):
        raise err.IoError(f"no manifest at {manifest_path}")
    with open(manifest_path) as f:
        rows = [json.loads(line) for line in f if line.strip()]
    cfg = FilterConfig()
    if args.filter_config:
        with open(args.filter_config) as f:
            cfg = FilterConfig.from_dict(json.load(f))
    clips = []
    for row in rows:
        c = load_clip(os.path.join(data, row["clip_path"]))
        c.meta.setdefault("id", os.path.basename(row["clip_path"]))
        clips.append(c)
    kept, reports = run_pipeline(clips, cfg)
    save_reports(reports, os.path.join(out, "reports.jsonl"))
    kept_ids = {r.clip_id for r in reports if r.verdict == "kept"}
    with open(os.path.join(out, "manifest.jsonl"), "w") as f:
        for row, c in zip(rows, clips):
            if c.meta["id"] in kept_ids:
                abs_clip = os.path.normpath(os.path.join(data, row["clip_path"]))
                row = dict(row, clip_path=os.path.relpath(abs_clip, out))
                f.write(json.dumps(row, sort_keys=True) + "\n")
    return 0


def _load_dataset(data_dir: str, tokenizer: Tokenizer, max_tokens: int) -> list[tuple]:
    manifest_path = os.path.join(data_dir, "manifest.jsonl")
    if not os.path.exists(manifest_path):
        raise err.IoError(f"no manifest at {manifest_path}")
    with open(manifest_path) as f:
        rows = [json.loads(line) for line in f if line.strip()]
    out = []
    for row in rows:
        clip = load_clip(os.path.normpath(os.path.join(data_dir, row["clip_path"])))
        out.append((clip, row["caption"], row.get("class")))
    return out


def cmd_train(args) -> int:
    out = _resolve_out(args.out)
    _snapshot(out, args)
    data = _resolve_out(args.data)
    tokenizer = _default_tokenizer()

    if args.stage == "finetune":
        if not args.init:
            raise err.ConfigInvalid("finetune requires --init CHECKPOINT")
        model, meta, normalizer, tokenizer = _load_ckpt(_resolve_out(args.init))
        lr = args.lr if args.lr is not None else meta.get("lr", 1e-3) * FINETUNE_LR_FACTOR
    else:
        cfg_model = _model_config(args.model, tokenizer.size)
        model = MotionDiT.create(cfg_model, seed=args.seed)
        normalizer = None
        lr = args.lr if args.lr is not None else 1e-3

    raw = _load_dataset(data, tokenizer, model.cfg.max_text_tokens)
    if normalizer is None:
        normalizer = Normalizer.fit([c.frames for c, _, _ in raw])
    dataset = [TrainExample(normalizer.apply(c.frames),
                            tokenizer.encode(cap, model.cfg.max_text_tokens), cap, cls)
               for c, cap, cls in raw]

    cfg = TrainConfig(stage=args.stage, lr=lr, batch_size=args.batch_size,
                      steps=args.steps, seed=args.seed, log_every=args.log_every,
                      checkpoint_every=args.checkpoint_every)
    meta_out = {"vocab": tokenizer.vocab, "stage": args.stage, "lr": lr,
                "train_config": cfg.to_dict()}
    with open(os.path.join(out, "manifest.json"), "w") as f:
        json.dump({name: list(shape) for name, shape in manifest(model.cfg).items()},
                  f, sort_keys=True, indent=1)
    train(model, dataset, cfg, run_dir=out,
          extra_ckpt_tensors=normalizer.state(), ckpt_meta=meta_out)
    model.save(os.path.join(out, "model.ckpt"), extra_tensors=normalizer.state(),
               meta=meta_out)
    return 0


def cmd_dpo(args) -> int:
    out = _resolve_out(args.out)
    _snapshot(out, args)
    policy, meta, normalizer, tokenizer = _load_ckpt(_resolve_out(args.init))
    reference = policy.copy()
    reference.set_trainable(False)

    pairs_file = _resolve_out(args.pairs)
    base = os.path.dirname(pairs_file)
    with open(pairs_file) as f:
        rows = [json.loads(line) for line in f if line.strip()]
    pairs = []
    for row in rows:
        w = load_clip(os.path.join(base, row["winner_path"]))
        l = load_clip(os.path.join(base, row["loser_path"]))
        tokens = tokenizer.encode(row["prompt"], policy.cfg.max_text_tokens)
        pairs.append((tokens, normalizer.apply(w.frames), normalizer.apply(l.frames)))

    curve = train_dpo(policy, reference, pairs, steps=args.steps,
                      batch_size=args.batch_size, lr=args.lr, seed=args.seed,
                      beta=args.beta)
    with open(os.path.join(out, "dpo_loss.csv"), "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["step", "loss"])
        writer.writerows(curve)
    meta_out = dict(meta, stage="dpo")
    policy.save(os.path.join(out, "model.ckpt"), extra_tensors=normalizer.state(),
                meta=meta_out)
    return 0


def cmd_grpo(args) -> int:
    out = _resolve_out(args.out)
    _snapshot(out, args)
    policy, meta, normalizer, tokenizer = _load_ckpt(_resolve_out(args.init))
    skel = load_default_skeleton()
    oracle = _get_oracle(args.oracle, out, args.seed)
    with open(_resolve_out(args.prompts)) as f:
        prompt_pool = [line.strip() for line in f if line.strip()]
    if not prompt_pool:
        raise err.IoError("prompt file is empty")

    cfg = GRPOConfig(group_size=args.group_size, clip_eps=args.clip_eps,
                     kl_beta=args.kl_beta, rollout_steps=args.rollout_steps,
                     sde_noise=args.sde_noise, lr=args.lr)
    opt = AdamW(policy.parameters(), lr=cfg.lr)
    rng = np.random.default_rng(args.seed)
    fixed_ref = None
    if args.ref_mode == "fixed":
        fixed_ref = policy.copy()
        fixed_ref.set_trainable(False)

    log_rows = []
    for step in range(1, args.steps + 1):
        if fixed_ref is not None:
            reference = fixed_ref
        else:
            reference = policy.copy()
            reference.set_trainable(False)
        prompts = [prompt_pool[int(rng.integers(len(prompt_pool)))]
                   for _ in range(args.prompts_per_step)]
        stats = grpo_step(policy, reference, prompts, cfg, oracle, normalizer,
                          tokenizer, skel, opt, rng)
        log_rows.append([step, stats["mean_reward"], stats["mean_r_phy"],
                         stats["mean_r_sem"], stats["kl"], stats["clip_fraction"]])
    with open(os.path.join(out, "grpo_log.csv"), "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["step", "mean_reward", "mean_r_phy", "mean_r_sem", "kl", "clip_fraction"])
        writer.writerows(log_rows)
    meta_out = dict(meta, stage="grpo")
    policy.save(os.path.join(out, "model.ckpt"), extra_tensors=normalizer.state(),
                meta=meta_out)
    return 0


def cmd_sample(args) -> int:
    model, meta, normalizer, tokenizer = _load_ckpt(_resolve_out(args.ckpt))
    skel = load_default_skeleton()
    if args.frames:
        n_frames = args.frames
        seconds = n_frames / 30.0
    else:
        seconds, _ = predict_duration(args.prompt)
        n_frames = int(np.clip(round(seconds * 30.0), 16, 360))
    cfg = SamplerConfig(n_steps=args.steps, seed=args.seed)
    clip = sample_ode(model, tokenizer.encode(args.prompt, model.cfg.max_text_tokens),
                      n_frames, cfg, normalizer=normalizer, skeleton=skel,
                      meta={"prompt": args.prompt, "pred_duration": seconds})
    out = _resolve_out(args.out)
    os.makedirs(os.path.dirname(out) or ".", exist_ok=True)
    save_clip(clip, out)
    return 0


def cmd_eval(args) -> int:
    out = _resolve_out(args.out)
    _snapshot(out, args)
    model, meta, normalizer, tokenizer = _load_ckpt(_resolve_out(args.ckpt))
    oracle = _get_oracle(args.oracle, out, args.seed)
    if args.prompts:
        with open(_resolve_out(args.prompts)) as f:
            prompts = [line.strip() for line in f if line.strip()]
    else:
        prompts = []
        while len(prompts) < args.n_prompts:
            for cls in CLASS_NAMES:
                prompts.extend(heldout_prompts(cls))
        prompts = prompts[: args.n_prompts]
    report = evaluate_model(model, normalizer, tokenizer, prompts, oracle,
                            seed=args.seed, n_steps=args.steps)
    report.save(os.path.join(out, "eval_report.json"))
    return 0


def cmd_export(args) -> int:
    clip = load_clip(_resolve_out(args.clip)) if args.clip.endswith(".json") else import_csv(_resolve_out(args.clip))
    out = _resolve_out(args.out)
    os.makedirs(os.path.dirname(out) or ".", exist_ok=True)
    export_clip(clip, args.format, out)
    return 0


# -- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="motionflow",
                                description="desk-scale text-to-motion pipeline")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate labeled synthetic clips")
    s.add_argument("--out", required=True)
    s.add_argument("--n", type=int, default=100)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--classes", default="")
    s.add_argument("--defect-fraction", type=float, default=0.0)
    s.add_argument("--pairs", type=int, default=0, help="also fabricate preference pairs")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("curate", help="filter a synthesized corpus")
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--filter-config", default="")
    s.set_defaults(func=cmd_curate)

    s = sub.add_parser("train", help="flow-matching training")
    s.add_argument("--stage", choices=("pretrain", "finetune"), required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--init", default="")
    s.add_argument("--model", default="tiny")
    s.add_argument("--lr", type=float, default=None)
    s.add_argument("--steps", type=int, default=500)
    s.add_argument("--batch-size", type=int, default=8)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--log-every", type=int, default=10)
    s.add_argument("--checkpoint-every", type=int, default=0)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("dpo", help="preference alignment on winner/loser pairs")
    s.add_argument("--pairs", required=True)
    s.add_argument("--init", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--steps", type=int, default=300)
    s.add_argument("--batch-size", type=int, default=4)
    s.add_argument("--lr", type=float, default=1e-4)
    s.add_argument("--beta", type=float, default=500.0)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_dpo)

    s = sub.add_parser("grpo", help="group-relative policy optimization")
    s.add_argument("--prompts", required=True)
    s.add_argument("--init", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--steps", type=int, default=100)
    s.add_argument("--group-size", type=int, default=8)
    s.add_argument("--prompts-per-step", type=int, default=2)
    s.add_argument("--clip-eps", type=float, default=0.2)
    s.add_argument("--kl-beta", type=float, default=0.01)
    s.add_argument("--rollout-steps", type=int, default=10)
    s.add_argument("--sde-noise", type=float, default=0.7)
    s.add_argument("--lr", type=float, default=1e-5)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--oracle", default="")
    s.add_argument("--ref-mode", choices=("rolling", "fixed"), default="rolling")
    s.set_defaults(func=cmd_grpo)

    s = sub.add_parser("sample", help="generate a clip from a prompt")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--prompt", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--steps", type=int, default=32)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--frames", type=int, default=0)
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("eval", help="oracle evaluation of a checkpoint")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--prompts", default="")
    s.add_argument("--n-prompts", type=int, default=60)
    s.add_argument("--steps", type=int, default=16)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--oracle", default="")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("export", help="convert a clip file")
    s.add_argument("--clip", required=True)
    s.add_argument("--format", choices=("json", "csv"), required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_export)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except err.ConfigInvalid as e:
        print(f"config error: {e}", file=sys.stderr)
        return CONFIG_ERROR
    except (err.IoError, err.InvalidSpec, err.UnknownAction, err.EmptyPrompt,
            err.UnknownToken, err.CheckpointMismatch, err.TooShort, FileNotFoundError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return DATA_ERROR
    except (err.NonFinite, err.NonDeterministic, err.DegenerateInput,
            err.DegenerateFacing, err.DegenerateGroup, err.NotARotation,
            err.ShapeMismatch) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return NUMERIC_ERROR


if __name__ == "__main__":
    sys.exit(main())
