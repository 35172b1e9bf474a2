"""Calibration run for the workstation-scale training recipe.

Pretrains the small config on 2000 synthetic clips, probing held-out prompt
accuracy along the way, then fine-tunes on a curated 500-clip subset. Prints
a CSV-ish trace so step budgets can be frozen into the acceptance suite.
"""
import argparse
import sys
import time

import numpy as np

from motionflow.curation import FilterConfig, run_pipeline
from motionflow.evaluate import evaluate_model
from motionflow.flow import Normalizer, TrainConfig, TrainExample, train
from motionflow.model import MotionDiT, Tokenizer, small_config
from motionflow.oracle import train_oracle
from motionflow.skeleton import load_default_skeleton
from motionflow.synth import (
    ActionSpec, CLASS_NAMES, all_training_captions, generate_clip, heldout_prompts,
)


def build_corpus(n, seed, skeleton):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        cls = CLASS_NAMES[i % len(CLASS_NAMES)]
        clip, cap, dur = generate_clip(ActionSpec(cls, seed=int(rng.integers(2**31 - 1))), skeleton)
        out.append((clip, cap, cls))
    return out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--pretrain-steps", type=int, default=2000)
    ap.add_argument("--finetune-steps", type=int, default=400)
    ap.add_argument("--probe-every", type=int, default=200)
    ap.add_argument("--batch", type=int, default=8)
    ap.add_argument("--lr", type=float, default=3e-4)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--n-clips", type=int, default=2000)
    ap.add_argument("--probe-prompts", type=int, default=36)
    args = ap.parse_args()

    t_start = time.time()
    skeleton = load_default_skeleton()
    tokenizer = Tokenizer.from_texts(all_training_captions())

    print(f"[{time.time()-t_start:7.0f}s] generating {args.n_clips} clips", flush=True)
    corpus = build_corpus(args.n_clips, args.seed, skeleton)
    normalizer = Normalizer.fit([c.frames for c, _, _ in corpus])
    dataset = [TrainExample(normalizer.apply(c.frames), tokenizer.encode(cap, 16), cap, cls)
               for c, cap, cls in corpus]

    print(f"[{time.time()-t_start:7.0f}s] training oracle", flush=True)
    oracle_clips = build_corpus(240, args.seed + 77, skeleton)
    oracle = train_oracle([c for c, _, _ in oracle_clips], [cls for _, _, cls in oracle_clips],
                          CLASS_NAMES)

    probe_prompts = []
    while len(probe_prompts) < args.probe_prompts:
        for cls in CLASS_NAMES:
            probe_prompts.extend(heldout_prompts(cls))
    probe_prompts = probe_prompts[: args.probe_prompts]

    cfg = small_config(vocab_size=tokenizer.size)
    model = MotionDiT.create(cfg, seed=args.seed)
    print(f"[{time.time()-t_start:7.0f}s] small model params: {model.n_params()}", flush=True)

    def probe(tag):
        t0 = time.time()
        report = evaluate_model(model, normalizer, tokenizer, probe_prompts, oracle,
                                seed=123, n_steps=8, skeleton=skeleton)
        agg = report.aggregates()["overall"]
        print(f"[{time.time()-t_start:7.0f}s] PROBE {tag}: acc={agg['oracle_accuracy']:.3f} "
              f"slide={agg['mean_foot_slide']:.3f} jitter={agg['mean_jitter']:.2f} "
              f"(probe {time.time()-t0:.0f}s)", flush=True)

    chunk = args.probe_every
    done = 0
    while done < args.pretrain_steps:
        steps = min(chunk, args.pretrain_steps - done)
        t0 = time.time()
        curve = train(model, dataset, TrainConfig(stage="pretrain", lr=args.lr,
                                                  batch_size=args.batch, steps=steps,
                                                  seed=args.seed + done, log_every=50))
        done += steps
        print(f"[{time.time()-t_start:7.0f}s] pretrain {done}/{args.pretrain_steps} "
              f"loss={curve[-1][1]:.4f} ({(time.time()-t0)/steps:.2f}s/step)", flush=True)
        probe(f"pre-{done}")

    print(f"[{time.time()-t_start:7.0f}s] curating finetune subset", flush=True)
    pool = build_corpus(700, args.seed + 1, skeleton)
    kept, _ = run_pipeline([c for c, _, _ in pool], FilterConfig())
    kept_ids = {id(c) for c in kept}
    ft = [(c, cap, cls) for c, cap, cls in pool if id(c) in kept_ids][:500]
    ft_ds = [TrainExample(normalizer.apply(c.frames), tokenizer.encode(cap, 16), cap, cls)
             for c, cap, cls in ft]
    print(f"[{time.time()-t_start:7.0f}s] finetune on {len(ft_ds)} clips", flush=True)
    done = 0
    while done < args.finetune_steps:
        steps = min(chunk, args.finetune_steps - done)
        train(model, ft_ds, TrainConfig(stage="finetune", lr=args.lr * 0.1,
                                        batch_size=args.batch, steps=steps,
                                        seed=args.seed + 9000 + done, log_every=50))
        done += steps
        probe(f"ft-{done}")

    print(f"[{time.time()-t_start:7.0f}s] done", flush=True)


if __name__ == "__main__":
    sys.exit(main())
