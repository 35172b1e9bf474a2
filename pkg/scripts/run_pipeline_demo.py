"""Minutes-scale end-to-end demo: synth -> curate -> train -> sample -> eval.

Uses the tiny model and a small corpus; prints the eval aggregates at the
end. Everything lands in a temporary run directory unless --out is given.
"""
import argparse
import json
import os
import sys
import tempfile

from motionflow.cli import main as cli


def run(args=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="")
    ap.add_argument("--n-clips", type=int, default=120)
    ap.add_argument("--steps", type=int, default=150)
    ap.add_argument("--seed", type=int, default=0)
    opts = ap.parse_args(args)

    root = opts.out or tempfile.mkdtemp(prefix="motionflow-demo-")
    data = os.path.join(root, "data")
    curated = os.path.join(root, "curated")
    run_dir = os.path.join(root, "run")
    eval_dir = os.path.join(root, "eval")

    steps = [
        ["synth", "--out", data, "--n", str(opts.n_clips), "--seed", str(opts.seed)],
        ["curate", "--data", data, "--out", curated],
        ["train", "--stage", "pretrain", "--data", curated, "--out", run_dir,
         "--model", "tiny", "--steps", str(opts.steps), "--batch-size", "4",
         "--seed", str(opts.seed)],
        ["sample", "--ckpt", os.path.join(run_dir, "model.ckpt"),
         "--prompt", "a person waves their left hand",
         "--out", os.path.join(root, "wave.json"), "--seed", "1"],
        ["eval", "--ckpt", os.path.join(run_dir, "model.ckpt"), "--out", eval_dir,
         "--n-prompts", "24", "--steps", "8", "--seed", "2"],
    ]
    for cmd in steps:
        print("$ motionflow", " ".join(cmd), flush=True)
        code = cli(cmd)
        if code != 0:
            return code

    with open(os.path.join(eval_dir, "eval_report.json")) as f:
        agg = json.load(f)["aggregates"]["overall"]
    print(f"\ndemo run dir: {root}")
    print(f"eval aggregates: {json.dumps(agg, indent=1, sort_keys=True)}")
    print("(a briefly trained tiny model; accuracy rises with --steps)")
    return 0


if __name__ == "__main__":
    sys.exit(run())
