"""Wall-time scaling of the banded joint attention over sequence length."""
import sys
import time

import numpy as np

import motionflow.engine as E
from motionflow.model import Conditioning, MotionDiT, Tokenizer, tiny_config
from motionflow.synth import all_training_captions


def main():
    tok = Tokenizer.from_texts(all_training_captions())
    model = MotionDiT.create(tiny_config(vocab_size=tok.size), seed=0)
    tokens = tok.encode("a person walks forward")
    rng = np.random.default_rng(0)
    print("frames  fwd_ms  ms_per_frame")
    prev = None
    for n in (128, 256, 512, 1024):
        x = rng.standard_normal((n, 201)).astype(np.float32)
        cond = Conditioning(tokens, 0.5)
        with E.no_grad():
            model.forward(x, cond)
            times = []
            for _ in range(5):
                t0 = time.perf_counter()
                model.forward(x, cond)
                times.append(time.perf_counter() - t0)
        t = min(times)
        note = f"  ({t / prev:.2f}x over previous)" if prev else ""
        print(f"{n:6d}  {t * 1e3:6.1f}  {t / n * 1e6:9.1f}us{note}")
        prev = t
    return 0


if __name__ == "__main__":
    sys.exit(main())
