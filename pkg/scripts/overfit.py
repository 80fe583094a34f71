"""Overfit the desk-scale model on one synthetic second of audio.

    python3 scripts/overfit.py --steps 2000 --log runs/overfit.jsonl
"""

from __future__ import annotations

import argparse
import json
import time
from pathlib import Path

import numpy as np

from plaae.packetsim import LossMask
from plaae.trainer import DESK_MODEL, overfit, synth_corpus


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--log", type=Path)
    args = ap.parse_args(argv)

    corpus = synth_corpus(1, seed=0)
    x = corpus.load(corpus.entries[0]).samples[:16000]
    bits = np.zeros(50, bool)
    bits[[10, 24, 25, 40, 41, 42]] = True
    t0 = time.time()
    fh = open(args.log, "w") if args.log else None

    def report(rec):
        if fh:
            fh.write(json.dumps(rec) + "\n")
        if rec["step"] % 100 == 0 or rec["step"] == 10:
            print(f"step {rec['step']:5d} mstft {rec['mstft']:.4f} ({time.time() - t0:.0f} s)", flush=True)

    hist = overfit(x, LossMask(bits), args.steps, DESK_MODEL, seed=args.seed, callback=report)
    if fh:
        fh.close()
    first, last = hist[min(9, len(hist) - 1)]["mstft"], hist[-1]["mstft"]
    print(f"step-10 {first:.4f} -> final {last:.4f} ({last / first:.1%}) in {(time.time() - t0) / 60:.1f} min")


if __name__ == "__main__":
    main()
