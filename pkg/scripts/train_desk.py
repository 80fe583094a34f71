"""Desk-scale training run on the synthetic corpus (resumable).

    python3 scripts/train_desk.py --out runs/desk --steps 20000 --batch-size 2
"""

from __future__ import annotations

import argparse
import dataclasses
import time
from pathlib import Path

from plaae.trainer import TrainConfig, Trainer, synth_corpus


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("runs/desk"))
    ap.add_argument("--steps", type=int, default=20_000)
    ap.add_argument("--batch-size", type=int, default=2)
    ap.add_argument("--utterances", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--checkpoint-interval", type=int, default=500)
    args = ap.parse_args(argv)

    cfg = dataclasses.replace(
        TrainConfig(), batch_size=args.batch_size, max_iterations=args.steps, seed=args.seed,
        synth_utterances=args.utterances, checkpoint_interval=args.checkpoint_interval,
    )
    corpus = synth_corpus(cfg.synth_utterances, cfg.corpus_seed)
    train = [corpus.load(e) for e in corpus.split("train")]
    trainer = Trainer(cfg, train, corpus.waveforms("valid"), out_dir=args.out)
    (args.out / "config.json").write_text(cfg.to_json())
    last = args.out / "last.ckpt"
    if last.exists():
        trainer.load(last)
        print(f"resumed at step {trainer.step}", flush=True)

    t0 = time.time()
    start = trainer.step

    def report(rec):
        if rec["step"] % 100 == 0 or "val_mstft" in rec:
            rate = (time.time() - t0) / max(1, rec["step"] - start)
            extra = f" val {rec['val_mstft']:.4f}" if "val_mstft" in rec else ""
            print(f"step {rec['step']:6d} vd {rec['vd']:.4f} adv {rec['adv']:.4f} "
                  f"mstft {rec['mstft']:.4f}{extra} ({rate:.2f} s/step)", flush=True)

    trainer.fit(callback=report)
    trainer.save(last)
    trainer.save(args.out / f"step{trainer.step}.ckpt")
    print(f"done: {trainer.step} steps, best validation multi-STFT {trainer.best_val:.4f}", flush=True)


if __name__ == "__main__":
    main()
