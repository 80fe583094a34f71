"""Per-gap-length MCD of the trained generator against the baselines on the synthetic test split.

    python3 scripts/eval_ordering.py artifacts/desk_20k_generator.ckpt --out runs/eval_desk.json
"""

from __future__ import annotations

import argparse
import json
from pathlib import Path

from plaae.evaluation import GAP_LENGTHS_MS, evaluate_gap_lengths, ordering_check, systems_for
from plaae.metrics import aggregate
from plaae.trainer import TrainConfig, load_generator, synth_corpus


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("checkpoint", type=Path)
    ap.add_argument("--out", type=Path)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--pitch", action="store_true", help="also compute F0 RMSE and UV error")
    args = ap.parse_args(argv)

    model = load_generator(args.checkpoint)
    corpus = synth_corpus(TrainConfig().synth_utterances, seed=0)
    test_set = {uid: a.samples for uid, a in corpus.waveforms("test").items()}
    entries = evaluate_gap_lengths(test_set, systems_for(model), GAP_LENGTHS_MS, seed=args.seed, with_pitch=args.pitch)
    report = aggregate(entries, {"checkpoint": str(args.checkpoint), "seed": args.seed, "utterances": len(test_set)})
    for c in report.conditions:
        print(f"{c.system:8s} {c.gap_ms:4d} ms  MCD {c.mcd_mean:7.2f} +/- {c.mcd_mean_ci:5.2f} dB  n={c.n}")
    result = ordering_check(report, GAP_LENGTHS_MS)
    print(json.dumps({k: v for k, v in result.items() if k != "means"}, default=str))
    if args.out:
        args.out.write_text(report.to_json())


if __name__ == "__main__":
    main()
