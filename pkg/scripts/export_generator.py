"""Strip a training checkpoint down to the generator weights and its config.

    python3 scripts/export_generator.py runs/desk/best.ckpt artifacts/desk_20k_generator.ckpt
"""

from __future__ import annotations

import argparse
from pathlib import Path

from plaae.tensor import load_checkpoint, save_checkpoint


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("checkpoint", type=Path)
    ap.add_argument("out", type=Path)
    args = ap.parse_args(argv)

    tensors, meta = load_checkpoint(args.checkpoint)
    generator = {k: v for k, v in tensors.items() if k.startswith("G.")}
    args.out.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(args.out, generator, {"step": meta["step"], "best_val": meta.get("best_val"),
                                          "train_config": meta["train_config"], "source": args.checkpoint.name})
    print(f"wrote {args.out} ({len(generator)} tensors, step {meta['step']})")


if __name__ == "__main__":
    main()
