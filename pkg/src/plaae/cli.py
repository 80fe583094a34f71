"""Command-line entry point: ``python3 -m plaae.cli <command> ...``.

Exit codes: 0 success, 1 validation or metric failure, 2 I/O or configuration error.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import sys
from collections import Counter
from pathlib import Path

import numpy as np

from . import __version__
from .conceal import SpliceConfig, baseline_repeat_frame, baseline_zero_fill, conceal_stream
from .errors import AudioFormatError, ConfigError, LengthError, PlaaeError, TrainingDivergence
from .evaluation import gap_mcd
from .metrics import EvalReport, aggregate, f0_rmse, mcd_curve, uv_error
from .packetsim import LossMask, LossProtocol, apply_mask, inject_losses, load_mask, packetize, save_mask
from .tensor import CheckpointError
from .wav import read_wav, write_wav

EXIT_OK, EXIT_FAIL, EXIT_IO = 0, 1, 2


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _provenance(command, args, **extra):
    flags = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items() if k != "func"}
    return {"tool": "plaae", "version": __version__, "command": command, "args": flags, **extra}


def _write_sidecar(path, provenance):
    side = Path(str(path) + ".provenance.json")
    side.write_text(json.dumps(provenance, indent=2, sort_keys=True) + "\n")
    return side


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _read(path):
    try:
        return read_wav(path)
    except FileNotFoundError as exc:
        raise CliError(f"cannot read {path}: no such file", EXIT_IO) from exc


# -- simulate-loss -------------------------------------------------------------

def cmd_simulate_loss(args):
    audio = _read(args.inp)
    count, _ = packetize(audio)
    protocol = LossProtocol.from_gap_ms(args.gap_ms, args.p, seed=args.seed)
    mask = inject_losses(count, protocol)
    lossy, _ = apply_mask(audio, mask)
    write_wav(args.out, lossy)
    prov = _provenance("simulate-loss", args, input_sha256=_sha256(args.inp))
    save_mask(args.mask_out, mask, seed=args.seed, protocol=protocol, extra={"provenance": prov})
    _write_sidecar(args.out, prov)
    print(json.dumps({"packets": count, "lost": int(mask.bits.sum()), "gaps": len(mask.gaps()),
                      "loss_rate": mask.loss_rate}))
    return EXIT_OK


# -- conceal -------------------------------------------------------------------

def _gap_stats(mask: LossMask, report):
    lengths = [n for _, n in mask.gaps()]
    return {
        "packets": len(mask),
        "lost_packets": int(mask.bits.sum()),
        "loss_rate": mask.loss_rate,
        "gaps": len(lengths),
        "gap_length_histogram_ms": {str(k * 20): v for k, v in sorted(Counter(lengths).items())},
        "phase_shifts": report.get("shifts", []),
        "warnings": report.get("warnings", []),
    }


def cmd_conceal(args):
    audio = _read(args.inp)
    try:
        mask, _ = load_mask(args.mask)
    except (OSError, ValueError, KeyError) as exc:
        raise CliError(f"cannot read mask {args.mask}: {exc}", EXIT_IO) from exc
    report = {}
    if args.baseline == "zero":
        out = baseline_zero_fill(audio, mask)
    elif args.baseline == "repeat":
        out = baseline_repeat_frame(audio, mask)
    else:
        if args.ckpt is None:
            raise CliError("--ckpt is required unless --baseline is given", EXIT_IO)
        if not Path(args.ckpt).is_file():
            raise CliError(f"checkpoint not found: {args.ckpt}", EXIT_IO)
        from .trainer import load_generator

        model = load_generator(args.ckpt)
        out = conceal_stream(audio, mask, model, SpliceConfig(), report)
    write_wav(args.out, out)
    prov = _provenance("conceal", args, input_sha256=_sha256(args.inp),
                       checkpoint_sha256=_sha256(args.ckpt) if args.ckpt and not args.baseline else None)
    _write_sidecar(args.out, prov)
    print(json.dumps(_gap_stats(mask, report), sort_keys=True))
    return EXIT_OK


# -- evaluate ------------------------------------------------------------------

def _evaluate_pair(ref, rec, mask, system, gap_ms):
    if len(ref) != len(rec):
        raise CliError(f"reference and reconstruction lengths differ ({len(ref)} vs {len(rec)})", EXIT_FAIL)
    if mask is not None:
        curve = gap_mcd(ref, rec, mask)
        if curve is None:
            raise CliError("mask has no gaps to score", EXIT_FAIL)
        if gap_ms is None:
            sizes = {n for _, n in mask.gaps()}
            gap_ms = 20 * sizes.pop() if len(sizes) == 1 else 0
    else:
        horizon = (len(ref) // 160) * 10
        curve = mcd_curve(ref, rec, horizon_ms=horizon)
        gap_ms = gap_ms or 0
    return {"system": system, "gap_ms": gap_ms, "mcd": curve, "f0_rmse": f0_rmse(ref, rec), "uv_err": uv_error(ref, rec)}


def cmd_evaluate(args):
    if len(args.ref) != len(args.rec):
        raise CliError("need the same number of --ref and --rec files", EXIT_IO)
    masks = args.mask or []
    if masks and len(masks) != len(args.ref):
        raise CliError("give one --mask per file pair", EXIT_IO)
    entries = []
    for i, (r, c) in enumerate(zip(args.ref, args.rec)):
        mask = load_mask(masks[i])[0] if masks else None
        entries.append(_evaluate_pair(_read(r), _read(c), mask, args.system, args.gap_ms))
    report = aggregate(entries, _provenance("evaluate", args))
    out = Path(args.out)
    if out.suffix == ".csv":
        out.write_text(report.to_csv())
        _write_sidecar(out, report.provenance)
    else:
        out.write_text(report.to_json())
    for c in report.conditions:
        print(f"{c.system} gap={c.gap_ms}ms n={c.n} mcd={c.mcd_mean:.3f} dB f0_rmse={c.f0_rmse_hz:.3f} Hz "
              f"uv={c.uv_err:.4f}")
    return EXIT_OK


# -- train ---------------------------------------------------------------------

def cmd_train(args):
    from .trainer import TrainConfig, Trainer, ingest_wav_corpus, synth_corpus

    try:
        cfg = TrainConfig.from_json(Path(args.config).read_text()) if args.config else TrainConfig()
    except FileNotFoundError as exc:
        raise CliError(f"config not found: {args.config}", EXIT_IO) from exc
    except (json.JSONDecodeError, TypeError) as exc:
        raise CliError(f"invalid config {args.config}: {exc}", EXIT_IO) from exc
    if args.steps is not None:
        cfg = dataclasses.replace(cfg, max_iterations=args.steps)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if args.corpus == "synth":
        corpus = synth_corpus(cfg.synth_utterances, cfg.corpus_seed)
    else:
        corpus = ingest_wav_corpus(args.corpus)
    train = [corpus.load(e) for e in corpus.split("train")]
    if not train:
        raise CliError(f"no training utterances in {args.corpus}", EXIT_IO)
    out = Path(args.out)
    trainer = Trainer(cfg, train, corpus.waveforms("valid"), out_dir=out)
    (out / "config.json").write_text(cfg.to_json() + "\n")
    try:
        trainer.fit(callback=(lambda r: print(json.dumps(r), flush=True)) if args.verbose else None)
    except TrainingDivergence as exc:
        print(f"training diverged: {exc} (record {exc.record})", file=sys.stderr)
        trainer.save(out / "diverged.ckpt")
        return EXIT_FAIL
    path = trainer.save(out / f"step{trainer.step}.ckpt")
    trainer.save(out / "last.ckpt")
    print(json.dumps({"step": trainer.step, "checkpoint": str(path), "best_val": trainer.best_val
                      if np.isfinite(trainer.best_val) else None}))
    return EXIT_OK


# -- gradcheck -----------------------------------------------------------------

def cmd_gradcheck(args):
    from .gradsuite import TOLERANCE, run_suite

    results = run_suite(args.instances, args.seed)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name:30s} worst rel. error {r.worst:.3e} over {r.instances}")
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"{len(failed)} layer(s) exceed {TOLERANCE:g}: {', '.join(failed)}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


# -- report --------------------------------------------------------------------

def _log_table(records, window):
    lines = ["| steps | vd | adv | mstft | val_mstft |", "|---|---|---|---|---|"]
    if not records:
        return lines
    last = records[-1]["step"]
    for lo in range(0, last, window):
        chunk = [r for r in records if lo < r["step"] <= lo + window]
        if not chunk:
            continue
        val = [r["val_mstft"] for r in chunk if "val_mstft" in r]
        m = {k: np.mean([r[k] for r in chunk]) for k in ("vd", "adv", "mstft")}
        v = f"{val[-1]:.4f}" if val else ""
        lines.append(f"| {lo + 1}-{lo + window} | {m['vd']:.4f} | {m['adv']:.4f} | {m['mstft']:.4f} | {v} |")
    return lines


def _eval_tables(report: EvalReport):
    systems, gaps = report.systems(), report.gaps()
    lines = ["MCD (dB), mean +/- 95% CI per gap length", "",
             "| system | " + " | ".join(f"{g} ms" for g in gaps) + " |", "|---" * (len(gaps) + 1) + "|"]
    for s in systems:
        cells = []
        for g in gaps:
            try:
                c = report.get(s, g)
                cells.append(f"{c.mcd_mean:.2f} +/- {c.mcd_mean_ci:.2f}")
            except KeyError:
                cells.append("")
        lines.append(f"| {s} | " + " | ".join(cells) + " |")
    lines += ["", "F0 RMSE (Hz) and UV error", "", "| system | gap ms | F0 RMSE | UV | n |", "|---|---|---|---|---|"]
    for c in report.conditions:
        lines.append(f"| {c.system} | {c.gap_ms} | {c.f0_rmse_hz:.2f} +/- {c.f0_ci:.2f} | "
                     f"{c.uv_err:.4f} +/- {c.uv_ci:.4f} | {c.n} |")
    return lines


def cmd_report(args):
    from .trainer import read_log

    if not args.logs and not args.eval:
        raise CliError("give --logs and/or --eval", EXIT_IO)
    lines = []
    for path in args.logs or []:
        lines += [f"Training log {path}", ""] + _log_table(read_log(path), args.window) + [""]
    for path in args.eval or []:
        report = EvalReport.from_dict(json.loads(Path(path).read_text()))
        lines += [f"Evaluation {path}", ""] + _eval_tables(report) + [""]
    text = "\n".join(lines)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return EXIT_OK


# -- entry point ---------------------------------------------------------------

def build_parser():
    ap = argparse.ArgumentParser(prog="plaae", description="Packet loss concealment toolkit")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate-loss", help="zero-fill simulated packet losses")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mask-out", required=True)
    p.add_argument("--p", type=float, default=0.1)
    p.add_argument("--gap-ms", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_simulate_loss)

    p = sub.add_parser("conceal", help="fill gaps with the model or a baseline")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--ckpt")
    p.add_argument("--out", required=True)
    p.add_argument("--baseline", choices=("zero", "repeat"))
    p.set_defaults(func=cmd_conceal)

    p = sub.add_parser("evaluate", help="MCD / F0 / UV report for reference-reconstruction pairs")
    p.add_argument("--ref", nargs="+", required=True)
    p.add_argument("--rec", nargs="+", required=True)
    p.add_argument("--mask", nargs="+", help="score only the gaps of these masks (one per pair)")
    p.add_argument("--system", default="system")
    p.add_argument("--gap-ms", type=int)
    p.add_argument("--out", required=True, help="report.json or report.csv")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("train", help="adversarial training run")
    p.add_argument("--config")
    p.add_argument("--corpus", default="synth", help="'synth' or a directory of 16 kHz mono WAVs")
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("gradcheck", help="finite-difference checks of every layer")
    p.add_argument("--instances", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("report", help="summary tables from training logs and evaluation reports")
    p.add_argument("--logs", nargs="*")
    p.add_argument("--eval", nargs="*")
    p.add_argument("--window", type=int, default=1000)
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (AudioFormatError, CheckpointError, ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (LengthError, PlaaeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
