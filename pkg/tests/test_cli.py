import json

import numpy as np
import pytest

from plaae.cli import EXIT_FAIL, EXIT_IO, EXIT_OK, main
from plaae.packetsim import load_mask
from plaae.trainer import TrainConfig, Trainer
from plaae.wav import quantize, read_wav, write_wav

from conftest import TINY, speechlike


@pytest.fixture
def clean_wav(tmp_path):
    path = tmp_path / "clean.wav"
    write_wav(path, speechlike(16000 + 100, seed=1))
    return path


def payload(path):
    return quantize(read_wav(path).samples).tobytes()


def tiny_cfg(**kw):
    base = dict(batch_size=1, segment_seconds=0.2, model=TINY, synth_utterances=6, validation_items=1,
                validation_interval=2, checkpoint_interval=2, log_interval=1, max_iterations=2)
    base.update(kw)
    return TrainConfig(**base)


def test_simulate_loss_zero_probability_is_identity(tmp_path, clean_wav):
    out, mask = tmp_path / "lossy.wav", tmp_path / "mask.json"
    assert main(["simulate-loss", "--in", str(clean_wav), "--out", str(out), "--mask-out", str(mask), "--p", "0"]) == EXIT_OK
    assert payload(out) == payload(clean_wav)
    prov = json.loads((tmp_path / "lossy.wav.provenance.json").read_text())
    assert prov["command"] == "simulate-loss" and prov["args"]["seed"] == 0


def test_simulate_loss_reproducible_and_gap_length(tmp_path, clean_wav):
    outs = []
    for i in range(2):
        out, mask = tmp_path / f"l{i}.wav", tmp_path / f"m{i}.json"
        main(["simulate-loss", "--in", str(clean_wav), "--out", str(out), "--mask-out", str(mask),
              "--p", "0.3", "--gap-ms", "120", "--seed", "4"])
        outs.append((out.read_bytes(), load_mask(mask)[0]))
    assert outs[0][0] == outs[1][0] and outs[0][1] == outs[1][1]
    gaps = outs[0][1].gaps()
    assert gaps and all(n == 6 for _, n in gaps)


def test_conceal_baselines_and_model(tmp_path, clean_wav, capsys):
    lossy, mask = tmp_path / "lossy.wav", tmp_path / "mask.json"
    main(["simulate-loss", "--in", str(clean_wav), "--out", str(lossy), "--mask-out", str(mask), "--p", "0.3", "--seed", "2"])
    capsys.readouterr()
    zero = tmp_path / "zero.wav"
    assert main(["conceal", "--in", str(lossy), "--mask", str(mask), "--out", str(zero), "--baseline", "zero"]) == EXIT_OK
    stats = json.loads(capsys.readouterr().out)
    assert stats["gaps"] > 0 and stats["packets"] == 50
    assert payload(zero) == payload(lossy)

    trainer = Trainer(tiny_cfg(), [speechlike(6400)])
    trainer.save(tmp_path / "g.ckpt")
    out = tmp_path / "plaae.wav"
    assert main(["conceal", "--in", str(lossy), "--mask", str(mask), "--ckpt", str(tmp_path / "g.ckpt"),
                 "--out", str(out)]) == EXIT_OK
    stats = json.loads(capsys.readouterr().out)
    assert len(stats["phase_shifts"]) == stats["gaps"]
    # outside gaps and fades the file round-trips within one LSB of the received signal
    m, _ = load_mask(mask)
    a, b = read_wav(lossy).samples, read_wav(out).samples
    region = np.zeros(len(a), bool)
    for g0, g1 in m.gap_intervals():
        region[max(0, g0 - 80) : g1 + 80] = True
    assert np.max(np.abs(a[~region] - b[~region])) <= 1 / 32768


def test_conceal_missing_checkpoint(tmp_path, clean_wav, capsys):
    mask = tmp_path / "mask.json"
    main(["simulate-loss", "--in", str(clean_wav), "--out", str(tmp_path / "l.wav"), "--mask-out", str(mask)])
    code = main(["conceal", "--in", str(clean_wav), "--mask", str(mask), "--ckpt", str(tmp_path / "nope.ckpt"),
                 "--out", str(tmp_path / "o.wav")])
    assert code == EXIT_IO
    assert "checkpoint not found" in capsys.readouterr().err


def test_missing_input_is_io_error(tmp_path):
    assert main(["simulate-loss", "--in", str(tmp_path / "x.wav"), "--out", str(tmp_path / "o.wav"),
                 "--mask-out", str(tmp_path / "m.json")]) == EXIT_IO


def test_evaluate_identical_and_mismatched(tmp_path, clean_wav):
    out = tmp_path / "r.json"
    assert main(["evaluate", "--ref", str(clean_wav), "--rec", str(clean_wav), "--out", str(out)]) == EXIT_OK
    c = json.loads(out.read_text())["conditions"][0]
    assert c["mcd_mean"] == 0.0 and c["uv_err"] == 0.0
    short = tmp_path / "short.wav"
    write_wav(short, speechlike(8000))
    assert main(["evaluate", "--ref", str(clean_wav), "--rec", str(short), "--out", str(out)]) == EXIT_FAIL


def test_evaluate_csv_with_masks(tmp_path, clean_wav):
    lossy, mask = tmp_path / "l.wav", tmp_path / "m.json"
    main(["simulate-loss", "--in", str(clean_wav), "--out", str(lossy), "--mask-out", str(mask),
          "--p", "0.3", "--gap-ms", "40", "--seed", "1"])
    csv_out = tmp_path / "r.csv"
    assert main(["evaluate", "--ref", str(clean_wav), "--rec", str(lossy), "--mask", str(mask),
                 "--system", "silence", "--out", str(csv_out)]) == EXIT_OK
    lines = csv_out.read_text().strip().split("\n")
    assert lines[0] == "system,gap_ms,offset_ms,mcd_db,f0_rmse_hz,uv_err,ci95,n"
    assert len(lines) == 1 + 4 and lines[1].startswith("silence,40,0,")
    assert (tmp_path / "r.csv.provenance.json").exists()


def test_train_and_report(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(tiny_cfg().to_json())
    out = tmp_path / "run"
    assert main(["train", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
    assert (out / "step2.ckpt").exists() and (out / "last.ckpt").exists()
    capsys.readouterr()
    assert main(["report", "--logs", str(out / "train_log.jsonl"), "--window", "1"]) == EXIT_OK
    text = capsys.readouterr().out
    assert "| 1-1 |" in text and "| 2-2 |" in text


def test_train_bad_config(tmp_path):
    assert main(["train", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path / "o")]) == EXIT_IO
    (tmp_path / "bad.json").write_text('{"bogus": 1}')
    assert main(["train", "--config", str(tmp_path / "bad.json"), "--out", str(tmp_path / "o")]) == EXIT_IO


def test_gradcheck_exit_code(monkeypatch):
    import plaae.gradsuite as gs

    monkeypatch.setattr(gs, "run_suite", lambda n, s: [gs.CheckResult("relu", n, 0.0)])
    assert main(["gradcheck", "--instances", "2"]) == EXIT_OK
    monkeypatch.setattr(gs, "run_suite", lambda n, s: [gs.CheckResult("relu", n, 1.0)])
    assert main(["gradcheck", "--instances", "2"]) == EXIT_FAIL


def test_report_from_evaluation(tmp_path, clean_wav, capsys):
    out = tmp_path / "r.json"
    main(["evaluate", "--ref", str(clean_wav), "--rec", str(clean_wav), "--gap-ms", "20", "--out", str(out)])
    capsys.readouterr()
    assert main(["report", "--eval", str(out)]) == EXIT_OK
    assert "| system | 20 ms |" in capsys.readouterr().out
    assert main(["report"]) == EXIT_IO
