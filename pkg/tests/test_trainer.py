import dataclasses
import wave

import numpy as np
import pytest

from plaae.errors import AudioFormatError, ConfigError, TrainingDivergence
from plaae.dsp import AudioBuffer
from plaae.losses import lsgan_generator_adv_loss, multi_stft_loss
from plaae.metrics import estimate_f0
from plaae.model import DiscriminatorSet, PlaaeModel, conceal_forward
from plaae.tensor import ADAM_BETAS, ADAM_LR, Adam, Tensor
from plaae.trainer import (
    TrainConfig,
    Trainer,
    ValidationItem,
    ingest_wav_corpus,
    load_generator,
    read_log,
    sample_batch,
    synth_corpus,
    train_step,
    validate,
    validation_set,
)
from plaae.trainer.corpus import assign_splits, energy_gate_trim, frame_f0
from plaae.trainer.loop import GAP_PACKETS
from plaae.wav import write_wav

from conftest import TINY, speechlike


def small_cfg(**kw):
    base = dict(batch_size=2, segment_seconds=0.2, seed=3, model=TINY, validation_items=2,
                validation_interval=2, checkpoint_interval=2, log_interval=1)
    base.update(kw)
    return TrainConfig(**base)


@pytest.fixture(scope="module")
def waves():
    return [speechlike(6400, seed=s, f0=100 + 20 * s) for s in range(3)]


def test_reference_hyperparameters():
    cfg = TrainConfig()
    assert (cfg.lr, cfg.betas, cfg.alpha) == (3e-4, (0.5, 0.9), 1.0)
    assert (ADAM_LR, ADAM_BETAS) == (3e-4, (0.5, 0.9))
    paper = TrainConfig.paper()
    assert paper.batch_size == 48 and paper.max_iterations == 1_500_000
    assert cfg.segment_samples == 16000 and cfg.segment_samples // 160 == 100
    assert GAP_PACKETS == (1, 2, 3, 6)


def test_config_round_trip_and_validation():
    cfg = small_cfg(grad_clip=5.0)
    assert TrainConfig.from_json(cfg.to_json()) == cfg
    with pytest.raises(ConfigError):
        TrainConfig.from_dict({"batch_size": 2, "bogus": 1})
    with pytest.raises(ConfigError):
        TrainConfig(segment_seconds=0.01)


def test_sample_batch_is_deterministic(waves):
    cfg = small_cfg()
    G = PlaaeModel(TINY)
    a, b = sample_batch(waves, 7, cfg, G), sample_batch(waves, 7, cfg, G)
    assert np.array_equal(a.clean, b.clean) and np.array_equal(a.features, b.features)
    assert a.features.shape == (2, 81, 20)
    for lossy, clean, mask in zip(a.lossy, a.clean, a.masks):
        lost = mask.sample_mask(3200)
        assert not lossy[lost].any() and np.array_equal(lossy[~lost], clean[~lost])
    assert not np.array_equal(sample_batch(waves, 8, cfg, G).clean, a.clean)


def one_step(waves):
    cfg = small_cfg()
    G, D = PlaaeModel(TINY, seed=0), DiscriminatorSet(TINY.discriminator, seed=1)
    rec = train_step(sample_batch(waves, 0, cfg, G), G, D, Adam(G.params), Adam(D.params))
    return rec, G.state_dict()


def test_train_step_reproducible(waves):
    (r1, g1), (r2, g2) = one_step(waves), one_step(waves)
    assert r1 == r2
    assert set(r1) == {"vd", "adv", "mstft"}
    assert all(np.array_equal(g1[k], g2[k]) for k in g1)


def test_constant_one_discriminator_gives_zero_adversarial_gradient(waves):
    G, D = PlaaeModel(TINY, seed=0), DiscriminatorSet(TINY.discriminator, seed=1)
    for k, p in D.params.items():
        if k.endswith(".g"):
            p.data = np.zeros_like(p.data)
        elif k.endswith(".bias"):
            p.data = np.ones_like(p.data) if ".layer5." in k else np.zeros_like(p.data)
    D.set_requires_grad(False)
    batch = sample_batch(waves, 0, small_cfg(), G)
    scores = D(G(Tensor(batch.features)))
    assert all(np.all(s.data == 1.0) for s in scores)
    adv = lsgan_generator_adv_loss(scores)
    assert adv.item() == 0.0
    adv.backward()
    assert all(p.grad is None or not np.any(p.grad) for p in G.params.values())


def test_divergence_reports_batch_seed(waves):
    cfg = small_cfg()
    G, D = PlaaeModel(TINY), DiscriminatorSet(TINY.discriminator)
    batch = sample_batch(waves, 5, cfg, G)
    batch.clean[0, 100] = np.nan
    with pytest.raises(TrainingDivergence) as exc:
        train_step(batch, G, D, Adam(G.params), Adam(D.params))
    assert exc.value.batch_seed == (3, 5)


def test_validate_perfect_and_per_item(waves):
    cfg = small_cfg()
    items = validation_set({f"u{i}": w for i, w in enumerate(waves)}, cfg)
    assert len(items) == 2
    perfect = {it.utterance_id: it.clean for it in items}
    lookup = iter([perfect[it.utterance_id] for it in items])
    assert validate(lambda lossy, mask: next(lookup), items) == 0.0
    G = PlaaeModel(TINY, seed=2)
    per = [multi_stft_loss(it.clean, conceal_forward(G, AudioBuffer(it.lossy), it.mask).samples).item() for it in items]
    assert validate(G, items) == pytest.approx(np.mean(per), rel=1e-12)
    with pytest.raises(ValueError):
        validate(G, [])


def test_validation_set_is_fixed(waves):
    cfg = small_cfg()
    d = {f"u{i}": w for i, w in enumerate(waves)}
    a, b = validation_set(d, cfg), validation_set(d, cfg)
    assert [x.mask for x in a] == [x.mask for x in b]
    assert isinstance(a[0], ValidationItem)


def test_checkpoint_round_trip_then_step_is_bit_exact(tmp_path, waves):
    cfg = small_cfg()
    t1 = Trainer(cfg, waves)
    t1.fit(2)
    t1.save(tmp_path / "c.ckpt")
    t2 = Trainer(cfg, waves)
    t2.load(tmp_path / "c.ckpt")
    r1, r2 = t1.train_step(), t2.train_step()
    assert r1 == r2
    s1, s2 = t1.state_tensors(), t2.state_tensors()
    assert all(s1[k].tobytes() == s2[k].tobytes() for k in s1)


def test_fit_logs_and_best_checkpoint(tmp_path, waves):
    cfg = small_cfg()
    t = Trainer(cfg, waves, {f"u{i}": w for i, w in enumerate(waves)}, out_dir=tmp_path)
    hist = t.fit(4)
    assert [h["step"] for h in hist] == [1, 2, 3, 4]
    log = read_log(tmp_path / "train_log.jsonl")
    assert len(log) == 4 and "val_mstft" in log[1]
    assert (tmp_path / "best.ckpt").exists() and (tmp_path / "last.ckpt").exists()
    assert t.best_val == min(h["val_mstft"] for h in hist if "val_mstft" in h)
    G = load_generator(tmp_path / "last.ckpt")
    assert all(np.array_equal(G.params[k].data, t.G.params[k].data) for k in G.params)


def test_empty_training_set_rejected():
    with pytest.raises(ConfigError):
        Trainer(small_cfg(), [])


# -- corpora -------------------------------------------------------------------

def test_synth_corpus_deterministic_and_long_enough():
    a, b = synth_corpus(8, seed=1), synth_corpus(8, seed=1)
    assert [e.utterance_id for e in a.entries] == [e.utterance_id for e in b.entries]
    for e in a.entries:
        x = a.load(e).samples
        assert np.array_equal(x, b.load(e).samples)
        assert 2.0 <= x.shape[0] / 16000 <= 4.0
        assert np.max(np.abs(x)) <= 1.0


def test_synth_corpus_splits_disjoint_by_speaker():
    m = synth_corpus(40, seed=0)
    tr, va, te = m.speakers("train"), m.speakers("valid"), m.speakers("test")
    assert tr and va and te
    assert not (tr & va) and not (tr & te) and not (va & te)
    assert [len(m.split(s)) for s in ("train", "valid", "test")] == [32, 4, 4]


def test_assign_splits_fractions():
    split = assign_splits([f"s{i}" for i in range(10)])
    assert sorted(split.values()).count("train") == 8


def test_synth_f0_recoverable():
    m = synth_corpus(6, seed=2)
    errors = []
    for e in m.entries:
        track = estimate_f0(m.load(e))
        ref = frame_f0(m.f0[e.utterance_id])
        both = track.voiced & (ref > 0)
        errors.extend(np.abs(track.f0[both] - ref[both]))
    assert np.median(errors) < 3.0


def test_energy_gate_trims_leading_silence(tmp_path):
    tone = 0.5 * np.cos(2 * np.pi * 200 * np.arange(16000) / 16000)
    x = np.concatenate([np.zeros(3200), tone, np.zeros(3200)])
    y = energy_gate_trim(x)
    lead = np.flatnonzero(np.abs(y) > 0)[0]
    assert lead <= 1600 and len(y) - 1 - np.flatnonzero(np.abs(y) > 0)[-1] <= 1600
    assert not energy_gate_trim(np.zeros(3200)).size


def test_ingest_directory(tmp_path):
    tone = 0.5 * np.cos(2 * np.pi * 200 * np.arange(16000) / 16000)
    for spk in ("a", "b", "c"):
        (tmp_path / spk).mkdir()
        write_wav(tmp_path / spk / "u1.wav", np.concatenate([np.zeros(3200), tone]))
    m = ingest_wav_corpus(tmp_path)
    assert len(m) == 3 and {e.speaker_id for e in m.entries} == {"a", "b", "c"}
    for e in m.entries:
        x = m.load(e).samples
        assert np.flatnonzero(np.abs(x) > 0)[0] <= 1600


def test_ingest_empty_and_bad_files(tmp_path, caplog):
    assert len(ingest_wav_corpus(tmp_path)) == 0
    assert "no WAV files" in caplog.text
    with wave.open(str(tmp_path / "stereo.wav"), "wb") as w:
        w.setnchannels(2)
        w.setsampwidth(2)
        w.setframerate(16000)
        w.writeframes(b"\0\0" * 40)
    with pytest.raises(AudioFormatError, match="stereo.wav"):
        ingest_wav_corpus(tmp_path)


def test_ingest_rejects_other_rates(tmp_path):
    with wave.open(str(tmp_path / "x.wav"), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(22050)
        w.writeframes(b"\0\0" * 40)
    with pytest.raises(AudioFormatError, match="x.wav"):
        ingest_wav_corpus(tmp_path)


def test_dataclass_configs_are_frozen():
    with pytest.raises(dataclasses.FrozenInstanceError):
        TrainConfig().lr = 1.0
