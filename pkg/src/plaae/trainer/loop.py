"""Alternating least-squares adversarial training with validation tracking and checkpoints."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .. import PACKET_LENGTH, SAMPLE_RATE
from ..dsp import AudioBuffer
from ..errors import ConfigError, TrainingDivergence
from ..losses import (
    MultiStftConfig,
    lsgan_discriminator_loss,
    lsgan_generator_adv_loss,
    multi_stft_loss,
)
from ..model import (
    DecoderConfig,
    DiscriminatorConfig,
    DiscriminatorSet,
    EncoderConfig,
    ModelConfig,
    PlaaeModel,
    conceal_forward,
)
from ..packetsim import LossMask, LossProtocol, inject_losses, rng_for
from ..tensor import Adam, Tensor, load_checkpoint, no_grad, save_checkpoint
from ..tensor.optim import ADAM_BETAS, ADAM_LR

log = logging.getLogger(__name__)

GAP_PACKETS = (1, 2, 3, 6)  # 20, 40, 60, 120 ms
DROP_PROBABILITY = 0.1

# Narrower than the reference widths so that 20k steps fit a single CPU core.
DESK_MODEL = ModelConfig(
    encoder=EncoderConfig(hidden_channels=256, embedding_dim=128),
    decoder=DecoderConfig(residual_channels=(128, 64, 32, 16)),
    discriminator=DiscriminatorConfig(channels=(8, 16, 32, 32, 32)),
)
PAPER_MODEL = ModelConfig()

_BATCH_STREAM = 0x5EED
_VALID_STREAM = 0xA11D


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 4
    segment_seconds: float = 1.0
    max_iterations: int = 20_000
    lr: float = ADAM_LR
    betas: tuple = ADAM_BETAS
    alpha: float = 1.0
    seed: int = 0
    validation_interval: int = 500
    checkpoint_interval: int = 1000
    log_interval: int = 10
    gap_packets: tuple = GAP_PACKETS
    drop_probability: float = DROP_PROBABILITY
    validation_items: int = 16
    synth_utterances: int = 200
    corpus_seed: int = 0
    discriminator_lr: float | None = None  # None: same as ``lr``
    grad_clip: float | None = None  # global-norm clipping, off by default
    model: ModelConfig = field(default_factory=lambda: DESK_MODEL)

    def __post_init__(self):
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))
        object.__setattr__(self, "gap_packets", tuple(int(g) for g in self.gap_packets))
        if self.batch_size < 1 or self.max_iterations < 0:
            raise ConfigError("batch_size must be positive and max_iterations non-negative")
        if self.segment_samples % PACKET_LENGTH:
            raise ConfigError("segment length must be a whole number of packets")
        if not self.gap_packets or min(self.gap_packets) < 1:
            raise ConfigError("gap_packets needs positive packet counts")

    @property
    def segment_samples(self):
        return int(round(self.segment_seconds * SAMPLE_RATE))

    @classmethod
    def paper(cls, **overrides):
        """Reference-scale preset: 48 one-second segments for 1.5 M iterations."""
        return cls(**{"batch_size": 48, "max_iterations": 1_500_000, "model": PAPER_MODEL, **overrides})

    def to_dict(self):
        d = asdict(self)
        d["model"] = self.model.to_dict()
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        model = ModelConfig.from_dict(d.pop("model")) if "model" in d else DESK_MODEL
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown TrainConfig fields: {sorted(unknown)}")
        return cls(model=model, **d)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


@dataclass
class Batch:
    clean: np.ndarray  # [B, T]
    lossy: np.ndarray  # [B, T]
    features: np.ndarray  # [B, 81, T / hop]
    masks: list
    seed: tuple


def _segment(x, start, n):
    seg = x[start : start + n]
    return np.concatenate([seg, np.zeros(n - seg.shape[0])]) if seg.shape[0] < n else seg


def make_item(model: PlaaeModel, clean, mask: LossMask):
    lossy = clean * ~mask.sample_mask(clean.shape[0])
    return lossy, model.features(lossy, mask)


def sample_batch(waveforms, step, cfg: TrainConfig, model: PlaaeModel):
    """Batch for ``step``: fully determined by ``(cfg.seed, step)``."""
    rng = rng_for(cfg.seed, _BATCH_STREAM + step * 65_536)
    n = cfg.segment_samples
    count = n // PACKET_LENGTH
    clean, lossy, feats, masks = [], [], [], []
    for b in range(cfg.batch_size):
        x = waveforms[int(rng.integers(len(waveforms)))]
        start = int(rng.integers(0, max(1, x.shape[0] - n + 1)))
        seg = _segment(x, start, n)
        gap = cfg.gap_packets[int(rng.integers(len(cfg.gap_packets)))]
        protocol = LossProtocol(cfg.drop_probability, gap, seed=int(rng.integers(2**62)))
        mask = inject_losses(count, protocol)
        lo, f = make_item(model, seg, mask)
        clean.append(seg)
        lossy.append(lo)
        feats.append(f)
        masks.append(mask)
    return Batch(np.stack(clean), np.stack(lossy), np.stack(feats), masks, (cfg.seed, step))


def _clip(params, max_norm):
    grads = [p.grad for p in params.values() if p.grad is not None]
    total = math.sqrt(sum(float((g * g).sum()) for g in grads))
    if total > max_norm:
        for g in grads:
            g *= max_norm / total


def _finite_or_raise(record, batch_seed):
    bad = [k for k, v in record.items() if not math.isfinite(v)]
    if bad:
        raise TrainingDivergence(f"non-finite {', '.join(bad)} for batch seed {batch_seed}", batch_seed, record)


def train_step(batch: Batch, G: PlaaeModel, D: DiscriminatorSet, opt_g: Adam, opt_d: Adam,
               alpha=1.0, stft_cfg: MultiStftConfig = MultiStftConfig(), grad_clip=None):
    """One discriminator update followed by one generator update.

    The generator forward pass is shared: the discriminator sees a detached
    copy, and the generator graph (built before any parameter changes) is
    reused for the generator update against the freshly updated
    discriminator.
    """
    fake = G(Tensor(batch.features))
    clean = Tensor(batch.clean)

    # discriminator: real -> 1, fake -> 0
    vd = lsgan_discriminator_loss(D(clean), D(Tensor(fake.data)))
    _finite_or_raise({"vd": vd.item()}, batch.seed)
    opt_d.zero_grad()
    vd.backward()
    if grad_clip:
        _clip(D.params, grad_clip)
    opt_d.step()

    # generator against a frozen discriminator
    D.set_requires_grad(False)
    try:
        adv = lsgan_generator_adv_loss(D(fake))
        mstft = multi_stft_loss(clean, fake, stft_cfg)
        record = {"vd": vd.item(), "adv": adv.item(), "mstft": mstft.item()}
        _finite_or_raise(record, batch.seed)
        total = adv + alpha * mstft if alpha else adv
        opt_g.zero_grad()
        total.backward()
        if grad_clip:
            _clip(G.params, grad_clip)
        opt_g.step()
    finally:
        D.set_requires_grad(True)
    return record


def overfit(clean, mask: LossMask, steps, model_cfg: ModelConfig = DESK_MODEL, seed=0, callback=None):
    """Train on a single fixed ``(clean, mask)`` example; returns the per-step loss records.

    A capacity smoke test: the same batch is presented at every step, so the
    multi-STFT loss should fall steadily.
    """
    G = PlaaeModel(model_cfg, seed=seed)
    D = DiscriminatorSet(model_cfg.discriminator, seed=seed + 1)
    opt_g, opt_d = Adam(G.params), Adam(D.params)
    clean = np.asarray(clean, dtype=np.float64)
    lossy, feats = make_item(G, clean, mask)
    batch = Batch(clean[None], lossy[None], feats[None], [mask], (seed, 0))
    history = []
    for step in range(1, steps + 1):
        rec = {"step": step, **train_step(batch, G, D, opt_g, opt_d)}
        history.append(rec)
        if callback is not None:
            callback(rec)
    return history


# -- validation --------------------------------------------------------------

@dataclass(frozen=True)
class ValidationItem:
    utterance_id: str
    clean: np.ndarray
    lossy: np.ndarray
    mask: LossMask


def validation_set(waveforms: dict, cfg: TrainConfig, seed=None):
    """Fixed validation segments and masks, seeded once from ``seed`` (default ``cfg.seed``)."""
    seed = cfg.seed if seed is None else seed
    n = cfg.segment_samples
    count = n // PACKET_LENGTH
    items = []
    for k, uid in enumerate(sorted(waveforms)[: cfg.validation_items]):
        rng = rng_for(seed, _VALID_STREAM + k)
        x = waveforms[uid]
        x = x.samples if isinstance(x, AudioBuffer) else np.asarray(x)
        clean = _segment(x, 0, n)
        gap = cfg.gap_packets[k % len(cfg.gap_packets)]
        mask = inject_losses(count, LossProtocol(cfg.drop_probability, gap, seed=int(rng.integers(2**62))))
        items.append(ValidationItem(uid, clean, clean * ~mask.sample_mask(n), mask))
    return items


def validate(model, items, stft_cfg: MultiStftConfig = MultiStftConfig()):
    """Mean multi-STFT loss of reconstructions over the validation items.

    ``model`` is a :class:`PlaaeModel` or any callable ``(lossy AudioBuffer, mask) -> samples``.
    """
    if not items:
        raise ValueError("empty validation set")
    losses = []
    with no_grad():
        for it in items:
            lossy = AudioBuffer(it.lossy)
            if isinstance(model, PlaaeModel):
                out = conceal_forward(model, lossy, it.mask).samples
            else:
                out = model(lossy, it.mask)
                out = out.samples if isinstance(out, AudioBuffer) else np.asarray(out, dtype=np.float64)
            losses.append(multi_stft_loss(it.clean, out, stft_cfg).item())
    return float(np.mean(losses))


# -- trainer -----------------------------------------------------------------

class Trainer:
    """Owns the models, optimizers and bookkeeping for one training run."""

    def __init__(self, cfg: TrainConfig, train_waveforms, valid_waveforms=None, out_dir=None):
        self.cfg = cfg
        self.train = [w.samples if isinstance(w, AudioBuffer) else np.asarray(w) for w in train_waveforms]
        if not self.train:
            raise ConfigError("training set is empty")
        self.G = PlaaeModel(cfg.model, seed=cfg.seed)
        self.D = DiscriminatorSet(cfg.model.discriminator, seed=cfg.seed + 1)
        self.opt_g = Adam(self.G.params, cfg.lr, cfg.betas)
        self.opt_d = Adam(self.D.params, cfg.discriminator_lr or cfg.lr, cfg.betas)
        self.stft_cfg = MultiStftConfig(alpha=cfg.alpha)
        self.valid = validation_set(valid_waveforms, cfg) if valid_waveforms else []
        self.step = 0
        self.best_val = math.inf
        self.out_dir = Path(out_dir) if out_dir is not None else None
        if self.out_dir is not None:
            self.out_dir.mkdir(parents=True, exist_ok=True)

    # one iteration
    def train_step(self):
        batch = sample_batch(self.train, self.step, self.cfg, self.G)
        record = train_step(batch, self.G, self.D, self.opt_g, self.opt_d,
                            self.cfg.alpha, self.stft_cfg, self.cfg.grad_clip)
        self.step += 1
        return {"step": self.step, **record}

    def fit(self, n_steps=None, callback=None):
        """Train until ``n_steps`` more iterations (default: up to ``max_iterations``)."""
        target = self.cfg.max_iterations if n_steps is None else self.step + n_steps
        history = []
        while self.step < target:
            rec = self.train_step()
            if self.valid and self.cfg.validation_interval and self.step % self.cfg.validation_interval == 0:
                rec["val_mstft"] = validate(self.G, self.valid, self.stft_cfg)
                if rec["val_mstft"] < self.best_val:
                    self.best_val = rec["val_mstft"]
                    if self.out_dir is not None:
                        self.save(self.out_dir / "best.ckpt")
            history.append(rec)
            if self.out_dir is not None:
                if self.step % self.cfg.log_interval == 0 or "val_mstft" in rec:
                    with open(self.out_dir / "train_log.jsonl", "a") as fh:
                        fh.write(json.dumps(rec) + "\n")
                if self.cfg.checkpoint_interval and self.step % self.cfg.checkpoint_interval == 0:
                    self.save(self.out_dir / "last.ckpt")
            if callback is not None:
                callback(rec)
        return history

    # persistence
    def state_tensors(self):
        t = {f"G.{k}": v for k, v in self.G.state_dict().items()}
        t.update({f"D.{k}": v for k, v in self.D.state_dict().items()})
        t.update(self.opt_g.state_tensors("adamG"))
        t.update(self.opt_d.state_tensors("adamD"))
        return t

    def save(self, path):
        meta = {
            "step": self.step,
            "best_val": self.best_val if math.isfinite(self.best_val) else None,
            "adam_steps": [self.opt_g.state.step, self.opt_d.state.step],
            "train_config": self.cfg.to_dict(),
        }
        return save_checkpoint(path, self.state_tensors(), meta)

    def load(self, path):
        tensors, meta = load_checkpoint(path)
        self.G.load_state_dict({k[2:]: v for k, v in tensors.items() if k.startswith("G.")})
        self.D.load_state_dict({k[2:]: v for k, v in tensors.items() if k.startswith("D.")})
        g_steps, d_steps = meta["adam_steps"]
        self.opt_g.load_state_tensors(tensors, "adamG", g_steps)
        self.opt_d.load_state_tensors(tensors, "adamD", d_steps)
        self.step = int(meta["step"])
        self.best_val = meta["best_val"] if meta.get("best_val") is not None else math.inf
        return meta


def load_generator(path) -> PlaaeModel:
    """Generator from a training checkpoint (the config travels inside the file)."""
    tensors, meta = load_checkpoint(path)
    cfg = TrainConfig.from_dict(meta["train_config"])
    G = PlaaeModel(cfg.model, seed=cfg.seed)
    G.load_state_dict({k[2:]: v for k, v in tensors.items() if k.startswith("G.")})
    G.set_requires_grad(False)
    return G


def read_log(path):
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


__all__ = [
    "Batch", "DESK_MODEL", "PAPER_MODEL", "TrainConfig", "Trainer", "ValidationItem",
    "load_generator", "make_item", "overfit", "read_log", "sample_batch", "train_step", "validate", "validation_set",
]
