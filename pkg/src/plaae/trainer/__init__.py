"""Training loop and corpus provisioning."""

from .corpus import (
    CorpusEntry,
    CorpusManifest,
    energy_gate_trim,
    frame_f0,
    ingest_wav_corpus,
    synth_corpus,
    synth_utterance,
)
from .loop import (
    DESK_MODEL,
    PAPER_MODEL,
    Batch,
    TrainConfig,
    Trainer,
    ValidationItem,
    load_generator,
    overfit,
    read_log,
    sample_batch,
    train_step,
    validate,
    validation_set,
)
