from .corpus import (
    NOISE_TYPES,
    TEST_NOISE_TYPES,
    TEST_SNRS,
    TRAIN_SNRS,
    CleanStarCache,
    Manifest,
    MixResult,
    MixSpec,
    build_manifest,
    load_pair,
    mix_at_snr,
    synth_corpus,
)
from .wav import wav_read, wav_write

__all__ = [
    "NOISE_TYPES", "TEST_NOISE_TYPES", "TEST_SNRS", "TRAIN_SNRS", "CleanStarCache", "Manifest",
    "MixResult", "MixSpec", "build_manifest", "load_pair", "mix_at_snr", "synth_corpus",
    "wav_read", "wav_write",
]
