"""Synthetic desk-scale corpus, SNR mixing and the JSON-lines manifest.

Clean clips are harmonic "voiced" tones with pitch drift and syllable-like
amplitude envelopes; noises are white, pink and band-limited bursts.  Train
and test mixtures draw from disjoint noise types.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ..dsp import StftParams, Waveform, round_trip
from ..errors import EmptyCorpus, SilentClean
from .wav import wav_read, wav_write

TRAIN_SNRS = (0.0, 5.0, 10.0, 15.0)
TEST_SNRS = (2.5, 7.5, 12.5, 17.5)
NOISE_TYPES = ("white", "pink", "burst_low", "burst_mid", "burst_high")
TEST_NOISE_TYPES = ("pink", "burst_mid")
BURST_BANDS = {"burst_low": (100.0, 800.0), "burst_mid": (800.0, 2500.0), "burst_high": (2500.0, 7000.0)}
CLEAN_PEAK = 0.89
MIX_PEAK = 0.999

_KIND = {"clean_train": 0, "clean_test": 1, "noise": 2}


def _rng(seed, kind, index, extra=0):
    return np.random.default_rng([seed, _KIND[kind], index, extra])


def _envelope(rng, n, sr, on=(0.08, 0.3), off=(0.03, 0.15), ramp=0.02, lead=True):
    env = np.zeros(n)
    t = int(rng.uniform(*off) * sr) if lead else 0
    r = max(1, int(ramp * sr))
    while t < n:
        length = int(rng.uniform(*on) * sr)
        seg = np.ones(length)
        k = min(r, length // 2)
        if k:
            fade = 0.5 - 0.5 * np.cos(np.pi * np.arange(k) / k)
            seg[:k] *= fade
            seg[-k:] *= fade[::-1]
        end = min(n, t + length)
        env[t:end] = seg[:end - t] * rng.uniform(0.5, 1.0)
        t = end + int(rng.uniform(*off) * sr)
    return env


def synth_clean(rng, n, sr) -> np.ndarray:
    t = np.arange(n) / sr
    f0 = rng.uniform(100.0, 220.0)
    drift = 1.0 + rng.uniform(-0.15, 0.15) * t / max(t[-1], 1e-9)
    vibrato = 1.0 + 0.02 * np.sin(2 * np.pi * rng.uniform(3.0, 7.0) * t + rng.uniform(0, 2 * np.pi))
    inst = f0 * drift * vibrato
    phase = 2 * np.pi * np.cumsum(inst) / sr
    x = np.zeros(n)
    for k in range(1, int(rng.integers(3, 7)) + 1):
        if k * inst.max() >= 0.45 * sr:
            break
        x += rng.uniform(0.5, 1.0) / k * np.sin(k * phase + rng.uniform(0, 2 * np.pi))
    x *= _envelope(rng, n, sr)
    peak = np.abs(x).max()
    if peak == 0:
        x[n // 2] = 1.0
        peak = 1.0
    return x * (CLEAN_PEAK * rng.uniform(0.5, 1.0) / peak)


def _shape_spectrum(rng, n, gain_fn):
    spec = np.fft.rfft(rng.standard_normal(n))
    return np.fft.irfft(spec * gain_fn(np.fft.rfftfreq(n)), n=n)


def synth_noise(rng, kind, n, sr) -> np.ndarray:
    if kind == "white":
        x = rng.standard_normal(n)
    elif kind == "pink":
        x = _shape_spectrum(rng, n, lambda f: np.where(f > 0, 1.0 / np.sqrt(np.maximum(f, 1e-12)), 0.0))
    elif kind in BURST_BANDS:
        lo, hi = BURST_BANDS[kind]
        hi = min(hi, 0.475 * sr)
        x = _shape_spectrum(rng, n, lambda f: ((f * sr >= lo) & (f * sr <= hi)).astype(float))
        x *= _envelope(rng, n, sr, on=(0.05, 0.25), off=(0.05, 0.3), ramp=0.01, lead=False) + 0.05
    else:
        raise ValueError(f"unknown noise type {kind!r}")
    return x * (0.1 / np.sqrt(np.mean(x ** 2)))


@dataclass(frozen=True)
class CorpusInfo:
    root: str
    n_train: int
    n_test: int
    n_noise: int
    seconds: float


def n_test_clips(n_clips):
    return max(1, math.ceil(n_clips / 5))


def synth_corpus(root, n_clips=200, duration_s=1.0, sample_rate=16000, seed=0) -> CorpusInfo:
    """Write clean/{train,test}/*.wav and noise/<type>_NNN.wav under ``root``.

    Every clip has its own RNG stream keyed on (seed, kind, index), so output
    is byte-identical across runs and independent of generation order.
    """
    if n_clips < 1:
        raise ValueError("n_clips must be >= 1")
    root = Path(root)
    n = int(round(duration_s * sample_rate))
    n_test = n_test_clips(n_clips)
    for split, count in (("train", n_clips), ("test", n_test)):
        for i in range(count):
            x = synth_clean(_rng(seed, f"clean_{split}", i), n, sample_rate)
            wav_write(root / "clean" / split / f"clean_{i:04d}.wav", Waveform(x, sample_rate))
    per_type = max(2, math.ceil((n_clips + n_test) / 10))
    for t, kind in enumerate(NOISE_TYPES):
        for i in range(per_type):
            x = synth_noise(_rng(seed, "noise", i, t), kind, n, sample_rate)
            wav_write(root / "noise" / f"{kind}_{i:03d}.wav", Waveform(x, sample_rate))
    return CorpusInfo(str(root), n_clips, n_test, per_type * len(NOISE_TYPES),
                      (n_clips + n_test + per_type * len(NOISE_TYPES)) * n / sample_rate)


@dataclass(frozen=True, eq=False)
class MixResult:
    mixture: Waveform
    clean: Waveform        # clean signal with the same peak gain applied
    noise_scale: float     # factor applied to the (tiled) noise before peak normalization
    gain: float            # peak-normalization factor applied to clean and noise alike


def mix_at_snr(clean: Waveform, noise: Waveform, snr_db: float) -> MixResult:
    """Scale ``noise`` so the full-clip SNR is exactly ``snr_db`` and add it to ``clean``."""
    if not np.isfinite(snr_db):
        raise ValueError(f"snr_db must be finite, got {snr_db}")
    if clean.sample_rate != noise.sample_rate:
        raise ValueError("clean and noise sample rates differ")
    c = clean.samples
    v = np.resize(noise.samples, c.size)
    p_clean = np.mean(c ** 2)
    p_noise = np.mean(v ** 2)
    if p_clean == 0:
        raise SilentClean("clean signal has zero power")
    if p_noise == 0:
        raise ValueError("noise signal has zero power")
    k = math.sqrt(p_clean / (p_noise * 10 ** (snr_db / 10)))
    mix = c + k * v
    peak = np.abs(mix).max()
    g = min(1.0, MIX_PEAK / peak) if peak > 0 else 1.0
    return MixResult(Waveform(g * mix, clean.sample_rate), Waveform(g * c, clean.sample_rate), k, g)


@dataclass(frozen=True)
class MixSpec:
    clean_id: str
    noise_id: str
    noise_type: str
    snr_db: float
    split: str
    seed: int
    gain: float
    clean_path: str
    noise_path: str
    mix_path: str
    sample_rate: int

    @property
    def key(self):
        return (self.clean_id, self.noise_id, self.snr_db)


class Manifest:
    def __init__(self, root, entries, sample_rate, seed):
        self.root = Path(root)
        self.entries = list(entries)
        self.sample_rate = sample_rate
        self.seed = seed
        keys = [e.key for e in self.entries]
        if len(set(keys)) != len(keys):
            raise ValueError("manifest entries must be unique by (clean_id, noise_id, snr_db)")
        for e in self.entries:
            for p in (e.clean_path, e.noise_path, e.mix_path):
                self.resolve(p)

    def resolve(self, rel):
        root = self.root.resolve()
        path = (root / rel).resolve()
        if root != path and root not in path.parents:
            raise ValueError(f"path {rel!r} escapes corpus root {root}")
        return path

    def split(self, name):
        return [e for e in self.entries if e.split == name]

    def to_jsonl(self) -> str:
        return "".join(json.dumps(asdict(e), sort_keys=True) + "\n" for e in self.entries)

    def digest(self) -> str:
        return hashlib.sha256(self.to_jsonl().encode("utf-8")).hexdigest()

    def write(self, path=None):
        path = Path(path) if path else self.root / "manifest.jsonl"
        path.write_text(self.to_jsonl(), encoding="utf-8")
        return path

    @classmethod
    def load(cls, path, root=None):
        path = Path(path)
        entries = [MixSpec(**json.loads(line)) for line in path.read_text(encoding="utf-8").splitlines() if line]
        if not entries:
            raise EmptyCorpus(f"{path}: manifest has no entries")
        return cls(root or path.parent, entries, entries[0].sample_rate, entries[0].seed)


def _noise_type(path):
    return path.stem.rsplit("_", 1)[0]


def build_manifest(root, snrs_train=TRAIN_SNRS, snrs_test=TEST_SNRS, seed=0,
                   test_noise_types=TEST_NOISE_TYPES, write_mixtures=True) -> Manifest:
    """Pair every clean clip with a noise clip and an SNR; write mixtures and manifest.jsonl.

    SNRs cycle through the split's list so each level is equally represented;
    noise clips are drawn with a seeded RNG from the split's own noise types.
    """
    root = Path(root)
    clean = {s: sorted((root / "clean" / s).glob("*.wav")) for s in ("train", "test")}
    noises = sorted((root / "noise").glob("*.wav"))
    if not clean["train"] or not clean["test"] or not noises:
        raise EmptyCorpus(f"{root}: missing clean train/test clips or noise clips")
    by_split = {
        "train": [p for p in noises if _noise_type(p) not in test_noise_types],
        "test": [p for p in noises if _noise_type(p) in test_noise_types],
    }
    for split, pool in by_split.items():
        if not pool:
            raise EmptyCorpus(f"{root}: no noise clips available for the {split} split")
    rng = np.random.default_rng(seed)
    entries, sample_rate = [], None
    for split, snrs in (("train", snrs_train), ("test", snrs_test)):
        pool = by_split[split]
        for i, cpath in enumerate(clean[split]):
            npath = pool[int(rng.integers(len(pool)))]
            snr = float(snrs[i % len(snrs)])
            cw, nw = wav_read(cpath), wav_read(npath)
            sample_rate = cw.sample_rate
            res = mix_at_snr(cw, nw, snr)
            mix_rel = f"mix/{split}/{cpath.stem}__{npath.stem}__{snr:g}dB.wav"
            if write_mixtures:
                wav_write(root / mix_rel, res.mixture)
            entries.append(MixSpec(
                clean_id=f"{split}/{cpath.stem}", noise_id=npath.stem, noise_type=_noise_type(npath),
                snr_db=snr, split=split, seed=int(seed), gain=res.gain,
                clean_path=cpath.relative_to(root).as_posix(), noise_path=npath.relative_to(root).as_posix(),
                mix_path=mix_rel, sample_rate=cw.sample_rate))
    manifest = Manifest(root, entries, sample_rate, seed)
    manifest.write()
    return manifest


def load_pair(manifest: Manifest, entry: MixSpec):
    """(noisy, clean) sample arrays for one entry; clean carries the mixing gain."""
    noisy = wav_read(manifest.resolve(entry.mix_path)).samples
    clean = wav_read(manifest.resolve(entry.clean_path)).samples * entry.gain
    return noisy, clean


class CleanStarCache:
    """On-disk cache of Clean* waveforms, keyed by entry and STFT parameter hash."""

    def __init__(self, root, params: StftParams):
        self.params = params
        self.dir = Path(root) / "cache" / f"clean_star-{params.key()}"

    def path(self, entry: MixSpec):
        key = hashlib.sha1(f"{entry.clean_path}|{entry.gain!r}".encode()).hexdigest()[:16]
        return self.dir / f"{key}.npy"

    def get(self, entry: MixSpec, clean: np.ndarray) -> np.ndarray:
        path = self.path(entry)
        if path.exists():
            cached = np.load(path)
            if cached.shape == clean.shape:
                return cached
        wave = round_trip(clean, self.params)
        self.dir.mkdir(parents=True, exist_ok=True)
        np.save(path, wave)
        return wave
