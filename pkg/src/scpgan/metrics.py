"""Segmental SNR and the normalized-SSNR score used as the discriminator target.

The score is reported as ``q_ssnr``.  It is a stand-in for normalized PESQ and
must never be labeled as PESQ.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dsp import Waveform
from .errors import AllSilent, InvalidParams, LengthMismatch


@dataclass(frozen=True)
class SsnrParams:
    frame_len: int = 512
    clamp_lo: float = -10.0
    clamp_hi: float = 35.0
    silence_floor: float = -40.0

    def __post_init__(self):
        if not self.clamp_lo < self.clamp_hi:
            raise InvalidParams("clamp_lo must be below clamp_hi")
        if self.frame_len < 64:
            raise InvalidParams("frame_len must be >= 64")


DEFAULT_SSNR = SsnrParams()


def _arrays(a, b):
    if isinstance(a, Waveform) and isinstance(b, Waveform) and a.sample_rate != b.sample_rate:
        raise LengthMismatch(f"sample rates differ: {a.sample_rate} vs {b.sample_rate}")
    a = a.samples if isinstance(a, Waveform) else np.asarray(a, dtype=np.float64)
    b = b.samples if isinstance(b, Waveform) else np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise LengthMismatch(f"lengths differ: {a.shape} vs {b.shape}")
    return a, b


def frame_snrs(enhanced, clean, p: SsnrParams = DEFAULT_SSNR) -> np.ndarray:
    """Clamped per-frame SNR (dB) over the frames that pass the silence gate."""
    enh, ref = _arrays(enhanced, clean)
    n = ref.size // p.frame_len
    if n == 0:
        ref_f, enh_f = ref[None, :], enh[None, :]
    else:
        ref_f = ref[:n * p.frame_len].reshape(n, p.frame_len)
        enh_f = enh[:n * p.frame_len].reshape(n, p.frame_len)
    sig = np.sum(ref_f ** 2, axis=1)
    err = np.sum((ref_f - enh_f) ** 2, axis=1)
    peak = sig.max()
    if peak <= 0:
        raise AllSilent("clean reference is all zeros")
    keep = sig >= peak * 10 ** (p.silence_floor / 10)
    sig, err = sig[keep], err[keep]
    with np.errstate(divide="ignore"):
        snr = np.where(err > 0, 10 * np.log10(sig / np.where(err > 0, err, 1.0)), np.inf)
    return np.clip(snr, p.clamp_lo, p.clamp_hi)


def ssnr(enhanced, clean, p: SsnrParams = DEFAULT_SSNR) -> float:
    """Segmental SNR in dB: mean clamped frame SNR over non-silent clean frames."""
    snrs = frame_snrs(enhanced, clean, p)
    if snrs.size == 0:
        raise AllSilent("no frame passes the silence gate")
    return float(snrs.mean())


def q_score(a, ref, p: SsnrParams = DEFAULT_SSNR) -> float:
    """SSNR mapped linearly from [clamp_lo, clamp_hi] onto [0, 1]."""
    return (ssnr(a, ref, p) - p.clamp_lo) / (p.clamp_hi - p.clamp_lo)


def q_batch(a: np.ndarray, ref: np.ndarray, p: SsnrParams = DEFAULT_SSNR) -> np.ndarray:
    return np.array([q_score(x, y, p) for x, y in zip(a, ref)])


def global_snr(signal, noise) -> float:
    signal, noise = _arrays(signal, noise)
    return float(10 * np.log10(np.sum(signal ** 2) / np.sum(noise ** 2)))
