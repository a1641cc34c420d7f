"""Windowed STFT / iSTFT and the consistency projection built on them.

Spectra are one-sided (``fft_size // 2 + 1`` bins) and unnormalized on the
analysis side, so ``stft`` of a length-N frame is ``np.fft.rfft``.  The
synthesis side divides by the overlap-added window product, which makes
``istft(stft(x)) == x`` wherever that product is nonzero.

The array-level helpers (``analysis``, ``synthesis`` and their adjoints)
accept arbitrary leading batch dimensions; the autodiff engine uses them
directly.
"""
from __future__ import annotations

import functools
import hashlib
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import InvalidParams, ParamMismatch, ShapeMismatch, TooShort

SAMPLE_RATES = (8000, 16000, 48000)
WINDOWS = ("hann", "sqrt_hann")


@dataclass(frozen=True, eq=False)
class Waveform:
    samples: np.ndarray
    sample_rate: int = 16000

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=np.float64)
        if x.ndim != 1:
            raise ShapeMismatch(f"waveform must be 1-D, got shape {x.shape}")
        if x.size < 1:
            raise TooShort("waveform must contain at least one sample")
        if not np.all(np.isfinite(x)):
            raise ValueError("waveform contains non-finite samples")
        if self.sample_rate not in SAMPLE_RATES:
            raise ValueError(f"unsupported sample rate {self.sample_rate}")
        object.__setattr__(self, "samples", x)

    def __len__(self):
        return self.samples.size

    @property
    def duration(self):
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class StftParams:
    """STFT configuration.

    ``window`` names an analysis/synthesis pair: ``sqrt_hann`` uses the
    square-root periodic Hann window on both sides, ``hann`` uses Hann for
    analysis and a rectangular synthesis window.
    """

    fft_size: int = 512
    hop: int = 256
    window: str = "sqrt_hann"
    center_pad: bool = True

    @property
    def n_bins(self):
        return self.fft_size // 2 + 1

    def analysis_window(self):
        hann = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(self.fft_size) / self.fft_size)
        if self.window == "hann":
            return hann
        if self.window == "sqrt_hann":
            return np.sqrt(hann)
        raise InvalidParams(f"unknown window {self.window!r}")

    def synthesis_window(self):
        if self.window == "hann":
            return np.ones(self.fft_size)
        return self.analysis_window()

    def validate(self):
        _validate(self)
        return self

    def key(self):
        """Short stable hash, used to key cached preprocessing artifacts."""
        text = f"{self.fft_size}:{self.hop}:{self.window}:{int(self.center_pad)}"
        return hashlib.sha1(text.encode()).hexdigest()[:12]

    def to_dict(self):
        return {"fft_size": self.fft_size, "hop": self.hop,
                "window": self.window, "center_pad": self.center_pad}


DEFAULT_PARAMS = StftParams()


@dataclass(frozen=True, eq=False)
class Spectrogram:
    bins: np.ndarray
    params: StftParams
    origin_length: int
    sample_rate: int = 16000

    def __post_init__(self):
        bins = np.asarray(self.bins, dtype=np.complex128)
        if bins.ndim < 2 or bins.shape[-1] != self.params.n_bins:
            raise ShapeMismatch(f"expected [..., frames, {self.params.n_bins}] bins, got {bins.shape}")
        expected = n_frames(self.origin_length, self.params)
        if bins.shape[-2] != expected:
            raise ShapeMismatch(
                f"{bins.shape[-2]} frames inconsistent with origin_length "
                f"{self.origin_length} (expected {expected})")
        object.__setattr__(self, "bins", bins)

    @property
    def magnitude(self):
        return np.abs(self.bins)

    @property
    def n_frames(self):
        return self.bins.shape[-2]


def check_cola(params: StftParams) -> float:
    """Max relative deviation of the overlap-added window product from a constant.

    The product of analysis and synthesis windows is folded modulo the hop,
    which is exactly the steady-state overlap-add sum.  A perfect COLA pair
    returns 0; the constant gain itself is divided out by ``istft``.
    """
    prod = params.analysis_window() * params.synthesis_window()
    folded = np.zeros(params.hop)
    np.add.at(folded, np.arange(params.fft_size) % params.hop, prod)
    gain = folded.mean()
    if gain <= 0:
        return float("inf")
    return float(np.max(np.abs(folded / gain - 1.0)))


@functools.lru_cache(maxsize=None)
def _validate(params):
    n, h = params.fft_size, params.hop
    if params.window not in WINDOWS:
        raise InvalidParams(f"window must be one of {WINDOWS}, got {params.window!r}")
    if n < 4 or n % 2:
        raise InvalidParams(f"fft_size must be an even integer >= 4, got {n}")
    if h < 1 or n % h:
        raise InvalidParams(f"hop {h} must divide fft_size {n}")
    if h > n // 2:
        raise InvalidParams(f"hop {h} exceeds fft_size/2")
    dev = check_cola(params)
    if dev > 1e-9:
        raise InvalidParams(f"window/hop pair violates COLA (deviation {dev:.3g})")


def n_frames(length: int, params: StftParams) -> int:
    if params.center_pad:
        return 1 + -(-length // params.hop)
    if length < params.fft_size:
        raise TooShort(f"need at least {params.fft_size} samples without center padding, got {length}")
    return 1 + -(-(length - params.fft_size) // params.hop)


@dataclass(frozen=True, eq=False)
class _Layout:
    frames: int
    padded: int
    offset: int
    index: np.ndarray      # padded position -> sample index; ``length`` means zero
    edges: np.ndarray      # padded positions outside the identity-mapped core
    norm: np.ndarray       # overlap-added window product over the padded buffer


def _reflect(i, length):
    if length == 1:
        return np.zeros_like(i)
    period = 2 * (length - 1)
    m = np.mod(i, period)
    return np.where(m < length, m, period - m)


@functools.lru_cache(maxsize=64)
def _layout(length, params):
    _validate(params)
    n, h = params.fft_size, params.hop
    t = n_frames(length, params)
    p = (t - 1) * h + n
    offset = n // 2 if params.center_pad else 0
    rel = np.arange(p) - offset
    index = np.where((rel >= 0) & (rel < length), rel, length)
    if params.center_pad:
        mirrored = (rel < 0) | ((rel >= length) & (rel < length + n // 2))
        index = np.where(mirrored, _reflect(rel, length), index)
    core = np.zeros(p, dtype=bool)
    core[offset:offset + length] = True
    prod = params.analysis_window() * params.synthesis_window()
    norm = _overlap_add(np.broadcast_to(prod, (t, n)), h)
    return _Layout(t, p, offset, index, np.flatnonzero(~core), norm)


def _overlap_add(frames, hop):
    t, n = frames.shape[-2:]
    r = n // hop
    lead = frames.shape[:-2]
    buf = np.zeros(lead + (t + r - 1, hop), dtype=frames.dtype)
    for j in range(r):
        buf[..., j:j + t, :] += frames[..., :, j * hop:(j + 1) * hop]
    return buf.reshape(lead + ((t + r - 1) * hop,))


def _frame(padded, n, hop):
    return sliding_window_view(padded, n, axis=-1)[..., ::hop, :]


def _safe_norm(lay, length):
    norm = lay.norm[lay.offset:lay.offset + length]
    return np.where(norm > 1e-10, norm, 1.0)


def analysis(x: np.ndarray, params: StftParams = DEFAULT_PARAMS) -> np.ndarray:
    """STFT of real signals ``x[..., L]`` -> complex ``[..., frames, bins]``."""
    x = np.asarray(x, dtype=np.float64)
    lay = _layout(x.shape[-1], params)
    ext = np.concatenate([x, np.zeros(x.shape[:-1] + (1,))], axis=-1)
    frames = _frame(ext[..., lay.index], params.fft_size, params.hop)
    return np.fft.rfft(frames * params.analysis_window(), axis=-1)


def analysis_adjoint(g: np.ndarray, params: StftParams, length: int) -> np.ndarray:
    """Adjoint of ``analysis`` w.r.t. the real inner product on (Re, Im) pairs."""
    n = params.fft_size
    lay = _layout(length, params)
    half = np.full(params.n_bins, 0.5)
    half[0] = half[-1] = 1.0
    frames = n * np.fft.irfft(g * half, n=n, axis=-1) * params.analysis_window()
    gp = _overlap_add(frames, params.hop)
    lead = gp.shape[:-1]
    gp = gp.reshape(-1, lay.padded)
    out = np.zeros((gp.shape[0], length + 1))
    out[:, :length] = gp[:, lay.offset:lay.offset + length]
    if lay.edges.size:
        rows = np.arange(gp.shape[0])[:, None]
        np.add.at(out, (rows, lay.index[lay.edges][None, :]), gp[:, lay.edges])
    return out[:, :length].reshape(lead + (length,))


def synthesis(spec: np.ndarray, params: StftParams, length: int) -> np.ndarray:
    """Inverse STFT of ``spec[..., frames, bins]`` -> real ``[..., length]``."""
    lay = _layout(length, params)
    if spec.shape[-2] != lay.frames or spec.shape[-1] != params.n_bins:
        raise ShapeMismatch(f"spectrogram shape {spec.shape[-2:]} does not match length {length}")
    frames = np.fft.irfft(spec, n=params.fft_size, axis=-1) * params.synthesis_window()
    buf = _overlap_add(frames, params.hop)
    return buf[..., lay.offset:lay.offset + length] / _safe_norm(lay, length)


def synthesis_adjoint(g: np.ndarray, params: StftParams, length: int) -> np.ndarray:
    """Adjoint of ``synthesis``; returns the (Re, Im) gradient as a complex array."""
    n = params.fft_size
    lay = _layout(length, params)
    buf = np.zeros(g.shape[:-1] + (lay.padded,))
    buf[..., lay.offset:lay.offset + length] = g / _safe_norm(lay, length)
    frames = _frame(buf, n, params.hop) * params.synthesis_window()
    weight = np.full(params.n_bins, 2.0 / n)
    weight[0] = weight[-1] = 1.0 / n
    return np.fft.rfft(frames, axis=-1) * weight


def _samples(w):
    if isinstance(w, Waveform):
        return w.samples, w.sample_rate
    return Waveform(w).samples, 16000


def stft(w, params: StftParams = DEFAULT_PARAMS) -> Spectrogram:
    x, sr = _samples(w)
    return Spectrogram(analysis(x, params), params, x.size, sr)


def istft(s: Spectrogram, params: StftParams | None = None, out_length: int | None = None) -> Waveform:
    if params is not None and params != s.params:
        raise ParamMismatch(f"spectrogram was computed with {s.params}, not {params}")
    length = s.origin_length if out_length is None else out_length
    if length != s.origin_length:
        # Trimming/extension is only exact for the stored length.
        if n_frames(length, s.params) != s.n_frames:
            raise ShapeMismatch(f"out_length {length} incompatible with {s.n_frames} frames")
    return Waveform(synthesis(s.bins, s.params, length), s.sample_rate)


def consistency_project(s: Spectrogram) -> Spectrogram:
    """Map ``s`` onto the set of consistent spectrograms: ``stft(istft(s))``."""
    x = synthesis(s.bins, s.params, s.origin_length)
    return Spectrogram(analysis(x, s.params), s.params, s.origin_length, s.sample_rate)


def round_trip(x: np.ndarray, params: StftParams = DEFAULT_PARAMS) -> np.ndarray:
    """``istft(stft(x))`` on raw arrays; the Clean* preprocessing transform."""
    x = np.asarray(x, dtype=np.float64)
    return synthesis(analysis(x, params), params, x.shape[-1])


def inconsistency(s: Spectrogram) -> float:
    """Relative Frobenius distance between ``s`` and its projection."""
    p = consistency_project(s)
    denom = np.linalg.norm(s.bins)
    return float(np.linalg.norm(s.bins - p.bins) / denom) if denom > 0 else 0.0
