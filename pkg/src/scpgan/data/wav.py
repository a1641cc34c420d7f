"""PCM16 mono RIFF/WAVE reading and writing."""
from __future__ import annotations

import struct
import wave
from pathlib import Path

import numpy as np

from ..dsp import Waveform
from ..errors import BadHeader, Truncated, UnsupportedFormat

SCALE = 32768.0


def wav_read(path) -> Waveform:
    buf = Path(path).read_bytes()
    if len(buf) < 12 or buf[:4] != b"RIFF" or buf[8:12] != b"WAVE":
        raise BadHeader(f"{path}: not a RIFF/WAVE file")
    pos, fmt = 12, None
    while pos + 8 <= len(buf):
        chunk, size = struct.unpack_from("<4sI", buf, pos)
        body = pos + 8
        if body + size > len(buf):
            raise Truncated(f"{path}: chunk {chunk!r} claims {size} bytes, {len(buf) - body} left")
        if chunk == b"fmt ":
            if size < 16:
                raise BadHeader(f"{path}: fmt chunk too small ({size} bytes)")
            fmt = struct.unpack_from("<HHIIHH", buf, body)
            tag, channels, _, _, _, bits = fmt
            if tag != 1:
                raise UnsupportedFormat(f"{path}: format tag {tag:#x} is not integer PCM")
            if channels != 1:
                raise UnsupportedFormat(f"{path}: {channels} channels, only mono is supported")
            if bits != 16:
                raise UnsupportedFormat(f"{path}: {bits}-bit samples, only 16-bit is supported")
        elif chunk == b"data":
            if fmt is None:
                raise BadHeader(f"{path}: data chunk before fmt chunk")
            if size % 2:
                raise Truncated(f"{path}: odd data size {size} for 16-bit samples")
            pcm = np.frombuffer(buf, dtype="<i2", count=size // 2, offset=body)
            try:
                return Waveform(pcm.astype(np.float64) / SCALE, fmt[2])
            except ValueError as exc:
                raise UnsupportedFormat(f"{path}: {exc}") from exc
        pos = body + size + (size & 1)
    raise BadHeader(f"{path}: no {'data' if fmt else 'fmt'} chunk")


def quantize(samples) -> tuple[np.ndarray, int]:
    """Round half away from zero to int16; returns (pcm, number of clipped samples)."""
    x = np.asarray(samples, dtype=np.float64) * SCALE
    q = np.sign(x) * np.floor(np.abs(x) + 0.5)
    clipped = int(np.count_nonzero((q < -32768) | (q > 32767)))
    return np.clip(q, -32768, 32767).astype("<i2"), clipped


def wav_write(path, w: Waveform) -> int:
    """Write ``w`` as PCM16 mono; returns the clipped-sample count."""
    pcm, clipped = quantize(w.samples)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(w.sample_rate)
        fh.writeframes(pcm.tobytes())
    return clipped
