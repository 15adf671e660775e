"""Minimal RIFF/WAVE reader and writer.

Reads PCM 16-bit and IEEE-float 32-bit files with 1 or 2 channels, which
covers GTZAN-style corpora. The writer is the reference encoder used by
the synthetic dataset generator and by round-trip tests.
"""

from __future__ import annotations

import struct

import numpy as np

from .audio import AudioClip
from .errors import MalformedHeader, TruncatedFile, UnsupportedEncoding

_FMT_PCM = 1
_FMT_IEEE_FLOAT = 3


def load_wav(path) -> AudioClip:
    """Decode a WAV file to a mono float64 clip in [-1, 1].

    Stereo is averaged down to mono; 16-bit integers are scaled by 1/32768.
    Raises MalformedHeader, UnsupportedEncoding or TruncatedFile.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 12 or raw[0:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise MalformedHeader(f"{path}: not a RIFF/WAVE file")

    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(raw):
        chunk_id = raw[pos:pos + 4]
        (chunk_size,) = struct.unpack_from("<I", raw, pos + 4)
        body_start = pos + 8
        if chunk_id == b"fmt ":
            if chunk_size < 16 or body_start + 16 > len(raw):
                raise MalformedHeader(f"{path}: fmt chunk too small")
            fmt = struct.unpack_from("<HHIIHH", raw, body_start)
        elif chunk_id == b"data":
            if body_start + chunk_size > len(raw):
                raise TruncatedFile(
                    f"{path}: data chunk claims {chunk_size} bytes, "
                    f"file holds {len(raw) - body_start}"
                )
            data = raw[body_start:body_start + chunk_size]
        # chunks are word aligned: odd sizes carry a pad byte
        pos = body_start + chunk_size + (chunk_size & 1)

    if fmt is None:
        raise MalformedHeader(f"{path}: missing fmt chunk")
    if data is None:
        raise MalformedHeader(f"{path}: missing data chunk")

    audio_format, channels, sample_rate, _byte_rate, _block_align, bits = fmt
    if audio_format not in (_FMT_PCM, _FMT_IEEE_FLOAT):
        raise UnsupportedEncoding(
            f"{path}: compression code {audio_format} (only PCM and IEEE float)"
        )
    if channels not in (1, 2):
        raise UnsupportedEncoding(f"{path}: {channels} channels (only mono/stereo)")
    if audio_format == _FMT_PCM and bits != 16:
        raise UnsupportedEncoding(f"{path}: {bits}-bit PCM (only 16-bit)")
    if audio_format == _FMT_IEEE_FLOAT and bits != 32:
        raise UnsupportedEncoding(f"{path}: {bits}-bit float (only 32-bit)")

    frame_size = channels * bits // 8
    if len(data) % frame_size:
        raise TruncatedFile(f"{path}: data chunk cut mid-frame")
    if not data:
        raise MalformedHeader(f"{path}: empty data chunk")

    if audio_format == _FMT_PCM:
        samples = np.frombuffer(data, dtype="<i2").astype(np.float64) / 32768.0
    else:
        samples = np.frombuffer(data, dtype="<f4").astype(np.float64)
        np.clip(samples, -1.0, 1.0, out=samples)
    if channels == 2:
        samples = samples.reshape(-1, 2).mean(axis=1)

    return AudioClip(samples=samples, sample_rate=sample_rate, source_path=str(path))


def write_wav(path, samples, sample_rate, encoding="pcm16"):
    """Write mono or stereo samples in [-1, 1] as PCM 16-bit or float 32-bit."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim == 1:
        channels = 1
    elif samples.ndim == 2 and samples.shape[1] in (1, 2):
        channels = samples.shape[1]
    else:
        raise ValueError(f"expected [n] or [n, 1|2] samples, got {samples.shape}")

    clipped = np.clip(samples, -1.0, 1.0)
    if encoding == "pcm16":
        # scale matches the reader's 1/32768, so round trips stay within half an LSB
        ints = np.clip(np.round(clipped * 32768.0), -32768, 32767)
        payload = ints.astype("<i2").tobytes()
        audio_format, bits = _FMT_PCM, 16
    elif encoding == "float32":
        payload = clipped.astype("<f4").tobytes()
        audio_format, bits = _FMT_IEEE_FLOAT, 32
    else:
        raise ValueError(f"unknown encoding {encoding!r}")

    block_align = channels * bits // 8
    byte_rate = sample_rate * block_align
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF", 36 + len(payload), b"WAVE",
        b"fmt ", 16, audio_format, channels, sample_rate, byte_rate,
        block_align, bits,
        b"data", len(payload),
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)
