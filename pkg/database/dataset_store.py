"""Leitura e escrita do arquivo de dataset (formato SVAC, little-endian).

Layout:
    "SVAC" | versão u32 | num_clips, num_classes, raw_audio_len,
    raw_video_frames, frame_dim, sample_rate (u32 cada)
    por clipe: classe u32 | áudio raw_audio_len x f32 | vídeo frames*dim x f32
"""

import dataclasses
import struct
from pathlib import Path

import numpy as np

from engine.augment import FrameSeq, Waveform
from engine.datagen import SPLITS, Clip, Dataset, DatasetSpec
from engine.errors import (
    BadMagicError,
    DimensionMismatchError,
    TruncatedFileError,
    UnsupportedVersionError,
)

MAGIC = b"SVAC"
VERSION = 1
_HEADER = struct.Struct("<4sI6I")
_LABEL = struct.Struct("<I")


def serialize_dataset(ds):
    """Bytes do arquivo SVAC para o dataset"""
    spec = ds.spec
    parts = [_HEADER.pack(
        MAGIC, VERSION, len(ds.clips), spec.num_classes, spec.raw_audio_len,
        spec.raw_video_frames, spec.frame_dim, spec.sample_rate,
    )]
    video_shape = (spec.raw_video_frames, spec.frame_dim)
    for clip in ds.clips:
        if len(clip.audio) != spec.raw_audio_len or clip.video.frames.shape != video_shape:
            raise DimensionMismatchError(
                f"clipe {clip.index}: áudio {len(clip.audio)} / vídeo {clip.video.frames.shape} "
                f"não batem com o cabeçalho ({spec.raw_audio_len} / {video_shape})"
            )
        parts.append(_LABEL.pack(clip.label))
        parts.append(np.asarray(clip.audio.samples, dtype="<f4").tobytes())
        parts.append(np.asarray(clip.video.frames, dtype="<f4").tobytes())
    return b"".join(parts)


def write_dataset(ds, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = serialize_dataset(ds)
    with open(path, "wb") as f:
        f.write(payload)
    return path


def _split_from_path(path):
    stem = Path(path).stem
    return stem if stem in SPLITS else "train"


def deserialize_dataset(payload, split="train", base_spec=None):
    if len(payload) < 4:
        raise TruncatedFileError("arquivo menor que o magic")
    if payload[:4] != MAGIC:
        raise BadMagicError(f"magic inválido: {payload[:4]!r} (esperado {MAGIC!r})")
    if len(payload) < _HEADER.size:
        raise TruncatedFileError("cabeçalho incompleto")
    _, version, num_clips, num_classes, audio_len, frames, frame_dim, sample_rate = \
        _HEADER.unpack_from(payload, 0)
    if version != VERSION:
        raise UnsupportedVersionError(f"versão {version} não suportada (esperado {VERSION})")

    if base_spec is not None:
        expected = (base_spec.num_classes, base_spec.raw_audio_len, base_spec.raw_video_frames,
                    base_spec.frame_dim, base_spec.sample_rate)
        found = (num_classes, audio_len, frames, frame_dim, sample_rate)
        if expected != found:
            raise DimensionMismatchError(f"cabeçalho {found} difere da configuração {expected}")

    clip_size = _LABEL.size + 4 * (audio_len + frames * frame_dim)
    expected_size = _HEADER.size + num_clips * clip_size
    if len(payload) < expected_size:
        raise TruncatedFileError(
            f"arquivo truncado: {len(payload)} bytes, esperados {expected_size}"
        )
    if len(payload) > expected_size:
        raise DimensionMismatchError(
            f"{len(payload) - expected_size} bytes sobrando após {num_clips} clipes"
        )

    clips = []
    offset = _HEADER.size
    for index in range(num_clips):
        (label,) = _LABEL.unpack_from(payload, offset)
        if label >= num_classes:
            raise DimensionMismatchError(f"clipe {index}: classe {label} >= {num_classes}")
        offset += _LABEL.size
        audio = np.frombuffer(payload, dtype="<f4", count=audio_len, offset=offset)
        offset += 4 * audio_len
        video = np.frombuffer(payload, dtype="<f4", count=frames * frame_dim, offset=offset)
        offset += 4 * frames * frame_dim
        clips.append(Clip(
            label=int(label),
            audio=Waveform(samples=audio.astype(np.float64), sample_rate=sample_rate),
            video=FrameSeq(frames=video.astype(np.float64).reshape(frames, frame_dim)),
            index=index,
        ))

    spec = dataclasses.replace(
        base_spec or DatasetSpec(),
        num_classes=num_classes,
        raw_audio_len=audio_len,
        raw_video_frames=frames,
        frame_dim=frame_dim,
        sample_rate=sample_rate,
    )
    return Dataset(spec=spec, clips=clips, split=split)


def read_dataset(path, split=None, base_spec=None):
    """Lê um arquivo SVAC; o split vem do nome do arquivo (train.svac / test.svac)"""
    with open(path, "rb") as f:
        payload = f.read()
    return deserialize_dataset(payload, split or _split_from_path(path), base_spec)
