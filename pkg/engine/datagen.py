"""Corpus sintético de pares áudio-vídeo com deslocamento semântico por velocidade.

O áudio da classe c é uma senoide de frequência f0 * g**c. Com g = √2,
acelerar por 2**k leva a classe c exatamente para a frequência da classe
c + 2k, de modo que o som "vira" outra classe. O vídeo é um padrão fixo por
classe (mais ruído), portanto não muda com a velocidade.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from engine.augment import FrameSeq, Waveform
from engine.errors import ConfigError
from engine.rng import Rng

SPLITS = ("train", "test")


@dataclass
class DatasetSpec:
    num_classes: int = 8
    clips_per_class: dict = field(default_factory=lambda: {"train": 64, "test": 16})
    raw_audio_len: int = 4096
    sample_rate: int = 2048
    raw_video_frames: int = 48
    frame_dim: int = 16
    base_freq: float = 16.0
    freq_ratio: float = math.sqrt(2.0)
    noise_std: float = 0.05
    seed: Optional[int] = None

    def validate(self, max_speed=1):
        counts = [self.num_classes, self.raw_audio_len, self.sample_rate,
                  self.raw_video_frames, self.frame_dim]
        if any(int(c) < 1 for c in counts):
            raise ConfigError("todas as contagens do dataset devem ser positivas")
        for split in SPLITS:
            if int(self.clips_per_class.get(split, 0)) < 1:
                raise ConfigError(f"clips_per_class['{split}'] deve ser positivo")
        unknown = set(self.clips_per_class) - set(SPLITS)
        if unknown:
            raise ConfigError(f"split desconhecido em clips_per_class: {sorted(unknown)[0]}")
        if self.num_classes > self.frame_dim:
            raise ConfigError("num_classes não pode exceder frame_dim (padrões ortogonais)")
        top = self.base_freq * self.freq_ratio ** (self.num_classes - 1) * max_speed
        if top >= self.sample_rate / 2:
            raise ConfigError(
                f"frequência máxima acelerada {top:.1f} Hz viola Nyquist "
                f"({self.sample_rate / 2:.1f} Hz) com velocidade {max_speed}"
            )
        return self

    def class_frequency(self, label):
        return self.base_freq * self.freq_ratio ** label

    def to_dict(self):
        return asdict(self)


@dataclass
class Clip:
    label: int
    audio: Waveform
    video: FrameSeq
    index: int = 0


@dataclass
class Dataset:
    spec: DatasetSpec
    clips: list
    split: str = "train"

    def __len__(self):
        return len(self.clips)

    def labels(self):
        return np.array([clip.label for clip in self.clips], dtype=int)

    def class_histogram(self):
        return np.bincount(self.labels(), minlength=self.spec.num_classes)


def to_f32_precision(values):
    return np.asarray(values, dtype=np.float32).astype(np.float64)


def class_patterns(spec):
    """Padrões de vídeo por classe, ortonormais (Gram-Schmidt), compartilhados entre splits"""
    rng = Rng.derive(spec.seed or 0, "video-patterns")
    raw = np.array([rng.normals(spec.frame_dim) for _ in range(spec.num_classes)])
    basis = []
    for vector in raw:
        v = vector.copy()
        for b in basis:
            v -= (v @ b) * b
        basis.append(v / np.linalg.norm(v))
    return np.array(basis)


def synth_clip(label, rng, spec, patterns=None, index=0, noise=True):
    """Um clipe da classe `label`: senoide + ruído e padrão de vídeo + ruído"""
    if not 0 <= label < spec.num_classes:
        raise ValueError(f"classe {label} fora de [0, {spec.num_classes})")
    if patterns is None:
        patterns = class_patterns(spec)
    noise_std = spec.noise_std if noise else 0.0

    t = np.arange(spec.raw_audio_len) / spec.sample_rate
    phase = rng.uniform(0.0, 2.0 * math.pi)
    audio = np.sin(2.0 * math.pi * spec.class_frequency(label) * t + phase)
    if noise_std > 0:
        audio = audio + noise_std * rng.normals(spec.raw_audio_len)

    frames = np.tile(patterns[label], (spec.raw_video_frames, 1))
    if noise_std > 0:
        jitter = rng.normals(spec.raw_video_frames * spec.frame_dim)
        frames = frames + noise_std * jitter.reshape(spec.raw_video_frames, spec.frame_dim)

    return Clip(
        label=label,
        audio=Waveform(samples=to_f32_precision(audio), sample_rate=spec.sample_rate),
        video=FrameSeq(frames=to_f32_precision(frames)),
        index=index,
    )


def alias_class(label, s, spec):
    """Classe cuja frequência em velocidade 1 coincide com a de `label` acelerada por s"""
    if s == 1:
        return label
    exponent = math.log(s) / math.log(spec.freq_ratio)
    shift = round(exponent)
    if shift < 1 or abs(exponent - shift) > 1e-9:
        return None
    target = label + shift
    return target if target < spec.num_classes else None


def generate_dataset(spec, split, threads=1, verbose=False):
    """Função pura de (spec, split); cada clipe tem seu próprio fluxo rng"""
    if split not in SPLITS:
        raise ValueError(f"split desconhecido: {split}")
    patterns = class_patterns(spec)
    per_class = int(spec.clips_per_class[split])
    labels = [c for c in range(spec.num_classes) for _ in range(per_class)]
    seed = spec.seed or 0

    def build(index):
        rng = Rng.derive(seed, "clip", split, index)
        return synth_clip(labels[index], rng, spec, patterns=patterns, index=index)

    if threads <= 1:
        clips = [build(i) for i in range(len(labels))]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            clips = list(pool.map(build, range(len(labels))))

    if verbose:
        print(f"✅ Split '{split}': {len(clips)} clipes gerados ({per_class} por classe)")
    return Dataset(spec=spec, clips=clips, split=split)
