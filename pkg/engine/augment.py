"""Co-aumento de velocidade por reamostragem e extração de características de áudio.

Velocidade inteira s lê uma amostra a cada s (decimação sem filtro
anti-aliasing); os sinais sintéticos são limitados em banda por construção.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from engine.errors import ConfigError, RawSignalTooShortError

THREADS_ENV = "SVACLR_THREADS"


def worker_threads(default=1):
    """Limite de threads vindo de SVACLR_THREADS (resultado não depende dele)"""
    value = os.environ.get(THREADS_ENV, "").strip()
    if not value:
        return default
    try:
        return max(1, int(value))
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} deve ser inteiro (recebido '{value}')") from None


@dataclass
class AugmentConfig:
    max_speed: int = 4
    audio_window: int = 512
    video_window: int = 8
    keep_original: bool = True
    min_speed: int = 1

    def validate(self):
        if self.min_speed < 1 or self.max_speed < self.min_speed:
            raise ConfigError(
                f"faixa de velocidades inválida: [{self.min_speed}, {self.max_speed}]"
            )
        if self.audio_window < 1 or self.video_window < 1:
            raise ConfigError("janelas de áudio/vídeo devem ser >= 1")
        return self

    @property
    def speeds(self):
        return list(range(self.min_speed, self.max_speed + 1))

    def to_dict(self):
        return asdict(self)


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: int

    def __len__(self):
        return len(self.samples)


@dataclass
class FrameSeq:
    frames: np.ndarray  # (num_frames, frame_dim)

    def __len__(self):
        return len(self.frames)

    @property
    def frame_dim(self):
        return self.frames.shape[1]


@dataclass
class ViewSet:
    audio_views: np.ndarray  # (2, audio_window): [original, acelerada τ1]
    video_views: np.ndarray  # (2, video_window, frame_dim): [original, acelerada τ2]
    tau1: int
    tau2: int
    clip_index: int
    label: int


def sample_speed_pair(rng, config):
    """(τ1, τ2) independentes e uniformes no conjunto de velocidades"""
    span = config.max_speed - config.min_speed + 1
    tau1 = config.min_speed + rng.uniform_int(span)
    tau2 = config.min_speed + rng.uniform_int(span)
    return tau1, tau2


def required_length(window, speed, offset=0):
    """Comprimento bruto mínimo para ler `window` pontos com passo `speed`"""
    return int(np.ceil(offset + (window - 1) * speed)) + 1


def _stride_read(values, speed, window, offset, what):
    if speed <= 0:
        raise ValueError(f"velocidade deve ser positiva (recebido {speed})")
    if offset < 0:
        raise ValueError(f"offset negativo: {offset}")
    needed = required_length(window, speed, offset)
    if needed > len(values):
        raise RawSignalTooShortError(needed, len(values), what)
    if float(speed).is_integer():
        step = int(speed)
        return np.array(values[offset: offset + (window - 1) * step + 1: step])
    # Velocidade fracionária: interpolação linear (reservado, fora do caminho padrão)
    positions = offset + np.arange(window) * speed
    lower = np.floor(positions).astype(int)
    upper = np.minimum(lower + 1, len(values) - 1)
    frac = (positions - lower).reshape((-1,) + (1,) * (np.ndim(values) - 1))
    return (1.0 - frac) * values[lower] + frac * values[upper]


def resample_audio(w, s, window, offset):
    """output[k] = w[offset + k*s]; a taxa de amostragem não muda"""
    samples = _stride_read(w.samples, s, window, offset, "amostras de áudio")
    return Waveform(samples=samples, sample_rate=w.sample_rate)


def subsample_video(f, s, window, offset):
    frames = _stride_read(f.frames, s, window, offset, "quadros de vídeo")
    return FrameSeq(frames=frames)


def audio_features(w, n_bins=128, window=512):
    """log(1 + |DFT|) nos bins 1..n_bins da janela"""
    samples = w.samples if isinstance(w, Waveform) else np.asarray(w, dtype=np.float64)
    if len(samples) != window:
        raise ValueError(
            f"audio_features espera janela de {window} amostras, recebeu {len(samples)}"
        )
    if n_bins > window // 2:
        raise ValueError(f"n_bins={n_bins} excede Nyquist para janela {window}")
    spectrum = np.fft.rfft(samples)
    return np.log1p(np.abs(spectrum[1: n_bins + 1]))


def naive_dft_magnitude(samples, n_bins):
    """DFT O(n²) direta; usada para conferir a FFT"""
    samples = np.asarray(samples, dtype=np.float64)
    n = len(samples)
    k = np.arange(1, n_bins + 1).reshape(-1, 1)
    t = np.arange(n).reshape(1, -1)
    basis = np.exp(-2j * np.pi * k * t / n)
    return np.abs(basis @ samples)


def dominant_bin(features):
    """Bin DFT (1-indexado) de maior magnitude"""
    return int(np.argmax(features)) + 1


def _draw_offset(rng, raw_length, window, speed):
    span = raw_length - required_length(window, speed) + 1
    if span < 1:
        raise RawSignalTooShortError(required_length(window, speed), raw_length)
    return rng.uniform_int(span)


def make_views(clip, tau1, tau2, rng, config):
    """Duas vistas por modalidade: [original, acelerada] com offsets independentes"""
    first_audio_speed = 1 if config.keep_original else tau1
    first_video_speed = 1 if config.keep_original else tau2
    audio_len = len(clip.audio)
    video_len = len(clip.video)

    a_off0 = _draw_offset(rng, audio_len, config.audio_window, first_audio_speed)
    a_off1 = _draw_offset(rng, audio_len, config.audio_window, tau1)
    v_off0 = _draw_offset(rng, video_len, config.video_window, first_video_speed)
    v_off1 = _draw_offset(rng, video_len, config.video_window, tau2)

    audio_views = np.stack([
        resample_audio(clip.audio, first_audio_speed, config.audio_window, a_off0).samples,
        resample_audio(clip.audio, tau1, config.audio_window, a_off1).samples,
    ])
    video_views = np.stack([
        subsample_video(clip.video, first_video_speed, config.video_window, v_off0).frames,
        subsample_video(clip.video, tau2, config.video_window, v_off1).frames,
    ])
    return ViewSet(
        audio_views=audio_views,
        video_views=video_views,
        tau1=tau1,
        tau2=tau2,
        clip_index=clip.index,
        label=clip.label,
    )


def make_batch_views(clips, tau1, tau2, rng, config, threads=1):
    """ViewSets de um lote; cada clipe usa um fluxo rng próprio (fork pela posição)"""
    streams = [rng.fork(position) for position in range(len(clips))]

    def build(position):
        return make_views(clips[position], tau1, tau2, streams[position], config)

    if threads <= 1:
        return [build(p) for p in range(len(clips))]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(build, range(len(clips))))


def evaluation_views(clip, config, audio_speed=1, video_speed=1):
    """Vistas determinísticas (offset 0) usadas na avaliação"""
    audio = resample_audio(clip.audio, 1, config.audio_window, 0).samples
    sped_audio = resample_audio(clip.audio, audio_speed, config.audio_window, 0).samples
    video = subsample_video(clip.video, 1, config.video_window, 0).frames
    sped_video = subsample_video(clip.video, video_speed, config.video_window, 0).frames
    return ViewSet(
        audio_views=np.stack([audio, sped_audio]),
        video_views=np.stack([video, sped_video]),
        tau1=audio_speed,
        tau2=video_speed,
        clip_index=clip.index,
        label=clip.label,
    )
