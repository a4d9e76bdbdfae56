#!/usr/bin/env python3
"""
Testes do co-aumento de velocidade e das características de áudio
"""

import sys

import numpy as np

from engine.augment import (
    AugmentConfig,
    FrameSeq,
    Waveform,
    audio_features,
    dominant_bin,
    evaluation_views,
    make_batch_views,
    make_views,
    naive_dft_magnitude,
    resample_audio,
    sample_speed_pair,
    subsample_video,
)
from engine.datagen import Clip
from engine.errors import ConfigError, RawSignalTooShortError
from engine.rng import Rng

RATE = 2048


def _sine(freq, length=4096, rate=RATE):
    t = np.arange(length) / rate
    return Waveform(samples=np.sin(2.0 * np.pi * freq * t), sample_rate=rate)


def _ramp_clip(index=0, audio_len=4096, frames=48, frame_dim=4):
    video = np.repeat(np.arange(frames, dtype=np.float64)[:, None], frame_dim, axis=1)
    return Clip(label=0,
                audio=Waveform(np.arange(audio_len, dtype=np.float64), RATE),
                video=FrameSeq(video),
                index=index)


def test_speed_pair_singleton_set():
    rng = Rng(0)
    config = AugmentConfig(max_speed=1)
    assert all(sample_speed_pair(rng, config) == (1, 1) for _ in range(100))


def test_speed_pair_is_uniform():
    rng = Rng(0)
    config = AugmentConfig(max_speed=4)
    counts = np.zeros(5)
    draws = 100_000
    for _ in range(draws // 2):
        tau1, tau2 = sample_speed_pair(rng, config)
        counts[tau1] += 1
        counts[tau2] += 1
    frequencies = counts[1:] / draws
    assert np.all(np.abs(frequencies - 0.25) < 0.015)


def test_speed_pair_is_deterministic_and_respects_min_speed():
    config = AugmentConfig(max_speed=2)
    a, b = Rng(7), Rng(7)
    assert [sample_speed_pair(a, config) for _ in range(20)] == \
        [sample_speed_pair(b, config) for _ in range(20)]
    ranged = AugmentConfig(max_speed=4, min_speed=3)
    rng = Rng(1)
    assert all(3 <= t <= 4 for _ in range(200) for t in sample_speed_pair(rng, ranged))


def test_invalid_speed_range():
    try:
        AugmentConfig(max_speed=2, min_speed=3).validate()
        assert False, "ConfigError esperado"
    except ConfigError:
        pass


def test_resample_audio_stride_read():
    w = Waveform(np.arange(8, dtype=np.float64), RATE)
    assert resample_audio(w, 2, 4, 0).samples.tolist() == [0, 2, 4, 6]
    assert resample_audio(w, 3, 3, 0).samples.tolist() == [0, 3, 6]
    assert resample_audio(w, 2, 4, 0).sample_rate == RATE


def test_resample_audio_too_short():
    w = Waveform(np.arange(8, dtype=np.float64), RATE)
    try:
        resample_audio(w, 2, 4, 2)
        assert False, "RawSignalTooShortError esperado"
    except RawSignalTooShortError as e:
        assert e.required == 9 and e.available == 8


def test_resampled_sine_moves_dominant_bin():
    w = _sine(64.0)
    assert dominant_bin(audio_features(resample_audio(w, 1, 512, 0))) == 16
    assert dominant_bin(audio_features(resample_audio(w, 2, 512, 0))) == 32
    assert dominant_bin(audio_features(resample_audio(w, 4, 512, 0))) == 64


def test_subsample_video():
    frames = np.repeat(np.arange(32, dtype=np.float64)[:, None], 3, axis=1)
    out = subsample_video(FrameSeq(frames), 2, 8, 4).frames
    assert out[:, 0].tolist() == [4, 6, 8, 10, 12, 14, 16, 18]
    assert np.array_equal(subsample_video(FrameSeq(frames), 1, 8, 0).frames, frames[:8])
    constant = FrameSeq(np.full((32, 3), 0.7))
    for s in (1, 2, 3, 4):
        assert np.all(subsample_video(constant, s, 8, 0).frames == 0.7)


def test_audio_features_examples():
    assert np.array_equal(audio_features(np.zeros(512)), np.zeros(128))
    t = np.arange(512)
    at_bin_16 = np.sin(2.0 * np.pi * 16 * t / 512)
    assert dominant_bin(audio_features(at_bin_16)) == 16
    try:
        audio_features(np.zeros(256))
        assert False, "janela errada deveria falhar"
    except ValueError:
        pass


def test_fft_agrees_with_naive_dft():
    samples = Rng(3).normals(512)
    expected = np.log1p(naive_dft_magnitude(samples, 128))
    assert np.allclose(audio_features(samples), expected, atol=1e-9)


def test_make_views_structure():
    config = AugmentConfig(max_speed=4, audio_window=512, video_window=8)
    views = make_views(_ramp_clip(index=5), 3, 4, Rng(0), config)
    assert views.audio_views.shape == (2, 512)
    assert views.video_views.shape == (2, 8, 4)
    assert (views.tau1, views.tau2, views.clip_index) == (3, 4, 5)
    assert np.all(np.diff(views.audio_views[0]) == 1)
    assert np.all(np.diff(views.audio_views[1]) == 3)
    assert np.all(np.diff(views.video_views[1][:, 0]) == 4)


def test_make_views_at_speed_one():
    config = AugmentConfig(max_speed=1, audio_window=512, video_window=8)
    views = make_views(_ramp_clip(), 1, 1, Rng(2), config)
    for p in range(2):
        assert np.all(np.diff(views.audio_views[p]) == 1)
        assert np.all(np.diff(views.video_views[p][:, 0]) == 1)


def test_make_views_without_original():
    config = AugmentConfig(max_speed=4, keep_original=False)
    views = make_views(_ramp_clip(), 2, 3, Rng(0), config)
    assert np.all(np.diff(views.audio_views[0]) == 2)
    assert np.all(np.diff(views.video_views[0][:, 0]) == 3)


def test_make_views_is_deterministic():
    config = AugmentConfig()
    a = make_views(_ramp_clip(), 2, 4, Rng(21), config)
    b = make_views(_ramp_clip(), 2, 4, Rng(21), config)
    assert a.audio_views.tobytes() == b.audio_views.tobytes()
    assert a.video_views.tobytes() == b.video_views.tobytes()


def test_batch_views_independent_of_threads():
    config = AugmentConfig()
    clips = [_ramp_clip(index=i) for i in range(6)]
    serial = make_batch_views(clips, 2, 3, Rng.derive(0, "step", 0, 0), config, threads=1)
    parallel = make_batch_views(clips, 2, 3, Rng.derive(0, "step", 0, 0), config, threads=4)
    for a, b in zip(serial, parallel):
        assert a.audio_views.tobytes() == b.audio_views.tobytes()
        assert a.video_views.tobytes() == b.video_views.tobytes()
    assert len(serial) == 6 and all(v.audio_views.shape[0] == 2 for v in serial)


def test_evaluation_views_use_offset_zero():
    views = evaluation_views(_ramp_clip(), AugmentConfig(), audio_speed=3)
    assert views.audio_views[0][0] == 0 and views.audio_views[1][0] == 0
    assert np.all(np.diff(views.audio_views[1]) == 3)
    assert np.array_equal(views.video_views[0], views.video_views[1])


def main():
    """Executa os testes e imprime o resumo"""
    print("🧪 TESTES DO CO-AUMENTO DE VELOCIDADE")
    print("=" * 50)
    tests = [(name, fn) for name, fn in globals().items() if name.startswith("test_") and callable(fn)]
    passed = 0
    for name, fn in tests:
        try:
            fn()
            passed += 1
            print(f"✅ {name}")
        except Exception as e:
            print(f"❌ {name}: {e!r}")
    print("\n" + "=" * 50)
    print(f"📊 RESULTADO DOS TESTES: {passed}/{len(tests)} passaram")
    return 0 if passed == len(tests) else 1


if __name__ == "__main__":
    sys.exit(main())
