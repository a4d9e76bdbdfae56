#!/usr/bin/env python3
"""
Testes de ponta a ponta da linha de comando svaclr.py em uma configuração pequena
"""

import contextlib
import io
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np
import pandas as pd

import svaclr
from database.checkpoint_store import write_checkpoint
from engine.augment import THREADS_ENV
from engine.config import RunConfig
from engine.datagen import DatasetSpec, class_patterns
from engine.model import ModelConfig, SvaclrModel, init_params
from engine.rng import Rng

SMALL_CONFIG = {
    "dataset": {"num_classes": 4, "clips_per_class": {"train": 8, "test": 4},
                "raw_audio_len": 1024, "sample_rate": 512, "raw_video_frames": 24, "frame_dim": 8},
    "augment": {"max_speed": 4, "audio_window": 64, "video_window": 4},
    "model": {"audio_in": 32, "video_in": 32, "encoder_hidden": 16, "repr_dim": 8,
              "proj_hidden": 8, "proj_dim": 8},
    "train": {"epochs": 2, "batch_size": 8, "warmup_epochs": 1, "peak_lr": 0.05},
    "seed": 3,
}


def _write_config(directory, config=SMALL_CONFIG):
    path = Path(directory) / "config.json"
    path.write_text(json.dumps(config), encoding="utf-8")
    return str(path)


def _run(*argv):
    """(código de saída, texto impresso)"""
    buffer = io.StringIO()
    with contextlib.redirect_stdout(buffer):
        code = svaclr.main([str(a) for a in argv])
    return code, buffer.getvalue()


def _generate(tmp):
    config = _write_config(tmp)
    data = Path(tmp) / "data"
    code, _ = _run("generate", "--config", config, "--out", data)
    assert code == 0
    return config, data


def test_generate_is_reproducible():
    with tempfile.TemporaryDirectory() as tmp:
        config, data = _generate(tmp)
        first = {name: (data / name).read_bytes() for name in ("train.svac", "test.svac")}
        resolved = json.loads((data / "resolved_config.json").read_text(encoding="utf-8"))
        assert resolved["dataset"]["seed"] == 3 and resolved["train"]["seed"] == 3
        assert _run("generate", "--config", config, "--out", data)[0] == 0
        assert all((data / name).read_bytes() == payload for name, payload in first.items())


def test_unknown_config_key():
    with tempfile.TemporaryDirectory() as tmp:
        config = _write_config(tmp, {"augment": {"speeed": 2}})
        code, output = _run("generate", "--config", config, "--out", Path(tmp) / "data")
        assert code == svaclr.EXIT_CONFIG
        assert "speeed" in output


def test_invalid_json_config():
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "broken.json"
        path.write_text("{\"seed\": ", encoding="utf-8")
        assert _run("generate", "--config", path, "--out", Path(tmp) / "data")[0] == svaclr.EXIT_CONFIG


def test_missing_dataset_is_io_error():
    with tempfile.TemporaryDirectory() as tmp:
        config = _write_config(tmp)
        code, _ = _run("pretrain", "--config", config, "--data", Path(tmp) / "nowhere",
                       "--out", Path(tmp) / "run")
        assert code == svaclr.EXIT_IO


def test_pretrain_eval_and_affinity():
    with tempfile.TemporaryDirectory() as tmp:
        config, data = _generate(tmp)
        run = Path(tmp) / "run"
        assert _run("pretrain", "--config", config, "--data", data, "--out", run)[0] == 0
        assert (run / svaclr.FINAL_CHECKPOINT).exists()
        assert (run / "resolved_config.json").exists()
        metrics = (run / "metrics.jsonl").read_bytes()
        assert len(metrics.splitlines()) == 2 * 4

        rerun = Path(tmp) / "rerun"
        assert _run("pretrain", "--config", config, "--data", data, "--out", rerun)[0] == 0
        assert (rerun / "metrics.jsonl").read_bytes() == metrics

        assert _run("eval", "--config", config, "--data", data, "--out", run)[0] == 0
        retrieval = pd.read_csv(run / "retrieval.csv")
        assert set(retrieval["direction"]) == {"video_to_audio", "audio_to_video"}
        assert retrieval["recall"].between(0, 1).all()
        probe = pd.read_csv(run / "probe.csv")
        assert list(probe["modality"]) == ["audio", "video", "concat"]

        code, _ = _run("affinity", "--config", config, "--data", data, "--out", run, "--speeds", 1, 2, 4)
        assert code == 0
        affinity = pd.read_csv(run / "affinity.csv")
        assert sorted(set(affinity["speed"])) == [1, 2, 4]

        code, output = _run("affinity", "--config", config, "--data", data, "--out", run, "--speeds", 5)
        assert code == svaclr.EXIT_CONFIG
        assert "5" in output


def test_variant_override_is_recorded():
    with tempfile.TemporaryDirectory() as tmp:
        config, data = _generate(tmp)
        run = Path(tmp) / "noaug"
        code, _ = _run("pretrain", "--config", config, "--data", data, "--out", run,
                       "--variant", "infonce_noaug", "--seed", 7)
        assert code == 0
        resolved = json.loads((run / "resolved_config.json").read_text(encoding="utf-8"))
        assert resolved["train"]["variant"] == "infonce_noaug"
        assert resolved["seed"] == 7


def test_bad_checkpoint_magic():
    with tempfile.TemporaryDirectory() as tmp:
        config, data = _generate(tmp)
        bad = Path(tmp) / "bad.svck"
        bad.write_bytes(b"NOPE" + bytes(32))
        code, _ = _run("eval", "--config", config, "--data", data, "--out", Path(tmp) / "run",
                       "--checkpoint", bad)
        assert code == svaclr.EXIT_CHECKPOINT


def test_gradcheck_command():
    code, output = _run("gradcheck", "--instances", 3, "--seed", 1)
    assert code == 0
    assert "soft_info_nce" in output


def test_config_value_types_are_checked():
    for bad, key in (({"train": {"epochs": "30"}}, "train.epochs"),
                     ({"dataset": {"clips_per_class": 64}}, "dataset.clips_per_class"),
                     ({"loss": {"detach_affinity": "sim"}}, "loss.detach_affinity"),
                     ({"augment": {"max_speed": True}}, "augment.max_speed"),
                     ({"seed": 1.5}, "seed")):
        with tempfile.TemporaryDirectory() as tmp:
            config = _write_config(tmp, bad)
            code, output = _run("generate", "--config", config, "--out", Path(tmp) / "data")
            assert code == svaclr.EXIT_CONFIG, bad
            assert key in output, output
    parsed = RunConfig.from_dict({"loss": {"eta": 1}, "dataset": {"seed": None}})
    assert isinstance(parsed.loss.eta, float) and parsed.dataset.seed is None


def test_max_speed_flag_reaches_resolved_config():
    with tempfile.TemporaryDirectory() as tmp:
        config = _write_config(tmp)
        data = Path(tmp) / "data"
        assert _run("generate", "--config", config, "--out", data, "--max-speed", 2)[0] == 0
        resolved = json.loads((data / "resolved_config.json").read_text(encoding="utf-8"))
        assert resolved["augment"]["max_speed"] == 2


def test_rerun_from_resolved_config_reproduces_outputs():
    with tempfile.TemporaryDirectory() as tmp:
        config, data = _generate(tmp)
        first, second = Path(tmp) / "first", Path(tmp) / "second"
        assert _run("pretrain", "--config", config, "--data", data, "--out", first)[0] == 0
        resolved = first / "resolved_config.json"
        assert _run("pretrain", "--config", resolved, "--data", data, "--out", second)[0] == 0
        for name in ("metrics.jsonl", svaclr.FINAL_CHECKPOINT):
            assert (first / name).read_bytes() == (second / name).read_bytes(), name


def test_outputs_do_not_depend_on_thread_count():
    with tempfile.TemporaryDirectory() as tmp:
        config, data = _generate(tmp)
        run = Path(tmp) / "run"
        assert _run("pretrain", "--config", config, "--data", data, "--out", run)[0] == 0
        checkpoint = run / svaclr.FINAL_CHECKPOINT
        previous = os.environ.pop(THREADS_ENV, None)
        try:
            outputs = {}
            for threads in (None, "3"):
                if threads is not None:
                    os.environ[THREADS_ENV] = threads
                out = Path(tmp) / f"eval_{threads}"
                for command in ("eval", "affinity"):
                    code, _ = _run(command, "--config", config, "--data", data, "--out", out,
                                   "--checkpoint", checkpoint)
                    assert code == 0
                outputs[threads] = {name: (out / name).read_bytes()
                                    for name in ("retrieval.csv", "probe.csv", "affinity.csv")}
        finally:
            os.environ.pop(THREADS_ENV, None)
            if previous is not None:
                os.environ[THREADS_ENV] = previous
        assert outputs[None] == outputs["3"]


ORACLE_CONFIG = {
    "dataset": {"num_classes": 4, "clips_per_class": {"train": 2, "test": 1},
                "raw_audio_len": 1024, "sample_rate": 512, "raw_video_frames": 24, "frame_dim": 8,
                "base_freq": 8.0, "freq_ratio": 2.0, "noise_std": 0.0},
    "augment": {"max_speed": 2, "audio_window": 64, "video_window": 4},
    "model": {"audio_in": 32, "video_in": 32, "encoder_hidden": 16, "repr_dim": 8,
              "proj_hidden": 8, "proj_dim": 8},
    "seed": 5,
}


def _one_hot_checkpoint(spec, path):
    """Encoders que levam cada clipe ao indicador da sua classe (tons exatamente em bins da DFT)"""
    config = ModelConfig(**ORACLE_CONFIG["model"], init_scale=0.0)
    params = init_params(config, Rng(0))
    patterns = class_patterns(spec)
    for c in range(spec.num_classes):
        # classe c: 8 * 2**c Hz = bin 2**c da janela de 64 amostras a 512 Hz
        params["audio_encoder.0.weight"][c, 2 ** c - 1] = 1.0
        params["video_encoder.0.weight"][c] = np.tile(patterns[c], 4)
    for prefix in ("audio_encoder.1", "video_encoder.1", "audio_projector.0", "audio_projector.1",
                   "video_projector.0", "video_projector.1"):
        weight = params[f"{prefix}.weight"]
        weight[:, :] = np.eye(*weight.shape)
    return write_checkpoint(SvaclrModel(config, params), path)


def test_eval_on_one_hot_checkpoint():
    with tempfile.TemporaryDirectory() as tmp:
        config = _write_config(tmp, ORACLE_CONFIG)
        data = Path(tmp) / "data"
        assert _run("generate", "--config", config, "--out", data)[0] == 0
        resolved = json.loads((data / "resolved_config.json").read_text(encoding="utf-8"))
        checkpoint = _one_hot_checkpoint(DatasetSpec(**resolved["dataset"]), Path(tmp) / "oracle.svck")
        out = Path(tmp) / "eval"
        code, _ = _run("eval", "--config", config, "--data", data, "--out", out, "--checkpoint", checkpoint)
        assert code == 0
        retrieval = pd.read_csv(out / "retrieval.csv")
        assert (retrieval["recall"] == 1.0).all()
        assert set(retrieval["direction"]) == {"video_to_audio", "audio_to_video"}


def main():
    """Executa os testes e imprime o resumo"""
    print("🧪 TESTES DA LINHA DE COMANDO")
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
