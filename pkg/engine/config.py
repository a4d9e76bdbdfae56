"""Configuração de execução (RunConfig) lida de JSON.

Seções: dataset, augment, model, loss, train, output_dir, seed. Chaves
desconhecidas são rejeitadas; seeds de seção nulas herdam a seed da execução.
"""

import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Union, get_args, get_origin

from engine.augment import AugmentConfig, required_length
from engine.datagen import DatasetSpec
from engine.errors import ConfigError
from engine.loss import LossConfig
from engine.model import ModelConfig
from engine.training import TrainConfig

RESOLVED_CONFIG_NAME = "resolved_config.json"

SECTIONS = {
    "dataset": DatasetSpec,
    "augment": AugmentConfig,
    "model": ModelConfig,
    "loss": LossConfig,
    "train": TrainConfig,
}
# Seções que o TrainConfig recebe prontas do RunConfig
_TRAIN_NESTED = ("augment", "loss", "model")


def _section_keys(name, cls):
    names = [f.name for f in fields(cls)]
    if name == "train":
        names = [n for n in names if n not in _TRAIN_NESTED]
    return names


def _check_value(dotted, value, hint):
    """Confere `value` contra a anotação do campo; int vale onde se espera float"""
    if get_origin(hint) is Union:
        if value is None and type(None) in get_args(hint):
            return value
        hint = next(arg for arg in get_args(hint) if arg is not type(None))
    if hint is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if hint is int and isinstance(value, bool):
        raise ConfigError(f"'{dotted}' deve ser int, recebido bool")
    if not isinstance(value, hint):
        raise ConfigError(f"'{dotted}' deve ser {hint.__name__}, recebido {type(value).__name__}")
    if hint is dict:
        for key, count in value.items():
            if not isinstance(count, int) or isinstance(count, bool):
                raise ConfigError(f"'{dotted}.{key}' deve ser int")
    return value


def _section_from_dict(name, data):
    cls = SECTIONS[name]
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"seção '{name}' deve ser um objeto JSON")
    allowed = _section_keys(name, cls)
    for key in data:
        if key not in allowed:
            raise ConfigError(f"chave desconhecida '{name}.{key}'")
    hints = {f.name: f.type for f in fields(cls)}
    values = {key: _check_value(f"{name}.{key}", value, hints[key]) for key, value in data.items()}
    return cls(**values)


@dataclass
class RunConfig:
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    output_dir: str = "runs/default"
    seed: int = 0

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigError("a configuração deve ser um objeto JSON")
        allowed = set(SECTIONS) | {"output_dir", "seed"}
        for key in data:
            if key not in allowed:
                raise ConfigError(f"chave desconhecida '{key}'")
        config = cls(**{name: _section_from_dict(name, data.get(name)) for name in SECTIONS})
        if "output_dir" in data:
            config.output_dir = _check_value("output_dir", data["output_dir"], str)
        if "seed" in data:
            config.seed = _check_value("seed", data["seed"], int)
        return config

    def apply_overrides(self, seed=None, variant=None, max_speed=None, min_speed=None, out=None):
        """Flags da linha de comando sobrepõem o arquivo"""
        if seed is not None:
            self.seed = seed
        if variant is not None:
            self.train.variant = variant
        if max_speed is not None:
            self.augment.max_speed = max_speed
        if min_speed is not None:
            self.augment.min_speed = min_speed
        if out is not None:
            self.output_dir = str(out)
        return self

    def resolve(self):
        """Materializa seeds herdadas e liga as seções aninhadas do treino"""
        if self.dataset.seed is None:
            self.dataset.seed = self.seed
        if self.train.seed is None:
            self.train.seed = self.seed
        self.train.augment = self.augment
        self.train.loss = self.loss
        self.train.model = self.model
        return self

    def validate(self):
        self.dataset.validate()
        self.train.validate()
        for section in (self.augment, self.model, self.loss):
            section.validate()

        expected_video_in = self.augment.video_window * self.dataset.frame_dim
        if self.model.video_in != expected_video_in:
            raise ConfigError(
                f"model.video_in={self.model.video_in} difere de "
                f"video_window*frame_dim={expected_video_in}"
            )
        if self.model.audio_in > self.augment.audio_window // 2:
            raise ConfigError(
                f"model.audio_in={self.model.audio_in} excede os bins da janela "
                f"de {self.augment.audio_window} amostras"
            )
        top = self.augment.max_speed
        if required_length(self.augment.audio_window, top) > self.dataset.raw_audio_len:
            raise ConfigError(f"raw_audio_len curto demais para velocidade {top}")
        if required_length(self.augment.video_window, top) > self.dataset.raw_video_frames:
            raise ConfigError(f"raw_video_frames curto demais para velocidade {top}")
        return self

    def to_dict(self):
        train = {name: getattr(self.train, name) for name in _section_keys("train", TrainConfig)}
        return {
            "dataset": self.dataset.to_dict(),
            "augment": self.augment.to_dict(),
            "model": self.model.to_dict(),
            "loss": self.loss.to_dict(),
            "train": train,
            "output_dir": self.output_dir,
            "seed": self.seed,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def load_config(path=None, **overrides):
    """Lê o JSON (ou usa os padrões), aplica overrides, resolve e valida"""
    if path is None:
        config = RunConfig()
    else:
        with open(path, encoding="utf-8") as f:
            try:
                data = json.load(f)
            except json.JSONDecodeError as e:
                raise ConfigError(f"JSON inválido em {path}: {e}") from None
        config = RunConfig.from_dict(data)
    config.apply_overrides(**overrides)
    return config.resolve().validate()


def save_resolved_config(config, directory):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / RESOLVED_CONFIG_NAME
    path.write_text(config.to_json(), encoding="utf-8")
    return path
