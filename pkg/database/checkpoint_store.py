"""Checkpoints do modelo (formato SVCK, little-endian).

Layout:
    "SVCK" | versão u32 | tamanho u32 + JSON da configuração (utf-8)
    | nº de tensores u32 | por tensor: ndim u32, dims u32..., dados f64
Os tensores seguem a ordem de declaração dos parâmetros.
"""

import json
import struct
from pathlib import Path

import numpy as np

from engine.errors import CheckpointFormatError
from engine.loss import mapping_layout
from engine.model import ModelConfig, SvaclrModel, parameter_layout

MAGIC = b"SVCK"
VERSION = 1
_U32 = struct.Struct("<I")


def declared_layout(config, mapping):
    return parameter_layout(config) + mapping_layout(mapping, config.repr_dim)


def serialize_checkpoint(model):
    echo = json.dumps({"model": model.config.to_dict(), "mapping": model.mapping},
                      sort_keys=True).encode("utf-8")
    layout = declared_layout(model.config, model.mapping)
    parts = [MAGIC, _U32.pack(VERSION), _U32.pack(len(echo)), echo, _U32.pack(len(layout))]
    for name, shape in layout:
        value = np.asarray(model.params[name], dtype="<f8")
        if value.shape != tuple(shape):
            raise CheckpointFormatError(f"{name}: formato {value.shape}, esperado {shape}")
        parts.append(_U32.pack(value.ndim))
        parts.extend(_U32.pack(d) for d in value.shape)
        parts.append(value.tobytes())
    return b"".join(parts)


def write_checkpoint(model, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(serialize_checkpoint(model))
    return path


class _Reader:
    def __init__(self, payload):
        self.payload = payload
        self.offset = 0

    def take(self, size):
        if self.offset + size > len(self.payload):
            raise CheckpointFormatError("checkpoint truncado")
        chunk = self.payload[self.offset: self.offset + size]
        self.offset += size
        return chunk

    def u32(self):
        return _U32.unpack(self.take(_U32.size))[0]


def deserialize_checkpoint(payload):
    reader = _Reader(payload)
    magic = reader.take(4)
    if magic != MAGIC:
        raise CheckpointFormatError(f"magic inválido: {magic!r} (esperado {MAGIC!r})")
    version = reader.u32()
    if version != VERSION:
        raise CheckpointFormatError(f"versão de checkpoint {version} não suportada")
    try:
        echo = json.loads(reader.take(reader.u32()).decode("utf-8"))
        config = ModelConfig(**echo["model"])
        mapping = echo["mapping"]
        layout = declared_layout(config, mapping)
    except (ValueError, KeyError, TypeError) as e:
        raise CheckpointFormatError(f"configuração do checkpoint ilegível: {e}") from None

    count = reader.u32()
    if count != len(layout):
        raise CheckpointFormatError(f"{count} tensores no arquivo, esperados {len(layout)}")
    params = {}
    for name, shape in layout:
        ndim = reader.u32()
        dims = tuple(reader.u32() for _ in range(ndim))
        if dims != tuple(shape):
            raise CheckpointFormatError(f"{name}: formato {dims}, esperado {tuple(shape)}")
        size = int(np.prod(dims)) * 8
        params[name] = np.frombuffer(reader.take(size), dtype="<f8").astype(np.float64).reshape(dims)
    if reader.offset != len(payload):
        raise CheckpointFormatError("bytes sobrando após o último tensor")
    return SvaclrModel(config, params, mapping)


def read_checkpoint(path):
    with open(path, "rb") as f:
        payload = f.read()
    return deserialize_checkpoint(payload)
