"""Encoders de áudio/vídeo e projetores (MLPs de duas camadas).

Encoders produzem as representações y; projetores levam y para o espaço
de contraste z, normalizado na esfera unitária.
"""

from dataclasses import asdict, dataclass

import numpy as np

from engine import autodiff as ad
from engine.augment import audio_features
from engine.errors import ConfigError, ShapeMismatchError

ENCODERS = ("audio_encoder", "video_encoder")
PROJECTORS = ("audio_projector", "video_projector")


@dataclass
class ModelConfig:
    audio_in: int = 128
    video_in: int = 128
    encoder_hidden: int = 128
    repr_dim: int = 64
    proj_hidden: int = 64
    proj_dim: int = 32
    init_scale: float = 1.0

    def validate(self):
        dims = [self.audio_in, self.video_in, self.encoder_hidden,
                self.repr_dim, self.proj_hidden, self.proj_dim]
        if any(d < 1 for d in dims):
            raise ConfigError("todas as dimensões do modelo devem ser >= 1")
        if self.init_scale < 0:
            raise ConfigError("init_scale deve ser >= 0")
        return self

    def to_dict(self):
        return asdict(self)


@dataclass
class BatchEmbeddings:
    Y_a: ad.Tensor  # (N, 2, repr_dim)
    Y_v: ad.Tensor
    Z_a: ad.Tensor  # (N, 2, proj_dim), linhas unitárias
    Z_v: ad.Tensor

    @property
    def num_clips(self):
        return self.Z_a.shape[0]


def mlp_layout(prefix, dims):
    """[(nome, formato)] de uma MLP com dims = [entrada, oculta, ..., saída]"""
    layout = []
    for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
        layout.append((f"{prefix}.{i}.weight", (fan_out, fan_in)))
        layout.append((f"{prefix}.{i}.bias", (fan_out,)))
    return layout


def parameter_layout(config):
    """Ordem de declaração dos parâmetros (também a ordem do checkpoint)"""
    return (
        mlp_layout("audio_encoder", [config.audio_in, config.encoder_hidden, config.repr_dim])
        + mlp_layout("video_encoder", [config.video_in, config.encoder_hidden, config.repr_dim])
        + mlp_layout("audio_projector", [config.repr_dim, config.proj_hidden, config.proj_dim])
        + mlp_layout("video_projector", [config.repr_dim, config.proj_hidden, config.proj_dim])
    )


def init_layout(layout, rng, init_scale=1.0):
    """Pesos ~ U(-b, b) com b = init_scale / sqrt(fan_in); vieses zero"""
    params = {}
    for name, shape in layout:
        if name.endswith(".bias"):
            params[name] = np.zeros(shape)
            continue
        bound = init_scale / np.sqrt(shape[1])
        if bound == 0:
            params[name] = np.zeros(shape)
        else:
            params[name] = rng.uniforms(int(np.prod(shape)), -bound, bound).reshape(shape)
    return params


def init_params(config, rng):
    return init_layout(parameter_layout(config), rng, config.init_scale)


def mlp(params, prefix, x):
    """relu entre camadas, saída linear"""
    n_layers = sum(1 for name in params if name.startswith(prefix + ".") and name.endswith(".weight"))
    h = x
    for i in range(n_layers):
        h = ad.add(ad.matmul(h, ad.transpose(params[f"{prefix}.{i}.weight"])),
                   params[f"{prefix}.{i}.bias"])
        if i < n_layers - 1:
            h = ad.relu(h)
    return h


def _check_width(what, x, expected):
    if x.shape[-1] != expected:
        raise ShapeMismatchError(what, x.shape, (expected,))


def encode_audio(params, features, config):
    features = ad.as_tensor(features)
    _check_width("encode_audio", features, config.audio_in)
    return mlp(params, "audio_encoder", features)


def encode_video(params, flattened_frames, config):
    flattened_frames = ad.as_tensor(flattened_frames)
    _check_width("encode_video", flattened_frames, config.video_in)
    return mlp(params, "video_encoder", flattened_frames)


def project(params, y, modality, config):
    """z = l2_normalize(h(y)); saída nula do projetor gera DomainError"""
    y = ad.as_tensor(y)
    _check_width("project", y, config.repr_dim)
    return ad.l2_normalize(mlp(params, f"{modality}_projector", y), axis=-1)


def batch_inputs(viewsets, config):
    """Entradas empilhadas (2N, ·) na ordem clipe-major: linha 2i+p é a vista p do clipe i"""
    audio_rows = []
    video_rows = []
    for vs in viewsets:
        for p in range(2):
            view = vs.audio_views[p]
            audio_rows.append(audio_features(view, n_bins=config.audio_in, window=len(view)))
            video_rows.append(np.asarray(vs.video_views[p]).reshape(-1))
    return np.array(audio_rows), np.array(video_rows)


def forward_batch(params, viewsets, config):
    """Codifica as 2N vistas de cada modalidade e projeta"""
    if len(viewsets) < 2:
        raise ValueError("forward_batch exige pelo menos 2 clipes")
    return forward_views(params, viewsets, config)


def forward_views(params, viewsets, config):
    n = len(viewsets)
    audio_in, video_in = batch_inputs(viewsets, config)
    y_a = encode_audio(params, audio_in, config)
    y_v = encode_video(params, video_in, config)
    z_a = project(params, y_a, "audio", config)
    z_v = project(params, y_v, "video", config)
    return BatchEmbeddings(
        Y_a=ad.reshape(y_a, (n, 2, config.repr_dim)),
        Y_v=ad.reshape(y_v, (n, 2, config.repr_dim)),
        Z_a=ad.reshape(z_a, (n, 2, config.proj_dim)),
        Z_v=ad.reshape(z_v, (n, 2, config.proj_dim)),
    )


class SvaclrModel:
    """Configuração + parâmetros (encoders, projetores e, se houver, o mapeamento de afinidade)"""

    def __init__(self, config, params, mapping="identity"):
        self.config = config
        self.params = dict(params)
        self.mapping = mapping

    @classmethod
    def initialize(cls, config, rng, mapping="identity"):
        from engine.loss import init_mapping_params

        params = init_params(config, rng)
        params.update(init_mapping_params(mapping, config.repr_dim, rng, config.init_scale))
        return cls(config, params, mapping)

    def parameter_count(self):
        return int(sum(value.size for value in self.params.values()))

    def constants(self):
        """Parâmetros como tensores constantes (avaliação, sem fita)"""
        return {name: ad.Tensor(value) for name, value in self.params.items()}

    def embed(self, viewsets):
        return forward_views(self.constants(), viewsets, self.config)
