"""InfoNCE, módulo de afinidade cruzada (λ) e SoftInfoNCE.

Convenções de índice:
    Z[i, p]       -> clipe i, vista p (0 = original, 1 = acelerada)
    λ[i, p, q]    -> vista de áudio p x vista de vídeo q do clipe i
Negativos de um termo são todas as vistas-chave dos outros clipes.
"""

from dataclasses import asdict, dataclass

import numpy as np

from engine import autodiff as ad
from engine.errors import ConfigError, ShapeMismatchError
from engine.model import BatchEmbeddings, init_layout, mlp, mlp_layout
from engine.rng import Rng

MAPPINGS = ("identity", "linear", "nonlinear")
DIRECTIONS = ("audio_to_video", "video_to_audio", "both")


@dataclass
class LossConfig:
    eta: float = 0.1
    direction: str = "both"
    mapping: str = "identity"
    detach_affinity: bool = False
    include_same_clip_other_view_as_negative: bool = False
    uniform_affinity: bool = False

    def validate(self):
        if not self.eta > 0:
            raise ConfigError(f"eta deve ser > 0 (recebido {self.eta})")
        if self.direction not in DIRECTIONS:
            raise ConfigError(f"direction inválida: {self.direction}")
        if self.mapping not in MAPPINGS:
            raise ConfigError(f"mapping inválido: {self.mapping}")
        return self

    def to_dict(self):
        return asdict(self)


# ---------------------------------------------------------------------------
# Mapeamento l(.) do módulo de afinidade
# ---------------------------------------------------------------------------

def mapping_layout(mapping, repr_dim):
    if mapping == "identity":
        return []
    if mapping == "linear":
        return [("mapping.0.weight", (repr_dim, repr_dim))]
    if mapping == "nonlinear":
        return mlp_layout("mapping", [repr_dim, repr_dim, repr_dim])
    raise ConfigError(f"mapping inválido: {mapping}")


def init_mapping_params(mapping, repr_dim, rng, init_scale=1.0):
    return init_layout(mapping_layout(mapping, repr_dim), rng, init_scale)


def apply_mapping(y, mapping, params):
    if mapping == "identity":
        return ad.as_tensor(y)
    if mapping == "linear":
        return ad.matmul(y, ad.transpose(params["mapping.0.weight"]))
    if mapping == "nonlinear":
        return mlp(params, "mapping", y)
    raise ConfigError(f"mapping inválido: {mapping}")


def affinity_from_logits(logits):
    """softmax sobre as 4 entradas achatadas de cada matriz 2x2"""
    logits = ad.as_tensor(logits)
    n = logits.shape[0]
    flat = ad.reshape(logits, (n, 4))
    return ad.reshape(ad.softmax(flat, axis=1), (n, 2, 2))


def affinity_logits(Y_a, Y_v, mapping, params):
    """logits[i, p, q] = l(y_a[i, p]) . l(y_v[i, q])"""
    Y_a, Y_v = ad.as_tensor(Y_a), ad.as_tensor(Y_v)
    if Y_a.shape != Y_v.shape or Y_a.data.ndim != 3 or Y_a.shape[1] != 2:
        raise ShapeMismatchError("cross_affinity", Y_a.shape, Y_v.shape)
    n, _, d = Y_a.shape
    mapped_a = apply_mapping(ad.reshape(Y_a, (2 * n, d)), mapping, params)
    mapped_v = apply_mapping(ad.reshape(Y_v, (2 * n, d)), mapping, params)
    width = mapped_a.shape[-1]
    pairs = ad.mul(ad.reshape(mapped_a, (n, 2, 1, width)), ad.reshape(mapped_v, (n, 1, 2, width)))
    return ad.sum(pairs, axis=3)


def cross_affinity_batch(Y_a, Y_v, mapping, params):
    """λ (N, 2, 2) para o lote inteiro"""
    return affinity_from_logits(affinity_logits(Y_a, Y_v, mapping, params))


def cross_affinity(Y_a_views, Y_v_views, mapping, params):
    """λ (2, 2) de um único clipe a partir das representações y (não de z)"""
    Y_a_views, Y_v_views = ad.as_tensor(Y_a_views), ad.as_tensor(Y_v_views)
    d = Y_a_views.shape[-1]
    lam = cross_affinity_batch(ad.reshape(Y_a_views, (1, 2, d)),
                               ad.reshape(Y_v_views, (1, 2, d)), mapping, params)
    return ad.reshape(lam, (2, 2))


def uniform_affinity(n):
    return ad.constant(np.full((n, 2, 2), 0.25))


# ---------------------------------------------------------------------------
# InfoNCE
# ---------------------------------------------------------------------------

def _check_pair(Z_query, Z_key):
    if Z_query.data.ndim != 3 or Z_query.shape != Z_key.shape:
        raise ShapeMismatchError("info_nce", Z_query.shape, Z_key.shape)
    if Z_query.shape[0] < 2:
        raise ValueError("InfoNCE exige N >= 2 (sem negativos)")


def _key_columns(i, q, num_clips, num_views, include_other_view):
    """Índices (achatados j*V + q') das chaves: positivo primeiro, depois negativos"""
    cols = [i * num_views + q]
    if include_other_view:
        cols.extend(i * num_views + other for other in range(num_views) if other != q)
    for j in range(num_clips):
        if j != i:
            cols.extend(j * num_views + k for k in range(num_views))
    return cols


def info_nce_term(Z_query, Z_key, i, p, q, cfg):
    """-log softmax do par positivo (i, p) -> (i, q) contra 2(N-1) negativos"""
    Z_query, Z_key = ad.as_tensor(Z_query), ad.as_tensor(Z_key)
    _check_pair(Z_query, Z_key)
    n, v, d = Z_query.shape
    cols = _key_columns(i, q, n, v, cfg.include_same_clip_other_view_as_negative)
    keys = ad.slice(ad.reshape(Z_key, (n * v, d)), np.array(cols))
    query = ad.reshape(ad.slice(Z_query, (i, p)), (d, 1))
    logits = ad.scale(ad.reshape(ad.matmul(keys, query), (len(cols),)), 1.0 / cfg.eta)
    log_prob = ad.log(ad.softmax(logits, axis=0))
    return ad.scale(ad.slice(log_prob, 0), -1.0)


def view_pair_terms(Z_query, Z_key, cfg):
    """Todos os termos InfoNCE de uma vez: tensor (N, V, V) indexado por [i, p, q]"""
    Z_query, Z_key = ad.as_tensor(Z_query), ad.as_tensor(Z_key)
    _check_pair(Z_query, Z_key)
    n, v, d = Z_query.shape
    rows_total = n * v
    sims = ad.scale(
        ad.matmul(ad.reshape(Z_query, (rows_total, d)),
                  ad.transpose(ad.reshape(Z_key, (rows_total, d)))),
        1.0 / cfg.eta,
    )
    include_other = cfg.include_same_clip_other_view_as_negative
    rows = np.arange(rows_total)
    columns = []
    for q in range(v):
        cols = np.array([_key_columns(r // v, q, n, v, include_other) for r in rows])
        logits = ad.slice(sims, (rows[:, None], cols))
        log_prob = ad.log(ad.softmax(logits, axis=1))
        positive = ad.slice(log_prob, (rows, np.zeros(rows_total, dtype=int)))
        columns.append(ad.reshape(positive, (rows_total, 1)))
    stacked = ad.concat(columns, axis=1) if v > 1 else columns[0]
    return ad.scale(ad.reshape(stacked, (n, v, v)), -1.0)


def _directional_terms(batch_a, batch_v, cfg):
    """Termos por direção, sempre alinhados como [i, vista de áudio, vista de vídeo]"""
    terms = []
    if cfg.direction in ("audio_to_video", "both"):
        terms.append(view_pair_terms(batch_a, batch_v, cfg))
    if cfg.direction in ("video_to_audio", "both"):
        terms.append(ad.transpose(view_pair_terms(batch_v, batch_a, cfg), (0, 2, 1)))
    return terms


def _average(values):
    total = values[0]
    for other in values[1:]:
        total = ad.add(total, other)
    return ad.scale(total, 1.0 / len(values))


def soft_info_nce(batch, affinities, cfg):
    """(1/N) Σ_i Σ_{p,q} λ[i,p,q] · InfoNCE(i, p, q), média das direções configuradas"""
    n = batch.num_clips
    affinities = ad.as_tensor(affinities)
    if affinities.shape != (n, 2, 2):
        raise ShapeMismatchError("soft_info_nce", affinities.shape, (n, 2, 2))
    lam = ad.detach(affinities) if cfg.detach_affinity else affinities
    per_direction = [
        ad.scale(ad.sum(ad.mul(lam, terms)), 1.0 / n)
        for terms in _directional_terms(batch.Z_a, batch.Z_v, cfg)
    ]
    return _average(per_direction)


def original_views(Z):
    """Só a vista original (velocidade 1): (N, 2, d) -> (N, 1, d)"""
    Z = ad.as_tensor(Z)
    return ad.slice(Z, (np.s_[:], np.s_[0:1]))


def vanilla_info_nce(Z_a, Z_v, cfg):
    """InfoNCE com uma vista por modalidade (N-1 negativos); aceita (N, d) ou (N, 1, d)"""
    Z_a, Z_v = ad.as_tensor(Z_a), ad.as_tensor(Z_v)
    if Z_a.data.ndim == 2:
        Z_a = ad.reshape(Z_a, (Z_a.shape[0], 1, Z_a.shape[1]))
        Z_v = ad.reshape(Z_v, (Z_v.shape[0], 1, Z_v.shape[1]))
    per_direction = [ad.mean(terms) for terms in _directional_terms(Z_a, Z_v, cfg)]
    return _average(per_direction)


# ---------------------------------------------------------------------------
# Verificação de gradientes por diferenças centrais
# ---------------------------------------------------------------------------

def _block(t, start, shape):
    size = int(np.prod(shape))
    return ad.reshape(ad.slice(t, np.s_[start: start + size]), shape)


def _unflatten(t, layout):
    """Vetor plano -> dicionário de parâmetros na ordem do layout"""
    params, start = {}, 0
    for name, shape in layout:
        params[name] = _block(t, start, shape)
        start += int(np.prod(shape))
    return params


def _soft_loss(y_a, y_v, mapping, params, cfg):
    n, _, d = y_a.shape
    z_a = ad.reshape(ad.l2_normalize(ad.reshape(y_a, (2 * n, d))), (n, 2, d))
    z_v = ad.reshape(ad.l2_normalize(ad.reshape(y_v, (2 * n, d))), (n, 2, d))
    lam = cross_affinity_batch(y_a, y_v, mapping, params)
    return soft_info_nce(BatchEmbeddings(y_a, y_v, z_a, z_v), lam, cfg)


def gradient_check_suite(seed=0, instances=20, dim=4, eps=1e-6, clip_counts=(2, 3, 4)):
    """Maior erro relativo por componente: InfoNCE, afinidade e SoftInfoNCE (entradas e
    parâmetros do mapeamento) para cada N em `clip_counts`"""
    cfg = LossConfig()
    d = dim
    errors = {}

    def track(name, value):
        errors[name] = max(errors.get(name, 0.0), value)

    for instance in range(instances):
        rng = Rng.derive(seed, "gradcheck", instance)

        weights = ad.constant(rng.normals(4).reshape(2, 2))
        for mapping in MAPPINGS:
            params = {name: ad.constant(value)
                      for name, value in init_mapping_params(mapping, d, rng).items()}

            def affinity(t, mapping=mapping, params=params):
                lam = cross_affinity(_block(t, 0, (2, d)), _block(t, 2 * d, (2, d)), mapping, params)
                return ad.sum(ad.mul(lam, weights))

            track(f"cross_affinity[{mapping}]", ad.grad_check(affinity, rng.normals(4 * d), eps))

        for n in clip_counts:
            def vanilla(t, n=n):
                z_a = ad.l2_normalize(_block(t, 0, (n, d)))
                z_v = ad.l2_normalize(_block(t, n * d, (n, d)))
                return vanilla_info_nce(z_a, z_v, cfg)

            track("vanilla_info_nce", ad.grad_check(vanilla, rng.normals(2 * n * d), eps))

            def soft(t, n=n):
                return _soft_loss(_block(t, 0, (n, 2, d)), _block(t, 2 * n * d, (n, 2, d)),
                                  "identity", {}, cfg)

            track("soft_info_nce", ad.grad_check(soft, rng.normals(4 * n * d), eps))

            y_a = ad.constant(rng.normals(2 * n * d).reshape(n, 2, d))
            y_v = ad.constant(rng.normals(2 * n * d).reshape(n, 2, d))
            for mapping in ("linear", "nonlinear"):
                layout = mapping_layout(mapping, d)
                flat = np.concatenate([value.reshape(-1) for value in
                                       init_mapping_params(mapping, d, rng).values()])

                def through_params(t, layout=layout, mapping=mapping):
                    return _soft_loss(y_a, y_v, mapping, _unflatten(t, layout), cfg)

                track(f"mapping_params[{mapping}]", ad.grad_check(through_params, flat, eps))
    return errors
