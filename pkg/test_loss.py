#!/usr/bin/env python3
"""
Testes do InfoNCE, do módulo de afinidade cruzada e do SoftInfoNCE
"""

import math
import sys

import numpy as np

from engine import autodiff as ad
from engine.errors import ShapeMismatchError
from engine.loss import (
    LossConfig,
    affinity_from_logits,
    cross_affinity,
    cross_affinity_batch,
    gradient_check_suite,
    info_nce_term,
    soft_info_nce,
    uniform_affinity,
    vanilla_info_nce,
    view_pair_terms,
)
from engine.model import BatchEmbeddings
from engine.rng import Rng


def _unit(rng, *shape):
    x = rng.normals(int(np.prod(shape))).reshape(shape)
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


def _batch(Z_a, Z_v):
    return BatchEmbeddings(ad.constant(Z_a), ad.constant(Z_v), ad.constant(Z_a), ad.constant(Z_v))


def _oracle_term(Zq, Zk, i, p, q, eta, include_other=False):
    """-log softmax do positivo, somando as exponenciais diretamente"""
    n, v, _ = Zq.shape
    query = Zq[i, p]
    logits = [query @ Zk[i, q] / eta]
    if include_other:
        logits += [query @ Zk[i, o] / eta for o in range(v) if o != q]
    for j in range(n):
        if j != i:
            logits += [query @ Zk[j, k] / eta for k in range(v)]
    logits = np.array(logits)
    return -(logits[0] - math.log(np.sum(np.exp(logits))))


def _oracle_vanilla(Z_a, Z_v, eta):
    n = len(Z_a)
    a2v = np.mean([_oracle_term(Z_a[:, None], Z_v[:, None], i, 0, 0, eta) for i in range(n)])
    v2a = np.mean([_oracle_term(Z_v[:, None], Z_a[:, None], i, 0, 0, eta) for i in range(n)])
    return 0.5 * (a2v + v2a)


def test_info_nce_single_positive_two_negatives():
    eye = np.eye(4)
    Z_a = np.stack([eye[[0, 1]], eye[[2, 3]]])
    Z_v = np.stack([eye[[0, 1]], eye[[2, 3]]])
    term = info_nce_term(Z_a, Z_v, 0, 0, 0, LossConfig(eta=1.0)).item()
    assert abs(term - (-math.log(math.e / (math.e + 2)))) < 1e-12
    assert abs(term - 0.55145) < 1e-5


def test_info_nce_with_equal_similarities():
    Z = np.tile(np.array([1.0, 0.0, 0.0]), (4, 2, 1))
    terms = view_pair_terms(Z, Z, LossConfig()).data
    assert terms.shape == (4, 2, 2)
    assert np.allclose(terms, math.log(7), atol=1e-12)
    widened = view_pair_terms(Z, Z, LossConfig(include_same_clip_other_view_as_negative=True)).data
    assert np.allclose(widened, math.log(8), atol=1e-12)


def test_temperature_scaling_identity():
    rng = Rng(1)
    Z_a, Z_v = _unit(rng, 3, 2, 5), _unit(rng, 3, 2, 5)
    c = 2.5
    cooled = info_nce_term(Z_a, Z_v, 1, 0, 1, LossConfig(eta=0.1 / c)).item()
    scaled = info_nce_term(Z_a * c, Z_v, 1, 0, 1, LossConfig(eta=0.1)).item()
    assert abs(cooled - scaled) < 1e-12


def test_view_pair_terms_match_direct_summation():
    rng = Rng(2)
    for include_other in (False, True):
        cfg = LossConfig(include_same_clip_other_view_as_negative=include_other)
        Z_a, Z_v = _unit(rng, 3, 2, 4), _unit(rng, 3, 2, 4)
        terms = view_pair_terms(Z_a, Z_v, cfg).data
        for i in range(3):
            for p in range(2):
                for q in range(2):
                    expected = _oracle_term(Z_a, Z_v, i, p, q, cfg.eta, include_other)
                    assert abs(terms[i, p, q] - expected) < 1e-12
                    assert abs(info_nce_term(Z_a, Z_v, i, p, q, cfg).item() - expected) < 1e-12


def test_vanilla_info_nce_oracle():
    for n in (2, 3, 4):
        rng = Rng(10 + n)
        Z_a, Z_v = _unit(rng, n, 6), _unit(rng, n, 6)
        value = vanilla_info_nce(Z_a, Z_v, LossConfig()).item()
        assert abs(value - _oracle_vanilla(Z_a, Z_v, 0.1)) < 1e-12


def test_vanilla_info_nce_identical_embeddings():
    Z = np.tile(np.array([0.0, 1.0]), (5, 1))
    assert abs(vanilla_info_nce(Z, Z, LossConfig()).item() - math.log(5)) < 1e-12


def test_vanilla_info_nce_permutation_invariance():
    rng = Rng(3)
    Z_a, Z_v = _unit(rng, 5, 4), _unit(rng, 5, 4)
    order = [3, 1, 4, 0, 2]
    base = vanilla_info_nce(Z_a, Z_v, LossConfig()).item()
    permuted = vanilla_info_nce(Z_a[order], Z_v[order], LossConfig()).item()
    assert abs(base - permuted) < 1e-12


def test_info_nce_requires_negatives():
    Z = np.ones((1, 2, 3)) / math.sqrt(3)
    try:
        view_pair_terms(Z, Z, LossConfig())
        assert False, "N < 2 deveria falhar"
    except ValueError:
        pass
    try:
        view_pair_terms(np.ones((2, 2, 3)), np.ones((2, 2, 4)), LossConfig())
        assert False, "ShapeMismatchError esperado"
    except ShapeMismatchError:
        pass


def test_cross_affinity_examples():
    same = np.tile(np.array([0.6, 0.8]), (2, 1))
    assert np.allclose(cross_affinity(same, same, "identity", {}).data, 0.25, atol=1e-12)

    lam = affinity_from_logits(np.array([[[2.0, 0.0], [0.0, 0.0]]])).data[0]
    big, small = math.e ** 2 / (math.e ** 2 + 3), 1 / (math.e ** 2 + 3)
    assert np.allclose(lam, [[big, small], [small, small]], atol=1e-12)
    assert np.allclose(lam, [[0.71123, 0.09626], [0.09626, 0.09626]], atol=1e-5)


def test_linear_identity_mapping_reduces_to_identity():
    rng = Rng(4)
    Y_a, Y_v = rng.normals(3 * 2 * 5).reshape(3, 2, 5), rng.normals(3 * 2 * 5).reshape(3, 2, 5)
    identity = cross_affinity_batch(Y_a, Y_v, "identity", {}).data
    linear = cross_affinity_batch(Y_a, Y_v, "linear", {"mapping.0.weight": ad.constant(np.eye(5))}).data
    assert np.allclose(identity, linear, atol=1e-12)


def test_affinity_normalization_and_shift_invariance():
    rng = Rng(5)
    for _ in range(100):
        logits = rng.normals(4).reshape(1, 2, 2) * 3.0
        shift = rng.uniform(-50.0, 50.0)
        lam = affinity_from_logits(logits).data
        shifted = affinity_from_logits(logits + shift).data
        assert np.all(lam > 0)
        assert abs(lam.sum() - 1.0) < 1e-12
        assert np.allclose(lam, shifted, atol=1e-12)


def test_soft_info_nce_convex_combination():
    Z = np.tile(np.array([1.0, 0.0, 0.0]), (4, 2, 1))
    loss = soft_info_nce(_batch(Z, Z), uniform_affinity(4), LossConfig()).item()
    assert abs(loss - math.log(7)) < 1e-12


def test_soft_info_nce_with_uniform_affinity_is_mean_of_view_pairs():
    rng = Rng(6)
    Z_a, Z_v = _unit(rng, 4, 2, 6), _unit(rng, 4, 2, 6)
    loss = soft_info_nce(_batch(Z_a, Z_v), uniform_affinity(4), LossConfig()).item()
    a2v = np.mean([_oracle_term(Z_a, Z_v, i, p, q, 0.1)
                   for i in range(4) for p in range(2) for q in range(2)])
    v2a = np.mean([_oracle_term(Z_v, Z_a, i, q, p, 0.1)
                   for i in range(4) for p in range(2) for q in range(2)])
    assert abs(loss - 0.5 * (a2v + v2a)) < 1e-12


def test_soft_info_nce_directions():
    rng = Rng(7)
    Z_a, Z_v = _unit(rng, 3, 2, 4), _unit(rng, 3, 2, 4)
    lam = affinity_from_logits(rng.normals(12).reshape(3, 2, 2))
    values = {d: soft_info_nce(_batch(Z_a, Z_v), lam, LossConfig(direction=d)).item()
              for d in ("audio_to_video", "video_to_audio", "both")}
    assert abs(values["both"] - 0.5 * (values["audio_to_video"] + values["video_to_audio"])) < 1e-12
    expected = np.sum(lam.data * view_pair_terms(Z_a, Z_v, LossConfig()).data) / 3
    assert abs(values["audio_to_video"] - expected) < 1e-12


def test_soft_info_nce_rejects_bad_affinity_shape():
    Z = _unit(Rng(8), 3, 2, 4)
    try:
        soft_info_nce(_batch(Z, Z), uniform_affinity(2), LossConfig())
        assert False, "ShapeMismatchError esperado"
    except ShapeMismatchError:
        pass


def test_detached_affinity_passes_no_gradient():
    rng = Rng(9)
    Z = _unit(rng, 2, 2, 4)
    for detach, expect_zero in ((True, True), (False, False)):
        tape = ad.Tape()
        Y_a = tape.leaf(rng.normals(16).reshape(2, 2, 4))
        Y_v = tape.leaf(rng.normals(16).reshape(2, 2, 4))
        lam = cross_affinity_batch(Y_a, Y_v, "identity", {})
        loss = soft_info_nce(_batch(Z, Z[::-1]), lam, LossConfig(detach_affinity=detach))
        grad = ad.backward(tape, loss)[Y_a.node_id]
        assert np.all(grad == 0) == expect_zero


def test_soft_info_nce_permutation_invariance():
    rng = Rng(10)
    Z_a, Z_v = _unit(rng, 5, 2, 4), _unit(rng, 5, 2, 4)
    lam = affinity_from_logits(rng.normals(20).reshape(5, 2, 2)).data
    order = [3, 1, 4, 0, 2]
    base = soft_info_nce(_batch(Z_a, Z_v), lam, LossConfig()).item()
    permuted = soft_info_nce(_batch(Z_a[order], Z_v[order]), lam[order], LossConfig()).item()
    assert abs(base - permuted) < 1e-12


def test_gradient_check_suite():
    errors = gradient_check_suite(seed=0, instances=5)
    assert set(errors) == {"vanilla_info_nce", "cross_affinity[identity]", "cross_affinity[linear]",
                           "cross_affinity[nonlinear]", "soft_info_nce",
                           "mapping_params[linear]", "mapping_params[nonlinear]"}
    assert all(error < 1e-6 for error in errors.values()), errors


def main():
    """Executa os testes e imprime o resumo"""
    print("🧪 TESTES DA LOSS")
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
