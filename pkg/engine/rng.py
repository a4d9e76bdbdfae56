"""Gerador pseudoaleatório determinístico (xoshiro256** semeado por splitmix64).

Mesma semente => mesma sequência em qualquer plataforma, bit a bit.
"""

import math
import zlib

import numpy as np

_MASK64 = (1 << 64) - 1
_TWO_POW_53 = float(1 << 53)


def _rotl(x, k):
    return ((x << k) | (x >> (64 - k))) & _MASK64


def splitmix64(state):
    """Avança um estado splitmix64; retorna (novo_estado, saída)"""
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def _key_to_int(key):
    if isinstance(key, str):
        return zlib.crc32(key.encode("utf-8"))
    return int(key) & _MASK64


def mix_seed(seed, *keys):
    """Combina uma semente com chaves (inteiros ou strings) em uma nova semente de 64 bits"""
    _, acc = splitmix64(_key_to_int(seed))
    for key in keys:
        _, k = splitmix64(_key_to_int(key) ^ 0xD1B54A32D192ED03)
        _, acc = splitmix64(acc ^ k)
    return acc


class Rng:
    """xoshiro256** com estado de 256 bits"""

    def __init__(self, seed=0):
        self.seed = _key_to_int(seed)
        state = self.seed
        words = []
        for _ in range(4):
            state, out = splitmix64(state)
            words.append(out)
        self.state = words

    @classmethod
    def derive(cls, seed, *keys):
        """Fluxo independente para (semente, chaves...), ex.: (seed, 'shuffle', época)"""
        return cls(mix_seed(seed, *keys))

    def fork(self, key):
        """Fluxo filho identificado por `key`; não avança o gerador pai"""
        s0, s1, s2, s3 = self.state
        return Rng(mix_seed(s0 ^ _rotl(s1, 17) ^ _rotl(s2, 31) ^ _rotl(s3, 47), key))

    def next_u64(self):
        s0, s1, s2, s3 = self.state
        result = (_rotl((s1 * 5) & _MASK64, 7) * 9) & _MASK64
        t = (s1 << 17) & _MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self.state = [s0, s1, s2, s3]
        return result

    def random(self):
        """Uniforme em [0, 1) com 53 bits de mantissa"""
        return (self.next_u64() >> 11) / _TWO_POW_53

    def uniform(self, lo=0.0, hi=1.0):
        if not lo < hi:
            raise ValueError(f"uniform exige lo < hi (recebido lo={lo}, hi={hi})")
        return lo + (hi - lo) * self.random()

    def uniform_int(self, n):
        """Inteiro em [0, n)"""
        if n < 1:
            raise ValueError("uniform_int exige n >= 1")
        return (self.next_u64() * n) >> 64

    def normal(self):
        """Normal padrão via Box-Muller (usa dois uniformes, descarta o seno)"""
        u1 = 1.0 - self.random()
        u2 = self.random()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def raw_u64(self, count):
        """`count` saídas seguidas de next_u64 (laço inline, mesma sequência)"""
        s0, s1, s2, s3 = self.state
        mask = _MASK64
        out = [0] * count
        for i in range(count):
            x = (s1 * 5) & mask
            out[i] = ((((x << 7) | (x >> 57)) & mask) * 9) & mask
            t = (s1 << 17) & mask
            s2 ^= s0
            s3 ^= s1
            s1 ^= s2
            s0 ^= s3
            s2 ^= t
            s3 = ((s3 << 45) | (s3 >> 19)) & mask
        self.state = [s0, s1, s2, s3]
        return out

    def normals(self, n):
        """n normais; idêntico a n chamadas de normal()"""
        raw = self.raw_u64(2 * n)
        out = np.empty(n, dtype=np.float64)
        two_pi = 2.0 * math.pi
        for i in range(n):
            u1 = 1.0 - (raw[2 * i] >> 11) / _TWO_POW_53
            u2 = (raw[2 * i + 1] >> 11) / _TWO_POW_53
            out[i] = math.sqrt(-2.0 * math.log(u1)) * math.cos(two_pi * u2)
        return out

    def uniforms(self, n, lo=0.0, hi=1.0):
        """n uniformes em [lo, hi); idêntico a n chamadas de uniform()"""
        if not lo < hi:
            raise ValueError(f"uniform exige lo < hi (recebido lo={lo}, hi={hi})")
        raw = self.raw_u64(n)
        width = hi - lo
        return np.array([lo + width * ((x >> 11) / _TWO_POW_53) for x in raw], dtype=np.float64)

    def permutation(self, n):
        """Fisher-Yates"""
        perm = list(range(n))
        for i in range(n - 1, 0, -1):
            j = self.uniform_int(i + 1)
            perm[i], perm[j] = perm[j], perm[i]
        return perm


def rng_uniform(rng, lo, hi):
    return rng.uniform(lo, hi)


def rng_uniform_int(rng, n):
    return rng.uniform_int(n)


def rng_normal(rng):
    return rng.normal()
