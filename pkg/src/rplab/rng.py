"""Counter-based random streams.

Every Brownian path owns an independent stream addressed by
``(key, path index)``.  The key is derived from a 64-bit master seed and an
environment index by splitmix64 mixing.  A Philox4x32-10 block evaluated at
counter ``(path_lo, path_hi, 0, word)`` seeds a xoshiro256** state, which then
produces the within-path draws sequentially.  Any single path can therefore be
regenerated in isolation, and results do not depend on how paths are
scheduled across threads.

Normals come from a 256-layer ziggurat on 64-bit outputs.

All numba functions here pass the generator state as a tuple of four
``uint64`` scalars so that the state never escapes into memory inside hot
loops.
"""

import math

import numba as nb
import numpy as np

U64 = np.uint64
MASK32 = U64(0xFFFFFFFF)
MASK64 = (1 << 64) - 1
_S32 = U64(32)

# Philox4x32 round constants
_PM0 = U64(0xD2511F53)
_PM1 = U64(0xCD9E8D57)
_PW0 = U64(0x9E3779B9)
_PW1 = U64(0xBB67AE85)

# stream words inside one path
WORD_MAIN = 0
WORD_AUX = 2


def splitmix64(x):
    """One splitmix64 output for the 64-bit integer ``x`` (pure Python)."""
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(master, *ids):
    """Mix a master seed with a sequence of non-negative indices.

    Parameters
    ----------
    master : int
        64-bit master seed.
    *ids : int
        Indices such as an environment number or a purpose tag.

    Returns
    -------
    int
        A 64-bit seed.  Distinct index tuples give unrelated seeds.
    """
    h = splitmix64(int(master) & MASK64)
    for i in ids:
        if int(i) < 0:
            raise ValueError("stream indices must be non-negative")
        h = splitmix64(h ^ splitmix64((int(i) + 0x632BE59BD9B4E019) & MASK64))
    return h


def philox_key(seed):
    """Split a 64-bit seed into the two 32-bit Philox key words."""
    seed = int(seed) & MASK64
    return U64(seed & 0xFFFFFFFF), U64(seed >> 32)


def numpy_generator(seed, *ids):
    """A numpy ``Generator`` on a Philox bit generator keyed by ``(seed, ids)``.

    Used for environment sampling, which is vectorized and not per-path.
    """
    return np.random.Generator(np.random.Philox(key=derive_seed(seed, *ids)))


@nb.njit(inline="always")
def philox4x32(c0, c1, c2, c3, k0, k1):
    """Philox4x32-10 block on 32-bit words stored in uint64 scalars."""
    for i in range(10):
        p0 = _PM0 * c0
        p1 = _PM1 * c2
        c0, c1, c2, c3 = (((p1 >> _S32) ^ c1 ^ k0) & MASK32, p1 & MASK32,
                          ((p0 >> _S32) ^ c3 ^ k1) & MASK32, p0 & MASK32)
        if i < 9:
            k0 = (k0 + _PW0) & MASK32
            k1 = (k1 + _PW1) & MASK32
    return c0, c1, c2, c3


@nb.njit(inline="always")
def _rotl(x, k):
    return (x << U64(k)) | (x >> U64(64 - k))


@nb.njit(inline="always")
def seed_stream(k0, k1, path, word):
    """xoshiro256** state for ``path`` from Philox blocks ``word`` and ``word + 1``."""
    p = U64(path)
    lo = p & MASK32
    hi = (p >> _S32) & MASK32
    a, b, c, d = philox4x32(lo, hi, U64(0), U64(word), k0, k1)
    s0 = (a << _S32) | b
    s1 = (c << _S32) | d
    a, b, c, d = philox4x32(lo, hi, U64(0), U64(word + 1), k0, k1)
    s2 = (a << _S32) | b
    s3 = (c << _S32) | d
    if s0 == 0 and s1 == 0 and s2 == 0 and s3 == 0:
        s0 = U64(1)
    return s0, s1, s2, s3


@nb.njit(inline="always")
def next_u64(s0, s1, s2, s3):
    res = _rotl(s1 * U64(5), 7) * U64(9)
    t = s1 << U64(17)
    s2 ^= s0
    s3 ^= s1
    s1 ^= s2
    s0 ^= s3
    s2 ^= t
    s3 = _rotl(s3, 45)
    return res, s0, s1, s2, s3


@nb.njit(inline="always")
def uniform(s0, s1, s2, s3):
    """Uniform double on [0, 1) with 53 random bits."""
    r, s0, s1, s2, s3 = next_u64(s0, s1, s2, s3)
    return (r >> U64(11)) * (1.0 / 9007199254740992.0), s0, s1, s2, s3


def _ziggurat_tables():
    r = 3.6541528853610088
    v = 0.00492867323399
    x = np.zeros(257)
    x[0] = v / math.exp(-0.5 * r * r)
    x[1] = r
    for i in range(1, 256):
        f = math.exp(-0.5 * x[i] * x[i]) + v / x[i]
        x[i + 1] = math.sqrt(-2.0 * math.log(f)) if f < 1.0 else 0.0
    x[256] = 0.0
    wi = x[:256] / 2.0 ** 52
    ki = np.floor(x[1:257] / x[:256] * 2.0 ** 52).astype(np.uint64)
    fi = np.exp(-0.5 * x * x)
    return r, wi, ki, fi


_ZR, _WI, _KI, _FI = _ziggurat_tables()


@nb.njit
def _normal_slow(s0, s1, s2, s3, idx, x):
    # tail layer or wedge rejection; NaN means "draw again"
    if idx == 0:
        while True:
            u1, s0, s1, s2, s3 = uniform(s0, s1, s2, s3)
            u2, s0, s1, s2, s3 = uniform(s0, s1, s2, s3)
            xx = -math.log1p(-u1) / _ZR
            yy = -math.log1p(-u2)
            if yy + yy > xx * xx:
                return (_ZR + xx if x > 0 else -(_ZR + xx)), s0, s1, s2, s3
    u, s0, s1, s2, s3 = uniform(s0, s1, s2, s3)
    if (_FI[idx + 1] - _FI[idx]) * u + _FI[idx] < math.exp(-0.5 * x * x):
        return x, s0, s1, s2, s3
    return np.nan, s0, s1, s2, s3


@nb.njit(inline="always")
def normal(s0, s1, s2, s3):
    """Standard normal by the ziggurat method."""
    while True:
        r, s0, s1, s2, s3 = next_u64(s0, s1, s2, s3)
        idx = np.int64(r & U64(0xFF))
        rabs = (r >> U64(9)) & U64(0x000FFFFFFFFFFFFF)
        x = np.float64(np.int64(rabs)) * _WI[idx]
        if (r >> U64(8)) & U64(1):
            x = -x
        if rabs < _KI[idx]:
            return x, s0, s1, s2, s3
        y, s0, s1, s2, s3 = _normal_slow(s0, s1, s2, s3, idx, x)
        if y == y:
            return y, s0, s1, s2, s3


@nb.njit(cache=True)
def _philox_blocks(counters, k0, k1):
    out = np.empty_like(counters)
    for i in range(counters.shape[0]):
        a, b, c, d = philox4x32(counters[i, 0], counters[i, 1], counters[i, 2],
                                counters[i, 3], k0, k1)
        out[i, 0] = a
        out[i, 1] = b
        out[i, 2] = c
        out[i, 3] = d
    return out


def philox_blocks(counters, key):
    """Evaluate Philox4x32-10 on rows of 32-bit counter words.

    Parameters
    ----------
    counters : array_like, shape (n, 4)
    key : tuple of two ints

    Returns
    -------
    ndarray of uint64, shape (n, 4)
    """
    c = np.ascontiguousarray(counters, dtype=np.uint64)
    return _philox_blocks(c, U64(key[0]), U64(key[1]))


@nb.njit(cache=True)
def _path_normals(k0, k1, path, word, n):
    s0, s1, s2, s3 = seed_stream(k0, k1, path, word)
    out = np.empty(n)
    for i in range(n):
        out[i], s0, s1, s2, s3 = normal(s0, s1, s2, s3)
    return out


@nb.njit(cache=True)
def _path_uniforms(k0, k1, path, word, n):
    s0, s1, s2, s3 = seed_stream(k0, k1, path, word)
    out = np.empty(n)
    for i in range(n):
        out[i], s0, s1, s2, s3 = uniform(s0, s1, s2, s3)
    return out


def path_normals(seed, path, n, word=WORD_MAIN):
    """First ``n`` normals of the stream of ``path`` under ``seed``."""
    k0, k1 = philox_key(seed)
    return _path_normals(k0, k1, np.int64(path), word, int(n))


def path_uniforms(seed, path, n, word=WORD_MAIN):
    """First ``n`` uniforms of the stream of ``path`` under ``seed``."""
    k0, k1 = philox_key(seed)
    return _path_uniforms(k0, k1, np.int64(path), word, int(n))
