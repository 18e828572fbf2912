"""Range-FFT pre-processing of datacubes.

The forward transform is an unnormalized DFT,

    X[k] = sum_n x[n] * exp(-j 2 pi k n / N),

computed by a mixed-radix Cooley-Tukey decomposition with a Bluestein
(chirp-z) fallback for large prime lengths, so any N >= 1 is handled
exactly -- N = 100 factors as 2^2 * 5^2 and is never zero-padded.
``naive_dft`` evaluates the same sum directly in O(N^2) and exists solely
as an independent test oracle.
"""

from __future__ import annotations

from enum import Enum
from functools import lru_cache

import numpy as np

from .datacube import DataCube

# Largest prime factor handled by the direct mixed-radix combine; anything
# bigger goes through Bluestein's chirp-z algorithm.
_MAX_DIRECT_RADIX = 31


class PreprocMode(Enum):
    """Network input variants: untouched IQ samples or their range FFT."""

    RAW_IQ = "raw_iq"
    RANGE_FFT = "range_fft"

    @classmethod
    def from_name(cls, name: str) -> "PreprocMode":
        aliases = {"raw": cls.RAW_IQ, "raw_iq": cls.RAW_IQ, "fft": cls.RANGE_FFT, "range_fft": cls.RANGE_FFT}
        try:
            return aliases[name.lower()]
        except KeyError:
            raise ValueError(f"unknown preprocessing mode {name!r}") from None


def _smallest_prime_factor(n: int) -> int:
    if n % 2 == 0:
        return 2
    f = 3
    while f * f <= n:
        if n % f == 0:
            return f
        f += 2
    return n


@lru_cache(maxsize=64)
def _twiddle(n: int, r: int) -> np.ndarray:
    # exp(-2j pi k r / n) for k = 0..n-1
    k = np.arange(n)
    return np.exp(-2j * np.pi * ((k * r) % n) / n)


def _fft_rec(x: np.ndarray) -> np.ndarray:
    """DFT over the last axis; x must be complex128."""
    n = x.shape[-1]
    if n == 1:
        return x.copy()
    p = _smallest_prime_factor(n)
    if p > _MAX_DIRECT_RADIX:
        return _bluestein(x)
    m = n // p
    sub = [_fft_rec(x[..., r::p]) for r in range(p)]
    k = np.arange(n)
    k_mod = k % m
    out = sub[0][..., k_mod]
    for r in range(1, p):
        out += _twiddle(n, r) * sub[r][..., k_mod]
    return out


def _bluestein(x: np.ndarray) -> np.ndarray:
    """Chirp-z DFT of prime length via a power-of-two circular convolution."""
    n = x.shape[-1]
    m = 1 << int(np.ceil(np.log2(2 * n - 1)))
    idx = np.arange(n)
    # reduce n^2 mod 2n before the complex exponential to preserve accuracy
    chirp = np.exp(-1j * np.pi * ((idx * idx) % (2 * n)) / n)
    a = np.zeros(x.shape[:-1] + (m,), dtype=np.complex128)
    a[..., :n] = x * chirp
    b = np.zeros(m, dtype=np.complex128)
    b[:n] = np.conj(chirp)
    b[m - n + 1:] = np.conj(chirp[1:][::-1])
    fa = _fft_rec(a)
    fb = _fft_rec(b)
    conv = np.conj(_fft_rec(np.conj(fa * fb))) / m
    return conv[..., :n] * chirp


def fft_along_last_axis(x: np.ndarray) -> np.ndarray:
    """Unnormalized forward DFT over the last axis of a complex array."""
    x = np.asarray(x)
    if x.shape[-1] < 1:
        raise ValueError("FFT input must have length >= 1")
    return _fft_rec(x.astype(np.complex128, copy=False))


def range_fft_channel(x: np.ndarray) -> np.ndarray:
    """Range FFT of a single virtual channel (1-D complex vector, any N >= 1)."""
    x = np.asarray(x)
    if x.ndim != 1:
        raise ValueError(f"expected a 1-D channel vector, got shape {x.shape}")
    return fft_along_last_axis(x)


def naive_dft(x: np.ndarray) -> np.ndarray:
    """Direct O(N^2) evaluation of the DFT sum; test oracle only."""
    x = np.asarray(x, dtype=np.complex128)
    if x.ndim != 1:
        raise ValueError(f"expected a 1-D vector, got shape {x.shape}")
    n = x.shape[0]
    k = np.arange(n)
    w = np.exp(-2j * np.pi * np.outer(k, k) / n)
    return w @ x


def preprocess_cube(cube: DataCube, mode: PreprocMode) -> np.ndarray:
    """Produce the network input matrix for one cube.

    RAW_IQ passes the (channels, N) IQ matrix through untouched; RANGE_FFT
    applies the range FFT independently to every virtual channel.  The
    result stays complex either way -- amplitude/phase splitting happens
    inside the network's flatten layer, not here.
    """
    mode = PreprocMode(mode)
    if mode is PreprocMode.RAW_IQ:
        return cube.iq.astype(np.complex128)
    return fft_along_last_axis(cube.iq.astype(np.complex128))


def normalize_max_modulus(x: np.ndarray) -> np.ndarray:
    """Scale a sample matrix by its largest modulus (flat input stays zero)."""
    peak = np.abs(x).max()
    if peak == 0:
        return x.copy()
    return x / peak
