"""Complex and real discrete Fourier transforms along the last axis.

Power-of-two lengths use an iterative radix-2 decimation-in-time transform,
vectorized over all leading axes; every other length goes through
Bluestein's chirp-z reduction to a power-of-two circular convolution.
"""
from __future__ import annotations

import functools

import numpy as np

__all__ = ["fft", "ifft", "rfft", "irfft"]


def _is_pow2(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


@functools.lru_cache(maxsize=64)
def _twiddles(n: int) -> tuple:
    out = []
    half = 1
    while half < n:
        out.append(np.exp(-1j * np.pi * np.arange(half) / half)[:, None])
        half *= 2
    return tuple(out)


def _fft_pow2(x: np.ndarray) -> np.ndarray:
    n = x.shape[-1]
    lead = x.shape[:-1]
    # rows hold the transforms of interleaved subsequences; they double in
    # length and halve in count every stage
    y = x.reshape(lead + (1, n))
    for factor in _twiddles(n):
        cols = y.shape[-1] // 2
        even = y[..., :cols]
        odd = factor * y[..., cols:]
        y = np.concatenate([even + odd, even - odd], axis=-2)
    return y.reshape(lead + (n,))


@functools.lru_cache(maxsize=64)
def _chirp(n: int):
    k = np.arange(n)
    # k^2 mod 2n keeps the phase argument small for large n
    w = np.exp(-1j * np.pi * ((k * k) % (2 * n)) / n)
    m = 1
    while m < 2 * n - 1:
        m *= 2
    b = np.zeros(m, dtype=np.complex128)
    b[:n] = np.conj(w)
    b[m - n + 1:] = np.conj(w[1:])[::-1]
    return w, m, _fft_pow2(b)


def _fft_bluestein(x: np.ndarray) -> np.ndarray:
    n = x.shape[-1]
    w, m, fb = _chirp(n)
    a = np.zeros(x.shape[:-1] + (m,), dtype=np.complex128)
    a[..., :n] = x * w
    conv = np.conj(_fft_pow2(np.conj(_fft_pow2(a) * fb))) / m
    return conv[..., :n] * w


def fft(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[-1]
    if n < 1:
        raise ValueError("fft of an empty axis")
    if _is_pow2(n):
        return _fft_pow2(x)
    return _fft_bluestein(x)


def ifft(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.complex128)
    return np.conj(fft(np.conj(X))) / X.shape[-1]


def rfft(x) -> np.ndarray:
    """Non-negative frequency half X_0..X_{n//2} of a real signal."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[-1]
    if n < 2:
        raise ValueError("rfft needs at least 2 samples")
    return fft(x)[..., : n // 2 + 1]


def irfft(X, n: int) -> np.ndarray:
    """Inverse of ``rfft`` for a length-n real signal.

    Imaginary parts of the DC and (even n) Nyquist modes are ignored.
    """
    X = np.asarray(X, dtype=np.complex128)
    half = n // 2 + 1
    if X.shape[-1] != half:
        raise ValueError(f"expected {half} modes for n={n}, got {X.shape[-1]}")
    full = np.zeros(X.shape[:-1] + (n,), dtype=np.complex128)
    full[..., :half] = X
    full[..., 0] = X[..., 0].real
    if n % 2 == 0:
        full[..., n // 2] = X[..., n // 2].real
        full[..., half:] = np.conj(X[..., 1: n // 2][..., ::-1])
    else:
        full[..., half:] = np.conj(X[..., 1:][..., ::-1])
    return ifft(full).real
