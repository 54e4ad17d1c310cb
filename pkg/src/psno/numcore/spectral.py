"""Truncated Fourier-mode mixing with an analytic adjoint."""
from __future__ import annotations

import functools

import numpy as np

from .fft import irfft, rfft
from .tensor import Tensor, custom


def use_direct(n: int, modes: int) -> bool:
    """Pick a dense partial DFT (n x modes) over a full FFT when it is cheaper.

    With few retained modes the partial DFT wins on short grids and avoids the
    2n-point padded Bluestein buffers on long ones.
    """
    m = 1
    while m < n:
        m *= 2
    fft_cost = m * max(1, m.bit_length() - 1)
    if m != n:
        m = 1
        while m < 2 * n - 1:
            m *= 2
        fft_cost = 3 * m * (m.bit_length() - 1)
    return n * modes < 4 * fft_cost


def _weights(n: int, modes: int) -> np.ndarray:
    c = np.full(modes, 2.0)
    c[0] = 1.0
    if n % 2 == 0 and modes == n // 2 + 1:
        c[-1] = 1.0
    return c


@functools.lru_cache(maxsize=8)
def _dft_matrices(n: int, modes: int):
    k = np.arange(modes)
    j = np.arange(n)
    phase = 2j * np.pi * ((np.outer(j, k)) % n) / n
    forward = np.exp(-phase)                                  # (n, modes)
    inverse = (_weights(n, modes)[:, None] / n) * np.exp(phase).T   # (modes, n)
    return forward, inverse


def forward_modes(x: np.ndarray, modes: int) -> np.ndarray:
    """First ``modes`` rfft coefficients along axis -2 of (..., n, C)."""
    n = x.shape[-2]
    if use_direct(n, modes):
        forward, _ = _dft_matrices(n, modes)
        return forward.T @ x
    return np.swapaxes(rfft(np.swapaxes(x, -1, -2))[..., :modes], -1, -2)


def inverse_modes(Y: np.ndarray, n: int) -> np.ndarray:
    """Real length-n signal (axis -2) whose rfft is Y zero-padded beyond its modes."""
    modes = Y.shape[-2]
    if use_direct(n, modes):
        _, inverse = _dft_matrices(n, modes)
        return (inverse.T @ Y).real
    half = n // 2 + 1
    padded = np.zeros(Y.shape[:-2] + (half, Y.shape[-1]), dtype=np.complex128)
    padded[..., :modes, :] = Y
    return np.swapaxes(irfft(np.swapaxes(padded, -1, -2), n), -1, -2)


def spectral_conv(x: Tensor, w_re: Tensor, w_im: Tensor) -> Tensor:
    """rfft along the grid axis, keep the lowest modes, mix channels per mode, irfft.

    x is (B, n, Cin); weights are (m, Cin, Cout). Only min(m, n//2 + 1)
    modes are retained, so the layer accepts any grid length n >= 2.
    """
    n = x.shape[-2]
    if n < 2:
        raise ValueError("spectral_conv needs at least 2 grid points")
    m_param = w_re.shape[0]
    modes = min(m_param, n // 2 + 1)
    W = w_re.value[:modes] + 1j * w_im.value[:modes]
    X = forward_modes(x.value, modes)                 # (B, modes, Cin)
    Xk = np.swapaxes(X, 0, 1)                          # (modes, B, Cin)
    Y = np.swapaxes(Xk @ W, 0, 1)                      # (B, modes, Cout)
    out = inverse_modes(Y, n)
    c = _weights(n, modes)[:, None]

    def backward(g):
        gY = (c / n) * forward_modes(g, modes)         # (B, modes, Cout)
        gYk = np.swapaxes(gY, 0, 1)                    # (modes, B, Cout)
        gW = np.swapaxes(np.conj(Xk), 1, 2) @ gYk
        gX = np.swapaxes(gYk @ np.swapaxes(np.conj(W), 1, 2), 0, 1)
        gx = inverse_modes(gX * (n / c), n)
        g_re = np.zeros(w_re.shape)
        g_im = np.zeros(w_im.shape)
        g_re[:modes] = gW.real
        g_im[:modes] = gW.imag
        return gx, g_re, g_im

    return custom(out, (x, w_re, w_im), backward)
