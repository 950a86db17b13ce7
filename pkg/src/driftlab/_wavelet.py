"""Minimal orthogonal wavelet transform with universal soft thresholding.

Only what the denoising pipeline needs: a periodized multi-level DWT on a
compactly supported orthogonal (Daubechies) wavelet, its exact inverse, and
soft thresholding at sigma * sqrt(2 ln n) with the noise scale estimated
from the finest detail band's median absolute value.

Filter taps are computed at import time by the classic spectral
factorization of the Daubechies binomial polynomial; the default order of 8
vanishing moments keeps subband leakage of narrowband signals far below any
realistic noise floor, so the threshold estimate reads noise rather than
signal.
"""

from __future__ import annotations

import math
from math import comb

import numpy as np


def daubechies_lowpass(order: int) -> np.ndarray:
    """Analysis low-pass taps of the Daubechies wavelet with ``order``
    vanishing moments (2 * order taps), normalised to sum sqrt(2)."""
    if order < 1:
        raise ValueError("order must be >= 1")
    if order == 1:
        return np.array([1.0, 1.0]) / math.sqrt(2.0)
    # P(y) = sum_k C(order-1+k, k) y^k with y = (2 - z - 1/z)/4; multiplying
    # by z^(order-1) gives a polynomial in z whose inside-unit-circle roots
    # form the minimum-phase factor Q(z).
    y_poly = np.array([-0.25, 0.5, -0.25])  # ascending coeffs of y * z
    total = np.zeros(2 * order - 1)
    for k in range(order):
        term = np.array([1.0])
        for _ in range(k):
            term = np.convolve(term, y_poly)
        shifted = np.zeros_like(total)
        shifted[order - 1 - k : order - 1 - k + len(term)] = (
            comb(order - 1 + k, k) * term
        )
        total += shifted
    roots = np.roots(total[::-1])
    q = np.array([1.0 + 0j])
    for r in roots:
        if abs(r) < 1.0:
            q = np.convolve(q, [1.0, -r])
    h = np.real(q)
    for _ in range(order):
        h = np.convolve(h, [0.5, 0.5])
    return h * (math.sqrt(2.0) / h.sum())


DEFAULT_LO = daubechies_lowpass(8)


def _filters(lo: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    hi = lo[::-1].copy()
    hi[1::2] *= -1.0
    return lo, hi


def _wrapped_kernel(taps: np.ndarray, n: int) -> np.ndarray:
    kernel = np.zeros(n)
    for m, tap in enumerate(taps):
        kernel[m % n] += tap
    return kernel


def _analysis_step(x: np.ndarray, lo: np.ndarray, hi: np.ndarray):
    # Periodized filter bank: y[k] = sum_m f[m] x[(2k + 1 - m) mod n],
    # i.e. circular convolution downsampled at odd indices.
    n = len(x)
    fx = np.fft.rfft(x)
    conv_lo = np.fft.irfft(fx * np.fft.rfft(_wrapped_kernel(lo, n)), n)
    conv_hi = np.fft.irfft(fx * np.fft.rfft(_wrapped_kernel(hi, n)), n)
    return conv_lo[1::2], conv_hi[1::2]


def _synthesis_step(a: np.ndarray, d: np.ndarray, lo: np.ndarray, hi: np.ndarray):
    # Adjoint of the analysis step: circular correlation of the upsampled
    # subbands with the same filters.
    n = 2 * len(a)
    up = np.zeros(n)
    up[1::2] = a
    dup = np.zeros(n)
    dup[1::2] = d
    out = np.fft.irfft(
        np.fft.rfft(up) * np.conj(np.fft.rfft(_wrapped_kernel(lo, n)))
        + np.fft.rfft(dup) * np.conj(np.fft.rfft(_wrapped_kernel(hi, n))),
        n,
    )
    return out


def dwt(x: np.ndarray, levels: int, lo: np.ndarray = DEFAULT_LO):
    """Multi-level periodized DWT; returns (approximation, [d_fine..d_coarse], n)."""
    lo, hi = _filters(np.asarray(lo, dtype=float))
    x = np.asarray(x, dtype=float)
    n_orig = len(x)
    block = 1 << levels
    if n_orig % block:
        pad = block - n_orig % block
        x = np.concatenate([x, x[-1] * np.ones(pad)])
    details = []
    a = x
    for _ in range(levels):
        a, d = _analysis_step(a, lo, hi)
        details.append(d)
    return a, details, n_orig


def idwt(a: np.ndarray, details, n_orig: int, lo: np.ndarray = DEFAULT_LO) -> np.ndarray:
    lo, hi = _filters(np.asarray(lo, dtype=float))
    for d in reversed(details):
        a = _synthesis_step(a, d, lo, hi)
    return a[:n_orig]


def universal_threshold(detail_fine: np.ndarray, n: int) -> float:
    """sigma * sqrt(2 ln n) with sigma from the finest detail band."""
    sigma = np.median(np.abs(detail_fine)) / 0.6745
    return sigma * math.sqrt(2.0 * math.log(max(n, 2)))


def soft_threshold(coeffs: np.ndarray, threshold: float) -> np.ndarray:
    return np.sign(coeffs) * np.maximum(np.abs(coeffs) - threshold, 0.0)


def denoise(x: np.ndarray, levels: int = 4, lo: np.ndarray = DEFAULT_LO) -> np.ndarray:
    """Soft universal-threshold denoising of a 1-D signal."""
    a, details, n = dwt(x, levels, lo)
    thr = universal_threshold(details[0], len(x))
    details = [soft_threshold(d, thr) for d in details]
    return idwt(a, details, n, lo)
