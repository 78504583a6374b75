"""Discrete wavelet transform (Mallat filter-bank algorithm) for Haar and db4.

Each analysis step computes

    approx[n] = sum_k x[2n + p - k] * g[k]
    detail[n] = sum_k x[2n + p - k] * h[k]

with ``p = 1`` in symmetric mode (odd samples of the full convolution) and
``p = K/2`` in periodic mode (filter centred on the output sample). Both
conventions reproduce PyWavelets' ``symmetric`` and ``periodization`` modes
coefficient for coefficient. Synthesis is the exact transpose of analysis,
which for orthogonal filters gives perfect reconstruction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DiscreteWavelet",
    "WaveletDecomposition",
    "wavelet_filters",
    "max_level",
    "dwt_decompose",
    "dwt_reconstruct",
    "BOUNDARY_MODES",
]

BOUNDARY_MODES = ("symmetric", "periodic")

# Daubechies order-4 scaling filter (8 taps, 4 vanishing moments), obtained by
# minimum-phase spectral factorisation of the Daubechies polynomial
# P(y) = sum_{k<4} C(3+k, k) y^k and normalised to sum(g) = sqrt(2).
_DB4_LOWPASS = (
    -0.010597401785069032105,
    0.032883011666885199735,
    0.030841381835560763627,
    -0.18703481171909308408,
    -0.027983769416859854211,
    0.63088076792985890788,
    0.71484657055291564709,
    0.23037781330889650086,
)

_HAAR_LOWPASS = (1.0 / math.sqrt(2.0), 1.0 / math.sqrt(2.0))


@dataclass(frozen=True)
class DiscreteWavelet:
    """Orthogonal two-channel filter bank.

    ``highpass`` is the quadrature mirror of ``lowpass``:
    ``h[k] = (-1)**(k + 1) * g[K - 1 - k]``.
    """

    name: str
    lowpass: np.ndarray = field(repr=False)
    highpass: np.ndarray = field(repr=False)

    @property
    def support(self) -> int:
        return len(self.lowpass)


@dataclass
class WaveletDecomposition:
    wavelet: DiscreteWavelet
    levels: int
    approx: np.ndarray
    details: list  # details[0] is level 1 (finest), details[-1] is level N
    boundary_mode: str
    original_length: int
    # approximation length entering each level; lengths[0] == original_length
    lengths: list = field(default_factory=list)

    def copy(self) -> "WaveletDecomposition":
        return WaveletDecomposition(
            wavelet=self.wavelet,
            levels=self.levels,
            approx=self.approx.copy(),
            details=[d.copy() for d in self.details],
            boundary_mode=self.boundary_mode,
            original_length=self.original_length,
            lengths=list(self.lengths),
        )

    def coefficients(self) -> list:
        """Coefficient arrays ordered ``[approx_N, detail_N, ..., detail_1]``."""
        return [self.approx] + self.details[::-1]


def wavelet_filters(name: str) -> DiscreteWavelet:
    """Return the analysis filter bank for ``'haar'`` or ``'db4'``."""
    key = str(name).lower()
    if key == "haar":
        g = np.array(_HAAR_LOWPASS)
    elif key == "db4":
        g = np.array(_DB4_LOWPASS)
    else:
        raise ValueError(f"unknown wavelet {name!r}; expected 'haar' or 'db4'")
    K = len(g)
    signs = np.array([(-1.0) ** (k + 1) for k in range(K)])
    h = signs * g[::-1]
    g.setflags(write=False)
    h.setflags(write=False)
    return DiscreteWavelet(key, g, h)


def max_level(n: int) -> int:
    """Theoretical maximum decomposition depth ``floor(log2 n)``."""
    n = int(n)
    if n < 2:
        raise ValueError(f"signal length must be >= 2, got {n}")
    return n.bit_length() - 1


def _phase(K: int, mode: str) -> int:
    return 1 if mode == "symmetric" else K // 2


def _n_coeffs(length: int, K: int, mode: str) -> int:
    if mode == "symmetric":
        return (length + K - 1) // 2
    return (length + 1) // 2


def _analysis_indices(length: int, K: int, mode: str) -> np.ndarray:
    """Source sample index for every (output n, tap k) pair, boundary resolved."""
    n_out = _n_coeffs(length, K, mode)
    p = _phase(K, mode)
    raw = 2 * np.arange(n_out)[:, None] + p - np.arange(K)[None, :]
    if mode == "periodic":
        even = length + (length % 2)
        idx = raw % even
        # odd lengths are padded by repeating the last sample
        return np.minimum(idx, length - 1)
    return _symmetric_index(raw, length)


def _symmetric_index(idx: np.ndarray, length: int) -> np.ndarray:
    # half-sample symmetric extension: ... x1 x0 | x0 x1 ... x_{L-1} | x_{L-1} ...
    period = 2 * length
    m = np.mod(idx, period)
    return np.where(m < length, m, period - 1 - m)


def _analysis_step(x: np.ndarray, w: DiscreteWavelet, mode: str):
    idx = _analysis_indices(len(x), w.support, mode)
    segments = x[idx]
    return segments @ w.lowpass, segments @ w.highpass


def _synthesis_step(a: np.ndarray, d: np.ndarray, w: DiscreteWavelet, mode: str, length: int) -> np.ndarray:
    # transpose of _analysis_step: scatter-add each coefficient back along its taps
    idx = _analysis_indices(length, w.support, mode)
    if idx.shape[0] != len(a) or len(a) != len(d):
        raise ValueError(
            f"coefficient length mismatch: expected {idx.shape[0]}, got approx {len(a)} / detail {len(d)}"
        )
    contrib = a[:, None] * w.lowpass[None, :] + d[:, None] * w.highpass[None, :]
    if mode == "periodic" and length % 2:
        # the padded sample is a copy of x[L-1]; its adjoint folds back onto it,
        # but orthogonality holds on the padded signal, so rebuild that instead
        even = length + 1
        raw = (2 * np.arange(len(a))[:, None] + _phase(w.support, mode) - np.arange(w.support)[None, :]) % even
        out = np.zeros(even)
        np.add.at(out, raw.ravel(), contrib.ravel())
        return out[:length]
    out = np.zeros(length)
    if mode == "symmetric":
        # Only taps landing inside [0, L) are needed: interior samples are
        # covered by every polyphase term, so reflected taps can be dropped.
        raw = 2 * np.arange(len(a))[:, None] + _phase(w.support, mode) - np.arange(w.support)[None, :]
        inside = (raw >= 0) & (raw < length)
        np.add.at(out, raw[inside], contrib[inside])
        return out
    np.add.at(out, idx.ravel(), contrib.ravel())
    return out


def dwt_decompose(signal, wavelet="db4", levels: int = 5, boundary_mode: str = "symmetric") -> WaveletDecomposition:
    """Multi-level decomposition of a 1-D signal."""
    w = wavelet if isinstance(wavelet, DiscreteWavelet) else wavelet_filters(wavelet)
    if boundary_mode not in BOUNDARY_MODES:
        raise ValueError(f"boundary_mode must be one of {BOUNDARY_MODES}, got {boundary_mode!r}")
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("signal must be one-dimensional")
    n = len(x)
    if n < w.support:
        raise ValueError(f"signal of length {n} is shorter than the {w.name} filter ({w.support} taps)")
    levels = int(levels)
    if levels < 1 or levels > max_level(n):
        raise ValueError(f"levels must be in [1, {max_level(n)}] for length {n}, got {levels}")

    approx = x
    details = []
    lengths = []
    for _ in range(levels):
        lengths.append(len(approx))
        approx, detail = _analysis_step(approx, w, boundary_mode)
        details.append(detail)
    return WaveletDecomposition(w, levels, approx, details, boundary_mode, n, lengths)


def dwt_reconstruct(decomp: WaveletDecomposition) -> np.ndarray:
    """Invert :func:`dwt_decompose`; output has ``original_length`` samples."""
    w = decomp.wavelet
    if len(decomp.details) != decomp.levels or len(decomp.lengths) != decomp.levels:
        raise ValueError("decomposition has inconsistent level bookkeeping")
    if decomp.lengths and decomp.lengths[0] != decomp.original_length:
        raise ValueError("decomposition lengths do not start at original_length")
    approx = np.asarray(decomp.approx, dtype=np.float64)
    for level in range(decomp.levels - 1, -1, -1):
        detail = np.asarray(decomp.details[level], dtype=np.float64)
        approx = _synthesis_step(approx, detail, w, decomp.boundary_mode, decomp.lengths[level])
    return approx
