"""Continuous wavelet transform, power scalograms and grayscale rendering.

The transform of a sampled series ``x`` at scale ``s`` is

    W_n(s) = sqrt(dt / s) * sum_{n'} x[n'] * conj(psi((n' - n) * dt / s))

computed either by the direct double sum (reference) or by FFT convolution with
the same sampled kernel zero-padded to a power of two (fast). Both paths use
identical kernel samples, so they agree to rounding error.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "MotherWavelet",
    "ScaleGrid",
    "Scalogram",
    "morlet",
    "gaussian1",
    "equivalent_frequency",
    "default_grid",
    "cwt",
    "power",
    "coi",
    "scalogram",
    "render_scalogram",
    "save_png",
]

_PI_QUARTER = math.pi ** -0.25
# kernel samples beyond this many e-folding widths are below 1e-20 of the peak
_ENVELOPE_CUTOFF = 10.0


def morlet(t, omega0: float = 6.0):
    """Morlet mother wavelet ``pi^(-1/4) exp(i omega0 t) exp(-t^2 / 2)``."""
    if omega0 < 5:
        raise ValueError(f"omega0 must be >= 5 for an admissible Morlet wavelet, got {omega0}")
    t = np.asarray(t, dtype=np.float64)
    return _PI_QUARTER * np.exp(1j * omega0 * t) * np.exp(-0.5 * t * t)


def gaussian1(t):
    """First derivative of a Gaussian, unit L2 norm; exactly zero-mean (odd)."""
    t = np.asarray(t, dtype=np.float64)
    return -t * np.exp(-0.5 * t * t) * math.sqrt(2.0) * _PI_QUARTER


@dataclass(frozen=True)
class MotherWavelet:
    kind: str = "morlet"
    omega0: float = 6.0

    def __post_init__(self):
        if self.kind not in ("morlet", "gaussian1"):
            raise ValueError(f"unknown mother wavelet {self.kind!r}")
        if self.kind == "morlet" and self.omega0 < 5:
            raise ValueError(f"omega0 must be >= 5, got {self.omega0}")

    def __call__(self, t):
        if self.kind == "morlet":
            return morlet(t, self.omega0)
        return gaussian1(t).astype(np.complex128)

    @property
    def center_frequency(self) -> float:
        """Peak of the wavelet's Fourier transform in cycles per unit time."""
        if self.kind == "morlet":
            return self.omega0 / (2.0 * math.pi)
        # |FT| of the DoG-1 wavelet ~ w exp(-w^2/2) peaks at w = 1
        return 1.0 / (2.0 * math.pi)

    @property
    def efold(self) -> float:
        """E-folding time of the wavelet power at scale 1."""
        return math.sqrt(2.0)


@dataclass(frozen=True)
class ScaleGrid:
    s0: float
    dj: float
    J: int

    def __post_init__(self):
        if not self.s0 > 0:
            raise ValueError(f"s0 must be positive, got {self.s0}")
        if not self.dj > 0:
            raise ValueError(f"dj must be positive, got {self.dj}")
        if int(self.J) < 1:
            raise ValueError(f"J must be >= 1, got {self.J}")

    @property
    def scales(self) -> np.ndarray:
        return self.s0 * 2.0 ** (np.arange(int(self.J)) * self.dj)


@dataclass
class Scalogram:
    power: np.ndarray
    grid: ScaleGrid
    dt: float
    coi: np.ndarray
    source_id: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def scales(self) -> np.ndarray:
        return self.grid.scales


def equivalent_frequency(s: float, dt: float, wavelet: MotherWavelet | None = None) -> float:
    """``C_f / (s * dt)``: the Fourier frequency a scale responds to."""
    if not (s > 0 and dt > 0):
        raise ValueError(f"scale and dt must be positive, got s={s}, dt={dt}")
    wavelet = wavelet or MotherWavelet()
    return wavelet.center_frequency / (s * dt)


def default_grid(n: int, dt: float = 1.0, s0: float | None = None, dj: float = 0.125) -> ScaleGrid:
    """``s0 = 2 dt`` and as many scales as fit under ``n * dt / 4``."""
    s0 = 2.0 * dt if s0 is None else s0
    top = n * dt / 4.0
    if top < s0:
        raise ValueError(f"series of length {n} too short for a grid starting at s0={s0}")
    J = int(math.floor(math.log2(top / s0) / dj + 1e-9)) + 1
    return ScaleGrid(s0, dj, J)


def _kernel(wavelet: MotherWavelet, offsets: np.ndarray, s: float, dt: float) -> np.ndarray:
    return np.sqrt(dt / s) * np.conj(wavelet(offsets * dt / s))


def _check(x, grid, dt):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("cwt input must be one-dimensional")
    if len(x) < 4:
        raise ValueError(f"cwt needs at least 4 samples, got {len(x)}")
    if not isinstance(grid, ScaleGrid):
        raise ValueError("grid must be a ScaleGrid")
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    return x


def cwt(x, wavelet: MotherWavelet | None = None, grid: ScaleGrid | None = None, dt: float = 1.0,
        method: str = "fft", padding: str = "zero") -> np.ndarray:
    """Complex coefficient matrix of shape ``(J, N)``.

    ``method`` is ``"fft"`` or ``"direct"``; ``padding`` is ``"zero"`` (the
    series is zero outside its support) or ``"periodic"`` (circular).
    """
    wavelet = wavelet or MotherWavelet()
    x0 = np.asarray(x, dtype=np.float64)
    grid = grid or default_grid(len(x0), dt)
    x = _check(x0, grid, dt)
    n = len(x)
    if padding == "periodic":
        return _cwt_periodic(x, wavelet, grid, dt, method)
    if padding != "zero":
        raise ValueError(f"padding must be 'zero' or 'periodic', got {padding!r}")
    offsets = np.arange(-(n - 1), n)
    out = np.empty((grid.J, n), dtype=np.complex128)
    if method == "direct":
        lag = np.arange(n)[:, None] - np.arange(n)[None, :]  # lag[n', n] = n' - n
        for j, s in enumerate(grid.scales):
            ker = _kernel(wavelet, offsets, s, dt)
            out[j] = x @ ker[lag + (n - 1)]
        return out
    if method != "fft":
        raise ValueError(f"method must be 'fft' or 'direct', got {method!r}")
    m = 1 << int(math.ceil(math.log2(2 * n - 1)))
    fx = np.fft.fft(x, m)
    for j, s in enumerate(grid.scales):
        ker = _kernel(wavelet, offsets, s, dt)
        # W[n] = sum x[n'] ker[n' - n] = (x conv r)[n] with r[m] = ker[-m]
        r = np.zeros(m, dtype=np.complex128)
        r[np.mod(-offsets, m)] = ker
        out[j] = np.fft.ifft(fx * np.fft.fft(r))[:n]
    return out


def _cwt_periodic(x, wavelet, grid, dt, method):
    n = len(x)
    out = np.empty((grid.J, n), dtype=np.complex128)
    base = np.arange(n)
    for j, s in enumerate(grid.scales):
        reach = int(math.ceil(_ENVELOPE_CUTOFF * s / dt / n)) + 1
        ker = np.zeros(n, dtype=np.complex128)
        for wrap in range(-reach, reach + 1):
            ker += _kernel(wavelet, base + wrap * n, s, dt)
        # ker[m] is the circular kernel at lag m (mod n)
        if method == "direct":
            lag = np.mod(base[:, None] - base[None, :], n)
            out[j] = x @ ker[lag]
        elif method == "fft":
            out[j] = np.fft.ifft(np.fft.fft(x) * np.fft.fft(ker[np.mod(-base, n)]))
        else:
            raise ValueError(f"method must be 'fft' or 'direct', got {method!r}")
    return out


def power(coefficients) -> np.ndarray:
    """Elementwise squared modulus."""
    c = np.asarray(coefficients)
    return (c.real ** 2 + c.imag ** 2) if np.iscomplexobj(c) else c.astype(np.float64) ** 2


def coi(n: int, dt: float = 1.0, wavelet: MotherWavelet | None = None) -> np.ndarray:
    """Largest trusted scale at each time index (zero at both edges)."""
    if n < 2:
        raise ValueError(f"cone of influence needs n >= 2, got {n}")
    wavelet = wavelet or MotherWavelet()
    idx = np.arange(n)
    return np.minimum(idx, n - 1 - idx) * dt / wavelet.efold


def scalogram(x, wavelet: MotherWavelet | None = None, grid: ScaleGrid | None = None, dt: float = 1.0,
              source_id: str = "", method: str = "fft") -> Scalogram:
    wavelet = wavelet or MotherWavelet()
    x = np.asarray(x, dtype=np.float64)
    grid = grid or default_grid(len(x), dt)
    p = power(cwt(x, wavelet, grid, dt, method=method))
    return Scalogram(p, grid, dt, coi(len(x), dt, wavelet), source_id,
                     {"wavelet": wavelet.kind, "omega0": wavelet.omega0})


def _bilinear(img: np.ndarray, height: int, width: int) -> np.ndarray:
    """Resample with corner alignment; separable linear interpolation."""
    rows, cols = img.shape
    ry = np.linspace(0.0, rows - 1, height)
    rx = np.linspace(0.0, cols - 1, width)
    y0 = np.clip(np.floor(ry).astype(int), 0, max(rows - 2, 0))
    x0 = np.clip(np.floor(rx).astype(int), 0, max(cols - 2, 0))
    y1 = np.minimum(y0 + 1, rows - 1)
    x1 = np.minimum(x0 + 1, cols - 1)
    wy = (ry - y0)[:, None]
    wx = (rx - x0)[None, :]
    # a + w * (b - a) is exact when a == b, so flat regions stay flat
    top = img[y0][:, x0] + wx * (img[y0][:, x1] - img[y0][:, x0])
    bottom = img[y1][:, x0] + wx * (img[y1][:, x1] - img[y1][:, x0])
    return top + wy * (bottom - top)


def render_scalogram(sg: Scalogram, height: int = 64, width: int = 64, coi_mode: str = "none",
                     eps: float = 1e-12, vmin: float | None = None, vmax: float | None = None) -> np.ndarray:
    """8-bit grayscale image of ``log10(power + eps)``.

    Row 0 is the smallest scale; rows are uniform in log2(scale) because the
    grid is. Intensities are mapped affinely onto [0, 255] using the image's
    own min/max after resampling unless ``vmin``/``vmax`` pin them. A constant
    image renders as mid-gray 128. ``coi_mode`` is ``"none"``, ``"zero"``
    (untrusted pixels set to 0) or ``"dim"`` (halved).
    """
    if height < 8 or width < 8:
        raise ValueError(f"image must be at least 8x8, got {height}x{width}")
    p = np.asarray(sg.power, dtype=np.float64)
    if not np.all(np.isfinite(p)):
        raise ValueError("scalogram power contains non-finite values")
    logp = np.log10(p + eps)
    img = _bilinear(logp, height, width)
    lo = img.min() if vmin is None else vmin
    hi = img.max() if vmax is None else vmax
    if hi - lo <= 0:
        out = np.full((height, width), 128, dtype=np.uint8)
    else:
        scaled = np.clip((img - lo) / (hi - lo), 0.0, 1.0) * 255.0
        out = np.rint(scaled).astype(np.uint8)
    if coi_mode == "none":
        return out
    if coi_mode not in ("zero", "dim"):
        raise ValueError(f"coi_mode must be 'none', 'zero' or 'dim', got {coi_mode!r}")
    log_scales = np.log2(sg.scales)
    row_scale = 2.0 ** np.interp(np.linspace(0, len(log_scales) - 1, height),
                                 np.arange(len(log_scales)), log_scales)
    t = np.linspace(0, len(sg.coi) - 1, width)
    col_coi = np.interp(t, np.arange(len(sg.coi)), sg.coi)
    untrusted = row_scale[:, None] > col_coi[None, :]
    if coi_mode == "zero":
        out[untrusted] = 0
    else:
        out[untrusted] //= 2
    return out


def save_png(path, image: np.ndarray) -> None:
    from PIL import Image

    Image.fromarray(np.asarray(image, dtype=np.uint8), mode="L").save(path, format="PNG")
