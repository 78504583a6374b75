"""Technical indicators, MIC feature ranking and per-day multi-channel images."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.stats import rankdata

from . import cwt as cwt_mod
from .denoise import DenoiseConfig, denoise
from .dwt import max_level
from .timeseries import INPUT_MINUTES, make_label

__all__ = [
    "INDICATORS",
    "PRICE_LIKE",
    "IndicatorSeries",
    "IndicatorParams",
    "CwtConfig",
    "ImageSpec",
    "FeatureTensor",
    "channel_scalogram",
    "MicScore",
    "ema",
    "rsi",
    "ma",
    "correl",
    "mic",
    "select_top_k",
    "compute_indicator",
    "indicator_change_ratios",
    "channel_signal",
    "build_feature_tensor",
]

INDICATORS = ("close", "ema", "rsi", "ma60", "correl")
PRICE_LIKE = frozenset({"close", "ema", "ma60"})


@dataclass(frozen=True)
class IndicatorSeries:
    name: str
    values: np.ndarray  # NaN during warm-up
    warmup: int

    @property
    def defined(self) -> np.ndarray:
        return self.values[self.warmup:]


def _series(prices, minimum: int, what: str) -> np.ndarray:
    p = np.asarray(prices, dtype=np.float64)
    if p.ndim != 1 or len(p) < minimum:
        raise ValueError(f"{what} needs at least {minimum} values, got {len(p)}")
    return p


def ema(prices, period: int = 30) -> IndicatorSeries:
    """Exponential moving average seeded with the simple mean of the first window."""
    period = int(period)
    if period < 1:
        raise ValueError("EMA period must be >= 1")
    p = _series(prices, period, "EMA")
    alpha = 2.0 / (period + 1)
    out = np.full(len(p), np.nan)
    out[period - 1] = p[:period].mean()
    for i in range(period, len(p)):
        out[i] = alpha * p[i] + (1 - alpha) * out[i - 1]
    return IndicatorSeries("ema", out, period - 1)


def rsi(prices, period: int = 14) -> IndicatorSeries:
    """Wilder's relative strength index on [0, 100]."""
    period = int(period)
    if period < 1:
        raise ValueError("RSI period must be >= 1")
    p = _series(prices, period + 1, "RSI")
    change = np.diff(p)
    gain = np.maximum(change, 0.0)
    loss = np.maximum(-change, 0.0)
    out = np.full(len(p), np.nan)
    avg_gain = gain[:period].mean()
    avg_loss = loss[:period].mean()

    def value(g, l):
        return 100.0 if l == 0 else 100.0 - 100.0 / (1.0 + g / l)

    out[period] = value(avg_gain, avg_loss)
    for i in range(period, len(change)):
        avg_gain = (avg_gain * (period - 1) + gain[i]) / period
        avg_loss = (avg_loss * (period - 1) + loss[i]) / period
        out[i + 1] = value(avg_gain, avg_loss)
    return IndicatorSeries("rsi", out, period)


def ma(prices, window: int = 60) -> IndicatorSeries:
    """Trailing simple moving average."""
    window = int(window)
    if window < 1:
        raise ValueError("MA window must be >= 1")
    p = _series(prices, window, "MA")
    out = np.full(len(p), np.nan)
    out[window - 1:] = sliding_window_view(p, window).mean(axis=1)
    return IndicatorSeries(f"ma{window}" if window == 60 else "ma", out, window - 1)


def correl(x, y, window: int = 30) -> IndicatorSeries:
    """Trailing Pearson correlation; a window with zero variance gives 0."""
    window = int(window)
    if window < 2:
        raise ValueError("correlation window must be >= 2")
    a = _series(x, window, "CORREL")
    b = _series(y, window, "CORREL")
    if len(a) != len(b):
        raise ValueError("CORREL inputs must have equal length")
    wa = sliding_window_view(a, window)
    wb = sliding_window_view(b, window)
    da = wa - wa.mean(axis=1, keepdims=True)
    db = wb - wb.mean(axis=1, keepdims=True)
    num = (da * db).sum(axis=1)
    den = np.sqrt((da * da).sum(axis=1) * (db * db).sum(axis=1))
    r = np.zeros_like(num)
    ok = den > 0
    r[ok] = np.clip(num[ok] / den[ok], -1.0, 1.0)
    out = np.full(len(a), np.nan)
    out[window - 1:] = r
    return IndicatorSeries("correl", out, window - 1)


# ------------------------------------------------------------------------ MIC


@dataclass(frozen=True)
class MicScore:
    name: str
    score: float
    grid_bound: int


def _rank_bins(values: np.ndarray, k: int) -> np.ndarray:
    # equal-frequency bins from ranks; tied values always share a bin
    ranks = rankdata(values, method="min") - 1
    return (ranks * k) // len(values)


def _distinct_partitions(values: np.ndarray, max_bins: int) -> list:
    # (labels, non-empty bin count, smallest requested bin count) per distinct partition
    out, seen = [], {}
    for k in range(2, max_bins + 1):
        _, labels = np.unique(_rank_bins(values, k), return_inverse=True)
        key = labels.tobytes()
        if key in seen:
            continue
        seen[key] = k
        if labels.max() >= 1:
            out.append((labels, int(labels.max()) + 1, k))
    return out


def _mutual_information(ix: np.ndarray, iy: np.ndarray) -> float:
    """Plug-in mutual information in bits of two label arrays ``0..k-1``."""
    table = np.zeros((ix.max() + 1, iy.max() + 1))
    np.add.at(table, (ix, iy), 1.0)
    pxy = table / table.sum()
    px = pxy.sum(axis=1, keepdims=True)
    py = pxy.sum(axis=0, keepdims=True)
    nz = pxy > 0
    return float(np.sum(pxy[nz] * np.log2(pxy[nz] / (px @ py)[nz])))


def mic(x, y, b_exponent: float = 0.6, name: str = "") -> MicScore:
    """Maximal information coefficient over equal-frequency grids.

    Every grid with ``|X| * |Y| <= n ** b_exponent`` (both sides >= 2) is
    scored by ``I[X;Y] / log2(min(|X|, |Y|))`` where the bin counts are the
    numbers of non-empty bins actually produced (ties can merge bins).
    """
    a = np.asarray(x, dtype=np.float64).ravel()
    b = np.asarray(y, dtype=np.float64).ravel()
    if len(a) != len(b):
        raise ValueError(f"mic inputs differ in length: {len(a)} vs {len(b)}")
    n = len(a)
    if n < 10:
        raise ValueError(f"mic needs at least 10 samples, got {n}")
    bound = int(math.floor(n ** b_exponent + 1e-9))
    xs = _distinct_partitions(a, bound // 2)
    ys = _distinct_partitions(b, bound // 2)
    best = 0.0
    for bx, ex, kx in xs:
        for by, ey, ky in ys:
            if kx * ky > bound:
                continue
            best = max(best, _mutual_information(bx, by) / math.log2(min(ex, ey)))
    return MicScore(name, float(min(max(best, 0.0), 1.0)), bound)


def select_top_k(candidates, target, k: int, b_exponent: float = 0.6) -> list:
    """Rank ``(name, series)`` candidates by MIC against ``target``; return the top ``k``."""
    target = np.asarray(target, dtype=np.float64)
    candidates = list(candidates)
    if not 1 <= int(k) <= len(candidates):
        raise ValueError(f"k must be between 1 and {len(candidates)}, got {k}")
    scores = []
    for cname, series in candidates:
        series = np.asarray(series, dtype=np.float64)
        if len(series) != len(target):
            raise ValueError(f"candidate {cname!r} has {len(series)} values, target has {len(target)}")
        scores.append(mic(series, target, b_exponent, name=cname))
    scores.sort(key=lambda m: (-m.score, m.name))
    return scores[: int(k)]


# ---------------------------------------------------------- feature tensors


@dataclass(frozen=True)
class IndicatorParams:
    ema_period: int = 30
    rsi_period: int = 14
    ma_window: int = 60
    correl_window: int = 30


@dataclass(frozen=True)
class CwtConfig:
    omega0: float = 6.0
    s0: float | None = None  # default 2 * dt
    dj: float = 0.125
    J: int | None = None  # default: largest scale <= n * dt / 4
    dt: float = 1.0
    coi_mode: str = "none"

    def grid(self, n: int) -> cwt_mod.ScaleGrid:
        if self.J is None:
            return cwt_mod.default_grid(n, self.dt, self.s0, self.dj)
        s0 = 2.0 * self.dt if self.s0 is None else self.s0
        return cwt_mod.ScaleGrid(s0, self.dj, self.J)


@dataclass(frozen=True)
class ImageSpec:
    height: int = 64
    width: int = 64


@dataclass
class FeatureTensor:
    date: object
    channels: np.ndarray  # (C, H, W), pixel / 255
    label: int
    channel_names: tuple = field(default_factory=tuple)
    raw_return: float = float("nan")


def compute_indicator(session, name: str, params: IndicatorParams = IndicatorParams()) -> IndicatorSeries:
    """Indicator over the first 360 minutes of ``session``."""
    close = np.asarray(session.close[:INPUT_MINUTES], dtype=np.float64)
    if name == "close":
        return IndicatorSeries("close", close.copy(), 0)
    if name == "ema":
        return ema(close, params.ema_period)
    if name == "rsi":
        return rsi(close, params.rsi_period)
    if name == "ma60":
        s = ma(close, params.ma_window)
        return IndicatorSeries("ma60", s.values, s.warmup)
    if name == "correl":
        return correl(session.high[:INPUT_MINUTES], session.low[:INPUT_MINUTES], params.correl_window)
    raise ValueError(f"unknown indicator {name!r}; expected one of {INDICATORS}")


def channel_signal(series: IndicatorSeries) -> np.ndarray:
    """Log-returns for price-like indicators, per-day z-scores for oscillators."""
    v = series.defined
    if series.name in PRICE_LIKE:
        return np.diff(np.log(v))
    sd = v.std()
    return (v - v.mean()) / sd if sd > 0 else np.zeros_like(v)


def indicator_change_ratios(session, names=INDICATORS, params: IndicatorParams = IndicatorParams()) -> dict:
    """One scalar per indicator: its change across the input window."""
    out = {}
    for name in names:
        v = compute_indicator(session, name, params).defined
        out[name] = float(np.log(v[-1] / v[0])) if name in PRICE_LIKE else float(v[-1] - v[0])
    return out


def channel_scalogram(session, name: str, denoise_config: DenoiseConfig | None = None,
                      cwt_config: CwtConfig | None = None, params: IndicatorParams = IndicatorParams(),
                      ) -> cwt_mod.Scalogram:
    """Indicator -> channel signal -> denoised -> Morlet power, for one session."""
    denoise_config = denoise_config or DenoiseConfig()
    cwt_config = cwt_config or CwtConfig()
    signal = channel_signal(compute_indicator(session, name, params))
    if not np.all(np.isfinite(signal)):
        raise ValueError(f"{session.date}: indicator {name!r} produced non-finite values")
    if denoise_config.levels > max_level(len(signal)):
        raise ValueError(f"{session.date}: {name!r} signal too short for {denoise_config.levels} levels")
    clean = denoise(signal, denoise_config)
    wavelet = cwt_mod.MotherWavelet("morlet", cwt_config.omega0)
    return cwt_mod.scalogram(clean, wavelet, cwt_config.grid(len(clean)), cwt_config.dt,
                             source_id=f"{session.date}_{name}")


def build_feature_tensor(session, indicators=INDICATORS, denoise_config: DenoiseConfig | None = None,
                         cwt_config: CwtConfig | None = None, image: ImageSpec | None = None,
                         label_scheme: str = "mean_390", params: IndicatorParams = IndicatorParams(),
                         ) -> FeatureTensor:
    """Stack one rendered scalogram per indicator; only minutes 1-360 are read."""
    indicators = tuple(indicators)
    if not indicators:
        raise ValueError("at least one indicator is required")
    denoise_config = denoise_config or DenoiseConfig()
    cwt_config = cwt_config or CwtConfig()
    image = image or ImageSpec()
    channels = np.empty((len(indicators), image.height, image.width))
    for c, name in enumerate(indicators):
        sg = channel_scalogram(session, name, denoise_config, cwt_config, params)
        img = cwt_mod.render_scalogram(sg, image.height, image.width, cwt_config.coi_mode)
        channels[c] = img / 255.0
        if not np.all(np.isfinite(channels[c])):
            raise ValueError(f"{session.date}: channel {name!r} contains NaN")
    lab = make_label(session, label_scheme)
    return FeatureTensor(session.date, channels, lab.label, indicators, lab.raw_return)
