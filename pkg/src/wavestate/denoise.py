"""Wavelet threshold denoising: hard/soft shrinkage and SURE threshold selection."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dwt import dwt_decompose, dwt_reconstruct

__all__ = [
    "ThresholdRule",
    "DenoiseConfig",
    "hard_threshold",
    "soft_threshold",
    "sure_risks",
    "rigrsure_threshold",
    "universal_threshold",
    "noise_scale",
    "level_thresholds",
    "denoise",
]

# median(|N(0, 1)|), converts a MAD to a Gaussian standard deviation
MAD_TO_SIGMA = 0.6745

SHRINK_KINDS = ("hard", "soft")
RULE_KINDS = ("rigrsure", "universal")
RISK_CONVENTIONS = ("sure", "printed")


@dataclass(frozen=True)
class ThresholdRule:
    kind: str = "rigrsure"
    per_level: bool = True
    # "sure": Risk(k) = [N - 2k + sum_{j<=k} f(j) + (N-k) f(k)] / N  (Stein's estimate)
    # "printed": same with (N-k) f(N-k), f(0) = 0
    convention: str = "sure"

    def __post_init__(self):
        if self.kind not in RULE_KINDS:
            raise ValueError(f"threshold rule must be one of {RULE_KINDS}, got {self.kind!r}")
        if self.convention not in RISK_CONVENTIONS:
            raise ValueError(f"risk convention must be one of {RISK_CONVENTIONS}, got {self.convention!r}")


@dataclass(frozen=True)
class DenoiseConfig:
    wavelet: str = "db4"
    levels: int = 5
    shrink: str = "soft"
    rule: ThresholdRule = field(default_factory=ThresholdRule)
    boundary_mode: str = "symmetric"

    def __post_init__(self):
        if int(self.levels) < 1:
            raise ValueError(f"levels must be >= 1, got {self.levels}")
        if self.shrink not in SHRINK_KINDS:
            raise ValueError(f"shrink must be one of {SHRINK_KINDS}, got {self.shrink!r}")


def _check_lambda(lam):
    if not lam >= 0:
        raise ValueError(f"threshold must be non-negative, got {lam}")


def hard_threshold(w, lam: float) -> np.ndarray:
    """Keep coefficients with ``|w| >= lam``, zero the rest."""
    _check_lambda(lam)
    w = np.asarray(w, dtype=np.float64)
    return np.where(np.abs(w) >= lam, w, 0.0)


def soft_threshold(w, lam: float) -> np.ndarray:
    """Shrink magnitudes by ``lam`` towards zero; ``|w| < lam`` maps to 0."""
    _check_lambda(lam)
    w = np.asarray(w, dtype=np.float64)
    mag = np.abs(w)
    return np.where(mag >= lam, np.sign(w) * (mag - lam), 0.0)


def sure_risks(w, convention: str = "sure") -> tuple:
    """Risk curve over candidate thresholds.

    Returns ``(f, risk)`` where ``f`` holds the ascending squared magnitudes
    and ``risk[k-1]`` is the estimated risk of threshold ``sqrt(f[k-1])``
    for ``k = 1..N``.
    """
    w = np.asarray(w, dtype=np.float64).ravel()
    n = w.size
    if n == 0:
        raise ValueError("cannot select a threshold for an empty coefficient array")
    f = np.sort(np.abs(w)) ** 2
    k = np.arange(1, n + 1)
    partial = np.cumsum(f)
    if convention == "sure":
        tail = f
    elif convention == "printed":
        # f(N-k) with 1-based f and f(0) = 0
        tail = np.concatenate([f[::-1][1:], [0.0]])
    else:
        raise ValueError(f"unknown risk convention {convention!r}")
    risk = (n - 2 * k + partial + (n - k) * tail) / n
    return f, risk


def rigrsure_threshold(w, convention: str = "sure") -> float:
    """Threshold minimising the SURE risk over the candidates ``|w_i|``.

    ``w`` is assumed to be on a unit noise scale; :func:`level_thresholds`
    handles normalisation. Ties in risk resolve to the smallest threshold.
    """
    f, risk = sure_risks(w, convention)
    k_min = int(np.argmin(risk))
    return float(np.sqrt(f[k_min]))


def universal_threshold(n: int) -> float:
    """``sqrt(2 ln n)`` on a unit noise scale."""
    if n < 1:
        raise ValueError("universal threshold needs at least one coefficient")
    return math.sqrt(2.0 * math.log(n)) if n > 1 else 0.0


def noise_scale(finest_detail) -> float:
    """Robust noise estimate ``median(|d1|) / 0.6745`` from the finest detail level."""
    d = np.asarray(finest_detail, dtype=np.float64)
    return float(np.median(np.abs(d)) / MAD_TO_SIGMA)


def _select(w, rule: ThresholdRule) -> float:
    if rule.kind == "rigrsure":
        return rigrsure_threshold(w, rule.convention)
    return universal_threshold(np.asarray(w).size)


def level_thresholds(details, rule: ThresholdRule, sigma: float) -> list:
    """One threshold per detail level, in the units of the coefficients."""
    if sigma <= 0:
        return [0.0] * len(details)
    if rule.per_level:
        return [sigma * _select(np.asarray(d) / sigma, rule) for d in details]
    pooled = np.concatenate([np.asarray(d).ravel() for d in details]) / sigma
    lam = sigma * _select(pooled, rule)
    return [lam] * len(details)


def denoise(signal, config: DenoiseConfig | None = None, *, return_info: bool = False):
    """Decompose, shrink every detail level, leave the approximation, reconstruct."""
    config = config or DenoiseConfig()
    decomp = dwt_decompose(signal, config.wavelet, config.levels, config.boundary_mode)
    sigma = noise_scale(decomp.details[0])
    lams = level_thresholds(decomp.details, config.rule, sigma)
    shrink = soft_threshold if config.shrink == "soft" else hard_threshold
    decomp.details = [shrink(d, lam) for d, lam in zip(decomp.details, lams)]
    out = dwt_reconstruct(decomp)
    if return_info:
        return out, {"sigma": sigma, "thresholds": lams, "decomposition": decomp}
    return out
