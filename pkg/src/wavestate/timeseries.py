"""Intraday minute bars: ingest, cleaning, log-returns, day labels, splits, synthetic data."""
from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SESSION_MINUTES",
    "INPUT_MINUTES",
    "MAX_FILL",
    "LABEL_SCHEMES",
    "MinuteBar",
    "RawSession",
    "TradingSession",
    "ReturnSeries",
    "DayLabel",
    "CleaningReport",
    "SynthConfig",
    "SynthTruth",
    "load_intraday_csv",
    "write_sessions_csv",
    "clean_sessions",
    "log_returns",
    "make_label",
    "return_histogram",
    "split_by_date",
    "synth_generate",
]

SESSION_MINUTES = 390
INPUT_MINUTES = 360
MAX_FILL = 20
SESSION_OPEN = dt.time(9, 30)
LABEL_SCHEMES = ("mean_390", "y_360_361", "y_360_mean", "y_360_390", "y_mean_mean")

DEFAULT_SCHEMA = {
    "timestamp": "timestamp",
    "open": "open",
    "high": "high",
    "low": "low",
    "close": "close",
    "volume": "volume",
}


@dataclass(frozen=True)
class MinuteBar:
    date: dt.date
    minute: int
    open: float
    high: float
    low: float
    close: float
    volume: float | None = None

    def __post_init__(self):
        if min(self.open, self.high, self.low, self.close) <= 0:
            raise ValueError(f"non-positive price in bar {self.date} minute {self.minute}")
        if self.high < max(self.open, self.close) or self.low > min(self.open, self.close):
            raise ValueError(f"inconsistent high/low in bar {self.date} minute {self.minute}")


@dataclass
class RawSession:
    """Bars of one calendar date as read from disk, possibly with gaps."""

    date: dt.date
    minute: np.ndarray
    open: np.ndarray
    high: np.ndarray
    low: np.ndarray
    close: np.ndarray
    volume: np.ndarray

    def __len__(self):
        return len(self.minute)


@dataclass
class TradingSession:
    """A full 390-minute day after cleaning. Arrays are indexed by minute."""

    date: dt.date
    open: np.ndarray
    high: np.ndarray
    low: np.ndarray
    close: np.ndarray
    volume: np.ndarray
    fill_count: int = 0
    filled: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        for name in ("open", "high", "low", "close", "volume"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            setattr(self, name, arr)
            if len(arr) != SESSION_MINUTES:
                raise ValueError(f"{self.date}: session must have {SESSION_MINUTES} bars, got {len(arr)}")
        if self.filled is None:
            self.filled = np.zeros(SESSION_MINUTES, dtype=bool)
        if self.fill_count > MAX_FILL:
            raise ValueError(f"{self.date}: fill_count {self.fill_count} exceeds {MAX_FILL}")
        if np.any(self.close <= 0):
            raise ValueError(f"{self.date}: non-positive close price")

    def __len__(self):
        return SESSION_MINUTES

    @property
    def bars(self) -> list:
        return [
            MinuteBar(self.date, i, self.open[i], self.high[i], self.low[i], self.close[i], self.volume[i])
            for i in range(SESSION_MINUTES)
        ]

    def __eq__(self, other):
        if not isinstance(other, TradingSession):
            return NotImplemented
        return (
            self.date == other.date
            and self.fill_count == other.fill_count
            and all(
                np.array_equal(getattr(self, k), getattr(other, k))
                for k in ("open", "high", "low", "close", "volume", "filled")
            )
        )


@dataclass(frozen=True)
class ReturnSeries:
    values: np.ndarray
    base_date: dt.date | None = None

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class DayLabel:
    date: dt.date
    label: int
    scheme: str
    raw_return: float


@dataclass
class CleaningReport:
    dropped: list = field(default_factory=list)  # (date, reason)
    flagged: list = field(default_factory=list)  # (date, note)

    def lines(self) -> list:
        out = [f"DROPPED {d.isoformat()} {reason}" for d, reason in self.dropped]
        out += [f"FLAGGED {d.isoformat()} {note}" for d, note in self.flagged]
        return out

    def __str__(self):
        return "\n".join(self.lines())


# --------------------------------------------------------------------- ingest


def _parse_timestamp(text: str) -> dt.datetime:
    return dt.datetime.fromisoformat(text.strip().replace("Z", "+00:00"))


def load_intraday_csv(path, schema: dict | None = None, session_open: dt.time = SESSION_OPEN) -> list:
    """Read minute bars and group them by calendar date.

    Rows must carry ISO-8601 timestamps with minute resolution. Minutes before
    ``session_open`` or at/after the 390th minute are ignored. Raises
    ``ValueError`` naming the line for unparseable rows and naming the
    timestamp for duplicates.
    """
    schema = {**DEFAULT_SCHEMA, **(schema or {})}
    days: dict = {}
    open_minutes = session_open.hour * 60 + session_open.minute
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise ValueError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in ("timestamp", "close"):
            if schema[col] not in header:
                raise ValueError(f"{path}: missing required column {schema[col]!r}")
        has = {k: schema[k] in header for k in ("open", "high", "low", "volume")}
        seen: dict = {}
        for row in reader:
            line = reader.line_num
            try:
                ts = _parse_timestamp(row[schema["timestamp"]])
                close = float(row[schema["close"]])
                o = float(row[schema["open"]]) if has["open"] else close
                h = float(row[schema["high"]]) if has["high"] else max(o, close)
                lo = float(row[schema["low"]]) if has["low"] else min(o, close)
                vol_text = row[schema["volume"]] if has["volume"] else ""
                vol = float(vol_text) if vol_text not in ("", None) else math.nan
            except (TypeError, ValueError) as exc:
                raise ValueError(f"{path}: unparseable row at line {line}: {exc}") from exc
            if ts in seen:
                raise ValueError(f"{path}: duplicate timestamp {ts.isoformat()} (lines {seen[ts]} and {line})")
            seen[ts] = line
            minute = ts.hour * 60 + ts.minute - open_minutes
            if not 0 <= minute < SESSION_MINUTES:
                continue
            days.setdefault(ts.date(), []).append((minute, o, h, lo, close, vol))
    sessions = []
    for day in sorted(days):
        rows = sorted(days[day])
        arr = np.array(rows, dtype=np.float64)
        sessions.append(
            RawSession(day, arr[:, 0].astype(int), arr[:, 1], arr[:, 2], arr[:, 3], arr[:, 4], arr[:, 5])
        )
    return sessions


def write_sessions_csv(path, sessions, session_open: dt.time = SESSION_OPEN) -> None:
    """Write sessions (raw or clean) in the input CSV layout."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp", "open", "high", "low", "close", "volume"])
        base = dt.datetime.combine(dt.date(2000, 1, 1), session_open)
        for s in sessions:
            minutes = s.minute if isinstance(s, RawSession) else np.arange(SESSION_MINUTES)
            for i, m in enumerate(minutes):
                t = (base + dt.timedelta(minutes=int(m))).time()
                stamp = dt.datetime.combine(s.date, t).isoformat(timespec="minutes")
                vol = s.volume[i]
                w.writerow([stamp, repr(float(s.open[i])), repr(float(s.high[i])), repr(float(s.low[i])),
                            repr(float(s.close[i])), "" if math.isnan(vol) else repr(float(vol))])


# ------------------------------------------------------------------- cleaning


def _clean_one(raw: RawSession, report: CleaningReport):
    if raw.date.weekday() >= 5:
        report.dropped.append((raw.date, "weekend"))
        return None
    n = len(raw)
    minutes = np.asarray(raw.minute)
    if n == 0:
        report.dropped.append((raw.date, "empty"))
        return None
    missing = SESSION_MINUTES - n
    if missing > MAX_FILL:
        contiguous = minutes[0] == 0 and np.all(np.diff(minutes) == 1)
        report.dropped.append((raw.date, "half-day" if contiguous else "missing > 20"))
        return None
    if minutes[0] != 0:
        report.dropped.append((raw.date, "leading gap"))
        return None
    cols = {}
    # position of the most recent observed minute at or before each minute
    pos = np.searchsorted(minutes, np.arange(SESSION_MINUTES), side="right") - 1
    observed = np.zeros(SESSION_MINUTES, dtype=bool)
    observed[minutes] = True
    prev_close = raw.close[pos]
    for name in ("open", "high", "low", "close"):
        src = getattr(raw, name)[pos]
        cols[name] = np.where(observed, src, prev_close)
    cols["volume"] = np.where(observed, raw.volume[pos], 0.0)
    filled = ~observed
    session = TradingSession(raw.date, fill_count=int(filled.sum()), filled=filled, **cols)
    if filled[-1]:
        report.flagged.append((raw.date, "closing minute forward-filled"))
    return session


def clean_sessions(raw_sessions) -> tuple:
    """Drop weekends, half-days and days missing more than 20 minutes; fill the rest.

    Returns ``(sessions, report)``. Already-clean ``TradingSession`` inputs
    pass through untouched, so cleaning is idempotent.
    """
    report = CleaningReport()
    out = []
    for raw in raw_sessions:
        if isinstance(raw, TradingSession):
            out.append(raw)
            continue
        session = _clean_one(raw, report)
        if session is not None:
            out.append(session)
    return out, report


# ------------------------------------------------------------ returns, labels


def log_returns(prices, base_date: dt.date | None = None) -> ReturnSeries:
    """``ln(p[i+1]) - ln(p[i])`` for consecutive prices."""
    p = np.asarray(prices, dtype=np.float64)
    if p.ndim != 1 or len(p) < 2:
        raise ValueError("log_returns needs at least two prices")
    if np.any(~(p > 0)):
        raise ValueError("log_returns needs strictly positive prices")
    return ReturnSeries(np.diff(np.log(p)), base_date)


def _label_pair(close: np.ndarray, scheme: str):
    head = close[:INPUT_MINUTES]
    tail = close[INPUT_MINUTES:]
    if scheme == "mean_390":
        return head.mean(), close[-1]
    if scheme == "y_360_361":
        return close[INPUT_MINUTES - 1], close[INPUT_MINUTES]
    if scheme == "y_360_mean":
        return close[INPUT_MINUTES - 1], tail.mean()
    if scheme == "y_360_390":
        return close[INPUT_MINUTES - 1], close[-1]
    if scheme == "y_mean_mean":
        return head.mean(), tail.mean()
    raise ValueError(f"unknown label scheme {scheme!r}; expected one of {LABEL_SCHEMES}")


def make_label(session, scheme: str = "mean_390") -> DayLabel:
    """Binary day label; 1 (Up) iff the later quantity strictly exceeds the earlier one."""
    close = np.asarray(session.close if hasattr(session, "close") else session, dtype=np.float64)
    if len(close) != SESSION_MINUTES:
        raise ValueError(f"labels need a {SESSION_MINUTES}-minute session, got {len(close)}")
    before, after = _label_pair(close, scheme)
    raw = float(np.log(after) - np.log(before))
    return DayLabel(getattr(session, "date", None), int(raw > 0), scheme, raw)


def return_histogram(labels, bins: int = 50) -> tuple:
    """Histogram of ``raw_return`` values; returns ``(edges, counts)``."""
    values = np.array([lab.raw_return for lab in labels], dtype=np.float64)
    if values.size == 0:
        raise ValueError("return_histogram needs at least one label")
    if int(bins) < 1:
        raise ValueError("bins must be >= 1")
    counts, edges = np.histogram(values, bins=int(bins))
    return edges, counts


def split_by_date(sessions, cutoff: dt.date) -> tuple:
    """Train strictly before ``cutoff``, test on or after it."""
    train = [s for s in sessions if s.date < cutoff]
    test = [s for s in sessions if s.date >= cutoff]
    if not train:
        raise ValueError(f"empty train set: no sessions before {cutoff}")
    if not test:
        raise ValueError(f"empty test set: no sessions on or after {cutoff}")
    return train, test


# ------------------------------------------------------------------ synthetic


@dataclass(frozen=True)
class SynthConfig:
    """Geometric random walk days with an optional planted intraday drift.

    ``volatility`` is the per-minute log-return standard deviation. With
    ``signal > 0`` each day gets a direction ``z = +/-1`` and its log-price
    drifts by ``z * signal * drift_scale * volatility`` over the first 360
    minutes along a half-cosine ramp. Up days ramp slowly across minutes
    30-330; down days ramp within about an hour around mid-session. The
    different time scales keep the direction visible in power spectra, which
    cannot see the sign of a signal.
    """

    days: int = 300
    volatility: float = 5e-4
    signal: float = 0.0
    drift_scale: float = 60.0
    start_date: dt.date = dt.date(2010, 1, 4)
    start_price: float = 100.0
    jitter: int = 30

    def __post_init__(self):
        if int(self.days) < 1:
            raise ValueError(f"days must be >= 1, got {self.days}")
        if not self.volatility > 0:
            raise ValueError(f"volatility must be positive, got {self.volatility}")
        if not 0.0 <= self.signal <= 1.0:
            raise ValueError(f"signal strength must lie in [0, 1], got {self.signal}")
        if not self.drift_scale >= 0:
            raise ValueError(f"drift_scale must be non-negative, got {self.drift_scale}")
        if not self.start_price > 0:
            raise ValueError(f"start_price must be positive, got {self.start_price}")
        if not 0 <= self.jitter <= 90:
            raise ValueError(f"jitter must lie in [0, 90], got {self.jitter}")


@dataclass(frozen=True)
class SynthTruth:
    date: dt.date
    label: int
    raw_return: float
    direction: int  # planted drift direction, 0 when signal == 0
    drift: float  # planted log-price displacement at minute 360


def _ramp(t: np.ndarray, start: float, stop: float) -> np.ndarray:
    u = np.clip((t - start) / (stop - start), 0.0, 1.0)
    return 0.5 * (1.0 - np.cos(np.pi * u))


def _business_days(start: dt.date, count: int) -> list:
    out = []
    day = start
    while len(out) < count:
        if day.weekday() < 5:
            out.append(day)
        day += dt.timedelta(days=1)
    return out


def synth_generate(config: SynthConfig, seed: int) -> tuple:
    """Deterministic synthetic sessions plus ground truth (mean_390 labels)."""
    rng = np.random.default_rng(seed)
    sigma = config.volatility
    t = np.arange(SESSION_MINUTES, dtype=np.float64)
    amplitude = config.signal * config.drift_scale * sigma
    sessions, truth = [], []
    log_level = math.log(config.start_price)
    for day in _business_days(config.start_date, int(config.days)):
        z = 1 if rng.random() < 0.5 else -1
        shift = rng.uniform(-config.jitter, config.jitter) if config.jitter else 0.0
        if z > 0:
            shape = _ramp(t, 30.0, 330.0)
        else:
            shape = _ramp(t, 150.0 + shift, 210.0 + shift)
        drift = z * amplitude * shape
        steps = sigma * rng.standard_normal(SESSION_MINUTES)
        log_close = log_level + np.cumsum(steps) + drift
        log_open = np.concatenate([[log_level], log_close[:-1]])
        wick = np.abs(rng.standard_normal((2, SESSION_MINUTES))) * 0.5 * sigma
        close = np.exp(log_close)
        open_ = np.exp(log_open)
        high = np.maximum(open_, close) * np.exp(wick[0])
        low = np.minimum(open_, close) * np.exp(-wick[1])
        volume = rng.poisson(1000, SESSION_MINUTES).astype(np.float64)
        session = TradingSession(day, open_, high, low, close, volume)
        lab = make_label(session, "mean_390")
        sessions.append(session)
        truth.append(SynthTruth(day, lab.label, lab.raw_return, z if amplitude > 0 else 0,
                                float(drift[INPUT_MINUTES - 1])))
        log_level = log_close[-1]
    return sessions, truth
