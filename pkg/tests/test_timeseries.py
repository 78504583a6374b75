import datetime as dt
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wavestate.timeseries import (
    LABEL_SCHEMES,
    MinuteBar,
    RawSession,
    SynthConfig,
    TradingSession,
    clean_sessions,
    load_intraday_csv,
    log_returns,
    make_label,
    return_histogram,
    split_by_date,
    synth_generate,
    write_sessions_csv,
)

MONDAY = dt.date(2021, 3, 1)


def _write_csv(path, rows):
    with open(path, "w") as fh:
        fh.write("timestamp,open,high,low,close,volume\n")
        for r in rows:
            fh.write(",".join(str(v) for v in r) + "\n")


def _rows(day, minutes, price=lambda m: 100 + 0.01 * m):
    base = dt.datetime.combine(day, dt.time(9, 30))
    out = []
    for m in minutes:
        p = price(m)
        out.append(((base + dt.timedelta(minutes=m)).isoformat(timespec="minutes"), p, p + 0.05, p - 0.05, p, 10))
    return out


def _raw(day, minutes, price=lambda m: 100 + 0.01 * m):
    m = np.asarray(list(minutes))
    c = np.array([price(i) for i in m], dtype=float)
    return RawSession(day, m, c, c + 0.05, c - 0.05, c, np.full(len(m), 10.0))


def _flat_session(close, day=MONDAY):
    close = np.asarray(close, dtype=float)
    return TradingSession(day, close, close, close, close, np.zeros(390))


def test_load_single_day(tmp_path):
    p = tmp_path / "a.csv"
    _write_csv(p, _rows(MONDAY, range(390)))
    sessions = load_intraday_csv(p)
    assert len(sessions) == 1 and len(sessions[0]) == 390
    assert sessions[0].close[5] == pytest.approx(100.05)


def test_load_groups_by_date(tmp_path):
    p = tmp_path / "a.csv"
    _write_csv(p, _rows(MONDAY, range(390)) + _rows(MONDAY + dt.timedelta(days=1), range(195)))
    assert [len(s) for s in load_intraday_csv(p)] == [390, 195]


def test_load_ignores_minutes_outside_session(tmp_path):
    p = tmp_path / "a.csv"
    early = [("2021-03-01T09:29", 1, 1, 1, 1, 1), ("2021-03-01T16:00", 1, 1, 1, 1, 1)]
    _write_csv(p, early + _rows(MONDAY, range(390)))
    assert len(load_intraday_csv(p)[0]) == 390


def test_duplicate_timestamp_named(tmp_path):
    p = tmp_path / "a.csv"
    rows = _rows(MONDAY, range(10))
    _write_csv(p, rows + [rows[3]])
    with pytest.raises(ValueError, match="2021-03-01T09:33"):
        load_intraday_csv(p)


def test_unparseable_row_names_line(tmp_path):
    p = tmp_path / "a.csv"
    rows = _rows(MONDAY, range(3)) + [("2021-03-01T09:40", "x", 1, 1, 1, 1)]
    _write_csv(p, rows)
    with pytest.raises(ValueError, match="line 5"):
        load_intraday_csv(p)


def test_missing_column(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("time,close\n")
    with pytest.raises(ValueError, match="timestamp"):
        load_intraday_csv(p)


def test_custom_schema(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("ts,px\n2021-03-01T09:30,10\n2021-03-01T09:31,11\n")
    (s,) = load_intraday_csv(p, schema={"timestamp": "ts", "close": "px"})
    assert s.close.tolist() == [10, 11] and s.high.tolist() == [10, 11]


def test_minute_bar_validation():
    with pytest.raises(ValueError):
        MinuteBar(MONDAY, 0, 1.0, 0.5, 0.4, 1.0)
    with pytest.raises(ValueError):
        MinuteBar(MONDAY, 0, -1.0, 1.0, -2.0, 1.0)


def test_clean_full_day_kept():
    sessions, report = clean_sessions([_raw(MONDAY, range(390))])
    assert len(sessions) == 1 and sessions[0].fill_count == 0 and not report.lines()


def test_clean_forward_fills_gap():
    minutes = [m for m in range(390) if not 100 <= m < 115]
    (s,), report = clean_sessions([_raw(MONDAY, minutes)])
    assert s.fill_count == 15
    assert np.all(s.close[100:115] == s.close[99])
    assert np.all(s.volume[100:115] == 0)
    assert s.filled[100:115].all() and s.filled.sum() == 15


def test_clean_drops_and_reasons():
    raws = [
        _raw(MONDAY, [m for m in range(390) if not 100 <= m < 130]),
        _raw(MONDAY + dt.timedelta(days=1), range(210)),
        _raw(MONDAY + dt.timedelta(days=2), range(5, 390)),
        _raw(dt.date(2021, 3, 6), range(390)),
        _raw(MONDAY + dt.timedelta(days=3), []),
    ]
    sessions, report = clean_sessions(raws)
    assert sessions == []
    assert [r for _, r in report.dropped] == ["missing > 20", "half-day", "leading gap", "weekend", "empty"]
    assert report.lines()[0] == "DROPPED 2021-03-01 missing > 20"


def test_closing_minute_fill_flagged():
    (s,), report = clean_sessions([_raw(MONDAY, range(385))])
    assert s.fill_count == 5
    assert report.lines() == ["FLAGGED 2021-03-01 closing minute forward-filled"]


@given(st.sets(st.integers(1, 389), max_size=20), st.integers(0, 1000))
def test_fill_never_invents_values_and_is_idempotent(gaps, seed):
    rng = np.random.default_rng(seed)
    prices = 100 * np.exp(np.cumsum(rng.normal(0, 1e-3, 390)))
    minutes = [m for m in range(390) if m not in gaps]
    raw = _raw(MONDAY, minutes, price=lambda m: prices[m])
    once, _ = clean_sessions([raw])
    twice, _ = clean_sessions(once)
    assert once == twice
    (s,) = once
    last = None
    for m in range(390):
        if m in gaps:
            assert s.close[m] == last
        else:
            last = prices[m]


def test_trading_session_read_only_and_length():
    s = _flat_session(np.full(390, 5.0))
    with pytest.raises(ValueError):
        s.close[0] = 1.0
    with pytest.raises(ValueError):
        _flat_session(np.full(389, 5.0))
    assert len(s.bars) == 390 and s.bars[3].close == 5.0


def test_csv_round_trip(tmp_path):
    sessions, _ = synth_generate(SynthConfig(days=3), 1)
    p = tmp_path / "s.csv"
    write_sessions_csv(p, sessions)
    back, report = clean_sessions(load_intraday_csv(p))
    assert back == sessions and not report.lines()


def test_log_returns_examples():
    assert log_returns([100, 100, 100]).values.tolist() == [0.0, 0.0]
    assert log_returns([100, 110]).values[0] == pytest.approx(0.0953101798043249)
    assert log_returns([math.e, math.e ** 2]).values[0] == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(ValueError):
        log_returns([1.0])
    with pytest.raises(ValueError):
        log_returns([1.0, 0.0])


@given(st.integers(0, 1000), st.sampled_from([2.0, 4.0, 0.5, 0.25, 1024.0]))
def test_log_returns_scale_invariant(seed, k):
    # power-of-two scale factors keep ln(k p) = ln k + ln p exact in binary floating point
    p = np.random.default_rng(seed).uniform(1, 100, 50)
    assert np.allclose(log_returns(k * p).values, log_returns(p).values, rtol=0, atol=1e-13)


def test_label_constant_day_is_down():
    lab = make_label(_flat_session(np.full(390, 100.0)))
    assert lab.label == 0 and lab.raw_return == 0.0


def test_label_jump_at_close():
    c = np.full(390, 100.0)
    c[-1] = 101.0
    lab = make_label(_flat_session(c))
    assert lab.label == 1 and lab.raw_return == pytest.approx(math.log(1.01))


def test_all_schemes_on_linear_ramp():
    c = np.linspace(100, 110, 390)
    definitions = {
        "mean_390": (c[:360].mean(), c[389]),
        "y_360_361": (c[359], c[360]),
        "y_360_mean": (c[359], c[360:].mean()),
        "y_360_390": (c[359], c[389]),
        "y_mean_mean": (c[:360].mean(), c[360:].mean()),
    }
    assert set(definitions) == set(LABEL_SCHEMES)
    for scheme, (before, after) in definitions.items():
        lab = make_label(_flat_session(c), scheme)
        assert lab.label == 1
        assert lab.raw_return == pytest.approx(math.log(after) - math.log(before), rel=1e-12)
    with pytest.raises(ValueError):
        make_label(_flat_session(c), "y_1_2")


@given(st.integers(0, 10_000))
def test_label_antisymmetry_under_reflection(seed):
    rng = np.random.default_rng(seed)
    c = 50 * np.exp(np.cumsum(rng.normal(0, 1e-3, 390)))
    a = make_label(_flat_session(c))
    b = make_label(_flat_session(50.0 ** 2 / c))
    if abs(a.raw_return) > 1e-9 and abs(b.raw_return) > 1e-9:
        assert a.label != b.label


def _lab(r):
    from wavestate.timeseries import DayLabel

    return DayLabel(MONDAY, int(r > 0), "mean_390", r)


def test_histogram_examples():
    edges, counts = return_histogram([_lab(0.0)] * 10, 5)
    assert counts.sum() == 10 and counts.max() == 10
    edges, counts = return_histogram([_lab(-1.0), _lab(1.0)], 2)
    assert counts.tolist() == [1, 1] and edges.tolist() == [-1.0, 0.0, 1.0]
    with pytest.raises(ValueError):
        return_histogram([], 3)


def test_mean_390_wider_than_next_minute():
    sessions, _ = synth_generate(SynthConfig(days=1000), 5)
    wide = [make_label(s, "mean_390").raw_return for s in sessions]
    narrow = [make_label(s, "y_360_361").raw_return for s in sessions]
    assert np.std(wide) > np.std(narrow)


def _days(n, start=MONDAY):
    sessions, _ = synth_generate(SynthConfig(days=n, start_date=start), 0)
    return sessions


def test_split_by_date():
    s = _days(4)
    train, test = split_by_date(s, s[2].date)
    assert [x.date for x in train] == [s[0].date, s[1].date]
    assert [x.date for x in test] == [s[2].date, s[3].date]
    with pytest.raises(ValueError, match="empty train"):
        split_by_date(s, s[0].date - dt.timedelta(days=1))
    with pytest.raises(ValueError, match="empty test"):
        split_by_date(s, s[-1].date + dt.timedelta(days=1))


def test_split_eleven_years():
    s = _days(int(np.busday_count("2009-01-01", "2020-01-01")), dt.date(2009, 1, 1))
    cutoff = dt.date(2019, 1, 1)
    train, test = split_by_date(s, cutoff)
    assert len(train) + len(test) == len(s)
    assert max(x.date for x in train) < min(x.date for x in test)
    assert len(test) == 261 and len(train) == len(s) - 261


def test_synth_deterministic():
    a, ta = synth_generate(SynthConfig(days=20, signal=0.5), 7)
    b, tb = synth_generate(SynthConfig(days=20, signal=0.5), 7)
    assert a == b and ta == tb
    assert all(d.date.weekday() < 5 for d in a)


def test_synth_no_signal_is_balanced():
    _, truth = synth_generate(SynthConfig(days=2000, signal=0.0), 11)
    labels = np.array([t.label for t in truth])
    majority = max(labels.mean(), 1 - labels.mean())
    # best constant predictor is the majority class; it must sit near a coin flip
    assert abs(majority - 0.5) < 0.03
    assert all(t.direction == 0 for t in truth)


def test_synth_full_signal_recoverable_from_drift():
    _, truth = synth_generate(SynthConfig(days=2000, signal=1.0), 11)
    rule = np.array([int(t.drift > 0) for t in truth])
    labels = np.array([t.label for t in truth])
    assert np.mean(rule == labels) > 0.9


def test_synth_config_validation():
    with pytest.raises(ValueError):
        SynthConfig(signal=1.5)
    with pytest.raises(ValueError):
        SynthConfig(days=0)
    with pytest.raises(ValueError):
        SynthConfig(volatility=0)
