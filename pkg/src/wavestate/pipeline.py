"""End-to-end stages shared by the ``pipeline`` command and the per-stage commands."""
from __future__ import annotations

import datetime as dt
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from functools import partial
from pathlib import Path

import numpy as np

from . import cnn, evaluation
from .config import PipelineConfig, derive_seed
from .features import build_feature_tensor
from .tensorfile import read_tensor_file, write_tensor_file
from .timeseries import clean_sessions, load_intraday_csv, synth_generate, write_sessions_csv

__all__ = [
    "load_sessions",
    "write_truth",
    "build_features",
    "save_features",
    "load_features",
    "resolve_cutoff",
    "split_features",
    "train_model",
    "evaluate_model",
    "run_pipeline",
]

log = logging.getLogger(__name__)


def load_sessions(cfg: PipelineConfig):
    """``(sessions, cleaning report, synthetic truth or None)``."""
    if cfg.source == "csv":
        if not cfg.csv_path:
            raise ValueError("[data] csv path is required when source = csv")
        sessions, report = clean_sessions(load_intraday_csv(cfg.csv_path))
        return sessions, report, None
    sessions, truth = synth_generate(cfg.synth, derive_seed(cfg.seed, "synth"))
    sessions, report = clean_sessions(sessions)
    return sessions, report, truth


def write_truth(path, truth) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("date,label,raw_return,direction,drift\n")
        for t in truth:
            fh.write(f"{t.date.isoformat()},{t.label},{t.raw_return!r},{t.direction},{t.drift!r}\n")


def _one(session, cfg: PipelineConfig):
    return build_feature_tensor(session, cfg.indicators, cfg.denoise, cfg.cwt, cfg.image,
                                cfg.label_scheme, cfg.indicator_params)


def build_features(sessions, cfg: PipelineConfig, workers: int = 1) -> list:
    """One feature tensor per session, in input order."""
    fn = partial(_one, cfg=cfg)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, sessions, chunksize=16))
    return [fn(s) for s in sessions]


def save_features(directory, tensors) -> None:
    """``features.wstf`` holds uint8 pixels (N, C, H, W); ``features.meta`` one line per day."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    if tensors:
        pixels = np.rint(np.stack([t.channels for t in tensors]) * 255.0).astype(np.uint8)
    else:
        pixels = np.zeros((0, 0, 0, 0), dtype=np.uint8)
    write_tensor_file(d / "features.wstf", pixels)
    with open(d / "features.meta", "w", encoding="utf-8") as fh:
        for t in tensors:
            fh.write(f"{t.date.isoformat()} {t.label} {t.raw_return!r} {','.join(t.channel_names)}\n")


def load_features(directory) -> dict:
    d = Path(directory)
    pixels = read_tensor_file(d / "features.wstf")
    dates, labels, raw, channels = [], [], [], None
    with open(d / "features.meta", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            date, label, ret, names = line.split()
            dates.append(dt.date.fromisoformat(date))
            labels.append(int(label))
            raw.append(float(ret))
            channels = tuple(names.split(","))
    if pixels.ndim != 4 and len(dates):
        raise ValueError(f"features.wstf must be rank 4 (N, C, H, W), got rank {pixels.ndim}")
    n = pixels.shape[0] if pixels.ndim else 0
    if n != len(dates):
        raise ValueError(f"count mismatch: {n} feature tensors but {len(dates)} labels in features.meta")
    return {
        "x": pixels.astype(np.float64) / 255.0,
        "labels": np.array(labels, dtype=int),
        "dates": dates,
        "raw_returns": np.array(raw),
        "channels": channels,
    }


def resolve_cutoff(dates, cutoff: dt.date | None, test_days: int) -> dt.date:
    """Explicit cutoff, else the date that leaves the last ``test_days`` days for testing."""
    if cutoff is not None:
        return cutoff
    ordered = sorted(dates)
    if not 0 < test_days < len(ordered):
        raise ValueError(f"cannot hold out {test_days} test days from {len(ordered)} sessions")
    return ordered[len(ordered) - test_days]


def split_features(data: dict, cutoff: dt.date) -> tuple:
    dates = np.array(data["dates"])
    train = dates < cutoff
    test = ~train
    if not train.any():
        raise ValueError(f"empty train set: no days before {cutoff}")
    if not test.any():
        raise ValueError(f"empty test set: no days on or after {cutoff}")
    return train, test


def train_model(x, y, cfg: PipelineConfig):
    """Build the configured network and train it; the most recent days validate."""
    n_val = int(round(len(x) * cfg.validation_fraction))
    n_fit = len(x) - n_val
    if n_fit < 1:
        raise ValueError("validation split leaves no training data")
    net = cnn.build_reference_net(cfg.net, x.shape[1:], derive_seed(cfg.seed, "init"))
    val = (x[n_fit:], y[n_fit:]) if n_val else (None, None)
    report = cnn.train(net, x[:n_fit], y[:n_fit], *val, config=cfg.train)
    return net, report


def evaluate_model(net, x, y, cfg: PipelineConfig) -> tuple:
    labels, probs = cnn.predict(net, x)
    meta = {"model": cfg.net, "config": cfg.digest, "seed": cfg.seed}
    model = evaluation.evaluate(labels, y, loss=cnn.loss(probs, y), metadata=meta)
    coin = evaluation.random_baseline(y, derive_seed(cfg.seed, "baseline"))
    baseline = evaluation.evaluate(coin, y, metadata={**meta, "model": "random"})
    return model, baseline


def write_reports(directory, model, baseline) -> str:
    d = Path(directory)
    text = evaluation.side_by_side(model, baseline)
    (d / "report.txt").write_text(text)
    record = {"model": model.to_dict(), "random": baseline.to_dict()}
    (d / "report.json").write_text(json.dumps(record, sort_keys=True, indent=2) + "\n")
    return text


def run_pipeline(cfg: PipelineConfig, output=None, workers: int = 1) -> dict:
    """Data -> cleaning -> features -> split -> training -> evaluation, all written under ``output``."""
    out = Path(output or cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(cfg.text)
    sessions, report, truth = load_sessions(cfg)
    (out / "rejections.txt").write_text(str(report) + ("\n" if report.lines() else ""))
    if truth is not None:
        write_sessions_csv(out / "sessions.csv", sessions)
        write_truth(out / "labels.csv", truth)
    log.info("%d clean sessions", len(sessions))
    tensors = build_features(sessions, cfg, workers)
    save_features(out / "features", tensors)
    data = load_features(out / "features")
    cutoff = resolve_cutoff(data["dates"], cfg.cutoff, cfg.test_days)
    train_mask, test_mask = split_features(data, cutoff)
    x, y = data["x"], data["labels"]
    net, train_report = train_model(x[train_mask], y[train_mask], cfg)
    cnn.save_checkpoint(net, out / "model", {"config": cfg.digest, "cutoff": cutoff.isoformat(),
                                             "best_epoch": train_report.best_epoch})
    model, baseline = evaluate_model(net, x[test_mask], y[test_mask], cfg)
    text = write_reports(out, model, baseline)
    return {"model": model, "random": baseline, "train": train_report, "cutoff": cutoff,
            "sessions": len(sessions), "report_text": text}
