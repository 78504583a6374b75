"""Command-line entry point: ``wavestate <subcommand> ...``.

Exit status is 0 on success, 2 on usage errors and 1 when the data or a
processing stage fails. Every subcommand prints a one-line summary.
"""
from __future__ import annotations

import argparse
import configparser
import datetime as dt
import io
import logging
import sys
from pathlib import Path

import numpy as np

from . import cnn, pipeline
from .config import DEFAULT_CONFIG_TEXT, PipelineConfig
from .cwt import render_scalogram, save_png
from .denoise import RULE_KINDS, SHRINK_KINDS, denoise
from .dwt import BOUNDARY_MODES
from .features import INDICATORS, channel_scalogram, channel_signal, compute_indicator
from .tensorfile import TensorFileError, write_tensor_file
from .timeseries import clean_sessions, load_intraday_csv, write_sessions_csv

__all__ = ["main", "build_parser", "load_config"]

log = logging.getLogger("wavestate")


def load_config(path=None, overrides: dict | None = None) -> PipelineConfig:
    """Config file (or defaults) with ``{(section, key): value}`` overrides applied.

    The merged text is what gets hashed and copied into run directories, so
    a flag given on the command line is part of the provenance record.
    """
    text = Path(path).read_text(encoding="utf-8") if path else DEFAULT_CONFIG_TEXT
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    if overrides:
        cp = configparser.ConfigParser()
        cp.read_string(DEFAULT_CONFIG_TEXT)
        cp.read_string(text)
        for (section, key), value in overrides.items():
            cp[section][key] = str(value)
        buf = io.StringIO()
        cp.write(buf)
        text = buf.getvalue()
    return PipelineConfig.from_text(text)


def _clean_input(path):
    sessions, report = clean_sessions(load_intraday_csv(path))
    if not sessions:
        raise ValueError(f"{path}: no usable sessions after cleaning")
    return sessions, report


def _out(path) -> Path:
    d = Path(path)
    d.mkdir(parents=True, exist_ok=True)
    return d


# ------------------------------------------------------------------ commands


def cmd_synth(args) -> str:
    cfg = load_config(args.config, {
        ("data", "days"): args.days, ("data", "signal"): args.signal,
        ("data", "volatility"): args.volatility, ("data", "drift_scale"): args.drift_scale,
        ("data", "start_date"): args.start_date, ("run", "seed"): args.seed,
    })
    out = _out(args.out)
    sessions, _, truth = pipeline.load_sessions(cfg)
    write_sessions_csv(out / "sessions.csv", sessions)
    pipeline.write_truth(out / "labels.csv", truth)
    up = np.mean([t.label for t in truth])
    return f"synth: {len(sessions)} sessions ({up:.1%} up) -> {out / 'sessions.csv'}"


def cmd_clean(args) -> str:
    sessions, report = clean_sessions(load_intraday_csv(args.input))
    out = _out(args.out)
    write_sessions_csv(out / "sessions.csv", sessions)
    (out / "rejections.txt").write_text(str(report) + ("\n" if report.lines() else ""))
    return (f"clean: {len(sessions)} sessions kept, {len(report.dropped)} dropped, "
            f"{len(report.flagged)} flagged -> {out / 'sessions.csv'}")


def cmd_denoise(args) -> str:
    cfg = load_config(args.config, {
        ("denoise", "shrink"): args.shrink, ("denoise", "rule"): args.rule,
        ("denoise", "levels"): args.levels, ("denoise", "wavelet"): args.wavelet,
        ("denoise", "boundary_mode"): args.boundary_mode,
    })
    sessions, _ = _clean_input(args.input)
    out = _out(args.out)
    rows, dates, removed = [], [], []
    if args.dump_coefficients:
        _out(out / "coefficients")
    for s in sessions:
        signal = channel_signal(compute_indicator(s, args.indicator, cfg.indicator_params))
        clean, info = denoise(signal, cfg.denoise, return_info=True)
        rows.append(clean)
        dates.append(s.date.isoformat())
        removed.append(np.sum((signal - clean) ** 2) / max(np.sum(signal ** 2), 1e-300))
        if args.dump_coefficients:
            coeffs = info["decomposition"].coefficients()
            names = [f"a{len(coeffs) - 1}"] + [f"d{k}" for k in range(len(coeffs) - 1, 0, -1)]
            for name, c in zip(names, coeffs):
                write_tensor_file(out / "coefficients" / f"{s.date.isoformat()}_{args.indicator}_{name}.wstf",
                                  np.asarray(c, dtype=np.float64))
    write_tensor_file(out / "denoised.wstf", np.stack(rows))
    (out / "denoised.dates").write_text("\n".join(dates) + "\n")
    return (f"denoise: {len(rows)} sessions, {args.indicator}, mean removed energy "
            f"{np.mean(removed):.3%} -> {out / 'denoised.wstf'}")


def cmd_scalogram(args) -> str:
    cfg = load_config(args.config, {("cwt", "coi_mode"): args.coi_mode})
    sessions, _ = _clean_input(args.input)
    out = _out(args.out)
    wanted = {dt.date.fromisoformat(d) for d in args.date} if args.date else None
    if wanted is not None:
        missing = wanted - {s.date for s in sessions}
        if missing:
            raise ValueError(f"no clean session for {', '.join(sorted(d.isoformat() for d in missing))}")
        sessions = [s for s in sessions if s.date in wanted]
    h = args.height or cfg.image.height
    w = args.width or cfg.image.width
    for s in sessions:
        sg = channel_scalogram(s, args.indicator, cfg.denoise, cfg.cwt, cfg.indicator_params)
        stem = f"{s.date.isoformat()}_{args.indicator}"
        write_tensor_file(out / f"{stem}.wstf", sg.power)
        save_png(out / f"{stem}.png", render_scalogram(sg, h, w, cfg.cwt.coi_mode))
    return f"scalogram: {len(sessions)} images ({args.indicator}, {h}x{w}) -> {out}"


def cmd_features(args) -> str:
    cfg = load_config(args.config, {("features", "indicators"): args.indicators})
    sessions, _ = _clean_input(args.input)
    out = _out(args.out)
    tensors = pipeline.build_features(sessions, cfg, args.workers)
    pipeline.save_features(out, tensors)
    shape = tensors[0].channels.shape
    return f"features: {len(tensors)} tensors of shape {shape} -> {out / 'features.wstf'}"


def _split(args, cfg, data):
    cutoff = pipeline.resolve_cutoff(data["dates"], cfg.cutoff, cfg.test_days)
    return (cutoff, *pipeline.split_features(data, cutoff))


def cmd_train(args) -> str:
    cfg = load_config(args.config, {("split", "cutoff"): args.cutoff})
    data = pipeline.load_features(args.features)
    cutoff, train_mask, _ = _split(args, cfg, data)
    net, report = pipeline.train_model(data["x"][train_mask], data["labels"][train_mask], cfg)
    cnn.save_checkpoint(net, args.out, {"config": cfg.digest, "cutoff": cutoff.isoformat(),
                                        "best_epoch": report.best_epoch})
    return (f"train: {int(train_mask.sum())} days, best epoch {report.best_epoch}, "
            f"train accuracy {report.train_accuracy[report.best_epoch]:.4f} -> {args.out}")


def cmd_eval(args) -> str:
    cfg = load_config(args.config, {("split", "cutoff"): args.cutoff})
    data = pipeline.load_features(args.features)
    net = cnn.load_checkpoint(args.model)
    if tuple(net.input_shape) != data["x"].shape[1:]:
        raise ValueError(f"model expects input {tuple(net.input_shape)}, features are {data['x'].shape[1:]}")
    _, _, test_mask = _split(args, cfg, data)
    model, baseline = pipeline.evaluate_model(net, data["x"][test_mask], data["labels"][test_mask], cfg)
    text = pipeline.write_reports(_out(args.out), model, baseline)
    sys.stdout.write(text)
    return (f"eval: {model.n_test} test days, accuracy {model.accuracy:.6f} "
            f"vs random {baseline.accuracy:.6f} -> {Path(args.out) / 'report.txt'}")


def cmd_pipeline(args) -> str:
    cfg = load_config(args.config, {("run", "seed"): args.seed})
    result = pipeline.run_pipeline(cfg, args.out, args.workers)
    out = Path(args.out or cfg.output)
    return (f"pipeline: {result['sessions']} sessions, {result['model'].n_test} test days, "
            f"accuracy {result['model'].accuracy:.6f} vs random {result['random'].accuracy:.6f} "
            f"-> {out / 'report.txt'}")


# -------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wavestate", description="Wavelet scalogram CNN day classifier.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate synthetic minute sessions with known labels")
    s.add_argument("--days", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--signal", type=float)
    s.add_argument("--volatility", type=float)
    s.add_argument("--drift-scale", type=float)
    s.add_argument("--start-date")
    s.add_argument("--config")
    s.add_argument("--out", default="synth")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("clean", help="drop and forward-fill sessions of a minute-bar CSV")
    s.add_argument("input")
    s.add_argument("--out", default="clean")
    s.set_defaults(func=cmd_clean)

    s = sub.add_parser("denoise", help="wavelet-denoise one indicator channel per session")
    s.add_argument("input")
    s.add_argument("--indicator", choices=INDICATORS, default="close")
    s.add_argument("--shrink", choices=SHRINK_KINDS)
    s.add_argument("--rule", choices=RULE_KINDS)
    s.add_argument("--levels", type=int)
    s.add_argument("--wavelet", choices=("haar", "db4"))
    s.add_argument("--boundary-mode", choices=BOUNDARY_MODES)
    s.add_argument("--dump-coefficients", action="store_true")
    s.add_argument("--config")
    s.add_argument("--out", default="denoised")
    s.set_defaults(func=cmd_denoise)

    s = sub.add_parser("scalogram", help="write scalogram power and PNG images")
    s.add_argument("input")
    s.add_argument("--date", action="append", help="YYYY-MM-DD; repeatable; default all days")
    s.add_argument("--indicator", choices=INDICATORS, default="close")
    s.add_argument("--height", type=int)
    s.add_argument("--width", type=int)
    s.add_argument("--coi-mode", choices=("none", "zero", "dim"))
    s.add_argument("--config")
    s.add_argument("--out", default="scalograms")
    s.set_defaults(func=cmd_scalogram)

    s = sub.add_parser("features", help="build multi-channel scalogram tensors")
    s.add_argument("input")
    s.add_argument("--indicators", help="comma-separated subset of " + ",".join(INDICATORS))
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--config")
    s.add_argument("--out", default="features")
    s.set_defaults(func=cmd_features)

    s = sub.add_parser("train", help="train the CNN on days before the cutoff")
    s.add_argument("features")
    s.add_argument("--cutoff")
    s.add_argument("--config")
    s.add_argument("--out", default="model")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="score a checkpoint on days from the cutoff on")
    s.add_argument("features")
    s.add_argument("--model", required=True)
    s.add_argument("--cutoff")
    s.add_argument("--config")
    s.add_argument("--out", default="eval")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("pipeline", help="run every stage end to end")
    s.add_argument("--config")
    s.add_argument("--seed", type=int)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out")
    s.set_defaults(func=cmd_pipeline)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors with status 2
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        summary = args.func(args)
    except (ValueError, OSError, TensorFileError, cnn.TrainingDiverged, configparser.Error, KeyError) as exc:
        print(f"wavestate {args.command}: error: {exc}", file=sys.stderr)
        return 1
    print(summary)
    return 0


if __name__ == "__main__":
    sys.exit(main())
