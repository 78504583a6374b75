"""Pipeline configuration: one INI file with a section per stage."""
from __future__ import annotations

import configparser
import datetime as dt
import hashlib
import zlib
from dataclasses import dataclass, field

import numpy as np

from .cnn import TrainConfig
from .denoise import DenoiseConfig, ThresholdRule
from .features import INDICATORS, CwtConfig, ImageSpec, IndicatorParams
from .timeseries import LABEL_SCHEMES, SynthConfig

__all__ = ["PipelineConfig", "derive_seed", "DEFAULT_CONFIG_TEXT"]

DEFAULT_CONFIG_TEXT = """\
[data]
source = synth
csv =
days = 300
volatility = 0.0005
signal = 0.7
drift_scale = 60
start_date = 2010-01-04

[label]
scheme = mean_390

[denoise]
wavelet = db4
levels = 5
shrink = soft
rule = rigrsure
per_level = true
boundary_mode = symmetric

[cwt]
omega0 = 6
dj = 0.125
coi_mode = none

[features]
indicators = close,ema,rsi,ma60,correl
image_height = 64
image_width = 64
ema_period = 30
rsi_period = 14
ma_window = 60
correl_window = 30

[model]
net = shallow

[train]
epochs = 50
batch_size = 32
learning_rate = 0.01
optimizer = sgd_momentum
momentum = 0.9
early_stop_patience = 10
validation_fraction = 0.1

[split]
cutoff =
test_days = 60

[run]
seed = 0
output = run
"""


def derive_seed(global_seed: int, stage: str) -> int:
    """Stage seed from the global seed and a stage name (counter-based, stable across runs)."""
    ss = np.random.SeedSequence([int(global_seed), zlib.crc32(stage.encode())])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def _date(text: str):
    text = text.strip()
    return dt.date.fromisoformat(text) if text else None


@dataclass
class PipelineConfig:
    source: str = "synth"
    csv_path: str = ""
    synth: SynthConfig = field(default_factory=SynthConfig)
    label_scheme: str = "mean_390"
    denoise: DenoiseConfig = field(default_factory=DenoiseConfig)
    cwt: CwtConfig = field(default_factory=CwtConfig)
    indicators: tuple = INDICATORS
    indicator_params: IndicatorParams = field(default_factory=IndicatorParams)
    image: ImageSpec = field(default_factory=ImageSpec)
    net: str = "shallow"
    train: TrainConfig = field(default_factory=TrainConfig)
    validation_fraction: float = 0.1
    cutoff: dt.date | None = None
    test_days: int = 60
    seed: int = 0
    output: str = "run"
    text: str = ""

    @classmethod
    def from_text(cls, text: str) -> "PipelineConfig":
        cp = configparser.ConfigParser()
        cp.read_string(DEFAULT_CONFIG_TEXT)
        cp.read_string(text)
        d, f, t = cp["data"], cp["features"], cp["train"]
        seed = cp["run"].getint("seed")
        source = d.get("source").strip()
        if source not in ("synth", "csv"):
            raise ValueError(f"[data] source must be 'synth' or 'csv', got {source!r}")
        scheme = cp["label"].get("scheme").strip()
        if scheme not in LABEL_SCHEMES:
            raise ValueError(f"[label] scheme must be one of {LABEL_SCHEMES}, got {scheme!r}")
        indicators = tuple(s.strip() for s in f.get("indicators").split(",") if s.strip())
        unknown = [i for i in indicators if i not in INDICATORS]
        if unknown or not indicators:
            raise ValueError(f"[features] indicators must be a non-empty subset of {INDICATORS}")
        net = cp["model"].get("net").strip()
        if net not in ("shallow", "deep"):
            raise ValueError(f"[model] net must be 'shallow' or 'deep', got {net!r}")
        dn = cp["denoise"]
        vf = t.getfloat("validation_fraction")
        if not 0.0 <= vf < 1.0:
            raise ValueError("[train] validation_fraction must lie in [0, 1)")
        return cls(
            source=source,
            csv_path=d.get("csv").strip(),
            synth=SynthConfig(
                days=d.getint("days"),
                volatility=d.getfloat("volatility"),
                signal=d.getfloat("signal"),
                drift_scale=d.getfloat("drift_scale"),
                start_date=_date(d.get("start_date")),
            ),
            label_scheme=scheme,
            denoise=DenoiseConfig(
                wavelet=dn.get("wavelet").strip(),
                levels=dn.getint("levels"),
                shrink=dn.get("shrink").strip(),
                rule=ThresholdRule(dn.get("rule").strip(), dn.getboolean("per_level")),
                boundary_mode=dn.get("boundary_mode").strip(),
            ),
            cwt=CwtConfig(
                omega0=cp["cwt"].getfloat("omega0"),
                dj=cp["cwt"].getfloat("dj"),
                coi_mode=cp["cwt"].get("coi_mode").strip(),
            ),
            indicators=indicators,
            indicator_params=IndicatorParams(
                f.getint("ema_period"), f.getint("rsi_period"), f.getint("ma_window"), f.getint("correl_window")
            ),
            image=ImageSpec(f.getint("image_height"), f.getint("image_width")),
            net=net,
            train=TrainConfig(
                epochs=t.getint("epochs"),
                batch_size=t.getint("batch_size"),
                learning_rate=t.getfloat("learning_rate"),
                optimizer=t.get("optimizer").strip(),
                momentum=t.getfloat("momentum"),
                seed=derive_seed(seed, "train"),
                early_stop_patience=t.getint("early_stop_patience"),
            ),
            validation_fraction=vf,
            cutoff=_date(cp["split"].get("cutoff")),
            test_days=cp["split"].getint("test_days"),
            seed=seed,
            output=cp["run"].get("output").strip(),
            text=text,
        )

    @classmethod
    def from_file(cls, path) -> "PipelineConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read())

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.text.encode()).hexdigest()[:16]
