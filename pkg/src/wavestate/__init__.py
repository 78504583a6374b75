"""Wavelet scalogram images and a small CNN for classifying intraday market state."""
from .cnn import build_network, build_reference_net, predict, train
from .config import PipelineConfig, derive_seed
from .cwt import cwt, render_scalogram, scalogram
from .denoise import DenoiseConfig, ThresholdRule, denoise
from .dwt import dwt_decompose, dwt_reconstruct
from .evaluation import Confusion, evaluate, metrics, random_baseline
from .features import build_feature_tensor, mic
from .tensorfile import read_tensor_file, write_tensor_file
from .timeseries import clean_sessions, load_intraday_csv, synth_generate

__version__ = "0.1.0"
