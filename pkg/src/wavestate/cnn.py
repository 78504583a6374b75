"""A small NumPy convolutional network for binary image classification.

Tensors are NCHW. Convolution is cross-correlation (no kernel flip) computed
with an im2col matrix product; max-pooling routes gradients to the first
maximal element of each window. The network ends in a single sigmoid unit
trained with binary cross-entropy.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensorfile import read_tensor_file, write_tensor_file

__all__ = [
    "LayerSpec",
    "Network",
    "TrainConfig",
    "TrainReport",
    "TrainingDiverged",
    "PROB_CLAMP",
    "build_network",
    "build_reference_net",
    "output_shape",
    "forward",
    "activation_pattern",
    "loss",
    "backward",
    "train",
    "predict",
    "save_checkpoint",
    "load_checkpoint",
]

PROB_CLAMP = 1e-7
LAYER_KINDS = ("conv", "maxpool", "relu", "flatten", "dense", "sigmoid")


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    out_channels: int = 0
    kernel: tuple = (0, 0)
    stride: int = 1
    padding: int = 0
    window: int = 0
    out_dim: int = 0

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        object.__setattr__(self, "kernel", tuple(int(k) for k in self.kernel))
        if self.kind == "conv" and (self.out_channels < 1 or min(self.kernel) < 1 or self.stride < 1 or self.padding < 0):
            raise ValueError(f"invalid conv spec {self}")
        if self.kind == "maxpool" and (self.window < 1 or self.stride < 1):
            raise ValueError(f"invalid maxpool spec {self}")
        if self.kind == "dense" and self.out_dim < 1:
            raise ValueError(f"invalid dense spec {self}")

    @classmethod
    def conv(cls, out_channels, kernel, stride=1, padding=0):
        k = (kernel, kernel) if isinstance(kernel, int) else tuple(kernel)
        return cls("conv", out_channels=out_channels, kernel=k, stride=stride, padding=padding)

    @classmethod
    def maxpool(cls, window=2, stride=None):
        return cls("maxpool", window=window, stride=stride or window)

    @classmethod
    def dense(cls, out_dim):
        return cls("dense", out_dim=out_dim)


def output_shape(spec: LayerSpec, shape: tuple) -> tuple:
    """Per-example output shape of ``spec`` applied to ``shape``."""
    if spec.kind == "conv":
        c, h, w = shape
        kh, kw = spec.kernel
        ho = (h + 2 * spec.padding - kh) // spec.stride + 1
        wo = (w + 2 * spec.padding - kw) // spec.stride + 1
        if ho < 1 or wo < 1:
            raise ValueError(f"conv kernel {spec.kernel} does not fit input {shape}")
        return (spec.out_channels, ho, wo)
    if spec.kind == "maxpool":
        c, h, w = shape
        ho = (h - spec.window) // spec.stride + 1
        wo = (w - spec.window) // spec.stride + 1
        if ho < 2 or wo < 2:
            raise ValueError(f"spatial collapse: pooling {shape} leaves {max(ho, 0)}x{max(wo, 0)}")
        return (c, ho, wo)
    if spec.kind == "flatten":
        return (int(np.prod(shape)),)
    if spec.kind == "dense":
        if len(shape) != 1:
            raise ValueError("dense layer needs a flattened input")
        return (spec.out_dim,)
    return tuple(shape)


@dataclass
class Network:
    layers: list
    params: list  # per layer: {} or {"W": ..., "b": ...}
    input_shape: tuple
    rng_seed: int = 0

    def parameter_count(self) -> int:
        return sum(v.size for p in self.params for v in p.values())

    def copy(self) -> "Network":
        return Network(list(self.layers), [{k: v.copy() for k, v in p.items()} for p in self.params],
                       tuple(self.input_shape), self.rng_seed)


def build_network(layers, input_shape, seed: int = 0) -> Network:
    """Check shapes layer by layer and He-initialise weights (biases zero)."""
    rng = np.random.default_rng(seed)
    shape = tuple(int(s) for s in input_shape)
    if len(shape) != 3 or min(shape) < 1:
        raise ValueError(f"input shape must be (C, H, W), got {input_shape}")
    params = []
    for spec in layers:
        nxt = output_shape(spec, shape)
        if spec.kind == "conv":
            fan_in = shape[0] * spec.kernel[0] * spec.kernel[1]
            W = rng.standard_normal((spec.out_channels, shape[0], *spec.kernel)) * math.sqrt(2.0 / fan_in)
            params.append({"W": W, "b": np.zeros(spec.out_channels)})
        elif spec.kind == "dense":
            W = rng.standard_normal((shape[0], spec.out_dim)) * math.sqrt(2.0 / shape[0])
            params.append({"W": W, "b": np.zeros(spec.out_dim)})
        else:
            params.append({})
        shape = nxt
    if shape != (1,) or layers[-1].kind != "sigmoid":
        raise ValueError("network must end in a single sigmoid unit")
    return Network(list(layers), params, tuple(int(s) for s in input_shape), seed)


def build_reference_net(kind: str, input_shape, seed: int = 0) -> Network:
    """``shallow``: one conv block; ``deep``: three conv blocks plus a hidden dense layer."""
    if kind == "shallow":
        layers = [
            LayerSpec.conv(8, 5, padding=2), LayerSpec("relu"), LayerSpec.maxpool(2),
            LayerSpec("flatten"), LayerSpec.dense(1), LayerSpec("sigmoid"),
        ]
    elif kind == "deep":
        layers = []
        for channels in (8, 16, 32):
            layers += [LayerSpec.conv(channels, 3, padding=1), LayerSpec("relu"), LayerSpec.maxpool(2)]
        layers += [LayerSpec("flatten"), LayerSpec.dense(32), LayerSpec("relu"), LayerSpec.dense(1),
                   LayerSpec("sigmoid")]
    else:
        raise ValueError(f"unknown reference network {kind!r}; expected 'shallow' or 'deep'")
    return build_network(layers, input_shape, seed)


# ------------------------------------------------------------------- layers


def _im2col(x, kh, kw, stride, pad):
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    b, c, ho, wo = win.shape[:4]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(b * ho * wo, c * kh * kw)
    return cols, (b, c, ho, wo, x.shape)


def _conv_forward(x, p, spec):
    kh, kw = spec.kernel
    cols, meta = _im2col(x, kh, kw, spec.stride, spec.padding)
    b, _, ho, wo, _ = meta
    W = p["W"]
    out = cols @ W.reshape(W.shape[0], -1).T + p["b"]
    return out.reshape(b, ho, wo, -1).transpose(0, 3, 1, 2), (cols, meta)


def _conv_backward(grad, cache, p, spec, need_input_grad=True):
    cols, (b, c, ho, wo, padded_shape) = cache
    kh, kw = spec.kernel
    W = p["W"]
    g = grad.transpose(0, 2, 3, 1).reshape(b * ho * wo, -1)
    dW = (g.T @ cols).reshape(W.shape)
    db = g.sum(axis=0)
    if not need_input_grad:
        return None, {"W": dW, "b": db}
    dcols = (g @ W.reshape(W.shape[0], -1)).reshape(b, ho, wo, c, kh, kw)
    dx = np.zeros(padded_shape)
    s = spec.stride
    for i in range(kh):
        for j in range(kw):
            dx[:, :, i:i + s * ho:s, j:j + s * wo:s] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    pad = spec.padding
    if pad:
        dx = dx[:, :, pad:-pad, pad:-pad]
    return dx, {"W": dW, "b": db}


def _pool_forward(x, spec):
    w, s = spec.window, spec.stride
    win = sliding_window_view(x, (w, w), axis=(2, 3))[:, :, ::s, ::s]
    b, c, ho, wo = win.shape[:4]
    flat = win.reshape(b, c, ho, wo, w * w)
    idx = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]
    return out, (idx, x.shape)


def _pool_backward(grad, cache, spec):
    idx, shape = cache
    w, s = spec.window, spec.stride
    b, c, ho, wo = idx.shape
    dx = np.zeros(shape)
    rows = np.arange(ho)[:, None] * s + idx // w
    cols = np.arange(wo)[None, :] * s + idx % w
    bi = np.arange(b)[:, None, None, None]
    ci = np.arange(c)[None, :, None, None]
    np.add.at(dx, (bi, ci, rows, cols), grad)
    return dx


def _forward_all(net: Network, batch: np.ndarray):
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 4 or tuple(x.shape[1:]) != tuple(net.input_shape):
        raise ValueError(f"batch shape {x.shape} does not match network input {net.input_shape}")
    caches = []
    for spec, p in zip(net.layers, net.params):
        if spec.kind == "conv":
            x, cache = _conv_forward(x, p, spec)
        elif spec.kind == "maxpool":
            x, cache = _pool_forward(x, spec)
        elif spec.kind == "relu":
            cache = x > 0
            x = np.where(cache, x, 0.0)
        elif spec.kind == "flatten":
            cache = x.shape
            x = x.reshape(x.shape[0], -1)
        elif spec.kind == "dense":
            cache = x
            x = x @ p["W"] + p["b"]
        else:  # sigmoid
            x = 0.5 * (1.0 + np.tanh(0.5 * x))
            cache = x
        caches.append(cache)
    if not np.all(np.isfinite(x)):
        raise FloatingPointError("non-finite activations in forward pass")
    return x[:, 0], caches


def activation_pattern(net: Network, batch) -> tuple:
    """ReLU masks and max-pool argmax indices: the piecewise-linear region of the batch."""
    _, caches = _forward_all(net, batch)
    out = []
    for spec, cache in zip(net.layers, caches):
        if spec.kind == "relu":
            out.append(cache)
        elif spec.kind == "maxpool":
            out.append(cache[0])
    return tuple(out)


def forward(net: Network, batch) -> np.ndarray:
    """P(label = 1) for every example of an ``(B, C, H, W)`` batch."""
    return _forward_all(net, batch)[0]


def loss(probabilities, labels) -> float:
    """Mean binary cross-entropy with probabilities clamped to ``[1e-7, 1 - 1e-7]``."""
    p = np.asarray(probabilities, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if p.shape != y.shape:
        raise ValueError(f"shape mismatch: probabilities {p.shape}, labels {y.shape}")
    p = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    return float(np.mean(-(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))))


def backward(net: Network, batch, labels) -> list:
    """Exact gradients of :func:`loss` for every parameter, shaped like ``net.params``."""
    p, caches = _forward_all(net, batch)
    y = np.asarray(labels, dtype=np.float64).ravel()
    if y.shape != p.shape:
        raise ValueError(f"got {y.size} labels for a batch of {p.size}")
    n = len(y)
    active = (p > PROB_CLAMP) & (p < 1.0 - PROB_CLAMP)
    # d loss / d logit; the clamp is flat outside its range
    grad = np.where(active, (p - y) / n, 0.0)[:, None]
    grads = [dict() for _ in net.layers]
    for i in range(len(net.layers) - 1, -1, -1):
        spec, cache, prm = net.layers[i], caches[i], net.params[i]
        if spec.kind == "sigmoid":
            continue  # folded into the logit gradient above
        if spec.kind == "dense":
            grads[i] = {"W": cache.T @ grad, "b": grad.sum(axis=0)}
            grad = grad @ prm["W"].T
        elif spec.kind == "flatten":
            grad = grad.reshape(cache)
        elif spec.kind == "relu":
            grad = np.where(cache, grad, 0.0)
        elif spec.kind == "maxpool":
            grad = _pool_backward(grad, cache, spec)
        else:
            grad, grads[i] = _conv_backward(grad, cache, prm, spec, need_input_grad=i > 0)
    return grads


def predict(net: Network, tensors, batch_size: int = 256) -> tuple:
    """``(labels, probabilities)``; label 1 iff probability > 0.5."""
    x = np.asarray(tensors, dtype=np.float64)
    probs = np.concatenate([forward(net, x[i:i + batch_size]) for i in range(0, len(x), batch_size)]) \
        if len(x) else np.zeros(0)
    return (probs > 0.5).astype(int), probs


# ----------------------------------------------------------------- training


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 32
    learning_rate: float = 0.01
    optimizer: str = "sgd_momentum"
    momentum: float = 0.9
    seed: int = 0
    early_stop_patience: int = 10

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or not self.learning_rate > 0:
            raise ValueError("epochs, batch_size and learning_rate must be positive")
        if self.optimizer not in ("sgd", "sgd_momentum"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.early_stop_patience < 0:
            raise ValueError("early_stop_patience must be >= 0")


@dataclass
class TrainReport:
    train_loss: list = field(default_factory=list)
    train_accuracy: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    val_accuracy: list = field(default_factory=list)
    best_epoch: int = -1
    stopped_early: bool = False
    wall_time: float = 0.0
    network: Network | None = field(default=None, repr=False)


def _batched_loss(net, x, y, batch_size=256):
    labels, probs = predict(net, x, batch_size)
    return loss(probs, y), float(np.mean(labels == y))


def train(net: Network, train_x, train_y, val_x=None, val_y=None, config: TrainConfig | None = None) -> TrainReport:
    """Mini-batch SGD; the shuffle order depends only on ``(seed, epoch)``.

    With a validation set, training stops after ``early_stop_patience``
    epochs without improvement and the best parameters are restored into
    ``net``. A non-finite loss raises :class:`TrainingDiverged`.
    """
    config = config or TrainConfig()
    x = np.asarray(train_x, dtype=np.float64)
    y = np.asarray(train_y, dtype=np.float64).ravel()
    if len(x) == 0:
        raise ValueError("training set is empty")
    if len(x) != len(y):
        raise ValueError(f"{len(x)} training tensors but {len(y)} labels")
    has_val = val_x is not None and len(val_x) > 0
    if has_val:
        val_x = np.asarray(val_x, dtype=np.float64)
        val_y = np.asarray(val_y, dtype=np.float64).ravel()
    mu = config.momentum if config.optimizer == "sgd_momentum" else 0.0
    velocity = [{k: np.zeros_like(v) for k, v in p.items()} for p in net.params]
    report = TrainReport(network=net)
    best = (math.inf, None)
    waited = 0
    start = time.perf_counter()
    for epoch in range(config.epochs):
        order = np.random.default_rng([config.seed, epoch]).permutation(len(x))
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                for i in range(0, len(x), config.batch_size):
                    idx = order[i:i + config.batch_size]
                    grads = backward(net, x[idx], y[idx])
                    for p, g, v in zip(net.params, grads, velocity):
                        for k in p:
                            v[k] *= mu
                            v[k] -= config.learning_rate * g[k]
                            p[k] += v[k]
                tr_loss, tr_acc = _batched_loss(net, x, y)
        except FloatingPointError:
            tr_loss, tr_acc = math.nan, math.nan
        if not math.isfinite(tr_loss):
            raise TrainingDiverged(f"training loss became non-finite at epoch {epoch + 1}")
        report.train_loss.append(tr_loss)
        report.train_accuracy.append(tr_acc)
        if has_val:
            v_loss, v_acc = _batched_loss(net, val_x, val_y)
            report.val_loss.append(v_loss)
            report.val_accuracy.append(v_acc)
            if v_loss < best[0]:
                best = (v_loss, [{k: a.copy() for k, a in p.items()} for p in net.params])
                report.best_epoch = epoch
                waited = 0
            else:
                waited += 1
                if config.early_stop_patience and waited >= config.early_stop_patience:
                    report.stopped_early = True
                    break
        else:
            report.best_epoch = epoch
    if has_val and best[1] is not None:
        net.params = best[1]
    report.wall_time = time.perf_counter() - start
    return report


# -------------------------------------------------------------- checkpoints


def save_checkpoint(net: Network, directory, extra: dict | None = None) -> None:
    """One tensor file per parameter plus ``manifest.json``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    files = []
    for i, p in enumerate(net.params):
        for name in sorted(p):
            fname = f"layer{i:02d}_{name}.wstf"
            write_tensor_file(d / fname, p[name])
            files.append({"layer": i, "name": name, "file": fname})
    manifest = {
        "format": "wavestate-cnn/1",
        "input_shape": list(net.input_shape),
        "seed": net.rng_seed,
        "layers": [asdict(spec) for spec in net.layers],
        "parameters": files,
        "extra": extra or {},
    }
    (d / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def load_checkpoint(directory) -> Network:
    d = Path(directory)
    manifest = json.loads((d / "manifest.json").read_text())
    layers = [LayerSpec(**{**spec, "kernel": tuple(spec["kernel"])}) for spec in manifest["layers"]]
    params = [dict() for _ in layers]
    for entry in manifest["parameters"]:
        params[entry["layer"]][entry["name"]] = read_tensor_file(d / entry["file"])
    return Network(layers, params, tuple(manifest["input_shape"]), manifest["seed"])
