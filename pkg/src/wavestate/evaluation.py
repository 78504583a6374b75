"""Confusion matrices, derived rates and the coin-flip baseline."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

__all__ = ["Confusion", "EvalReport", "confusion", "metrics", "random_baseline", "evaluate", "side_by_side"]


@dataclass(frozen=True)
class Confusion:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def flipped(self) -> "Confusion":
        """Counts after swapping which class is called positive."""
        return Confusion(tp=self.tn, fp=self.fn, fn=self.fp, tn=self.tp)


@dataclass
class EvalReport:
    confusion: Confusion
    accuracy: float
    tpr: float
    tnr: float
    f1: float
    n_test: int
    loss: float | None = None
    degenerate: tuple = ()  # names of ratios whose denominator was zero
    metadata: dict = field(default_factory=dict)

    def lines(self) -> list:
        c = self.confusion
        out = [
            f"TP: {c.tp}",
            f"FP: {c.fp}",
            f"FN: {c.fn}",
            f"TN: {c.tn}",
            f"Loss: {'/' if self.loss is None else f'{self.loss:.6f}'}",
            f"Accuracy: {self.accuracy:.6f}",
            f"TPR: {self.tpr:.6f}",
            f"TNR: {self.tnr:.6f}",
            f"F1 score: {self.f1:.6f}",
            f"N: {self.n_test}",
        ]
        if self.degenerate:
            out.append(f"Degenerate: {','.join(self.degenerate)}")
        return out

    def to_text(self) -> str:
        return "\n".join(self.lines()) + "\n"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["degenerate"] = list(self.degenerate)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _binary(values, what):
    arr = np.asarray(values).ravel()
    if arr.size and not np.all((arr == 0) | (arr == 1)):
        raise ValueError(f"{what} must contain only 0/1 values")
    return arr.astype(int)


def confusion(predicted, actual) -> Confusion:
    """Counts with 1 = Up as the positive class."""
    p = _binary(predicted, "predicted")
    a = _binary(actual, "actual")
    if len(p) != len(a):
        raise ValueError(f"length mismatch: {len(p)} predictions vs {len(a)} labels")
    if len(p) == 0:
        raise ValueError("confusion needs at least one prediction")
    return Confusion(
        tp=int(np.sum((p == 1) & (a == 1))),
        fp=int(np.sum((p == 1) & (a == 0))),
        fn=int(np.sum((p == 0) & (a == 1))),
        tn=int(np.sum((p == 0) & (a == 0))),
    )


def _ratio(num, den, name, flags):
    if den == 0:
        flags.append(name)
        return 0.0
    return num / den


def metrics(c: Confusion, loss: float | None = None, metadata: dict | None = None) -> EvalReport:
    """Accuracy, TPR, TNR and F1; zero denominators yield 0 and are flagged."""
    if c.total == 0:
        raise ValueError("cannot derive metrics from an empty confusion matrix")
    flags: list = []
    accuracy = (c.tp + c.tn) / c.total
    tpr = _ratio(c.tp, c.tp + c.fn, "tpr", flags)
    tnr = _ratio(c.tn, c.tn + c.fp, "tnr", flags)
    f1 = _ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn, "f1", flags)
    return EvalReport(c, accuracy, tpr, tnr, f1, c.total, loss, tuple(flags), dict(metadata or {}))


def random_baseline(labels, seed: int) -> np.ndarray:
    """Fair-coin predictions, one per label, reproducible from ``seed``."""
    n = len(labels)
    if n == 0:
        raise ValueError("random baseline needs at least one label")
    return np.random.default_rng(seed).integers(0, 2, size=n)


def evaluate(predicted, actual, loss: float | None = None, metadata: dict | None = None) -> EvalReport:
    return metrics(confusion(predicted, actual), loss, metadata)


def side_by_side(model: EvalReport, baseline: EvalReport, names=("model", "random")) -> str:
    left, right = model.lines(), baseline.lines()
    width = max(len(s) for s in left) + 4
    rows = [f"{names[0]:<{width}}{names[1]}"]
    for i in range(max(len(left), len(right))):
        a = left[i] if i < len(left) else ""
        b = right[i] if i < len(right) else ""
        rows.append(f"{a:<{width}}{b}")
    return "\n".join(rows) + "\n"
