"""Classification metrics: accuracy, macro-averaged F1, and an evaluation
report built on the 3x3 confusion matrix.

Per-class precision, recall, and F1 treat zero denominators as 0 (a class
never predicted has precision 0; a class with no gold instances has recall
0), and macro F1 averages over all three classes regardless of support.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .data import POLARITIES

N_CLASSES = len(POLARITIES)


def _check_pairs(preds, golds):
    if len(preds) != len(golds):
        raise ValueError(f"{len(preds)} predictions vs {len(golds)} golds")
    if len(preds) == 0:
        raise ValueError("no predictions to score")
    for v in list(preds) + list(golds):
        if not 0 <= int(v) < N_CLASSES:
            raise ValueError(f"label {v} outside 0..{N_CLASSES - 1}")


def accuracy(preds, golds) -> float:
    _check_pairs(preds, golds)
    hits = sum(1 for p, g in zip(preds, golds) if int(p) == int(g))
    return hits / len(preds)


def confusion_matrix(preds, golds) -> np.ndarray:
    """Counts with gold on rows, prediction on columns."""
    _check_pairs(preds, golds)
    m = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    for p, g in zip(preds, golds):
        m[int(g), int(p)] += 1
    return m


def per_class_prf(preds, golds) -> list[tuple[float, float, float]]:
    m = confusion_matrix(preds, golds)
    out = []
    for c in range(N_CLASSES):
        tp = m[c, c]
        predicted = m[:, c].sum()
        gold = m[c, :].sum()
        p = tp / predicted if predicted else 0.0
        r = tp / gold if gold else 0.0
        f1 = 2 * p * r / (p + r) if (p + r) else 0.0
        out.append((float(p), float(r), float(f1)))
    return out


def macro_f1(preds, golds) -> float:
    return sum(f1 for _, _, f1 in per_class_prf(preds, golds)) / N_CLASSES


@dataclass
class EvalReport:
    n: int
    accuracy: float
    macro_f1: float
    per_class: list[tuple[float, float, float]]
    confusion: np.ndarray

    @classmethod
    def from_predictions(cls, preds, golds) -> "EvalReport":
        m = confusion_matrix(preds, golds)
        return cls(
            n=len(preds),
            accuracy=accuracy(preds, golds),
            macro_f1=macro_f1(preds, golds),
            per_class=per_class_prf(preds, golds),
            confusion=m,
        )

    def table(self) -> str:
        lines = [f"n={self.n}  accuracy={self.accuracy:.4f}  macro_f1={self.macro_f1:.4f}"]
        lines.append(f"{'class':<26}{'precision':>10}{'recall':>10}{'f1':>10}{'support':>10}")
        for c, name in enumerate(POLARITIES):
            p, r, f1 = self.per_class[c]
            support = int(self.confusion[c, :].sum())
            lines.append(f"{name:<26}{p:>10.4f}{r:>10.4f}{f1:>10.4f}{support:>10d}")
        lines.append("confusion (rows gold, cols pred): " + " ".join(POLARITIES))
        for c, name in enumerate(POLARITIES):
            row = " ".join(f"{int(v):6d}" for v in self.confusion[c])
            lines.append(f"{name:<26}{row}")
        return "\n".join(lines)

    def json_line(self) -> str:
        payload = {
            "n": self.n,
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "per_class": {
                name: {"precision": p, "recall": r, "f1": f1}
                for name, (p, r, f1) in zip(POLARITIES, self.per_class)
            },
            "confusion": self.confusion.tolist(),
        }
        return json.dumps(payload)
