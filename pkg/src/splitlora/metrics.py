"""Accuracy bookkeeping and continual-learning summary metrics.

Task indices in the public API are 1-based to match the usual notation
``a[i][j]`` = accuracy on task i after training task j (i <= j).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass
class AccuracyMatrix:
    values: np.ndarray  # T x T, NaN above the diagonal

    @classmethod
    def empty(cls, T: int) -> "AccuracyMatrix":
        return cls(np.full((T, T), np.nan))

    @classmethod
    def from_rows(cls, rows) -> "AccuracyMatrix":
        """Build from ragged rows: ``rows[i-1]`` holds a[i][i..T]."""
        T = len(rows)
        m = cls.empty(T)
        for i, row in enumerate(rows):
            if len(row) != T - i:
                raise ValueError(f"row {i + 1} must have {T - i} entries, got {len(row)}")
            for off, v in enumerate(row):
                m.set(i + 1, i + 1 + off, v)
        return m

    @classmethod
    def from_columns(cls, cols) -> "AccuracyMatrix":
        """Build from ragged columns: ``cols[j-1]`` holds a[1..j][j]."""
        T = len(cols)
        m = cls.empty(T)
        for j, col in enumerate(cols, start=1):
            if len(col) != j:
                raise ValueError(f"column {j} must have {j} entries, got {len(col)}")
            for i, v in enumerate(col, start=1):
                m.set(i, j, v)
        return m

    @property
    def T(self) -> int:
        return self.values.shape[0]

    def set(self, i: int, j: int, value: float) -> None:
        if not 1 <= i <= j <= self.T:
            raise IndexError(f"a[{i}][{j}] is outside the lower triangle of a {self.T}-task matrix")
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"accuracy {value} outside [0, 1]")
        self.values[i - 1, j - 1] = value

    def get(self, i: int, j: int) -> float:
        return float(self.values[i - 1, j - 1])

    def to_list(self) -> list[list[float | None]]:
        return [[None if math.isnan(v) else float(v) for v in row] for row in self.values]

    @classmethod
    def from_list(cls, data) -> "AccuracyMatrix":
        return cls(np.array([[np.nan if v is None else v for v in row] for row in data], dtype=np.float64))


def faa(m: AccuracyMatrix) -> float:
    """Final average accuracy: mean of the last column."""
    T = m.T
    return sum(m.get(i, T) for i in range(1, T + 1)) / T


def caa(m: AccuracyMatrix) -> float:
    """Cumulative average accuracy: mean over steps of the average accuracy so far."""
    T = m.T
    return sum(sum(m.get(i, j) for i in range(1, j + 1)) / j for j in range(1, T + 1)) / T


def forgetting(m: AccuracyMatrix) -> float:
    """Mean drop from each earlier task's best accuracy to its final accuracy."""
    T = m.T
    if T == 1:
        return 0.0
    gaps = [max(m.get(i, j) for j in range(i, T + 1)) - m.get(i, T) for i in range(1, T)]
    return sum(gaps) / (T - 1)


def plasticity(m: AccuracyMatrix) -> float:
    """Mean accuracy on each task right after it was trained."""
    return sum(m.get(t, t) for t in range(1, m.T + 1)) / m.T


def summarize(m: AccuracyMatrix) -> dict[str, float]:
    return {"faa": faa(m), "caa": caa(m), "forgetting": forgetting(m), "plasticity": plasticity(m)}


def relative_curves(runs: dict[float, list[AccuracyMatrix]], baseline_alpha: float = 1.0) -> dict[float, dict]:
    """Forgetting and plasticity of each alpha relative to ``baseline_alpha``.

    ``runs`` maps alpha to one matrix per seed; seed means are compared.
    """
    if baseline_alpha not in runs:
        raise KeyError(f"baseline alpha {baseline_alpha} missing from runs")

    def means(ms):
        return (float(np.mean([forgetting(m) for m in ms])), float(np.mean([plasticity(m) for m in ms])))

    f0, p0 = means(runs[baseline_alpha])
    out = {}
    for alpha in sorted(runs):
        f, p = means(runs[alpha])
        out[alpha] = {"forgetting": f, "plasticity": p,
                      "relative_forgetting": f - f0, "relative_plasticity": p - p0}
    return out


def aggregate(per_seed: list[dict[str, float]]) -> dict[str, dict[str, float]]:
    """Mean and sample standard deviation of each metric across seeds."""
    keys = per_seed[0].keys()
    out = {}
    for k in keys:
        vals = np.array([d[k] for d in per_seed], dtype=np.float64)
        out[k] = {"mean": float(vals.mean()), "std": float(vals.std(ddof=1)) if vals.size > 1 else 0.0}
    return out
