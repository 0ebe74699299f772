"""Low-rank adapters with a frozen down-projection ``a`` and trainable ``b``.

Shapes follow ``delta_w = a @ b`` with ``a`` of shape (d_out, r) and ``b`` of
shape (r, d_in), so the update's column space is exactly ``col(a)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ShapeError
from .linalg import atomic_write_text, read_matrix_csv, write_matrix_csv
from .subspace import MinorSubspace

DEFAULT_RANK = 10


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass
class LoraAdapter:
    a: np.ndarray
    b: np.ndarray
    task: int = 1
    k: int | None = None

    def __post_init__(self):
        if self.a.ndim != 2 or self.b.ndim != 2 or self.a.shape[1] != self.b.shape[0]:
            raise ShapeError(f"incompatible adapter factors {self.a.shape} and {self.b.shape}")

    @property
    def rank(self) -> int:
        return self.a.shape[1]

    def delta(self) -> np.ndarray:
        return self.a @ self.b


def init_a_projected(sub: MinorSubspace, r: int, seed) -> np.ndarray:
    """Down-projection whose columns lie in the minor subspace.

    ``a = basis @ g`` with ``g`` of shape (k, r) drawn iid from N(0, 1/k).
    When k < r the result has rank at most k.
    """
    k = sub.k
    g = _rng(seed).standard_normal((k, r)) / np.sqrt(k)
    return sub.basis @ g


def init_a_random(d1: int, r: int, seed) -> np.ndarray:
    return _rng(seed).standard_normal((d1, r)) / np.sqrt(d1)


def new_adapter(a: np.ndarray, d_in: int, task: int = 1, k: int | None = None) -> LoraAdapter:
    """Adapter with zero ``b`` so that it starts as a no-op."""
    return LoraAdapter(a=np.array(a, dtype=np.float64), b=np.zeros((a.shape[1], d_in)), task=task, k=k)


def forward_delta(stack: list[LoraAdapter], x) -> np.ndarray:
    """Sum of ``a_i @ (b_i @ x)`` over the stack."""
    x = np.asarray(x, dtype=np.float64)
    if not stack:
        raise ShapeError("empty adapter stack has no output dimension")
    out = np.zeros((stack[0].a.shape[0], x.shape[1]))
    for ad in stack:
        if ad.b.shape[1] != x.shape[0]:
            raise ShapeError(f"adapter expects inputs of size {ad.b.shape[1]}, got {x.shape[0]}")
        out += ad.a @ (ad.b @ x)
    return out


def merge(stack: list[LoraAdapter], w0) -> np.ndarray:
    w = np.array(w0, dtype=np.float64)
    for ad in stack:
        d = ad.delta()
        if d.shape != w.shape:
            raise ShapeError(f"adapter delta {d.shape} does not match weight {w.shape}")
        w += d
    return w


def save_stacks(directory, stacks: dict[str, list[LoraAdapter]]) -> None:
    """Write one CSV per factor plus ``manifest.json`` describing them."""
    directory = Path(directory)
    entries = []
    for layer, stack in stacks.items():
        for ad in stack:
            stem = f"{layer}_task{ad.task}"
            write_matrix_csv(directory / f"{stem}_a.csv", ad.a)
            write_matrix_csv(directory / f"{stem}_b.csv", ad.b)
            entries.append({"layer": layer, "task": ad.task, "r": ad.rank, "k": ad.k,
                            "a": f"{stem}_a.csv", "b": f"{stem}_b.csv"})
    atomic_write_text(directory / "manifest.json", json.dumps({"adapters": entries}, indent=2) + "\n")


def load_stacks(directory) -> dict[str, list[LoraAdapter]]:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    stacks: dict[str, list[LoraAdapter]] = {}
    for e in manifest["adapters"]:
        ad = LoraAdapter(a=read_matrix_csv(directory / e["a"]), b=read_matrix_csv(directory / e["b"]),
                         task=e["task"], k=e["k"])
        stacks.setdefault(e["layer"], []).append(ad)
    return stacks
