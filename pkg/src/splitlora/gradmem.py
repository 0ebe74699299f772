"""Running average of per-task mean gradients, one matrix per adapted layer."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyDataset, ShapeError
from .linalg import atomic_write_text, read_matrix_csv, write_matrix_csv
from .network import ToyNet


@dataclass(frozen=True)
class LayerMemory:
    g_old: np.ndarray
    tasks_seen: int = 0


@dataclass(frozen=True)
class GradientMemory:
    """Per-layer average gradient of all completed tasks.

    Starts at zero for every layer; ``update_old`` returns a new memory.
    """

    layers: dict[str, LayerMemory] = field(default_factory=dict)

    @classmethod
    def zeros(cls, shapes: dict[str, tuple[int, int]]) -> "GradientMemory":
        return cls({k: LayerMemory(np.zeros(s), 0) for k, s in shapes.items()})

    def g_old(self, layer: str) -> np.ndarray:
        return self.layers[layer].g_old

    def tasks_seen(self, layer: str) -> int:
        return self.layers[layer].tasks_seen


def update_old(mem: GradientMemory, layer: str, g_new) -> GradientMemory:
    """Fold the newest task gradient into the running mean for ``layer``.

    With ``n`` tasks already seen the new mean is ``(n * g_old + g_new) / (n + 1)``.
    """
    entry = mem.layers[layer]
    g_new = np.asarray(g_new, dtype=np.float64)
    if g_new.shape != entry.g_old.shape:
        raise ShapeError(f"gradient {g_new.shape} does not match memory {entry.g_old.shape} for {layer}")
    n = entry.tasks_seen
    g = (n * entry.g_old + g_new) / (n + 1)
    layers = dict(mem.layers)
    layers[layer] = LayerMemory(g, n + 1)
    return GradientMemory(layers)


def compute_task_gradient(net: ToyNet, x, targets, layer_ids=None, loss: str = "ce",
                          batch_size: int = 256) -> dict[str, np.ndarray]:
    """Mean per-example gradient of the task loss w.r.t. each merged weight.

    Batches are visited in a fixed order and summed sequentially, so the
    result does not depend on ``batch_size`` beyond rounding. The network is
    not modified.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[1] if x.ndim == 2 else 0
    if n == 0:
        raise EmptyDataset("cannot compute a task gradient from an empty dataset")
    targets = np.asarray(targets)
    ids = net.layer_ids()
    wanted = ids if layer_ids is None else list(layer_ids)
    sums = {lid: np.zeros(net.layers[ids.index(lid)].shape) for lid in wanted}
    for start in range(0, n, batch_size):
        stop = min(start + batch_size, n)
        tb = targets[start:stop] if targets.ndim == 1 else targets[:, start:stop]
        g = net.loss_and_grads(x[:, start:stop], tb, loss=loss)
        for lid in wanted:
            sums[lid] += g.weights[ids.index(lid)] * (stop - start)
    return {lid: s / n for lid, s in sums.items()}


def save_memory(directory, mem: GradientMemory) -> None:
    directory = Path(directory)
    manifest = {}
    for layer, entry in mem.layers.items():
        write_matrix_csv(directory / f"{layer}.csv", entry.g_old)
        manifest[layer] = {"file": f"{layer}.csv", "tasks_seen": entry.tasks_seen,
                           "shape": list(entry.g_old.shape)}
    atomic_write_text(directory / "manifest.json", json.dumps({"layers": manifest}, indent=2) + "\n")


def load_memory(directory) -> GradientMemory:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    layers = {}
    for layer, e in manifest["layers"].items():
        g = read_matrix_csv(directory / e["file"]).reshape(e["shape"])
        layers[layer] = LayerMemory(g, int(e["tasks_seen"]))
    return GradientMemory(layers)
