"""Synthetic continual task streams and CSV import/export.

Every batch stores examples as columns: ``x`` has shape (d_in, n).
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyDataset, EmptyStream, InvalidLabels, ParseError
from .linalg import atomic_write_text


@dataclass
class Task:
    x_train: np.ndarray
    y_train: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray
    class_ids: tuple[int, ...]

    @property
    def d_in(self) -> int:
        return self.x_train.shape[0]


@dataclass
class TaskStream:
    tasks: list[Task]
    descriptor: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.tasks)

    def __iter__(self):
        return iter(self.tasks)

    @property
    def n_classes(self) -> int:
        return 1 + max(max(t.class_ids) for t in self.tasks)

    @property
    def class_incremental(self) -> bool:
        seen: set[int] = set()
        for t in self.tasks:
            if seen & set(t.class_ids):
                return False
            seen |= set(t.class_ids)
        return True


def _unit(rng, d):
    v = rng.standard_normal(d)
    return v / np.linalg.norm(v)


def _draw(rng, means, labels_per_class, n_per_class, noise):
    d = means.shape[1]
    xs, ys = [], []
    for mean, label in zip(means, labels_per_class):
        xs.append(mean[:, None] + noise * rng.standard_normal((d, n_per_class)))
        ys.append(np.full(n_per_class, label, dtype=np.int64))
    return np.hstack(xs), np.concatenate(ys)


def gen_gaussian_stream(T: int, classes_per_task: int, d_in: int, separation: float, seed: int,
                        n_train: int = 200, n_test: int = 200, noise: float = 1.0,
                        latent_dim: int | None = None) -> TaskStream:
    """Class-incremental stream of isotropic Gaussian blobs.

    Class ``c`` has mean ``separation * u_c`` for a random unit vector ``u_c``
    and covariance ``noise**2 * I``. With ``latent_dim`` set, every ``u_c`` is
    drawn inside one shared random subspace of that dimension, so tasks
    compete for the same input directions. Task ``t`` (0-based) owns classes
    ``t*classes_per_task .. (t+1)*classes_per_task - 1``. Train and test sets
    are independent draws from the same distribution.
    """
    if T < 1:
        raise EmptyStream("a stream needs at least one task")
    root = np.random.SeedSequence(seed)
    mean_rng, train_rng, test_rng = (np.random.default_rng(s) for s in root.spawn(3))
    n_cls = T * classes_per_task
    if latent_dim is None or latent_dim >= d_in:
        means = np.stack([separation * _unit(mean_rng, d_in) for _ in range(n_cls)])
    else:
        frame, _ = np.linalg.qr(mean_rng.standard_normal((d_in, latent_dim)))
        means = np.stack([separation * (frame @ _unit(mean_rng, latent_dim)) for _ in range(n_cls)])
    tasks = []
    for t in range(T):
        ids = list(range(t * classes_per_task, (t + 1) * classes_per_task))
        xtr, ytr = _draw(train_rng, means[ids], ids, n_train, noise)
        xte, yte = _draw(test_rng, means[ids], ids, n_test, noise)
        tasks.append(Task(xtr, ytr, xte, yte, tuple(ids)))
    descriptor = {"kind": "gaussian", "num_tasks": T, "classes_per_task": classes_per_task, "d_in": d_in,
                  "separation": separation, "seed": seed, "n_train": n_train, "n_test": n_test, "noise": noise,
                  "latent_dim": latent_dim}
    return TaskStream(tasks, descriptor)


def joint_task(stream: TaskStream) -> Task:
    """All tasks of ``stream`` pooled into one (the joint-training reference)."""
    if len(stream) == 0:
        raise EmptyStream("cannot pool an empty stream")
    ids = sorted(set().union(*(t.class_ids for t in stream.tasks)))
    return Task(np.hstack([t.x_train for t in stream.tasks]), np.concatenate([t.y_train for t in stream.tasks]),
                np.hstack([t.x_test for t in stream.tasks]), np.concatenate([t.y_test for t in stream.tasks]),
                tuple(ids))


def rotation_in_plane(d: int, p1: np.ndarray, p2: np.ndarray, angle: float) -> np.ndarray:
    """Rotation by ``angle`` radians in span(p1, p2); identity on its complement."""
    r = np.eye(d)
    c, s = np.cos(angle), np.sin(angle)
    r += (c - 1.0) * (np.outer(p1, p1) + np.outer(p2, p2))
    r += s * (np.outer(p2, p1) - np.outer(p1, p2))
    return r


def rotation_plane(d: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((d, 2)))
    return q[:, 0].copy(), q[:, 1].copy()


def gen_rotated_stream(T: int, base_task: Task, angle_step: float, seed: int) -> TaskStream:
    """Domain-incremental stream: task ``t`` (1-based) is ``base_task`` rotated by ``t * angle_step``.

    The rotation plane is drawn from ``seed``; labels are shared by all tasks.
    ``angle_step`` is in radians.
    """
    if T < 1:
        raise EmptyStream("a stream needs at least one task")
    d = base_task.d_in
    p1, p2 = rotation_plane(d, seed)
    tasks = []
    for t in range(1, T + 1):
        r = rotation_in_plane(d, p1, p2, t * angle_step)
        tasks.append(Task(r @ base_task.x_train, base_task.y_train.copy(), r @ base_task.x_test,
                          base_task.y_test.copy(), tuple(base_task.class_ids)))
    return TaskStream(tasks, {"kind": "rotated", "num_tasks": T, "angle_step": angle_step, "seed": seed})


# --- CSV ---------------------------------------------------------------------


def _parse_rows(text: str, path) -> tuple[np.ndarray, np.ndarray]:
    xs, ys = [], []
    width = None
    for lineno, rec in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not rec or all(not f.strip() for f in rec):
            continue
        if len(rec) < 2:
            raise ParseError("row needs at least one feature and a label", line=lineno, path=path)
        if width is None:
            width = len(rec)
        elif len(rec) != width:
            raise ParseError(f"expected {width} columns, got {len(rec)}", line=lineno, path=path)
        try:
            feats = [float(f) for f in rec[:-1]]
            label_f = float(rec[-1])
        except ValueError as exc:
            raise ParseError(f"non-numeric field ({exc})", line=lineno, path=path) from None
        if not np.all(np.isfinite(feats)) or label_f != int(label_f) or label_f < 0:
            raise ParseError("features must be finite and the label a nonnegative integer",
                             line=lineno, path=path)
        xs.append(feats)
        ys.append(int(label_f))
    if not xs:
        raise EmptyDataset(f"{path}: no data rows")
    return np.array(xs).T.copy(), np.array(ys, dtype=np.int64)


def load_csv_stream(manifest_path) -> TaskStream:
    """Load a stream from a manifest listing per-task train/test CSV files.

    Manifest: ``{"tasks": [{"train": "a.csv", "test": "b.csv"}, ...]}`` with
    paths relative to the manifest. Each CSV row is ``features..., label``.
    Labels over the whole stream must be exactly ``0..C-1``.
    """
    manifest_path = Path(manifest_path)
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno, path=manifest_path) from None
    entries = manifest.get("tasks", [])
    if not entries:
        raise EmptyStream(f"{manifest_path}: manifest lists no tasks")
    base = manifest_path.parent
    tasks = []
    d_in = None
    for e in entries:
        tr, te = base / e["train"], base / e["test"]
        xtr, ytr = _parse_rows(tr.read_text(), tr)
        xte, yte = _parse_rows(te.read_text(), te)
        for x, p in ((xtr, tr), (xte, te)):
            if d_in is None:
                d_in = x.shape[0]
            elif x.shape[0] != d_in:
                raise ParseError(f"expected {d_in} features, got {x.shape[0]}", path=p)
        ids = tuple(int(c) for c in np.unique(np.concatenate([ytr, yte])))
        tasks.append(Task(xtr, ytr, xte, yte, ids))
    labels = sorted(set().union(*(t.class_ids for t in tasks)))
    if labels != list(range(len(labels))):
        missing = sorted(set(range(labels[-1] + 1)) - set(labels))
        raise InvalidLabels(f"labels must be contiguous from 0; missing {missing}")
    return TaskStream(tasks, {"kind": "csv", "manifest": str(manifest_path)})


def _format_rows(x: np.ndarray, y: np.ndarray) -> str:
    buf = io.StringIO()
    for j in range(x.shape[1]):
        buf.write(",".join(repr(float(v)) for v in x[:, j]))
        buf.write(f",{int(y[j])}\n")
    return buf.getvalue()


def export_csv_stream(stream: TaskStream, directory) -> Path:
    """Write ``stream`` as CSV files plus a manifest; return the manifest path."""
    directory = Path(directory)
    entries = []
    for i, t in enumerate(stream.tasks, start=1):
        names = {"train": f"task{i}_train.csv", "test": f"task{i}_test.csv"}
        atomic_write_text(directory / names["train"], _format_rows(t.x_train, t.y_train))
        atomic_write_text(directory / names["test"], _format_rows(t.x_test, t.y_test))
        entries.append(names)
    path = directory / "stream.json"
    atomic_write_text(path, json.dumps({"tasks": entries, "descriptor": stream.descriptor}, indent=2) + "\n")
    return path


def stream_from_config(cfg: dict) -> TaskStream:
    kind = cfg.get("kind", "gaussian")
    if kind == "gaussian":
        return gen_gaussian_stream(cfg["num_tasks"], cfg["classes_per_task"], cfg["d_in"], cfg["separation"],
                                   cfg["seed"], n_train=cfg.get("n_train", 200), n_test=cfg.get("n_test", 200),
                                   noise=cfg.get("noise", 1.0), latent_dim=cfg.get("latent_dim"))
    if kind == "rotated":
        base = gen_gaussian_stream(1, cfg["classes_per_task"], cfg["d_in"], cfg["separation"], cfg["seed"],
                                   n_train=cfg.get("n_train", 200), n_test=cfg.get("n_test", 200),
                                   noise=cfg.get("noise", 1.0)).tasks[0]
        return gen_rotated_stream(cfg["num_tasks"], base, np.deg2rad(cfg.get("angle_step_deg", 15.0)),
                                  cfg["seed"])
    if kind == "csv":
        return load_csv_stream(cfg["manifest"])
    raise ValueError(f"unknown stream kind {kind!r}")
