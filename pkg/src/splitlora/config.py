"""Experiment configuration: a JSON document with one section per component.

Example (every key optional; omitted keys take the defaults below)::

    {
      "tasks":    {"kind": "gaussian", "num_tasks": 5, ...},
      "network":  {"width": 64, "depth": 3, ...},
      "lora":     {"rank": 10, "lr_b": 0.001, "weight_decay": 0.0},
      "subspace": {"alpha": 20.0, "tau": 0.02},
      "trainer":  {"method": "split", "epochs": 10, ...},
      "seeds":    [0, 1, 2, 3, 4]
    }

Validation errors carry the line of the offending key.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .errors import ConfigError
from .trainer import NetworkConfig, TrainConfig

TASK_DEFAULTS = {
    "kind": "gaussian",
    "num_tasks": 5,
    "classes_per_task": 4,
    "d_in": 32,
    "separation": 5.0,
    "noise": 1.0,
    "latent_dim": None,
    "n_train": 200,
    "n_test": 200,
    "angle_step_deg": 15.0,
    "manifest": None,
    "seed": None,
}
LORA_KEYS = ("rank", "lr_b", "weight_decay")
SUBSPACE_KEYS = ("alpha", "tau")
SECTIONS = ("tasks", "network", "lora", "subspace", "trainer", "seeds")


@dataclass
class ExperimentConfig:
    tasks: dict = field(default_factory=lambda: dict(TASK_DEFAULTS))
    network: NetworkConfig = field(default_factory=NetworkConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])

    def stream_config(self, seed: int) -> dict:
        """Task-stream settings for one run; the stream seed follows the run seed unless pinned."""
        cfg = dict(self.tasks)
        if cfg.get("seed") is None:
            cfg["seed"] = seed
        return cfg

    def with_alpha(self, alpha: float) -> "ExperimentConfig":
        return replace(self, train=replace(self.train, alpha=float(alpha)))

    def with_seeds(self, seeds) -> "ExperimentConfig":
        return replace(self, seeds=list(seeds))

    def to_dict(self) -> dict:
        """Sectioned form; loading it again yields an equal config."""
        train = asdict(self.train)
        return {
            "tasks": dict(self.tasks),
            "network": asdict(self.network),
            "lora": {k: train.pop(k) for k in LORA_KEYS},
            "subspace": {k: train.pop(k) for k in SUBSPACE_KEYS},
            "trainer": train,
            "seeds": list(self.seeds),
        }

    def content_hash(self) -> str:
        return hashlib.sha256(canonical_json(self.to_dict()).encode()).hexdigest()


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _key_line(text: str, section: str | None, key: str) -> int | None:
    """Line of ``"key"`` (searching after ``"section"`` when given), 1-based."""
    start = 0
    if section is not None:
        m = re.search(rf'"{re.escape(section)}"\s*:', text)
        if m is None:
            return None
        start = m.end()
    m = re.compile(rf'"{re.escape(key)}"\s*:').search(text, start)
    if m is None:
        return None
    return text.count("\n", 0, m.start()) + 1


def _fail(text, section, key, message):
    raise ConfigError(message, line=_key_line(text, section, key) if key else None)


def _check_keys(text, section, given: dict, allowed) -> None:
    for key in given:
        if key not in allowed:
            _fail(text, section, key, f"unknown key {key!r} in section {section!r}")


def _check_types(text, section, given: dict, defaults) -> None:
    for key, value in given.items():
        default = getattr(defaults, key)
        if isinstance(default, bool):
            ok = isinstance(value, bool)
        elif isinstance(default, int):
            ok = isinstance(value, int) and not isinstance(value, bool)
        elif isinstance(default, float):
            ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        elif isinstance(default, str):
            ok = isinstance(value, str)
        else:
            ok = True
        if not ok:
            _fail(text, section, key, f"{key} must be of type {type(default).__name__}, got {value!r}")


def parse_config(text: str) -> ExperimentConfig:
    """Validate and resolve a configuration document."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", line=exc.lineno) from None
    if not isinstance(raw, dict):
        raise ConfigError("top level must be a JSON object", line=1)
    for key in raw:
        if key not in SECTIONS:
            _fail(text, None, key, f"unknown section {key!r}")
    for sec in SECTIONS[:-1]:
        if not isinstance(raw.get(sec, {}), dict):
            _fail(text, None, sec, f"section {sec!r} must be an object")

    tasks = dict(TASK_DEFAULTS)
    _check_keys(text, "tasks", raw.get("tasks", {}), TASK_DEFAULTS)
    tasks.update(raw.get("tasks", {}))
    if tasks["kind"] not in ("gaussian", "rotated", "csv"):
        _fail(text, "tasks", "kind", f"unknown stream kind {tasks['kind']!r}")
    if tasks["kind"] == "csv" and not tasks["manifest"]:
        _fail(text, "tasks", "kind", "a csv stream needs a 'manifest' path")
    for key in ("num_tasks", "classes_per_task", "d_in", "n_train", "n_test"):
        if not isinstance(tasks[key], int) or isinstance(tasks[key], bool) or tasks[key] < 1:
            _fail(text, "tasks", key, f"{key} must be a positive integer")
    if tasks["latent_dim"] is not None and (not isinstance(tasks["latent_dim"], int) or tasks["latent_dim"] < 1):
        _fail(text, "tasks", "latent_dim", "latent_dim must be a positive integer or null")
    for key in ("separation", "noise"):
        if not isinstance(tasks[key], (int, float)) or tasks[key] < 0:
            _fail(text, "tasks", key, f"{key} must be a nonnegative number")

    net_fields = {f.name for f in fields(NetworkConfig)}
    _check_keys(text, "network", raw.get("network", {}), net_fields)
    _check_types(text, "network", raw.get("network", {}), NetworkConfig())
    network = NetworkConfig(**raw.get("network", {}))
    if network.activation not in ("tanh", "relu", "identity"):
        _fail(text, "network", "activation", f"unknown activation {network.activation!r}")
    if network.width < 1 or network.depth < 1:
        _fail(text, "network", "width" if network.width < 1 else "depth", "width and depth must be >= 1")

    train_fields = {f.name for f in fields(TrainConfig)}
    trainer_keys = train_fields - set(LORA_KEYS) - set(SUBSPACE_KEYS)
    merged = {}
    for sec, allowed in (("lora", LORA_KEYS), ("subspace", SUBSPACE_KEYS), ("trainer", trainer_keys)):
        _check_keys(text, sec, raw.get(sec, {}), allowed)
        _check_types(text, sec, raw.get(sec, {}), TrainConfig())
        merged.update({k: (sec, v) for k, v in raw.get(sec, {}).items()})
    try:
        train = TrainConfig(**{k: v for k, (_, v) in merged.items()})
    except (ValueError, TypeError) as exc:
        msg = str(exc)
        culprit = next(((sec, k) for k, (sec, _) in merged.items() if k in msg), (None, None))
        _fail(text, culprit[0], culprit[1], msg)

    seeds = raw.get("seeds", [0, 1, 2, 3, 4])
    if (not isinstance(seeds, list) or not seeds
            or not all(isinstance(s, int) and not isinstance(s, bool) and s >= 0 for s in seeds)):
        _fail(text, None, "seeds", "seeds must be a non-empty list of nonnegative integers")
    if len(set(seeds)) != len(seeds):
        _fail(text, None, "seeds", "seeds must not repeat")
    return ExperimentConfig(tasks, network, train, list(seeds))


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    cfg = parse_config(text)
    if cfg.tasks["kind"] == "csv":
        manifest = Path(cfg.tasks["manifest"])
        if not manifest.is_absolute():
            cfg.tasks["manifest"] = str(path.parent / manifest)
    return cfg
