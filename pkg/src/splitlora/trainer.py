"""Sequential training over a task stream with subspace-confined LoRA updates.

Per task ``t``: choose each layer's adapter down-projection (random for the
first task or the baselines, otherwise confined to the minor subspace of the
gradient memory), train only the new ``b`` factors and the head, evaluate all
seen tasks, then fold the task's mean gradient into the memory.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from . import metrics
from .errors import DegenerateSpectrum, EmptyStream, ProtocolError
from .gradmem import GradientMemory, compute_task_gradient, update_old
from .lora import init_a_projected, init_a_random, new_adapter
from .linalg import frobenius_inner
from .network import ToyNet, accuracy, cross_entropy
from .optim import AdamW
from .subspace import (SolverConfig, epsilon, minor_basis, partition, solve_k_split,
                       solve_k_threshold)
from .tasks import Task, TaskStream, gen_gaussian_stream

log = logging.getLogger(__name__)

METHODS = ("split", "threshold", "plain-lora", "head-only")
HEAD_MODES = ("current", "all")
LOGIT_MODES = ("seen", "current")


@dataclass
class NetworkConfig:
    width: int = 64
    depth: int = 3
    activation: str = "tanh"
    init_gain: float = 1.0
    pretrain_epochs: int = 0
    pretrain_classes: int = 8
    pretrain_lr: float = 1e-3


@dataclass
class TrainConfig:
    method: str = "split"
    epochs: int = 10
    lr_b: float = 1e-3
    lr_head: float = 1e-2
    batch_size: int = 32
    alpha: float = 20.0
    tau: float = 0.02
    rank: int = 10
    weight_decay: float = 0.0
    head_train: str = "current"
    train_logits: str = "seen"
    check_confinement: bool = True
    trace_alpha: bool = False
    grad_batch_size: int = 256

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.head_train not in HEAD_MODES:
            raise ValueError(f"head_train must be one of {HEAD_MODES}, got {self.head_train!r}")
        if self.train_logits not in LOGIT_MODES:
            raise ValueError(f"train_logits must be one of {LOGIT_MODES}, got {self.train_logits!r}")
        if self.lr_b <= 0 or self.lr_head <= 0:
            raise ValueError(f"lr_b and lr_head must be positive, got {self.lr_b} and {self.lr_head}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        for name in ("batch_size", "rank", "grad_batch_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        SolverConfig(alpha=self.alpha, tau=self.tau)


@dataclass
class LayerPartition:
    layer: str
    t: int
    sigma: list[float]
    k_split: int | None
    k_threshold: int | None
    k_used: int
    epsilon_at_k: float | None


@dataclass
class TaskReport:
    task: int
    k: dict[str, int]
    partitions: list[LayerPartition]
    epoch_losses: list[float]
    steps: int
    confinement: dict[str, float | None]
    current_accuracy: float | None = None
    within_task_accuracy: float | None = None
    alpha_trace: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def _checksum(arrays) -> str:
    h = hashlib.sha256()
    for a in arrays:
        h.update(np.ascontiguousarray(a).tobytes())
    return h.hexdigest()


class ContinualTrainer:
    """Owns the network, gradient memory and optimizer state for one run."""

    def __init__(self, net: ToyNet, cfg: TrainConfig, seed: int = 0):
        self.net = net
        self.cfg = cfg
        seq = np.random.SeedSequence([seed, 0x5EED])
        a_seq, shuffle_seq = seq.spawn(2)
        self._a_rng = np.random.default_rng(a_seq)
        self._shuffle_rng = np.random.default_rng(shuffle_seq)
        self.mem = GradientMemory.zeros({lid: l.shape for lid, l in zip(net.layer_ids(), net.layers)})
        self.next_task = 1
        self._bases: dict[str, np.ndarray | None] = {}

    def frozen_checksum(self) -> str:
        """Digest of every matrix that must not change once training of the current task starts."""
        arrays = []
        for layer in self.net.layers:
            arrays += [layer.w0, layer.bias]
            for ad in layer.adapters:
                arrays.append(ad.a)
            for ad in layer.adapters[:-1]:
                arrays.append(ad.b)
        return _checksum(arrays)

    # -- adapter placement -------------------------------------------------

    def _place_adapters(self, t: int) -> list[LayerPartition]:
        cfg = self.cfg
        parts = []
        self._bases = {}
        if cfg.method == "head-only":
            return parts
        for lid, layer in zip(self.net.layer_ids(), self.net.layers):
            d_out, d_in = layer.shape
            basis = None
            k_used = d_out
            if t > 1 and cfg.method in ("split", "threshold"):
                g_old = self.mem.g_old(lid)
                res = partition(g_old)
                sigma = res.full_spectrum()
                try:
                    k_split = solve_k_split(sigma, SolverConfig(cfg.alpha, cfg.tau, t))
                    k_thr = solve_k_threshold(sigma, cfg.tau)
                except DegenerateSpectrum:
                    # nothing to protect in this layer: unconstrained update
                    log.info("task %d %s: zero gradient memory, using random A", t, lid)
                    parts.append(LayerPartition(lid, t, sigma.tolist(), None, None, d_out, None))
                    a = init_a_random(d_out, cfg.rank, self._a_rng)
                else:
                    k_used = k_split if cfg.method == "split" else max(1, k_thr)
                    sub = minor_basis(res, k_used)
                    basis = sub.basis
                    a = init_a_projected(sub, cfg.rank, self._a_rng)
                    parts.append(LayerPartition(lid, t, sigma.tolist(), k_split, k_thr, k_used,
                                                epsilon(sigma, k_used)))
            else:
                a = init_a_random(d_out, cfg.rank, self._a_rng)
            layer.adapters.append(new_adapter(a, d_in, task=t, k=k_used))
            self._bases[lid] = basis
        return parts

    def _confinement(self) -> dict[str, float | None]:
        out = {}
        for lid, layer in zip(self.net.layer_ids(), self.net.layers):
            basis = self._bases.get(lid)
            if basis is None or not layer.adapters:
                out[lid] = None
                continue
            dw = layer.adapters[-1].delta()
            resid = dw - basis @ (basis.T @ dw)
            out[lid] = float(np.linalg.norm(resid) / max(1.0, np.linalg.norm(dw)))
        return out

    # -- training ----------------------------------------------------------

    def train_task(self, task: Task, t: int) -> TaskReport:
        if t != self.next_task:
            raise ProtocolError(f"expected task {self.next_task}, got task {t}")
        cfg = self.cfg
        net = self.net
        net.grow_head(1 + max(task.class_ids))
        parts = self._place_adapters(t)
        k = {p.layer: p.k_used for p in parts}

        opt_b = AdamW(cfg.lr_b, weight_decay=cfg.weight_decay)
        opt_head = AdamW(cfg.lr_head)
        rows = np.array(sorted(task.class_ids)) if cfg.head_train == "current" else np.arange(net.n_classes)
        head_w = net.head_w[rows].copy()
        head_b = net.head_b[rows].copy()

        task_rows = np.array(sorted(task.class_ids))
        remap = np.zeros(net.n_classes, dtype=np.int64)
        remap[task_rows] = np.arange(task_rows.size)
        n = task.x_train.shape[1]
        confinement: dict[str, float | None] = {lid: None for lid in net.layer_ids()}
        epoch_losses = []
        steps = 0
        alpha_trace = []
        for _ in range(cfg.epochs):
            order = self._shuffle_rng.permutation(n)
            total = 0.0
            for start in range(0, n, cfg.batch_size):
                idx = order[start:start + cfg.batch_size]
                xb, yb = task.x_train[:, idx], task.y_train[idx]
                logits, cache = net.forward(xb)
                if cfg.train_logits == "current":
                    value, dsub = cross_entropy(logits[task_rows], remap[yb])
                    dlogits = np.zeros_like(logits)
                    dlogits[task_rows] = dsub
                else:
                    value, dlogits = cross_entropy(logits, yb)
                grads = net.backward(cache, dlogits)
                total += value * idx.size
                before = [l.effective_weight() for l in net.layers] if cfg.trace_alpha else None
                for l, (layer, gb) in enumerate(zip(net.layers, grads.b_current)):
                    if gb is not None and layer.adapters and layer.adapters[-1].task == t:
                        opt_b.step(f"b{l}", layer.adapters[-1].b, gb)
                opt_head.step("head_w", head_w, grads.head_w[rows])
                opt_head.step("head_b", head_b, grads.head_b[rows])
                net.head_w[rows] = head_w
                net.head_b[rows] = head_b
                steps += 1
                if cfg.check_confinement:
                    for lid, r in self._confinement().items():
                        if r is not None:
                            confinement[lid] = r if confinement[lid] is None else max(confinement[lid], r)
                if cfg.trace_alpha:
                    alpha_trace.append(self._alpha_record(t, steps, before, grads))
            epoch_losses.append(total / n)

        report = TaskReport(t, k, parts, epoch_losses, steps, confinement, alpha_trace=alpha_trace)
        report.current_accuracy = accuracy(net, task.x_test, task.y_test)
        report.within_task_accuracy = accuracy(net, task.x_test, task.y_test, classes=task.class_ids)

        g_new = compute_task_gradient(net, task.x_train, task.y_train, batch_size=cfg.grad_batch_size)
        for lid, g in g_new.items():
            self.mem = update_old(self.mem, lid, g)
        self.next_task += 1
        return report

    def _alpha_record(self, t, step, before, grads) -> dict:
        from .theory import alpha_estimate

        rec = {"step": step}
        for l, (lid, layer) in enumerate(zip(self.net.layer_ids(), self.net.layers)):
            # the optimizer moved W by (after - before); the descent step is its negation
            descent = before[l] - layer.effective_weight()
            est = alpha_estimate(descent, grads.weights[l], self.mem.g_old(lid)) if t > 1 else None
            rec[lid] = {"alpha_hat": est, "descent_inner": frobenius_inner(descent, grads.weights[l])}
        return rec


def pretrain_backbone(net: ToyNet, cfg: NetworkConfig, seed: int) -> None:
    """Fit the backbone weights on a held-out generic task, then discard its head."""
    if cfg.pretrain_epochs <= 0:
        return
    stream = gen_gaussian_stream(1, cfg.pretrain_classes, net.d_in, 3.0, seed=seed + 7919)
    task = stream.tasks[0]
    rng = np.random.default_rng([seed, 0xBAC])
    head_w = np.zeros((cfg.pretrain_classes, net.layers[-1].shape[0]))
    head_b = np.zeros(cfg.pretrain_classes)
    saved = net.head_w, net.head_b
    net.head_w, net.head_b = head_w, head_b
    opt = AdamW(cfg.pretrain_lr)
    n = task.x_train.shape[1]
    for _ in range(cfg.pretrain_epochs):
        order = rng.permutation(n)
        for start in range(0, n, 32):
            idx = order[start:start + 32]
            g = net.loss_and_grads(task.x_train[:, idx], task.y_train[idx])
            for l, layer in enumerate(net.layers):
                opt.step(f"w{l}", layer.w0, g.weights[l])
            opt.step("hw", net.head_w, g.head_w)
            opt.step("hb", net.head_b, g.head_b)
    net.head_w, net.head_b = saved


@dataclass
class RunResult:
    seed: int
    method: str
    accuracy: metrics.AccuracyMatrix
    reports: list[TaskReport]
    net: ToyNet = field(repr=False)
    memory: GradientMemory = field(repr=False)

    @property
    def summary(self) -> dict[str, float]:
        return metrics.summarize(self.accuracy)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "method": self.method,
            "accuracy_matrix": self.accuracy.to_list(),
            **self.summary,
            "k_per_task": [r.k for r in self.reports],
            "tasks": [r.to_dict() for r in self.reports],
        }


def build_network(stream: TaskStream, net_cfg: NetworkConfig, seed: int) -> ToyNet:
    net = ToyNet.create(stream.tasks[0].d_in, net_cfg.width, net_cfg.depth, net_cfg.activation,
                        seed=np.random.default_rng([seed, 0x4E7]), gain=net_cfg.init_gain)
    pretrain_backbone(net, net_cfg, seed)
    return net


def run_stream(stream: TaskStream, cfg: TrainConfig, seed: int = 0,
               net_cfg: NetworkConfig | None = None, net: ToyNet | None = None) -> RunResult:
    """Train on every task in order, evaluating all seen tasks after each one."""
    if len(stream) == 0:
        raise EmptyStream("cannot run an empty stream")
    net_cfg = net_cfg or NetworkConfig()
    if net is None:
        net = build_network(stream, net_cfg, seed)
    trainer = ContinualTrainer(net, cfg, seed)
    T = len(stream)
    acc = metrics.AccuracyMatrix.empty(T)
    reports = []
    for t, task in enumerate(stream.tasks, start=1):
        report = trainer.train_task(task, t)
        for i in range(1, t + 1):
            prev = stream.tasks[i - 1]
            acc.set(i, t, accuracy(net, prev.x_test, prev.y_test))
        reports.append(report)
        log.debug("seed %d task %d: k=%s acc=%s", seed, t, report.k, acc.values[:t, t - 1])
    return RunResult(seed, cfg.method, acc, reports, net, trainer.mem)
