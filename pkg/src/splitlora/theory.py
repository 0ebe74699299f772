"""Numerical probes of the loss bound, the expected-loss identities and gradient drift.

Conventions used throughout:

* A *step* ``D`` is the descent step, so new weights are ``W - D``. Under
  this convention the summed multi-task loss change is bounded by
  ``-(t-1)<D, G_old> - <D, G_t> + (t-1) L / 2 ||D||^2`` where ``G_old`` is
  the mean gradient of the old tasks at the starting point and ``G_t`` the
  current task's gradient at the end point.
* Quadratic losses act on ``vec(W)`` (row-major) through a symmetric PSD
  matrix, so their smoothness constant is its largest eigenvalue.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DegenerateSpectrum, InvalidK
from .linalg import frobenius_inner, frobenius_norm, svd
from .network import ToyNet
from .subspace import epsilon


@dataclass(frozen=True)
class TheoryProbeConfig:
    """Sizes, trial counts and tolerances for every probe.

    ``tolerance_scale`` multiplies every tolerance at once; 0 demands exact
    agreement and is expected to fail on floating-point noise.
    """

    max_dim: int = 4
    prop_trials: int = 1000
    prop_slack: float = 1e-9
    thm_dims: tuple[int, ...] = (4, 6, 12)
    thm_rtol: float = 1e-8
    etas: tuple[float, ...] = tuple(float(v) for v in np.logspace(-4, -1, 7))
    slope_tol: float = 0.1
    network_etas: tuple[float, ...] = tuple(float(v) for v in np.logspace(-5, -3, 5))
    seed: int = 0
    tolerance_scale: float = 1.0

    def __post_init__(self):
        if not 1 <= self.max_dim <= 16:
            raise ValueError(f"max_dim must lie in [1, 16], got {self.max_dim}")
        if self.prop_trials < 1:
            raise ValueError("prop_trials must be >= 1")
        if self.tolerance_scale < 0:
            raise ValueError("tolerance_scale must be >= 0")
        if any(d > 16 or d < 1 for d in self.thm_dims):
            raise ValueError("thm_dims entries must lie in [1, 16]")


# --- quadratic losses --------------------------------------------------------


@dataclass
class Quadratic:
    """``0.5 * (w - c)^T H (w - c)`` on ``vec(W)`` for a (d1, d2) weight."""

    h: np.ndarray
    center: np.ndarray

    @property
    def shape(self):
        return self.center.shape

    def value(self, w) -> float:
        r = (np.asarray(w) - self.center).reshape(-1)
        return 0.5 * float(r @ self.h @ r)

    def grad(self, w) -> np.ndarray:
        r = (np.asarray(w) - self.center).reshape(-1)
        return (self.h @ r).reshape(self.shape)

    def hess_apply(self, v) -> np.ndarray:
        return (self.h @ np.asarray(v).reshape(-1)).reshape(self.shape)

    @property
    def smoothness(self) -> float:
        return float(np.linalg.eigvalsh(self.h)[-1])


def random_quadratic(rng: np.random.Generator, d1: int, d2: int, max_curvature: float = 5.0) -> Quadratic:
    n = d1 * d2
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    lam = rng.uniform(0.0, max_curvature, n)
    h = (q * lam) @ q.T
    h = 0.5 * (h + h.T)
    return Quadratic(h, rng.standard_normal((d1, d2)))


# --- loss-increase bound -----------------------------------------------------


def bound_sides(losses: list[Quadratic], w_prev, step, smoothness: float) -> tuple[float, float]:
    """Left and right side of the summed loss-change bound for one step.

    ``losses[-1]`` is the current task; the others are the old tasks.
    """
    t = len(losses)
    if t < 2:
        raise ValueError("the bound needs at least one old task (t >= 2)")
    w_prev = np.asarray(w_prev, dtype=np.float64)
    step = np.asarray(step, dtype=np.float64)
    w_new = w_prev - step
    lhs = math.fsum(q.value(w_new) - q.value(w_prev) for q in losses)
    g_old = sum(q.grad(w_prev) for q in losses[:-1]) / (t - 1)
    g_t = losses[-1].grad(w_new)
    rhs = (-(t - 1) * frobenius_inner(step, g_old) - frobenius_inner(step, g_t)
           + 0.5 * (t - 1) * smoothness * frobenius_norm(step) ** 2)
    return lhs, rhs


def check_prop1(cfg: TheoryProbeConfig = TheoryProbeConfig()) -> dict:
    """Probe the loss-increase bound on random convex quadratic task sets.

    Each trial draws t in 2..6 tasks on a (d1, d2) weight with d1, d2 <=
    ``max_dim``, the exact smoothness constant, a start point and a step of
    random scale. Trial 0 uses a zero step.
    """
    rng = np.random.default_rng([cfg.seed, 0x41])
    slack = cfg.prop_slack * cfg.tolerance_scale
    violations = 0
    min_margin = math.inf
    for trial in range(cfg.prop_trials):
        d1, d2 = (int(v) for v in rng.integers(1, cfg.max_dim + 1, 2))
        t = int(rng.integers(2, 7))
        losses = [random_quadratic(rng, d1, d2) for _ in range(t)]
        smooth = max(q.smoothness for q in losses)
        w_prev = rng.standard_normal((d1, d2))
        scale = 0.0 if trial == 0 else 10.0 ** rng.uniform(-3, 1)
        step = scale * rng.standard_normal((d1, d2))
        lhs, rhs = bound_sides(losses, w_prev, step, smooth)
        margin = rhs - lhs
        min_margin = min(min_margin, margin)
        if lhs > rhs + slack:
            violations += 1
    return {"name": "loss_bound", "trials": cfg.prop_trials, "violations": violations,
            "min_margin": min_margin, "slack": slack, "passed": violations == 0}


# --- expected stability and plasticity losses ---------------------------------


def equal_projection_update(g_old, c: float = 1.0) -> np.ndarray:
    """``c * sum_i u_i v_i^T`` over the singular pairs of ``g_old``.

    Every singular direction of ``g_old`` receives the same projection ``c``.
    """
    res = svd(g_old)
    return c * (res.u @ res.vt)


def equal_contribution_update(frame, g_t, c: float = 1.0) -> np.ndarray:
    """``sum_i u_i w_i^T`` whose inner product with ``g_t`` is ``c`` along every column of ``frame``.

    ``w_i = c * beta_i / ||beta_i||^2`` with ``beta_i = g_t^T u_i``.
    """
    frame = np.asarray(frame, dtype=np.float64)
    beta = np.asarray(g_t, dtype=np.float64).T @ frame
    norms = np.sum(beta * beta, axis=0)
    if np.any(norms == 0):
        raise DegenerateSpectrum("current gradient has no component along some frame direction")
    return frame @ (c * beta / norms).T


def expected_losses(g_old, g_t, k: int, task_index: int, c: float = 1.0) -> dict:
    """Measured and predicted stability and plasticity losses at minor size ``k``.

    The stability side projects the equal-projection update built from
    ``g_old`` onto its last ``k`` left singular vectors; the plasticity side
    projects the equal-contribution update, built in the same frame, and
    measures it against ``g_t``. For square full-rank ``g_old`` both
    measurements equal their closed forms up to rounding.
    """
    g_old = np.asarray(g_old, dtype=np.float64)
    g_t = np.asarray(g_t, dtype=np.float64)
    res = svd(g_old, full_left=True)
    d = res.u.shape[0]
    if not 0 <= k <= d:
        raise InvalidK(f"k={k} outside [0, {d}]")
    spectrum = res.full_spectrum()
    if float(np.sum(spectrum)) <= 0:
        raise DegenerateSpectrum("g_old is zero")
    u_k = res.u[:, d - k:]

    dw_s = equal_projection_update(g_old, c)
    stab_measured = -(task_index - 1) * frobenius_inner(u_k @ (u_k.T @ dw_s), g_old)
    stab_predicted = -(task_index - 1) * epsilon(spectrum, k) * frobenius_inner(dw_s, g_old)

    dw_p = equal_contribution_update(res.u, g_t, c)
    plas_measured = -frobenius_inner(u_k @ (u_k.T @ dw_p), g_t)
    plas_predicted = -(k / d) * frobenius_inner(dw_p, g_t)
    return {"stability": (stab_measured, stab_predicted), "plasticity": (plas_measured, plas_predicted)}


def _rel_err(a: float, b: float) -> float:
    return abs(a - b) / max(1.0, abs(b))


def check_expected_losses(cfg: TheoryProbeConfig = TheoryProbeConfig()) -> dict:
    """Closed-form expected losses against direct measurement for every k."""
    rng = np.random.default_rng([cfg.seed, 0x42])
    rtol = cfg.thm_rtol * cfg.tolerance_scale
    worst = 0.0
    cases = 0
    for d in cfg.thm_dims:
        g_old = rng.standard_normal((d, d))
        g_t = rng.standard_normal((d, d))
        t = int(rng.integers(2, 7))
        for k in range(d + 1):
            out = expected_losses(g_old, g_t, k, t, c=float(rng.uniform(0.5, 2.0)))
            for measured, predicted in out.values():
                worst = max(worst, _rel_err(measured, predicted))
                cases += 1
    return {"name": "expected_losses", "cases": cases, "max_rel_error": worst, "rtol": rtol,
            "passed": worst <= rtol}


# --- gradient drift under orthogonal updates ---------------------------------


def orthogonal_direction(grad, rng: np.random.Generator) -> np.ndarray:
    """Unit-norm random direction with zero inner product with ``grad`` (one Gram-Schmidt step)."""
    grad = np.asarray(grad, dtype=np.float64)
    v = rng.standard_normal(grad.shape)
    gn = frobenius_norm(grad)
    if gn > 0:
        v = v - frobenius_inner(v, grad) / gn ** 2 * grad
    return v / frobenius_norm(v)


def drift_curve(grad_fn, w, direction, etas) -> np.ndarray:
    """``||grad_fn(w - eta * direction) - grad_fn(w)||_F`` for each eta."""
    w = np.asarray(w, dtype=np.float64)
    g0 = grad_fn(w)
    return np.array([frobenius_norm(grad_fn(w - eta * direction) - g0) for eta in etas])


def loglog_slope(etas, drifts) -> float:
    etas = np.asarray(etas, dtype=np.float64)
    drifts = np.asarray(drifts, dtype=np.float64)
    if np.any(etas <= 0) or np.any(drifts <= 0):
        raise ValueError("log-log slope needs positive step sizes and drifts")
    return float(np.polyfit(np.log(etas), np.log(drifts), 1)[0])


def check_lemma_a1(cfg: TheoryProbeConfig = TheoryProbeConfig()) -> dict:
    """Gradient drift along a gradient-orthogonal direction on a quadratic loss."""
    rng = np.random.default_rng([cfg.seed, 0x43])
    d1, d2 = cfg.max_dim, cfg.max_dim
    q = random_quadratic(rng, d1, d2)
    w = rng.standard_normal((d1, d2))
    g = orthogonal_direction(q.grad(w), rng)
    drift0 = float(drift_curve(q.grad, w, g, [0.0])[0])
    drifts = drift_curve(q.grad, w, g, cfg.etas)
    analytic = np.array(cfg.etas) * frobenius_norm(q.hess_apply(g))
    slope = loglog_slope(cfg.etas, drifts)
    tol = cfg.slope_tol * cfg.tolerance_scale
    return {"name": "gradient_drift", "slope": slope, "slope_tol": tol, "drift_at_zero": drift0,
            "max_rel_error_vs_analytic": float(np.max(np.abs(drifts - analytic) / analytic)),
            "orthogonality": frobenius_inner(q.grad(w), g),
            "passed": drift0 == 0.0 and abs(slope - 1.0) <= tol}


def network_grad_fn(net: ToyNet, x, targets, layer: int, loss: str = "ce"):
    """Gradient of a task loss w.r.t. one layer's frozen weight, as a function of that weight."""
    target_layer = net.layers[layer]

    def grad(w):
        saved = target_layer.w0
        target_layer.w0 = np.asarray(w, dtype=np.float64)
        try:
            return net.loss_and_grads(x, targets, loss=loss).weights[layer]
        finally:
            target_layer.w0 = saved

    return grad


def check_lemma_a1_network(net: ToyNet, x, targets, layer: int = 0, etas=None, seed: int = 0,
                           loss: str = "ce", slope_tol: float = 0.1) -> dict:
    """Drift curve on a network layer; first order in eta for small eta."""
    etas = TheoryProbeConfig().network_etas if etas is None else tuple(etas)
    rng = np.random.default_rng([seed, 0x44])
    fn = network_grad_fn(net, x, targets, layer, loss)
    w = net.layers[layer].w0.copy()
    g = orthogonal_direction(fn(w), rng)
    drift0 = float(drift_curve(fn, w, g, [0.0])[0])
    drifts = drift_curve(fn, w, g, etas)
    slope = loglog_slope(etas, drifts)
    return {"name": "gradient_drift_network", "slope": slope, "slope_tol": slope_tol, "drift_at_zero": drift0,
            "passed": drift0 == 0.0 and abs(slope - 1.0) <= slope_tol}


# --- diagnostics -------------------------------------------------------------


def alpha_estimate(step, g_t, g_old) -> float | None:
    """``-<D, G_t> / <D, G_old>`` for a descent step ``D``; None when ``D`` is orthogonal to ``G_old``.

    The ratio does not depend on the sign convention of ``D``.
    """
    den = frobenius_inner(step, g_old)
    if den == 0.0:
        return None
    return -frobenius_inner(step, g_t) / den


def estimate_smoothness(hvp, shape, iters: int = 100, seed: int = 0, rtol: float = 1e-10) -> float:
    """Largest-magnitude Hessian eigenvalue by power iteration on ``hvp(v)``."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(shape)
    v /= frobenius_norm(v)
    lam = 0.0
    for _ in range(iters):
        hv = hvp(v)
        norm = frobenius_norm(hv)
        if norm == 0.0:
            return 0.0
        new = frobenius_inner(v, hv)
        v = hv / norm
        if abs(new - lam) <= rtol * max(1.0, abs(new)):
            return abs(new)
        lam = new
    return abs(lam)


def finite_difference_hvp(grad_fn, w, h: float = 1e-5):
    """Central-difference Hessian-vector product of a gradient function at ``w``."""
    w = np.asarray(w, dtype=np.float64)

    def hvp(v):
        return (grad_fn(w + h * v) - grad_fn(w - h * v)) / (2 * h)

    return hvp


@dataclass
class TheoryReport:
    checks: list[dict] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks)

    def to_dict(self) -> dict:
        return {"schema_version": 1, "passed": self.passed, "checks": self.checks}


def run_all(cfg: TheoryProbeConfig = TheoryProbeConfig()) -> TheoryReport:
    report = TheoryReport([check_prop1(cfg), check_expected_losses(cfg), check_lemma_a1(cfg)])
    report.checks.insert(0, {"name": "config", "passed": True, **config_dict(cfg)})
    return report


def config_dict(cfg: TheoryProbeConfig) -> dict:
    d = asdict(cfg)
    return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


__all__ = ["Quadratic", "TheoryProbeConfig", "TheoryReport", "alpha_estimate", "bound_sides",
           "check_lemma_a1", "check_lemma_a1_network", "check_prop1", "check_expected_losses", "config_dict", "drift_curve",
           "equal_contribution_update", "equal_projection_update", "estimate_smoothness", "expected_losses",
           "finite_difference_hvp", "loglog_slope", "network_grad_fn", "orthogonal_direction",
           "random_quadratic", "run_all"]
