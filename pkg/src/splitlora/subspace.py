"""Major/minor partition of a gradient space and the choice of its size.

Conventions: a spectrum has one entry per left singular vector of the
gradient matrix (d = number of rows), sorted descending and zero-padded when
the matrix is wide-rank deficient. The minor subspace of size ``k`` is the
span of the last ``k`` left singular vectors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateSpectrum, InvalidInput, InvalidK, ShapeError
from .linalg import SvdResult, svd

DEFAULT_ALPHA = 20.0
# Arbitrary default for the threshold baseline; not taken from any reported run.
DEFAULT_TAU = 0.02


def as_spectrum(sigma) -> np.ndarray:
    s = np.asarray(sigma, dtype=np.float64).reshape(-1)
    if s.size < 1:
        raise InvalidInput("spectrum must be non-empty")
    if not np.all(np.isfinite(s)) or np.any(s < 0):
        raise InvalidInput("spectrum entries must be finite and nonnegative")
    if np.any(np.diff(s) > 0):
        raise InvalidInput("spectrum must be sorted in non-increasing order")
    return s


@dataclass(frozen=True)
class SolverConfig:
    alpha: float = DEFAULT_ALPHA
    tau: float = DEFAULT_TAU
    task_index: int = 2

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not 0 < self.tau < 1:
            raise ValueError(f"tau must lie in (0, 1), got {self.tau}")
        if self.task_index < 2:
            raise ValueError(f"task_index must be >= 2, got {self.task_index}")


@dataclass(frozen=True)
class MinorSubspace:
    basis: np.ndarray
    spectrum: np.ndarray = field(repr=False)

    @property
    def k(self) -> int:
        return self.basis.shape[1]

    @property
    def d(self) -> int:
        return self.basis.shape[0]


def _tail_sums(values: np.ndarray) -> np.ndarray:
    """``out[k]`` = sum of the last ``k`` entries, for k = 0..d."""
    out = np.zeros(values.shape[0] + 1)
    out[1:] = np.cumsum(values[::-1])
    return out


def epsilon_curve(spectrum) -> np.ndarray:
    """Minor-side singular mass fraction for every k = 0..d."""
    s = as_spectrum(spectrum)
    total = float(np.sum(s))
    if total <= 0:
        raise DegenerateSpectrum("all singular values are zero")
    curve = _tail_sums(s) / total
    curve[-1] = 1.0
    return curve


def epsilon(spectrum, k: int) -> float:
    s = as_spectrum(spectrum)
    if not 0 <= k <= s.shape[0]:
        raise InvalidK(f"k={k} outside [0, {s.shape[0]}]")
    return float(epsilon_curve(s)[k])


def split_objective(spectrum, task_index: int, alpha: float, d: int | None = None) -> np.ndarray:
    """``(t-1) * eps(k) - alpha * k / d`` for k = 1..d (index 0 is k=1)."""
    s = as_spectrum(spectrum)
    d = s.shape[0] if d is None else d
    if d != s.shape[0]:
        raise ShapeError(f"d={d} but spectrum has {s.shape[0]} entries")
    ks = np.arange(1, d + 1)
    return (task_index - 1) * epsilon_curve(s)[1:] - alpha * ks / d


def tie_tolerance(task_index: int, alpha: float) -> float:
    """Objective values closer than this are treated as equal."""
    return 1e-12 * ((task_index - 1) + alpha)


def solve_k_split(spectrum, cfg: SolverConfig, d: int | None = None) -> int:
    """Minor-subspace size minimizing the stability/plasticity objective.

    Exhaustive scan over k in [1, d]. Values within ``tie_tolerance`` of the
    minimum count as ties and the smallest such k wins, so rounding noise
    in the prefix sums cannot decide between equal objectives.
    """
    j = split_objective(spectrum, cfg.task_index, cfg.alpha, d)
    best = float(np.min(j))
    tol = tie_tolerance(cfg.task_index, cfg.alpha)
    return int(np.flatnonzero(j <= best + tol)[0]) + 1


def solve_k_threshold(spectrum, tau: float, d: int | None = None) -> int:
    """Largest k whose minor-side squared singular mass fraction is below ``tau``.

    Returns 0 when even k=1 fails; callers decide whether to clamp.
    """
    if not 0 < tau < 1:
        raise ValueError(f"tau must lie in (0, 1), got {tau}")
    s = as_spectrum(spectrum)
    if d is not None and d != s.shape[0]:
        raise ShapeError(f"d={d} but spectrum has {s.shape[0]} entries")
    sq = s * s
    total = float(np.sum(sq))
    if total <= 0:
        raise DegenerateSpectrum("all singular values are zero")
    ratio = _tail_sums(sq)[1:] / total
    ok = np.flatnonzero(ratio < tau)
    return int(ok[-1]) + 1 if ok.size else 0


def minor_basis(svd_result: SvdResult, k: int) -> MinorSubspace:
    u = svd_result.u
    if not 1 <= k <= u.shape[1]:
        raise InvalidK(f"k={k} outside [1, {u.shape[1]}]")
    basis = np.ascontiguousarray(u[:, u.shape[1] - k:])
    return MinorSubspace(basis=basis, spectrum=svd_result.full_spectrum())


def partition(g_old) -> SvdResult:
    """Full left SVD of a gradient-memory matrix."""
    return svd(g_old, full_left=True)


def project(sub: MinorSubspace, delta_w) -> np.ndarray:
    """Orthogonal projection of ``delta_w``'s columns onto the minor subspace."""
    delta_w = np.asarray(delta_w, dtype=np.float64)
    if delta_w.ndim != 2 or delta_w.shape[0] != sub.d:
        raise ShapeError(f"update has shape {delta_w.shape}, basis dimension is {sub.d}")
    u = sub.basis
    return u @ (u.T @ delta_w)


def complement_residual(sub: MinorSubspace, m) -> np.ndarray:
    """``(I - U U^T) m``: the part of ``m`` outside the minor subspace."""
    m = np.asarray(m, dtype=np.float64)
    return m - project(sub, m)
