"""Dense float64 matrix helpers and a one-sided Jacobi SVD.

Matrices are plain 2-D ``numpy.ndarray`` values of dtype float64. The helpers
here validate shape and finiteness at module boundaries and otherwise defer to
numpy for arithmetic. ``svd`` wraps LAPACK and fixes a sign convention;
``jacobi_svd`` is a from-scratch one-sided Jacobi (round-robin pair schedule)
with the same contract, kept as an independent reference.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidInput, ParseError, ShapeError

_EPS = np.finfo(np.float64).eps


def as_matrix(x, name: str = "matrix") -> np.ndarray:
    """Coerce ``x`` to a finite 2-D float64 array or raise."""
    m = np.asarray(x, dtype=np.float64)
    if m.ndim == 1:
        m = m.reshape(1, -1)
    if m.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got ndim={m.ndim}")
    if m.shape[0] < 1 or m.shape[1] < 1:
        raise ShapeError(f"{name} must have at least one row and column, got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise InvalidInput(f"{name} contains non-finite entries")
    return m


def matmul(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"inner dimensions differ: {a.shape} @ {b.shape}")
    return a @ b


def add(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a + b


def transpose(a) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(a, dtype=np.float64).T)


def scale(a, c: float) -> np.ndarray:
    return float(c) * np.asarray(a, dtype=np.float64)


def frobenius_inner(a, b) -> float:
    """Sum of elementwise products of two equally shaped matrices."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.sum(a * b))


def frobenius_norm(a) -> float:
    return float(np.sqrt(np.sum(np.square(np.asarray(a, dtype=np.float64)))))


@dataclass(frozen=True)
class SvdResult:
    """Singular value decomposition ``m = u[:, :p] @ diag(sigma) @ vt``.

    ``p = min(rows, cols)``. ``u`` is either thin (rows x p) or, when
    requested, the full square orthogonal basis of the row space of ``m``'s
    column vectors (rows x rows); trailing columns past ``p`` span the left
    null space and pair with implicit zero singular values.
    """

    u: np.ndarray
    sigma: np.ndarray
    vt: np.ndarray

    @property
    def rank_dim(self) -> int:
        return self.sigma.shape[0]

    def reconstruct(self) -> np.ndarray:
        p = self.sigma.shape[0]
        return (self.u[:, :p] * self.sigma) @ self.vt

    def full_spectrum(self) -> np.ndarray:
        """Singular values padded with zeros to one per left singular vector."""
        d = self.u.shape[1]
        out = np.zeros(d)
        out[: self.sigma.shape[0]] = self.sigma
        return out


def _round_robin(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Rounds of disjoint index pairs covering every pair of ``range(n)`` once."""
    players = list(range(n)) + ([-1] if n % 2 else [])
    m = len(players)
    rounds = []
    for _ in range(m - 1):
        left, right = [], []
        for k in range(m // 2):
            i, j = players[k], players[m - 1 - k]
            if i >= 0 and j >= 0:
                left.append(min(i, j))
                right.append(max(i, j))
        if left:
            rounds.append((np.array(left), np.array(right)))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def _hestenes(x: np.ndarray, max_sweeps: int = 80, tol: float = _EPS):
    """Orthogonalize the columns of ``x`` in place; return ``(x_rot, v)``.

    On exit ``x_in @ v == x_rot`` with mutually orthogonal columns of
    ``x_rot`` and ``v`` orthogonal. Columns whose squared norm falls below
    ``(eps * ||x||_F)**2`` are treated as numerically zero and left alone.
    """
    n = x.shape[1]
    v = np.eye(n)
    if n < 2:
        return x, v
    floor = (tol * np.sqrt(np.sum(x * x))) ** 2
    rounds = _round_robin(n)
    for _ in range(max_sweeps):
        rotated = False
        for i, j in rounds:
            xi, xj = x[:, i], x[:, j]
            alpha = np.einsum("ij,ij->j", xi, xi)
            beta = np.einsum("ij,ij->j", xj, xj)
            gamma = np.einsum("ij,ij->j", xi, xj)
            active = (np.abs(gamma) > tol * np.sqrt(alpha * beta)) & (alpha > floor) & (beta > floor)
            if not np.any(active):
                continue
            rotated = True
            i, j = i[active], j[active]
            alpha, beta, gamma = alpha[active], beta[active], gamma[active]
            zeta = (beta - alpha) / (2.0 * gamma)
            sgn = np.where(zeta >= 0, 1.0, -1.0)
            az = np.abs(zeta)
            # hypot avoids overflow of zeta**2 for nearly orthogonal pairs
            t = sgn / (az + np.hypot(1.0, az))
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = c * t
            xi, xj = x[:, i], x[:, j]
            x[:, i] = c * xi - s * xj
            x[:, j] = s * xi + c * xj
            vi, vj = v[:, i], v[:, j]
            v[:, i] = c * vi - s * vj
            v[:, j] = s * vi + c * vj
        if not rotated:
            break
    return x, v


def _complete_rows(rows: np.ndarray, missing: np.ndarray, dim: int) -> np.ndarray:
    """Replace rows flagged in ``missing`` by unit vectors orthogonal to the rest.

    Each new row is the standard basis vector with the largest residual
    after projecting out the current basis (reorthogonalized twice).
    """
    out = rows.copy()
    basis = out[~missing].reshape(-1, dim)
    for i in np.flatnonzero(missing):
        resid = np.eye(dim)
        for _ in range(2):
            if basis.shape[0]:
                resid -= basis.T @ (basis @ resid)
        norms = np.linalg.norm(resid, axis=0)
        j = int(np.argmax(norms))
        w = resid[:, j] / norms[j]
        if basis.shape[0]:
            w -= basis.T @ (basis @ w)
            w /= np.linalg.norm(w)
        out[i] = w
        basis = np.vstack([basis, w[None, :]])
    return out


def _orthonormal_from(vectors: np.ndarray, sigma: np.ndarray, count: int, dim: int) -> np.ndarray:
    """Rows ``vectors[j] / sigma[j]``, completed where ``sigma[j]`` is negligible."""
    out = np.zeros((count, dim))
    missing = np.ones(count, dtype=bool)
    top = sigma[0] if sigma.size else 0.0
    tiny = max(count, dim) * _EPS * top
    for j in range(min(count, sigma.shape[0])):
        if sigma[j] > tiny and sigma[j] > 0:
            out[j] = vectors[j] / sigma[j]
            missing[j] = False
    if missing.any():
        out = _complete_rows(out, missing, dim)
    return out


def _canonical(u_full: np.ndarray, sigma: np.ndarray, vt: np.ndarray, full_left: bool) -> SvdResult:
    """Apply the sign convention and trim ``u`` when a thin result is wanted."""
    p = sigma.shape[0]
    for j in range(u_full.shape[1]):
        col = u_full[:, j]
        idx = int(np.argmax(np.abs(col)))
        if col[idx] < 0:
            u_full[:, j] = -col
            if j < p:
                vt[j] = -vt[j]
    u = u_full if full_left else u_full[:, :p]
    return SvdResult(u=np.ascontiguousarray(u), sigma=np.ascontiguousarray(sigma), vt=np.ascontiguousarray(vt))


def svd(m, full_left: bool = False) -> SvdResult:
    """Singular value decomposition with a deterministic sign convention.

    Singular values are returned in non-increasing order. Each left singular
    vector has its largest-magnitude entry nonnegative (first such entry on
    ties); the matching right vector is flipped with it. The factorization
    itself is LAPACK's, through ``numpy.linalg.svd``.

    Args:
        m: finite matrix, shape (d1, d2).
        full_left: return all d1 left singular vectors instead of the
            thin min(d1, d2) set.
    """
    m = as_matrix(m, "svd input")
    p = min(m.shape)
    u_full, sigma, vt = np.linalg.svd(m, full_matrices=True)
    return _canonical(u_full.copy(), sigma.copy(), vt[:p].copy(), full_left)


def jacobi_svd(m, full_left: bool = False) -> SvdResult:
    """One-sided Jacobi SVD, same contract as :func:`svd`.

    Slower than LAPACK but written from scratch, which makes it an
    independent cross-check for :func:`svd` in the test suite.

    Args:
        m: finite matrix, shape (d1, d2).
        full_left: return all d1 left singular vectors instead of the
            thin min(d1, d2) set.
    """
    m = as_matrix(m, "svd input")
    d1, d2 = m.shape
    p = min(d1, d2)
    if d1 <= d2:
        # rotating the d1 columns of m.T accumulates the full left basis
        x, v = _hestenes(m.T.copy())
        norms = np.sqrt(np.einsum("ij,ij->j", x, x))
        order = np.argsort(-norms, kind="stable")
        u_full = v[:, order]
        sigma = norms[order]
        vt = _orthonormal_from(x[:, order].T, sigma, p, d2)
    else:
        x, v = _hestenes(m.copy())
        norms = np.sqrt(np.einsum("ij,ij->j", x, x))
        order = np.argsort(-norms, kind="stable")
        sigma = norms[order]
        vt = np.ascontiguousarray(v[:, order].T)
        u_full = _orthonormal_from(x[:, order].T, sigma, d1, d1).T.copy()

    return _canonical(u_full, sigma, vt, full_left)



# --- CSV serialization -----------------------------------------------------


def format_matrix_csv(m) -> str:
    m = as_matrix(m)
    buf = io.StringIO()
    for row in m:
        buf.write(",".join(repr(float(v)) for v in row))
        buf.write("\n")
    return buf.getvalue()


def parse_matrix_csv(text: str, path=None) -> np.ndarray:
    rows = []
    width = None
    for lineno, rec in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not rec or all(not f.strip() for f in rec):
            continue
        try:
            vals = [float(f) for f in rec]
        except ValueError as exc:
            raise ParseError(f"non-numeric field ({exc})", line=lineno, path=path) from None
        if width is None:
            width = len(vals)
        elif len(vals) != width:
            raise ParseError(f"expected {width} columns, got {len(vals)}", line=lineno, path=path)
        rows.append(vals)
    if not rows:
        raise ParseError("no rows", path=path)
    return as_matrix(np.array(rows))


def write_matrix_csv(path, m) -> None:
    atomic_write_text(path, format_matrix_csv(m))


def read_matrix_csv(path) -> np.ndarray:
    return parse_matrix_csv(Path(path).read_text(), path=path)


def atomic_write_text(path, text: str) -> None:
    """Write ``text`` next to ``path`` and rename over it."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    with open(tmp, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)
