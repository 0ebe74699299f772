"""Independent reference implementations used only by the tests.

They share no code with the package: plain Python loops and ``math.fsum``
instead of numpy prefix sums.
"""

import math

import numpy as np


def brute_force_k_split(sigma, t, alpha):
    """Exhaustive argmin of (t-1) * eps(k) - alpha * k / d over k = 1..d.

    Objective values within 1e-12 * ((t-1) + alpha) of the minimum count as
    ties; the smallest such k wins.
    """
    s = [float(v) for v in sigma]
    d = len(s)
    total = math.fsum(s)
    values = []
    for k in range(1, d + 1):
        eps = 1.0 if k == d else math.fsum(s[d - k:]) / total
        values.append((t - 1) * eps - alpha * k / d)
    best = min(values)
    tol = 1e-12 * ((t - 1) + alpha)
    for k, v in enumerate(values, start=1):
        if v <= best + tol:
            return k
    raise AssertionError("unreachable")


def brute_force_k_threshold(sigma, tau):
    s = [float(v) ** 2 for v in sigma]
    d = len(s)
    total = math.fsum(s)
    best = 0
    for k in range(1, d + 1):
        if math.fsum(s[d - k:]) / total < tau:
            best = k
    return best


def random_spectrum(rng: np.random.Generator, d_max: int = 512) -> np.ndarray:
    """Sorted nonnegative spectrum from a mix of shapes, including exact ties and zeros."""
    d = int(rng.integers(1, d_max + 1))
    kind = int(rng.integers(0, 5))
    if kind == 0:
        s = rng.uniform(0, 1, d)
    elif kind == 1:
        s = np.exp(-rng.uniform(0.01, 1.0) * np.arange(d)) * rng.uniform(0.5, 5)
    elif kind == 2:
        s = rng.integers(0, 4, d).astype(float)
    elif kind == 3:
        s = np.ones(d) * rng.uniform(0.1, 3)
    else:
        s = rng.pareto(1.5, d)
        s[rng.uniform(size=d) < 0.3] = 0.0
    s = np.sort(s)[::-1]
    if s.sum() == 0:
        s[0] = 1.0
    return s
