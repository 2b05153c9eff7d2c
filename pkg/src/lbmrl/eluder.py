"""Eluder dimension and cover sizes of finite classes on finite domains.

A class is a value matrix ``values[m, x]``: member ``m`` evaluated at domain
point ``x``.

For a fixed prefix ``Z`` a point ``x`` is eps'-independent exactly when some
pair ``(f, f')`` has ``||f - f'||_Z <= eps' < |f(x) - f'(x)|``, so the set of
admissible ``eps'`` is a union of half-open intervals. A sequence is valid
when the intersection of these sets over its elements, clipped to
``[eps, inf)``, is non-empty. Tracking that intersection makes the search
over sequences exact without discretizing ``eps'``.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np

from .env import ParameterError, make_rng

MAX_EXHAUSTIVE = 12

Intervals = list[tuple[float, float]]


@dataclass
class EluderQuery:
    values: np.ndarray  # (M, n_points)
    epsilon: float
    domain: Sequence[int] | None = None  # defaults to every column
    mode: str = "exhaustive"

    def __post_init__(self):
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if self.epsilon < 0:
            raise ParameterError("epsilon must be >= 0")
        if self.domain is None:
            self.domain = list(range(self.values.shape[1]))
        if len(self.domain) == 0:
            raise ParameterError("domain must be non-empty")
        if self.mode not in ("exhaustive", "greedy"):
            raise ParameterError(f"unknown mode {self.mode!r}")


def _pair_diffs(values: np.ndarray) -> np.ndarray:
    """f - f' for every unordered pair, shape (n_pairs, n_points)."""
    M = values.shape[0]
    if M < 2:
        return np.zeros((0, values.shape[1]))
    i, j = np.triu_indices(M, k=1)
    return values[i] - values[j]


def _independence_set(norm_sq: np.ndarray, gaps: np.ndarray, eps: float) -> Intervals:
    """Union over pairs of [max(||.||_Z, eps), gap), merged and sorted."""
    lo = np.maximum(np.sqrt(norm_sq), eps)
    keep = gaps > lo
    iv = sorted(zip(lo[keep].tolist(), gaps[keep].tolist()))
    merged: Intervals = []
    for a, b in iv:
        if merged and a <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], b))
        else:
            merged.append((a, b))
    return merged


def _intersect(x: Intervals, y: Intervals) -> Intervals:
    out: Intervals = []
    i = j = 0
    while i < len(x) and j < len(y):
        lo = max(x[i][0], y[j][0])
        hi = min(x[i][1], y[j][1])
        if lo < hi:
            out.append((lo, hi))
        if x[i][1] < y[j][1]:
            i += 1
        else:
            j += 1
    return out


def is_independent(point: int, Z: Sequence[int], values: np.ndarray, epsilon: float) -> bool:
    """True iff some pair has ||f - f'||_Z <= eps and |f(x) - f'(x)| > eps."""
    diffs = _pair_diffs(np.atleast_2d(np.asarray(values, dtype=float)))
    if diffs.shape[0] == 0:
        return False
    norms = np.sqrt((diffs[:, list(Z)] ** 2).sum(axis=1)) if len(Z) else np.zeros(len(diffs))
    gaps = np.abs(diffs[:, point])
    return bool(np.any((norms <= epsilon) & (gaps > epsilon)))


def _exhaustive(diffs: np.ndarray, domain: list[int], eps: float) -> int:
    n = len(domain)
    gaps = np.abs(diffs[:, domain])  # (pairs, n)
    sq = diffs[:, domain] ** 2
    best = 0

    def dfs(used: int, depth: int, norm_sq: np.ndarray, feasible: Intervals):
        nonlocal best
        best = max(best, depth)
        if best == n or depth + (n - bin(used).count("1")) <= best:
            return
        for x in range(n):
            if used >> x & 1:
                continue
            nxt = _intersect(feasible, _independence_set(norm_sq, gaps[:, x], eps))
            if nxt:
                dfs(used | (1 << x), depth + 1, norm_sq + sq[:, x], nxt)
                if best == n:
                    return

    dfs(0, 0, np.zeros(diffs.shape[0]), [(eps, np.inf)])
    return best


def _greedy(diffs: np.ndarray, domain: list[int], eps: float, restarts: int, seed: int) -> int:
    n = len(domain)
    gaps = np.abs(diffs[:, domain])
    sq = diffs[:, domain] ** 2
    rng = make_rng(seed)
    best = 0
    for _ in range(restarts):
        order = rng.permutation(n)
        used = np.zeros(n, dtype=bool)
        norm_sq = np.zeros(diffs.shape[0])
        feasible: Intervals = [(eps, np.inf)]
        length = 0
        grew = True
        while grew:
            grew = False
            for x in order:
                if used[x]:
                    continue
                nxt = _intersect(feasible, _independence_set(norm_sq, gaps[:, x], eps))
                if nxt:
                    used[x] = True
                    feasible = nxt
                    norm_sq = norm_sq + sq[:, x]
                    length += 1
                    grew = True
        best = max(best, length)
    return best


def eluder_dimension(q: EluderQuery, restarts: int = 32, seed: int = 0):
    """Exhaustive mode: exact dimension. Greedy mode: ``(lower_bound, "lower_bound")``."""
    diffs = _pair_diffs(q.values)
    domain = list(q.domain)
    if q.mode == "exhaustive":
        if len(domain) > MAX_EXHAUSTIVE:
            raise ParameterError(
                f"exhaustive search is limited to {MAX_EXHAUSTIVE} points "
                f"(got {len(domain)}); use mode='greedy' for a certified lower bound")
        if diffs.shape[0] == 0:
            return 0
        return _exhaustive(diffs, domain, q.epsilon)
    if diffs.shape[0] == 0:
        return 0, "lower_bound"
    return _greedy(diffs, domain, q.epsilon, restarts, seed), "lower_bound"


def cover_size(values: np.ndarray, epsilon: float) -> int:
    """Greedy sup-norm epsilon-cover drawn from the class itself."""
    values = np.atleast_2d(np.asarray(values, dtype=float))
    dist = np.abs(values[:, None, :] - values[None, :, :]).max(axis=2)
    covers = dist <= epsilon
    uncovered = np.ones(values.shape[0], dtype=bool)
    size = 0
    while uncovered.any():
        gain = (covers & uncovered[None, :]).sum(axis=1)
        c = int(np.argmax(gain))
        uncovered &= ~covers[c]
        size += 1
    return size


def minimal_cover_size(values: np.ndarray, epsilon: float) -> int:
    """Smallest epsilon-cover by exhaustive search (small classes only)."""
    values = np.atleast_2d(np.asarray(values, dtype=float))
    M = values.shape[0]
    dist = np.abs(values[:, None, :] - values[None, :, :]).max(axis=2)
    covers = dist <= epsilon
    for size in range(1, M + 1):
        for subset in combinations(range(M), size):
            if covers[list(subset)].any(axis=0).all():
                return size
    return M


def lift_model_class(kernels: np.ndarray, value_tables: Sequence[np.ndarray]) -> np.ndarray:
    """Value matrix of f(s, a, V) = P V(s, a) over points (h, s, a, V_j).

    ``kernels`` has shape (N, H, S, A, S); each value table is a vector over
    next states, shared across steps. Columns are ordered (j, h, s, a).
    """
    kernels = np.asarray(kernels, dtype=float)
    cols = [np.einsum("nhsat,t->nhsa", kernels, np.asarray(V, dtype=float)).reshape(len(kernels), -1)
            for V in value_tables]
    return np.concatenate(cols, axis=1)
