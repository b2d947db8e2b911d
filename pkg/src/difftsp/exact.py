"""Exact solvers for small instances, used as ground truth."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np

from .core import Instance, Tour, tour_length
from .exceptions import SizeLimitError

BRUTE_FORCE_MAX_N = 11
HELD_KARP_MAX_N = 18


class ExactMethod(str, Enum):
    BRUTE_FORCE = "brute-force"
    HELD_KARP = "held-karp"


@dataclass(frozen=True)
class ExactResult:
    tour: Tour
    length: float
    method: ExactMethod


@lru_cache(maxsize=None)
def _lex_permutations(m: int) -> np.ndarray:
    """All permutations of range(m) in lexicographic order, as uint8 rows."""
    if m == 0:
        return np.zeros((1, 0), dtype=np.uint8)
    sub = _lex_permutations(m - 1)
    blocks = []
    for first in range(m):
        rest = np.array([v for v in range(m) if v != first], dtype=np.uint8)
        block = np.empty((sub.shape[0], m), dtype=np.uint8)
        block[:, 0] = first
        block[:, 1:] = rest[sub]
        blocks.append(block)
    out = np.concatenate(blocks)
    out.setflags(write=False)
    return out


@lru_cache(maxsize=None)
def _canonical_cycles(n: int) -> np.ndarray:
    """Every distinct Hamiltonian cycle on n cities, once, in canonical form.

    Rows start at city 0 (implicit) and list the remaining cities with the
    first smaller than the last, in lexicographic order.
    """
    perms = _lex_permutations(n - 1) + 1
    if n > 3:
        perms = perms[perms[:, 0] < perms[:, -1]]
    perms = np.ascontiguousarray(perms)
    perms.setflags(write=False)
    return perms


def brute_force(instance: Instance, chunk: int = 1 << 18) -> ExactResult:
    """Exhaustive search over all (n-1)!/2 cycles.

    Among equal-length optima the lexicographically smallest canonical
    order wins.
    """
    n = instance.n
    if n > BRUTE_FORCE_MAX_N:
        raise SizeLimitError(f"brute force is limited to n <= {BRUTE_FORCE_MAX_N}, got {n}")
    dist = instance.dist
    cycles = _canonical_cycles(n)
    best_len, best_row = np.inf, -1
    for start in range(0, cycles.shape[0], chunk):
        block = cycles[start:start + chunk]
        lengths = dist[0, block[:, 0]] + dist[block[:, -1], 0]
        for k in range(block.shape[1] - 1):
            lengths += dist[block[:, k], block[:, k + 1]]
        idx = int(np.argmin(lengths))
        if lengths[idx] < best_len:
            best_len, best_row = lengths[idx], start + idx
    tour = Tour(np.concatenate(([0], cycles[best_row])))
    return ExactResult(tour, tour_length(instance, tour), ExactMethod.BRUTE_FORCE)


def held_karp(instance: Instance) -> ExactResult:
    """Subset dynamic programme with city 0 fixed as the start."""
    n = instance.n
    if n > HELD_KARP_MAX_N:
        raise SizeLimitError(f"Held-Karp is limited to n <= {HELD_KARP_MAX_N}, got {n}")
    m = n - 1
    d = instance.dist[1:, 1:]
    full = (1 << m) - 1
    masks = np.arange(1 << m)
    popcount = np.zeros(1 << m, dtype=np.int64)
    for j in range(m):
        popcount += (masks >> j) & 1
    member = ((masks[:, None] >> np.arange(m)) & 1).astype(bool)

    # cost[mask, j]: shortest path 0 -> ... -> j covering exactly mask
    cost = np.full((1 << m, m), np.inf)
    parent = np.full((1 << m, m), -1, dtype=np.int8)
    for j in range(m):
        cost[1 << j, j] = instance.dist[0, j + 1]

    for k in range(2, m + 1):
        layer = masks[popcount == k]
        for j in range(m):
            ends = layer[member[layer, j]]
            prev = ends ^ (1 << j)
            cand = cost[prev] + d[:, j]
            best = np.argmin(cand, axis=1)
            cost[ends, j] = cand[np.arange(ends.size), best]
            parent[ends, j] = best

    closing = cost[full] + instance.dist[1:, 0]
    last = int(np.argmin(closing))
    path = []
    mask, cur = full, last
    while cur >= 0:
        path.append(cur + 1)
        nxt = int(parent[mask, cur])
        mask ^= 1 << cur
        cur = nxt
    tour = Tour([0] + path[::-1]).canonical()
    return ExactResult(tour, tour_length(instance, tour), ExactMethod.HELD_KARP)


def solve_exact(instance: Instance, method: str | ExactMethod = ExactMethod.HELD_KARP) -> ExactResult:
    method = ExactMethod(method)
    if method is ExactMethod.BRUTE_FORCE:
        return brute_force(instance)
    return held_karp(instance)
