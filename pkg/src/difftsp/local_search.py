"""2-change moves, best-improvement 2-opt and the two-move target sampler."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Instance, Tour, as_tour
from .exceptions import InvalidSizeError, MoveError

IMPROVEMENT_TOL = 1e-12


@dataclass(frozen=True)
class TwoChangeMove:
    """Remove edges (order[i], order[i+1]) and (order[j], order[j+1 mod n]).

    Reconnection reverses the segment order[i+1..j].
    """

    i: int
    j: int

    def validate(self, n: int) -> None:
        i, j = self.i, self.j
        if not (0 <= i < j < n):
            raise MoveError(f"need 0 <= i < j < n, got i={i}, j={j}, n={n}")
        if j < i + 2 or (i == 0 and j == n - 1):
            raise MoveError(f"edges at positions {i} and {j} are adjacent in a tour of {n} cities")


def valid_moves(n: int) -> np.ndarray:
    """All valid (i, j) position pairs, in increasing (i, j) order."""
    i, j = np.triu_indices(n, k=2)
    keep = ~((i == 0) & (j == n - 1))
    return np.column_stack((i[keep], j[keep]))


def apply_two_change(tour, move: TwoChangeMove) -> Tour:
    tour = as_tour(tour)
    move.validate(tour.n)
    order = tour.order.copy()
    order[move.i + 1:move.j + 1] = order[move.i + 1:move.j + 1][::-1].copy()
    return Tour(order)


def two_change_delta(instance: Instance, tour, move: TwoChangeMove) -> float:
    """Length change d(a,c) + d(b,d) - d(a,b) - d(c,d) caused by ``move``."""
    order = as_tour(tour).order
    n = order.size
    a, b = order[move.i], order[move.i + 1]
    c, d = order[move.j], order[(move.j + 1) % n]
    dist = instance.dist
    return float(dist[a, c] + dist[b, d] - dist[a, b] - dist[c, d])


def _delta_matrix(dist: np.ndarray, order: np.ndarray) -> np.ndarray:
    """delta[i, j] for every valid move; +inf elsewhere."""
    n = order.size
    nxt = np.roll(order, -1)
    d_ac = dist[np.ix_(order, order)]
    d_bd = dist[np.ix_(nxt, nxt)]
    d_ab = dist[order, nxt]
    delta = d_ac + d_bd - d_ab[:, None] - d_ab[None, :]
    mask = np.triu(np.ones((n, n), dtype=bool), k=2)
    mask[0, n - 1] = False
    delta[~mask] = np.inf
    return delta


def best_move(instance: Instance, tour, tol: float = IMPROVEMENT_TOL):
    """Most improving move and its delta, or None when the tour is 2-optimal.

    Ties go to the smallest (i, j).
    """
    order = as_tour(tour).order
    if order.size < 4:
        return None
    delta = _delta_matrix(instance.dist, order)
    flat = int(np.argmin(delta))
    best = delta.flat[flat]
    if not best < -tol:
        return None
    i, j = divmod(flat, order.size)
    return TwoChangeMove(i, j), float(best)


def two_opt(instance: Instance, tour, max_iter: int | None = None, return_trace: bool = False):
    """Iterate the single most improving 2-change until none remains.

    With ``return_trace`` the list of applied moves is returned as well.
    """
    tour = as_tour(tour)
    order = tour.order.copy()
    trace = []
    while max_iter is None or len(trace) < max_iter:
        found = best_move(instance, order)
        if found is None:
            break
        move, _ = found
        order[move.i + 1:move.j + 1] = order[move.i + 1:move.j + 1][::-1].copy()
        trace.append(move)
    result = Tour(order)
    return (result, trace) if return_trace else result


def is_two_opt_fixed_point(instance: Instance, tour, tol: float = IMPROVEMENT_TOL) -> bool:
    return best_move(instance, tour, tol) is None


def random_move(n: int, rng: np.random.Generator) -> TwoChangeMove:
    moves = valid_moves(n)
    i, j = moves[rng.integers(len(moves))]
    return TwoChangeMove(int(i), int(j))


def sample_equivalence_target(optimal, rng: np.random.Generator, return_moves: bool = False):
    """Perturb a reference tour by two uniformly drawn 2-change moves."""
    tour = as_tour(optimal)
    if tour.n < 5:
        raise InvalidSizeError(f"the two-move sampler needs n >= 5, got {tour.n}")
    first = random_move(tour.n, rng)
    second = random_move(tour.n, rng)
    out = apply_two_change(apply_two_change(tour, first), second)
    return (out, (first, second)) if return_moves else out


def random_tour(n: int, rng: np.random.Generator) -> Tour:
    return Tour(rng.permutation(n))


def segments_properly_cross(p1, p2, p3, p4) -> bool:
    """True when open segments p1p2 and p3p4 intersect at a single interior point."""

    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    o1, o2 = orient(p1, p2, p3), orient(p1, p2, p4)
    o3, o4 = orient(p3, p4, p1), orient(p3, p4, p2)
    return o1 * o2 < 0 and o3 * o4 < 0


def crossing_pairs(instance: Instance, tour) -> list[tuple[int, int]]:
    """Positions (i, j) of tour edges that properly cross each other."""
    order = as_tour(tour).order
    n = order.size
    pts = instance.coords
    out = []
    for i in range(n):
        for j in range(i + 2, n):
            if i == 0 and j == n - 1:
                continue
            a, b = pts[order[i]], pts[order[(i + 1) % n]]
            c, d = pts[order[j]], pts[order[(j + 1) % n]]
            if segments_properly_cross(a, b, c, d):
                out.append((i, j))
    return out
