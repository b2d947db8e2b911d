"""Euclidean TSP instances, tours, tour lengths and optimality gaps."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import DimensionError, DomainError, InvalidSizeError, InvalidTourError


def euclidean_matrix(coords: np.ndarray) -> np.ndarray:
    diff = coords[:, None, :] - coords[None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    # exact symmetry and zero diagonal regardless of rounding in the subtraction
    dist = np.minimum(dist, dist.T)
    np.fill_diagonal(dist, 0.0)
    return dist


@dataclass(frozen=True, eq=False)
class Instance:
    """One planar Euclidean TSP instance.

    ``dist`` is derived from ``coords`` when not supplied.
    """

    coords: np.ndarray
    id: str = "instance"
    dist: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        coords = np.array(self.coords, dtype=np.float64)
        if coords.ndim != 2 or coords.shape[1] != 2:
            raise DimensionError(f"coords must have shape (n, 2), got {coords.shape}")
        if coords.shape[0] < 3:
            raise InvalidSizeError(f"an instance needs at least 3 cities, got {coords.shape[0]}")
        coords.setflags(write=False)
        object.__setattr__(self, "coords", coords)
        if self.dist is None:
            dist = euclidean_matrix(coords)
        else:
            dist = np.array(self.dist, dtype=np.float64)
            if dist.shape != (len(coords), len(coords)):
                raise DimensionError(f"dist has shape {dist.shape}, expected {(len(coords),) * 2}")
        dist.setflags(write=False)
        object.__setattr__(self, "dist", dist)

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    def __repr__(self):
        return f"Instance(id={self.id!r}, n={self.n})"


class Tour:
    """A Hamiltonian cycle stored as a visiting order.

    The closing edge from the last city back to the first is implicit.
    Two tours compare equal when they describe the same cycle, i.e. up to
    rotation and reversal of ``order``.
    """

    __slots__ = ("_order",)

    def __init__(self, order):
        order = np.array(order, dtype=np.int64).ravel()
        n = order.size
        if n < 3:
            raise InvalidSizeError(f"a tour needs at least 3 cities, got {n}")
        if not np.array_equal(np.sort(order), np.arange(n)):
            raise InvalidTourError("order is not a permutation of 0..n-1")
        order.setflags(write=False)
        self._order = order

    @property
    def order(self) -> np.ndarray:
        return self._order

    @property
    def n(self) -> int:
        return self._order.size

    def edges(self) -> frozenset:
        """Undirected edge set as a frozenset of sorted pairs."""
        a = self._order
        b = np.roll(a, -1)
        return frozenset(zip(np.minimum(a, b).tolist(), np.maximum(a, b).tolist()))

    def canonical(self) -> "Tour":
        """Rotation starting at city 0, followed by its smaller neighbour."""
        order = np.roll(self._order, -int(np.flatnonzero(self._order == 0)[0]))
        if order[-1] < order[1]:
            order = np.concatenate(([0], order[:0:-1]))
        return Tour(order)

    def __eq__(self, other):
        if not isinstance(other, Tour):
            return NotImplemented
        return self.n == other.n and np.array_equal(self.canonical().order, other.canonical().order)

    def __hash__(self):
        return hash(self.canonical().order.tobytes())

    def __len__(self):
        return self.n

    def __repr__(self):
        return f"Tour({self._order.tolist()})"


@dataclass(frozen=True)
class GapReport:
    found_length: float
    reference_length: float
    gap: float

    @property
    def gap_pct(self) -> float:
        return 100.0 * self.gap


def generate_random_instance(n: int, seed: int, id: str | None = None) -> Instance:
    """``n`` cities drawn i.i.d. uniformly from the unit square."""
    if n < 3:
        raise InvalidSizeError(f"n must be >= 3, got {n}")
    rng = np.random.default_rng(seed)
    coords = rng.random((n, 2))
    return Instance(coords, id=id if id is not None else f"rand{n}_s{seed}")


def as_tour(tour) -> Tour:
    return tour if isinstance(tour, Tour) else Tour(tour)


def tour_length(instance: Instance, tour) -> float:
    """Closed tour length, summed in canonical order.

    Summing in a fixed order makes every rotation or reversal of the same
    cycle return bit-identical lengths.
    """
    tour = as_tour(tour)
    if tour.n != instance.n:
        raise DimensionError(f"tour has {tour.n} cities, instance has {instance.n}")
    order = tour.canonical().order
    return float(instance.dist[order, np.roll(order, -1)].sum())


def optimality_gap(found_length: float, reference_length: float) -> GapReport:
    if not reference_length > 0:
        raise DomainError(f"reference length must be positive, got {reference_length}")
    found_length = float(found_length)
    reference_length = float(reference_length)
    gap = (found_length - reference_length) / reference_length
    return GapReport(found_length, reference_length, gap)


def tour_to_adjacency(tour) -> np.ndarray:
    """Symmetric 0/1 adjacency matrix of the tour's edge set."""
    order = as_tour(tour).order
    nxt = np.roll(order, -1)
    adj = np.zeros((order.size, order.size))
    adj[order, nxt] = 1.0
    adj[nxt, order] = 1.0
    return adj


def adjacency_to_tour(adj: np.ndarray) -> Tour:
    """Inverse of :func:`tour_to_adjacency`.

    Raises InvalidTourError when ``adj`` is not the adjacency of a single
    Hamiltonian cycle.
    """
    adj = np.asarray(adj)
    n = adj.shape[0]
    if adj.shape != (n, n) or not np.array_equal(adj, adj.T):
        raise InvalidTourError("adjacency must be a symmetric square matrix")
    binary = adj > 0.5
    if np.any(np.diag(binary)) or np.any(binary.sum(axis=1) != 2):
        raise InvalidTourError("every city must have exactly two incident edges")
    neighbours = [np.flatnonzero(row) for row in binary]
    order = [0]
    prev, cur = -1, 0
    for _ in range(n - 1):
        a, b = neighbours[cur]
        nxt = a if a != prev else b
        if nxt == 0:
            break
        order.append(int(nxt))
        prev, cur = cur, nxt
    if len(order) != n:
        raise InvalidTourError("adjacency contains more than one cycle")
    return Tour(order)


def is_hamiltonian_adjacency(adj: np.ndarray) -> bool:
    try:
        adjacency_to_tour(adj)
    except InvalidTourError:
        return False
    return True
