"""Input checking for the estimator API."""

from __future__ import annotations

import numpy as np

from .core import Instance, Tour, as_tour
from .exceptions import DataError, DimensionError


def check_instance(x, id: str | None = None) -> Instance:
    """Accept an :class:`Instance` or an ``(n, 2)`` array of coordinates."""
    if isinstance(x, Instance):
        return x
    coords = np.asarray(x, dtype=np.float64)
    if coords.ndim != 2 or coords.shape[1] != 2:
        raise DimensionError(f"expected coordinates of shape (n, 2), got {coords.shape}")
    if not np.all(np.isfinite(coords)):
        raise DataError("coordinates contain NaN or infinity")
    return Instance(coords, id=id or "instance")


def check_instances(X) -> list[Instance]:
    """Accept a sequence of instances/coordinate arrays or an ``(m, n, 2)`` array."""
    if isinstance(X, Instance):
        return [X]
    if isinstance(X, np.ndarray):
        if X.ndim == 2:
            return [check_instance(X, "instance0")]
        if X.ndim != 3:
            raise DimensionError(f"expected an (m, n, 2) array, got shape {X.shape}")
    out = [check_instance(x, f"instance{k}") for k, x in enumerate(X)]
    if not out:
        raise DataError("no instances given")
    return out


def check_tours(y, instances) -> list[Tour]:
    tours = [as_tour(t) for t in y]
    if len(tours) != len(instances):
        raise DataError(f"{len(tours)} tours for {len(instances)} instances")
    for tour, inst in zip(tours, instances):
        if tour.n != inst.n:
            raise DimensionError(f"tour of {tour.n} cities for instance {inst.id} of {inst.n}")
    return tours


def same_size(instances) -> int:
    sizes = {inst.n for inst in instances}
    if len(sizes) != 1:
        raise DataError(f"training instances must share one size, got {sorted(sizes)}")
    return sizes.pop()
