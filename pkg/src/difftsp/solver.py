"""Projected backward diffusion for the TSP.

Each backward step turns the denoiser's soft estimate of the clean edge
field into a tour (greedy Hamiltonian decoding, optionally followed by
2-opt), and the posterior step is conditioned on that projected tour.
After the full pass, a fixed number of refinement rounds partially
re-noise the best tour and denoise it again, keeping the shorter tour.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .core import Instance, Tour, tour_length, tour_to_adjacency
from .denoiser import Checkpoint
from .diffusion import (
    DiffusionSchedule,
    forward_sample,
    init_noise,
    make_schedule,
    posterior_probs,
    posterior_sample,
)
from .exceptions import ConfigError, InvalidSizeError
from .local_search import two_opt


class ProjectionMode(str, Enum):
    IDEQ = "ideq"  # decode then 2-opt at every step
    DECODE_ONLY = "decode"  # decode only
    NONE = "none"  # threshold the soft field at 0.5


def reconstruct_hamiltonian(instance: Instance, heatmap: np.ndarray) -> Tour:
    """Greedy edge insertion driven by heatmap scores.

    Pairs are scanned by decreasing score, then increasing distance, then
    increasing (i, j).  An edge is kept when both endpoints have degree
    below 2 and it does not close a cycle on fewer than n cities.  Any
    fragments left after the scan are joined in the same order.
    """
    n = instance.n
    heatmap = np.asarray(heatmap, dtype=np.float64)
    iu, ju = np.triu_indices(n, k=1)
    score = 0.5 * (heatmap[iu, ju] + heatmap[ju, iu])
    order = np.lexsort((ju, iu, instance.dist[iu, ju], -score))
    cand_i, cand_j = iu[order], ju[order]

    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    degree = [0] * n
    nbrs = [[] for _ in range(n)]
    n_edges = 0

    def add(a, b):
        nonlocal n_edges
        degree[a] += 1
        degree[b] += 1
        nbrs[a].append(b)
        nbrs[b].append(a)
        parent[find(a)] = find(b)
        n_edges += 1

    for a, b in zip(cand_i.tolist(), cand_j.tolist()):
        if degree[a] >= 2 or degree[b] >= 2:
            continue
        if find(a) == find(b) and n_edges < n - 1:
            continue
        add(a, b)
        if n_edges == n:
            break

    if n_edges < n:
        # join remaining fragments through their endpoints, same ordering
        for a, b in zip(cand_i.tolist(), cand_j.tolist()):
            if n_edges == n:
                break
            if degree[a] < 2 and degree[b] < 2 and (find(a) != find(b) or n_edges == n - 1):
                add(a, b)

    tour = [0]
    prev, cur = -1, 0
    for _ in range(n - 1):
        nxt = nbrs[cur][0] if nbrs[cur][0] != prev else nbrs[cur][1]
        tour.append(nxt)
        prev, cur = cur, nxt
    return Tour(tour)


def _project(instance: Instance, soft: np.ndarray, mode: ProjectionMode):
    mode = ProjectionMode(mode)
    if mode is ProjectionMode.NONE:
        adj = (soft > 0.5).astype(np.float64)
        np.fill_diagonal(adj, 0.0)
        return adj, None
    tour = reconstruct_hamiltonian(instance, soft)
    if mode is ProjectionMode.IDEQ:
        tour = two_opt(instance, tour)
    return tour_to_adjacency(tour), tour


def project_x0(instance: Instance, soft_x0: np.ndarray, mode=ProjectionMode.IDEQ) -> np.ndarray:
    """Binary clean-state estimate used to condition the posterior."""
    return _project(instance, soft_x0, mode)[0]


@dataclass(frozen=True)
class SolveConfig:
    schedule: DiffusionSchedule = field(default_factory=lambda: make_schedule(1000, 1e-4, 0.02, 20))
    refinement_rounds: int = 3
    renoise_fraction: float = 0.15
    samples: int = 1
    projection_mode: ProjectionMode = ProjectionMode.IDEQ
    final_two_opt: bool = False
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "projection_mode", ProjectionMode(self.projection_mode))
        if self.refinement_rounds < 0:
            raise ConfigError("refinement_rounds must be >= 0")
        if self.samples < 1:
            raise ConfigError("samples must be >= 1")
        if not 0.0 < self.renoise_fraction < 1.0:
            raise ConfigError("renoise_fraction must lie strictly inside (0, 1)")

    @property
    def refine_start(self) -> int:
        return max(1, int(round(self.renoise_fraction * self.schedule.T)))

    @property
    def refine_steps(self) -> int:
        n_inf = len(self.schedule.inference_steps)
        return max(1, int(round(self.renoise_fraction * n_inf)))


@dataclass
class SolveResult:
    tour: Tour
    length: float
    round_lengths: list
    wall_time: float
    seed: int


def _as_denoiser(model):
    if isinstance(model, Checkpoint):
        return model.denoiser()
    if callable(model):
        return model
    raise ConfigError(f"cannot use {type(model).__name__} as a denoiser")


def _final_tour(instance, soft, config: SolveConfig) -> Tour:
    tour = reconstruct_hamiltonian(instance, soft)
    if config.projection_mode is ProjectionMode.IDEQ or config.final_two_opt:
        tour = two_opt(instance, tour)
    return tour


def _backward(instance, denoiser, config: SolveConfig, steps, x_t, rng) -> Tour:
    schedule = config.schedule
    for k, t in enumerate(steps):
        soft = denoiser(instance, x_t, int(t))
        if k == len(steps) - 1:
            return _final_tour(instance, soft, config)
        x0_hat, _ = _project(instance, soft, config.projection_mode)
        post = posterior_probs(x_t, x0_hat, int(t), schedule, s=int(steps[k + 1]))
        x_t = posterior_sample(post, rng)
    raise ConfigError("empty inference schedule")


def _solve_once(instance, denoiser, config: SolveConfig, seed: int):
    rng = np.random.default_rng(seed)
    schedule = config.schedule
    x_t = init_noise(instance.n, rng)
    best = _backward(instance, denoiser, config, schedule.inference_steps, x_t, rng)
    best_len = tour_length(instance, best)
    rounds = [best_len]
    t_start = config.refine_start
    steps = schedule.truncated_steps(t_start, config.refine_steps)
    for _ in range(config.refinement_rounds):
        x_t = forward_sample(tour_to_adjacency(best), t_start, schedule, rng)
        cand = _backward(instance, denoiser, config, steps, x_t, rng)
        cand_len = tour_length(instance, cand)
        if cand_len < best_len:
            best, best_len = cand, cand_len
        rounds.append(best_len)
    return best, rounds


def solve(instance: Instance, checkpoint, config: SolveConfig | None = None) -> SolveResult:
    """Run the projected backward process, refinement rounds and sampling.

    ``checkpoint`` is a :class:`Checkpoint` or any callable
    ``(instance, x_t, t) -> soft field``.  Replica ``r`` uses seed
    ``config.seed + r``; the shortest replica tour is returned.
    """
    config = config or SolveConfig()
    if instance.n < 5:
        raise InvalidSizeError(f"solve needs n >= 5, got {instance.n}")
    denoiser = _as_denoiser(checkpoint)
    T_model = getattr(denoiser, "T", None)
    if T_model is not None and T_model != config.schedule.T:
        raise ConfigError(f"checkpoint trained with T={T_model}, schedule has T={config.schedule.T}")

    start = time.perf_counter()
    best = None
    for r in range(config.samples):
        tour, rounds = _solve_once(instance, denoiser, config, config.seed + r)
        if best is None or rounds[-1] < best[1][-1]:
            best = (tour, rounds)
    tour = best[0].canonical()
    return SolveResult(tour, tour_length(instance, tour), best[1], time.perf_counter() - start, config.seed)


def with_seed(config: SolveConfig, seed: int) -> SolveConfig:
    return replace(config, seed=seed)
