"""Benchmark and ablation harness.

Seed derivation: the cell (instance index i, repetition r) of a run with
top-level seed s uses ``derive_seed(s, i, r)``, the first 32-bit word of
``numpy.random.SeedSequence([s, i, r])``.  All methods share the seed of
a cell, so method comparisons are paired.
"""

from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.stats import binomtest

from .core import Instance, Tour, tour_length
from .exact import HELD_KARP_MAX_N, held_karp
from .exceptions import ConfigError
from .local_search import random_tour, two_opt
from .report import BenchRow, VarianceReport
from .solver import ProjectionMode, SolveConfig, solve

log = logging.getLogger(__name__)

THREADS_ENV = "DIFFTSP_THREADS"


def derive_seed(seed: int, *keys: int) -> int:
    return int(np.random.SeedSequence([int(seed), *map(int, keys)]).generate_state(1)[0])


def default_jobs() -> int:
    value = os.environ.get(THREADS_ENV)
    return max(1, int(value)) if value else (os.cpu_count() or 1)


@dataclass(frozen=True)
class Method:
    name: str
    run: Callable[[Instance, int], Tour]


def random_two_opt_method(name: str = "2opt-random") -> Method:
    def run(instance, seed):
        return two_opt(instance, random_tour(instance.n, np.random.default_rng(seed)))

    return Method(name, run)


def diffusion_method(name: str, model, config: SolveConfig) -> Method:
    def run(instance, seed):
        return solve(instance, model, replace(config, seed=seed)).tour

    return Method(name, run)


def best_of_two_opt(instance: Instance, restarts: int = 200, seed: int = 0) -> Tour:
    """Shortest 2-opt local optimum over independent random starts."""
    rng = np.random.default_rng(seed)
    best, best_len = None, np.inf
    for _ in range(restarts):
        tour = two_opt(instance, random_tour(instance.n, rng))
        length = tour_length(instance, tour)
        if length < best_len:
            best, best_len = tour, length
    return best.canonical()


def reference_tour(instance: Instance, restarts: int = 200, seed: int = 0) -> Tour:
    """Held-Karp optimum when feasible, else the best of many 2-opt restarts."""
    if instance.n <= HELD_KARP_MAX_N:
        return held_karp(instance).tour
    return best_of_two_opt(instance, restarts, seed)


def reference_lengths(instances, restarts: int = 200, seed: int = 0) -> dict:
    return {inst.id: tour_length(inst, reference_tour(inst, restarts, derive_seed(seed, k)))
            for k, inst in enumerate(instances)}


@dataclass
class BenchResult:
    rows: list
    variance: VarianceReport
    errors: list = field(default_factory=list)


def run_benchmark(instances, methods, repetitions: int = 1, seed: int = 0, references=None,
                  length_fn=None, n_jobs: int | None = 1, record_time: bool = False) -> BenchResult:
    """Run every method on every instance ``repetitions`` times.

    ``references`` maps instance id to reference length (or is a callable
    on the instance).  Instances without a reference still produce rows,
    with an empty reference, and an entry in ``errors``.
    """
    instances = list(instances)
    methods = list(methods)
    if repetitions < 1:
        raise ConfigError("repetitions must be >= 1")
    length_fn = length_fn or tour_length
    refs = {}
    errors = []
    for inst in instances:
        try:
            refs[inst.id] = references(inst) if callable(references) else (references or {})[inst.id]
        except KeyError:
            refs[inst.id] = None
            errors.append(f"{inst.id}: no reference length")
            log.warning("no reference length for %s", inst.id)

    cells = [(i, r, m) for i in range(len(instances)) for r in range(repetitions) for m in range(len(methods))]

    def run_cell(cell):
        i, r, m = cell
        inst, method = instances[i], methods[m]
        cell_seed = derive_seed(seed, i, r)
        start = time.perf_counter()
        tour = method.run(inst, cell_seed)
        elapsed = time.perf_counter() - start
        return BenchRow(inst.id, inst.n, method.name, float(length_fn(inst, tour)), refs[inst.id],
                        elapsed if record_time else None, cell_seed)

    jobs = default_jobs() if n_jobs is None else n_jobs
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(run_cell, cells))
    else:
        rows = [run_cell(c) for c in cells]
    rows.sort(key=BenchRow.sort_key)
    return BenchResult(rows, VarianceReport.from_rows(rows), errors)


ABLATION_PRIMARY = ("ideq+equivalence", "ideq+dirac", "decode+equivalence", "decode+dirac")
ABLATION_EXTRAS = ("threshold+equivalence", "threshold+dirac")


def ablation_methods(checkpoints: dict, config: SolveConfig, extras: bool = True) -> list[Method]:
    """Inference variant x checkpoint grid.

    ``ideq``: decode + 2-opt inside every step.  ``decode``: decode only
    inside the steps, 2-opt once at the end.  ``threshold`` (extra):
    thresholded field inside the steps, no refinement rounds, decode +
    2-opt at the end.
    """
    missing = {"dirac", "equivalence"} - set(checkpoints)
    if missing:
        raise ConfigError(f"missing checkpoint(s): {sorted(missing)}")
    out = []
    variants = {
        "ideq": replace(config, projection_mode=ProjectionMode.IDEQ, final_two_opt=False),
        "decode": replace(config, projection_mode=ProjectionMode.DECODE_ONLY, final_two_opt=True),
    }
    if extras:
        variants["threshold"] = replace(config, projection_mode=ProjectionMode.NONE, final_two_opt=True,
                                      refinement_rounds=0)
    for variant, cfg in variants.items():
        for ckpt in ("equivalence", "dirac"):
            if checkpoints[ckpt] is None:
                raise ConfigError(f"checkpoint {ckpt!r} is None")
            out.append(diffusion_method(f"{variant}+{ckpt}", checkpoints[ckpt], cfg))
    return out


def run_ablation(instances, checkpoints: dict, config: SolveConfig, seed: int = 0, references=None,
                 repetitions: int = 1, extras: bool = True, n_jobs: int | None = 1) -> BenchResult:
    methods = ablation_methods(checkpoints, config, extras)
    return run_benchmark(instances, methods, repetitions, seed, references, n_jobs=n_jobs)


@dataclass(frozen=True)
class SignTest:
    wins: int
    losses: int
    ties: int
    p_value: float

    def significant(self, alpha: float = 0.05) -> bool:
        return self.p_value < alpha


def sign_test(candidate, baseline, tol: float = 1e-12) -> SignTest:
    """One-sided paired sign test that ``candidate`` values are smaller.

    Pairs within ``tol`` of each other count as ties and are dropped.
    """
    a = np.asarray(candidate, dtype=float)
    b = np.asarray(baseline, dtype=float)
    diff = a - b
    wins = int(np.sum(diff < -tol))
    losses = int(np.sum(diff > tol))
    ties = int(diff.size - wins - losses)
    p = binomtest(wins, wins + losses, 0.5, alternative="greater").pvalue if wins + losses else 1.0
    return SignTest(wins, losses, ties, float(p))


def per_instance_mean_gaps(rows, method: str) -> dict:
    return VarianceReport.from_rows([r for r in rows if r.method == method]).means(method)
