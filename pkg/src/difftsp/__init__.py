"""Diffusion-based solver for the 2D Euclidean travelling salesman problem."""

from .bench import ablation_methods, derive_seed, reference_tour, run_ablation, run_benchmark, sign_test
from .core import (
    GapReport,
    Instance,
    Tour,
    adjacency_to_tour,
    generate_random_instance,
    optimality_gap,
    tour_length,
    tour_to_adjacency,
)
from .denoiser import (
    Checkpoint,
    TargetMode,
    TrainingConfig,
    load_checkpoint,
    loss_and_grad,
    oracle_denoise,
    save_checkpoint,
    train,
)
from .diffusion import DiffusionSchedule, make_schedule, posterior_probs
from .estimator import DiffusionTSPSolver
from .exact import brute_force, held_karp, solve_exact
from .local_search import apply_two_change, sample_equivalence_target, two_opt
from .report import BenchRow, VarianceReport
from .solver import ProjectionMode, SolveConfig, SolveResult, reconstruct_hamiltonian, solve
from .tsplib import load_tsplib, parse_tsplib

__all__ = [
    "BenchRow", "Checkpoint", "DiffusionSchedule", "DiffusionTSPSolver", "GapReport", "Instance",
    "ProjectionMode", "SolveConfig", "SolveResult", "TargetMode", "Tour", "TrainingConfig",
    "VarianceReport", "ablation_methods", "adjacency_to_tour", "apply_two_change", "brute_force",
    "derive_seed", "generate_random_instance", "held_karp", "load_checkpoint", "load_tsplib",
    "loss_and_grad", "make_schedule", "optimality_gap", "oracle_denoise", "parse_tsplib",
    "posterior_probs", "reconstruct_hamiltonian", "reference_tour", "run_ablation", "run_benchmark",
    "sample_equivalence_target", "save_checkpoint", "sign_test", "solve", "solve_exact",
    "tour_length", "tour_to_adjacency", "train", "two_opt",
]
