import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import chisquare

from difftsp.core import Tour, generate_random_instance, tour_length
from difftsp.exact import brute_force
from difftsp.exceptions import InvalidSizeError, MoveError
from difftsp.local_search import (
    TwoChangeMove,
    apply_two_change,
    best_move,
    crossing_pairs,
    is_two_opt_fixed_point,
    random_tour,
    sample_equivalence_target,
    two_change_delta,
    two_opt,
    valid_moves,
)

from conftest import FIG_LOCAL_OPT, FIG_START


def test_valid_move_count():
    for n in range(4, 15):
        assert len(valid_moves(n)) == n * (n - 3) // 2


@pytest.mark.parametrize("i,j", [(0, 1), (2, 2), (3, 1), (0, 7), (0, 8)])
def test_invalid_moves_rejected(i, j):
    with pytest.raises(MoveError):
        apply_two_change(Tour(range(8)), TwoChangeMove(i, j))


def test_move_reverses_segment():
    out = apply_two_change(Tour(range(8)), TwoChangeMove(1, 5))
    assert out.order.tolist() == [0, 1, 5, 4, 3, 2, 6, 7]


@settings(max_examples=80, deadline=None)
@given(st.integers(5, 20), st.integers(0, 10_000))
def test_delta_matches_length_difference(n, seed):
    rng = np.random.default_rng(seed)
    inst = generate_random_instance(n, seed)
    tour = random_tour(n, rng)
    i, j = valid_moves(n)[rng.integers(n * (n - 3) // 2)]
    move = TwoChangeMove(int(i), int(j))
    after = apply_two_change(tour, move)
    assert two_change_delta(inst, tour, move) == pytest.approx(
        tour_length(inst, after) - tour_length(inst, tour), abs=1e-12)


def test_crossing_layout_descends_to_local_optimum(fig_instance):
    start = Tour(FIG_START)
    assert crossing_pairs(fig_instance, start) == [(1, 7), (2, 6), (3, 5)]
    result, trace = two_opt(fig_instance, start, return_trace=True)
    assert [(m.i, m.j) for m in trace] == [(1, 7), (2, 6), (3, 5)]
    assert result == Tour(FIG_LOCAL_OPT)
    assert tour_length(fig_instance, start) == pytest.approx(3.46305, abs=1e-5)
    assert tour_length(fig_instance, result) == pytest.approx(2.34164, abs=1e-5)
    assert crossing_pairs(fig_instance, result) == []


def test_local_optimum_is_not_global(fig_instance):
    local = Tour(FIG_LOCAL_OPT)
    assert is_two_opt_fixed_point(fig_instance, local)
    assert brute_force(fig_instance).length < tour_length(fig_instance, local) - 1e-6


def test_each_crossing_removal_shortens(fig_instance):
    start = Tour(FIG_START)
    for i, j in crossing_pairs(fig_instance, start):
        assert two_change_delta(fig_instance, start, TwoChangeMove(i, j)) < 0


@settings(max_examples=40, deadline=None)
@given(st.integers(4, 40), st.integers(0, 10_000))
def test_two_opt_contract(n, seed):
    inst = generate_random_instance(n, seed)
    tour = random_tour(n, np.random.default_rng(seed))
    out = two_opt(inst, tour)
    assert is_two_opt_fixed_point(inst, out)
    assert tour_length(inst, out) <= tour_length(inst, tour) + 1e-12
    assert two_opt(inst, out) == out
    assert crossing_pairs(inst, out) == []


def test_best_move_tie_breaks_to_smallest_pair():
    # square with a crossing: both position pairs give the same delta
    from difftsp.core import Instance
    inst = Instance([[0, 0], [1, 1], [1, 0], [0, 1]])
    move, delta = best_move(inst, [0, 1, 2, 3])
    assert (move.i, move.j) == (0, 2)
    assert delta < 0


def test_equivalence_sampler_small_n():
    with pytest.raises(InvalidSizeError):
        sample_equivalence_target(Tour(range(4)), np.random.default_rng(0))


def test_equivalence_sampler_moves_are_uniform():
    n = 10
    rng = np.random.default_rng(2024)
    moves = [tuple(m) for m in valid_moves(n).tolist()]
    index = {m: k for k, m in enumerate(moves)}
    first = np.zeros(len(moves))
    second = np.zeros(len(moves))
    joint = np.zeros(len(moves) ** 2)
    base = Tour(range(n))
    for _ in range(10_000):
        out, (m1, m2) = sample_equivalence_target(base, rng, return_moves=True)
        a, b = index[(m1.i, m1.j)], index[(m2.i, m2.j)]
        first[a] += 1
        second[b] += 1
        joint[a * len(moves) + b] += 1
        assert out == apply_two_change(apply_two_change(base, m1), m2)
    assert chisquare(first).pvalue > 1e-3
    assert chisquare(second).pvalue > 1e-3
    assert chisquare(joint).pvalue > 1e-3


def test_equivalence_targets_are_hamiltonian_and_varied():
    rng = np.random.default_rng(0)
    base = Tour(range(12))
    seen = {sample_equivalence_target(base, rng) for _ in range(50)}
    assert len(seen) > 10
