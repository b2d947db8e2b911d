import numpy as np
import pytest

from difftsp.diffusion import (
    forward_sample,
    init_noise,
    make_schedule,
    posterior_probs,
    posterior_sample,
)
from difftsp.exceptions import ConfigError, DimensionError, TimestepError


def matrix_chain(schedule, s, t):
    """Explicit product Q_{s+1} ... Q_t (identity when s == t)."""
    out = np.eye(2)
    for k in range(s + 1, t + 1):
        out = out @ schedule.Q(k)
    return out


def bayes_posterior(schedule, x0, xt, s, t):
    """P(x_s = 1 | x_t, x_0) by enumerating both states of x_s."""
    prior = matrix_chain(schedule, 0, s)[x0]
    like = matrix_chain(schedule, s, t)[:, xt]
    joint = prior * like
    return joint[1] / joint.sum()


def test_alpha_bar_is_product_of_one_step_keeps():
    sched = make_schedule(200, 1e-3, 0.05, 10)
    for t in (1, 17, 100, 200):
        chain = matrix_chain(sched, 0, t)
        assert np.allclose(chain, sched.Q_bar(t), atol=1e-13)
    assert sched.alpha_bar[0] == 1.0
    assert np.all(np.diff(sched.alpha_bar) < 0)


def test_rows_are_stochastic_and_uniform_is_stationary():
    sched = make_schedule()
    for t in (1, 500, 1000):
        Q = sched.Q(t)
        assert np.allclose(Q.sum(axis=1), 1.0)
        assert np.allclose(np.array([0.5, 0.5]) @ Q, [0.5, 0.5])


@pytest.mark.parametrize("kind", ["linear", "cosine"])
def test_posterior_matches_enumeration(kind):
    sched = make_schedule(300, 1e-3, 0.03, 10, kind=kind)
    points = np.linspace(1, 300, 20).astype(int)
    worst = 0.0
    for t in points:
        for x0 in (0, 1):
            for xt in (0, 1):
                x_t = np.full((3, 3), float(xt))
                x_0 = np.full((3, 3), float(x0))
                got = posterior_probs(x_t, x_0, t, sched)[0, 1]
                worst = max(worst, abs(got - bayes_posterior(sched, x0, xt, t - 1, t)))
    assert worst < 1e-12


def test_jump_posterior_matches_enumeration():
    sched = make_schedule(120, 1e-3, 0.04, 10)
    for t, s in [(120, 80), (50, 10), (7, 0), (33, 32)]:
        for x0 in (0, 1):
            for xt in (0, 1):
                got = posterior_probs(np.full((3, 3), xt), np.full((3, 3), x0), t, sched, s=s)[0, 1]
                assert got == pytest.approx(bayes_posterior(sched, x0, xt, s, t), abs=1e-12)


def test_posterior_at_t1_recovers_x0():
    sched = make_schedule(50, 1e-3, 0.02, 5)
    x0 = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=float)
    post = posterior_probs(1.0 - x0, x0, 1, sched)
    assert np.allclose(post[~np.eye(3, dtype=bool)], x0[~np.eye(3, dtype=bool)])


def test_forward_marginals_monte_carlo():
    sched = make_schedule()
    rng = np.random.default_rng(99)
    n = 448  # n(n-1)/2 = 100,128 edges
    for t in (1, 100, 400, 1000):
        for x0_val in (0.0, 1.0):
            x0 = np.full((n, n), x0_val)
            np.fill_diagonal(x0, 0.0)
            x_t = forward_sample(x0, t, sched, rng)
            iu = np.triu_indices(n, 1)
            ones = x_t[iu].mean()
            p = sched.Q_bar(t)[int(x0_val), 1]
            sigma = np.sqrt(p * (1 - p) / iu[0].size)
            assert abs(ones - p) <= 3 * sigma + 1e-15
            assert np.array_equal(x_t, x_t.T)


def test_noise_and_samples_are_symmetric_binary():
    rng = np.random.default_rng(0)
    x = init_noise(30, rng)
    assert np.array_equal(x, x.T) and set(np.unique(x)) <= {0.0, 1.0}
    assert np.all(np.diag(x) == 0)
    post = posterior_sample(np.full((30, 30), 0.3), rng)
    assert np.array_equal(post, post.T)


def test_inference_steps_strictly_decrease_to_one():
    for T, k in [(1000, 50), (1000, 20), (10, 10), (7, 3), (1, 1)]:
        steps = make_schedule(T, 1e-4, 0.02, k).inference_steps
        assert steps[0] == T and steps[-1] == 1 and len(steps) == k
        assert np.all(np.diff(steps) < 0)


def test_errors():
    sched = make_schedule(10, 1e-3, 0.02, 5)
    x = np.zeros((4, 4))
    with pytest.raises(TimestepError):
        posterior_probs(x, x, 0, sched)
    with pytest.raises(TimestepError):
        forward_sample(x, 11, sched, np.random.default_rng(0))
    with pytest.raises(DimensionError):
        posterior_probs(x, np.zeros((3, 3)), 2, sched)
    with pytest.raises(ConfigError):
        make_schedule(10, 0.1, 0.01, 5)
    with pytest.raises(ConfigError):
        make_schedule(10, 1e-3, 0.02, 11)
