"""Two-state categorical diffusion over undirected edge variables.

Edge fields are dense symmetric ``(n, n)`` float arrays with a zero
diagonal.  Binary fields hold 0/1; soft fields hold P(edge state = 1).
Every random draw is made once per unordered pair and mirrored, so
symmetry holds exactly.

Timesteps run from 1 to T; ``alpha_bar`` is stored with a leading 1.0 so
that ``alpha_bar[0]`` is the clean state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError, DimensionError, TimestepError

UNIFORM = np.full((2, 2), 0.5)


@dataclass(frozen=True, eq=False)
class DiffusionSchedule:
    T: int
    betas: np.ndarray  # betas[t - 1] is the flip intensity of step t
    alpha_bar: np.ndarray  # length T + 1, alpha_bar[0] == 1
    inference_steps: np.ndarray
    kind: str = "linear"

    def check_t(self, t: int) -> int:
        t = int(t)
        if not 1 <= t <= self.T:
            raise TimestepError(f"timestep {t} outside 1..{self.T}")
        return t

    def beta(self, t: int) -> float:
        return float(self.betas[self.check_t(t) - 1])

    def Q(self, t: int) -> np.ndarray:
        """One-step transition matrix, rows indexed by the previous state."""
        b = self.beta(t)
        return (1.0 - b) * np.eye(2) + b * UNIFORM

    def Q_bar(self, t: int) -> np.ndarray:
        """Cumulative transition matrix from the clean state to step t."""
        t = int(t)
        if not 0 <= t <= self.T:
            raise TimestepError(f"timestep {t} outside 0..{self.T}")
        a = float(self.alpha_bar[t])
        return a * np.eye(2) + (1.0 - a) * UNIFORM

    def Q_between(self, s: int, t: int) -> np.ndarray:
        """Transition matrix from step s to a later step t (product of Q)."""
        ratio = float(self.alpha_bar[t] / self.alpha_bar[s])
        return ratio * np.eye(2) + (1.0 - ratio) * UNIFORM

    def truncated_steps(self, t_start: int, n_steps: int) -> np.ndarray:
        return _spaced_steps(t_start, n_steps)

    def config(self) -> dict:
        return {
            "T": self.T,
            "beta_min": float(self.betas[0]),
            "beta_max": float(self.betas[-1]),
            "n_inference": len(self.inference_steps),
            "kind": self.kind,
        }


def _spaced_steps(t_start: int, n_steps: int) -> np.ndarray:
    """``n_steps`` strictly decreasing integers from ``t_start`` down to 1."""
    # spacing >= 1 once n_steps <= t_start, so rounding never merges steps
    n_steps = max(1, min(int(n_steps), int(t_start)))
    return np.rint(np.linspace(t_start, 1, n_steps)).astype(np.int64)


def make_schedule(T: int = 1000, beta_min: float = 1e-4, beta_max: float = 0.02,
                  n_inference: int = 50, kind: str = "linear") -> DiffusionSchedule:
    """Build a schedule with linearly interpolated betas (or a cosine one)."""
    if T < 1:
        raise ConfigError(f"T must be >= 1, got {T}")
    if not 1 <= n_inference <= T:
        raise ConfigError(f"n_inference must be in 1..T, got {n_inference}")
    if kind == "linear":
        if not 0.0 < beta_min <= beta_max < 1.0:
            raise ConfigError(f"need 0 < beta_min <= beta_max < 1, got {beta_min}, {beta_max}")
        betas = np.linspace(beta_min, beta_max, T) if T > 1 else np.array([beta_min])
    elif kind == "cosine":
        s = 0.008
        steps = np.arange(T + 1) / T
        f = np.cos((steps + s) / (1 + s) * np.pi / 2) ** 2
        betas = np.clip(1.0 - f[1:] / f[:-1], 1e-8, 0.999)
    else:
        raise ConfigError(f"unknown schedule kind {kind!r}")
    alpha_bar = np.concatenate(([1.0], np.cumprod(1.0 - betas)))
    betas.setflags(write=False)
    alpha_bar.setflags(write=False)
    inference = _spaced_steps(T, n_inference)
    inference.setflags(write=False)
    return DiffusionSchedule(int(T), betas, alpha_bar, inference, kind)


def _upper(n):
    return np.triu_indices(n, k=1)


def _mirror(n: int, values: np.ndarray) -> np.ndarray:
    out = np.zeros((n, n))
    iu = _upper(n)
    out[iu] = values
    out[(iu[1], iu[0])] = values
    return out


def _check_field(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != x.shape[1]:
        raise DimensionError(f"edge field must be square, got shape {x.shape}")
    return x


def init_noise(n: int, rng: np.random.Generator) -> np.ndarray:
    """Stationary draw: every unordered pair is 1 with probability 1/2."""
    iu = _upper(n)
    return _mirror(n, (rng.random(iu[0].size) < 0.5).astype(np.float64))


def forward_sample(x0: np.ndarray, t: int, schedule: DiffusionSchedule,
                   rng: np.random.Generator) -> np.ndarray:
    """Draw x_t ~ q(x_t | x_0) edge by edge."""
    x0 = _check_field(x0)
    t = int(t)
    if not 0 <= t <= schedule.T:
        raise TimestepError(f"timestep {t} outside 0..{schedule.T}")
    n = x0.shape[0]
    iu = _upper(n)
    a = schedule.alpha_bar[t]
    keep = a + (1.0 - a) / 2.0
    flip = rng.random(iu[0].size) >= keep
    vals = x0[iu]
    return _mirror(n, np.where(flip, 1.0 - vals, vals))


def posterior_probs(x_t: np.ndarray, x0_hat: np.ndarray, t: int, schedule: DiffusionSchedule,
                    s: int | None = None) -> np.ndarray:
    """P(x_s = 1 | x_t, x_0) per edge, with s = t - 1 unless given.

    Proportional to Q_{s->t}[k, x_t] * Q_bar_s[x_0, k], normalised by
    Q_bar_t[x_0, x_t].  For s = t - 1, Q_{s->t} is Q_t.
    """
    x_t = _check_field(x_t)
    x0_hat = _check_field(x0_hat)
    if x_t.shape != x0_hat.shape:
        raise DimensionError(f"shape mismatch {x_t.shape} vs {x0_hat.shape}")
    t = schedule.check_t(t)
    s = t - 1 if s is None else int(s)
    if not 0 <= s < t:
        raise TimestepError(f"target step {s} must satisfy 0 <= s < t = {t}")
    Q_st = schedule.Q(t) if s == t - 1 else schedule.Q_between(s, t)
    Qb_s = schedule.Q_bar(s)
    Qb_t = schedule.Q_bar(t)

    xt = (x_t > 0.5).astype(np.int64)
    x0 = (x0_hat > 0.5).astype(np.int64)
    w1 = Q_st[1, xt] * Qb_s[x0, 1]
    denom = Qb_t[x0, xt]
    probs = w1 / denom
    np.fill_diagonal(probs, 0.0)
    return np.clip(probs, 0.0, 1.0)


def posterior_sample(posterior: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Independent Bernoulli draw per unordered pair."""
    p = _check_field(posterior)
    n = p.shape[0]
    iu = _upper(n)
    return _mirror(n, (rng.random(iu[0].size) < p[iu]).astype(np.float64))
