"""scikit-learn style front end for the diffusion TSP solver."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .bench import reference_tour
from .core import tour_length
from .denoiser import Checkpoint, TrainingConfig, train
from .diffusion import make_schedule
from .solver import SolveConfig, solve
from .validation import check_instances, check_tours, same_size


class DiffusionTSPSolver(BaseEstimator):
    """Learn a denoiser from labelled instances, then solve new instances.

    ``fit(X, y)`` takes instances (``Instance`` objects or ``(n, 2)``
    coordinate arrays) and their optimal tours; when ``y`` is omitted the
    instances are labelled with Held-Karp (n <= 18) or the best of many
    2-opt restarts.  With ``warm_start=True`` a second ``fit`` continues
    from the current checkpoint, which is how a Dirac-trained model is
    fine-tuned with ``target_mode="equivalence"``.

    ``predict(X)`` returns one visiting order per instance.
    """

    def __init__(self, n_timesteps=1000, beta_min=1e-4, beta_max=0.02, n_inference=20, hidden=32,
                 epochs=30, learning_rate=0.02, momentum=0.9, batch_size=8, target_mode="dirac",
                 redraw="epoch", projection_mode="ideq", final_two_opt=False, refinement_rounds=3,
                 renoise_fraction=0.15, samples=1, warm_start=False, label_restarts=200,
                 random_state=0):
        self.n_timesteps = n_timesteps
        self.beta_min = beta_min
        self.beta_max = beta_max
        self.n_inference = n_inference
        self.hidden = hidden
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.batch_size = batch_size
        self.target_mode = target_mode
        self.redraw = redraw
        self.projection_mode = projection_mode
        self.final_two_opt = final_two_opt
        self.refinement_rounds = refinement_rounds
        self.renoise_fraction = renoise_fraction
        self.samples = samples
        self.warm_start = warm_start
        self.label_restarts = label_restarts
        self.random_state = random_state

    @classmethod
    def from_checkpoint(cls, checkpoint: Checkpoint, **params) -> "DiffusionTSPSolver":
        cfg = checkpoint.config
        defaults = dict(n_timesteps=checkpoint.T, beta_min=cfg.beta_min, beta_max=cfg.beta_max,
                        hidden=checkpoint.params.hidden)
        defaults.update(params)
        est = cls(**defaults)
        est.checkpoint_ = checkpoint
        return est

    def _training_config(self, n):
        return TrainingConfig(
            target_mode=self.target_mode, learning_rate=self.learning_rate, momentum=self.momentum,
            epochs=self.epochs, batch_size=self.batch_size, seed=self.random_state, n=n,
            hidden=self.hidden, T=self.n_timesteps, beta_min=self.beta_min, beta_max=self.beta_max,
            redraw=self.redraw,
        )

    def solve_config(self) -> SolveConfig:
        return SolveConfig(
            schedule=make_schedule(self.n_timesteps, self.beta_min, self.beta_max, self.n_inference),
            refinement_rounds=self.refinement_rounds, renoise_fraction=self.renoise_fraction,
            samples=self.samples, projection_mode=self.projection_mode,
            final_two_opt=self.final_two_opt, seed=self.random_state,
        )

    def fit(self, X, y=None):
        instances = check_instances(X)
        n = same_size(instances)
        if y is None:
            tours = [reference_tour(inst, self.label_restarts, self.random_state + k)
                     for k, inst in enumerate(instances)]
        else:
            tours = check_tours(y, instances)
        init = getattr(self, "checkpoint_", None) if self.warm_start else None
        self.checkpoint_ = train(self._training_config(n), list(zip(instances, tours)), init=init)
        self.loss_curve_ = list(self.checkpoint_.loss_curve)
        return self

    def solve(self, X):
        """Full :class:`~difftsp.solver.SolveResult` for every instance."""
        check_is_fitted(self, "checkpoint_")
        config = self.solve_config()
        return [solve(inst, self.checkpoint_, config) for inst in check_instances(X)]

    def predict(self, X):
        orders = [res.tour.order.copy() for res in self.solve(X)]
        if len({o.size for o in orders}) == 1:
            return np.stack(orders)
        return orders

    def score(self, X, y=None):
        """Negative mean optimality gap (higher is better)."""
        instances = check_instances(X)
        if y is None:
            refs = [reference_tour(inst, self.label_restarts, self.random_state + k)
                    for k, inst in enumerate(instances)]
        else:
            refs = check_tours(y, instances)
        found = self.predict(instances)
        gaps = [(tour_length(inst, f) - tour_length(inst, r)) / tour_length(inst, r)
                for inst, f, r in zip(instances, found, refs)]
        return -float(np.mean(gaps))
