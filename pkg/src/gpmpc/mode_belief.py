"""Recursive Bayesian belief over discrete human modes.

Each mode has its own force model; an observed wrench updates the belief
through the per-mode Gaussian likelihood (diagonal over the six axes),
computed in log space to avoid underflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from gpmpc.gp_force import N_POSE


@dataclass
class Belief:
    """Probability vector over N modes; kept normalized."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float).reshape(-1)
        if len(p) < 1:
            raise ValueError("belief needs at least one mode")
        if np.any(p < 0) or not math.isclose(float(p.sum()), 1.0, abs_tol=1e-9):
            raise ValueError("belief must be a normalized probability vector")
        self.probs = p / p.sum()

    @classmethod
    def uniform(cls, n: int) -> "Belief":
        return cls(np.full(n, 1.0 / n))

    @property
    def n_modes(self) -> int:
        return len(self.probs)


def log_likelihood(f, mu, var) -> float:
    """Diagonal multivariate normal log density of a wrench."""
    f = np.asarray(f, dtype=float).reshape(N_POSE)
    mu = np.asarray(mu, dtype=float).reshape(N_POSE)
    var = np.maximum(np.asarray(var, dtype=float).reshape(N_POSE), 1e-12)
    return float(
        -0.5 * np.sum((f - mu) ** 2 / var)
        - 0.5 * np.sum(np.log(2.0 * math.pi * var))
    )


def update(belief: Belief, f, x, models) -> Belief:
    """Bayes update from an observed wrench at a pose.

    b+[n] is proportional to b[n] times the mode-n Gaussian likelihood of
    f, then renormalized. Computed in log space; a uniformly degenerate
    likelihood (all modes at -inf) leaves the belief unchanged.
    """
    if len(models) != belief.n_modes:
        raise ValueError("models and belief disagree on mode count")
    logw = np.empty(belief.n_modes)
    for n, model in enumerate(models):
        mu, var = model.posterior(x)
        prior = belief.probs[n]
        logw[n] = (math.log(prior) if prior > 0 else -np.inf) + log_likelihood(f, mu, var)
    if not np.any(np.isfinite(logw)):
        return Belief(belief.probs.copy())
    logw -= np.max(logw[np.isfinite(logw)])
    w = np.exp(logw)
    return Belief(w / w.sum())


def decay_floor(belief: Belief, floor: float) -> Belief:
    """Clamp every mode probability to >= floor, then renormalize.

    Prevents absorbing-state lock-in when the human switches goal.
    """
    n = belief.n_modes
    if not 0 <= floor < 1.0 / n:
        raise ValueError("floor must be in [0, 1/N)")
    p = np.maximum(belief.probs, floor)
    return Belief(p / p.sum())
