"""Tests for the discrete-mode belief update."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import multivariate_normal

from gpmpc.gp_force import N_POSE
from gpmpc.mode_belief import Belief, decay_floor, log_likelihood, update


class _FixedModel:
    """Force model stub returning the same posterior at every pose."""

    def __init__(self, mu, var):
        self.mu = np.asarray(mu, dtype=float)
        self.var = np.asarray(var, dtype=float)

    def posterior(self, x):
        return self.mu.copy(), self.var.copy()


def _model(mu0=0.0, var=1.0):
    mu = np.zeros(N_POSE)
    mu[0] = mu0
    return _FixedModel(mu, np.full(N_POSE, var))


class TestBelief:
    def test_uniform(self):
        b = Belief.uniform(4)
        np.testing.assert_allclose(b.probs, 0.25)

    def test_rejects_unnormalized(self):
        with pytest.raises(ValueError):
            Belief(np.array([0.5, 0.4]))

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            Belief(np.array([1.2, -0.2]))

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            Belief(np.array([]))


class TestLogLikelihood:
    def test_matches_scipy_density(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            f = rng.normal(size=N_POSE)
            mu = rng.normal(size=N_POSE)
            var = rng.uniform(0.1, 3.0, size=N_POSE)
            expect = multivariate_normal(mean=mu, cov=np.diag(var)).logpdf(f)
            np.testing.assert_allclose(log_likelihood(f, mu, var), expect, rtol=1e-12)

    def test_variance_floor_keeps_finite(self):
        v = log_likelihood(np.zeros(N_POSE), np.zeros(N_POSE), np.zeros(N_POSE))
        assert np.isfinite(v)


class TestUpdate:
    def test_likelihood_ratio_logistic(self):
        # Two unit-variance modes with axis-0 means 0 and 10; observing
        # f = (10, 0, ...) gives a log-likelihood gap of exactly 50, so
        # the posterior on the matching mode is 1 / (1 + e^-50).
        models = [_model(0.0), _model(10.0)]
        f = np.zeros(N_POSE)
        f[0] = 10.0
        b = update(Belief.uniform(2), f, np.zeros(N_POSE), models)
        np.testing.assert_allclose(b.probs[1], 1.0 / (1.0 + math.exp(-50.0)), rtol=1e-12)

    def test_symmetric_observation_keeps_uniform(self):
        models = [_model(-1.0), _model(1.0)]
        b = update(Belief.uniform(2), np.zeros(N_POSE), np.zeros(N_POSE), models)
        np.testing.assert_allclose(b.probs, 0.5)

    def test_zero_prior_stays_zero(self):
        models = [_model(0.0), _model(0.0)]
        b = update(Belief(np.array([1.0, 0.0])), np.zeros(N_POSE), np.zeros(N_POSE), models)
        np.testing.assert_allclose(b.probs, [1.0, 0.0])

    def test_sequential_updates_compose_like_batched_likelihood(self):
        # Updating twice with the same observation equals one update with
        # the squared likelihood ratio.
        models = [_model(0.0), _model(2.0)]
        f = np.zeros(N_POSE)
        f[0] = 2.0
        b1 = update(update(Belief.uniform(2), f, np.zeros(N_POSE), models), f, np.zeros(N_POSE), models)
        gap = log_likelihood(f, models[1].mu, models[1].var) - log_likelihood(
            f, models[0].mu, models[0].var
        )
        np.testing.assert_allclose(b1.probs[1], 1.0 / (1.0 + math.exp(-2.0 * gap)), rtol=1e-12)

    def test_model_count_mismatch_raises(self):
        with pytest.raises(ValueError):
            update(Belief.uniform(3), np.zeros(N_POSE), np.zeros(N_POSE), [_model()])


class TestDecayFloor:
    def test_collapsed_belief_regains_mass(self):
        b = decay_floor(Belief(np.array([1.0, 0.0])), 0.01)
        np.testing.assert_allclose(b.probs, [1.0 / 1.01, 0.01 / 1.01])

    def test_noop_when_above_floor(self):
        b = decay_floor(Belief(np.array([0.6, 0.4])), 0.01)
        np.testing.assert_allclose(b.probs, [0.6, 0.4])

    def test_invalid_floor_raises(self):
        with pytest.raises(ValueError):
            decay_floor(Belief.uniform(2), 0.5)
        with pytest.raises(ValueError):
            decay_floor(Belief.uniform(2), -0.1)


@settings(max_examples=50, deadline=None)
@given(
    w=st.lists(st.floats(1e-6, 1.0), min_size=2, max_size=5),
    f0=st.floats(-20.0, 20.0),
)
def test_update_always_returns_a_distribution(w, f0):
    p = np.asarray(w) / np.sum(w)
    models = [_model(float(i)) for i in range(len(p))]
    f = np.zeros(N_POSE)
    f[0] = f0
    b = update(Belief(p), f, np.zeros(N_POSE), models)
    assert np.all(b.probs >= 0)
    np.testing.assert_allclose(b.probs.sum(), 1.0, atol=1e-12)
