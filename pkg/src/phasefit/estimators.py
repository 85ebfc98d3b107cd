"""Estimator-style wrappers around the fitting routines: constructor
hyperparameters, ``fit`` on array data, fitted attributes with trailing
underscores, and ``score_samples``/``sample`` where the model family has an
explicit density / a simulator.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, DensityMixin
from sklearn.utils.validation import check_array, check_is_fitted

from . import em, em_multi, iph, mph, ph


def _column(X) -> np.ndarray:
    X = check_array(X, ensure_2d=False, dtype=float)
    if X.ndim == 2:
        if X.shape[1] != 1:
            raise ValueError("expected a single column of observations")
        X = X[:, 0]
    return X


class _ConfigMixin:
    def _config(self):
        return em.FitConfig(iterations=self.iterations,
                            step_length=self.step_length,
                            grad_tol=self.grad_tol,
                            max_inner=self.max_inner,
                            eps=self.eps, seed=self.seed, init=self.init)

    def _store(self, res):
        self.model_ = res.model
        self.log_likelihood_ = res.log_likelihood
        self.trace_ = res.trace
        self.converged_ = res.converged
        self.n_iter_ = res.iterations
        return self


class PhaseTypeEstimator(_ConfigMixin, DensityMixin, BaseEstimator):
    """Phase-type density estimator: EM over a fixed number of phases."""

    def __init__(self, p=2, iterations=500, step_length=None, grad_tol=None,
                 max_inner=50, eps=1e-12, seed=0, init=None):
        self.p = p
        self.iterations = iterations
        self.step_length = step_length
        self.grad_tol = grad_tol
        self.max_inner = max_inner
        self.eps = eps
        self.seed = seed
        self.init = init

    def fit(self, X, y=None):
        xs = _column(X)
        if np.any(xs <= 0.0):
            raise ValueError("observations must be positive")
        return self._store(em.fit_ph([em.exact(v) for v in xs],
                                     self.p, self._config()))

    def score_samples(self, X):
        check_is_fitted(self, "model_")
        return np.log(ph.ph_density(self.model_, _column(X)))

    def sample(self, n_samples=1, seed=0):
        check_is_fitted(self, "model_")
        rng = np.random.default_rng(seed)
        return ph.ph_sample_times(self.model_, n_samples, rng)[:, None]


class TransformedPhaseTypeEstimator(PhaseTypeEstimator):
    """Transformed (inhomogeneous) phase-type estimator for a given
    transform family (pareto, weibull, gompertz, gev)."""

    def __init__(self, p=2, family="weibull", iterations=500,
                 step_length=None, grad_tol=None, max_inner=50, eps=1e-12,
                 seed=0, init=None):
        super().__init__(p=p, iterations=iterations, step_length=step_length,
                         grad_tol=grad_tol, max_inner=max_inner, eps=eps,
                         seed=seed, init=init)
        self.family = family

    def fit(self, X, y=None):
        xs = _column(X)
        return self._store(em.fit_iph([em.exact(v) for v in xs],
                                      self.p, self.family, self._config()))

    def score_samples(self, X):
        check_is_fitted(self, "model_")
        return np.log(iph.iph_density(self.model_, _column(X)))

    def sample(self, n_samples=1, seed=0):
        check_is_fitted(self, "model_")
        rng = np.random.default_rng(seed)
        return iph.iph_sample_many(self.model_, n_samples, rng)[:, None]


class MPHEstimator(_ConfigMixin, BaseEstimator):
    """Reward-matrix multivariate estimator (no explicit joint density;
    ``sample`` and moment summaries are available on ``model_``)."""

    def __init__(self, p=2, two_stage=False, iterations=500, step_length=None,
                 grad_tol=None, max_inner=50, eps=1e-12, seed=0, init=None):
        self.p = p
        self.two_stage = two_stage
        self.iterations = iterations
        self.step_length = step_length
        self.grad_tol = grad_tol
        self.max_inner = max_inner
        self.eps = eps
        self.seed = seed
        self.init = init

    def fit(self, X, y=None):
        X = check_array(X, dtype=float)
        sample = em_multi.MultivariateSample.from_exact(X)
        fitter = em_multi.fit_mph_two_stage if self.two_stage else em_multi.fit_mph
        res = fitter(sample, self.p, self._config())
        self.model_ = res.model
        self.log_likelihood_ = res.sum_log_likelihood
        self.trace_ = res.sum_trace
        self.reward_change_trace_ = res.reward_change_trace
        self.converged_ = res.converged
        self.n_iter_ = res.iterations
        return self

    def sample(self, n_samples=1, seed=0):
        check_is_fitted(self, "model_")
        rng = np.random.default_rng(seed)
        return mph.mph_sample_many(self.model_, n_samples, rng)


class BivariateBlockEstimator(_ConfigMixin, DensityMixin, BaseEstimator):
    """Bivariate block estimator with explicit joint density."""

    def __init__(self, p1=2, p2=2, iterations=500, step_length=None,
                 grad_tol=None, max_inner=50, eps=1e-12, seed=0, init=None):
        self.p1 = p1
        self.p2 = p2
        self.iterations = iterations
        self.step_length = step_length
        self.grad_tol = grad_tol
        self.max_inner = max_inner
        self.eps = eps
        self.seed = seed
        self.init = init

    def fit(self, X, y=None):
        X = check_array(X, dtype=float)
        return self._store(em_multi.fit_biv_block(X, self.p1, self.p2,
                                                  self._config()))

    def score_samples(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=float)
        return np.log(mph.biv_density(self.model_, X[:, 0], X[:, 1]))

    def sample(self, n_samples=1, seed=0):
        check_is_fitted(self, "model_")
        rng = np.random.default_rng(seed)
        return mph.mph_sample_many(self.model_.to_mph(), n_samples, rng)


class TransformedBivariateEstimator(BivariateBlockEstimator):
    """Coordinatewise-transformed bivariate block estimator."""

    def __init__(self, p1=2, p2=2, families=("weibull", "weibull"),
                 iterations=500, step_length=None, grad_tol=None,
                 max_inner=50, eps=1e-12, seed=0, init=None):
        super().__init__(p1=p1, p2=p2, iterations=iterations,
                         step_length=step_length, grad_tol=grad_tol,
                         max_inner=max_inner, eps=eps, seed=seed, init=init)
        self.families = families

    def fit(self, X, y=None):
        X = check_array(X, dtype=float)
        return self._store(em_multi.fit_biv_inhom(X, self.p1, self.p2,
                                                  self.families,
                                                  self._config()))

    def score_samples(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=float)
        return np.log(mph.inhom_density(self.model_, X[:, 0], X[:, 1]))

    def sample(self, n_samples=1, seed=0):
        check_is_fitted(self, "model_")
        rng = np.random.default_rng(seed)
        return mph.inhom_sample_many(self.model_, n_samples, rng)
