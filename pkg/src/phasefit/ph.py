"""Homogeneous phase-type distributions: density, survival, moments and
trajectory-level simulation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .exceptions import DomainError

PROB_TOL = 1e-10


@dataclass(frozen=True)
class PHModel:
    """Phase-type law PH(pi, T) with exit vector t = -T e.

    sum(pi) may fall short of 1: the deficit is an atom at zero, which
    arises for marginals of multivariate models.  Density and survival
    describe only the absolutely continuous part on (0, inf).
    """

    pi: np.ndarray
    T: np.ndarray
    t: np.ndarray = field(init=False)

    def __post_init__(self):
        pi = np.asarray(self.pi, dtype=float).reshape(-1)
        T = linalg.validate_sub_intensity(self.T)
        if pi.shape[0] != T.shape[0]:
            raise ValueError("pi and T dimensions differ")
        if np.any(pi < -PROB_TOL):
            raise ValueError("pi must be nonnegative")
        pi = np.where(pi < 0.0, 0.0, pi)
        if pi.sum() > 1.0 + PROB_TOL:
            raise ValueError("pi must sum to at most 1")
        object.__setattr__(self, "pi", pi)
        object.__setattr__(self, "T", T)
        object.__setattr__(self, "t", linalg.exit_rates(T))

    @property
    def p(self) -> int:
        return self.T.shape[0]

    @property
    def atom(self) -> float:
        """Probability mass at zero."""
        return max(0.0, 1.0 - float(self.pi.sum()))


@dataclass(frozen=True)
class Trajectory:
    """One realization of the underlying Markov jump process.

    ``states`` and ``holds`` are aligned; an empty trajectory (atom draw)
    has absorption time 0.
    """

    states: tuple
    holds: tuple
    absorption_time: float


def ph_density(m: PHModel, y):
    """f(y) = pi e^{Ty} t for y > 0 (scalar or array)."""
    arr = np.atleast_1d(np.asarray(y, dtype=float))
    if np.any(arr <= 0.0):
        raise DomainError("phase-type density requires y > 0")
    E = linalg.expm_batch(m.T, arr)
    vals = np.einsum("k,nkl,l->n", m.pi, E, m.t)
    vals = np.maximum(vals, 0.0)
    return float(vals[0]) if np.isscalar(y) or np.asarray(y).ndim == 0 else vals


def ph_survival(m: PHModel, y):
    """S(y) = pi e^{Ty} e for y >= 0 (scalar or array)."""
    arr = np.atleast_1d(np.asarray(y, dtype=float))
    if np.any(arr < 0.0):
        raise DomainError("phase-type survival requires y >= 0")
    E = linalg.expm_batch(m.T, arr)
    vals = np.einsum("k,nkl->n", m.pi, E)
    vals = np.clip(vals, 0.0, 1.0)
    return float(vals[0]) if np.isscalar(y) or np.asarray(y).ndim == 0 else vals


def ph_moment(m: PHModel, n: int) -> float:
    """E[Y^n] = n! pi (-T)^{-n} e."""
    if n < 1:
        raise ValueError("moment order must be >= 1")
    v = np.ones(m.p)
    for _ in range(n):
        v = linalg.solve(-m.T, v)
    return math.factorial(n) * float(m.pi @ v)


def ph_sample(m: PHModel, rng: np.random.Generator) -> Trajectory:
    """Simulate one trajectory of the underlying jump chain.

    With probability 1 - sum(pi) (the atom) returns an empty trajectory.
    """
    u = rng.random()
    total = m.pi.sum()
    if u >= total:
        return Trajectory(states=(), holds=(), absorption_time=0.0)
    k = int(np.searchsorted(np.cumsum(m.pi), u, side="right"))
    states = []
    holds = []
    clock = 0.0
    while True:
        rate = -m.T[k, k]
        hold = -math.log(rng.random()) / rate
        states.append(k)
        holds.append(hold)
        clock += hold
        # destination: transient states with prob T[k,l]/rate, exit otherwise
        u = rng.random() * rate
        acc = 0.0
        nxt = -1
        for l in range(m.p):
            if l == k:
                continue
            acc += m.T[k, l]
            if u < acc:
                nxt = l
                break
        if nxt < 0:
            return Trajectory(states=tuple(states), holds=tuple(holds),
                              absorption_time=clock)
        k = nxt


def ph_sample_times(m: PHModel, n: int, rng: np.random.Generator) -> np.ndarray:
    """Vectorized absorption-time sampler: n i.i.d. draws from PH(pi, T).

    Atom draws come out as exact zeros.
    """
    occ = occupation_sample(m, n, rng)
    return occ.sum(axis=1)


def occupation_sample(m: PHModel, n: int, rng: np.random.Generator) -> np.ndarray:
    """Vectorized per-state occupation times, shape (n, p).

    Row sums are the absorption times; used by the multivariate reward
    sampler.  Atom draws give all-zero rows.
    """
    p = m.p
    occ = np.zeros((n, p))
    probs = np.concatenate([m.pi, [max(0.0, 1.0 - m.pi.sum())]])
    probs = probs / probs.sum()
    state = rng.choice(p + 1, size=n, p=probs)
    alive = state < p
    rates = -np.diag(m.T)
    # jump kernel rows: transient destinations then exit
    P = np.zeros((p, p + 1))
    for k in range(p):
        P[k, :p] = m.T[k] / rates[k]
        P[k, k] = 0.0
        P[k, p] = m.t[k] / rates[k]
    cumP = np.cumsum(P, axis=1)
    while np.any(alive):
        idx = np.nonzero(alive)[0]
        s = state[idx]
        holds = -np.log(rng.random(idx.shape[0])) / rates[s]
        np.add.at(occ, (idx, s), holds)
        u = rng.random(idx.shape[0])
        nxt = (u[:, None] < cumP[s]).argmax(axis=1)
        state[idx] = nxt
        alive[idx] = nxt < p
    return occ
