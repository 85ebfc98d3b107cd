"""Multivariate phase-type models built from a common Markov skeleton and a
reward matrix, the bivariate block sub-class with explicit density, their
transformed (inhomogeneous) versions, and empirical dependence diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import linalg, ph
from .exceptions import (DegenerateMarginalError, DomainError,
                         UnsupportedModelError)
from .transforms import TransformFamily

REWARD_POSITIVE_TOL = 1e-9
ROW_NORM_TOL = 1e-10


@dataclass(frozen=True)
class MPHModel:
    """MPH*(pi, T, R): rewards accumulate at rate R[k, j] in state k.

    ``normalized`` records whether the rows of R sum to one (required for
    estimation; construction-only models may relax it).
    """

    pi: np.ndarray
    T: np.ndarray
    R: np.ndarray
    normalized: bool = field(init=False)

    def __post_init__(self):
        base = ph.PHModel(self.pi, self.T)
        R = np.asarray(self.R, dtype=float)
        if R.ndim != 2 or R.shape[0] != base.p:
            raise ValueError("reward matrix must be p x d")
        if np.any(R < 0.0):
            raise ValueError("reward matrix entries must be nonnegative")
        object.__setattr__(self, "pi", base.pi)
        object.__setattr__(self, "T", base.T)
        object.__setattr__(self, "R", R)
        object.__setattr__(
            self, "normalized",
            bool(np.all(np.abs(R.sum(axis=1) - 1.0) <= ROW_NORM_TOL)))

    @property
    def p(self) -> int:
        return self.T.shape[0]

    @property
    def d(self) -> int:
        return self.R.shape[1]

    @property
    def t(self) -> np.ndarray:
        return linalg.exit_rates(self.T)


@dataclass(frozen=True)
class BivariateBlockModel:
    """Upper-triangular block skeleton: the process starts in block 1,
    moves to block 2 (T11 e + T12 e = 0) and exits from there.  Coordinate
    1 earns in block 1, coordinate 2 in block 2.
    """

    alpha: np.ndarray
    T11: np.ndarray
    T12: np.ndarray
    T22: np.ndarray

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=float).reshape(-1)
        T11 = linalg.as_matrix(self.T11)
        T12 = linalg.as_matrix(self.T12)
        T22 = linalg.validate_sub_intensity(self.T22)
        p1 = T11.shape[0]
        if T11.shape[1] != p1 or T12.shape != (p1, T22.shape[0]):
            raise ValueError("inconsistent block dimensions")
        if alpha.shape[0] != p1:
            raise ValueError("alpha dimension must match T11")
        if np.any(alpha < -1e-12) or abs(alpha.sum() - 1.0) > 1e-8:
            raise ValueError("alpha must be a probability vector")
        off = ~np.eye(p1, dtype=bool)
        if np.any(T11[off] < -linalg.OFFDIAG_CLAMP) or np.any(np.diag(T11) >= 0):
            raise ValueError("T11 must have nonnegative off-diagonals and negative diagonal")
        if np.any(T12 < -linalg.OFFDIAG_CLAMP):
            raise ValueError("T12 entries must be nonnegative")
        closure = T11.sum(axis=1) + T12.sum(axis=1)
        if np.any(np.abs(closure) > ROW_NORM_TOL):
            raise ValueError("every exit from block 1 must enter block 2 (T11 e + T12 e = 0)")
        object.__setattr__(self, "alpha", np.where(alpha < 0, 0.0, alpha))
        object.__setattr__(self, "T11", np.where((T11 < 0) & off, 0.0, T11))
        object.__setattr__(self, "T12", np.where(T12 < 0, 0.0, T12))
        object.__setattr__(self, "T22", T22)

    @property
    def p1(self) -> int:
        return self.T11.shape[0]

    @property
    def p2(self) -> int:
        return self.T22.shape[0]

    def to_mph(self) -> MPHModel:
        """Full (pi, T, R) representation with the block reward structure."""
        p1, p2 = self.p1, self.p2
        T = np.zeros((p1 + p2, p1 + p2))
        T[:p1, :p1] = self.T11
        T[:p1, p1:] = self.T12
        T[p1:, p1:] = self.T22
        pi = np.concatenate([self.alpha, np.zeros(p2)])
        R = np.zeros((p1 + p2, 2))
        R[:p1, 0] = 1.0
        R[p1:, 1] = 1.0
        return MPHModel(pi, T, R)


@dataclass(frozen=True)
class InhomMPHModel:
    """Coordinatewise transform of an MPH* or bivariate block model."""

    base: object  # MPHModel or BivariateBlockModel
    transforms: tuple

    def __post_init__(self):
        d = self.base.d if isinstance(self.base, MPHModel) else 2
        trs = tuple(self.transforms)
        if len(trs) != d:
            raise ValueError(f"expected {d} transforms, got {len(trs)}")
        for tr in trs:
            if not isinstance(tr, TransformFamily):
                raise TypeError("transforms must be TransformFamily instances")
        object.__setattr__(self, "transforms", trs)


def _marginal_parts(m: MPHModel, j: int):
    """Split states by positive reward in coordinate j and fold the
    zero-reward block.  Returns (pi_j, T_j, plus_indices)."""
    r = m.R[:, j]
    plus = np.nonzero(r > REWARD_POSITIVE_TOL)[0]
    if plus.size == 0:
        raise DegenerateMarginalError(f"coordinate {j} has no positive rewards")
    zero = np.nonzero(r <= REWARD_POSITIVE_TOL)[0]
    Tpp = m.T[np.ix_(plus, plus)]
    pi_plus = m.pi[plus]
    if zero.size == 0:
        pi_j = pi_plus
        core = Tpp
    else:
        T00 = m.T[np.ix_(zero, zero)]
        T0p = m.T[np.ix_(zero, plus)]
        Tp0 = m.T[np.ix_(plus, zero)]
        fold = linalg.solve(-T00, T0p)
        pi_j = pi_plus + m.pi[zero] @ fold
        core = Tpp + Tp0 @ fold
    T_j = core / r[plus][:, None]
    return pi_j, T_j, plus


def marginal(m: MPHModel, j: int) -> ph.PHModel:
    """PH representation of coordinate j; sum(pi) < 1 encodes the atom at
    zero."""
    pi_j, T_j, _ = _marginal_parts(m, j)
    return ph.PHModel(pi_j, T_j)


def mph_mean_and_correlation(m: MPHModel):
    """First moments and correlation matrix from the occupation matrix
    U = (-T)^{-1}: E[Y_j] = pi U r_j and
    E[Y_i Y_j] = pi U D(r_i) U r_j + pi U D(r_j) U r_i."""
    U = linalg.green_matrix(m.T)
    piU = m.pi @ U
    mean = piU @ m.R
    d = m.d
    second = np.empty((d, d))
    for i in range(d):
        for j in range(i, d):
            v = piU * m.R[:, i] @ U @ m.R[:, j] + piU * m.R[:, j] @ U @ m.R[:, i]
            second[i, j] = second[j, i] = v
    cov = second - np.outer(mean, mean)
    sd = np.sqrt(np.diag(cov))
    corr = cov / np.outer(sd, sd)
    np.fill_diagonal(corr, 1.0)
    return mean, corr


def mph_sample(m: MPHModel, rng: np.random.Generator) -> np.ndarray:
    """One reward vector: simulate a trajectory, accumulate per-coordinate
    rewards."""
    base = ph.PHModel(m.pi, m.T)
    traj = ph.ph_sample(base, rng)
    y = np.zeros(m.d)
    for k, h in zip(traj.states, traj.holds):
        y += m.R[k] * h
    return y


def mph_sample_many(m: MPHModel, n: int, rng: np.random.Generator) -> np.ndarray:
    """n i.i.d. reward vectors, shape (n, d)."""
    base = ph.PHModel(m.pi, m.T)
    occ = ph.occupation_sample(base, n, rng)
    return occ @ m.R


def biv_density(m: BivariateBlockModel, y1, y2):
    """f(y1, y2) = alpha e^{T11 y1} T12 e^{T22 y2} (-T22) e."""
    a1 = np.atleast_1d(np.asarray(y1, dtype=float))
    a2 = np.atleast_1d(np.asarray(y2, dtype=float))
    if np.any(a1 <= 0.0) or np.any(a2 <= 0.0):
        raise DomainError("bivariate density requires positive coordinates")
    if a1.shape != a2.shape:
        raise ValueError("coordinate arrays must have equal shapes")
    E1 = linalg.expm_batch(m.T11, a1)
    E2 = linalg.expm_batch(m.T22, a2)
    exit2 = linalg.exit_rates(m.T22)
    left = np.einsum("k,nkl->nl", m.alpha, E1) @ m.T12
    right = np.einsum("nkl,l->nk", E2, exit2)
    vals = np.maximum(np.einsum("nk,nk->n", left, right), 0.0)
    return float(vals[0]) if np.asarray(y1).ndim == 0 else vals


def biv_survival(m: BivariateBlockModel, y1, y2):
    """P(Y1 > y1, Y2 > y2) = alpha (-T11)^{-1} e^{T11 y1} T12 e^{T22 y2} e."""
    a1 = np.atleast_1d(np.asarray(y1, dtype=float))
    a2 = np.atleast_1d(np.asarray(y2, dtype=float))
    if np.any(a1 < 0.0) or np.any(a2 < 0.0):
        raise DomainError("bivariate survival requires nonnegative coordinates")
    if a1.shape != a2.shape:
        raise ValueError("coordinate arrays must have equal shapes")
    w = linalg.solve(-m.T11.T, m.alpha)  # alpha (-T11)^{-1} as a row vector
    E1 = linalg.expm_batch(m.T11, a1)
    E2 = linalg.expm_batch(m.T22, a2)
    vals = np.einsum("k,nkl->nl", w, E1) @ m.T12
    vals = np.einsum("nk,nk->n", vals, np.einsum("nkl->nk", E2))
    vals = np.clip(vals, 0.0, 1.0)
    return float(vals[0]) if np.asarray(y1).ndim == 0 else vals


def block_marginal(m: BivariateBlockModel, j: int) -> ph.PHModel:
    """Coordinate marginals of the block model: (alpha, T11) and
    (alpha (-T11)^{-1} T12, T22)."""
    if j == 0:
        return ph.PHModel(m.alpha, m.T11)
    if j == 1:
        w = linalg.solve(-m.T11.T, m.alpha)
        return ph.PHModel(w @ m.T12, m.T22)
    raise ValueError("block models are bivariate; j must be 0 or 1")


def tail_indices(m: BivariateBlockModel) -> tuple:
    """Largest real eigenvalue part of each marginal block; governs the
    power-tail index after a Pareto transform."""
    l1 = float(np.max(np.linalg.eigvals(m.T11).real))
    l2 = float(np.max(np.linalg.eigvals(m.T22).real))
    return l1, l2


def inhom_sample(m: InhomMPHModel, rng: np.random.Generator) -> np.ndarray:
    base = m.base.to_mph() if isinstance(m.base, BivariateBlockModel) else m.base
    y = mph_sample(base, rng)
    return np.array([float(tr.g(v)) for tr, v in zip(m.transforms, y)])


def inhom_sample_many(m: InhomMPHModel, n: int, rng: np.random.Generator) -> np.ndarray:
    base = m.base.to_mph() if isinstance(m.base, BivariateBlockModel) else m.base
    y = mph_sample_many(base, n, rng)
    out = np.empty_like(y)
    for j, tr in enumerate(m.transforms):
        out[:, j] = tr.g(y[:, j])
    return out


def inhom_density(m: InhomMPHModel, x1, x2):
    """Joint density of the transformed block model; only the bivariate
    block class has an explicit density."""
    if not isinstance(m.base, BivariateBlockModel):
        raise UnsupportedModelError(
            "explicit density exists only for bivariate block bases")
    tr1, tr2 = m.transforms
    a1 = np.atleast_1d(np.asarray(x1, dtype=float))
    a2 = np.atleast_1d(np.asarray(x2, dtype=float))
    if not (np.all(tr1.in_support(a1)) and np.all(tr2.in_support(a2))):
        raise DomainError("value outside transform support")
    vals = biv_density(m.base, np.atleast_1d(tr1.g_inv(a1)),
                       np.atleast_1d(tr2.g_inv(a2)))
    vals = np.atleast_1d(vals) * np.atleast_1d(tr1.g_inv_abs_deriv(a1)) \
        * np.atleast_1d(tr2.g_inv_abs_deriv(a2))
    return float(vals[0]) if np.asarray(x1).ndim == 0 else vals


def inhom_survival(m: InhomMPHModel, x1, x2):
    """Joint survival of the transformed block model (increasing transforms)."""
    if not isinstance(m.base, BivariateBlockModel):
        raise UnsupportedModelError(
            "explicit survival exists only for bivariate block bases")
    tr1, tr2 = m.transforms
    if not (tr1.increasing and tr2.increasing):
        raise UnsupportedModelError("survival requires increasing transforms")
    return biv_survival(m.base, tr1.g_inv(np.asarray(x1, dtype=float)),
                        tr2.g_inv(np.asarray(x2, dtype=float)))


def _count_inversions(a: np.ndarray):
    """Number of pairs i < j with a[i] > a[j]; merge-count recursion."""
    n = a.shape[0]
    if n < 2:
        return np.sort(a), 0
    mid = n // 2
    left, cl = _count_inversions(a[:mid])
    right, cr = _count_inversions(a[mid:])
    cross = int(np.searchsorted(right, left, side="left").sum())
    return np.sort(np.concatenate([left, right]), kind="mergesort"), cl + cr + cross


def kendall_tau(x, y) -> float:
    """Kendall's tau by inversion counting, O(n log^2 n); tau-a (no tie
    correction)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.shape[0]
    if n < 2 or x.shape != y.shape:
        raise ValueError("need two equally sized samples of length >= 2")
    order = np.lexsort((y, x))
    _, disc = _count_inversions(y[order])
    return 1.0 - 4.0 * disc / (n * (n - 1.0))


@dataclass(frozen=True)
class DependenceSummary:
    kendall_tau: float
    lambda_u: float
    tie_warning: bool


def empirical_dependence(sample, q: float = 0.995) -> DependenceSummary:
    """Kendall's tau and the empirical upper-tail coefficient at quantile
    level q: P(X1 > q1 | X2 > q2) with empirical marginal quantiles."""
    sample = np.asarray(sample, dtype=float)
    if sample.ndim != 2 or sample.shape[1] != 2:
        raise ValueError("sample must be an (n, 2) array")
    if sample.shape[0] < 100:
        raise ValueError("dependence estimation needs at least 100 pairs")
    if not 0.5 < q < 1.0:
        raise ValueError("q must lie in (0.5, 1)")
    x1, x2 = sample[:, 0], sample[:, 1]
    n = sample.shape[0]
    tie = max(1.0 - np.unique(x1).size / n, 1.0 - np.unique(x2).size / n) > 0.5
    tau = kendall_tau(x1, x2)
    q1 = np.quantile(x1, q)
    q2 = np.quantile(x2, q)
    denom = np.count_nonzero(x2 > q2)
    lam = float(np.count_nonzero((x1 > q1) & (x2 > q2)) / denom) if denom else 0.0
    return DependenceSummary(kendall_tau=tau, lambda_u=lam, tie_warning=tie)
