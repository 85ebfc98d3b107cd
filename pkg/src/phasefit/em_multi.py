"""Multivariate EM estimation: the general reward-matrix fit driven by the
coordinate sum and per-coordinate marginals (with censoring folded into the
sum via interval arithmetic), the bivariate block fit with its explicit
joint density, and the transformed bivariate driver.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from . import em, linalg, mph, ph
from .exceptions import (BetaSearchFailedError, DegenerateMarginalError,
                         NumericalUnderflowError)
from .transforms import Identity, TransformFamily

DENSITY_FLOOR = em.DENSITY_FLOOR
REWARD_CHANGE_TOL = 1e-7
SUM_CHANGE_TOL = 1e-8


def _as_bounds(ob):
    """(lo, hi, is_exact) view of a coordinate entry; plain numbers are
    exact values (zero allowed for marginals with an atom)."""
    if isinstance(ob, em.Observation):
        if ob.kind == "exact":
            return ob.y, ob.y, True
        return ob.v, ob.w, False
    y = float(ob)
    if y < 0.0:
        raise ValueError("coordinate values must be nonnegative")
    return y, y, True


@dataclass(frozen=True)
class MultivariateSample:
    """N rows of d coordinate entries (exact values or censoring intervals)
    with optional per-row weights."""

    rows: tuple
    weights: np.ndarray

    def __post_init__(self):
        rows = tuple(tuple(r) for r in self.rows)
        if not rows:
            raise ValueError("empty sample")
        d = len(rows[0])
        for i, row in enumerate(rows):
            if len(row) != d:
                raise ValueError(f"row {i} has {len(row)} coordinates, expected {d}")
            informative = False
            for ob in row:
                lo, hi, is_exact = _as_bounds(ob)
                informative = informative or is_exact or lo > 0.0 or np.isfinite(hi)
            if not informative:
                raise ValueError(f"row {i} carries no information")
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if w.shape[0] != len(rows):
            raise ValueError("one weight per row required")
        if np.any(w <= 0.0):
            raise ValueError("row weights must be positive")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "weights", w)

    @property
    def d(self) -> int:
        return len(self.rows[0])

    @property
    def n(self) -> int:
        return len(self.rows)

    @classmethod
    def from_exact(cls, values, weights=None) -> "MultivariateSample":
        arr = np.asarray(values, dtype=float)
        if arr.ndim != 2:
            raise ValueError("expected an (n, d) array of values")
        w = np.ones(arr.shape[0]) if weights is None else weights
        return cls(tuple(tuple(row) for row in arr), w)

    @classmethod
    def from_rows(cls, rows, weights=None) -> "MultivariateSample":
        w = np.ones(len(rows)) if weights is None else weights
        return cls(tuple(rows), w)

    def all_exact(self) -> bool:
        return all(_as_bounds(ob)[2] for row in self.rows for ob in row)

    def exact_matrix(self) -> np.ndarray:
        if not self.all_exact():
            raise ValueError("sample contains censored entries")
        return np.array([[_as_bounds(ob)[0] for ob in row] for row in self.rows])


def sum_observation(row) -> em.Observation:
    """Censoring class of the coordinate sum: interval arithmetic on the
    per-coordinate bounds (exact entries are degenerate intervals; a right
    bound stays infinite if any coordinate is right-censored)."""
    lo = 0.0
    hi = 0.0
    all_exact = True
    for ob in row:
        l, h, is_exact = _as_bounds(ob)
        lo += l
        hi += h
        all_exact = all_exact and is_exact
    if all_exact:
        return em.exact(lo)
    return em.interval(lo, hi)


def _sum_arrays(sample: MultivariateSample):
    """Summed-coordinate data split into weighted exact/interval arrays."""
    ys, wy, vs, ws, wi = [], [], [], [], []
    for row, w in zip(sample.rows, sample.weights):
        ob = sum_observation(row)
        if ob.kind == "exact":
            ys.append(ob.y)
            wy.append(w)
        else:
            vs.append(ob.v)
            ws.append(ob.w)
            wi.append(w)
    return (np.asarray(ys), np.asarray(wy), np.asarray(vs), np.asarray(ws),
            np.asarray(wi))


def _coordinate_arrays(sample: MultivariateSample, j: int):
    """Coordinate-j data split into weighted exact/interval arrays; exact
    zeros (atom draws) contribute nothing and are dropped."""
    ys, wy, vs, ws, wi = [], [], [], [], []
    for row, w in zip(sample.rows, sample.weights):
        lo, hi, is_exact = _as_bounds(row[j])
        if is_exact:
            if lo > 0.0:
                ys.append(lo)
                wy.append(w)
        else:
            vs.append(lo)
            ws.append(hi)
            wi.append(w)
    return (np.asarray(ys), np.asarray(wy), np.asarray(vs), np.asarray(ws),
            np.asarray(wi))


def _warn_all_censored(sample: MultivariateSample):
    n_bad = sum(1 for row in sample.rows
                if not any(_as_bounds(ob)[2] for ob in row))
    if n_bad:
        warnings.warn(
            f"{n_bad} row(s) are censored in every coordinate; the sum and "
            "marginal statistics for these rows are weakly informative",
            RuntimeWarning, stacklevel=3)


@dataclass
class MPHFitResult:
    model: mph.MPHModel
    sum_log_likelihood: float
    sum_trace: np.ndarray
    reward_change_trace: np.ndarray
    converged: bool
    iterations: int


def _reward_zstats(pi, T, R, sample, coord_data, eps) -> np.ndarray:
    """Expected reward-weighted occupations, columns indexed by coordinate:
    Zall[k, j] = sum_i E[Z_k^(j) | coordinate-j datum i]."""
    p, d = R.shape
    model = mph.MPHModel(pi, T, R)
    Zall = np.zeros((p, d))
    for j in range(d):
        pi_j, T_j, plus = mph._marginal_parts(model, j)
        mj = ph.PHModel(pi_j, T_j)
        ys, wy, vs, ws, wi = coord_data[j]
        stj = em.estep_exact(mj, ys, wy, eps) \
            + em.estep_censored(mj, vs, ws, wi, eps)
        Zall[plus, j] = stj.Z
    return Zall


def _update_rewards(R, Zall, it):
    rowsum = Zall.sum(axis=1)
    live = rowsum > DENSITY_FLOOR
    newR = R.copy()
    newR[live] = Zall[live] / rowsum[live, None]
    dead_cols = np.all(newR <= mph.REWARD_POSITIVE_TOL, axis=0)
    if np.any(dead_cols):
        j = int(np.argmax(dead_cols))
        raise DegenerateMarginalError(
            f"all rewards for coordinate {j} vanished at iteration {it}")
    return newR, float(np.abs(newR - R).max())


def fit_mph(sample: MultivariateSample, p: int,
            cfg: em.FitConfig = em.FitConfig()) -> MPHFitResult:
    """Interleaved EM for reward-matrix models: each iteration runs one E/M
    step of the sum fit (the coordinate sum is plain phase-type when reward
    rows sum to one) and one reward update from per-coordinate marginal
    occupation expectations."""
    if p < 1:
        raise ValueError("need at least one phase")
    d = sample.d
    _warn_all_censored(sample)
    ys, wy, vs, ws, wi = _sum_arrays(sample)
    total_weight = float(sample.weights.sum())
    coord_data = [_coordinate_arrays(sample, j) for j in range(d)]

    rng = np.random.default_rng(cfg.seed)
    if isinstance(cfg.init, mph.MPHModel):
        if not cfg.init.normalized:
            raise ValueError("initial reward rows must sum to 1")
        pi, T, R = cfg.init.pi, cfg.init.T, cfg.init.R
    else:
        base = em.init_ph(p, rng, em.mean_target(ys, wy, vs, ws, wi))
        pi, T = base.pi, base.T
        R = np.full((p, d), 1.0 / d)

    sums_obs = _as_obs(ys, wy, vs, ws, wi)
    sum_trace = np.empty(cfg.iterations)
    reward_change = np.empty(cfg.iterations)
    for it in range(cfg.iterations):
        m = ph.PHModel(pi, T)
        stats = em.estep_exact(m, ys, wy, cfg.eps) \
            + em.estep_censored(m, vs, ws, wi, cfg.eps)
        Zall = _reward_zstats(pi, T, R, sample, coord_data, cfg.eps)
        keep = stats.Z > DENSITY_FLOOR
        new_m = em.mstep(stats, total_weight)
        if not np.all(keep):
            R = R[keep]
            Zall = Zall[keep]
        pi, T = new_m.pi, new_m.T
        R, reward_change[it] = _update_rewards(R, Zall, it)
        sum_trace[it] = em.ph_log_likelihood(ph.PHModel(pi, T), sums_obs, cfg.eps)
    converged = cfg.iterations >= 2 and (
        abs(sum_trace[-1] - sum_trace[-2]) < SUM_CHANGE_TOL * (1.0 + abs(sum_trace[-1]))
        and reward_change[-1] < REWARD_CHANGE_TOL)
    return MPHFitResult(model=mph.MPHModel(pi, T, R),
                        sum_log_likelihood=float(sum_trace[-1]),
                        sum_trace=sum_trace, reward_change_trace=reward_change,
                        converged=bool(converged), iterations=cfg.iterations)


def _as_obs(ys, wy, vs, ws, wi):
    out = [em.exact(y, w) for y, w in zip(ys, wy)]
    out += [em.interval(v, w_, w) for v, w_, w in zip(vs, ws, wi)]
    return out


def fit_mph_two_stage(sample: MultivariateSample, p: int,
                      cfg: em.FitConfig = em.FitConfig()) -> MPHFitResult:
    """Two consecutive EMs: fit (pi, T) to the coordinate sums to
    convergence, then freeze them and iterate only the reward update until
    the parameter change is negligible."""
    d = sample.d
    _warn_all_censored(sample)
    ys, wy, vs, ws, wi = _sum_arrays(sample)
    stage1 = em.fit_ph(_as_obs(ys, wy, vs, ws, wi), p, cfg)
    pi, T = stage1.model.pi, stage1.model.T
    coord_data = [_coordinate_arrays(sample, j) for j in range(d)]
    R = np.full((pi.shape[0], d), 1.0 / d)
    reward_change = []
    for it in range(cfg.iterations):
        Zall = _reward_zstats(pi, T, R, sample, coord_data, cfg.eps)
        R, delta = _update_rewards(R, Zall, it)
        reward_change.append(delta)
        if delta < REWARD_CHANGE_TOL:
            break
    return MPHFitResult(model=mph.MPHModel(pi, T, R),
                        sum_log_likelihood=stage1.log_likelihood,
                        sum_trace=stage1.trace,
                        reward_change_trace=np.asarray(reward_change),
                        converged=stage1.converged
                        and reward_change[-1] < REWARD_CHANGE_TOL,
                        iterations=cfg.iterations)


# ---------------------------------------------------------------------------
# bivariate block fits

@dataclass
class BivFitResult:
    model: object  # BivariateBlockModel or InhomMPHModel
    log_likelihood: float
    trace: np.ndarray
    converged: bool
    iterations: int


def biv_estep(model: mph.BivariateBlockModel, y1, y2, weights=None,
              eps: float = linalg.DEFAULT_EPS):
    """Conditional expectations of starts, occupations, transitions and
    exits given exact coordinate pairs; returns (stats, log-likelihood)."""
    y1 = np.asarray(y1, dtype=float)
    y2 = np.asarray(y2, dtype=float)
    w = np.ones_like(y1) if weights is None else np.asarray(weights, dtype=float)
    p1, p2 = model.p1, model.p2
    p = p1 + p2
    alpha, T11, T12, T22 = model.alpha, model.T11, model.T12, model.T22
    t2 = linalg.exit_rates(T22)

    A1 = linalg.expm_batch(T11, y1, eps)
    A2 = linalg.expm_batch(T22, y2, eps)
    A2t = np.einsum("nab,b->na", A2, t2)
    b = np.einsum("ab,nb->na", T12, A2t)
    A1b = np.einsum("nab,nb->na", A1, b)
    f = np.einsum("a,na->n", alpha, A1b)
    if np.any(f < DENSITY_FLOOR):
        i = int(np.argmin(f))
        raise NumericalUnderflowError(
            f"joint density underflow at observation {i} "
            f"((y1, y2) = ({y1[i]:g}, {y2[i]:g}))")
    loglik = float(w @ np.log(f))
    scale = w / f
    aA1 = np.einsum("a,nab->nb", alpha, A1)
    avec = np.einsum("na,ab->nb", aA1, T12)
    aA2 = np.einsum("na,nab->nb", avec, A2)

    _, G1 = linalg.van_loan_per_item(T11, b[:, :, None] * alpha[None, None, :],
                                     y1, eps)
    _, G2 = linalg.van_loan_per_item(T22, t2[None, :, None] * avec[:, None, :],
                                     y2, eps)
    G1w = np.einsum("n,nkl->kl", scale, G1)
    G2w = np.einsum("n,nkl->kl", scale, G2)

    B = np.zeros(p)
    B[:p1] = alpha * (scale @ A1b)
    Z = np.concatenate([np.diag(G1w), np.diag(G2w)])
    Nmat = np.zeros((p, p))
    blk1 = T11 * G1w.T
    np.fill_diagonal(blk1, 0.0)
    Nmat[:p1, :p1] = blk1
    Nmat[:p1, p1:] = T12 * np.einsum("n,nk,nm->km", scale, aA1, A2t)
    blk2 = T22 * G2w.T
    np.fill_diagonal(blk2, 0.0)
    Nmat[p1:, p1:] = blk2
    Nexit = np.zeros(p)
    Nexit[p1:] = t2 * (scale @ aA2)
    return em.ESufficientStats(B, Z, Nmat, Nexit), loglik


def biv_mstep(stats: em.ESufficientStats, total_weight: float,
              p1: int) -> mph.BivariateBlockModel:
    """Complete-data MLE preserving the block skeleton; zero-occupation
    states are pruned from their block with a warning."""
    keep = stats.Z > DENSITY_FLOOR
    if not np.all(keep):
        warnings.warn(
            f"pruning {np.count_nonzero(~keep)} state(s) with zero occupation",
            RuntimeWarning, stacklevel=2)
    q1 = int(np.count_nonzero(keep[:p1]))
    if q1 == 0 or np.count_nonzero(keep[p1:]) == 0:
        raise DegenerateMarginalError("an entire block lost all occupation")
    B = stats.B[keep]
    Z = stats.Z[keep]
    Nmat = stats.Nmat[np.ix_(keep, keep)]
    Nexit = stats.Nexit[keep]
    alpha = B[:q1] / total_weight
    s = alpha.sum()
    if not np.all(keep) and s > 0:
        alpha = alpha / s
    rates = Nmat / Z[:, None]
    T11 = rates[:q1, :q1].copy()
    np.fill_diagonal(T11, 0.0)
    T12 = rates[:q1, q1:]
    np.fill_diagonal(T11, -(T11.sum(axis=1) + T12.sum(axis=1)))
    T22 = rates[q1:, q1:].copy()
    np.fill_diagonal(T22, 0.0)
    t2 = Nexit[q1:] / Z[q1:]
    np.fill_diagonal(T22, -(T22.sum(axis=1) + t2))
    return mph.BivariateBlockModel(alpha, T11, T12, T22)


def init_biv_block(p1: int, p2: int, rng: np.random.Generator,
                   target1: float, target2: float) -> mph.BivariateBlockModel:
    """Random block model: Dirichlet start, uniform rates honoring the
    block zero pattern, each block rescaled so the marginal means match."""
    alpha = rng.dirichlet(np.ones(p1))
    T11 = rng.uniform(size=(p1, p1))
    T12 = rng.uniform(size=(p1, p2))
    T22 = rng.uniform(size=(p2, p2))
    ex2 = rng.uniform(size=p2)
    np.fill_diagonal(T11, 0.0)
    np.fill_diagonal(T11, -(T11.sum(axis=1) + T12.sum(axis=1)))
    np.fill_diagonal(T22, 0.0)
    np.fill_diagonal(T22, -(T22.sum(axis=1) + ex2))
    mean1 = ph.ph_moment(ph.PHModel(alpha, T11), 1)
    c1 = mean1 / target1
    T11 = T11 * c1
    T12 = T12 * c1
    pi2 = alpha @ linalg.green_matrix(T11) @ T12
    mean2 = ph.ph_moment(ph.PHModel(pi2, T22), 1)
    T22 = T22 * (mean2 / target2)
    return mph.BivariateBlockModel(alpha, T11, T12, T22)


def _biv_data(sample):
    if isinstance(sample, MultivariateSample):
        if sample.d != 2:
            raise ValueError("bivariate fit requires d = 2")
        mat = sample.exact_matrix()
        return mat[:, 0], mat[:, 1], sample.weights
    arr = np.asarray(sample, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("expected an (n, 2) array of exact pairs")
    return arr[:, 0], arr[:, 1], np.ones(arr.shape[0])


def _biv_loglik(model, tr1, tr2, x1, x2, w, eps) -> float:
    """Joint incomplete log-likelihood on the original scale."""
    for tr, x in ((tr1, x1), (tr2, x2)):
        if not np.all(tr.in_support(x)):
            raise NumericalUnderflowError("data outside transform support")
    y1 = np.atleast_1d(tr1.g_inv(x1))
    y2 = np.atleast_1d(tr2.g_inv(x2))
    dens = np.atleast_1d(mph.biv_density(model, y1, y2)) \
        * np.atleast_1d(tr1.g_inv_abs_deriv(x1)) \
        * np.atleast_1d(tr2.g_inv_abs_deriv(x2))
    if np.any(dens < DENSITY_FLOOR):
        i = int(np.argmin(dens))
        raise NumericalUnderflowError(f"joint density underflow at observation {i}")
    return float(w @ np.log(dens))


def _biv_feasible(tr1, tr2, params, x1, x2) -> bool:
    k = tr1.params.shape[0]
    if not (type(tr1).feasible(params[:k]) and type(tr2).feasible(params[k:])):
        return False
    c1 = tr1.with_params(params[:k])
    c2 = tr2.with_params(params[k:])
    return bool(np.all(c1.in_support(x1)) and np.all(c2.in_support(x2)))


def _biv_beta_ascent(model, tr1, tr2, x1, x2, w, step, tol, max_inner, eps):
    """Joint fixed-step gradient ascent over both transforms' parameters
    with step halving, mirroring the univariate ascent."""
    k = tr1.params.shape[0]

    def ll_at(params):
        return _biv_loglik(model, tr1.with_params(params[:k]),
                           tr2.with_params(params[k:]), x1, x2, w, eps)

    cur = np.concatenate([tr1.params, tr2.params])
    cur_ll = ll_at(cur)
    for _ in range(max_inner):
        grad = np.zeros_like(cur)
        for j in range(cur.shape[0]):
            h = max(1e-7, 1e-7 * abs(cur[j]))
            up, dn = cur.copy(), cur.copy()
            up[j] += h
            dn[j] -= h
            if not _biv_feasible(tr1, tr2, up, x1, x2):
                up = cur.copy()
            if not _biv_feasible(tr1, tr2, dn, x1, x2):
                dn = cur.copy()
            if up[j] != dn[j]:
                grad[j] = (ll_at(up) - ll_at(dn)) / (up[j] - dn[j])
        if float(np.linalg.norm(grad)) < tol:
            break
        s = step
        accepted = False
        for _ in range(60):
            cand = cur + s * grad
            if not _biv_feasible(tr1, tr2, cand, x1, x2):
                s *= 0.5
                continue
            cand_ll = ll_at(cand)
            if cand_ll >= cur_ll:
                cur, cur_ll = cand, cand_ll
                accepted = True
                break
            s *= 0.5
        else:
            raise BetaSearchFailedError(
                "no feasible ascent step for the transform parameters")
        if not accepted:
            break
    return tr1.with_params(cur[:k]), tr2.with_params(cur[k:]), cur_ll


def fit_biv_inhom(sample, p1: int, p2: int, families,
                  cfg: em.FitConfig = em.FitConfig()) -> BivFitResult:
    """EM for transformed bivariate block models: per iteration, one E/M
    step on the back-transformed pairs, then gradient ascent of the joint
    incomplete likelihood in the transform parameters."""
    x1, x2, w = _biv_data(sample)
    if x1.size == 0:
        raise ValueError("empty dataset")
    if p1 < 1 or p2 < 1:
        raise ValueError("need at least one phase per block")

    trs = []
    for fam, xj in zip(families, (x1, x2)):
        if isinstance(fam, TransformFamily):
            trs.append(fam)
        else:
            trs.append(em.default_transform_init(fam, xj, np.empty(0)))
    tr1, tr2 = trs
    if isinstance(cfg.init, mph.InhomMPHModel):
        tr1, tr2 = cfg.init.transforms
    has_params = tr1.params.shape[0] + tr2.params.shape[0] > 0
    step, tol = (cfg.step_length if cfg.step_length is not None
                 else em.ASCENT_FALLBACK[0],
                 cfg.grad_tol if cfg.grad_tol is not None
                 else em.ASCENT_FALLBACK[1])

    rng = np.random.default_rng(cfg.seed)
    if isinstance(cfg.init, mph.InhomMPHModel):
        model = cfg.init.base
    elif isinstance(cfg.init, mph.BivariateBlockModel):
        model = cfg.init
    else:
        t1 = float(np.average(np.atleast_1d(tr1.g_inv(x1)), weights=w))
        t2_ = float(np.average(np.atleast_1d(tr2.g_inv(x2)), weights=w))
        model = init_biv_block(p1, p2, rng, max(t1, 1e-6), max(t2_, 1e-6))

    total_weight = float(w.sum())
    trace = np.empty(cfg.iterations)
    for it in range(cfg.iterations):
        y1 = np.atleast_1d(tr1.g_inv(x1))
        y2 = np.atleast_1d(tr2.g_inv(x2))
        stats, _ = biv_estep(model, y1, y2, w, cfg.eps)
        model = biv_mstep(stats, total_weight, model.p1)
        if has_params:
            tr1, tr2, ll = _biv_beta_ascent(model, tr1, tr2, x1, x2, w,
                                            step, tol, cfg.max_inner, cfg.eps)
        else:
            ll = _biv_loglik(model, tr1, tr2, x1, x2, w, cfg.eps)
        trace[it] = ll
    converged = cfg.iterations >= 2 and abs(trace[-1] - trace[-2]) < 1e-8 * (
        1.0 + abs(trace[-1]))
    result_model = mph.InhomMPHModel(model, (tr1, tr2))
    return BivFitResult(model=result_model, log_likelihood=float(trace[-1]),
                        trace=trace, converged=bool(converged),
                        iterations=cfg.iterations)


def fit_biv_block(sample, p1: int, p2: int,
                  cfg: em.FitConfig = em.FitConfig()) -> BivFitResult:
    """EM for bivariate block models on exact pairs (the identity-transform
    special case of the transformed driver)."""
    res = fit_biv_inhom(sample, p1, p2, (Identity(), Identity()), cfg)
    return replace(res, model=res.model.base)
