"""Univariate EM estimation: conditional-expectation E-steps (exact and
interval-censored), the complete-data M-step, plain phase-type fitting and
the transformed-family fit with gradient ascent in the transform parameters.

Per-observation E-step terms are evaluated in one batched pass (shared
uniformization series across the dataset) and reduced in index order, so
results are deterministic for a given seed and dataset.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from . import linalg, ph
from .exceptions import BetaSearchFailedError, NumericalUnderflowError
from .iph import IPHModel
from .transforms import GEV, Identity, TransformFamily, make_transform

DENSITY_FLOOR = 1e-300

# (step length, gradient-norm tolerance) defaults per transform family
ASCENT_DEFAULTS = {
    "gompertz": (1e-8, 1e-3),
    "gev": (1e-5, 0.1),
}
ASCENT_FALLBACK = (1e-5, 1e-3)


@dataclass(frozen=True)
class Observation:
    """An exact value or a censoring interval (v, w]; w may be inf.

    Right-censoring at v is interval(v, inf); left-censoring at w is
    interval(0, w).  ``weight`` supports aggregated (histogram) data.
    """

    kind: str
    y: float = 0.0
    v: float = 0.0
    w: float = math.inf
    weight: float = 1.0

    def __post_init__(self):
        if self.weight <= 0.0:
            raise ValueError("observation weight must be positive")
        if self.kind == "exact":
            if not self.y > 0.0:
                raise ValueError("exact observations must be positive")
        elif self.kind == "interval":
            if not (0.0 <= self.v < self.w):
                raise ValueError("censoring interval requires 0 <= v < w")
        else:
            raise ValueError(f"unknown observation kind {self.kind!r}")


def exact(y: float, weight: float = 1.0) -> Observation:
    return Observation(kind="exact", y=float(y), weight=weight)


def interval(v: float, w: float = math.inf, weight: float = 1.0) -> Observation:
    return Observation(kind="interval", v=float(v), w=float(w), weight=weight)


def right_censored(v: float, weight: float = 1.0) -> Observation:
    return interval(v, math.inf, weight)


def split_observations(data):
    """(exact values, exact weights, interval lows, interval highs,
    interval weights) as arrays."""
    ys, wy, vs, ws, wi = [], [], [], [], []
    for ob in data:
        if isinstance(ob, Observation):
            if ob.kind == "exact":
                ys.append(ob.y)
                wy.append(ob.weight)
            else:
                vs.append(ob.v)
                ws.append(ob.w)
                wi.append(ob.weight)
        else:
            ys.append(float(ob))
            wy.append(1.0)
    return (np.asarray(ys), np.asarray(wy), np.asarray(vs), np.asarray(ws),
            np.asarray(wi))


@dataclass
class ESufficientStats:
    """Summed conditional expectations of the complete-data statistics:
    starts B_k, occupation Z_k, transitions N_kl, exits N_k."""

    B: np.ndarray
    Z: np.ndarray
    Nmat: np.ndarray
    Nexit: np.ndarray

    def __add__(self, other: "ESufficientStats") -> "ESufficientStats":
        return ESufficientStats(self.B + other.B, self.Z + other.Z,
                                self.Nmat + other.Nmat,
                                self.Nexit + other.Nexit)

    @classmethod
    def zeros(cls, p: int) -> "ESufficientStats":
        return cls(np.zeros(p), np.zeros(p), np.zeros((p, p)), np.zeros(p))


@dataclass(frozen=True)
class FitConfig:
    iterations: int = 1000
    step_length: float | None = None   # family default when None
    grad_tol: float | None = None      # family default when None
    max_inner: int = 50                # cap on ascent steps per EM iteration
    eps: float = linalg.DEFAULT_EPS    # uniformization truncation target
    seed: int = 0
    init: object = None                # PHModel / IPHModel / model-specific

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be positive")
        if self.step_length is not None and self.step_length <= 0:
            raise ValueError("step length must be positive")
        if self.grad_tol is not None and self.grad_tol <= 0:
            raise ValueError("gradient tolerance must be positive")
        if self.eps <= 0:
            raise ValueError("eps must be positive")


@dataclass
class FitResult:
    model: object
    log_likelihood: float
    trace: np.ndarray
    converged: bool
    iterations: int


def estep_exact(m: ph.PHModel, ys, weights=None,
                eps: float = linalg.DEFAULT_EPS) -> ESufficientStats:
    """Conditional expectations given exact absorption times."""
    ys = np.asarray(ys, dtype=float)
    w = np.ones_like(ys) if weights is None else np.asarray(weights, dtype=float)
    if ys.size == 0:
        return ESufficientStats.zeros(m.p)
    E, G = linalg.van_loan_batch(m.T, np.outer(m.t, m.pi), ys, eps)
    Et = np.einsum("nkl,l->nk", E, m.t)
    denom = Et @ m.pi
    if np.any(denom < DENSITY_FLOOR):
        i = int(np.argmin(denom))
        raise NumericalUnderflowError(
            f"density underflow at observation {i} (y={ys[i]:g})")
    scale = w / denom
    B = m.pi * (scale @ Et)
    Gw = np.einsum("n,nkl->kl", scale, G)
    Z = np.diag(Gw).copy()
    Nmat = m.T * Gw.T
    np.fill_diagonal(Nmat, 0.0)
    piE = np.einsum("k,nkl->nl", m.pi, E)
    Nexit = m.t * (scale @ piE)
    return ESufficientStats(B, Z, Nmat, Nexit)


def estep_censored(m: ph.PHModel, vs, ws, weights=None,
                   eps: float = linalg.DEFAULT_EPS) -> ESufficientStats:
    """Conditional expectations given interval censoring Y in (v, w];
    w = inf drops the upper-bound terms (right censoring)."""
    vs = np.asarray(vs, dtype=float)
    ws = np.asarray(ws, dtype=float)
    wgt = np.ones_like(vs) if weights is None else np.asarray(weights, dtype=float)
    n = vs.size
    p = m.p
    if n == 0:
        return ESufficientStats.zeros(p)
    e = np.ones(p)
    U = linalg.green_matrix(m.T)
    piU = m.pi @ U

    bounds = np.concatenate([vs, ws])
    finite = np.isfinite(bounds)
    Eb = np.zeros((2 * n, p, p))
    Cb = np.zeros((2 * n, p, p))
    if np.any(finite):
        Ef, Cf = linalg.van_loan_batch(m.T, np.outer(e, m.pi), bounds[finite], eps)
        Eb[finite] = Ef
        Cb[finite] = Cf
    Ev, Ew = Eb[:n], Eb[n:]
    Cv, Cw = Cb[:n], Cb[n:]

    sv = np.einsum("nkl,l->nk", Ev, e)
    sw = np.einsum("nkl,l->nk", Ew, e)
    denom = sv @ m.pi - sw @ m.pi
    if np.any(denom < DENSITY_FLOOR):
        i = int(np.argmin(denom))
        raise NumericalUnderflowError(
            f"interval probability underflow at observation {i} "
            f"((v, w] = ({vs[i]:g}, {ws[i]:g}])")
    scale = wgt / denom
    B = m.pi * (scale @ (sv - sw))
    # J[n, k] = pi (-T)^{-1} (e^{Tv} - e^{Tw}) e_k
    J = np.einsum("k,nkl->nl", piU, Ev - Ew)
    Cdiff = np.einsum("n,nkl->kl", scale, Cw - Cv)
    Jw = scale @ J
    Z = Jw - np.diag(Cdiff)
    Nmat = m.T * (Jw[None, :] - Cdiff).T
    np.fill_diagonal(Nmat, 0.0)
    Nexit = m.t * Jw
    return ESufficientStats(B, Z, Nmat, Nexit)


def estep(m: ph.PHModel, data, eps: float = linalg.DEFAULT_EPS) -> ESufficientStats:
    """E-step over a mixed exact/censored dataset (statistics are additive)."""
    ys, wy, vs, ws, wi = split_observations(data)
    return estep_exact(m, ys, wy, eps) + estep_censored(m, vs, ws, wi, eps)


def mstep(stats: ESufficientStats, total_weight: float) -> ph.PHModel:
    """Complete-data MLE: pi_k = B_k/N, t_kl = N_kl/Z_k, t_k = N_k/Z_k.

    States with zero occupation are pruned (with a warning) instead of
    dividing by zero.
    """
    keep = stats.Z > DENSITY_FLOOR
    if not np.all(keep):
        warnings.warn(
            f"pruning {np.count_nonzero(~keep)} state(s) with zero occupation",
            RuntimeWarning, stacklevel=2)
    B = stats.B[keep]
    Z = stats.Z[keep]
    Nmat = stats.Nmat[np.ix_(keep, keep)]
    Nexit = stats.Nexit[keep]
    pi = B / total_weight
    s = pi.sum()
    if not np.all(keep) and s > 0:
        pi = pi / s
    rates = Nmat / Z[:, None]
    t = Nexit / Z
    T = rates.copy()
    np.fill_diagonal(T, 0.0)
    np.fill_diagonal(T, -(T.sum(axis=1) + t))
    return ph.PHModel(pi, T)


def ph_log_likelihood(m: ph.PHModel, data, eps: float = linalg.DEFAULT_EPS) -> float:
    """Incomplete-data log-likelihood of a PH model on mixed data."""
    ys, wy, vs, ws, wi = split_observations(data)
    total = 0.0
    if ys.size:
        E = linalg.expm_batch(m.T, ys, eps)
        dens = np.einsum("k,nkl,l->n", m.pi, E, m.t)
        if np.any(dens < DENSITY_FLOOR):
            i = int(np.argmin(dens))
            raise NumericalUnderflowError(f"density underflow at observation {i}")
        total += float(wy @ np.log(dens))
    if vs.size:
        sv = _survival_batch(m, vs, eps)
        sw = _survival_batch(m, ws, eps)
        prob = sv - sw
        if np.any(prob < DENSITY_FLOOR):
            i = int(np.argmin(prob))
            raise NumericalUnderflowError(
                f"interval probability underflow at observation {i}")
        total += float(wi @ np.log(prob))
    return total


def _survival_batch(m: ph.PHModel, ys, eps) -> np.ndarray:
    ys = np.asarray(ys, dtype=float)
    out = np.zeros_like(ys)
    finite = np.isfinite(ys)
    if np.any(finite):
        E = linalg.expm_batch(m.T, ys[finite], eps)
        out[finite] = np.einsum("k,nkl,l->n", m.pi, E, np.ones(m.p))
    return out


def init_ph(p: int, rng: np.random.Generator, target_mean: float) -> ph.PHModel:
    """Random starting model: Dirichlet pi, uniform off-diagonal and exit
    rates, then a global time rescale so the PH mean matches target_mean."""
    pi = rng.dirichlet(np.ones(p))
    off = rng.uniform(size=(p, p))
    exit_r = rng.uniform(size=p)
    T = off.copy()
    np.fill_diagonal(T, 0.0)
    np.fill_diagonal(T, -(T.sum(axis=1) + exit_r))
    model = ph.PHModel(pi, T)
    mean = ph.ph_moment(model, 1)
    return ph.PHModel(pi, T * (mean / target_mean))


def mean_target(ys, wy, vs, ws, wi) -> float:
    """Crude location scale used to seed random initial models: mean of the
    exact values and censoring-interval midpoints (lower bound when
    right-censored)."""
    parts = []
    if ys.size:
        parts.append(float(np.average(ys, weights=wy)))
    if vs.size:
        mids = np.where(np.isfinite(ws), 0.5 * (vs + ws), vs)
        parts.append(float(np.average(mids, weights=wi)))
    return max(float(np.mean(parts)), 1e-6)


def _transform_data(transform: TransformFamily, ys, wy, vs, ws, wi):
    """Map original-scale data to the base (PH) time scale; censoring
    intervals flip when the transform is decreasing."""
    ty = np.atleast_1d(transform.g_inv(ys)) if ys.size else ys
    if vs.size:
        lo = np.atleast_1d(transform.g_inv(vs))
        hi = np.atleast_1d(transform.g_inv(ws))
        tlo = np.minimum(lo, hi)
        thi = np.maximum(lo, hi)
    else:
        tlo, thi = vs, ws
    return ty, wy, tlo, thi, wi


def iph_incomplete_loglik(base: ph.PHModel, transform: TransformFamily,
                          ys, wy, vs, ws, wi,
                          eps: float = linalg.DEFAULT_EPS) -> float:
    """Incomplete-data log-likelihood on the original scale."""
    total = 0.0
    if ys.size:
        if not np.all(transform.in_support(ys)):
            raise NumericalUnderflowError("data outside transform support")
        y = np.atleast_1d(transform.g_inv(ys))
        E = linalg.expm_batch(base.T, y, eps)
        core = np.einsum("k,nkl,l->n", base.pi, E, base.t)
        dens = core * np.atleast_1d(transform.g_inv_abs_deriv(ys))
        if np.any(dens < DENSITY_FLOOR):
            i = int(np.argmin(dens))
            raise NumericalUnderflowError(f"density underflow at observation {i}")
        total += float(wy @ np.log(dens))
    if vs.size:
        _, _, tlo, thi, _ = _transform_data(transform, np.empty(0), None, vs, ws, wi)
        slo = _survival_batch(base, tlo, eps)
        shi = _survival_batch(base, thi, eps)
        prob = slo - shi
        if np.any(prob < DENSITY_FLOOR):
            i = int(np.argmin(prob))
            raise NumericalUnderflowError(
                f"interval probability underflow at observation {i}")
        total += float(wi @ np.log(prob))
    return total


def _feasible(transform: TransformFamily, params, ys, vs, ws) -> bool:
    if not type(transform).feasible(params):
        return False
    cand = transform.with_params(params)
    ok = True
    if ys.size:
        ok = ok and bool(np.all(cand.in_support(ys)))
    if vs.size:
        ok = ok and bool(np.all(cand.in_support(vs[vs > 0])))
        finite = np.isfinite(ws)
        ok = ok and bool(np.all(cand.in_support(ws[finite])))
    return ok


def _fd_gradient(base, transform, ys, wy, vs, ws, wi, eps) -> np.ndarray:
    beta = transform.params
    grad = np.zeros_like(beta)
    for j in range(beta.shape[0]):
        h = max(1e-7, 1e-7 * abs(beta[j]))
        up, dn = beta.copy(), beta.copy()
        up[j] += h
        dn[j] -= h
        if not _feasible(transform, up, ys, vs, ws):
            up = beta.copy()
        if not _feasible(transform, dn, ys, vs, ws):
            dn = beta.copy()
        if np.array_equal(up, dn):
            continue
        lu = iph_incomplete_loglik(base, transform.with_params(up), ys, wy, vs, ws, wi, eps)
        ld = iph_incomplete_loglik(base, transform.with_params(dn), ys, wy, vs, ws, wi, eps)
        grad[j] = (lu - ld) / (up[j] - dn[j])
    return grad


def _beta_ascent(base, transform, ys, wy, vs, ws, wi, step, tol, max_inner, eps):
    """Fixed-step gradient ascent in the transform parameters with step
    halving on infeasibility or likelihood decrease."""
    cur = transform
    cur_ll = iph_incomplete_loglik(base, cur, ys, wy, vs, ws, wi, eps)
    for _ in range(max_inner):
        grad = _fd_gradient(base, cur, ys, wy, vs, ws, wi, eps)
        norm = float(np.linalg.norm(grad))
        if norm < tol:
            break
        s = step
        accepted = False
        for _ in range(60):
            cand = cur.params + s * grad
            if not _feasible(cur, cand, ys, vs, ws):
                s *= 0.5
                continue
            cand_tr = cur.with_params(cand)
            cand_ll = iph_incomplete_loglik(base, cand_tr, ys, wy, vs, ws, wi, eps)
            if cand_ll >= cur_ll:
                cur, cur_ll = cand_tr, cand_ll
                accepted = True
                break
            s *= 0.5
        else:
            raise BetaSearchFailedError(
                "no feasible ascent step for the transform parameters")
        if not accepted:
            break
    return cur, cur_ll


def default_transform_init(family: str, ys, vs) -> TransformFamily:
    """Data-driven feasible starting parameters for each family."""
    if family == "identity":
        return Identity()
    if family in ("pareto", "weibull", "gompertz"):
        return make_transform(family, [1.0])
    if family == "gev":
        vals = ys if ys.size else vs[vs > 0]
        mu = float(np.mean(vals))
        sigma = float(np.std(vals)) or 1.0
        for xi in (0.1, 0.01, 0.0):
            cand = GEV([mu, sigma, xi])
            if np.all(cand.in_support(vals)):
                return cand
        return GEV([mu, sigma, 0.0])
    raise ValueError(f"unknown transform family {family!r}")


def fit_iph(data, p: int, family, cfg: FitConfig = FitConfig()) -> FitResult:
    """EM for transformed phase-type data: per iteration, one conventional
    E/M step on the back-transformed data followed by gradient ascent in
    the transform parameters on the incomplete likelihood."""
    ys, wy, vs, ws, wi = split_observations(data)
    if ys.size + vs.size == 0:
        raise ValueError("empty dataset")
    if p < 1:
        raise ValueError("need at least one phase")

    if isinstance(family, TransformFamily):
        transform = family
    elif isinstance(cfg.init, IPHModel):
        transform = cfg.init.transform
    else:
        transform = default_transform_init(family, ys, vs)
    fam_name = transform.name
    step, tol = ASCENT_DEFAULTS.get(fam_name, ASCENT_FALLBACK)
    step = cfg.step_length if cfg.step_length is not None else step
    tol = cfg.grad_tol if cfg.grad_tol is not None else tol

    rng = np.random.default_rng(cfg.seed)
    if isinstance(cfg.init, IPHModel):
        base = cfg.init.base
    elif isinstance(cfg.init, ph.PHModel):
        base = cfg.init
    else:
        ty, _, tlo, thi, _ = _transform_data(transform, ys, wy, vs, ws, wi)
        base = init_ph(p, rng, mean_target(ty, wy, tlo, thi, wi))

    has_params = transform.params.shape[0] > 0
    total_weight = float(wy.sum() + wi.sum())
    trace = np.empty(cfg.iterations)
    for it in range(cfg.iterations):
        ty, twy, tlo, thi, twi = _transform_data(transform, ys, wy, vs, ws, wi)
        stats = estep_exact(base, ty, twy, cfg.eps) \
            + estep_censored(base, tlo, thi, twi, cfg.eps)
        base = mstep(stats, total_weight)
        if has_params:
            transform, ll = _beta_ascent(base, transform, ys, wy, vs, ws, wi,
                                         step, tol, cfg.max_inner, cfg.eps)
        else:
            ll = iph_incomplete_loglik(base, transform, ys, wy, vs, ws, wi, cfg.eps)
        trace[it] = ll
    converged = cfg.iterations >= 2 and abs(trace[-1] - trace[-2]) < 1e-8 * (
        1.0 + abs(trace[-1]))
    model = IPHModel(base, transform)
    return FitResult(model=model, log_likelihood=float(trace[-1]), trace=trace,
                     converged=bool(converged), iterations=cfg.iterations)


def fit_ph(data, p: int, cfg: FitConfig = FitConfig()) -> FitResult:
    """Conventional phase-type EM (the identity-transform special case)."""
    res = fit_iph(data, p, Identity(), cfg)
    return replace(res, model=res.model.base)
