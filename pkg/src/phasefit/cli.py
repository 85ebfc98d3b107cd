"""Command-line front end: fit models to CSV data, simulate, and export
evaluation / QQ / contour plot data.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import em, em_multi, io, iph, mph, ph
from .exceptions import PhasefitError
from .transforms import Identity, Pareto, make_transform

PROGRESS_EVERY = 100
QUANTILE_TOL = 1e-8

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4

UNIVARIATE_MODELS = {
    "ph": None,
    "mpareto": "pareto",
    "mweibull": "weibull",
    "mgompertz": "gompertz",
    "mgev": "gev",
}
BIVARIATE_MODELS = {
    "bivph": None,
    "bivmpareto": "pareto",
    "bivmweibull": "weibull",
}
MODEL_CHOICES = list(UNIVARIATE_MODELS) + ["mph"] + list(BIVARIATE_MODELS)


class UsageError(Exception):
    pass


def _parse_phases(text: str, want: int):
    parts = text.split(",")
    if len(parts) != want:
        raise UsageError(f"--phases expects {want} value(s), got {text!r}")
    try:
        vals = [int(v) for v in parts]
    except ValueError:
        raise UsageError(f"invalid --phases {text!r}") from None
    if any(v < 1 for v in vals):
        raise UsageError("phase counts must be positive")
    return vals


def _progress(done: int, loglik: float):
    print(f"iteration {done} log-likelihood {loglik:.6f}", file=sys.stderr)


def _run_chunked(fit_once, iterations: int):
    """Run a fit in blocks of PROGRESS_EVERY iterations, emitting a progress
    line after each block; fit_once(n_iters, init) -> result."""
    done = 0
    init = None
    traces = []
    res = None
    while done < iterations:
        n = min(PROGRESS_EVERY, iterations - done)
        res = fit_once(n, init)
        init = res.model
        done += n
        trace = res.sum_trace if isinstance(res, em_multi.MPHFitResult) else res.trace
        traces.append(trace)
        _progress(done, float(trace[-1]))
    full = np.concatenate(traces)
    return res, full


def cmd_fit(args) -> int:
    sample = io.ingest(args.data)
    cfg_kw = dict(seed=args.seed, max_inner=args.max_inner)
    if args.step_length is not None:
        cfg_kw["step_length"] = args.step_length
    if args.grad_tol is not None:
        cfg_kw["grad_tol"] = args.grad_tol

    model_kind = args.model
    if model_kind in UNIVARIATE_MODELS:
        obs = io.sample_to_observations(sample)
        p, = _parse_phases(args.phases, 1)
        family = UNIVARIATE_MODELS[model_kind]
        if model_kind == "mpareto" and not args.fit_beta:
            # unit-scale power tail: fit the log-shifted data as plain PH
            tr = Pareto([1.0])
            log_obs = _transform_observations(obs, tr)
            fit_once = lambda n, init: em.fit_ph(
                log_obs, p, em.FitConfig(iterations=n, init=init, **cfg_kw))
            res, trace = _run_chunked(fit_once, args.iterations)
            model = iph.IPHModel(res.model, tr)
        elif family is None:
            fit_once = lambda n, init: em.fit_ph(
                obs, p, em.FitConfig(iterations=n, init=init, **cfg_kw))
            res, trace = _run_chunked(fit_once, args.iterations)
            model = res.model
        else:
            fit_once = lambda n, init: em.fit_iph(
                obs, p,
                init.transform if isinstance(init, iph.IPHModel) else family,
                em.FitConfig(iterations=n, init=init, **cfg_kw))
            res, trace = _run_chunked(fit_once, args.iterations)
            model = res.model
    elif model_kind == "mph":
        p, = _parse_phases(args.phases, 1)
        fit_once = lambda n, init: em_multi.fit_mph(
            sample, p, em.FitConfig(iterations=n, init=init, **cfg_kw))
        res, trace = _run_chunked(fit_once, args.iterations)
        model = res.model
    else:
        if sample.d != 2:
            raise io.DataError(
                f"model {model_kind!r} requires bivariate data, got d = {sample.d}")
        p1, p2 = _parse_phases(args.phases, 2)
        family = BIVARIATE_MODELS[model_kind]
        data = sample.exact_matrix()
        if model_kind == "bivmpareto" and not args.fit_beta:
            tr = Pareto([1.0])
            logd = np.log1p(data)
            fit_once = lambda n, init: em_multi.fit_biv_block(
                np.column_stack([logd[:, 0], logd[:, 1]]), p1, p2,
                em.FitConfig(iterations=n, init=init, **cfg_kw))
            res, trace = _run_chunked(fit_once, args.iterations)
            model = mph.InhomMPHModel(res.model, (Pareto([1.0]), Pareto([1.0])))
        elif family is None:
            fit_once = lambda n, init: em_multi.fit_biv_block(
                data, p1, p2, em.FitConfig(iterations=n, init=init, **cfg_kw))
            res, trace = _run_chunked(fit_once, args.iterations)
            model = res.model
        else:
            fit_once = lambda n, init: em_multi.fit_biv_inhom(
                data, p1, p2,
                init.transforms if isinstance(init, mph.InhomMPHModel)
                else (family, family),
                em.FitConfig(iterations=n, init=init, **cfg_kw))
            res, trace = _run_chunked(fit_once, args.iterations)
            model = res.model

    metadata = {"iterations": args.iterations, "seed": args.seed,
                "log_likelihood": float(trace[-1])}
    io.save_model(model, args.out, metadata)
    if args.trace:
        io.write_csv(args.trace, ["iteration", "log_likelihood"],
                     [(i + 1, v) for i, v in enumerate(trace)])
    return EXIT_OK


def _transform_observations(obs, tr):
    out = []
    for ob in obs:
        if ob.kind == "exact":
            out.append(em.exact(float(tr.g_inv(ob.y)), ob.weight))
        else:
            out.append(em.interval(float(tr.g_inv(ob.v)),
                                   float(tr.g_inv(ob.w)) if np.isfinite(ob.w)
                                   else np.inf, ob.weight))
    return out


def cmd_simulate(args) -> int:
    model = io.load_model(args.model)
    rng = np.random.default_rng(args.seed)
    n = args.n
    if isinstance(model, ph.PHModel):
        draws = ph.ph_sample_times(model, n, rng)[:, None]
        header = ["x"]
    elif isinstance(model, iph.IPHModel):
        draws = iph.iph_sample_many(model, n, rng)[:, None]
        header = ["x"]
    elif isinstance(model, mph.MPHModel):
        draws = mph.mph_sample_many(model, n, rng)
        header = [f"x{j + 1}" for j in range(model.d)]
    elif isinstance(model, mph.BivariateBlockModel):
        draws = mph.mph_sample_many(model.to_mph(), n, rng)
        header = ["x1", "x2"]
    elif isinstance(model, mph.InhomMPHModel):
        draws = mph.inhom_sample_many(model, n, rng)
        header = [f"x{j + 1}" for j in range(draws.shape[1])]
    else:
        raise io.DataError(f"unsupported model type {type(model).__name__}")
    io.write_csv(args.out, header, draws)
    return EXIT_OK


def _univariate_eval_fns(model):
    if isinstance(model, ph.PHModel):
        return (lambda x: ph.ph_density(model, x),
                lambda x: ph.ph_survival(model, x))
    if isinstance(model, iph.IPHModel):
        return (lambda x: iph.iph_density(model, x),
                lambda x: iph.iph_survival(model, x))
    raise io.DataError("eval/qq require a univariate model document")


def ph_quantile(m: ph.PHModel, prob: float) -> float:
    """Inverse CDF by bisection on the survival function."""
    if not 0.0 < prob < 1.0:
        raise ValueError("probability must be in (0, 1)")
    target = 1.0 - prob
    hi = 1.0
    while ph.ph_survival(m, hi) > target:
        hi *= 2.0
        if hi > 1e300:
            raise PhasefitError("quantile bracket expansion failed")
    lo = 0.0
    while hi - lo > QUANTILE_TOL * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if ph.ph_survival(m, mid) > target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def model_quantile(model, prob: float) -> float:
    """Quantile of a univariate model; transformed models map the base
    quantile through g (mirrored for decreasing transforms)."""
    if isinstance(model, ph.PHModel):
        return ph_quantile(model, prob)
    if isinstance(model, iph.IPHModel):
        tr = model.transform
        base_prob = prob if tr.increasing else 1.0 - prob
        return float(tr.g(ph_quantile(model.base, base_prob)))
    raise io.DataError("quantiles require a univariate model document")


def _parse_grid(text: str, n_fields: int):
    parts = text.split(",")
    if len(parts) != n_fields:
        raise UsageError(f"--grid expects {n_fields} comma-separated values")
    try:
        return [float(v) for v in parts]
    except ValueError:
        raise UsageError(f"invalid --grid {text!r}") from None


def cmd_eval(args) -> int:
    model = io.load_model(args.model)
    dens_fn, surv_fn = _univariate_eval_fns(model)
    if args.data:
        sample = io.ingest(args.data)
        obs = io.sample_to_observations(sample)
        xs = np.array([ob.y for ob in obs if ob.kind == "exact"])
        xs.sort()
    else:
        lo, hi, count = _parse_grid(args.grid, 3)
        xs = np.linspace(lo, hi, int(count))
    rows = [(x, float(dens_fn(x)), float(surv_fn(x))) for x in xs]
    io.write_csv(args.out, ["x", "density", "survival"], rows)
    return EXIT_OK


def cmd_qq(args) -> int:
    model = io.load_model(args.model)
    sample = io.ingest(args.data)
    obs = io.sample_to_observations(sample)
    xs = np.sort(np.array([ob.y for ob in obs if ob.kind == "exact"]))
    if xs.size == 0:
        raise io.DataError("qq requires exact observations")
    probs = (np.arange(1, xs.size + 1) - 0.5) / xs.size
    rows = [(float(x), model_quantile(model, p)) for x, p in zip(xs, probs)]
    io.write_csv(args.out, ["empirical_quantile", "model_quantile"], rows)
    return EXIT_OK


def cmd_contour(args) -> int:
    model = io.load_model(args.model)
    x1lo, x1hi, n1, x2lo, x2hi, n2 = _parse_grid(args.grid, 6)
    g1 = np.linspace(x1lo, x1hi, int(n1))
    g2 = np.linspace(x2lo, x2hi, int(n2))
    rows = []
    if isinstance(model, mph.BivariateBlockModel):
        for a in g1:
            vals = mph.biv_density(model, np.full(g2.shape, a), g2)
            rows += [(float(a), float(b), float(v)) for b, v in zip(g2, vals)]
    elif isinstance(model, mph.InhomMPHModel) and isinstance(
            model.base, mph.BivariateBlockModel):
        for a in g1:
            vals = mph.inhom_density(model, np.full(g2.shape, a), g2)
            rows += [(float(a), float(b), float(v)) for b, v in zip(g2, vals)]
    elif isinstance(model, (mph.MPHModel, mph.InhomMPHModel)):
        if not args.sample_size:
            raise UsageError(
                "this model has no explicit density; pass --sample-size for "
                "an empirical grid estimate")
        rng = np.random.default_rng(args.seed)
        if isinstance(model, mph.MPHModel):
            draws = mph.mph_sample_many(model, args.sample_size, rng)
        else:
            draws = mph.inhom_sample_many(model, args.sample_size, rng)
        if draws.shape[1] != 2:
            raise io.DataError("contour requires a bivariate model")
        hist, e1, e2 = np.histogram2d(draws[:, 0], draws[:, 1],
                                      bins=[g1, g2], density=True)
        c1 = 0.5 * (e1[:-1] + e1[1:])
        c2 = 0.5 * (e2[:-1] + e2[1:])
        for i, a in enumerate(c1):
            rows += [(float(a), float(b), float(hist[i, j]))
                     for j, b in enumerate(c2)]
    else:
        raise io.DataError("contour requires a bivariate model document")
    io.write_csv(args.out, ["x1", "x2", "value"], rows)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="phasefit",
        description="Fit, simulate and evaluate (transformed, multivariate) "
                    "phase-type models.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit a model to CSV data")
    p_fit.add_argument("data")
    p_fit.add_argument("--model", required=True, choices=MODEL_CHOICES)
    p_fit.add_argument("--phases", required=True,
                       help="phase count p, or p1,p2 for bivariate models")
    p_fit.add_argument("--iterations", type=int, default=1000)
    p_fit.add_argument("--seed", type=int, default=0)
    p_fit.add_argument("--step-length", type=float, default=None)
    p_fit.add_argument("--grad-tol", type=float, default=None)
    p_fit.add_argument("--max-inner", type=int, default=50)
    p_fit.add_argument("--fit-beta", action="store_true",
                       help="estimate the power-tail parameter instead of "
                            "the unit-scale log-transform shortcut")
    p_fit.add_argument("--out", required=True)
    p_fit.add_argument("--trace", default=None,
                       help="optional CSV path for the log-likelihood trace")
    p_fit.set_defaults(func=cmd_fit)

    p_sim = sub.add_parser("simulate", help="draw samples from a model")
    p_sim.add_argument("model")
    p_sim.add_argument("--n", type=int, required=True)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--out", required=True)
    p_sim.set_defaults(func=cmd_simulate)

    p_eval = sub.add_parser("eval", help="density/survival values on a grid")
    p_eval.add_argument("model")
    p_eval.add_argument("--grid", default=None, help="min,max,count")
    p_eval.add_argument("--data", default=None,
                        help="evaluate at the points of this CSV instead")
    p_eval.add_argument("--out", required=True)
    p_eval.set_defaults(func=cmd_eval)

    p_qq = sub.add_parser("qq", help="empirical vs model quantile pairs")
    p_qq.add_argument("model")
    p_qq.add_argument("data")
    p_qq.add_argument("--out", required=True)
    p_qq.set_defaults(func=cmd_qq)

    p_ct = sub.add_parser("contour", help="joint density values on a grid")
    p_ct.add_argument("model")
    p_ct.add_argument("--grid", required=True,
                      help="x1min,x1max,n1,x2min,x2max,n2")
    p_ct.add_argument("--sample-size", type=int, default=0)
    p_ct.add_argument("--seed", type=int, default=0)
    p_ct.add_argument("--out", required=True)
    p_ct.set_defaults(func=cmd_contour)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else EXIT_OK
    try:
        if args.command == "eval" and not args.data and not args.grid:
            raise UsageError("eval needs --grid or --data")
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (io.DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (PhasefitError, ValueError, FloatingPointError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
