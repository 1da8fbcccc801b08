"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from .limitlaw import DegenerateLimitError, coverage_oracle_hist, misspec_thresholds, vjn_mean, vjn_second_moment
from .mle import EmptyBinError, histogram_mle, kjump_mle, monotone_mle, theta_bc, theta_naive
from .model import BandError, InfeasibleClassError, PointSet, StepFn, Truth, simulate
from .posterior import HistPosteriorSampler, PosteriorError, RJConfig, rjmcmc
from .prior import HistPrior, SubordinatorPrior, prior_from_json

EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _load_json(text: str):
    """Inline JSON or a path to a JSON file."""
    p = Path(text)
    if p.suffix == ".json" and p.exists():
        return json.loads(p.read_text())
    return json.loads(text)


def _grid(text: str):
    return [float(v) for v in text.split(",")]


def _emit(obj):
    print(json.dumps(obj, indent=2))


def cmd_simulate(a):
    truth = Truth.from_json(_load_json(a.truth))
    ps = simulate(truth, a.n, h=a.h, rng=a.seed)
    if a.out:
        ps.to_csv(a.out)
    _emit({"points": len(ps), "n": ps.n, "T": ps.T, "h": ps.h, "seed": a.seed, "out": a.out})


def cmd_mle(a):
    ps = PointSet.from_csv(a.data)
    if a.estimator == "hist":
        grid = _grid(a.grid) if a.grid else list(np.arange((a.k or 1) + 1) / (a.k or 1))
        r = histogram_mle(ps, grid)
    else:
        r = monotone_mle(ps)
        if a.estimator == "kjump":
            if a.k is None:
                raise ex.ConfigError("--k is required for the kjump estimator")
            r = kjump_mle(r, a.k)
    out = r.to_json()
    out["theta_naive"] = theta_naive(r)
    out["theta_bc"] = theta_bc(r, ps.n)
    _emit(out)


def cmd_posterior(a):
    ps = PointSet.from_csv(a.data)
    prior = prior_from_json(_load_json(a.prior))
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    if isinstance(prior, HistPrior):
        s = HistPosteriorSampler(ps, prior)
        th = s.sample_theta(np.random.default_rng(a.seed), a.iters)
        np.savetxt(out / "theta.csv", th, header="theta", comments="", fmt="%.17g")
        _emit({"draws": len(th), "mean": float(th.mean()), "sd": float(th.std())})
        return
    if isinstance(prior, SubordinatorPrior):
        prior = prior.as_cpp()
    weights = RJConfig.parse_moves(a.moves) if a.moves else RJConfig.weights
    summary = []
    for c in range(a.chains):
        cfg = RJConfig(iters=a.iters, burnin=a.burnin, thin=a.thin, weights=weights)
        chain = rjmcmc(ps, prior, cfg, np.random.default_rng([a.seed, c]))
        chain.validate(ps, every=max(1, len(chain) // 100))
        chain.to_csv(out / f"chain{c}.csv")
        (out / f"chain{c}.json").write_text(json.dumps(chain.to_json(every=a.archive_every)))
        summary.append({"chain": c, "draws": len(chain), "acceptance": chain.acceptance(),
                        "k_mean": float(chain.K.mean())})
    _emit(summary)


def cmd_limit(a):
    if a.oracle == "coverage":
        _emit({"K": a.k, "alpha": a.alpha, "coverage": coverage_oracle_hist(a.k, a.alpha)})
    elif a.oracle == "vjn-mean":
        _emit({"n": a.n, "K": a.k, "mean": vjn_mean(a.n, a.k), "second_moment": vjn_second_moment(a.n, a.k)})
    else:
        _emit(dict(n=a.n, K=a.k, **misspec_thresholds(a.n, a.k)))


def cmd_experiment(a):
    obj = _load_json(a.config)
    obj["kind"] = a.command
    cfg = ex.ExperimentConfig.from_json(obj)
    if a.seed is not None:
        cfg.master_seed = a.seed
    if a.reps is not None:
        cfg.reps = a.reps
    cfg.__post_init__()
    res = ex.run(cfg, workers=a.workers)
    outdir = a.out or cfg.outdir or f"out-{a.command}"
    ex.write_outputs(res, outdir)
    print(ex.aggregate_csv(res.aggregate), end="")


def cmd_report(a):
    if a.schema:
        print(ex.schema_text())
        return
    if a.dir:
        d = Path(a.dir)
        rows = list(ex.read_records(d / "aggregate.csv")[1])
        width = max((len(r["metric"]) for r in rows), default=6)
        for r in rows:
            print(f"{r['n']:>10}  {r['metric']:<{width}}  {r['value']}")
    if a.data:
        from .figure import svg_figure

        ps = PointSet.from_csv(a.data)
        fit = None
        if ps.T > 1 and np.any(ps.xs >= 1):
            fit = monotone_mle(ps, check_band=False).fit
        draws = []
        if a.chain:
            arch = json.loads(Path(a.chain).read_text())
            for d in arch["draws"][: a.max_draws]:
                draws.append(StepFn.from_jumps(d["t"], np.cumsum(d["a"]), ps.T))
        svg = svg_figure(ps, fit=fit, draws=draws, max_draws=a.max_draws)
        target = Path(a.svg or (Path(a.dir) / "figure.svg" if a.dir else "figure.svg"))
        target.write_text(svg)
        print(f"wrote {target}")
    if not (a.dir or a.data):
        raise ex.ConfigError("report needs --schema, --dir or --data")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bpl", description="Bayesian support-boundary laboratory")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="draw a PPP realisation")
    s.add_argument("--truth", required=True, help="truth JSON or path")
    s.add_argument("--n", type=float, required=True)
    s.add_argument("--h", type=float, default=None)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default=None)
    s.set_defaults(fn=cmd_simulate)

    s = sub.add_parser("mle", help="fit an MLE to a point set")
    s.add_argument("--data", required=True)
    s.add_argument("--estimator", choices=("hist", "mono", "kjump"), default="mono")
    s.add_argument("--grid", default=None, help="comma-separated grid for hist")
    s.add_argument("--k", type=int, default=None)
    s.set_defaults(fn=cmd_mle)

    s = sub.add_parser("posterior", help="sample a posterior")
    s.add_argument("--data", required=True)
    s.add_argument("--prior", default='{"kind": "cpp", "lam": 1.0, "gamma21exp": true}')
    s.add_argument("--iters", type=int, default=100_000)
    s.add_argument("--burnin", type=int, default=None)
    s.add_argument("--thin", type=int, default=None)
    s.add_argument("--chains", type=int, default=1)
    s.add_argument("--moves", default=None, help="h:t:b:d weights")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--archive-every", type=int, default=10, dest="archive_every")
    s.add_argument("--out", default="posterior-out")
    s.set_defaults(fn=cmd_posterior)

    s = sub.add_parser("limit", help="closed-form oracles")
    s.add_argument("--oracle", choices=("coverage", "vjn-mean", "thresholds"), required=True)
    s.add_argument("--k", type=int, default=100)
    s.add_argument("--n", type=float, default=1e4)
    s.add_argument("--alpha", type=float, default=0.05)
    s.set_defaults(fn=cmd_limit)

    for kind in ex.KINDS:
        s = sub.add_parser(kind, help=f"run the {kind} experiment")
        s.add_argument("--config", required=True, help="config JSON or path")
        s.add_argument("--seed", type=int, default=None)
        s.add_argument("--reps", type=int, default=None)
        s.add_argument("--workers", type=int, default=None)
        s.add_argument("--out", default=None)
        s.set_defaults(fn=cmd_experiment)

    s = sub.add_parser("report", help="render aggregates, schemas or a figure")
    s.add_argument("--schema", action="store_true")
    s.add_argument("--dir", default=None)
    s.add_argument("--data", default=None)
    s.add_argument("--chain", default=None, help="chain JSON archive for posterior overlays")
    s.add_argument("--svg", default=None)
    s.add_argument("--max-draws", type=int, default=50, dest="max_draws")
    s.set_defaults(fn=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        a.fn(a)
    except (BandError, EmptyBinError, DegenerateLimitError, FloatingPointError, ArithmeticError) as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ex.ConfigError, PosteriorError, InfeasibleClassError, ValueError, KeyError, TypeError,
            json.JSONDecodeError, FileNotFoundError) as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    return 0


if __name__ == "__main__":
    sys.exit(main())
