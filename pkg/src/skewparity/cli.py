"""Command-line interface.

Exit codes: 0 success, 1 computational failure (non-existence,
non-convergence, degenerate estimates), 2 input or parse error.
"""
from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from .backtest import BacktestConfig, JumpParams, compute_returns, run_backtest
from .budgeting import RiskBudget, check_existence, solve_rb
from .errors import (
    ExistenceError,
    ModelError,
    RegimeCollapseError,
    SingularCovarianceError,
    SkewParityError,
    SolverError,
)
from .estimation import ConstraintSet, EmConfig, constrained_ml_fit, em_fit
from .fileio import (
    InputError,
    parse_vector,
    pct,
    read_csv_table,
    read_model,
    render_table,
    synthetic_dates,
    write_csv,
    write_model,
)
from .jumps import DEFAULT_PI_STAR, posterior_jump_prob, quadratic_rule_nd, threshold_points_1d
from .mixture import simulate_regimes, to_period
from .panel import ReturnPanel
from .risk import RiskMeasure, risk_contributions

EXIT_OK, EXIT_COMPUTE, EXIT_INPUT = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_INPUT)


def _probability(text):
    v = float(text)
    if not 0.0 < v < 1.0:
        raise argparse.ArgumentTypeError(f"must lie in (0, 1), got {text}")
    return v


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return v


def _positive_float(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def _load_panel(args) -> ReturnPanel:
    dates, labels, values = read_csv_table(args.input)
    if args.returns:
        panel = ReturnPanel(values, dt=args.dt, labels=labels, dates=dates)
    else:
        try:
            panel = compute_returns(values, args.frequency, base_dt=args.dt, labels=labels, dates=dates)
        except ModelError as exc:
            raise InputError(f"{args.input}: {exc}") from None
    return panel


def _budgets(args, n):
    if args.budgets is None:
        return RiskBudget.equal(n)
    b = parse_vector(args.budgets, "--budgets")
    if b.size != n:
        raise InputError(f"--budgets has {b.size} entries for {n} assets")
    if np.any(b <= 0):
        raise InputError("--budgets must be strictly positive")
    return RiskBudget.normalized(b)


def _decomposition_table(dec, labels):
    rows = [
        [lab, pct(x), pct(mr), pct(rc), pct(rs)]
        for lab, x, mr, rc, rs in zip(labels, dec.weights, dec.marginal, dec.contributions, dec.relative)
    ]
    rows.append(["Total", pct(dec.weights.sum()), "", pct(dec.risk), pct(dec.relative.sum())])
    return render_table(["asset", "x_i", "MR_i", "RC_i", "RC*_i"], rows)


def _risk_heading(dec):
    name = {RiskMeasure.VOLATILITY: "volatility",
            RiskMeasure.GAUSSIAN_ES: "Gaussian expected shortfall",
            RiskMeasure.MIXTURE_ES: "expected shortfall with jumps"}[dec.measure]
    head = f"risk measure: {name}"
    if dec.alpha is not None:
        head += f" (alpha = {pct(dec.alpha)}%)"
    lines = [head, f"total risk: {pct(dec.risk)}%"]
    if dec.value_at_risk is not None:
        lines.append(f"value-at-risk: {pct(dec.value_at_risk)}%")
    return "\n".join(lines)


def _write_decomposition(path, dec, labels):
    rows = [[lab, x, mr, rc, rs] for lab, x, mr, rc, rs in
            zip(labels, dec.weights, dec.marginal, dec.contributions, dec.relative)]
    rows.append(["total", float(dec.weights.sum()), dec.value_at_risk if dec.value_at_risk is not None else math.nan,
                 dec.risk, float(dec.relative.sum())])
    write_csv(path, ["asset", "weight", "marginal", "contribution", "relative"], rows)


# --- commands -----------------------------------------------------------------------


def cmd_simulate(args):
    model, dt, labels = read_model(args.model)
    dt = args.dt or dt
    data, jumps = simulate_regimes(to_period(model, dt), args.periods, args.seed)
    dates = synthetic_dates(args.periods + (0 if args.returns else 1), dt)
    if args.returns:
        rows = [[d] + list(r) for d, r in zip(dates, data)]
    else:
        prices = np.vstack([np.full((1, model.n), 100.0), 100.0 * np.cumprod(1.0 + data, axis=0)])
        rows = [[d] + list(p) for d, p in zip(dates, prices)]
    write_csv(args.out, ["date"] + list(labels), rows)
    print(f"wrote {args.periods} periods ({int(jumps.sum())} jumps) to {args.out}")
    return EXIT_OK


def cmd_estimate(args):
    panel = _load_panel(args)
    if args.method == "em":
        res = em_fit(panel, EmConfig(max_iterations=args.max_iterations))
    else:
        if args.pi is None:
            raise InputError("--method ml needs --pi")
        no_jump = ()
        if args.no_jump:
            names = [s.strip() for s in args.no_jump.split(",")]
            unknown = [s for s in names if s not in panel.labels]
            if unknown:
                raise InputError(f"--no-jump: unknown assets {unknown}")
            no_jump = tuple(panel.labels.index(s) for s in names)
        res = constrained_ml_fit(panel, args.pi, ConstraintSet(no_jump_assets=no_jump),
                                 annual_intensity=args.annual_intensity)
    write_model(args.out, res.model, panel.dt, panel.labels)
    post_path = Path(args.posterior) if args.posterior else Path(args.out).with_suffix(".posterior.csv")
    dates = panel.dates or synthetic_dates(panel.T, panel.dt)
    write_csv(post_path, ["date", "posterior"], [[d, p] for d, p in zip(dates, res.posterior)])
    print(f"observations: {panel.T}, assets: {panel.n}, dt: {panel.dt!r}")
    print(f"log-likelihood: {res.loglik!r}")
    print(f"iterations: {res.iterations}")
    print(f"converged: {'yes' if res.converged else 'no'}")
    print(f"jump probability: {pct(res.model.lam)}%")
    if res.projection_distance > 0:
        print(f"jump covariance projected to PSD (distance {res.projection_distance:.3g})")
    print(f"model written to {args.out}; posterior probabilities to {post_path}")
    return EXIT_OK if res.converged else EXIT_COMPUTE


def _period_model(args):
    model, dt, labels = read_model(args.model)
    model = to_period(model, dt)
    if getattr(args, "mu", "estimate") == "zero":
        model = model.with_zero_mean()
    return model, labels


def cmd_risk(args):
    model, labels = _period_model(args)
    x = parse_vector(args.weights, "--weights")
    if x.size != model.n:
        raise InputError(f"--weights has {x.size} entries for {model.n} assets")
    if abs(x.sum() - 1.0) > 1e-8:
        raise InputError(f"--weights sum to {x.sum()!r}, not 1")
    measure = RiskMeasure.parse(args.measure)
    if measure.uses_alpha:
        test = model if measure is RiskMeasure.MIXTURE_ES else model.without_jumps()
        rep = check_existence(test, args.alpha)
        if not rep.exists:
            print(f"warning: alpha below max(alpha_minus = {pct(rep.alpha_minus)}%, lambda = "
                  f"{pct(rep.lam)}%); risk budgeting is not guaranteed at this level", file=sys.stderr)
    dec = risk_contributions(model, x, args.alpha, measure)
    print(_risk_heading(dec))
    print(_decomposition_table(dec, labels))
    if args.out:
        _write_decomposition(args.out, dec, labels)
    return EXIT_OK


def cmd_allocate(args):
    model, labels = _period_model(args)
    budgets = _budgets(args, model.n)
    sol = solve_rb(model, budgets, args.alpha, args.measure)
    dec = sol.decomposition
    print(_risk_heading(dec))
    print(f"sweeps: {sol.iterations}, max budget violation: {sol.max_budget_violation:.2e}")
    print(_decomposition_table(dec, labels))
    if args.out:
        _write_decomposition(args.out, dec, labels)
    return EXIT_OK


def cmd_backtest(args):
    panel = _load_panel(args)
    jumps = None
    if args.model:
        model, mdt, mlabels = read_model(args.model)
        if model.n != panel.n:
            raise InputError(f"model has {model.n} assets, data has {panel.n}")
        jumps = JumpParams.from_model(model)
    estimator = args.estimator or ("filtering" if jumps is not None else "rolling_gaussian")
    config = BacktestConfig(
        window=args.window,
        rebalance=args.rebalance,
        measure=args.measure,
        budgets=_budgets(args, panel.n),
        alpha=args.alpha,
        mu_convention=args.mu,
        estimator=estimator,
        pi_star=args.pi_star,
    )
    res = run_backtest(panel, config, jumps)
    dates = res.dates or synthetic_dates(panel.T, panel.dt)[config.window:]
    rows = [[d] + list(h) + [r, v, c] for d, h, r, v, c in
            zip(dates, res.holdings, res.returns, res.nav, res.cumulative_turnover)]
    if args.out:
        write_csv(args.out, ["date"] + list(panel.labels) + ["return", "nav", "turnover_to_date"], rows)
    s = res.summary
    print(f"estimator: {estimator}, measure: {config.measure.value}, window: {config.window}, "
          f"rebalance: {config.rebalance}")
    table = [
        ["annual return", pct(s["annual_return"])],
        ["volatility", pct(s["volatility"])],
        ["sharpe", f"{s['sharpe']:.2f}"],
        ["max drawdown", pct(s["max_drawdown"])],
        ["skewness", f"{s['skewness']:.2f}"],
        ["annual turnover", pct(s["turnover"])],
        ["final nav", f"{s['final_nav']:.4f}"],
        ["incidents", str(s["incidents"])],
    ]
    print(render_table(["statistic", "value"], table))
    for t, kind, msg in res.incidents:
        print(f"incident at row {t}: {kind}: {msg}", file=sys.stderr)
    return EXIT_OK


def cmd_detect(args):
    panel = _load_panel(args)
    model, mdt, _ = read_model(args.model)
    if model.n != panel.n:
        raise InputError(f"model has {model.n} assets, data has {panel.n}")
    post = posterior_jump_prob(model, panel.data, panel.dt)
    flags = post >= args.pi_star
    dates = panel.dates or synthetic_dates(panel.T, panel.dt)
    header = ["date", "posterior", "jump"]
    extra = None
    if model.lam <= 0.0:
        print("model has no jump component: no observation is flagged")
    elif model.n == 1:
        rule = threshold_points_1d(float(model.mu[0]), math.sqrt(model.sigma[0, 0]),
                                   float(model.mu_tilde[0]), math.sqrt(model.sigma_tilde[0, 0]),
                                   model.lam, args.pi_star, panel.dt)
        if rule.discriminant >= 0:
            print(f"thresholds: R- = {pct(rule.y_minus)}%, R+ = {pct(rule.y_plus)}%")
            print(f"kappa_sigma: {rule.kappa_sigma:.2f}")
        else:
            print("negative discriminant: every observation is flagged")
    else:
        rule = quadratic_rule_nd(model, pi_star=args.pi_star, dt=panel.dt)
        print(f"r* = {rule.r_star:.2f}" + ("" if rule.exact else " (rule evaluated on posteriors)"))
        extra = rule.quadratic_form(panel.data)
        header.append("quadratic_form")
    rows = []
    for k, (d, p, f) in enumerate(zip(dates, post, flags)):
        row = [d, float(p), "1" if f else "0"]
        if extra is not None:
            row.append(float(extra[k]))
        rows.append(row)
    if args.out:
        write_csv(args.out, header, rows)
    print(f"flagged {int(flags.sum())} of {panel.T} observations at pi* = {pct(args.pi_star)}%")
    return EXIT_OK


# --- parser ---------------------------------------------------------------------------


def _add_input(p):
    p.add_argument("input", help="CSV with an ISO date column and one column per asset")
    p.add_argument("--returns", action="store_true", help="input holds returns, not prices")
    p.add_argument("--dt", type=_positive_float, default=1.0 / 52, help="holding period in years (default 1/52)")
    p.add_argument("--frequency", type=_positive_int, default=1,
                   help="price rows per return period (default 1)")


def _add_risk(p, default_mu):
    p.add_argument("--alpha", type=_probability, default=0.95, help="confidence level (default 0.95)")
    p.add_argument("--measure", choices=("vol", "ges", "mes"), default="mes",
                   help="volatility, Gaussian ES or ES with jumps (default mes)")
    p.add_argument("--mu", choices=("zero", "estimate"), default=default_mu,
                   help=f"expected returns in the risk measure (default {default_mu})")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="skewparity", description="Risk parity with jumps: estimation, risk, allocation.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("estimate", help="fit the mixture model to a price or return CSV")
    _add_input(p)
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--method", choices=("em", "ml"), default="em")
    p.add_argument("--pi", type=_probability, help="fixed jump probability for --method ml")
    p.add_argument("--annual-intensity", action="store_true", help="--pi is an annual jump intensity")
    p.add_argument("--no-jump", help="comma-separated assets without a jump component")
    p.add_argument("--max-iterations", type=_positive_int, default=1000)
    p.add_argument("--posterior", help="posterior CSV path (default next to --out)")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("risk", help="risk decomposition of a portfolio")
    p.add_argument("--model", required=True)
    p.add_argument("--weights", required=True, help="comma-separated weights summing to 1")
    _add_risk(p, "estimate")
    p.add_argument("--out", help="CSV with the decomposition at full precision")
    p.set_defaults(func=cmd_risk)

    p = sub.add_parser("allocate", help="risk-budgeting portfolio")
    p.add_argument("--model", required=True)
    p.add_argument("--budgets", help="comma-separated risk budgets (default equal)")
    _add_risk(p, "estimate")
    p.add_argument("--out", help="CSV with weights and decomposition")
    p.set_defaults(func=cmd_allocate)

    p = sub.add_parser("backtest", help="rolling-window risk-budgeting backtest")
    _add_input(p)
    p.add_argument("--model", help="model file supplying the jump component")
    p.add_argument("--estimator", choices=("rolling_gaussian", "filtering", "windowed_ml"))
    p.add_argument("--window", type=_positive_int, default=52)
    p.add_argument("--rebalance", type=_positive_int, default=4)
    p.add_argument("--budgets")
    p.add_argument("--pi-star", type=_probability, default=DEFAULT_PI_STAR)
    _add_risk(p, "zero")
    p.add_argument("--out", help="CSV of holdings, returns, nav and turnover")
    p.set_defaults(func=cmd_backtest)

    p = sub.add_parser("detect", help="flag jumps by posterior probability")
    _add_input(p)
    p.add_argument("--model", required=True)
    p.add_argument("--pi-star", type=_probability, default=DEFAULT_PI_STAR)
    p.add_argument("--out", help="CSV of posteriors and flags")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("simulate", help="simulate prices or returns from a model file")
    p.add_argument("--model", required=True)
    p.add_argument("--periods", type=_positive_int, default=520)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dt", type=_positive_float, help="holding period (default: the model file's)")
    p.add_argument("--returns", action="store_true", help="write returns instead of prices")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ExistenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_COMPUTE
    except (SolverError, RegimeCollapseError, SingularCovarianceError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_COMPUTE
    except (ModelError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SkewParityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_COMPUTE


if __name__ == "__main__":
    sys.exit(main())
