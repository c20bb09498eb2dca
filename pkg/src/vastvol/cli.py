"""Command-line entry point wiring the library into complete workflows.

Subcommands: ``simulate``, ``estimate``, ``allocate``, ``backtest``,
``verify-rate``. Exit codes: 0 success, 2 usage error, 3 data or
feasibility error, 4 verification-band failure.

Every option can also be supplied through a flat ``key = value`` config
file (``#`` comments allowed) passed as ``--config``; explicit flags
override file values. Randomized commands require an explicit ``--seed``.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import backtest as bt
from . import concentration, estimators, portfolio, psdproject, simengine, tickdata
from .exceptions import VastvolError

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_BAND = 4

_STRATEGY_NAMES = {
    "lowfreq": bt.Estimator.LOWFREQ_100D,
    "all-refresh-tscv": bt.Estimator.ALLREFRESH_TSCV_10D,
    "all-refresh-rk": bt.Estimator.ALLREFRESH_RK_10D,
    "pairwise-tscv": bt.Estimator.PAIRWISE_TSCV_10D,
    "latent-oracle": bt.Estimator.LATENT_ORACLE_1D,
    "equal-weight": bt.Estimator.EQUAL_WEIGHT,
}

_ESTIMATE_METHODS = ("pairwise-tscv", "all-refresh-tscv", "all-refresh-rk", "lowfreq")


def _float_list(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def read_config(path) -> dict[str, str]:
    out: dict[str, str] = {}
    with open(path) as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{line_no}: expected 'key = value'")
            key, _, value = line.partition("=")
            out[key.strip()] = value.strip()
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vastvol",
        description="Vast volatility matrix estimation and portfolio allocation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="generate tick and latent-grid files")
    sim.add_argument("--config", help="flat key = value config file")
    sim.add_argument("--p", type=int, required=True, help="number of assets")
    sim.add_argument("--days", type=int, required=True, help="trading days")
    sim.add_argument("--seed", type=int, required=True)
    sim.add_argument("--noise-std", type=float, default=0.0005)
    sim.add_argument("--out", required=True, help="output directory")

    est = sub.add_parser("estimate", help="estimate a covariance matrix from ticks")
    est.add_argument("--config", help="flat key = value config file")
    est.add_argument("--data-dir", required=True, help="directory with ticks_D<i>.csv")
    est.add_argument("--method", required=True, choices=_ESTIMATE_METHODS)
    est.add_argument("--days", type=int, default=10, help="trailing window, days")
    est.add_argument("--kernel-H", type=int, default=1, dest="kernel_h")
    est.add_argument("--project", choices=("shift", "clip", "none"), default="none")
    est.add_argument("--oracle", help="matrix prefix to compare against (prints a_p)")
    est.add_argument("--workers", type=int, default=1)
    est.add_argument("--out", required=True, help="output file prefix")

    alloc = sub.add_parser("allocate", help="solve the constrained allocation")
    alloc.add_argument("--config", help="flat key = value config file")
    alloc.add_argument("--matrix", required=True, help="covariance matrix prefix")
    alloc.add_argument("--c", type=_float_list, required=True,
                       help="comma-separated gross-exposure caps")
    alloc.add_argument("--project", choices=("shift", "clip", "none"), default="none")
    alloc.add_argument("--out", required=True, help="output directory")

    back = sub.add_parser("backtest", help="rolling out-of-sample strategy test")
    back.add_argument("--config", help="flat key = value config file")
    back.add_argument("--data-dir", required=True)
    back.add_argument("--strategies", required=True,
                      help="comma-separated: " + ",".join(_STRATEGY_NAMES))
    back.add_argument("--c", type=_float_list, required=True)
    back.add_argument("--tau", type=int, default=1, help="holding days")
    back.add_argument("--mode", choices=("simulation", "empirical"), default="simulation")
    back.add_argument("--seed", type=int, required=True)
    back.add_argument("--start-day", type=int, default=None)
    back.add_argument("--lowfreq-window", type=int, default=100)
    back.add_argument("--hf-window", type=int, default=10)
    back.add_argument("--kernel-H", type=int, default=1, dest="kernel_h")
    back.add_argument("--projection", choices=("shift", "clip", "none"), default="shift")
    back.add_argument("--workers", type=int, default=1)
    back.add_argument("--out", required=True)

    ver = sub.add_parser("verify-rate", help="convergence-rate experiment")
    ver.add_argument("--config", help="flat key = value config file")
    ver.add_argument("--target", choices=("tsrv", "tscv", "both"), default="both")
    ver.add_argument("--n-grid", type=_int_list,
                     default=[500, 1000, 2000, 4000, 8000, 16000])
    ver.add_argument("--reps", type=int, default=200)
    ver.add_argument("--seed", type=int, required=True)
    ver.add_argument("--band", type=_float_list, default=[-0.28, -0.08],
                     help="acceptable slope interval lo,hi")
    ver.add_argument("--out", required=True)

    return parser


def _apply_config(argv: list[str], parser: argparse.ArgumentParser) -> list[str]:
    """Splice config-file values in as flags before the user's own flags."""
    if not argv or "--config" not in argv:
        return argv
    idx = argv.index("--config")
    if idx + 1 >= len(argv):
        return argv
    cfg = read_config(argv[idx + 1])
    tokens: list[str] = []
    for key, value in cfg.items():
        tokens.extend([f"--{key.replace('_', '-')}", value])
    return [argv[0]] + tokens + argv[1:]


# ---------------------------------------------------------------------------
# Subcommand implementations
# ---------------------------------------------------------------------------

def _load_tick_days(data_dir: Path, last_n: int | None = None) -> list[tickdata.TickPanel]:
    files = sorted(
        data_dir.glob("ticks_D*.csv"),
        key=lambda f: int(f.stem.split("D")[-1]),
    )
    if not files:
        raise VastvolError(f"no ticks_D<i>.csv files in {data_dir}")
    if last_n is not None:
        files = files[-last_n:]
    return [
        tickdata.load_panel(f, window_length=simengine.SECONDS_PER_DAY) for f in files
    ]


def _load_latent_days(data_dir: Path) -> list[np.ndarray] | None:
    files = sorted(
        data_dir.glob("latent_D*.csv"),
        key=lambda f: int(f.stem.split("D")[-1]),
    )
    if not files:
        return None
    grids = []
    for f in files:
        rows = np.loadtxt(f, delimiter=",", skiprows=1)
        grids.append(rows[:, 1:].T.copy())
    return grids


def cmd_simulate(args) -> int:
    if args.p < 1:
        print("error: --p must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    if args.days < 1:
        print("error: --days must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    params = simengine.default_params(args.p, rng_seed=args.seed)
    paths = simengine.simulate(
        params, n_days=args.days, noise_std=args.noise_std, rng_seed=args.seed,
        store_spot_vols=False,
    )
    for day, panel in enumerate(paths.tick_panels):
        tickdata.write_panel(panel, out / f"ticks_D{day}.csv")
        simengine.write_latent_csv(paths, day, out / f"latent_D{day}.csv")
    simengine.write_params_csv(params, paths.asset_ids, out / "params.csv")
    with open(out / "sim_meta.txt", "w") as fh:
        fh.write(f"p = {args.p}\n")
        fh.write(f"n_days = {args.days}\n")
        fh.write(f"noise_std = {args.noise_std:.12g}\n")
        fh.write(f"seed = {args.seed}\n")
        fh.write(f"seconds_per_day = {simengine.SECONDS_PER_DAY}\n")
    for day, panel in enumerate(paths.tick_panels):
        counts = [len(s) for s in panel.series]
        print(
            f"day {day}: ticks per asset min={min(counts)} "
            f"median={int(np.median(counts))} max={max(counts)}"
        )
    return EXIT_OK


def cmd_estimate(args) -> int:
    data_dir = Path(args.data_dir)
    tick_days = _load_tick_days(data_dir, last_n=args.days)
    if args.method == "lowfreq":
        closes = bt.daily_closes(tick_days)
        est = estimators.lowfreq_sample_cov(closes, asset_ids=tick_days[0].asset_ids)
    else:
        panel = tickdata.concat_days(tick_days, simengine.SECONDS_PER_DAY)
        window_days = float(len(tick_days))
        if args.method == "pairwise-tscv":
            est = estimators.estimate_matrix_pairwise(
                panel, window_days, workers=args.workers
            )
        elif args.method == "all-refresh-tscv":
            est = estimators.estimate_matrix_allrefresh(
                panel, window_days, method="TSCV", workers=args.workers
            )
        else:
            est = estimators.estimate_matrix_allrefresh(
                panel, window_days, method="RK", kernel_h=args.kernel_h,
                workers=args.workers,
            )
    if args.project != "none":
        est = psdproject.project_cov(est, args.project)
    estimators.save_cov_estimate(est, args.out)
    diag = psdproject.condition_diagnostics(est)
    print(f"method = {est.method.value}")
    print(f"n_min = {est.n_min}")
    print(f"rejections = {len(est.rejections)}")
    print(f"min_eigenvalue = {diag.min_eig:.6g}")
    print(f"max_eigenvalue = {diag.max_eig:.6g}")
    print(f"condition_number = {diag.condition_number:.6g}")
    if args.oracle:
        oracle = estimators.load_cov_estimate(args.oracle)
        a_p = portfolio.max_elementwise_error(est, oracle)
        print(f"a_p = {a_p:.6g}")
    if est.rejections:
        for a, b, reason in est.rejections:
            print(f"rejected pair ({a}, {b}): {reason}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def cmd_allocate(args) -> int:
    if any(c < 1 for c in args.c):
        print("error: every gross exposure c must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    est = estimators.load_cov_estimate(args.matrix)
    if args.project != "none":
        est = psdproject.project_cov(est, args.project)
    diag = psdproject.condition_diagnostics(est)
    scale = max(abs(diag.max_eig), 1e-300)
    if diag.min_eig < -1e-8 * scale:
        print(
            f"error: matrix indefinite (min eigenvalue {diag.min_eig:.3g}); "
            "rerun with --project shift or --project clip",
            file=sys.stderr,
        )
        return EXIT_DATA
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for c in args.c:
        weights = portfolio.solve_min_variance(est, c)
        portfolio.save_weights(weights, est.asset_ids, out / f"weights_c{c:g}.csv")
        print(
            f"c={c:g}: gross={weights.gross_exposure:.6f} "
            f"max={weights.max_weight:.4f} min={weights.min_weight:.4f} "
            f"long={weights.n_long} short={weights.n_short}"
        )
    return EXIT_OK


def cmd_backtest(args) -> int:
    strategies = [s.strip() for s in args.strategies.split(",") if s.strip()]
    unknown = [s for s in strategies if s not in _STRATEGY_NAMES]
    if unknown:
        print(f"error: unknown strategies {unknown}", file=sys.stderr)
        return EXIT_USAGE
    data_dir = Path(args.data_dir)
    tick_days = _load_tick_days(data_dir)
    latent_days = _load_latent_days(data_dir) if args.mode == "simulation" else None
    if args.mode == "simulation" and latent_days is None:
        print(
            "error: simulation mode needs latent_D<i>.csv files for assessment",
            file=sys.stderr,
        )
        return EXIT_DATA
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    reports = []
    for name in strategies:
        spec = bt.StrategySpec(
            estimator=_STRATEGY_NAMES[name],
            holding_days=args.tau,
            c_grid=tuple(args.c),
            projection=args.projection,
            lowfreq_window=args.lowfreq_window,
            hf_window=args.hf_window,
            kernel_h=args.kernel_h,
        )
        reports.extend(
            bt.out_of_sample_sweep(
                tick_days, latent_days, spec, args.c,
                start_day=args.start_day, workers=args.workers,
            )
        )
    with open(out / "report.csv", "w") as fh:
        fh.write(
            "strategy,c,annualized_std,annualized_mean,max_weight,"
            "min_weight,n_long,n_short,n_rebalances\n"
        )
        for r in reports:
            fh.write(
                f"{r.strategy},{r.c:.12g},{r.annualized_std:.12g},"
                f"{r.annualized_mean:.12g},{r.max_weight:.12g},{r.min_weight:.12g},"
                f"{r.n_long:.12g},{r.n_short:.12g},{r.n_rebalances}\n"
            )
    if len(set(args.c)) >= 3:
        curve = bt.risk_curve(reports)
        with open(out / "risk_curve.csv", "w") as fh:
            fh.write("strategy,c,annualized_std,max_weight\n")
            for pt in curve.points:
                fh.write(
                    f"{pt.strategy},{pt.c:.12g},{pt.annualized_std:.12g},"
                    f"{pt.max_weight:.12g}\n"
                )
        with open(out / "risk_curve_argmin.csv", "w") as fh:
            fh.write("strategy,c_argmin,min_std,at_boundary\n")
            for strategy in curve.argmin_c:
                fh.write(
                    f"{strategy},{curve.argmin_c[strategy]:.12g},"
                    f"{curve.min_std[strategy]:.12g},"
                    f"{int(curve.at_boundary[strategy])}\n"
                )
    for r in reports:
        print(
            f"{r.strategy} c={r.c:g}: std={r.annualized_std:.4f} "
            f"mean={r.annualized_mean:.4f} rebalances={r.n_rebalances}"
        )
    return EXIT_OK


def cmd_verify_rate(args) -> int:
    if len(args.band) != 2 or args.band[0] >= args.band[1]:
        print("error: --band needs lo,hi with lo < hi", file=sys.stderr)
        return EXIT_USAGE
    targets = ["TSRV", "TSCV"] if args.target == "both" else [args.target.upper()]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ok = True
    for k, target in enumerate(targets):
        exp = concentration.run_rate_experiment(
            target, args.n_grid, args.reps, seed=args.seed + k
        )
        tail = concentration.tail_shape_report(exp)
        with open(out / f"rate_{target.lower()}.csv", "w") as fh:
            fh.write("n,rmse\n")
            for n, rmse in zip(exp.n_grid, exp.rmse):
                fh.write(f"{n},{rmse:.12g}\n")
        with open(out / f"tail_{target.lower()}.csv", "w") as fh:
            fh.write("x,exceedance,fit\n")
            for x, p, fit in tail.rows:
                fh.write(f"{x:.12g},{p:.12g},{fit:.12g}\n")
        in_band = args.band[0] <= exp.fitted_slope <= args.band[1]
        ok = ok and in_band
        print(
            f"{target}: fitted slope {exp.fitted_slope:.4f} "
            f"(band [{args.band[0]:g}, {args.band[1]:g}]) "
            f"{'OK' if in_band else 'OUT OF BAND'}"
        )
        if not tail.degraded:
            print(f"{target}: tail fit C = {tail.c_hat:.4f}")
    return EXIT_OK if ok else EXIT_BAND


_COMMANDS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "allocate": cmd_allocate,
    "backtest": cmd_backtest,
    "verify-rate": cmd_verify_rate,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _apply_config(argv, parser)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else EXIT_OK
    try:
        return _COMMANDS[args.command](args)
    except VastvolError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
