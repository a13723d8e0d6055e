"""Command line: ``fcwq run``, ``fcwq evaluate`` and ``fcwq simulate``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import pandas as pd

from .config import config_from_dict, load_config
from .data import DataError, ReturnSeries, load_prices, load_returns
from .evaluation import build_report
from .pipeline import VARIANTS, PipelineError, QuantilePanel, run_variants, write_outputs
from .simulate import DEFAULT_PARAMS, Dgp, simulate, write_simulation

log = logging.getLogger("fcwq")


def _read_series(path: str, column: str | None) -> ReturnSeries:
    cols = pd.read_csv(path, nrows=0).columns
    if column is not None:
        return load_prices(path, column) if column in ("close", "price") else load_returns(path, column)
    if "return" in cols:
        return load_returns(path, "return")
    if "close" in cols:
        return load_prices(path, "close")
    raise DataError(f"{path}: expected a 'return' or 'close' column, found {list(cols)}")


def cmd_run(args) -> int:
    config = load_config(args.config) if args.config else config_from_dict({})
    series = _read_series(args.input, args.column)
    panel = QuantilePanel.from_csv(args.panel) if args.panel else None
    variants = args.variants.split(",") if args.variants else None
    result = run_variants(config, series, variants, panel)
    paths = write_outputs(result, args.out)
    for path in paths.values():
        log.info("wrote %s", path)
    return 0


def cmd_evaluate(args) -> int:
    fc = pd.read_csv(args.forecasts, float_precision="round_trip", keep_default_na=False,
                     na_values=[""])
    series = _read_series(args.returns, args.column)
    ret = pd.Series(series.returns, index=pd.to_datetime(series.dates))
    fc["date"] = pd.to_datetime(fc["date"])
    name_col = "variant" if "variant" in fc.columns else None
    group_col = "series" if "series" in fc.columns else None
    outputs, returns, dates = {}, {}, {}
    for sname, sdf in (fc.groupby(group_col, sort=False) if group_col else [("series", fc)]):
        outputs[sname] = {}
        for mname, mdf in (sdf.groupby(name_col, sort=False) if name_col else [("model", sdf)]):
            missing = mdf.loc[~mdf["date"].isin(ret.index), "date"]
            if len(missing):
                raise DataError(f"no return for forecast date {missing.iloc[0].date()}")
            r = ret.loc[mdf["date"]].to_numpy()
            es = mdf["es_forecast"].to_numpy(float) if "es_forecast" in mdf else None
            outputs[sname][mname] = (mdf["var_forecast"].to_numpy(float), es)
            returns[sname] = r
            dates[sname] = mdf["date"].dt.strftime("%Y-%m-%d").to_numpy()
    alpha = args.alpha
    report = build_report(outputs, returns, alpha, dates)
    out = Path(args.out)
    out.write_text(report.to_json() + "\n")
    losses = Path(args.losses) if args.losses else out.with_name(out.stem + "_losses.csv")
    report.losses.to_csv(losses, index=False, float_format="%.17g")
    log.info("wrote %s and %s", out, losses)
    return 0


def cmd_simulate(args) -> int:
    params = {}
    for item in args.param or []:
        key, _, value = item.partition("=")
        params[key] = float(value)
    levels = [float(x) for x in args.levels.split(",")]
    result = simulate(Dgp(args.dgp, params, args.seed, args.t, args.burn), levels)
    write_simulation(result, args.out)
    log.info("wrote %s", args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fcwq", description="Quantile forecast combination with weighted-quantile ES.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="rolling VaR/ES forecasts")
    r.add_argument("--config", help="YAML config file")
    r.add_argument("--input", required=True, help="CSV with a date column and 'return' or 'close'")
    r.add_argument("--column", help="value column (default: 'return', else 'close' prices)")
    r.add_argument("--out", required=True, help="output directory")
    r.add_argument("--panel", help="reuse a panel.csv from an earlier run instead of refitting")
    r.add_argument("--variants", help=f"comma-separated subset of {','.join(VARIANTS)}")
    r.set_defaults(func=cmd_run)

    e = sub.add_parser("evaluate", help="backtest a forecasts CSV")
    e.add_argument("--forecasts", required=True)
    e.add_argument("--returns", required=True)
    e.add_argument("--column")
    e.add_argument("--alpha", type=float, default=0.025)
    e.add_argument("--out", required=True, help="report JSON path")
    e.add_argument("--losses", help="per-time loss CSV (default: <out>_losses.csv)")
    e.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("simulate", help="simulate returns with true VaR/ES columns")
    s.add_argument("--dgp", default="gjr-t", choices=sorted(DEFAULT_PARAMS))
    s.add_argument("--t", type=int, default=3000, help="number of returns")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--burn", type=int, default=500)
    s.add_argument("--levels", default="0.005,0.015,0.025")
    s.add_argument("--param", action="append", metavar="KEY=VALUE", help="override a DGP parameter")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (DataError, PipelineError, ValueError, OSError) as exc:
        print(f"fcwq: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
