"""Command line entry point: ``invherd <subcommand> [flags]``.

Exit codes: 0 success, 1 usage error, 2 data error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .errors import ConfigError, DataError
from .market_data import write_panel, write_returns, write_trade_tape
from .pipeline import (RunConfig, load_trades, metadata, prepare, resolve_years, stage_causality, stage_classify,
                       stage_herd, stage_ingest, stage_spectrum, stage_transitions, write_json)
from .synthgen import SynthConfig, generate_trade_table

log = logging.getLogger("invherd")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2

SUBCOMMANDS = {
    "ingest": "trade tape -> inventory panel and return series files",
    "spectrum": "correlation spectrum with RMT and shuffle thresholds",
    "classify": "one-factor fits, strategy groups, census and sorted matrix",
    "transitions": "year-to-year group transition probabilities",
    "causality": "15-minute lagged cross-correlation and autocorrelation",
    "herd": "herding ledger, summary and timeline",
    "synth": "synthetic one-factor tape and panel",
    "full": "entire pipeline for every year of the tape",
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n\n{self.format_help()}")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--input", action="append", default=[], help="trade tape CSV (repeatable)")
    common.add_argument("--stock", help="stock symbol (required if the tape has several)")
    common.add_argument("--year", action="append", type=int, default=[], help="calendar year (repeatable)")
    common.add_argument("--horizon", help="interval length, e.g. 15m, 30m, 1d, 5d")
    common.add_argument("--session-open", default="09:00")
    common.add_argument("--session-close", default="17:30")
    common.add_argument("--alpha", type=float, default=0.05, help="binomial test level")
    common.add_argument("--shuffles", type=int, default=100, help="shuffle replicates")
    common.add_argument("--seed", type=int, default=None, help="root random seed")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--config", help="JSON config (synth parameters for 'synth')")
    common.add_argument("--min-days", type=int, default=200)
    common.add_argument("--min-transactions", type=int, default=1000)
    common.add_argument("--trades-per-interval", type=int, default=1, help="synth: trades per firm and interval")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="invherd", description="Inventory-variation analytics for trading firms.")
    parser.add_argument("--version", action="version", version=f"invherd {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True
    for name, help_ in SUBCOMMANDS.items():
        sub.add_parser(name, parents=[common], help=help_, description=help_)
    return parser


def run_config(ns: argparse.Namespace, seed_default: int = 0) -> RunConfig:
    cfg = RunConfig(
        inputs=list(ns.input), stock=ns.stock, years=list(ns.year), horizon=ns.horizon,
        session=(ns.session_open, ns.session_close), alpha=ns.alpha, n_shuffles=ns.shuffles,
        seed=seed_default if ns.seed is None else ns.seed, out=ns.out, config=ns.config,
        min_days=ns.min_days, min_transactions=ns.min_transactions, trades_per_interval=ns.trades_per_interval,
    )
    cfg.validate()
    return cfg


def _single_year(table, cfg: RunConfig) -> int:
    years = resolve_years(table, cfg)
    if len(years) != 1:
        raise ConfigError(f"tape covers years {years}; choose one with --year")
    return years[0]


def cmd_synth(ns, out: Path) -> list[Path]:
    synth = SynthConfig.from_json(ns.config) if ns.config else SynthConfig()
    if ns.seed is not None:
        synth.seed = ns.seed
    cfg = run_config(ns, synth.seed)
    table, panel, returns, truth = generate_trade_table(synth, cfg.trades_per_interval)
    year = int(str(panel.grid.days[0].year))
    tag = f"{synth.stock}_{year}_{synth.horizon}"
    meta = metadata(cfg, synth=synth.to_dict())
    tape = out / f"synth_tape_{synth.stock}.csv"
    write_trade_tape(table.to_records(), tape)
    pp, rp = out / f"panel_{tag}.csv", out / f"returns_{tag}.csv"
    write_panel(panel, pp, meta)
    write_returns(returns, rp, meta)
    truth_path = write_json(out / f"synth_truth_{synth.stock}.json", {"metadata": meta, **truth.to_dict()})
    return [tape, pp, pp.with_suffix(".json"), rp, rp.with_suffix(".json"), truth_path]


def dispatch(ns: argparse.Namespace) -> list[Path]:
    out = Path(ns.out)
    out.mkdir(parents=True, exist_ok=True)
    if ns.command == "synth":
        return cmd_synth(ns, out)

    cfg = run_config(ns)
    table = load_trades(cfg.inputs)
    cmd = ns.command
    if cmd == "transitions":
        return stage_transitions(table, cfg, resolve_years(table, cfg), out)
    if cmd == "full":
        paths = []
        years = resolve_years(table, cfg)
        for year in years:
            sy = prepare(table, cfg, year)
            paths += stage_ingest(sy, cfg, "1d", out)
            paths += stage_ingest(sy, cfg, "15m", out)
            paths += stage_spectrum(sy, cfg, "1d", out)
            paths += stage_classify(sy, cfg, "1d", out)
            paths += stage_causality(sy, cfg, out)
            for h in ("1d", "15m"):
                paths += stage_herd(sy, cfg, h, out)
        if len(years) >= 2:
            paths += stage_transitions(table, cfg, years, out)
        return paths

    sy = prepare(table, cfg, _single_year(table, cfg))
    if cmd == "ingest":
        return stage_ingest(sy, cfg, cfg.horizon or "1d", out)
    if cmd == "spectrum":
        return stage_spectrum(sy, cfg, cfg.horizon or "1d", out)
    if cmd == "classify":
        return stage_classify(sy, cfg, cfg.horizon or "1d", out)
    if cmd == "causality":
        if cfg.horizon not in (None, "15m"):
            raise ConfigError("causality runs on the 15m grid")
        return stage_causality(sy, cfg, out)
    if cmd == "herd":
        return stage_herd(sy, cfg, cfg.horizon or "1d", out)
    raise UsageError(f"unknown command {cmd!r}")


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        paths = dispatch(ns)
    except (ConfigError, UsageError) as exc:
        print(f"invherd {ns.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"invherd {ns.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    for p in paths:
        log.info("wrote %s", p)
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
