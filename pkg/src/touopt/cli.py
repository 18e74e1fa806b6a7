"""Command-line front end.

    touopt bill  --config site.toml [--out DIR]
    touopt sweep --config site.toml [--out DIR] [--baseline E19TOU]
    touopt bva   --config site.toml [--out DIR] [--baseline E19TOU]
    touopt validate-tariff data/tariffs/*.toml [--year 2019]

Failures print one line ``ERROR <category> <message>`` to stderr and exit
with the category's code.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import analysis
from .config import RESOLUTIONS, ConfigError, RunConfig, load_config
from .profiles import ProfileError, load_site
from .solver import BACKENDS
from .tariff import TariffError, check_eligibility, coverage_report, load_tariff

EXIT_OK = 0
EXIT_USAGE = 2  # argparse's own code
EXIT_CONFIG = 3
EXIT_INPUT = 4
EXIT_SOLVER = 5
EXIT_INTERNAL = 6

CATEGORIES = {EXIT_CONFIG: "config", EXIT_INPUT: "input", EXIT_SOLVER: "solver", EXIT_INTERNAL: "internal"}


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _one_line(text: str) -> str:
    return " ".join(str(text).split())


def _load_inputs(cfg: RunConfig):
    try:
        cfg.check_files()
    except ConfigError as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from None
    try:
        tariffs = [load_tariff(p) for p in cfg.tariff_files]
        site, unit = load_site(
            cfg.load_profile, cfg.pv_unit_profile, cfg.year, cfg.timezone, cfg.file_resolution, cfg.resolution
        )
    except (TariffError, ProfileError) as exc:
        raise CliError(EXIT_INPUT, str(exc)) from None
    names = [t.name for t in tariffs]
    if len(set(names)) != len(names):
        raise CliError(EXIT_CONFIG, f"duplicate tariff names {names}")
    if cfg.baseline is not None and cfg.baseline not in names:
        raise CliError(EXIT_CONFIG, f"baseline tariff {cfg.baseline!r} is not among {names}")
    for tariff in tariffs:
        try:
            coverage_report(tariff, cfg.year)
        except TariffError as exc:
            raise CliError(EXIT_INPUT, f"{tariff.name}: {exc}") from None
    return tariffs, site, unit


def _warn_eligibility(tariff, site, unit, pv_kw: float, bpr_kw: float) -> None:
    h = site.grid.step_hours
    verdict = check_eligibility(
        tariff.option,
        annual_pv_energy_kwh=float(unit.per_kw_output.sum()) * pv_kw * h,
        annual_consumption_kwh=float(site.base_demand_kw.sum()) * h,
        bes_power_kw=bpr_kw,
        max_annual_demand_kw=float(site.base_demand_kw.max()),
    )
    if not verdict:
        print(f"WARNING eligibility {tariff.name}: {verdict.reason}", file=sys.stderr)


def _relative(cfg: RunConfig, series: dict[str, np.ndarray]) -> dict[str, np.ndarray] | None:
    if cfg.baseline is None:
        return None
    return analysis.relative_to(series, cfg.baseline, cfg.relative_mode)


def cmd_bill(cfg: RunConfig, out: Path) -> None:
    tariffs, site, unit = _load_inputs(cfg)
    if cfg.bill_tariffs:
        unknown = set(cfg.bill_tariffs) - {t.name for t in tariffs}
        if unknown:
            raise CliError(EXIT_CONFIG, f"[bill] tariffs {sorted(unknown)} are not loaded")
        tariffs = [t for t in tariffs if t.name in cfg.bill_tariffs]
    for tariff in tariffs:
        _warn_eligibility(tariff, site, unit, cfg.pv_capacity_kw, cfg.battery.power_rating_kw)
        annual = analysis.annual_bill(
            site, tariff, cfg.battery, cfg.pv_capacity_kw, unit, cfg.solver, cfg.workers, cfg.year
        )
        analysis.write_monthly_csv(analysis.output_path(out, "bill", tariff.name, "monthly"), annual)
        analysis.write_dispatch_csv(analysis.output_path(out, "bill", tariff.name, "dispatch"), annual)
        print(f"{tariff.name} annual_total {analysis.fmt(annual.total)} ({analysis.money(annual.total)})")


def cmd_sweep(cfg: RunConfig, out: Path) -> None:
    if not cfg.sweeps:
        raise CliError(EXIT_CONFIG, "no [sweep] scenarios configured")
    tariffs, site, unit = _load_inputs(cfg)
    for parameter, values in cfg.sweeps.items():
        results = analysis.sweep(
            site, tariffs, cfg.battery, parameter, values, cfg.pv_capacity_kw, unit, cfg.solver, cfg.workers, cfg.year
        )
        totals = {name: res.annual_totals for name, res in results.items()}
        relative = _relative(cfg, totals)
        analysis.write_sweep_monthly_csv(analysis.output_path(out, "sweep", parameter, "monthly"), results)
        for name, res in results.items():
            rel = None if relative is None else relative[name]
            analysis.write_sweep_summary_csv(analysis.output_path(out, "sweep", parameter, name), res, rel)
        analysis.write_wide_csv(analysis.output_path(out, "sweep", parameter, "annual"), parameter, values, totals)
        if relative is not None:
            analysis.write_wide_csv(
                analysis.output_path(out, "sweep", parameter, "relative", cfg.baseline), parameter, values, relative
            )
        print(f"{parameter}: {len(values)} points x {len(tariffs)} tariffs")


def cmd_bva(cfg: RunConfig, out: Path) -> None:
    if not cfg.bva_power:
        raise CliError(EXIT_CONFIG, "no [bva] bes_power grid configured")
    tariffs, site, unit = _load_inputs(cfg)
    results = analysis.bva_sweep(
        site,
        tariffs,
        cfg.battery,
        cfg.bva_power,
        cfg.bva_duration_hours,
        cfg.pv_capacity_kw,
        unit,
        cfg.solver,
        cfg.workers,
        cfg.year,
    )
    series = {name: res.bva for name, res in results.items()}
    relative = _relative(cfg, series)
    for name, res in results.items():
        rel = None if relative is None else relative[name]
        analysis.write_bva_csv(analysis.output_path(out, "bva", name), res, rel)
    analysis.write_wide_csv(analysis.output_path(out, "bva", "all"), "bpr_kw", cfg.bva_power, series)
    for name, res in results.items():
        print(f"{name} bva_at_max_power {analysis.fmt(res.bva[-1])} ({analysis.money(res.bva[-1])})")


def cmd_validate_tariff(paths: list[str], year: int) -> None:
    for path in paths:
        try:
            tariff = load_tariff(path)
            minutes = coverage_report(tariff, year)
        except FileNotFoundError:
            raise CliError(EXIT_CONFIG, f"tariff file not found: {path}") from None
        except OSError as exc:
            raise CliError(EXIT_CONFIG, f"cannot read {path}: {exc.strerror}") from None
        except TariffError as exc:
            raise CliError(EXIT_INPUT, str(exc)) from None
        shares = " ".join(f"{name}={count / 60:.0f}h" for name, count in minutes.items())
        print(f"OK {tariff.name} ({tariff.option}) {year}: {shares}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="touopt", description="Minimize electricity bills with PV and batteries.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (
        ("bill", "annual bill per tariff with monthly breakdown and dispatch"),
        ("sweep", "annual bills over PV or battery size grids"),
        ("bva", "battery value added over a battery power grid"),
    ):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, type=Path, help="run configuration (TOML)")
        p.add_argument("--out", type=Path, default=Path("out"), help="output directory (default: out)")
        p.add_argument("--resolution", type=int, choices=RESOLUTIONS, help="time step in minutes")
        p.add_argument("--solver", choices=BACKENDS, help="LP backend")
        p.add_argument("--baseline", help="report results relative to this tariff")
        p.add_argument("--workers", type=int, help="worker processes")
    p = sub.add_parser("validate-tariff", help="parse tariff files and check they cover every minute of a year")
    p.add_argument("paths", nargs="+")
    p.add_argument("--year", type=int, default=2019)
    return parser


def _dispatch(args) -> None:
    if args.command == "validate-tariff":
        cmd_validate_tariff(args.paths, args.year)
        return
    try:
        cfg = load_config(args.config).with_overrides(args.resolution, args.solver, args.baseline)
        if args.workers is not None:
            cfg = replace(cfg, workers=args.workers)
    except ConfigError as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from None
    args.out.mkdir(parents=True, exist_ok=True)
    command = {"bill": cmd_bill, "sweep": cmd_sweep, "bva": cmd_bva}[args.command]
    try:
        command(cfg, args.out)
    except analysis.AnalysisError as exc:
        raise CliError(EXIT_SOLVER, str(exc)) from None
    except ValueError as exc:
        # parameter problems surfaced by the analysis layer
        raise CliError(EXIT_CONFIG, str(exc)) from None


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _dispatch(args)
    except CliError as exc:
        print(f"ERROR {CATEGORIES[exc.code]} {_one_line(exc)}", file=sys.stderr)
        return exc.code
    except OSError as exc:
        print(f"ERROR input {_one_line(exc)}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001 - last-resort one-line report
        print(f"ERROR internal {type(exc).__name__}: {_one_line(exc)}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
