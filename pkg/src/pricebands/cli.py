"""Command-line front end.

    pricebands price     --scenario FILE [--seed N] [--json] [--samples-out CSV] [--no-timestamp]
    pricebands pipeline  --scenario FILE [...same flags]
    pricebands validate  --scenario FILE
    pricebands anchor    --year YYYY [--dataset FILE] [--json]
    pricebands calibrate --deals FILE [--scenario FILE] [--weight W] [--write-scenario OUT]

Exit codes: 0 ok, 2 validation error, 3 sampling conflict, 4 I/O error.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path
from typing import Sequence

import numpy as np
import yaml

from . import __version__
from .anchor import anchor_for_year, load_dataset
from .calibration import default_blend_weight, fit_ols, load_observed_deals, refresh_prior
from .deal_mix import ALL_DEALS, ConfigurationClass, DealPipeline, class_hit_rate
from .deal_model import map_attributes
from .engine import estimate_quantiles, semi_analytic_median, simulate
from .errors import ConfigurationError, PricingError
from .priors import acceptance_probe
from .report import (
    bands_block,
    format_text,
    inputs_block,
    new_report,
    telemetry_block,
    timing_block,
    to_json,
    write_samples_csv,
)
from .scenario import Scenario, dump_scenario, load_scenario

EXIT_OK, EXIT_VALIDATION, EXIT_CONFLICT, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger(__name__)


def _semi_analytic(sc: Scenario, x, report: dict) -> None:
    try:
        report["checks"] = {"semi_analytic_median_usd_per_mb": semi_analytic_median(sc.prior, x, sc.constraints)}
    except ConfigurationError as exc:
        report["checks"] = {"semi_analytic_median_usd_per_mb": None, "semi_analytic_median_note": str(exc)}


def run_price(sc: Scenario, *, workers: int = 1, timestamp: bool = True, samples_out: str | Path | None = None,
              on_nonfinite: str = "abort") -> dict:
    x = map_attributes(sc.deal, sc.node_table, sc.formulas)
    start = time.perf_counter()
    samples = simulate(sc.plan, sc.prior, sc.constraints, x, max_attempts=sc.max_attempts,
                       workers=workers, on_nonfinite=on_nonfinite)
    bands = estimate_quantiles(samples, sc.plan.quantiles)
    elapsed = time.perf_counter() - start
    report = new_report("price", sc)
    report["inputs"] = inputs_block(sc, x)
    report["bands"] = bands_block(bands, sc.deal.volume_mb)
    _semi_analytic(sc, x, report)
    report["telemetry"] = telemetry_block(samples)
    if timestamp:
        report["timing"] = timing_block(elapsed, sc.plan.T)
    if samples_out is not None:
        write_samples_csv(samples_out, samples)
    return report


def _fixed_volume(sc: Scenario) -> float | None:
    vols = set()
    for comp in sc.pipeline.mix.components:
        s = comp.samplers["volume_mb"]
        if not hasattr(s, "value"):
            return None
        vols.add(s.value)
    return vols.pop() if len(vols) == 1 else None


def run_pipeline(sc: Scenario, *, workers: int = 1, timestamp: bool = True,
                 samples_out: str | Path | None = None, on_nonfinite: str = "abort") -> dict:
    if sc.pipeline is None:
        raise ConfigurationError("section is missing; the pipeline command needs it", "pipeline")
    volume = _fixed_volume(sc)
    start = time.perf_counter()

    def run(cls: ConfigurationClass):
        source = DealPipeline(sc.pipeline.mix, sc.node_table, sc.formulas, cls, sc.max_attempts)
        s = simulate(sc.plan, sc.prior, sc.constraints, source, max_attempts=sc.max_attempts,
                     workers=workers, on_nonfinite=on_nonfinite)
        return s, estimate_quantiles(s, sc.plan.quantiles)

    samples, bands = run(ALL_DEALS)
    report = new_report("pipeline", sc)
    report["inputs"] = inputs_block(sc, None)
    report["inputs"]["pipeline"] = {
        "components": len(sc.pipeline.mix.components),
        "weights": list(sc.pipeline.mix.weights),
        "classes": [cl.label for cl in sc.pipeline.classes],
    }
    report["bands"] = bands_block(bands, volume)
    report["class_bands"] = {}
    for cls in sc.pipeline.classes:
        _, cb = run(cls)
        report["class_bands"][cls.label] = bands_block(cb, volume)
    report["telemetry"] = telemetry_block(samples)
    if timestamp:
        report["timing"] = timing_block(time.perf_counter() - start, sc.plan.T)
    if samples_out is not None:
        write_samples_csv(samples_out, samples)
    return report


def run_validate(sc: Scenario, probe_draws: int = 1000) -> dict:
    """Dry run: multipliers, acceptance probe and the semi-analytic median."""
    x = map_attributes(sc.deal, sc.node_table, sc.formulas)
    report = new_report("validate", sc)
    report["inputs"] = inputs_block(sc, x)
    probe = acceptance_probe(sc.prior, sc.constraints, np.random.default_rng(sc.plan.seed), probe_draws)
    warnings = []
    report["acceptance_probe"] = {"draws": probe.draws, "accepted": probe.accepted, "rate": probe.rate,
                                  "most_violated": probe.most_violated}
    if probe.accepted == 0:
        warnings.append(f"prior-constraint conflict: 0 of {probe.draws} prior draws are admissible "
                        f"(most violated: {probe.most_violated})")
    elif probe.rate < 0.01:
        warnings.append(f"low acceptance rate {probe.rate:.4g}; sampling will be slow "
                        f"(most violated: {probe.most_violated})")
    _semi_analytic(sc, x, report)
    if sc.pipeline is not None:
        DealPipeline(sc.pipeline.mix, sc.node_table, sc.formulas)
        rng = np.random.default_rng(sc.plan.seed)
        rates = {cl.label: class_hit_rate(sc.pipeline.mix, cl, rng, probe_draws) for cl in sc.pipeline.classes}
        report["class_hit_rates"] = rates
        warnings.extend(f"configuration class {k!r} matched no probe draw" for k, v in rates.items() if v == 0)
    report["warnings"] = warnings
    return report


def _validate_text(report: dict) -> str:
    text = format_text(report)
    p = report["acceptance_probe"]
    text += f"acceptance probe: {p['accepted']}/{p['draws']} admissible (rate {p['rate']:.4f})\n"
    for k, v in report.get("class_hit_rates", {}).items():
        text += f"class {k!r} hit rate: {v:.4f}\n"
    return text


def _cmd_anchor(args) -> int:
    ds = load_dataset(args.dataset) if args.dataset else None
    b0, projection = anchor_for_year(args.year, ds)
    ds = ds or load_dataset()
    row = ds.rows[args.year]
    out = {"year": args.year, "b0_usd_per_mb": b0, "is_projection": projection,
           "economy_value_usd": row.economy_value_usd, "data_volume_zb": row.data_volume_zb,
           "dataset": ds.source, "dataset_version": ds.version}
    if args.json:
        sys.stdout.write(to_json(out))
    else:
        print(f"b0({args.year}) = {b0:.4e} USD/MB" + (" [projection]" if projection else ""))
        print(f"  = {row.economy_value_usd:.6g} USD / ({row.data_volume_zb:g} ZB x 1e15 MB/ZB)")
        print(f"  source: {ds.source} (version {ds.version})")
    return EXIT_OK


def _cmd_calibrate(args) -> int:
    deals = load_observed_deals(args.deals)
    fit = fit_ols(deals)
    out = {"fit": fit.as_dict()}
    sc = load_scenario(args.scenario) if args.scenario else None
    if sc is not None:
        w = default_blend_weight(fit.n) if args.weight is None else args.weight
        new_prior = refresh_prior(sc.prior, fit, w)
        out["blend_weight"] = w
        out["refreshed_prior"] = {"b0": new_prior.b0, "s_alpha": new_prior.s_alpha,
                                  "mu": list(new_prior.mu), "s": list(new_prior.s), "s_sigma": new_prior.s_sigma}
        if args.write_scenario:
            refreshed = replace(sc, prior=new_prior, anchor_year=None, anchor_dataset=None,
                                anchor_is_projection=None)
            Path(args.write_scenario).write_text(dump_scenario(refreshed))
            out["written"] = str(args.write_scenario)
    elif args.write_scenario:
        raise ConfigurationError("--write-scenario needs --scenario to supply the old prior", "calibrate")
    if args.json:
        sys.stdout.write(to_json(out))
    else:
        f = out["fit"]
        print(f"OLS fit on {f['n']} deals ({f['dof']} residual dof, condition number {f['condition_number']:.3g})")
        print(f"  alpha = {f['alpha_hat']:.5f} (s.e. {f['se_alpha']:.5f}), b0 = {f['b0_hat']:.4e} USD/MB")
        for lv, b in f["beta_hat"].items():
            print(f"  beta_{lv:<6} = {b:.5f} (s.e. {f['se_beta'][lv]:.5f})")
        print(f"  sigma = {f['sigma_hat']:.5f}")
        if "refreshed_prior" in out:
            print(f"refreshed prior (w = {out['blend_weight']:.4f}): {out['refreshed_prior']}")
        if "written" in out:
            print(f"wrote {out['written']}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pricebands", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"pricebands {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log run telemetry to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def scenario_cmd(name: str, help: str):
        p = sub.add_parser(name, help=help)
        p.add_argument("--scenario", required=True, type=Path)
        p.add_argument("--seed", type=int, default=None, help="override plan.seed")
        p.add_argument("--json", action="store_true", help="print the machine-readable report")
        return p

    for name, help in (("price", "price the scenario's single deal"),
                       ("pipeline", "price the scenario's deal mix")):
        p = scenario_cmd(name, help)
        p.add_argument("--samples-out", type=Path, default=None, help="write raw samples as CSV")
        p.add_argument("--no-timestamp", action="store_true", help="omit wall-clock fields from the report")
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--drop-nonfinite", action="store_true",
                       help="drop worlds with non-finite prices instead of aborting")
    scenario_cmd("validate", "check a scenario without simulating")

    p = sub.add_parser("anchor", help="print the baseline anchor b0 for a year")
    p.add_argument("--year", type=int, required=True)
    p.add_argument("--dataset", type=Path, default=None)
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("calibrate", help="fit elasticities from observed deals")
    p.add_argument("--deals", type=Path, required=True)
    p.add_argument("--scenario", type=Path, default=None)
    p.add_argument("--weight", type=float, default=None, help="blend weight in [0, 1]; default n/(n+20)")
    p.add_argument("--write-scenario", type=Path, default=None)
    p.add_argument("--json", action="store_true")
    return parser


def _dispatch(args) -> int:
    if args.command == "anchor":
        return _cmd_anchor(args)
    if args.command == "calibrate":
        return _cmd_calibrate(args)

    sc = load_scenario(args.scenario)
    if args.seed is not None:
        sc = sc.with_seed(args.seed)
    if args.command == "validate":
        report = run_validate(sc)
        sys.stdout.write(to_json(report) if args.json else _validate_text(report))
        return EXIT_OK

    runner = run_price if args.command == "price" else run_pipeline
    report = runner(sc, workers=args.workers, timestamp=not args.no_timestamp, samples_out=args.samples_out,
                    on_nonfinite="drop" if args.drop_nonfinite else "abort")
    sys.stdout.write(to_json(report) if args.json else format_text(report))
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _dispatch(args)
    except ConfigurationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except PricingError as exc:
        print(f"sampling error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, yaml.YAMLError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
