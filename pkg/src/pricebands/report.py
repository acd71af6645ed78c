"""Run reports: structured dict, JSON and human-readable text, raw-sample CSV."""

from __future__ import annotations

import csv
import datetime as _dt
import json
import math
from pathlib import Path
from typing import Any

from . import __version__
from .deal_model import LEVERS, MB_PER_GB, MultiplierVector
from .engine import PriceBands, PriceSampleSet
from .priors import COMPONENTS
from .scenario import Scenario

SIG_FIGS_PER_MB = 5


def round_sig(x: float, digits: int = SIG_FIGS_PER_MB) -> float:
    if x == 0 or not math.isfinite(x):
        return x
    return float(f"{x:.{digits - 1}e}")


def quantile_label(q: float) -> str:
    return f"P{q * 100:g}"


def _finite(x: float) -> float | None:
    return x if math.isfinite(x) else None


def bands_block(bands: PriceBands, volume_mb: float | None) -> dict[str, Any]:
    """Per-MB bands at reported precision; per-GB and totals derive from those."""
    per_mb = {quantile_label(q): round_sig(v) for q, v in bands.quantiles.items()}
    block: dict[str, Any] = {
        "usd_per_mb": per_mb,
        "usd_per_gb": {k: v * MB_PER_GB for k, v in per_mb.items()},
        "usd_per_mb_unrounded": {quantile_label(q): v for q, v in bands.quantiles.items()},
        "mean_usd_per_mb": bands.mean,
        "mean_standard_error": _finite(bands.mean_se),
        "sample_count": bands.count,
    }
    if volume_mb is not None:
        block["volume_mb"] = volume_mb
        block["contract_total_usd"] = {k: v * volume_mb for k, v in per_mb.items()}
    return block


def inputs_block(sc: Scenario, x: MultiplierVector | None) -> dict[str, Any]:
    d = sc.deal
    out: dict[str, Any] = {
        "anchor": {
            "b0_usd_per_mb": sc.prior.b0,
            "source": "explicit" if sc.anchor_year is None else f"table year {sc.anchor_year}",
            "is_projection": sc.anchor_is_projection,
        },
        "deal": {
            "technology_node": d.technology_node,
            "process_count": d.process_count,
            "quality_score": d.quality_score,
            "completeness_score": d.completeness_score,
            "age_months": d.age_months,
            "utility_value_usd": d.utility_value_usd,
            "rights_factors": [{"label": label, "factor": f} for label, f in d.rights_factors],
            "volume_mb": d.volume_mb,
            "node_table": dict(sc.node_table.multipliers),
            "formulas": {
                "coverage_scale": sc.formulas.coverage_scale,
                "qf_weights": list(sc.formulas.qf_weights),
                "horizon_months": sc.formulas.horizon_months,
                "utility_scale": sc.formulas.utility_scale,
                "utility_denom": sc.formulas.utility_denom,
                "utility_log_base": sc.formulas.utility_log_base,
            },
        },
        "prior": {
            "ln_b0": sc.prior.log_b0,
            "s_alpha": sc.prior.s_alpha,
            "mu": dict(zip(LEVERS, sc.prior.mu)),
            "s": dict(zip(LEVERS, sc.prior.s)),
            "s_sigma": sc.prior.s_sigma,
        },
        "constraints": {
            "beta_bounds": {lv: [_inf(b) for b in bb] for lv, bb in zip(LEVERS, sc.constraints.beta_bounds)},
            "sigma_bounds": [_inf(b) for b in sc.constraints.sigma_bounds],
            "predicates": [f"{p.label}: {p.left} {p.op} {p.right}" for p in sc.constraints.predicates],
        },
        "plan": {"T": sc.plan.T, "N": sc.plan.N, "seed": sc.plan.seed,
                 "quantiles": list(sc.plan.quantiles), "max_attempts": sc.max_attempts},
    }
    if x is not None:
        out["multipliers"] = x.as_dict()
        out["log_multipliers"] = dict(zip(LEVERS, x.logs))
    return out


def _inf(v: float):
    return v if math.isfinite(v) else ("inf" if v > 0 else "-inf")


def telemetry_block(s: PriceSampleSet) -> dict[str, Any]:
    return {
        "worlds": s.plan.T,
        "draws_per_world": s.plan.N,
        "theta_attempts": int(s.attempts.sum()),
        "acceptance_rate": s.acceptance_rate,
        "dropped_worlds": list(s.dropped_worlds),
    }


def timing_block(elapsed_s: float, worlds: int) -> dict[str, Any]:
    return {
        "generated_at": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "runtime_s": elapsed_s,
        "worlds_per_s": worlds / elapsed_s if elapsed_s > 0 else None,
    }


def new_report(kind: str, sc: Scenario) -> dict[str, Any]:
    return {
        "artifact": {"name": "pricebands", "version": __version__},
        "command": kind,
        "scenario": {"name": sc.name, "currency": sc.currency, "year": sc.year},
        "seed": sc.plan.seed,
    }


def to_json(report: dict) -> str:
    return json.dumps(report, indent=2, allow_nan=False) + "\n"


def _fmt_mb(v: float) -> str:
    return f"{v:.{SIG_FIGS_PER_MB - 1}e}"


def _bands_text(block: dict, lines: list[str], indent: str = "  ") -> None:
    for k, v in block["usd_per_mb"].items():
        lines.append(f"{indent}{k:>4}: {_fmt_mb(v)} USD/MB   ${block['usd_per_gb'][k]:.3f} / GB")
    if "contract_total_usd" in block:
        for k, v in block["contract_total_usd"].items():
            lines.append(f"{indent}{k:>4} total: ${v / 1e6:.3f}M")
    se = block["mean_standard_error"]
    lines.append(f"{indent}mean: {_fmt_mb(block['mean_usd_per_mb'])} USD/MB"
                 + (f" (MC s.e. {se:.2e})" if se is not None else "")
                 + f", n = {block['sample_count']}")


def format_text(report: dict) -> str:
    lines = [f"pricebands {report['artifact']['version']} | {report['command']} | "
             f"scenario {report['scenario']['name']!r} | seed {report['seed']}"]
    inputs = report.get("inputs", {})
    if "multipliers" in inputs:
        xs = ", ".join(f"{k}={v:.6g}" for k, v in inputs["multipliers"].items())
        lxs = ", ".join(f"{k}={v:.4f}" for k, v in inputs["log_multipliers"].items())
        lines.append(f"multipliers: {xs}")
        lines.append(f"ln multipliers: {lxs}")
    if "anchor" in inputs:
        a = inputs["anchor"]
        lines.append(f"b0: {a['b0_usd_per_mb']:.6g} USD/MB ({a['source']}"
                     + (", projection" if a["is_projection"] else "") + ")")
    if "bands" in report:
        lines.append("price bands:")
        _bands_text(report["bands"], lines)
    for label, block in report.get("class_bands", {}).items():
        lines.append(f"class {label!r}:")
        _bands_text(block, lines)
    checks = report.get("checks", {})
    if checks.get("semi_analytic_median_usd_per_mb") is not None:
        lines.append(f"semi-analytic median: {_fmt_mb(checks['semi_analytic_median_usd_per_mb'])} USD/MB")
    elif "semi_analytic_median_note" in checks:
        lines.append(f"semi-analytic median: n/a ({checks['semi_analytic_median_note']})")
    tel = report.get("telemetry")
    if tel:
        lines.append(f"acceptance rate: {tel['acceptance_rate']:.4f} over {tel['theta_attempts']} attempts"
                     + (f"; dropped worlds {tel['dropped_worlds']}" if tel["dropped_worlds"] else ""))
    tim = report.get("timing")
    if tim:
        lines.append(f"runtime: {tim['runtime_s']:.3f}s at {tim['generated_at']}")
    for w in report.get("warnings", []):
        lines.append(f"WARNING: {w}")
    return "\n".join(lines) + "\n"


def write_samples_csv(path: str | Path, s: PriceSampleSet) -> None:
    """One row per draw: world t, draw i, price, then the world's theta."""
    worlds = [t for t in range(s.plan.T) if t not in set(s.dropped_worlds)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "i", "price_usd_per_mb", *COMPONENTS])
        for row, t in enumerate(worlds):
            theta = [repr(float(v)) for v in s.thetas[row]]
            for i, p in enumerate(s.samples[row]):
                w.writerow([t, i, repr(float(p)), *theta])
