"""Scenario files: one YAML document describing a pricing run.

Top-level sections::

    metadata     name, currency (USD only), year
    anchor       either {b0: <USD/MB>} or {year: <YYYY>} (optionally dataset: <path>)
    deal         DealAttributes, node_table, formulas
    prior        s_alpha, mu, s, s_sigma  (b0 comes from the anchor section)
    constraints  beta_bounds, sigma_bounds, predicates
    plan         T, N, seed, quantiles, max_attempts
    pipeline     optional: components (deal mix) and classes

See ``scenarios/case_study.yaml`` for a complete, commented example.
Every section is validated before any sampling starts; errors name the
section and field.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

import yaml

from .anchor import anchor_for_year, load_dataset
from .deal_mix import (
    DEAL_FIELDS,
    ConfigurationClass,
    DealComponent,
    DealMix,
    Fixed,
    parse_clauses,
    parse_sampler,
    sampler_to_dict,
)
from .deal_model import (
    LEVERS,
    NODE_TABLE_PRESETS,
    DealAttributes,
    FormulaParams,
    NodeTable,
    volume_to_mb,
)
from .engine import DEFAULT_QUANTILES, SimulationPlan
from .errors import ConfigurationError
from .priors import DEFAULT_MAX_ATTEMPTS, ConstraintSet, Predicate, PriorSpec

SECTIONS = ("metadata", "anchor", "deal", "prior", "constraints", "plan", "pipeline")


@dataclass(frozen=True)
class PipelineSpec:
    mix: DealMix
    classes: tuple[ConfigurationClass, ...] = ()


@dataclass(frozen=True)
class Scenario:
    name: str
    deal: DealAttributes
    node_table: NodeTable
    prior: PriorSpec
    constraints: ConstraintSet
    plan: SimulationPlan
    formulas: FormulaParams = field(default_factory=FormulaParams)
    currency: str = "USD"
    year: int | None = None
    anchor_year: int | None = None
    anchor_dataset: str | None = None
    anchor_is_projection: bool | None = None
    max_attempts: int = DEFAULT_MAX_ATTEMPTS
    check_node_monotone: bool = True
    pipeline: PipelineSpec | None = None

    def with_seed(self, seed: int) -> "Scenario":
        return replace(self, plan=replace(self.plan, seed=seed))


def _section(doc: Mapping, name: str, required: bool = True) -> dict:
    sec = doc.get(name)
    if sec is None:
        if required:
            raise ConfigurationError("section is missing", name)
        return {}
    if not isinstance(sec, Mapping):
        raise ConfigurationError("must be a mapping", name)
    return dict(sec)


def _reject_unknown(sec: Mapping, allowed, name: str) -> None:
    unknown = set(sec) - set(allowed)
    if unknown:
        raise ConfigurationError(f"unknown keys {sorted(unknown)}", name)


def _get(sec: Mapping, key: str, section: str, convert=float, default: Any = ...):
    if key not in sec:
        if default is ...:
            raise ConfigurationError("is required", section, key)
        return default
    try:
        return convert(sec[key])
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigurationError):
            raise
        raise ConfigurationError(f"invalid value {sec[key]!r}: {exc}", section, key) from None


def _levers(value, section: str, key: str) -> tuple[float, ...]:
    if isinstance(value, Mapping):
        unknown = set(value) - set(LEVERS)
        if unknown:
            raise ConfigurationError(f"unknown levers {sorted(unknown)}", section, key)
        missing = [lv for lv in LEVERS if lv not in value]
        if missing:
            raise ConfigurationError(f"missing levers {missing}", section, key)
        value = [value[lv] for lv in LEVERS]
    if not isinstance(value, (list, tuple)) or len(value) != len(LEVERS):
        raise ConfigurationError(f"needs {len(LEVERS)} values ({', '.join(LEVERS)})", section, key)
    return tuple(float(v) for v in value)


def _parse_rights(value) -> tuple[tuple[str, float], ...]:
    if value is None:
        return ()
    if isinstance(value, Mapping):
        return tuple((str(k), float(v)) for k, v in value.items())
    out = []
    for item in value:
        if not isinstance(item, Mapping) or set(item) != {"label", "factor"}:
            raise ConfigurationError("each rights entry needs 'label' and 'factor'", "deal", "rights_factors")
        out.append((str(item["label"]), float(item["factor"])))
    return tuple(out)


def _parse_deal(sec: dict) -> tuple[DealAttributes, NodeTable, FormulaParams, bool]:
    attr_keys = set(DEAL_FIELDS) - {"volume_mb"}
    _reject_unknown(sec, attr_keys | {"volume_mb", "volume", "node_table", "formulas", "check_node_monotone"},
                    "deal")
    if "volume_mb" in sec and "volume" in sec:
        raise ConfigurationError("give either volume_mb or volume, not both", "deal", "volume")
    if "volume" in sec:
        vol = sec["volume"]
        if not isinstance(vol, Mapping) or set(vol) != {"value", "unit"}:
            raise ConfigurationError("volume needs 'value' and 'unit'", "deal", "volume")
        volume_mb = volume_to_mb(float(vol["value"]), str(vol["unit"]))
    else:
        volume_mb = _get(sec, "volume_mb", "deal")

    table_spec = sec.get("node_table", "semiconductor-2026")
    if isinstance(table_spec, str):
        if table_spec not in NODE_TABLE_PRESETS:
            raise ConfigurationError(f"unknown preset {table_spec!r}; presets: {sorted(NODE_TABLE_PRESETS)}",
                                     "deal", "node_table")
        table = NODE_TABLE_PRESETS[table_spec]
    elif isinstance(table_spec, Mapping):
        table = NodeTable(dict(table_spec))
    else:
        raise ConfigurationError("must be a preset name or a mapping", "deal", "node_table")
    check_monotone = bool(sec.get("check_node_monotone", True))

    f = sec.get("formulas") or {}
    defaults = FormulaParams()
    _reject_unknown(f, FormulaParams.__dataclass_fields__, "deal.formulas")
    params = FormulaParams(
        coverage_scale=_get(f, "coverage_scale", "deal.formulas", default=defaults.coverage_scale),
        qf_weights=tuple(_get(f, "qf_weights", "deal.formulas", convert=lambda v: [float(x) for x in v],
                              default=defaults.qf_weights)),
        horizon_months=_get(f, "horizon_months", "deal.formulas", default=defaults.horizon_months),
        utility_scale=_get(f, "utility_scale", "deal.formulas", default=defaults.utility_scale),
        utility_denom=_get(f, "utility_denom", "deal.formulas", default=defaults.utility_denom),
        utility_log_base=_get(f, "utility_log_base", "deal.formulas", default=defaults.utility_log_base),
    )

    attrs = DealAttributes(
        technology_node=_get(sec, "technology_node", "deal", convert=str),
        process_count=_get(sec, "process_count", "deal", convert=lambda v: v),
        quality_score=_get(sec, "quality_score", "deal"),
        completeness_score=_get(sec, "completeness_score", "deal"),
        age_months=_get(sec, "age_months", "deal"),
        utility_value_usd=_get(sec, "utility_value_usd", "deal"),
        rights_factors=_parse_rights(sec.get("rights_factors")),
        volume_mb=volume_mb,
    )
    if attrs.technology_node not in table:
        raise ConfigurationError(f"{attrs.technology_node!r} is not in node table {sorted(table.multipliers)}",
                                 "deal", "technology_node")
    if check_monotone:
        table.check_monotone()
    return attrs, table, params, check_monotone


def _parse_constraints(sec: dict) -> ConstraintSet:
    _reject_unknown(sec, {"beta_bounds", "sigma_bounds", "predicates"}, "constraints")
    bb = sec.get("beta_bounds", [-math.inf, math.inf])
    if isinstance(bb, Mapping):
        unknown = set(bb) - set(LEVERS)
        if unknown:
            raise ConfigurationError(f"unknown levers {sorted(unknown)}", "constraints", "beta_bounds")
        bounds = [tuple(bb.get(lv, (-math.inf, math.inf))) for lv in LEVERS]
    elif isinstance(bb, (list, tuple)) and len(bb) == 2 and not isinstance(bb[0], (list, tuple)):
        bounds = [tuple(bb)] * len(LEVERS)
    else:
        bounds = [tuple(b) for b in bb]
    preds = []
    for k, p in enumerate(sec.get("predicates") or []):
        if not isinstance(p, Mapping) or not {"left", "op", "right"} <= set(p):
            raise ConfigurationError("each predicate needs left, op, right (and a label)",
                                     "constraints", "predicates")
        right = p["right"]
        preds.append(Predicate(str(p.get("label", f"predicate-{k + 1}")), str(p["left"]), str(p["op"]),
                               right if isinstance(right, str) else float(right)))
    return ConstraintSet(tuple(bounds), tuple(sec.get("sigma_bounds", (0.0, math.inf))), tuple(preds))


def _parse_pipeline(sec: dict, deal: DealAttributes) -> PipelineSpec:
    _reject_unknown(sec, {"components", "classes"}, "pipeline")
    comps = []
    for k, c in enumerate(sec.get("components") or []):
        if not isinstance(c, Mapping):
            raise ConfigurationError(f"component {k + 1} must be a mapping", "pipeline", "components")
        fields = dict(c.get("fields") or {})
        samplers = {f: Fixed(getattr(deal, f)) for f in DEAL_FIELDS}
        if "volume" in fields:
            vol = fields.pop("volume")
            fields["volume_mb"] = volume_to_mb(float(vol["value"]), str(vol["unit"]))
        for name, spec in fields.items():
            if name not in DEAL_FIELDS:
                raise ConfigurationError(f"unknown deal field {name!r}", "pipeline", "components")
            samplers[name] = parse_sampler(spec, name)
        comps.append(DealComponent(_get(c, "weight", "pipeline.components", default=1.0), samplers))
    if not comps:
        raise ConfigurationError("needs at least one component", "pipeline", "components")
    classes = []
    for k, cl in enumerate(sec.get("classes") or []):
        classes.append(ConfigurationClass(str(cl.get("label", f"class-{k + 1}")),
                                          parse_clauses(cl.get("where") or [])))
    return PipelineSpec(DealMix(tuple(comps)), tuple(classes))


def parse_scenario(doc: Mapping, *, base_dir: Path | None = None) -> Scenario:
    if not isinstance(doc, Mapping):
        raise ConfigurationError("scenario must be a mapping of sections")
    _reject_unknown(doc, SECTIONS, "scenario")

    meta = _section(doc, "metadata", required=False)
    _reject_unknown(meta, {"name", "currency", "year"}, "metadata")
    currency = str(meta.get("currency", "USD"))
    if currency != "USD":
        raise ConfigurationError(f"only USD is supported, got {currency!r}", "metadata", "currency")

    anchor = _section(doc, "anchor")
    _reject_unknown(anchor, {"b0", "year", "dataset"}, "anchor")
    if ("b0" in anchor) == ("year" in anchor):
        raise ConfigurationError("give exactly one of b0 or year", "anchor")
    dataset = anchor.get("dataset")
    if "b0" in anchor:
        b0 = _get(anchor, "b0", "anchor")
        anchor_year, projection = None, None
    else:
        anchor_year = _get(anchor, "year", "anchor", convert=int)
        path = None
        if dataset is not None:
            path = Path(dataset)
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
        b0, projection = anchor_for_year(anchor_year, load_dataset(path) if path else None)

    deal, table, formulas, check_monotone = _parse_deal(_section(doc, "deal"))

    pr = _section(doc, "prior")
    _reject_unknown(pr, {"s_alpha", "mu", "s", "s_sigma"}, "prior")
    prior = PriorSpec(
        b0=b0,
        s_alpha=_get(pr, "s_alpha", "prior"),
        mu=_levers(_get(pr, "mu", "prior", convert=lambda v: v), "prior", "mu"),
        s=_levers(_get(pr, "s", "prior", convert=lambda v: v), "prior", "s"),
        s_sigma=_get(pr, "s_sigma", "prior"),
    )

    constraints = _parse_constraints(_section(doc, "constraints", required=False))

    pl = _section(doc, "plan")
    _reject_unknown(pl, {"T", "N", "seed", "quantiles", "max_attempts"}, "plan")
    plan = SimulationPlan(
        T=_get(pl, "T", "plan", convert=lambda v: v),
        N=_get(pl, "N", "plan", convert=lambda v: v),
        seed=_get(pl, "seed", "plan", convert=lambda v: v, default=0),
        quantiles=tuple(_get(pl, "quantiles", "plan", convert=lambda v: [float(q) for q in v],
                             default=DEFAULT_QUANTILES)),
    )
    max_attempts = _get(pl, "max_attempts", "plan", convert=int, default=DEFAULT_MAX_ATTEMPTS)
    if max_attempts < 1:
        raise ConfigurationError("must be >= 1", "plan", "max_attempts")

    pipeline = None
    if doc.get("pipeline") is not None:
        pipeline = _parse_pipeline(_section(doc, "pipeline"), deal)

    return Scenario(
        name=str(meta.get("name", "unnamed")),
        deal=deal,
        node_table=table,
        prior=prior,
        constraints=constraints,
        plan=plan,
        formulas=formulas,
        currency=currency,
        year=None if meta.get("year") is None else int(meta["year"]),
        anchor_year=anchor_year,
        anchor_dataset=None if dataset is None else str(dataset),
        anchor_is_projection=projection,
        max_attempts=max_attempts,
        check_node_monotone=check_monotone,
        pipeline=pipeline,
    )


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    text = path.read_text()
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"{path}: not valid YAML: {exc}") from None
    return parse_scenario(doc, base_dir=path.parent)


def _rights_list(rights) -> list[dict]:
    return [{"label": label, "factor": factor} for label, factor in rights]


def scenario_to_dict(sc: Scenario) -> dict:
    """Inverse of :func:`parse_scenario`."""
    preset = next((k for k, v in NODE_TABLE_PRESETS.items() if v == sc.node_table), None)
    f = sc.formulas
    doc: dict[str, Any] = {
        "metadata": {"name": sc.name, "currency": sc.currency,
                     **({"year": sc.year} if sc.year is not None else {})},
        "anchor": ({"b0": sc.prior.b0} if sc.anchor_year is None else
                   {"year": sc.anchor_year, **({"dataset": sc.anchor_dataset} if sc.anchor_dataset else {})}),
        "deal": {
            "technology_node": sc.deal.technology_node,
            "process_count": sc.deal.process_count,
            "quality_score": sc.deal.quality_score,
            "completeness_score": sc.deal.completeness_score,
            "age_months": sc.deal.age_months,
            "utility_value_usd": sc.deal.utility_value_usd,
            "rights_factors": _rights_list(sc.deal.rights_factors),
            "volume_mb": sc.deal.volume_mb,
            "node_table": preset if preset else dict(sc.node_table.multipliers),
            "check_node_monotone": sc.check_node_monotone,
            "formulas": {
                "coverage_scale": f.coverage_scale,
                "qf_weights": list(f.qf_weights),
                "horizon_months": f.horizon_months,
                "utility_scale": f.utility_scale,
                "utility_denom": f.utility_denom,
                "utility_log_base": f.utility_log_base,
            },
        },
        "prior": {
            "s_alpha": sc.prior.s_alpha,
            "mu": dict(zip(LEVERS, sc.prior.mu)),
            "s": dict(zip(LEVERS, sc.prior.s)),
            "s_sigma": sc.prior.s_sigma,
        },
        "constraints": {
            "beta_bounds": {lv: list(b) for lv, b in zip(LEVERS, sc.constraints.beta_bounds)},
            "sigma_bounds": list(sc.constraints.sigma_bounds),
            "predicates": [{"label": p.label, "left": p.left, "op": p.op, "right": p.right}
                           for p in sc.constraints.predicates],
        },
        "plan": {"T": sc.plan.T, "N": sc.plan.N, "seed": sc.plan.seed,
                 "quantiles": list(sc.plan.quantiles), "max_attempts": sc.max_attempts},
    }
    if sc.pipeline is not None:
        doc["pipeline"] = {
            "components": [
                {"weight": c.weight, "fields": {name: sampler_to_dict(s) for name, s in c.samplers.items()}}
                for c in sc.pipeline.mix.components],
            "classes": [
                {"label": cl.label, "where": [{"field": c.field, "op": c.op, "value": _plain(c.value)}
                                              for c in cl.clauses]}
                for cl in sc.pipeline.classes],
        }
    return doc


def _plain(v):
    if isinstance(v, tuple) and v and isinstance(v[0], tuple):
        return _rights_list(v)
    if isinstance(v, tuple):
        return [_plain(i) for i in v]
    return v


def dump_scenario(sc: Scenario) -> str:
    return yaml.safe_dump(scenario_to_dict(sc), sort_keys=False)
