"""Deal-mix distributions over attributes and conditioning on configuration classes.

A :class:`DealMix` is a finite mixture. Each component has a weight and one
sampler per attribute field; fields inside a component are independent.
Conditioning on a :class:`ConfigurationClass` is done by rejection, so the
conditional law is exact.
"""

from __future__ import annotations

import bisect
import itertools
import math
import operator
from dataclasses import dataclass, field, fields
from typing import Any, Mapping, Sequence

import numpy as np

from .deal_model import DealAttributes, FormulaParams, NodeTable, map_attributes
from .errors import ConfigurationError, SamplingConflictError

DEAL_FIELDS: tuple[str, ...] = tuple(f.name for f in fields(DealAttributes))
_CATEGORICAL = {"technology_node", "rights_factors"}
_INTEGER = {"process_count"}
_OPTIONAL = {"rights_factors": ()}


class EmptyClassError(SamplingConflictError):
    pass


@dataclass(frozen=True)
class Fixed:
    value: Any

    def sample(self, rng: np.random.Generator) -> Any:
        return self.value

    def support(self) -> list[tuple[Any, float]]:
        return [(self.value, 1.0)]

    def extremes(self) -> tuple[Any, Any]:
        return self.value, self.value


@dataclass(frozen=True)
class Choice:
    """Uniform over a finite set of values."""

    options: tuple

    def __post_init__(self):
        object.__setattr__(self, "options", tuple(self.options))
        if not self.options:
            raise ConfigurationError("choice needs at least one option", "pipeline")

    def sample(self, rng: np.random.Generator) -> Any:
        return self.options[int(rng.integers(len(self.options)))]

    def support(self) -> list[tuple[Any, float]]:
        p = 1.0 / len(self.options)
        return [(o, p) for o in self.options]

    def extremes(self) -> tuple[Any, Any]:
        return min(self.options), max(self.options)


@dataclass(frozen=True)
class Uniform:
    low: float
    high: float
    integer: bool = False

    def __post_init__(self):
        if not self.low <= self.high:
            raise ConfigurationError(f"uniform needs low <= high, got ({self.low}, {self.high})", "pipeline")

    def sample(self, rng: np.random.Generator) -> Any:
        if self.integer:
            return int(rng.integers(int(self.low), int(self.high) + 1))
        return float(rng.uniform(self.low, self.high))

    def support(self) -> list[tuple[Any, float]]:
        if not self.integer:
            raise ValueError("continuous sampler has no finite support")
        values = range(int(self.low), int(self.high) + 1)
        return [(v, 1.0 / len(values)) for v in values]

    def extremes(self) -> tuple[Any, Any]:
        return self.low, self.high


@dataclass(frozen=True)
class Triangular:
    low: float
    mode: float
    high: float

    def __post_init__(self):
        if not self.low <= self.mode <= self.high or self.low == self.high:
            raise ConfigurationError(
                f"triangular needs low <= mode <= high and low < high, got {(self.low, self.mode, self.high)}",
                "pipeline")

    def sample(self, rng: np.random.Generator) -> float:
        return float(rng.triangular(self.low, self.mode, self.high))

    def support(self):
        raise ValueError("continuous sampler has no finite support")

    def extremes(self) -> tuple[float, float]:
        return self.low, self.high


FieldSampler = Fixed | Choice | Uniform | Triangular


def _rights(value) -> tuple[tuple[str, float], ...]:
    if isinstance(value, Mapping):
        return tuple((str(k), float(v)) for k, v in value.items())
    out = []
    for item in value:
        if isinstance(item, Mapping):
            out.append((str(item["label"]), float(item["factor"])))
        else:
            label, factor = item
            out.append((str(label), float(factor)))
    return tuple(out)


@dataclass(frozen=True)
class DealComponent:
    weight: float
    samplers: Mapping[str, FieldSampler]

    def __post_init__(self):
        if not (self.weight > 0 and math.isfinite(self.weight)):
            raise ConfigurationError(f"component weight must be positive, got {self.weight}", "pipeline")
        samplers = dict(self.samplers)
        unknown = set(samplers) - set(DEAL_FIELDS)
        if unknown:
            raise ConfigurationError(f"unknown deal fields {sorted(unknown)}", "pipeline")
        for name, default in _OPTIONAL.items():
            samplers.setdefault(name, Fixed(default))
        missing = [f for f in DEAL_FIELDS if f not in samplers]
        if missing:
            raise ConfigurationError(f"component is missing samplers for {missing}", "pipeline")
        for name, s in samplers.items():
            if name in _CATEGORICAL and not isinstance(s, (Fixed, Choice)):
                raise ConfigurationError(f"{name} only supports fixed or choice samplers", "pipeline", name)
            if name in _INTEGER and isinstance(s, Triangular):
                raise ConfigurationError(f"{name} is an integer field; triangular is not allowed",
                                         "pipeline", name)
            if name in _INTEGER and isinstance(s, Uniform) and not s.integer:
                samplers[name] = Uniform(s.low, s.high, integer=True)
        if isinstance(samplers["rights_factors"], Fixed):
            samplers["rights_factors"] = Fixed(_rights(samplers["rights_factors"].value))
        else:
            samplers["rights_factors"] = Choice(tuple(_rights(o) for o in samplers["rights_factors"].options))
        object.__setattr__(self, "samplers", {f: samplers[f] for f in DEAL_FIELDS})
        self._check_ranges()

    def _check_ranges(self) -> None:
        # Every field's extreme values must build a valid DealAttributes,
        # which makes every draw valid.
        for corner in (0, 1):
            values = {}
            for name, s in self.samplers.items():
                if name in _CATEGORICAL:
                    opts = [s.value] if isinstance(s, Fixed) else list(s.options)
                    for o in opts:
                        DealAttributes(**{**self._first(), name: o})
                    values[name] = opts[0]
                else:
                    values[name] = s.extremes()[corner]
            DealAttributes(**values)

    def _first(self) -> dict[str, Any]:
        out = {}
        for name, s in self.samplers.items():
            out[name] = s.value if isinstance(s, Fixed) else (
                s.options[0] if isinstance(s, Choice) else s.extremes()[0])
        return out

    def sample(self, rng: np.random.Generator) -> DealAttributes:
        return DealAttributes(**{name: s.sample(rng) for name, s in self.samplers.items()})

    def worst_quality_corner(self) -> DealAttributes:
        """Attributes minimising the quality/freshness multiplier."""
        v = self._first()
        v["quality_score"] = self.samplers["quality_score"].extremes()[0]
        v["completeness_score"] = self.samplers["completeness_score"].extremes()[0]
        v["age_months"] = self.samplers["age_months"].extremes()[1]
        return DealAttributes(**v)


@dataclass(frozen=True)
class DealMix:
    components: tuple[DealComponent, ...]
    weights: tuple[float, ...] = field(init=False)
    cumulative: tuple[float, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise ConfigurationError("deal mix needs at least one component", "pipeline", "components")
        object.__setattr__(self, "components", comps)
        total = math.fsum(c.weight for c in comps)
        object.__setattr__(self, "weights", tuple(c.weight / total for c in comps))
        object.__setattr__(self, "cumulative", tuple(itertools.accumulate(self.weights)))

    @classmethod
    def single(cls, attrs: DealAttributes) -> "DealMix":
        return cls((DealComponent(1.0, {f: Fixed(getattr(attrs, f)) for f in DEAL_FIELDS}),))


def sample_deal(mix: DealMix, rng: np.random.Generator) -> DealAttributes:
    """Pick a component by weight, then sample its fields in declaration order.

    A one-component mix with fixed fields consumes no randomness.
    """
    if len(mix.components) == 1:
        k = 0
    else:
        k = min(bisect.bisect_right(mix.cumulative, rng.random()), len(mix.components) - 1)
    return mix.components[k].sample(rng)


def _contains(container, item) -> bool:
    if isinstance(container, tuple) and container and isinstance(container[0], tuple):
        return item in (label for label, _ in container)
    return item in container


_CLASS_OPS = {
    "==": operator.eq,
    "!=": operator.ne,
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
    "in": lambda a, b: a in b,
    "not in": lambda a, b: a not in b,
    "contains": _contains,
}


@dataclass(frozen=True)
class Clause:
    field: str
    op: str
    value: Any

    def __post_init__(self):
        if self.field not in DEAL_FIELDS:
            raise ConfigurationError(f"unknown deal field {self.field!r}", "pipeline", "classes")
        if self.op not in _CLASS_OPS:
            raise ConfigurationError(f"unknown operator {self.op!r}; use one of {sorted(_CLASS_OPS)}",
                                     "pipeline", "classes")
        value = self.value
        if self.op in ("in", "not in"):
            value = tuple(value)
        if self.field == "rights_factors" and self.op in ("==", "!="):
            value = _rights(value)
        object.__setattr__(self, "value", value)

    def holds(self, attrs: DealAttributes) -> bool:
        return bool(_CLASS_OPS[self.op](getattr(attrs, self.field), self.value))


@dataclass(frozen=True)
class ConfigurationClass:
    """Conjunction of clauses over deal fields. No clauses means every deal."""

    label: str
    clauses: tuple[Clause, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "clauses", tuple(self.clauses))

    def holds(self, attrs: DealAttributes) -> bool:
        return all(c.holds(attrs) for c in self.clauses)


ALL_DEALS = ConfigurationClass("all deals")


def sample_conditional(mix: DealMix, cls: ConfigurationClass, rng: np.random.Generator,
                       max_attempts: int = 10_000) -> DealAttributes:
    for _ in range(max_attempts):
        attrs = sample_deal(mix, rng)
        if cls.holds(attrs):
            return attrs
    raise EmptyClassError(
        f"empty configuration class {cls.label!r}: no matching deal in {max_attempts} draws "
        f"(hit-rate estimate < {1 / max_attempts:.3g})",
        acceptance_estimate=0.0, most_violated=cls.label, attempts=max_attempts)


def class_hit_rate(mix: DealMix, cls: ConfigurationClass, rng: np.random.Generator,
                   n: int = 10_000) -> float:
    return sum(cls.holds(sample_deal(mix, rng)) for _ in range(n)) / n


class DealPipeline:
    """Deal source for the engine: draws ``A ~ P_A(. | A in C)`` and maps it to ln x."""

    def __init__(self, mix: DealMix, table: NodeTable, params: FormulaParams | None = None,
                 condition: ConfigurationClass = ALL_DEALS, max_attempts: int = 10_000):
        self.mix = mix
        self.table = table
        self.params = params or FormulaParams()
        self.condition = condition
        self.max_attempts = max_attempts
        self._logs: dict[DealAttributes, np.ndarray] = {}
        for comp in mix.components:
            map_attributes(comp.worst_quality_corner(), table, self.params)
            for node in comp.samplers["technology_node"].support():
                table[node[0]]

    def log_multipliers(self, attrs: DealAttributes) -> np.ndarray:
        try:
            return self._logs[attrs]
        except KeyError:
            logs = np.array(map_attributes(attrs, self.table, self.params).logs)
            if len(self._logs) < 100_000:
                self._logs[attrs] = logs
            return logs

    def sample_log_multipliers(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return np.stack([
            self.log_multipliers(sample_conditional(self.mix, self.condition, rng, self.max_attempts))
            for _ in range(n)
        ])


def enumerate_mix(mix: DealMix) -> dict[DealAttributes, float]:
    """Exact law of a mix whose samplers all have finite support."""

    law: dict[DealAttributes, float] = {}
    for w, comp in zip(mix.weights, mix.components):
        supports = [comp.samplers[f].support() for f in DEAL_FIELDS]
        for combo in itertools.product(*supports):
            attrs = DealAttributes(**{f: v for f, (v, _) in zip(DEAL_FIELDS, combo)})
            law[attrs] = law.get(attrs, 0.0) + w * math.prod(p for _, p in combo)
    return law


def parse_sampler(spec: Any, name: str) -> FieldSampler:
    """Read one field sampler from its scenario-file form.

    A bare value is fixed; otherwise a one-key mapping ``{fixed: v}``,
    ``{choice: [...]}``, ``{uniform: [lo, hi]}`` or
    ``{triangular: [lo, mode, hi]}``.
    """
    if isinstance(spec, Mapping) and len(spec) == 1 and next(iter(spec)) in (
            "fixed", "choice", "uniform", "triangular"):
        kind, arg = next(iter(spec.items()))
        try:
            if kind == "fixed":
                return Fixed(_freeze(arg))
            if kind == "choice":
                return Choice(tuple(_freeze(a) for a in arg))
            if kind == "uniform":
                lo, hi = arg
                return Uniform(float(lo), float(hi), integer=name in _INTEGER)
            lo, mode, hi = arg
            return Triangular(float(lo), float(mode), float(hi))
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigurationError):
                raise
            raise ConfigurationError(f"bad {kind} sampler {arg!r}: {exc}", "pipeline", name) from None
    return Fixed(_freeze(spec))


def sampler_to_dict(s: FieldSampler) -> Any:
    if isinstance(s, Fixed):
        return {"fixed": _thaw(s.value)}
    if isinstance(s, Choice):
        return {"choice": [_thaw(o) for o in s.options]}
    if isinstance(s, Uniform):
        return {"uniform": [s.low, s.high]}
    return {"triangular": [s.low, s.mode, s.high]}


def _freeze(v):
    if isinstance(v, list):
        return tuple(_freeze(i) for i in v)
    if isinstance(v, Mapping) and set(v) == {"label", "factor"}:
        return (str(v["label"]), float(v["factor"]))
    return v


def _thaw(v):
    if isinstance(v, tuple) and v and isinstance(v[0], tuple):
        return [{"label": label, "factor": factor} for label, factor in v]
    if isinstance(v, tuple):
        return [_thaw(i) for i in v]
    return v


def parse_clauses(where: Sequence[Mapping[str, Any]]) -> tuple[Clause, ...]:
    return tuple(Clause(c["field"], c.get("op", "=="), _freeze(c["value"])) for c in where)
