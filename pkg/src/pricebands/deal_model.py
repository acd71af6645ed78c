"""Deal attributes and the deterministic attribute -> multiplier mapping.

Five price levers are modelled, always in this order::

    TN      technology node          table lookup
    COV     process coverage         1 + a*ln(1 + m)
    QF      quality and freshness    w0 + wq*q + wc*c + wa*(1 - age/H)
    UTIL    buyer utility            1 + b*log10(1 + V/D)
    RIGHTS  licensing rights         product of rights factors

All coefficients live in :class:`FormulaParams`; the defaults are the
semiconductor case-study values.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigurationError, DomainError

LEVERS: tuple[str, ...] = ("TN", "COV", "QF", "UTIL", "RIGHTS")

# Binary prefixes: 5 PB == 5,368,709,120 MB.
_MB_PER_UNIT = {
    "MB": 1.0,
    "GB": 1024.0,
    "TB": 1024.0**2,
    "PB": 1024.0**3,
}
MB_PER_GB = _MB_PER_UNIT["GB"]


def volume_to_mb(value: float, unit: str = "MB") -> float:
    try:
        factor = _MB_PER_UNIT[unit.upper()]
    except KeyError:
        raise ConfigurationError(f"unknown volume unit {unit!r}; use one of {sorted(_MB_PER_UNIT)}",
                                 "deal", "volume") from None
    return float(value) * factor


@dataclass(frozen=True)
class NodeTable:
    """Technology-node label -> multiplier."""

    multipliers: Mapping[str, float]
    name: str = "custom"

    def __post_init__(self):
        if not self.multipliers:
            raise ConfigurationError("node table is empty", "deal", "node_table")
        clean = {}
        for label, value in self.multipliers.items():
            value = float(value)
            if not (value > 0 and math.isfinite(value)):
                raise ConfigurationError(f"multiplier for {label!r} must be positive, got {value}",
                                         "deal", "node_table")
            clean[str(label)] = value
        object.__setattr__(self, "multipliers", clean)

    def __getitem__(self, label: str) -> float:
        try:
            return self.multipliers[label]
        except KeyError:
            raise ConfigurationError(
                f"unknown technology_node {label!r}; table {self.name!r} has {sorted(self.multipliers)}",
                "deal", "technology_node") from None

    def __contains__(self, label: str) -> bool:
        return label in self.multipliers

    def check_monotone(self) -> None:
        """Raise unless a smaller feature size never gets a smaller multiplier.

        Labels are ordered by the first number they contain ("3nm" -> 3).
        """
        sized = []
        for label, value in self.multipliers.items():
            m = re.search(r"\d+(\.\d+)?", label)
            if m is None:
                raise ConfigurationError(f"cannot read a feature size from node label {label!r}",
                                         "deal", "node_table")
            sized.append((float(m.group()), label, value))
        sized.sort()
        for (s_small, l_small, v_small), (s_big, l_big, v_big) in zip(sized, sized[1:]):
            if s_small < s_big and v_small < v_big:
                raise ConfigurationError(
                    f"node table not monotone: {l_small} -> {v_small} is below {l_big} -> {v_big}",
                    "deal", "node_table")


SEMICONDUCTOR_NODE_TABLE = NodeTable(
    {"10nm": 1.25, "7nm": 1.35, "5nm": 1.50, "3nm": 1.65, "2nm": 1.80},
    name="semiconductor-2026",
)

NODE_TABLE_PRESETS: dict[str, NodeTable] = {SEMICONDUCTOR_NODE_TABLE.name: SEMICONDUCTOR_NODE_TABLE}


@dataclass(frozen=True)
class FormulaParams:
    coverage_scale: float = 0.15
    qf_weights: tuple[float, float, float, float] = (0.85, 0.2, 0.1, 0.1)
    horizon_months: float = 24.0
    utility_scale: float = 0.4
    utility_denom: float = 1e6
    utility_log_base: float = 10.0

    def __post_init__(self):
        object.__setattr__(self, "qf_weights", tuple(float(w) for w in self.qf_weights))
        if len(self.qf_weights) != 4:
            raise ConfigurationError("qf_weights needs four entries (w0, wq, wc, wa)", "deal", "formulas")
        if self.horizon_months <= 0:
            raise ConfigurationError("horizon_months must be positive", "deal", "formulas")
        if self.utility_denom <= 0:
            raise ConfigurationError("utility_denom must be positive", "deal", "formulas")
        if self.utility_log_base <= 0 or self.utility_log_base == 1:
            raise ConfigurationError("utility_log_base must be positive and != 1", "deal", "formulas")


@dataclass(frozen=True)
class DealAttributes:
    technology_node: str
    process_count: int
    quality_score: float
    completeness_score: float
    age_months: float
    utility_value_usd: float
    rights_factors: tuple[tuple[str, float], ...] = ()
    volume_mb: float = 1.0

    def __post_init__(self):
        def bad(field_name, msg):
            return ConfigurationError(msg, "deal", field_name)

        if isinstance(self.process_count, bool) or int(self.process_count) != self.process_count:
            raise bad("process_count", f"must be an integer, got {self.process_count!r}")
        object.__setattr__(self, "process_count", int(self.process_count))
        if self.process_count < 0:
            raise bad("process_count", "must be >= 0")
        for name in ("quality_score", "completeness_score"):
            v = float(getattr(self, name))
            if not 0.0 <= v <= 1.0:
                raise bad(name, f"must lie in [0, 1], got {v}")
            object.__setattr__(self, name, v)
        if not float(self.age_months) >= 0:
            raise bad("age_months", "must be >= 0")
        if not float(self.utility_value_usd) >= 0:
            raise bad("utility_value_usd", "must be >= 0")
        if not (float(self.volume_mb) > 0 and math.isfinite(float(self.volume_mb))):
            raise bad("volume_mb", "must be positive")
        rights = []
        for item in self.rights_factors:
            label, factor = item
            factor = float(factor)
            if not factor > 0:
                raise bad("rights_factors", f"factor {label!r} must be positive, got {factor}")
            rights.append((str(label), factor))
        object.__setattr__(self, "rights_factors", tuple(rights))
        object.__setattr__(self, "technology_node", str(self.technology_node))
        object.__setattr__(self, "age_months", float(self.age_months))
        object.__setattr__(self, "utility_value_usd", float(self.utility_value_usd))
        object.__setattr__(self, "volume_mb", float(self.volume_mb))


@dataclass(frozen=True)
class MultiplierVector:
    """Positive multipliers in lever order, with their natural logs cached."""

    values: tuple[float, ...]
    logs: tuple[float, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if len(vals) != len(LEVERS):
            raise ConfigurationError(f"expected {len(LEVERS)} multipliers, got {len(vals)}")
        for lever, v in zip(LEVERS, vals):
            if not (v > 0 and math.isfinite(v)):
                raise DomainError(f"multiplier {lever} must be positive and finite, got {v}")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "logs", tuple(math.log(v) for v in vals))

    @classmethod
    def neutral(cls) -> "MultiplierVector":
        return cls((1.0,) * len(LEVERS))

    def as_dict(self) -> dict[str, float]:
        return dict(zip(LEVERS, self.values))

    @property
    def log_array(self) -> np.ndarray:
        return np.array(self.logs)

    def __iter__(self):
        return iter(self.values)

    def __getitem__(self, key: int | str) -> float:
        if isinstance(key, str):
            key = LEVERS.index(key)
        return self.values[key]


def node_multiplier(attrs: DealAttributes, table: NodeTable) -> float:
    return table[attrs.technology_node]


def coverage_multiplier(m: int, scale: float = 0.15) -> float:
    if m < 0:
        raise DomainError(f"process count must be >= 0, got {m}")
    return 1.0 + scale * math.log1p(m)


def quality_freshness_multiplier(q: float, c: float, age_months: float,
                                 weights: Sequence[float] = (0.85, 0.2, 0.1, 0.1),
                                 horizon_months: float = 24.0) -> float:
    # No clamping of the freshness term: stale data may push this negative,
    # which is reported rather than silently floored.
    w0, wq, wc, wa = weights
    value = w0 + wq * q + wc * c + wa * (1.0 - age_months / horizon_months)
    if not value > 0:
        raise DomainError(
            f"quality/freshness multiplier is {value:.6g} <= 0 (q={q}, c={c}, age={age_months}); "
            "adjust the weights or horizon")
    return value


def utility_multiplier(value_usd: float, scale: float = 0.4, denom: float = 1e6,
                       log_base: float = 10.0) -> float:
    if value_usd < 0:
        raise DomainError(f"utility value must be >= 0, got {value_usd}")
    result = 1.0 + scale * math.log(1.0 + value_usd / denom, log_base)
    if not result > 0:
        raise DomainError(f"utility multiplier is {result:.6g} <= 0")
    return result


def rights_multiplier(factors: Sequence[float]) -> float:
    result = 1.0
    for f in factors:
        if not f > 0:
            raise DomainError(f"rights factor must be positive, got {f}")
        result *= f
    return result


def map_attributes(attrs: DealAttributes, table: NodeTable,
                   params: FormulaParams | None = None) -> MultiplierVector:
    p = params or FormulaParams()
    return MultiplierVector((
        node_multiplier(attrs, table),
        coverage_multiplier(attrs.process_count, p.coverage_scale),
        quality_freshness_multiplier(attrs.quality_score, attrs.completeness_score,
                                     attrs.age_months, p.qf_weights, p.horizon_months),
        utility_multiplier(attrs.utility_value_usd, p.utility_scale, p.utility_denom,
                           p.utility_log_base),
        rights_multiplier([f for _, f in attrs.rights_factors]),
    ))


# The case-study deal. Quality and completeness scores are not published;
# 0.95/0.95 reproduces the reported QF multiplier of 1.21.
CASE_STUDY_DEAL = DealAttributes(
    technology_node="3nm",
    process_count=6,
    quality_score=0.95,
    completeness_score=0.95,
    age_months=6.0,
    utility_value_usd=25e6,
    rights_factors=(("non-exclusive", 1.0), ("derivatives", 1.3),
                    ("term-24-months", 1.1), ("enterprise", 1.15)),
    volume_mb=volume_to_mb(5, "PB"),
)
