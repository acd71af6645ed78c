"""Content-agnostic baseline price b0 (USD per MB).

b0 is the value of the global data economy divided by the global volume
of data in megabytes. The shipped table covers 2015-2035.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import yaml

from .errors import ConfigurationError

MB_PER_ZB = 1e15
SCHEMA_VERSION = 1


@dataclass(frozen=True)
class AnchorRow:
    year: int
    economy_value_usd: float
    gdp_usd: float
    data_volume_zb: float
    is_projection: bool = False

    def __post_init__(self):
        if not 2015 <= self.year <= 2035:
            raise ConfigurationError(f"year {self.year} outside 2015-2035", "anchor", "year")
        for name in ("economy_value_usd", "gdp_usd", "data_volume_zb"):
            if not float(getattr(self, name)) > 0:
                raise ConfigurationError(f"{name} must be positive in year {self.year}", "anchor", name)

    @property
    def b0(self) -> float:
        return derive_b0(self.economy_value_usd, self.data_volume_zb)


@dataclass(frozen=True)
class AnchorDataset:
    rows: dict[int, AnchorRow]
    version: str
    source: str

    def years(self) -> list[int]:
        return sorted(self.rows)


def derive_b0(economy_value_usd: float, data_volume_zb: float) -> float:
    if not (economy_value_usd > 0 and data_volume_zb > 0):
        raise ConfigurationError(
            f"economy value and data volume must be positive, got {economy_value_usd}, {data_volume_zb}",
            "anchor")
    return economy_value_usd / (data_volume_zb * MB_PER_ZB)


def load_dataset(path: str | Path | None = None) -> AnchorDataset:
    """Load the embedded table, or a user file with the same schema."""
    if path is None:
        text = resources.files("pricebands").joinpath("data/anchor_table.yaml").read_text()
        source = "embedded:anchor_table.yaml"
    else:
        text = Path(path).read_text()
        source = str(path)
    doc = yaml.safe_load(text)
    if not isinstance(doc, dict) or doc.get("schema_version") != SCHEMA_VERSION:
        raise ConfigurationError(f"{source}: expected schema_version {SCHEMA_VERSION}", "anchor")
    rows = {}
    for rec in doc.get("records", []):
        row = AnchorRow(int(rec["year"]), float(rec["economy_value_usd"]), float(rec["gdp_usd"]),
                        float(rec["data_volume_zb"]), bool(rec.get("is_projection", False)))
        if row.year in rows:
            raise ConfigurationError(f"{source}: duplicate year {row.year}", "anchor")
        rows[row.year] = row
    return AnchorDataset(rows, str(doc.get("version", "unversioned")), source)


_DEFAULT: AnchorDataset | None = None


def default_dataset() -> AnchorDataset:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = load_dataset()
    return _DEFAULT


def anchor_for_year(year: int, dataset: AnchorDataset | None = None) -> tuple[float, bool]:
    """b0 recomputed from the year's value and volume, and its projection flag."""
    ds = dataset or default_dataset()
    try:
        row = ds.rows[int(year)]
    except KeyError:
        raise ConfigurationError(f"no anchor row for {year}; dataset covers {ds.years()[0]}-{ds.years()[-1]}",
                                 "anchor", "year") from None
    return row.b0, row.is_projection


def share_of_gdp(row: AnchorRow) -> float:
    return row.economy_value_usd / row.gdp_usd

