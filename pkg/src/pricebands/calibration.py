"""Elasticity calibration from observed transactions.

Fits ``ln p = alpha + beta . ln x + eta`` by ordinary least squares and
blends the fit into an existing prior. The blend is a moment update:
each prior mean/std moves toward the OLS estimate/standard error by the
weight ``w``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import yaml

from .deal_model import LEVERS, MultiplierVector
from .errors import ConfigurationError
from .priors import PriorSpec

N_COEF = 1 + len(LEVERS)
HALFNORMAL_MEAN = math.sqrt(2.0 / math.pi)


@dataclass(frozen=True)
class ObservedDeal:
    multipliers: MultiplierVector
    price_usd_per_mb: float
    label: str = ""
    timestamp: str | None = None

    def __post_init__(self):
        if not (self.price_usd_per_mb > 0 and math.isfinite(self.price_usd_per_mb)):
            raise ConfigurationError(f"price must be positive, got {self.price_usd_per_mb}",
                                     "deals", self.label or "price_usd_per_mb")


@dataclass(frozen=True)
class FitResult:
    alpha_hat: float
    beta_hat: tuple[float, ...]
    sigma_hat: float
    se_alpha: float
    se_beta: tuple[float, ...]
    n: int
    condition_number: float

    @property
    def dof(self) -> int:
        return self.n - N_COEF

    def as_dict(self) -> dict:
        return {
            "n": self.n,
            "dof": self.dof,
            "alpha_hat": self.alpha_hat,
            "se_alpha": self.se_alpha,
            "beta_hat": dict(zip(LEVERS, self.beta_hat)),
            "se_beta": dict(zip(LEVERS, self.se_beta)),
            "sigma_hat": self.sigma_hat,
            "b0_hat": math.exp(self.alpha_hat),
            "condition_number": self.condition_number,
        }


def design_matrix(deals: Sequence[ObservedDeal]) -> tuple[np.ndarray, np.ndarray]:
    Z = np.array([[1.0, *d.multipliers.logs] for d in deals])
    y = np.log([d.price_usd_per_mb for d in deals])
    return Z, y


def _collinear_levers(Z: np.ndarray) -> list[str]:
    spread = np.ptp(Z[:, 1:], axis=0)
    named = [lv for lv, s in zip(LEVERS, spread) if s == 0]
    if named:
        return named
    # loadings of the near-null direction of the column-scaled design
    scaled = Z / np.linalg.norm(Z, axis=0)
    _, _, vt = np.linalg.svd(scaled)
    null = np.abs(vt[-1])
    return [name for name, v in zip(("intercept",) + LEVERS, null) if v > 0.1]


def fit_ols(deals: Sequence[ObservedDeal], max_condition: float = 1e8) -> FitResult:
    n = len(deals)
    if n < N_COEF + 1:
        raise ConfigurationError(f"need at least {N_COEF + 1} deals to fit {N_COEF} coefficients, got {n}",
                                 "deals")
    Z, y = design_matrix(deals)
    cond = float(np.linalg.cond(Z))
    if not cond < max_condition:
        raise ConfigurationError(
            f"design matrix is rank deficient (condition number {cond:.3g}); "
            f"collinear levers: {', '.join(_collinear_levers(Z))}", "deals")
    coef, _, _, _ = np.linalg.lstsq(Z, y, rcond=None)
    resid = y - Z @ coef
    dof = n - N_COEF
    s2 = float(resid @ resid) / dof
    cov = s2 * np.linalg.inv(Z.T @ Z)
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    return FitResult(
        alpha_hat=float(coef[0]),
        beta_hat=tuple(float(b) for b in coef[1:]),
        sigma_hat=math.sqrt(s2),
        se_alpha=float(se[0]),
        se_beta=tuple(float(s) for s in se[1:]),
        n=n,
        condition_number=cond,
    )


def default_blend_weight(n: int) -> float:
    return n / (n + 20)


def refresh_prior(old: PriorSpec, fit: FitResult, w: float) -> PriorSpec:
    """Move the prior toward the fit by weight ``w`` in [0, 1].

    The half-normal scale is set so its mean, ``s_sigma*sqrt(2/pi)``,
    equals the blend of the old mean and ``sigma_hat``.
    """
    if not 0.0 <= w <= 1.0:
        raise ConfigurationError(f"blend weight must lie in [0, 1], got {w}", "calibration", "weight")
    if w == 0.0:
        return old

    def blend(a: float, b: float) -> float:
        return (1.0 - w) * a + w * b

    sigma_mean = blend(old.s_sigma * HALFNORMAL_MEAN, fit.sigma_hat)
    return PriorSpec(
        b0=math.exp(blend(old.log_b0, fit.alpha_hat)),
        s_alpha=blend(old.s_alpha, fit.se_alpha),
        mu=tuple(blend(m, b) for m, b in zip(old.mu, fit.beta_hat)),
        s=tuple(blend(s, e) for s, e in zip(old.s, fit.se_beta)),
        s_sigma=sigma_mean / HALFNORMAL_MEAN,
    )


def load_observed_deals(path: str | Path) -> list[ObservedDeal]:
    """Read an observed-deals file.

    Format (YAML)::

        deals:
          - label: deal-001
            multipliers: {TN: 1.5, COV: 1.2, QF: 1.1, UTIL: 1.3, RIGHTS: 1.4}
            price_usd_per_mb: 3.1e-4
    """
    doc = yaml.safe_load(Path(path).read_text())
    if not isinstance(doc, dict) or not isinstance(doc.get("deals"), list):
        raise ConfigurationError("expected a top-level 'deals' list", "deals")
    out = []
    for k, rec in enumerate(doc["deals"]):
        label = str(rec.get("label", f"deal-{k + 1}"))
        try:
            mult = rec["multipliers"]
            values = [mult[lv] for lv in LEVERS] if isinstance(mult, dict) else list(mult)
            out.append(ObservedDeal(MultiplierVector(tuple(float(v) for v in values)),
                                    float(rec["price_usd_per_mb"]), label,
                                    None if rec.get("timestamp") is None else str(rec["timestamp"])))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigurationError):
                raise
            raise ConfigurationError(f"malformed record: {exc}", "deals", label) from None
    return out


def dump_observed_deals(deals: Sequence[ObservedDeal]) -> str:
    return yaml.safe_dump({"deals": [
        {"label": d.label, "multipliers": d.multipliers.as_dict(), "price_usd_per_mb": d.price_usd_per_mb,
         **({"timestamp": d.timestamp} if d.timestamp is not None else {})}
        for d in deals]}, sort_keys=False)
