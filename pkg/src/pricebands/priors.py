"""Parameter vector, prior, admissibility constraints and governed sampling.

A pricing world is ``theta = (alpha, beta[5], sigma)`` with

    alpha   ~ Normal(ln b0, s_alpha^2)
    beta_j  ~ Normal(mu_j, s_j^2)
    sigma   ~ HalfNormal(s_sigma)     (i.e. |Normal(0, s_sigma^2)|)

The governed prior is this law conditioned on the admissible set. Draws
are made by plain rejection, which is exact: accepted draws are i.i.d.
from the conditional law.
"""

from __future__ import annotations

import math
import operator
from collections import Counter
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Sequence

import numpy as np

from .deal_model import LEVERS
from .errors import ConfigurationError, SamplingConflictError

N_LEVERS = len(LEVERS)
DEFAULT_MAX_ATTEMPTS = 10_000

COMPONENTS: tuple[str, ...] = ("alpha",) + tuple(f"beta_{lv}" for lv in LEVERS) + ("sigma",)

_OPS = {
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
}


def _vec5(values, name: str, section: str = "prior") -> tuple[float, ...]:
    if isinstance(values, dict):
        missing = [lv for lv in LEVERS if lv not in values]
        if missing:
            raise ConfigurationError(f"missing levers {missing}", section, name)
        values = [values[lv] for lv in LEVERS]
    out = tuple(float(v) for v in values)
    if len(out) != N_LEVERS:
        raise ConfigurationError(f"needs {N_LEVERS} entries, got {len(out)}", section, name)
    return out


@dataclass(frozen=True)
class ParameterVector:
    alpha: float
    beta: tuple[float, ...]
    sigma: float

    def __post_init__(self):
        beta = tuple(float(b) for b in self.beta)
        if len(beta) != N_LEVERS:
            raise ValueError(f"beta needs {N_LEVERS} entries")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "sigma", float(self.sigma))
        if not all(math.isfinite(v) for v in (self.alpha, self.sigma, *beta)):
            raise ValueError(f"non-finite parameter vector {self}")

    def component(self, name: str) -> float:
        if name == "alpha":
            return self.alpha
        if name == "sigma":
            return self.sigma
        return self.beta[LEVERS.index(name[len("beta_"):])]

    def as_dict(self) -> dict[str, float]:
        return {c: self.component(c) for c in COMPONENTS}


@dataclass(frozen=True)
class PriorSpec:
    """Hyperparameters of the ungoverned prior.

    ``s_sigma == 0`` is allowed and means sigma is identically zero: no
    residual noise, which is the point-estimate mode.
    """

    b0: float
    s_alpha: float
    mu: tuple[float, ...]
    s: tuple[float, ...]
    s_sigma: float

    def __post_init__(self):
        object.__setattr__(self, "mu", _vec5(self.mu, "mu"))
        object.__setattr__(self, "s", _vec5(self.s, "s"))
        for name in ("b0", "s_alpha", "s_sigma"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not (self.b0 > 0 and math.isfinite(self.b0)):
            raise ConfigurationError(f"must be positive, got {self.b0}", "prior", "b0")
        if not self.s_alpha >= 0:
            raise ConfigurationError("must be >= 0", "prior", "s_alpha")
        if not self.s_sigma >= 0:
            raise ConfigurationError("must be >= 0", "prior", "s_sigma")
        if any(not sj >= 0 for sj in self.s):
            raise ConfigurationError("every prior std must be >= 0", "prior", "s")

    @property
    def log_b0(self) -> float:
        return math.log(self.b0)

    @property
    def location(self) -> np.ndarray:
        return np.array([self.log_b0, *self.mu, 0.0])

    @property
    def scale(self) -> np.ndarray:
        return np.array([self.s_alpha, *self.s, self.s_sigma])


@dataclass(frozen=True)
class Predicate:
    """``left op right`` over theta components; ``right`` is a number or a component."""

    label: str
    left: str
    op: str
    right: float | str

    def __post_init__(self):
        object.__setattr__(self, "left", _component_name(self.left))
        if isinstance(self.right, str):
            object.__setattr__(self, "right", _component_name(self.right))
        else:
            object.__setattr__(self, "right", float(self.right))
        if self.op not in _OPS:
            raise ConfigurationError(f"operator {self.op!r} not in {sorted(_OPS)}",
                                     "constraints", "predicates")

    def holds(self, theta: ParameterVector) -> bool:
        rhs = theta.component(self.right) if isinstance(self.right, str) else self.right
        return _OPS[self.op](theta.component(self.left), rhs)

    def mask(self, draws: np.ndarray) -> np.ndarray:
        lhs = draws[:, COMPONENTS.index(self.left)]
        rhs = draws[:, COMPONENTS.index(self.right)] if isinstance(self.right, str) else self.right
        return _OPS[self.op](lhs, rhs)


def _component_name(name: str) -> str:
    norm = str(name).strip().replace(".", "_").replace("[", "_").replace("]", "")
    if norm.lower() in ("alpha", "sigma"):
        return norm.lower()
    if norm.lower().startswith("beta_"):
        lever = norm[len("beta_"):].upper()
        if lever in LEVERS:
            return f"beta_{lever}"
    raise ConfigurationError(f"unknown parameter component {name!r}; use one of {list(COMPONENTS)}",
                             "constraints", "predicates")


def _pair(bounds, name: str) -> tuple[float, float]:
    lo, hi = (float(b) for b in bounds)
    if not lo < hi:
        raise ConfigurationError(f"lower bound {lo} must be below upper bound {hi}",
                                 "constraints", name)
    return lo, hi


@dataclass(frozen=True)
class ConstraintSet:
    """Open-interval bounds on beta and sigma plus named extra predicates."""

    beta_bounds: tuple[tuple[float, float], ...] = ((-math.inf, math.inf),) * N_LEVERS
    sigma_bounds: tuple[float, float] = (0.0, math.inf)
    predicates: tuple[Predicate, ...] = field(default=())

    def __post_init__(self):
        bb = self.beta_bounds
        if isinstance(bb, dict):
            bb = [bb.get(lv, (-math.inf, math.inf)) for lv in LEVERS]
        bb = tuple(_pair(b, "beta_bounds") for b in bb)
        if len(bb) == 1:
            bb = bb * N_LEVERS
        if len(bb) != N_LEVERS:
            raise ConfigurationError(f"needs 1 or {N_LEVERS} bound pairs", "constraints", "beta_bounds")
        object.__setattr__(self, "beta_bounds", bb)
        object.__setattr__(self, "sigma_bounds", _pair(self.sigma_bounds, "sigma_bounds"))
        object.__setattr__(self, "predicates", tuple(self.predicates))

    @classmethod
    def unconstrained(cls) -> "ConstraintSet":
        return cls(sigma_bounds=(-math.inf, math.inf))

    def labels(self) -> list[str]:
        return ([f"beta_{lv} in {b}" for lv, b in zip(LEVERS, self.beta_bounds)]
                + [f"sigma in {self.sigma_bounds}"] + [p.label for p in self.predicates])


def _sigma_ok(sigma: float, lo: float, hi: float) -> bool:
    # sigma == 0 only comes from a degenerate prior; it stands for the
    # sigma -> 0 limit and is admitted when that limit lies in the closure.
    return lo < sigma < hi or (sigma == 0.0 and lo <= 0.0 < hi)


def violations(theta: ParameterVector, constraints: ConstraintSet) -> list[str]:
    """Labels of every bound or predicate that ``theta`` fails."""
    labels = constraints.labels()
    failed = []
    for j, (lo, hi) in enumerate(constraints.beta_bounds):
        if not lo < theta.beta[j] < hi:
            failed.append(labels[j])
    if not _sigma_ok(theta.sigma, *constraints.sigma_bounds):
        failed.append(labels[N_LEVERS])
    failed.extend(p.label for p in constraints.predicates if not p.holds(theta))
    return failed


def admissible(theta: ParameterVector, constraints: ConstraintSet) -> bool:
    return not violations(theta, constraints)


def admissible_mask(draws: np.ndarray, constraints: ConstraintSet) -> np.ndarray:
    """Vectorised :func:`admissible` over rows of ``(n, 7)`` component arrays."""
    draws = np.atleast_2d(draws)
    beta = draws[:, 1:1 + N_LEVERS]
    lo = np.array([b[0] for b in constraints.beta_bounds])
    hi = np.array([b[1] for b in constraints.beta_bounds])
    ok = np.all((beta > lo) & (beta < hi), axis=1)
    s_lo, s_hi = constraints.sigma_bounds
    sigma = draws[:, -1]
    ok &= ((sigma > s_lo) & (sigma < s_hi)) | ((sigma == 0.0) & (s_lo <= 0.0 < s_hi))
    for p in constraints.predicates:
        ok &= p.mask(draws)
    return ok


def _raw_components(prior: PriorSpec, z: np.ndarray) -> np.ndarray:
    out = prior.location + prior.scale * z
    out[..., -1] = np.abs(out[..., -1])
    return out


def draw_raw(prior: PriorSpec, rng: np.random.Generator) -> ParameterVector:
    """One draw from the ungoverned prior; consumes exactly seven normals."""
    c = _raw_components(prior, rng.standard_normal(len(COMPONENTS)))
    return ParameterVector(c[0], c[1:1 + N_LEVERS], c[-1])


def sample_governed(prior: PriorSpec, constraints: ConstraintSet, rng: np.random.Generator,
                    max_attempts: int = DEFAULT_MAX_ATTEMPTS) -> tuple[ParameterVector, int]:
    """Rejection-sample one admissible theta.

    Returns the draw and the number of attempts it took.
    """
    if max_attempts < 1:
        raise ValueError("max_attempts must be >= 1")
    failures: Counter[str] = Counter()
    for attempt in range(1, max_attempts + 1):
        theta = draw_raw(prior, rng)
        failed = violations(theta, constraints)
        if not failed:
            return theta, attempt
        failures.update(failed)
    raise _conflict(max_attempts, 0, failures)


def sample_governed_batch(prior: PriorSpec, constraints: ConstraintSet, rng: np.random.Generator,
                          n: int, max_attempts: int = DEFAULT_MAX_ATTEMPTS,
                          block: int = 65_536) -> tuple[np.ndarray, int]:
    """Vectorised governed draws.

    Returns an ``(n, 7)`` array with columns ``alpha, beta_TN..beta_RIGHTS,
    sigma`` and the total number of attempts. The accepted rows are the
    same sequence :func:`sample_governed` would return on the same stream.
    """
    accepted: list[np.ndarray] = []
    have = 0
    attempts = 0
    rejected_run = 0
    k = len(COMPONENTS)
    while have < n:
        draws = _raw_components(prior, rng.standard_normal((block, k)))
        hits = np.flatnonzero(admissible_mask(draws, constraints))[: n - have]
        # rejections preceding each needed acceptance, then the tail run
        runs = np.diff(np.concatenate(([-1], hits))) - 1
        runs[:1] += rejected_run
        if runs.size and runs.max() >= max_attempts:
            raise _conflict(max_attempts, 0, _batch_failures(draws, constraints))
        if hits.size == 0:
            rejected_run += block
            attempts += block
            if rejected_run >= max_attempts:
                raise _conflict(max_attempts, 0, _batch_failures(draws, constraints))
            continue
        accepted.append(draws[hits])
        have += hits.size
        if have >= n:
            attempts += int(hits[-1]) + 1
        else:
            attempts += block
            rejected_run = block - 1 - int(hits[-1])
    return np.concatenate(accepted), attempts


def _batch_failures(draws: np.ndarray, constraints: ConstraintSet) -> Counter[str]:
    failures: Counter[str] = Counter()
    for row in draws[:1000]:
        failures.update(violations(ParameterVector(row[0], row[1:1 + N_LEVERS], row[-1]), constraints))
    return failures


def _conflict(attempts: int, accepted: int, failures: Counter[str]) -> SamplingConflictError:
    worst = failures.most_common(1)[0][0] if failures else None
    rate = accepted / attempts if attempts else 0.0
    return SamplingConflictError(
        f"prior-constraint conflict: no admissible draw in {attempts} consecutive attempts "
        f"(acceptance estimate {rate:.3g}; most violated: {worst})",
        acceptance_estimate=rate, most_violated=worst, attempts=attempts)


@dataclass(frozen=True)
class AcceptanceProbe:
    draws: int
    accepted: int
    violation_counts: dict[str, int]

    @property
    def rate(self) -> float:
        return self.accepted / self.draws

    @property
    def most_violated(self) -> str | None:
        if not self.violation_counts:
            return None
        return max(self.violation_counts.items(), key=lambda kv: kv[1])[0]


def acceptance_probe(prior: PriorSpec, constraints: ConstraintSet, rng: np.random.Generator,
                     n: int = 1000) -> AcceptanceProbe:
    """Draw ``n`` raw thetas and count how many are admissible."""
    failures: Counter[str] = Counter()
    accepted = 0
    for _ in range(n):
        failed = violations(draw_raw(prior, rng), constraints)
        accepted += not failed
        failures.update(failed)
    return AcceptanceProbe(n, accepted, dict(failures))


def location_mass(prior: PriorSpec, constraints: ConstraintSet) -> float:
    """Prior probability that every beta lies inside its bounds (closed form)."""
    mass = 1.0
    for mu, s, (lo, hi) in zip(prior.mu, prior.s, constraints.beta_bounds):
        if s == 0:
            mass *= float(lo < mu < hi)
        else:
            dist = NormalDist(mu, s)
            mass *= dist.cdf(hi) - dist.cdf(lo)
    return mass


def as_parameter_vectors(draws: Sequence[Sequence[float]]) -> list[ParameterVector]:
    return [ParameterVector(r[0], r[1:1 + N_LEVERS], r[-1]) for r in draws]
