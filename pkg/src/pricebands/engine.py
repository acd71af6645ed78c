"""Monte Carlo engine: T pricing worlds x N draws per world.

For world ``t``:

1. draw ``theta_t`` from the governed prior,
2. for ``i = 1..N`` take the deal multipliers (fixed, or sampled from a
   deal pipeline) and a noise term ``eta ~ Normal(0, sigma_t^2)``,
3. price ``P = exp(alpha + beta . ln x + eta)``.

Every world owns three Philox streams keyed on ``(seed, t)`` (parameters,
deals, noise), so the output depends only on the seed and the inputs,
never on how worlds are scheduled across threads.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Protocol, Sequence, Union

import numpy as np

from .deal_model import LEVERS, MB_PER_GB, MultiplierVector
from .errors import ConfigurationError, SamplingConflictError, SimulationError
from .priors import (
    COMPONENTS,
    DEFAULT_MAX_ATTEMPTS,
    ConstraintSet,
    ParameterVector,
    PriorSpec,
    acceptance_probe,
    location_mass,
    sample_governed,
)

log = logging.getLogger(__name__)

DEFAULT_QUANTILES = (0.05, 0.5, 0.95)

_STREAM_THETA, _STREAM_DEAL, _STREAM_NOISE = 0, 1, 2
_SEED_MASK = (1 << 64) - 1


def world_stream(seed: int, world: int, purpose: int) -> np.random.Generator:
    """Counter-based substream for one world.

    The Philox key is ``(seed, world)``; ``purpose`` sits in the top
    counter word so the three streams of a world never overlap.
    """
    return np.random.Generator(
        np.random.Philox(key=[seed & _SEED_MASK, world], counter=[0, 0, 0, purpose]))


class DealSource(Protocol):
    def sample_log_multipliers(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Return an ``(n, 5)`` array of ln-multipliers."""


@dataclass(frozen=True)
class SimulationPlan:
    T: int
    N: int
    seed: int = 0
    quantiles: tuple[float, ...] = DEFAULT_QUANTILES

    def __post_init__(self):
        for name in ("T", "N"):
            v = getattr(self, name)
            if isinstance(v, bool) or int(v) != v or v < 1:
                raise ConfigurationError(f"must be an integer >= 1, got {v!r}", "plan", name)
            object.__setattr__(self, name, int(v))
        if isinstance(self.seed, bool) or int(self.seed) != self.seed or not 0 <= self.seed <= _SEED_MASK:
            raise ConfigurationError("must be an unsigned 64-bit integer", "plan", "seed")
        object.__setattr__(self, "seed", int(self.seed))
        qs = tuple(float(q) for q in self.quantiles)
        object.__setattr__(self, "quantiles", _check_quantiles(qs))


def _check_quantiles(qs: Sequence[float]) -> tuple[float, ...]:
    qs = tuple(qs)
    if not qs:
        raise ConfigurationError("at least one quantile is required", "plan", "quantiles")
    if any(not 0.0 < q < 1.0 for q in qs):
        raise ConfigurationError(f"quantiles must lie strictly inside (0, 1): {qs}", "plan", "quantiles")
    if any(b <= a for a, b in zip(qs, qs[1:])):
        raise ConfigurationError(f"quantiles must be strictly increasing: {qs}", "plan", "quantiles")
    return qs


@dataclass
class PriceSampleSet:
    """The T x N array of simulated prices (USD/MB) and its provenance.

    ``thetas`` has one row per world with columns ``alpha, beta_*, sigma``;
    ``attempts`` counts the rejection-sampling draws each world needed.
    """

    samples: np.ndarray
    thetas: np.ndarray
    attempts: np.ndarray
    plan: SimulationPlan
    dropped_worlds: tuple[int, ...] = ()
    elapsed_s: float = 0.0

    @property
    def count(self) -> int:
        return int(self.samples.size)

    @property
    def acceptance_rate(self) -> float:
        return float(len(self.attempts) / self.attempts.sum())

    def flat(self) -> np.ndarray:
        return self.samples.ravel()


@dataclass(frozen=True)
class PriceBands:
    quantiles: dict[float, float]
    mean: float
    mean_se: float
    count: int

    def __post_init__(self):
        vals = list(self.quantiles.values())
        if any(b < a for a, b in zip(vals, vals[1:])):
            raise AssertionError(f"quantiles not monotone: {self.quantiles}")

    def per_gb(self) -> dict[float, float]:
        return {q: v * MB_PER_GB for q, v in self.quantiles.items()}

    def totals(self, volume_mb: float) -> dict[float, float]:
        return {q: v * volume_mb for q, v in self.quantiles.items()}

    def __getitem__(self, q: float) -> float:
        return self.quantiles[q]


def log_price(theta: ParameterVector, x: MultiplierVector, eta: float = 0.0) -> float:
    return math.fsum([theta.alpha, eta, *(b * lx for b, lx in zip(theta.beta, x.logs))])


def price_one(theta: ParameterVector, x: MultiplierVector, eta: float = 0.0) -> float:
    """``exp(alpha + sum_j beta_j ln x_j + eta)``.

    Evaluated as ``exp(alpha) * exp(rest)``: alpha is large in magnitude and
    exponentiating it apart keeps its rounding out of the lever terms.
    """
    rest = math.fsum([eta, *(b * lx for b, lx in zip(theta.beta, x.logs))])
    try:
        p = math.exp(theta.alpha) * math.exp(rest)
    except OverflowError:
        p = math.inf
    if not (math.isfinite(p) and p > 0):
        raise SimulationError(f"price {p} is not a positive finite number for theta={theta} "
                              f"(ln P = {theta.alpha + rest})")
    return p


def price_multiplicative(theta: ParameterVector, x: MultiplierVector, eta: float = 0.0) -> float:
    """Same price evaluated as ``b0 * prod_j x_j**beta_j * exp(eta)``."""
    p = math.exp(theta.alpha)
    for xj, bj in zip(x.values, theta.beta):
        p *= xj ** bj
    return p * math.exp(eta)


DealInput = Union[MultiplierVector, DealSource]


def _lever_sum(logx: np.ndarray, beta: Sequence[float]) -> np.ndarray:
    # Fixed left-to-right order instead of a BLAS matmul, so the result does
    # not depend on array layout or the BLAS build.
    acc = logx[:, 0] * beta[0]
    for j in range(1, len(beta)):
        acc = acc + logx[:, j] * beta[j]
    return acc


def simulate(plan: SimulationPlan, prior: PriorSpec, constraints: ConstraintSet,
             deal_source: DealInput, *, max_attempts: int = DEFAULT_MAX_ATTEMPTS,
             workers: int = 1, on_nonfinite: str = "abort") -> PriceSampleSet:
    """Run the T x N sampling scheme.

    ``deal_source`` is either a fixed :class:`MultiplierVector` or an object
    with ``sample_log_multipliers(rng, n)``. ``on_nonfinite`` is ``"abort"``
    (raise on the first bad world) or ``"drop"`` (discard it with a warning).
    """
    if on_nonfinite not in ("abort", "drop"):
        raise ConfigurationError(f"on_nonfinite must be 'abort' or 'drop', got {on_nonfinite!r}")
    T, N = plan.T, plan.N
    if isinstance(deal_source, MultiplierVector):
        fixed = np.broadcast_to(deal_source.log_array, (N, len(LEVERS)))
        def logx_for(rng):
            return fixed
    else:
        def logx_for(rng):
            return np.asarray(deal_source.sample_log_multipliers(rng, N), dtype=float)

    samples = np.empty((T, N))
    thetas = np.empty((T, len(COMPONENTS)))
    attempts = np.empty(T, dtype=np.int64)

    def run_world(t: int) -> None:
        try:
            theta, n_try = sample_governed(prior, constraints,
                                           world_stream(plan.seed, t, _STREAM_THETA), max_attempts)
        except SamplingConflictError as exc:
            exc.args = (f"world {t}: {exc.args[0]}",)
            raise
        logx = logx_for(world_stream(plan.seed, t, _STREAM_DEAL))
        eta = theta.sigma * world_stream(plan.seed, t, _STREAM_NOISE).standard_normal(N)
        with np.errstate(over="ignore", invalid="ignore"):
            samples[t] = np.exp(theta.alpha) * np.exp(_lever_sum(logx, theta.beta) + eta)
        thetas[t] = (theta.alpha, *theta.beta, theta.sigma)
        attempts[t] = n_try

    def run_range(lo: int, hi: int) -> None:
        for t in range(lo, hi):
            run_world(t)

    start = time.perf_counter()
    if workers <= 1 or T < 2:
        run_range(0, T)
    else:
        bounds = np.linspace(0, T, min(workers, T) + 1).astype(int)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for fut in [pool.submit(run_range, lo, hi) for lo, hi in zip(bounds, bounds[1:])]:
                fut.result()
    elapsed = time.perf_counter() - start

    bad = np.flatnonzero(~np.all(np.isfinite(samples) & (samples > 0), axis=1))
    dropped: tuple[int, ...] = ()
    if bad.size:
        t = int(bad[0])
        theta = dict(zip(COMPONENTS, thetas[t]))
        if on_nonfinite == "abort":
            raise SimulationError(f"world {t} produced a non-finite or zero price; theta={theta}", world=t)
        log.warning("dropping %d world(s) with non-finite prices, first is %d (theta=%s)",
                    bad.size, t, theta)
        keep = np.ones(T, dtype=bool)
        keep[bad] = False
        samples, thetas, attempts = samples[keep], thetas[keep], attempts[keep]
        dropped = tuple(int(b) for b in bad)
        if not samples.size:
            raise SimulationError("every world produced non-finite prices")

    result = PriceSampleSet(samples, thetas, attempts, plan, dropped, elapsed)
    log.info("simulated %d worlds x %d draws in %.3fs (%.0f worlds/s), acceptance rate %.4f",
             T, N, elapsed, T / elapsed if elapsed > 0 else math.inf, result.acceptance_rate)
    return result


_TRANSFORMS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "identity": lambda p: p,
    "log": np.log,
}


def _as_flat(samples) -> np.ndarray:
    if isinstance(samples, PriceSampleSet):
        samples = samples.samples
    arr = np.asarray(samples, dtype=float).ravel()
    if arr.size == 0:
        raise ValueError("empty sample set")
    return arr


def estimate_mean(samples, h: str | tuple[str, float] = "identity") -> tuple[float, float]:
    """Monte Carlo mean of ``h(P)`` and its standard error ``s / sqrt(n)``.

    ``h`` is ``"identity"``, ``"log"`` or ``("indicator", threshold)`` for
    the exceedance probability ``P > threshold``.
    """
    p = _as_flat(samples)
    if isinstance(h, tuple):
        kind, threshold = h
        if kind != "indicator":
            raise ValueError(f"unknown transform {h!r}")
        values = (p > threshold).astype(float)
    else:
        try:
            values = _TRANSFORMS[h](p)
        except KeyError:
            raise ValueError(f"unknown transform {h!r}") from None
    n = values.size
    se = float(values.std(ddof=1) / math.sqrt(n)) if n > 1 else math.nan
    return float(values.mean()), se


def quantile_rank(q: float, n: int) -> int:
    """1-based order statistic giving the inf-definition empirical quantile.

    The smallest k with k/n >= q. ``q`` is read as the decimal it was
    written as, so 0.05 * 50000 is rank 2500 and not 2501.
    """
    return max(1, math.ceil(Fraction(repr(float(q))) * n))


def estimate_quantiles(samples, qs: Sequence[float] = DEFAULT_QUANTILES) -> PriceBands:
    p = _as_flat(samples)
    qs = _check_quantiles(tuple(float(q) for q in qs))
    ordered = np.sort(p)
    n = ordered.size
    mean, se = estimate_mean(p)
    return PriceBands({q: float(ordered[quantile_rank(q, n) - 1]) for q in qs}, mean, se, n)


def semi_analytic_median(prior: PriorSpec, x: MultiplierVector,
                         constraints: ConstraintSet | None = None,
                         min_mass: float = 0.999) -> float:
    """Median of the prior-predictive price, ``exp(ln b0 + mu . ln x)``.

    ln P is symmetric about that centre whenever the location parameters
    are (nearly) untruncated. Bounds on sigma only rescale the symmetric
    noise and do not move the median, so they are not counted; beta
    bounds are checked in closed form and extra predicates by a probe.
    """
    if constraints is not None:
        mass = location_mass(prior, constraints)
        if constraints.predicates:
            probe = acceptance_probe(prior, ConstraintSet(constraints.beta_bounds, (-math.inf, math.inf),
                                                          constraints.predicates),
                                     np.random.default_rng(0), 10_000)
            mass = min(mass, probe.rate)
        if mass < min_mass:
            raise ConfigurationError(
                f"constraints keep only {mass:.4g} of the prior location mass (< {min_mass}); "
                "the semi-analytic median does not apply")
    return math.exp(prior.log_b0 + math.fsum(m * lx for m, lx in zip(prior.mu, x.logs)))
