"""Monte Carlo and quadrature checks for the eigen-aligned interaction channel.

The channel multiplies the state by ``lambda_h + gamma x^2`` at every step,
so its growth after ``t`` steps is ``exp(sum_i log(lambda_h + gamma x_i^2))``.
This module samples that log-product, estimates sub-exponential parameters
for one summand, and compares empirical tails against the resulting bound.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.special import erf

from lrdlab.errors import EstimationError, InvalidArgumentError
from lrdlab.numerics import (
    QuadratureRule,
    RandomStream,
    gauss_hermite_expectation,
    gauss_hermite_rule,
    sample_standard_normal,
)

HISTOGRAM_BINS = 50
B_GRID = (0.25, 0.5, 1.0, 2.0, 4.0)


@dataclass(frozen=True)
class ChannelParams:
    lambda_h: float
    gamma: float

    def __post_init__(self):
        if not self.lambda_h > 0:
            raise InvalidArgumentError(f"lambda_h must be strictly positive, got {self.lambda_h}")
        if not self.gamma >= 0:
            raise InvalidArgumentError(f"gamma must be non-negative, got {self.gamma}")

    @property
    def mean_factor(self) -> float:
        """E[lambda_h + gamma X^2]."""
        return self.lambda_h + self.gamma

    @property
    def contracting(self) -> bool:
        return self.mean_factor < 1.0


@dataclass(frozen=True)
class TailBoundParams:
    nu: float
    b: float

    def __post_init__(self):
        if not (self.nu > 0 and self.b > 0):
            raise InvalidArgumentError("nu and b must be positive")


@dataclass
class McReport:
    channel: ChannelParams
    t: int
    n_samples: int
    samples: np.ndarray = field(repr=False)
    mean: float
    stdev: float
    min: float
    max: float
    bin_edges: np.ndarray = field(repr=False)
    counts: np.ndarray = field(repr=False)
    mu_quadrature: float
    exceedance: list[TailCheck] = field(default_factory=list)

    @property
    def standard_error(self) -> float:
        return self.stdev / math.sqrt(self.n_samples)

    @property
    def mean_deviation_in_se(self) -> float:
        """|mean - t mu| in units of the standard error.

        NaN for a single sample, where no standard error exists; inf if the
        spread is zero but the mean misses.
        """
        if self.n_samples < 2:
            return math.nan
        gap = abs(self.mean - self.t * self.mu_quadrature)
        se = self.standard_error
        if se == 0:
            return 0.0 if gap == 0 else math.inf
        return gap / se


def log_factor_mean(channel: ChannelParams, rule: QuadratureRule | None = None) -> float:
    """mu = E[log(lambda_h + gamma X^2)] by Gauss-Hermite quadrature."""
    return gauss_hermite_expectation(lambda x: np.log(channel.lambda_h + channel.gamma * x * x), rule)


def log_product_sample(channel: ChannelParams, t: int, stream: RandomStream, inputs=None) -> float:
    """``sum_{i<=t} log(lambda_h + gamma x_i^2)`` with x drawn from ``stream``.

    ``inputs`` overrides the draws (used to pin specific sequences in tests).
    """
    if t < 1:
        raise InvalidArgumentError("t must be at least 1")
    x = sample_standard_normal(stream, t) if inputs is None else np.asarray(inputs, dtype=float)
    if x.shape != (t,):
        raise InvalidArgumentError(f"expected {t} inputs, got shape {x.shape}")
    return float(np.sum(np.log(channel.lambda_h + channel.gamma * x * x)))


def sample_log_products(
    channel: ChannelParams, t: int, n_samples: int, stream: RandomStream, workers: int = 1
) -> np.ndarray:
    """Sample ``i`` uses ``stream.child(i)``, so the result does not depend on ``workers``."""
    if n_samples < 1:
        raise InvalidArgumentError("n_samples must be at least 1")

    def run(lo_hi):
        lo, hi = lo_hi
        return [log_product_sample(channel, t, stream.child(i)) for i in range(lo, hi)]

    workers = max(1, int(workers))
    if workers == 1:
        return np.array(run((0, n_samples)))
    bounds = np.linspace(0, n_samples, workers * 4 + 1).astype(int)
    chunks = [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(run, chunks))
    return np.array([v for part in parts for v in part])


def mc_histogram(
    channel: ChannelParams,
    t: int,
    n_samples: int,
    stream: RandomStream,
    workers: int = 1,
    rule: QuadratureRule | None = None,
) -> McReport:
    if not channel.contracting:
        warnings.warn(f"lambda_h + gamma = {channel.mean_factor} >= 1; channel is not contracting in mean")
    samples = sample_log_products(channel, t, n_samples, stream, workers)
    counts, edges = np.histogram(samples, bins=HISTOGRAM_BINS)
    return McReport(
        channel=channel,
        t=t,
        n_samples=n_samples,
        samples=samples,
        mean=float(np.mean(samples)),
        stdev=float(np.std(samples, ddof=1)) if n_samples > 1 else 0.0,
        min=float(np.min(samples)),
        max=float(np.max(samples)),
        bin_edges=edges,
        counts=counts,
        mu_quadrature=log_factor_mean(channel, rule),
    )


# -- sub-exponential parameters ----------------------------------------------


def lambda_grid(b: float, n: int = 101) -> np.ndarray:
    """``n`` evenly spaced points strictly inside (-1/b, 1/b)."""
    return np.linspace(-1.0 / b, 1.0 / b, n + 2)[1:-1]


def centered_log_mgf(c: float, gamma: float, lambdas: Iterable[float], rule: QuadratureRule | None = None) -> np.ndarray:
    """log E[exp(lam (Y - EY))] for Y = log(c + gamma X^2), one value per ``lam``."""
    rule = rule or gauss_hermite_rule()
    mu = gauss_hermite_expectation(lambda x: np.log(c + gamma * x * x), rule)
    out = []
    for lam in lambdas:
        m = gauss_hermite_expectation(lambda x: np.exp(lam * (np.log(c + gamma * x * x) - mu)), rule)
        out.append(math.log(m))
    return np.array(out)


def mgf_slack(c: float, gamma: float, params: TailBoundParams, n: int = 101, rule=None) -> np.ndarray:
    """``exp(nu^2 lam^2 / 2) - E[exp(lam (Y - EY))]`` over the lambda grid for ``params.b``."""
    lams = lambda_grid(params.b, n)
    mgf = np.exp(centered_log_mgf(c, gamma, lams, rule))
    return np.exp(params.nu**2 * lams**2 / 2.0) - mgf


def estimate_subexponential_params(
    c: float,
    gamma: float,
    rule: QuadratureRule | None = None,
    nu_resolution: float = 1e-3,
    nu_max: float = 100.0,
    b_grid: Sequence[float] = B_GRID,
    n_lambda: int = 101,
) -> TailBoundParams:
    """Smallest feasible ``b`` from ``b_grid``, then the smallest ``nu`` on a ``nu_resolution`` grid.

    ``b`` is tried in increasing order (widest lambda range first); for each,
    ``nu`` must satisfy ``log m(lam) <= nu^2 lam^2 / 2`` at every grid point.
    """
    if not c > 0:
        raise InvalidArgumentError(f"c must be positive, got {c}")
    if not gamma >= 0:
        raise InvalidArgumentError(f"gamma must be non-negative, got {gamma}")
    rule = rule or gauss_hermite_rule()
    diagnostics = []
    for b in sorted(b_grid):
        lams = lambda_grid(b, n_lambda)
        lams = lams[lams != 0]
        log_m = centered_log_mgf(c, gamma, lams, rule)
        if not np.all(np.isfinite(log_m)):
            diagnostics.append((b, "mgf not finite"))
            continue
        need = float(np.max(np.sqrt(np.maximum(2.0 * log_m, 0.0)) / np.abs(lams)))
        nu = max(1, math.ceil(need / nu_resolution - 1e-9)) * nu_resolution
        while np.any(log_m > nu**2 * lams**2 / 2.0):
            nu += nu_resolution
        if nu > nu_max:
            diagnostics.append((b, f"nu {nu:.3f} exceeds {nu_max}"))
            continue
        return TailBoundParams(nu=round(nu, 12), b=float(b))
    raise EstimationError(f"no feasible (nu, b) for c={c}, gamma={gamma}: {diagnostics}")


def tail_bound(z: float, t: int, params: TailBoundParams) -> float:
    """Upper bound on P(Y - EY >= z) for a sum of ``t`` i.i.d. (nu, b) sub-exponential terms."""
    if z < 0 or t < 1:
        raise InvalidArgumentError("need z >= 0 and t >= 1")
    var = t * params.nu**2
    if z <= var / params.b:
        return math.exp(-(z * z) / (2.0 * var))
    return math.exp(-z / (2.0 * params.b))


@dataclass(frozen=True)
class TailCheck:
    z: float
    empirical: float
    bound: float
    allowance: float
    holds: bool


def empirical_tail_check(
    report: McReport,
    params: TailBoundParams,
    channel: ChannelParams,
    z_grid: Iterable[float],
    t: int | None = None,
) -> list[TailCheck]:
    """Compare P(prod >= e^z (lambda_h + gamma)^t) against the bound, with a 3-sigma MC allowance."""
    if t is not None and t != report.t:
        raise InvalidArgumentError(f"report horizon {report.t} does not match t={t}")
    if channel != report.channel:
        raise InvalidArgumentError("report was generated for a different channel")
    out = []
    for z in z_grid:
        threshold = z + report.t * math.log(channel.mean_factor)
        empirical = float(np.mean(report.samples >= threshold))
        bound = tail_bound(z, report.t, params)
        allowance = 3.0 * math.sqrt(bound * (1.0 - bound) / report.n_samples)
        out.append(TailCheck(z=float(z), empirical=empirical, bound=bound, allowance=allowance,
                             holds=empirical <= bound + allowance))
    report.exceedance = out
    return out


@dataclass(frozen=True)
class CdfCheck:
    v: float
    cdf: float
    sqrt_v: float
    holds: bool


def chi_square_cdf(v):
    """CDF of a chi-square variable with one degree of freedom."""
    return erf(np.sqrt(np.asarray(v, dtype=float) / 2.0))


def chi_square_cdf_check(v_grid: Iterable[float]) -> list[CdfCheck]:
    v = np.asarray(list(v_grid), dtype=float)
    if np.any(v <= 0):
        raise InvalidArgumentError("all v must be positive")
    cdf = chi_square_cdf(v)
    root = np.sqrt(v)
    return [CdfCheck(float(a), float(b), float(r), bool(b < r)) for a, b, r in zip(v, cdf, root)]
