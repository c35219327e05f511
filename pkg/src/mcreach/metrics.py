"""Error metrics, concentration experiments and memory accounting."""

from __future__ import annotations

import math
import time
import tracemalloc
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import erf
from scipy.stats import norm

from .core import ConfigError, EstimatorConfig, ValueField
from .estimator import batch_value_and_gradient, draw_kernel_batch, hoeffding_bound
from .systems import SystemSpec


class UndefinedRelativeError(ArithmeticError):
    """Relative error requested against an identically zero reference."""


def error_metrics(mc: ValueField | np.ndarray, ref) -> tuple[float, float]:
    """(max |mc - ref|, ||mc - ref||_2 / ||ref||_2)."""
    a = np.asarray(mc.values if isinstance(mc, ValueField) else mc, dtype=float).ravel()
    b = np.asarray(ref, dtype=float).ravel()
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.size} values vs {b.size} reference values")
    diff = a - b
    l_inf = float(np.max(np.abs(diff))) if diff.size else 0.0
    denom = float(np.linalg.norm(b))
    if denom == 0.0:
        raise UndefinedRelativeError("reference field is identically zero; relative L2 error is undefined")
    return l_inf, float(np.linalg.norm(diff) / denom)


def comparison_record(system: str, slice_label, cfg: EstimatorConfig, l_inf: float, l2_rel: float,
                      wall_ms: float, **extra) -> dict:
    return {
        "system": system,
        "slice": slice_label,
        "N": cfg.n_samples,
        "delta": cfg.delta,
        "l_inf": l_inf,
        "l2_rel": l2_rel,
        "wall_ms": wall_ms,
        **extra,
    }


# closed-form Gaussian expectations ------------------------------------------

def quadratic_partition(x: float, sigma: float, c: float) -> float:
    """E[exp(-c (Y^2 - 1))] for Y ~ N(x, sigma^2)."""
    a = 1.0 + 2.0 * c * sigma**2
    return math.exp(c - c * x * x / a) / math.sqrt(a)


def quadratic_exact_value(x: float, sigma: float, c: float) -> float:
    """-(1/c) log E[exp(-c (Y^2 - 1))], Y ~ N(x, sigma^2)."""
    a = 1.0 + 2.0 * c * sigma**2
    return x * x / a - 1.0 + math.log(a) / (2.0 * c)


def bounded_quadratic_partition(x: float, sigma: float, c: float) -> float:
    """E[exp(-c min(1, Y^2))] for Y ~ N(x, sigma^2)."""
    s2 = sigma**2
    A = c + 1.0 / (2 * s2)
    m = x / (2 * s2 * A)
    K = x * x / (2 * s2) - A * m * m
    root = math.sqrt(A)
    inner = math.exp(-K) / math.sqrt(2 * math.pi * s2) * 0.5 * math.sqrt(math.pi / A)
    inner *= erf(root * (1 - m)) - erf(root * (-1 - m))
    tails = norm.cdf((-1 - x) / sigma) + norm.sf((1 - x) / sigma)
    return float(inner + math.exp(-c) * tails)


@dataclass
class ConcentrationResult:
    n_samples: int
    trials: int
    eps: float
    c: float
    reference: float
    empirical_rate: float
    bound: float
    alpha: float
    binomial_se: float
    passed: bool
    rate_vs_alpha_passed: bool
    errors: np.ndarray = field(repr=False, default=None)

    def record(self) -> dict:
        return {
            "N": self.n_samples,
            "trials": self.trials,
            "eps": self.eps,
            "c": self.c,
            "reference": self.reference,
            "empirical_rate": self.empirical_rate,
            "bound": self.bound,
            "alpha": self.alpha,
            "binomial_se": self.binomial_se,
            "pass": self.passed,
        }


def concentration_experiment(
    sys: SystemSpec,
    cfg: EstimatorConfig,
    point,
    c: float,
    eps: float,
    trials: int,
    t: float = 0.0,
    reference: float | None = None,
) -> ConcentrationResult:
    """Empirical P(|v_hat - v| >= eps) over independent trials vs. the tail bound.

    Trial i uses the RNG substream of point index i.  When ``reference`` is
    not given, the closed form is used for the 1-D quadratic systems and an
    estimate with 100x the samples otherwise.
    """
    if trials < 100:
        raise ConfigError("concentration experiments need at least 100 trials", key="concentration.trials")
    if not c > 0 or eps < 0:
        raise ConfigError("need c > 0 and eps >= 0", key="concentration")
    if sys.cost_range is None:
        raise ConfigError(f"system {sys.name} declares no cost range", key="system.name")
    x = np.atleast_1d(np.asarray(point, dtype=float))
    sigma = cfg.sigma(t)
    g_min, g_max = sys.cost_range
    if reference is None:
        reference = _reference_value(sys, cfg, x, sigma, c, t)
    xs = np.broadcast_to(x, (trials, x.size))
    v_hat = np.empty(trials)
    step = max(1, 2_000_000 // (cfg.n_samples * x.size))
    for s in range(0, trials, step):
        idx = np.arange(s, min(s + step, trials))
        batch = draw_kernel_batch(sys, cfg, t, xs[idx], idx, 0)
        v_hat[idx], _ = batch_value_and_gradient(batch, c, with_gradient=False)
    errors = np.abs(v_hat - reference)
    rate = float(np.mean(errors >= eps))
    alpha, beta = math.exp(-c * g_max), math.exp(-c * g_min)
    mu = math.exp(-c * reference)
    bound = hoeffding_bound(cfg.n_samples, mu, alpha, beta, c, eps)
    se = math.sqrt(bound * (1 - bound) / trials)
    se_alpha = math.sqrt(alpha * (1 - alpha) / trials)
    return ConcentrationResult(
        n_samples=cfg.n_samples, trials=trials, eps=eps, c=c, reference=float(reference),
        empirical_rate=rate, bound=bound, alpha=alpha, binomial_se=se,
        passed=rate <= bound + 3 * se,
        rate_vs_alpha_passed=rate <= alpha + 3 * se_alpha,
        errors=errors,
    )


def _reference_value(sys, cfg, x, sigma, c, t):
    if x.size == 1 and sys.name == "bounded_quadratic":
        return -math.log(bounded_quadratic_partition(float(x[0]), sigma, c)) / c
    if x.size == 1 and sys.name == "quadratic":
        return quadratic_exact_value(float(x[0]), sigma, c)
    big = EstimatorConfig(
        delta=cfg.delta, horizon=cfg.horizon, n_samples=cfg.n_samples * 100,
        seed=cfg.seed + 1, antithetic=cfg.antithetic,
    )
    batch = draw_kernel_batch(sys, big, t, x[None, :], [0], 0)
    return float(batch_value_and_gradient(batch, c, with_gradient=False)[0][0])


# memory ---------------------------------------------------------------------

@dataclass
class MemoryReport:
    samples_bytes: int
    state_bytes: int
    breakdown: dict[str, int]
    peak_bytes: int | None = None

    @property
    def total_bytes(self) -> int:
        return self.samples_bytes + self.state_bytes

    def ratio_to_samples(self) -> float | None:
        if self.peak_bytes is None or self.samples_bytes == 0:
            return None
        return self.peak_bytes / self.samples_bytes


def memory_report(n_samples: int | EstimatorConfig, n: int, M: int) -> MemoryReport:
    """Analytic bytes: N n 8 for the sample block plus M (n + 2) 8 for the state.

    State is the value, coefficient and n gradient components per point.
    """
    N = n_samples.n_samples if isinstance(n_samples, EstimatorConfig) else int(n_samples)
    samples = N * n * 8
    state = M * (n + 2) * 8
    return MemoryReport(
        samples_bytes=samples,
        state_bytes=state,
        breakdown={
            "samples": samples,
            "costs_and_weights": 2 * N * 8,
            "values": M * 8,
            "coefficients": M * 8,
            "gradients": M * n * 8,
        },
    )


def measure_peak(fn: Callable[[], object]) -> tuple[object, int, float]:
    """Run ``fn`` under tracemalloc; returns (result, peak bytes, wall ms)."""
    was_tracing = tracemalloc.is_tracing()
    if not was_tracing:
        tracemalloc.start()
    tracemalloc.reset_peak()
    base, _ = tracemalloc.get_traced_memory()
    start = time.perf_counter()
    try:
        result = fn()
        _, peak = tracemalloc.get_traced_memory()
    finally:
        if not was_tracing:
            tracemalloc.stop()
    return result, peak - base, 1000.0 * (time.perf_counter() - start)
