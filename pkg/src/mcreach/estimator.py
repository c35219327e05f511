"""Monte Carlo heat-kernel estimators for the frozen-coefficient value function.

With the coefficient ``c`` frozen, the value at phase ``(t, x)`` is

    v = -(1/c) log E[exp(-c g(x + sigma z))],      sigma^2 = delta (T - t),

and its spatial gradient is the self-normalised importance estimate

    Dv = (x - E_w[s]) / (sigma^2 c),               w = exp(-c g(s)).

Both are evaluated in max-shifted (log-sum-exp) form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import EstimatorConfig, NumericalError, standard_normal_draws
from .systems import SystemSpec, cost_gradient


@dataclass
class FrozenCoeff:
    c: np.ndarray

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        if not np.all(np.isfinite(self.c)):
            raise NumericalError("frozen coefficient must be finite")


@dataclass
class KernelSample:
    z: np.ndarray
    y: np.ndarray
    weight: np.ndarray


@dataclass
class KernelBatch:
    """Samples and their costs for a block of evaluation points.

    ``offsets`` holds ``s_i - x`` with shape (B, N, n); ``costs`` is (B, N).
    """

    x: np.ndarray
    offsets: np.ndarray
    costs: np.ndarray
    sigma: float
    antithetic: bool

    @property
    def n_samples(self) -> int:
        return self.costs.shape[1]


def draw_kernel_batch(
    sys: SystemSpec,
    cfg: EstimatorConfig,
    t: float,
    x: np.ndarray,
    point_indices,
    iteration: int = 0,
) -> KernelBatch:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    B, n = x.shape
    N = cfg.n_samples
    sigma = cfg.sigma(t)
    samples = np.empty((B, N, n))
    for b, m in enumerate(point_indices):
        standard_normal_draws(cfg.seed, m, iteration, N, n, cfg.antithetic, out=samples[b])
    samples *= sigma
    samples += x[:, None, :]
    costs = np.asarray(sys.terminal_cost(samples), dtype=float)
    bad = ~np.isfinite(costs)
    if bad.any():
        b = int(np.argmax(bad.any(axis=1)))
        raise NumericalError(
            f"non-finite terminal cost at a kernel sample of point {point_indices[b]}",
            point_index=int(point_indices[b]),
            iteration=iteration,
        )
    samples -= x[:, None, :]
    return KernelBatch(x=x, offsets=samples, costs=costs, sigma=sigma, antithetic=cfg.antithetic)


def _shifted_weights(batch: KernelBatch, c: np.ndarray):
    gmin = batch.costs.min(axis=1)
    w = batch.costs - gmin[:, None]
    w *= -c[:, None]
    np.exp(w, out=w)
    return gmin, w, w.sum(axis=1)


def batch_value_and_gradient(batch: KernelBatch, c, with_gradient: bool = True):
    """Log-sum-exp value and importance-weighted gradient for every point.

    Weights are shifted by the smallest sampled cost, so the largest weight is
    exactly one and no overflow or underflow can occur in the normaliser.
    """
    c = np.broadcast_to(np.asarray(c, dtype=float), (batch.x.shape[0],))
    N = batch.n_samples
    gmin, w, total = _shifted_weights(batch, c)
    values = gmin - np.log(total / N) / c
    np.clip(values, gmin, batch.costs.max(axis=1), out=values)
    if not with_gradient:
        return values, None
    if batch.antithetic:
        half = N // 2
        # pairs share |offset|, so only weight differences enter
        dw = w[:, :half] - w[:, half : 2 * half]
        num = np.einsum("bi,bij->bj", dw, batch.offsets[:, :half])
    else:
        num = np.einsum("bi,bij->bj", w, batch.offsets)
    grads = -num / (batch.sigma**2 * c * total)[:, None]
    return values, grads


def _degenerate(sys: SystemSpec, t: float, x: np.ndarray, with_gradient: bool):
    v = float(sys.terminal_cost(x))
    return v, (cost_gradient(sys, x) if with_gradient else None)


def estimate_value(
    sys: SystemSpec,
    cfg: EstimatorConfig,
    t: float,
    x,
    c: float,
    point_index: int = 0,
    iteration: int = 0,
) -> tuple[float, int]:
    """Frozen-coefficient value at one phase; returns (value, samples used)."""
    if not c > 0:
        raise ValueError("coefficient must be positive")
    x = np.asarray(x, dtype=float)
    if cfg.sigma(t) == 0.0:
        return _degenerate(sys, t, x, False)[0], 0
    batch = draw_kernel_batch(sys, cfg, t, x[None, :], [point_index], iteration)
    values, _ = batch_value_and_gradient(batch, c, with_gradient=False)
    return float(values[0]), cfg.n_samples


def estimate_gradient(
    sys: SystemSpec,
    cfg: EstimatorConfig,
    t: float,
    x,
    c: float,
    point_index: int = 0,
    iteration: int = 0,
) -> np.ndarray:
    """Spatial gradient using the same substream as :func:`estimate_value`."""
    if not c > 0:
        raise ValueError("coefficient must be positive")
    x = np.asarray(x, dtype=float)
    if cfg.sigma(t) == 0.0:
        return _degenerate(sys, t, x, True)[1]
    batch = draw_kernel_batch(sys, cfg, t, x[None, :], [point_index], iteration)
    _, grads = batch_value_and_gradient(batch, c)
    if not np.all(np.isfinite(grads)):
        raise NumericalError("gradient estimate is not finite", point_index=point_index, iteration=iteration)
    return grads[0]


def kernel_samples(
    sys: SystemSpec, cfg: EstimatorConfig, t: float, x, c: float, point_index: int = 0, iteration: int = 0
) -> KernelSample:
    """Raw (z, y, exp(-c g(y))) triples for inspection."""
    x = np.asarray(x, dtype=float)
    z = standard_normal_draws(cfg.seed, point_index, iteration, cfg.n_samples, x.size, cfg.antithetic)
    y = x + cfg.sigma(t) * z
    return KernelSample(z=z, y=y, weight=np.exp(-c * sys.terminal_cost(y)))


def clip_costate(p: np.ndarray, floor: float) -> np.ndarray:
    """Lift co-states shorter than ``floor`` to length ``floor``.

    A zero co-state falls back to the first coordinate direction.
    """
    p = np.array(p, dtype=float)
    norm = np.linalg.norm(p, axis=-1, keepdims=True)
    short = norm < floor
    if floor > 0 and short.any():
        fallback = np.zeros(p.shape[-1])
        fallback[0] = 1.0
        with np.errstate(invalid="ignore", divide="ignore"):
            scaled = np.where(norm > 0, p * (floor / np.where(norm > 0, norm, 1.0)), floor * fallback)
        p = np.where(short, scaled, p)
    return p


def update_coefficient(sys: SystemSpec, cfg: EstimatorConfig, t: float, x, grad):
    """c = 2 H(t, x, p) / (delta |p|^2), clipped to [c_min, c_max].

    Vectorised over leading axes of ``x`` and ``grad``.
    """
    p = clip_costate(grad, cfg.grad_floor)
    norm2 = np.sum(p * p, axis=-1)
    if cfg.grad_floor == 0:
        # floor disabled: a zero co-state still needs a direction
        p = np.where((norm2 == 0)[..., None], clip_costate(p, 1.0), p)
        norm2 = np.sum(p * p, axis=-1)
    h = np.asarray(sys.hamiltonian(t, np.asarray(x, dtype=float), p), dtype=float)
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        # dividing by delta last keeps c == 1/delta bitwise when H = |p|^2 / 2
        raw = (2.0 * h / norm2) / cfg.delta
    raw = np.where(np.isnan(raw), cfg.c_min, raw)
    out = np.clip(raw, cfg.c_min, cfg.c_max)
    return float(out) if out.ndim == 0 else out


def raw_coefficient(sys: SystemSpec, cfg: EstimatorConfig, t: float, x, grad):
    """Unclipped 2 H / (delta |p|^2) after the gradient floor."""
    p = clip_costate(grad, cfg.grad_floor)
    h = np.asarray(sys.hamiltonian(t, np.asarray(x, dtype=float), p), dtype=float)
    return (2.0 * h / np.sum(p * p, axis=-1)) / cfg.delta


def required_samples(c: float, g_min: float, g_max: float, eps: float) -> int:
    """Sample size guaranteeing P(|v_hat - v| >= eps) <= exp(-c g_max).

    Raises OverflowError when exp(-c g_max) underflows.
    """
    if not (c > 0 and eps > 0) or g_min > g_max:
        raise ValueError("need c > 0, eps > 0 and g_min <= g_max")
    alpha = math.exp(-c * g_max)
    if alpha == 0.0:
        raise OverflowError(
            f"exp(-c * g_max) underflows for c * g_max = {c * g_max:.3g}; "
            "rescale the terminal cost or reduce c"
        )
    beta = math.exp(-c * g_min)
    n = (beta - alpha) ** 2 / (2 * alpha**2 * (-math.expm1(-c * eps)) ** 2) * math.log(2 / alpha)
    if not math.isfinite(n):
        raise OverflowError("required sample size overflows; rescale the terminal cost or reduce c")
    return max(1, math.ceil(n))


def hoeffding_bound(N: int, mu: float, alpha: float, beta: float, c: float, eps: float) -> float:
    """Tail bound 2 exp(-2 N mu^2 (1 - e^{-c eps})^2 / (beta - alpha)^2), capped at 1."""
    if N < 1 or not alpha < beta:
        raise ValueError("need N >= 1 and alpha < beta")
    gap = -math.expm1(-c * eps)
    return min(1.0, 2.0 * math.exp(-2.0 * N * mu**2 * gap**2 / (beta - alpha) ** 2))
