"""Dense-grid Lax-Friedrichs level-set reference for 2-D and 3-D systems.

Solves the inviscid backward-time tube problem

    v_tau + s H(x, Dv) = 0,   v(0, x) = g(x),   v <- min(v, v_prev),

with ``s = sys.hamiltonian_sign``, first-order Lax-Friedrichs fluxes and
forward Euler steps.  Intended only as a reference for error metrics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .core import ConfigError, EvalSet
from .systems import SystemSpec


class UnsupportedDimensionError(ConfigError):
    """The grid reference only handles n in {2, 3}."""


@dataclass
class GridSolution:
    axes: tuple[np.ndarray, ...]
    values: np.ndarray
    t: float
    dissipation: np.ndarray
    periodic_axes: tuple[int, ...] = ()
    steps: int = 0


def make_grid_axes(sys: SystemSpec, count: int = 81) -> tuple[np.ndarray, ...]:
    """Uniform axes over the system bounds; periodic axes omit the right end."""
    axes = []
    for i, (lo, hi) in enumerate(sys.bounds):
        endpoint = i not in sys.periodic_axes
        axes.append(np.linspace(lo, hi, count, endpoint=endpoint))
    return tuple(axes)


def _ghost_pad(v: np.ndarray, axis: int, periodic: bool) -> np.ndarray:
    if periodic:
        return np.concatenate([np.take(v, [-1], axis), v, np.take(v, [0], axis)], axis=axis)
    first, second = np.take(v, [0], axis), np.take(v, [1], axis)
    last, prev = np.take(v, [-1], axis), np.take(v, [-2], axis)
    return np.concatenate([2 * first - second, v, 2 * last - prev], axis=axis)


def _one_sided(v: np.ndarray, axis: int, dx: float, periodic: bool):
    pad = _ghost_pad(v, axis, periodic)
    n = v.shape[axis]
    mid = np.take(pad, np.arange(1, n + 1), axis)
    left = np.take(pad, np.arange(0, n), axis)
    right = np.take(pad, np.arange(2, n + 2), axis)
    return (mid - left) / dx, (right - mid) / dx


def _partials(sys: SystemSpec, x: np.ndarray, p: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """|dH/dp_i| by central differences, shape p.shape."""
    out = np.empty_like(p)
    for i in range(p.shape[-1]):
        step = np.zeros(p.shape[-1])
        step[i] = h * (1.0 + np.max(np.abs(p)))
        out[..., i] = np.abs(sys.hamiltonian(0.0, x, p + step) - sys.hamiltonian(0.0, x, p - step)) / (2 * step[i])
    return out


def solve_grid_brt(
    sys: SystemSpec,
    axes: tuple[np.ndarray, ...] | None = None,
    t_final: float = 1.0,
    cfl: float = 0.9,
    max_steps: int = 1_000_000,
    refresh: int = 10,
) -> GridSolution:
    """Integrate the tube problem to horizon ``t_final`` on a dense grid.

    The dissipation coefficient per axis is the running maximum over the grid
    of the finite-difference ``|dH/dp_i|``, sampled every step at the averaged
    gradient and every ``refresh`` steps at both one-sided gradients.
    """
    if sys.n not in (2, 3):
        raise UnsupportedDimensionError(
            f"grid reference supports n in {{2, 3}}, system {sys.name} has n = {sys.n}", key="system.n"
        )
    if not 0 < cfl <= 0.9:
        raise ConfigError("cfl must lie in (0, 0.9]", key="compare.cfl")
    if not t_final >= 0:
        raise ConfigError("t_final must be non-negative", key="compare.t_final")
    axes = make_grid_axes(sys) if axes is None else tuple(np.asarray(a, dtype=float) for a in axes)
    if len(axes) != sys.n:
        raise ConfigError("one axis per state dimension is required", key="compare.axes")
    if any(len(a) < 21 for a in axes):
        raise ConfigError("grid reference needs at least 21 points per axis", key="compare.resolution")
    dx = np.array([a[1] - a[0] for a in axes])
    periodic = [i in sys.periodic_axes for i in range(sys.n)]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    v = np.asarray(sys.terminal_cost(mesh), dtype=float)
    s = float(sys.hamiltonian_sign)
    tau, steps = 0.0, 0
    alpha = np.zeros(sys.n)
    while tau < t_final and steps < max_steps:
        minus = np.empty(v.shape + (sys.n,))
        plus = np.empty_like(minus)
        for i in range(sys.n):
            minus[..., i], plus[..., i] = _one_sided(v, i, dx[i], periodic[i])
        avg = 0.5 * (minus + plus)
        # one-sided samples are refreshed every few steps; alpha never decreases,
        # which only adds dissipation
        probes = (avg, minus, plus) if steps % refresh == 0 else (avg,)
        for p in probes:
            alpha = np.maximum(alpha, _partials(sys, mesh, p).reshape(-1, sys.n).max(axis=0))
        rate = float(np.sum(alpha / dx))
        dt = t_final - tau if rate == 0 else min(cfl / rate, t_final - tau)
        ham = s * sys.hamiltonian(0.0, mesh, avg) - 0.5 * np.sum(alpha * (plus - minus), axis=-1)
        v = np.minimum(v, v - dt * ham)
        tau += dt
        steps += 1
        if rate == 0:
            break
    if not np.all(np.isfinite(v)):
        raise ConfigError("grid reference produced non-finite values", key="compare")
    return GridSolution(
        axes=axes, values=v, t=float(t_final), dissipation=alpha,
        periodic_axes=tuple(sys.periodic_axes), steps=steps,
    )


def sample_on(points: EvalSet | np.ndarray, grid: GridSolution) -> tuple[np.ndarray, np.ndarray]:
    """Multilinear interpolation of the grid solution at ``points``.

    Returns ``(values, outside)``.  Points outside the grid hull are clamped to
    it (nearest cell) and flagged in ``outside``.
    """
    pts = np.array(points.points if isinstance(points, EvalSet) else points, dtype=float, ndmin=2)
    axes = list(grid.axes)
    vals = grid.values
    outside = np.zeros(len(pts), dtype=bool)
    for i, ax in enumerate(axes):
        if i in grid.periodic_axes:
            # close the period so interpolation wraps around the seam
            period = len(ax) * (ax[1] - ax[0])
            axes[i] = np.append(ax, ax[0] + period)
            vals = np.concatenate([vals, np.take(vals, [0], i)], axis=i)
            pts[:, i] = ax[0] + np.mod(pts[:, i] - ax[0], period)
        else:
            lo, hi = ax[0], ax[-1]
            out = (pts[:, i] < lo) | (pts[:, i] > hi)
            outside |= out
            pts[:, i] = np.clip(pts[:, i], lo, hi)
    interp = RegularGridInterpolator(tuple(axes), vals, method="linear")
    return interp(pts), outside
