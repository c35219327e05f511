"""Benchmark systems: Hamiltonians, terminal costs and domain bounds.

All callables are vectorised over leading axes: states and co-states have
shape ``(..., n)`` and evaluators return shape ``(...)``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .core import ConfigError

Hamiltonian = Callable[[float, np.ndarray, np.ndarray], np.ndarray]
Cost = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class SystemSpec:
    """A benchmark system.

    ``hamiltonian_sign`` fixes the inviscid backward-time PDE used by the grid
    reference: ``v_tau + hamiltonian_sign * H(x, Dv) = 0``.  ``terminal_grad``
    is an analytic gradient of the terminal cost, when one is known.
    """

    name: str
    n: int
    hamiltonian: Hamiltonian
    terminal_cost: Cost
    bounds: tuple[tuple[float, float], ...]
    params: Mapping[str, float] = field(default_factory=dict)
    avoid_cost: Cost | None = None
    terminal_grad: Callable[[np.ndarray], np.ndarray] | None = None
    periodic_axes: tuple[int, ...] = ()
    hamiltonian_sign: int = 1
    cost_range: tuple[float, float] | None = None
    homogeneous_degree: int = 1


def _radial_grad(x: np.ndarray, axes: Sequence[int]) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x[..., list(axes)]
    r = np.linalg.norm(pos, axis=-1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        unit = np.where(r > 0, pos / np.where(r > 0, r, 1.0), 0.0)
    out[..., list(axes)] = unit
    return out


def quadratic_system(n: int = 1) -> SystemSpec:
    """H = |p|^2 / 2 with target |x|^2 - 1: the exact Cole-Hopf case."""
    if n < 1:
        raise ConfigError("dimension must be >= 1", key="system.n")

    def hamiltonian(t, x, p):
        p = np.asarray(p, dtype=float)
        return 0.5 * np.sum(p * p, axis=-1)

    def terminal_cost(x):
        x = np.asarray(x, dtype=float)
        return np.sum(x * x, axis=-1) - 1.0

    def terminal_grad(x):
        return 2.0 * np.asarray(x, dtype=float)

    return SystemSpec(
        name="quadratic",
        n=n,
        hamiltonian=hamiltonian,
        terminal_cost=terminal_cost,
        terminal_grad=terminal_grad,
        bounds=tuple((-2.0, 2.0) for _ in range(n)),
        homogeneous_degree=2,
    )


def bounded_quadratic_system(n: int = 1) -> SystemSpec:
    """Quadratic Hamiltonian with the cost min(1, |x|^2), bounded in [0, 1].

    Used by the concentration experiments, which need a bounded cost with a
    closed-form Gaussian expectation.
    """
    base = quadratic_system(n)

    def terminal_cost(x):
        x = np.asarray(x, dtype=float)
        return np.minimum(1.0, np.sum(x * x, axis=-1))

    def terminal_grad(x):
        x = np.asarray(x, dtype=float)
        inside = np.sum(x * x, axis=-1, keepdims=True) < 1.0
        return np.where(inside, 2.0 * x, 0.0)

    return dataclasses.replace(
        base,
        name="bounded_quadratic",
        terminal_cost=terminal_cost,
        terminal_grad=terminal_grad,
        cost_range=(0.0, 1.0),
    )


def rockets_system(a: float = 64.0, g_grav: float = 32.0, capture_radius: float = 1.5) -> SystemSpec:
    """Two-rocket pursuit-evasion game in relative (x, z, theta) coordinates."""
    if not (a > 0 and g_grav > 0 and capture_radius > 0):
        raise ConfigError("rockets parameters must be positive", key="system.params")

    def hamiltonian(t, x, p):
        x = np.asarray(x, dtype=float)
        p = np.asarray(p, dtype=float)
        xr, theta = x[..., 0], x[..., 2]
        p1, p2, p3 = p[..., 0], p[..., 1], p[..., 2]
        return -(
            a * p1 * np.cos(theta)
            + p2 * (a + a * np.sin(theta) - g_grav)
            - np.abs(p1 * xr + p3)
            - np.abs(p2 * xr - p3)
        )

    def terminal_cost(x):
        x = np.asarray(x, dtype=float)
        return np.hypot(x[..., 0], x[..., 1]) - capture_radius

    return SystemSpec(
        name="rockets",
        n=3,
        hamiltonian=hamiltonian,
        terminal_cost=terminal_cost,
        terminal_grad=lambda x: _radial_grad(x, (0, 1)),
        bounds=((-100.0, 100.0), (-100.0, 100.0), (-np.pi / 2, np.pi / 2)),
        params={"a": a, "g_grav": g_grav, "capture_radius": capture_radius},
    )


def dubins_system(v_speed: float = 1.0, w_turn: float = 1.0, capture_radius: float = 1.5) -> SystemSpec:
    """Two Dubins cars in relative coordinates (Merz's pursuit-evasion game).

    With the default unit speed and turn rate this is exactly
    ``p1 (cos x3 - 1) - p2 sin x3 + |p1 x2 - p2 x1 - p3| - |p3|``.
    """
    if not (v_speed > 0 and w_turn > 0 and capture_radius > 0):
        raise ConfigError("dubins parameters must be positive", key="system.params")
    v, w = v_speed, w_turn

    def hamiltonian(t, x, p):
        x = np.asarray(x, dtype=float)
        p = np.asarray(p, dtype=float)
        x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
        p1, p2, p3 = p[..., 0], p[..., 1], p[..., 2]
        return (
            p1 * (v * np.cos(x3) - v)
            - p2 * (v * np.sin(x3))
            + w * np.abs(p1 * x2 - p2 * x1 - p3)
            - w * np.abs(p3)
        )

    def terminal_cost(x):
        x = np.asarray(x, dtype=float)
        return np.hypot(x[..., 0], x[..., 1]) - capture_radius

    return SystemSpec(
        name="dubins",
        n=3,
        hamiltonian=hamiltonian,
        terminal_cost=terminal_cost,
        terminal_grad=lambda x: _radial_grad(x, (0, 1)),
        bounds=((-5.0, 5.0), (-5.0, 5.0), (-np.pi, np.pi)),
        periodic_axes=(2,),
        params={"v_speed": v_speed, "w_turn": w_turn, "capture_radius": capture_radius},
    )


def double_integrator_system(target_radius: float = 0.1) -> SystemSpec:
    """x1' = x2, x2' = u with |u| <= 1; target is a small ball at the origin.

    The Hamiltonian is the minimising one, ``p1 x2 - |p2|``, so the grid
    reference propagates it with ``v_tau = H``.
    """
    if not target_radius > 0:
        raise ConfigError("target_radius must be positive", key="system.params")

    def hamiltonian(t, x, p):
        x = np.asarray(x, dtype=float)
        p = np.asarray(p, dtype=float)
        return p[..., 0] * x[..., 1] - np.abs(p[..., 1])

    def terminal_cost(x):
        x = np.asarray(x, dtype=float)
        return np.hypot(x[..., 0], x[..., 1]) - target_radius

    return SystemSpec(
        name="double_integrator",
        n=2,
        hamiltonian=hamiltonian,
        terminal_cost=terminal_cost,
        terminal_grad=lambda x: _radial_grad(x, (0, 1)),
        bounds=((-1.0, 1.0), (-1.0, 1.0)),
        params={"target_radius": target_radius},
        hamiltonian_sign=-1,
    )


N_AGENTS = 15


def multiagent_system(
    a: Sequence[float] | None = None,
    capture_radius: float = 1.5,
    position_bound: float = 20.0,
) -> SystemSpec:
    """Fourteen pursuers and one evader (agent 15), unicycle dynamics, n = 45."""
    speeds = np.ones(N_AGENTS) if a is None else np.asarray(a, dtype=float)
    if speeds.shape != (N_AGENTS,):
        raise ConfigError(f"multiagent needs {N_AGENTS} speeds, got {speeds.size}", key="system.params.a")
    if np.any(speeds <= 0) or not capture_radius > 0:
        raise ConfigError("speeds and capture radius must be positive", key="system.params")

    def hamiltonian(t, x, p):
        x = np.asarray(x, dtype=float)
        p = np.asarray(p, dtype=float)
        xs = x.reshape(x.shape[:-1] + (N_AGENTS, 3))
        ps = p.reshape(p.shape[:-1] + (N_AGENTS, 3))
        theta = xs[..., 2]
        drift = np.sum(speeds * (ps[..., 0] * np.cos(theta) + ps[..., 1] * np.sin(theta)), axis=-1)
        turns = np.abs(ps[..., N_AGENTS - 1, 2]) - np.sum(np.abs(ps[..., : N_AGENTS - 1, 2]), axis=-1)
        return drift + turns

    def _dist(x):
        xs = np.asarray(x, dtype=float).reshape(np.shape(x)[:-1] + (N_AGENTS, 3))
        diff = xs[..., : N_AGENTS - 1, :2] - xs[..., N_AGENTS - 1 : N_AGENTS, :2]
        return np.sqrt(np.sum(diff * diff, axis=-1)), diff

    def terminal_cost(x):
        # in-place arithmetic keeps the temporaries below the sample array size
        x = np.asarray(x, dtype=float)
        xs = x.reshape(x.shape[:-1] + (N_AGENTS, 3))
        diff = xs[..., : N_AGENTS - 1, :2] - xs[..., N_AGENTS - 1 : N_AGENTS, :2]
        np.square(diff, out=diff)
        d2 = diff.sum(axis=-1)
        del diff
        return np.sqrt(d2.min(axis=-1)) - capture_radius

    def terminal_grad(x):
        x = np.asarray(x, dtype=float)
        d, diff = _dist(x)
        near = np.argmin(d, axis=-1)
        out = np.zeros(x.shape[:-1] + (N_AGENTS, 3))
        dn = np.take_along_axis(d, near[..., None], axis=-1)
        vec = np.take_along_axis(diff, near[..., None, None], axis=-2)[..., 0, :]
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = np.where(dn > 0, vec / np.where(dn > 0, dn, 1.0), 0.0)
        flat = out.reshape(-1, N_AGENTS, 3)
        flat[np.arange(flat.shape[0]), near.reshape(-1), :2] = unit.reshape(-1, 2)
        flat[:, N_AGENTS - 1, :2] = -unit.reshape(-1, 2)
        return flat.reshape(x.shape)

    bounds = []
    for _ in range(N_AGENTS):
        bounds += [(-position_bound, position_bound)] * 2 + [(-np.pi, np.pi)]
    return SystemSpec(
        name="multiagent",
        n=3 * N_AGENTS,
        hamiltonian=hamiltonian,
        terminal_cost=terminal_cost,
        terminal_grad=terminal_grad,
        bounds=tuple(bounds),
        periodic_axes=tuple(range(2, 3 * N_AGENTS, 3)),
        params={"capture_radius": capture_radius, **{f"a{i + 1}": float(s) for i, s in enumerate(speeds)}},
    )


def speed_regime(evader: float, pursuers: float) -> list[float]:
    return [float(pursuers)] * (N_AGENTS - 1) + [float(evader)]


def with_disk_obstacle(sys: SystemSpec, center: Sequence[float], radius: float, axes=(0, 1)) -> SystemSpec:
    """Attach an avoid cost that is positive inside a disk over ``axes``."""
    c = np.asarray(center, dtype=float)
    axes = tuple(axes)

    def avoid_cost(x):
        x = np.asarray(x, dtype=float)
        d = x[..., list(axes)] - c
        return radius - np.sqrt(np.sum(d * d, axis=-1))

    return dataclasses.replace(sys, avoid_cost=avoid_cost)


def _multiagent_from_params(**params) -> SystemSpec:
    params = dict(params)
    if "a" in params:
        speeds = params.pop("a")
    elif "evader_speed" in params or "pursuer_speed" in params:
        speeds = speed_regime(params.pop("evader_speed", 1.0), params.pop("pursuer_speed", 1.0))
    else:
        speeds = None
    return multiagent_system(a=speeds, **params)


REGISTRY: dict[str, Callable[..., SystemSpec]] = {
    "quadratic": quadratic_system,
    "bounded_quadratic": bounded_quadratic_system,
    "rockets": rockets_system,
    "dubins": dubins_system,
    "double_integrator": double_integrator_system,
    "multiagent": _multiagent_from_params,
}


def get_system(name: str, **params) -> SystemSpec:
    try:
        factory = REGISTRY[name]
    except KeyError:
        valid = ", ".join(sorted(REGISTRY))
        raise ConfigError(f"unknown system {name!r}; valid systems: {valid}", key="system.name") from None
    try:
        return factory(**params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for system {name!r}: {exc}", key="system.params") from None


def cost_gradient(sys: SystemSpec, x: np.ndarray) -> np.ndarray:
    """Analytic terminal-cost gradient, else central differences."""
    x = np.asarray(x, dtype=float)
    if sys.terminal_grad is not None:
        return np.asarray(sys.terminal_grad(x), dtype=float)
    h = 1e-4 * (1.0 + np.linalg.norm(x, axis=-1, keepdims=True))
    grad = np.empty_like(x)
    for i in range(sys.n):
        e = np.zeros(sys.n)
        e[i] = 1.0
        grad[..., i] = (sys.terminal_cost(x + h * e) - sys.terminal_cost(x - h * e)) / (2 * h[..., 0])
    return grad
