"""Shared domain types, evaluation sets and the RNG contract."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np


class ConfigError(ValueError):
    """Invalid configuration or input shape; ``key`` names the offending item."""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


class NumericalError(ArithmeticError):
    """Non-finite quantity encountered during estimation."""

    def __init__(self, message: str, point_index: int | None = None, iteration: int | None = None):
        super().__init__(message)
        self.point_index = point_index
        self.iteration = iteration


class ContractError(ValueError):
    """An operation was called on inputs outside its contract."""


@dataclass(frozen=True)
class Phase:
    t: float
    x: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if not np.all(np.isfinite(x)):
            raise ConfigError("phase state must be finite", key="x")
        if self.t < 0:
            raise ConfigError("phase time must be non-negative", key="t")
        object.__setattr__(self, "x", x)


@dataclass(frozen=True)
class EstimatorConfig:
    """Monte Carlo estimator settings.

    ``common_random_numbers`` keeps the RNG iteration index fixed across Picard
    iterations; turning it off redraws samples every iteration.  ``chunk_points``
    caps how many evaluation points are vectorised together (0 picks a value
    from a ~32 MB sample budget).
    """

    delta: float = 0.08
    horizon: float = 1.0
    n_samples: int = 14000
    seed: int = 0
    antithetic: bool = True
    grad_floor: float = 1e-3
    coeff_bounds: tuple[float, float] = (0.05, 20.0)
    common_random_numbers: bool = True
    chunk_points: int = 0

    def __post_init__(self):
        object.__setattr__(self, "coeff_bounds", tuple(float(c) for c in self.coeff_bounds))
        if not self.delta > 0:
            raise ConfigError("delta must be > 0", key="estimator.delta")
        if not self.horizon > 0:
            raise ConfigError("horizon must be > 0", key="estimator.horizon")
        if int(self.n_samples) != self.n_samples or self.n_samples < 1:
            raise ConfigError("n_samples must be an integer >= 1", key="estimator.n_samples")
        if self.grad_floor < 0:
            raise ConfigError("grad_floor must be >= 0", key="estimator.grad_floor")
        if len(self.coeff_bounds) != 2:
            raise ConfigError("coeff_bounds must be (c_min, c_max)", key="estimator.coeff_bounds")
        c_min, c_max = self.coeff_bounds
        if not c_min > 0:
            raise ConfigError("c_min must be > 0", key="estimator.coeff_bounds")
        if c_min > c_max:
            raise ConfigError("c_min must be <= c_max", key="estimator.coeff_bounds")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must fit in 64 bits", key="estimator.seed")
        if self.chunk_points < 0:
            raise ConfigError("chunk_points must be >= 0", key="estimator.chunk_points")

    @property
    def c_min(self) -> float:
        return self.coeff_bounds[0]

    @property
    def c_max(self) -> float:
        return self.coeff_bounds[1]

    def sigma(self, t: float) -> float:
        """Kernel standard deviation sqrt(delta * (T - t))."""
        return float(np.sqrt(self.delta * max(self.horizon - t, 0.0)))

    def points_per_chunk(self, n: int) -> int:
        if self.chunk_points:
            return self.chunk_points
        budget = 4_000_000  # float64 entries
        return max(1, budget // (self.n_samples * n))

    def snapshot(self) -> dict:
        return {
            "delta": self.delta,
            "horizon": self.horizon,
            "n_samples": self.n_samples,
            "seed": self.seed,
            "antithetic": self.antithetic,
            "grad_floor": self.grad_floor,
            "coeff_bounds": list(self.coeff_bounds),
            "common_random_numbers": self.common_random_numbers,
        }


@dataclass(frozen=True)
class GridLayout:
    """Structure of an EvalSet produced by :func:`make_eval_grid`."""

    shape: tuple[int, ...]
    free_axes: tuple[int, ...]
    coords: tuple[np.ndarray, ...]  # one coordinate array per free axis
    frozen: Mapping[int, float] = field(default_factory=dict)


@dataclass(frozen=True)
class EvalSet:
    points: np.ndarray  # (M, n)
    labels: np.ndarray | None = None
    layout: GridLayout | None = None

    def __post_init__(self):
        pts = np.array(self.points, dtype=float, ndmin=2)
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise ConfigError("an evaluation set needs at least one point", key="eval")
        if not np.all(np.isfinite(pts)):
            raise ConfigError("evaluation points must be finite", key="eval")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def check_inside(self, bounds: Sequence[tuple[float, float]]) -> None:
        b = np.asarray(bounds, dtype=float)
        if b.shape != (self.dim, 2):
            raise ConfigError(f"bounds have {len(b)} axes, points have {self.dim}", key="eval")
        outside = np.any((self.points < b[:, 0]) | (self.points > b[:, 1]), axis=1)
        if outside.any():
            m = int(np.argmax(outside))
            raise ConfigError(f"evaluation point {m} lies outside the domain bounds", key="eval")


@dataclass
class ValueField:
    eval_set: EvalSet
    t: float
    values: np.ndarray
    gradients: np.ndarray | None = None
    meta: dict = field(default_factory=dict)


def make_eval_grid(
    bounds: Sequence[tuple[float, float]],
    counts: Sequence[int],
    frozen_axes: Mapping[int, float] | None = None,
    n: int | None = None,
) -> EvalSet:
    """Cartesian product grid over the free axes, frozen axes held constant.

    ``counts`` lists one entry per free axis in increasing axis order.  Points
    are row-major with the last free axis varying fastest.
    """
    frozen = {int(k): float(v) for k, v in (frozen_axes or {}).items()}
    dim = len(bounds)
    if n is not None and dim != n:
        raise ConfigError(f"bounds describe {dim} axes but the system has {n}", key="eval.bounds")
    if any(a < 0 or a >= dim for a in frozen):
        raise ConfigError("frozen axis index out of range", key="eval.frozen")
    free = tuple(a for a in range(dim) if a not in frozen)
    if len(counts) != len(free):
        raise ConfigError(
            f"{len(counts)} counts given for {len(free)} free axes", key="eval.counts"
        )
    coords = []
    for axis, count in zip(free, counts):
        lo, hi = bounds[axis]
        if int(count) < 1:
            raise ConfigError("grid counts must be >= 1", key="eval.counts")
        if count > 1 and not lo < hi:
            raise ConfigError(f"axis {axis}: lo must be < hi", key="eval.bounds")
        coords.append(np.linspace(lo, hi, int(count)) if count > 1 else np.array([float(lo)]))
    rows = []
    for combo in itertools.product(*coords):
        pt = np.empty(dim)
        for axis, val in zip(free, combo):
            pt[axis] = val
        for axis, val in frozen.items():
            pt[axis] = val
        rows.append(pt)
    layout = GridLayout(
        shape=tuple(len(c) for c in coords),
        free_axes=free,
        coords=tuple(coords),
        frozen=frozen,
    )
    return EvalSet(points=np.array(rows), labels=np.array(rows)[:, list(free)], layout=layout)


def random_eval_set(bounds: Sequence[tuple[float, float]], count: int, seed: int = 0) -> EvalSet:
    """Uniform random points inside ``bounds`` (deterministic in ``seed``)."""
    b = np.asarray(bounds, dtype=float)
    rng = np.random.default_rng(seed)
    pts = b[:, 0] + (b[:, 1] - b[:, 0]) * rng.random((int(count), len(b)))
    return EvalSet(points=pts)


def rng_stream(seed: int, point_index: int, iteration: int) -> np.random.Generator:
    """Counter-based Gaussian stream keyed by (seed, point, iteration).

    Philox keyed through a SeedSequence spawn key: the stream depends only on
    the triple, never on call order or thread.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(point_index), int(iteration)))
    return np.random.Generator(np.random.Philox(ss))


def standard_normal_draws(
    seed: int,
    point_index: int,
    iteration: int,
    n_samples: int,
    n: int,
    antithetic: bool,
    out: np.ndarray | None = None,
) -> np.ndarray:
    """(n_samples, n) standard normals from the point's stream.

    Antithetic layout is ``[z; -z]`` with a zero row appended when
    ``n_samples`` is odd, so every coordinate sums to exactly zero.
    """
    rng = rng_stream(seed, point_index, iteration)
    if out is None:
        out = np.empty((n_samples, n))
    if not antithetic:
        rng.standard_normal((n_samples, n), out=out)
        return out
    half = n_samples // 2
    rng.standard_normal((half, n), out=out[:half])
    np.negative(out[:half], out=out[half : 2 * half])
    if n_samples % 2:
        out[-1] = 0.0
    return out
