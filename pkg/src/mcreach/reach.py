"""Backward reachable tubes over a time schedule and zero-level contours."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import ConfigError, ContractError, EstimatorConfig, EvalSet, ValueField
from .picard import PicardState, run_picard
from .systems import SystemSpec, cost_gradient


@dataclass(frozen=True)
class TimeSchedule:
    t_grid: tuple[float, ...]

    def __post_init__(self):
        t = tuple(float(v) for v in self.t_grid)
        if not t:
            raise ConfigError("schedule needs at least one time", key="schedule.times")
        if t[0] < 0 or any(b <= a for a, b in zip(t, t[1:])):
            raise ConfigError("schedule times must be >= 0 and strictly increasing", key="schedule.times")
        object.__setattr__(self, "t_grid", t)

    @property
    def count(self) -> int:
        return len(self.t_grid)

    def check(self, horizon: float) -> None:
        if self.t_grid[-1] > horizon:
            raise ConfigError(f"schedule time {self.t_grid[-1]} exceeds the horizon {horizon}", key="schedule.times")

    @classmethod
    def uniform(cls, horizon: float, count: int) -> "TimeSchedule":
        """``count`` times 0, T/count, ..., (count - 1) T/count (horizons T .. T/count)."""
        if count < 1:
            raise ConfigError("schedule count must be >= 1", key="schedule.count")
        return cls(tuple(np.linspace(0.0, horizon, count, endpoint=False)))


@dataclass
class TubeField:
    fields: list[ValueField]
    tube_values: np.ndarray
    mode: str = "BRT"
    running: list[np.ndarray] = field(default_factory=list)  # tube after each schedule time
    states: list[PicardState | None] = field(default_factory=list)
    terminal: np.ndarray | None = None
    avoid: np.ndarray | None = None

    @property
    def eval_set(self) -> EvalSet:
        return self.fields[0].eval_set

    def tube_field(self) -> ValueField:
        return ValueField(
            eval_set=self.eval_set,
            t=self.fields[0].t,
            values=self.tube_values,
            meta={"mode": self.mode, "times": [f.t for f in self.fields]},
        )


def _solve_times(sys, cfg, eval_set, schedule, tol, max_iter, threads, on_iteration):
    schedule.check(cfg.horizon)
    if eval_set.dim != sys.n:
        raise ConfigError(f"evaluation points have dimension {eval_set.dim}, system has {sys.n}", key="eval")
    fields, states = [], []
    for t in schedule.t_grid:
        if t >= cfg.horizon:
            g = np.asarray(sys.terminal_cost(eval_set.points), dtype=float)
            vf = ValueField(eval_set, float(t), g, cost_gradient(sys, eval_set.points),
                            meta={"config": cfg.snapshot(), "iterations": 0, "converged": True})
            fields.append(vf)
            states.append(None)
            continue
        vf, st = run_picard(sys, cfg, eval_set, t, tol, max_iter, threads=threads, on_iteration=on_iteration)
        fields.append(vf)
        states.append(st)
    return fields, states


def _assemble(fields, g, ell):
    """Back-to-front running minimum, clamped below by ``ell`` when given."""
    tube = g.copy() if ell is None else np.maximum(g, ell)
    running = [None] * len(fields)
    for k in range(len(fields) - 1, -1, -1):
        tube = np.minimum(tube, fields[k].values)
        if ell is not None:
            tube = np.maximum(tube, ell)
        running[k] = tube.copy()
    return tube, running


def solve_brt(
    sys: SystemSpec,
    cfg: EstimatorConfig,
    eval_set: EvalSet,
    schedule: TimeSchedule,
    tol: float,
    max_iter: int,
    threads: int | None = 1,
    on_iteration: Callable[[dict], None] | None = None,
) -> TubeField:
    """Per-time Picard solves combined by a running minimum with the target cost."""
    fields, states = _solve_times(sys, cfg, eval_set, schedule, tol, max_iter, threads, on_iteration)
    g = np.asarray(sys.terminal_cost(eval_set.points), dtype=float)
    tube, running = _assemble(fields, g, None)
    return TubeField(fields, tube, "BRT", running, states, terminal=g)


def solve_brat(
    sys: SystemSpec,
    cfg: EstimatorConfig,
    eval_set: EvalSet,
    schedule: TimeSchedule,
    tol: float,
    max_iter: int,
    threads: int | None = 1,
    on_iteration: Callable[[dict], None] | None = None,
) -> TubeField:
    """Reach-avoid tube: the running minimum is clamped below by the avoid cost.

    ``avoid_cost`` is positive inside the region to avoid, so clamped points
    are kept out of the zero sublevel set.
    """
    if sys.avoid_cost is None:
        raise ConfigError(f"system {sys.name} has no avoid cost for a reach-avoid solve", key="system.avoid")
    fields, states = _solve_times(sys, cfg, eval_set, schedule, tol, max_iter, threads, on_iteration)
    g = np.asarray(sys.terminal_cost(eval_set.points), dtype=float)
    ell = np.asarray(sys.avoid_cost(eval_set.points), dtype=float)
    tube, running = _assemble(fields, g, ell)
    return TubeField(fields, tube, "BRAT", running, states, terminal=g, avoid=ell)


# marching squares -----------------------------------------------------------

def _grid_values(vf: ValueField):
    layout = vf.eval_set.layout
    if layout is None or len(layout.free_axes) != 2:
        raise ContractError("zero contours need an evaluation grid with exactly two free axes")
    values = np.asarray(vf.values, dtype=float)
    if values.size != int(np.prod(layout.shape)):
        raise ContractError("value count does not match the grid layout")
    return values.reshape(layout.shape), layout.coords


def extract_zero_contour(vf: ValueField) -> list[np.ndarray]:
    """Marching-squares polylines of the zero level on a 2-D slice.

    Nodes with ``v > 0`` are outside; crossings are linearly interpolated on
    cell edges and saddle cells are split by the sign of the cell average.
    Closed polylines repeat their first vertex at the end.  The list is
    sorted lexicographically by first vertex.
    """
    v, (xs, ys) = _grid_values(vf)
    nx, ny = v.shape
    pos = v > 0
    points: dict[tuple, tuple[float, float]] = {}

    def crossing(key):
        if key not in points:
            kind, i, j = key
            i2, j2 = (i + 1, j) if kind == "h" else (i, j + 1)
            v0, v1 = v[i, j], v[i2, j2]
            s = v0 / (v0 - v1) if v0 != v1 else 0.0
            points[key] = (xs[i] + s * (xs[i2] - xs[i]), ys[j] + s * (ys[j2] - ys[j]))
        return key

    segments = []
    for i in range(nx - 1):
        for j in range(ny - 1):
            corners = (pos[i, j], pos[i + 1, j], pos[i + 1, j + 1], pos[i, j + 1])
            if all(corners) or not any(corners):
                continue
            # edges in cyclic order: e0 = c0c1, e1 = c1c2, e2 = c2c3, e3 = c3c0
            edges = [("h", i, j), ("v", i + 1, j), ("h", i, j + 1), ("v", i, j)]
            cut = [k for k in range(4) if corners[k] != corners[(k + 1) % 4]]
            if len(cut) == 2:
                segments.append((crossing(edges[cut[0]]), crossing(edges[cut[1]])))
                continue
            centre = (v[i, j] + v[i + 1, j] + v[i + 1, j + 1] + v[i, j + 1]) / 4 > 0
            if centre == corners[0]:
                pairs = ((0, 1), (2, 3))  # c0 and c2 joined through the centre
            else:
                pairs = ((3, 0), (1, 2))
            for a, b in pairs:
                segments.append((crossing(edges[a]), crossing(edges[b])))

    adjacent: dict[tuple, list[int]] = {}
    for s, (a, b) in enumerate(segments):
        adjacent.setdefault(a, []).append(s)
        adjacent.setdefault(b, []).append(s)
    used = [False] * len(segments)

    def walk(start):
        chain = [start]
        node = start
        while True:
            nxt = [s for s in adjacent[node] if not used[s]]
            if not nxt:
                return chain
            s = nxt[0]
            used[s] = True
            a, b = segments[s]
            node = b if a == node else a
            chain.append(node)
            if node == start:
                return chain

    chains = []
    for key in sorted(k for k, segs in adjacent.items() if len(segs) == 1):
        if any(not used[s] for s in adjacent[key]):
            chains.append(walk(key))
    for s in range(len(segments)):
        if not used[s]:
            chains.append(walk(segments[s][0]))

    polylines = []
    for chain in chains:
        pts = [points[k] for k in chain]
        dedup = [pts[0]] + [p for p, q in zip(pts[1:], pts[:-1]) if p != q]
        if len(dedup) >= 2:
            polylines.append(np.array(dedup))
    polylines.sort(key=lambda p: (p[0, 0], p[0, 1]))
    return polylines


def contour_edge_check(vf: ValueField, polylines: list[np.ndarray], atol: float = 1e-9) -> bool:
    """True if every vertex lies on a cell edge whose end values change sign (or touch zero)."""
    v, (xs, ys) = _grid_values(vf)
    for line in polylines:
        for x, y in line:
            if not _on_sign_edge(v, xs, ys, x, y, atol):
                return False
    return True


def _on_sign_edge(v, xs, ys, x, y, atol):
    ix = np.flatnonzero(np.abs(xs - x) <= atol * (1 + abs(x)))
    iy = np.flatnonzero(np.abs(ys - y) <= atol * (1 + abs(y)))
    for i in ix:  # vertical edges  (i, j) - (i, j + 1)
        j = np.searchsorted(ys, y) - 1
        for jj in (j, j + 1):
            if 0 <= jj < len(ys) - 1 and ys[jj] - atol <= y <= ys[jj + 1] + atol:
                if v[i, jj] * v[i, jj + 1] <= 0:
                    return True
    for j in iy:  # horizontal edges (i, j) - (i + 1, j)
        i = np.searchsorted(xs, x) - 1
        for ii in (i, i + 1):
            if 0 <= ii < len(xs) - 1 and xs[ii] - atol <= x <= xs[ii + 1] + atol:
                if v[ii, j] * v[ii + 1, j] <= 0:
                    return True
    return False
