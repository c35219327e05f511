"""CSV and JSON-lines output with exact float round-trips."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import ValueField
from .gridref import GridSolution


def _fmt(x: float) -> str:
    return repr(float(x))


def write_field_csv(path, vf: ValueField, coord_names: Sequence[str] | None = None, gradients: bool = True) -> None:
    pts = vf.eval_set.points
    n = pts.shape[1]
    names = list(coord_names) if coord_names else [f"x{i}" for i in range(n)]
    header = names + ["value"]
    with_grad = gradients and vf.gradients is not None
    if with_grad:
        header += [f"d{name}" for name in names]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for m in range(len(pts)):
            row = [_fmt(v) for v in pts[m]] + [_fmt(vf.values[m])]
            if with_grad:
                row += [_fmt(v) for v in vf.gradients[m]]
            w.writerow(row)


def write_grid_csv(path, grid: GridSolution) -> None:
    mesh = np.stack(np.meshgrid(*grid.axes, indexing="ij"), axis=-1).reshape(-1, len(grid.axes))
    vals = grid.values.reshape(-1)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{i}" for i in range(len(grid.axes))] + ["value"])
        for pt, v in zip(mesh, vals):
            w.writerow([_fmt(c) for c in pt] + [_fmt(v)])


def write_contours_csv(path, polylines: Iterable[np.ndarray], axis_names: Sequence[str] = ("u", "v")) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["polyline_id", "vertex", *axis_names])
        for pid, line in enumerate(polylines):
            for k, (a, b) in enumerate(line):
                w.writerow([pid, k, _fmt(a), _fmt(b)])


def read_csv(path) -> tuple[list[str], np.ndarray]:
    """Header and float matrix of any CSV written by this module."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    data = np.array([[float(v) for v in r] for r in body], dtype=float).reshape(len(body), len(header))
    return header, data


def read_contours_csv(path) -> list[np.ndarray]:
    header, data = read_csv(path)
    lines: list[np.ndarray] = []
    if not len(data):
        return lines
    ids = data[:, 0].astype(int)
    for pid in range(ids.max() + 1):
        lines.append(data[ids == pid][:, 2:4])
    return lines


class JsonLines:
    """Append-only JSON-lines sink."""

    def __init__(self, path):
        self.path = Path(path)
        self._fh = open(self.path, "w", encoding="utf-8", newline="\n")

    def write(self, record: dict) -> None:
        self._fh.write(json.dumps(record, sort_keys=True) + "\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_jsonl(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]
