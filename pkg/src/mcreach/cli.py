"""Batch command-line front end.

    mcreach solve --config run.json [--output DIR] [--seed S] [--threads T]
    mcreach compare --config run.json
    mcreach concentration --config run.json

Exit codes: 0 success, 2 configuration or validation error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import re
import sys as _sys
import time
from pathlib import Path

import numpy as np

from . import config as C
from .core import ConfigError, EstimatorConfig, NumericalError
from .estimator import required_samples
from .gridref import make_grid_axes, sample_on, solve_grid_brt
from .io import JsonLines, write_contours_csv, write_field_csv, write_grid_csv
from .metrics import comparison_record, concentration_experiment, error_metrics
from .reach import TubeField, extract_zero_contour, solve_brat, solve_brt

logger = logging.getLogger("mcreach")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


def _slug(label: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", label).strip("_") or "run"


def _output_dir(cfg: dict, override: str | None) -> Path:
    out = Path(override or cfg["output"]["dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _run_tube(label, cfg, args, out: Path, log: JsonLines):
    tol, max_iter, mode = C.picard_settings(cfg)
    sys = C.build_system(cfg)
    est = C.build_estimator(cfg, args.seed)
    es = C.build_eval_set(cfg, sys)
    sched = C.build_schedule(cfg, est.horizon)

    def on_iteration(rec):
        log.write({"variant": label, **rec})

    solver = solve_brat if mode == "BRAT" else solve_brt
    start = time.perf_counter()
    tube = solver(sys, est, es, sched, tol, max_iter, threads=args.threads, on_iteration=on_iteration)
    wall_ms = 1000.0 * (time.perf_counter() - start)
    _write_tube(out / _slug(label), tube, cfg["output"]["gradients"])
    return sys, est, es, sched, tube, wall_ms


def _write_tube(vdir: Path, tube: TubeField, gradients: bool) -> None:
    vdir.mkdir(parents=True, exist_ok=True)
    for k, vf in enumerate(tube.fields):
        write_field_csv(vdir / f"field_t{k:03d}.csv", vf, gradients=gradients)
    write_field_csv(vdir / "tube.csv", tube.tube_field(), gradients=False)
    layout = tube.eval_set.layout
    if layout is not None and len(layout.free_axes) == 2:
        names = tuple(f"x{a}" for a in layout.free_axes)
        write_contours_csv(vdir / "contour.csv", extract_zero_contour(tube.tube_field()), names)


def _tube_summary(label, tube: TubeField, wall_ms: float) -> dict:
    per_time = []
    for vf, st in zip(tube.fields, tube.states):
        per_time.append({
            "t": vf.t,
            "iterations": 0 if st is None else st.k,
            "converged": True if st is None else st.converged,
            "final_residual": None if st is None else st.residuals[-1],
            "residuals": [] if st is None else st.residuals,
        })
    return {"variant": label, "mode": tube.mode, "wall_ms": wall_ms, "times": per_time,
            "iterations": per_time[0]["iterations"]}


def cmd_solve(cfg: dict, args) -> int:
    out = _output_dir(cfg, args.output)
    summaries = []
    with JsonLines(out / "iterations.jsonl") as log:
        for label, vcfg in C.variants(cfg):
            *_, tube, wall_ms = _run_tube(label, vcfg, args, out, log)
            summaries.append(_tube_summary(label, tube, wall_ms))
    _dump(out / "summary.json", {"command": "solve", "runs": summaries})
    print(json.dumps({"command": "solve", "output": str(out), "runs": len(summaries)}))
    return EXIT_OK


def cmd_compare(cfg: dict, args) -> int:
    out = _output_dir(cfg, args.output)
    records = []
    grids: dict[str, object] = {}
    with JsonLines(out / "iterations.jsonl") as log, JsonLines(out / "metrics.jsonl") as mlog:
        for label, vcfg in C.variants(cfg):
            sys = C.build_system(vcfg)
            if sys.n > 3:
                raise ConfigError(
                    f"compare needs a grid reference, which supports n <= 3 (system {sys.name} has n = {sys.n})",
                    key="system.name",
                )
            sys, est, es, sched, tube, wall_ms = _run_tube(label, vcfg, args, out, log)
            comp = vcfg["compare"]
            if comp["self_compare"]:
                ref, outside = tube.tube_values.copy(), np.zeros(len(es), dtype=bool)
            else:
                key = json.dumps([vcfg["system"], comp["resolution"], comp["cfl"], est.horizon - sched.t_grid[0]],
                                 sort_keys=True)
                if key not in grids:
                    axes = make_grid_axes(sys, int(comp["resolution"]))
                    grids[key] = solve_grid_brt(sys, axes, est.horizon - sched.t_grid[0], float(comp["cfl"]))
                    write_grid_csv(out / _slug(label) / "reference_grid.csv", grids[key])
                ref, outside = sample_on(es, grids[key])
            l_inf, l2_rel = error_metrics(tube.tube_values, ref)
            summary = _tube_summary(label, tube, wall_ms)
            rec = comparison_record(
                sys.name, label, est, l_inf, l2_rel, wall_ms,
                iterations=summary["iterations"],
                iterations_per_time=[t["iterations"] for t in summary["times"]],
                extrapolated=int(outside.sum()),
            )
            mlog.write(rec)
            records.append(rec)
    _dump(out / "summary.json", {"command": "compare", "records": records})
    for rec in records:
        print(json.dumps(rec, sort_keys=True))
    return EXIT_OK


def cmd_concentration(cfg: dict, args) -> int:
    out = _output_dir(cfg, args.output)
    sec = cfg["concentration"]
    if cfg["system"].get("name") is None:
        cfg = C._merge(cfg, {"system": {"name": "bounded_quadratic"}}, "")
    sys = C.build_system(cfg)
    if sys.cost_range is None:
        raise ConfigError(f"system {sys.name} has no bounded cost range", key="system.name")
    trials = int(sec["trials"])
    if trials < 100:
        raise ConfigError("concentration.trials must be >= 100", key="concentration.trials")
    c, eps = float(sec["c"]), float(sec["eps"])
    if sec["n_samples"] == "auto":
        if not eps > 0:
            raise ConfigError("n_samples 'auto' needs eps > 0", key="concentration.n_samples")
        try:
            n_samples = required_samples(c, *sys.cost_range, eps)
        except OverflowError as exc:
            raise ConfigError(str(exc), key="concentration.c") from None
    else:
        n_samples = int(sec["n_samples"])
    base = C.build_estimator(cfg, args.seed)
    est = EstimatorConfig(
        delta=base.delta, horizon=base.horizon, n_samples=n_samples, seed=base.seed,
        antithetic=base.antithetic, grad_floor=base.grad_floor, coeff_bounds=base.coeff_bounds,
    )
    point = np.atleast_1d(np.asarray(sec["point"], dtype=float))
    if point.size != sys.n:
        raise ConfigError(f"concentration.point must have {sys.n} entries", key="concentration.point")
    res = concentration_experiment(sys, est, point, c, eps, trials, t=float(sec["t"]))
    rec = {"command": "concentration", "system": sys.name, **res.record()}
    _dump(out / "concentration.json", rec)
    print(json.dumps(rec, sort_keys=True))
    return EXIT_OK


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


COMMANDS = {"solve": cmd_solve, "compare": cmd_compare, "concentration": cmd_concentration}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mcreach", description="Monte Carlo viscous HJ reachability")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--output", help="output directory (overrides output.dir)")
        p.add_argument("--seed", type=int, help="RNG seed (overrides estimator.seed)")
        p.add_argument("--threads", type=int, default=1, help="worker threads, 0 = all cores")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must fit in 64 bits", key="--seed")
        if args.threads < 0:
            raise ConfigError("--threads must be >= 0", key="--threads")
        cfg = C.load_config(args.config)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        key = f" [{exc.key}]" if exc.key else ""
        print(f"error{key}: {exc}", file=_sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        where = f" (point {exc.point_index}, iteration {exc.iteration})" if exc.point_index is not None else ""
        print(f"numerical failure{where}: {exc}", file=_sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    raise SystemExit(main())
