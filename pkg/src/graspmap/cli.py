"""Command-line front end: simulate -> solve -> detect, plus a one-shot pipeline.

Stages exchange plain files so any stage can be rerun or swapped in isolation:

    <run>/bundle/   synthetic trajectory, tracker deltas, unscaled cloud, truth
    <run>/solve/    factor graph with final estimates + optimization report
    <run>/detect/   metric cloud, voxel-grid dump, graspable anchor list
    <run>/summary.yaml

Exit codes: 0 success, 2 bad configuration, 3 file problems, 4 optimizer did
not converge, 5 no usable data (empty cloud, degenerate mask, unseen terrain).
An empty graspable list is a success, not an error: flat ground has nothing to
grasp. Set GRASPMAP_LOG_LEVEL (DEBUG/INFO/WARNING) for verbosity.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np
import yaml

from .errors import (ConfigError, DegenerateMask, EmptyCloud, GraspmapError,
                     NoVisibleTerrain, NotConverged, SingularNormalEquations,
                     UnreachableTerrain)
from .factors import FkFactor, McFactor, PriorFactor
from .kinematics import LimbModel, default_limb, fk_delta, fk_pose, load_limb
from .mapping import (DEFAULT_DEPTH, DEFAULT_INNER_RADIUS, DEFAULT_MIN_POINTS,
                      DEFAULT_OUTER_RADIUS, DEFAULT_VOXEL_SIZE, METERS,
                      PointCloud, build_mask, detect_graspable, fill_below,
                      read_ply, save_graspable, save_grid, scale_cloud,
                      voxelize, write_ply)
from .simulation import (SimBundle, SimConfig, load_config, read_bundle,
                         simulate, write_bundle)
from .solver import (FactorGraph, SolveOptions, load_graph, load_report,
                     save_graph, save_report)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NOT_CONVERGED = 4
EXIT_EMPTY = 5

GRAPH_FILE = "graph.txt"
REPORT_FILE = "report.txt"
SCALED_CLOUD_FILE = "cloud_scaled.ply"
GRID_FILE = "grid.txt"
GRASPABLE_FILE = "graspable.csv"
SUMMARY_FILE = "summary.yaml"

log = logging.getLogger("graspmap")

_stage = "cli"  # label prefixed to error messages; updated as stages run


def _enter(stage: str) -> None:
    global _stage
    _stage = stage
    log.debug("entering stage %s", stage)


# --- stage bodies (shared by single commands and the pipeline) -----------------------


def _stage_simulate(config: SimConfig, out_dir, model: LimbModel) -> SimBundle:
    _enter("simulate")
    bundle = simulate(config, model)
    files = write_bundle(out_dir, bundle)
    print(f"[simulate] seed {config.seed}: wrote {', '.join(files)} to {out_dir}")
    return bundle


def build_graph(bundle: SimBundle, model: LimbModel,
                literal: bool = False) -> FactorGraph:
    """Assemble the fusion graph from a bundle: prior at FK of the first
    reading, then one kinematic and one tracker factor per later keyframe."""
    graph = FactorGraph(PriorFactor(pose=fk_pose(model, bundle.readings[0].angles)))
    for i in range(1, len(bundle.readings)):
        rot, trans = bundle.vo_deltas[i - 1]
        graph.add_keyframe(
            FkFactor(i, fk_delta(model, bundle.readings[i - 1], bundle.readings[i])),
            McFactor(i, rot, trans, frame_aligned=not literal))
    return graph


def _stage_solve(bundle: SimBundle, out_dir, options: SolveOptions,
                 model: LimbModel, literal: bool):
    _enter("solve")
    graph = build_graph(bundle, model, literal)
    report = graph.optimize(options)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_graph(out / GRAPH_FILE, graph)
    save_report(out / REPORT_FILE, report)
    print(f"[solve] scale estimate {graph.scale.value:.9g} "
          f"(final cost {report.final_cost:.6g}, {report.iterations} iterations)")
    if not report.converged:
        # artifacts are already on disk for inspection
        raise NotConverged(f"no convergence within {options.max_iter} iterations")
    return graph, report


def _stage_detect(cloud: PointCloud, out_dir, voxel_size: float, outer: float,
                  inner: float, depth: float, min_points: int):
    _enter("detect")
    if cloud.units != METERS:
        raise ConfigError(
            f"detect needs a metric cloud, got units {cloud.units!r}; "
            "solve for the scale and apply it first")
    grid = fill_below(voxelize(cloud, voxel_size, min_points))
    mask = build_mask(outer, inner, depth, voxel_size)
    hits = detect_graspable(grid, mask)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_grid(out / GRID_FILE, grid)
    save_graspable(out / GRASPABLE_FILE, hits)
    if hits:
        p = hits[0].position
        print(f"[detect] {len(hits)} graspable anchors; "
              f"top ({p[0]:.4f}, {p[1]:.4f}, {p[2]:.4f}) m")
    else:
        print("[detect] no graspable anchors (nothing convex to envelop)")
    return hits


def _resolve_config(args) -> SimConfig:
    config = load_config(args.config) if args.config else SimConfig()
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)
    return config


def _resolve_limb(args) -> LimbModel:
    return load_limb(args.limb) if args.limb else default_limb()


def _solve_options(args) -> SolveOptions:
    return SolveOptions(max_iter=args.max_iter, rel_tol=args.rel_tol)


# --- subcommands -------------------------------------------------------------------


def cmd_simulate(args) -> int:
    _stage_simulate(_resolve_config(args), args.out, _resolve_limb(args))
    return EXIT_OK


def cmd_solve(args) -> int:
    _enter("solve")
    bundle = read_bundle(args.bundle)
    _stage_solve(bundle, args.out, _solve_options(args), _resolve_limb(args),
                 args.literal_eq8)
    return EXIT_OK


def cmd_detect(args) -> int:
    _enter("detect")
    cloud = read_ply(args.cloud)
    _stage_detect(cloud, args.out, args.voxel_size, args.outer_radius,
                  args.inner_radius, args.depth, args.min_points)
    return EXIT_OK


def cmd_pipeline(args) -> int:
    t0 = time.perf_counter()
    _enter("pipeline")
    run = Path(args.out)
    bundle_dir, solve_dir, detect_dir = run / "bundle", run / "solve", run / "detect"
    start = ("simulate", "solve", "detect").index(args.stage)
    model = _resolve_limb(args)

    if start <= 0:
        bundle = _stage_simulate(_resolve_config(args), bundle_dir, model)
    else:
        log.info("reusing bundle in %s", bundle_dir)
        bundle = read_bundle(bundle_dir)

    if start <= 1:
        graph, report = _stage_solve(bundle, solve_dir, _solve_options(args),
                                     model, args.literal_eq8)
    else:
        log.info("reusing solve artifacts in %s", solve_dir)
        graph = load_graph(solve_dir / GRAPH_FILE)
        report = load_report(solve_dir / REPORT_FILE)

    scaled = scale_cloud(bundle.cloud, graph.scale)
    detect_dir.mkdir(parents=True, exist_ok=True)
    write_ply(detect_dir / SCALED_CLOUD_FILE, scaled)
    hits = _stage_detect(scaled, detect_dir, args.voxel_size, args.outer_radius,
                         args.inner_radius, args.depth, args.min_points)

    _enter("pipeline")
    s_true = bundle.config.true_scale
    apex_error = None
    if hits and len(bundle.truth_graspable):
        apex_error = float(np.min(np.linalg.norm(
            bundle.truth_graspable - hits[0].position, axis=1)))
    summary = {
        "scale_error_rel": float(abs(graph.scale.value - s_true) / s_true),
        "apex_error_m": apex_error,
        "final_cost": float(report.final_cost),
        "wall_time_s": float(time.perf_counter() - t0),
    }
    with open(run / SUMMARY_FILE, "w") as fh:
        yaml.safe_dump(summary, fh, sort_keys=False)
    print(f"[pipeline] scale_error_rel={summary['scale_error_rel']:.3g} "
          f"apex_error_m={apex_error if apex_error is None else f'{apex_error:.4f}'} "
          f"final_cost={summary['final_cost']:.3g} "
          f"wall_time_s={summary['wall_time_s']:.2f}")
    return EXIT_OK


# --- argument parsing ----------------------------------------------------------------


def _add_sim_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="simulation config YAML (defaults built in)")
    p.add_argument("--seed", type=int, help="override the config's seed")


def _add_solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--max-iter", type=int, default=SolveOptions.max_iter)
    p.add_argument("--rel-tol", type=float, default=SolveOptions.rel_tol)
    p.add_argument("--literal-eq8", action="store_true",
                   help="use the raw tracker translation residual (scale times "
                        "measured delta with no frame re-alignment)")


def _add_detect_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--voxel-size", type=float, default=DEFAULT_VOXEL_SIZE)
    p.add_argument("--outer-radius", type=float, default=DEFAULT_OUTER_RADIUS)
    p.add_argument("--inner-radius", type=float, default=DEFAULT_INNER_RADIUS)
    p.add_argument("--depth", type=float, default=DEFAULT_DEPTH)
    p.add_argument("--min-points", type=int, default=DEFAULT_MIN_POINTS,
                   help="occupancy threshold per voxel")


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="graspmap",
        description="Scale-aware fusion of limb kinematics with a monocular "
                    "terrain map, ending in graspable-point detection.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic data bundle")
    _add_sim_flags(p)
    p.add_argument("--limb", help="limb model YAML (default: built-in 4-joint limb)")
    p.add_argument("--out", required=True, help="bundle output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("solve", help="estimate poses and metric scale from a bundle")
    p.add_argument("bundle", help="bundle directory from 'simulate'")
    p.add_argument("--limb", help="limb model YAML (default: built-in 4-joint limb)")
    _add_solver_flags(p)
    p.add_argument("--out", required=True, help="directory for graph and report")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("detect", help="find graspable anchors in a metric cloud")
    p.add_argument("cloud", help="metric PLY cloud (units comment must say meters)")
    _add_detect_flags(p)
    p.add_argument("--out", required=True, help="directory for grid and anchor list")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("pipeline", help="simulate, solve, scale, and detect in one run")
    _add_sim_flags(p)
    p.add_argument("--limb", help="limb model YAML (default: built-in 4-joint limb)")
    _add_solver_flags(p)
    _add_detect_flags(p)
    p.add_argument("--stage", choices=("simulate", "solve", "detect"),
                   default="simulate",
                   help="stage to start from, reusing earlier artifacts in --out")
    p.add_argument("--out", required=True, help="run directory")
    p.set_defaults(func=cmd_pipeline)
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    level = os.environ.get("GRASPMAP_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, UnreachableTerrain, ValueError) as exc:
        print(f"[{_stage}] config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"[{_stage}] file error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (NotConverged, SingularNormalEquations) as exc:
        print(f"[{_stage}] solver error: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except (EmptyCloud, DegenerateMask, NoVisibleTerrain) as exc:
        print(f"[{_stage}] empty result: {exc}", file=sys.stderr)
        return EXIT_EMPTY
    except GraspmapError as exc:
        print(f"[{_stage}] error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
