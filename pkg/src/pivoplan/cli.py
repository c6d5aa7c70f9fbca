"""Command-line entry point.

Exit codes: 0 on completion, 2 for an unreadable or invalid scene, 3 when a
solver fails internally.
"""

import argparse
import logging
import os
import sys

import numpy as np
import yaml

from . import harness
from .qp import InfeasibleQP
from .scene import SceneError, load_scene

EXIT_OK = 0
EXIT_SCENE = 2
EXIT_SOLVER = 3


def _mu_pair(text):
    name, sep, value = text.partition("=")
    if not sep or not name:
        raise argparse.ArgumentTypeError(f"expected obj=value, got {text!r}")
    try:
        return name, float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid friction value in {text!r}") from None


def _angle(text):
    try:
        return harness.parse_angle(text)
    except (ValueError, KeyError):
        raise argparse.ArgumentTypeError(f"invalid angle {text!r}") from None


def build_parser():
    p = argparse.ArgumentParser(prog="pivoplan", description="Pick-and-place planning with in-hand pivoting.")
    p.add_argument("experiment", choices=["desk", "shelf", "stability", "sensitivity"])
    p.add_argument("--scene", required=True, help="scene YAML file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--heights", type=float, nargs="+", help="support heights in m")
    p.add_argument("--angles", type=_angle, nargs="+", help="grasp angles, e.g. -pi/2 0 pi/4 free")
    p.add_argument("--objects", nargs="+", help="object names (first one for grids)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-pivot", action="store_true", help="plan with a rigid grasp")
    p.add_argument("--mu-override", type=_mu_pair, action="append", default=[], metavar="OBJ=VAL",
                   help="friction coefficient used by the grasp controller")
    p.add_argument("--threshold", type=float, default=0.01, help="virtual joint speed for pivoting (rad/s)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def run(args):
    spec = harness.ExperimentSpec(
        args.experiment, args.scene, tuple(args.angles) if args.angles else harness.DEFAULT_ANGLES,
        tuple(args.heights or ()), tuple(args.objects or ()), dict(args.mu_override), args.seed,
        not args.no_pivot, args.threshold, args.out)
    os.makedirs(args.out, exist_ok=True)
    if spec.kind == "desk":
        for m in harness.run_desk(spec).values():
            print(m.to_text() + "\n")
    elif spec.kind == "shelf":
        matrices, executions = harness.run_shelf(spec)
        for m in matrices.values():
            print(m.to_text() + "\n")
        for case, ex in executions.items():
            n_gp = len(ex.schedule.gp_intervals(ex.release_time))
            print(f"{case}: {ex.outcome}, final deviation {ex.final_deviation:.3f} rad, {n_gp} GP interval(s)")
    elif spec.kind == "stability":
        print(harness.run_stability(spec).to_text())
    else:
        for c in harness.run_sensitivity(spec):
            print(f"{c.object_name} mu={c.controller_mu:g} (true {c.true_mu:g}): {c.outcome}, "
                  f"final deviation {c.final_deviation:.3f} rad")


def check_scene(args):
    """Load the scene and resolve every object name the run refers to."""
    scene = load_scene(args.scene)
    for name in list(args.objects or ()) + [n for n, _ in args.mu_override]:
        scene.object(name)
    if args.experiment in ("desk", "shelf", "sensitivity") and "place_xy" not in scene.task:
        raise SceneError("scene task has no place_xy")
    return scene


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        check_scene(args)
    except (SceneError, OSError, yaml.YAMLError) as exc:
        print(f"scene error: {exc}", file=sys.stderr)
        return EXIT_SCENE
    try:
        run(args)
    except SceneError as exc:
        print(f"scene error: {exc}", file=sys.stderr)
        return EXIT_SCENE
    except (InfeasibleQP, FloatingPointError, np.linalg.LinAlgError, RuntimeError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
