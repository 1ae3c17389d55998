"""Command-line entry point.

Exit codes: 0 success; 1 runtime failure; 2 usage error (argparse);
3 optimize-traj ended without a collision-free trajectory; 4 grasp demo
did not succeed; 5 replay mismatch.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ENV_VAR, load_app_config

logger = logging.getLogger(__name__)


def _parse_joints(text: str, n: int) -> np.ndarray:
    vals = [float(v) for v in text.replace(",", " ").split()]
    if len(vals) != n:
        raise SystemExit(f"expected {n} joint values, got {len(vals)}")
    return np.array(vals)


def cmd_scenario(args) -> int:
    from .world import bundled_scenario_names, load_bundled_scenario

    if args.action == "list":
        for name in bundled_scenario_names():
            sc = load_bundled_scenario(name)
            extras = []
            if sc.objects:
                extras.append(f"{len(sc.objects)} object(s)")
            if sc.obstacles:
                extras.append(f"{len(sc.obstacles)} obstacle(s)")
            print(f"{name:24s} {' '.join(extras)}")
        return 0
    raise SystemExit(f"unknown scenario action '{args.action}'")


def cmd_serve(args) -> int:
    from .grasp.transfer import load_category
    from .service import SessionError, serve

    cfg = load_app_config(args.config)
    category = load_category(args.category) if args.category else None
    try:
        server = serve(args.scenario, args.port, seed=args.seed,
                       log_path=args.log, category=category,
                       realtime=not args.no_realtime)
    except (SessionError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    print(f"serving scenario '{args.scenario}' on port {server.port} "
          f"(seed {server.session.scenario.seed})")
    if args.log:
        print(f"session log: {args.log}")
    server.run_forever()
    return 0


def cmd_replay(args) -> int:
    from .service import replay

    result = replay(args.log)
    print(result.detail)
    return 0 if result.ok else 5


def cmd_optimize_traj(args) -> int:
    from .edt import PointCloud, build_edt
    from .model import JointState, default_model, default_stand_positions
    from .report import plot_cost_trace, plot_trajectory_topdown, write_cost_trace_csv
    from .trajopt import (
        CostWeights,
        KeyframeTrajectory,
        SphereModel,
        TransitionCostEvaluator,
        clearance_priority_weights,
        duration_priority_weights,
        optimize,
    )
    from .world import World, load_bundled_scenario

    cfg = load_app_config(args.config)
    model = default_model()
    scenario = load_bundled_scenario(args.scenario, seed=args.seed)
    world = World(model, scenario)
    targets = default_stand_positions(model)
    for _ in range(120):
        world.step(targets)

    n = len(model.limb(args.arm).joints)
    start = _parse_joints(args.start, n)
    goal = _parse_joints(args.goal, n)

    pts, labels = world.render(mode="spherical", n_azimuth=220, n_elevation=90)
    inv = world.base_pose.inverse()
    pts_base = np.asarray([inv.transform_point(p) for p in pts])
    lo = np.array([-0.3, -1.0, -1.2])
    hi = np.array([1.3, 1.0, 1.2])
    keep = np.all((pts_base >= lo) & (pts_base <= hi), axis=1)
    edt = build_edt(PointCloud(pts_base[keep], cloud_id=args.scenario), 0.02, (lo, hi))

    if args.weights == "duration":
        weights = duration_priority_weights()
    elif args.weights == "clearance":
        weights = clearance_priority_weights()
    else:
        weights = CostWeights(**cfg["trajopt"])
    rest = JointState(targets.copy())
    evaluator = TransitionCostEvaluator(model, args.arm, rest, edt,
                                        SphereModel.default_arm(), weights)
    initial = KeyframeTrajectory.straight_line(args.arm, start, goal, args.waypoints)
    result = optimize(initial, evaluator, seed=args.seed or 0)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "trajectory.json", "w") as f:
        json.dump({
            "arm": args.arm,
            "collision_free": result.collision_free,
            "cost": result.cost if np.isfinite(result.cost) else None,
            "iterations": result.iterations,
            "components": result.components,
            "waypoints": result.trajectory.waypoints.tolist(),
        }, f, indent=1)
    write_cost_trace_csv(result.trace, out / "cost_trace.csv")
    if result.trace:
        plot_cost_trace(result.trace, out / "cost_trace.png")
    plot_trajectory_topdown(evaluator, initial, result.trajectory,
                            out / "trajectory_xy.png",
                            obstacle_points=pts_base[keep])
    print(f"collision-free: {result.collision_free}  "
          f"iterations: {result.iterations}  "
          f"min clearance: {result.components['min_clearance']:.3f} m")
    print(f"outputs in {out}/")
    return 0 if result.collision_free else 3


def cmd_train_category(args) -> int:
    from .grasp.categories import build_drill_category
    from .grasp.transfer import save_category
    from .report import plot_variance_spectrum

    model, params = build_drill_category(n_instances=args.instances,
                                         seed=args.seed,
                                         latent_dim=args.latent_dim)
    save_category(model, args.out)
    out = Path(args.out)
    with open(out.with_suffix(".variance.csv"), "w") as f:
        f.write("component,variance\n")
        for i, v in enumerate(model.space.variances):
            f.write(f"{i},{v}\n")
    plot_variance_spectrum(model.space.variances, model.space.captured_variance,
                           out.with_suffix(".variance.png"))
    print(f"trained '{model.canonical.category}' on {args.instances} instances; "
          f"captured variance {model.space.captured_variance * 100:.1f} %")
    print(f"category file: {args.out}")
    return 0


def cmd_register(args) -> int:
    from .grasp.transfer import load_category, register_instance
    from .report import plot_registration_overlay

    category = load_category(args.category)
    with open(args.cloud) as f:
        doc = json.load(f)
    points = np.asarray(doc["points"] if isinstance(doc, dict) else doc, dtype=float)
    res = register_instance(category, points)
    result = {
        "success": res.success,
        "residual_rms": res.residual_rms,
        "iterations": res.iterations,
        "latent": res.z.tolist(),
        "pose": res.pose.to_dict(),
    }
    out = Path(args.out) if args.out else Path("registration.json")
    with open(out, "w") as f:
        json.dump(result, f, indent=1)
    plot_registration_overlay(points, res.deformed_points,
                              out.with_suffix(".png"))
    print(f"registration {'succeeded' if res.success else 'FAILED'} "
          f"(rms {res.residual_rms:.4f}); wrote {out}")
    return 0 if res.success else 1


def cmd_grasp_demo(args) -> int:
    from .grasp.categories import build_drill_category
    from .grasp.pipeline import OracleConfig, run_grasp_demo
    from .grasp.transfer import load_category
    from .model import default_model, default_stand_positions
    from .report import plot_registration_overlay, write_stage_csv
    from .world import World, load_bundled_scenario

    model = default_model()
    if args.category:
        category = load_category(args.category)
    else:
        print("no category file given: training the bundled drill family ...")
        category, _ = build_drill_category(n_instances=10, seed=42)
    world = World(model, load_bundled_scenario(args.scenario, seed=args.seed))
    targets = default_stand_positions(model)
    for _ in range(120):
        world.step(targets)
    oracle = OracleConfig(args.noise_xy, args.noise_yaw)
    plans = []
    outcome = run_grasp_demo(world, category, args.object_id,
                             oracle=oracle, seed=args.seed or 0,
                             keep_plan=plans)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "grasp_result.json", "w") as f:
        json.dump(outcome.to_dict(), f, indent=1)
    write_stage_csv(outcome.stages, out / "stages.csv")
    if plans and plans[0].observed_world is not None:
        plan = plans[0]
        plot_registration_overlay(
            plan.observed_world, plan.inferred_world,
            out / "registration_overlay.png",
            grasp_points=plan.warped_grasp_world.position[None])
        from .report import plot_cost_trace
        if plan.trajopt_trace:
            plot_cost_trace(plan.trajopt_trace, out / "trajopt_trace.png")
    for s in outcome.stages:
        mark = "ok " if s.success else "FAIL"
        print(f"  [{mark}] {s.stage:12s} {s.detail}")
    print(f"grasp {'succeeded' if outcome.success else 'failed'}; "
          f"outputs in {out}/")
    return 0 if outcome.success else 4


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="centaursim",
        description="Desk-scale centaur robot simulator and teleoperation service.",
        epilog=f"Default config file from ${ENV_VAR} (JSON).")
    p.add_argument("--config", help="config JSON path (overrides the env var)")
    sub = p.add_subparsers(dest="cmd", required=True)

    sc = sub.add_parser("scenario", help="scenario utilities")
    sc.add_argument("action", choices=["list"])
    sc.set_defaults(func=cmd_scenario)

    sv = sub.add_parser("serve", help="run the teleoperation service")
    sv.add_argument("--scenario", required=True)
    sv.add_argument("--port", type=int, default=7321)
    sv.add_argument("--seed", type=int, default=None)
    sv.add_argument("--log", help="session log path (JSONL)")
    sv.add_argument("--category", help="category model file for grasp commands")
    sv.add_argument("--no-realtime", action="store_true",
                    help="run the loop as fast as possible")
    sv.set_defaults(func=cmd_serve)

    rp = sub.add_parser("replay", help="re-execute a session log")
    rp.add_argument("log")
    rp.set_defaults(func=cmd_replay)

    ot = sub.add_parser("optimize-traj", help="optimize an arm trajectory")
    ot.add_argument("--scenario", required=True)
    ot.add_argument("--arm", default="left_arm")
    ot.add_argument("--start", required=True, help="7 joint values, comma separated")
    ot.add_argument("--goal", required=True)
    ot.add_argument("--waypoints", type=int, default=10)
    ot.add_argument("--weights", choices=["default", "duration", "clearance"],
                    default="default")
    ot.add_argument("--seed", type=int, default=0)
    ot.add_argument("--out", default="trajopt_out")
    ot.set_defaults(func=cmd_optimize_traj)

    tc = sub.add_parser("train-category", help="train the drill category model")
    tc.add_argument("--out", default="drill_category.json")
    tc.add_argument("--instances", type=int, default=10)
    tc.add_argument("--seed", type=int, default=42)
    tc.add_argument("--latent-dim", type=int, default=None)
    tc.set_defaults(func=cmd_train_category)

    rg = sub.add_parser("register", help="register a point cloud against a category")
    rg.add_argument("--category", required=True)
    rg.add_argument("--cloud", required=True,
                    help="JSON file with a points array (normalized frame)")
    rg.add_argument("--out", default=None)
    rg.set_defaults(func=cmd_register)

    gd = sub.add_parser("grasp-demo", help="run the autonomous grasp pipeline")
    gd.add_argument("--scenario", default="grasp_table")
    gd.add_argument("--object-id", default="drill1")
    gd.add_argument("--category", help="category file (default: train in-process)")
    gd.add_argument("--seed", type=int, default=0)
    gd.add_argument("--noise-xy", type=float, default=0.0)
    gd.add_argument("--noise-yaw", type=float, default=0.0)
    gd.add_argument("--out", default="grasp_out")
    gd.set_defaults(func=cmd_grasp_demo)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING)
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except KeyboardInterrupt:
        return 130
    except Exception as e:
        logger.exception("command failed")
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
