"""Command-line entry point.

Subcommands:
  simulate   run a scenario config, writing frames/metrics/stress/steps
  mesh       generate and save rod or hexagonal-web meshes
  validate   run the self-check suite (derivatives, oracles, small sims)
  bench      time the vibration scenario across mesh sizes

Exit codes: 0 success, 2 usage or configuration error, 3 solver
nonconvergence. The environment variable DERNET_THREADS caps solver
threads (default 1, the deterministic mode).
"""

import argparse
import json
import os
import sys
import time

import numpy as np


def _apply_thread_cap():
    cap = os.environ.get("DERNET_THREADS", "1")
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, cap)


def _build_parser():
    parser = argparse.ArgumentParser(prog="dernet",
                                     description="discrete elastic net dynamics")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a scenario config file")
    sim.add_argument("config", help="path to a key = value scenario config")
    sim.add_argument("--out", default="run_out", help="output directory")
    sim.add_argument("--frames-every", type=float, default=None,
                     help="frame cadence in simulated seconds")
    sim.add_argument("--quiet", action="store_true", help="suppress progress output")

    mesh = sub.add_parser("mesh", help="generate and save a mesh")
    mesh_sub = mesh.add_subparsers(dest="mesh_kind", required=True)
    rod = mesh_sub.add_parser("rod")
    rod.add_argument("--length", type=float, required=True)
    rod.add_argument("--nodes", type=int, required=True)
    rod.add_argument("--out", required=True)
    hx = mesh_sub.add_parser("hexagon")
    hx.add_argument("--side", type=float, required=True)
    hx.add_argument("--grid", type=float, required=True)
    hx.add_argument("--subdivisions", type=int, required=True)
    hx.add_argument("--out", required=True)

    val = sub.add_parser("validate", help="run the self-check suite")
    val.add_argument("--json", dest="json_path", default=None,
                     help="also write the report as JSON")

    bench = sub.add_parser("bench", help="timing table for the vibration scenario")
    bench.add_argument("--subdivisions", type=int, nargs="+", default=[0, 1, 2],
                       help="hexagon subdivision levels to bench (side 10, grid 1)")
    bench.add_argument("--h", type=float, nargs="+", default=[0.001, 0.01],
                       help="time step sizes")
    bench.add_argument("--duration", type=float, default=0.1,
                       help="simulated seconds per measurement")
    bench.add_argument("--json", dest="json_path", default=None)
    return parser


def _cmd_simulate(args) -> int:
    from .errors import ConfigError, ContactLoopError, NonconvergenceError
    from .runio import (load_frame, parse_run_spec, prepare_run_dir, resolve_mesh,
                        write_frame, write_metrics, write_steps, write_stress)
    from .scenarios import (run_close, run_contact_drop, run_fold, run_shoot,
                            run_vibration, fold_motions, stress_field)

    spec = parse_run_spec(args.config)
    cfg = spec.scenario
    if args.frames_every is not None:
        cfg.frames_every = args.frames_every
    base_dir = os.path.dirname(os.path.abspath(args.config))
    mesh = resolve_mesh(spec.mesh_spec, base_dir)

    initial = None
    if cfg.kind in ("shoot", "close"):
        if not spec.initial_state_path:
            raise ConfigError(f"scenario {cfg.kind!r} needs initial_state = "
                              "<frame csv of a fold run>")
        path = spec.initial_state_path
        if not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        initial = load_frame(path)
        if initial.n_nodes != mesh.n_nodes:
            raise ConfigError("initial_state node count does not match the mesh")

    duration = cfg.duration
    if cfg.kind == "fold" and duration <= 0.0:
        duration = max(m.arrival_time for m in fold_motions(mesh, cfg)) + cfg.settle_time
        cfg.duration = duration
    manifest = prepare_run_dir(spec, mesh, args.out, duration)

    frame_idx = [0]

    def on_frame(t, state):
        i = frame_idx[0]
        write_frame(os.path.join(args.out, "frames", f"frame_{i:06d}.csv"), state)
        write_stress(os.path.join(args.out, "stress", f"stress_{i:06d}.csv"),
                     stress_field(state, mesh, spec.material, cfg.curvature))
        frame_idx[0] += 1
        if not args.quiet:
            print(f"t={t:8.3f}s frame {i}", file=sys.stderr)

    runners = {
        "vibration": lambda: run_vibration(mesh, cfg, spec.material, frame_callback=on_frame),
        "contact-drop": lambda: run_contact_drop(mesh, cfg, spec.material,
                                                 frame_callback=on_frame),
        "fold": lambda: run_fold(mesh, cfg, spec.material, frame_callback=on_frame),
        "shoot": lambda: run_shoot(mesh, initial, cfg, spec.material, frame_callback=on_frame),
        "close": lambda: run_close(mesh, initial, cfg, spec.material, frame_callback=on_frame),
    }
    try:
        result = runners[cfg.kind]()
    except (NonconvergenceError, ContactLoopError) as exc:
        print(f"dernet: solver failure: {exc}", file=sys.stderr)
        return 3
    write_metrics(os.path.join(args.out, "metrics.csv"), result.times, result.metrics)
    write_steps(os.path.join(args.out, "steps.csv"), result.times, result.reports)
    manifest.step_wall_times = [rep.wall_time for rep in result.reports]
    if not args.quiet:
        total_wall = sum(manifest.step_wall_times)
        print(f"dernet: completed {len(result.reports)} steps "
              f"({total_wall:.2f}s wall) -> {args.out}", file=sys.stderr)
    return 0


def _cmd_mesh(args) -> int:
    from .mesh import generate_hexagonal_web, generate_rod, save_mesh
    if args.mesh_kind == "rod":
        mesh = generate_rod(args.length, args.nodes)
    else:
        mesh = generate_hexagonal_web(args.side, args.grid, args.subdivisions)
    save_mesh(mesh, args.out)
    n, ns, nb = mesh.counts()
    print(f"wrote {args.out}: N={n} stretch={ns} bend={nb}")
    return 0


def _cmd_validate(args) -> int:
    from .validate import run_all
    results = run_all()
    for res in results:
        status = "PASS" if res["passed"] else "FAIL"
        print(f"[{status}] {res['check']}: error {res['error']:.3e} "
              f"(tolerance {res['tolerance']:.3e})")
    if args.json_path:
        with open(args.json_path, "w") as fh:
            json.dump(results, fh, indent=2)
            fh.write("\n")
    failed = [r for r in results if not r["passed"]]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return 0 if not failed else 1


def _cmd_bench(args) -> int:
    from .mesh import generate_hexagonal_web
    from .scenarios import default_config, run_vibration

    rows = []
    for sub_level in args.subdivisions:
        mesh = generate_hexagonal_web(10.0, 1.0, sub_level)
        for h in args.h:
            cfg = default_config("vibration", duration=args.duration,
                                 time_step=h, frames_every=1e9)
            started = time.perf_counter()
            result = run_vibration(mesh, cfg, collect_frames=False)
            wall = time.perf_counter() - started
            ratio = wall / args.duration
            rows.append({"n_nodes": mesh.n_nodes, "h": h,
                         "steps": len(result.reports), "wall_s": wall,
                         "compute_over_simulated": ratio})
    print(f"{'N':>6} {'h':>8} {'steps':>6} {'wall [s]':>10} {'ratio':>8}")
    for row in rows:
        print(f"{row['n_nodes']:>6} {row['h']:>8g} {row['steps']:>6} "
              f"{row['wall_s']:>10.3f} {row['compute_over_simulated']:>8.3f}")
    target = [r for r in rows if r["n_nodes"] >= 900 and r["h"] >= 0.01]
    for row in target:
        verdict = "met" if row["compute_over_simulated"] <= 1.0 else "missed"
        print(f"real-time target at N={row['n_nodes']}, h={row['h']:g}: "
              f"ratio {row['compute_over_simulated']:.3f} ({verdict})")
    if args.json_path:
        with open(args.json_path, "w") as fh:
            json.dump(rows, fh, indent=2)
            fh.write("\n")
    return 0


def main(argv=None) -> int:
    _apply_thread_cap()
    parser = _build_parser()
    args = parser.parse_args(argv)
    np.set_printoptions(precision=17)
    from .errors import ConfigError, DernetError, MeshParseError

    commands = {"simulate": _cmd_simulate, "mesh": _cmd_mesh,
                "validate": _cmd_validate, "bench": _cmd_bench}
    try:
        return commands[args.command](args)
    except (ConfigError, MeshParseError, FileNotFoundError) as exc:
        print(f"dernet: {exc}", file=sys.stderr)
        return 2
    except DernetError as exc:
        print(f"dernet: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
