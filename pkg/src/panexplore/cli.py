"""Command-line entry points: gen-world, run, bench, report, slab."""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from . import bench
from .decision import encode_png, encode_ppm, endpoint_from_env, render_map_slab
from .errors import ConfigError, ContractError, DomainError
from .metrics import aggregate, format_table
from .orchestrator import RECENT_TRACE, EpisodeConfig, Explorer, transitions_jsonl
from .worldgen import KINDS, gen_world, sample_starts
from .worldsim import GroundTruthWorld, Pose, dumps_world, load_world

EXIT_ABORTED = 1
EXIT_USAGE = 2


def _add_episode_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("episode settings (override --config)")
    g.add_argument("--config", help="key = value file of episode settings")
    for key in bench.CONFIG_KEYS:
        g.add_argument("--" + key.replace("_", "-"), dest=key, default=None, metavar="V")


def _episode_config(args: argparse.Namespace, base: EpisodeConfig | None = None) -> EpisodeConfig:
    cfg = base or EpisodeConfig()
    if getattr(args, "config", None):
        cfg = bench.apply_overrides(cfg, bench.parse_kv(Path(args.config).read_text(encoding="utf-8")))
    return bench.apply_overrides(cfg, {k: getattr(args, k) for k in bench.CONFIG_KEYS})


def _add_start_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--start", nargs="+", type=float, metavar="C",
                   help="start position in meters: X Y [Z]; default is a sampled start")
    p.add_argument("--yaw", type=float, default=0.0, help="start yaw in radians")
    p.add_argument("--start-seed", type=int, default=0, help="seed for the sampled start")


def _start_pose(args: argparse.Namespace, world: GroundTruthWorld) -> Pose:
    if args.start is None:
        return sample_starts(world, 1, args.start_seed)[0]
    xyz = list(args.start)
    if len(xyz) == 2:
        xyz.append(0.5 * world.resolution)
    if len(xyz) != 3:
        raise ConfigError("--start takes X Y or X Y Z")
    return Pose(tuple(xyz), args.yaw)


def cmd_gen_world(args: argparse.Namespace) -> int:
    world = gen_world(args.kind, tuple(args.dims), args.seed, resolution=args.resolution,
                      junctions=args.junctions, spacing=args.spacing, width=args.width,
                      min_room=args.min_room)
    text = dumps_world(world)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def _explorer(args: argparse.Namespace) -> Explorer:
    world = load_world(args.world)
    cfg = _episode_config(args)
    endpoint = endpoint_from_env() if cfg.policy.uses_model else None
    method = bench.method_label(cfg.policy, cfg.r_v)
    return Explorer(world, _start_pose(args, world), cfg, endpoint, method_id=method)


def cmd_run(args: argparse.Namespace) -> int:
    ex = _explorer(args)
    res = ex.run()
    if args.trace:
        Path(args.trace).write_text(transitions_jsonl(res.transitions), encoding="utf-8")
    if args.tree:
        Path(args.tree).write_text(res.tree.to_json() + "\n", encoding="utf-8")
    out = res.metrics.to_dict()
    out["complete"] = ex.complete
    out["rejections"] = ex.rejections
    print(json.dumps(out, sort_keys=True))
    return EXIT_ABORTED if res.metrics.aborted else 0


def cmd_bench(args: argparse.Namespace) -> int:
    spec = bench.load_spec(args.spec)
    if args.jobs is not None:
        spec.jobs = args.jobs
    if args.output is not None:
        spec.output = args.output
    spec.config = bench.apply_overrides(spec.config, {k: getattr(args, k) for k in bench.CONFIG_KEYS})
    outcome = bench.run_bench(spec)
    print(f"{len(outcome.records)} episodes, {outcome.aborted} aborted -> {outcome.output}")
    return EXIT_ABORTED if outcome.aborted else 0


def cmd_report(args: argparse.Namespace) -> int:
    records = bench.read_results(Path(args.results).read_text(encoding="utf-8"))
    if not records:
        raise ConfigError(f"no results in {args.results}")
    if any(r["metrics"].get("auc") is None for r in records):
        bench.attach_auc(records)
    methods = sorted({r["method_id"] for r in records})
    baseline = args.baseline or methods[0]
    out = Path(args.output) if args.output else Path(args.results).parent
    out.mkdir(parents=True, exist_ok=True)
    bench.write_reports(records, baseline, out)
    rows = aggregate(bench.metrics_of(records), baseline)
    for m in ([args.method] if args.method else [m for m in methods if m != baseline]):
        print(format_table(rows, m, baseline))
    aborted = sum(bool(r["metrics"]["aborted"]) for r in records)
    return EXIT_ABORTED if aborted else 0


def cmd_slab(args: argparse.Namespace) -> int:
    ex = _explorer(args)
    ex.begin()
    while not ex.done and ex.cycles < args.cycles:
        ex.step()
    img = render_map_slab(ex.grid, ex.pose, ex.trace.positions[-RECENT_TRACE:],
                          list(ex.frontiers.frontiers), ex._decision_points())
    fmt = args.format or ("ppm" if args.output.endswith(".ppm") else "png")
    data = encode_ppm(img) if fmt == "ppm" else encode_png(img)
    Path(args.output).write_bytes(data)
    print(f"{img.shape[1]}x{img.shape[0]} slab after {ex.cycles} cycles -> {args.output}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="panexplore", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-world", help="write a seeded synthetic world")
    p.add_argument("--kind", choices=KINDS, required=True)
    p.add_argument("--dims", nargs=2, type=int, metavar=("X", "Y"), required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--resolution", type=float, default=0.5)
    p.add_argument("--junctions", type=int, default=3, help="corridor-tree: min branch junctions")
    p.add_argument("--spacing", type=int, default=6, help="corridor-tree: junction pitch (cells)")
    p.add_argument("--width", type=int, default=2, help="corridor-tree: corridor width (cells)")
    p.add_argument("--min-room", type=int, default=4, help="rooms: minimum room side (cells)")
    p.add_argument("-o", "--output", help="world file (default stdout)")
    p.set_defaults(func=cmd_gen_world)

    p = sub.add_parser("run", help="run one episode")
    p.add_argument("world")
    _add_start_flags(p)
    _add_episode_flags(p)
    p.add_argument("--trace", help="write FSM transitions as JSONL")
    p.add_argument("--tree", help="write the selection tree as JSON")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("bench", help="run a sweep described by a key = value file")
    p.add_argument("spec")
    p.add_argument("--jobs", type=int)
    p.add_argument("--output")
    for key in bench.CONFIG_KEYS:
        p.add_argument("--" + key.replace("_", "-"), dest=key, default=None, metavar="V")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("report", help="aggregate a results.jsonl")
    p.add_argument("results")
    p.add_argument("--baseline", help="reference method label (default: first label)")
    p.add_argument("--method", help="print the comparison table for this label only")
    p.add_argument("--output", help="report directory (default: next to results)")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("slab", help="render the belief map slab after some cycles")
    p.add_argument("world")
    _add_start_flags(p)
    _add_episode_flags(p)
    p.add_argument("--cycles", type=int, default=math.inf)
    p.add_argument("--format", choices=("png", "ppm"))
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_slab)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ContractError, DomainError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

