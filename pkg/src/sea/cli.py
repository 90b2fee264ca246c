"""Command line entry points.

Subcommands cover the full pipeline: scene generation, random-walk log
collection, place clustering, atlas construction, navigation runs, metric
evaluation, localization evaluation, and figure rendering. SEA_SEED in
the environment overrides any configured seed.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np


def _seed_override(seed: int) -> int:
    env = os.environ.get("SEA_SEED")
    return int(env) if env else seed


def _parse_seeds(text: str) -> list[int]:
    """'0:20' is a range, '3,7,9' a list, '5' a single seed."""
    if ":" in text:
        a, b = text.split(":")
        return list(range(int(a), int(b)))
    return [int(v) for v in text.split(",")]


def cmd_gen_scenes(args) -> int:
    from .simworld import GenConfig, generate_house

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config = GenConfig(rooms_min=args.rooms_min, rooms_max=args.rooms_max)
    for seed in _parse_seeds(args.seeds):
        world = generate_house(seed, config)
        world.save(out / f"scene_{seed:05d}.json")
        print(f"scene {seed}: {world.shape[0]}x{world.shape[1]} cells, "
              f"{len(world.rooms)} rooms, {len(world.objects)} objects")
    return 0


def cmd_explore(args) -> int:
    from .harness import explore_scene
    from .simworld import GenConfig, generate_house

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config = GenConfig(rooms_min=args.rooms_min, rooms_max=args.rooms_max)
    for seed in _parse_seeds(args.seeds):
        world = generate_house(seed, config)
        for e in range(args.episodes):
            rows = explore_scene(world, args.steps, seed=seed * 1000 + e)
            path = out / f"walk_{seed:05d}_{e:03d}.jsonl"
            with open(path, "w") as f:
                for row in rows:
                    f.write(json.dumps(row) + "\n")
        print(f"scene {seed}: {args.episodes} walks logged")
    return 0


def _load_logs(log_dir) -> dict[int, list[list[dict]]]:
    logs: dict[int, list[list[dict]]] = {}
    skipped = 0
    for path in sorted(Path(log_dir).glob("*.jsonl")):
        rows = []
        try:
            with open(path) as f:
                for line in f:
                    rows.append(json.loads(line))
        except (json.JSONDecodeError, OSError) as e:
            print(f"skipping corrupt log {path.name}: {e}", file=sys.stderr)
            skipped += 1
            continue
        if rows:
            logs.setdefault(int(rows[0]["scene"]), []).append(rows)
    if skipped:
        print(f"{skipped} corrupt logs skipped", file=sys.stderr)
    return logs


def cmd_clusters(args) -> int:
    from .harness import cluster_from_logs

    logs = _load_logs(args.logs)
    if not logs:
        print("no usable logs found", file=sys.stderr)
        return 1
    model = cluster_from_logs(logs, args.k, seed=_seed_override(args.seed))
    model.save(args.out)
    print(f"clusters: k={model.k} dim={model.dim} inertia={model.inertia:.3f} -> {args.out}")
    return 0


def cmd_atlas_build(args) -> int:
    from .features import ClusterModel
    from .harness import atlas_from_logs

    logs = _load_logs(args.logs)
    if not logs:
        print("no usable logs found", file=sys.stderr)
        return 1
    clusters = ClusterModel.load(args.clusters)
    atlas = atlas_from_logs(logs, clusters)
    atlas.save(args.out)
    print(f"atlas: {atlas.n_places} places x {atlas.n_categories} categories "
          f"over {atlas.n_scenes} scenes -> {args.out}")
    return 0


def cmd_run(args) -> int:
    from .atlas import Atlas
    from .features import ClusterModel
    from .harness import (FLAG_MATRIX, EpisodeSpec, compute_metrics, run_episode)
    from .simworld import GenConfig, NoiseModel, generate_house, sample_start

    clusters = ClusterModel.load(args.clusters)
    atlas = Atlas.load(args.atlas)
    flags = FLAG_MATRIX[args.config]
    noise = NoiseModel(level=args.noise_level)
    gen = GenConfig(rooms_min=args.rooms_min, rooms_max=args.rooms_max)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    master = np.random.default_rng(_seed_override(args.seed))
    rows = []
    results = []
    traces_dir = out / "traces"
    traces_dir.mkdir(exist_ok=True)
    from .simworld import GOAL_CATEGORIES

    for scene_seed in _parse_seeds(args.seeds):
        world = generate_house(scene_seed, gen)
        present = [c for c in world.categories_present() if c in GOAL_CATEGORIES]
        rng = np.random.default_rng([_seed_override(args.seed), scene_seed])
        for e in range(args.episodes):
            x, y, h = sample_start(world, rng)
            goal = int(present[int(rng.integers(len(present)))])
            spec = EpisodeSpec(scene_seed, (x, y, h), goal, int(rng.integers(1 << 31)))
            res, trace = run_episode(world, atlas, clusters, spec, flags=flags, noise=noise)
            results.append(res)
            rows.append(
                {
                    "config": args.config,
                    "scene_seed": scene_seed,
                    "episode": e,
                    "goal_category": goal,
                    "success": int(res.success),
                    "path_length": f"{res.path_length:.4f}",
                    "shortest_length": f"{res.shortest_length:.4f}",
                    "final_dist": f"{res.final_dist:.4f}",
                    "steps": res.steps,
                    "stop_reason": res.stop_reason,
                }
            )
            with open(traces_dir / f"ep_{scene_seed:05d}_{e:03d}.jsonl", "w") as f:
                for r in trace:
                    f.write(json.dumps(r) + "\n")
        _ = master
    with open(out / "results.csv", "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    metrics = compute_metrics(results)
    with open(out / "report.json", "w") as f:
        json.dump({"metrics": metrics, "n_episodes": len(results)}, f, indent=2)
    print(json.dumps(metrics, indent=2))
    return 0


def cmd_eval(args) -> int:
    from .harness import EpisodeResult, compute_metrics

    results = []
    with open(args.results) as f:
        for row in csv.DictReader(f):
            results.append(
                EpisodeResult(
                    success=row["success"] == "1",
                    path_length=float(row["path_length"]),
                    shortest_length=float(row["shortest_length"]),
                    final_dist=float(row["final_dist"]),
                    steps=int(row["steps"]),
                    stop_reason=row["stop_reason"],
                )
            )
    metrics = compute_metrics(results)
    print(json.dumps({"n_episodes": len(results), **metrics}, indent=2))
    return 0


def cmd_localize(args) -> int:
    from .localize import accuracy_at, localize_query, node_distance_estimate
    from .sgm import SemanticGraphMap

    sgm = SemanticGraphMap.load(args.sgm)
    rows = []
    pairs = []
    with open(args.queries) as f:
        for line in f:
            pairs.append(json.loads(line))
    for q in pairs:
        kwargs = {}
        if args.channels in ("io", "iop") and "src_objects" in q:
            kwargs["object_histogram"] = np.asarray(q["src_objects"], dtype=np.float64)
        if args.channels == "iop" and "src_place" in q:
            kwargs["place_cluster"] = int(q["src_place"])
        src = localize_query(sgm, np.asarray(q["src_feature"]), **kwargs)
        kwargs = {}
        if args.channels in ("io", "iop") and "dst_objects" in q:
            kwargs["object_histogram"] = np.asarray(q["dst_objects"], dtype=np.float64)
        if args.channels == "iop" and "dst_place" in q:
            kwargs["place_cluster"] = int(q["dst_place"])
        dst = localize_query(sgm, np.asarray(q["dst_feature"]), **kwargs)
        est = node_distance_estimate(sgm, src.matched_node, dst.matched_node)
        truth = float(q["true_distance"])
        rows.append(
            {
                "src_node": src.matched_node,
                "dst_node": dst.matched_node,
                "src_confidence": f"{src.confidence:.4f}",
                "dst_confidence": f"{dst.confidence:.4f}",
                "estimate": f"{est:.4f}",
                "truth": f"{truth:.4f}",
                "abs_error": f"{abs(est - truth):.4f}",
            }
        )
    with open(args.out, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    scored = [(float(r["estimate"]), float(r["truth"])) for r in rows]
    print(json.dumps(
        {
            "n": len(scored),
            "acc@0.5m": accuracy_at(scored, 0.5),
            "acc@1m": accuracy_at(scored, 1.0),
        },
        indent=2,
    ))
    return 0


def cmd_suite(args) -> int:
    from .harness import SuiteConfig, run_suite

    if args.config:
        with open(args.config) as f:
            config = SuiteConfig.from_json(json.load(f))
    else:
        config = SuiteConfig()
    if os.environ.get("SEA_SEED"):
        config.seed = int(os.environ["SEA_SEED"])
    report = run_suite(config, out_dir=args.out, progress=lambda msg: print(msg, flush=True))
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def cmd_plot(args) -> int:
    from . import plots
    from .atlas import Atlas

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    made = []
    if args.atlas:
        made += plots.atlas_heatmaps(Atlas.load(args.atlas), out)
    if args.report:
        with open(args.report) as f:
            report = json.load(f)
        if "noise_sweep" in report:
            made.append(plots.noise_curve(
                {int(k): v for k, v in report["noise_sweep"].items()},
                out / "noise_sweep.svg",
            ))
        metrics = report.get("metrics", {})
        if metrics and all(isinstance(v, dict) for v in metrics.values()):
            made.append(plots.ablation_bars(metrics, out / "ablations.svg"))
    for p in made:
        print(f"wrote {p}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="sea",
        description="Semantic environment atlas navigation pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-scenes", help="generate procedural houses")
    p.add_argument("--seeds", required=True, help="range a:b or comma list")
    p.add_argument("--out", required=True)
    p.add_argument("--rooms-min", type=int, default=4)
    p.add_argument("--rooms-max", type=int, default=8)
    p.set_defaults(func=cmd_gen_scenes)

    p = sub.add_parser("explore", help="collect random-walk observation logs")
    p.add_argument("--seeds", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--episodes", type=int, default=10)
    p.add_argument("--steps", type=int, default=250)
    p.add_argument("--rooms-min", type=int, default=4)
    p.add_argument("--rooms-max", type=int, default=8)
    p.set_defaults(func=cmd_explore)

    p = sub.add_parser("clusters", help="fit place clusters from logs")
    p.add_argument("--logs", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_clusters)

    p = sub.add_parser("atlas", help="atlas operations")
    atlas_sub = p.add_subparsers(dest="atlas_command", required=True)
    pb = atlas_sub.add_parser("build", help="aggregate logs into an atlas")
    pb.add_argument("--logs", required=True)
    pb.add_argument("--clusters", required=True)
    pb.add_argument("--out", required=True)
    pb.set_defaults(func=cmd_atlas_build)

    p = sub.add_parser("run", help="run navigation episodes")
    p.add_argument("--seeds", required=True, help="test scene seeds")
    p.add_argument("--clusters", required=True)
    p.add_argument("--atlas", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--episodes", type=int, default=5)
    p.add_argument("--config", choices=("full", "no_update", "random_subgoal", "no_place_stop"),
                   default="full")
    p.add_argument("--noise-level", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rooms-min", type=int, default=4)
    p.add_argument("--rooms-max", type=int, default=8)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("eval", help="recompute metrics from results.csv")
    p.add_argument("--results", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("localize", help="evaluate localization queries")
    p.add_argument("--sgm", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--channels", choices=("i", "io", "iop"), default="iop")
    p.set_defaults(func=cmd_localize)

    p = sub.add_parser("suite", help="full evaluation suite with report")
    p.add_argument("--config", help="suite config JSON")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_suite)

    p = sub.add_parser("plot", help="render report figures")
    p.add_argument("--atlas")
    p.add_argument("--report")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
