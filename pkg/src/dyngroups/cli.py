"""Command-line entry point: ``dyngroups <subcommand> [options]``.

Exit codes: 0 ok, 1 a stage failed, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import copy
import sys
from pathlib import Path

from .clustering import CLUSTERERS, ModularityParams, cluster
from .errors import ConfigError, DynGroupsError
from .evaluation import EvalConfig, evaluate_dynamic, evaluate_static
from .graph import aggregate_static_graph, build_temporal_graph, read_graph, write_graph
from .groupness import HeadWeights, default_head_weights, ingest_scores, score_scenario, write_scores
from .groups import (
    DynamicGroups,
    StaticGroups,
    constant_dynamic,
    dynamic_to_static,
    partition_to_dynamic,
    read_dynamic,
    read_partition,
    read_static,
    write_dynamic,
    write_partition,
    write_static,
)
from .pipeline import (
    DEFAULTS,
    RunConfig,
    StageError,
    benchmark_variants,
    resolve_head,
    run_benchmark,
    run_pipeline,
    scored_pairs,
    train_scenario_head,
    write_benchmark,
)
from .scenario import corrupt_tracks, read_links, read_scenario, simulate, write_links, write_scenario

EXIT_OK, EXIT_STAGE, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class _Settings:
    """Config sections after flag overrides. ``cfg`` is None without --config."""

    def __init__(self, cfg: RunConfig | None, sections: dict):
        self.cfg = cfg
        self.s = sections

    def __getitem__(self, key):
        return self.s[key]

    def require_config(self, command: str) -> RunConfig:
        if self.cfg is None:
            raise UsageError(f"{command} needs --config (the simulation settings live there)")
        return self.cfg


def _overrides(args) -> dict:
    o: dict = {}
    if args.seed is not None:
        o["seed"] = args.seed
    if args.clusterer is not None:
        o.setdefault("clusterer", {})["method"] = args.clusterer
    if args.k is not None:
        o.setdefault("graph", {})["k"] = args.k
    if args.lambda_t is not None:
        o.setdefault("graph", {})["lambda_t"] = args.lambda_t
    if args.tau is not None:
        o.setdefault("graph", {})["tau"] = args.tau
    if args.mode is not None:
        o.setdefault("graph", {})["mode"] = args.mode
    if args.threshold is not None:
        o.setdefault("eval", {})["overlap_threshold"] = args.threshold
    if args.include_singletons:
        o.setdefault("eval", {})["include_singletons"] = True
    return o


def _settings(args) -> _Settings:
    o = _overrides(args)
    if args.config:
        cfg = RunConfig.load(args.config).replace(**o)
        return _Settings(cfg, cfg.to_dict())
    sections = copy.deepcopy(DEFAULTS)
    for key, value in o.items():
        if isinstance(value, dict):
            sections[key].update(value)
        else:
            sections[key] = value
    # placeholder scene: only the overridden sections are being checked here
    RunConfig.from_dict({**sections, "sim": {"num_people": 1, "num_frames": 1, "initial_groups": [[1]]}})
    return _Settings(None, sections)


def _out_dir(args, st: _Settings) -> Path:
    out = Path(args.out or (st.cfg.output_dir if st.cfg else "."))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _input(args, name: str, out: Path, default: str) -> Path:
    path = getattr(args, name) or out / default
    if not Path(path).is_file():
        raise FileNotFoundError(f"{name.replace('_', '-')} file not found: {path}")
    return Path(path)


# -- subcommands ---------------------------------------------------------------


def cmd_simulate(args, st: _Settings) -> None:
    cfg = st.require_config("simulate")
    out = _out_dir(args, st)
    scenario = simulate(cfg.sim, cfg.seed)
    links = corrupt_tracks(scenario, cfg.tracking["id_switch_rate"], cfg.tracking["confidence_noise_sigma"], cfg.seed)
    write_scenario(out / "scenario.jsonl", scenario)
    write_links(out / "links.jsonl", links)
    print(f"wrote {out / 'scenario.jsonl'} and {out / 'links.jsonl'}")


def cmd_train_head(args, st: _Settings) -> None:
    cfg = st.require_config("train-head")
    out = _out_dir(args, st)
    train_scenario_head(cfg).save(out / "head.json")
    print(f"wrote {out / 'head.json'}")


def cmd_score(args, st: _Settings) -> None:
    out = _out_dir(args, st)
    scenario = read_scenario(_input(args, "scenario", out, "scenario.jsonl"))
    if args.weights:
        head = HeadWeights.load(args.weights)
    elif st["scorer"]["kind"] == "ingest":
        observations = ingest_scores(st["scorer"]["path"])
        write_scores(out / "scores.jsonl", observations)
        print(f"wrote {out / 'scores.jsonl'}")
        return
    elif st["scorer"]["kind"] == "trained":
        head = resolve_head(st.require_config("score with a trained head"))
    else:
        weights = st["scorer"]["weights"]
        head = HeadWeights.load(weights) if weights else default_head_weights()
    observations = score_scenario(scenario, head, scored_pairs(scenario, st["graph"]["k"]), st["scorer"]["window"])
    write_scores(out / "scores.jsonl", observations)
    print(f"wrote {out / 'scores.jsonl'} ({len(observations)} pairs)")


def cmd_build_graph(args, st: _Settings) -> None:
    out = _out_dir(args, st)
    scenario = read_scenario(_input(args, "scenario", out, "scenario.jsonl"))
    links = read_links(_input(args, "links", out, "links.jsonl"))
    observations = ingest_scores(_input(args, "scores", out, "scores.jsonl"))
    g = st["graph"]
    persons_by_frame = {f: scenario.present(f) for f in scenario.frames}
    framewise, temporal = build_temporal_graph(observations, persons_by_frame, links, g["lambda_t"], g["tau"])
    graph = temporal if g["mode"] == "temporal" else aggregate_static_graph(framewise)
    write_graph(out / "graph.jsonl", graph)
    print(f"wrote {out / 'graph.jsonl'} ({len(graph.nodes)} nodes, {len(graph.edges)} edges)")


def cmd_cluster(args, st: _Settings) -> None:
    out = _out_dir(args, st)
    graph = read_graph(_input(args, "graph", out, "graph.jsonl"))
    c = st["clusterer"]
    params = ModularityParams(c["resolution"], c["min_gain"], int(c["max_passes"]))
    partition = cluster(graph, c["method"], seed=st["seed"], params=params, max_iters=int(c["max_iters"]))
    write_partition(out / "partition.jsonl", partition)
    print(f"wrote {out / 'partition.jsonl'} ({partition.num_communities} communities)")


def cmd_detect(args, st: _Settings) -> None:
    out = _out_dir(args, st)
    graph = read_graph(_input(args, "graph", out, "graph.jsonl"))
    partition = read_partition(_input(args, "partition", out, "partition.jsonl"))
    if st["graph"]["mode"] == "temporal":
        dynamic = partition_to_dynamic(partition, graph)
        static = dynamic_to_static(dynamic)
    else:
        scenario = read_scenario(_input(args, "scenario", out, "scenario.jsonl"))
        static = StaticGroups(tuple(frozenset(n.person for n in c) for c in partition.communities()))
        dynamic = constant_dynamic(static, {f: scenario.present(f) for f in scenario.frames})
    write_dynamic(out / "dynamic_groups.jsonl", dynamic)
    write_static(out / "static_groups.jsonl", static)
    print(f"wrote {out / 'dynamic_groups.jsonl'} and {out / 'static_groups.jsonl'}")


def cmd_evaluate(args, st: _Settings) -> None:
    out = _out_dir(args, st)
    scenario = read_scenario(_input(args, "scenario", out, "scenario.jsonl"))
    dynamic = read_dynamic(_input(args, "dynamic", out, "dynamic_groups.jsonl"))
    static = read_static(_input(args, "static", out, "static_groups.jsonl"))
    gt_dynamic = DynamicGroups(dict(scenario.gt_partitions))
    ec = EvalConfig(st["eval"]["overlap_threshold"], st["eval"]["include_singletons"])
    dyn = evaluate_dynamic(dynamic, gt_dynamic, ec)
    sta = evaluate_static(static, dynamic_to_static(gt_dynamic), ec)
    (out / "report_dynamic.json").write_text(dyn.to_json() + "\n")
    (out / "report_static.json").write_text(sta.to_json() + "\n")
    (out / "per_frame_dynamic.csv").write_text(dyn.per_frame_csv())
    print(f"dynamic  P={dyn.precision:.4f} R={dyn.recall:.4f} F1={dyn.f1:.4f}")
    print(f"static   P={sta.precision:.4f} R={sta.recall:.4f} F1={sta.f1:.4f}")


def cmd_pipeline(args, st: _Settings) -> None:
    cfg = st.require_config("pipeline")
    out = _out_dir(args, st)
    det = run_pipeline(cfg, out)
    print(f"dynamic F1={det.dynamic_report.f1:.4f}  static F1={det.static_report.f1:.4f}  ({out})")


def cmd_benchmark(args, st: _Settings) -> int:
    cfg = st.require_config("benchmark")
    out = _out_dir(args, st)
    n = int(cfg.benchmark["seeds"])
    seeds = [cfg.seed + i for i in range(n)]
    results = run_benchmark(benchmark_variants(cfg), seeds, int(cfg.benchmark["workers"]))
    rows = write_benchmark(out, results)
    for r in rows:
        print(f"{r['method']:<22} {r['clustering']:<8} F1 {r['f1']:.4f} ± {r['f1_std']:.4f}  "
              f"static {r['static_f1']:.4f}  {r['secs_per_frame'] * 1000:.2f} ms/frame  {r['status']}")
    print(f"wrote {out / 'benchmark.csv'} and {out / 'f1_curves.csv'}")
    return EXIT_OK if all(r["status"] == "ok" for r in rows) else EXIT_STAGE


COMMANDS = {
    "simulate": (cmd_simulate, "simulate a scene and its tracker links"),
    "score": (cmd_score, "score pairs of a scenario (or ingest external scores)"),
    "train-head": (cmd_train_head, "fit the groupness head on simulated scenes"),
    "build-graph": (cmd_build_graph, "build the temporal (or static) groupness graph"),
    "cluster": (cmd_cluster, "partition a graph"),
    "detect": (cmd_detect, "turn a partition into dynamic and static groups"),
    "evaluate": (cmd_evaluate, "score detected groups against ground truth"),
    "pipeline": (cmd_pipeline, "run every stage and write all artifacts"),
    "benchmark": (cmd_benchmark, "compare clusterers/scorers over seeds"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML run configuration")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out", help="output directory (default: config output_dir, else .)")
    common.add_argument("--clusterer", choices=CLUSTERERS)
    common.add_argument("--k", type=int, help="k-NN pair pruning (0 scores all pairs)")
    common.add_argument("--lambda-t", dest="lambda_t", type=float, help="temporal edge multiplier")
    common.add_argument("--tau", type=float, help="drop spatial edges with P_g below this")
    common.add_argument("--mode", choices=("temporal", "static"), help="graph mode")
    common.add_argument("--threshold", type=float, help="half-overlap threshold for a match")
    common.add_argument("--include-singletons", action="store_true", help="count singleton groups")
    files = argparse.ArgumentParser(add_help=False)
    for name in ("scenario", "links", "scores", "graph", "partition", "dynamic", "static"):
        files.add_argument(f"--{name}", help=f"{name} file (default: inside --out)")
    files.add_argument("--weights", help="head weights JSON for score")

    parser = argparse.ArgumentParser(prog="dyngroups", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    for name, (_, text) in COMMANDS.items():
        sub.add_parser(name, parents=[common, files], help=text, description=text)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    func = COMMANDS[args.command][0]
    try:
        st = _settings(args)
        code = func(args, st)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        if args.config and not Path(args.config).is_file():
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_USAGE
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except StageError as exc:
        print(f"error: stage {exc.stage} failed: {type(exc.cause).__name__}: {exc.cause}", file=sys.stderr)
        return EXIT_STAGE
    except (DynGroupsError, OSError, ValueError, KeyError) as exc:
        print(f"error: {args.command} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_STAGE
    return EXIT_OK if code is None else code


if __name__ == "__main__":
    sys.exit(main())
