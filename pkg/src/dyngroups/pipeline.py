"""End-to-end runs: simulate -> score -> graph -> cluster -> detect -> evaluate."""
from __future__ import annotations

import copy
import csv
import hashlib
import io
import json
import os
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .clustering import CLUSTERERS, ModularityParams, cluster
from .errors import ConfigError, DynGroupsError
from .evaluation import EvalConfig, EvalReport, evaluate_dynamic, evaluate_static
from .graph import aggregate_static_graph, build_temporal_graph, knn_pairs, write_graph
from .groupness import (
    HeadWeights,
    default_head_weights,
    fit_head,
    ingest_scores,
    labeled_pairs,
    score_scenario,
    write_scores,
)
from .groups import (
    DynamicGroups,
    StaticGroups,
    constant_dynamic,
    dynamic_to_static,
    partition_to_dynamic,
    write_dynamic,
    write_partition,
    write_static,
)
from .rng import derive_seed
from .scenario import SimConfig, corrupt_tracks, simulate, write_links, write_scenario

try:  # Python 3.11+
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

DEFAULTS = {
    "seed": 0,
    "output_dir": "runs/default",
    "tracking": {"id_switch_rate": 0.0, "confidence_noise_sigma": 0.0},
    "scorer": {
        "kind": "handcrafted",
        "window": 5,
        "path": "",
        "weights": "",
        "train_scenarios": 4,
        "train_sim": {},  # SimConfig overrides for the training scenes
        "lr": 0.2,
        "epochs": 1000,
        "l2": 0.0,
    },
    "graph": {"mode": "temporal", "k": 4, "lambda_t": 1.0, "tau": 0.0},
    "clusterer": {"method": "louvain", "resolution": 1.0, "min_gain": 1e-7, "max_passes": 50, "max_iters": 100},
    "eval": {"overlap_threshold": 0.5, "include_singletons": False},
    "benchmark": {"seeds": 1, "clusterers": ["louvain", "cnm", "lp"], "scorers": [], "modes": [], "workers": 0},
}

SCORER_KINDS = ("handcrafted", "trained", "ingest")
GRAPH_MODES = ("temporal", "static")


class StageError(DynGroupsError):
    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage {stage!r} failed: {type(cause).__name__}: {cause}")


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass
class RunConfig:
    sim: SimConfig
    seed: int = 0
    output_dir: str = "runs/default"
    tracking: dict = field(default_factory=lambda: dict(DEFAULTS["tracking"]))
    scorer: dict = field(default_factory=lambda: dict(DEFAULTS["scorer"]))
    graph: dict = field(default_factory=lambda: dict(DEFAULTS["graph"]))
    clusterer: dict = field(default_factory=lambda: dict(DEFAULTS["clusterer"]))
    eval: dict = field(default_factory=lambda: dict(DEFAULTS["eval"]))
    benchmark: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS["benchmark"]))

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if "sim" not in d:
            raise ConfigError("sim", "missing [sim] section")
        unknown = set(d) - set(DEFAULTS) - {"sim"}
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown section")
        merged = _merge(DEFAULTS, {k: v for k, v in d.items() if k != "sim"})
        for section in ("tracking", "scorer", "graph", "clusterer", "eval", "benchmark"):
            extra = set(merged[section]) - set(DEFAULTS[section])
            if extra:
                raise ConfigError(f"{section}.{sorted(extra)[0]}", "unknown setting")
        cfg = cls(sim=SimConfig.from_dict(dict(d["sim"])), **merged)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"config file not found: {path}")
        with open(path, "rb") as fh:
            try:
                data = tomllib.load(fh)
            except tomllib.TOMLDecodeError as exc:
                raise ConfigError(str(path), f"invalid TOML: {exc}") from None
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "output_dir": self.output_dir,
            "sim": self.sim.to_dict(),
            "tracking": self.tracking,
            "scorer": self.scorer,
            "graph": self.graph,
            "clusterer": self.clusterer,
            "eval": self.eval,
            "benchmark": self.benchmark,
        }

    def config_hash(self) -> str:
        d = self.to_dict()
        d.pop("output_dir")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()

    def replace(self, **sections) -> "RunConfig":
        """Copy with section-level overrides, e.g. ``replace(seed=3, graph={"k": 2})``."""
        d = self.to_dict()
        d = _merge(d, sections)
        return RunConfig.from_dict(d)

    def validate(self) -> None:
        self.sim.validate()
        t = self.tracking
        if not 0.0 <= t["id_switch_rate"] <= 1.0:
            raise ConfigError("tracking.id_switch_rate", "must lie in [0, 1]")
        if t["confidence_noise_sigma"] < 0:
            raise ConfigError("tracking.confidence_noise_sigma", "must be non-negative")
        if self.scorer["kind"] not in SCORER_KINDS:
            raise ConfigError("scorer.kind", f"expected one of {SCORER_KINDS}")
        w = self.scorer["window"]
        if w < 1 or w % 2 == 0:
            raise ConfigError("scorer.window", "must be odd and >= 1")
        try:
            SimConfig.from_dict(_merge(self.sim.to_dict(), self.scorer["train_sim"])).validate()
        except ConfigError as e:
            raise ConfigError(f"scorer.train_sim.{e.field}", e.message) from None
        if self.scorer["kind"] == "ingest" and not self.scorer["path"]:
            raise ConfigError("scorer.path", "required when scorer.kind = 'ingest'")
        if self.graph["mode"] not in GRAPH_MODES:
            raise ConfigError("graph.mode", f"expected one of {GRAPH_MODES}")
        if self.graph["k"] < 0:
            raise ConfigError("graph.k", "must be >= 0 (0 scores all pairs)")
        if self.graph["lambda_t"] < 0:
            raise ConfigError("graph.lambda_t", "must be non-negative")
        if self.clusterer["method"] not in CLUSTERERS:
            raise ConfigError("clusterer.method", f"expected one of {CLUSTERERS}")
        try:
            self.modularity_params()
            self.eval_config()
        except DynGroupsError as exc:
            raise ConfigError("clusterer/eval", str(exc)) from None

    def modularity_params(self) -> ModularityParams:
        c = self.clusterer
        return ModularityParams(c["resolution"], c["min_gain"], int(c["max_passes"]))

    def eval_config(self) -> EvalConfig:
        return EvalConfig(float(self.eval["overlap_threshold"]), bool(self.eval["include_singletons"]))


# -- stages --------------------------------------------------------------------


def scored_pairs(scenario, k: int):
    if k and k > 0:
        return knn_pairs(scenario.states, k)
    return None  # all pairs


def train_scenario_head(cfg: RunConfig) -> HeadWeights:
    """Fit the head on freshly simulated scenarios with seeds derived from cfg.seed."""
    sc = cfg.scorer
    Xs, ys = [], []
    sim = SimConfig.from_dict(_merge(cfg.sim.to_dict(), sc["train_sim"]))
    for i in range(int(sc["train_scenarios"])):
        scen = simulate(sim, derive_seed(cfg.seed, f"train-{i}"))
        X, y = labeled_pairs(scen, scored_pairs(scen, cfg.graph["k"]), sc["window"])
        Xs.append(X)
        ys.append(y)
    X, y = np.concatenate(Xs), np.concatenate(ys)
    weights, _ = fit_head(X, y, lr=sc["lr"], epochs=int(sc["epochs"]), l2=sc["l2"], seed=cfg.seed)
    return weights


def resolve_head(cfg: RunConfig) -> HeadWeights | None:
    kind = cfg.scorer["kind"]
    if kind == "trained":
        return train_scenario_head(cfg)
    if kind == "handcrafted":
        if cfg.scorer["weights"]:
            return HeadWeights.load(cfg.scorer["weights"])
        return default_head_weights()
    return None


@dataclass
class Detection:
    scenario: object
    links: object
    observations: list
    graph: object
    partition: object
    dynamic: DynamicGroups
    static: StaticGroups
    gt_dynamic: DynamicGroups
    gt_static: StaticGroups
    dynamic_report: EvalReport | None = None
    static_report: EvalReport | None = None
    timings: dict = field(default_factory=dict)


class _Timer:
    def __init__(self, timings: dict):
        self.timings = timings
        self.stage = None

    def __call__(self, stage):
        self.stage = stage
        return self

    def __enter__(self):
        self.t0 = time.perf_counter()

    def __exit__(self, exc_type, exc, tb):
        self.timings[self.stage] = time.perf_counter() - self.t0
        if exc is not None and not isinstance(exc, StageError):
            raise StageError(self.stage, exc) from exc
        return False


def detect(cfg: RunConfig, head: HeadWeights | None = None, sink: dict | None = None) -> Detection:
    """Run every stage in memory. ``head`` overrides the configured scorer.

    ``sink`` (optional) receives each intermediate as soon as it exists, so a
    caller can persist partial results when a later stage fails.
    """
    sink = {} if sink is None else sink
    timings: dict[str, float] = {}
    stage = _Timer(timings)
    with stage("simulate"):
        scenario = simulate(cfg.sim, cfg.seed)
        sink["scenario"] = scenario
    with stage("track"):
        links = corrupt_tracks(
            scenario, cfg.tracking["id_switch_rate"], cfg.tracking["confidence_noise_sigma"], cfg.seed
        )
        sink["links"] = links
    with stage("score"):
        if cfg.scorer["kind"] == "ingest" and head is None:
            observations = ingest_scores(cfg.scorer["path"])
        else:
            if head is None:
                head = resolve_head(cfg)
            observations = score_scenario(
                scenario, head, scored_pairs(scenario, cfg.graph["k"]), cfg.scorer["window"]
            )
        sink["observations"] = observations
    persons_by_frame = {f: scenario.present(f) for f in scenario.frames}
    with stage("build_graph"):
        framewise, temporal = build_temporal_graph(
            observations, persons_by_frame, links, cfg.graph["lambda_t"], cfg.graph["tau"]
        )
        graph = temporal if cfg.graph["mode"] == "temporal" else aggregate_static_graph(framewise)
        sink["graph"] = graph
    with stage("cluster"):
        partition = cluster(
            graph,
            cfg.clusterer["method"],
            seed=cfg.seed,
            params=cfg.modularity_params(),
            max_iters=int(cfg.clusterer["max_iters"]),
        )
        sink["partition"] = partition
    with stage("detect"):
        if cfg.graph["mode"] == "temporal":
            dynamic = partition_to_dynamic(partition, graph)
            static = dynamic_to_static(dynamic)
        else:
            static = StaticGroups(tuple(frozenset(n.person for n in c) for c in partition.communities()))
            dynamic = constant_dynamic(static, persons_by_frame)
        gt_dynamic = DynamicGroups(dict(scenario.gt_partitions))
        gt_static = dynamic_to_static(gt_dynamic)
        sink["dynamic"], sink["static"] = dynamic, static
    det = Detection(scenario, links, observations, graph, partition, dynamic, static, gt_dynamic, gt_static)
    with stage("evaluate"):
        ec = cfg.eval_config()
        det.dynamic_report = evaluate_dynamic(dynamic, gt_dynamic, ec)
        det.static_report = evaluate_static(static, gt_static, ec)
    det.timings = timings
    return det


# -- run with artifacts ----------------------------------------------------------


def _versions() -> dict:
    return {
        "dyngroups": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
    }


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def run_pipeline(cfg: RunConfig, output_dir=None, head: HeadWeights | None = None) -> Detection:
    """Run and write every artifact plus ``manifest.json`` to ``output_dir``.

    On failure the artifacts produced so far are kept, the manifest records
    the failed stage, and the StageError is re-raised.
    """
    out = Path(output_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    t_start = time.perf_counter()
    wall = {"started_unix": time.time()}
    manifest = {
        "config": cfg.to_dict(),
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "versions": _versions(),
        "status": "running",
        "artifacts": [],
    }
    _write_json(out / "manifest.json", manifest)
    sink: dict = {}
    det = None
    error = None
    try:
        det = detect(cfg, head, sink)
    except StageError as exc:
        error = exc
    writers = [
        ("scenario", "scenario.jsonl", write_scenario),
        ("links", "links.jsonl", write_links),
        ("observations", "scores.jsonl", write_scores),
        ("graph", "graph.jsonl", write_graph),
        ("partition", "partition.jsonl", write_partition),
        ("dynamic", "dynamic_groups.jsonl", write_dynamic),
        ("static", "static_groups.jsonl", write_static),
    ]
    for key, name, writer in writers:
        if key in sink:
            writer(out / name, sink[key])
            manifest["artifacts"].append(name)
    if det is not None:
        (out / "report_dynamic.json").write_text(det.dynamic_report.to_json() + "\n")
        (out / "report_static.json").write_text(det.static_report.to_json() + "\n")
        (out / "per_frame_dynamic.csv").write_text(det.dynamic_report.per_frame_csv())
        (out / "reports.csv").write_text(_reports_csv(det))
        manifest["artifacts"] += ["report_dynamic.json", "report_static.json", "per_frame_dynamic.csv", "reports.csv"]
        manifest["status"] = "ok"
        stages = det.timings
    else:
        manifest["status"] = "failed"
        manifest["failed_stage"] = error.stage
        manifest["error"] = f"{type(error.cause).__name__}: {error.cause}"
        stages = {}
    manifest["timing"] = {
        "stages_secs": stages,
        "total_secs": time.perf_counter() - t_start,
        **wall,
    }
    _write_json(out / "manifest.json", manifest)
    if error is not None:
        raise error
    return det


def _reports_csv(det: Detection) -> str:
    buf = io.StringIO()
    fields = ["task", "tp", "fp", "fn", "precision", "recall", "f1"]
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    w.writeheader()
    w.writerow({"task": "dynamic", **det.dynamic_report.csv_row()})
    w.writerow({"task": "static", **det.static_report.csv_row()})
    return buf.getvalue()


# -- benchmark -----------------------------------------------------------------


@dataclass
class VariantResult:
    method: str
    clustering: str
    seed: int
    status: str
    precision: float = float("nan")
    recall: float = float("nan")
    f1: float = float("nan")
    static_f1: float = float("nan")
    secs_per_frame: float = float("nan")
    per_frame_f1: list = field(default_factory=list)
    error: str = ""


def _run_variant(args):
    cfg, method, head = args
    try:
        det = detect(cfg, head)
    except Exception as exc:  # a failing variant must not stop the benchmark
        return VariantResult(method, cfg.clusterer["method"], cfg.seed, "error", error=str(exc))
    r = det.dynamic_report
    n_frames = max(len(det.scenario.frames), 1)
    return VariantResult(
        method,
        cfg.clusterer["method"],
        cfg.seed,
        "ok",
        r.precision,
        r.recall,
        r.f1,
        det.static_report.f1,
        det.timings["cluster"] / n_frames,
        [(fr.frame, fr.f1) for fr in r.per_frame],
    )


def benchmark_variants(base: RunConfig) -> list[tuple[str, RunConfig]]:
    """(method label, config) for every scorer x mode x clusterer combination."""
    b = base.benchmark
    scorers = b["scorers"] or [base.scorer["kind"]]
    modes = b["modes"] or [base.graph["mode"]]
    out = []
    for scorer in scorers:
        for mode in modes:
            for clusterer in b["clusterers"]:
                cfg = base.replace(scorer={"kind": scorer}, graph={"mode": mode}, clusterer={"method": clusterer})
                out.append((f"{scorer}/{mode}", cfg))
    return out


def run_benchmark(variants: list[tuple[str, RunConfig]], seeds: list[int], workers: int = 0,
                  heads: dict | None = None) -> list[VariantResult]:
    """Run every (variant, seed); trained heads are fitted once per scorer config."""
    heads = {} if heads is None else heads
    tasks = []
    for method, cfg in variants:
        key = json.dumps({"sim": cfg.sim.to_dict(), "scorer": cfg.scorer, "k": cfg.graph["k"], "seed": cfg.seed},
                         sort_keys=True)
        if key not in heads:
            heads[key] = resolve_head(cfg) if cfg.scorer["kind"] != "ingest" else None
        for s in seeds:
            tasks.append((cfg.replace(seed=s), method, heads[key]))
    workers = workers or os.cpu_count() or 1
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_variant, tasks))
    return [_run_variant(t) for t in tasks]


SUMMARY_FIELDS = [
    "method", "clustering", "status", "n_seeds",
    "precision", "precision_std", "recall", "recall_std", "f1", "f1_std",
    "static_f1", "static_f1_std", "secs_per_frame",
]


def summarize(results: list[VariantResult]) -> list[dict]:
    """Mean and population std over seeds, one row per (method, clustering)."""
    groups: dict[tuple, list[VariantResult]] = {}
    for r in results:
        groups.setdefault((r.method, r.clustering), []).append(r)
    rows = []
    for (method, clustering), rs in groups.items():
        ok = [r for r in rs if r.status == "ok"]
        row = {"method": method, "clustering": clustering, "n_seeds": len(ok),
               "status": "ok" if len(ok) == len(rs) else f"{len(rs) - len(ok)} failed"}
        for name in ("precision", "recall", "f1", "static_f1"):
            vals = np.array([getattr(r, name) for r in ok], dtype=float)
            row[name] = float(vals.mean()) if len(vals) else float("nan")
            row[f"{name}_std"] = float(vals.std()) if len(vals) else float("nan")
        row["secs_per_frame"] = float(np.mean([r.secs_per_frame for r in ok])) if ok else float("nan")
        rows.append(row)
    return rows


def summary_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=SUMMARY_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: r[k] for k in SUMMARY_FIELDS})
    return buf.getvalue()


def curves_csv(results: list[VariantResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "clustering", "seed", "frame", "f1"])
    for r in results:
        for frame, f1 in r.per_frame_f1:
            w.writerow([r.method, r.clustering, r.seed, frame, f1])
    return buf.getvalue()


def write_benchmark(out_dir, results: list[VariantResult]) -> list[dict]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = summarize(results)
    (out / "benchmark.csv").write_text(summary_csv(rows))
    (out / "f1_curves.csv").write_text(curves_csv(results))
    errors = [r for r in results if r.status != "ok"]
    if errors:
        (out / "errors.jsonl").write_text(
            "".join(json.dumps({"method": r.method, "clustering": r.clustering, "seed": r.seed,
                                "error": r.error}) + "\n" for r in errors)
        )
    return rows
