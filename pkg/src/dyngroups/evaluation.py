"""Half-overlap group matching and precision / recall / F1."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field

from .errors import InvalidInputError
from .groups import DynamicGroups, StaticGroups


@dataclass(frozen=True)
class EvalConfig:
    overlap_threshold: float = 0.5
    include_singletons: bool = False
    matching: str = "greedy_one_to_one"

    def __post_init__(self):
        if not 0.0 < self.overlap_threshold <= 1.0:
            raise InvalidInputError("overlap_threshold must lie in (0, 1]")
        if self.matching != "greedy_one_to_one":
            raise InvalidInputError(f"unsupported matching {self.matching!r}")


@dataclass
class FrameResult:
    frame: int
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float


@dataclass
class EvalReport:
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float
    per_frame: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    def csv_row(self) -> dict:
        return {k: getattr(self, k) for k in ("tp", "fp", "fn", "precision", "recall", "f1")}

    def per_frame_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["frame", "tp", "fp", "fn", "precision", "recall", "f1"])
        for r in self.per_frame:
            w.writerow([r.frame, r.tp, r.fp, r.fn, r.precision, r.recall, r.f1])
        return buf.getvalue()


def prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f1


def overlap_ratio(det, gt) -> float:
    """|det & gt| / max(|det|, |gt|)."""
    det, gt = set(det), set(gt)
    if not det or not gt:
        raise InvalidInputError("overlap_ratio needs two nonempty groups")
    return len(det & gt) / max(len(det), len(gt))


def match_counts(dets, gts, cfg: EvalConfig) -> tuple[int, int, int]:
    """Greedy one-to-one matching by descending overlap; returns (tp, fp, fn)."""
    if not cfg.include_singletons:
        dets = [d for d in dets if len(d) > 1]
        gts = [g for g in gts if len(g) > 1]
    cands = []
    for i, d in enumerate(dets):
        for j, g in enumerate(gts):
            if d & g:
                r = overlap_ratio(d, g)
                if r > cfg.overlap_threshold:
                    cands.append((-r, i, j))
    cands.sort()
    used_d, used_g = set(), set()
    for _, i, j in cands:
        if i in used_d or j in used_g:
            continue
        used_d.add(i)
        used_g.add(j)
    tp = len(used_d)
    return tp, len(dets) - tp, len(gts) - tp


def evaluate_static(dets: StaticGroups, gts: StaticGroups, cfg: EvalConfig | None = None) -> EvalReport:
    cfg = cfg or EvalConfig()
    if not isinstance(dets, StaticGroups):
        dets = StaticGroups(tuple(dets))
    if not isinstance(gts, StaticGroups):
        gts = StaticGroups(tuple(gts))
    tp, fp, fn = match_counts(list(dets.groups), list(gts.groups), cfg)
    return EvalReport(tp, fp, fn, *prf(tp, fp, fn))


def evaluate_dynamic(dets: DynamicGroups, gts: DynamicGroups, cfg: EvalConfig | None = None) -> EvalReport:
    """Per-frame matching, micro-aggregated over frames."""
    cfg = cfg or EvalConfig()
    if set(dets.per_frame) != set(gts.per_frame):
        diff = sorted(set(dets.per_frame) ^ set(gts.per_frame))
        raise InvalidInputError(f"frame sets differ (e.g. frame {diff[0]})")
    TP = FP = FN = 0
    rows = []
    for f in gts.frames:
        tp, fp, fn = match_counts(list(dets.per_frame[f]), list(gts.per_frame[f]), cfg)
        TP, FP, FN = TP + tp, FP + fp, FN + fn
        rows.append(FrameResult(f, tp, fp, fn, *prf(tp, fp, fn)))
    return EvalReport(TP, FP, FN, *prf(TP, FP, FN), per_frame=rows)
