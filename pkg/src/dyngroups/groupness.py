"""Pairwise groupness probabilities (P_i, P_g) for each frame.

An 8-dimensional handcrafted pair descriptor is fed through a linear layer
and a two-way softmax. The head can be trained with cross-entropy, used with
hand-set defaults, or bypassed entirely by ingesting externally computed
scores.
"""
from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .errors import InvalidInputError, MissingPersonError, ScoreParseError
from .rng import stream
from .scenario import Scenario

FEATURE_NAMES = (
    "dx",
    "dy",
    "distance",
    "speed_a",
    "speed_b",
    "speed_diff",
    "heading_alignment",
    "occluded",
)
NUM_FEATURES = len(FEATURE_NAMES)
DEFAULT_WINDOW = 5
LABELS = {"individual": 0, "group": 1}

# Default head: P_g = sigmoid(bias - distance_slope * d + heading_bonus * cos(dtheta)).
DEFAULT_HEAD = {
    "bias": 3.0,
    "distance_slope": 2.0,
    "heading_bonus": 0.5,
}


class PairFeatures(NamedTuple):
    dx: float
    dy: float
    distance: float
    speed_a: float
    speed_b: float
    speed_diff: float
    heading_alignment: float
    occluded: float


@dataclass
class HeadWeights:
    W: np.ndarray  # (2, D); row 0 -> individual logit, row 1 -> group logit
    b: np.ndarray  # (2,)

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        if self.W.ndim != 2 or self.W.shape[0] != 2 or self.b.shape != (2,):
            raise InvalidInputError(f"bad head shapes W{self.W.shape} b{self.b.shape}")
        if not (np.all(np.isfinite(self.W)) and np.all(np.isfinite(self.b))):
            raise InvalidInputError("head weights must be finite")

    def to_json(self) -> str:
        return json.dumps({"W": self.W.tolist(), "b": self.b.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "HeadWeights":
        d = json.loads(text)
        return cls(np.array(d["W"], dtype=float), np.array(d["b"], dtype=float))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def load(cls, path) -> "HeadWeights":
        return cls.from_json(Path(path).read_text())


def default_head_weights(params: dict | None = None) -> HeadWeights:
    p = dict(DEFAULT_HEAD, **(params or {}))
    W = np.zeros((2, NUM_FEATURES))
    W[1, FEATURE_NAMES.index("distance")] = -p["distance_slope"]
    W[1, FEATURE_NAMES.index("heading_alignment")] = p["heading_bonus"]
    return HeadWeights(W, np.array([0.0, p["bias"]]))


@dataclass(frozen=True)
class PairObservation:
    frame: int
    person_a: int
    person_b: int
    p_i: float
    p_g: float


# -- features -----------------------------------------------------------------


class _Tracks:
    """Dense per-person arrays over the scenario's frame axis."""

    def __init__(self, scenario: Scenario):
        self.frames = scenario.frames
        self.frame_index = {f: i for i, f in enumerate(self.frames)}
        self.persons = scenario.persons()
        self.col = {p: j for j, p in enumerate(self.persons)}
        F, P = len(self.frames), len(self.persons)
        self.present = np.zeros((F, P), dtype=bool)
        self.pos = np.zeros((F, P, 2))
        self.vel = np.zeros((F, P, 2))
        self.cos = np.zeros((F, P))
        self.sin = np.zeros((F, P))
        self.occ = np.zeros((F, P), dtype=bool)
        for i, f in enumerate(self.frames):
            for p, s in scenario.states[f].items():
                j = self.col[p]
                self.present[i, j] = True
                self.pos[i, j] = s.position
                self.vel[i, j] = s.velocity
                self.cos[i, j] = math.cos(s.heading)
                self.sin[i, j] = math.sin(s.heading)
                self.occ[i, j] = s.occluded

    def smoothed(self, window: int):
        """Window means of velocity and heading over present frames only."""
        h = window // 2
        F = len(self.frames)
        m = self.present.astype(float)

        def wsum(a):
            c = np.concatenate([np.zeros((1,) + a.shape[1:]), np.cumsum(a, axis=0)])
            lo = np.clip(np.arange(F) - h, 0, F)
            hi = np.clip(np.arange(F) + h + 1, 0, F)
            return c[hi] - c[lo]

        cnt = np.maximum(wsum(m), 1.0)
        vel = wsum(self.vel * m[..., None]) / cnt[..., None]
        heading = np.arctan2(wsum(self.sin * m), wsum(self.cos * m))
        return vel, heading


def _check_window(window: int) -> None:
    if window < 1 or window % 2 == 0:
        raise InvalidInputError(f"window must be odd and >= 1, got {window}")


def _features_from(pos_a, pos_b, vel_a, vel_b, head_a, head_b, occ):
    d = pos_b - pos_a
    dist = np.hypot(d[..., 0], d[..., 1])
    sa = np.hypot(vel_a[..., 0], vel_a[..., 1])
    sb = np.hypot(vel_b[..., 0], vel_b[..., 1])
    dv = vel_a - vel_b
    sdiff = np.hypot(dv[..., 0], dv[..., 1])
    # heading is unobservable under occlusion
    align = np.where(occ, 0.0, np.cos(head_a - head_b))
    return np.stack(
        [d[..., 0], d[..., 1], dist, sa, sb, sdiff, np.clip(align, -1.0, 1.0), occ.astype(float)],
        axis=-1,
    )


def extract_pair_features(
    scenario: Scenario, frame: int, a: int, b: int, window: int = DEFAULT_WINDOW
) -> PairFeatures:
    """Features of pair (a, b) at ``frame``.

    dx, dy, distance use the positions at ``frame``; speeds, relative speed and
    heading alignment use velocities / headings averaged over the ``window``
    frames centred on ``frame`` (truncated at the ends of each person's track).
    """
    _check_window(window)
    states = scenario.states.get(frame)
    if states is None:
        raise MissingPersonError(f"frame {frame} not in scenario")
    for p in (a, b):
        if p not in states:
            raise MissingPersonError(f"person {p} absent at frame {frame}")
    frames = scenario.frames
    i = frames.index(frame)
    h = window // 2
    span = frames[max(0, i - h): i + h + 1]

    def smooth(p):
        vs, cs, ss = [], 0.0, 0.0
        for f in span:
            s = scenario.states[f].get(p)
            if s is None:
                continue
            vs.append(s.velocity)
            cs += math.cos(s.heading)
            ss += math.sin(s.heading)
        return np.mean(vs, axis=0), math.atan2(ss, cs)

    va, ha = smooth(a)
    vb, hb = smooth(b)
    sa, sb = states[a], states[b]
    occ = np.array(sa.occluded or sb.occluded)
    row = _features_from(
        np.array(sa.position), np.array(sb.position), va, vb, np.array(ha), np.array(hb), occ
    )
    return PairFeatures(*(float(v) for v in row))


def all_pairs(scenario: Scenario) -> dict[int, list[tuple[int, int]]]:
    out = {}
    for f in scenario.frames:
        ps = scenario.present(f)
        out[f] = [(ps[i], ps[j]) for i in range(len(ps)) for j in range(i + 1, len(ps))]
    return out


def pair_feature_matrix(
    scenario: Scenario,
    pairs_by_frame: dict[int, Sequence[tuple[int, int]]] | None = None,
    window: int = DEFAULT_WINDOW,
):
    """Vectorised features for many pairs.

    Returns ``(keys, X)`` where ``keys`` is a list of (frame, a, b) with a < b
    and ``X`` has one row per key.
    """
    _check_window(window)
    if pairs_by_frame is None:
        pairs_by_frame = all_pairs(scenario)
    tr = _Tracks(scenario)
    vel, heading = tr.smoothed(window)
    keys, fi, ja, jb = [], [], [], []
    for f in sorted(pairs_by_frame):
        i = tr.frame_index[f]
        for a, b in pairs_by_frame[f]:
            if a > b:
                a, b = b, a
            for p in (a, b):
                if p not in tr.col or not tr.present[i, tr.col[p]]:
                    raise MissingPersonError(f"person {p} absent at frame {f}")
            keys.append((f, a, b))
            fi.append(i)
            ja.append(tr.col[a])
            jb.append(tr.col[b])
    if not keys:
        return keys, np.zeros((0, NUM_FEATURES))
    fi, ja, jb = np.array(fi), np.array(ja), np.array(jb)
    occ = tr.occ[fi, ja] | tr.occ[fi, jb]
    X = _features_from(
        tr.pos[fi, ja], tr.pos[fi, jb], vel[fi, ja], vel[fi, jb], heading[fi, ja], heading[fi, jb], occ
    )
    return keys, X


def labeled_pairs(scenario: Scenario, pairs_by_frame=None, window: int = DEFAULT_WINDOW):
    """Features plus ground-truth labels (1 = same group) for training."""
    keys, X = pair_feature_matrix(scenario, pairs_by_frame, window)
    group_of = {
        f: {p: k for k, g in enumerate(scenario.gt_partitions[f]) for p in g} for f in scenario.frames
    }
    y = np.array([int(group_of[f][a] == group_of[f][b]) for f, a, b in keys], dtype=int)
    return X, y


# -- head ---------------------------------------------------------------------


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def score_pair(features, weights: HeadWeights) -> tuple[float, float]:
    """Return (P_i, P_g) = softmax(W f + b)."""
    f = np.asarray(features, dtype=float)
    if not np.all(np.isfinite(f)):
        raise InvalidInputError(f"non-finite feature in {list(f)}")
    p = _softmax_rows(weights.W @ f + weights.b)
    return float(p[0]), float(p[1])


def score_matrix(X: np.ndarray, weights: HeadWeights) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if not np.all(np.isfinite(X)):
        raise InvalidInputError("non-finite feature")
    if X.shape[0] == 0:
        return np.zeros((0, 2))
    return _softmax_rows(X @ weights.W.T + weights.b)


def score_scenario(
    scenario: Scenario,
    weights: HeadWeights,
    pairs_by_frame=None,
    window: int = DEFAULT_WINDOW,
) -> list[PairObservation]:
    keys, X = pair_feature_matrix(scenario, pairs_by_frame, window)
    P = score_matrix(X, weights)
    return [
        PairObservation(f, a, b, float(P[k, 0]), float(P[k, 1])) for k, (f, a, b) in enumerate(keys)
    ]


def head_loss_and_grad(W, b, X, y, l2: float = 0.0):
    """Mean cross-entropy + l2 * ||W||^2 and its gradient w.r.t. (W, b)."""
    z = X @ W.T + b
    zmax = z.max(axis=1, keepdims=True)
    lse = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
    n = X.shape[0]
    idx = np.arange(n)
    loss = float(np.mean(lse - z[idx, y]) + l2 * np.sum(W * W))
    p = np.exp(z - lse[:, None])
    p[idx, y] -= 1.0
    p /= n
    gW = p.T @ X + 2.0 * l2 * W
    gb = p.sum(axis=0)
    return loss, gW, gb


def _as_arrays(labeled):
    if not labeled:
        raise InvalidInputError("empty training set")
    X = np.array([np.asarray(f, dtype=float) for f, _ in labeled])
    y = np.array([LABELS[l] if isinstance(l, str) else int(l) for _, l in labeled], dtype=int)
    return X, y


def fit_head(
    X: np.ndarray,
    y: np.ndarray,
    lr: float = 0.2,
    epochs: int = 1000,
    l2: float = 0.0,
    seed: int = 0,
    standardize: bool = True,
) -> tuple[HeadWeights, np.ndarray]:
    """Full-batch gradient descent; returns weights and per-epoch losses.

    With ``standardize`` the optimisation runs on z-scored features and the
    result is folded back so the returned weights act on raw features. The
    l2 penalty then applies to the standardized-scale weights.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    if X.ndim != 2 or X.shape[0] == 0:
        raise InvalidInputError("empty training set")
    if not np.all(np.isfinite(X)):
        raise InvalidInputError("non-finite feature in training set")
    if not set(np.unique(y)) <= {0, 1}:
        raise InvalidInputError("labels must be 0 (individual) or 1 (group)")
    if len(np.unique(y)) < 2:
        warnings.warn("training set contains a single class", stacklevel=2)
    if l2 < 0:
        raise InvalidInputError("l2 must be non-negative")
    D = X.shape[1]
    if standardize:
        mu = X.mean(axis=0)
        sd = X.std(axis=0)
        sd[sd < 1e-12] = 1.0
    else:
        mu, sd = np.zeros(D), np.ones(D)
    Xs = (X - mu) / sd
    rng = stream(seed, "head-init")
    W = 0.01 * rng.normal(size=(2, D))
    b = np.zeros(2)
    losses = np.empty(epochs + 1)
    for epoch in range(epochs):
        loss, gW, gb = head_loss_and_grad(W, b, Xs, y, l2)
        losses[epoch] = loss
        W = W - lr * gW
        b = b - lr * gb
    losses[epochs] = head_loss_and_grad(W, b, Xs, y, l2)[0]
    W_raw = W / sd
    b_raw = b - W_raw @ mu
    return HeadWeights(W_raw, b_raw), losses


def train_head(labeled, lr: float = 0.2, epochs: int = 1000, l2: float = 0.0, seed: int = 0, standardize: bool = True) -> HeadWeights:
    """Train the softmax head on ``[(features, label), ...]``."""
    X, y = _as_arrays(labeled)
    return fit_head(X, y, lr=lr, epochs=epochs, l2=l2, seed=seed, standardize=standardize)[0]


# -- score interchange ----------------------------------------------------------


def _parse_records(text: str, is_csv: bool):
    if is_csv:
        reader = csv.DictReader(io.StringIO(text))
        for lineno, row in enumerate(reader, start=2):
            yield lineno, row
        return
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ScoreParseError(f"malformed JSON at line {lineno}: {exc.msg}", (lineno,)) from None
        if not isinstance(rec, dict):
            raise ScoreParseError(f"expected an object at line {lineno}", (lineno,))
        yield lineno, rec


def ingest_scores(path, tol: float = 1e-9) -> list[PairObservation]:
    """Load externally computed pair scores (JSON Lines, or CSV with header)."""
    path = Path(path)
    text = path.read_text()
    is_csv = path.suffix.lower() == ".csv"
    seen: dict[tuple, int] = {}
    out = []
    for lineno, rec in _parse_records(text, is_csv):
        try:
            frame = int(rec["frame"])
            a, b = int(rec["a"]), int(rec["b"])
            p_i, p_g = float(rec["p_i"]), float(rec["p_g"])
        except KeyError as exc:
            raise ScoreParseError(f"missing field {exc.args[0]} at line {lineno}", (lineno,)) from None
        except (TypeError, ValueError):
            raise ScoreParseError(f"non-numeric field at line {lineno}", (lineno,)) from None
        if a == b:
            raise ScoreParseError(f"self pair ({a}, {b}) at line {lineno}", (lineno,))
        if not all(math.isfinite(v) and 0.0 <= v <= 1.0 for v in (p_i, p_g)):
            raise ScoreParseError(f"probability outside [0, 1] at line {lineno}", (lineno,))
        total = p_i + p_g
        if abs(total - 1.0) > tol:
            raise ScoreParseError(f"probabilities sum to {total:.10g} at line {lineno}", (lineno,))
        if a > b:
            a, b = b, a
        key = (frame, a, b)
        if key in seen:
            first = seen[key]
            raise ScoreParseError(
                f"duplicate pair (frame {frame}, {a}, {b}) at lines {first} and {lineno}",
                (first, lineno),
            )
        seen[key] = lineno
        out.append(PairObservation(frame, a, b, p_i, p_g))
    return out


def write_scores(path, observations: Sequence[PairObservation]) -> None:
    path = Path(path)
    if path.suffix.lower() == ".csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["frame", "a", "b", "p_i", "p_g"])
        for o in observations:
            w.writerow([o.frame, o.person_a, o.person_b, repr(o.p_i), repr(o.p_g)])
        path.write_text(buf.getvalue())
        return
    path.write_text(
        "".join(
            json.dumps({"frame": o.frame, "a": o.person_a, "b": o.person_b, "p_i": o.p_i, "p_g": o.p_g},
                       separators=(",", ":"))
            + "\n"
            for o in observations
        )
    )
