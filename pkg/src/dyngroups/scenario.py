"""Seeded synthetic scenes with ground-truth dynamic groups.

Every group follows a shared anchor (a 2-D random walk that alternates
between walking and standing); members sit on formation slots around the
anchor and carry Ornstein-Uhlenbeck jitter. Split / merge / transfer events
relocate the affected members at the event frame, so ground-truth membership
and geometry change together.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import ConfigError, InvalidInputError
from .rng import stream

EVENT_KINDS = ("split", "merge", "member_transfer")


def canonical_groups(groups: Iterable[Iterable[int]]) -> tuple[frozenset, ...]:
    gs = [frozenset(int(p) for p in g) for g in groups]
    return tuple(sorted((g for g in gs if g), key=lambda g: sorted(g)))


def wrap_angle(theta: float) -> float:
    """Map an angle into [-pi, pi)."""
    w = (theta + math.pi) % (2.0 * math.pi) - math.pi
    return -math.pi if w >= math.pi else w


@dataclass(frozen=True)
class GroupEvent:
    frame: int
    kind: str
    source_groups: tuple[frozenset, ...]
    result_groups: tuple[frozenset, ...]

    @classmethod
    def make(cls, frame, kind, source_groups, result_groups):
        return cls(
            int(frame),
            kind,
            tuple(frozenset(g) for g in source_groups),
            tuple(frozenset(g) for g in result_groups),
        )


@dataclass
class SimConfig:
    num_people: int
    num_frames: int
    initial_groups: list
    events: list = field(default_factory=list)
    fps: float = 2.0
    arena: tuple[float, float] = (30.0, 30.0)
    position_noise_sigma: float = 0.0
    occlusion_rate: float = 0.0
    entry_exit: list | None = None
    # motion model
    spring: float = 0.3
    walk_speed: float = 1.0  # m/s
    max_speed: float = 1.5  # m/s
    turn_sigma: float = 0.25  # rad per frame
    stop_prob: float = 0.05
    start_prob: float = 0.1
    formation_radius: float = 0.7  # m, slot circle radius for a 4-person group
    event_separation: float = 4.0  # m, how far a newly formed group is placed
    min_group_separation: float = 4.0  # m, kept between walking anchors (0 disables)

    def __post_init__(self):
        self.initial_groups = [frozenset(int(p) for p in g) for g in self.initial_groups]
        self.events = [
            e if isinstance(e, GroupEvent) else GroupEvent.make(**e) for e in self.events
        ]
        self.arena = (float(self.arena[0]), float(self.arena[1]))
        if self.entry_exit is not None:
            self.entry_exit = [tuple(int(v) for v in row) for row in self.entry_exit]

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise ConfigError(sorted(extra)[0], "unknown simulation setting")
        return cls(**d)

    def to_dict(self) -> dict:
        out = {}
        for name in self.__dataclass_fields__:
            v = getattr(self, name)
            if name == "initial_groups":
                v = [sorted(g) for g in v]
            elif name == "events":
                v = [
                    {
                        "frame": e.frame,
                        "kind": e.kind,
                        "source_groups": [sorted(g) for g in e.source_groups],
                        "result_groups": [sorted(g) for g in e.result_groups],
                    }
                    for e in v
                ]
            elif name == "arena":
                v = list(v)
            elif name == "entry_exit" and v is not None:
                v = [list(r) for r in v]
            out[name] = v
        return out

    @property
    def person_ids(self) -> list[int]:
        return sorted(p for g in self.initial_groups for p in g)

    def validate(self) -> None:
        if self.num_people < 1:
            raise ConfigError("num_people", "must be >= 1")
        if self.num_frames < 1:
            raise ConfigError("num_frames", "must be >= 1")
        if self.fps <= 0:
            raise ConfigError("fps", "must be positive")
        if min(self.arena) <= 0:
            raise ConfigError("arena", "width and height must be positive")
        seen: set[int] = set()
        for g in self.initial_groups:
            if not g:
                raise ConfigError("initial_groups", "empty group")
            if seen & g:
                raise ConfigError(
                    "initial_groups", f"person {min(seen & g)} appears in more than one group"
                )
            seen |= g
        if len(seen) != self.num_people:
            raise ConfigError(
                "initial_groups",
                f"groups cover {len(seen)} persons but num_people is {self.num_people}",
            )
        for name in ("occlusion_rate", "stop_prob", "start_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(name, f"probability {v} outside [0, 1]")
        if self.position_noise_sigma < 0:
            raise ConfigError("position_noise_sigma", "must be non-negative")
        if not 0.0 <= self.spring <= 1.0:
            raise ConfigError("spring", "must lie in [0, 1]")
        for i, ev in enumerate(self.events):
            where = f"events[{i}]"
            if not 1 <= ev.frame <= self.num_frames:
                raise ConfigError(f"{where}.frame", f"{ev.frame} outside [1, {self.num_frames}]")
            if ev.kind not in EVENT_KINDS:
                raise ConfigError(f"{where}.kind", f"unknown event kind {ev.kind!r}")
            src = [p for g in ev.source_groups for p in g]
            res = [p for g in ev.result_groups for p in g]
            if len(set(res)) != len(res):
                raise ConfigError(f"{where}.result_groups", "result groups overlap")
            if len(set(src)) != len(src):
                raise ConfigError(f"{where}.source_groups", "source groups overlap")
            if set(src) != set(res):
                raise ConfigError(f"{where}.result_groups", "members differ from source groups")
            if not set(src) <= seen:
                raise ConfigError(f"{where}.source_groups", "unknown person id")
        if self.entry_exit is not None:
            for i, row in enumerate(self.entry_exit):
                if len(row) != 3:
                    raise ConfigError(f"entry_exit[{i}]", "expected (person, first, last)")
                p, first, last = row
                if p not in seen:
                    raise ConfigError(f"entry_exit[{i}]", f"unknown person {p}")
                if not 1 <= first <= last <= self.num_frames:
                    raise ConfigError(f"entry_exit[{i}]", "frame window out of range")


@dataclass(frozen=True)
class PersonState:
    person_id: int
    position: tuple[float, float]
    velocity: tuple[float, float]  # m/frame
    heading: float
    occluded: bool


@dataclass
class Scenario:
    states: dict  # frame -> {person_id: PersonState}
    gt_partitions: dict  # frame -> tuple[frozenset, ...]
    seed: int
    fps: float = 2.0

    @property
    def frames(self) -> list[int]:
        return sorted(self.states)

    def present(self, frame: int) -> list[int]:
        return sorted(self.states[frame])

    def persons(self) -> list[int]:
        return sorted({p for s in self.states.values() for p in s})


@dataclass(frozen=True)
class TemporalLink:
    frame: int  # link goes from `frame` to `frame + 1`
    a: int
    b: int
    p_t: float


@dataclass
class TemporalLinkSet:
    links: list = field(default_factory=list)

    def __len__(self):
        return len(self.links)

    def __iter__(self):
        return iter(self.links)


# -- simulation ---------------------------------------------------------------


class _Anchor:
    __slots__ = ("pos", "heading", "walking", "vel")

    def __init__(self, pos, heading, walking):
        self.pos = np.asarray(pos, dtype=float)
        self.heading = float(heading)
        self.walking = bool(walking)
        self.vel = np.zeros(2)


def _formation(members, radius, rotation):
    members = sorted(members)
    n = len(members)
    if n == 1:
        return {members[0]: np.zeros(2)}
    r = radius * math.sqrt(n / 4.0)
    return {
        p: r * np.array([math.cos(rotation + 2 * math.pi * k / n), math.sin(rotation + 2 * math.pi * k / n)])
        for k, p in enumerate(members)
    }


def _clamp_into(pos, arena):
    return np.array([min(max(pos[0], 0.0), arena[0]), min(max(pos[1], 0.0), arena[1])])


def _step_anchor(a: _Anchor, cfg: SimConfig, rng, others=()):
    u_mode, turn, speed_noise = rng.random(), rng.normal(), rng.normal()
    if a.walking and u_mode < cfg.stop_prob:
        a.walking = False
    elif not a.walking and u_mode < cfg.start_prob:
        a.walking = True
    if not a.walking:
        a.vel = np.zeros(2)
        return
    a.heading = wrap_angle(a.heading + cfg.turn_sigma * turn)
    vmax = cfg.max_speed / cfg.fps
    speed = min(max(cfg.walk_speed / cfg.fps * (1.0 + 0.2 * speed_noise), 0.0), vmax)
    step = speed * np.array([math.cos(a.heading), math.sin(a.heading)])
    new = a.pos + step
    w, h = cfg.arena
    hx, hy = math.cos(a.heading), math.sin(a.heading)
    if new[0] < 0 or new[0] > w:
        new[0] = -new[0] if new[0] < 0 else 2 * w - new[0]
        hx = -hx
    if new[1] < 0 or new[1] > h:
        new[1] = -new[1] if new[1] < 0 else 2 * h - new[1]
        hy = -hy
    new = _clamp_into(new, cfg.arena)
    a.heading = wrap_angle(math.atan2(hy, hx))
    sep = cfg.min_group_separation
    for q in others:
        gap = np.linalg.norm(new - q)
        if gap < sep and gap < np.linalg.norm(a.pos - q):
            # turn away instead of closing in on another group
            a.heading = wrap_angle(a.heading + math.pi)
            a.vel = np.zeros(2)
            return
    a.vel = new - a.pos
    a.pos = new


def _initial_anchors(cfg: SimConfig, groups, rng):
    w, h = cfg.arena
    margin = min(2.0, 0.25 * min(w, h))
    placed = []
    anchors = {}
    for g in groups:
        pos = None
        for _ in range(200):
            cand = np.array([rng.uniform(margin, w - margin), rng.uniform(margin, h - margin)])
            if all(np.linalg.norm(cand - q) >= cfg.min_group_separation for q in placed):
                pos = cand
                break
        if pos is None:
            pos = cand
        placed.append(pos)
        walking = rng.random() < 0.5
        anchors[g] = _Anchor(pos, rng.uniform(-math.pi, math.pi), walking)
    return anchors


def simulate(config: SimConfig, seed: int) -> Scenario:
    """Generate a scenario; identical (config, seed) give identical output."""
    config.validate()
    cfg = config
    motion = stream(seed, "motion")
    jitter_rng = stream(seed, "jitter")
    occl_rng = stream(seed, "occlusion")
    layout_rng = stream(seed, "layout")

    pids = cfg.person_ids
    window = {p: (1, cfg.num_frames) for p in pids}
    for p, first, last in cfg.entry_exit or []:
        window[p] = (first, last)

    groups = list(canonical_groups(cfg.initial_groups))
    anchors = _initial_anchors(cfg, groups, layout_rng)
    slots = {}
    for g in groups:
        slots.update(_formation(g, cfg.formation_radius, layout_rng.uniform(0, 2 * math.pi)))
    jitter = {p: np.zeros(2) for p in pids}
    group_of = {p: g for g in groups for p in g}
    events_at: dict[int, list] = {}
    for i, ev in enumerate(cfg.events):
        events_at.setdefault(ev.frame, []).append((i, ev))

    prev_heading: dict[int, float] = {}
    states: dict[int, dict] = {}
    gt: dict[int, tuple] = {}

    for f in range(1, cfg.num_frames + 1):
        if f > 1:
            for g in groups:
                others = [anchors[h].pos for h in groups if h is not g]
                _step_anchor(anchors[g], cfg, motion, others)
        old_jitter = {p: jitter[p].copy() for p in pids}
        if f > 1:
            keep = 1.0 - cfg.spring
            for p in pids:
                jitter[p] = keep * jitter[p] + cfg.position_noise_sigma * jitter_rng.normal(size=2)

        for i, ev in events_at.get(f, []):
            groups = _apply_event(i, ev, groups, anchors, slots, group_of, cfg, layout_rng)

        occluded = {p: bool(occl_rng.random() < cfg.occlusion_rate) for p in pids}

        positions = {}
        for g in groups:
            a = anchors[g]
            for p in g:
                positions[p] = a.pos + slots[p] + jitter[p]
        present = [p for p in pids if window[p][0] <= f <= window[p][1]]
        present_set = set(present)

        frame_states = {}
        for p in present:
            g = group_of[p]
            vel = anchors[g].vel + (jitter[p] - old_jitter[p])
            speed = float(np.hypot(*vel))
            if speed > 0.05:
                heading = math.atan2(vel[1], vel[0])
            else:
                mates = [q for q in g if q in present_set and q != p]
                if mates:
                    centroid = np.mean([positions[q] for q in g if q in present_set], axis=0)
                    d = centroid - positions[p]
                    if np.hypot(*d) > 1e-9:
                        heading = math.atan2(d[1], d[0])
                    else:
                        heading = prev_heading.get(p, anchors[g].heading)
                else:
                    heading = prev_heading.get(p, anchors[g].heading)
            heading = wrap_angle(heading)
            prev_heading[p] = heading
            pos = positions[p]
            frame_states[p] = PersonState(
                p,
                (float(pos[0]), float(pos[1])),
                (float(vel[0]), float(vel[1])),
                float(heading),
                occluded[p],
            )
        states[f] = frame_states
        gt[f] = canonical_groups(g & present_set for g in groups)
    return Scenario(states=states, gt_partitions=gt, seed=int(seed), fps=float(cfg.fps))


def _place_new_anchor(base, anchors, cfg, rng, tries=16):
    """Spot event_separation away from ``base``, clear of other groups if possible.

    Candidates are evenly spaced angles from a random start; the first that
    stays in the arena and keeps min_group_separation wins, otherwise the one
    farthest from its nearest neighbour.
    """
    theta0 = rng.uniform(-math.pi, math.pi)
    others = [a.pos for a in anchors.values()]
    best = None
    for j in range(tries):
        theta = wrap_angle(theta0 + 2 * math.pi * j / tries)
        pos = _clamp_into(base + cfg.event_separation * np.array([math.cos(theta), math.sin(theta)]), cfg.arena)
        clearance = min((float(np.hypot(*(pos - o))) for o in others), default=math.inf)
        if clearance >= cfg.min_group_separation:
            return pos, theta
        if best is None or clearance > best[0]:
            best = (clearance, pos, theta)
    return best[1], best[2]


def _apply_event(i, ev, groups, anchors, slots, group_of, cfg, rng):
    current = set(groups)
    for g in ev.source_groups:
        if g not in current:
            raise ConfigError(
                f"events[{i}].source_groups",
                f"{sorted(g)} is not a group at frame {ev.frame}",
            )
    sources = [g for g in ev.source_groups]
    used = set()
    for res in ev.result_groups:
        best = max(sources, key=lambda s: (len(s & res), -min(s)))
        if best not in used and best & res:
            used.add(best)
            src = anchors[best]
            a = _Anchor(src.pos.copy(), src.heading, src.walking)
            a.vel = src.vel.copy()
        else:
            pos, theta = _place_new_anchor(anchors[best].pos, anchors, cfg, rng)
            a = _Anchor(pos, theta, True)
        anchors[res] = a
        slots.update(_formation(res, cfg.formation_radius, rng.uniform(0, 2 * math.pi)))
        for p in res:
            group_of[p] = res
    for g in sources:
        if g not in ev.result_groups:
            anchors.pop(g, None)
    remaining = [g for g in groups if g not in set(sources)]
    return list(canonical_groups(remaining + list(ev.result_groups)))


# -- tracking noise -------------------------------------------------------------


def true_links(scenario: Scenario) -> TemporalLinkSet:
    links = []
    frames = scenario.frames
    for f, g in zip(frames, frames[1:]):
        if g != f + 1:
            continue
        for p in sorted(set(scenario.states[f]) & set(scenario.states[g])):
            links.append(TemporalLink(f, p, p, 1.0))
    return TemporalLinkSet(links)


def corrupt_tracks(
    scenario: Scenario, id_switch_rate: float, confidence_noise_sigma: float, seed: int
) -> TemporalLinkSet:
    """Identity links between consecutive frames with simulated tracker noise.

    P_t = clamp(1 - |N(0, sigma)|, 0, 1). With probability ``id_switch_rate``
    a link swaps its target with another not-yet-swapped link of the same
    frame pair.
    """
    if not 0.0 <= id_switch_rate <= 1.0:
        raise InvalidInputError(f"id_switch_rate {id_switch_rate} outside [0, 1]")
    if confidence_noise_sigma < 0 or not math.isfinite(confidence_noise_sigma):
        raise InvalidInputError("confidence_noise_sigma must be a non-negative real")
    rng = stream(seed, "tracking")
    out = []
    frames = scenario.frames
    for f, g in zip(frames, frames[1:]):
        if g != f + 1:
            continue
        persons = sorted(set(scenario.states[f]) & set(scenario.states[g]))
        n = len(persons)
        noise = rng.normal(0.0, 1.0, size=n) * confidence_noise_sigma
        p_t = np.clip(1.0 - np.abs(noise), 0.0, 1.0)
        targets = list(persons)
        swapped = [False] * n
        draws = rng.random(size=n)
        for i in range(n):
            if swapped[i] or draws[i] >= id_switch_rate:
                continue
            partners = [j for j in range(n) if j != i and not swapped[j]]
            if not partners:
                continue
            j = partners[int(rng.integers(len(partners)))]
            targets[i], targets[j] = targets[j], targets[i]
            swapped[i] = swapped[j] = True
        for i, p in enumerate(persons):
            out.append(TemporalLink(f, p, targets[i], float(p_t[i])))
    return TemporalLinkSet(out)


# -- JSON Lines I/O -------------------------------------------------------------


def _dumps(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), allow_nan=False)


def write_scenario(path, scenario: Scenario) -> None:
    """One header line, then one record per frame (units: m, m/frame, rad)."""
    lines = [_dumps({"meta": {"seed": scenario.seed, "fps": scenario.fps}})]
    for f in scenario.frames:
        persons = [
            {
                "id": s.person_id,
                "x": s.position[0],
                "y": s.position[1],
                "vx": s.velocity[0],
                "vy": s.velocity[1],
                "heading": s.heading,
                "occluded": s.occluded,
            }
            for s in (scenario.states[f][p] for p in sorted(scenario.states[f]))
        ]
        groups = [sorted(g) for g in scenario.gt_partitions[f]]
        lines.append(_dumps({"frame": f, "persons": persons, "groups": groups}))
    Path(path).write_text("\n".join(lines) + "\n")


def read_scenario(path) -> Scenario:
    states, gt = {}, {}
    seed, fps = 0, 2.0
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            if "meta" in rec:
                seed, fps = rec["meta"]["seed"], rec["meta"]["fps"]
                continue
            f = int(rec["frame"])
            states[f] = {
                int(r["id"]): PersonState(
                    int(r["id"]),
                    (float(r["x"]), float(r["y"])),
                    (float(r["vx"]), float(r["vy"])),
                    float(r["heading"]),
                    bool(r["occluded"]),
                )
                for r in rec["persons"]
            }
            gt[f] = canonical_groups(rec["groups"])
    return Scenario(states=states, gt_partitions=gt, seed=seed, fps=fps)


def write_links(path, links: TemporalLinkSet) -> None:
    text = "".join(
        _dumps({"frame": l.frame, "a": l.a, "b": l.b, "p_t": l.p_t}) + "\n" for l in links
    )
    Path(path).write_text(text)


def read_links(path) -> TemporalLinkSet:
    out = []
    with open(path) as fh:
        for line in fh:
            if line.strip():
                r = json.loads(line)
                out.append(TemporalLink(int(r["frame"]), int(r["a"]), int(r["b"]), float(r["p_t"])))
    return TemporalLinkSet(out)
