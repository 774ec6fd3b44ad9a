"""Partitions -> per-frame dynamic groups -> one static group set."""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

from .errors import InconsistencyError, InvalidInputError
from .scenario import canonical_groups


@dataclass
class DynamicGroups:
    per_frame: dict  # frame -> tuple[frozenset, ...] (canonical order)

    def __post_init__(self):
        self.per_frame = {int(f): canonical_groups(gs) for f, gs in sorted(self.per_frame.items())}
        for f, gs in self.per_frame.items():
            _check_disjoint(gs, f"frame {f}")

    @property
    def frames(self) -> list[int]:
        return sorted(self.per_frame)

    def persons(self) -> set[int]:
        return {p for gs in self.per_frame.values() for g in gs for p in g}


@dataclass
class StaticGroups:
    groups: tuple

    def __post_init__(self):
        self.groups = canonical_groups(self.groups)
        _check_disjoint(self.groups, "static groups")

    def persons(self) -> set[int]:
        return {p for g in self.groups for p in g}


def _check_disjoint(groups, where):
    seen = set()
    for g in groups:
        if seen & g:
            raise InvalidInputError(f"{where}: person {min(seen & g)} in more than one group")
        seen |= g


def partition_to_dynamic(partition, graph) -> DynamicGroups:
    """Nodes of one frame that share a community label form one group."""
    per_frame: dict[int, dict[int, set]] = {}
    for node in graph.nodes:
        if node not in partition.assignment:
            raise InconsistencyError(f"partition does not cover node {tuple(node)}")
        per_frame.setdefault(node.frame, {}).setdefault(partition[node], set()).add(node.person)
    return DynamicGroups({f: list(comms.values()) for f, comms in per_frame.items()})


def constant_dynamic(static: StaticGroups, persons_by_frame: dict) -> DynamicGroups:
    """Replicate a static group set over frames, restricted to who is present."""
    out = {}
    for f, present in persons_by_frame.items():
        pset = set(present)
        out[f] = [g & pset for g in static.groups if g & pset]
    return DynamicGroups(out)


def dynamic_to_static(dynamic: DynamicGroups) -> StaticGroups:
    """Greedy selection of groups by the number of frames they are observed in.

    Groups are sorted by frame count (desc), then size (desc), then member ids.
    A group intersecting an already selected one is skipped; selection stops
    once everybody is covered and leftovers become singletons.
    """
    if not dynamic.per_frame:
        raise InvalidInputError("no frames")
    counts = Counter(g for gs in dynamic.per_frame.values() for g in gs)
    everyone = dynamic.persons()
    order = sorted(counts, key=lambda g: (-counts[g], -len(g), sorted(g)))
    chosen, covered = [], set()
    for g in order:
        if covered >= everyone:
            break
        if g & covered:
            continue
        chosen.append(g)
        covered |= g
    chosen.extend(frozenset([p]) for p in sorted(everyone - covered))
    return StaticGroups(tuple(chosen))


def write_dynamic(path, dynamic: DynamicGroups) -> None:
    Path(path).write_text(
        "".join(
            json.dumps({"frame": f, "groups": [sorted(g) for g in gs]}) + "\n"
            for f, gs in dynamic.per_frame.items()
        )
    )


def read_dynamic(path) -> DynamicGroups:
    per_frame = {}
    with open(path) as fh:
        for line in fh:
            if line.strip():
                r = json.loads(line)
                per_frame[int(r["frame"])] = r["groups"]
    return DynamicGroups(per_frame)


def write_static(path, static: StaticGroups) -> None:
    Path(path).write_text(json.dumps({"groups": [sorted(g) for g in static.groups]}) + "\n")


def read_static(path) -> StaticGroups:
    with open(path) as fh:
        for line in fh:
            if line.strip():
                return StaticGroups(tuple(json.loads(line)["groups"]))
    raise InvalidInputError(f"{path}: no static group record")


def write_partition(path, partition) -> None:
    """JSON Lines {frame, person, community}, or CSV when the suffix is .csv."""
    path = Path(path)
    rows = [(n[0], n[1], c) for n, c in partition.assignment.items()]
    if path.suffix.lower() == ".csv":
        path.write_text("frame,person,community\n" + "".join(f"{f},{p},{c}\n" for f, p, c in rows))
    else:
        path.write_text(
            "".join(json.dumps({"frame": f, "person": p, "community": c}) + "\n" for f, p, c in rows)
        )


def read_partition(path):
    from .clustering import Partition
    from .graph import NodeId

    assignment = {}
    with open(path) as fh:
        for line in fh:
            if line.strip():
                r = json.loads(line)
                assignment[NodeId(int(r["frame"]), int(r["person"]))] = int(r["community"])
    return Partition(assignment)
