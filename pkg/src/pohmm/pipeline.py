"""Reading, registering and indexing rank-list data.

Raw input is an actor registry (activity windows, focus flag) plus lists of
actor ids with an integer-year date interval.  Registration clips and thins
these into a :class:`Dataset` in which every list member is active
throughout the list's interval and every actor appears in at least two
lists.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Iterable, Sequence

from .errors import DuplicateId, EmptyDataset, InvalidInterval, ParseError


@dataclass(frozen=True)
class ActorRecord:
    id: int
    name: str
    group: str
    begin: int
    end: int
    focus: bool = True

    def __post_init__(self):
        if self.begin > self.end:
            raise InvalidInterval(f"actor {self.id}: begin {self.begin} after end {self.end}")


@dataclass(frozen=True)
class ListRecord:
    list_id: int
    tau_minus: int
    tau_plus: int
    actors: tuple[int, ...]

    def __post_init__(self):
        if self.tau_minus > self.tau_plus:
            raise InvalidInterval(f"list {self.list_id}: tau_minus after tau_plus")
        if len(set(self.actors)) != len(self.actors):
            raise ParseError(f"list {self.list_id} repeats an actor")
        if not self.actors:
            raise ParseError(f"list {self.list_id} is empty")

    @property
    def midpoint(self) -> int:
        return (self.tau_minus + self.tau_plus) // 2

    @property
    def years(self) -> range:
        return range(self.tau_minus, self.tau_plus + 1)


@dataclass
class RawRecords:
    actors: list[ActorRecord]
    lists: list[ListRecord]


class Dataset:
    """Registered lists and actors over the study window [B, E]."""

    def __init__(self, actors: Iterable[ActorRecord], lists: Iterable[ListRecord], B: int, E: int):
        self.actors = {a.id: a for a in sorted(actors, key=lambda a: a.id)}
        self.lists = tuple(lists)
        self.B = int(B)
        self.E = int(E)
        self.actor_ids = tuple(self.actors)
        self.years = tuple(range(self.B, self.E + 1))
        self.active = {
            t: tuple(a for a, r in self.actors.items() if r.begin <= t <= r.end) for t in self.years
        }
        self.m = {t: len(v) for t, v in self.active.items()}
        self.D = max(self.m.values(), default=0)
        self.seniority = _seniority_table(self.actors, self.active)
        self.S = max(self.seniority.values(), default=0)

    @property
    def N(self) -> int:
        return len(self.lists)

    @property
    def M(self) -> int:
        return len(self.actors)

    @property
    def default_K(self) -> int:
        return max(1, self.D // 2)

    def window_of(self, actor: int) -> tuple[int, int]:
        r = self.actors[actor]
        return max(r.begin, self.B), min(r.end, self.E)

    def without_list(self, index: int) -> "Dataset":
        lists = self.lists[:index] + self.lists[index + 1 :]
        return Dataset(self.actors.values(), lists, self.B, self.E)

    def to_raw(self) -> RawRecords:
        return RawRecords(list(self.actors.values()), list(self.lists))

    def to_dict(self) -> dict:
        return {
            "window": [self.B, self.E],
            "actors": [
                {
                    "id": a.id,
                    "name": a.name,
                    "group": a.group,
                    "begin_year": a.begin,
                    "end_year": a.end,
                    "focus": int(a.focus),
                }
                for a in self.actors.values()
            ],
            "lists": [
                {
                    "list_id": r.list_id,
                    "tau_minus": r.tau_minus,
                    "tau_plus": r.tau_plus,
                    "actors": list(r.actors),
                }
                for r in self.lists
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return self.to_dict() == other.to_dict()


def _seniority_table(actors: dict[int, ActorRecord], active: dict[int, tuple[int, ...]]) -> dict[tuple[int, int], int]:
    table = {}
    for t, members in active.items():
        begins = [actors[a].begin for a in members]
        for a in members:
            b = actors[a].begin
            table[(t, a)] = sum(1 for bk in begins if b >= bk)
    return table


def seniority(dataset: Dataset) -> dict[tuple[int, int], int]:
    """Level s[(year, actor)]: how many co-active actors began no later than this one."""
    return dict(dataset.seniority)


def activity_index(dataset: Dataset) -> tuple[dict[int, tuple[int, ...]], dict[int, int], int]:
    return dict(dataset.active), dict(dataset.m), dataset.D


def level_frequency(dataset: Dataset) -> dict[int, int]:
    """How often each covariate level occurs among list members at list midpoints."""
    freq: dict[int, int] = {}
    for rec in dataset.lists:
        t = min(max(rec.midpoint, dataset.B), dataset.E)
        for a in rec.actors:
            s = dataset.seniority[(t, a)]
            freq[s] = freq.get(s, 0) + 1
    return dict(sorted(freq.items()))


# ---------------------------------------------------------------------------
# loading


def _to_int(value: str, what: str) -> int:
    try:
        return int(str(value).strip())
    except ValueError:
        raise ParseError(f"{what}: expected an integer, got {value!r}") from None


def _to_bool(value) -> bool:
    v = str(value).strip().lower()
    if v in ("1", "true", "yes", "y"):
        return True
    if v in ("0", "false", "no", "n", ""):
        return False
    raise ParseError(f"focus flag {value!r} not understood")


def _actor_from_row(row: dict) -> ActorRecord:
    try:
        return ActorRecord(
            id=_to_int(row["id"], "id"),
            name=str(row.get("name", "")),
            group=str(row.get("group", "")),
            begin=_to_int(row["begin_year"], "begin_year"),
            end=_to_int(row["end_year"], "end_year"),
            focus=_to_bool(row.get("focus", 1)),
        )
    except KeyError as exc:
        raise ParseError(f"actor record missing field {exc}") from None


def _check_actors(actors: list[ActorRecord]) -> None:
    seen = set()
    for a in actors:
        if a.id in seen:
            raise DuplicateId(f"actor id {a.id}")
        seen.add(a.id)


def _check_lists(lists: list[ListRecord], actor_ids: set[int]) -> None:
    seen = set()
    for r in lists:
        if r.list_id in seen:
            raise DuplicateId(f"list id {r.list_id}")
        seen.add(r.list_id)
        unknown = [a for a in r.actors if a not in actor_ids]
        if unknown:
            raise ParseError(f"list {r.list_id} names unknown actors {unknown}")


def load(actors_path: str | Path, lists_path: str | Path) -> RawRecords:
    """Read the two-file CSV format."""
    with open(actors_path, newline="") as fh:
        actors = [_actor_from_row(row) for row in csv.DictReader(fh)]
    _check_actors(actors)

    rows: dict[int, dict] = {}
    order: list[int] = []
    with open(lists_path, newline="") as fh:
        for row in csv.DictReader(fh):
            try:
                lid = _to_int(row["list_id"], "list_id")
                lo = _to_int(row["tau_minus"], "tau_minus")
                hi = _to_int(row["tau_plus"], "tau_plus")
                rank = _to_int(row["rank"], "rank")
                actor = _to_int(row["actor_id"], "actor_id")
            except KeyError as exc:
                raise ParseError(f"list row missing field {exc}") from None
            entry = rows.get(lid)
            if entry is None:
                entry = rows[lid] = {"interval": (lo, hi), "ranks": {}}
                order.append(lid)
            elif entry["interval"] != (lo, hi):
                raise ParseError(f"list {lid} has inconsistent date intervals")
            if rank in entry["ranks"]:
                raise DuplicateId(f"list {lid} repeats rank {rank}")
            entry["ranks"][rank] = actor
    lists = []
    for lid in order:
        entry = rows[lid]
        lo, hi = entry["interval"]
        ranks = entry["ranks"]
        if sorted(ranks) != list(range(1, len(ranks) + 1)):
            raise ParseError(f"list {lid} ranks are not 1..n")
        lists.append(ListRecord(lid, lo, hi, tuple(ranks[k] for k in sorted(ranks))))
    _check_lists(lists, {a.id for a in actors})
    return RawRecords(actors, lists)


def load_json(path: str | Path) -> tuple[RawRecords, tuple[int, int] | None]:
    """Read the single-file JSON format; also accepts a registered dataset file."""
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(str(exc)) from None
    actors = [_actor_from_row(row) for row in doc.get("actors", [])]
    _check_actors(actors)
    lists = []
    for row in doc.get("lists", []):
        try:
            lists.append(
                ListRecord(
                    _to_int(row["list_id"], "list_id"),
                    _to_int(row["tau_minus"], "tau_minus"),
                    _to_int(row["tau_plus"], "tau_plus"),
                    tuple(_to_int(a, "actor") for a in row["actors"]),
                )
            )
        except KeyError as exc:
            raise ParseError(f"list record missing field {exc}") from None
    _check_lists(lists, {a.id for a in actors})
    window = tuple(doc["window"]) if "window" in doc else None
    return RawRecords(actors, lists), window


def write_csv(raw: RawRecords, actors_path: str | Path, lists_path: str | Path) -> None:
    with open(actors_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "name", "group", "begin_year", "end_year", "focus"])
        for a in raw.actors:
            w.writerow([a.id, a.name, a.group, a.begin, a.end, int(a.focus)])
    with open(lists_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["list_id", "tau_minus", "tau_plus", "rank", "actor_id"])
        for r in raw.lists:
            for k, a in enumerate(r.actors, start=1):
                w.writerow([r.list_id, r.tau_minus, r.tau_plus, k, a])


# ---------------------------------------------------------------------------
# registration


def overlap_fraction(lo: int, hi: int, t1: int, t2: int) -> float:
    return (1 + min(t2, hi) - max(t1, lo)) / (1 + hi - lo)


def register(raw: RawRecords, window: Sequence[int] | None = None,
             focus: Iterable[int] | None = None) -> Dataset:
    """Clip, filter and thin raw records into a registered dataset.

    Steps: clip each list's interval to its members' common activity; keep
    lists with at least half of that interval inside the window and clip to
    the window; keep focus actors only and drop lists left with fewer than
    two; then repeatedly drop actors in fewer than two lists (and lists that
    shrink below two members) until nothing changes.
    """
    reg = {a.id: a for a in raw.actors}
    focus_set = {a.id for a in raw.actors if a.focus} if focus is None else set(focus)

    clipped = []
    for r in raw.lists:
        lo = max([r.tau_minus] + [reg[a].begin for a in r.actors])
        hi = min([r.tau_plus] + [reg[a].end for a in r.actors])
        if lo <= hi:
            clipped.append((r, lo, hi))
    if window is None:
        if not clipped:
            raise EmptyDataset("no list has a nonempty clipped interval")
        window = (min(lo for _, lo, _ in clipped), max(hi for _, _, hi in clipped))
    B, E = int(window[0]), int(window[1])
    if B > E:
        raise InvalidInterval("window start after window end")

    kept = []
    for r, lo, hi in clipped:
        if overlap_fraction(lo, hi, B, E) < 0.5:
            continue
        members = tuple(a for a in r.actors if a in focus_set)
        if len(members) < 2:
            continue
        kept.append(ListRecord(r.list_id, max(lo, B), min(hi, E), members))

    while True:
        counts: dict[int, int] = {}
        for r in kept:
            for a in r.actors:
                counts[a] = counts.get(a, 0) + 1
        rare = {a for a, c in counts.items() if c < 2}
        if not rare:
            break
        shrunk = []
        for r in kept:
            members = tuple(a for a in r.actors if a not in rare)
            if len(members) >= 2:
                shrunk.append(ListRecord(r.list_id, r.tau_minus, r.tau_plus, members))
        kept = shrunk
    if not kept:
        raise EmptyDataset("no list survives registration")
    used = {a for r in kept for a in r.actors}
    return Dataset((reg[a] for a in used), kept, B, E)


def window_select(dataset: Dataset, window: Sequence[int]) -> Dataset:
    t1, t2 = int(window[0]), int(window[1])
    if not (dataset.B <= t1 <= t2 <= dataset.E):
        raise InvalidInterval(f"window {window} not inside [{dataset.B}, {dataset.E}]")
    return register(dataset.to_raw(), (t1, t2), focus=dataset.actor_ids)


def load_dataset(path: str | Path, lists_path: str | Path | None = None,
                 window: Sequence[int] | None = None) -> Dataset:
    """Load and register either a JSON file or an actors/lists CSV pair."""
    if lists_path is None:
        raw, file_window = load_json(path)
        return register(raw, window or file_window)
    return register(load(path, lists_path), window)


def fixture_paths() -> tuple[Path, Path]:
    """Actors and lists CSVs of the bundled six-actor synthetic dataset."""
    root = Path(__file__).resolve().parent / "data"
    return root / "fixture_actors.csv", root / "fixture_lists.csv"
