"""Append-only event log, snapshots and deterministic replay.

Every accepted command becomes one ``WorldEvent`` with a gapless sequence
number. Each event also carries ``digest``, a SHA-256 chain over all prior
event bodies, and, at checkpoint intervals, ``prior_state_hash``: the world
state hash just before the event was applied.

Log file: a version header line followed by one JSON object per line::

    # livingcity-eventlog v1
    {"seq":1,"tick":0,"kind":"register",...}

Snapshot file: a version header line followed by one JSON document holding
the sequence number it was taken at, the world state and its hash.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Iterator

from ..catalog import Catalog
from ..config import WorldConfig
from ..errors import GapInLog, HashMismatch, LivingCityError
from ..world import World, canonical_json, state_hash

LOG_HEADER = "# livingcity-eventlog v1"
SNAPSHOT_HEADER = "# livingcity-snapshot v1"
GENESIS = "0" * 64


@dataclass(frozen=True)
class WorldEvent:
    seq: int
    tick: int
    city_id: int | None
    kind: str
    payload: dict
    outcome: object
    client_timestamp: float | None
    digest: str
    prior_state_hash: str | None = None

    def body(self) -> dict:
        # what the digest covers: everything that determines state
        return {"seq": self.seq, "tick": self.tick, "city_id": self.city_id, "kind": self.kind, "payload": self.payload, "outcome": self.outcome}

    def to_json(self) -> str:
        return canonical_json(asdict(self))

    @classmethod
    def from_json(cls, line: str) -> "WorldEvent":
        return cls(**json.loads(line))


def chain(prev_digest: str, body: dict) -> str:
    return hashlib.sha256((prev_digest + canonical_json(body)).encode()).hexdigest()


def normalize(obj):
    """Round-trip through JSON so live and replayed outcomes compare equal."""
    return json.loads(canonical_json(obj))


class EventLog:
    """In-memory log with optional write-through to a file."""

    def __init__(self, path=None, start_seq: int = 0, last_digest: str = GENESIS):
        self.events: list[WorldEvent] = []
        self.start_seq = start_seq
        self.last_seq = start_seq
        self.last_digest = last_digest
        self._lock = threading.Lock()
        self._fh = None
        if path is not None:
            path = Path(path)
            fresh = not path.exists() or path.stat().st_size == 0
            self._fh = open(path, "a", encoding="utf-8")
            if fresh:
                self._fh.write(LOG_HEADER + "\n")
                self._fh.flush()

    def append(self, tick, city_id, kind, payload, outcome, client_timestamp=None, prior_state_hash=None) -> WorldEvent:
        with self._lock:
            seq = self.last_seq + 1
            payload, outcome = normalize(payload), normalize(outcome)
            body = {"seq": seq, "tick": tick, "city_id": city_id, "kind": kind, "payload": payload, "outcome": outcome}
            digest = chain(self.last_digest, body)
            ev = WorldEvent(seq, tick, city_id, kind, payload, outcome, client_timestamp, digest, prior_state_hash)
            self.events.append(ev)
            self.last_seq, self.last_digest = seq, digest
            if self._fh is not None:
                self._fh.write(ev.to_json() + "\n")
                self._fh.flush()
            return ev

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self) -> Iterator[WorldEvent]:
        return iter(self.events)

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def save(self, path) -> None:
        write_log(self.events, path)


def write_log(events: Iterable[WorldEvent], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(LOG_HEADER + "\n")
        for ev in events:
            fh.write(ev.to_json() + "\n")


def read_log(path) -> list[WorldEvent]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != LOG_HEADER:
        raise LivingCityError(f"{path}: missing header {LOG_HEADER!r}")
    out = []
    for n, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            out.append(WorldEvent.from_json(line))
        except (json.JSONDecodeError, TypeError) as exc:
            # a torn final write is tolerated; anything else is corruption
            if n == len(lines):
                break
            raise LivingCityError(f"{path}: line {n}: {exc}") from exc
    return out


# -- snapshots -----------------------------------------------------------------


@dataclass(frozen=True)
class Snapshot:
    seq: int
    digest: str
    state: dict
    state_hash: str

    def to_json(self) -> str:
        return canonical_json(asdict(self))


def snapshot(world: World, seq: int, digest: str) -> Snapshot:
    state = world.to_state()
    return Snapshot(seq, digest, state, state_hash(state))


def genesis_snapshot(world: World) -> Snapshot:
    return snapshot(world, 0, GENESIS)


def write_snapshot(snap: Snapshot, path) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(SNAPSHOT_HEADER + "\n" + snap.to_json() + "\n")
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def read_snapshot(path) -> Snapshot:
    header, _, body = Path(path).read_text(encoding="utf-8").partition("\n")
    if header != SNAPSHOT_HEADER:
        raise LivingCityError(f"{path}: missing header {SNAPSHOT_HEADER!r}")
    return Snapshot(**json.loads(body))


# -- replay --------------------------------------------------------------------


def restore(snap: Snapshot, catalog: Catalog, config: WorldConfig | None = None) -> World:
    world = World.from_state(snap.state, catalog, config)
    got = world.state_hash()
    if got != snap.state_hash:
        raise HashMismatch(f"snapshot at seq {snap.seq} restores to {got[:12]}, recorded {snap.state_hash[:12]}")
    return world


def replay(snap: Snapshot, events: Iterable[WorldEvent], catalog: Catalog, config: WorldConfig | None = None) -> World:
    """Rebuild the world from ``snap`` by re-applying ``events`` in order.

    Raises GapInLog on a missing or out-of-order sequence number and
    HashMismatch whenever a re-applied event disagrees with its record.
    """
    from .commands import apply_event

    world = restore(snap, catalog, config)
    expected, digest = snap.seq + 1, snap.digest
    for ev in events:
        if ev.seq <= snap.seq:
            continue
        if ev.seq != expected:
            raise GapInLog(f"expected seq {expected}, found {ev.seq}")
        if chain(digest, ev.body()) != ev.digest:
            raise HashMismatch(f"digest chain broken at seq {ev.seq}")
        if ev.prior_state_hash is not None and world.state_hash() != ev.prior_state_hash:
            raise HashMismatch(f"state before seq {ev.seq} differs from the live run")
        outcome = normalize(apply_event(world, ev))
        if outcome != ev.outcome:
            raise HashMismatch(f"seq {ev.seq} ({ev.kind}) replayed to a different outcome")
        expected, digest = expected + 1, ev.digest
    return world
