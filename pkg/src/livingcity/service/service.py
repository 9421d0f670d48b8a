"""The command boundary over a world.

``submit`` runs in two layers. The advisory pre-check reads live state
without any lock and may report a likely failure; it never decides. The
commit layer takes the single writer lock, applies the command to the world
and appends it to the log, which fixes the order. Client timestamps are
recorded but never used for ordering or state.
"""

from __future__ import annotations

import hashlib
import logging
import secrets
import threading
import time
from pathlib import Path

from .. import economy
from ..catalog import Catalog
from ..config import WorldConfig, default_config
from ..errors import (
    InputRejected,
    InvalidParams,
    LivingCityError,
    Unauthenticated,
    UnknownView,
)
from ..world import World
from . import eventlog
from .commands import ANONYMOUS, FREE_TEXT, READ_ONLY, Command, apply_command, validate
from .filter import filter_input

log = logging.getLogger(__name__)

VIEWS = ("city", "economy", "rankings", "open_calls", "marketplace", "licenses", "staff_performance")


class CompressedClock:
    """Maps wall-clock seconds to ticks: ``compression`` ticks per real second."""

    def __init__(self, compression: float, start_tick: int = 0, time_fn=time.monotonic):
        if compression < 1:
            raise InvalidParams("compression must be >= 1")
        self.compression = compression
        self.start_tick = start_tick
        self._time = time_fn
        self._t0 = time_fn()

    def now_tick(self) -> int:
        return self.start_tick + int((self._time() - self._t0) * self.compression)


PBKDF2_ITERATIONS = 100_000


def _hash_password(salt: str, password: str, iterations: int) -> str:
    return hashlib.pbkdf2_hmac("sha256", password.encode(), bytes.fromhex(salt), iterations).hex()


class Service:
    def __init__(
        self,
        catalog: Catalog,
        config: WorldConfig | None = None,
        seed: int = 0,
        state_dir=None,
        checkpoint_every: int = 1000,
        snapshot_every: int | None = None,
        clock: CompressedClock | None = None,
        salt_fn=None,
        pbkdf2_iterations: int = PBKDF2_ITERATIONS,
    ):
        self.catalog = catalog
        self.config = config or default_config()
        self.checkpoint_every = checkpoint_every
        self.snapshot_every = snapshot_every
        self.clock = clock
        # register() logs the salt, so a seeded run needs a deterministic source
        self._salt = salt_fn or (lambda: secrets.token_hex(8))
        # applies to new accounts; each account records the count it was hashed with
        self.pbkdf2_iterations = pbkdf2_iterations
        self.sessions: dict[str, int] = {}
        self._commit = threading.Lock()
        self.state_dir = Path(state_dir) if state_dir is not None else None

        if self.state_dir is None:
            self.world = World(catalog, self.config, seed)
            self.genesis = eventlog.genesis_snapshot(self.world)
            self.log = eventlog.EventLog()
        else:
            self._open_state_dir(seed)

    # -- persistence ------------------------------------------------------------

    @property
    def snapshot_path(self) -> Path:
        return self.state_dir / "snapshot.json"

    @property
    def log_path(self) -> Path:
        return self.state_dir / "events.log"

    def _open_state_dir(self, seed: int) -> None:
        self.state_dir.mkdir(parents=True, exist_ok=True)
        if self.snapshot_path.exists():
            snap = eventlog.read_snapshot(self.snapshot_path)
        else:
            snap = eventlog.genesis_snapshot(World(self.catalog, self.config, seed))
            eventlog.write_snapshot(snap, self.snapshot_path)
        events = eventlog.read_log(self.log_path) if self.log_path.exists() else []
        self.world = eventlog.replay(snap, events, self.catalog, self.config)
        self.genesis = snap
        last = events[-1] if events else None
        self.log = eventlog.EventLog(
            self.log_path,
            start_seq=last.seq if last else snap.seq,
            last_digest=last.digest if last else snap.digest,
        )
        self.log.events.extend(e for e in events if e.seq > snap.seq)
        log.info("restored world at seq %d, tick %d", self.log.last_seq, self.world.clock)

    def take_snapshot(self) -> eventlog.Snapshot:
        with self._commit:
            return self._snapshot_locked()

    def _snapshot_locked(self) -> eventlog.Snapshot:
        snap = eventlog.snapshot(self.world, self.log.last_seq, self.log.last_digest)
        if self.state_dir is not None:
            eventlog.write_snapshot(snap, self.snapshot_path)
        return snap

    def close(self) -> None:
        if self.state_dir is not None:
            self.take_snapshot()
        self.log.close()

    # -- commands ---------------------------------------------------------------

    def session_city(self, session_id) -> int:
        try:
            return self.sessions[session_id]
        except (KeyError, TypeError):
            raise Unauthenticated("unknown or expired session") from None

    def submit(self, command: Command | dict) -> dict:
        """Validate, authenticate, filter, pre-check, then commit one command."""
        cmd = command if isinstance(command, Command) else Command.from_dict(command)
        payload = validate(cmd)
        if cmd.verb in READ_ONLY:
            return {"result": self.query(cmd.session_id, payload["view"])}

        city_id = None
        if cmd.verb not in ANONYMOUS:
            city_id = self.session_city(cmd.session_id)
            if cmd.city_id is not None and cmd.city_id != city_id:
                raise Unauthenticated("session does not belong to that city")
        for verb, name in FREE_TEXT:
            if verb == cmd.verb:
                verdict = filter_input(payload[name])
                if not verdict.passed:
                    raise InputRejected(f"{name}: {verdict.reason}")

        response: dict = {}
        if cmd.verb == "start_build":
            response["precheck"] = self._precheck_build(city_id, payload["building_id"])

        with self._commit:
            if self.clock is not None:
                self._advance_locked(self.clock.now_tick())
            if cmd.verb == "register":
                if payload["name"] in self.world.accounts:
                    raise InvalidParams(f"name {payload['name']!r} is taken")
                salt = self._salt()
                n = self.pbkdf2_iterations
                payload = {
                    "name": payload["name"],
                    "salt": salt,
                    "iterations": n,
                    "pw_hash": _hash_password(salt, payload["password"], n),
                }
            elif cmd.verb == "login":
                city_id = self._check_login(payload)
                payload = {}
            ev = self._commit_locked(cmd.verb, city_id, payload, cmd.client_timestamp)

        if cmd.verb in ("register", "login"):
            token = secrets.token_hex(16)
            self.sessions[token] = ev.city_id if ev.city_id is not None else ev.outcome["city_id"]
            response["session"] = token
        elif cmd.verb == "logout":
            self.sessions.pop(cmd.session_id, None)
        response.update({"seq": ev.seq, "tick": ev.tick, "result": ev.outcome})
        return response

    def _check_login(self, payload: dict) -> int:
        acct = self.world.accounts.get(payload["name"])
        if acct is None or not secrets.compare_digest(
            acct["pw_hash"], _hash_password(acct["salt"], payload["password"], acct["iterations"])
        ):
            raise Unauthenticated("bad name or password")
        return acct["city_id"]

    def _precheck_build(self, city_id: int, building_id: str) -> str:
        # unlocked, possibly stale read: advisory only
        try:
            city = self.world.city(city_id)
            spec = self.world.spec(building_id)
            self.world.precheck_build(city, spec)
        except LivingCityError as exc:
            return f"likely {exc.code}"
        return "clear"

    def _commit_locked(self, verb: str, city_id, payload: dict, client_ts=None) -> eventlog.WorldEvent:
        seq = self.log.last_seq + 1
        prior = self.world.state_hash() if self.checkpoint_every and seq % self.checkpoint_every == 0 else None
        tick = self.world.clock
        outcome = apply_command(self.world, verb, city_id, payload)
        if verb == "register":
            city_id = outcome["city_id"]
        ev = self.log.append(tick, city_id, verb, payload, outcome, client_ts, prior)
        if self.snapshot_every and ev.seq % self.snapshot_every == 0:
            self._snapshot_locked()
        return ev

    def advance(self, to_tick: int) -> list[dict]:
        """Move the world clock forward; logged like any other command."""
        with self._commit:
            ev = self._advance_locked(to_tick)
            return ev.outcome["effects"] if ev is not None else []

    def _advance_locked(self, to_tick: int):
        if to_tick <= self.world.clock:
            return None
        return self._commit_locked("advance", None, {"to_tick": int(to_tick)})

    # -- reads ------------------------------------------------------------------

    def query(self, session_id, view: str):
        city_id = self.session_city(session_id)
        if view not in VIEWS:
            raise UnknownView(f"unknown view {view!r}; expected one of {VIEWS}")
        with self._commit:
            if self.clock is not None:
                self._advance_locked(self.clock.now_tick())
            return getattr(self, f"_view_{view}")(city_id)

    def _view_city(self, city_id: int) -> dict:
        w = self.world
        c = w.city(city_id)
        lvl = w.level_of(c)
        return {
            "city_id": c.city_id,
            "name": c.name,
            "tick": w.clock,
            "level": lvl.value,
            "level_name": lvl.name,
            "treasury": c.treasury,
            "investments": c.investments,
            "fame": c.fame,
            "cooperation": c.cooperation,
            "buildings": dict(sorted(c.buildings.items())),
            "active_builds": {k: dict(v) for k, v in sorted(c.active_builds.items())},
            "allocations": dict(c.allocations),
            "qol": w.qol_now(c),
            "staff": [
                {"npc_id": n, "role": w.market.npc(n).role.value, "salary": w.market.npc(n).salary}
                for n in c.staff
            ],
            "slots": [{"slot_id": s["slot_id"], "state": s["state"]} for s in c.slots],
            "buildable_per_category": lvl.buildable_per_category,
        }

    def _view_economy(self, city_id: int) -> dict:
        proj = self.world.projections(city_id)
        proj["qol_index_target"] = economy.qol_index(proj["targets"])
        return proj

    def _view_rankings(self, city_id: int) -> list[dict]:
        cities = sorted(self.world.cities.values(), key=lambda c: (-c.fame, c.city_id))
        return [
            {"rank": i + 1, "name": c.name, "fame": c.fame, "level": c.level, "you": c.city_id == city_id}
            for i, c in enumerate(cities)
        ]

    def _view_open_calls(self, city_id: int) -> list[dict]:
        w = self.world
        out = []
        for call in w.market.open_calls():
            best = w.market.escrow.get(call.call_id)
            item = {
                "call_id": call.call_id,
                "issuer": w.city(call.issuer).name,
                "mine": call.issuer == city_id,
                "mechanism": call.mechanism.value,
                "service_category": call.service_category,
                "price": call.price,
                "deadline_tick": call.deadline_tick,
                "best_bid": best[1] if best else None,
                "leading": best is not None and best[0] == city_id,
            }
            if call.issuer == city_id:
                item["offers"] = [
                    {"offer_id": o.offer_id, "price": o.price, "building_id": o.building_id}
                    for o in call.offers
                    if o.state == "pending"
                ]
            out.append(item)
        return out

    def _view_marketplace(self, city_id: int) -> list[dict]:
        return [
            {"npc_id": n.npc_id, "name": n.name, "role": n.role.value, "traits": dict(n.traits), "salary": n.salary}
            for n in self.world.market.available_npcs()
        ]

    def _view_licenses(self, city_id: int) -> list[dict]:
        w = self.world
        return [
            {
                "license_id": lic.license_id,
                "granter": w.city(lic.granter).name,
                "subtype": lic.subtype,
                "building_id": lic.building_id,
                "built": lic.built,
            }
            for lic in w.market.licenses_held(city_id)
        ]

    def _view_staff_performance(self, city_id: int) -> dict:
        return self.world.staff_performance(city_id)
