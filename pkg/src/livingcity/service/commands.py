"""Command schema and the single dispatch used by both live submission and replay.

A command's payload is checked field by field against ``SCHEMA`` before it
reaches the world; fields are typed values, never spliced into anything, so
only designated free-text fields need the injection filter.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..errors import HashMismatch, MalformedCommand
from ..world import World

# verb -> {field: (type, required)}
_STR, _INT, _NUM = str, int, float
SCHEMA: dict[str, dict[str, tuple[type, bool]]] = {
    "register": {"name": (_STR, True), "password": (_STR, True)},
    "login": {"name": (_STR, True), "password": (_STR, True)},
    "logout": {},
    "start_build": {"building_id": (_STR, True)},
    "set_allocation": {"name": (_STR, True), "value": (_NUM, True)},
    "hire": {"npc_id": (_STR, True)},
    "fire": {"npc_id": (_STR, True)},
    "invest": {"amount": (_INT, True)},
    "withdraw": {"amount": (_INT, True)},
    "issue_call": {"mechanism": (_STR, True), "service_category": (_STR, True), "price": (_INT, True), "duration": (_INT, False)},
    "place_bid": {"call_id": (_STR, True), "amount": (_INT, True)},
    "claim_fixed_price": {"call_id": (_STR, True)},
    "settle_auction": {"call_id": (_STR, True)},
    "propose_offer": {"call_id": (_STR, True), "price": (_INT, True), "building_id": (_STR, True)},
    "accept_offer": {"call_id": (_STR, True), "offer_id": (_STR, True)},
    "reject_offer": {"call_id": (_STR, True), "offer_id": (_STR, True)},
    "build_external": {"license_id": (_STR, True), "building_id": (_STR, True)},
    "query": {"view": (_STR, True)},
}
# fields screened by the input filter
FREE_TEXT = {("register", "name")}
# verbs that do not need a session
ANONYMOUS = {"register", "login"}
READ_ONLY = {"query"}


@dataclass
class Command:
    verb: str
    payload: dict = field(default_factory=dict)
    session_id: str | None = None
    city_id: int | None = None
    client_timestamp: float | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "Command":
        if not isinstance(d, dict):
            raise MalformedCommand("command must be a JSON object")
        extra = set(d) - {"verb", "payload", "session", "session_id", "city_id", "client_timestamp", "v", "id"}
        if extra:
            raise MalformedCommand(f"unknown command fields {sorted(extra)}")
        verb = d.get("verb")
        if not isinstance(verb, str):
            raise MalformedCommand("missing verb")
        ts = d.get("client_timestamp")
        if ts is not None and (isinstance(ts, bool) or not isinstance(ts, (int, float))):
            raise MalformedCommand("client_timestamp must be a number")
        return cls(verb, d.get("payload") or {}, d.get("session", d.get("session_id")), d.get("city_id"), ts)


def validate(cmd: Command) -> dict:
    """Check verb and payload types; returns a clean copy of the payload."""
    schema = SCHEMA.get(cmd.verb)
    if schema is None:
        raise MalformedCommand(f"unknown verb {cmd.verb!r}")
    if not isinstance(cmd.payload, dict):
        raise MalformedCommand("payload must be an object")
    unknown = set(cmd.payload) - set(schema)
    if unknown:
        raise MalformedCommand(f"{cmd.verb}: unknown fields {sorted(unknown)}")
    clean = {}
    for name, (typ, required) in schema.items():
        if name not in cmd.payload:
            if required:
                raise MalformedCommand(f"{cmd.verb}: missing field {name!r}")
            continue
        value = cmd.payload[name]
        if isinstance(value, bool) or not _type_ok(value, typ):
            raise MalformedCommand(f"{cmd.verb}: field {name!r} must be {typ.__name__}")
        clean[name] = float(value) if typ is float else value
    return clean


def _type_ok(value, typ) -> bool:
    if typ is float:
        return isinstance(value, (int, float)) and value == value  # rejects NaN
    return isinstance(value, typ)


def apply_command(world: World, verb: str, city_id: int | None, payload: dict):
    """Apply one logged command to ``world`` and return its outcome. Deterministic."""
    m = world.market
    p = payload
    if verb == "register":
        city = world.register_city(p["name"])
        world.accounts[p["name"]] = {
            "city_id": city.city_id,
            "salt": p["salt"],
            "iterations": p["iterations"],
            "pw_hash": p["pw_hash"],
        }
        return {"city_id": city.city_id, "grant": city.treasury}
    if verb in ("login", "logout"):
        return {"level": world.city(city_id).level}
    if verb == "start_build":
        city = world.city(city_id)
        before = city.treasury
        done = world.start_build(city_id, p["building_id"])
        job = city.active_builds[world.spec(p["building_id"]).category.value]
        return {"building_id": p["building_id"], "stage": job["stage"], "completion_tick": done, "cost": before - city.treasury}
    if verb == "set_allocation":
        return {"allocations": world.set_allocation(city_id, p["name"], p["value"])}
    if verb == "hire":
        world.hire(city_id, p["npc_id"])
        return {"npc_id": p["npc_id"], "role": m.npc(p["npc_id"]).role.value}
    if verb == "fire":
        world.fire(city_id, p["npc_id"])
        return {"npc_id": p["npc_id"]}
    if verb == "invest":
        return {"amount": p["amount"], "investments": world.invest(city_id, p["amount"])}
    if verb == "withdraw":
        return {"amount": p["amount"], "investments": world.withdraw(city_id, p["amount"])}
    if verb == "issue_call":
        call_id = m.issue_call(city_id, p["mechanism"], p["service_category"], p["price"], p.get("duration"))
        call = m.call(call_id)
        return {"call_id": call_id, "mechanism": call.mechanism.value, "deadline_tick": call.deadline_tick}
    if verb == "place_bid":
        bid = m.place_bid(p["call_id"], city_id, p["amount"])
        return {"call_id": p["call_id"], "amount": bid.amount}
    if verb == "claim_fixed_price":
        license_id = m.claim_fixed_price(p["call_id"], city_id)
        return {"call_id": p["call_id"], "license_id": license_id, "price": m.call(p["call_id"]).award_price}
    if verb == "settle_auction":
        call = m.settle_auction(p["call_id"])
        return {"call_id": call.call_id, "state": call.state.value, "winner": call.winner, "price": call.award_price}
    if verb == "propose_offer":
        return {"call_id": p["call_id"], "offer_id": m.propose_offer(p["call_id"], city_id, p["price"], p["building_id"])}
    if verb == "accept_offer":
        license_id = m.accept_offer(p["call_id"], p["offer_id"], city_id)
        call = m.call(p["call_id"])
        return {"call_id": call.call_id, "license_id": license_id, "winner": call.winner, "price": call.award_price}
    if verb == "reject_offer":
        m.reject_offer(p["call_id"], p["offer_id"], city_id)
        return {"call_id": p["call_id"], "offer_id": p["offer_id"]}
    if verb == "build_external":
        city = world.city(city_id)
        before = city.treasury
        done = m.build_external(city_id, p["license_id"], p["building_id"])
        return {"license_id": p["license_id"], "building_id": p["building_id"], "completion_tick": done, "cost": before - city.treasury}
    if verb == "advance":
        return {"effects": world.tick(p["to_tick"])}
    raise MalformedCommand(f"verb {verb!r} cannot be applied")


def apply_event(world: World, ev) -> object:
    if ev.tick != world.clock:
        raise HashMismatch(f"seq {ev.seq} was applied at tick {ev.tick}, replay clock is {world.clock}")
    return apply_command(world, ev.kind, ev.city_id, ev.payload)
