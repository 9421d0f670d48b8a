"""Activity metrics recomputed from an event log alone."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Iterable

from ..errors import GapInLog

# metric -> how it is counted from the log
METRICS = {
    "buildings": "build_completed effects (construction and upgrades, own and external)",
    "calls": "issue_call events",
    "offers": "place_bid, propose_offer and claim_fixed_price events",
    "services": "service_started effects",
    "staff": "hire events",
    "investments": "invest events",
}
_COMMAND_METRIC = {
    "issue_call": "calls",
    "place_bid": "offers",
    "propose_offer": "offers",
    "claim_fixed_price": "offers",
    "hire": "staff",
    "invest": "investments",
}
_SPEND_VERBS = ("start_build", "build_external")


@dataclass
class SimReport:
    events: int = 0
    final_tick: int = 0
    players: int = 0
    active_players: int = 0
    totals: dict = field(default_factory=lambda: {m: 0 for m in METRICS})
    averages: dict = field(default_factory=lambda: {m: 0.0 for m in METRICS})
    level_distribution: dict = field(default_factory=dict)  # level -> cities
    session_by_level: dict = field(default_factory=dict)  # level -> {"sessions", "mean_ticks"}
    money: dict = field(default_factory=lambda: {"grants": 0, "income": 0, "costs": 0, "build_spend": 0, "expected_total": 0})

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "SimReport":
        r = cls(**d)
        # JSON turns the integer level keys into strings
        r.level_distribution = {int(k): v for k, v in r.level_distribution.items()}
        r.session_by_level = {int(k): v for k, v in r.session_by_level.items()}
        return r

    def all_metrics_nonzero(self) -> bool:
        return all(self.totals[m] > 0 for m in METRICS)


def metrics_from_log(events: Iterable) -> SimReport:
    """Build a SimReport from logged events; raises GapInLog on a hole in the sequence."""
    r = SimReport()
    levels: dict[int, int] = {}
    active: set[int] = set()
    open_sessions: dict[int, tuple[int, int]] = {}  # city -> (start tick, level at start)
    durations: dict[int, list[int]] = {}
    expected = None

    for ev in events:
        if expected is not None and ev.seq != expected:
            raise GapInLog(f"expected seq {expected}, found {ev.seq}")
        expected = ev.seq + 1
        r.events += 1
        r.final_tick = max(r.final_tick, ev.tick)
        kind, cid = ev.kind, ev.city_id

        if kind == "register":
            cid = ev.outcome["city_id"]
            levels[cid] = 1
            r.money["grants"] += ev.outcome["grant"]
        if kind in ("register", "login"):
            active.add(cid)
            open_sessions[cid] = (ev.tick, levels[cid])
        elif kind == "logout" and cid in open_sessions:
            start, lvl = open_sessions.pop(cid)
            durations.setdefault(lvl, []).append(ev.tick - start)

        if kind in _COMMAND_METRIC:
            r.totals[_COMMAND_METRIC[kind]] += 1
        if kind in _SPEND_VERBS:
            r.money["build_spend"] += ev.outcome["cost"]
        if kind == "advance":
            for eff in ev.outcome["effects"]:
                ek = eff["kind"]
                if ek == "build_completed":
                    r.totals["buildings"] += 1
                elif ek == "service_started":
                    r.totals["services"] += 1
                elif ek == "level_up":
                    levels[eff["city_id"]] = eff["level"]
                elif ek == "economy":
                    r.money["income"] += eff["income"]
                    r.money["costs"] += eff["costs"]

    r.players = len(levels)
    r.active_players = len(active)
    if r.active_players:
        r.averages = {m: r.totals[m] / r.active_players for m in METRICS}
    for lvl in levels.values():
        r.level_distribution[lvl] = r.level_distribution.get(lvl, 0) + 1
    r.level_distribution = dict(sorted(r.level_distribution.items()))
    r.session_by_level = {
        lvl: {"sessions": len(d), "mean_ticks": sum(d) / len(d)} for lvl, d in sorted(durations.items())
    }
    m = r.money
    m["expected_total"] = m["grants"] + m["income"] - m["costs"] - m["build_spend"]
    return r
