"""Scripted bot policies.

A bot is a weighted-choice automaton: during a session it repeatedly picks
one verb family with probability proportional to its policy weight (among the
families that are currently feasible) and submits a command for it. All
choices come from the bot's own seeded RNG, so a run is reproducible.
"""

from __future__ import annotations

import enum
import functools
import random
from dataclasses import dataclass, field

from .. import balance
from ..catalog import Catalog, Category, EXTERNAL_SUBTYPES
from ..errors import LivingCityError

DAY = 86400


class PolicyId(enum.Enum):
    BUILDER = "builder"
    TRADER = "trader"
    IDLER = "idler"
    BALANCED = "balanced"


VERB_FAMILIES = ("build", "hire", "allocate", "issue_call", "respond", "use_license", "invest")


@dataclass(frozen=True)
class BotPolicy:
    policy_id: PolicyId
    weights: dict
    sessions_per_day: int = 3
    session_length: int = 1800  # ticks
    actions_per_slice: int = 3

    def __post_init__(self):
        if any(w < 0 for w in self.weights.values()):
            raise ValueError("policy weights must be non-negative")
        if self.sessions_per_day <= 0 or self.session_length <= 0 or self.actions_per_slice <= 0:
            raise ValueError("activity schedule must be positive")


POLICIES = {
    PolicyId.BUILDER: BotPolicy(
        PolicyId.BUILDER,
        {"build": 8, "hire": 1, "allocate": 1, "issue_call": 0.5, "respond": 0.5, "use_license": 2, "invest": 0.2},
    ),
    PolicyId.TRADER: BotPolicy(
        PolicyId.TRADER,
        {"build": 2, "hire": 0.5, "allocate": 0.5, "issue_call": 3, "respond": 4, "use_license": 3, "invest": 1},
    ),
    PolicyId.IDLER: BotPolicy(PolicyId.IDLER, {f: 0 for f in VERB_FAMILIES}, sessions_per_day=1, session_length=600),
    PolicyId.BALANCED: BotPolicy(
        PolicyId.BALANCED,
        {"build": 5, "hire": 1, "allocate": 0.5, "issue_call": 1.5, "respond": 2, "use_license": 2, "invest": 0.5},
    ),
}


def policy(policy_id) -> BotPolicy:
    return POLICIES[PolicyId(policy_id)]


@functools.lru_cache(maxsize=None)
def _cost_cents(base_cost: float, stage: int) -> int:
    return round(balance.build_cost_at_stage(base_cost, stage) * 100)


_BUILDABLE: dict[int, tuple] = {}


def _buildable(catalog: Catalog) -> tuple:
    """(building_id, category value, min level, base cost) for every non-external entry."""
    hit = _BUILDABLE.get(id(catalog))
    if hit is None or hit[0] is not catalog:
        rows = tuple(
            (e.building_id, e.category.value, e.min_city_level, e.base_cost) for e in catalog if not e.is_external
        )
        hit = _BUILDABLE[id(catalog)] = (catalog, rows)
    return hit[1]


@dataclass
class Bot:
    index: int
    policy: BotPolicy
    rng: random.Random
    name: str
    password: str
    session: str | None = None
    city_id: int | None = None
    session_end: int = -1
    pending_sessions: list[int] = field(default_factory=list)
    browsed_market: bool = False  # the staff listing is large; look once per session

    # -- schedule ------------------------------------------------------------

    def plan_day(self, day: int) -> None:
        starts = sorted(day * DAY + self.rng.randrange(DAY) for _ in range(self.policy.sessions_per_day))
        self.pending_sessions.extend(starts)

    @property
    def in_session(self) -> bool:
        return self.session is not None

    # -- behaviour -------------------------------------------------------------

    def act(self, service, catalog: Catalog) -> int:
        """Run up to ``actions_per_slice`` decisions; returns how many commands were accepted."""
        done = 0
        view = None
        for _ in range(self.policy.actions_per_slice):
            if view is None:
                view = service.query(self.session, "city")
            feasible = self._feasible(view)
            weights = [self.policy.weights.get(f, 0) for f in feasible]
            if not feasible or sum(weights) <= 0:
                break
            family = self.rng.choices(feasible, weights)[0]
            try:
                if getattr(self, f"_do_{family}")(service, catalog, view):
                    done += 1
                    view = None  # state changed; look again before the next decision
            except LivingCityError:
                view = None  # lost a race or misjudged; a real player would just retry later
        return done

    def _submit(self, service, verb: str, **payload) -> dict:
        return service.submit({"verb": verb, "session": self.session, "payload": payload})

    def _feasible(self, view: dict) -> list[str]:
        fam = ["build", "allocate", "respond"]
        if len(view["staff"]) < 8 and not self.browsed_market:
            fam.append("hire")
        if any(s["state"] == "free" for s in view["slots"]):
            fam.append("issue_call")
        fam.append("use_license")
        if view["treasury"] > 5_000_000:
            fam.append("invest")
        return fam

    def _do_build(self, service, catalog: Catalog, view: dict) -> bool:
        busy = set(view["active_builds"])
        owned = view["buildings"]
        rows = _buildable(catalog)
        category = {r[0]: r[1] for r in rows}
        per_cat: dict[str, int] = {}
        for b in owned:
            c = category[b]
            per_cat[c] = per_cat.get(c, 0) + 1
        level, quota, budget = view["level"], view["buildable_per_category"], view["treasury"] * 0.8
        options = []
        for building_id, cat, min_level, base_cost in rows:
            if cat in busy or min_level > level:
                continue
            stage = owned.get(building_id, 0) + 1
            if stage > balance.MAX_STAGE or (stage == 1 and per_cat.get(cat, 0) >= quota):
                continue
            cost = _cost_cents(base_cost, stage)
            if cost <= budget:
                options.append((cost, building_id))
        if not options:
            return False
        options.sort()
        _, building_id = self.rng.choice(options[:4])
        self._submit(service, "start_build", building_id=building_id)
        return True

    def _do_hire(self, service, catalog, view) -> bool:
        self.browsed_market = True
        market = service.query(self.session, "marketplace")
        held = {}
        for s in view["staff"]:
            held[s["role"]] = held.get(s["role"], 0) + 1
        caps = service.config.role_caps
        affordable = [
            n for n in market
            if held.get(n["role"], 0) < caps.get(n["role"], 0) and n["salary"] * 86400 * 2 < view["treasury"]
        ]
        if not affordable:
            return False
        pick = max(self.rng.sample(affordable, min(5, len(affordable))), key=lambda n: sum(n["traits"].values()) / n["salary"])
        self._submit(service, "hire", npc_id=pick["npc_id"])
        return True

    def _do_allocate(self, service, catalog, view) -> bool:
        name = self.rng.choice(sorted(view["allocations"]))
        current = view["allocations"][name]
        value = min(1.0, max(0.0, current + self.rng.choice((-0.1, 0.1))))
        if name == "tax_rate":
            value = min(value, 0.35)
        self._submit(service, "set_allocation", name=name, value=round(value, 2))
        return True

    def _do_issue_call(self, service, catalog, view) -> bool:
        mechanism = self.rng.choice(("bid_auction", "direct_offer", "fixed_price"))
        subtype = self.rng.choice(EXTERNAL_SUBTYPES)
        price = self.rng.randrange(200_000, 1_500_000, 50_000)
        self._submit(service, "issue_call", mechanism=mechanism, service_category=subtype, price=price)
        return True

    def _do_respond(self, service, catalog: Catalog, view) -> bool:
        calls = service.query(self.session, "open_calls")
        mine = [c for c in calls if c["mine"] and c.get("offers")]
        if mine:
            call = self.rng.choice(mine)
            best = max(call["offers"], key=lambda o: (o["price"], o["offer_id"]))
            self._submit(service, "accept_offer", call_id=call["call_id"], offer_id=best["offer_id"])
            return True
        others = [c for c in calls if not c["mine"] and not c["leading"] and c["deadline_tick"] > view["tick"]]
        if not others:
            return False
        call = self.rng.choice(others)
        budget = view["treasury"] // 3
        if call["mechanism"] == "fixed_price":
            if call["price"] > budget:
                return False
            self._submit(service, "claim_fixed_price", call_id=call["call_id"])
        elif call["mechanism"] == "bid_auction":
            floor = max(call["price"], (call["best_bid"] or 0) + 1)
            amount = floor + floor // 20
            if amount > budget:
                return False
            self._submit(service, "place_bid", call_id=call["call_id"], amount=amount)
        else:
            spec = self._external_for(catalog, call["service_category"], view["level"])
            if spec is None or call["price"] > budget:
                return False
            self._submit(service, "propose_offer", call_id=call["call_id"], price=call["price"], building_id=spec.building_id)
        return True

    def _external_for(self, catalog: Catalog, subtype: str, level: int):
        options = [
            e for e in catalog.by_category(Category.EXTERNAL) if e.subtype == subtype and e.min_city_level <= level
        ]
        return min(options, key=lambda e: (e.base_cost, e.building_id)) if options else None

    def _do_use_license(self, service, catalog, view) -> bool:
        if Category.EXTERNAL.value in view["active_builds"]:
            return False
        unused = [lic for lic in service.query(self.session, "licenses") if lic["building_id"] is None]
        for lic in unused:
            spec = self._external_for(catalog, lic["subtype"], view["level"])
            if spec is not None and spec.base_cost_cents <= view["treasury"]:
                self._submit(service, "build_external", license_id=lic["license_id"], building_id=spec.building_id)
                return True
        return False

    def _do_invest(self, service, catalog, view) -> bool:
        amount = view["treasury"] // 10
        if amount <= 0:
            return False
        self._submit(service, "invest", amount=amount)
        return True
