"""Per-city state machines and the deterministic world clock.

One tick is one second of game time. ``World.tick`` walks forward through
*instants* (build completions, market deadlines, and settlement boundaries
every ``settle_period`` ticks) and processes each in a fixed order, so
``tick(a); tick(b)`` and ``tick(b)`` produce the same state bit for bit.

Money is held in integer cents. Every city carries its own lock; commands on
one city are serialized through it, while cross-city effects go through
``market``.
"""

from __future__ import annotations

import hashlib
import heapq
import json
import math
import threading
from dataclasses import dataclass, field

from . import balance, economy
from .catalog import CATEGORY_ORDER, Catalog, Category
from .config import LEVEL_NAMES, WEEK_TICKS, WorldConfig, default_config
from .errors import (
    CategoryBusy,
    InsufficientFunds,
    InvalidParams,
    LevelTooLow,
    NotEmployed,
    RoleCapReached,
    StageCapReached,
    UnknownEntity,
    WrongCategory,
)
from .market import Market
from .staff import Role, generate_npc, member_score

MAX_LEVEL = len(LEVEL_NAMES)
_CAT_INDEX = {c: i for i, c in enumerate(CATEGORY_ORDER)}


@dataclass(frozen=True)
class CityLevel:
    value: int
    name: str
    unlocked_slots: int
    buildable_per_category: int


def city_level(value: int, config: WorldConfig) -> CityLevel:
    if not 1 <= value <= MAX_LEVEL:
        raise InvalidParams(f"city level {value} outside [1, {MAX_LEVEL}]")
    return CityLevel(
        value,
        LEVEL_NAMES[value - 1],
        config.slots_by_level[value - 1],
        config.build_quota_by_level[value - 1],
    )


@dataclass
class City:
    city_id: int
    name: str
    treasury: int
    level: int = 1
    buildings: dict[str, int] = field(default_factory=dict)
    # category value -> {"building_id", "completion_tick", "stage", "license_id"}
    active_builds: dict[str, dict] = field(default_factory=dict)
    staff: list[str] = field(default_factory=list)
    allocations: dict[str, float] = field(default_factory=lambda: dict(economy.DEFAULT_ALLOCATIONS))
    qol: dict[str, float] = field(default_factory=lambda: dict(economy.QOL_FLOOR))
    last_settled: int = 0
    # {"slot_id", "state": free|reserved|licensed, "ref": call or license id}
    slots: list[dict] = field(default_factory=list)
    fame: int = 0
    cooperation: int = 0
    investments: int = 0
    ledger: dict[int, dict[str, int]] = field(default_factory=dict)
    builds_completed: int = 0
    lock: threading.RLock = field(default_factory=threading.RLock, repr=False, compare=False)

    def is_busy(self, category: Category) -> bool:
        return category.value in self.active_builds

    def free_slots(self) -> list[dict]:
        return [s for s in self.slots if s["state"] == "free"]

    def to_state(self) -> dict:
        return {
            "city_id": self.city_id,
            "name": self.name,
            "treasury": self.treasury,
            "level": self.level,
            "buildings": dict(sorted(self.buildings.items())),
            "active_builds": {k: dict(v) for k, v in sorted(self.active_builds.items())},
            "staff": list(self.staff),
            "allocations": dict(sorted(self.allocations.items())),
            "qol": dict(sorted(self.qol.items())),
            "last_settled": self.last_settled,
            "slots": [dict(s) for s in self.slots],
            "fame": self.fame,
            "cooperation": self.cooperation,
            "investments": self.investments,
            "ledger": {str(w): dict(sorted(v.items())) for w, v in sorted(self.ledger.items())},
            "builds_completed": self.builds_completed,
        }

    @classmethod
    def from_state(cls, d: dict) -> "City":
        city = cls(d["city_id"], d["name"], d["treasury"])
        for key in ("level", "last_settled", "fame", "cooperation", "investments", "builds_completed"):
            setattr(city, key, d[key])
        city.buildings = dict(d["buildings"])
        city.active_builds = {k: dict(v) for k, v in d["active_builds"].items()}
        city.staff = list(d["staff"])
        city.allocations = dict(d["allocations"])
        city.qol = dict(d["qol"])
        city.slots = [dict(s) for s in d["slots"]]
        city.ledger = {int(w): dict(v) for w, v in d["ledger"].items()}
        return city


class World:
    def __init__(self, catalog: Catalog, config: WorldConfig | None = None, seed: int = 0):
        self.catalog = catalog
        self._category = {e.building_id: e.category for e in catalog}
        self.config = config or default_config()
        self.seed = seed
        self.clock = 0
        self.last_grid = 0
        self.cities: dict[int, City] = {}
        self.accounts: dict[str, dict] = {}
        self.next_city_id = 1
        self.npc_seq = 0
        self.market = Market(self)
        self.lock = threading.RLock()
        self._completions: list[tuple[int, int, int]] = []

    # -- lookups ---------------------------------------------------------------

    def city(self, city_id: int) -> City:
        try:
            return self.cities[city_id]
        except KeyError:
            raise UnknownEntity(f"no city {city_id}") from None

    def spec(self, building_id: str):
        try:
            return self.catalog[building_id]
        except KeyError:
            raise UnknownEntity(f"no building {building_id}") from None

    def level_of(self, city: City) -> CityLevel:
        return city_level(city.level, self.config)

    # -- registration ----------------------------------------------------------

    def register_city(self, name: str) -> City:
        with self.lock:
            city = City(self.next_city_id, name, economy.to_cents(self.config.starting_treasury))
            city.last_settled = self.clock
            self.next_city_id += 1
            self.cities[city.city_id] = city
            self._sync_slots(city)
            for _ in range(self.config.npcs_per_registration):
                self.market.add_npc(generate_npc(self.npc_seq, self.seed))
                self.npc_seq += 1
            return city

    def _sync_slots(self, city: City) -> None:
        wanted = self.level_of(city).unlocked_slots
        while len(city.slots) < wanted:
            city.slots.append({"slot_id": f"{city.city_id}:{len(city.slots) + 1}", "state": "free", "ref": None})

    # -- construction ----------------------------------------------------------

    def build_cost(self, spec, stage: int) -> int:
        return economy.to_cents(balance.build_cost_at_stage(spec.base_cost, stage))

    def build_duration(self, spec, stage: int) -> int:
        # never finish early: round the real-valued time up
        return math.ceil(balance.required_time_at_stage(spec.base_time_s, stage))

    def start_build(self, city_id: int, building_id: str) -> int:
        """Reserve the category and debit the treasury; returns the completion tick."""
        city = self.city(city_id)
        spec = self.spec(building_id)
        with city.lock:
            if spec.is_external:
                raise WrongCategory(f"{building_id} is external and needs a license slot")
            self.precheck_build(city, spec)
            stage = city.buildings.get(building_id, 0) + 1
            cost = self.build_cost(spec, stage)
            if city.treasury < cost:
                raise InsufficientFunds(f"need {cost} cents, have {city.treasury}")
            city.treasury -= cost
            return self._schedule(city, spec, stage)

    def precheck_build(self, city: City, spec) -> None:
        """Rule checks that do not touch money; also used as the advisory pre-check."""
        if city.is_busy(spec.category):
            raise CategoryBusy(f"a {spec.category.value} build is already running")
        current = city.buildings.get(spec.building_id, 0)
        if current >= balance.MAX_STAGE:
            raise StageCapReached(f"{spec.building_id} is at stage {balance.MAX_STAGE}")
        if spec.min_city_level > city.level:
            raise LevelTooLow(f"{spec.building_id} needs city level {spec.min_city_level}")
        if current == 0 and not spec.is_external:
            owned = sum(1 for b in city.buildings if self._category[b] is spec.category)
            if owned >= self.level_of(city).buildable_per_category:
                raise LevelTooLow(f"{spec.category.value} quota for level {city.level} exhausted")

    def _schedule(self, city: City, spec, stage: int, license_id: str | None = None) -> int:
        done = self.clock + self.build_duration(spec, stage)
        city.active_builds[spec.category.value] = {
            "building_id": spec.building_id,
            "completion_tick": done,
            "stage": stage,
            "license_id": license_id,
        }
        heapq.heappush(self._completions, (done, city.city_id, _CAT_INDEX[spec.category]))
        return done

    # -- staff -------------------------------------------------------------------

    def hire(self, city_id: int, npc_id: str) -> list[str]:
        city = self.city(city_id)
        with city.lock:
            npc = self.market.npc(npc_id)
            cap = self.config.role_caps.get(npc.role.value, 0)
            in_role = sum(1 for n in city.staff if self.market.npc(n).role is npc.role)
            if in_role >= cap:
                raise RoleCapReached(f"{npc.role.value} cap of {cap} reached")
            if city.treasury < npc.salary * self.config.settle_period:
                raise InsufficientFunds("treasury cannot cover the salary")
            self.market.claim_npc(npc_id, city_id)
            city.staff.append(npc_id)
            return list(city.staff)

    def fire(self, city_id: int, npc_id: str) -> list[str]:
        city = self.city(city_id)
        with city.lock:
            if npc_id not in city.staff:
                raise NotEmployed(f"{npc_id} does not work for city {city_id}")
            self.market.release_npc(npc_id, city_id)
            city.staff.remove(npc_id)
            return list(city.staff)

    def staff_quality(self, city: City) -> float:
        if not city.staff:
            return 0.0
        return sum(self.market.npc(n).quality() for n in city.staff) / len(city.staff)

    def city_parameters(self, city: City) -> dict[str, float]:
        """Normalized [0, 1] snapshot of the city used to weight staff traits."""
        sat = lambda x, scale=1.0: x / (x + scale)  # noqa: E731
        p: dict[str, float] = {
            "level": city.level / MAX_LEVEL,
            "treasury": sat(city.treasury / 100.0, 100000.0),
            "investments": sat(city.investments / 100.0, 100000.0),
        }
        sums = self.stage_sums(city)
        for cat in CATEGORY_ORDER:
            n = sum(1 for b in city.buildings if self._category[b] is cat)
            p[f"count_{cat.value}"] = sat(n, 5.0)
            p[f"stages_{cat.value}"] = sat(sums.get(cat, 0), 20.0)
            p[f"busy_{cat.value}"] = 1.0 if city.is_busy(cat) else 0.0
        targets = self.targets(city)
        for name in economy.QOL:
            hi = economy.QOL_BOUNDS[name][1]
            scale = hi if name != "population" else max(economy.ceiling(name, sums), 1.0)
            p[f"qol_{name}"] = min(city.qol[name] / scale, 1.0)
            p[f"target_{name}"] = min(targets[name] / scale, 1.0)
            p[f"gap_{name}"] = min(abs(targets[name] - city.qol[name]) / scale, 1.0)
        for name in economy.ALLOCATIONS:
            p[f"alloc_{name}"] = city.allocations[name]
        for role in Role:
            p[f"staff_{role.value}"] = sat(sum(1 for n in city.staff if self.market.npc(n).role is role), 2.0)
        p["services_provided"] = sat(len(self.market.services_by_provider(city.city_id)), 2.0)
        p["services_consumed"] = sat(len(self.market.services_by_consumer(city.city_id)), 2.0)
        p["licenses_held"] = sat(len(self.market.licenses_held(city.city_id)), 2.0)
        p["free_slots"] = sat(len(city.free_slots()), 2.0)
        p["cooperation"] = sat(city.cooperation, 5.0)
        p["fame"] = sat(city.fame, 500.0)
        return p

    def staff_performance(self, city_id: int) -> dict:
        city = self.city(city_id)
        params = self.city_parameters(city)
        scores = {n: member_score(self.market.npc(n), params) for n in city.staff}
        return {"members": scores, "aggregate": sum(scores.values()), "parameters": len(params)}

    # -- management ----------------------------------------------------------------

    def set_allocation(self, city_id: int, name: str, value: float) -> dict:
        if name not in economy.ALLOCATIONS:
            raise InvalidParams(f"unknown allocation {name!r}")
        city = self.city(city_id)
        with city.lock:
            city.allocations[name] = economy.clamp01(float(value))
            return dict(city.allocations)

    def invest(self, city_id: int, amount: int) -> int:
        if amount <= 0:
            raise InvalidParams("investment must be positive")
        city = self.city(city_id)
        with city.lock:
            if city.treasury < amount:
                raise InsufficientFunds("treasury too low for this investment")
            city.treasury -= amount
            city.investments += amount
            return city.investments

    def withdraw(self, city_id: int, amount: int) -> int:
        city = self.city(city_id)
        with city.lock:
            if not 0 < amount <= city.investments:
                raise InvalidParams("withdrawal must be positive and not exceed deposits")
            city.investments -= amount
            city.treasury += amount
            return city.investments

    # -- projections -----------------------------------------------------------------

    def stage_sums(self, city: City) -> dict[Category, int]:
        # buildings only change at completion, which drops the cached copy;
        # the fingerprint also catches edits made directly to ``buildings``
        key = (len(city.buildings), sum(city.buildings.values()))
        cached = city.__dict__.get("_stage_sums")
        if cached is not None and cached[0] == key:
            return cached[1]
        sums: dict[Category, int] = {}
        category = self._category
        for b, stage in city.buildings.items():
            cat = category[b]
            sums[cat] = sums.get(cat, 0) + stage
        city.__dict__["_stage_sums"] = (key, sums)
        return sums

    def service_bonus(self, city: City) -> dict[str, float]:
        bonus: dict[str, float] = {}
        for svc in self.market.services_by_consumer(city.city_id):
            ind = economy.SERVICE_INDICATOR[svc.subtype]
            bonus[ind] = bonus.get(ind, 0.0) + svc.value
        return bonus

    def targets(self, city: City) -> dict[str, float]:
        # memoized on the inputs: settlement and views ask far more often than they change
        sums = self.stage_sums(city)
        key = (tuple(city.allocations.items()), len(self.market.services_by_consumer(city.city_id)), self.staff_quality(city))
        cached = city.__dict__.get("_targets")
        if cached is not None and cached[0] is sums and cached[1] == key:
            return dict(cached[2])
        targets = economy.projection_targets(city.allocations, sums, self.service_bonus(city), key[2])
        city.__dict__["_targets"] = (sums, key, targets)
        return dict(targets)

    def projections(self, city_id: int) -> dict:
        """Targets plus the economic framework for the current and past week."""
        city = self.city(city_id)
        week = self.clock // WEEK_TICKS if self.clock else 0
        return {
            "targets": self.targets(city),
            "current_week": dict(city.ledger.get(week, {})),
            "past_week": dict(city.ledger.get(week - 1, {})),
        }

    def qol_now(self, city: City) -> dict[str, float]:
        """Indicators extrapolated from the last settlement to the current clock (read only)."""
        k = self.clock - city.last_settled
        targets = self.targets(city)
        return {
            n: economy.clamp_indicator(n, economy.relax(city.qol[n], targets[n], k, self.config.qol_lambda))
            for n in economy.QOL
        }

    # -- level -----------------------------------------------------------------------

    def level_up_check(self, city_id: int) -> CityLevel | None:
        """Promote while the next threshold holds; never demotes."""
        city = self.city(city_id)
        with city.lock:
            promoted = False
            while city.level < MAX_LEVEL and self._meets_threshold(city):
                city.level += 1
                promoted = True
            if promoted:
                self._sync_slots(city)
                return self.level_of(city)
            return None

    def _meets_threshold(self, city: City) -> bool:
        rule = self.config.level_thresholds[city.level - 1]
        own = sum(1 for s in city.buildings.values() if s >= 1)
        if own < rule.min_buildings:
            return False
        if economy.qol_index(city.qol) < rule.min_qol:
            return False
        if city.level >= self.config.cooperation_gate_level and city.cooperation <= 0:
            return False
        return city.cooperation >= rule.min_cooperation

    def _update_fame(self, city: City) -> None:
        stages = sum(city.buildings.values())
        city.fame = 10 * stages + 25 * city.cooperation + 50 * city.level + int(economy.qol_index(city.qol))

    # -- economy settlement ---------------------------------------------------------

    def _settle(self, city: City, to_tick: int, totals: dict) -> None:
        k = to_tick - city.last_settled
        if k <= 0:
            return
        cfg = self.config
        lam = cfg.qol_lambda
        targets = self.targets(city)
        pop_sum = economy.relaxed_sum(city.qol["population"], targets["population"], k, lam)
        for name in economy.QOL:
            city.qol[name] = economy.clamp_indicator(name, economy.relax(city.qol[name], targets[name], k, lam))

        a = city.allocations
        taxes = economy.to_cents(cfg.tax_coefficient * pop_sum * a["tax_rate"])
        interest = economy.to_cents(city.investments / 100.0 * cfg.investment_interest * k)
        stages = sum(city.buildings.values())
        maintenance = economy.to_cents(cfg.maintenance_per_stage * stages * (0.5 + a["maintenance"]) * k)
        funding = economy.to_cents(cfg.funding_cost * sum(a[f] for f in economy.FUNDING_LINES) * city.level * k)
        salaries = sum(self.market.npc(n).salary for n in city.staff) * k

        city.treasury += taxes + interest
        due = maintenance + funding + salaries
        charged = min(due, city.treasury)
        city.treasury -= charged
        paid_fees = 0
        for svc in self.market.services_by_consumer(city.city_id):
            fee = min(svc.fee_per_tick * k, city.treasury)
            if fee > 0:
                city.treasury -= fee
                self.cities[svc.provider].treasury += fee
                self._book(self.cities[svc.provider], to_tick, "service_earnings", fee)
                paid_fees += fee

        self._book(city, to_tick, "taxes", taxes)
        self._book(city, to_tick, "interest", interest)
        self._book(city, to_tick, "costs", charged)
        self._book(city, to_tick, "service_fees", paid_fees)
        city.last_settled = to_tick
        totals["income"] += taxes + interest
        totals["costs"] += charged

    def _book(self, city: City, tick: int, line: str, cents: int) -> None:
        if not cents:
            return
        week = (tick - 1) // WEEK_TICKS
        bucket = city.ledger.setdefault(week, {})
        bucket[line] = bucket.get(line, 0) + cents
        for old in [w for w in city.ledger if w < week - 1]:
            del city.ledger[old]

    # -- clock -----------------------------------------------------------------------

    def tick(self, to_tick: int) -> list[dict]:
        """Advance to ``to_tick``, processing every instant at or before it.

        Returns the effects in processing order. The last entry is always an
        ``economy`` record with the money created (income) and destroyed (costs).
        """
        if to_tick < self.clock:
            raise InvalidParams(f"cannot tick backwards from {self.clock} to {to_tick}")
        with self.lock:
            effects: list[dict] = []
            totals = {"income": 0, "costs": 0}
            period = self.config.settle_period
            while True:
                candidates = [self.last_grid + period]
                if self._completions:
                    candidates.append(self._completions[0][0])
                deadline = self.market.next_deadline()
                if deadline is not None:
                    candidates.append(deadline)
                t = min(candidates)
                if t > to_tick:
                    break
                self.clock = max(self.clock, t)
                while self._completions and self._completions[0][0] == t:
                    _, city_id, cat_idx = heapq.heappop(self._completions)
                    self._complete(self.cities[city_id], CATEGORY_ORDER[cat_idx], t, effects, totals)
                effects.extend(self.market.process_deadlines(t))
                if t == self.last_grid + period:
                    self.last_grid = t
                    for city_id in sorted(self.cities):
                        city = self.cities[city_id]
                        self._settle(city, t, totals)
                        self._after_change(city, t, effects)
            self.clock = to_tick
            effects.append({"kind": "economy", "tick": to_tick, **totals})
            return effects

    def _complete(self, city: City, category: Category, t: int, effects: list, totals: dict) -> None:
        job = city.active_builds.get(category.value)
        if job is None or job["completion_tick"] != t:
            return  # stale heap entry
        self._settle(city, t, totals)
        del city.active_builds[category.value]
        city.builds_completed += 1
        effects.append(
            {"kind": "build_completed", "tick": t, "city_id": city.city_id, "building_id": job["building_id"], "stage": job["stage"]}
        )
        if job["license_id"] is not None:
            svc = self.market.start_service(job["license_id"], job["building_id"])
            effects.append(
                {"kind": "service_started", "tick": t, "service_id": svc.service_id, "provider": svc.provider, "consumer": svc.consumer}
            )
        else:
            city.buildings[job["building_id"]] = job["stage"]
            city.__dict__.pop("_stage_sums", None)
        self._after_change(city, t, effects)

    def _after_change(self, city: City, t: int, effects: list) -> None:
        new = self.level_up_check(city.city_id)
        if new is not None:
            effects.append({"kind": "level_up", "tick": t, "city_id": city.city_id, "level": new.value})
        self._update_fame(city)

    # -- accounting / persistence ------------------------------------------------------

    def total_money(self) -> int:
        return sum(c.treasury + c.investments for c in self.cities.values()) + self.market.escrow_total()

    def to_state(self) -> dict:
        return {
            "clock": self.clock,
            "last_grid": self.last_grid,
            "seed": self.seed,
            "next_city_id": self.next_city_id,
            "npc_seq": self.npc_seq,
            "accounts": {k: dict(v) for k, v in sorted(self.accounts.items())},
            "cities": [self.cities[k].to_state() for k in sorted(self.cities)],
            "market": self.market.to_state(),
        }

    @classmethod
    def from_state(cls, state: dict, catalog: Catalog, config: WorldConfig | None = None) -> "World":
        world = cls(catalog, config, seed=state["seed"])
        world.clock = state["clock"]
        world.last_grid = state["last_grid"]
        world.next_city_id = state["next_city_id"]
        world.npc_seq = state["npc_seq"]
        world.accounts = {k: dict(v) for k, v in state["accounts"].items()}
        for d in state["cities"]:
            city = City.from_state(d)
            world.cities[city.city_id] = city
            for cat_value, job in city.active_builds.items():
                cat = Category(cat_value)
                heapq.heappush(world._completions, (job["completion_tick"], city.city_id, _CAT_INDEX[cat]))
        world.market.load_state(state["market"])
        return world

    def state_hash(self) -> str:
        return state_hash(self.to_state())


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def state_hash(state: dict) -> str:
    return hashlib.sha256(canonical_json(state).encode()).hexdigest()
