"""Shared cross-city state: procurement calls, licenses, provided services and
the common staff marketplace.

Every shared resource (a call, an NPC) has its own lock and is claimed with a
compare-and-commit under it, so concurrent claims serialize per resource and
each gets a definitive answer: the first committer wins, everyone after it
sees ``NotAvailable``. Money moves only between treasuries and bid escrow.

Lock order is resource lock first, then city locks in ascending id. NPC locks
are taken while holding a city lock but never the other way round.
"""

from __future__ import annotations

import contextlib
import enum
import heapq
import itertools
import threading
from dataclasses import dataclass, field

from .catalog import EXTERNAL_SUBTYPES, Category
from .errors import (
    BidTooLow,
    CallClosed,
    InsufficientFunds,
    InvalidParams,
    NoFreeSlot,
    NoLicense,
    NotAvailable,
    NotEmployed,
    NotYetDue,
    SelfBid,
    UnknownEntity,
    WrongCategory,
)
from .staff import StaffMember


class Mechanism(enum.Enum):
    BID_AUCTION = "bid_auction"
    DIRECT_OFFER = "direct_offer"
    FIXED_PRICE = "fixed_price"


class CallState(enum.Enum):
    OPEN = "open"
    AWARDED = "awarded"
    EXPIRED = "expired"


@dataclass
class Bid:
    city_id: int
    amount: int
    tick: int


@dataclass
class Offer:
    offer_id: str
    provider: int
    price: int
    building_id: str
    tick: int
    state: str = "pending"  # pending | accepted | rejected | void


@dataclass
class ProcurementCall:
    call_id: str
    issuer: int
    slot_id: str
    service_category: str
    mechanism: Mechanism
    price: int  # reserve for auctions, asking price otherwise
    deadline_tick: int
    state: CallState = CallState.OPEN
    winner: int | None = None
    award_price: int | None = None
    bids: list[Bid] = field(default_factory=list)
    offers: list[Offer] = field(default_factory=list)
    license_id: str | None = None

    def to_state(self) -> dict:
        return {
            "call_id": self.call_id,
            "issuer": self.issuer,
            "slot_id": self.slot_id,
            "service_category": self.service_category,
            "mechanism": self.mechanism.value,
            "price": self.price,
            "deadline_tick": self.deadline_tick,
            "state": self.state.value,
            "winner": self.winner,
            "award_price": self.award_price,
            "bids": [[b.city_id, b.amount, b.tick] for b in self.bids],
            "offers": [o.__dict__.copy() for o in self.offers],
            "license_id": self.license_id,
        }

    @classmethod
    def from_state(cls, d: dict) -> "ProcurementCall":
        call = cls(
            d["call_id"], d["issuer"], d["slot_id"], d["service_category"], Mechanism(d["mechanism"]),
            d["price"], d["deadline_tick"], CallState(d["state"]), d["winner"], d["award_price"],
        )
        call.bids = [Bid(*b) for b in d["bids"]]
        call.offers = [Offer(**o) for o in d["offers"]]
        call.license_id = d["license_id"]
        return call


@dataclass
class License:
    license_id: str
    slot_id: str
    granter: int
    holder: int
    subtype: str
    call_id: str
    building_id: str | None = None
    built: bool = False


@dataclass
class ProvidedService:
    service_id: str
    provider: int
    consumer: int
    building_id: str
    license_id: str
    subtype: str
    fee_per_tick: int  # cents, consumer -> provider
    value: float  # infrastructure bonus on the consumer's matching indicator


@dataclass(frozen=True)
class HistoryEntry:
    """One claim on a shared resource, bracketed by invocation/response stamps."""

    resource: str
    actor: int
    invoked: int
    responded: int
    outcome: str  # "awarded" | "not_available" | other error code


def auction_winner(bids: list[Bid]) -> Bid | None:
    """Highest amount; ties go to the earlier tick, then the lower city id."""
    if not bids:
        return None
    return min(bids, key=lambda b: (-b.amount, b.tick, b.city_id))


def check_single_award(history: list[HistoryEntry]) -> list[str]:
    """Linearizability check for claim-once resources.

    A history is linearizable iff every resource has at most one award and every
    ``not_available`` response came after the winner's invocation (otherwise the
    loser would have had to observe the resource as taken before anyone took it).
    A resource that saw ``not_available`` but no award in the history is fine only
    if it was closed beforehand, which callers must rule out themselves.
    """
    problems = []
    by_res: dict[str, list[HistoryEntry]] = {}
    for h in history:
        by_res.setdefault(h.resource, []).append(h)
    for res, entries in sorted(by_res.items()):
        wins = [h for h in entries if h.outcome == "awarded"]
        if len(wins) > 1:
            problems.append(f"{res}: {len(wins)} awards")
            continue
        if not wins:
            continue
        w = wins[0]
        for h in entries:
            if h.outcome == "not_available" and h.responded < w.invoked:
                problems.append(f"{res}: city {h.actor} saw not_available before winner {w.actor} was invoked")
    return problems


class Market:
    def __init__(self, world):
        self.world = world
        self.npcs: dict[str, StaffMember] = {}
        self.calls: dict[str, ProcurementCall] = {}
        self.licenses: dict[str, License] = {}
        self.services: dict[str, ProvidedService] = {}
        self.escrow: dict[str, tuple[int, int]] = {}
        self.call_seq = 0
        self.license_seq = 0
        self.service_seq = 0
        self.offer_seq = 0
        self._deadlines: list[tuple[int, str]] = []
        self._locks: dict[str, threading.Lock] = {}
        self._guard = threading.Lock()
        self._stamp = itertools.count(1)
        self.history: list[HistoryEntry] | None = None
        # derived indexes, rebuilt on load
        self._by_consumer: dict[int, list[ProvidedService]] = {}
        self._by_provider: dict[int, list[ProvidedService]] = {}
        self._by_holder: dict[int, list[License]] = {}

    # -- plumbing ---------------------------------------------------------------

    def _lock(self, key: str) -> threading.Lock:
        with self._guard:
            lock = self._locks.get(key)
            if lock is None:
                lock = self._locks[key] = threading.Lock()
            return lock

    @contextlib.contextmanager
    def _cities(self, *city_ids: int):
        with contextlib.ExitStack() as stack:
            for cid in sorted(set(c for c in city_ids if c is not None)):
                stack.enter_context(self.world.city(cid).lock)
            yield

    def record_history(self) -> list[HistoryEntry]:
        self.history = []
        return self.history

    def _log(self, resource: str, actor: int, invoked: int, outcome: str) -> None:
        if self.history is not None:
            self.history.append(HistoryEntry(resource, actor, invoked, next(self._stamp), outcome))

    def call(self, call_id: str) -> ProcurementCall:
        try:
            return self.calls[call_id]
        except KeyError:
            raise UnknownEntity(f"no call {call_id}") from None

    def escrow_total(self) -> int:
        return sum(amount for _, amount in self.escrow.values())

    # -- staff marketplace ------------------------------------------------------

    def add_npc(self, npc: StaffMember) -> None:
        self.npcs[npc.npc_id] = npc

    def npc(self, npc_id: str) -> StaffMember:
        try:
            return self.npcs[npc_id]
        except KeyError:
            raise UnknownEntity(f"no npc {npc_id}") from None

    def available_npcs(self) -> list[StaffMember]:
        return [n for _, n in sorted(self.npcs.items()) if n.employed_by is None]

    def claim_npc(self, npc_id: str, city_id: int) -> None:
        npc = self.npc(npc_id)
        invoked = next(self._stamp)
        with self._lock(f"npc:{npc_id}"):
            if npc.employed_by is not None:
                self._log(f"npc:{npc_id}", city_id, invoked, "not_available")
                raise NotAvailable(f"{npc_id} is no longer on the marketplace")
            npc.employed_by = city_id
            self._log(f"npc:{npc_id}", city_id, invoked, "awarded")

    def release_npc(self, npc_id: str, city_id: int) -> None:
        npc = self.npc(npc_id)
        with self._lock(f"npc:{npc_id}"):
            if npc.employed_by != city_id:
                raise NotEmployed(f"{npc_id} does not work for city {city_id}")
            npc.employed_by = None

    # -- calls ------------------------------------------------------------------

    def issue_call(self, issuer: int, mechanism, service_category: str, price: int, duration: int | None = None) -> str:
        try:
            mechanism = Mechanism(mechanism)
        except ValueError:
            raise InvalidParams(f"unknown mechanism {mechanism!r}") from None
        if service_category not in EXTERNAL_SUBTYPES:
            raise InvalidParams(f"unknown service category {service_category!r}")
        if not isinstance(price, int) or isinstance(price, bool) or price <= 0:
            raise InvalidParams("reserve or price must be a positive amount of cents")
        duration = self.world.config.call_duration if duration is None else duration
        if not isinstance(duration, int) or duration <= 0:
            raise InvalidParams("duration must be a positive number of ticks")
        city = self.world.city(issuer)
        with city.lock:
            free = city.free_slots()
            if not free:
                raise NoFreeSlot(f"city {issuer} has no free license slot")
            with self._guard:
                self.call_seq += 1
                call_id = f"P{self.call_seq:06d}"
            slot = free[0]
            slot["state"], slot["ref"] = "reserved", call_id
            call = ProcurementCall(
                call_id, issuer, slot["slot_id"], service_category, mechanism, price, self.world.clock + duration
            )
            self.calls[call_id] = call
            heapq.heappush(self._deadlines, (call.deadline_tick, call_id))
            return call_id

    def open_calls(self) -> list[ProcurementCall]:
        # every open call has a pending deadline entry, so the heap is a superset
        ids = sorted({cid for _, cid in self._deadlines if self.calls[cid].state is CallState.OPEN})
        return [self.calls[cid] for cid in ids]

    def _require_open(self, call: ProcurementCall, mechanism: Mechanism) -> None:
        if call.mechanism is not mechanism:
            raise InvalidParams(f"{call.call_id} is a {call.mechanism.value} call")
        if call.state is not CallState.OPEN or self.world.clock >= call.deadline_tick:
            raise CallClosed(f"{call.call_id} is {call.state.value}")

    def place_bid(self, call_id: str, bidder: int, amount: int) -> Bid:
        call = self.call(call_id)
        with self._lock(f"call:{call_id}"):
            self._require_open(call, Mechanism.BID_AUCTION)
            if bidder == call.issuer:
                raise SelfBid("issuers cannot bid on their own calls")
            best = self.escrow.get(call_id)
            if amount < call.price or (best is not None and amount <= best[1]):
                raise BidTooLow(f"bid {amount} does not beat reserve {call.price} / best {best[1] if best else None}")
            prev = best[0] if best else None
            with self._cities(bidder, prev):
                bidder_city = self.world.city(bidder)
                refund = best[1] if prev == bidder else 0
                if bidder_city.treasury + refund < amount:
                    raise InsufficientFunds(f"bid {amount} exceeds treasury")
                if best is not None:
                    self.world.city(prev).treasury += best[1]
                bidder_city.treasury -= amount
                self.escrow[call_id] = (bidder, amount)
                bid = Bid(bidder, amount, self.world.clock)
                call.bids.append(bid)
                return bid

    def claim_fixed_price(self, call_id: str, claimant: int) -> str:
        """Returns the license id on success; raises NotAvailable if someone got there first."""
        call = self.call(call_id)
        invoked = next(self._stamp)
        resource = f"call:{call_id}"
        with self._lock(resource):
            if call.mechanism is not Mechanism.FIXED_PRICE:
                raise InvalidParams(f"{call_id} is a {call.mechanism.value} call")
            if call.state is not CallState.OPEN or self.world.clock >= call.deadline_tick:
                self._log(resource, claimant, invoked, "not_available")
                raise NotAvailable(f"{call_id} is {call.state.value}")
            if claimant == call.issuer:
                raise SelfBid("issuers cannot claim their own calls")
            with self._cities(claimant, call.issuer):
                buyer = self.world.city(claimant)
                if buyer.treasury < call.price:
                    self._log(resource, claimant, invoked, "InsufficientFunds")
                    raise InsufficientFunds(f"price {call.price} exceeds treasury")
                buyer.treasury -= call.price
                self.world.city(call.issuer).treasury += call.price
                license_id = self._award(call, claimant, call.price)
            self._log(resource, claimant, invoked, "awarded")
            return license_id

    def propose_offer(self, call_id: str, provider: int, price: int, building_id: str) -> str:
        call = self.call(call_id)
        with self._lock(f"call:{call_id}"):
            self._require_open(call, Mechanism.DIRECT_OFFER)
            if provider == call.issuer:
                raise SelfBid("issuers cannot answer their own calls")
            if not isinstance(price, int) or price <= 0:
                raise InvalidParams("offer price must be positive cents")
            self._check_external(building_id, call.service_category)
            with self._guard:
                self.offer_seq += 1
                offer_id = f"O{self.offer_seq:06d}"
            call.offers.append(Offer(offer_id, provider, price, building_id, self.world.clock))
            return offer_id

    def _find_offer(self, call: ProcurementCall, offer_id: str) -> Offer:
        for o in call.offers:
            if o.offer_id == offer_id:
                return o
        raise UnknownEntity(f"no offer {offer_id} on {call.call_id}")

    def accept_offer(self, call_id: str, offer_id: str, issuer: int) -> str:
        call = self.call(call_id)
        invoked = next(self._stamp)
        resource = f"call:{call_id}"
        with self._lock(resource):
            if call.mechanism is not Mechanism.DIRECT_OFFER:
                raise InvalidParams(f"{call_id} is a {call.mechanism.value} call")
            if issuer != call.issuer:
                raise InvalidParams("only the issuer can accept offers")
            offer = self._find_offer(call, offer_id)
            if call.state is not CallState.OPEN or offer.state != "pending" or self.world.clock >= call.deadline_tick:
                self._log(resource, offer.provider, invoked, "not_available")
                raise NotAvailable(f"{call_id} is {call.state.value}")
            with self._cities(offer.provider, issuer):
                provider = self.world.city(offer.provider)
                if provider.treasury < offer.price:
                    raise InsufficientFunds("provider can no longer pay the offered price")
                provider.treasury -= offer.price
                self.world.city(issuer).treasury += offer.price
                offer.state = "accepted"
                for other in call.offers:
                    if other.state == "pending":
                        other.state = "void"
                license_id = self._award(call, offer.provider, offer.price)
            self._log(resource, offer.provider, invoked, "awarded")
            return license_id

    def reject_offer(self, call_id: str, offer_id: str, issuer: int) -> None:
        call = self.call(call_id)
        with self._lock(f"call:{call_id}"):
            if issuer != call.issuer:
                raise InvalidParams("only the issuer can reject offers")
            offer = self._find_offer(call, offer_id)
            if offer.state != "pending":
                raise NotAvailable(f"offer {offer_id} is {offer.state}")
            offer.state = "rejected"

    def settle_auction(self, call_id: str) -> ProcurementCall:
        call = self.call(call_id)
        with self._lock(f"call:{call_id}"):
            if call.mechanism is not Mechanism.BID_AUCTION:
                raise InvalidParams(f"{call_id} is a {call.mechanism.value} call")
            if call.state is CallState.OPEN:
                if self.world.clock < call.deadline_tick:
                    raise NotYetDue(f"{call_id} closes at tick {call.deadline_tick}")
                self._close_auction(call)
            return call

    def _close_auction(self, call: ProcurementCall) -> None:
        win = auction_winner(call.bids)
        if win is None:
            self._expire(call)
            return
        holder, amount = self.escrow.pop(call.call_id)
        if (holder, amount) != (win.city_id, win.amount):
            raise AssertionError("escrow holder must be the best bid")  # pragma: no cover
        with self._cities(holder, call.issuer):
            self.world.city(call.issuer).treasury += amount
            self._award(call, holder, amount)

    def _expire(self, call: ProcurementCall) -> None:
        call.state = CallState.EXPIRED
        for o in call.offers:
            if o.state == "pending":
                o.state = "void"
        slot = self._slot(call.issuer, call.slot_id)
        slot["state"], slot["ref"] = "free", None

    def _slot(self, city_id: int, slot_id: str) -> dict:
        for s in self.world.city(city_id).slots:
            if s["slot_id"] == slot_id:
                return s
        raise UnknownEntity(f"no slot {slot_id}")  # pragma: no cover

    def _award(self, call: ProcurementCall, winner: int, price: int) -> str:
        with self._guard:
            self.license_seq += 1
            license_id = f"L{self.license_seq:06d}"
        call.state = CallState.AWARDED
        call.winner = winner
        call.award_price = price
        call.license_id = license_id
        lic = License(license_id, call.slot_id, call.issuer, winner, call.service_category, call.call_id)
        self.licenses[license_id] = lic
        self._by_holder.setdefault(winner, []).append(lic)
        slot = self._slot(call.issuer, call.slot_id)
        slot["state"], slot["ref"] = "licensed", license_id
        self.world.city(call.issuer).cooperation += 1
        self.world.city(winner).cooperation += 1
        return license_id

    def next_deadline(self) -> int | None:
        while self._deadlines:
            deadline, call_id = self._deadlines[0]
            if self.calls[call_id].state is CallState.OPEN:
                return deadline
            heapq.heappop(self._deadlines)
        return None

    def process_deadlines(self, t: int) -> list[dict]:
        effects = []
        while self._deadlines and self._deadlines[0][0] <= t:
            _, call_id = heapq.heappop(self._deadlines)
            call = self.calls[call_id]
            with self._lock(f"call:{call_id}"):
                if call.state is not CallState.OPEN:
                    continue
                if call.mechanism is Mechanism.BID_AUCTION:
                    self._close_auction(call)
                else:
                    self._expire(call)
            effects.append(
                {"kind": f"call_{call.state.value}", "tick": t, "call_id": call_id, "winner": call.winner, "price": call.award_price}
            )
        return effects

    # -- licenses and services ----------------------------------------------------

    def licenses_held(self, city_id: int) -> list[License]:
        return list(self._by_holder.get(city_id, []))

    def _check_external(self, building_id: str, subtype: str):
        spec = self.world.spec(building_id)
        if spec.category is not Category.EXTERNAL:
            raise WrongCategory(f"{building_id} is not an external building")
        if spec.subtype != subtype:
            raise WrongCategory(f"{building_id} provides {spec.subtype}, license is for {subtype}")
        return spec

    def build_external(self, holder: int, license_id: str, building_id: str) -> int:
        lic = self.licenses.get(license_id)
        if lic is None or lic.holder != holder:
            raise NoLicense(f"city {holder} holds no license {license_id}")
        if lic.building_id is not None:
            raise NoLicense(f"license {license_id} has already been used")
        spec = self._check_external(building_id, lic.subtype)
        city = self.world.city(holder)
        with city.lock:
            self.world.precheck_build(city, spec)
            cost = self.world.build_cost(spec, 1)
            if city.treasury < cost:
                raise InsufficientFunds(f"need {cost} cents, have {city.treasury}")
            city.treasury -= cost
            lic.building_id = building_id
            return self.world._schedule(city, spec, 1, license_id)

    def start_service(self, license_id: str, building_id: str) -> ProvidedService:
        lic = self.licenses[license_id]
        lic.built = True
        spec = self.world.spec(building_id)
        self.service_seq += 1
        svc = ProvidedService(
            f"S{self.service_seq:06d}", lic.holder, lic.granter, building_id, license_id, lic.subtype,
            max(1, spec.base_cost_cents // self.world.config.service_fee_divisor), self.world.config.service_value,
        )
        self._index(svc)
        return svc

    def _index(self, svc: ProvidedService) -> None:
        self.services[svc.service_id] = svc
        self._by_consumer.setdefault(svc.consumer, []).append(svc)
        self._by_provider.setdefault(svc.provider, []).append(svc)

    def services_by_consumer(self, city_id: int) -> list[ProvidedService]:
        return self._by_consumer.get(city_id, [])

    def services_by_provider(self, city_id: int) -> list[ProvidedService]:
        return self._by_provider.get(city_id, [])

    # -- persistence ----------------------------------------------------------------

    def to_state(self) -> dict:
        return {
            "npcs": [self.npcs[k].to_state() for k in sorted(self.npcs)],
            "calls": [self.calls[k].to_state() for k in sorted(self.calls)],
            "licenses": [self.licenses[k].__dict__.copy() for k in sorted(self.licenses)],
            "services": [self.services[k].__dict__.copy() for k in sorted(self.services)],
            "escrow": {k: list(v) for k, v in sorted(self.escrow.items())},
            "seq": [self.call_seq, self.license_seq, self.service_seq, self.offer_seq],
        }

    def load_state(self, d: dict) -> None:
        self.npcs = {n["npc_id"]: StaffMember.from_state(n) for n in d["npcs"]}
        self.calls = {c["call_id"]: ProcurementCall.from_state(c) for c in d["calls"]}
        self.licenses = {lic["license_id"]: License(**lic) for lic in d["licenses"]}
        self._by_holder = {}
        for lic in self.licenses.values():
            self._by_holder.setdefault(lic.holder, []).append(lic)
        self.services, self._by_consumer, self._by_provider = {}, {}, {}
        for s in d["services"]:
            self._index(ProvidedService(**s))
        self.escrow = {k: (v[0], v[1]) for k, v in d["escrow"].items()}
        self.call_seq, self.license_seq, self.service_seq, self.offer_seq = d["seq"]
        self._deadlines = [(c.deadline_tick, c.call_id) for c in self.calls.values() if c.state is CallState.OPEN]
        heapq.heapify(self._deadlines)
