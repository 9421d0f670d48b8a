"""Drive a population of bots through the service under time compression.

The harness treats one second of virtual wall time as ``compression`` ticks.
Each such slice it advances the world clock, then lets every bot that is in
a session act, in bot order. Running the bots in a fixed order on one
thread is what makes a run reproducible from its seed; the concurrency
contracts themselves are exercised by the dedicated race harnesses.
"""

from __future__ import annotations

import hashlib
import logging
import random
import time
from dataclasses import dataclass
from pathlib import Path

from ..catalog import Catalog
from ..config import WorldConfig
from ..service import Service, eventlog
from .bots import DAY, Bot, PolicyId, policy
from .metrics import SimReport, metrics_from_log

log = logging.getLogger(__name__)


@dataclass
class SimResult:
    report: SimReport
    events: list
    service: Service
    wall_seconds: float

    def money_audit(self) -> tuple[int, int]:
        """(total implied by the log, total actually held in the world)."""
        return self.report.money["expected_total"], self.service.world.total_money()

    def save(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        eventlog.write_log(self.events, out / "events.log")
        (out / "report.json").write_text(self.report.to_json(), encoding="utf-8")


def _policies(spec, n_bots: int) -> list:
    if isinstance(spec, (str, PolicyId)):
        return [policy(spec)] * n_bots
    spec = list(spec)
    return [policy(spec[i % len(spec)]) for i in range(n_bots)]


def run_simulation(
    catalog: Catalog,
    n_bots: int,
    sim_days: float,
    compression: int = 1000,
    seed: int = 0,
    policies="balanced",
    config: WorldConfig | None = None,
) -> SimResult:
    """Play ``n_bots`` bots for ``sim_days`` days; deterministic in all arguments."""
    if n_bots < 1:
        raise ValueError("n_bots must be >= 1")
    if compression < 1 or int(compression) != compression:
        raise ValueError("compression must be an integer >= 1")
    if sim_days <= 0:
        raise ValueError("sim_days must be positive")
    compression = int(compression)

    salt_rng = random.Random(f"salt:{seed}")
    # bots log in thousands of times; key stretching would only burn wall time here
    service = Service(
        catalog,
        config,
        seed=seed,
        checkpoint_every=10_000,
        salt_fn=lambda: f"{salt_rng.getrandbits(64):016x}",
        pbkdf2_iterations=1,
    )
    bots = []
    for i, pol in enumerate(_policies(policies, n_bots)):
        rng = random.Random(f"bot:{seed}:{i}")
        bots.append(Bot(i, pol, rng, f"Bot City {i + 1:04d}", hashlib.sha256(f"{seed}:{i}".encode()).hexdigest()[:16]))

    started = time.perf_counter()
    for bot in bots:
        resp = service.submit({"verb": "register", "payload": {"name": bot.name, "password": bot.password}})
        bot.city_id = resp["result"]["city_id"]
        bot.session = resp["session"]
        bot.session_end = bot.policy.session_length

    end_tick = int(sim_days * DAY)
    planned_day = -1
    t = 0
    while t < end_tick:
        t = min(t + compression, end_tick)
        service.advance(t)
        day = t // DAY
        if day > planned_day:
            for d in range(planned_day + 1, day + 1):
                for bot in bots:
                    bot.plan_day(d)
            planned_day = day
        for bot in bots:
            _step(bot, service, catalog, t)
    for bot in bots:
        if bot.in_session:
            _logout(bot, service)

    events = list(service.log)
    report = metrics_from_log(events)
    wall = time.perf_counter() - started
    log.info("simulated %d bots for %s days: %d events in %.1fs", n_bots, sim_days, len(events), wall)
    return SimResult(report, events, service, wall)


def _step(bot: Bot, service: Service, catalog: Catalog, t: int) -> None:
    if not bot.in_session:
        if not bot.pending_sessions or bot.pending_sessions[0] > t:
            return
        while bot.pending_sessions and bot.pending_sessions[0] <= t:
            bot.pending_sessions.pop(0)  # sessions missed while busy are skipped
        resp = service.submit({"verb": "login", "payload": {"name": bot.name, "password": bot.password}})
        bot.session = resp["session"]
        bot.session_end = t + bot.policy.session_length
        bot.browsed_market = False
    bot.act(service, catalog)
    if t >= bot.session_end:
        _logout(bot, service)


def _logout(bot: Bot, service: Service) -> None:
    service.submit({"verb": "logout", "session": bot.session})
    bot.session = None
