"""The eleven acceptance criteria, one test each.

Every test records a ``PASS``/``FAIL`` line; the lines are printed as they
happen (visible with ``-s``) and again in the terminal summary. Run the file
directly with ``python3 tests/test_acceptance.py`` for just the summary.
"""

import math
import random
import threading
import time
from concurrent.futures import ThreadPoolExecutor

import mpmath
import pytest

from livingcity import balance, catalog
from livingcity.catalog import reference, validate
from livingcity.errors import CategoryBusy, NotAvailable
from livingcity.market import check_single_award
from livingcity.service import Service, eventlog
from livingcity.service.filter import MUST_PASS, MUST_REJECT, filter_input, load_corpus
from livingcity.simlab import metrics_from_log, run_simulation
from livingcity.world import World

from test_catalog import MUTATIONS

CAT = reference()
RESULTS: dict[int, str] = {}


def record(n: int, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {n:2d}: {detail}"
    RESULTS[n] = line
    print(line)
    assert ok, line


def oracle_time(base, stage, alpha):
    with mpmath.workdps(40):
        return mpmath.power(base, mpmath.power(mpmath.mpf(alpha), stage - 1))


def test_01_time_anchors():
    t0 = time.perf_counter()
    t540, t600 = balance.required_time_at_stage(540, 12), balance.required_time_at_stage(600, 12)
    o540, o600 = oracle_time(540, 12, "1.055"), oracle_time(600, 12, "1.05")
    rel = max(abs(t540 - o540) / o540, abs(t600 - o600) / o600)
    ms = (time.perf_counter() - t0) * 1000
    ok = t540 > 80_000 and t600 < 60_000 and rel < 1e-6 and ms < 1000
    record(1, ok, f"t(540,12)={t540:.2f} > 80000, t(600,12)={t600:.2f} < 60000, oracle rel err {float(rel):.1e}")


def test_02_cost_anchor():
    low = balance.improvement_sum(2000) / 2000
    high = balance.improvement_ratio(387500)
    ok = 3.63 <= low <= 3.65 and abs(high - 1.846) <= 0.01
    record(2, ok, f"S(2000)/2000={low:.5f} in [3.63,3.65]; golden S(387500)/387500={high:.5f} (1.846 +/- 0.01)")


def test_03_bounds_property():
    rng = random.Random(20261014)
    costs = [2000.0, 387500.0] + [rng.uniform(2000, 387500) for _ in range(9998)]
    t0 = time.perf_counter()
    ratios = [balance.improvement_sum(c) / balance.build_cost_at_stage(c, 1) for c in costs]
    secs = time.perf_counter() - t0
    ok = all(1.5 < r < 4 for r in ratios) and secs < 1
    record(3, ok, f"{len(costs)} costs, ratio in [{min(ratios):.4f}, {max(ratios):.4f}] within (1.5, 4), {secs * 1000:.0f} ms")


def _brute_min_time(times):
    total = 0.0
    for t in times:
        a = 1.06 if t < 300 else 1.055 if t < 600 else 1.05 if t < 1200 else 1.045 if t < 1800 else 1.04
        for x in range(1, 13):
            total += float(t) if x == 1 else float(t) ** (a ** (x - 1))
    return total


def test_04_min_time():
    class B:
        def __init__(self, t):
            self.base_time_s = t

    t0 = time.perf_counter()
    got = balance.min_total_time(CAT)
    exact = got == _brute_min_time([e.base_time_s for e in CAT])
    lo, hi = balance.min_total_time([B(90)] * 147), balance.min_total_time([B(3000)] * 147)
    secs = time.perf_counter() - t0
    ok = exact and lo < 27_978_980.96 < hi and secs < 1
    record(4, ok, f"reference MinTime={got:.2f} equals brute force: {exact}; bracket [{lo:.0f}, {hi:.0f}] contains 27978980.96")


def test_05_step_structure():
    fig2 = balance.figure_series("fig2", CAT)
    by_time = dict(zip(fig2.column("base_time_s"), fig2.column("stage_12")))
    fig1 = balance.figure_series("fig1", CAT)
    increasing = all(all(b > a for a, b in zip(col, col[1:])) for col in (fig1.column(c) for c in fig1.columns[1:]))
    ok = by_time[540] > by_time[600] and increasing
    record(5, ok, f"fig2 stage 12: 540 s -> {by_time[540]:.0f} > 600 s -> {by_time[600]:.0f}; fig1 {len(fig1.columns) - 1} series strictly increasing")


def test_06_catalog_constraints():
    gen = catalog.generate(0)
    counts = tuple(len(gen.by_category(c)) for c in catalog.Category)
    times = {e.base_time_s for e in gen}
    costs = {e.base_cost for e in gen}
    shape = (
        validate(gen).ok and len(gen) == 147 and counts == (19, 18, 16, 17, 19, 18, 40)
        and len(times) == 29 and 90 <= min(times) and max(times) <= 3000
        and len(costs) == 100 and 2000 <= min(costs) and max(costs) <= 387500
    )
    missed = [rule for rule, mutate in MUTATIONS.items() if rule not in validate(mutate(gen)).rules()]
    ok = shape and not missed and catalog.dumps(gen) == catalog.dumps(CAT)
    record(6, ok, f"147 entries {counts}, {len(times)} times, {len(costs)} costs; {len(MUTATIONS) - len(missed)}/{len(MUTATIONS)} mutations flagged")


def _service():
    return Service(CAT, checkpoint_every=1000, pbkdf2_iterations=1)


def test_07_inner_concurrency():
    trials = 1000
    svc = _service()
    sessions = []
    for i in range(trials):
        r = svc.submit({"verb": "register", "payload": {"name": f"Inner {i:04d}", "password": "pw"}})
        sessions.append(r["session"])
    barrier = threading.Barrier(2)

    def submit(session, building):
        barrier.wait()
        try:
            svc.submit({"verb": "start_build", "session": session, "payload": {"building_id": building}})
            return "ok"
        except CategoryBusy:
            return "busy"

    bad = 0
    with ThreadPoolExecutor(2) as ex:
        for s in sessions:
            outcomes = sorted(ex.map(submit, (s, s), ("TR07", "TR04")))
            bad += outcomes != ["busy", "ok"]
        svc.advance(100_000)

    # replay, then check from the log that no (city, category) ever had two builds in flight
    events = list(svc.log)
    replayed = eventlog.replay(svc.genesis, events, CAT)
    busy_until: dict[tuple, int] = {}
    overlaps = 0
    for ev in events:
        if ev.kind == "start_build":
            key = (ev.city_id, CAT[ev.payload["building_id"]].category)
            if busy_until.get(key, -1) > ev.tick:
                overlaps += 1
            busy_until[key] = ev.outcome["completion_tick"]
    ok = bad == 0 and overlaps == 0 and replayed.state_hash() == svc.world.state_hash()
    record(7, ok, f"{trials} trials: {trials - bad} with exactly one success + one CategoryBusy; {overlaps} overlapping builds in replayed log")


def _race(pool, n, fn):
    barrier = threading.Barrier(n)

    def go(i):
        barrier.wait()
        try:
            fn(i)
            return "awarded"
        except NotAvailable:
            return "not_available"

    return list(pool.map(go, range(n)))


def test_08_outer_concurrency():
    trials, n = 1000, 100
    w = World(CAT, None, seed=0)
    claimers = [w.register_city(f"Claimer {i}").city_id for i in range(n)]
    issuers = [w.register_city(f"Issuer {i}").city_id for i in range(trials)]
    for cid in claimers:
        w.city(cid).treasury = 10**12
    money = w.total_money()
    history = w.market.record_history()
    bad_claims = bad_hires = 0
    with ThreadPoolExecutor(n) as pool:
        for t in range(trials):
            call = w.market.issue_call(issuers[t], "fixed_price", "tourism", 1000)
            res = _race(pool, n, lambda i: w.market.claim_fixed_price(call, claimers[i]))
            bad_claims += (res.count("awarded"), res.count("not_available")) != (1, n - 1)
        npcs = [m.npc_id for m in w.market.available_npcs()]
        for t in range(trials):
            npc = npcs[t % len(npcs)]
            res = _race(pool, n, lambda i: w.hire(claimers[i], npc))
            bad_hires += (res.count("awarded"), res.count("not_available")) != (1, n - 1)
            w.fire(w.market.npc(npc).employed_by, npc)
    problems = check_single_award(history)
    conserved = w.total_money() == money
    ok = bad_claims == 0 and bad_hires == 0 and not problems and conserved and len(w.market.licenses) == trials
    record(8, ok, f"{trials}x{n} fixed-price claims and {trials}x{n} hires: {bad_claims + bad_hires} bad trials, "
                  f"{len(history)} history entries, {len(problems)} linearizability violations")


@pytest.fixture(scope="module")
def desk_run():
    return run_simulation(CAT, n_bots=200, sim_days=30, compression=1000, seed=0)


def test_09_determinism_and_persistence(tmp_path):
    run = run_simulation(CAT, n_bots=40, sim_days=12, compression=1000, seed=9)
    snap_path, log_path = tmp_path / "snapshot.json", tmp_path / "events.log"
    eventlog.write_snapshot(run.service.genesis, snap_path)
    eventlog.write_log(run.events, log_path)
    events = eventlog.read_log(log_path)
    world = eventlog.replay(eventlog.read_snapshot(snap_path), events, CAT)
    same = world.state_hash() == run.service.world.state_hash()
    report = metrics_from_log(events)
    audit = report.money["expected_total"] == world.total_money()
    ok = len(events) >= 10_000 and same and audit
    record(9, ok, f"{len(events)} events replayed to identical state hash: {same}; money audit "
                  f"{report.money['expected_total']} == {world.total_money()}")


def test_10_filter_corpus():
    bad, good = load_corpus(MUST_REJECT), load_corpus(MUST_PASS)
    rejected = sum(not filter_input(s).passed for s in bad)
    passed = sum(filter_input(s).passed for s in good)
    stable = all(filter_input(s) == filter_input(s) for s in bad + good)
    ok = rejected == len(bad) and passed == len(good) and stable
    record(10, ok, f"must-reject {rejected}/{len(bad)} rejected, must-pass {passed}/{len(good)} passed")


def test_11_desk_scale_run(desk_run, tmp_path):
    desk_run.save(tmp_path)
    recomputed = metrics_from_log(eventlog.read_log(tmp_path / "events.log"))
    expected, actual = desk_run.money_audit()
    r = desk_run.report
    ok = (
        desk_run.wall_seconds < 60 and r.all_metrics_nonzero() and recomputed == r
        and r.players == 200 and expected == actual
    )
    totals = ", ".join(f"{k}={v}" for k, v in r.totals.items())
    record(11, ok, f"200 bots x 30 days in {desk_run.wall_seconds:.1f} s, {r.events} events; {totals}; recomputable: {recomputed == r}")


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
