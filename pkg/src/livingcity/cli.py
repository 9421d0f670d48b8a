"""Command line entry point: ``livingcity <subcommand>``."""

from __future__ import annotations

import argparse
import logging
import signal
import sys
from pathlib import Path

from . import balance, catalog
from .errors import LivingCityError

log = logging.getLogger("livingcity")


def _load_catalog(path):
    return catalog.load(path) if path else catalog.reference()


def cmd_analyze_balance(args) -> int:
    series = balance.figure_series(f"fig{args.figure}", _load_catalog(args.catalog))
    text = series.to_csv()
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_gen_catalog(args) -> int:
    cat = catalog.generate(args.seed)
    report = catalog.validate(cat)
    if not report.ok:  # generator bug; never write a bad catalog
        for v in report.violations:
            log.error("%s", v.message)
        return 1
    if args.out:
        catalog.save(cat, args.out)
    else:
        sys.stdout.write(catalog.dumps(cat))
    return 0


def cmd_serve(args) -> int:
    from .service import CompressedClock, Service
    from .service.wire import WireServer, parse_listen

    clock = CompressedClock(args.compression)
    service = Service(_load_catalog(args.catalog), state_dir=args.state_dir, clock=clock)
    clock.start_tick = service.world.clock  # resume where the restored world stopped
    server = WireServer(service, parse_listen(args.listen))
    host, port = server.address
    log.info("listening on %s:%d (world tick %d)", host, port, service.world.clock)
    print(f"listening on {host}:{port}", flush=True)
    # a plain kill should still leave a fresh snapshot behind
    signal.signal(signal.SIGTERM, lambda *_: sys.exit(0))
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
        service.close()
        log.info("state saved at seq %d", service.log.last_seq)
    return 0


def cmd_simulate(args) -> int:
    from .simlab import emit_figures, run_simulation

    cat = _load_catalog(args.catalog)
    result = run_simulation(cat, args.bots, args.days, args.compression, args.seed, policies=args.policy)
    expected, actual = result.money_audit()
    if args.out:
        result.save(args.out)
        emit_figures(args.out, cat, result.events)
    sys.stdout.write(result.report.to_json())
    print(f"wall time {result.wall_seconds:.1f}s, money audit {'ok' if expected == actual else 'FAILED'}", file=sys.stderr)
    return 0 if expected == actual else 1


def cmd_report(args) -> int:
    from .service import eventlog
    from .simlab import metrics_from_log, write_distributions

    report = metrics_from_log(eventlog.read_log(args.log))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_distributions(out, report)
    sys.stdout.write(report.to_json())
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="livingcity", description="Headless city-building game world.")
    p.add_argument("-v", "--verbose", action="store_true", help="log at debug level")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze-balance", help="emit one balance curve as CSV")
    a.add_argument("--figure", type=int, choices=(1, 2, 3, 4), required=True)
    a.add_argument("--catalog", help="catalog file (default: bundled reference)")
    a.add_argument("--out", help="output path (default: stdout)")
    a.set_defaults(func=cmd_analyze_balance)

    g = sub.add_parser("gen-catalog", help="generate a catalog from a seed")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", help="output path (default: stdout)")
    g.set_defaults(func=cmd_gen_catalog)

    s = sub.add_parser("serve", help="run the world behind a line-delimited JSON socket")
    s.add_argument("--catalog")
    s.add_argument("--state-dir", required=True, help="snapshot and event log live here")
    s.add_argument("--listen", default="127.0.0.1:7878", help="host:port")
    s.add_argument("--compression", type=float, default=1.0, help="ticks per wall second")
    s.set_defaults(func=cmd_serve)

    m = sub.add_parser("simulate", help="run a seeded bot population")
    m.add_argument("--bots", type=int, default=200)
    m.add_argument("--days", type=float, default=30)
    m.add_argument("--compression", type=int, default=1000)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--policy", default="balanced", choices=("builder", "trader", "idler", "balanced"))
    m.add_argument("--catalog")
    m.add_argument("--out", help="directory for events.log, report.json and CSVs")
    m.set_defaults(func=cmd_simulate)

    r = sub.add_parser("report", help="recompute a SimReport from an event log")
    r.add_argument("--log", required=True)
    r.add_argument("--out", help="directory for distribution CSVs")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (LivingCityError, ValueError, OSError) as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
