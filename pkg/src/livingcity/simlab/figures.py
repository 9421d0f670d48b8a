"""CSV outputs: balance curves plus per-run distributions from a log."""

from __future__ import annotations

import csv
from pathlib import Path

from .. import balance
from ..catalog import Catalog
from ..errors import ConfigurationError
from ..config import LEVEL_NAMES
from .metrics import SimReport, metrics_from_log

LEVEL_HISTOGRAM_COLUMNS = ("level", "level_name", "players")
SESSION_COLUMNS = ("level", "level_name", "sessions", "mean_session_ticks")


def emit_figures(out_dir, catalog: Catalog, events=None) -> list[Path]:
    """Write fig1..fig4 CSVs, plus level and session distributions when a log is given."""
    if catalog is None:
        raise ConfigurationError("a catalog is required for the balance figures")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for which in balance.FIGURES:
        path = out / f"{which}.csv"
        path.write_text(balance.figure_series(which, catalog).to_csv(), encoding="utf-8")
        written.append(path)
    if events is not None:
        written.extend(write_distributions(out, metrics_from_log(events)))
    return written


def write_distributions(out: Path, report: SimReport) -> list[Path]:
    hist = out / "level_histogram.csv"
    with open(hist, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LEVEL_HISTOGRAM_COLUMNS)
        for lvl in range(1, len(LEVEL_NAMES) + 1):
            w.writerow((lvl, LEVEL_NAMES[lvl - 1], report.level_distribution.get(lvl, 0)))
    sessions = out / "session_by_level.csv"
    with open(sessions, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SESSION_COLUMNS)
        for lvl, s in sorted(report.session_by_level.items()):
            w.writerow((lvl, LEVEL_NAMES[lvl - 1], s["sessions"], f"{s['mean_ticks']:.3f}"))
    return [hist, sessions]
