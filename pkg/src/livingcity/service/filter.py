"""Pre-filter for free-text fields (city names, notes).

Structured payload fields never pass through here: they are bound as typed
parameters and cannot change the shape of a command. Free text is screened
for destructive or data-spoiling query commands plus the classic
tautology/comment/stacking idioms. Bare SQL words ("Drop Point", "Select
Harbor") and apostrophes ("O'Brien") are allowed; only command *shapes* are
rejected.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

_F = re.IGNORECASE | re.DOTALL

# (name, pattern). Order matters only for which name is reported first.
PATTERNS: tuple[tuple[str, re.Pattern], ...] = tuple(
    (name, re.compile(rx, _F))
    for name, rx in (
        ("drop", r"\bdrop\s+(table|database|schema|view|index|user|login|procedure|function|trigger)\b"),
        ("alter", r"\balter\s+(table|database|schema|user|login|role|view)\b"),
        ("truncate", r"\btruncate\s+(table\s+)?[\w\[\]`\"]+"),
        ("delete", r"\bdelete\s+from\b"),
        ("insert", r"\binsert\s+into\b"),
        ("update_set", r"\bupdate\s+[\w\[\]`\".]+\s+set\b"),
        ("create_user", r"\bcreate\s+(user|login|role|table|database|procedure)\b"),
        ("grant_revoke", r"\b(grant|revoke)\s+[\w\s,]+\s+(on|to|from)\b"),
        ("union_select", r"\bunion(\s+all)?\s+select\b"),
        ("select_from", r"\bselect\b.+?\bfrom\b"),
        ("master_db", r"\b(master\s*\.\s*\.?\s*\w+|sys(objects|columns|logins|users|databases)|information_schema|pg_catalog|sqlite_master|mysql\s*\.\s*user)\b"),
        ("exec", r"\b(exec|execute)\s*(\(|\s+(xp_|sp_|master\b|@|['\"]))|\bxp_\w+|\bsp_\w+"),
        ("shutdown", r";\s*shutdown\b"),
        ("stacked", r";\s*(select|drop|delete|insert|update|alter|create|exec|declare|truncate)\b"),
        ("tautology", r"['\"]\s*(or|and)\s+['\"]?\s*[\w]+['\"]?\s*(=|<>|!=|like)\s*['\"]?\s*[\w]+"),
        ("numeric_tautology", r"\b(or|and)\s+(\d+)\s*=\s*\2\b"),
        ("comment_terminator", r"['\"]\s*(--|#|/\*)"),
        ("inline_comment", r"/\*.*?\*/"),
        ("time_based", r"\b(waitfor\s+delay|sleep\s*\(|benchmark\s*\(|pg_sleep\s*\()"),
        ("char_encoding", r"\b(char|nchar|chr)\s*\(\s*\d+\s*(,\s*\d+\s*)*\)\s*(\+|\|\|)"),
        ("hex_payload", r"\b0x[0-9a-f]{8,}\b"),
        ("load_file", r"\b(load_file\s*\(|into\s+(out|dump)file\b)"),
        ("declare", r"\bdeclare\s+@\w+"),
    )
)


@dataclass(frozen=True)
class FilterVerdict:
    verdict: str  # "pass" | "reject"
    reason: str | None = None
    matched_pattern: str | None = None

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"


PASS = FilterVerdict("pass")


def filter_input(raw_text: str) -> FilterVerdict:
    if not isinstance(raw_text, str):
        return FilterVerdict("reject", "not text", "type")
    if "\x00" in raw_text:
        return FilterVerdict("reject", "NUL byte in input", "nul")
    for name, rx in PATTERNS:
        m = rx.search(raw_text)
        if m:
            return FilterVerdict("reject", f"matched {name}: {m.group(0)!r}", name)
    return PASS


CORPUS_DIR = Path(__file__).resolve().parent.parent / "data"
MUST_REJECT = CORPUS_DIR / "filter_must_reject.txt"
MUST_PASS = CORPUS_DIR / "filter_must_pass.txt"


def load_corpus(path) -> list[str]:
    """One entry per line; blank lines and lines starting with '##' are skipped."""
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip() or line.startswith("##"):
            continue
        out.append(line)
    return out
