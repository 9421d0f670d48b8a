"""The 147-building catalog: schema, validation, seeded generation and file I/O.

File format (UTF-8, tab separated, one record per line)::

    # livingcity-catalog v1 seed=0
    building_id	category	subtype	base_time_s	base_cost	min_city_level	is_external	name
    EX01	external	tourism	540	12345.00	3	1	Harbor Resort
    ...

Records are sorted by ``building_id``; ``save`` followed by ``load`` and ``save``
reproduces the file byte for byte.
"""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable

from .balance import COST_MODEL, MAX_BASE_TIME_S, MIN_BASE_TIME_S, TIME_CLASSES
from .errors import CatalogParseError

FORMAT_HEADER = "# livingcity-catalog v1"
COLUMNS = (
    "building_id",
    "category",
    "subtype",
    "base_time_s",
    "base_cost",
    "min_city_level",
    "is_external",
    "name",
)

N_BUILDINGS = 147
N_DISTINCT_TIMES = 29
N_DISTINCT_COSTS = 100
CITY_LEVELS = range(1, 9)


class Category(enum.Enum):
    FREE_AREAS = "free_areas"
    TRANSPORT = "transport"
    SERVICES = "services"
    INSTITUTIONAL = "institutional"
    PUBLIC_FACILITIES = "public_facilities"
    TOURISM_OTHER = "tourism_other"
    EXTERNAL = "external"

    @property
    def expected_count(self) -> int:
        return EXPECTED_COUNTS[self]

    @property
    def prefix(self) -> str:
        return _PREFIXES[self]


EXPECTED_COUNTS = {
    Category.FREE_AREAS: 19,
    Category.TRANSPORT: 18,
    Category.SERVICES: 16,
    Category.INSTITUTIONAL: 17,
    Category.PUBLIC_FACILITIES: 19,
    Category.TOURISM_OTHER: 18,
    Category.EXTERNAL: 40,
}
_PREFIXES = {
    Category.FREE_AREAS: "FA",
    Category.TRANSPORT: "TR",
    Category.SERVICES: "SV",
    Category.INSTITUTIONAL: "IN",
    Category.PUBLIC_FACILITIES: "PF",
    Category.TOURISM_OTHER: "TO",
    Category.EXTERNAL: "EX",
}
CATEGORY_ORDER = tuple(Category)

# service lines an external building can provide to the city that licensed the slot
EXTERNAL_SUBTYPES = ("commercial", "industrial", "tourism", "utilities", "transportation")

_SUBTYPES = {
    Category.FREE_AREAS: ("residential", "commercial", "industrial"),
    Category.TRANSPORT: ("transportation", "public_places"),
    Category.SERVICES: ("power", "water", "garbage"),
    Category.INSTITUTIONAL: ("institutions", "police", "firefighters", "army"),
    Category.PUBLIC_FACILITIES: ("education", "healthcare", "worship"),
    Category.TOURISM_OTHER: ("accommodation", "various"),
    Category.EXTERNAL: EXTERNAL_SUBTYPES,
}

_NAME_WORDS = {
    "residential": ("Row Houses", "Apartment Block", "Villa Estate", "Tower Flats"),
    "commercial": ("Market Hall", "Shopping Arcade", "Trade Center", "Mall"),
    "industrial": ("Workshop", "Foundry", "Factory", "Industrial Park"),
    "transportation": ("Bus Depot", "Rail Station", "Tram Line", "Airport", "Ferry Pier"),
    "public_places": ("Plaza", "Promenade", "City Park", "Square"),
    "power": ("Power Station", "Wind Farm", "Solar Field"),
    "water": ("Water Tower", "Aqueduct", "Treatment Plant"),
    "garbage": ("Landfill", "Recycling Center", "Incinerator"),
    "institutions": ("Town Hall", "Courthouse", "Registry Office"),
    "police": ("Police Post", "Police Headquarters"),
    "firefighters": ("Fire Station", "Fire Brigade HQ"),
    "army": ("Barracks", "Garrison"),
    "education": ("School", "Library", "University"),
    "healthcare": ("Clinic", "Hospital", "Medical Center"),
    "worship": ("Chapel", "Cathedral"),
    "accommodation": ("Inn", "Hotel", "Resort"),
    "various": ("Museum", "Stadium", "Theatre", "Zoo"),
    "tourism": ("Holiday Village", "Harbor Resort", "Casino"),
    "utilities": ("Pumping Station", "Substation", "Depot"),
}
_NAME_PREFIXES = ("Old", "New", "North", "South", "East", "West", "Grand", "Little", "Upper", "Lower")


@dataclass(frozen=True)
class BuildingSpec:
    building_id: str
    name: str
    category: Category
    subtype: str
    base_time_s: int
    base_cost: float
    min_city_level: int
    is_external: bool

    @property
    def base_cost_cents(self) -> int:
        return round(self.base_cost * 100)


@dataclass(frozen=True)
class Catalog:
    entries: tuple[BuildingSpec, ...]
    seed: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "_by_id", {e.building_id: e for e in self.entries})

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, building_id: str) -> BuildingSpec:
        return self._by_id[building_id]

    def __contains__(self, building_id) -> bool:
        return building_id in self._by_id

    def by_category(self, category: Category) -> list[BuildingSpec]:
        return [e for e in self.entries if e.category is category]


# -- validation ------------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    rule: str
    message: str
    building_id: str | None = None

    def __str__(self) -> str:
        where = f"[{self.building_id}] " if self.building_id else ""
        return f"{where}{self.rule}: {self.message}"


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...]

    @property
    def ok(self) -> bool:
        return not self.violations

    def rules(self) -> set[str]:
        return {v.rule for v in self.violations}


def validate(catalog: Catalog | Iterable[BuildingSpec]) -> ValidationReport:
    """Check every structural constraint; all violations are collected, none raised."""
    entries = list(catalog.entries if isinstance(catalog, Catalog) else catalog)
    out: list[Violation] = []

    if len(entries) != N_BUILDINGS:
        out.append(Violation("count", f"count {len(entries)} != {N_BUILDINGS}"))

    seen: set[str] = set()
    for e in entries:
        if e.building_id in seen:
            out.append(Violation("unique_id", "duplicate building_id", e.building_id))
        seen.add(e.building_id)

    for cat in CATEGORY_ORDER:
        n = sum(1 for e in entries if e.category is cat)
        if n != cat.expected_count:
            out.append(Violation("category_count", f"{cat.value}: {n} != {cat.expected_count}"))

    for e in entries:
        if not isinstance(e.category, Category):
            out.append(Violation("category", f"unknown category {e.category!r}", e.building_id))
            continue
        if e.is_external != (e.category is Category.EXTERNAL):
            out.append(Violation("external_flag", "is_external must equal (category == external)", e.building_id))
        if not MIN_BASE_TIME_S <= e.base_time_s <= MAX_BASE_TIME_S:
            out.append(Violation("base_time_range", f"base time {e.base_time_s} outside [90, 3000]", e.building_id))
        if not COST_MODEL.cost_min <= e.base_cost <= COST_MODEL.cost_max:
            out.append(Violation("base_cost_range", f"base cost {e.base_cost:.2f} outside [2000.00, 387500.00]", e.building_id))
        if e.min_city_level not in CITY_LEVELS:
            out.append(Violation("level_range", f"min_city_level {e.min_city_level} outside [1, 8]", e.building_id))
        if e.category is Category.EXTERNAL and e.subtype not in EXTERNAL_SUBTYPES:
            out.append(Violation("subtype", f"external subtype {e.subtype!r} unknown", e.building_id))

    n_times = len({e.base_time_s for e in entries})
    if n_times != N_DISTINCT_TIMES:
        out.append(Violation("distinct_times", f"distinct base times {n_times} != {N_DISTINCT_TIMES}"))
    n_costs = len({e.base_cost for e in entries})
    if n_costs != N_DISTINCT_COSTS:
        out.append(Violation("distinct_costs", f"distinct base costs {n_costs} != {N_DISTINCT_COSTS}"))
    missing = sorted(set(CITY_LEVELS) - {e.min_city_level for e in entries})
    if missing:
        out.append(Violation("level_coverage", f"no building requires city level(s) {missing}"))

    return ValidationReport(tuple(out))


# -- generation ------------------------------------------------------------------

# Always present so the 540 s / 600 s cross-class inversion is visible in the figures.
_ANCHOR_TIMES = (90, 540, 600, 3000)


def _class_quota() -> list[int]:
    # distinct times per class, proportional to class width inside [90, 3000]
    widths = []
    for tc in TIME_CLASSES:
        upper = tc.upper_bound_s if tc.upper_bound_s is not None else MAX_BASE_TIME_S
        widths.append(upper - tc.lower_bound_s)
    raw = [w * N_DISTINCT_TIMES / sum(widths) for w in widths]
    quota = [int(r) for r in raw]
    # largest remainder
    for i in sorted(range(len(raw)), key=lambda i: raw[i] - quota[i], reverse=True):
        if sum(quota) == N_DISTINCT_TIMES:
            break
        quota[i] += 1
    return quota


def _distinct_times(rng: random.Random) -> list[int]:
    times: list[int] = []
    for tc, n in zip(TIME_CLASSES, _class_quota()):
        lo = int(tc.lower_bound_s)
        hi = int(tc.upper_bound_s) - 10 if tc.upper_bound_s is not None else int(MAX_BASE_TIME_S)
        fixed = [t for t in _ANCHOR_TIMES if lo <= t <= hi]
        pool = [t for t in range(lo, hi + 1, 10) if t not in fixed]
        times.extend(fixed + rng.sample(pool, n - len(fixed)))
    return sorted(times)


def _distinct_costs(rng: random.Random) -> list[float]:
    lo, hi = int(COST_MODEL.cost_min), int(COST_MODEL.cost_max)
    # log-uniform spread in steps of 50.00, endpoints pinned
    inner: set[int] = set()
    while len(inner) < N_DISTINCT_COSTS - 2:
        x = lo * (hi / lo) ** rng.random()
        v = int(round(x / 50.0)) * 50
        if lo < v < hi:
            inner.add(v)
    return [float(v) for v in sorted(inner | {lo, hi})]


def _spread(distinct: list, n: int, rng: random.Random) -> list:
    """Multiset of size n containing every distinct value at least once, sorted."""
    extra = [rng.choice(distinct) for _ in range(n - len(distinct))]
    return sorted(distinct + extra)


def _levels(n: int, rng: random.Random) -> list[int]:
    levels = list(CITY_LEVELS) + [rng.randint(1, 8) for _ in range(n - len(CITY_LEVELS))]
    return sorted(levels)


def generate(seed: int) -> Catalog:
    """Deterministic synthetic catalog satisfying every published constraint.

    Base time, base cost and required city level are all drawn as sorted
    multisets and matched through a shared per-building "complexity" ranking,
    with a little jitter, so expensive buildings also tend to be slow and late.
    """
    rng = random.Random(seed)
    times = _spread(_distinct_times(rng), N_BUILDINGS, rng)
    costs = _spread(_distinct_costs(rng), N_BUILDINGS, rng)
    levels = _levels(N_BUILDINGS, rng)

    slots: list[tuple[Category, int]] = []
    for cat in CATEGORY_ORDER:
        slots.extend((cat, i + 1) for i in range(cat.expected_count))

    def rank(jitter: float) -> list[int]:
        keys = [complexity[i] + rng.gauss(0.0, jitter) for i in range(N_BUILDINGS)]
        return sorted(range(N_BUILDINGS), key=lambda i: keys[i])

    complexity = [rng.random() for _ in range(N_BUILDINGS)]
    time_of, cost_of, level_of = [0] * N_BUILDINGS, [0.0] * N_BUILDINGS, [1] * N_BUILDINGS
    for pos, i in enumerate(rank(0.15)):
        time_of[i] = times[pos]
    for pos, i in enumerate(rank(0.10)):
        cost_of[i] = costs[pos]
    for pos, i in enumerate(rank(0.05)):
        level_of[i] = levels[pos]

    entries = []
    used_names: set[str] = set()
    for i, (cat, num) in enumerate(slots):
        subtype = rng.choice(_SUBTYPES[cat])
        entries.append(
            BuildingSpec(
                building_id=f"{cat.prefix}{num:02d}",
                name=_name(subtype, rng, used_names),
                category=cat,
                subtype=subtype,
                base_time_s=time_of[i],
                base_cost=cost_of[i],
                min_city_level=level_of[i],
                is_external=cat is Category.EXTERNAL,
            )
        )
    entries.sort(key=lambda e: e.building_id)
    return Catalog(tuple(entries), seed)


def _name(subtype: str, rng: random.Random, used: set[str]) -> str:
    words = _NAME_WORDS.get(subtype, ("Building",))
    for _ in range(50):
        name = f"{rng.choice(_NAME_PREFIXES)} {rng.choice(words)}"
        if name not in used:
            break
    else:
        name = f"{name} {len(used)}"
    used.add(name)
    return name


# -- serialization ---------------------------------------------------------------


def dumps(catalog: Catalog) -> str:
    header = FORMAT_HEADER + (f" seed={catalog.seed}" if catalog.seed is not None else "")
    lines = [header, "\t".join(COLUMNS)]
    for e in sorted(catalog.entries, key=lambda e: e.building_id):
        lines.append(
            "\t".join(
                (
                    e.building_id,
                    e.category.value,
                    e.subtype,
                    str(e.base_time_s),
                    f"{e.base_cost:.2f}",
                    str(e.min_city_level),
                    "1" if e.is_external else "0",
                    e.name,
                )
            )
        )
    return "\n".join(lines) + "\n"


def save(catalog: Catalog, path) -> None:
    Path(path).write_text(dumps(catalog), encoding="utf-8")


def loads(text: str) -> Catalog:
    lines = text.splitlines()
    if not lines or not lines[0].startswith(FORMAT_HEADER):
        raise CatalogParseError(f"missing header {FORMAT_HEADER!r}", line=1)
    seed = None
    for token in lines[0][len(FORMAT_HEADER):].split():
        if token.startswith("seed="):
            try:
                seed = int(token[5:])
            except ValueError:
                raise CatalogParseError("bad seed in header", line=1, field="seed") from None
    if len(lines) < 2 or tuple(lines[1].split("\t")) != COLUMNS:
        raise CatalogParseError("column header mismatch", line=2)

    entries = []
    for lineno, raw in enumerate(lines[2:], start=3):
        if not raw.strip():
            continue
        parts = raw.split("\t")
        if len(parts) != len(COLUMNS):
            raise CatalogParseError(f"expected {len(COLUMNS)} fields, got {len(parts)}", line=lineno)
        rec = dict(zip(COLUMNS, parts))
        entries.append(_parse_record(rec, lineno))
    return Catalog(tuple(entries), seed)


def _parse_record(rec: dict[str, str], lineno: int) -> BuildingSpec:
    def parse(field_name, conv):
        try:
            return conv(rec[field_name])
        except (ValueError, KeyError):
            raise CatalogParseError(f"cannot parse {rec.get(field_name)!r}", line=lineno, field=field_name) from None

    def flag(s: str) -> bool:
        if s not in ("0", "1"):
            raise ValueError(s)
        return s == "1"

    if not rec["building_id"]:
        raise CatalogParseError("empty id", line=lineno, field="building_id")
    return BuildingSpec(
        building_id=rec["building_id"],
        name=rec["name"],
        category=parse("category", Category),
        subtype=rec["subtype"],
        base_time_s=parse("base_time_s", int),
        base_cost=parse("base_cost", float),
        min_city_level=parse("min_city_level", int),
        is_external=parse("is_external", flag),
    )


def load(path) -> Catalog:
    return loads(Path(path).read_text(encoding="utf-8"))


REFERENCE_PATH = Path(__file__).parent / "data" / "reference_catalog.tsv"
REFERENCE_SEED = 0


def reference() -> Catalog:
    """The committed seed-0 catalog; golden tests pin against this file."""
    return load(REFERENCE_PATH)


def with_entry(catalog: Catalog, building_id: str, **changes) -> Catalog:
    """Copy of ``catalog`` with one entry modified (used by mutation tests and tooling)."""
    entries = tuple(replace(e, **changes) if e.building_id == building_id else e for e in catalog.entries)
    return Catalog(entries, catalog.seed)
