"""Quality-of-life projections and the per-city income/cost settlement.

Targets are a saturating function of allocation-weighted drives:

    target_i = floor_i + (ceiling_i - floor_i) * (1 - exp(-drive_i))
    drive_i  = sum_j A[i][j] * allocation_j * (1 + infra_i / INFRA_SCALE)

with all weights non-negative, so zero allocations give the floor and raising
any allocation never lowers a target. Indicators relax toward their targets by
a fixed fraction per tick; settlement applies ``k`` ticks at once in closed form.
"""

from __future__ import annotations

import math

from .catalog import Category

ALLOCATIONS = (
    "service_funding",
    "maintenance",
    "tax_rate",
    "healthcare_funding",
    "safety_funding",
    "education_funding",
)
FUNDING_LINES = ("service_funding", "healthcare_funding", "safety_funding", "education_funding")
DEFAULT_ALLOCATIONS = {
    "service_funding": 0.5,
    "maintenance": 0.5,
    "tax_rate": 0.2,
    "healthcare_funding": 0.3,
    "safety_funding": 0.3,
    "education_funding": 0.3,
}

QOL = ("population", "employment", "pollution", "welfare", "healthcare", "safety")
QOL_FLOOR = {"population": 200.0, "employment": 5.0, "pollution": 0.0, "welfare": 5.0, "healthcare": 5.0, "safety": 5.0}
QOL_BOUNDS = {name: (0.0, 1_000_000.0 if name == "population" else 100.0) for name in QOL}
# indicators averaged into the single score used by level thresholds and fame
QOL_INDEX = ("employment", "welfare", "healthcare", "safety")

INFRA_SCALE = 20.0

DRIVE = {
    "population": {"service_funding": 0.6, "maintenance": 0.3, "healthcare_funding": 0.3, "safety_funding": 0.3, "education_funding": 0.3},
    "employment": {"service_funding": 0.4, "maintenance": 0.4, "education_funding": 0.8},
    "pollution": {"service_funding": 0.3, "maintenance": 0.2},
    "welfare": {"service_funding": 1.0, "healthcare_funding": 0.4, "education_funding": 0.4, "safety_funding": 0.2},
    "healthcare": {"healthcare_funding": 1.2, "service_funding": 0.2},
    "safety": {"safety_funding": 1.2, "service_funding": 0.2},
}
INFRA = {
    "population": {Category.FREE_AREAS: 1.0, Category.TOURISM_OTHER: 0.3},
    "employment": {Category.FREE_AREAS: 0.5, Category.SERVICES: 0.3, Category.TRANSPORT: 0.5, Category.TOURISM_OTHER: 0.5},
    "pollution": {Category.FREE_AREAS: 0.5, Category.SERVICES: 0.5, Category.TRANSPORT: 0.3},
    "welfare": {Category.PUBLIC_FACILITIES: 0.7, Category.TOURISM_OTHER: 0.4, Category.SERVICES: 0.4},
    "healthcare": {Category.PUBLIC_FACILITIES: 1.0},
    "safety": {Category.INSTITUTIONAL: 1.0},
}
# which consumer indicator a provided service of each external subtype feeds
SERVICE_INDICATOR = {
    "commercial": "employment",
    "industrial": "population",
    "tourism": "welfare",
    "utilities": "healthcare",
    "transportation": "safety",
}
STAFF_INFRA = {"employment": 4.0, "welfare": 4.0, "safety": 2.0, "healthcare": 2.0}

POPULATION_BASE_CAPACITY = 500.0
POPULATION_PER_FREE_AREA_STAGE = 400.0
POPULATION_PER_OTHER_STAGE = 100.0


def clamp01(x: float) -> float:
    return 0.0 if x < 0.0 else 1.0 if x > 1.0 else float(x)


def ceiling(indicator: str, stage_sums: dict) -> float:
    if indicator != "population":
        return QOL_BOUNDS[indicator][1]
    free = stage_sums.get(Category.FREE_AREAS, 0)
    other = sum(v for c, v in stage_sums.items() if c is not Category.FREE_AREAS and c is not Category.EXTERNAL)
    cap = POPULATION_BASE_CAPACITY + POPULATION_PER_FREE_AREA_STAGE * free + POPULATION_PER_OTHER_STAGE * other
    return min(cap, QOL_BOUNDS["population"][1])


# flattened once: this runs at every settlement and every city view
_TERMS = tuple(
    (
        name,
        tuple(INFRA[name].items()),
        tuple(DRIVE[name].items()),
        STAFF_INFRA.get(name, 0.0),
        QOL_FLOOR[name],
        None if name == "population" else QOL_BOUNDS[name][1],
    )
    for name in QOL
)


def projection_targets(allocations: dict, stage_sums: dict, service_bonus: dict, staff_quality: float) -> dict:
    """Target value per indicator. Pure; see module docstring for the law."""
    targets = {}
    for name, infra_w, drive_w, staff_w, floor, hi in _TERMS:
        infra = 0.0
        for cat, w in infra_w:
            infra += w * stage_sums.get(cat, 0)
        infra += service_bonus.get(name, 0.0) + staff_w * staff_quality
        drive = 0.0
        for a, w in drive_w:
            drive += w * allocations.get(a, 0.0)
        drive *= 1.0 + infra / INFRA_SCALE
        if hi is None:
            hi = ceiling(name, stage_sums)
        targets[name] = floor + (hi - floor) * (1.0 - math.exp(-drive))
    return targets


def qol_index(qol: dict) -> float:
    return sum(qol[name] for name in QOL_INDEX) / len(QOL_INDEX)


def relax(value: float, target: float, ticks: int, lam: float) -> float:
    """Indicator after ``ticks`` steps of ``v <- v + lam * (target - v)``."""
    return target + (value - target) * (1.0 - lam) ** ticks


def relaxed_sum(value: float, target: float, ticks: int, lam: float) -> float:
    """Sum of the indicator over ticks 1..k of the same relaxation."""
    if ticks <= 0:
        return 0.0
    r = 1.0 - lam
    if r == 0.0:
        return ticks * target
    return ticks * target + (value - target) * r * (1.0 - r**ticks) / lam


def clamp_indicator(name: str, value: float) -> float:
    lo, hi = QOL_BOUNDS[name]
    return min(max(value, lo), hi)


def to_cents(amount: float) -> int:
    return int(round(amount * 100.0))
