"""Time and cost balancing curves.

Build time grows by repeated exponentiation: the stage-``x`` time is the
stage-``x-1`` time raised to ``alpha``, where ``alpha`` depends on the time class
of the from-scratch time. Upgrade cost follows a compounding rule in which each
upgrade costs ``beta`` times the cumulative amount already invested, with
``beta`` an affine, decreasing function of the from-scratch cost.

Everything here is pure and float64.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import ConfigurationError, DomainError

MIN_STAGE = 1
MAX_STAGE = 12

MIN_BASE_TIME_S = 90.0
MAX_BASE_TIME_S = 3000.0


class TimeClassId(enum.Enum):
    I = "I"
    II = "II"
    III = "III"
    IV = "IV"
    V = "V"


@dataclass(frozen=True)
class TimeClass:
    class_id: TimeClassId
    lower_bound_s: float
    upper_bound_s: float | None  # exclusive; None = unbounded
    alpha: float

    def contains(self, base_time_s: float) -> bool:
        if base_time_s < self.lower_bound_s:
            return False
        return self.upper_bound_s is None or base_time_s < self.upper_bound_s


TIME_CLASSES: tuple[TimeClass, ...] = (
    TimeClass(TimeClassId.I, 90.0, 300.0, 1.06),
    TimeClass(TimeClassId.II, 300.0, 600.0, 1.055),
    TimeClass(TimeClassId.III, 600.0, 1200.0, 1.05),
    TimeClass(TimeClassId.IV, 1200.0, 1800.0, 1.045),
    TimeClass(TimeClassId.V, 1800.0, None, 1.04),
)


@dataclass(frozen=True)
class CostModelParams:
    beta_min: float = 0.10
    beta_max: float = 0.15
    cost_min: float = 2000.00
    cost_max: float = 387500.00

    def __post_init__(self):
        if not self.beta_min < self.beta_max:
            raise ConfigurationError("beta_min must be < beta_max")
        if not self.cost_min < self.cost_max:
            raise ConfigurationError("cost_min must be < cost_max")


COST_MODEL = CostModelParams()


def _check_stage(stage: int, lowest: int = MIN_STAGE) -> None:
    if isinstance(stage, bool) or not isinstance(stage, int):
        raise DomainError(f"stage must be an integer, got {stage!r}")
    if not lowest <= stage <= MAX_STAGE:
        raise DomainError(f"stage {stage} outside [{lowest}, {MAX_STAGE}]")


def time_class_for(base_time_s: float) -> TimeClass:
    if not base_time_s >= MIN_BASE_TIME_S:  # also catches NaN
        raise DomainError(f"base time {base_time_s} s is below the catalog minimum of 90 s")
    for tc in TIME_CLASSES:
        if tc.contains(base_time_s):
            return tc
    raise AssertionError("time classes are total over [90, inf)")  # pragma: no cover


def alpha_for_time(base_time_s: float) -> float:
    """Exponent of the time class whose half-open interval contains ``base_time_s``."""
    return time_class_for(base_time_s).alpha


def _check_base_time(base_time_s: float) -> None:
    if not MIN_BASE_TIME_S <= base_time_s <= MAX_BASE_TIME_S:
        raise DomainError(f"base time {base_time_s} s outside [90, 3000]")


def required_time_at_stage(base_time_s: float, stage: int) -> float:
    """Seconds needed to complete ``stage`` of a building whose stage-1 time is ``base_time_s``.

    Closed form of the recursion ``t(x) = t(x-1) ** alpha``, i.e.
    ``base ** (alpha ** (stage - 1))``. Stage 1 returns the base time unchanged.
    """
    _check_base_time(base_time_s)
    _check_stage(stage)
    if stage == 1:
        return float(base_time_s)
    alpha = alpha_for_time(base_time_s)
    return float(base_time_s) ** (alpha ** (stage - 1))


def required_time_recursive(base_time_s: float, stage: int) -> float:
    """Same quantity computed by literally iterating the recursion."""
    _check_base_time(base_time_s)
    _check_stage(stage)
    alpha = alpha_for_time(base_time_s)
    t = float(base_time_s)
    for _ in range(stage - 1):
        t = t**alpha
    return t


def min_total_time(catalog: Iterable, stage_cap: int = MAX_STAGE) -> float:
    """Lower bound on the time to build every catalog entry up to ``stage_cap``.

    ``catalog`` is any iterable of objects exposing ``base_time_s`` (and ideally
    ``building_id``, used in error messages).
    """
    _check_stage(stage_cap)
    entries = list(catalog)
    if not entries:
        raise DomainError("catalog is empty")
    total = 0.0
    for entry in entries:
        base = getattr(entry, "base_time_s", None)
        try:
            if base is None:
                raise DomainError("missing base_time_s")
            for stage in range(1, stage_cap + 1):
                total += required_time_at_stage(base, stage)
        except DomainError as exc:
            ident = getattr(entry, "building_id", repr(entry))
            raise DomainError(f"invalid catalog entry {ident}: {exc}") from exc
    return total


def _check_cost(base_cost: float, params: CostModelParams) -> None:
    if not params.cost_min <= base_cost <= params.cost_max:
        raise DomainError(
            f"base cost {base_cost} outside [{params.cost_min:.2f}, {params.cost_max:.2f}]"
        )


def beta_for_cost(base_cost: float, params: CostModelParams = COST_MODEL) -> float:
    """Upgrade factor for a building with from-scratch cost ``base_cost``.

    Evaluated literally as ``0.15 - cost * 0.05 / (387500 - 2000)``; note this
    gives 0.14974 at the low end, not 0.15.
    """
    _check_cost(base_cost, params)
    span = params.cost_max - params.cost_min
    return params.beta_max - base_cost * (params.beta_max - params.beta_min) / span


def cumulative_cost_at_stage(base_cost: float, stage: int, params: CostModelParams = COST_MODEL) -> float:
    """Total spent from scratch through ``stage``: ``base * (1 + beta) ** (stage - 1)``."""
    _check_stage(stage)
    beta = beta_for_cost(base_cost, params)
    return base_cost * (1.0 + beta) ** (stage - 1)


def upgrade_cost_at_stage(base_cost: float, stage: int, params: CostModelParams = COST_MODEL) -> float:
    """Price of upgrading from ``stage - 1`` to ``stage`` (stage >= 2).

    Equals ``beta`` times the cumulative investment through the previous stage.
    """
    _check_stage(stage, lowest=2)
    beta = beta_for_cost(base_cost, params)
    return beta * (1.0 + beta) ** (stage - 2) * base_cost


def build_cost_at_stage(base_cost: float, stage: int, params: CostModelParams = COST_MODEL) -> float:
    """Cost of the build task that reaches ``stage``: construction for 1, upgrade otherwise."""
    if stage == 1:
        _check_cost(base_cost, params)
        return float(base_cost)
    return upgrade_cost_at_stage(base_cost, stage, params)


def improvement_sum(base_cost: float, params: CostModelParams = COST_MODEL) -> float:
    """Sum of the upgrade costs for stages 2..12, ``base * ((1 + beta) ** 11 - 1)``."""
    beta = beta_for_cost(base_cost, params)
    return base_cost * ((1.0 + beta) ** (MAX_STAGE - 1) - 1.0)


def improvement_ratio(base_cost: float, params: CostModelParams = COST_MODEL) -> float:
    return improvement_sum(base_cost, params) / base_cost


# -- figure data ---------------------------------------------------------------

FIGURES = ("fig1", "fig2", "fig3", "fig4")


@dataclass(frozen=True)
class Series:
    """A table of rows; ``columns[0]`` is the abscissa."""

    name: str
    columns: tuple[str, ...]
    rows: tuple[tuple[float, ...], ...]

    def column(self, name: str) -> list[float]:
        idx = self.columns.index(name)
        return [row[idx] for row in self.rows]

    def to_csv(self) -> str:
        lines = [",".join(self.columns)]
        for row in self.rows:
            lines.append(",".join(_fmt(v) for v in row))
        return "\n".join(lines) + "\n"


def _fmt(value: float) -> str:
    if float(value).is_integer() and abs(value) < 1e15:
        return str(int(value))
    return repr(float(value))


def _distinct(values: Iterable[float]) -> list[float]:
    return sorted(set(values))


def figure_series(which: str, catalog: Sequence | None) -> Series:
    """Data behind the four balancing figures, from the catalog's distinct base values.

    fig1: time vs stage, one column per base time.
    fig2: time vs base time, one column per stage (the step plot).
    fig3: S/base and S vs base cost.
    fig4: upgrade cost at stages 3..12 vs upgrade cost at stage 2.
    """
    if not catalog:
        raise ConfigurationError("figure series need a loaded reference catalog")
    times = _distinct(e.base_time_s for e in catalog)
    costs = _distinct(e.base_cost for e in catalog)
    stages = range(MIN_STAGE, MAX_STAGE + 1)

    if which == "fig1":
        cols = ("stage",) + tuple(f"t{_fmt(t)}" for t in times)
        rows = tuple((float(x),) + tuple(required_time_at_stage(t, x) for t in times) for x in stages)
        return Series(which, cols, rows)
    if which == "fig2":
        cols = ("base_time_s",) + tuple(f"stage_{x}" for x in stages)
        rows = tuple((float(t),) + tuple(required_time_at_stage(t, x) for x in stages) for t in times)
        return Series(which, cols, rows)
    if which == "fig3":
        cols = ("base_cost", "ratio", "improvement_sum")
        rows = tuple((c, improvement_ratio(c), improvement_sum(c)) for c in costs)
        return Series(which, cols, rows)
    if which == "fig4":
        cols = ("upgrade_stage_2",) + tuple(f"upgrade_stage_{x}" for x in range(3, MAX_STAGE + 1)) + ("base_cost",)
        rows = tuple(
            (upgrade_cost_at_stage(c, 2),)
            + tuple(upgrade_cost_at_stage(c, x) for x in range(3, MAX_STAGE + 1))
            + (c,)
            for c in costs
        )
        return Series(which, cols, rows)
    raise ConfigurationError(f"unknown figure {which!r}; expected one of {FIGURES}")


def fig4_cumulative_ratios(series: Series) -> list[float]:
    """Per row of fig4: (stage-2 upgrade + all later upgrades) / base cost.

    This is the quantity that must stay inside ]3/2, 4[.
    """
    out = []
    for row in series.rows:
        upgrades, base = row[:-1], row[-1]
        out.append(math.fsum(upgrades) / base)
    return out
