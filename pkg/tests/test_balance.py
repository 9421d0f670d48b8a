import math

import mpmath
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from livingcity import balance
from livingcity.balance import (
    COST_MODEL,
    TIME_CLASSES,
    alpha_for_time,
    beta_for_cost,
    build_cost_at_stage,
    figure_series,
    fig4_cumulative_ratios,
    improvement_ratio,
    improvement_sum,
    min_total_time,
    required_time_at_stage,
    required_time_recursive,
    upgrade_cost_at_stage,
)
from livingcity.catalog import reference
from livingcity.errors import ConfigurationError, DomainError

# Frozen from a 40-digit mpmath evaluation of base ** (alpha ** (stage - 1)).
T540_12 = 83951.0317840790645920
T600_12 = 56439.2750018621422672
SUM_90 = 14333.8608068070972980  # stages 1..12 of a single 90 s building
ALL_90 = 2107077.53860064330280  # 147 buildings at 90 s
ALL_3000 = 91787879.2277669958233  # 147 buildings at 3000 s
REFERENCE_MIN_TIME = 53324136.2153428632  # seed-0 reference catalog
# (1 + beta) ** 11 - 1 at the two ends of the cost range
RATIO_2000 = 3.64086066225142030
RATIO_387500 = 1.84572434565012496


def oracle_alpha(t):
    # Table of time classes, written out independently of the module's table
    if t < 300:
        return mpmath.mpf("1.06")
    if t < 600:
        return mpmath.mpf("1.055")
    if t < 1200:
        return mpmath.mpf("1.05")
    if t < 1800:
        return mpmath.mpf("1.045")
    return mpmath.mpf("1.04")


def oracle_time(base, stage):
    with mpmath.workdps(40):
        return mpmath.power(base, mpmath.power(oracle_alpha(base), stage - 1))


@pytest.fixture(scope="module")
def ref():
    return reference()


class TestTimeClasses:
    @pytest.mark.parametrize(
        "t,alpha",
        [(90, 1.06), (299.999, 1.06), (300, 1.055), (599, 1.055), (600, 1.05), (1199, 1.05),
         (1200, 1.045), (1800, 1.04), (3000, 1.04), (1e9, 1.04)],
    )
    def test_half_open_boundaries(self, t, alpha):
        assert alpha_for_time(t) == alpha

    def test_alpha_strictly_decreasing(self):
        alphas = [tc.alpha for tc in TIME_CLASSES]
        assert alphas == sorted(alphas, reverse=True) and len(set(alphas)) == 5

    @pytest.mark.parametrize("t", [89.999, 0, -5, float("nan")])
    def test_below_minimum(self, t):
        with pytest.raises(DomainError):
            alpha_for_time(t)

    @given(st.floats(min_value=90, max_value=1e7, allow_nan=False))
    def test_totality(self, t):
        assert sum(tc.contains(t) for tc in TIME_CLASSES) == 1


class TestRequiredTime:
    def test_stage_one_is_base(self):
        assert required_time_at_stage(540, 1) == 540.0

    def test_anchors_against_oracle(self):
        t540, t600 = required_time_at_stage(540, 12), required_time_at_stage(600, 12)
        assert t540 > 80_000 and t600 < 60_000
        assert t540 == pytest.approx(T540_12, rel=1e-9)
        assert t600 == pytest.approx(T600_12, rel=1e-9)
        assert float(oracle_time(540, 12)) == pytest.approx(T540_12, rel=1e-15)

    def test_stage_difference_reading_does_not_match(self):
        # the alternative reading of the 80000 s statement, kept here for the record
        diff = required_time_at_stage(540, 12) - required_time_at_stage(540, 11)
        assert 30_000 < diff < 40_000

    @pytest.mark.parametrize("args", [(89, 1), (3001, 1), (540, 0), (540, 13), (540, 2.0)])
    def test_domain(self, args):
        with pytest.raises(DomainError):
            required_time_at_stage(*args)

    def test_closed_form_matches_recursion(self, ref):
        for t in {e.base_time_s for e in ref}:
            for x in range(1, 13):
                assert required_time_recursive(t, x) == pytest.approx(required_time_at_stage(t, x), rel=1e-9)

    @given(st.floats(min_value=90, max_value=3000), st.integers(min_value=1, max_value=11))
    def test_monotone_in_stage(self, t, x):
        assert required_time_at_stage(t, x + 1) > required_time_at_stage(t, x)

    @given(st.integers(min_value=90, max_value=3000), st.integers(min_value=1, max_value=12))
    @settings(max_examples=50)
    def test_matches_mpmath(self, t, x):
        assert required_time_at_stage(t, x) == pytest.approx(float(oracle_time(t, x)), rel=1e-12)

    def test_cross_class_inversion(self):
        assert required_time_at_stage(540, 12) > required_time_at_stage(600, 12)


def brute_force_min_time(times, cap=12):
    total = 0.0
    for t in times:
        a = 1.06 if t < 300 else 1.055 if t < 600 else 1.05 if t < 1200 else 1.045 if t < 1800 else 1.04
        for x in range(1, cap + 1):
            total += float(t) if x == 1 else float(t) ** (a ** (x - 1))
    return total


class TestMinTime:
    def test_single_building(self):
        class B:
            base_time_s = 90
        assert min_total_time([B()]) == pytest.approx(SUM_90, rel=1e-12)
        assert min_total_time([B()], stage_cap=1) == 90

    def test_reference_equals_brute_force_exactly(self, ref):
        got = min_total_time(ref)
        assert got == brute_force_min_time([e.base_time_s for e in ref])
        assert got == pytest.approx(REFERENCE_MIN_TIME, rel=1e-12)
        assert 1.5e6 < got < 1.0e8

    def test_extreme_catalogs_bracket_published_total(self):
        class B:
            def __init__(self, t):
                self.base_time_s = t
        lo = min_total_time([B(90)] * 147)
        hi = min_total_time([B(3000)] * 147)
        assert lo == pytest.approx(ALL_90, rel=1e-12)
        assert hi == pytest.approx(ALL_3000, rel=1e-12)
        assert lo < 27_978_980.96 < hi

    def test_bad_entry_named(self, ref):
        class B:
            building_id = "XX01"
            base_time_s = 50
        with pytest.raises(DomainError, match="XX01"):
            min_total_time(list(ref) + [B()])

    def test_empty(self):
        with pytest.raises(DomainError):
            min_total_time([])


class TestCosts:
    def test_beta_printed_formula(self):
        assert beta_for_cost(2000) == pytest.approx(0.1497405966277562, rel=1e-12)
        assert beta_for_cost(387500) == pytest.approx(0.0997405966277562, rel=1e-12)
        mid = (beta_for_cost(2000) + beta_for_cost(387500)) / 2
        assert beta_for_cost(194750) == pytest.approx(mid, rel=1e-12)

    @given(st.floats(2000, 387500), st.floats(2000, 387500))
    def test_beta_affine_decreasing(self, a, b):
        if b - a > 1e-6:  # closer than that the two betas round to the same double
            assert beta_for_cost(a) > beta_for_cost(b)
        m = (a + b) / 2
        assert beta_for_cost(m) == pytest.approx((beta_for_cost(a) + beta_for_cost(b)) / 2, abs=1e-12)

    @pytest.mark.parametrize("c", [1999.99, 387500.01, -1])
    def test_cost_domain(self, c):
        with pytest.raises(DomainError):
            beta_for_cost(c)

    def test_upgrade_stage_two(self):
        assert upgrade_cost_at_stage(2000, 2) == pytest.approx(299.4811932555123, rel=1e-12)
        for c in (2000, 50_000, 387500):
            assert upgrade_cost_at_stage(c, 2) / build_cost_at_stage(c, 1) == pytest.approx(beta_for_cost(c), rel=1e-12)

    def test_upgrade_rejects_stage_one(self):
        with pytest.raises(DomainError):
            upgrade_cost_at_stage(2000, 1)

    def test_improvement_anchor(self):
        assert improvement_ratio(2000) == pytest.approx(RATIO_2000, rel=1e-12)
        assert 3.63 <= improvement_ratio(2000) <= 3.65
        assert improvement_sum(2000) == pytest.approx(7280, rel=1e-2)

    def test_high_end_golden(self):
        assert improvement_ratio(387500) == pytest.approx(RATIO_387500, rel=1e-12)

    def test_ratio_matches_mpmath(self):
        with mpmath.workdps(30):
            for c in (2000, 10_000, 194750, 387500):
                beta = mpmath.mpf("0.15") - mpmath.mpf(c) * mpmath.mpf("0.05") / mpmath.mpf(385500)
                assert improvement_ratio(c) == pytest.approx(float((1 + beta) ** 11 - 1), rel=1e-12)

    def test_sum_of_upgrades_matches_closed_form(self):
        for c in (2000, 77_777, 387500):
            s = math.fsum(upgrade_cost_at_stage(c, x) for x in range(2, 13))
            assert s == pytest.approx(improvement_sum(c), rel=1e-12)

    @given(st.floats(2000, 387500), st.integers(2, 12))
    def test_upgrade_cheaper_than_scratch(self, c, x):
        assert upgrade_cost_at_stage(c, x) < c

    @given(st.floats(2000, 387500))
    def test_ratio_bounds(self, c):
        assert 1.5 < improvement_ratio(c) < 4

    def test_params_validated(self):
        with pytest.raises(ConfigurationError):
            balance.CostModelParams(beta_min=0.2, beta_max=0.1)
        assert COST_MODEL.cost_min == 2000.0


class TestFigures:
    def test_fig1_increasing(self, ref):
        s = figure_series("fig1", ref)
        assert len(s.rows) == 12 and len(s.columns) == 30
        for name in s.columns[1:]:
            col = s.column(name)
            assert all(b > a for a, b in zip(col, col[1:]))

    def test_fig2_step(self, ref):
        s = figure_series("fig2", ref)
        by_time = dict(zip(s.column("base_time_s"), s.column("stage_12")))
        assert by_time[540] > by_time[600]

    def test_fig3_bounds(self, ref):
        s = figure_series("fig3", ref)
        assert len(s.rows) == 100
        assert all(1.5 < r < 4 for r in s.column("ratio"))

    def test_fig4_cumulative_bounds(self, ref):
        s = figure_series("fig4", ref)
        assert s.columns[0] == "upgrade_stage_2"
        assert all(1.5 < r < 4 for r in fig4_cumulative_ratios(s))
        # every later upgrade is a fixed multiple of the stage-2 one
        for row in s.rows:
            assert all(v > row[0] for v in row[1:-1])

    def test_csv_header(self, ref):
        text = figure_series("fig2", ref).to_csv()
        assert text.splitlines()[0].startswith("base_time_s,stage_1,")
        assert len(text.splitlines()) == 30

    def test_missing_catalog(self):
        with pytest.raises(ConfigurationError):
            figure_series("fig1", None)
        with pytest.raises(ConfigurationError):
            figure_series("fig9", reference())
