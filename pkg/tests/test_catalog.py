import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from livingcity import balance, catalog
from livingcity.catalog import Catalog, Category, generate, reference, validate, with_entry
from livingcity.errors import CatalogParseError


@pytest.fixture(scope="module")
def ref():
    return reference()


def profile(cat):
    return (
        len(cat),
        tuple(len(cat.by_category(c)) for c in Category),
        len({e.base_time_s for e in cat}),
        len({e.base_cost for e in cat}),
        sorted({e.min_city_level for e in cat}),
        sorted({balance.time_class_for(e.base_time_s).class_id.name for e in cat}),
    )


def test_reference_constraints(ref):
    assert validate(ref).ok
    assert len(ref) == 147
    assert [len(ref.by_category(c)) for c in Category] == [19, 18, 16, 17, 19, 18, 40]
    times = {e.base_time_s for e in ref}
    costs = {e.base_cost for e in ref}
    assert len(times) == 29 and min(times) >= 90 and max(times) <= 3000
    assert len(costs) == 100 and min(costs) >= 2000 and max(costs) <= 387500
    assert {540, 600} <= times


def test_reference_matches_generator(ref):
    # the committed file is the seed-0 output; regenerating must not drift
    assert catalog.dumps(generate(0)) == catalog.dumps(ref)


def test_generate_deterministic():
    assert generate(7) == generate(7)


def test_different_seeds_same_profile():
    a, b = generate(1), generate(2)
    assert a.entries != b.entries
    assert validate(a).ok and validate(b).ok
    assert profile(a) == profile(b)


@given(st.integers(min_value=0, max_value=10_000))
@settings(max_examples=25, deadline=None)
def test_any_seed_valid(seed):
    cat = generate(seed)
    assert validate(cat).ok
    classes = {balance.time_class_for(e.base_time_s).class_id for e in cat}
    assert len(classes) == 5


# -- mutation suite: each seeded defect must be flagged by its rule -----------------------

def _drop_one(cat):
    return Catalog(cat.entries[1:], cat.seed)


def _duplicate(cat):
    return Catalog(cat.entries[:-1] + (cat.entries[0],), cat.seed)


def _shared(cat, attr):
    """An entry whose value of ``attr`` also appears elsewhere, so changing it adds a distinct value."""
    values = [getattr(e, attr) for e in cat]
    return next(e for e in cat if values.count(getattr(e, attr)) > 1)


def _new_time(cat):
    return with_entry(cat, _shared(cat, "base_time_s").building_id, base_time_s=2995)


def _new_cost(cat):
    return with_entry(cat, _shared(cat, "base_cost").building_id, base_cost=123456.0)


MUTATIONS = {
    "count": _drop_one,
    "unique_id": _duplicate,
    "category_count": lambda c: with_entry(c, "FA01", category=Category.TRANSPORT),
    "external_flag": lambda c: with_entry(c, "FA02", is_external=True),
    "base_time_range": lambda c: with_entry(c, "FA03", base_time_s=3010),
    "base_cost_range": lambda c: with_entry(c, "FA04", base_cost=400000.0),
    "level_range": lambda c: with_entry(c, "FA05", min_city_level=9),
    "subtype": lambda c: with_entry(c, "EX01", subtype="submarine"),
    "distinct_times": _new_time,
    "distinct_costs": _new_cost,
}


@pytest.mark.parametrize("rule", sorted(MUTATIONS))
def test_mutation_flagged(ref, rule):
    report = validate(MUTATIONS[rule](ref))
    assert not report.ok
    assert rule in report.rules()


def test_level_coverage_flagged(ref):
    mutated = ref
    for e in ref:
        if e.min_city_level == 8:
            mutated = with_entry(mutated, e.building_id, min_city_level=7)
    assert "level_coverage" in validate(mutated).rules()


def test_thirty_distinct_times_message(ref):
    report = validate(_new_time(ref))
    assert any("distinct base times" in v.message for v in report.violations)


def test_violation_names_entry(ref):
    report = validate(with_entry(ref, "FA04", base_cost=400000.0))
    assert any(v.building_id == "FA04" for v in report.violations)


# -- file format ---------------------------------------------------------------------------

def test_round_trip_byte_identical(ref, tmp_path):
    original = catalog.REFERENCE_PATH.read_bytes()
    out = tmp_path / "cat.tsv"
    catalog.save(ref, out)
    assert out.read_bytes() == original
    assert catalog.load(out) == ref


def test_header_versioned(ref):
    assert catalog.dumps(ref).splitlines()[0] == "# livingcity-catalog v1 seed=0"


@pytest.mark.parametrize(
    "column,value",
    [("base_time_s", "fast"), ("base_cost", "cheap"), ("min_city_level", "x"), ("category", "castle"), ("is_external", "yes")],
)
def test_parse_error_names_field(ref, column, value):
    lines = catalog.dumps(ref).splitlines()
    parts = lines[5].split("\t")
    parts[catalog.COLUMNS.index(column)] = value
    lines[5] = "\t".join(parts)
    with pytest.raises(CatalogParseError) as exc:
        catalog.loads("\n".join(lines))
    assert exc.value.field == column and exc.value.line == 6
    assert column in str(exc.value)


def test_missing_header():
    with pytest.raises(CatalogParseError):
        catalog.loads("building_id\tcategory\n")


def test_out_of_range_loads_then_fails_validation(ref):
    text = catalog.dumps(ref).replace("\t387500.00\t", "\t399999.00\t", 1)
    cat = catalog.loads(text)
    assert "base_cost_range" in validate(cat).rules()


def test_catalog_lookup(ref):
    assert ref["EX01"].is_external
    assert "ZZ99" not in ref
    with pytest.raises(KeyError):
        ref["ZZ99"]
