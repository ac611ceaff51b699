"""Values, coercion, ordering and rendering of the relational model."""

import numpy as np
import pytest

from polyglot_qe.errors import CoercionError, ValuePathError
from polyglot_qe.relmodel import (
    ColumnDef,
    RelSchema,
    ScalarType,
    StructKind,
    Timestamp,
    coerce,
    compare,
    format_float,
    from_json,
    get_path,
    join_key,
    render_value,
    set_path,
    sort_key,
    split_path,
    to_json,
    type_of,
    values_equal,
)


class TestTimestamp:
    def test_parse_and_render(self):
        ts = Timestamp.parse("2024-03-05 07:08:09")
        assert ts.render() == "2024-03-05 07:08:09"
        assert Timestamp.parse("1970-01-01 00:00:00").micros == 0

    def test_fraction_is_kept(self):
        ts = Timestamp.parse("2024-01-01 00:00:00.25")
        assert ts.micros % 1_000_000 == 250_000
        assert ts.render() == "2024-01-01 00:00:00.250000"

    def test_plus_seconds(self):
        ts = Timestamp.parse("2024-01-01 00:00:00").plus_seconds(86400)
        assert ts.render() == "2024-01-02 00:00:00"

    @pytest.mark.parametrize("text", ["2024-01-01", "2024-01-01T00:00:00", "yesterday"])
    def test_parse_rejects_other_formats(self, text):
        with pytest.raises(ValueError):
            Timestamp.parse(text)


class TestCoerce:
    def test_text_to_integers(self):
        assert coerce("42", ScalarType.INT) == 42
        assert coerce(" -7 ", ScalarType.BIGINT) == -7

    def test_smallint_range(self):
        assert coerce(32767, ScalarType.SMALLINT) == 32767
        with pytest.raises(CoercionError):
            coerce(32768, ScalarType.SMALLINT)

    def test_fractional_float_is_not_an_integer(self):
        assert coerce(3.0, ScalarType.INT) == 3
        with pytest.raises(CoercionError):
            coerce(3.5, ScalarType.INT)

    def test_bool_is_not_a_number(self):
        with pytest.raises(CoercionError):
            coerce(True, ScalarType.INT)
        with pytest.raises(CoercionError):
            coerce(False, ScalarType.DOUBLE)

    def test_numeric_from_text(self):
        assert coerce("12.50", ScalarType.NUMERIC) == 12.5
        assert coerce("1e3", ScalarType.DOUBLE) == 1000.0

    def test_text_rendering(self):
        assert coerce(12.5, ScalarType.TEXT) == "12.5"
        assert coerce(3, ScalarType.TEXT) == "3"
        assert coerce(True, ScalarType.TEXT) == "true"
        assert coerce(Timestamp.parse("2024-01-01 10:00:00"), ScalarType.TEXT) == "2024-01-01 10:00:00"

    def test_bool_from_text(self):
        assert coerce("t", ScalarType.BOOL) is True
        assert coerce("FALSE", ScalarType.BOOL) is False
        with pytest.raises(CoercionError):
            coerce("maybe", ScalarType.BOOL)

    def test_timestamp_from_text(self):
        assert coerce("2024-01-01 00:00:00", ScalarType.TIMESTAMP) == Timestamp.parse("2024-01-01 00:00:00")
        with pytest.raises(CoercionError):
            coerce("not a time", ScalarType.TIMESTAMP)

    def test_null_passes_through(self):
        for target in ScalarType:
            assert coerce(None, target) is None

    def test_error_names_the_column(self):
        with pytest.raises(CoercionError) as excinfo:
            coerce("abc", ScalarType.INT, "o_id")
        assert excinfo.value.column == "o_id"
        assert "o_id" in str(excinfo.value)


class TestPaths:
    def test_get_path(self):
        doc = {"a": {"b": {"c": 1}}, "arr": [{"x": 1}]}
        assert get_path(doc, "a.b.c") == 1
        assert get_path(doc, "a.missing") is None
        assert get_path(doc, "arr.x") is None

    def test_set_path_copies(self):
        doc = {"a": {"b": 1}}
        changed = set_path(doc, "a.b", 2)
        assert changed == {"a": {"b": 2}}
        assert doc == {"a": {"b": 1}}

    @pytest.mark.parametrize("path", ["", "a..b", ".a", "a."])
    def test_malformed_paths(self, path):
        with pytest.raises(ValuePathError):
            split_path(path)


class TestOrdering:
    def test_type_of(self):
        assert type_of(1) is ScalarType.INT
        assert type_of(2**40) is ScalarType.BIGINT
        assert type_of(1.5) is ScalarType.DOUBLE
        assert type_of([1]) is StructKind.ARRAY
        assert type_of({"a": 1}) is StructKind.DOCUMENT
        assert type_of(None) is None

    def test_compare_numbers_across_int_and_float(self):
        assert compare(1, 1.0) == 0
        assert compare(2, 1.5) == 1
        assert compare(None, 1) is None
        assert compare("a", 1) is None

    def test_values_equal_is_type_strict(self):
        assert not values_equal(1, 1.0)
        assert values_equal([1, "a"], [1, "a"])
        assert values_equal({"a": [1]}, {"a": [1]})

    def test_sort_key_puts_null_first(self):
        values = ["b", None, 3, True, 1.5, "a"]
        assert sorted(values, key=sort_key) == [None, True, 1.5, 3, "a", "b"]

    def test_join_key_matches_numerically_equal_values(self):
        assert join_key(2) == join_key(2.0)
        assert join_key("2") != join_key(2)


class TestRendering:
    def test_render_scalars(self):
        assert render_value(None) == "NULL"
        assert render_value(False) == "FALSE"
        assert render_value(10) == "10"
        assert render_value("it's") == "'it''s'"
        assert render_value(Timestamp.parse("2024-01-01 00:00:00")) == "TIMESTAMP '2024-01-01 00:00:00'"

    def test_render_structures(self):
        assert render_value([1, "a", None]) == "[1, 'a', NULL]"
        assert render_value({"id": "Widget1", "qty": 5}) == "{id: 'Widget1', qty: 5}"

    def test_format_float_never_uses_exponents(self):
        assert format_float(1e-7) == "0.0000001"
        assert format_float(2.0) == "2.0"
        assert format_float(1e20) == "100000000000000000000.0"

    def test_json_round_trip_of_timestamps(self):
        doc = {"when": Timestamp.parse("2024-01-01 12:00:00"), "tags": ["a"]}
        assert to_json(doc) == {"when": {"$date": "2024-01-01 12:00:00"}, "tags": ["a"]}
        assert from_json(to_json(doc)) == doc


class TestSchema:
    def test_duplicate_columns_rejected(self):
        with pytest.raises(ValueError):
            RelSchema((ColumnDef("a", ScalarType.INT), ColumnDef("a", ScalarType.TEXT)))

    def test_empty_schema_rejected(self):
        with pytest.raises(ValueError):
            RelSchema(())

    def test_mname_defaults_to_name(self):
        assert ColumnDef("qty", ScalarType.INT).mname == "qty"
        assert ColumnDef("qty", ScalarType.INT, {"mname": "sells.qty"}).mname == "sells.qty"

    def test_lookup(self):
        schema = RelSchema((ColumnDef("a", ScalarType.INT), ColumnDef("b", ScalarType.TEXT)))
        assert schema.names == ["a", "b"]
        assert schema.index_of("b") == 1
        assert schema.column("c") is None


@pytest.mark.parametrize("kind", ["int", "float", "text", "timestamp"])
def test_compare_is_antisymmetric_and_transitive(kind):
    rng = np.random.default_rng(17)
    if kind == "int":
        values = [int(v) for v in rng.integers(-50, 50, size=40)]
    elif kind == "float":
        values = [float(v) for v in rng.normal(size=40).round(2)]
    elif kind == "text":
        values = ["".join(rng.choice(list("abc"), size=int(rng.integers(0, 4)))) for _ in range(40)]
    else:
        values = [Timestamp(int(v) * 1_000_000) for v in rng.integers(0, 10_000, size=40)]
    for a in values:
        for b in values:
            assert compare(a, b) == -compare(b, a)
    for a in values[:15]:
        for b in values[:15]:
            for c in values[:15]:
                if compare(a, b) <= 0 and compare(b, c) <= 0:
                    assert compare(a, c) <= 0
