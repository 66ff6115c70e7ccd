import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from mlceval.errors import CodeParseError, SchemaError
from mlceval.labelspace import (
    DEFAULT_SCHEMA,
    LabelSchema,
    LabelSet,
    enumerate_powerset,
    format_codes,
    group_presets,
    load_schema,
    match_pattern,
    parse_binary_code,
    parse_code,
    parse_pattern,
    parse_semantic_code,
    parse_textual_code,
)

S = DEFAULT_SCHEMA


def test_default_schema_order():
    assert S.labels == ("SI", "SA", "ES", "NSSI")
    assert S.M == 16


@pytest.mark.parametrize("labels", [(), ("A", "A"), ("A B",), ("A&B",), ("None",), ("+X",), tuple(f"L{i}" for i in range(17))])
def test_schema_rejects(labels):
    with pytest.raises(SchemaError):
        LabelSchema(labels)


def test_schema_case_sensitive():
    assert LabelSchema(("a", "A")).L == 2


def test_load_schema_forms(tmp_path):
    p = tmp_path / "s.json"
    p.write_text(json.dumps({"labels": ["X", "Y"]}))
    assert load_schema(p).labels == ("X", "Y")
    p.write_text(json.dumps(["X", "Y", "Z"]))
    assert load_schema(p).L == 3
    t = tmp_path / "s.txt"
    t.write_text("X\nY\n\n")
    assert load_schema(t).labels == ("X", "Y")


def test_parse_binary_examples():
    assert S.names(parse_binary_code("1-0-1-0")) == ["SI", "ES"]
    assert parse_binary_code("0-0-0-0") == S.empty()
    with pytest.raises(CodeParseError):
        parse_binary_code("1-0-1")
    with pytest.raises(CodeParseError) as exc:
        parse_binary_code("2-0-0-0")
    assert exc.value.position == 0


@pytest.mark.parametrize("names,codes", [
    (["SI", "ES"], ("1-0-1-0", "+SI-SA+ES-NSSI", "SI&ES")),
    ([], ("0-0-0-0", "-SI-SA-ES-NSSI", "None")),
    (["SI", "SA", "ES", "NSSI"], ("1-1-1-1", "+SI+SA+ES+NSSI", "SI&SA&ES&NSSI")),
])
def test_format_codes(names, codes):
    assert format_codes(S.from_names(names)) == codes


@given(st.integers(0, 15))
def test_notation_roundtrip(mask):
    s = LabelSet(mask, 4)
    b, sem, txt = format_codes(s)
    assert parse_binary_code(b) == s
    assert parse_semantic_code(sem) == s
    assert parse_textual_code(txt) == s
    for c in (b, sem, txt):
        assert parse_code(c) == s


@given(st.integers(1, 8).flatmap(lambda L: st.tuples(st.just(L), st.integers(0, (1 << L) - 1))))
def test_bits_roundtrip_any_width(arg):
    L, mask = arg
    s = LabelSet(mask, L)
    assert LabelSet.from_bits(s.bits) == s
    assert s.cardinality == sum(s.bits)
    assert 0 <= s.cardinality <= L


def test_textual_rejects_repeats_and_unknown():
    with pytest.raises(CodeParseError):
        parse_textual_code("SI&SI")
    with pytest.raises(CodeParseError):
        parse_textual_code("SI&XX")


def test_semantic_rejects_wrong_order():
    with pytest.raises(CodeParseError):
        parse_semantic_code("+SA-SI+ES-NSSI")


def test_powerset_l4():
    order = enumerate_powerset(S)
    assert len(order) == 16
    assert order[0] == S.empty()
    assert order[15] == S.full()
    assert len({s.mask for s in order}) == 16


def test_powerset_l2_order():
    schema = LabelSchema(("A", "B"))
    order = enumerate_powerset(schema)
    assert [schema.names(s) for s in order] == [[], ["B"], ["A"], ["A", "B"]]


@pytest.mark.parametrize("L", [1, 2, 3, 4, 5])
def test_supersets_sort_later(L):
    schema = LabelSchema(tuple(f"L{i}" for i in range(L)))
    order = enumerate_powerset(schema)
    for a in order:
        for b in order:
            if a != b and a.issubset(b):
                assert order.index(a) < order.index(b)
    for k, s in enumerate(order):
        assert order.index(s) == k


def test_pattern_examples():
    pat = parse_pattern("0-1-0-*")
    assert match_pattern(pat, S.from_names(["SA"]))
    assert match_pattern(pat, S.from_names(["SA", "NSSI"]))
    assert not match_pattern(pat, S.from_names(["SI", "SA"]))
    order = enumerate_powerset(S)
    assert all(parse_pattern("*-*-*-*").matches(s) for s in order)
    assert sum(parse_pattern("1-1-0-*").matches(s) for s in order) == 2


def test_semantic_pattern_equivalent():
    order = enumerate_powerset(S)
    a, b = parse_pattern("-SI+SA-ES*"), parse_pattern("0-1-0-*")
    assert [a.matches(s) for s in order] == [b.matches(s) for s in order]
    with pytest.raises(CodeParseError):
        parse_pattern("-SI+SA")


@given(st.lists(st.sampled_from("01*"), min_size=4, max_size=4))
def test_pattern_match_count(tokens):
    pat = parse_pattern("-".join(tokens))
    hits = sum(pat.matches(s) for s in enumerate_powerset(S))
    assert hits == 2 ** tokens.count("*")
    assert pat.wildcards == tokens.count("*")


def test_group_presets_partition():
    groups = group_presets(S)
    for s in enumerate_powerset(S):
        assert sum(g.matches(s) for g in groups.values()) == 1
