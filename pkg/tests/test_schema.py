from __future__ import annotations

import json
from pathlib import Path

import jsonschema
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from psytest.schema import (
    InvalidDefinition,
    SCHEMA_ID,
    canonicalize,
    parse_test_definition,
    schema_document,
    validate_test,
)

CORPUS = Path(__file__).parent / "fixtures" / "corpus"
GOLDEN = Path(__file__).parent / "fixtures" / "golden_canonical.json"


def reference_validator() -> jsonschema.Draft7Validator:
    return jsonschema.Draft7Validator(json.loads(schema_document()))


def test_schema_document_is_stable():
    assert schema_document().encode("utf-8") == schema_document().encode("utf-8")
    assert schema_document() is not None


def test_schema_id_present_and_versioned():
    doc = json.loads(schema_document())
    assert doc["$id"] == SCHEMA_ID
    assert doc["$id"].endswith(":v1")
    assert doc["$schema"] == "http://json-schema.org/draft-07/schema#"


def test_schema_is_itself_a_wellformed_schema():
    # oracle: the reference implementation's own meta-schema check
    jsonschema.Draft7Validator.check_schema(json.loads(schema_document()))


def test_minimal_test_is_valid():
    doc = {"test_id": "m", "title": "M", "items": [
        {"item_id": "i1", "kind": "free_text", "prompt": "Hi"}]}
    report = validate_test(json.dumps(doc))
    assert report.valid
    assert report.violations == ()


def test_empty_items_invalid_at_items_path():
    doc = {"test_id": "m", "title": "M", "items": []}
    report = validate_test(json.dumps(doc))
    assert not report.valid
    assert any(v.path == "/items" and v.rule == "minItems" for v in report.violations)


@pytest.mark.parametrize("path", sorted(CORPUS.glob("*.json")), ids=lambda p: p.stem)
def test_corpus_agrees_with_reference_validator(path):
    text = path.read_text("utf-8")
    mine = validate_test(text).valid
    theirs = reference_validator().is_valid(json.loads(text))
    assert mine == theirs, f"{path.name}: psytest={mine} reference={theirs}"
    assert mine == path.name.startswith("valid")


def test_corpus_has_expected_shape():
    docs = sorted(CORPUS.glob("*.json"))
    invalid = [p for p in docs if p.name.startswith("invalid")]
    assert len(docs) == 30
    assert len(invalid) >= 10


def test_not_json_reported_as_root_violation_not_exception():
    report = validate_test(b"this is } not json")
    assert not report.valid
    assert report.violations[0].path == ""
    assert report.violations[0].rule == "json"


@settings(max_examples=200, deadline=None)
@given(st.binary(max_size=200))
def test_validate_test_total_on_arbitrary_bytes(data):
    report = validate_test(data)
    assert report.valid == (len(report.violations) == 0)


@settings(max_examples=100, deadline=None)
@given(st.text(max_size=200))
def test_validate_test_total_on_arbitrary_text(text):
    validate_test(text)


def test_monotonicity_fixing_one_violation_removes_exactly_it():
    broken = {
        "test_id": "t", "title": "T",
        "items": [
            {"item_id": "i1", "kind": "likert", "prompt": "Rate.", "options": ["Only"]},
            {"item_id": "i2", "kind": "essay", "prompt": "Write."},
        ],
    }
    before = {(v.path, v.rule) for v in validate_test(json.dumps(broken)).violations}
    repaired = json.loads(json.dumps(broken))
    repaired["items"][0]["options"] = ["Low", "High"]
    after = {(v.path, v.rule) for v in validate_test(json.dumps(repaired)).violations}
    fixed = before - after
    assert fixed == {("/items/0/options", "minItems")}
    assert after < before  # no spurious new violations


def test_canonicalize_ignores_input_key_order():
    a = '{"test_id":"t","title":"T","items":[{"item_id":"i1","kind":"free_text","prompt":"P"}]}'
    b = '{"items":[{"prompt":"P","kind":"free_text","item_id":"i1"}],"title":"T","test_id":"t"}'
    assert canonicalize(parse_test_definition(a)) == canonicalize(parse_test_definition(b))


@pytest.mark.parametrize("path", sorted(CORPUS.glob("valid_*.json")), ids=lambda p: p.stem)
def test_canonicalize_fixed_point_over_corpus(path):
    first = canonicalize(parse_test_definition(path.read_text("utf-8")))
    second = canonicalize(parse_test_definition(first))
    assert first == second


def test_canonical_golden_file():
    source = (CORPUS / "valid_13_mixed_kinds.json").read_text("utf-8")
    assert canonicalize(parse_test_definition(source)) == GOLDEN.read_text("utf-8").rstrip("\n")


def test_parse_rejects_duplicate_item_ids():
    doc = {"test_id": "t", "title": "T", "items": [
        {"item_id": "i1", "kind": "free_text", "prompt": "A"},
        {"item_id": "i1", "kind": "free_text", "prompt": "B"}]}
    with pytest.raises(InvalidDefinition, match="duplicate item_id"):
        parse_test_definition(json.dumps(doc))


def test_parse_invalid_carries_report():
    with pytest.raises(InvalidDefinition) as err:
        parse_test_definition('{"title": "missing everything"}')
    assert err.value.report is not None
    assert not err.value.report.valid


def test_violation_reports_name_schema_rules():
    doc = {"test_id": "bad id!", "title": "", "items": [
        {"item_id": "i1", "kind": "free_text", "prompt": "P", "extra": 1}]}
    report = validate_test(json.dumps(doc))
    rules = {(v.path, v.rule) for v in report.violations}
    assert ("/test_id", "pattern") in rules
    assert ("/title", "minLength") in rules
    assert ("/items/0/extra", "additionalProperties") in rules
