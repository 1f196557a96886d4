"""Guards the cross-language golden fixtures shared with the browser player.

The player's container writer must produce byte-identical output to this
package for identical inputs; these tests pin the Python side of that
contract to the committed fixture bytes.
"""

from __future__ import annotations

import json
from pathlib import Path

from psytest.container import (
    ManifestDraft,
    build_result_package,
    build_test_package,
    parse_package,
    verify_integrity,
)
from psytest.demo import demo_tests
from psytest.results import ResponseRecord, SessionEnvelope

FIXTURES = Path(__file__).parent.parent / "frontend" / "test-fixtures"


def load_fixture() -> dict:
    return json.loads((FIXTURES / "fixture.json").read_text("utf-8"))


def test_demo_package_fixture_is_reproducible():
    fixture = load_fixture()
    built = build_test_package(ManifestDraft(**fixture["demo_draft"]), demo_tests(), {})
    assert built == (FIXTURES / "demo.pkg").read_bytes()
    assert verify_integrity(built).ok


def test_result_golden_fixture_is_reproducible():
    fixture = load_fixture()["result"]
    session = SessionEnvelope(**fixture["session"])
    records = [ResponseRecord(**r) for r in fixture["records"]]
    built = build_result_package(ManifestDraft(**fixture["draft"]), session, records)
    golden = (FIXTURES / "result-golden.pkg").read_bytes()
    assert built == golden
    parsed = parse_package(golden)
    assert parsed.session.session_id == fixture["session"]["session_id"]
    assert len(parsed.records) == 3
    assert verify_integrity(golden).ok
