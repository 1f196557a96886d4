from __future__ import annotations

import hashlib
import io
import json
import zipfile

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import fixed_draft, make_records, make_session, simple_package, simple_test
from psytest.container import (
    ChecksumMismatch,
    DanglingAssetRef,
    DuplicateTestId,
    EmptyPackage,
    MalformedContainer,
    ManifestDraft,
    MissingManifest,
    PackageTooLarge,
    ResultPackage,
    SchemaViolation,
    TestPackage,
    MAX_CONTAINER_BYTES,
    build_result_package,
    build_test_package,
    parse_package,
    verify_integrity,
)
from psytest.schema import Item, TestDefinition, canonicalize


def test_minimal_legal_package_round_trips():
    data = simple_package(tests=1)
    parsed = parse_package(data)
    assert isinstance(parsed, TestPackage)
    assert parsed.manifest.kind == "tests"
    assert [t.test_id for t in parsed.tests] == ["t1"]


def test_zero_tests_raises_empty_package():
    with pytest.raises(EmptyPackage):
        build_test_package(fixed_draft(), [], {})


def test_round_trip_field_for_field():
    asset = b"\x89PNG fake image bytes"
    tests = [simple_test("alpha", items=2, with_asset="img/shape.png"), simple_test("beta")]
    data = build_test_package(fixed_draft("battery"), tests, {"img/shape.png": asset})
    parsed = parse_package(data)
    assert [t.test_id for t in parsed.tests] == ["alpha", "beta"]
    assert parsed.tests[0] == tests[0]
    assert parsed.tests[1] == tests[1]
    assert parsed.assets == {"img/shape.png": asset}
    assert parsed.manifest.description == "battery"
    rebuilt = build_test_package(parsed.manifest.draft(), list(parsed.tests), parsed.assets)
    assert rebuilt == data


def test_determinism_same_inputs_identical_bytes():
    tests = [simple_test("a"), simple_test("b")]
    assets = {"x.bin": b"12345", "dir/y.bin": b"67890"}
    one = build_test_package(fixed_draft(), tests, assets)
    two = build_test_package(fixed_draft(), list(reversed(tests)), dict(reversed(assets.items())))
    assert one == two


def independent_archive_digest(draft, tests, assets) -> str:
    """Oracle: lay out the same entries independently and hash the logical
    content (path, sha256) pairs in sorted order plus the manifest."""
    entries: dict[str, bytes] = {}
    for test in tests:
        entries[f"tests/{test.test_id}/test.json"] = canonicalize(test).encode()
    for path, blob in assets.items():
        entries[f"assets/{path}"] = blob
    manifest = {
        "package_id": draft.package_id,
        "version": draft.version,
        "kind": "tests",
        "created_at": draft.created_at,
        "description": draft.description,
        "entry_checksums": {p: hashlib.sha256(b).hexdigest() for p, b in entries.items()},
    }
    entries["manifest.json"] = json.dumps(
        manifest, sort_keys=True, separators=(",", ":"), ensure_ascii=False
    ).encode()
    digest = hashlib.sha256()
    for path in sorted(entries):
        digest.update(path.encode())
        digest.update(hashlib.sha256(entries[path]).digest())
    return digest.hexdigest()


def content_digest(data: bytes) -> str:
    """Same digest recomputed from the produced container's actual entries."""
    digest = hashlib.sha256()
    with zipfile.ZipFile(io.BytesIO(data)) as zf:
        for name in sorted(zf.namelist()):
            digest.update(name.encode())
            digest.update(hashlib.sha256(zf.read(name)).digest())
    return digest.hexdigest()


def test_battery_matches_independent_archive_and_hash_oracle():
    tests = [simple_test("one"), simple_test("two", items=3), simple_test("three", items=2)]
    assets = {"img/a.png": b"A" * 64, "img/b.png": b"B" * 64}
    draft = fixed_draft("three tests, two assets")
    data = build_test_package(draft, tests, assets)
    assert content_digest(data) == independent_archive_digest(draft, tests, assets)
    # entry order inside the archive is lexicographic
    with zipfile.ZipFile(io.BytesIO(data)) as zf:
        names = zf.namelist()
    assert names == sorted(names)


def test_parse_detects_flipped_byte_and_names_entry():
    asset = b"stable-asset-content-123456"
    data = build_test_package(fixed_draft(), [simple_test("t1")], {"blob.bin": asset})
    offset = data.find(asset)
    assert offset > 0
    mutated = bytearray(data)
    mutated[offset + 3] ^= 0x01
    with pytest.raises(ChecksumMismatch) as err:
        parse_package(bytes(mutated))
    assert err.value.entry == "assets/blob.bin"


def test_parse_truncated_stream_is_malformed():
    data = simple_package()
    with pytest.raises(MalformedContainer):
        parse_package(data[: len(data) // 2])


def test_parse_rejects_oversized_container():
    with pytest.raises(PackageTooLarge):
        parse_package(b"\x00" * (MAX_CONTAINER_BYTES + 1))


def test_build_rejects_oversized_container():
    big = {"big.bin": b"\x00" * (MAX_CONTAINER_BYTES + 1)}
    with pytest.raises(PackageTooLarge):
        build_test_package(fixed_draft(), [simple_test()], big)


def test_build_rejects_duplicate_test_ids():
    with pytest.raises(DuplicateTestId):
        build_test_package(fixed_draft(), [simple_test("same"), simple_test("same")], {})


def test_build_rejects_dangling_asset_ref():
    test = simple_test("t1", with_asset="missing/file.png")
    with pytest.raises(DanglingAssetRef):
        build_test_package(fixed_draft(), [test], {})


def test_parse_rejects_schema_invalid_test_entry():
    data = simple_package()
    # rebuild the archive with the test entry replaced by an invalid document
    with zipfile.ZipFile(io.BytesIO(data)) as zf:
        entries = {n: zf.read(n) for n in zf.namelist()}
    bad_doc = b'{"test_id":"t1","title":"T","items":[]}'
    entries["tests/t1/test.json"] = bad_doc
    manifest = json.loads(entries["manifest.json"])
    manifest["entry_checksums"]["tests/t1/test.json"] = hashlib.sha256(bad_doc).hexdigest()
    entries["manifest.json"] = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode()
    out = io.BytesIO()
    with zipfile.ZipFile(out, "w", zipfile.ZIP_STORED) as zf:
        for name in sorted(entries):
            zf.writestr(name, entries[name])
    with pytest.raises(SchemaViolation) as err:
        parse_package(out.getvalue())
    assert err.value.entry == "tests/t1/test.json"
    assert any(v.path == "/items" for v in err.value.report.violations)


def test_parse_rejects_foreign_zero_test_container():
    # hand-made archive claiming kind=tests with no test entries
    manifest = {
        "package_id": "00000000-0000-4000-8000-00000000aaaa",
        "version": 1,
        "kind": "tests",
        "created_at": "2026-08-08T12:00:00Z",
        "description": "",
        "entry_checksums": {},
    }
    out = io.BytesIO()
    with zipfile.ZipFile(out, "w", zipfile.ZIP_STORED) as zf:
        zf.writestr("manifest.json", json.dumps(manifest))
    with pytest.raises(EmptyPackage):
        parse_package(out.getvalue())


def test_missing_manifest_detected():
    out = io.BytesIO()
    with zipfile.ZipFile(out, "w", zipfile.ZIP_STORED) as zf:
        zf.writestr("tests/t1/test.json", b"{}")
    with pytest.raises(MissingManifest):
        parse_package(out.getvalue())


def test_entry_not_in_manifest_rejected():
    data = simple_package()
    with zipfile.ZipFile(io.BytesIO(data)) as zf:
        entries = {n: zf.read(n) for n in zf.namelist()}
    entries["extra.bin"] = b"stowaway"
    out = io.BytesIO()
    with zipfile.ZipFile(out, "w", zipfile.ZIP_STORED) as zf:
        for name in sorted(entries):
            zf.writestr(name, entries[name])
    with pytest.raises(MalformedContainer, match="not listed in manifest"):
        parse_package(out.getvalue())


# --- verify_integrity ---------------------------------------------------------


def test_verify_pristine_fixture_all_entries_pass():
    data = build_test_package(fixed_draft(), [simple_test("t1")], {"a.bin": b"AAAA"})
    report = verify_integrity(data)
    assert report.ok and report.reason is None
    assert all(e.ok for e in report.entries)
    assert {e.path for e in report.entries} == {
        "manifest.json", "tests/t1/test.json", "assets/a.bin"}


def test_verify_corrupted_entry_fails_only_that_entry():
    blob = b"corruptible-asset-bytes-0123456789"
    data = build_test_package(fixed_draft(), [simple_test("t1")], {"a.bin": blob})
    mutated = bytearray(data)
    mutated[data.find(blob) + 5] ^= 0xFF
    report = verify_integrity(bytes(mutated))
    assert not report.ok
    by_path = {e.path: e.ok for e in report.entries}
    assert by_path["assets/a.bin"] is False
    assert by_path["tests/t1/test.json"] is True
    assert by_path["manifest.json"] is True


def test_verify_empty_stream_reports_missing_manifest():
    report = verify_integrity(b"")
    assert not report.ok
    assert report.reason == "MissingManifest"


def test_verify_is_pure_and_does_not_mutate_input():
    data = bytearray(simple_package())
    snapshot = bytes(data)
    verify_integrity(bytes(data))
    assert bytes(data) == snapshot


def test_every_single_byte_mutation_is_detected():
    data = build_test_package(fixed_draft(), [simple_test("t1")], {"a.bin": b"0123456789"})
    undetected = []
    for offset in range(len(data)):
        mutated = bytearray(data)
        mutated[offset] ^= 0x01
        if verify_integrity(bytes(mutated)).ok:
            undetected.append(offset)
    assert undetected == []


# --- result packages ------------------------------------------------------------


def result_fixture() -> bytes:
    session = make_session(
        "11111111-1111-4111-8111-111111111111",
        "00000000-0000-4000-8000-000000000001",
        session_id="22222222-2222-4222-8222-222222222222",
    )
    records = make_records([
        ("t1", "i1", 2, 1000, 1350),
        ("t1", "i2", "free text, with comma", 1400, 2000.5),
    ])
    return build_result_package(fixed_draft(), session, records)


def test_result_package_round_trips():
    data = result_fixture()
    parsed = parse_package(data)
    assert isinstance(parsed, ResultPackage)
    assert parsed.manifest.kind == "results"
    assert parsed.session.session_id == "22222222-2222-4222-8222-222222222222"
    assert len(parsed.records) == 2
    assert parsed.records[0].latency_ms == 350
    rebuilt = build_result_package(parsed.manifest.draft(), parsed.session, list(parsed.records))
    assert rebuilt == data
    assert verify_integrity(data).ok


def test_result_records_ordered_by_client_timestamp():
    data = result_fixture()
    parsed = parse_package(data)
    answered = [r.answered_at_client for r in parsed.records]
    assert answered == sorted(answered)


def test_result_package_with_extra_entry_rejected():
    data = result_fixture()
    with zipfile.ZipFile(io.BytesIO(data)) as zf:
        entries = {n: zf.read(n) for n in zf.namelist()}
    manifest = json.loads(entries["manifest.json"])
    manifest["entry_checksums"]["assets/smuggled.bin"] = hashlib.sha256(b"x").hexdigest()
    entries["assets/smuggled.bin"] = b"x"
    entries["manifest.json"] = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode()
    out = io.BytesIO()
    with zipfile.ZipFile(out, "w", zipfile.ZIP_STORED) as zf:
        for name in sorted(entries):
            zf.writestr(name, entries[name])
    with pytest.raises(MalformedContainer):
        parse_package(out.getvalue())


# --- randomized round-trip property ----------------------------------------------

test_ids = st.from_regex(r"[a-z][a-z0-9_-]{0,15}", fullmatch=True)
asset_paths = st.from_regex(r"[a-z][a-z0-9_.-]{0,10}(/[a-z][a-z0-9_.-]{0,10}){0,2}", fullmatch=True)


@st.composite
def generated_packages(draw):
    n_tests = draw(st.integers(min_value=1, max_value=4))
    ids = draw(st.lists(test_ids, min_size=n_tests, max_size=n_tests, unique=True))
    assets = draw(
        st.dictionaries(asset_paths, st.binary(max_size=64), max_size=3)
    )
    tests = []
    for tid in ids:
        n_items = draw(st.integers(min_value=1, max_value=4))
        items = []
        for j in range(n_items):
            kind = draw(st.sampled_from(["free_text", "likert", "single_choice", "timed_stimulus"]))
            options: tuple[str, ...] = ()
            if kind in ("likert", "single_choice"):
                k = draw(st.integers(min_value=2, max_value=5))
                options = tuple(f"opt{o}" for o in range(k))
            asset_ref = None
            if kind == "timed_stimulus" and assets and draw(st.booleans()):
                asset_ref = draw(st.sampled_from(sorted(assets)))
            items.append(
                Item(
                    item_id=f"item{j}",
                    kind=kind,
                    prompt=draw(st.text(min_size=1, max_size=30)),
                    options=options,
                    asset_ref=asset_ref,
                    capture_latency=draw(st.booleans()),
                )
            )
        tests.append(
            TestDefinition(
                test_id=tid,
                title=draw(st.text(min_size=1, max_size=20)),
                items=tuple(items),
                description=draw(st.text(max_size=20)),
                randomize_items=draw(st.booleans()),
            )
        )
    tests.sort(key=lambda t: t.test_id)
    return fixed_draft(), tests, assets


@settings(max_examples=60, deadline=None)
@given(generated_packages())
def test_random_packages_round_trip_byte_identically(package):
    draft, tests, assets = package
    data = build_test_package(draft, tests, assets)
    parsed = parse_package(data)
    assert list(parsed.tests) == tests
    assert parsed.assets == assets
    rebuilt = build_test_package(parsed.manifest.draft(), list(parsed.tests), parsed.assets)
    assert rebuilt == data
    assert verify_integrity(data).ok
