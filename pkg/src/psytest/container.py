"""Single-file container codec for shipping tests and returning results.

Format (bit-exact): a ZIP archive with no compression, entries in
lexicographic path order, all DOS timestamp fields zeroed, and fixed header
metadata, so identical inputs always produce identical bytes. Layout:

    manifest.json            UTF-8 JSON, keys: package_id, version, kind,
                             created_at, description, entry_checksums
    tests/<test_id>/test.json   canonical test definition (kind=tests)
    assets/<path>            binary assets referenced by test items
    results/records.json     session envelope + response records (kind=results)

Every non-manifest entry is listed in the manifest's entry_checksums map as
path -> lowercase SHA-256 hex. Containers over 64 MiB are rejected at both
build and parse.

The writer emits ZIP bytes directly (the stdlib writer cannot zero timestamp
fields); reading goes through :mod:`zipfile`, which also verifies each
entry's CRC-32.
"""

from __future__ import annotations

import io
import json
import re
import struct
import uuid
import zipfile
import zlib
from dataclasses import dataclass, field
from hashlib import sha256

from .results import ResponseRecord, SessionEnvelope
from .schema import InvalidDefinition, TestDefinition, canonicalize, parse_test_definition

MANIFEST_PATH = "manifest.json"
RECORDS_PATH = "results/records.json"
MAX_CONTAINER_BYTES = 64 * 1024 * 1024

_RFC3339_UTC = re.compile(r"^\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}(\.\d{1,9})?(Z|\+00:00)$")
_ASSET_SEGMENT = re.compile(r"^[A-Za-z0-9._-]+$")


class ContainerError(Exception):
    code = "CONTAINER_ERROR"


class MalformedContainer(ContainerError):
    code = "MALFORMED_CONTAINER"


class MissingManifest(ContainerError):
    code = "MISSING_MANIFEST"


class ChecksumMismatch(ContainerError):
    code = "CHECKSUM_MISMATCH"

    def __init__(self, entry: str, message: str | None = None):
        super().__init__(message or f"checksum mismatch for entry '{entry}'")
        self.entry = entry


class EmptyPackage(ContainerError):
    code = "EMPTY_PACKAGE"


class DuplicateTestId(ContainerError):
    code = "DUPLICATE_TEST_ID"


class DanglingAssetRef(ContainerError):
    code = "DANGLING_ASSET_REF"


class PackageTooLarge(ContainerError):
    code = "PAYLOAD_TOO_LARGE"


class SchemaViolation(ContainerError):
    code = "SCHEMA_VIOLATION"

    def __init__(self, entry: str, report, message: str | None = None):
        super().__init__(message or f"entry '{entry}' failed schema validation")
        self.entry = entry
        self.report = report


@dataclass(frozen=True)
class PackageManifest:
    package_id: str
    version: int
    kind: str  # "tests" | "results"
    created_at: str  # RFC 3339, UTC
    description: str
    entry_checksums: dict[str, str]

    def draft(self) -> "ManifestDraft":
        return ManifestDraft(
            package_id=self.package_id,
            version=self.version,
            created_at=self.created_at,
            description=self.description,
        )


@dataclass(frozen=True)
class ManifestDraft:
    """Manifest identity fields; kind and checksums are filled in at build."""

    package_id: str
    version: int
    created_at: str
    description: str = ""


def new_draft(description: str = "", version: int = 1, created_at: str | None = None) -> ManifestDraft:
    from .results import rfc3339_utc
    import time

    return ManifestDraft(
        package_id=str(uuid.uuid4()),
        version=version,
        created_at=created_at or rfc3339_utc(time.time()),
        description=description,
    )


@dataclass(frozen=True)
class TestPackage:
    manifest: PackageManifest
    tests: tuple[TestDefinition, ...]
    assets: dict[str, bytes] = field(default_factory=dict)


@dataclass(frozen=True)
class ResultPackage:
    manifest: PackageManifest
    session: SessionEnvelope
    records: tuple[ResponseRecord, ...]


@dataclass(frozen=True)
class EntryCheck:
    path: str
    ok: bool
    reason: str = ""


@dataclass(frozen=True)
class IntegrityReport:
    ok: bool
    reason: str | None  # overall failure class, None when ok
    entries: tuple[EntryCheck, ...]


def sha256_hex(data: bytes) -> str:
    return sha256(data).hexdigest()


# --- building ----------------------------------------------------------------


def build_test_package(
    draft: ManifestDraft | PackageManifest,
    tests: list[TestDefinition] | tuple[TestDefinition, ...],
    assets: dict[str, bytes] | None = None,
) -> bytes:
    """Build a kind=tests container. Deterministic: same inputs, same bytes.

    Tests are stored (and therefore presented) in test_id order; authors fix
    battery order by prefixing ids. Every test must already satisfy the
    definition schema and every referenced asset must be supplied.
    """
    assets = dict(assets or {})
    if not tests:
        raise EmptyPackage("a tests package must contain at least one test")
    _validate_draft(draft)

    seen: set[str] = set()
    for test in tests:
        if test.test_id in seen:
            raise DuplicateTestId(f"duplicate test_id '{test.test_id}'")
        seen.add(test.test_id)

    for path in assets:
        _validate_asset_path(path)
    for test in tests:
        for item in test.items:
            if item.asset_ref is not None and item.asset_ref not in assets:
                raise DanglingAssetRef(
                    f"item '{item.item_id}' of test '{test.test_id}' references "
                    f"missing asset '{item.asset_ref}'"
                )

    entries: dict[str, bytes] = {}
    for test in sorted(tests, key=lambda t: t.test_id):
        entries[f"tests/{test.test_id}/test.json"] = canonicalize(test).encode("utf-8")
    for path, data in assets.items():
        entries[f"assets/{path}"] = bytes(data)
    return _seal(draft, "tests", entries)


def build_result_package(
    draft: ManifestDraft | PackageManifest,
    session: SessionEnvelope,
    records: list[ResponseRecord] | tuple[ResponseRecord, ...],
) -> bytes:
    """Build a kind=results container holding one respondent session."""
    _validate_draft(draft)
    _validate_uuid(session.session_id, "session_id")
    ordered = sorted(records, key=lambda r: r.answered_at_client)
    doc = {
        "session": {
            "session_id": session.session_id,
            "project_id": session.project_id,
            "package_id": session.package_id,
            "package_version": session.package_version,
            "started_at_client": session.started_at_client,
            "client_info": dict(session.client_info),
        },
        "records": [
            {
                "test_id": r.test_id,
                "item_id": r.item_id,
                "answer": r.answer,
                "shown_at_client": r.shown_at_client,
                "answered_at_client": r.answered_at_client,
            }
            for r in ordered
        ],
    }
    payload = json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return _seal(draft, "results", {RECORDS_PATH: payload.encode("utf-8")})


def _seal(draft: ManifestDraft | PackageManifest, kind: str, entries: dict[str, bytes]) -> bytes:
    checksums = {path: sha256_hex(data) for path, data in entries.items()}
    manifest = PackageManifest(
        package_id=draft.package_id,
        version=draft.version,
        kind=kind,
        created_at=draft.created_at,
        description=draft.description,
        entry_checksums=checksums,
    )
    entries = dict(entries)
    entries[MANIFEST_PATH] = _manifest_bytes(manifest)
    data = _write_canonical_zip(sorted(entries.items()))
    if len(data) > MAX_CONTAINER_BYTES:
        raise PackageTooLarge(
            f"container is {len(data)} bytes, cap is {MAX_CONTAINER_BYTES}"
        )
    return data


def _manifest_bytes(manifest: PackageManifest) -> bytes:
    doc = {
        "package_id": manifest.package_id,
        "version": manifest.version,
        "kind": manifest.kind,
        "created_at": manifest.created_at,
        "description": manifest.description,
        "entry_checksums": manifest.entry_checksums,
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def _validate_draft(draft: ManifestDraft | PackageManifest) -> None:
    _validate_uuid(draft.package_id, "package_id")
    if isinstance(draft.version, bool) or not isinstance(draft.version, int) or draft.version < 1:
        raise ValueError(f"version must be a positive integer, got {draft.version!r}")
    if not isinstance(draft.created_at, str) or not _RFC3339_UTC.match(draft.created_at):
        raise ValueError(f"created_at must be an RFC 3339 UTC timestamp, got {draft.created_at!r}")
    if not isinstance(draft.description, str):
        raise ValueError("description must be a string")


def _validate_uuid(value: str, what: str) -> None:
    try:
        canonical = str(uuid.UUID(value))
    except (ValueError, AttributeError, TypeError):
        raise ValueError(f"{what} must be a UUID string, got {value!r}") from None
    if canonical != value:
        raise ValueError(f"{what} must be the canonical lowercase UUID form, got {value!r}")


def _validate_asset_path(path: str) -> None:
    if not isinstance(path, str) or not path:
        raise ValueError("asset path must be a non-empty string")
    segments = path.split("/")
    for segment in segments:
        if segment in (".", "..") or not _ASSET_SEGMENT.match(segment):
            raise ValueError(f"asset path {path!r} has an illegal segment {segment!r}")


# --- canonical ZIP writing ----------------------------------------------------

_LOCAL_HEADER = struct.Struct("<IHHHHHIIIHH")
_CENTRAL_HEADER = struct.Struct("<IHHHHHHIIIHHHHHII")
_EOCD = struct.Struct("<IHHHHIIH")


def _write_canonical_zip(entries: list[tuple[str, bytes]]) -> bytes:
    """Stored-only ZIP with zeroed timestamps and pinned header fields."""
    out = io.BytesIO()
    centrals: list[bytes] = []
    for name, data in entries:
        raw_name = name.encode("ascii")
        crc = zlib.crc32(data) & 0xFFFFFFFF
        size = len(data)
        offset = out.tell()
        out.write(_LOCAL_HEADER.pack(0x04034B50, 20, 0, 0, 0, 0, crc, size, size, len(raw_name), 0))
        out.write(raw_name)
        out.write(data)
        centrals.append(
            _CENTRAL_HEADER.pack(
                0x02014B50,
                (3 << 8) | 20,  # made by: unix host, zip 2.0
                20,  # version needed to extract
                0,  # general purpose flags
                0,  # method: stored
                0,  # mod time, zeroed
                0,  # mod date, zeroed
                crc,
                size,
                size,
                len(raw_name),
                0,  # extra length
                0,  # comment length
                0,  # disk number
                0,  # internal attributes
                0o100644 << 16,  # external attributes: regular file, 0644
                offset,
            )
            + raw_name
        )
    central_offset = out.tell()
    for block in centrals:
        out.write(block)
    central_size = out.tell() - central_offset
    out.write(_EOCD.pack(0x06054B50, 0, 0, len(entries), len(entries), central_size, central_offset, 0))
    return out.getvalue()


# --- parsing ------------------------------------------------------------------


def parse_package(data: bytes) -> TestPackage | ResultPackage:
    """Decode a container, verifying every entry checksum against the manifest.

    The reader is lenient about ZIP metadata (any archive zipfile can read is
    accepted) but strict about logical content; verify_integrity additionally
    requires the canonical byte form.
    """
    if not isinstance(data, (bytes, bytearray)):
        raise MalformedContainer(f"expected bytes, got {type(data).__name__}")
    data = bytes(data)
    if len(data) > MAX_CONTAINER_BYTES:
        raise PackageTooLarge(f"container is {len(data)} bytes, cap is {MAX_CONTAINER_BYTES}")
    if not data:
        raise MalformedContainer("empty input")

    manifest, blobs = _read_entries(data)
    if manifest.kind == "tests":
        return _assemble_tests(manifest, blobs)
    return _assemble_results(manifest, blobs)


def _read_entries(data: bytes) -> tuple[PackageManifest, dict[str, bytes]]:
    try:
        zf = zipfile.ZipFile(io.BytesIO(data))
    except (zipfile.BadZipFile, ValueError, OSError) as exc:
        raise MalformedContainer(f"not a readable archive: {exc}") from None
    with zf:
        names = zf.namelist()
        if len(names) != len(set(names)):
            raise MalformedContainer("duplicate entry names")
        if MANIFEST_PATH not in names:
            raise MissingManifest("container has no manifest.json")
        manifest = _parse_manifest(_read_entry(zf, MANIFEST_PATH))
        listed = set(manifest.entry_checksums)
        actual = set(names) - {MANIFEST_PATH}
        for extra in sorted(actual - listed):
            raise MalformedContainer(f"entry not listed in manifest: '{extra}'")
        for missing in sorted(listed - actual):
            raise MalformedContainer(f"manifest lists missing entry: '{missing}'")
        blobs: dict[str, bytes] = {}
        for name in sorted(actual):
            raw = _read_entry(zf, name)
            if sha256_hex(raw) != manifest.entry_checksums[name]:
                raise ChecksumMismatch(name)
            blobs[name] = raw
    return manifest, blobs


def _read_entry(zf: zipfile.ZipFile, name: str) -> bytes:
    try:
        return zf.read(name)
    except zipfile.BadZipFile as exc:
        # zipfile raises here on CRC-32 mismatch of the entry data
        raise ChecksumMismatch(name, f"entry '{name}' is corrupt: {exc}") from None
    except (KeyError, ValueError, OSError, zlib.error,
            RuntimeError, NotImplementedError) as exc:
        # RuntimeError/NotImplementedError: encrypted or unsupported-method
        # entries, which a canonical container never contains
        raise MalformedContainer(f"cannot read entry '{name}': {exc}") from None


def _parse_manifest(raw: bytes) -> PackageManifest:
    try:
        doc = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedContainer(f"manifest.json is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise MalformedContainer("manifest.json must be a JSON object")
    expected = {"package_id", "version", "kind", "created_at", "description", "entry_checksums"}
    if set(doc) != expected:
        raise MalformedContainer(
            f"manifest keys must be exactly {sorted(expected)}, got {sorted(doc)}"
        )
    if doc["kind"] not in ("tests", "results"):
        raise MalformedContainer(f"unknown package kind {doc['kind']!r}")
    checksums = doc["entry_checksums"]
    if not isinstance(checksums, dict):
        raise MalformedContainer("entry_checksums must be an object")
    for path, digest in checksums.items():
        if not isinstance(digest, str) or not re.fullmatch(r"[0-9a-f]{64}", digest):
            raise MalformedContainer(f"entry_checksums['{path}'] is not a SHA-256 hex digest")
    try:
        manifest = PackageManifest(
            package_id=doc["package_id"],
            version=doc["version"],
            kind=doc["kind"],
            created_at=doc["created_at"],
            description=doc["description"],
            entry_checksums=dict(checksums),
        )
        _validate_draft(manifest)
    except ValueError as exc:
        raise MalformedContainer(f"invalid manifest: {exc}") from None
    return manifest


_TEST_ENTRY = re.compile(r"^tests/([A-Za-z0-9_-]+)/test\.json$")


def _assemble_tests(manifest: PackageManifest, blobs: dict[str, bytes]) -> TestPackage:
    tests: list[TestDefinition] = []
    assets: dict[str, bytes] = {}
    for name in sorted(blobs):
        if name.startswith("assets/"):
            path = name[len("assets/"):]
            try:
                _validate_asset_path(path)
            except ValueError as exc:
                raise MalformedContainer(str(exc)) from None
            assets[path] = blobs[name]
            continue
        match = _TEST_ENTRY.match(name)
        if not match:
            raise MalformedContainer(f"unexpected entry in tests package: '{name}'")
        try:
            test = parse_test_definition(blobs[name])
        except InvalidDefinition as exc:
            raise SchemaViolation(name, exc.report, f"entry '{name}': {exc}") from None
        if test.test_id != match.group(1):
            raise MalformedContainer(
                f"entry '{name}' holds test_id '{test.test_id}', path disagrees"
            )
        tests.append(test)

    if not tests:
        raise EmptyPackage("tests package contains no tests")
    seen: set[str] = set()
    for test in tests:
        if test.test_id in seen:
            raise DuplicateTestId(f"duplicate test_id '{test.test_id}'")
        seen.add(test.test_id)
    for test in tests:
        for item in test.items:
            if item.asset_ref is not None and item.asset_ref not in assets:
                raise DanglingAssetRef(
                    f"item '{item.item_id}' of test '{test.test_id}' references "
                    f"missing asset '{item.asset_ref}'"
                )
    return TestPackage(manifest=manifest, tests=tuple(tests), assets=assets)


def _assemble_results(manifest: PackageManifest, blobs: dict[str, bytes]) -> ResultPackage:
    if set(blobs) != {RECORDS_PATH}:
        raise MalformedContainer(
            f"results package entries must be exactly ['{RECORDS_PATH}'], got {sorted(blobs)}"
        )
    try:
        doc = json.loads(blobs[RECORDS_PATH].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedContainer(f"records.json is not valid JSON: {exc}") from None
    if not isinstance(doc, dict) or set(doc) != {"session", "records"}:
        raise MalformedContainer("records.json must be an object with keys session, records")

    session = _parse_session(doc["session"])
    raw_records = doc["records"]
    if not isinstance(raw_records, list):
        raise MalformedContainer("records must be an array")
    records: list[ResponseRecord] = []
    previous = None
    for i, raw in enumerate(raw_records):
        record = _parse_record(raw, i)
        if previous is not None and record.answered_at_client < previous:
            raise MalformedContainer(
                f"records[{i}] is out of order: answered_at_client decreased"
            )
        previous = record.answered_at_client
        records.append(record)
    return ResultPackage(manifest=manifest, session=session, records=tuple(records))


def _parse_session(raw) -> SessionEnvelope:
    expected = {
        "session_id", "project_id", "package_id",
        "package_version", "started_at_client", "client_info",
    }
    if not isinstance(raw, dict) or set(raw) != expected:
        raise MalformedContainer(f"session must be an object with keys {sorted(expected)}")
    for key in ("session_id", "project_id", "package_id", "started_at_client"):
        if not isinstance(raw[key], str) or not raw[key]:
            raise MalformedContainer(f"session.{key} must be a non-empty string")
    version = raw["package_version"]
    if isinstance(version, bool) or not isinstance(version, int) or version < 1:
        raise MalformedContainer("session.package_version must be a positive integer")
    info = raw["client_info"]
    if not isinstance(info, dict) or not all(
        isinstance(k, str) and isinstance(v, str) for k, v in info.items()
    ):
        raise MalformedContainer("session.client_info must be a string-to-string map")
    try:
        _validate_uuid(raw["session_id"], "session_id")
    except ValueError as exc:
        raise MalformedContainer(str(exc)) from None
    return SessionEnvelope(
        session_id=raw["session_id"],
        project_id=raw["project_id"],
        package_id=raw["package_id"],
        package_version=version,
        started_at_client=raw["started_at_client"],
        client_info=dict(info),
    )


def _parse_record(raw, index: int) -> ResponseRecord:
    expected = {"test_id", "item_id", "answer", "shown_at_client", "answered_at_client"}
    if not isinstance(raw, dict) or set(raw) != expected:
        raise MalformedContainer(f"records[{index}] must be an object with keys {sorted(expected)}")
    for key in ("test_id", "item_id"):
        if not isinstance(raw[key], str) or not raw[key]:
            raise MalformedContainer(f"records[{index}].{key} must be a non-empty string")
    for key in ("shown_at_client", "answered_at_client"):
        value = raw[key]
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise MalformedContainer(f"records[{index}].{key} must be a number")
    return ResponseRecord(
        test_id=raw["test_id"],
        item_id=raw["item_id"],
        answer=raw["answer"],
        shown_at_client=raw["shown_at_client"],
        answered_at_client=raw["answered_at_client"],
    )


# --- integrity ---------------------------------------------------------------


def verify_integrity(data: bytes) -> IntegrityReport:
    """Per-entry pass/fail plus an overall verdict. Pure; never raises.

    Overall pass requires every entry checksum to verify, the logical content
    to parse, and the container to be in canonical byte form (rebuilding the
    parsed content reproduces the input exactly). Combined with per-entry
    CRC-32 and SHA-256, any single-byte mutation is detected.
    """
    if not isinstance(data, (bytes, bytearray)):
        return IntegrityReport(ok=False, reason="MalformedContainer", entries=())
    data = bytes(data)
    if len(data) == 0:
        return IntegrityReport(ok=False, reason="MissingManifest", entries=())
    if len(data) > MAX_CONTAINER_BYTES:
        return IntegrityReport(ok=False, reason="PackageTooLarge", entries=())
    try:
        zf = zipfile.ZipFile(io.BytesIO(data))
    except (zipfile.BadZipFile, ValueError, OSError):
        return IntegrityReport(ok=False, reason="MalformedContainer", entries=())

    entries: list[EntryCheck] = []
    with zf:
        names = zf.namelist()
        if len(names) != len(set(names)):
            return IntegrityReport(ok=False, reason="MalformedContainer", entries=())
        if MANIFEST_PATH not in names:
            return IntegrityReport(ok=False, reason="MissingManifest", entries=())
        try:
            manifest = _parse_manifest(_read_entry(zf, MANIFEST_PATH))
            entries.append(EntryCheck(MANIFEST_PATH, True))
        except ChecksumMismatch:
            entries.append(EntryCheck(MANIFEST_PATH, False, "entry data corrupt (CRC-32)"))
            return IntegrityReport(ok=False, reason="ChecksumMismatch", entries=tuple(entries))
        except (MalformedContainer, ContainerError):
            entries.append(EntryCheck(MANIFEST_PATH, False, "manifest unreadable"))
            return IntegrityReport(ok=False, reason="MalformedContainer", entries=tuple(entries))

        listed = set(manifest.entry_checksums)
        actual = set(names) - {MANIFEST_PATH}
        all_ok = True
        for name in sorted(listed | actual):
            if name not in actual:
                entries.append(EntryCheck(name, False, "missing from container"))
                all_ok = False
            elif name not in listed:
                entries.append(EntryCheck(name, False, "not listed in manifest"))
                all_ok = False
            else:
                try:
                    raw = _read_entry(zf, name)
                except ChecksumMismatch:
                    entries.append(EntryCheck(name, False, "entry data corrupt (CRC-32)"))
                    all_ok = False
                    continue
                except ContainerError:
                    entries.append(EntryCheck(name, False, "unreadable"))
                    all_ok = False
                    continue
                if sha256_hex(raw) != manifest.entry_checksums[name]:
                    entries.append(EntryCheck(name, False, "SHA-256 mismatch"))
                    all_ok = False
                else:
                    entries.append(EntryCheck(name, True))

    if not all_ok:
        return IntegrityReport(ok=False, reason="ChecksumMismatch", entries=tuple(entries))

    try:
        parsed = parse_package(data)
    except ContainerError as exc:
        return IntegrityReport(ok=False, reason=type(exc).__name__, entries=tuple(entries))

    if isinstance(parsed, TestPackage):
        rebuilt = build_test_package(parsed.manifest.draft(), list(parsed.tests), parsed.assets)
    else:
        rebuilt = build_result_package(parsed.manifest.draft(), parsed.session, list(parsed.records))
    if rebuilt != data:
        return IntegrityReport(ok=False, reason="NotCanonical", entries=tuple(entries))
    return IntegrityReport(ok=True, reason=None, entries=tuple(entries))
