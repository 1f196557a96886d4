"""Result ingestion: idempotent acceptance, client-time normalization, CSV export.

Latencies are taken verbatim from the client's monotonic deltas and are never
recomputed from wall clocks, so they are invariant under any client/server
clock skew. The only wall-clock-derived field is the best-effort approximate
absolute answer time, flagged as such.
"""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable

if TYPE_CHECKING:
    from .container import ResultPackage
    from .store import Store


class VersionMismatch(Exception):
    """Result package does not match the package attached to the project."""

    code = "VERSION_MISMATCH"


@dataclass(frozen=True)
class SessionEnvelope:
    session_id: str
    project_id: str
    package_id: str
    package_version: int
    started_at_client: str
    client_info: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class ResponseRecord:
    test_id: str
    item_id: str
    answer: object
    shown_at_client: float
    answered_at_client: float

    @property
    def latency_ms(self) -> float:
        return self.answered_at_client - self.shown_at_client


@dataclass(frozen=True)
class RejectedRecord:
    index: int
    reason: str


@dataclass(frozen=True)
class IngestReport:
    accepted: int
    duplicate: bool
    rejected: tuple[RejectedRecord, ...]
    server_received_at: str

    def to_json(self) -> dict:
        return {
            "accepted": self.accepted,
            "duplicate": self.duplicate,
            "rejected": [{"index": r.index, "reason": r.reason} for r in self.rejected],
            "server_received_at": self.server_received_at,
        }


@dataclass(frozen=True)
class NormalizedRecord:
    index: int  # position in the submitted package
    record: ResponseRecord
    latency_ms: float
    answered_at_server_approx: str  # reconstructed absolute time, approximate


def rfc3339_utc(epoch_seconds: float) -> str:
    base = time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime(epoch_seconds))
    return base + "Z"


def normalize_timing(
    records: list[ResponseRecord], server_received_at: float
) -> tuple[list[NormalizedRecord], list[RejectedRecord]]:
    """Derive latencies and approximate absolute times for a session's records.

    Latency is the client monotonic delta, verbatim. The absolute answer time
    is reconstructed by anchoring the last client timestamp to the server
    receive time; it is metadata only. Records with answered < shown or
    negative timestamps are rejected individually.
    """
    accepted: list[NormalizedRecord] = []
    rejected: list[RejectedRecord] = []
    session_duration = max((r.answered_at_client for r in records), default=0.0)
    for index, record in enumerate(records):
        if record.shown_at_client < 0 or record.answered_at_client < 0:
            rejected.append(RejectedRecord(index, "NegativeTimestamp"))
            continue
        if record.answered_at_client < record.shown_at_client:
            rejected.append(RejectedRecord(index, "NegativeLatency"))
            continue
        approx_epoch = server_received_at - (session_duration - record.answered_at_client) / 1000.0
        accepted.append(
            NormalizedRecord(
                index=index,
                record=record,
                latency_ms=record.answered_at_client - record.shown_at_client,
                answered_at_server_approx=rfc3339_utc(approx_epoch),
            )
        )
    return accepted, rejected


def ingest(
    store: "Store",
    project: dict,
    package: "ResultPackage",
    clock: Callable[[], float] = time.time,
) -> IngestReport:
    """Store one respondent session idempotently.

    The idempotency key is (project_id, session_id): the first ingest stores
    all valid records, any re-ingest of the same key is a no-op reporting
    duplicate=true. Records referencing unknown items are rejected one by
    one, never fatally.
    """
    session = package.session
    received_at = rfc3339_utc(clock())

    if project.get("package_id") != session.package_id:
        raise VersionMismatch(
            f"result package targets package {session.package_id}, "
            f"project has {project.get('package_id')}"
        )
    if project.get("package_version") != session.package_version:
        raise VersionMismatch(
            f"result package version {session.package_version} does not match "
            f"attached package version {project.get('package_version')}"
        )

    known_items = _known_items(store, project)
    normalized, rejected = normalize_timing(list(package.records), clock())
    kept: list[NormalizedRecord] = []
    for norm in normalized:
        record = norm.record
        if (record.test_id, record.item_id) not in known_items:
            rejected.append(RejectedRecord(norm.index, "UnknownItem"))
        else:
            kept.append(norm)
    rejected.sort(key=lambda r: r.index)

    session_key = f"{session.project_id}/{session.session_id}"
    session_doc = {
        "session_id": session.session_id,
        "project_id": session.project_id,
        "package_id": session.package_id,
        "package_version": session.package_version,
        "started_at_client": session.started_at_client,
        "client_info": dict(session.client_info),
        "server_received_at": received_at,
        "accepted": len(kept),
        "rejected": [{"index": r.index, "reason": r.reason} for r in rejected],
    }
    created, _ = store.put_if_absent("sessions", session_key, session_doc)
    if not created:
        return IngestReport(accepted=0, duplicate=True, rejected=(), server_received_at=received_at)

    for position, norm in enumerate(kept):
        record = norm.record
        store.put(
            "records",
            f"{session_key}/{position}",
            {
                "project_id": session.project_id,
                "session_id": session.session_id,
                "test_id": record.test_id,
                "item_id": record.item_id,
                "answer": record.answer,
                "shown_at_client": record.shown_at_client,
                "answered_at_client": record.answered_at_client,
                "latency_ms": norm.latency_ms,
                "answered_at_server_approx": norm.answered_at_server_approx,
                "server_received_at": received_at,
            },
        )
    return IngestReport(
        accepted=len(kept),
        duplicate=False,
        rejected=tuple(rejected),
        server_received_at=received_at,
    )


def _known_items(store: "Store", project: dict) -> set[tuple[str, str]]:
    from .container import parse_package
    from .store import read_package_bytes

    data = read_package_bytes(store, project["package_id"])
    parsed = parse_package(data)
    known: set[tuple[str, str]] = set()
    for test in parsed.tests:
        for item in test.items:
            known.add((test.test_id, item.item_id))
    return known


CSV_COLUMNS = (
    "session_id",
    "test_id",
    "item_id",
    "answer",
    "shown_at_client",
    "answered_at_client",
    "latency_ms",
    "server_received_at",
)


def list_sessions(store: "Store", project_id: str, read_pref: str = "master") -> list[dict]:
    """All stored sessions of a project, ordered by (session start, session id)."""
    sessions = [
        doc.body
        for doc in store.scan("sessions", read_pref=read_pref)
        if doc.body["project_id"] == project_id
    ]
    sessions.sort(key=lambda s: (s["started_at_client"], s["session_id"]))
    return sessions


def session_records(
    store: "Store", project_id: str, session_id: str, read_pref: str = "master"
) -> list[dict]:
    prefix = f"{project_id}/{session_id}/"
    rows = [
        (doc.key, doc.body)
        for doc in store.scan("records", read_pref=read_pref)
        if doc.key.startswith(prefix)
    ]
    rows.sort(key=lambda kv: int(kv[0].rsplit("/", 1)[1]))
    return [body for _, body in rows]


def export_csv(store: "Store", project_id: str, read_pref: str = "master") -> str:
    """RFC 4180 CSV of every stored record, one row per response.

    The answer column carries the canonical JSON encoding of the answer value
    (so string answers are quoted and numbers are bare); cells round-trip
    through any conforming CSV reader plus a JSON parse.
    """
    out = io.StringIO()
    writer = csv.writer(out, quoting=csv.QUOTE_MINIMAL, lineterminator="\r\n")
    writer.writerow(CSV_COLUMNS)
    for session in list_sessions(store, project_id, read_pref=read_pref):
        for record in session_records(store, project_id, session["session_id"], read_pref=read_pref):
            writer.writerow(
                [
                    record["session_id"],
                    record["test_id"],
                    record["item_id"],
                    json.dumps(record["answer"], sort_keys=True, separators=(",", ":"), ensure_ascii=False),
                    _format_number(record["shown_at_client"]),
                    _format_number(record["answered_at_client"]),
                    _format_number(record["latency_ms"]),
                    record["server_received_at"],
                ]
            )
    return out.getvalue()


def _format_number(value: float) -> str:
    # Integral floats print as integers so exports are stable across JSON
    # number representations (5 vs 5.0).
    if isinstance(value, float) and value.is_integer():
        return str(int(value))
    return str(value)
