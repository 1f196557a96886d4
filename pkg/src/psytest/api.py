"""Public REST API: unified access to projects, packages, and result submission.

Stateless by construction: handlers keep no per-node state, everything lives
in the shared store, so any API node can serve any request and two nodes over
one store answer identically. Project lifecycle is a strict state machine
draft -> collecting -> closed; the legality of every operation is a pure
function of the current status.

Routes (public listener, ``/api/v1``):
    POST /projects                  create project (researcher token)
    GET  /projects                  list own projects (researcher token)
    POST /projects/{id}/package     attach a tests container (owner)
    GET  /projects/{id}/package     download the container, one request (anonymous)
    POST /projects/{id}/results     submit a results container (anonymous)
    GET  /projects/{id}/results     list collected sessions (owner)
    GET  /projects/{id}/export.csv  RFC 4180 export (owner)
    GET  /health                    liveness + per-shard reachability
"""

from __future__ import annotations

import json
import time
import uuid
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import Callable

from . import results as results_mod
from .container import (
    ContainerError,
    MAX_CONTAINER_BYTES,
    ResultPackage,
    SchemaViolation,
    TestPackage,
    parse_package,
)
from .httpd import ApiError, Request, Response, Router, error_response, json_response
from .results import VersionMismatch, rfc3339_utc
from .store import NoMaster, Store, StoreClosed, read_package_bytes, write_package_bytes

PACKAGE_CONTENT_TYPE = "application/zip"
DEFAULT_PAGE_LIMIT = 50
MAX_PAGE_LIMIT = 500

_CONTAINER_STATUS = {
    "MALFORMED_CONTAINER": 400,
    "MISSING_MANIFEST": 400,
    "CHECKSUM_MISMATCH": 400,
    "EMPTY_PACKAGE": 422,
    "SCHEMA_VIOLATION": 422,
    "DUPLICATE_TEST_ID": 422,
    "DANGLING_ASSET_REF": 422,
    "PAYLOAD_TOO_LARGE": 413,
    "CONTAINER_ERROR": 400,
}


@dataclass(frozen=True)
class TokenRecord:
    token: str
    researcher: str
    expires_at: str | None = None  # RFC 3339 UTC; None = no expiry


class AuthRegistry:
    """Static bearer tokens; minimal and replaceable by real auth later."""

    def __init__(self, tokens: list[TokenRecord] | None = None):
        self._by_token = {t.token: t for t in (tokens or [])}

    @classmethod
    def from_file(cls, path: str | Path) -> "AuthRegistry":
        raw = json.loads(Path(path).read_text("utf-8"))
        records = []
        for entry in raw.get("tokens", []):
            records.append(
                TokenRecord(
                    token=entry["token"],
                    researcher=entry["researcher"],
                    expires_at=entry.get("expires_at"),
                )
            )
        return cls(records)

    def authenticate(self, request: Request, now: float) -> str:
        header = request.header("authorization")
        if not header.startswith("Bearer "):
            raise ApiError(401, "AUTH_REQUIRED", "missing bearer token")
        record = self._by_token.get(header[len("Bearer "):].strip())
        if record is None:
            raise ApiError(401, "AUTH_INVALID", "unknown token")
        if record.expires_at is not None and _parse_rfc3339(record.expires_at) <= now:
            raise ApiError(401, "AUTH_EXPIRED", "token has expired")
        return record.researcher


def _parse_rfc3339(value: str) -> float:
    return datetime.fromisoformat(value.replace("Z", "+00:00")).timestamp()


class BaseApi:
    """Router plus the uniform error envelope shared by both listeners."""

    def __init__(self):
        self.router = Router()

    def handle(self, request: Request) -> Response:
        try:
            return self.router.dispatch(request)
        except ApiError as exc:
            return error_response(exc.status, exc.code, exc.message, exc.detail)
        except SchemaViolation as exc:
            violations = []
            if exc.report is not None:
                violations = [
                    {"path": v.path, "rule": v.rule, "message": v.message}
                    for v in exc.report.violations
                ]
            return error_response(422, exc.code, str(exc), {"violations": violations})
        except ContainerError as exc:
            return error_response(_CONTAINER_STATUS.get(exc.code, 400), exc.code, str(exc))
        except VersionMismatch as exc:
            return error_response(409, exc.code, str(exc))
        except (NoMaster, StoreClosed) as exc:
            return error_response(503, "STORE_UNAVAILABLE", str(exc))
        except Exception:
            return error_response(500, "INTERNAL", "internal error")


CORS_HEADERS = {
    "Access-Control-Allow-Origin": "*",
    "Access-Control-Allow-Methods": "GET, POST, OPTIONS",
    "Access-Control-Allow-Headers": "Authorization, Content-Type",
}


class PublicApi(BaseApi):
    def __init__(self, store: Store, auth: AuthRegistry, clock: Callable[[], float] = time.time):
        super().__init__()
        self.store = store
        self.auth = auth
        self.clock = clock
        self.router.add("POST", "/api/v1/projects", self.create_project)
        self.router.add("GET", "/api/v1/projects", self.list_projects)
        self.router.add("POST", "/api/v1/projects/{project_id}/package", self.attach_package)
        self.router.add("GET", "/api/v1/projects/{project_id}/package", self.get_package)
        self.router.add("POST", "/api/v1/projects/{project_id}/results", self.submit_results)
        self.router.add("GET", "/api/v1/projects/{project_id}/results", self.list_results)
        self.router.add("GET", "/api/v1/projects/{project_id}/export.csv", self.export_csv)
        self.router.add("GET", "/api/v1/health", self.health)

    def handle(self, request: Request) -> Response:
        # the browser player may be served from any static host
        if request.method == "OPTIONS":
            return Response(204, dict(CORS_HEADERS), b"")
        response = super().handle(request)
        response.headers.update(CORS_HEADERS)
        return response

    # -- helpers ----------------------------------------------------------

    def _load_project(self, project_id: str) -> dict:
        doc = self.store.get("projects", project_id)
        if doc is None:
            raise ApiError(404, "NOT_FOUND", f"no project {project_id!r}")
        return doc.body

    def _require_owner(self, request: Request, project: dict) -> str:
        principal = self.auth.authenticate(request, self.clock())
        if project["owner"] != principal:
            raise ApiError(403, "AUTH_FORBIDDEN", "not the project owner")
        return principal

    def _page(self, request: Request) -> tuple[int, int]:
        try:
            limit = int(request.query.get("limit", DEFAULT_PAGE_LIMIT))
            offset = int(request.query.get("offset", 0))
        except ValueError:
            raise ApiError(400, "BAD_REQUEST", "limit and offset must be integers") from None
        if limit < 1 or limit > MAX_PAGE_LIMIT or offset < 0:
            raise ApiError(400, "BAD_REQUEST", f"limit must be 1..{MAX_PAGE_LIMIT}, offset >= 0")
        return limit, offset

    # -- handlers ---------------------------------------------------------

    def create_project(self, request: Request) -> Response:
        principal = self.auth.authenticate(request, self.clock())
        payload = request.json()
        title = payload.get("title")
        if not isinstance(title, str) or not title.strip():
            raise ApiError(400, "BAD_REQUEST", "title must be a non-empty string")
        project = {
            "project_id": str(uuid.uuid4()),
            "owner": principal,
            "title": title,
            "package_id": None,
            "package_version": None,
            "status": "draft",
            "created_at": rfc3339_utc(self.clock()),
        }
        self.store.put("projects", project["project_id"], project)
        return json_response(201, project)

    def list_projects(self, request: Request) -> Response:
        principal = self.auth.authenticate(request, self.clock())
        limit, offset = self._page(request)
        projects = [
            doc.body for doc in self.store.scan("projects") if doc.body["owner"] == principal
        ]
        projects.sort(key=lambda p: (p["created_at"], p["project_id"]))
        return json_response(
            200,
            {
                "total": len(projects),
                "limit": limit,
                "offset": offset,
                "items": projects[offset : offset + limit],
            },
        )

    def attach_package(self, request: Request, project_id: str) -> Response:
        project = self._load_project(project_id)
        self._require_owner(request, project)
        if project["status"] != "draft":
            raise ApiError(409, "PROJECT_NOT_DRAFT", f"project is {project['status']}, not draft")
        if len(request.body) > MAX_CONTAINER_BYTES:
            raise ApiError(
                413, "PAYLOAD_TOO_LARGE",
                f"package is {len(request.body)} bytes, cap is {MAX_CONTAINER_BYTES}",
            )
        package = parse_package(request.body)
        if not isinstance(package, TestPackage):
            raise ApiError(422, "WRONG_PACKAGE_KIND", "expected a kind=tests container")
        write_package_bytes(self.store, package.manifest.package_id, request.body)
        project = dict(project)
        project["package_id"] = package.manifest.package_id
        project["package_version"] = package.manifest.version
        project["status"] = "collecting"
        self.store.put("projects", project_id, project)
        summary = dict(project)
        summary["tests"] = [t.test_id for t in package.tests]
        return json_response(200, summary)

    def get_package(self, request: Request, project_id: str) -> Response:
        project = self._load_project(project_id)
        if project["status"] != "collecting":
            raise ApiError(
                409, "PROJECT_NOT_COLLECTING", f"project is {project['status']}, not collecting"
            )
        data = read_package_bytes(self.store, project["package_id"])
        return Response(200, {"Content-Type": PACKAGE_CONTENT_TYPE}, data)

    def submit_results(self, request: Request, project_id: str) -> Response:
        project = self._load_project(project_id)
        if project["status"] != "collecting":
            raise ApiError(
                409, "PROJECT_NOT_COLLECTING", f"project is {project['status']}, not collecting"
            )
        package = parse_package(request.body)
        if not isinstance(package, ResultPackage):
            raise ApiError(422, "WRONG_PACKAGE_KIND", "expected a kind=results container")
        if package.session.project_id != project_id:
            raise ApiError(
                422, "PROJECT_MISMATCH",
                f"result session targets project {package.session.project_id!r}",
            )
        report = results_mod.ingest(self.store, project, package, clock=self.clock)
        return json_response(200, report.to_json())

    def list_results(self, request: Request, project_id: str) -> Response:
        project = self._load_project(project_id)
        self._require_owner(request, project)
        limit, offset = self._page(request)
        sessions = results_mod.list_sessions(self.store, project_id)
        summaries = [
            {
                "session_id": s["session_id"],
                "started_at_client": s["started_at_client"],
                "server_received_at": s["server_received_at"],
                "accepted": s["accepted"],
                "rejected_count": len(s["rejected"]),
                "package_version": s["package_version"],
            }
            for s in sessions
        ]
        return json_response(
            200,
            {
                "total": len(summaries),
                "limit": limit,
                "offset": offset,
                "items": summaries[offset : offset + limit],
            },
        )

    def export_csv(self, request: Request, project_id: str) -> Response:
        project = self._load_project(project_id)
        self._require_owner(request, project)
        text = results_mod.export_csv(self.store, project_id)
        return Response(200, {"Content-Type": "text/csv; charset=utf-8"}, text.encode("utf-8"))

    def health(self, request: Request) -> Response:
        try:
            statuses = self.store.shard_status()
        except StoreClosed:
            return json_response(503, {"status": "fail", "reason": "store closed"})
        shards = [
            {
                "shard_index": s.shard_index,
                "reachable": not s.master_down,
                "master": s.master,
                "epoch": s.epoch,
            }
            for s in statuses
        ]
        degraded = [s["shard_index"] for s in shards if not s["reachable"]]
        status = "degraded" if degraded else "ok"
        return json_response(200, {"status": status, "degraded_shards": degraded, "shards": shards})
