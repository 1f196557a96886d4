from __future__ import annotations

import json
import uuid
from pathlib import Path

import pytest

from psytest.api import AuthRegistry, PublicApi, TokenRecord
from psytest.container import ManifestDraft, build_result_package, build_test_package
from psytest.httpd import Request
from psytest.results import ResponseRecord, SessionEnvelope
from psytest.schema import Item, TestDefinition
from psytest.store import Store

FIXTURES = Path(__file__).parent / "fixtures"

RESEARCHER_TOKEN = "tok-researcher-alice"
OTHER_TOKEN = "tok-researcher-bob"


def fixed_draft(description: str = "", version: int = 1) -> ManifestDraft:
    return ManifestDraft(
        package_id="00000000-0000-4000-8000-000000000001",
        version=version,
        created_at="2026-08-08T12:00:00Z",
        description=description,
    )


def simple_test(test_id: str = "t1", items: int = 1, with_asset: str | None = None) -> TestDefinition:
    defs = []
    for i in range(items):
        defs.append(
            Item(
                item_id=f"i{i + 1}",
                kind="likert",
                prompt=f"Statement {i + 1}.",
                options=("Disagree", "Neutral", "Agree"),
                capture_latency=True,
            )
        )
    if with_asset is not None:
        defs.append(Item(item_id="stim", kind="timed_stimulus", prompt="Watch.", asset_ref=with_asset))
    return TestDefinition(test_id=test_id, title=f"Test {test_id}", items=tuple(defs))


def simple_package(tests: int = 1, assets: dict[str, bytes] | None = None) -> bytes:
    defs = [simple_test(f"t{i + 1}") for i in range(tests)]
    return build_test_package(fixed_draft(), defs, assets or {})


def make_session(project_id: str, package_id: str, session_id: str | None = None,
                 package_version: int = 1) -> SessionEnvelope:
    return SessionEnvelope(
        session_id=session_id or str(uuid.uuid4()),
        project_id=project_id,
        package_id=package_id,
        package_version=package_version,
        started_at_client="2026-08-08T10:00:00Z",
        client_info={"user_agent": "pytest", "screen": "1920x1080"},
    )


def make_records(rows: list[tuple[str, str, object, float, float]]) -> list[ResponseRecord]:
    return [
        ResponseRecord(test_id=t, item_id=i, answer=a, shown_at_client=s, answered_at_client=e)
        for t, i, a, s, e in rows
    ]


def result_package_for(project: dict, records: list[ResponseRecord],
                       session_id: str | None = None) -> bytes:
    session = make_session(
        project["project_id"], project["package_id"],
        session_id=session_id, package_version=project["package_version"],
    )
    draft = ManifestDraft(
        package_id=str(uuid.uuid4()),
        version=1,
        created_at="2026-08-08T11:00:00Z",
        description="",
    )
    return build_result_package(draft, session, records)


def call(app, method: str, path: str, body: bytes = b"", token: str | None = None,
         query: dict[str, str] | None = None):
    headers = {}
    if token is not None:
        headers["authorization"] = f"Bearer {token}"
    response = app.handle(
        Request(method=method, path=path, headers=headers, body=body, query=query or {})
    )
    return response


def call_json(app, method: str, path: str, payload: dict | None = None, **kw):
    body = json.dumps(payload).encode("utf-8") if payload is not None else b""
    response = call(app, method, path, body=body, **kw)
    return response.status, json.loads(response.body)


@pytest.fixture
def store():
    s = Store(data_dir=None, shard_count=3, slaves_per_shard=1)
    yield s
    if not s.closed:
        s.close()


@pytest.fixture
def auth():
    return AuthRegistry(
        [
            TokenRecord(token=RESEARCHER_TOKEN, researcher="alice"),
            TokenRecord(token=OTHER_TOKEN, researcher="bob"),
            TokenRecord(token="tok-expired", researcher="carol", expires_at="2020-01-01T00:00:00Z"),
        ]
    )


@pytest.fixture
def app(store, auth):
    return PublicApi(store, auth)


@pytest.fixture
def collecting_project(app):
    """A project with the single-test fixture package attached."""
    status, project = call_json(app, "POST", "/api/v1/projects", {"title": "Fixture study"},
                                token=RESEARCHER_TOKEN)
    assert status == 201
    package = simple_package(tests=1)
    response = call(app, "POST", f"/api/v1/projects/{project['project_id']}/package",
                    body=package, token=RESEARCHER_TOKEN)
    assert response.status == 200
    return json.loads(response.body)
