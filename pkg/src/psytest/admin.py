"""Intranet listener: administration and population analytics.

Served on its own port, bound to loopback by default; none of these routes
exist on the public listener (unknown paths there are plain 404s, so route
existence does not leak). Analytics reads use slave_ok preference to keep
heavy scans off the write path.

Numeric coding rule for summaries: an answer contributes to the moments
(mean, population sd, min, max) iff it is a JSON number, which is how likert
responses are recorded (selected option index 0..k-1). Every answer, numeric
or not, is counted in the per-item frequency table keyed by its canonical
JSON encoding, so frequencies always sum to n.
"""

from __future__ import annotations

import json
import math
import time
from typing import Callable

from .api import BaseApi
from .container import parse_package
from .httpd import ApiError, Request, Response, json_response
from .results import list_sessions, rfc3339_utc, session_records
from .store import Store, read_package_bytes


def population_summary(store: Store, project_id: str) -> dict:
    """Descriptive statistics per (test_id, item_id), pure over a store snapshot."""
    project_doc = store.get("projects", project_id, read_pref="slave_ok")
    if project_doc is None:
        # the slave may simply lag; check the master before reporting absence
        project_doc = store.get("projects", project_id)
    if project_doc is None:
        raise KeyError(project_id)
    project = project_doc.body

    groups: dict[tuple[str, str], list] = {}
    if project.get("package_id"):
        try:
            data = read_package_bytes(store, project["package_id"], read_pref="slave_ok")
        except KeyError:
            # slave lag: the package is immutable once attached, master is safe
            data = read_package_bytes(store, project["package_id"])
        package = parse_package(data)
        for test in package.tests:
            for item in test.items:
                groups[(test.test_id, item.item_id)] = []

    for session in list_sessions(store, project_id, read_pref="slave_ok"):
        for record in session_records(store, project_id, session["session_id"], read_pref="slave_ok"):
            groups.setdefault((record["test_id"], record["item_id"]), []).append(record["answer"])

    items = []
    for (test_id, item_id), answers in sorted(groups.items()):
        frequencies: dict[str, int] = {}
        numeric: list[float] = []
        for answer in answers:
            key = json.dumps(answer, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
            frequencies[key] = frequencies.get(key, 0) + 1
            if isinstance(answer, (int, float)) and not isinstance(answer, bool):
                numeric.append(float(answer))
        entry: dict = {
            "test_id": test_id,
            "item_id": item_id,
            "n": len(answers),
            "frequencies": dict(sorted(frequencies.items())),
        }
        if numeric:
            mean = sum(numeric) / len(numeric)
            variance = sum((x - mean) ** 2 for x in numeric) / len(numeric)
            entry["numeric"] = {
                "n": len(numeric),
                "mean": mean,
                "sd": math.sqrt(variance),
                "min": min(numeric),
                "max": max(numeric),
            }
        items.append(entry)
    return {"project_id": project_id, "items": items}


def shard_overview(store: Store) -> dict:
    """shard_status plus replication lag per slave."""
    shards = []
    for status in store.shard_status():
        shards.append(
            {
                "shard_index": status.shard_index,
                "epoch": status.epoch,
                "master": status.master,
                "master_down": status.master_down,
                "master_seq": status.master_seq,
                "doc_count": status.doc_count,
                "slaves": [
                    {
                        "node_id": s.node_id,
                        "applied_seq": s.applied_seq,
                        "doc_count": s.doc_count,
                        "lag": status.master_seq - s.applied_seq,
                    }
                    for s in status.slaves
                ],
            }
        )
    return {"shards": shards}


class AdminApi(BaseApi):
    def __init__(self, store: Store, clock: Callable[[], float] = time.time):
        super().__init__()
        self.store = store
        self.clock = clock
        self.router.add("GET", "/admin/v1/projects/{project_id}/summary", self.summary)
        self.router.add("GET", "/admin/v1/shards", self.shards)
        self.router.add("POST", "/admin/v1/projects/{project_id}/close", self.close_project)

    def summary(self, request: Request, project_id: str) -> Response:
        try:
            return json_response(200, population_summary(self.store, project_id))
        except KeyError:
            raise ApiError(404, "NOT_FOUND", f"no project {project_id!r}") from None

    def shards(self, request: Request) -> Response:
        return json_response(200, shard_overview(self.store))

    def close_project(self, request: Request, project_id: str) -> Response:
        doc = self.store.get("projects", project_id)
        if doc is None:
            raise ApiError(404, "NOT_FOUND", f"no project {project_id!r}")
        project = dict(doc.body)
        if project["status"] != "collecting":
            raise ApiError(
                409, "PROJECT_NOT_COLLECTING", f"project is {project['status']}, not collecting"
            )
        project["status"] = "closed"
        project["closed_at"] = rfc3339_utc(self.clock())
        self.store.put("projects", project_id, project)
        return json_response(200, project)
