"""Command-line tool: build/validate/inspect packages, serve, seed demo data.

Exit codes are stable for scripting: 0 success, 1 operational error (I/O,
network, bad config), 2 validation failure. Diagnostics go to stderr, data to
stdout.
"""

from __future__ import annotations

import argparse
import json
import signal
import sys
import threading
import urllib.error
import urllib.request
from pathlib import Path

from .config import load_config
from .container import (
    ContainerError,
    ManifestDraft,
    ResultPackage,
    TestPackage,
    build_test_package,
    new_draft,
    parse_package,
    verify_integrity,
)
from .demo import build_demo_package
from .schema import parse_test_definition, validate_test
from .service import Platform

EXIT_OK = 0
EXIT_OPERATIONAL = 1
EXIT_VALIDATION = 2


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_OPERATIONAL
    try:
        return args.func(args)
    except BrokenPipeError:
        return EXIT_OPERATIONAL


def _build_parser() -> argparse.ArgumentParser:
    # global flags are accepted both before and after the subcommand
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="FILE", default=argparse.SUPPRESS,
                        help="server/config file (JSON)")
    common.add_argument("--json", action="store_true", default=argparse.SUPPRESS,
                        help="machine-readable output on stdout")

    parser = argparse.ArgumentParser(prog="psytest")
    parser.add_argument("--config", metavar="FILE", default=None, help="server/config file (JSON)")
    parser.add_argument("--json", action="store_true", default=False,
                        help="machine-readable output on stdout")
    sub = parser.add_subparsers(dest="command")
    parser.set_defaults(command=None)

    pkg = sub.add_parser("pkg", help="package operations")
    pkg_sub = pkg.add_subparsers(dest="pkg_command", required=True)

    build = pkg_sub.add_parser("build", parents=[common],
                               help="build a container from a source directory")
    build.add_argument("directory", help="directory with package.json, tests/, optional assets/")
    build.add_argument("-o", "--out", required=True, help="output container path")
    build.set_defaults(func=cmd_pkg_build)

    validate = pkg_sub.add_parser("validate", parents=[common],
                                  help="verify a container's integrity")
    validate.add_argument("file")
    validate.set_defaults(func=cmd_pkg_validate)

    inspect = pkg_sub.add_parser("inspect", parents=[common], help="summarize a container")
    inspect.add_argument("file")
    inspect.set_defaults(func=cmd_pkg_inspect)

    serve = sub.add_parser("serve", parents=[common],
                           help="run the public and admin listeners until signalled")
    serve.set_defaults(func=cmd_serve)

    seed = sub.add_parser("seed-demo", parents=[common],
                          help="create a demo project on a running server")
    seed.add_argument("url", help="public API base URL, e.g. http://127.0.0.1:8080")
    seed.add_argument("--token", required=True, help="researcher bearer token")
    seed.add_argument("--title", default="Demo study")
    seed.set_defaults(func=cmd_seed_demo)

    export = sub.add_parser("export", parents=[common],
                            help="download a project's results as CSV")
    export.add_argument("url", help="public API base URL")
    export.add_argument("project_id")
    export.add_argument("--token", required=True, help="researcher bearer token")
    export.add_argument("-o", "--out", help="write CSV here instead of stdout")
    export.set_defaults(func=cmd_export)

    return parser


def _err(message: str) -> None:
    print(message, file=sys.stderr)


# -- pkg build ----------------------------------------------------------------


def cmd_pkg_build(args) -> int:
    source = Path(args.directory)
    if not source.is_dir():
        _err(f"not a directory: {source}")
        return EXIT_OPERATIONAL
    manifest_path = source / "package.json"
    if not manifest_path.is_file():
        _err(f"missing draft manifest: {manifest_path}")
        return EXIT_OPERATIONAL
    try:
        raw_draft = json.loads(manifest_path.read_text("utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        _err(f"cannot read {manifest_path}: {exc}")
        return EXIT_OPERATIONAL
    if not isinstance(raw_draft, dict):
        _err("package.json must be a JSON object")
        return EXIT_VALIDATION
    defaults = new_draft()
    draft = ManifestDraft(
        package_id=raw_draft.get("package_id", defaults.package_id),
        version=raw_draft.get("version", 1),
        created_at=raw_draft.get("created_at", defaults.created_at),
        description=raw_draft.get("description", ""),
    )

    tests_dir = source / "tests"
    test_files = sorted(tests_dir.rglob("*.json")) if tests_dir.is_dir() else []
    tests = []
    violation_lines: list[str] = []
    for path in test_files:
        try:
            text = path.read_text("utf-8")
        except OSError as exc:
            _err(f"cannot read {path}: {exc}")
            return EXIT_OPERATIONAL
        report = validate_test(text)
        if not report.valid:
            for v in report.violations:
                violation_lines.append(f"{path}: {v.path or '/'}: {v.rule}: {v.message}")
            continue
        tests.append(parse_test_definition(text))
    if violation_lines:
        for line in violation_lines:
            _err(line)
        return EXIT_VALIDATION

    assets: dict[str, bytes] = {}
    assets_dir = source / "assets"
    if assets_dir.is_dir():
        for path in sorted(assets_dir.rglob("*")):
            if path.is_file():
                assets[path.relative_to(assets_dir).as_posix()] = path.read_bytes()

    try:
        data = build_test_package(draft, tests, assets)
    except (ContainerError, ValueError) as exc:
        _err(f"build failed: {exc}")
        return EXIT_VALIDATION

    out = Path(args.out)
    try:
        out.write_bytes(data)
    except OSError as exc:
        _err(f"cannot write {out}: {exc}")
        return EXIT_OPERATIONAL
    if args.json:
        print(json.dumps({
            "out": str(out),
            "package_id": draft.package_id,
            "version": draft.version,
            "tests": len(tests),
            "assets": len(assets),
            "bytes": len(data),
        }))
    else:
        _err(f"wrote {out}: {len(tests)} tests, {len(assets)} assets, {len(data)} bytes")
    return EXIT_OK


# -- pkg validate ---------------------------------------------------------------


def cmd_pkg_validate(args) -> int:
    path = Path(args.file)
    try:
        data = path.read_bytes()
    except OSError as exc:
        _err(f"cannot read {path}: {exc}")
        return EXIT_OPERATIONAL
    report = verify_integrity(data)
    if args.json:
        print(json.dumps({
            "ok": report.ok,
            "reason": report.reason,
            "entries": [{"path": e.path, "ok": e.ok, "reason": e.reason} for e in report.entries],
        }))
    if report.ok:
        if not args.json:
            print(f"{path}: ok ({len(report.entries)} entries verified)")
        return EXIT_OK
    _err(f"{path}: integrity check failed: {report.reason}")
    for entry in report.entries:
        if not entry.ok:
            _err(f"  {entry.path}: {entry.reason}")
    return EXIT_VALIDATION


# -- pkg inspect -----------------------------------------------------------------


def cmd_pkg_inspect(args) -> int:
    path = Path(args.file)
    try:
        data = path.read_bytes()
    except OSError as exc:
        _err(f"cannot read {path}: {exc}")
        return EXIT_OPERATIONAL
    try:
        package = parse_package(data)
    except ContainerError as exc:
        _err(f"{path}: {exc}")
        return EXIT_VALIDATION

    manifest = package.manifest
    summary: dict = {
        "manifest": {
            "package_id": manifest.package_id,
            "version": manifest.version,
            "kind": manifest.kind,
            "created_at": manifest.created_at,
            "description": manifest.description,
            "entry_checksums": manifest.entry_checksums,
        }
    }
    if isinstance(package, TestPackage):
        summary["tests"] = [
            {"test_id": t.test_id, "title": t.title, "items": len(t.items)} for t in package.tests
        ]
        summary["assets"] = sorted(package.assets)
    else:
        summary["session"] = {
            "session_id": package.session.session_id,
            "project_id": package.session.project_id,
            "package_id": package.session.package_id,
            "package_version": package.session.package_version,
            "started_at_client": package.session.started_at_client,
        }
        summary["records"] = len(package.records)

    if args.json:
        print(json.dumps(summary, ensure_ascii=False))
        return EXIT_OK
    print(f"kind: {manifest.kind}")
    print(f"package_id: {manifest.package_id} (version {manifest.version})")
    print(f"created_at: {manifest.created_at}")
    if manifest.description:
        print(f"description: {manifest.description}")
    if isinstance(package, TestPackage):
        for t in package.tests:
            print(f"test {t.test_id}: {t.title} ({len(t.items)} items)")
        if package.assets:
            print(f"assets: {', '.join(sorted(package.assets))}")
    else:
        print(f"session: {package.session.session_id}")
        print(f"records: {len(package.records)}")
    return EXIT_OK


# -- serve -----------------------------------------------------------------------


def cmd_serve(args) -> int:
    try:
        config = load_config(args.config)
        platform = Platform(config)
        platform.start()
    except Exception as exc:
        _err(f"cannot start server: {exc}")
        return EXIT_OPERATIONAL
    _err(f"public API on {platform.public_address}, admin on {platform.admin_address}")

    stop = threading.Event()

    def on_signal(signum, frame):
        stop.set()

    signal.signal(signal.SIGTERM, on_signal)
    signal.signal(signal.SIGINT, on_signal)
    stop.wait()
    _err("shutting down")
    platform.stop()
    return EXIT_OK


# -- seed-demo ---------------------------------------------------------------------


def _http(method: str, url: str, token: str | None = None, body: bytes | None = None,
          content_type: str = "application/json") -> tuple[int, bytes]:
    request = urllib.request.Request(url, data=body, method=method)
    if body is not None:
        request.add_header("Content-Type", content_type)
    if token:
        request.add_header("Authorization", f"Bearer {token}")
    try:
        with urllib.request.urlopen(request) as response:
            return response.status, response.read()
    except urllib.error.HTTPError as exc:
        return exc.code, exc.read()
    except urllib.error.URLError as exc:
        raise ConnectionError(f"cannot reach {url}: {exc.reason}") from None


def cmd_seed_demo(args) -> int:
    base = args.url.rstrip("/")
    try:
        status, body = _http(
            "POST", f"{base}/api/v1/projects", token=args.token,
            body=json.dumps({"title": args.title}).encode("utf-8"),
        )
        if status != 201:
            _err(f"create project failed ({status}): {body.decode('utf-8', 'replace')}")
            return EXIT_OPERATIONAL
        project = json.loads(body)
        package = build_demo_package()
        status, body = _http(
            "POST", f"{base}/api/v1/projects/{project['project_id']}/package",
            token=args.token, body=package, content_type="application/zip",
        )
        if status != 200:
            _err(f"attach package failed ({status}): {body.decode('utf-8', 'replace')}")
            return EXIT_OPERATIONAL
        attached = json.loads(body)
    except ConnectionError as exc:
        _err(str(exc))
        return EXIT_OPERATIONAL

    if args.json:
        print(json.dumps({
            "project_id": project["project_id"],
            "package_id": attached["package_id"],
            "status": attached["status"],
            "tests": attached["tests"],
        }))
    else:
        print(f"project_id: {project['project_id']}")
        print(f"package_id: {attached['package_id']}")
        print(f"status: {attached['status']} (tests: {', '.join(attached['tests'])})")
    return EXIT_OK


def cmd_export(args) -> int:
    base = args.url.rstrip("/")
    try:
        status, body = _http(
            "GET", f"{base}/api/v1/projects/{args.project_id}/export.csv", token=args.token
        )
    except ConnectionError as exc:
        _err(str(exc))
        return EXIT_OPERATIONAL
    if status != 200:
        _err(f"export failed ({status}): {body.decode('utf-8', 'replace')}")
        return EXIT_VALIDATION if status in (409, 422) else EXIT_OPERATIONAL
    if args.out:
        try:
            Path(args.out).write_bytes(body)
        except OSError as exc:
            _err(f"cannot write {args.out}: {exc}")
            return EXIT_OPERATIONAL
    else:
        sys.stdout.write(body.decode("utf-8"))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
