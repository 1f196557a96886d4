from __future__ import annotations

import json
from pathlib import Path

import pytest
import requests

from serverproc import ServerProcess, run_cli, write_server_files
from psytest.store import Store


@pytest.fixture
def package_dir(tmp_path) -> Path:
    root = tmp_path / "pkgsrc"
    (root / "tests").mkdir(parents=True)
    (root / "assets" / "img").mkdir(parents=True)
    (root / "package.json").write_text(json.dumps({
        "package_id": "00000000-0000-4000-8000-00000000dddd",
        "version": 1,
        "created_at": "2026-08-08T12:00:00Z",
        "description": "cli fixture",
    }), "utf-8")
    (root / "tests" / "t1.json").write_text(json.dumps({
        "test_id": "t1", "title": "CLI test", "items": [
            {"item_id": "i1", "kind": "timed_stimulus", "prompt": "Watch.",
             "asset_ref": "img/shape.bin", "capture_latency": True}],
    }), "utf-8")
    (root / "assets" / "img" / "shape.bin").write_bytes(b"BINARY-SHAPE-DATA")
    return root


def test_build_valid_dir_exit_zero(package_dir, tmp_path):
    out = tmp_path / "built.pkg"
    result = run_cli("pkg", "build", str(package_dir), "-o", str(out))
    assert result.returncode == 0, result.stderr
    assert out.exists() and out.stat().st_size > 0


def test_build_is_deterministic_for_pinned_manifest(package_dir, tmp_path):
    out1, out2 = tmp_path / "a.pkg", tmp_path / "b.pkg"
    assert run_cli("pkg", "build", str(package_dir), "-o", str(out1)).returncode == 0
    assert run_cli("pkg", "build", str(package_dir), "-o", str(out2)).returncode == 0
    assert out1.read_bytes() == out2.read_bytes()


def test_build_zero_tests_exit_two_citing_empty(package_dir, tmp_path):
    for f in (package_dir / "tests").iterdir():
        f.unlink()
    result = run_cli("pkg", "build", str(package_dir), "-o", str(tmp_path / "x.pkg"))
    assert result.returncode == 2
    assert "at least one test" in result.stderr


def test_build_invalid_test_lists_violations_one_per_line(package_dir, tmp_path):
    (package_dir / "tests" / "bad.json").write_text(json.dumps({
        "test_id": "bad", "title": "", "items": []}), "utf-8")
    result = run_cli("pkg", "build", str(package_dir), "-o", str(tmp_path / "x.pkg"))
    assert result.returncode == 2
    lines = [line for line in result.stderr.splitlines() if "bad.json" in line]
    assert len(lines) == 2  # /title minLength and /items minItems
    assert any("minItems" in line for line in lines)


def test_build_unwritable_out_path_exit_one(package_dir):
    result = run_cli("pkg", "build", str(package_dir), "-o", "/nonexistent-dir/out.pkg")
    assert result.returncode == 1


def test_validate_pristine_exit_zero(package_dir, tmp_path):
    out = tmp_path / "built.pkg"
    run_cli("pkg", "build", str(package_dir), "-o", str(out))
    result = run_cli("pkg", "validate", str(out))
    assert result.returncode == 0, result.stderr


def test_validate_corrupted_entry_exit_two_naming_entry(package_dir, tmp_path):
    out = tmp_path / "built.pkg"
    run_cli("pkg", "build", str(package_dir), "-o", str(out))
    data = bytearray(out.read_bytes())
    data[data.find(b"BINARY-SHAPE-DATA") + 2] ^= 0xFF
    bad = tmp_path / "corrupt.pkg"
    bad.write_bytes(bytes(data))
    result = run_cli("pkg", "validate", str(bad))
    assert result.returncode == 2
    assert "assets/img/shape.bin" in result.stderr


def test_validate_missing_file_exit_one(tmp_path):
    result = run_cli("pkg", "validate", str(tmp_path / "missing.pkg"))
    assert result.returncode == 1


def test_inspect_lists_tests_and_item_counts(package_dir, tmp_path):
    out = tmp_path / "built.pkg"
    run_cli("pkg", "build", str(package_dir), "-o", str(out))
    result = run_cli("pkg", "inspect", str(out))
    assert result.returncode == 0
    assert "t1" in result.stdout and "1 items" in result.stdout


def test_inspect_json_matches_manifest(package_dir, tmp_path):
    out = tmp_path / "built.pkg"
    run_cli("pkg", "build", str(package_dir), "-o", str(out))
    result = run_cli("--json", "pkg", "inspect", str(out))
    summary = json.loads(result.stdout)
    assert summary["manifest"]["package_id"] == "00000000-0000-4000-8000-00000000dddd"
    assert summary["manifest"]["kind"] == "tests"
    assert summary["tests"] == [{"test_id": "t1", "title": "CLI test", "items": 1}]


def test_serve_health_seed_demo_and_clean_sigterm(tmp_path):
    config = write_server_files(tmp_path)
    server = ServerProcess(config)
    try:
        health = requests.get(f"{server.public_url}/api/v1/health", timeout=5).json()
        assert health["status"] == "ok"

        seed1 = run_cli("--json", "seed-demo", server.public_url, "--token", "tok-cli")
        assert seed1.returncode == 0, seed1.stderr
        first = json.loads(seed1.stdout)
        assert first["status"] == "collecting"

        seed2 = run_cli("--json", "seed-demo", server.public_url, "--token", "tok-cli")
        second = json.loads(seed2.stdout)
        assert first["project_id"] != second["project_id"]

        package = requests.get(
            f"{server.public_url}/api/v1/projects/{first['project_id']}/package", timeout=5)
        validate_target = tmp_path / "downloaded.pkg"
        validate_target.write_bytes(package.content)
        assert run_cli("pkg", "validate", str(validate_target)).returncode == 0

        export = run_cli("export", server.public_url, first["project_id"],
                         "--token", "tok-cli")
        assert export.returncode == 0
        assert export.stdout.startswith("session_id,test_id,item_id,answer")

        exit_code = server.sigterm()
        assert exit_code == 0
    finally:
        server.cleanup()

    # clean shutdown left a reopenable store with both projects
    store = Store(tmp_path / "data", shard_count=3, slaves_per_shard=1)
    try:
        projects = {doc.body["project_id"] for doc in store.scan("projects")}
        assert {first["project_id"], second["project_id"]} <= projects
    finally:
        store.close()


def test_serve_bad_config_exit_one(tmp_path):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"addr": "not-an-address"}), "utf-8")
    result = run_cli("--config", str(config), "serve")
    assert result.returncode == 1
    assert "cannot start server" in result.stderr


def test_no_subcommand_exit_one():
    result = run_cli()
    assert result.returncode == 1
