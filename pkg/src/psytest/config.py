"""Server configuration: JSON file plus environment overrides."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

ENV_ADDR = "PSYTEST_ADDR"
ENV_ADMIN_ADDR = "PSYTEST_ADMIN_ADDR"
ENV_DATA_DIR = "PSYTEST_DATA_DIR"


@dataclass
class ServerConfig:
    addr: str = "127.0.0.1:8080"
    admin_addr: str = "127.0.0.1:8081"  # intranet listener: loopback by default
    data_dir: str = "data"
    token_file: str | None = None
    shard_count: int = 3
    slaves_per_shard: int = 1
    replication_interval_ms: int = 250
    snapshot_every: int = 100


def load_config(path: str | Path | None = None, env: dict[str, str] | None = None) -> ServerConfig:
    env = os.environ if env is None else env
    config = ServerConfig()
    if path is not None:
        raw = json.loads(Path(path).read_text("utf-8"))
        if not isinstance(raw, dict):
            raise ValueError("config file must be a JSON object")
        unknown = set(raw) - set(ServerConfig.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        for key, value in raw.items():
            setattr(config, key, value)
    if env.get(ENV_ADDR):
        config.addr = env[ENV_ADDR]
    if env.get(ENV_ADMIN_ADDR):
        config.admin_addr = env[ENV_ADMIN_ADDR]
    if env.get(ENV_DATA_DIR):
        config.data_dir = env[ENV_DATA_DIR]
    return config


def split_addr(addr: str) -> tuple[str, int]:
    host, _, port = addr.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"listen address must be host:port, got {addr!r}")
    return host, int(port)
