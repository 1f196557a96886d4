"""Wires the store and both HTTP listeners together for service mode."""

from __future__ import annotations

import threading

from .admin import AdminApi
from .api import AuthRegistry, PublicApi
from .config import ServerConfig, split_addr
from .httpd import make_server
from .store import Store


class Platform:
    """One process: shared store, public listener, intranet admin listener."""

    def __init__(self, config: ServerConfig):
        self.config = config
        # validate listen addresses before creating any on-disk state
        split_addr(config.addr)
        split_addr(config.admin_addr)
        self.store = Store(
            config.data_dir,
            shard_count=config.shard_count,
            slaves_per_shard=config.slaves_per_shard,
            snapshot_every=config.snapshot_every,
        )
        self.auth = AuthRegistry.from_file(config.token_file) if config.token_file else AuthRegistry()
        self.public_app = PublicApi(self.store, self.auth)
        self.admin_app = AdminApi(self.store)
        self._public_server = None
        self._admin_server = None
        self._threads: list[threading.Thread] = []

    def start(self) -> None:
        public_host, public_port = split_addr(self.config.addr)
        admin_host, admin_port = split_addr(self.config.admin_addr)
        self._public_server = make_server(self.public_app, public_host, public_port)
        self._admin_server = make_server(self.admin_app, admin_host, admin_port)
        for server, name in ((self._public_server, "public"), (self._admin_server, "admin")):
            thread = threading.Thread(target=server.serve_forever, name=f"psytest-{name}", daemon=True)
            thread.start()
            self._threads.append(thread)
        self.store.start_replication(self.config.replication_interval_ms / 1000.0)

    @property
    def public_address(self) -> str:
        host, port = self._public_server.server_address[:2]
        return f"{host}:{port}"

    @property
    def admin_address(self) -> str:
        host, port = self._admin_server.server_address[:2]
        return f"{host}:{port}"

    def stop(self) -> None:
        for server in (self._public_server, self._admin_server):
            if server is not None:
                server.shutdown()
                server.server_close()
        for thread in self._threads:
            thread.join(timeout=5)
        self._threads.clear()
        self.store.close()
