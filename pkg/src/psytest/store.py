"""Sharded document store: hash routing, master/slave replication, failover.

Documents are routed to one of N shards by FNV-1a-64 over
``collection + "/" + key``. Each shard is a replica set: one master applies
writes and appends them to a sequence-numbered oplog; slaves apply the oplog
in order, so a slave's applied state is always a prefix of the master's.
Replication is explicitly stepped (deterministic for tests) or driven by a
timer thread in service mode.

Durability: every write is framed (4-byte big-endian length + JSON), appended
to ``data/shard-<i>/oplog.log`` and fsync'd before it is acknowledged;
``snapshot.json`` checkpoints state periodically. Recovery replays the
snapshot plus the log tail. Promotions append a rollback record rather than
truncating the file, so the log stays append-only; recovery resolves the
surviving write set in a first pass before applying it.
"""

from __future__ import annotations

import base64
import copy
import json
import os
import struct
import threading
from dataclasses import dataclass
from pathlib import Path

FNV_OFFSET_BASIS = 14695981039346656037
FNV_PRIME = 1099511628211
_MASK64 = 0xFFFFFFFFFFFFFFFF

DEFAULT_SHARD_COUNT = 3
DEFAULT_SLAVES_PER_SHARD = 1
DEFAULT_REPLICATION_INTERVAL = 0.25  # seconds
DEFAULT_SNAPSHOT_EVERY = 100  # writes per shard between snapshots

_LENGTH_PREFIX = struct.Struct(">I")


class StoreError(Exception):
    code = "STORE_ERROR"


class ZeroShards(StoreError):
    code = "ZERO_SHARDS"


class StoreClosed(StoreError):
    code = "STORE_CLOSED"


class NoMaster(StoreError):
    code = "NO_MASTER"


class UnknownShard(StoreError):
    code = "UNKNOWN_SHARD"


class NodeNotSlave(StoreError):
    code = "NODE_NOT_SLAVE"


class MasterStillUp(StoreError):
    code = "MASTER_STILL_UP"


def fnv1a_64(data: bytes) -> int:
    """FNV-1a, 64-bit: offset basis 14695981039346656037, prime 1099511628211."""
    value = FNV_OFFSET_BASIS
    for byte in data:
        value ^= byte
        value = (value * FNV_PRIME) & _MASK64
    return value


def shard_for_key(key: str, shard_count: int) -> int:
    """Deterministic shard index: FNV-1a-64 of the UTF-8 key, mod shard_count."""
    if not isinstance(shard_count, int) or isinstance(shard_count, bool) or shard_count < 1:
        raise ZeroShards(f"shard_count must be a positive integer, got {shard_count!r}")
    return fnv1a_64(key.encode("utf-8")) % shard_count


def routing_key(collection: str, key: str) -> str:
    return f"{collection}/{key}"


@dataclass(frozen=True)
class StoredDocument:
    collection: str
    key: str
    body: object
    version: int


@dataclass(frozen=True)
class WriteReceipt:
    shard_index: int
    sequence: int
    version: int


@dataclass(frozen=True)
class SlaveStatus:
    node_id: str
    applied_seq: int
    doc_count: int


@dataclass(frozen=True)
class ShardStatus:
    shard_index: int
    epoch: int
    master: str
    master_down: bool
    master_seq: int
    doc_count: int
    slaves: tuple[SlaveStatus, ...]


@dataclass(frozen=True)
class PromotionResult:
    shard_index: int
    epoch: int
    master: str
    slaves: tuple[str, ...]
    lost_writes: int


class _Node:
    __slots__ = ("node_id", "docs", "applied_seq")

    def __init__(self, node_id: str):
        self.node_id = node_id
        self.docs: dict[tuple[str, str], StoredDocument] = {}
        self.applied_seq = 0

    def apply(self, op: dict) -> None:
        self.docs[(op["collection"], op["key"])] = StoredDocument(
            collection=op["collection"],
            key=op["key"],
            body=op["body"],
            version=op["version"],
        )
        self.applied_seq = op["seq"]


class _Shard:
    def __init__(self, index: int, slave_count: int):
        self.index = index
        self.lock = threading.RLock()
        self.epoch = 1
        self.master = _Node(f"shard{index}-n0")
        self.master_down = False
        self.slaves = [_Node(f"shard{index}-n{j}") for j in range(1, slave_count + 1)]
        self.oplog: list[dict] = []
        self.last_seq = 0
        self.writes_since_snapshot = 0
        self.log_file = None  # binary append handle when persistent


class Store:
    """Desk-scale sharded store, safe for concurrent use from request threads.

    Writes to one shard are serialized through the shard's lock (single
    writer per shard); reads are concurrent across shards. Cross-shard
    operations make no atomicity promise.
    """

    def __init__(
        self,
        data_dir: str | Path | None = None,
        shard_count: int = DEFAULT_SHARD_COUNT,
        slaves_per_shard: int = DEFAULT_SLAVES_PER_SHARD,
        durable: bool = True,
        snapshot_every: int = DEFAULT_SNAPSHOT_EVERY,
    ):
        if not isinstance(shard_count, int) or isinstance(shard_count, bool) or shard_count < 1:
            raise ZeroShards(f"shard_count must be a positive integer, got {shard_count!r}")
        if slaves_per_shard < 0:
            raise ValueError("slaves_per_shard must be >= 0")
        self._data_dir = Path(data_dir) if data_dir is not None else None
        self._durable = durable and self._data_dir is not None
        self._snapshot_every = snapshot_every
        self._closed = False
        self._replication_thread: threading.Thread | None = None
        self._replication_stop = threading.Event()
        self._replication_paused = False

        if self._data_dir is not None:
            self._data_dir.mkdir(parents=True, exist_ok=True)
            meta_path = self._data_dir / "meta.json"
            if meta_path.exists():
                meta = json.loads(meta_path.read_text("utf-8"))
                if meta.get("shard_count") != shard_count:
                    raise StoreError(
                        f"store at {self._data_dir} has shard_count={meta.get('shard_count')}, "
                        f"requested {shard_count}; resharding an existing store is not supported"
                    )
            else:
                meta_path.write_text(json.dumps({"format": 1, "shard_count": shard_count}), "utf-8")

        self.shard_count = shard_count
        self._shards = [_Shard(i, slaves_per_shard) for i in range(shard_count)]
        if self._data_dir is not None:
            for shard in self._shards:
                self._recover_shard(shard)
                self._open_log(shard)

    # -- routing ---------------------------------------------------------

    def shard_index_for(self, collection: str, key: str) -> int:
        return shard_for_key(routing_key(collection, key), self.shard_count)

    def _shard_for(self, collection: str, key: str) -> _Shard:
        return self._shards[self.shard_index_for(collection, key)]

    def _shard_at(self, shard_index: int) -> _Shard:
        if not isinstance(shard_index, int) or not 0 <= shard_index < self.shard_count:
            raise UnknownShard(f"no shard {shard_index!r} (shard_count={self.shard_count})")
        return self._shards[shard_index]

    # -- core operations ---------------------------------------------------

    def put(self, collection: str, key: str, body) -> WriteReceipt:
        """Write on the shard master; fsync'd to the oplog before returning."""
        self._check_open()
        shard = self._shard_for(collection, key)
        with shard.lock:
            return self._put_locked(shard, collection, key, body)

    def put_if_absent(self, collection: str, key: str, body) -> tuple[bool, WriteReceipt | StoredDocument]:
        """Atomic check-and-insert: (True, receipt) on create, (False, existing doc) otherwise."""
        self._check_open()
        shard = self._shard_for(collection, key)
        with shard.lock:
            self._require_master(shard)
            existing = shard.master.docs.get((collection, key))
            if existing is not None:
                return False, copy.deepcopy(existing)
            return True, self._put_locked(shard, collection, key, body)

    def _put_locked(self, shard: _Shard, collection: str, key: str, body) -> WriteReceipt:
        self._require_master(shard)
        existing = shard.master.docs.get((collection, key))
        version = (existing.version if existing is not None else 0) + 1
        seq = shard.last_seq + 1
        op = {
            "type": "put",
            "seq": seq,
            "epoch": shard.epoch,
            "collection": collection,
            "key": key,
            "body": copy.deepcopy(body),
            "version": version,
        }
        self._append_log(shard, op)
        shard.oplog.append(op)
        shard.master.apply(op)
        shard.last_seq = seq
        shard.writes_since_snapshot += 1
        if self._data_dir is not None and shard.writes_since_snapshot >= self._snapshot_every:
            self._write_snapshot(shard)
        return WriteReceipt(shard_index=shard.index, sequence=seq, version=version)

    def get(self, collection: str, key: str, read_pref: str = "master") -> StoredDocument | None:
        """Read one document. master is linearizable w.r.t. receipts; slave_ok may be stale."""
        self._check_open()
        if read_pref not in ("master", "slave_ok"):
            raise ValueError(f"read_pref must be 'master' or 'slave_ok', got {read_pref!r}")
        shard = self._shard_for(collection, key)
        with shard.lock:
            node = self._reader_node(shard, read_pref)
            doc = node.docs.get((collection, key))
            return copy.deepcopy(doc) if doc is not None else None

    def scan(self, collection: str, read_pref: str = "master") -> list[StoredDocument]:
        """Every document of a collection, across shards, ordered by key."""
        self._check_open()
        if read_pref not in ("master", "slave_ok"):
            raise ValueError(f"read_pref must be 'master' or 'slave_ok', got {read_pref!r}")
        out: list[StoredDocument] = []
        for shard in self._shards:
            with shard.lock:
                node = self._reader_node(shard, read_pref)
                for (coll, _), doc in node.docs.items():
                    if coll == collection:
                        out.append(copy.deepcopy(doc))
        out.sort(key=lambda d: d.key)
        return out

    def _reader_node(self, shard: _Shard, read_pref: str) -> _Node:
        if read_pref == "slave_ok" and shard.slaves:
            return shard.slaves[0]
        self._require_master(shard)
        return shard.master

    def _require_master(self, shard: _Shard) -> None:
        if shard.master is None or shard.master_down:
            raise NoMaster(f"shard {shard.index} has no reachable master")

    # -- replication and failover -----------------------------------------

    def replicate_step(self, shard_index: int) -> int:
        """Apply all pending oplog entries to the shard's slaves, in order.

        Returns the number of (entry, slave) applications performed.
        """
        self._check_open()
        shard = self._shard_at(shard_index)
        applied = 0
        with shard.lock:
            for slave in shard.slaves:
                pending = [op for op in shard.oplog if op["seq"] > slave.applied_seq]
                for op in pending:
                    slave.apply(copy.deepcopy(op))
                    applied += 1
        return applied

    def replicate_all(self) -> int:
        return sum(self.replicate_step(i) for i in range(self.shard_count))

    def drain_replication(self) -> None:
        """Step replication until quiescent: slave reads now equal master reads."""
        while self.replicate_all() > 0:
            pass

    def mark_master_down(self, shard_index: int) -> None:
        """Operator action: declare the shard's master unreachable."""
        self._check_open()
        shard = self._shard_at(shard_index)
        with shard.lock:
            shard.master_down = True

    def promote_slave(self, shard_index: int, node_id: str) -> PromotionResult:
        """Fail over to a slave. The un-replicated oplog tail is lost and counted.

        Requires the current master to be marked down first. Any other slave
        that had applied past the promoted node's sequence is resynced from
        the new master so the prefix invariant keeps holding.
        """
        self._check_open()
        shard = self._shard_at(shard_index)
        with shard.lock:
            node = next((s for s in shard.slaves if s.node_id == node_id), None)
            if node is None:
                raise NodeNotSlave(f"node {node_id!r} is not a slave of shard {shard_index}")
            if not shard.master_down:
                raise MasterStillUp(
                    f"shard {shard_index} master {shard.master.node_id!r} is still up"
                )
            lost = shard.last_seq - node.applied_seq
            shard.epoch += 1
            shard.oplog = [op for op in shard.oplog if op["seq"] <= node.applied_seq]
            shard.last_seq = node.applied_seq
            shard.slaves.remove(node)
            shard.master = node
            shard.master_down = False
            for other in shard.slaves:
                if other.applied_seq > node.applied_seq:
                    other.docs = copy.deepcopy(node.docs)
                    other.applied_seq = node.applied_seq
            self._append_log(
                shard,
                {
                    "type": "promote",
                    "epoch": shard.epoch,
                    "new_master": node.node_id,
                    "applied_seq": node.applied_seq,
                },
            )
            shard.writes_since_snapshot = self._snapshot_every  # force checkpoint soon
            return PromotionResult(
                shard_index=shard.index,
                epoch=shard.epoch,
                master=node.node_id,
                slaves=tuple(s.node_id for s in shard.slaves),
                lost_writes=lost,
            )

    def shard_status(self) -> list[ShardStatus]:
        """Read-only snapshot, internally consistent per shard."""
        self._check_open()
        out: list[ShardStatus] = []
        for shard in self._shards:
            with shard.lock:
                out.append(
                    ShardStatus(
                        shard_index=shard.index,
                        epoch=shard.epoch,
                        master=shard.master.node_id,
                        master_down=shard.master_down,
                        master_seq=shard.last_seq,
                        doc_count=len(shard.master.docs),
                        slaves=tuple(
                            SlaveStatus(
                                node_id=s.node_id,
                                applied_seq=s.applied_seq,
                                doc_count=len(s.docs),
                            )
                            for s in shard.slaves
                        ),
                    )
                )
        return out

    # -- service mode -------------------------------------------------------

    def start_replication(self, interval: float = DEFAULT_REPLICATION_INTERVAL) -> None:
        """Timer-driven replication for service mode (tests step explicitly)."""
        self._check_open()
        if self._replication_thread is not None:
            return
        self._replication_stop.clear()

        def loop() -> None:
            while not self._replication_stop.wait(interval):
                if self._replication_paused or self._closed:
                    continue
                try:
                    self.replicate_all()
                except StoreClosed:
                    return

        self._replication_thread = threading.Thread(target=loop, name="psytest-replication", daemon=True)
        self._replication_thread.start()

    def pause_replication(self) -> None:
        self._replication_paused = True

    def resume_replication(self) -> None:
        self._replication_paused = False

    def close(self) -> None:
        """Snapshot every shard and release files; further operations fail."""
        if self._closed:
            return
        self._replication_stop.set()
        if self._replication_thread is not None:
            self._replication_thread.join(timeout=5)
            self._replication_thread = None
        for shard in self._shards:
            with shard.lock:
                if self._data_dir is not None:
                    self._write_snapshot(shard)
                if shard.log_file is not None:
                    shard.log_file.close()
                    shard.log_file = None
        self._closed = True

    @property
    def closed(self) -> bool:
        return self._closed

    def _check_open(self) -> None:
        if self._closed:
            raise StoreClosed("store is closed")

    # -- persistence --------------------------------------------------------

    def _shard_dir(self, shard: _Shard) -> Path:
        assert self._data_dir is not None
        return self._data_dir / f"shard-{shard.index}"

    def _open_log(self, shard: _Shard) -> None:
        path = self._shard_dir(shard) / "oplog.log"
        path.parent.mkdir(parents=True, exist_ok=True)
        shard.log_file = open(path, "ab")

    def _append_log(self, shard: _Shard, record: dict) -> None:
        if self._data_dir is None or shard.log_file is None:
            return
        payload = json.dumps(record, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")
        shard.log_file.write(_LENGTH_PREFIX.pack(len(payload)))
        shard.log_file.write(payload)
        shard.log_file.flush()
        if self._durable:
            os.fsync(shard.log_file.fileno())

    def _write_snapshot(self, shard: _Shard) -> None:
        if self._data_dir is None:
            return
        shard_dir = self._shard_dir(shard)
        shard_dir.mkdir(parents=True, exist_ok=True)
        snapshot = {
            "format": 1,
            "epoch": shard.epoch,
            "seq": shard.last_seq,
            "docs": [
                [doc.collection, doc.key, doc.body, doc.version]
                for doc in shard.master.docs.values()
            ],
        }
        tmp = shard_dir / "snapshot.json.tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(snapshot, fh, separators=(",", ":"), ensure_ascii=False)
            fh.flush()
            if self._durable:
                os.fsync(fh.fileno())
        os.replace(tmp, shard_dir / "snapshot.json")
        shard.writes_since_snapshot = 0

    def _recover_shard(self, shard: _Shard) -> None:
        shard_dir = self._shard_dir(shard)
        log_path = shard_dir / "oplog.log"
        records = self._read_log(log_path) if log_path.exists() else []

        # Pass 1: resolve the surviving write set (promotions roll back the
        # un-replicated tail that precedes them in the log).
        surviving: list[dict] = []
        epoch = 1
        for record in records:
            if record["type"] == "put":
                surviving.append(record)
            elif record["type"] == "promote":
                cutoff = record["applied_seq"]
                surviving = [op for op in surviving if op["seq"] <= cutoff]
                epoch = record["epoch"]

        snapshot = None
        snapshot_path = shard_dir / "snapshot.json"
        if snapshot_path.exists():
            try:
                snapshot = json.loads(snapshot_path.read_text("utf-8"))
            except (json.JSONDecodeError, UnicodeDecodeError):
                snapshot = None
        base_seq = 0
        if snapshot is not None:
            rolled_back_below_snapshot = any(
                r["type"] == "promote" and r["applied_seq"] < snapshot["seq"] for r in records
            )
            if rolled_back_below_snapshot or snapshot.get("format") != 1:
                snapshot = None
        if snapshot is not None:
            for collection, key, body, version in snapshot["docs"]:
                shard.master.docs[(collection, key)] = StoredDocument(
                    collection=collection, key=key, body=body, version=version
                )
            base_seq = snapshot["seq"]
            epoch = max(epoch, snapshot["epoch"])

        # Pass 2: apply the surviving tail.
        last_seq = base_seq
        for op in surviving:
            if op["seq"] > base_seq:
                shard.master.apply(op)
                last_seq = op["seq"]
        shard.master.applied_seq = last_seq
        shard.last_seq = max(last_seq, base_seq)
        shard.epoch = epoch
        shard.oplog = surviving  # full effective history, for catching slaves up

    def _read_log(self, path: Path) -> list[dict]:
        """Read framed records; a torn tail (crash mid-append) is discarded."""
        records: list[dict] = []
        good_end = 0
        with open(path, "rb") as fh:
            while True:
                header = fh.read(_LENGTH_PREFIX.size)
                if len(header) < _LENGTH_PREFIX.size:
                    break
                (length,) = _LENGTH_PREFIX.unpack(header)
                payload = fh.read(length)
                if len(payload) < length:
                    break
                try:
                    record = json.loads(payload.decode("utf-8"))
                except (json.JSONDecodeError, UnicodeDecodeError):
                    break
                records.append(record)
                good_end = fh.tell()
        if path.stat().st_size > good_end:
            with open(path, "ab") as fh:
                fh.truncate(good_end)
        return records


# -- package blob storage (base64 inside a document body) ---------------------


def write_package_bytes(store: Store, package_id: str, data: bytes) -> WriteReceipt:
    from .container import sha256_hex

    body = {
        "data_b64": base64.b64encode(data).decode("ascii"),
        "sha256": sha256_hex(data),
        "size": len(data),
    }
    return store.put("packages", package_id, body)


def read_package_bytes(store: Store, package_id: str, read_pref: str = "master") -> bytes:
    doc = store.get("packages", package_id, read_pref=read_pref)
    if doc is None:
        raise KeyError(f"no stored package {package_id!r}")
    return base64.b64decode(doc.body["data_b64"])
