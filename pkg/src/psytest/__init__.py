"""Desk-scale platform for schema-validated test packages and offline-capable results.

Core pieces: a deterministic single-file container codec, a JSON-Schema-backed
test-definition validator, a sharded master/slave document store, a public
REST API with an isolated admin/analytics listener, and a `psytest` CLI.
"""

from .container import (
    ManifestDraft,
    PackageManifest,
    ResultPackage,
    TestPackage,
    build_result_package,
    build_test_package,
    parse_package,
    verify_integrity,
)
from .results import IngestReport, ResponseRecord, SessionEnvelope
from .schema import (
    Item,
    TestDefinition,
    ValidationReport,
    canonicalize,
    parse_test_definition,
    schema_document,
    validate_test,
)
from .store import Store, fnv1a_64, shard_for_key

__version__ = "0.1.0"

__all__ = [
    "IngestReport",
    "Item",
    "ManifestDraft",
    "PackageManifest",
    "ResponseRecord",
    "ResultPackage",
    "SessionEnvelope",
    "Store",
    "TestDefinition",
    "TestPackage",
    "ValidationReport",
    "build_result_package",
    "build_test_package",
    "canonicalize",
    "fnv1a_64",
    "parse_package",
    "parse_test_definition",
    "schema_document",
    "shard_for_key",
    "validate_test",
    "verify_integrity",
    "__version__",
]
