"""Test-definition document model and validation.

The definition format is pinned by an embedded JSON Schema (draft-07) shipped
at ``psytest/schemas/test_definition_v1.json``. Validation is driven entirely
by that document: :func:`validate_test` interprets the schema at run time, so
revising the schema does not require validator code changes.

Cross-field rules the schema cannot express (unique item ids within a test)
are enforced when a document is lifted into the :class:`TestDefinition` model.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

SCHEMA_ID = "urn:psytest:test-definition:v1"
_SCHEMA_RESOURCE = "test_definition_v1.json"

ITEM_KINDS = ("single_choice", "multi_choice", "likert", "free_text", "timed_stimulus")
CHOICE_KINDS = ("single_choice", "multi_choice")


class InvalidDefinition(ValueError):
    """Document is not a valid test definition.

    Carries the :class:`ValidationReport` when the failure was found by the
    schema; ``report`` is None for model-level failures (duplicate item ids).
    """

    def __init__(self, message: str, report: "ValidationReport | None" = None):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class Violation:
    path: str  # JSON Pointer into the document ("" is the root)
    rule: str  # schema keyword that failed, or "json" for unparseable input
    message: str


@dataclass(frozen=True)
class ValidationReport:
    valid: bool
    violations: tuple[Violation, ...]

    def __post_init__(self):
        assert self.valid == (len(self.violations) == 0)


@dataclass(frozen=True)
class Item:
    item_id: str
    kind: str
    prompt: str
    options: tuple[str, ...] = ()
    asset_ref: str | None = None
    capture_latency: bool = False


@dataclass(frozen=True)
class TestDefinition:
    test_id: str
    title: str
    items: tuple[Item, ...]
    description: str = ""
    randomize_items: bool = False
    time_limit_ms: int | None = None

    def item_ids(self) -> tuple[str, ...]:
        return tuple(item.item_id for item in self.items)


def schema_document() -> str:
    """Exact text of the embedded schema, stable byte-for-byte per release."""
    return resources.files("psytest.schemas").joinpath(_SCHEMA_RESOURCE).read_text("utf-8")


@lru_cache(maxsize=1)
def _schema() -> dict:
    return json.loads(schema_document())


def validate_test(document: str | bytes) -> ValidationReport:
    """Validate a JSON document against the embedded test-definition schema.

    Total: never raises. Unparseable input is reported as a single violation
    at the document root with rule id "json".
    """
    if isinstance(document, bytes):
        try:
            document = document.decode("utf-8")
        except UnicodeDecodeError as exc:
            v = Violation("", "json", f"not valid UTF-8: {exc}")
            return ValidationReport(valid=False, violations=(v,))
    try:
        instance = json.loads(document)
    except (json.JSONDecodeError, TypeError, ValueError) as exc:
        v = Violation("", "json", f"not valid JSON: {exc}")
        return ValidationReport(valid=False, violations=(v,))
    return validate_instance(instance)


def validate_instance(instance) -> ValidationReport:
    """Validate an already-parsed JSON value against the schema."""
    root = _schema()
    out: list[Violation] = []
    _check(root, instance, "", root, out)
    return ValidationReport(valid=not out, violations=tuple(out))


def parse_test_definition(document: str | bytes) -> TestDefinition:
    """Validate and lift a JSON document into a TestDefinition.

    Raises InvalidDefinition on schema violations or duplicate item ids.
    """
    report = validate_test(document)
    if not report.valid:
        first = report.violations[0]
        raise InvalidDefinition(
            f"invalid test definition: {first.message} (at '{first.path or '/'}')",
            report=report,
        )
    doc = json.loads(document)
    items = tuple(
        Item(
            item_id=it["item_id"],
            kind=it["kind"],
            prompt=it["prompt"],
            options=tuple(it.get("options", ())),
            asset_ref=it.get("asset_ref"),
            capture_latency=it.get("capture_latency", False),
        )
        for it in doc["items"]
    )
    seen: set[str] = set()
    for it in items:
        if it.item_id in seen:
            raise InvalidDefinition(
                f"duplicate item_id '{it.item_id}' in test '{doc['test_id']}'"
            )
        seen.add(it.item_id)
    return TestDefinition(
        test_id=doc["test_id"],
        title=doc["title"],
        items=items,
        description=doc.get("description", ""),
        randomize_items=doc.get("randomize_items", False),
        time_limit_ms=doc.get("time_limit_ms"),
    )


def canonicalize(test: TestDefinition) -> str:
    """Serialize a TestDefinition to canonical JSON text.

    Lexicographic key order, no insignificant whitespace, optional fields at
    their defaults omitted. canonicalize(parse(canonicalize(x))) is a fixed
    point. Raises InvalidDefinition if the model does not satisfy the schema.
    """
    doc = _to_document(test)
    report = validate_instance(doc)
    if not report.valid:
        first = report.violations[0]
        raise InvalidDefinition(
            f"test '{test.test_id}' is not valid: {first.message} (at '{first.path or '/'}')",
            report=report,
        )
    seen: set[str] = set()
    for item in test.items:
        if item.item_id in seen:
            raise InvalidDefinition(
                f"duplicate item_id '{item.item_id}' in test '{test.test_id}'"
            )
        seen.add(item.item_id)
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def _to_document(test: TestDefinition) -> dict:
    doc: dict = {"test_id": test.test_id, "title": test.title}
    if test.description:
        doc["description"] = test.description
    if test.randomize_items:
        doc["randomize_items"] = True
    if test.time_limit_ms is not None:
        doc["time_limit_ms"] = test.time_limit_ms
    items = []
    for item in test.items:
        it: dict = {"item_id": item.item_id, "kind": item.kind, "prompt": item.prompt}
        if item.options:
            it["options"] = list(item.options)
        if item.asset_ref is not None:
            it["asset_ref"] = item.asset_ref
        if item.capture_latency:
            it["capture_latency"] = True
        items.append(it)
    doc["items"] = items
    return doc


# --- schema evaluator (draft-07 subset used by the embedded schema) ---------


def _resolve_ref(root: dict, ref: str) -> dict:
    if not ref.startswith("#/"):
        raise ValueError(f"unsupported $ref: {ref}")
    node = root
    for token in ref[2:].split("/"):
        token = token.replace("~1", "/").replace("~0", "~")
        node = node[token]
    return node


def _escape_pointer(token: str) -> str:
    return token.replace("~", "~0").replace("/", "~1")


def _json_equal(a, b) -> bool:
    # JSON-typed equality: True != 1 even though Python says otherwise.
    if isinstance(a, bool) != isinstance(b, bool):
        return False
    if isinstance(a, list) and isinstance(b, list):
        return len(a) == len(b) and all(_json_equal(x, y) for x, y in zip(a, b))
    if isinstance(a, dict) and isinstance(b, dict):
        return a.keys() == b.keys() and all(_json_equal(v, b[k]) for k, v in a.items())
    return a == b


def _is_type(instance, name: str) -> bool:
    if name == "object":
        return isinstance(instance, dict)
    if name == "array":
        return isinstance(instance, list)
    if name == "string":
        return isinstance(instance, str)
    if name == "boolean":
        return isinstance(instance, bool)
    if name == "integer":
        # draft-07: any number with a zero fractional part
        if isinstance(instance, bool):
            return False
        return isinstance(instance, int) or (isinstance(instance, float) and instance.is_integer())
    if name == "number":
        return isinstance(instance, (int, float)) and not isinstance(instance, bool)
    if name == "null":
        return instance is None
    raise ValueError(f"unsupported type keyword: {name}")


def _check(schema: dict, instance, path: str, root: dict, out: list[Violation]) -> None:
    if "$ref" in schema:
        # draft-07: $ref replaces sibling keywords
        _check(_resolve_ref(root, schema["$ref"]), instance, path, root, out)
        return

    if "type" in schema:
        names = schema["type"]
        names = [names] if isinstance(names, str) else names
        if not any(_is_type(instance, n) for n in names):
            out.append(Violation(path, "type", f"expected {' or '.join(names)}"))

    if "enum" in schema and not any(_json_equal(instance, v) for v in schema["enum"]):
        out.append(Violation(path, "enum", f"value not one of {schema['enum']}"))

    if "const" in schema and not _json_equal(instance, schema["const"]):
        out.append(Violation(path, "const", f"value must equal {schema['const']!r}"))

    if isinstance(instance, dict):
        for name in schema.get("required", ()):
            if name not in instance:
                out.append(Violation(path, "required", f"'{name}' is a required property"))
        props = schema.get("properties", {})
        for name, sub in props.items():
            if name in instance:
                _check(sub, instance[name], f"{path}/{_escape_pointer(name)}", root, out)
        if schema.get("additionalProperties") is False:
            for name in instance:
                if name not in props:
                    out.append(
                        Violation(
                            f"{path}/{_escape_pointer(name)}",
                            "additionalProperties",
                            f"unexpected property '{name}'",
                        )
                    )

    if isinstance(instance, list):
        if "minItems" in schema and len(instance) < schema["minItems"]:
            out.append(Violation(path, "minItems", f"expected at least {schema['minItems']} items"))
        if "maxItems" in schema and len(instance) > schema["maxItems"]:
            out.append(Violation(path, "maxItems", f"expected at most {schema['maxItems']} items"))
        items_schema = schema.get("items")
        if isinstance(items_schema, dict):
            for i, element in enumerate(instance):
                _check(items_schema, element, f"{path}/{i}", root, out)

    if isinstance(instance, str):
        if "minLength" in schema and len(instance) < schema["minLength"]:
            out.append(Violation(path, "minLength", f"expected at least {schema['minLength']} characters"))
        if "maxLength" in schema and len(instance) > schema["maxLength"]:
            out.append(Violation(path, "maxLength", f"expected at most {schema['maxLength']} characters"))
        if "pattern" in schema and re.search(schema["pattern"], instance) is None:
            out.append(Violation(path, "pattern", f"does not match {schema['pattern']!r}"))

    if isinstance(instance, (int, float)) and not isinstance(instance, bool):
        if "minimum" in schema and instance < schema["minimum"]:
            out.append(Violation(path, "minimum", f"must be >= {schema['minimum']}"))
        if "maximum" in schema and instance > schema["maximum"]:
            out.append(Violation(path, "maximum", f"must be <= {schema['maximum']}"))

    for sub in schema.get("allOf", ()):
        _check(sub, instance, path, root, out)

    if "if" in schema:
        probe: list[Violation] = []
        _check(schema["if"], instance, path, root, probe)
        branch = "then" if not probe else "else"
        if branch in schema:
            _check(schema[branch], instance, path, root, out)
