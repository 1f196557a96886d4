// Package container codec: parse and verify tests packages, build result
// packages byte-compatible with the backend's canonical writer.

import { canonicalJson, utf8Decode, utf8Encode } from "./json.js";
import { sha256Hex } from "./sha256.js";
import { readStoredZip, writeCanonicalZip, ZipError } from "./zip.js";
import type {
  ManifestDraft,
  PackageManifest,
  ResponseRecord,
  SessionEnvelope,
  TestDefinition,
  TestPackage,
} from "./types.js";

export const MAX_CONTAINER_BYTES = 64 * 1024 * 1024;
const MANIFEST_PATH = "manifest.json";
const RECORDS_PATH = "results/records.json";
const TEST_ENTRY = /^tests\/([A-Za-z0-9_-]+)\/test\.json$/;

export class ContainerError extends Error {
  constructor(message: string, readonly entry?: string) {
    super(message);
    this.name = "ContainerError";
  }
}

export interface EntryCheck {
  path: string;
  ok: boolean;
  reason: string;
}

export interface IntegrityReport {
  ok: boolean;
  reason: string | null;
  entries: EntryCheck[];
}

function parseManifest(raw: Uint8Array): PackageManifest {
  let doc: unknown;
  try {
    doc = JSON.parse(utf8Decode(raw));
  } catch (error) {
    throw new ContainerError(`manifest.json is not valid JSON: ${error}`);
  }
  const manifest = doc as PackageManifest;
  const keys = Object.keys(manifest as object).sort();
  const expected = ["created_at", "description", "entry_checksums", "kind", "package_id", "version"];
  if (JSON.stringify(keys) !== JSON.stringify(expected)) {
    throw new ContainerError(`manifest keys must be exactly ${expected.join(", ")}`);
  }
  if (manifest.kind !== "tests" && manifest.kind !== "results") {
    throw new ContainerError(`unknown package kind '${manifest.kind}'`);
  }
  if (!Number.isInteger(manifest.version) || manifest.version < 1) {
    throw new ContainerError("manifest version must be a positive integer");
  }
  return manifest;
}

async function readVerifiedEntries(
  data: Uint8Array,
): Promise<{ manifest: PackageManifest; blobs: Map<string, Uint8Array> }> {
  if (data.length > MAX_CONTAINER_BYTES) {
    throw new ContainerError(`container is ${data.length} bytes, cap is ${MAX_CONTAINER_BYTES}`);
  }
  let entries: Map<string, Uint8Array>;
  try {
    entries = readStoredZip(data);
  } catch (error) {
    if (error instanceof ZipError) throw new ContainerError(error.message, error.entry);
    throw error;
  }
  const manifestRaw = entries.get(MANIFEST_PATH);
  if (manifestRaw === undefined) throw new ContainerError("container has no manifest.json");
  const manifest = parseManifest(manifestRaw);

  const listed = new Set(Object.keys(manifest.entry_checksums));
  const blobs = new Map<string, Uint8Array>();
  for (const [name, blob] of entries) {
    if (name === MANIFEST_PATH) continue;
    if (!listed.has(name)) throw new ContainerError(`entry not listed in manifest: '${name}'`, name);
    blobs.set(name, blob);
  }
  for (const name of listed) {
    if (!blobs.has(name)) throw new ContainerError(`manifest lists missing entry: '${name}'`, name);
    const digest = await sha256Hex(blobs.get(name)!);
    if (digest !== manifest.entry_checksums[name]) {
      throw new ContainerError(`checksum mismatch for entry '${name}'`, name);
    }
  }
  return { manifest, blobs };
}

export async function parseTestPackage(data: Uint8Array): Promise<TestPackage> {
  const { manifest, blobs } = await readVerifiedEntries(data);
  if (manifest.kind !== "tests") {
    throw new ContainerError(`expected a tests package, got kind=${manifest.kind}`);
  }
  const tests: TestDefinition[] = [];
  const assets = new Map<string, Uint8Array>();
  for (const name of [...blobs.keys()].sort()) {
    if (name.startsWith("assets/")) {
      assets.set(name.slice("assets/".length), blobs.get(name)!);
      continue;
    }
    const match = TEST_ENTRY.exec(name);
    if (!match) throw new ContainerError(`unexpected entry in tests package: '${name}'`, name);
    const test = JSON.parse(utf8Decode(blobs.get(name)!)) as TestDefinition;
    if (test.test_id !== match[1]) {
      throw new ContainerError(`entry '${name}' holds test_id '${test.test_id}'`, name);
    }
    if (!Array.isArray(test.items) || test.items.length === 0) {
      throw new ContainerError(`test '${test.test_id}' has no items`, name);
    }
    tests.push(test);
  }
  if (tests.length === 0) throw new ContainerError("tests package contains no tests");
  for (const test of tests) {
    for (const item of test.items) {
      if (item.asset_ref !== undefined && !assets.has(item.asset_ref)) {
        throw new ContainerError(
          `item '${item.item_id}' of '${test.test_id}' references missing asset '${item.asset_ref}'`,
        );
      }
    }
  }
  return { manifest, tests, assets };
}

export async function verifyIntegrity(data: Uint8Array): Promise<IntegrityReport> {
  const entries: EntryCheck[] = [];
  if (data.length === 0) return { ok: false, reason: "MissingManifest", entries };
  if (data.length > MAX_CONTAINER_BYTES) return { ok: false, reason: "PackageTooLarge", entries };
  let zipEntries: Map<string, Uint8Array>;
  try {
    zipEntries = readStoredZip(data);
  } catch {
    return { ok: false, reason: "MalformedContainer", entries };
  }
  const manifestRaw = zipEntries.get(MANIFEST_PATH);
  if (manifestRaw === undefined) return { ok: false, reason: "MissingManifest", entries };
  let manifest: PackageManifest;
  try {
    manifest = parseManifest(manifestRaw);
    entries.push({ path: MANIFEST_PATH, ok: true, reason: "" });
  } catch {
    entries.push({ path: MANIFEST_PATH, ok: false, reason: "manifest unreadable" });
    return { ok: false, reason: "MalformedContainer", entries };
  }
  const listed = new Set(Object.keys(manifest.entry_checksums));
  const actual = new Set([...zipEntries.keys()].filter((n) => n !== MANIFEST_PATH));
  let allOk = true;
  for (const name of [...new Set([...listed, ...actual])].sort()) {
    if (!actual.has(name)) {
      entries.push({ path: name, ok: false, reason: "missing from container" });
      allOk = false;
    } else if (!listed.has(name)) {
      entries.push({ path: name, ok: false, reason: "not listed in manifest" });
      allOk = false;
    } else if ((await sha256Hex(zipEntries.get(name)!)) !== manifest.entry_checksums[name]) {
      entries.push({ path: name, ok: false, reason: "SHA-256 mismatch" });
      allOk = false;
    } else {
      entries.push({ path: name, ok: true, reason: "" });
    }
  }
  return { ok: allOk, reason: allOk ? null : "ChecksumMismatch", entries };
}

export async function buildResultPackage(
  draft: ManifestDraft,
  session: SessionEnvelope,
  records: ResponseRecord[],
): Promise<Uint8Array> {
  const ordered = [...records].sort((a, b) => a.answered_at_client - b.answered_at_client);
  const doc = {
    session: {
      session_id: session.session_id,
      project_id: session.project_id,
      package_id: session.package_id,
      package_version: session.package_version,
      started_at_client: session.started_at_client,
      client_info: session.client_info,
    },
    records: ordered.map((r) => ({
      test_id: r.test_id,
      item_id: r.item_id,
      answer: r.answer,
      shown_at_client: r.shown_at_client,
      answered_at_client: r.answered_at_client,
    })),
  };
  const payload = utf8Encode(canonicalJson(doc));
  const manifest: PackageManifest = {
    package_id: draft.package_id,
    version: draft.version,
    kind: "results",
    created_at: draft.created_at,
    description: draft.description,
    entry_checksums: { [RECORDS_PATH]: await sha256Hex(payload) },
  };
  const entries = new Map<string, Uint8Array>([
    [MANIFEST_PATH, utf8Encode(canonicalJson(manifest))],
    [RECORDS_PATH, payload],
  ]);
  return writeCanonicalZip(entries);
}
