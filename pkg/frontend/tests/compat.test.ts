// Cross-language format compatibility: the player's writer must reproduce the
// backend codec's bytes exactly, and its reader must accept backend output.

import { readFileSync } from "node:fs";
import { describe, expect, it } from "vitest";

import { buildResultPackage, parseTestPackage, verifyIntegrity } from "../src/container.js";
import type { ManifestDraft, ResponseRecord, SessionEnvelope } from "../src/types.js";

const fixture = JSON.parse(
  readFileSync(new URL("../test-fixtures/fixture.json", import.meta.url), "utf-8"),
) as {
  demo_draft: ManifestDraft;
  result: { draft: ManifestDraft; session: SessionEnvelope; records: ResponseRecord[] };
};

const demoPkg = new Uint8Array(readFileSync(new URL("../test-fixtures/demo.pkg", import.meta.url)));
const resultGolden = new Uint8Array(
  readFileSync(new URL("../test-fixtures/result-golden.pkg", import.meta.url)),
);

describe("backend-built tests package", () => {
  it("parses and verifies in the player", async () => {
    expect((await verifyIntegrity(demoPkg)).ok).toBe(true);
    const pkg = await parseTestPackage(demoPkg);
    expect(pkg.manifest.kind).toBe("tests");
    expect(pkg.tests.map((t) => t.test_id)).toEqual(["big-five-style", "dark-triad-style"]);
    expect(pkg.tests.reduce((n, t) => n + t.items.length, 0)).toBe(19);
  });

  it("fails integrity after a single-byte flip, naming the entry", async () => {
    const mutated = new Uint8Array(demoPkg);
    // flip a byte inside the first test document's data region
    const marker = new TextEncoder().encode('"bf-01"');
    const index = mutated.findIndex((_, i) =>
      marker.every((b, j) => mutated[i + j] === b),
    );
    expect(index).toBeGreaterThan(0);
    mutated[index + 1]! ^= 0x01;
    const report = await verifyIntegrity(mutated);
    expect(report.ok).toBe(false);
  });
});

describe("player-built result package", () => {
  it("is byte-identical to the backend codec for identical inputs", async () => {
    const built = await buildResultPackage(
      fixture.result.draft,
      fixture.result.session,
      fixture.result.records,
    );
    expect(built.length).toBe(resultGolden.length);
    expect(Buffer.from(built).equals(Buffer.from(resultGolden))).toBe(true);
  });

  it("sorts records by answered_at_client like the backend", async () => {
    const reversed = [...fixture.result.records].reverse();
    const built = await buildResultPackage(fixture.result.draft, fixture.result.session, reversed);
    expect(Buffer.from(built).equals(Buffer.from(resultGolden))).toBe(true);
  });
});
