// Shared test doubles: a controllable clock, an in-memory backend with the
// same two endpoints and idempotency rule as the real server, and a
// localStorage stand-in.

import { utf8Decode } from "../src/json.js";
import { readStoredZip } from "../src/zip.js";
import type { FetchLike } from "../src/api.js";
import type { KeyValueStore } from "../src/storage.js";

export class FakeClock {
  private mono = 0;
  private wallOffsetMs = 0;

  now(): number {
    return this.mono;
  }

  wallIso(): string {
    return new Date(1_754_650_000_000 + this.mono + this.wallOffsetMs).toISOString();
  }

  advance(ms: number): void {
    this.mono += ms;
  }

  /** Wall-clock jump (user changes the system date); monotonic time is untouched. */
  jumpWallClock(ms: number): void {
    this.wallOffsetMs += ms;
  }
}

export interface StoredSession {
  sessionId: string;
  records: { test_id: string; item_id: string; answer: unknown }[];
}

export class FakeBackend {
  online = true;
  readonly sessions = new Map<string, StoredSession>();

  constructor(private readonly packageBytes: Uint8Array) {}

  get recordCount(): number {
    let n = 0;
    for (const session of this.sessions.values()) n += session.records.length;
    return n;
  }

  fetchFn: FetchLike = async (url, init) => {
    if (!this.online) {
      throw new TypeError("fetch failed: network is unreachable");
    }
    const method = init?.method ?? "GET";
    if (method === "GET" && url.endsWith("/package")) {
      const copy = new Uint8Array(this.packageBytes);
      return new Response(copy.buffer, {
        status: 200,
        headers: { "Content-Type": "application/zip" },
      });
    }
    if (method === "POST" && url.endsWith("/results")) {
      const body = new Uint8Array(await new Response(init!.body as BodyInit).arrayBuffer());
      const entries = readStoredZip(body);
      const doc = JSON.parse(utf8Decode(entries.get("results/records.json")!)) as {
        session: { session_id: string };
        records: { test_id: string; item_id: string; answer: unknown }[];
      };
      const sessionId = doc.session.session_id;
      const duplicate = this.sessions.has(sessionId);
      if (!duplicate) {
        this.sessions.set(sessionId, { sessionId, records: doc.records });
      }
      const report = {
        accepted: duplicate ? 0 : doc.records.length,
        duplicate,
        rejected: [],
        server_received_at: "2026-08-08T12:00:00Z",
      };
      return new Response(JSON.stringify(report), {
        status: 200,
        headers: { "Content-Type": "application/json" },
      });
    }
    return new Response(JSON.stringify({ code: "NOT_FOUND", message: "no such resource" }), {
      status: 404,
    });
  };
}

export class MemoryStorage implements KeyValueStore {
  private readonly map = new Map<string, string>();

  getItem(key: string): string | null {
    return this.map.get(key) ?? null;
  }

  setItem(key: string, value: string): void {
    this.map.set(key, value);
  }

  removeItem(key: string): void {
    this.map.delete(key);
  }
}

let uuidCounter = 0;

export function testUuid(): string {
  uuidCounter += 1;
  return `00000000-0000-4000-8000-${String(uuidCounter).padStart(12, "0")}`;
}
