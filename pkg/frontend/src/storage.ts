// Unsent-result persistence: a finished session that failed to upload is kept
// in local storage, keyed by session id, until the server accepts it. Safe to
// retry forever; the server deduplicates by (project_id, session_id).

export interface KeyValueStore {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
  removeItem(key: string): void;
}

const INDEX_KEY = "psytest.pending.v1";

export interface PendingUpload {
  sessionId: string;
  projectId: string;
  container: Uint8Array;
}

const B64 = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

export function toBase64(data: Uint8Array): string {
  let out = "";
  for (let i = 0; i < data.length; i += 3) {
    const a = data[i]!;
    const b = i + 1 < data.length ? data[i + 1]! : 0;
    const c = i + 2 < data.length ? data[i + 2]! : 0;
    out += B64[a >> 2]! + B64[((a & 3) << 4) | (b >> 4)]!;
    out += i + 1 < data.length ? B64[((b & 15) << 2) | (c >> 6)]! : "=";
    out += i + 2 < data.length ? B64[c & 63]! : "=";
  }
  return out;
}

export function fromBase64(text: string): Uint8Array {
  const clean = text.replace(/=+$/, "");
  const out = new Uint8Array(Math.floor((clean.length * 3) / 4));
  let buffer = 0;
  let bits = 0;
  let position = 0;
  for (const ch of clean) {
    buffer = (buffer << 6) | B64.indexOf(ch);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out[position++] = (buffer >> bits) & 0xff;
    }
  }
  return out;
}

export class PendingStore {
  constructor(private readonly backing: KeyValueStore | null) {}

  private read(): Record<string, { projectId: string; b64: string }> {
    if (this.backing === null) return {};
    try {
      const raw = this.backing.getItem(INDEX_KEY);
      return raw ? (JSON.parse(raw) as Record<string, { projectId: string; b64: string }>) : {};
    } catch {
      return {};
    }
  }

  private write(index: Record<string, { projectId: string; b64: string }>): void {
    if (this.backing === null) return;
    try {
      this.backing.setItem(INDEX_KEY, JSON.stringify(index));
    } catch {
      // storage quota or privacy mode: the in-memory copy still uploads
    }
  }

  save(sessionId: string, projectId: string, container: Uint8Array): void {
    const index = this.read();
    index[sessionId] = { projectId, b64: toBase64(container) };
    this.write(index);
  }

  remove(sessionId: string): void {
    const index = this.read();
    delete index[sessionId];
    this.write(index);
  }

  all(): PendingUpload[] {
    return Object.entries(this.read()).map(([sessionId, entry]) => ({
      sessionId,
      projectId: entry.projectId,
      container: fromBase64(entry.b64),
    }));
  }
}

export function browserStorage(): KeyValueStore | null {
  try {
    return typeof localStorage === "undefined" ? null : localStorage;
  } catch {
    return null;
  }
}
