// Orchestration: load -> verify -> run offline -> build result -> upload.
// After the package is loaded no network is touched until finishAndUpload;
// a failed upload is persisted locally and retried on demand.

import { PlayerApi } from "./api.js";
import { buildResultPackage, parseTestPackage, verifyIntegrity } from "./container.js";
import { systemClock, type Clock } from "./clock.js";
import { orderSeed } from "./prng.js";
import { PendingStore } from "./storage.js";
import {
  currentStep,
  initialState,
  reduce,
  type Action,
  type PlayerState,
  type PresentationStep,
} from "./state.js";
import type { IngestReport, ManifestDraft, SessionEnvelope } from "./types.js";

export class IntegrityFailure extends Error {
  constructor(readonly failures: { path: string; reason: string }[]) {
    super(`package failed integrity verification: ${failures.map((f) => f.path).join(", ")}`);
    this.name = "IntegrityFailure";
  }
}

export interface PlayerOptions {
  clock?: Clock;
  storage?: PendingStore;
  clientInfo?: Record<string, string>;
  uuid?: () => string;
  onChange?: (state: PlayerState) => void;
}

export class Player {
  state: PlayerState = initialState();
  private readonly clock: Clock;
  private readonly storage: PendingStore;
  private readonly clientInfo: Record<string, string>;
  private readonly uuid: () => string;
  private readonly onChange?: (state: PlayerState) => void;
  private shownAt: number | null = null;
  private resultContainer: Uint8Array | null = null;

  constructor(readonly api: PlayerApi, options: PlayerOptions = {}) {
    this.clock = options.clock ?? systemClock;
    this.storage = options.storage ?? new PendingStore(null);
    this.clientInfo = options.clientInfo ?? {};
    this.uuid = options.uuid ?? (() => crypto.randomUUID());
    this.onChange = options.onChange;
  }

  private dispatch(action: Action): void {
    this.state = reduce(this.state, action);
    this.onChange?.(this.state);
  }

  /** One request fetches the whole package; integrity is verified before any
   * item can render. After this resolves the test runs with zero network. */
  async load(projectId: string): Promise<void> {
    const bytes = await this.api.downloadPackage(projectId);
    const integrity = await verifyIntegrity(bytes);
    if (!integrity.ok) {
      throw new IntegrityFailure(
        integrity.entries.filter((e) => !e.ok).map((e) => ({ path: e.path, reason: e.reason })),
      );
    }
    const pkg = await parseTestPackage(bytes);
    const sessionId = this.uuid();
    const session: SessionEnvelope = {
      session_id: sessionId,
      project_id: projectId,
      package_id: pkg.manifest.package_id,
      package_version: pkg.manifest.version,
      started_at_client: this.clock.wallIso(),
      client_info: {
        ...this.clientInfo,
        item_order_seed: String(orderSeed(sessionId)),
      },
    };
    this.dispatch({ type: "package_loaded", pkg, session });
  }

  start(): void {
    this.dispatch({ type: "start", atMono: this.clock.now() });
    this.markShown();
  }

  /** The UI calls this when the current item becomes visible; the latency
   * window opens here. */
  markShown(): void {
    if (this.state.phase === "in_test") {
      this.shownAt = this.clock.now();
    }
  }

  current(): PresentationStep | null {
    return currentStep(this.state);
  }

  answer(value: unknown): void {
    const step = this.current();
    if (step === null) {
      throw new Error("no current item to answer");
    }
    const shown = this.shownAt ?? this.clock.now();
    this.dispatch({
      type: "answer",
      draft: {
        item_id: step.item.item_id,
        value,
        shown_at: shown,
        answered_at: this.clock.now(),
      },
    });
    this.shownAt = null;
    this.markShown();
  }

  /** Build the result container (identical format to the backend codec) and
   * upload it; on failure the container is persisted for manual retry. */
  async finishAndUpload(): Promise<IngestReport | null> {
    const session = this.state.session;
    if (session === null) throw new Error("no session");
    if (this.resultContainer === null) {
      const draft: ManifestDraft = {
        package_id: this.uuid(),
        version: 1,
        created_at: this.clock.wallIso(),
        description: "",
      };
      this.resultContainer = await buildResultPackage(draft, session, this.state.records);
    }
    this.dispatch({ type: "upload_start" });
    try {
      const report = await this.api.uploadResults(session.project_id, this.resultContainer);
      this.storage.remove(session.session_id);
      this.dispatch({ type: "upload_ok", report });
      return report;
    } catch (error) {
      this.storage.save(session.session_id, session.project_id, this.resultContainer);
      this.dispatch({ type: "upload_failed", reason: String(error) });
      return null;
    }
  }

  async retryUpload(): Promise<IngestReport | null> {
    return this.finishAndUpload();
  }
}

/** Upload every persisted session that never reached the server (called on
 * app start, or when connectivity returns). The server's idempotency makes
 * over-delivery safe. */
export async function flushPending(api: PlayerApi, storage: PendingStore): Promise<number> {
  let delivered = 0;
  for (const pending of storage.all()) {
    try {
      await api.uploadResults(pending.projectId, pending.container);
      storage.remove(pending.sessionId);
      delivered += 1;
    } catch {
      // still offline or rejected; keep the payload for the next attempt
    }
  }
  return delivered;
}
