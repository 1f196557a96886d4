// Wire types shared with the backend's container format and REST API.

export interface PackageManifest {
  package_id: string;
  version: number;
  kind: "tests" | "results";
  created_at: string;
  description: string;
  entry_checksums: Record<string, string>;
}

export type ItemKind =
  | "single_choice"
  | "multi_choice"
  | "likert"
  | "free_text"
  | "timed_stimulus";

export interface Item {
  item_id: string;
  kind: ItemKind;
  prompt: string;
  options?: string[];
  asset_ref?: string;
  capture_latency?: boolean;
}

export interface TestDefinition {
  test_id: string;
  title: string;
  description?: string;
  items: Item[];
  randomize_items?: boolean;
  time_limit_ms?: number;
}

export interface TestPackage {
  manifest: PackageManifest;
  tests: TestDefinition[];
  assets: Map<string, Uint8Array>;
}

export interface SessionEnvelope {
  session_id: string;
  project_id: string;
  package_id: string;
  package_version: number;
  started_at_client: string;
  client_info: Record<string, string>;
}

export interface ResponseRecord {
  test_id: string;
  item_id: string;
  answer: unknown;
  shown_at_client: number; // ms since session start, monotonic clock
  answered_at_client: number;
}

export interface ManifestDraft {
  package_id: string;
  version: number;
  created_at: string;
  description: string;
}

export interface IngestReport {
  accepted: number;
  duplicate: boolean;
  rejected: { index: number; reason: string }[];
  server_received_at: string;
}
