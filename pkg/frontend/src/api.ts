// REST client: the player talks to exactly two endpoints. Every network
// call is appended to requestLog so tests can assert offline completeness.

import type { IngestReport } from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class HttpError extends Error {
  constructor(readonly status: number, readonly code: string, message: string) {
    super(message);
    this.name = "HttpError";
  }
}

export class PlayerApi {
  readonly requestLog: { method: string; url: string }[] = [];

  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  /** The whole package in one request. */
  async downloadPackage(projectId: string): Promise<Uint8Array> {
    const url = `${this.baseUrl}/api/v1/projects/${projectId}/package`;
    this.requestLog.push({ method: "GET", url });
    const response = await this.fetchFn(url);
    if (!response.ok) throw await this.toError(response);
    return new Uint8Array(await response.arrayBuffer());
  }

  async uploadResults(projectId: string, container: Uint8Array): Promise<IngestReport> {
    const url = `${this.baseUrl}/api/v1/projects/${projectId}/results`;
    this.requestLog.push({ method: "POST", url });
    const body = container.buffer.slice(
      container.byteOffset,
      container.byteOffset + container.byteLength,
    ) as ArrayBuffer;
    const response = await this.fetchFn(url, {
      method: "POST",
      headers: { "Content-Type": "application/zip" },
      body,
    });
    if (!response.ok) throw await this.toError(response);
    return (await response.json()) as IngestReport;
  }

  private async toError(response: Response): Promise<HttpError> {
    let code = "HTTP_ERROR";
    let message = `request failed with status ${response.status}`;
    try {
      const body = (await response.json()) as { code?: string; message?: string };
      if (body.code) code = body.code;
      if (body.message) message = body.message;
    } catch {
      // non-JSON error body; keep defaults
    }
    return new HttpError(response.status, code, message);
  }
}
