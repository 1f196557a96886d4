// Monotonic time source. Latencies must never touch the wall clock: a user
// changing the machine's date mid-test must not alter any recorded delta.

export interface Clock {
  /** Monotonic milliseconds. Comparable only within one session. */
  now(): number;
  /** Wall-clock ISO timestamp, metadata only (never used for latency). */
  wallIso(): string;
}

export const systemClock: Clock = {
  now: () => performance.now(),
  wallIso: () => new Date().toISOString(),
};
