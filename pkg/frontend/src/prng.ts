// Deterministic item-order shuffling. The seed derives from the session id,
// so analysts can reconstruct each participant's presentation order from the
// envelope alone.

export function fnv1a32(text: string): number {
  let hash = 0x811c9dc5;
  for (let i = 0; i < text.length; i++) {
    hash ^= text.charCodeAt(i);
    hash = Math.imul(hash, 0x01000193) >>> 0;
  }
  return hash >>> 0;
}

export function mulberry32(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state + 0x6d2b79f5) >>> 0;
    let t = state;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

export function orderSeed(sessionId: string): number {
  return fnv1a32(sessionId);
}

/** Fisher-Yates with a per-(session, test) stream; pure, input untouched. */
export function seededShuffle<T>(items: readonly T[], sessionId: string, testId: string): T[] {
  const random = mulberry32(fnv1a32(`${sessionId}/${testId}`));
  const out = [...items];
  for (let i = out.length - 1; i > 0; i--) {
    const j = Math.floor(random() * (i + 1));
    [out[i], out[j]] = [out[j]!, out[i]!];
  }
  return out;
}
