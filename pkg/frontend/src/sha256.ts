// SHA-256 over WebCrypto (available in every target browser and Node >= 18).

export async function sha256Hex(data: Uint8Array): Promise<string> {
  const copy = new Uint8Array(data); // detach from any shared backing buffer
  const digest = await crypto.subtle.digest("SHA-256", copy);
  return Array.from(new Uint8Array(digest), (b) => b.toString(16).padStart(2, "0")).join("");
}
