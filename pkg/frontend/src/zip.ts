// Stored-only ZIP reader/writer for the package container format.
//
// The writer is byte-compatible with the backend's canonical form: no
// compression, entries in lexicographic path order, DOS timestamps zeroed,
// version 20, unix made-by, mode 0644. The reader accepts exactly that
// shape and verifies each entry's CRC-32.

import { crc32 } from "./crc32.js";

const LOCAL_SIG = 0x04034b50;
const CENTRAL_SIG = 0x02014b50;
const EOCD_SIG = 0x06054b50;

export class ZipError extends Error {
  constructor(message: string, readonly entry?: string) {
    super(message);
    this.name = "ZipError";
  }
}

function asciiBytes(name: string): Uint8Array {
  const bytes = new Uint8Array(name.length);
  for (let i = 0; i < name.length; i++) {
    const code = name.charCodeAt(i);
    if (code > 0x7f) throw new ZipError(`non-ASCII entry name: ${name}`);
    bytes[i] = code;
  }
  return bytes;
}

export function writeCanonicalZip(entries: Map<string, Uint8Array>): Uint8Array {
  const names = [...entries.keys()].sort();
  const chunks: Uint8Array[] = [];
  const centrals: Uint8Array[] = [];
  let offset = 0;

  for (const name of names) {
    const data = entries.get(name)!;
    const rawName = asciiBytes(name);
    const crc = crc32(data);

    const local = new DataView(new ArrayBuffer(30));
    local.setUint32(0, LOCAL_SIG, true);
    local.setUint16(4, 20, true); // version needed
    local.setUint16(6, 0, true); // flags
    local.setUint16(8, 0, true); // method: stored
    local.setUint16(10, 0, true); // mod time, zeroed
    local.setUint16(12, 0, true); // mod date, zeroed
    local.setUint32(14, crc, true);
    local.setUint32(18, data.length, true);
    local.setUint32(22, data.length, true);
    local.setUint16(26, rawName.length, true);
    local.setUint16(28, 0, true); // extra length

    const central = new DataView(new ArrayBuffer(46));
    central.setUint32(0, CENTRAL_SIG, true);
    central.setUint16(4, (3 << 8) | 20, true); // made by: unix, zip 2.0
    central.setUint16(6, 20, true);
    central.setUint16(8, 0, true);
    central.setUint16(10, 0, true);
    central.setUint16(12, 0, true);
    central.setUint16(14, 0, true);
    central.setUint32(16, crc, true);
    central.setUint32(20, data.length, true);
    central.setUint32(24, data.length, true);
    central.setUint16(28, rawName.length, true);
    central.setUint16(30, 0, true); // extra
    central.setUint16(32, 0, true); // comment
    central.setUint16(34, 0, true); // disk number
    central.setUint16(36, 0, true); // internal attrs
    central.setUint32(38, 0o100644 << 16, true); // external attrs
    central.setUint32(42, offset, true);

    chunks.push(new Uint8Array(local.buffer), rawName, data);
    centrals.push(new Uint8Array(central.buffer), rawName);
    offset += 30 + rawName.length + data.length;
  }

  const centralOffset = offset;
  let centralSize = 0;
  for (const block of centrals) centralSize += block.length;

  const eocd = new DataView(new ArrayBuffer(22));
  eocd.setUint32(0, EOCD_SIG, true);
  eocd.setUint16(4, 0, true);
  eocd.setUint16(6, 0, true);
  eocd.setUint16(8, names.length, true);
  eocd.setUint16(10, names.length, true);
  eocd.setUint32(12, centralSize, true);
  eocd.setUint32(16, centralOffset, true);
  eocd.setUint16(20, 0, true);

  const total = centralOffset + centralSize + 22;
  const out = new Uint8Array(total);
  let position = 0;
  for (const block of [...chunks, ...centrals, new Uint8Array(eocd.buffer)]) {
    out.set(block, position);
    position += block.length;
  }
  return out;
}

export function readStoredZip(data: Uint8Array): Map<string, Uint8Array> {
  if (data.length < 22) throw new ZipError("too short to be an archive");
  const view = new DataView(data.buffer, data.byteOffset, data.byteLength);

  // locate the end-of-central-directory record (no comment in canonical form,
  // but tolerate one up to 64 KiB as the format allows)
  let eocd = -1;
  const lowest = Math.max(0, data.length - 22 - 0xffff);
  for (let i = data.length - 22; i >= lowest; i--) {
    if (view.getUint32(i, true) === EOCD_SIG) {
      eocd = i;
      break;
    }
  }
  if (eocd < 0) throw new ZipError("no end-of-central-directory record");

  const entryCount = view.getUint16(10 + eocd, true);
  const centralSize = view.getUint32(12 + eocd, true);
  const centralOffset = view.getUint32(16 + eocd, true);
  if (centralOffset + centralSize > data.length) {
    throw new ZipError("central directory out of bounds");
  }

  const out = new Map<string, Uint8Array>();
  let cursor = centralOffset;
  for (let index = 0; index < entryCount; index++) {
    if (cursor + 46 > data.length || view.getUint32(cursor, true) !== CENTRAL_SIG) {
      throw new ZipError(`bad central directory entry ${index}`);
    }
    const method = view.getUint16(cursor + 10, true);
    const expectedCrc = view.getUint32(cursor + 16, true);
    const size = view.getUint32(cursor + 24, true);
    const nameLength = view.getUint16(cursor + 28, true);
    const extraLength = view.getUint16(cursor + 30, true);
    const commentLength = view.getUint16(cursor + 32, true);
    const localOffset = view.getUint32(cursor + 42, true);
    const name = String.fromCharCode(...data.subarray(cursor + 46, cursor + 46 + nameLength));
    if (method !== 0) throw new ZipError(`entry '${name}' is compressed; expected stored`, name);

    if (localOffset + 30 > data.length || view.getUint32(localOffset, true) !== LOCAL_SIG) {
      throw new ZipError(`bad local header for '${name}'`, name);
    }
    const localNameLength = view.getUint16(localOffset + 26, true);
    const localExtraLength = view.getUint16(localOffset + 28, true);
    const start = localOffset + 30 + localNameLength + localExtraLength;
    if (start + size > data.length) throw new ZipError(`entry '${name}' out of bounds`, name);
    const body = data.subarray(start, start + size);
    if (crc32(body) !== expectedCrc) {
      throw new ZipError(`entry '${name}' failed its CRC-32 check`, name);
    }
    if (out.has(name)) throw new ZipError(`duplicate entry '${name}'`, name);
    out.set(name, body);
    cursor += 46 + nameLength + extraLength + commentLength;
  }
  return out;
}
