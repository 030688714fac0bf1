/**
 * EMV1 volume codec over native typed arrays.
 *
 * Layout: 4-byte magic "EMV1", 1-byte dtype code, three little-endian u64
 * dims (D, H, W), then the raw little-endian payload in x-fastest order.
 *
 * Decoding is zero-copy when the payload lands 8-byte aligned in its own
 * ArrayBuffer (the file read path guarantees this); decoding from an
 * arbitrary buffer falls back to a copy and emits a warning.
 */

import { Buffer } from "node:buffer";
import * as fs from "node:fs/promises";
import * as os from "node:os";

export const MAGIC = "EMV1";
export const HEADER_SIZE = 29;

export type Dtype = "u8" | "u16" | "u32" | "u64" | "f32";

export type VolumeArray =
  | Uint8Array
  | Uint16Array
  | Uint32Array
  | BigUint64Array
  | Float32Array;

export interface VolumeData<T extends VolumeArray = VolumeArray> {
  dims: [number, number, number];
  data: T;
}

interface DtypeInfo {
  code: number;
  bytes: number;
  ctor: new (buffer: ArrayBufferLike, byteOffset: number, length: number) => VolumeArray;
}

const DTYPES: Record<Dtype, DtypeInfo> = {
  u8: { code: 0, bytes: 1, ctor: Uint8Array },
  u16: { code: 1, bytes: 2, ctor: Uint16Array },
  u32: { code: 2, bytes: 4, ctor: Uint32Array },
  u64: { code: 3, bytes: 8, ctor: BigUint64Array },
  f32: { code: 4, bytes: 4, ctor: Float32Array },
};

const DTYPE_BY_CODE = new Map(Object.entries(DTYPES).map(([name, d]) => [d.code, name as Dtype]));

if (os.endianness() !== "LE") {
  throw new Error("mitoseg-bridge requires a little-endian host");
}

export function dtypeOf(data: VolumeArray): Dtype {
  if (data instanceof Uint8Array) return "u8";
  if (data instanceof Uint16Array) return "u16";
  if (data instanceof Uint32Array) return "u32";
  if (data instanceof BigUint64Array) return "u64";
  if (data instanceof Float32Array) return "f32";
  throw new Error(`unsupported typed array: ${(data as object).constructor.name}`);
}

export function encodeHeader(dims: [number, number, number], dtype: Dtype): Buffer {
  const header = Buffer.alloc(HEADER_SIZE);
  header.write(MAGIC, 0, "ascii");
  header.writeUInt8(DTYPES[dtype].code, 4);
  header.writeBigUInt64LE(BigInt(dims[0]), 5);
  header.writeBigUInt64LE(BigInt(dims[1]), 13);
  header.writeBigUInt64LE(BigInt(dims[2]), 21);
  return header;
}

export async function writeVolume(path: string, volume: VolumeData): Promise<void> {
  const { dims, data } = volume;
  const n = dims[0] * dims[1] * dims[2];
  if (data.length !== n) {
    throw new Error(`volume data length ${data.length} does not match dims ${dims}`);
  }
  const header = encodeHeader(dims, dtypeOf(data));
  // payload is a view over the caller's buffer: no copy
  const payload = Buffer.from(data.buffer, data.byteOffset, data.byteLength);
  const handle = await fs.open(path, "w");
  try {
    await handle.writev([header, payload]);
  } finally {
    await handle.close();
  }
}

function parseHeader(header: Buffer): { dims: [number, number, number]; dtype: Dtype } {
  if (header.length < HEADER_SIZE || header.toString("ascii", 0, 4) !== MAGIC) {
    throw new Error("not an EMV1 file");
  }
  const code = header.readUInt8(4);
  const dtype = DTYPE_BY_CODE.get(code);
  if (dtype === undefined) {
    throw new Error(`unknown dtype code ${code}`);
  }
  const dims: [number, number, number] = [
    Number(header.readBigUInt64LE(5)),
    Number(header.readBigUInt64LE(13)),
    Number(header.readBigUInt64LE(21)),
  ];
  return { dims, dtype };
}

export async function readVolume(path: string): Promise<VolumeData> {
  const handle = await fs.open(path, "r");
  try {
    const header = Buffer.alloc(HEADER_SIZE);
    await handle.read(header, 0, HEADER_SIZE, 0);
    const { dims, dtype } = parseHeader(header);
    const info = DTYPES[dtype];
    const n = dims[0] * dims[1] * dims[2];
    const stat = await handle.stat();
    if (stat.size !== HEADER_SIZE + n * info.bytes) {
      throw new Error(
        `payload of ${path} holds ${stat.size - HEADER_SIZE} bytes, expected ${n * info.bytes}`,
      );
    }
    // allocUnsafeSlow owns its ArrayBuffer at offset 0: the typed-array
    // view below is aligned and zero-copy
    const payload = Buffer.allocUnsafeSlow(n * info.bytes);
    await handle.read(payload, 0, payload.length, HEADER_SIZE);
    return { dims, data: new info.ctor(payload.buffer, payload.byteOffset, n) };
  } finally {
    await handle.close();
  }
}

/** Decode a volume from an in-memory buffer (copies when misaligned). */
export function decodeVolume(buffer: Buffer): VolumeData {
  const { dims, dtype } = parseHeader(buffer);
  const info = DTYPES[dtype];
  const n = dims[0] * dims[1] * dims[2];
  if (buffer.length !== HEADER_SIZE + n * info.bytes) {
    throw new Error(`payload holds ${buffer.length - HEADER_SIZE} bytes, expected ${n * info.bytes}`);
  }
  const byteOffset = buffer.byteOffset + HEADER_SIZE;
  if (byteOffset % info.bytes === 0) {
    return { dims, data: new info.ctor(buffer.buffer, byteOffset, n) };
  }
  process.emitWarning(
    `EMV1 payload is misaligned for ${dtype}; copying to an aligned buffer`,
    { code: "MITOSEG_COPY" },
  );
  const aligned = Buffer.allocUnsafeSlow(n * info.bytes);
  buffer.copy(aligned, 0, HEADER_SIZE, HEADER_SIZE + n * info.bytes);
  return { dims, data: new info.ctor(aligned.buffer, 0, n) };
}
