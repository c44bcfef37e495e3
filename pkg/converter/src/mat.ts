/**
 * Minimal reader for MATLAB level-5 container files (.mat).
 *
 * Covers what hyperspectral dataset archives actually use: real numeric
 * N-D arrays (double, single, and the integer classes), stored raw or
 * zlib-compressed, little-endian. Values come back as Float64Array in the
 * file's own column-major order together with raw Float32Array access for
 * single-precision payloads so a float32 pipeline can stay bit-exact.
 *
 * v7.3 files are HDF5 and rejected with a pointer to `-v7`.
 */

import * as fs from 'fs';
import * as zlib from 'zlib';

export class MatFormatError extends Error {}

// MAT data type tags
const MI_INT8 = 1;
const MI_UINT8 = 2;
const MI_INT16 = 3;
const MI_UINT16 = 4;
const MI_INT32 = 5;
const MI_UINT32 = 6;
const MI_SINGLE = 7;
const MI_DOUBLE = 9;
const MI_INT64 = 12;
const MI_UINT64 = 13;
const MI_MATRIX = 14;
const MI_COMPRESSED = 15;
const MI_UTF8 = 16;

// mxArray class ids
export const MX_DOUBLE = 6;
export const MX_SINGLE = 7;
const MX_NUMERIC_CLASSES = new Set([6, 7, 8, 9, 10, 11, 12, 13, 14, 15]);
const MX_INTEGER_CLASSES = new Set([8, 9, 10, 11, 12, 13, 14, 15]);

export interface MatArray {
  name: string;
  /** dimensions exactly as stored; data is column-major over these */
  dims: number[];
  classId: number;
  isIntegerClass: boolean;
  /** values widened to f64, column-major */
  data: Float64Array;
  /** present when the stored class is single precision */
  singleData?: Float32Array;
}

interface Element {
  type: number;
  bytes: Buffer;
}

function readTag(buf: Buffer, offset: number): { type: number; size: number; small: boolean } {
  const first = buf.readUInt32LE(offset);
  const smallSize = first >>> 16;
  if (smallSize !== 0) {
    return { type: first & 0xffff, size: smallSize, small: true };
  }
  return { type: first, size: buf.readUInt32LE(offset + 4), small: false };
}

/** Walk the sub-elements of a buffer sequentially. */
function* elements(buf: Buffer): Generator<Element> {
  let offset = 0;
  while (offset + 8 <= buf.length) {
    const { type, size, small } = readTag(buf, offset);
    const dataStart = offset + (small ? 4 : 8);
    if (dataStart + size > buf.length) {
      throw new MatFormatError('truncated data element');
    }
    yield { type, bytes: buf.subarray(dataStart, dataStart + size) };
    if (small) {
      offset += 8; // small elements always occupy one 8-byte slot
    } else {
      offset = dataStart + size;
      if (type !== MI_COMPRESSED) {
        offset += (8 - (offset % 8)) % 8; // pad to 8-byte boundary
      }
      // compressed elements are written back to back, unpadded
    }
  }
}

function widen(type: number, bytes: Buffer): Float64Array {
  const makeView = <T extends ArrayLike<number> | BigInt64Array | BigUint64Array>(
    ctor: new (b: ArrayBufferLike, o: number, l: number) => T, width: number): T => {
    if (bytes.length % width !== 0) {
      throw new MatFormatError('numeric payload length not a multiple of its width');
    }
    // copy to guarantee alignment
    const copy = Buffer.from(bytes);
    return new ctor(copy.buffer, copy.byteOffset, bytes.length / width);
  };
  switch (type) {
    case MI_DOUBLE: return Float64Array.from(makeView(Float64Array, 8));
    case MI_SINGLE: return Float64Array.from(makeView(Float32Array, 4));
    case MI_INT8: return Float64Array.from(makeView(Int8Array, 1));
    case MI_UINT8: return Float64Array.from(makeView(Uint8Array, 1));
    case MI_INT16: return Float64Array.from(makeView(Int16Array, 2));
    case MI_UINT16: return Float64Array.from(makeView(Uint16Array, 2));
    case MI_INT32: return Float64Array.from(makeView(Int32Array, 4));
    case MI_UINT32: return Float64Array.from(makeView(Uint32Array, 4));
    case MI_INT64: {
      const v = makeView(BigInt64Array, 8);
      return Float64Array.from(v, (x) => Number(x));
    }
    case MI_UINT64: {
      const v = makeView(BigUint64Array, 8);
      return Float64Array.from(v, (x) => Number(x));
    }
    default:
      throw new MatFormatError(`unsupported numeric storage type ${type}`);
  }
}

function parseMatrix(bytes: Buffer): MatArray | null {
  const parts = Array.from(elements(bytes));
  if (parts.length < 3) {
    throw new MatFormatError('matrix element is missing sub-elements');
  }
  const [flagsEl, dimsEl, nameEl, ...rest] = parts;
  if (flagsEl.type !== MI_UINT32 || flagsEl.bytes.length < 8) {
    throw new MatFormatError('bad array flags sub-element');
  }
  const flags = flagsEl.bytes.readUInt32LE(0);
  const classId = flags & 0xff;
  const complex = (flags & 0x0800) !== 0;
  if (!MX_NUMERIC_CLASSES.has(classId)) {
    return null; // cell/struct/char/sparse: callers only need numeric arrays
  }
  if (complex) {
    throw new MatFormatError('complex arrays are not supported');
  }
  if (dimsEl.type !== MI_INT32) {
    throw new MatFormatError('bad dimensions sub-element');
  }
  const dims: number[] = [];
  for (let i = 0; i < dimsEl.bytes.length; i += 4) {
    dims.push(dimsEl.bytes.readInt32LE(i));
  }
  const rawName = nameEl.type === MI_UTF8 ? nameEl.bytes.toString('utf8')
    : nameEl.bytes.toString('latin1');
  const name = rawName.replace(/\0+$/, '');
  if (rest.length < 1) {
    throw new MatFormatError(`array ${name} has no data sub-element`);
  }
  const dataEl = rest[0];
  const expected = dims.reduce((a, b) => a * b, 1);
  const data = widen(dataEl.type, dataEl.bytes);
  if (data.length !== expected) {
    throw new MatFormatError(
      `array ${name}: ${data.length} values for dims [${dims.join('x')}]`);
  }
  const out: MatArray = {
    name,
    dims,
    classId,
    isIntegerClass: MX_INTEGER_CLASSES.has(classId),
    data,
  };
  if (dataEl.type === MI_SINGLE) {
    const copy = Buffer.from(dataEl.bytes);
    out.singleData = new Float32Array(copy.buffer, copy.byteOffset, data.length);
  }
  return out;
}

export function readMat(buf: Buffer): Map<string, MatArray> {
  if (buf.length >= 8 && buf.readUInt32BE(0) === 0x89484446) {
    throw new MatFormatError(
      'this is a v7.3 (HDF5) MAT file; re-save it with -v7 or earlier');
  }
  if (buf.length < 128) {
    throw new MatFormatError('file too short for a level-5 MAT header');
  }
  const endian = buf.toString('latin1', 126, 128);
  if (endian === 'MI') {
    throw new MatFormatError('big-endian MAT files are not supported');
  }
  if (endian !== 'IM') {
    throw new MatFormatError('not a level-5 MAT file (bad endian indicator)');
  }
  const version = buf.readUInt16LE(124);
  if (version !== 0x0100) {
    throw new MatFormatError(`unsupported MAT version 0x${version.toString(16)}`);
  }

  const out = new Map<string, MatArray>();
  for (const el of elements(buf.subarray(128))) {
    let matrixBytes: Buffer;
    if (el.type === MI_COMPRESSED) {
      const inflated = zlib.inflateSync(el.bytes);
      const inner = Array.from(elements(inflated));
      if (inner.length !== 1 || inner[0].type !== MI_MATRIX) {
        continue;
      }
      matrixBytes = inner[0].bytes;
    } else if (el.type === MI_MATRIX) {
      matrixBytes = el.bytes;
    } else {
      continue;
    }
    const arr = parseMatrix(matrixBytes);
    if (arr) {
      out.set(arr.name, arr);
    }
  }
  return out;
}

export function readMatFile(path: string): Map<string, MatArray> {
  return readMat(fs.readFileSync(path));
}
