/**
 * Minimal level-5 MAT writer for test fixtures: real numeric N-D arrays,
 * little-endian, optionally zlib-compressed like MATLAB's default save.
 */

import * as zlib from 'zlib';

const MI_INT32 = 5;
const MI_UINT16 = 4;
const MI_SINGLE = 7;
const MI_DOUBLE = 9;
const MI_UINT32 = 6;
const MI_INT8 = 1;
const MI_MATRIX = 14;
const MI_COMPRESSED = 15;

export type FixtureArray = {
  name: string;
  dims: number[];
  /** column-major values */
  values: Float64Array | Float32Array | Uint16Array;
  classId: number; // 6 double, 7 single, 11 uint16
};

function pad8(buf: Buffer): Buffer {
  const rem = buf.length % 8;
  return rem === 0 ? buf : Buffer.concat([buf, Buffer.alloc(8 - rem)]);
}

function element(type: number, data: Buffer): Buffer {
  const tag = Buffer.alloc(8);
  tag.writeUInt32LE(type, 0);
  tag.writeUInt32LE(data.length, 4);
  return pad8(Buffer.concat([tag, data]));
}

function payload(arr: FixtureArray): Buffer {
  if (arr.values instanceof Float32Array) {
    const b = Buffer.alloc(arr.values.length * 4);
    arr.values.forEach((v, i) => b.writeFloatLE(v, i * 4));
    return element(MI_SINGLE, b);
  }
  if (arr.values instanceof Uint16Array) {
    const b = Buffer.alloc(arr.values.length * 2);
    arr.values.forEach((v, i) => b.writeUInt16LE(v, i * 2));
    return element(MI_UINT16, b);
  }
  const b = Buffer.alloc(arr.values.length * 8);
  arr.values.forEach((v, i) => b.writeDoubleLE(v, i * 8));
  return element(MI_DOUBLE, b);
}

function matrixElement(arr: FixtureArray): Buffer {
  const flags = Buffer.alloc(8);
  flags.writeUInt32LE(arr.classId, 0);
  const dims = Buffer.alloc(arr.dims.length * 4);
  arr.dims.forEach((d, i) => dims.writeInt32LE(d, i * 4));
  const body = Buffer.concat([
    element(MI_UINT32, flags),
    element(MI_INT32, dims),
    element(MI_INT8, Buffer.from(arr.name, 'latin1')),
    payload(arr),
  ]);
  return element(MI_MATRIX, body);
}

export function writeMat(arrays: FixtureArray[], compress = false): Buffer {
  const header = Buffer.alloc(128);
  header.write('MATLAB 5.0 MAT-file, written by test fixture', 0, 'latin1');
  header.writeUInt16LE(0x0100, 124);
  header.write('IM', 126, 'latin1');
  const parts = arrays.map((arr) => {
    const el = matrixElement(arr);
    if (!compress) {
      return el;
    }
    const deflated = zlib.deflateSync(el);
    const tag = Buffer.alloc(8);
    tag.writeUInt32LE(MI_COMPRESSED, 0);
    tag.writeUInt32LE(deflated.length, 4);
    // compressed elements are not padded (matches MATLAB and scipy output)
    return Buffer.concat([tag, deflated]);
  });
  return Buffer.concat([header, ...parts]);
}
