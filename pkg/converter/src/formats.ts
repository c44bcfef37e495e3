/**
 * The portable binary formats consumed by the classifier, plus the
 * key=value manifest. Everything little-endian.
 *
 * Cube ("HSIT"): magic, u32 version=1, u32 H, u32 W, u32 B, then H*W*B
 * float32 row-major with the band index fastest.
 * Labels ("HSIL"): magic, u32 version=1, u32 H, u32 W, u16 class count,
 * then H*W uint16 (0 = unlabeled).
 */

import * as fs from 'fs';

export class FormatError extends Error {}

export const CUBE_MAGIC = 'HSIT';
export const LABEL_MAGIC = 'HSIL';
export const FORMAT_VERSION = 1;

export function encodeCube(h: number, w: number, b: number,
                           rowMajor: Float32Array): Buffer {
  if (rowMajor.length !== h * w * b) {
    throw new FormatError(`cube payload ${rowMajor.length} != ${h}*${w}*${b}`);
  }
  const header = Buffer.alloc(20);
  header.write(CUBE_MAGIC, 0, 'latin1');
  header.writeUInt32LE(FORMAT_VERSION, 4);
  header.writeUInt32LE(h, 8);
  header.writeUInt32LE(w, 12);
  header.writeUInt32LE(b, 16);
  const payload = Buffer.alloc(rowMajor.length * 4);
  for (let i = 0; i < rowMajor.length; i++) {
    payload.writeFloatLE(rowMajor[i], i * 4);
  }
  return Buffer.concat([header, payload]);
}

export function encodeLabels(h: number, w: number, classCount: number,
                             labels: Uint16Array): Buffer {
  if (labels.length !== h * w) {
    throw new FormatError(`label payload ${labels.length} != ${h}*${w}`);
  }
  if (classCount > 0xffff) {
    throw new FormatError('class count exceeds u16');
  }
  const header = Buffer.alloc(18);
  header.write(LABEL_MAGIC, 0, 'latin1');
  header.writeUInt32LE(FORMAT_VERSION, 4);
  header.writeUInt32LE(h, 8);
  header.writeUInt32LE(w, 12);
  header.writeUInt16LE(classCount, 16);
  const payload = Buffer.alloc(labels.length * 2);
  for (let i = 0; i < labels.length; i++) {
    payload.writeUInt16LE(labels[i], i * 2);
  }
  return Buffer.concat([header, payload]);
}

export interface DecodedCube {
  height: number;
  width: number;
  bands: number;
  data: Float32Array; // row-major, band fastest
}

export function decodeCube(buf: Buffer): DecodedCube {
  if (buf.toString('latin1', 0, 4) !== CUBE_MAGIC) {
    throw new FormatError('bad cube magic');
  }
  if (buf.readUInt32LE(4) !== FORMAT_VERSION) {
    throw new FormatError('unsupported cube version');
  }
  const height = buf.readUInt32LE(8);
  const width = buf.readUInt32LE(12);
  const bands = buf.readUInt32LE(16);
  const count = height * width * bands;
  if (buf.length !== 20 + 4 * count) {
    throw new FormatError('cube payload length mismatch');
  }
  const data = new Float32Array(count);
  for (let i = 0; i < count; i++) {
    data[i] = buf.readFloatLE(20 + i * 4);
  }
  return { height, width, bands, data };
}

export interface DecodedLabels {
  height: number;
  width: number;
  classCount: number;
  labels: Uint16Array;
}

export function decodeLabels(buf: Buffer): DecodedLabels {
  if (buf.toString('latin1', 0, 4) !== LABEL_MAGIC) {
    throw new FormatError('bad label magic');
  }
  if (buf.readUInt32LE(4) !== FORMAT_VERSION) {
    throw new FormatError('unsupported label version');
  }
  const height = buf.readUInt32LE(8);
  const width = buf.readUInt32LE(12);
  const classCount = buf.readUInt16LE(16);
  const count = height * width;
  if (buf.length !== 18 + 2 * count) {
    throw new FormatError('label payload length mismatch');
  }
  const labels = new Uint16Array(count);
  for (let i = 0; i < count; i++) {
    labels[i] = buf.readUInt16LE(18 + i * 2);
  }
  return { height, width, classCount, labels };
}

export interface Manifest {
  name: string;
  bands: number;
  classNames: string[];
  quotas: number[];
  notes?: string;
}

export function encodeManifest(m: Manifest): string {
  if (m.classNames.length !== m.quotas.length) {
    throw new FormatError('class name and quota counts differ');
  }
  const lines = [`name=${m.name}`, `bands=${m.bands}`,
                 `classes=${m.classNames.length}`];
  m.classNames.forEach((cname, i) => {
    lines.push(`class.${i + 1}=${cname}`);
    lines.push(`quota.${i + 1}=${m.quotas[i]}`);
  });
  if (m.notes) {
    lines.push(`notes=${m.notes}`);
  }
  return lines.join('\n') + '\n';
}

export function writeFileBuf(path: string, buf: Buffer | string): void {
  fs.writeFileSync(path, buf);
}
