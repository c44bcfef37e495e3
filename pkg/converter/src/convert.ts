/**
 * One-shot conversion of a MATLAB-container dataset (cube + ground truth)
 * into HSIT/HSIL files plus a generated manifest.
 *
 * The cube is cast to float32 (single-precision sources stay bit-exact),
 * reordered from MATLAB column-major to row-major with the band index
 * fastest. Ground truth becomes uint16 with 0 preserved as unlabeled.
 * Per-class quotas follow the few-label protocol: 30 labeled pixels, or
 * 15 for classes with fewer than 30 annotated pixels.
 */

import * as fs from 'fs';
import * as path from 'path';

import { encodeCube, encodeLabels, encodeManifest, Manifest } from './formats';
import { MatArray, MX_SINGLE, readMatFile } from './mat';

export class ConversionError extends Error {}

export interface ConversionJob {
  cubePath: string;
  cubeKey: string;
  gtPath: string;
  gtKey: string;
  name: string;
  outDir: string;
  classNames?: string[];
}

export interface ConversionResult {
  cubeFile: string;
  labelFile: string;
  manifestFile: string;
  height: number;
  width: number;
  bands: number;
  classCount: number;
  quotas: number[];
}

function lookup(file: string, key: string): MatArray {
  const arrays = readMatFile(file);
  const arr = arrays.get(key);
  if (!arr) {
    const have = Array.from(arrays.keys()).join(', ') || '(none)';
    throw new ConversionError(`key '${key}' not found in ${file}; arrays: ${have}`);
  }
  return arr;
}

/** Column-major (h + H*w + H*W*b) to row-major band-fastest (b + B*(w + W*h)). */
export function cubeToRowMajor(arr: MatArray): Float32Array {
  const [h, w, b] = arr.dims;
  const out = new Float32Array(h * w * b);
  const single = arr.singleData;
  for (let band = 0; band < b; band++) {
    const planeOff = h * w * band;
    for (let col = 0; col < w; col++) {
      const colOff = planeOff + h * col;
      for (let row = 0; row < h; row++) {
        const v = single ? single[colOff + row] : arr.data[colOff + row];
        out[band + b * (col + w * row)] = Math.fround(v);
      }
    }
  }
  return out;
}

export function quotasFromCounts(counts: number[]): number[] {
  return counts.map((c) => (c >= 30 ? 30 : 15));
}

export function convert(job: ConversionJob): ConversionResult {
  const cube = lookup(job.cubePath, job.cubeKey);
  if (cube.dims.length !== 3) {
    throw new ConversionError(
      `cube array must be 3-D, got [${cube.dims.join('x')}]`);
  }
  const gt = lookup(job.gtPath, job.gtKey);
  if (gt.dims.length !== 2) {
    throw new ConversionError(`ground truth must be 2-D, got [${gt.dims.join('x')}]`);
  }
  const [h, w, b] = cube.dims;
  if (gt.dims[0] !== h || gt.dims[1] !== w) {
    throw new ConversionError(
      `ground truth is ${gt.dims[0]}x${gt.dims[1]} but cube is ${h}x${w}`);
  }

  // labels: integral, 0..65535, column-major -> row-major
  const labels = new Uint16Array(h * w);
  let maxLabel = 0;
  for (let col = 0; col < w; col++) {
    for (let row = 0; row < h; row++) {
      const v = gt.data[row + h * col];
      if (!Number.isFinite(v) || Math.floor(v) !== v) {
        throw new ConversionError(`non-integer label value ${v} at (${row}, ${col})`);
      }
      if (v < 0 || v > 0xffff) {
        throw new ConversionError(`label value ${v} outside u16 range`);
      }
      labels[col + w * row] = v;
      if (v > maxLabel) {
        maxLabel = v;
      }
    }
  }
  if (maxLabel === 0) {
    throw new ConversionError('ground truth contains no labeled pixels');
  }
  if (job.classNames && job.classNames.length !== maxLabel) {
    throw new ConversionError(
      `${job.classNames.length} class names given for ${maxLabel} classes`);
  }

  const counts = new Array<number>(maxLabel).fill(0);
  for (const v of labels) {
    if (v > 0) {
      counts[v - 1]++;
    }
  }
  const quotas = quotasFromCounts(counts);
  const manifest: Manifest = {
    name: job.name,
    bands: b,
    classNames: job.classNames
      ?? counts.map((_, i) => `Class ${i + 1}`),
    quotas,
    notes: `converted from ${path.basename(job.cubePath)}:${job.cubeKey}; `
      + `source class ${cube.classId === MX_SINGLE ? 'single' : 'numeric'}`,
  };

  fs.mkdirSync(job.outDir, { recursive: true });
  const cubeFile = path.join(job.outDir, `${job.name}.hsit`);
  const labelFile = path.join(job.outDir, `${job.name}.hsil`);
  const manifestFile = path.join(job.outDir, `${job.name}.manifest`);
  fs.writeFileSync(cubeFile, encodeCube(h, w, b, cubeToRowMajor(cube)));
  fs.writeFileSync(labelFile, encodeLabels(h, w, maxLabel, labels));
  fs.writeFileSync(manifestFile, encodeManifest(manifest));
  return {
    cubeFile, labelFile, manifestFile,
    height: h, width: w, bands: b, classCount: maxLabel, quotas,
  };
}
