#!/usr/bin/env node
/**
 * hsi-convert --cube data.mat:key --gt gt.mat:key --name salinas --out dir/
 *
 * Exit codes: 0 success, 1 conversion failure, 2 usage error.
 */

import { convert, ConversionError } from './convert';
import { MatFormatError } from './mat';

interface Args {
  cube: string;
  gt: string;
  name: string;
  out: string;
  classNames?: string[];
}

function usage(): string {
  return [
    'usage: hsi-convert --cube <file.mat:key> --gt <file.mat:key>',
    '                   --name <dataset-name> --out <directory>',
    '                   [--class-names "Name 1,Name 2,..."]',
  ].join('\n');
}

function parseArgs(argv: string[]): Args {
  const values = new Map<string, string>();
  for (let i = 0; i < argv.length; i += 2) {
    const flag = argv[i];
    const value = argv[i + 1];
    if (!flag.startsWith('--') || value === undefined) {
      throw new Error(`malformed argument near '${flag}'`);
    }
    values.set(flag.slice(2), value);
  }
  for (const required of ['cube', 'gt', 'name', 'out']) {
    if (!values.has(required)) {
      throw new Error(`missing --${required}`);
    }
  }
  const args: Args = {
    cube: values.get('cube')!,
    gt: values.get('gt')!,
    name: values.get('name')!,
    out: values.get('out')!,
  };
  const names = values.get('class-names');
  if (names) {
    args.classNames = names.split(',').map((s) => s.trim());
  }
  return args;
}

function splitPathKey(spec: string, flag: string): [string, string] {
  const idx = spec.lastIndexOf(':');
  if (idx <= 0 || idx === spec.length - 1) {
    throw new Error(`--${flag} needs the form path.mat:arrayKey, got '${spec}'`);
  }
  return [spec.slice(0, idx), spec.slice(idx + 1)];
}

export function main(argv: string[]): number {
  let args: Args;
  try {
    args = parseArgs(argv);
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    console.error(usage());
    return 2;
  }
  try {
    const [cubePath, cubeKey] = splitPathKey(args.cube, 'cube');
    const [gtPath, gtKey] = splitPathKey(args.gt, 'gt');
    const result = convert({
      cubePath, cubeKey, gtPath, gtKey,
      name: args.name, outDir: args.out, classNames: args.classNames,
    });
    console.log(`wrote ${result.cubeFile} (${result.height}x${result.width}x`
      + `${result.bands})`);
    console.log(`wrote ${result.labelFile} (${result.classCount} classes)`);
    console.log(`wrote ${result.manifestFile} (quotas: ${result.quotas.join(',')})`);
    return 0;
  } catch (err) {
    if (err instanceof ConversionError || err instanceof MatFormatError
        || (err as NodeJS.ErrnoException).code === 'ENOENT') {
      console.error(`error: ${(err as Error).message}`);
      return 1;
    }
    throw err;
  }
}

if (require.main === module) {
  process.exit(main(process.argv.slice(2)));
}
