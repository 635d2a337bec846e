/** Batch figure renderer over a run/sweep directory. */

import { FigureKind, plot } from './plots';

function usage(): never {
  console.error(
    'usage: node dist/cli.js --run <dir> --kind <energy_curve|sweep_uniformity|' +
    'cauchy_table|stress_strain|field_heatmap|boundary_gap> --out <file.svg> ' +
    '[--snapshot NNNNNN]');
  process.exit(1);
}

function main(argv: string[]): number {
  const args = new Map<string, string>();
  for (let i = 0; i < argv.length; i += 2) {
    if (!argv[i].startsWith('--') || argv[i + 1] === undefined) usage();
    args.set(argv[i].slice(2), argv[i + 1]);
  }
  const inputDir = args.get('run');
  const kind = args.get('kind') as FigureKind | undefined;
  const outputPath = args.get('out');
  if (!inputDir || !kind || !outputPath) usage();
  plot({ inputDir, kind, outputPath, snapshot: args.get('snapshot') });
  console.log(outputPath);
  return 0;
}

process.exit(main(process.argv.slice(2)));
