/**
 * Figure kinds over the solver's run/sweep directories.  Each plot is a pure
 * function of the input files: the manifest checksums are verified first and
 * the physics is never recomputed (analytic overlays come from parameters
 * recorded in the manifest).
 */

import { writeFileSync } from 'fs';
import { join } from 'path';

import {
  ElementTable, loadManifest, Manifest, readCsv, readElementTable, readMesh,
  readVelocityTable, snapshotTags,
} from './formats';
import { extentOf, Figure, fmt, heat } from './svg';

export type FigureKind =
  | 'energy_curve'
  | 'sweep_uniformity'
  | 'cauchy_table'
  | 'stress_strain'
  | 'field_heatmap'
  | 'boundary_gap';

export interface PlotSpec {
  inputDir: string;
  kind: FigureKind;
  outputPath: string;
  snapshot?: string; // tag for stress_strain / field_heatmap; default: last
}

export function plot(spec: PlotSpec): string {
  const manifest = loadManifest(spec.inputDir);
  let svg: string;
  switch (spec.kind) {
    case 'energy_curve':
      svg = energyCurve(spec.inputDir);
      break;
    case 'sweep_uniformity':
      svg = sweepUniformity(spec.inputDir);
      break;
    case 'cauchy_table':
      svg = cauchyTable(spec.inputDir);
      break;
    case 'stress_strain':
      svg = stressStrain(spec.inputDir, manifest, spec.snapshot);
      break;
    case 'field_heatmap':
      svg = fieldHeatmap(spec.inputDir, manifest, spec.snapshot);
      break;
    case 'boundary_gap':
      svg = boundaryGap(spec.inputDir);
      break;
    default:
      throw new Error(`unknown figure kind ${spec.kind}`);
  }
  writeFileSync(spec.outputPath, svg);
  return svg;
}

function energyCurve(dir: string): string {
  const rows = readCsv(join(dir, 'trajectory.csv'));
  const t = rows.map(r => Number(r.t));
  const e = rows.map(r => Number(r.energy));
  const fig = new Figure(640, 420, extentOf([0, ...t], [0, ...e]), 'energy vs time');
  fig.axes('t', 'bulk energy');
  fig.polyline(t, e, '#1f77b4');
  return fig.render();
}

function sweepUniformity(dir: string): string {
  const rows = readCsv(join(dir, 'uniformity.csv'));
  const keys = ['sup_l2', 'tv_l1', 'sqrt_delta_h1', 'dual_sq', 'dt_l2_sq'];
  const colors = ['#1f77b4', '#ff7f0e', '#2ca02c', '#d62728', '#9467bd'];
  const idx = rows.map((_, i) => i);
  let yMax = 0;
  for (const k of keys) {
    for (const r of rows) yMax = Math.max(yMax, Number(r[k]));
  }
  const fig = new Figure(720, 440, { xMin: 0, xMax: Math.max(1, rows.length - 1),
                                     yMin: 0, yMax: yMax || 1 },
                         'a-priori monitors across the sweep');
  fig.axes('triple index (schedule order)', 'monitor value');
  keys.forEach((k, j) => {
    fig.polyline(idx, rows.map(r => Number(r[k])), colors[j]);
    fig.label(Math.max(1, rows.length - 1) * 0.02,
              yMax * (0.95 - 0.06 * j) || 1, k, colors[j]);
  });
  return fig.render();
}

function cauchyTable(dir: string): string {
  const rows = readCsv(join(dir, 'cauchy.csv'));
  const kinds = ['delta', 'eps', 'zeta'];
  const colors = ['#1f77b4', '#ff7f0e', '#2ca02c'];
  let yMax = 0;
  for (const r of rows) yMax = Math.max(yMax, Number(r.l2_diff));
  const fig = new Figure(640, 420, { xMin: 0, xMax: Math.max(1, rows.length - 1),
                                     yMin: 0, yMax: yMax || 1 },
                         'Cauchy differences between schedule levels');
  fig.axes('consecutive pair index', '|u - u\'| L2(QT)');
  kinds.forEach((kind, j) => {
    const sel = rows.map((r, i) => [i, r] as const).filter(([, r]) => r.kind === kind);
    if (sel.length === 0) return;
    fig.polyline(sel.map(([i]) => i), sel.map(([, r]) => Number(r.l2_diff)), colors[j]);
    fig.dots(sel.map(([i]) => i), sel.map(([, r]) => Number(r.l2_diff)), colors[j], 3);
    fig.label(Math.max(1, rows.length - 1) * 0.02, yMax * (0.95 - 0.07 * j) || 1,
              kind, colors[j]);
  });
  return fig.render();
}

/** Sorted (|T u|, |sigma|) cloud with the analytic stress-strain overlay. */
function stressStrain(dir: string, manifest: Manifest, snapshot?: string): string {
  const tags = snapshotTags(manifest);
  if (tags.length === 0) throw new Error('run has no snapshots');
  const tag = snapshot ?? tags[tags.length - 1];
  const def = readElementTable(join(dir, `snap_${tag}_deformation.txt`));
  const str = readElementTable(join(dir, `snap_${tag}_stress.txt`));
  const xs = def.values.map(v => v[3]); // tnorm
  const ys = str.values.map(v => v[3]); // snorm (physical)
  const ig = manifest.integrand;
  if (!ig) throw new Error('manifest missing integrand parameters');
  const halfP = ig.P / 2;
  const xMax = Math.max(...xs, ig.kind === 'mohr_coulomb' ? 2 * (ig.s0 ?? 1) : 1);
  const fig = new Figure(640, 420,
                         { xMin: 0, xMax, yMin: 0, yMax: Math.max(halfP * 1.3, ...ys) },
                         `stress vs deformation (${ig.kind}, eps=${fmt(ig.eps)})`);
  fig.axes('|T u|', '|sigma|');
  fig.dots(xs, ys, '#1f77b4');
  // analytic law recorded in the manifest: flat plateau for the norm kind,
  // linear ramp then plateau for mohr_coulomb
  if (ig.kind === 'mohr_coulomb') {
    const s0 = ig.s0 ?? 1;
    fig.polyline([0, s0, xMax], [0, halfP, halfP], '#d62728', '5,3');
  } else {
    fig.polyline([0, xMax], [halfP, halfP], '#d62728', '5,3');
  }
  fig.label(xMax * 0.65, halfP * 1.12, 'analytic limit law', '#d62728');
  return fig.render();
}

function fieldHeatmap(dir: string, manifest: Manifest, snapshot?: string): string {
  const tags = snapshotTags(manifest);
  if (tags.length === 0) throw new Error('run has no snapshots');
  const tag = snapshot ?? tags[tags.length - 1];
  const mesh = readMesh(join(dir, 'mesh.txt'));
  const vel = readVelocityTable(join(dir, `snap_${tag}_velocity.txt`));
  const mags = mesh.triangles.map(tri => {
    let m = 0;
    for (const n of tri) m += Math.hypot(vel.u1[n], vel.u2[n]) / 3;
    return m;
  });
  const vMax = Math.max(...mags, 1e-300);
  const xs = mesh.nodes.map(n => n[0]);
  const ys = mesh.nodes.map(n => n[1]);
  const fig = new Figure(560, 560, extentOf(xs, ys), `|u| at snapshot ${tag}`);
  mesh.triangles.forEach((tri, e) => {
    fig.polygon(tri.map(n => mesh.nodes[n]), heat(mags[e] / vMax));
  });
  fig.axes('x', 'y');
  return fig.render();
}

function boundaryGap(dir: string): string {
  const rows = readCsv(join(dir, 'boundary_gap.csv'));
  const xs = rows.map(r => Number(r.delta));
  const ys = rows.map(r => Math.abs(Number(r.gap)));
  const fig = new Figure(640, 420, extentOf([0, ...xs], [0, ...ys]),
                         'boundary penalization gap vs collar width');
  fig.axes('delta', '|target - measured|');
  fig.polyline(xs, ys, '#1f77b4');
  fig.dots(xs, ys, '#1f77b4', 3);
  return fig.render();
}

/**
 * Log-binned means of the sampled stress-strain cloud; log spacing resolves
 * both the elastic ramp near the origin and the plastic plateau, which can
 * sit three decades apart.  The tests assert the qualitative law (rising
 * ramp, flat plateau) on consecutive slopes of this curve.
 */
export function stressStrainCurve(dir: string, snapshot?: string,
                                  nBins = 24): Array<[number, number]> {
  const manifest = loadManifest(dir);
  const tags = snapshotTags(manifest);
  const tag = snapshot ?? tags[tags.length - 1];
  const def = readElementTable(join(dir, `snap_${tag}_deformation.txt`));
  const str = readElementTable(join(dir, `snap_${tag}_stress.txt`));
  const pairs = def.values
    .map((v, e) => [v[3], str.values[e][3]] as [number, number])
    .filter(([x]) => x > 0)
    .sort((a, b) => a[0] - b[0]);
  const xMax = pairs[pairs.length - 1][0];
  const xMin = Math.max(pairs[0][0], xMax * 1e-5);
  const logLo = Math.log(xMin);
  const logHi = Math.log(xMax);
  const curve: Array<[number, number]> = [];
  for (let b = 0; b < nBins; b++) {
    const lo = Math.exp(logLo + (b / nBins) * (logHi - logLo));
    const hi = Math.exp(logLo + ((b + 1) / nBins) * (logHi - logLo));
    const sel = pairs.filter(
      ([x]) => x >= lo && (b === nBins - 1 ? x <= hi : x < hi));
    if (sel.length === 0) continue;
    curve.push([
      sel.reduce((s, [x]) => s + x, 0) / sel.length,
      sel.reduce((s, [, y]) => s + y, 0) / sel.length,
    ]);
  }
  return curve;
}

export function curveSlopes(curve: Array<[number, number]>): Array<[number, number]> {
  const slopes: Array<[number, number]> = [];
  for (let i = 1; i < curve.length; i++) {
    const [x0, y0] = curve[i - 1];
    const [x1, y1] = curve[i];
    slopes.push([(x0 + x1) / 2, (y1 - y0) / (x1 - x0)]);
  }
  return slopes;
}
