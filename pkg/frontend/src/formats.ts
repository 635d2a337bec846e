/**
 * Readers for the solver's documented output formats: manifest with sha256
 * checksums, headered CSV tables, plain-text node/element snapshot tables
 * and the mesh listing.  The plotting layer never recomputes physics; it
 * only re-arranges what these files already contain.
 */

import { createHash } from 'crypto';
import { existsSync, readFileSync } from 'fs';
import { join } from 'path';

export interface Manifest {
  config_hash: string;
  version: string;
  files: Record<string, string>;
  kind?: string;
  params?: { e: number; P: number };
  integrand?: { kind: string; P: number; s0?: number; eps: number; delta: number };
  [key: string]: unknown;
}

export function sha256File(path: string): string {
  return createHash('sha256').update(readFileSync(path)).digest('hex');
}

/** Load the manifest and verify every listed checksum before anything else. */
export function loadManifest(runDir: string): Manifest {
  const manifest = JSON.parse(
    readFileSync(join(runDir, 'manifest.json'), 'utf8')) as Manifest;
  for (const [name, digest] of Object.entries(manifest.files)) {
    const full = join(runDir, name);
    if (!existsSync(full)) {
      throw new Error(`manifest lists missing file: ${name}`);
    }
    if (sha256File(full) !== digest) {
      throw new Error(`checksum mismatch for ${name}`);
    }
  }
  return manifest;
}

export type Row = Record<string, number | string>;

export function readCsv(path: string): Row[] {
  const lines = readFileSync(path, 'utf8').split('\n').filter(l => l.length > 0);
  const header = lines[0].split(',');
  return lines.slice(1).map(line => {
    const cells = line.split(',');
    const row: Row = {};
    header.forEach((key, i) => {
      const v = cells[i];
      const num = Number(v);
      row[key] = Number.isFinite(num) && v !== '' ? num : v;
    });
    return row;
  });
}

export interface NodeTable {
  x: number[];
  y: number[];
  u1: number[];
  u2: number[];
}

export function readVelocityTable(path: string): NodeTable {
  const out: NodeTable = { x: [], y: [], u1: [], u2: [] };
  for (const line of readFileSync(path, 'utf8').split('\n')) {
    if (!line || line.startsWith('#')) continue;
    const p = line.split(/\s+/);
    out.x[+p[0]] = +p[1];
    out.y[+p[0]] = +p[2];
    out.u1[+p[0]] = +p[3];
    out.u2[+p[0]] = +p[4];
  }
  return out;
}

export interface ElementTable {
  values: number[][]; // per element, the numeric columns after the id
}

export function readElementTable(path: string): ElementTable {
  const values: number[][] = [];
  for (const line of readFileSync(path, 'utf8').split('\n')) {
    if (!line || line.startsWith('#')) continue;
    const p = line.split(/\s+/);
    values[+p[0]] = p.slice(1).map(Number);
  }
  return { values };
}

export interface Mesh {
  nodes: Array<[number, number]>;
  triangles: Array<[number, number, number]>;
}

export function readMesh(path: string): Mesh {
  const lines = readFileSync(path, 'utf8').split('\n');
  let k = 0;
  const nNodes = Number(lines[k++].split(/\s+/)[1]);
  const nodes: Array<[number, number]> = [];
  for (let i = 0; i < nNodes; i++, k++) {
    const p = lines[k].split(/\s+/);
    nodes[+p[0]] = [+p[1], +p[2]];
  }
  const nTris = Number(lines[k++].split(/\s+/)[1]);
  const triangles: Array<[number, number, number]> = [];
  for (let e = 0; e < nTris; e++, k++) {
    const p = lines[k].split(/\s+/);
    triangles[+p[0]] = [+p[1], +p[2], +p[3]];
  }
  return { nodes, triangles };
}

/** Snapshot tags present in a run directory, sorted ascending. */
export function snapshotTags(manifest: Manifest): string[] {
  const tags = new Set<string>();
  for (const name of Object.keys(manifest.files)) {
    const m = name.match(/^snap_(\d+)_velocity\.txt$/);
    if (m) tags.add(m[1]);
  }
  return [...tags].sort();
}
