/**
 * Small deterministic SVG builder: fixed number formatting, no timestamps,
 * no randomness, so identical inputs produce byte-identical figures.
 */

export function fmt(v: number): string {
  if (!Number.isFinite(v)) return '0';
  if (v === 0) return '0';
  const s = v.toPrecision(8);
  return s.includes('.') ? s.replace(/\.?0+($|e)/, '$1') : s;
}

export interface Extent {
  xMin: number;
  xMax: number;
  yMin: number;
  yMax: number;
}

export class Figure {
  readonly width: number;
  readonly height: number;
  readonly margin = 54;
  private parts: string[] = [];
  private extent: Extent;

  constructor(width: number, height: number, extent: Extent, title: string) {
    this.width = width;
    this.height = height;
    this.extent = pad(extent);
    this.parts.push(
      `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" ` +
      `viewBox="0 0 ${width} ${height}" font-family="monospace" font-size="11">`);
    this.parts.push(`<rect width="${width}" height="${height}" fill="white"/>`);
    this.parts.push(
      `<text x="${width / 2}" y="18" text-anchor="middle" font-size="13">` +
      `${escapeXml(title)}</text>`);
  }

  px(x: number): number {
    const { xMin, xMax } = this.extent;
    return this.margin + (x - xMin) / (xMax - xMin) * (this.width - 2 * this.margin);
  }

  py(y: number): number {
    const { yMin, yMax } = this.extent;
    return this.height - this.margin
      - (y - yMin) / (yMax - yMin) * (this.height - 2 * this.margin);
  }

  axes(xLabel: string, yLabel: string): void {
    const m = this.margin;
    const { xMin, xMax, yMin, yMax } = this.extent;
    this.parts.push(
      `<line x1="${m}" y1="${this.height - m}" x2="${this.width - m}" ` +
      `y2="${this.height - m}" stroke="black"/>`);
    this.parts.push(
      `<line x1="${m}" y1="${m}" x2="${m}" y2="${this.height - m}" stroke="black"/>`);
    for (const t of [0, 0.5, 1]) {
      const xv = xMin + t * (xMax - xMin);
      const yv = yMin + t * (yMax - yMin);
      this.parts.push(
        `<text x="${fmt(this.px(xv))}" y="${this.height - m + 16}" ` +
        `text-anchor="middle">${fmt(xv)}</text>`);
      this.parts.push(
        `<text x="${m - 6}" y="${fmt(this.py(yv) + 4)}" text-anchor="end">` +
        `${fmt(yv)}</text>`);
    }
    this.parts.push(
      `<text x="${this.width / 2}" y="${this.height - 10}" text-anchor="middle">` +
      `${escapeXml(xLabel)}</text>`);
    this.parts.push(
      `<text x="14" y="${this.height / 2}" text-anchor="middle" ` +
      `transform="rotate(-90 14 ${this.height / 2})">${escapeXml(yLabel)}</text>`);
  }

  polyline(xs: number[], ys: number[], color: string, dash = ''): void {
    const pts = xs.map((x, i) => `${fmt(this.px(x))},${fmt(this.py(ys[i]))}`).join(' ');
    const dashAttr = dash ? ` stroke-dasharray="${dash}"` : '';
    this.parts.push(
      `<polyline points="${pts}" fill="none" stroke="${color}" ` +
      `stroke-width="1.5"${dashAttr}/>`);
  }

  dots(xs: number[], ys: number[], color: string, r = 2): void {
    for (let i = 0; i < xs.length; i++) {
      this.parts.push(
        `<circle cx="${fmt(this.px(xs[i]))}" cy="${fmt(this.py(ys[i]))}" ` +
        `r="${r}" fill="${color}" fill-opacity="0.6"/>`);
    }
  }

  polygon(points: Array<[number, number]>, fill: string): void {
    const pts = points.map(([x, y]) => `${fmt(this.px(x))},${fmt(this.py(y))}`).join(' ');
    this.parts.push(`<polygon points="${pts}" fill="${fill}" stroke="none"/>`);
  }

  label(x: number, y: number, text: string, color: string): void {
    this.parts.push(
      `<text x="${fmt(this.px(x))}" y="${fmt(this.py(y))}" fill="${color}">` +
      `${escapeXml(text)}</text>`);
  }

  render(): string {
    return this.parts.join('\n') + '\n</svg>\n';
  }
}

function pad(e: Extent): Extent {
  const dx = e.xMax - e.xMin || 1;
  const dy = e.yMax - e.yMin || 1;
  return {
    xMin: e.xMin - 0.05 * dx, xMax: e.xMax + 0.05 * dx,
    yMin: e.yMin - 0.05 * dy, yMax: e.yMax + 0.05 * dy,
  };
}

export function extentOf(xs: number[], ys: number[]): Extent {
  return {
    xMin: Math.min(...xs), xMax: Math.max(...xs),
    yMin: Math.min(...ys), yMax: Math.max(...ys),
  };
}

/** Blue-to-red diverging-free ramp for magnitudes in [0, 1]. */
export function heat(v: number): string {
  const t = Math.max(0, Math.min(1, v));
  const r = Math.round(255 * t);
  const g = Math.round(64 + 96 * (1 - Math.abs(2 * t - 1)));
  const b = Math.round(255 * (1 - t));
  return `rgb(${r},${g},${b})`;
}

function escapeXml(s: string): string {
  return s.replace(/&/g, '&amp;').replace(/</g, '&lt;').replace(/>/g, '&gt;');
}
