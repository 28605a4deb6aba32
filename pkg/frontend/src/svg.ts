/** Minimal SVG assembly: escaping, nice axis ticks, linear scales. */

export function esc(s: string): string {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;").replace(/"/g, "&quot;");
}

export function niceTicks(min: number, max: number, count = 6): number[] {
  const range = max - min || 1;
  const rough = range / count;
  const mag = Math.pow(10, Math.floor(Math.log10(rough)));
  const step = [1, 2, 5, 10].map((m) => m * mag).find((n) => n >= rough) ?? rough;
  const start = Math.ceil(min / step) * step;
  const ticks: number[] = [];
  for (let v = start; v <= max + step * 1e-9; v += step) ticks.push(Number(v.toFixed(12)));
  return ticks;
}

export function fmt(v: number): string {
  if (v === 0) return "0";
  const a = Math.abs(v);
  if (a >= 1000 || a < 0.01) return v.toExponential(2);
  return Number(v.toPrecision(4)).toString();
}

export interface Scale {
  (v: number): number;
  domain: [number, number];
}

export function linearScale(domain: [number, number], range: [number, number]): Scale {
  const [d0, d1] = domain;
  const [r0, r1] = range;
  const f = ((v: number) => r0 + ((v - d0) / (d1 - d0 || 1)) * (r1 - r0)) as Scale;
  f.domain = domain;
  return f;
}

export interface Frame {
  width: number;
  height: number;
  left: number;
  right: number;
  top: number;
  bottom: number;
}

export const DEFAULT_FRAME: Frame = { width: 720, height: 480, left: 70, right: 24, top: 48, bottom: 56 };

/** Axes, tick marks, labels and the plot title. */
export function axes(frame: Frame, x: Scale, y: Scale, opts: {
  title: string; xLabel: string; yLabel: string;
}): string {
  const { width, height, left, right, top, bottom } = frame;
  const innerRight = width - right;
  const innerBottom = height - bottom;
  const parts: string[] = [];
  parts.push(`<text x="${width / 2}" y="24" text-anchor="middle" font-size="16" font-weight="bold">${esc(opts.title)}</text>`);
  parts.push(`<line x1="${left}" y1="${innerBottom}" x2="${innerRight}" y2="${innerBottom}" stroke="#333"/>`);
  parts.push(`<line x1="${left}" y1="${top}" x2="${left}" y2="${innerBottom}" stroke="#333"/>`);
  for (const v of niceTicks(x.domain[0], x.domain[1])) {
    const px = x(v);
    if (px < left - 1e-6 || px > innerRight + 1e-6) continue;
    parts.push(`<line x1="${px}" y1="${innerBottom}" x2="${px}" y2="${innerBottom + 5}" stroke="#333"/>`);
    parts.push(`<text x="${px}" y="${innerBottom + 20}" text-anchor="middle" font-size="11">${fmt(v)}</text>`);
  }
  for (const v of niceTicks(y.domain[0], y.domain[1])) {
    const py = y(v);
    if (py < top - 1e-6 || py > innerBottom + 1e-6) continue;
    parts.push(`<line x1="${left - 5}" y1="${py}" x2="${left}" y2="${py}" stroke="#333"/>`);
    parts.push(`<text x="${left - 9}" y="${py + 4}" text-anchor="end" font-size="11">${fmt(v)}</text>`);
  }
  parts.push(`<text x="${(left + innerRight) / 2}" y="${height - 14}" text-anchor="middle" font-size="13">${esc(opts.xLabel)}</text>`);
  parts.push(`<text x="18" y="${(top + innerBottom) / 2}" text-anchor="middle" font-size="13" transform="rotate(-90 18 ${(top + innerBottom) / 2})">${esc(opts.yLabel)}</text>`);
  return parts.join("\n");
}

export function document(frame: Frame, body: string): string {
  return [
    `<svg xmlns="http://www.w3.org/2000/svg" width="${frame.width}" height="${frame.height}" viewBox="0 0 ${frame.width} ${frame.height}" font-family="sans-serif">`,
    `<rect width="${frame.width}" height="${frame.height}" fill="white"/>`,
    body,
    `</svg>`,
  ].join("\n");
}

/** Diverging blue-white-red color for a value in [-1, 1]. */
export function divergingColor(u: number): string {
  const t = Math.max(-1, Math.min(1, u));
  const lerp = (a: number, b: number, s: number) => Math.round(a + (b - a) * s);
  if (t < 0) {
    const s = 1 + t; // 0 at -1, 1 at 0
    return `rgb(${lerp(33, 255, s)},${lerp(102, 255, s)},${lerp(172, 255, s)})`;
  }
  const s = t;
  return `rgb(${lerp(255, 178, s)},${lerp(255, 24, s)},${lerp(255, 43, s)})`;
}
