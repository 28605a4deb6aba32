/**
 * The three figure kinds. Pure functions: parsed inputs in, SVG text out.
 * No statistic is recomputed here; every theoretical value (asymptotes,
 * predicted variances) is read from the report.
 */

import { Report, SampleRow, SchemaError } from "./schema.js";
import { normalPdf, normalQuantile } from "./normal.js";
import {
  DEFAULT_FRAME,
  Frame,
  axes,
  divergingColor,
  document,
  esc,
  fmt,
  linearScale,
} from "./svg.js";

const SERIES_COLORS = ["#4361ee", "#e63946", "#2d6a4f", "#b5179e", "#f77f00", "#577590"];

export interface ConvergenceResult {
  svg: string;
  asymptotes: number[]; // one per test function, copied from the report
}

/** Empirical variance vs log-time with bootstrap whiskers and the predicted asymptote. */
export function renderConvergence(report: Report, title?: string): ConvergenceResult {
  const frame = DEFAULT_FRAME;
  const names = report.test_functions;
  const ts = report.by_log_time.map((s) => s.t);
  const asymptotes = names.map((_, i) => report.predicted.matrix[i][i]);

  const allValues: number[] = [...asymptotes];
  for (const s of report.by_log_time) {
    for (let i = 0; i < names.length; i++) {
      allValues.push(s.bootstrap_ci_lo[i][i], s.bootstrap_ci_hi[i][i], s.empirical_cov[i][i]);
    }
  }
  const yMin = Math.min(...allValues);
  const yMax = Math.max(...allValues);
  const pad = 0.08 * (yMax - yMin || 1);
  const xPad = 0.05 * (ts[ts.length - 1] - ts[0] || 1);
  const x = linearScale([ts[0] - xPad, ts[ts.length - 1] + xPad], [frame.left, frame.width - frame.right]);
  const y = linearScale([yMin - pad, yMax + pad], [frame.height - frame.bottom, frame.top]);

  const parts: string[] = [];
  parts.push(axes(frame, x, y, {
    title: title ?? "Fluctuation variance vs log-time",
    xLabel: "log-time t",
    yLabel: "Var(Delta_t g)",
  }));

  names.forEach((name, i) => {
    const color = SERIES_COLORS[i % SERIES_COLORS.length];
    const pts = report.by_log_time.map((s) => [x(s.t), y(s.empirical_cov[i][i])]);
    // bootstrap interval whiskers
    report.by_log_time.forEach((s) => {
      const px = x(s.t);
      parts.push(`<line x1="${px}" y1="${y(s.bootstrap_ci_lo[i][i])}" x2="${px}" y2="${y(s.bootstrap_ci_hi[i][i])}" stroke="${color}" stroke-width="1" opacity="0.6"/>`);
    });
    parts.push(`<polyline fill="none" stroke="${color}" stroke-width="1.6" points="${pts.map(([a, b]) => `${a},${b}`).join(" ")}"/>`);
    pts.forEach(([a, b]) => parts.push(`<circle cx="${a}" cy="${b}" r="3.2" fill="${color}"/>`));
    // asymptote: the predicted value, drawn as read from the report
    const ay = y(asymptotes[i]);
    parts.push(`<line class="asymptote" data-stat="${esc(name)}" data-asymptote="${String(asymptotes[i])}" x1="${frame.left}" y1="${ay}" x2="${frame.width - frame.right}" y2="${ay}" stroke="${color}" stroke-dasharray="6,4" stroke-width="1.2"/>`);
    parts.push(`<text x="${frame.width - frame.right - 4}" y="${ay - 5}" text-anchor="end" font-size="11" fill="${color}">${esc(name)} limit ${fmt(asymptotes[i])}</text>`);
    parts.push(`<text x="${frame.left + 8}" y="${frame.top + 16 + 14 * i}" font-size="12" fill="${color}">${esc(name)}</text>`);
  });

  return { svg: document(frame, parts.join("\n")), asymptotes };
}

export interface HeatmapResult {
  svg: string;
  logTime: number;
}

/** Predicted and empirical covariance matrices side by side, shared color scale. */
export function renderHeatmap(report: Report, timeIndex?: number, title?: string): HeatmapResult {
  const idx = timeIndex ?? report.by_log_time.length - 1;
  if (idx < 0 || idx >= report.by_log_time.length) {
    throw new SchemaError("by_log_time", `no slice at index ${idx}`);
  }
  const slice = report.by_log_time[idx];
  const names = report.test_functions;
  const n = names.length;
  const predicted = report.predicted.matrix;
  const empirical = slice.empirical_cov;

  const cell = Math.min(64, 280 / n);
  const gap = 60;
  const left = 90;
  const top = 76;
  const width = left + 2 * n * cell + gap + 40;
  const height = top + n * cell + 70;
  const frame: Frame = { width, height, left, right: 40, top, bottom: 70 };

  const scaleMax = Math.max(
    ...predicted.flat().map(Math.abs),
    ...empirical.flat().map(Math.abs),
    1e-12,
  );

  const parts: string[] = [];
  parts.push(`<text x="${width / 2}" y="26" text-anchor="middle" font-size="16" font-weight="bold">${esc(title ?? `Covariance at t = ${fmt(slice.t)}`)}</text>`);

  const panel = (matrix: number[][], x0: number, label: string) => {
    parts.push(`<text x="${x0 + (n * cell) / 2}" y="${top - 12}" text-anchor="middle" font-size="13">${esc(label)}</text>`);
    for (let i = 0; i < n; i++) {
      for (let j = 0; j < n; j++) {
        const v = matrix[i][j];
        const px = x0 + j * cell;
        const py = top + i * cell;
        parts.push(`<rect x="${px}" y="${py}" width="${cell}" height="${cell}" fill="${divergingColor(v / scaleMax)}" stroke="#999" stroke-width="0.5"/>`);
        parts.push(`<text x="${px + cell / 2}" y="${py + cell / 2 + 4}" text-anchor="middle" font-size="11">${fmt(v)}</text>`);
      }
      parts.push(`<text x="${x0 - 6}" y="${top + i * cell + cell / 2 + 4}" text-anchor="end" font-size="11">${esc(names[i])}</text>`);
    }
    for (let j = 0; j < n; j++) {
      parts.push(`<text x="${x0 + j * cell + cell / 2}" y="${top + n * cell + 16}" text-anchor="middle" font-size="11">${esc(names[j])}</text>`);
    }
  };

  panel(predicted, left, `predicted (${esc(report.predicted.method)})`);
  panel(empirical, left + n * cell + gap, `empirical (${report.replications} reps)`);

  return { svg: document(frame, parts.join("\n")), logTime: slice.t };
}

export interface QQResult {
  svg: string;
  n: number;
  inBandFraction: number; // share of quantile points inside the 95% band
}

export interface QQOptions {
  statName: string;
  logTime?: number; // default: largest t present
  sigma2: number;   // predicted variance, read from the report by the caller
  title?: string;
}

/** QQ plot of fluctuation samples against the predicted centered Gaussian. */
export function renderQQ(rows: SampleRow[], opts: QQOptions): QQResult {
  const stats = new Set(rows.map((r) => r.statName));
  if (!stats.has(opts.statName)) {
    throw new SchemaError("stat_name", `"${opts.statName}" not present (have: ${[...stats].join(", ")})`);
  }
  const times = [...new Set(rows.filter((r) => r.statName === opts.statName).map((r) => r.t))];
  const t = opts.logTime ?? Math.max(...times);
  if (!times.includes(t)) {
    throw new SchemaError("t", `log-time ${t} not present (have: ${times.join(", ")})`);
  }
  const values = rows
    .filter((r) => r.statName === opts.statName && r.t === t)
    .map((r) => r.value)
    .sort((a, b) => a - b);
  const n = values.length;
  if (n < 8) throw new SchemaError("<samples>", `only ${n} samples for ${opts.statName} at t=${t}`);
  if (!(opts.sigma2 > 0)) throw new SchemaError("sigma2", `predicted variance must be positive, got ${opts.sigma2}`);

  const sigma = Math.sqrt(opts.sigma2);
  const theo: number[] = [];
  const bandLo: number[] = [];
  const bandHi: number[] = [];
  let inBand = 0;
  for (let i = 0; i < n; i++) {
    const p = (i + 0.5) / n;
    const z = normalQuantile(p);
    const q = sigma * z;
    theo.push(q);
    // pointwise 95% band for the order statistic around the true quantile
    const se = (sigma * Math.sqrt((p * (1 - p)) / n)) / normalPdf(z);
    bandLo.push(q - 1.96 * se);
    bandHi.push(q + 1.96 * se);
    if (values[i] >= bandLo[i] && values[i] <= bandHi[i]) inBand++;
  }

  const frame = DEFAULT_FRAME;
  const lo = Math.min(theo[0], values[0], bandLo[0]);
  const hi = Math.max(theo[n - 1], values[n - 1], bandHi[n - 1]);
  const pad = 0.06 * (hi - lo || 1);
  const x = linearScale([lo - pad, hi + pad], [frame.left, frame.width - frame.right]);
  const y = linearScale([lo - pad, hi + pad], [frame.height - frame.bottom, frame.top]);

  const parts: string[] = [];
  parts.push(axes(frame, x, y, {
    title: opts.title ?? `QQ: ${opts.statName} at t = ${fmt(t)} vs N(0, ${fmt(opts.sigma2)})`,
    xLabel: "theoretical quantile",
    yLabel: "sample quantile",
  }));
  const bandPath = [
    ...theo.map((q, i) => `${x(q)},${y(bandHi[i])}`),
    ...[...theo].reverse().map((q, i) => `${x(q)},${y(bandLo[n - 1 - i])}`),
  ].join(" ");
  parts.push(`<polygon points="${bandPath}" fill="#4361ee" opacity="0.12"/>`);
  parts.push(`<line x1="${x(lo)}" y1="${y(lo)}" x2="${x(hi)}" y2="${y(hi)}" stroke="#888" stroke-dasharray="5,4"/>`);
  for (let i = 0; i < n; i++) {
    parts.push(`<circle cx="${x(theo[i])}" cy="${y(values[i])}" r="2.4" fill="#e63946" opacity="0.8"/>`);
  }
  parts.push(`<text x="${frame.left + 8}" y="${frame.top + 16}" font-size="12">n = ${n}, in 95% band: ${(100 * inBand / n).toFixed(1)}%</text>`);

  return { svg: document(frame, parts.join("\n")), n, inBandFraction: inBand / n };
}
