/**
 * Parsers for the two documented artifact formats:
 *   report.json  (schema sidlab-report-v1)
 *   samples.csv  (long format: rep,t,stat_name,value)
 *
 * Validation is strict; every failure names the offending key or column.
 */

export class SchemaError extends Error {
  constructor(public readonly where: string, message: string) {
    super(`${where}: ${message}`);
    this.name = "SchemaError";
  }
}

export interface PredictedBlock {
  testFunctions: string[];
  matrix: number[][];
  method: string;
  kappa: number;
  horizon: number;
}

export interface TimeSlice {
  t: number;
  empirical_cov: number[][];
  bootstrap_ci_lo: number[][];
  bootstrap_ci_hi: number[][];
  normality_p: number[];
  pass_variance_in_ci: boolean[];
  pass_normality: boolean[];
}

export interface Report {
  schema: string;
  test_functions: string[];
  predicted: PredictedBlock;
  replications: number;
  master_seed: number;
  by_log_time: TimeSlice[];
}

function isNumber(x: unknown): x is number {
  return typeof x === "number" && Number.isFinite(x);
}

function requireMatrix(x: unknown, where: string, size: number): number[][] {
  if (!Array.isArray(x) || x.length !== size) {
    throw new SchemaError(where, `expected a ${size}x${size} matrix`);
  }
  for (const row of x) {
    if (!Array.isArray(row) || row.length !== size || !row.every(isNumber)) {
      throw new SchemaError(where, `expected a ${size}x${size} numeric matrix`);
    }
  }
  return x as number[][];
}

function requireStrings(x: unknown, where: string): string[] {
  if (!Array.isArray(x) || x.length === 0 || !x.every((s) => typeof s === "string")) {
    throw new SchemaError(where, "expected a nonempty list of strings");
  }
  return x as string[];
}

export function parseReport(text: string): Report {
  let raw: unknown;
  try {
    raw = JSON.parse(text);
  } catch (e) {
    throw new SchemaError("<report>", `not valid JSON: ${(e as Error).message}`);
  }
  const o = raw as Record<string, unknown>;
  if (o?.schema !== "sidlab-report-v1") {
    throw new SchemaError("schema", `expected "sidlab-report-v1", got ${JSON.stringify(o?.schema)}`);
  }
  const names = requireStrings(o.test_functions, "test_functions");
  const n = names.length;

  const p = o.predicted as Record<string, unknown> | undefined;
  if (p === undefined) throw new SchemaError("predicted", "missing");
  const predicted: PredictedBlock = {
    testFunctions: requireStrings(p.testFunctions, "predicted.testFunctions"),
    matrix: requireMatrix(p.matrix, "predicted.matrix", n),
    method: typeof p.method === "string" ? p.method : raise("predicted.method", "expected a string"),
    kappa: isNumber(p.kappa) ? p.kappa : raise("predicted.kappa", "expected a number"),
    horizon: isNumber(p.horizon) ? p.horizon : raise("predicted.horizon", "expected a number"),
  };

  if (!Array.isArray(o.by_log_time) || o.by_log_time.length === 0) {
    throw new SchemaError("by_log_time", "expected a nonempty list");
  }
  const slices = (o.by_log_time as unknown[]).map((rawSlice, j) => {
    const s = rawSlice as Record<string, unknown>;
    const where = `by_log_time[${j}]`;
    const numbers = (key: string): number[] => {
      const v = s[key];
      if (!Array.isArray(v) || v.length !== n || !v.every(isNumber)) {
        throw new SchemaError(`${where}.${key}`, `expected ${n} numbers`);
      }
      return v as number[];
    };
    const bools = (key: string): boolean[] => {
      const v = s[key];
      if (!Array.isArray(v) || v.length !== n || !v.every((b) => typeof b === "boolean")) {
        throw new SchemaError(`${where}.${key}`, `expected ${n} booleans`);
      }
      return v as boolean[];
    };
    if (!isNumber(s.t)) throw new SchemaError(`${where}.t`, "expected a number");
    return {
      t: s.t,
      empirical_cov: requireMatrix(s.empirical_cov, `${where}.empirical_cov`, n),
      bootstrap_ci_lo: requireMatrix(s.bootstrap_ci_lo, `${where}.bootstrap_ci_lo`, n),
      bootstrap_ci_hi: requireMatrix(s.bootstrap_ci_hi, `${where}.bootstrap_ci_hi`, n),
      normality_p: numbers("normality_p"),
      pass_variance_in_ci: bools("pass_variance_in_ci"),
      pass_normality: bools("pass_normality"),
    };
  });

  return {
    schema: "sidlab-report-v1",
    test_functions: names,
    predicted,
    replications: isNumber(o.replications) ? o.replications : raise("replications", "expected a number"),
    master_seed: isNumber(o.master_seed) ? o.master_seed : raise("master_seed", "expected a number"),
    by_log_time: slices,
  };
}

function raise(where: string, message: string): never {
  throw new SchemaError(where, message);
}

export interface SampleRow {
  rep: number;
  t: number;
  statName: string;
  value: number;
}

const SAMPLES_HEADER = ["rep", "t", "stat_name", "value"];

export function parseSamplesCsv(text: string): SampleRow[] {
  const lines = text.trim().split(/\r?\n/);
  if (lines.length < 2) throw new SchemaError("<samples>", "CSV has no data rows");
  const header = lines[0].split(",").map((h) => h.trim());
  for (let i = 0; i < SAMPLES_HEADER.length; i++) {
    if (header[i] !== SAMPLES_HEADER[i]) {
      throw new SchemaError(
        `column ${i + 1}`,
        `expected "${SAMPLES_HEADER[i]}", got "${header[i] ?? "<missing>"}"`,
      );
    }
  }
  if (header.length !== SAMPLES_HEADER.length) {
    throw new SchemaError(`column ${SAMPLES_HEADER.length + 1}`, `unexpected extra column "${header[4]}"`);
  }
  return lines.slice(1).map((line, j) => {
    const parts = line.split(",");
    if (parts.length !== 4) {
      throw new SchemaError(`row ${j + 2}`, `expected 4 fields, got ${parts.length}`);
    }
    const rep = Number(parts[0]);
    const t = Number(parts[1]);
    const value = Number(parts[3]);
    if (!Number.isInteger(rep)) throw new SchemaError(`row ${j + 2}, column rep`, `not an integer: "${parts[0]}"`);
    if (!Number.isFinite(t)) throw new SchemaError(`row ${j + 2}, column t`, `not a number: "${parts[1]}"`);
    if (!Number.isFinite(value)) throw new SchemaError(`row ${j + 2}, column value`, `not a number: "${parts[3]}"`);
    return { rep, t, statName: parts[2], value };
  });
}
