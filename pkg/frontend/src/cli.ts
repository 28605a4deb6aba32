/**
 * Figure renderer for sidlab artifacts.
 *
 * Usage:
 *   render --kind convergence --input report.json --output fig.svg [--title T]
 *   render --kind heatmap     --input report.json --output fig.svg [--time-index J]
 *   render --kind qq          --input samples.csv --output fig.svg
 *          --stat cos1 [--t 6] (--report report.json | --sigma2 1.0)
 *
 * Exit codes: 0 success, 1 schema mismatch or bad arguments (message names the
 * offending key or column).
 */

import { readFileSync, writeFileSync } from "node:fs";

import { renderConvergence, renderHeatmap, renderQQ } from "./figures.js";
import { SchemaError, parseReport, parseSamplesCsv } from "./schema.js";

interface Args {
  kind: string;
  input: string;
  output: string;
  title?: string;
  stat?: string;
  t?: number;
  timeIndex?: number;
  report?: string;
  sigma2?: number;
}

function parseArgs(argv: string[]): Args {
  const out: Record<string, string> = {};
  for (let i = 0; i < argv.length; i += 2) {
    const key = argv[i];
    if (!key.startsWith("--") || i + 1 >= argv.length) {
      throw new Error(`malformed arguments near "${key}"`);
    }
    out[key.slice(2)] = argv[i + 1];
  }
  for (const required of ["kind", "input", "output"]) {
    if (!(required in out)) throw new Error(`missing --${required}`);
  }
  return {
    kind: out.kind,
    input: out.input,
    output: out.output,
    title: out.title,
    stat: out.stat,
    t: out.t !== undefined ? Number(out.t) : undefined,
    timeIndex: out["time-index"] !== undefined ? Number(out["time-index"]) : undefined,
    report: out.report,
    sigma2: out.sigma2 !== undefined ? Number(out.sigma2) : undefined,
  };
}

export function run(argv: string[]): number {
  let args: Args;
  try {
    args = parseArgs(argv);
  } catch (e) {
    console.error(`error: ${(e as Error).message}`);
    return 1;
  }
  try {
    let svg: string;
    if (args.kind === "convergence") {
      const report = parseReport(readFileSync(args.input, "utf-8"));
      svg = renderConvergence(report, args.title).svg;
    } else if (args.kind === "heatmap") {
      const report = parseReport(readFileSync(args.input, "utf-8"));
      svg = renderHeatmap(report, args.timeIndex, args.title).svg;
    } else if (args.kind === "qq") {
      const rows = parseSamplesCsv(readFileSync(args.input, "utf-8"));
      if (!args.stat) throw new Error("qq needs --stat <name>");
      let sigma2 = args.sigma2;
      if (sigma2 === undefined) {
        if (!args.report) throw new Error("qq needs --report <report.json> or --sigma2 <value>");
        const report = parseReport(readFileSync(args.report, "utf-8"));
        const idx = report.test_functions.indexOf(args.stat);
        if (idx < 0) {
          throw new SchemaError("test_functions", `"${args.stat}" not in the report`);
        }
        sigma2 = report.predicted.matrix[idx][idx];
      }
      svg = renderQQ(rows, {
        statName: args.stat,
        logTime: args.t,
        sigma2,
        title: args.title,
      }).svg;
    } else {
      console.error(`error: unknown figure kind "${args.kind}"`);
      return 1;
    }
    writeFileSync(args.output, svg);
    return 0;
  } catch (e) {
    if (e instanceof SchemaError) {
      console.error(`schema mismatch at ${e.where}: ${e.message}`);
    } else {
      console.error(`error: ${(e as Error).message}`);
    }
    return 1;
  }
}

const isMain = process.argv[1] && import.meta.url.endsWith(process.argv[1].split("/").pop()!);
if (isMain) {
  process.exit(run(process.argv.slice(2)));
}
