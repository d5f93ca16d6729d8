/** Bindings over the `frlc` command-line interface.
 *
 * Every call writes its inputs to a scratch directory, spawns the CLI, and
 * parses the files it writes back. No numerics happen on this side: matrices
 * cross as FRLCMAT1 binaries (bitwise by construction) and come back as the
 * CLI's shortest-round-trip CSV, which Number() parses to the identical
 * doubles. Solves run in a subprocess, so nothing blocks the event loop.
 */

import { mkdtempSync, rmSync, mkdirSync, readFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { z } from "zod";

import { errorFromStderr, FrlcError, InvalidRank, UsageError } from "./errors.js";
import { type Matrix, vector, writeMat, writeCsv, readCsv } from "./matio.js";
import { runFrlc } from "./run.js";

export {
  FrlcError,
  UsageError,
  ShapeMismatch,
  DimMismatch,
  DegenerateMarginal,
  NonPositiveKernel,
  NotConverged,
  MissingIntraCost,
  NegativeOmega,
  InvalidRank,
  TooLarge,
  ParseError,
} from "./errors.js";
export { matrix, fromRows, toRows, vector, writeMat, readMat, writeCsv, readCsv } from "./matio.js";
export type { Matrix } from "./matio.js";
export { frlcBin } from "./run.js";

export type Mode = "balanced" | "unbalanced" | "sr-left" | "sr-right";
export type Objective = "w" | "gw" | "fgw";

export interface SolveOptions {
  rank: number;
  rank2?: number;
  mode?: Mode;
  objective?: Objective;
  alpha?: number;
  gamma?: number;
  tau?: number;
  tau2?: number;
  delta?: number;
  epsilon?: number;
  minIter?: number;
  maxIter?: number;
  maxInnerBalanced?: number;
  maxInnerRelaxed?: number;
  seed?: number;
}

/** A dense linear cost, or per-objective pieces for gw/fgw. */
export type CostInput =
  | Matrix
  | { linear?: Matrix; intraA?: Matrix; intraB?: Matrix };

export interface BoundReport {
  cost: number;
  iters: number;
  converged: boolean;
  innerFailures: number;
  leftResidual: number;
  rightResidual: number;
  wallTime: number;
  seed: number;
  costTrace: number[];
  deltaTrace: number[];
  Q: Matrix;
  R: Matrix;
  T: Matrix;
}

const reportSchema = z.object({
  schema: z.literal(1),
  command: z.string(),
  config: z.record(z.string(), z.unknown()),
  cost: z.number(),
  iters: z.number().int(),
  converged: z.boolean(),
  inner_failures: z.number().int(),
  left_residual: z.number(),
  right_residual: z.number(),
  wall_time: z.number(),
  seed: z.number().int(),
  cost_trace: z.array(z.number()),
  delta_trace: z.array(z.number()),
});

const optionFlags: Record<keyof SolveOptions, string> = {
  rank: "--rank",
  rank2: "--rank2",
  mode: "--mode",
  objective: "--objective",
  alpha: "--alpha",
  gamma: "--gamma",
  tau: "--tau",
  tau2: "--tau2",
  delta: "--delta",
  epsilon: "--epsilon",
  minIter: "--min-iter",
  maxIter: "--max-iter",
  maxInnerBalanced: "--max-inner-balanced",
  maxInnerRelaxed: "--max-inner-relaxed",
  seed: "--seed",
};

function isMatrix(c: CostInput): c is Matrix {
  return (c as Matrix).data instanceof Float64Array;
}

function optionArgs(options: SolveOptions): string[] {
  if (!Number.isInteger(options.rank) || options.rank < 1) {
    throw new InvalidRank(`rank must be a positive integer, got ${String(options.rank)}`);
  }
  const args: string[] = [];
  for (const [key, flag] of Object.entries(optionFlags) as [keyof SolveOptions, string][]) {
    const v = options[key];
    if (v === undefined) continue;
    if (typeof v === "number" && !Number.isFinite(v)) {
      throw new UsageError(`option ${key} is not finite`);
    }
    args.push(flag, String(v));
  }
  return args;
}

function scratchDir(): string {
  return mkdtempSync(join(tmpdir(), "frlc-"));
}

function readReport(outDir: string): z.infer<typeof reportSchema> {
  const raw: unknown = JSON.parse(readFileSync(join(outDir, "report.json"), "utf8"));
  const parsed = reportSchema.safeParse(raw);
  if (!parsed.success) {
    throw new FrlcError(`unexpected report.json shape: ${parsed.error.message}`);
  }
  return parsed.data;
}

/** Solve one transport problem. `a`/`b` of null mean uniform marginals. */
export async function solve(
  a: ArrayLike<number> | null,
  b: ArrayLike<number> | null,
  cost: CostInput,
  options: SolveOptions,
): Promise<BoundReport> {
  const dir = scratchDir();
  try {
    const outDir = join(dir, "out");
    const args = ["solve", "--out", outDir, ...optionArgs(options)];
    if (isMatrix(cost)) {
      writeMat(join(dir, "cost.mat"), cost);
      args.push("--cost", join(dir, "cost.mat"));
    } else {
      if (cost.linear) {
        writeMat(join(dir, "cost.mat"), cost.linear);
        args.push("--cost", join(dir, "cost.mat"));
      }
      if (cost.intraA) {
        writeMat(join(dir, "intra_a.mat"), cost.intraA);
        args.push("--intra-a", join(dir, "intra_a.mat"));
      }
      if (cost.intraB) {
        writeMat(join(dir, "intra_b.mat"), cost.intraB);
        args.push("--intra-b", join(dir, "intra_b.mat"));
      }
    }
    if (a !== null) {
      writeMat(join(dir, "a.mat"), vector(a));
      args.push("--a", join(dir, "a.mat"));
    }
    if (b !== null) {
      writeMat(join(dir, "b.mat"), vector(b));
      args.push("--b", join(dir, "b.mat"));
    }
    const res = await runFrlc(args);
    // Exit 2 is soft non-convergence: outputs exist and the report says
    // converged=false, so it resolves rather than throws.
    if (res.code !== 0 && res.code !== 2) throw errorFromStderr(res.stderr);
    const rep = readReport(outDir);
    return {
      cost: rep.cost,
      iters: rep.iters,
      converged: rep.converged,
      innerFailures: rep.inner_failures,
      leftResidual: rep.left_residual,
      rightResidual: rep.right_residual,
      wallTime: rep.wall_time,
      seed: rep.seed,
      costTrace: rep.cost_trace,
      deltaTrace: rep.delta_trace,
      Q: readCsv(join(outDir, "Q.csv")),
      R: readCsv(join(outDir, "R.csv")),
      T: readCsv(join(outDir, "T.csv")),
    };
  } finally {
    rmSync(dir, { recursive: true, force: true });
  }
}

/** Barycentric projection of factors onto point coordinates. */
export async function project(
  Q: Matrix,
  R: Matrix,
  T: Matrix,
  Z1: Matrix,
  Z2: Matrix,
): Promise<{ Y1: Matrix; Y2: Matrix }> {
  const dir = scratchDir();
  try {
    const factors = join(dir, "factors");
    mkdirSync(factors);
    writeMat(join(factors, "Q.mat"), Q);
    writeMat(join(factors, "R.mat"), R);
    writeMat(join(factors, "T.mat"), T);
    writeCsv(join(dir, "Z1.csv"), Z1);
    writeCsv(join(dir, "Z2.csv"), Z2);
    const outDir = join(dir, "proj");
    const res = await runFrlc([
      "project",
      "--factors", factors,
      "--points1", join(dir, "Z1.csv"),
      "--points2", join(dir, "Z2.csv"),
      "--out", outDir,
    ]);
    if (res.code !== 0) throw errorFromStderr(res.stderr);
    return {
      Y1: readCsv(join(outDir, "Y1.csv")),
      Y2: readCsv(join(outDir, "Y2.csv")),
    };
  } finally {
    rmSync(dir, { recursive: true, force: true });
  }
}

/** Version string of the underlying executable. */
export async function version(): Promise<string> {
  const res = await runFrlc(["--version"]);
  if (res.code !== 0) throw errorFromStderr(res.stderr);
  const m = /^frlc (\S+)/.exec(res.stdout.trim());
  return m ? m[1] : res.stdout.trim();
}
