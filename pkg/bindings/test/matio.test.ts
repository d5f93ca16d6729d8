import { mkdtempSync, readFileSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterEach, describe, expect, it } from "vitest";

import {
  fromRows,
  matrix,
  readCsv,
  readMat,
  toRows,
  vector,
  writeCsv,
  writeMat,
} from "../src/matio.js";
import { ParseError, ShapeMismatch } from "../src/errors.js";

let dirs: string[] = [];

function scratch(): string {
  const d = mkdtempSync(join(tmpdir(), "frlc-matio-"));
  dirs.push(d);
  return d;
}

afterEach(() => {
  for (const d of dirs) rmSync(d, { recursive: true, force: true });
  dirs = [];
});

// Values picked to stress the formats: negative zero, denormals, values with
// no short decimal form, and the largest finite double.
const awkward = [
  0, -0, 1, -1, 0.1, 1 / 3, Math.PI, 1e-300, 5e-324, 1.7976931348623157e308,
  -2.2250738585072014e-308, 123456789.123456789, 1e-5,
];

describe("mat round trip", () => {
  it("is bitwise for awkward values", () => {
    const m = matrix(1, awkward.length, Float64Array.from(awkward));
    const p = join(scratch(), "m.mat");
    writeMat(p, m);
    const back = readMat(p);
    expect(back.rows).toBe(1);
    expect(back.cols).toBe(awkward.length);
    for (let i = 0; i < awkward.length; i++) {
      expect(Object.is(back.data[i], m.data[i])).toBe(true);
    }
  });

  it("rejects truncated payloads", () => {
    const p = join(scratch(), "m.mat");
    writeMat(p, fromRows([[1, 2], [3, 4]]));
    const mangled = join(scratch(), "bad.mat");
    writeFileSync(mangled, readFileSync(p).subarray(0, 20));
    expect(() => readMat(mangled)).toThrow(ParseError);
  });
});

describe("csv round trip", () => {
  it("is bitwise for awkward values", () => {
    const m = matrix(awkward.length, 1, Float64Array.from(awkward));
    const p = join(scratch(), "m.csv");
    writeCsv(p, m);
    const back = readCsv(p);
    for (let i = 0; i < awkward.length; i++) {
      expect(Object.is(back.data[i], m.data[i])).toBe(true);
    }
  });

  it("rejects ragged rows", () => {
    const p = join(scratch(), "ragged.csv");
    writeFileSync(p, "1,2\n3\n");
    expect(() => readCsv(p)).toThrow(ParseError);
  });
});

describe("constructors", () => {
  it("round trips nested arrays", () => {
    const rows = [
      [1.5, 2.5, 3.5],
      [4.5, 5.5, 6.5],
    ];
    expect(toRows(fromRows(rows))).toEqual(rows);
  });

  it("rejects ragged nested arrays", () => {
    expect(() => fromRows([[1, 2], [3]])).toThrow(ShapeMismatch);
  });

  it("rejects non-numeric entries with a TypeError", () => {
    expect(() => fromRows([[1, "x" as unknown as number]])).toThrow(TypeError);
    expect(() => vector([1, NaN])).toThrow(TypeError);
  });

  it("rejects length mismatches", () => {
    expect(() => matrix(2, 2, new Float64Array(3))).toThrow(ShapeMismatch);
  });
});
