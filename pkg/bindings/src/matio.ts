/** Matrix I/O matching the native formats.
 *
 * Binary .mat: 8-byte magic "FRLCMAT1", u32 LE row and column counts, then
 * the row-major float64 LE payload. Written and read through a DataView so
 * the layout is right regardless of host endianness; values survive bitwise.
 *
 * CSV: one row per line, no header. Both sides write floats in shortest
 * round-trip form (JS String(), Python repr()), and both parsers return the
 * nearest double, so CSV round trips are bitwise too. The one wrinkle is
 * negative zero, which String() drops the sign of; it is written as "-0.0"
 * explicitly.
 */

import { readFileSync, writeFileSync } from "node:fs";
import { ShapeMismatch, ParseError } from "./errors.js";

export interface Matrix {
  rows: number;
  cols: number;
  /** Row-major, length rows * cols. */
  data: Float64Array;
}

const MAGIC = "FRLCMAT1";
const HEADER_BYTES = 16;

function checkDims(rows: number, cols: number): void {
  if (!Number.isInteger(rows) || !Number.isInteger(cols) || rows < 1 || cols < 1) {
    throw new ShapeMismatch(`matrix dimensions must be positive integers, got ${rows}x${cols}`);
  }
}

export function matrix(rows: number, cols: number, data: Float64Array): Matrix {
  checkDims(rows, cols);
  if (data.length !== rows * cols) {
    throw new ShapeMismatch(
      `data length ${data.length} does not match ${rows}x${cols}`,
    );
  }
  return { rows, cols, data };
}

/** Build a Matrix from nested arrays, validating every entry is a finite number. */
export function fromRows(rows: readonly (readonly number[])[]): Matrix {
  if (rows.length === 0 || rows[0].length === 0) {
    throw new ShapeMismatch("matrix must have at least one row and column");
  }
  const cols = rows[0].length;
  const data = new Float64Array(rows.length * cols);
  for (let i = 0; i < rows.length; i++) {
    if (rows[i].length !== cols) {
      throw new ShapeMismatch(`row ${i} has ${rows[i].length} entries, expected ${cols}`);
    }
    for (let j = 0; j < cols; j++) {
      const v = rows[i][j];
      if (typeof v !== "number" || !Number.isFinite(v)) {
        throw new TypeError(`entry (${i}, ${j}) is not a finite number: ${String(v)}`);
      }
      data[i * cols + j] = v;
    }
  }
  return { rows: rows.length, cols, data };
}

export function toRows(m: Matrix): number[][] {
  const out: number[][] = [];
  for (let i = 0; i < m.rows; i++) {
    out.push(Array.from(m.data.subarray(i * m.cols, (i + 1) * m.cols)));
  }
  return out;
}

/** A column vector (n x 1) from any numeric array, with the same validation. */
export function vector(values: ArrayLike<number>): Matrix {
  const n = values.length;
  if (n === 0) throw new ShapeMismatch("vector must be non-empty");
  const data = new Float64Array(n);
  for (let i = 0; i < n; i++) {
    const v = values[i];
    if (typeof v !== "number" || !Number.isFinite(v)) {
      throw new TypeError(`entry ${i} is not a finite number: ${String(v)}`);
    }
    data[i] = v;
  }
  return { rows: n, cols: 1, data };
}

export function writeMat(path: string, m: Matrix): void {
  const buf = Buffer.alloc(HEADER_BYTES + 8 * m.data.length);
  buf.write(MAGIC, 0, "ascii");
  buf.writeUInt32LE(m.rows, 8);
  buf.writeUInt32LE(m.cols, 12);
  const view = new DataView(buf.buffer, buf.byteOffset + HEADER_BYTES);
  for (let i = 0; i < m.data.length; i++) view.setFloat64(8 * i, m.data[i], true);
  writeFileSync(path, buf);
}

export function readMat(path: string): Matrix {
  const buf = readFileSync(path);
  if (buf.length < HEADER_BYTES || buf.toString("ascii", 0, 8) !== MAGIC) {
    throw new ParseError(`${path}: not a ${MAGIC} file`);
  }
  const rows = buf.readUInt32LE(8);
  const cols = buf.readUInt32LE(12);
  checkDims(rows, cols);
  if (buf.length !== HEADER_BYTES + 8 * rows * cols) {
    throw new ParseError(`${path}: payload size does not match ${rows}x${cols}`);
  }
  const data = new Float64Array(rows * cols);
  const view = new DataView(buf.buffer, buf.byteOffset + HEADER_BYTES);
  for (let i = 0; i < data.length; i++) data[i] = view.getFloat64(8 * i, true);
  return { rows, cols, data };
}

function formatValue(v: number): string {
  if (Object.is(v, -0)) return "-0.0";
  return String(v);
}

export function writeCsv(path: string, m: Matrix): void {
  const lines: string[] = [];
  for (let i = 0; i < m.rows; i++) {
    const row: string[] = [];
    for (let j = 0; j < m.cols; j++) row.push(formatValue(m.data[i * m.cols + j]));
    lines.push(row.join(","));
  }
  writeFileSync(path, lines.join("\n") + "\n");
}

export function readCsv(path: string): Matrix {
  const text = readFileSync(path, "utf8");
  const lines = text.split("\n").filter((l) => l.trim() !== "");
  if (lines.length === 0) throw new ParseError(`${path}: empty matrix file`);
  const rows: number[][] = [];
  let cols = -1;
  for (let i = 0; i < lines.length; i++) {
    const parts = lines[i].split(",");
    if (cols === -1) cols = parts.length;
    else if (parts.length !== cols) {
      throw new ParseError(`${path}: line ${i + 1} has ${parts.length} fields, expected ${cols}`);
    }
    const row: number[] = [];
    for (const p of parts) {
      const v = Number(p);
      if (Number.isNaN(v) && p.trim().toLowerCase() !== "nan") {
        throw new ParseError(`${path}: line ${i + 1}: cannot parse ${JSON.stringify(p.trim())}`);
      }
      row.push(v);
    }
    rows.push(row);
  }
  const data = new Float64Array(rows.length * cols);
  for (let i = 0; i < rows.length; i++) {
    for (let j = 0; j < cols; j++) data[i * cols + j] = rows[i][j];
  }
  return { rows: rows.length, cols, data };
}
