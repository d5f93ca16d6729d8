import { spawn } from "node:child_process";
import { FrlcError } from "./errors.js";

export interface RunResult {
  code: number;
  stdout: string;
  stderr: string;
}

/** The executable to spawn: FRLC_BIN when set, otherwise `frlc` on PATH. */
export function frlcBin(): string {
  return process.env.FRLC_BIN || "frlc";
}

export function runFrlc(args: string[]): Promise<RunResult> {
  return new Promise((resolve, reject) => {
    const child = spawn(frlcBin(), args, { stdio: ["ignore", "pipe", "pipe"] });
    let stdout = "";
    let stderr = "";
    child.stdout.on("data", (chunk) => (stdout += chunk));
    child.stderr.on("data", (chunk) => (stderr += chunk));
    child.on("error", (err: NodeJS.ErrnoException) => {
      if (err.code === "ENOENT") {
        reject(
          new FrlcError(
            `cannot find ${frlcBin()}; install the Python package or set FRLC_BIN`,
          ),
        );
      } else {
        reject(new FrlcError(`failed to spawn ${frlcBin()}: ${err.message}`));
      }
    });
    child.on("close", (code) => {
      resolve({ code: code ?? 1, stdout, stderr });
    });
  });
}
