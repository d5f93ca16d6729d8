/** Error classes mirroring the native taxonomy, one per kind. The CLI prints
 * failures to stderr as "ClassName: detail"; `errorFromStderr` maps that line
 * back to the matching class so callers can catch the same kinds they would
 * catch in Python. Anything unrecognized lands on the `FrlcError` base. */

export class FrlcError extends Error {
  constructor(message: string) {
    super(message);
    this.name = new.target.name;
  }
}

export class UsageError extends FrlcError {}
export class ShapeMismatch extends FrlcError {}
export class DimMismatch extends ShapeMismatch {}
export class DegenerateMarginal extends FrlcError {}
export class NonPositiveKernel extends FrlcError {}
export class NotConverged extends FrlcError {}
export class MissingIntraCost extends FrlcError {}
export class NegativeOmega extends FrlcError {}
export class InvalidRank extends FrlcError {}
export class TooLarge extends FrlcError {}
export class ParseError extends FrlcError {}

const byName: Record<string, new (message: string) => FrlcError> = {
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
};

export function errorFromStderr(stderr: string): FrlcError {
  const lines = stderr.trim().split("\n");
  for (let i = lines.length - 1; i >= 0; i--) {
    const m = /^([A-Za-z_][A-Za-z0-9_]*): (.*)$/.exec(lines[i].trim());
    if (m) {
      const cls = byName[m[1]];
      if (cls) return new cls(m[2]);
      return new FrlcError(`${m[1]}: ${m[2]}`);
    }
  }
  return new FrlcError(stderr.trim() || "frlc exited with an error");
}
