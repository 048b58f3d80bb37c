export class BindingError extends Error {
  constructor(message: string) {
    super(message);
    this.name = new.target.name;
  }
}

/** Handle used after close (or never opened on the server). */
export class ClosedHandle extends BindingError {}

/** Action array has the wrong length or non-finite entries. */
export class ShapeError extends BindingError {}

/** step() called on a finished episode. */
export class SteppedAfterDone extends BindingError {}

/** Expert dataset manifest has an unsupported schema version. */
export class VersionMismatch extends BindingError {}

/** Malformed dataset or protocol line. */
export class ParseError extends BindingError {}

const byName: Record<string, new (message: string) => BindingError> = {
  ClosedHandle,
  ShapeError,
  SteppedAfterDone,
  VersionMismatch,
  ParseError,
};

/** Map a server-side error name onto the matching local class. */
export function errorFromServer(name: string, message: string): BindingError {
  const cls = byName[name] ?? BindingError;
  return new cls(`${name}: ${message}`);
}
