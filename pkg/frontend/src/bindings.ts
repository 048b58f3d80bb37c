/**
 * Environment bindings over the `mmsim serve` line protocol.
 *
 * One native process per handle; requests and responses are newline-framed
 * JSON and strictly sequential, so ordering doubles as correlation.  The
 * bindings carry data and stepping only — no training logic crosses the
 * boundary.
 */
import { spawn, ChildProcessWithoutNullStreams } from "node:child_process";
import { createInterface, Interface } from "node:readline";

import { ClosedHandle, ShapeError, errorFromServer } from "./errors.js";

export interface EnvSchema {
  version: number;
  n_features: number;
  lookback: number;
  market_window: [number, number];
  signals: [number];
  private: [number];
  action: [number];
  n_levels: number;
  depth: number;
  horizons: number[];
}

export interface Observation {
  market_window: number[][];
  signals: number[];
  inventory: number;
  queue_pos: number[];
  resting_volume: number[];
}

export interface StepInfo {
  pnl: number;
  ip: number;
  comp: number;
  n_cancels: number;
  n_placements: number;
  step: number;
}

export interface StepResult {
  obs: Observation;
  reward: number;
  done: boolean;
  info: StepInfo;
}

export interface MakeEnvOptions {
  /** Interpreter used to launch the native server (default "python3"). */
  python?: string;
  /** Extra interpreter arguments before `-m mmsim.cli serve`. */
  pythonArgs?: string[];
  /** Working directory for the server process. */
  cwd?: string;
}

interface ServerResponse {
  ok: boolean;
  error?: string;
  message?: string;
  [key: string]: unknown;
}

class ServerProcess {
  private proc: ChildProcessWithoutNullStreams;
  private lines: Interface;
  private pending: Array<{
    resolve: (value: ServerResponse) => void;
    reject: (err: Error) => void;
  }> = [];
  private stderrTail = "";
  private exited = false;

  constructor(opts: MakeEnvOptions) {
    const python = opts.python ?? "python3";
    const args = [...(opts.pythonArgs ?? []), "-m", "mmsim.cli", "serve"];
    this.proc = spawn(python, args, { cwd: opts.cwd, stdio: "pipe" });
    this.lines = createInterface({ input: this.proc.stdout });
    this.lines.on("line", (line) => {
      const waiter = this.pending.shift();
      if (!waiter) return;
      try {
        waiter.resolve(JSON.parse(line) as ServerResponse);
      } catch (err) {
        waiter.reject(err as Error);
      }
    });
    this.proc.stderr.on("data", (chunk) => {
      this.stderrTail = (this.stderrTail + String(chunk)).slice(-4000);
    });
    this.proc.on("exit", () => {
      this.exited = true;
      for (const waiter of this.pending.splice(0)) {
        waiter.reject(
          new ClosedHandle(`server exited${this.stderrTail ? `: ${this.stderrTail}` : ""}`),
        );
      }
    });
  }

  request(payload: Record<string, unknown>): Promise<ServerResponse> {
    if (this.exited) {
      return Promise.reject(new ClosedHandle("server process has exited"));
    }
    return new Promise((resolve, reject) => {
      this.pending.push({ resolve, reject });
      this.proc.stdin.write(JSON.stringify(payload) + "\n");
    });
  }

  kill(): void {
    this.lines.close();
    this.proc.kill();
  }
}

function unwrap(resp: ServerResponse): ServerResponse {
  if (!resp.ok) {
    throw errorFromServer(String(resp.error ?? "BindingError"), String(resp.message ?? ""));
  }
  return resp;
}

/** A live environment: reset/step/schema/close over a dedicated server. */
export class EnvHandle {
  private server: ServerProcess;
  private handleId: number;
  private envSchema: EnvSchema;
  private open = true;

  private constructor(server: ServerProcess, handleId: number, schema: EnvSchema) {
    this.server = server;
    this.handleId = handleId;
    this.envSchema = schema;
  }

  static async open(configPath: string, opts: MakeEnvOptions = {}): Promise<EnvHandle> {
    const server = new ServerProcess(opts);
    try {
      const resp = unwrap(await server.request({ op: "make_env", config: configPath }));
      return new EnvHandle(server, resp.handle as number, resp.schema as EnvSchema);
    } catch (err) {
      server.kill();
      throw err;
    }
  }

  /** Feature schema: array shapes for the market window, signals, private state. */
  schema(): EnvSchema {
    this.assertOpen();
    return this.envSchema;
  }

  async reset(seed?: number): Promise<Observation> {
    this.assertOpen();
    const resp = unwrap(
      await this.server.request({ op: "reset", handle: this.handleId, seed: seed ?? null }),
    );
    return resp.obs as Observation;
  }

  async step(action: ArrayLike<number>): Promise<StepResult> {
    this.assertOpen();
    const arr = Array.from(action, Number);
    const want = this.envSchema.action[0];
    if (arr.length !== want) {
      throw new ShapeError(`action length ${arr.length} != ${want}`);
    }
    if (!arr.every(Number.isFinite)) {
      throw new ShapeError("non-finite action entries");
    }
    const resp = unwrap(
      await this.server.request({ op: "step", handle: this.handleId, action: arr }),
    );
    return {
      obs: resp.obs as Observation,
      reward: resp.reward as number,
      done: resp.done as boolean,
      info: resp.info as StepInfo,
    };
  }

  async close(): Promise<void> {
    if (!this.open) return;
    this.open = false;
    try {
      await this.server.request({ op: "close", handle: this.handleId });
    } finally {
      this.server.kill();
    }
  }

  private assertOpen(): void {
    if (!this.open) {
      throw new ClosedHandle(`handle ${this.handleId} is closed`);
    }
  }
}

/** Open an environment described by a run config (INI) file. */
export function makeEnv(configPath: string, opts: MakeEnvOptions = {}): Promise<EnvHandle> {
  return EnvHandle.open(configPath, opts);
}
