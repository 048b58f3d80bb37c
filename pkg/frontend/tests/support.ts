import { execFileSync } from "node:child_process";
import { mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

export function makeTmpDir(): string {
  return mkdtempSync(join(tmpdir(), "mmsim-bindings-"));
}

export interface ConfigOptions {
  steps?: number;
  synthSteps?: number;
  trend?: number;
  lookback?: number;
  horizons?: string;
  episodes?: number;
  seed?: number;
  strategy?: string;
}

/** Write a run config INI with a synthetic data source. */
export function writeConfig(dir: string, opts: ConfigOptions = {}): string {
  const {
    steps = 25,
    synthSteps = 200,
    trend = 0.05,
    lookback = 10,
    horizons = "20,120,240,600",
    episodes = 1,
    seed = 0,
    strategy = "ltiic",
  } = opts;
  const path = join(dir, "run.ini");
  writeFileSync(
    path,
    `[data]
synth_seed = 5
synth_steps = ${synthSteps}
synth_trend = ${trend}
synth_trade_intensity = 3.0

[episode]
steps = ${steps}
total_volume = 20
n_levels = 2
depth = 5
lookback = ${lookback}
start = random

[signals]
kind = oracle
horizons = ${horizons}
threshold = 0.5

[strategy]
id = ${strategy}
a = 1.0
b = -0.2
c = 1.0
d = 6

[run]
episodes = ${episodes}
seed = ${seed}
`,
  );
  return path;
}

export function runNative(args: string[], cwd?: string): string {
  return execFileSync("python3", args, {
    cwd,
    encoding: "utf-8",
    timeout: 180_000,
    maxBuffer: 512 * 1024 * 1024,
  });
}

/** The scripted policy of the parity harness; dyadic-exact in both languages. */
export function scriptedAction(t: number): number[] {
  const m = ((t % 7) - 3) * 0.5;
  const d = 1 + (t % 4);
  const wb = ((t % 5) + 1) / 8;
  const wa = ((t % 3) + 1) / 4;
  return [m, d, wb, 1 - wb, wa, 1 - wa];
}

/** Recursive equality where every number must be bit-identical (Object.is). */
export function deepExactEqual(a: unknown, b: unknown, path = "$"): string | null {
  if (typeof a === "number" || typeof b === "number") {
    return Object.is(a, b) ? null : `${path}: ${a} !== ${b}`;
  }
  if (Array.isArray(a) || Array.isArray(b)) {
    if (!Array.isArray(a) || !Array.isArray(b) || a.length !== b.length) {
      return `${path}: array shape mismatch`;
    }
    for (let i = 0; i < a.length; i++) {
      const err = deepExactEqual(a[i], b[i], `${path}[${i}]`);
      if (err) return err;
    }
    return null;
  }
  if (a && b && typeof a === "object" && typeof b === "object") {
    const ka = Object.keys(a as object).sort();
    const kb = Object.keys(b as object).sort();
    if (ka.join(",") !== kb.join(",")) {
      return `${path}: keys ${ka} != ${kb}`;
    }
    for (const k of ka) {
      const err = deepExactEqual(
        (a as Record<string, unknown>)[k],
        (b as Record<string, unknown>)[k],
        `${path}.${k}`,
      );
      if (err) return err;
    }
    return null;
  }
  return a === b ? null : `${path}: ${String(a)} !== ${String(b)}`;
}
