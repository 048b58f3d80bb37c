import { afterAll, beforeAll, describe, expect, it } from "vitest";

import {
  ClosedHandle,
  EnvHandle,
  ShapeError,
  SteppedAfterDone,
  makeEnv,
} from "../src/index.js";
import { deepExactEqual, makeTmpDir, writeConfig } from "./support.js";

describe("environment bindings", () => {
  let dir: string;
  let config: string;
  let env: EnvHandle;

  beforeAll(async () => {
    dir = makeTmpDir();
    config = writeConfig(dir, { steps: 12, synthSteps: 800, lookback: 8 });
    env = await makeEnv(config);
  });

  afterAll(async () => {
    await env.close();
  });

  it("reports the feature schema shapes", () => {
    const schema = env.schema();
    expect(schema.version).toBe(1);
    expect(schema.market_window).toEqual([17, 8]); // (F, L)
    expect(schema.signals).toEqual([4]);
    expect(schema.private).toEqual([21]); // 1 + 2K + 2K with K = 5
    expect(schema.action).toEqual([6]); // 2 + 2 * n_levels
  });

  it("reset returns observation arrays matching the schema", async () => {
    const obs = await env.reset(3);
    expect(obs.market_window.length).toBe(17);
    expect(obs.market_window[0].length).toBe(8);
    expect(obs.signals.length).toBe(4);
    expect(obs.queue_pos.length).toBe(10);
    expect(obs.resting_volume.length).toBe(10);
    expect(obs.inventory).toBe(0);
    for (const s of obs.signals) expect([-1, 0, 1]).toContain(s);
  });

  it("reset is deterministic per seed, bit-exact", async () => {
    const a = await env.reset(7);
    const b = await env.reset(7);
    expect(deepExactEqual(a, b)).toBeNull();
    const c = await env.reset(8);
    expect(deepExactEqual(a, c)).not.toBeNull();
  });

  it("steps with rewards and done at the horizon", async () => {
    await env.reset(0);
    let done = false;
    let steps = 0;
    while (!done) {
      const out = await env.step([0, 2, 0.5, 0.5, 0.5, 0.5]);
      expect(Number.isFinite(out.reward)).toBe(true);
      expect(out.info).toHaveProperty("pnl");
      expect(out.info).toHaveProperty("ip");
      expect(out.info).toHaveProperty("comp");
      done = out.done;
      steps += 1;
    }
    expect(steps).toBe(12);
  });

  it("mirrors SteppedAfterDone after the episode ends", async () => {
    await env.reset(0);
    for (let t = 0; t < 12; t++) {
      await env.step([0, 2, 0.5, 0.5, 0.5, 0.5]);
    }
    await expect(env.step([0, 2, 0.5, 0.5, 0.5, 0.5])).rejects.toBeInstanceOf(
      SteppedAfterDone,
    );
    await env.reset(0); // leave a clean state for other tests
  });

  it("rejects non-finite actions with ShapeError", async () => {
    await env.reset(1);
    await expect(env.step([NaN, 2, 0.5, 0.5, 0.5, 0.5])).rejects.toBeInstanceOf(ShapeError);
    await expect(
      env.step([0, Infinity, 0.5, 0.5, 0.5, 0.5]),
    ).rejects.toBeInstanceOf(ShapeError);
  });

  it("rejects wrong-length actions with ShapeError", async () => {
    await env.reset(1);
    await expect(env.step([0, 2])).rejects.toBeInstanceOf(ShapeError);
  });

  it("errors with ClosedHandle after close", async () => {
    const other = await makeEnv(config);
    await other.reset(0);
    await other.close();
    await expect(other.reset(0)).rejects.toBeInstanceOf(ClosedHandle);
    await expect(other.step([0, 2, 0.5, 0.5, 0.5, 0.5])).rejects.toBeInstanceOf(
      ClosedHandle,
    );
  });
});
