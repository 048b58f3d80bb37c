/**
 * Expert-trajectory dataset loader (JSON lines: manifest, then samples).
 */
import { readFileSync } from "node:fs";

import { ParseError, ShapeError, VersionMismatch } from "./errors.js";

export const EXPERT_SCHEMA_VERSION = 1;

export interface ExpertManifest {
  kind: "manifest";
  schema_version: number;
  config_hash: string;
  seed: number;
  episodes: number;
  samples: number;
  feature_schema: {
    n_features: number;
    lookback: number;
    depth: number;
    n_levels: number;
    horizons: number[];
  };
}

export interface ExpertSample {
  kind: "sample";
  market_window: number[][];
  signals: number[];
  inventory: number;
  queue_pos: number[];
  resting_volume: number[];
  action: number[];
}

export interface ExpertDataset {
  manifest: ExpertManifest;
  samples: () => Generator<ExpertSample>;
}

/** Re-check the action-space invariants on a loaded sample. */
export function validateActionArray(action: number[], nLevels: number): void {
  if (action.length !== 2 + 2 * nLevels) {
    throw new ShapeError(`action length ${action.length} != ${2 + 2 * nLevels}`);
  }
  if (!action.every(Number.isFinite)) {
    throw new ShapeError("non-finite action entries");
  }
  for (const lo of [2, 2 + nLevels]) {
    const weights = action.slice(lo, lo + nLevels);
    const sum = weights.reduce((a, b) => a + b, 0);
    if (weights.some((w) => w < 0) || Math.abs(sum - 1) > 1e-9) {
      throw new ShapeError("weights must be nonnegative and sum to 1");
    }
  }
}

/**
 * Load an expert dataset written by the native exporter.
 *
 * Validates the manifest schema version eagerly; samples are yielded lazily
 * in file order.
 */
export function loadExpertDataset(path: string): ExpertDataset {
  const lines = readFileSync(path, "utf-8").split("\n");
  if (!lines[0]) {
    throw new ParseError(`${path}: empty expert dataset`);
  }
  let manifest: ExpertManifest;
  try {
    manifest = JSON.parse(lines[0]) as ExpertManifest;
  } catch (err) {
    throw new ParseError(`${path}:1: ${(err as Error).message}`);
  }
  if (manifest.kind !== "manifest") {
    throw new ParseError(`${path}:1: missing manifest line`);
  }
  if (manifest.schema_version !== EXPERT_SCHEMA_VERSION) {
    throw new VersionMismatch(
      `schema ${manifest.schema_version} != ${EXPERT_SCHEMA_VERSION}`,
    );
  }
  function* samples(): Generator<ExpertSample> {
    for (let i = 1; i < lines.length; i++) {
      const line = lines[i];
      if (!line) continue;
      let obj: ExpertSample;
      try {
        obj = JSON.parse(line) as ExpertSample;
      } catch (err) {
        throw new ParseError(`${path}:${i + 1}: ${(err as Error).message}`);
      }
      if (obj.kind !== "sample") {
        throw new ParseError(`${path}:${i + 1}: expected a sample line`);
      }
      yield obj;
    }
  }
  return { manifest, samples };
}
