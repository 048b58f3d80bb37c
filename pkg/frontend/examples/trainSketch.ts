/**
 * Toy training sketch: combined critic-maximization + imitation objective
 * with a decaying imitation weight, driven entirely through the bindings.
 *
 * This is documentation, not library code: the "critic" is a ridge
 * regression on hand-rolled features and the "actor" a linear map, just
 * enough to show where a real TD3-style learner would plug in — the
 * environment steps and the expert samples both arrive through the public
 * binding surface.
 *
 * Run (after exporting an expert dataset and writing run.ini):
 *   npx tsx examples/trainSketch.ts run.ini expert.jsonl
 */
import { loadExpertDataset, makeEnv, type Observation } from "../src/index.js";

const ACTION_DIM = 6;
const LAMBDA0 = 1.0; // imitation weight, decayed as training progresses
const ROUNDS = 5;
const ROLLOUT_STEPS = 200;
const LEARNING_RATE = 0.05;

/** Compact state features: signals, inventory, and the latest market row. */
function featurize(obs: Observation): number[] {
  const latest = obs.market_window.map((row) => row[row.length - 1]);
  return [1.0, obs.inventory / 20, ...obs.signals, ...latest.slice(0, 6)];
}

type Matrix = number[][];

function matVec(m: Matrix, v: number[]): number[] {
  return m.map((row) => row.reduce((acc, w, i) => acc + w * v[i], 0));
}

/** Linear policy: action = clip(W s). */
function act(weights: Matrix, s: number[]): number[] {
  const raw = matVec(weights, s);
  const m = Math.max(-10, Math.min(10, raw[0]));
  const d = Math.max(1, Math.min(20, 1 + Math.abs(raw[1])));
  const squash = (x: number) => 1 / (1 + Math.exp(-x));
  const wb = squash(raw[2]);
  const wa = squash(raw[4]);
  return [m, d, wb, 1 - wb, wa, 1 - wa];
}

/** One-feature-at-a-time ridge fit of reward on (s, a) — the toy "critic". */
function fitCritic(xs: number[][], ys: number[]): number[] {
  const dim = xs[0].length;
  const w = new Array<number>(dim).fill(0);
  for (let k = 0; k < dim; k++) {
    let num = 0;
    let den = 1e-6;
    for (let i = 0; i < xs.length; i++) {
      num += xs[i][k] * ys[i];
      den += xs[i][k] * xs[i][k];
    }
    w[k] = num / den;
  }
  return w;
}

async function main(): Promise<void> {
  const [configPath, expertPath] = process.argv.slice(2);
  if (!configPath || !expertPath) {
    console.error("usage: trainSketch.ts RUN_CONFIG_INI EXPERT_JSONL");
    process.exit(2);
  }
  const expert = loadExpertDataset(expertPath);
  const expertPairs = [...expert.samples()].map((s) => ({
    features: featurize(s),
    action: s.action,
  }));
  console.log(`expert: ${expertPairs.length} samples (${expert.manifest.config_hash.slice(0, 12)})`);

  const env = await makeEnv(configPath);
  const stateDim = featurize(await env.reset(0)).length;
  const weights: Matrix = Array.from({ length: ACTION_DIM }, () =>
    new Array<number>(stateDim).fill(0),
  );

  for (let round = 0; round < ROUNDS; round++) {
    // exploration rollout through the bindings
    let obs = await env.reset(round);
    const states: number[][] = [];
    const rewards: number[] = [];
    for (let t = 0; t < ROLLOUT_STEPS; t++) {
      const s = featurize(obs);
      const noise = weights[0].length === 0 ? 0 : (((t * 2654435761) >>> 16) % 128) / 256 - 0.25;
      const action = act(weights, s);
      action[0] = Math.max(-10, Math.min(10, action[0] + noise));
      const out = await env.step(action);
      states.push([...s, ...action]);
      rewards.push(out.reward);
      obs = out.obs;
      if (out.done) break;
    }
    const critic = fitCritic(states, rewards);

    // combined update: ascend the critic, descend the imitation gap,
    // with the imitation weight decaying over training rounds
    const lambda = LAMBDA0 / (1 + round);
    let imitation = 0;
    for (const pair of expertPairs) {
      const predicted = act(weights, pair.features);
      for (let k = 0; k < ACTION_DIM; k++) {
        const gap = pair.action[k] - predicted[k];
        imitation += gap * gap;
        for (let i = 0; i < pair.features.length; i++) {
          weights[k][i] += LEARNING_RATE * lambda * gap * pair.features[i];
        }
      }
    }
    for (let k = 0; k < ACTION_DIM; k++) {
      // critic gradient w.r.t. the action block feeds the actor ascent
      const g = critic[stateDim + k];
      for (let i = 0; i < stateDim; i++) {
        weights[k][i] += LEARNING_RATE * g * 0.1;
      }
    }
    const meanReward = rewards.reduce((a, b) => a + b, 0) / rewards.length;
    console.log(
      `round ${round}: lambda=${lambda.toFixed(3)} mean_reward=${meanReward.toFixed(3)} ` +
        `bc_loss=${(imitation / expertPairs.length).toFixed(4)}`,
    );
  }
  await env.close();
}

main().catch((err) => {
  console.error(err);
  process.exit(1);
});
