"""Rule-based quoting strategies and expert-trajectory export.

The linear expert quotes symmetric half-spreads around a center shifted by
inventory and by a short-horizon trend signal; beyond the inventory cap it
quotes only the unwinding side.  Quote intents are mapped into the
environment's action space so exported trajectories live in the same space
a learned policy acts in.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .book import ASK, BID
from .env import Action, DELTA_MAX, EpisodeConfig, MarketMakingEnv
from .errors import EmptySide, ParseError, VersionMismatch

EXPERT_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class LtiicParams:
    half_spread: float = 1.0  # a, ticks
    inventory_skew: float = -0.2  # b, ticks per unit; negative mean-reverts
    signal_shift: float = 1.0  # c, ticks per signal class
    inventory_cap: int = 10  # d, units

    def __post_init__(self):
        if self.half_spread < 1.0:
            raise ValueError("half spread must be at least one tick")
        if self.inventory_cap <= 0:
            raise ValueError("inventory cap must be positive")


@dataclass(frozen=True)
class QuoteIntent:
    ask: Optional[int]  # half-ticks, already on the tick grid
    bid: Optional[int]


def _ceil_even(x: float) -> int:
    return 2 * math.ceil(x / 2.0)


def _floor_even(x: float) -> int:
    return 2 * math.floor(x / 2.0)


def ltiic_quote(mid: int, z: int, signal: int, p: LtiicParams) -> QuoteIntent:
    """Linear-in-trend-and-inventory quotes around ``mid`` (half-ticks).

    Strictly inside the cap both sides quote; at or beyond it only the side
    unwinding the position is posted.  Asks round up to the grid, bids down.
    """
    center = mid + 2.0 * (p.inventory_skew * z + p.signal_shift * signal)
    ask = _ceil_even(center + 2.0 * p.half_spread)
    bid = _floor_even(center - 2.0 * p.half_spread)
    if z >= p.inventory_cap:
        return QuoteIntent(ask=ask, bid=None)
    if z <= -p.inventory_cap:
        return QuoteIntent(ask=None, bid=bid)
    return QuoteIntent(ask=ask, bid=bid)


def liic_quote(mid: int, z: int, p: LtiicParams) -> QuoteIntent:
    """Inventory-only variant: the trend term is forced to zero."""
    return ltiic_quote(mid, z, 0, p)


def foic_quote(best_bid: Optional[int], best_ask: Optional[int], z: int,
               cap: int) -> QuoteIntent:
    """Join the touch on both sides, subject to the inventory cap."""
    if best_bid is None or best_ask is None:
        raise EmptySide("touch quoting needs both best prices")
    bid: Optional[int] = best_bid
    ask: Optional[int] = best_ask
    if z >= cap:
        bid = None
    if z <= -cap:
        ask = None
    return QuoteIntent(ask=ask, bid=bid)


def encode_quotes_as_action(intent: QuoteIntent, p_ref: int,
                            cfg: EpisodeConfig) -> Action:
    """Map a quote intent into the action space.

    Two-sided intents are exact.  For a one-sided intent the spread is
    stretched toward its clamp so the phantom side sits as far away as the
    offset clamp allows (it still carries volume N; sane quotes keep it far
    from the market), marked by a weight vector on the last level.
    """
    n = cfg.n_levels
    front = (1.0,) + (0.0,) * (n - 1)
    far = (0.0,) * (n - 1) + (1.0,)
    if intent.ask is not None and intent.bid is not None:
        m_star = ((intent.ask + intent.bid) / 2.0 - p_ref) / 2.0
        delta_star = (intent.ask - intent.bid) / 2.0
        return Action(m_star, delta_star, front, front)
    if intent.ask is not None:
        alpha = intent.ask - p_ref
        delta_star = min(DELTA_MAX, DELTA_MAX + alpha)
        m_star = (alpha - delta_star) / 2.0
        return Action(m_star, delta_star, far, front)
    if intent.bid is not None:
        beta = intent.bid - p_ref
        delta_star = min(DELTA_MAX, DELTA_MAX - beta)
        m_star = (beta + delta_star) / 2.0
        return Action(m_star, delta_star, front, far)
    raise ValueError("intent has no sides")


class LtiicExpert:
    """Trend + inventory expert using the shortest-horizon signal."""

    name = "ltiic"

    def __init__(self, params: LtiicParams = LtiicParams(), signal_index: int = 0):
        self.params = params
        self.signal_index = signal_index

    def action(self, env: MarketMakingEnv, obs) -> Action:
        intent = ltiic_quote(
            env.current_mid(), env.portfolio.z,
            int(obs.signals[self.signal_index]), self.params,
        )
        return encode_quotes_as_action(intent, env.session.p_ref, env.cfg)


class LiicExpert:
    name = "liic"

    def __init__(self, params: LtiicParams = LtiicParams()):
        self.params = params

    def action(self, env: MarketMakingEnv, obs) -> Action:
        intent = liic_quote(env.current_mid(), env.portfolio.z, self.params)
        return encode_quotes_as_action(intent, env.session.p_ref, env.cfg)


class FoicExpert:
    name = "foic"

    def __init__(self, inventory_cap: int = 10):
        self.inventory_cap = inventory_cap

    def action(self, env: MarketMakingEnv, obs) -> Action:
        bb, ba = env.current_best()
        intent = foic_quote(bb, ba, env.portfolio.z, self.inventory_cap)
        return encode_quotes_as_action(intent, env.session.p_ref, env.cfg)


def run_episode(env: MarketMakingEnv, strategy, seed: Optional[int] = None,
                collect=None):
    """Roll one full episode; returns the trace.

    ``collect(obs, action)`` is invoked per step before the action applies
    (used by the expert-dataset exporter).
    """
    obs = env.reset(seed=seed)
    done = False
    while not done:
        action = strategy.action(env, obs)
        if collect is not None:
            collect(obs, action)
        obs, _, done, _ = env.step(action)
    return env.trace


def validate_action_array(arr, n_levels: int) -> None:
    """Re-check the Action invariants on a loaded sample."""
    arr = np.asarray(arr, dtype=np.float64)
    if arr.shape != (2 + 2 * n_levels,):
        raise ValueError(f"action length {arr.shape} != {2 + 2 * n_levels}")
    if not np.isfinite(arr).all():
        raise ValueError("non-finite action entries")
    for lo in (2, 2 + n_levels):
        w = arr[lo:lo + n_levels]
        if (w < 0).any() or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("weights must be nonnegative and sum to 1")


def export_expert_dataset(env: MarketMakingEnv, strategy, episodes: int,
                          path: Union[str, Path], seed: int = 0) -> dict:
    """Run the expert and write (observation, action) samples as JSONL.

    The first line is a manifest with the schema version, a hash of the full
    run configuration, and the feature shapes; identical configurations and
    seeds produce byte-identical files.  Returns the manifest.
    """
    samples = []
    for ep in range(episodes):
        run_episode(
            env, strategy, seed=seed + ep,
            collect=lambda obs, action: samples.append(_sample_line(obs, action)),
        )
    cfg = env.cfg
    config_blob = json.dumps(
        {
            "config": env.trace.meta["config"],
            "reward": env.trace.meta["reward"],
            "signals": env.trace.meta["signals"],
            "strategy": getattr(strategy, "name", type(strategy).__name__),
            "seed": seed,
            "episodes": episodes,
        },
        sort_keys=True,
    )
    manifest = {
        "kind": "manifest",
        "schema_version": EXPERT_SCHEMA_VERSION,
        "config_hash": hashlib.sha256(config_blob.encode()).hexdigest(),
        "seed": seed,
        "episodes": episodes,
        "samples": len(samples),
        "feature_schema": {
            "n_features": env.n_features,
            "lookback": cfg.lookback,
            "depth": cfg.depth,
            "n_levels": cfg.n_levels,
            "horizons": list(env.signal_spec.horizons),
        },
    }
    path = Path(path)
    with path.open("w") as fh:
        fh.write(json.dumps(manifest, sort_keys=True, separators=(",", ":")) + "\n")
        fh.writelines(samples)
    return manifest


def _sample_line(obs, action: Action) -> str:
    payload = {
        "kind": "sample",
        "market_window": [[float(x) for x in row] for row in obs.market_window],
        "signals": [int(x) for x in obs.signals],
        "inventory": int(obs.inventory),
        "queue_pos": [float(x) for x in obs.queue_pos],
        "resting_volume": [float(x) for x in obs.resting_volume],
        "action": [float(x) for x in action.as_array()],
    }
    return json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n"


def load_expert_dataset(path: Union[str, Path]):
    """Yield (sample dict) from an expert dataset, validating the manifest."""
    path = Path(path)
    with path.open() as fh:
        first = fh.readline()
        if not first:
            raise ParseError(1, "empty expert dataset")
        manifest = json.loads(first)
        if manifest.get("kind") != "manifest":
            raise ParseError(1, "missing manifest line")
        if manifest.get("schema_version") != EXPERT_SCHEMA_VERSION:
            raise VersionMismatch(
                f"schema {manifest.get('schema_version')} != {EXPERT_SCHEMA_VERSION}"
            )
        yield manifest
        for line_no, line in enumerate(fh, start=2):
            obj = json.loads(line)
            if obj.get("kind") != "sample":
                raise ParseError(line_no, "expected a sample line")
            yield obj


STRATEGIES = {
    "ltiic": lambda p: LtiicExpert(LtiicParams(
        half_spread=p.get("a", 1.0), inventory_skew=p.get("b", -0.2),
        signal_shift=p.get("c", 1.0), inventory_cap=int(p.get("d", 10)))),
    "liic": lambda p: LiicExpert(LtiicParams(
        half_spread=p.get("a", 1.0), inventory_skew=p.get("b", -0.2),
        signal_shift=0.0, inventory_cap=int(p.get("d", 10)))),
    "foic": lambda p: FoicExpert(inventory_cap=int(p.get("d", 10))),
}


def make_strategy(name: str, params: Optional[dict] = None):
    if name not in STRATEGIES:
        raise ValueError(f"unknown strategy {name!r}; valid: {sorted(STRATEGIES)}")
    return STRATEGIES[name](params or {})
