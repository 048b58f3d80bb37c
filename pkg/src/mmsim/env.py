"""Episodic market-making environment.

Each step the agent expresses a quote intent: a desired mid offset from the
reference price, a desired total spread, and per-side volume weights over
``n_levels`` adjacent ticks.  The environment turns the intent into order
diffs (cancel excess newest-first, place deficits), replays one recorded
interval against the overlay book, and pays a reward combining marked PnL,
a truncated inventory penalty, and a traded-notional compensation bonus.

PnL is kept exact in integer half-tick units alongside the float reward so
that episode sums reproduce terminal mark-to-market wealth identically.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .book import AGENT, ASK, BID, PESSIMISTIC, Fill, Order, level_index
from .data import Dataset
from .errors import DatasetTooShort, SteppedAfterDone
from .replay import ReplaySession
from .signals import SignalSpec, make_provider
from .trace import EpisodeTrace, StepRecord

# action clamps (ticks); out-of-range inputs are clamped, not rejected
M_STAR_MAX = 10.0
DELTA_MIN = 1.0
DELTA_MAX = 20.0

RETURN_LAGS = (1, 5, 20, 60)
VOLUME_NORM_WINDOW = 100

WEALTH_DELTA = "wealth_delta"
VERBATIM = "verbatim"


@dataclass(frozen=True)
class Action:
    """Quote intent: mid offset and spread in ticks, per-side volume weights."""

    m_star: float
    delta_star: float
    phi_bid: tuple
    phi_ask: tuple

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.m_star, self.delta_star, *self.phi_bid, *self.phi_ask], dtype=np.float64
        )

    @classmethod
    def from_array(cls, arr, n_levels: int) -> "Action":
        arr = np.asarray(arr, dtype=np.float64)
        if arr.shape != (2 + 2 * n_levels,):
            raise ValueError(f"action array must have shape ({2 + 2 * n_levels},)")
        return cls(
            float(arr[0]),
            float(arr[1]),
            tuple(float(x) for x in arr[2:2 + n_levels]),
            tuple(float(x) for x in arr[2 + n_levels:]),
        )


@dataclass(frozen=True)
class RewardParams:
    eta: float = 0.0  # inventory penalty weight
    beta: float = 0.0  # compensation per unit traded notional
    cap: float = 0.0  # inventory threshold C; penalty applies beyond it
    pnl_mode: str = WEALTH_DELTA

    def __post_init__(self):
        if self.eta < 0 or self.beta < 0 or self.cap < 0:
            raise ValueError("reward parameters must be nonnegative")
        if self.pnl_mode not in (WEALTH_DELTA, VERBATIM):
            raise ValueError(f"unknown pnl mode {self.pnl_mode!r}")


@dataclass(frozen=True)
class EpisodeConfig:
    steps: int = 10800  # T
    dt_ms: int = 500
    total_volume: int = 20  # N, per side
    n_levels: int = 2
    depth: int = 5  # K, slots per side in the observation
    lookback: int = 50  # L, market feature window
    start: object = "random"  # "random" or fixed index
    seed: int = 0

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.total_volume < self.n_levels:
            raise ValueError("total volume must cover at least one unit per level")


@dataclass
class Portfolio:
    cash_halfticks: int = 0  # price (half-ticks) x volume units
    z: int = 0
    resting: dict = field(default_factory=dict)  # order id -> live Order

    def resting_view(self, book) -> list:
        return [
            (o.price, o.volume, book.volume_ahead(o), o.seq)
            for o in self.resting.values()
        ]


@dataclass
class Observation:
    market: np.ndarray  # (F,) current feature row
    market_window: np.ndarray  # (F, L)
    signals: np.ndarray  # (H,) in {-1, 0, 1}
    inventory: int
    queue_pos: np.ndarray  # (2K,) levels -K..-1, +1..+K
    resting_volume: np.ndarray  # (2K,)

    @property
    def private(self) -> np.ndarray:
        return np.concatenate(([float(self.inventory)], self.queue_pos, self.resting_volume))


@dataclass(frozen=True)
class RewardTerms:
    pnl: float
    ip: float
    comp: float
    total: float
    pnl_halfticks: int
    dz: int


def _finite(x: float, default: float) -> float:
    return x if math.isfinite(x) else default


def apportion_volume(total: int, weights) -> list[int]:
    """Largest-remainder split of ``total`` over nonnegative weights."""
    w = [max(_finite(float(x), 0.0), 0.0) for x in weights]
    s = sum(w)
    if s <= 0.0:
        w = [1.0] * len(w)
        s = float(len(w))
    if len(w) == 2:  # fast path for the standard two-level config
        e0 = total * w[0] / s
        first = int(e0)
        # leftover unit goes to the larger remainder, ties toward index 0
        if e0 - first >= 0.5:
            first += 1
        return [first, total - first]
    exact = [total * x / s for x in w]
    out = [int(x) for x in exact]
    leftover = total - sum(out)
    by_remainder = sorted(range(len(exact)), key=lambda i: (out[i] - exact[i], i))
    for i in by_remainder[:leftover]:
        out[i] += 1
    return out


def decode_action(action: Action, cfg: EpisodeConfig, p_ref: int):
    """Quote intent to desired quote sets ({price: volume} per side).

    Ask prices are ``n_levels`` consecutive ticks from the smallest tick at
    or above ``p_ref + m* + delta*/2``; bids descend from the largest tick at
    or below ``p_ref + m* - delta*/2`` (asks round up, bids down: never
    inside the requested spread).  Per-side volumes always sum to N.
    """
    m = min(max(_finite(action.m_star, 0.0), -M_STAR_MAX), M_STAR_MAX)
    d = min(max(_finite(action.delta_star, DELTA_MIN), DELTA_MIN), DELTA_MAX)
    ask_bound = p_ref + 2.0 * m + d  # half-ticks
    bid_bound = p_ref + 2.0 * m - d
    ask_start = 2 * math.ceil(ask_bound / 2.0)
    bid_start = 2 * math.floor(bid_bound / 2.0)
    ask_vols = apportion_volume(cfg.total_volume, action.phi_ask)
    bid_vols = apportion_volume(cfg.total_volume, action.phi_bid)
    asks = {ask_start + 2 * k: v for k, v in enumerate(ask_vols) if v > 0}
    bids = {bid_start - 2 * k: v for k, v in enumerate(bid_vols) if v > 0}
    return bids, asks


def diff_orders(resting, desired_bids: dict, desired_asks: dict):
    """Order operations moving the resting set onto the desired quotes.

    Excess volume at a price is cancelled newest-first so the oldest orders
    keep their queue priority; a deficit becomes one new order.  Unchanged
    (price, volume) pairs produce no operations.
    """
    cancels: list[tuple[Order, int]] = []
    placements: list[tuple[str, int, int]] = []
    by_side = {BID: {}, ASK: {}}
    for order in resting:
        by_side[order.side].setdefault(order.price, []).append(order)
    for side, desired in ((BID, desired_bids), (ASK, desired_asks)):
        current = by_side[side]
        prices = list(desired)
        prices += [p for p in current if p not in desired]
        for price in prices:
            orders = current.get(price, ())
            have = sum(o.volume for o in orders)
            want = desired.get(price, 0)
            if have > want:
                excess = have - want
                for order in sorted(orders, key=lambda o: -o.seq):
                    cut = min(order.volume, excess)
                    cancels.append((order, cut))
                    excess -= cut
                    if excess == 0:
                        break
            elif have < want:
                placements.append((side, price, want - have))
    return cancels, placements


def compute_reward(fills, z_next: int, mid_t: int, mid_next: int,
                   params: RewardParams, tick_size: float = 1.0) -> RewardTerms:
    """Reward terms for one step; prices and mids in half-ticks.

    PnL = realized fill cash flow + floating mark move on the new inventory;
    wealth-delta mode adds the cash-basis term ``mid_t * dz`` so episode PnL
    sums telescope to terminal wealth.  The inventory penalty applies only
    beyond the threshold; compensation pays on traded notional.
    """
    sell_notional = 0
    buy_notional = 0
    sold = 0
    bought = 0
    for f in fills:
        if f.side == ASK:
            sell_notional += f.price * f.volume
            sold += f.volume
        else:
            buy_notional += f.price * f.volume
            bought += f.volume
    dz = bought - sold
    pnl_ht = (sell_notional - buy_notional) + (mid_next - mid_t) * z_next
    if params.pnl_mode == WEALTH_DELTA:
        pnl_ht += mid_t * dz
    half_tick = tick_size / 2.0
    pnl = pnl_ht * half_tick
    ip = -params.eta * abs(z_next) if abs(z_next) > params.cap else 0.0
    comp = params.beta * (sell_notional + buy_notional) * half_tick
    return RewardTerms(pnl, ip, comp, pnl + ip + comp, pnl_ht, dz)


class MarketMakingEnv:
    """Gym-style environment over a snapshot dataset.

    One instance per thread; several instances may share one dataset.
    ``reset`` picks the episode start (seeded when random), rebuilds the
    book, and precomputes the episode's signal table and market features
    that do not depend on the intra-episode book state.
    """

    def __init__(self, data: Dataset, cfg: EpisodeConfig = EpisodeConfig(),
                 reward: RewardParams = RewardParams(),
                 signals: SignalSpec = SignalSpec(),
                 queue_mode: str = PESSIMISTIC):
        self.data = data
        self.cfg = cfg
        self.reward_params = reward
        self.signal_spec = signals
        self.provider = make_provider(signals)
        self.queue_mode = queue_mode
        self.n_features = 2 * cfg.depth + len(RETURN_LAGS) + 3
        self._vol_norm = self._rolling_volume_norm(data)
        self.session: Optional[ReplaySession] = None
        self.done = True

    @staticmethod
    def _rolling_volume_norm(data: Dataset) -> np.ndarray:
        vol = data.vol.astype(np.float64)
        cums = np.concatenate(([0.0], np.cumsum(vol)))
        n = len(vol)
        idx = np.arange(n)
        lo = np.maximum(idx - VOLUME_NORM_WINDOW + 1, 0)
        mean = (cums[idx + 1] - cums[lo]) / (idx - lo + 1)
        out = np.zeros(n)
        np.divide(vol, mean, out=out, where=mean > 0)
        return out

    # -- episode control ----------------------------------------------------

    def reset(self, seed: Optional[int] = None) -> Observation:
        cfg = self.cfg
        rng = np.random.default_rng(cfg.seed if seed is None else seed)
        margin = self.provider.future_margin
        last_valid_start = len(self.data) - 1 - cfg.steps - margin
        if cfg.start == "random":
            if last_valid_start < 0:
                raise DatasetTooShort(
                    f"{len(self.data)} rows < {cfg.steps} steps + {margin} horizon"
                )
            start = int(rng.integers(0, last_valid_start + 1))
        else:
            start = int(cfg.start)
            if start < 0 or start > last_valid_start:
                raise DatasetTooShort(
                    f"start {start}: need {cfg.steps} steps + {margin} horizon "
                    f"in {len(self.data)} rows"
                )
        self.start = start
        self.t = 0
        self.done = False
        self.truncated = False
        self.session = ReplaySession(self.data, start, self.queue_mode)
        self.portfolio = Portfolio()
        self.labels = self.provider.episode_labels(self.data, start, cfg.steps, rng)
        self._labels_list = self.labels.tolist()
        self._init_features()
        self.trace = EpisodeTrace.begin(
            config=cfg, reward=self.reward_params, signals=self.signal_spec,
            seed=cfg.seed if seed is None else seed, start=start,
            instrument=self.data.instrument, tick_size=self.data.tick_size,
        )
        return self.observe()

    def _init_features(self) -> None:
        cfg = self.cfg
        n = cfg.steps + 1
        L = cfg.lookback
        sl = slice(self.start, self.start + n)
        feat = np.zeros((L - 1 + n, self.n_features), dtype=np.float32)
        body = feat[L - 1:]
        K2 = 2 * cfg.depth
        # spread in ticks
        body[:, K2] = (self.data.ap[sl, 0] - self.data.bp[sl, 0]) / 2.0
        # mid log-returns over fixed lags (clamped at the dataset head)
        mid = self.data.mid.astype(np.float64)
        idx = self.start + np.arange(n)
        for j, lag in enumerate(RETURN_LAGS):
            past = np.maximum(idx - lag, 0)
            body[:, K2 + 1 + j] = np.log(mid[idx] / mid[past])
        body[:, K2 + 1 + len(RETURN_LAGS)] = self._vol_norm[sl]
        body[:, K2 + 2 + len(RETURN_LAGS)] = np.arange(n, dtype=np.float32) / cfg.steps
        self._features = feat
        self._features_T = feat.T  # shared view; windows slice its columns
        self._fill_slot_features(0)
        feat[: L - 1] = body[0]  # pre-episode padding repeats the first row

    def _fill_slot_features(self, t: int) -> None:
        """Relative level volumes around p_ref into the feature row for step t."""
        cfg = self.cfg
        book = self.session.book
        p_ref = self.session.p_ref
        K = cfg.depth
        bid_vols = book._vol[BID]
        ask_vols = book._vol[ASK]
        vols = [0.0] * (2 * K)
        for i in range(1, K + 1):
            vols[K - i] = bid_vols.get(p_ref - 2 * i + 1, 0)
            vols[K + i - 1] = ask_vols.get(p_ref + 2 * i - 1, 0)
        total = sum(vols)
        if total > 0:
            vols = [v / total for v in vols]
        self._features[cfg.lookback - 1 + t, : 2 * K] = vols

    def current_mid(self) -> int:
        """Historical midprice at the current step, half-ticks."""
        return int(self.data.mid[self.start + self.t])

    def current_best(self) -> tuple[int, int]:
        g = self.start + self.t
        return int(self.data.bp[g, 0]), int(self.data.ap[g, 0])

    # -- observation ---------------------------------------------------------

    def observe(self) -> Observation:
        cfg = self.cfg
        t = self.t
        K = cfg.depth
        book = self.session.book
        p_ref = self.session.p_ref
        q = np.zeros(2 * K)
        v = np.zeros(2 * K)
        per_level: dict[int, list] = {}
        for order in self.portfolio.resting.values():
            i = level_index(p_ref, order.price)
            if -K <= i <= K:
                per_level.setdefault(i, []).append(order)
        for i, orders in per_level.items():
            idx = i + K if i < 0 else K + i - 1
            side_levels = book.bids if orders[0].side == BID else book.asks
            queue = side_levels.get(orders[0].price, ())
            total = 0
            fronts = {}
            ahead = 0
            for o in queue:
                if o.owner == AGENT and o.id in self.portfolio.resting:
                    fronts[o.id] = ahead
                ahead += o.volume
                total += o.volume
            own = sum(o.volume for o in orders)
            v[idx] = own
            if total > 0 and own > 0:
                q[idx] = sum(
                    (fronts[o.id] / total) * (o.volume / own) for o in orders
                )
        return Observation(
            market=self._features[cfg.lookback - 1 + t],
            market_window=self._features_T[:, t: t + cfg.lookback],
            signals=self.labels[t],
            inventory=self.portfolio.z,
            queue_pos=q,
            resting_volume=v,
        )

    # -- stepping -------------------------------------------------------------

    def step(self, action: Action):
        if self.done:
            raise SteppedAfterDone("episode is finished; call reset()")
        cfg = self.cfg
        session = self.session
        portfolio = self.portfolio
        if len(action.phi_bid) != cfg.n_levels or len(action.phi_ask) != cfg.n_levels:
            raise ValueError(f"phi vectors must have length {cfg.n_levels}")

        p_ref = session.p_ref
        desired_bids, desired_asks = decode_action(action, cfg, p_ref)
        cancels, placements = diff_orders(
            portfolio.resting.values(), desired_bids, desired_asks
        )
        for order, cut in cancels:
            full = cut >= order.volume
            session.cancel_agent(order, cut)
            if full:
                del portfolio.resting[order.id]
        fills: list[Fill] = []
        for side, price, volume in placements:
            got, residual = session.place_agent(side, price, volume)
            fills += got
            if residual is not None:
                portfolio.resting[residual.id] = residual
        fills += session.advance()

        for f in fills:
            if f.side == BID:
                portfolio.z += f.volume
                portfolio.cash_halfticks -= f.price * f.volume
            else:
                portfolio.z -= f.volume
                portfolio.cash_halfticks += f.price * f.volume
        for oid in [oid for oid, o in portfolio.resting.items() if o.volume == 0]:
            del portfolio.resting[oid]

        gidx = self.start + self.t
        mid_t = int(self.data.mid[gidx])
        mid_next = int(self.data.mid[gidx + 1])
        terms = compute_reward(
            fills, portfolio.z, mid_t, mid_next, self.reward_params, self.data.tick_size
        )

        self.t += 1
        self.done = self.t >= cfg.steps or session.exhausted()
        self.truncated = self.done and self.t < cfg.steps
        self._fill_slot_features(self.t)

        self.trace.append(StepRecord(
            step=self.t - 1,
            mid=mid_t,
            mid_next=mid_next,
            p_ref=session.p_ref,
            best_bid=int(self.data.bp[gidx + 1, 0]),
            best_ask=int(self.data.ap[gidx + 1, 0]),
            z=portfolio.z,
            dz=terms.dz,
            fills=[(f.side, f.price, f.volume) for f in fills],
            pnl_halfticks=terms.pnl_halfticks,
            pnl=terms.pnl,
            ip=terms.ip,
            comp=terms.comp,
            reward=terms.total,
            n_cancels=len(cancels),
            n_placements=len(placements),
            quotes_bid=list(desired_bids.items()),
            quotes_ask=list(desired_asks.items()),
            signals=self._labels_list[self.t - 1],
        ))
        if self.done:
            self.trace.finish(
                cash_halfticks=portfolio.cash_halfticks,
                z=portfolio.z,
                mid_first=int(self.data.mid[self.start]),
                mid_last=int(self.data.mid[self.start + self.t]),
                truncated=self.truncated,
            )
        info = {
            "fills": fills,
            "n_cancels": len(cancels),
            "n_placements": len(placements),
            "pnl": terms.pnl,
            "ip": terms.ip,
            "comp": terms.comp,
            "p_ref": session.p_ref,
            "mid": mid_next,
            "truncated": self.truncated,
            "step": self.t - 1,
        }
        return self.observe(), terms.total, self.done, info
