"""Market replay: event inference from consecutive snapshots and the
agent-overlay replay session.

Replay is non-impact: the historical book always reconverges to the recorded
snapshots at interval boundaries, whatever the agent did in between.  Agent
orders live inside the same FIFO queues as historical liquidity, so recorded
trade flow fills them exactly when it has eaten through the volume ahead.

Trade attribution per interval: aggregated trades carry no side, so volume
is split between buy flow (consuming asks) and sell flow (consuming bids) by
walking each side's per-level volume decreases best-first and choosing the
split whose implied turnover is nearest the recorded turnover.  Volume in
excess of all visible decreases is placed at the touch (flow-through churn:
it re-appears behind the queue when the level reconciles).
"""
from __future__ import annotations

from typing import Optional

from .book import (
    AGENT,
    ASK,
    BID,
    CANCEL,
    HIST,
    INSERT,
    PESSIMISTIC,
    TRADE,
    Book,
    BookEvent,
    Fill,
    Order,
    RefTracker,
    apply_event,
    match_marketable,
)
from .data import Dataset, SnapshotRecord


def _levels(prices, vols) -> list:
    return [(int(p), int(v)) for p, v in zip(prices, vols) if v > 0]


def _ladder(prev_levels, next_map) -> list:
    """Per-level volume decreases, best price first."""
    return [(p, min(v, max(0, v - next_map.get(p, 0)))) for p, v in prev_levels]


def _split_trades(prev_bid, prev_ask, next_bid_map, next_ask_map, vol, turnover):
    """Choose the buy/sell split minimizing turnover mismatch.

    Returns (buy_takes, sell_takes) as [(price, volume)] best-first, with any
    flow-through excess merged into the touch level.
    """
    if vol <= 0:
        return [], []
    ask_ladder = _ladder(prev_ask, next_ask_map)
    bid_ladder = _ladder(prev_bid, next_bid_map)
    best_ask = prev_ask[0][0]
    best_bid = prev_bid[0][0]

    def cost_curve(ladder, touch):
        """cum[v] = turnover of the first v units consumed best-first."""
        cum = [0]
        for price, dec in ladder:
            for _ in range(dec):
                cum.append(cum[-1] + price)
        return cum, touch

    buy_cum, buy_touch = cost_curve(ask_ladder, best_ask)
    sell_cum, sell_touch = cost_curve(bid_ladder, best_bid)

    def side_to(cum, touch, v):
        if v < len(cum):
            return cum[v]
        return cum[-1] + (v - len(cum) + 1) * touch

    best_v, best_err = 0, None
    for v_buy in range(vol + 1):
        est = side_to(buy_cum, buy_touch, v_buy) + side_to(sell_cum, sell_touch, vol - v_buy)
        err = abs(turnover - est)
        if best_err is None or err < best_err:
            best_v, best_err = v_buy, err

    def takes(ladder, touch, v):
        out = []
        for price, dec in ladder:
            if v <= 0:
                break
            take = min(dec, v)
            if take:
                out.append((price, take))
                v -= take
        if v > 0:  # flow-through at the touch
            if out and out[0][0] == touch:
                out[0] = (touch, out[0][1] + v)
            else:
                out.insert(0, (touch, v))
        return out

    return takes(ask_ladder, buy_touch, best_v), takes(bid_ladder, sell_touch, vol - best_v)


def infer_events(prev: SnapshotRecord, nxt: SnapshotRecord) -> list[BookEvent]:
    """Event list whose replay transforms ``prev`` into ``nxt``.

    Order: trades (buys best-first, then sells), cancels, inserts.  Trade
    volume beyond what the historical book can absorb is clipped by the
    engine at application time.
    """
    prev_bid = _levels(prev.bid_prices, prev.bid_vols)
    prev_ask = _levels(prev.ask_prices, prev.ask_vols)
    next_bid = dict(_levels(nxt.bid_prices, nxt.bid_vols))
    next_ask = dict(_levels(nxt.ask_prices, nxt.ask_vols))

    buy_takes, sell_takes = _split_trades(
        prev_bid, prev_ask, next_bid, next_ask,
        nxt.interval_trade_volume, nxt.interval_turnover,
    )
    events = [BookEvent(TRADE, side=BID, price=p, volume=v) for p, v in buy_takes]
    events += [BookEvent(TRADE, side=ASK, price=p, volume=v) for p, v in sell_takes]

    def reconcile(side, prev_levels, takes, target):
        after = dict(prev_levels)
        for price, take in takes:
            if price in after:
                after[price] = max(0, after[price] - take)
        cancels, inserts = [], []
        reverse = side == BID
        for price in sorted(set(after) | set(target), reverse=reverse):
            delta = target.get(price, 0) - after.get(price, 0)
            if delta < 0:
                cancels.append(BookEvent(CANCEL, side=side, price=price, volume=-delta))
            elif delta > 0:
                inserts.append(BookEvent(INSERT, side=side, price=price, volume=delta))
        return cancels, inserts

    bid_cancels, bid_inserts = reconcile(BID, prev_bid, sell_takes, next_bid)
    ask_cancels, ask_inserts = reconcile(ASK, prev_ask, buy_takes, next_ask)
    return events + bid_cancels + ask_cancels + bid_inserts + ask_inserts


def _pure_after(levels, takes, ascending: bool) -> dict:
    """Level volumes after consuming ``takes`` best-first on pure history."""
    book = dict(levels)
    for limit, vol in takes:
        for price in (sorted(book) if ascending else sorted(book, reverse=True)):
            if (price > limit) if ascending else (price < limit):
                break
            take = min(book[price], vol)
            if take:
                book[price] -= take
                vol -= take
                if not book[price]:
                    del book[price]
            if vol == 0:
                break
    return book


def _interval_plan(ds: Dataset, i: int, j: int):
    """Cached per-interval plan: trade takes plus pure-history level deltas.

    The deltas are valid whenever the agent absorbed none of the interval's
    flow; they are listed in the exact order the live reconciliation would
    apply them (retreating side first, touch-out within a side).
    """
    cached = ds._trade_cache.get(j)
    if cached is not None:
        return cached
    prev_bid, prev_ask = ds.levels_at(i)
    next_bid_levels, next_ask_levels = ds.levels_at(j)
    next_bid, next_ask = dict(next_bid_levels), dict(next_ask_levels)
    buy_takes, sell_takes = _split_trades(
        prev_bid, prev_ask, next_bid, next_ask, int(ds.vol[j]), int(ds.turnover[j])
    )
    asks_after = _pure_after(prev_ask, buy_takes, ascending=True)
    bids_after = _pure_after(prev_bid, sell_takes, ascending=False)

    def deltas(side, after, target):
        out = []
        for price in sorted(set(after) | set(target), reverse=side == BID):
            d = target.get(price, 0) - after.get(price, 0)
            if d:
                out.append((side, price, d))
        return out

    plan = (buy_takes, sell_takes,
            deltas(BID, bids_after, next_bid), deltas(ASK, asks_after, next_ask))
    ds._trade_cache[j] = plan
    return plan


def book_from_snapshot(snap: SnapshotRecord, tick_size: float = 1.0) -> Book:
    book = Book(tick_size)
    for price, vol in _levels(snap.bid_prices, snap.bid_vols):
        book.insert(book.new_order(BID, price, vol))
    for price, vol in _levels(snap.ask_prices, snap.ask_vols):
        book.insert(book.new_order(ASK, price, vol))
    return book


class ReplaySession:
    """Book + reference tracker rolled through a dataset with agent overlay.

    One session per thread; the dataset is shared read-only.  ``queue_mode``
    picks the victim of historical volume cancels at levels holding agent
    orders: pessimistic takes from the rear (queue position never improves
    through cancels), proportional spreads the cut over historical records.
    """

    def __init__(self, ds: Dataset, start: int = 0, queue_mode: str = PESSIMISTIC):
        if not 0 <= start < len(ds):
            raise ValueError(f"start index {start} outside dataset")
        self.ds = ds
        self.i = start
        self.queue_mode = queue_mode
        self.book = book_from_snapshot(ds.snapshot(start), ds.tick_size)
        self.tracker = RefTracker.from_book(self.book)
        self.inconsistent_intervals = 0
        self._hist_perturbed = False  # agent consumed historical liquidity

    # -- views ---------------------------------------------------------

    @property
    def p_ref(self) -> int:
        return self.tracker.p_ref

    def hist_mid(self) -> int:
        bb, ba = self.book.hist_best_bid(), self.book.hist_best_ask()
        if bb is None or ba is None:
            return self.tracker.mid_prev  # side transiently empty under heavy flow
        return (bb + ba) // 2

    def exhausted(self) -> bool:
        return self.i + 1 >= len(self.ds)

    # -- agent order management -----------------------------------------

    def place_agent(self, side: str, price: int, volume: int):
        """Submit an agent limit order; marketable volume executes now.

        Returns (agent fills, resting order or None).
        """
        order = self.book.new_order(side, price, volume, owner=AGENT)
        fills, residual = match_marketable(self.book, order)
        if fills:
            self._hist_perturbed = True
        return [f for f in fills if f.owner == AGENT], residual

    def cancel_agent(self, order: Order, volume: Optional[int] = None) -> None:
        if volume is None or volume >= order.volume:
            self.book.cancel(order.id)
        else:
            order.volume -= volume

    # -- replay -----------------------------------------------------------

    def advance(self) -> list[Fill]:
        """Roll one interval; returns fills touching agent orders."""
        ds = self.ds
        i, j = self.i, self.i + 1
        if j >= len(ds):
            raise IndexError("dataset exhausted")
        buy_takes, sell_takes, bid_deltas, ask_deltas = _interval_plan(ds, i, j)
        agent_fills: list[Fill] = []
        clipped_before = self.book.clipped_volume
        for price, volume in buy_takes:
            ev = BookEvent(TRADE, side=BID, price=price, volume=volume)
            fills = apply_event(self.book, self.tracker, ev, clip=True)
            agent_fills += [f for f in fills if f.owner == AGENT]
        for price, volume in sell_takes:
            ev = BookEvent(TRADE, side=ASK, price=price, volume=volume)
            fills = apply_event(self.book, self.tracker, ev, clip=True)
            agent_fills += [f for f in fills if f.owner == AGENT]
        if self.book.clipped_volume > clipped_before:
            self.inconsistent_intervals += 1

        # reconcile toward the new snapshot, retreating side first so the
        # book never crosses transiently
        ask_first = int(ds.mid[j]) >= self.hist_mid()
        if self._hist_perturbed or agent_fills:
            # agent absorbed some flow: historical consumption diverged from
            # the pure-history plan, so diff the book level by level
            next_bid_levels, next_ask_levels = ds.levels_at(j)
            sides = [(ASK, dict(next_ask_levels)), (BID, dict(next_bid_levels))]
            for side, target in (sides if ask_first else reversed(sides)):
                self._reconcile(side, target)
        else:
            parts = [ask_deltas, bid_deltas] if ask_first else [bid_deltas, ask_deltas]
            for part in parts:
                for side, price, delta in part:
                    self._apply_level_delta(side, price, delta)
        self._hist_perturbed = False
        self.i = j
        return agent_fills

    def _apply_level_delta(self, side: str, price: int, delta: int) -> None:
        book = self.book
        # depth mutations strictly behind the touch cannot move the bests
        best = book._hist_best[side]
        affects = best is None or (price >= best if side == BID else price <= best)
        if not affects:
            if delta < 0:
                book.reduce_hist(side, price, -delta, self.queue_mode)
            else:
                book.add_hist(side, price, delta)
            return
        before = book.hist_bests()
        if delta < 0:
            book.reduce_hist(side, price, -delta, self.queue_mode)
        else:
            book.add_hist(side, price, delta)
        after = book.hist_bests()
        if after != before and after[0] is not None and after[1] is not None:
            self.tracker.update(book)

    def _reconcile(self, side: str, target: dict) -> None:
        book = self.book
        prices = set(book.hist_prices(side)) | set(target)
        for price in sorted(prices, reverse=side == BID):
            delta = target.get(price, 0) - book.hist_level_volume(side, price)
            if delta:
                self._apply_level_delta(side, price, delta)


def step_replay(session: ReplaySession, agent_cancels, agent_placements) -> list[Fill]:
    """One decision interval: agent cancels, then placements, then history.

    ``agent_cancels``: iterable of (order, volume or None); ``agent_placements``:
    iterable of (side, price, volume).  Returns all fills touching agent
    orders; resting placements can be recovered from the returned orders via
    the session book.
    """
    for order, volume in agent_cancels:
        session.cancel_agent(order, volume)
    fills: list[Fill] = []
    for side, price, volume in agent_placements:
        got, _ = session.place_agent(side, price, volume)
        fills += got
    fills += session.advance()
    return fills
