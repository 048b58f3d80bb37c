"""Shared test fixtures: a brute-force matcher and random book/event generators.

The naive matcher consumes one unit at a time, always from the lowest-seq
order at the best eligible price.  It shares no code with the engine and is
the reference for every matching comparison.
"""
from __future__ import annotations

import numpy as np

from mmsim.book import (
    AGENT,
    ASK,
    BID,
    HIST,
    INSERT,
    TRADE,
    Book,
    BookEvent,
    RefTracker,
    apply_event,
)


class NaiveBook:
    """Flat-list order store with unit-at-a-time price-time matching."""

    def __init__(self):
        self.orders = []  # dicts: id, side, price, volume, owner, seq
        self._seq = 1

    def add(self, oid, side, price, volume, owner=HIST):
        self.orders.append(
            {"id": oid, "side": side, "price": price, "volume": volume,
             "owner": owner, "seq": self._seq}
        )
        self._seq += 1

    def _eligible(self, taker_side, limit):
        maker_side = ASK if taker_side == BID else BID
        out = []
        for o in self.orders:
            if o["side"] != maker_side:
                continue
            if limit is not None:
                if taker_side == BID and o["price"] > limit:
                    continue
                if taker_side == ASK and o["price"] < limit:
                    continue
            out.append(o)
        return out

    def market(self, taker_side, volume, limit=None):
        """Consume unit by unit; returns chunks [(id, price, volume)] in fill order."""
        chunks = []
        for _ in range(volume):
            cands = self._eligible(taker_side, limit)
            if not cands:
                break
            if taker_side == BID:
                best = min(o["price"] for o in cands)
            else:
                best = max(o["price"] for o in cands)
            front = min((o for o in cands if o["price"] == best), key=lambda o: o["seq"])
            front["volume"] -= 1
            if chunks and chunks[-1][0] == front["id"]:
                chunks[-1][2] += 1
            else:
                chunks.append([front["id"], best, 1])
            if front["volume"] == 0:
                self.orders.remove(front)
        return [tuple(c) for c in chunks]

    def marketable(self, oid, side, price, volume):
        """Agent limit order: match while crossing, then rest the residual."""
        chunks = []
        for _ in range(volume):
            cands = self._eligible(side, price)
            if not cands:
                break
            if side == BID:
                best = min(o["price"] for o in cands)
            else:
                best = max(o["price"] for o in cands)
            front = min((o for o in cands if o["price"] == best), key=lambda o: o["seq"])
            front["volume"] -= 1
            if chunks and chunks[-1][0] == front["id"]:
                chunks[-1][2] += 1
            else:
                chunks.append([front["id"], best, 1])
            if front["volume"] == 0:
                self.orders.remove(front)
        filled = sum(c[2] for c in chunks)
        if filled < volume:
            self.add(oid, side, price, volume - filled, AGENT)
        return [tuple(c) for c in chunks]

    def state(self):
        """Multiset view of resting orders in queue order."""
        return sorted(
            (o["side"], o["price"], o["seq"], o["id"], o["volume"]) for o in self.orders
        )


def book_state(book: Book) -> list:
    out = []
    for side, levels in ((BID, book.bids), (ASK, book.asks)):
        for price, queue in levels.items():
            for o in queue:
                out.append((side, price, o.seq, o.id, o.volume))
    return sorted(out)


def maker_chunks(fills, taker_id=None):
    """Engine fills reduced to maker chunks [(id, price, volume)]."""
    return [
        (f.order_id, f.price, f.volume)
        for f in fills
        if taker_id is None or f.order_id != taker_id
    ]


def random_two_sided_book(rng: np.random.Generator, tick_base: int = 200,
                          max_levels: int = 4, max_orders: int = 5):
    """Random book (and naive twin) with up to ``max_levels`` per side."""
    book = Book()
    naive = NaiveBook()
    spread_ticks = int(rng.integers(1, 4))
    best_bid = tick_base + 2 * int(rng.integers(-5, 6))
    best_ask = best_bid + 2 * spread_ticks
    n_bid = int(rng.integers(1, max_levels + 1))
    n_ask = int(rng.integers(1, max_levels + 1))
    for i in range(n_bid):
        price = best_bid - 2 * i
        for _ in range(int(rng.integers(1, max_orders + 1))):
            vol = int(rng.integers(1, 6))
            order = book.new_order(BID, price, vol)
            book.insert(order)
            naive.add(order.id, BID, price, vol)
    for i in range(n_ask):
        price = best_ask + 2 * i
        for _ in range(int(rng.integers(1, max_orders + 1))):
            vol = int(rng.integers(1, 6))
            order = book.new_order(ASK, price, vol)
            book.insert(order)
            naive.add(order.id, ASK, price, vol)
    return book, naive


class EventStream:
    """Random insert/cancel/trade driver that keeps the book two-sided.

    Each step classifies the event it is about to apply against the three
    reference-price-moving event kinds, so callers can assert that p_ref
    never changes outside them.
    """

    def __init__(self, rng: np.random.Generator, tick_base: int = 400):
        self.rng = rng
        self.book = Book()
        for i in range(3):
            self.book.insert(self.book.new_order(BID, tick_base - 2 * i, 5))
            self.book.insert(self.book.new_order(ASK, tick_base + 2 + 2 * i, 5))
        self.tracker = RefTracker.from_book(self.book)

    def _random_event(self):
        rng = self.rng
        book = self.book
        bb, ba = book.hist_best_bid(), book.hist_best_ask()
        kinds = ["insert", "insert", "trade", "trade"]
        if len(book._orders) > 4:
            kinds += ["cancel", "cancel"]
        if len(book._orders) > 40:
            kinds = ["cancel"]
        kind = kinds[int(rng.integers(0, len(kinds)))]
        if kind == "insert":
            side = BID if rng.integers(0, 2) == 0 else ASK
            if side == BID:
                lo, hi = bb - 6, ba - 2  # anything below the ask, depth or inside
                price = int(rng.integers(lo // 2, hi // 2 + 1)) * 2
            else:
                lo, hi = bb + 2, ba + 6
                price = int(rng.integers(lo // 2, hi // 2 + 1)) * 2
            return BookEvent(INSERT, side=side, price=price, volume=int(rng.integers(1, 6)))
        if kind == "cancel":
            ids = list(book._orders)
            oid = ids[int(rng.integers(0, len(ids)))]
            order = book._orders[oid]
            # keep at least one order per side
            same_side = book.bids if order.side == BID else book.asks
            if sum(len(q) for q in same_side.values()) <= 1:
                return BookEvent(INSERT, side=order.side, price=order.price,
                                 volume=int(rng.integers(1, 6)))
            return BookEvent("cancel", order_id=oid)
        side = BID if rng.integers(0, 2) == 0 else ASK
        opposing = book.asks if side == BID else book.bids
        total = sum(o.volume for q in opposing.values() for o in q)
        if total <= 1 or sum(len(q) for q in opposing.values()) <= 1:
            price = ba + 4 if side == BID else bb - 4
            return BookEvent(INSERT, side=(ASK if side == BID else BID),
                             price=price, volume=int(rng.integers(1, 6)))
        volume = int(rng.integers(1, total))  # never consumes the whole side
        return BookEvent(TRADE, side=side, volume=volume)

    def classify(self, ev: BookEvent) -> dict:
        """Which of the three p_ref-moving event kinds does ``ev`` realize?"""
        book = self.book
        bb, ba = book.hist_best_bid(), book.hist_best_ask()
        flags = {"insert_inside": False, "cancel_emptied_best": False,
                 "trade_emptied_best": False}
        if ev.kind == INSERT:
            flags["insert_inside"] = bb < ev.price < ba
        elif ev.kind == "cancel":
            order = book._orders[ev.order_id]
            best = bb if order.side == BID else ba
            level = book.orders_at(order.side, order.price)
            flags["cancel_emptied_best"] = order.price == best and len(level) == 1
        else:
            # will the walk empty a best queue?
            if ev.side == BID:
                flags["trade_emptied_best"] = ev.volume >= book.level_volume(ASK, ba)
            else:
                flags["trade_emptied_best"] = ev.volume >= book.level_volume(BID, bb)
        return flags

    def step(self):
        """Apply one random event; returns (event, flags, p_ref_changed)."""
        ev = self._random_event()
        flags = self.classify(ev)
        before = self.tracker.p_ref
        apply_event(self.book, self.tracker, ev)
        return ev, flags, self.tracker.p_ref != before
