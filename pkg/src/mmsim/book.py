"""Limit order book anchored at a stable reference price.

Price convention: every price in this package is an integer count of
*half-ticks* (``price = value * tick_size / 2``).  Tradable order prices sit
on the tick grid and therefore have even values; the reference price sits
mid-between two ticks and always has an odd value.  Integer half-ticks keep
all book arithmetic exact.

The reference price is deliberately stickier than the midprice: it moves to
the mid-following anchor only when the midprice moves *and* the adjacent
book slot it moved toward holds no opposing liquidity, or when it would
otherwise fall outside the bid-ask interval.  As a consequence it can only
change on three kinds of events: an insert inside the spread, a cancel that
empties a best queue, or a trade that empties a best queue.

Under replay the book may contain both historical liquidity and overlay
orders owned by the trading agent.  Matching treats them identically
(price-time priority); the reference-price logic and best-price views used
for it look at historical liquidity only, so the agent's own quotes never
move the reference frame (pure market replay).  Per-level volume tallies
and the historical best prices are maintained incrementally, so the views
driving the reference tracker are O(1).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

from .errors import EmptySide, Overconsume, UnknownOrder

BID = "bid"
ASK = "ask"

HIST = "hist"
AGENT = "agent"

INSERT = "insert"
CANCEL = "cancel"
TRADE = "trade"

# queue models for volume-cancels during replay
PESSIMISTIC = "pessimistic"
PROPORTIONAL = "proportional"


def is_order_price(value: int) -> bool:
    """Tradable prices are even in half-ticks."""
    return value % 2 == 0


def is_ref_price(value: int) -> bool:
    """Reference prices are odd in half-ticks."""
    return value % 2 == 1


def level_index(p_ref: int, price: int) -> int:
    """Signed slot index of ``price`` relative to ``p_ref``.

    Slot ``+i`` (``-i``) sits ``i - 0.5`` ticks above (below) the reference
    price, so in half-ticks ``price = p_ref + sign(i) * (2|i| - 1)``.
    Never returns 0.
    """
    if not is_order_price(price):
        raise ValueError(f"price {price} is not on the tick grid")
    if not is_ref_price(p_ref):
        raise ValueError(f"reference price {p_ref} must be odd in half-ticks")
    d = price - p_ref
    if d > 0:
        return (d + 1) // 2
    return -((-d + 1) // 2)


def slot_price(p_ref: int, index: int) -> int:
    """Inverse of :func:`level_index`."""
    if index == 0:
        raise ValueError("slot index 0 does not exist")
    if index > 0:
        return p_ref + 2 * index - 1
    return p_ref + 2 * index + 1


@dataclass(slots=True)
class Order:
    id: int
    side: str
    price: int  # even half-ticks
    volume: int
    owner: str
    seq: int = -1  # assigned when the order joins a queue


@dataclass(slots=True)
class Fill:
    order_id: int
    price: int  # half-ticks
    volume: int
    owner: str
    side: str  # side of the filled order


@dataclass(slots=True)
class BookEvent:
    """Insert / cancel / trade, as reconstructed from data or synthesized.

    ``trade`` events are aggressor-side market orders: ``side`` is the taker
    side and the walk consumes the opposing book in price-time order, no
    further than ``price`` when it is given.  ``cancel`` removes by order id
    when one is given, otherwise it removes ``volume`` units of historical
    liquidity at ``price`` (victim selection per the replay queue model).
    """

    kind: str
    side: Optional[str] = None
    price: Optional[int] = None
    volume: int = 0
    order_id: Optional[int] = None
    owner: str = HIST


class Book:
    """Price-keyed FIFO queues with price-time priority matching."""

    def __init__(self, tick_size: float = 1.0):
        self.tick_size = tick_size
        self.bids: dict[int, list[Order]] = {}
        self.asks: dict[int, list[Order]] = {}
        self._orders: dict[int, Order] = {}
        self._vol = {BID: {}, ASK: {}}  # price -> total resting volume
        self._hvol = {BID: {}, ASK: {}}  # price -> historical volume only
        self._hist_best = {BID: None, ASK: None}
        self._next_id = 1
        self._next_seq = 1
        self.clipped_volume = 0  # trade volume dropped in clip mode

    # -- volume accounting -------------------------------------------------

    def _vol_add(self, side: str, price: int, volume: int, owner: str) -> None:
        vols = self._vol[side]
        vols[price] = vols.get(price, 0) + volume
        if owner == HIST:
            hvols = self._hvol[side]
            hvols[price] = hvols.get(price, 0) + volume
            best = self._hist_best[side]
            if best is None or (price > best if side == BID else price < best):
                self._hist_best[side] = price

    def _vol_sub(self, side: str, price: int, volume: int, owner: str) -> None:
        vols = self._vol[side]
        left = vols[price] - volume
        if left:
            vols[price] = left
        else:
            del vols[price]
        if owner == HIST:
            hvols = self._hvol[side]
            hleft = hvols[price] - volume
            if hleft:
                hvols[price] = hleft
            else:
                del hvols[price]
                if self._hist_best[side] == price:
                    self._rescan_hist_best(side)

    def _rescan_hist_best(self, side: str) -> None:
        hvols = self._hvol[side]
        if not hvols:
            self._hist_best[side] = None
        else:
            self._hist_best[side] = max(hvols) if side == BID else min(hvols)

    # -- construction ------------------------------------------------------

    def new_order(self, side: str, price: int, volume: int, owner: str = HIST) -> Order:
        if not is_order_price(price):
            raise ValueError(f"order price {price} not on the tick grid")
        if volume <= 0:
            raise ValueError("order volume must be positive")
        order = Order(self._next_id, side, price, volume, owner)
        self._next_id += 1
        return order

    def insert(self, order: Order) -> None:
        """Rest ``order`` at the back of its price queue."""
        order.seq = self._next_seq
        self._next_seq += 1
        levels = self.bids if order.side == BID else self.asks
        levels.setdefault(order.price, []).append(order)
        self._orders[order.id] = order
        self._vol_add(order.side, order.price, order.volume, order.owner)

    def add_hist(self, side: str, price: int, volume: int) -> None:
        """Add historical liquidity, merging into a trailing hist record.

        Replay reconciliation calls this every interval; merging keeps queue
        length bounded (two adjacent hist records behave identically under
        FIFO and rear-first depletion).
        """
        levels = self.bids if side == BID else self.asks
        queue = levels.get(price)
        if queue and queue[-1].owner == HIST:
            queue[-1].volume += volume
            self._vol_add(side, price, volume, HIST)
            return
        self.insert(self.new_order(side, price, volume, HIST))

    # -- views -------------------------------------------------------------

    def best_bid(self) -> Optional[int]:
        return max(self.bids) if self.bids else None

    def best_ask(self) -> Optional[int]:
        return min(self.asks) if self.asks else None

    def hist_best_bid(self) -> Optional[int]:
        return self._hist_best[BID]

    def hist_best_ask(self) -> Optional[int]:
        return self._hist_best[ASK]

    def hist_bests(self) -> tuple:
        return self._hist_best[BID], self._hist_best[ASK]

    def hist_has(self, side: str, price: int) -> bool:
        return price in self._hvol[side]

    def level_volume(self, side: str, price: int) -> int:
        return self._vol[side].get(price, 0)

    def hist_level_volume(self, side: str, price: int) -> int:
        return self._hvol[side].get(price, 0)

    def hist_prices(self, side: str) -> list:
        return list(self._hvol[side])

    def volume_ahead(self, order: Order) -> int:
        """Total resting volume with time priority over ``order`` at its price."""
        levels = self.bids if order.side == BID else self.asks
        ahead = 0
        for o in levels.get(order.price, ()):
            if o is order:
                return ahead
            ahead += o.volume
        raise UnknownOrder(f"order {order.id} not resting")

    def orders_at(self, side: str, price: int) -> list[Order]:
        levels = self.bids if side == BID else self.asks
        return list(levels.get(price, ()))

    def iter_orders(self) -> Iterable[Order]:
        return self._orders.values()

    # -- mutation ----------------------------------------------------------

    def cancel(self, order_id: int) -> Order:
        order = self._orders.pop(order_id, None)
        if order is None:
            raise UnknownOrder(f"unknown order id {order_id}")
        levels = self.bids if order.side == BID else self.asks
        queue = levels[order.price]
        queue.remove(order)
        if not queue:
            del levels[order.price]
        self._vol_sub(order.side, order.price, order.volume, order.owner)
        return order

    def reduce_order(self, order: Order, volume: int) -> None:
        """Shrink a resting order in place, removing it when empty."""
        if volume >= order.volume:
            self.cancel(order.id)
        else:
            order.volume -= volume
            self._vol_sub(order.side, order.price, volume, order.owner)

    def reduce_hist(self, side: str, price: int, volume: int, mode: str = PESSIMISTIC) -> int:
        """Remove ``volume`` units of historical liquidity at a price level.

        Pessimistic mode depletes from the rear of the queue, so volume ahead
        of any agent order only shrinks once the volume behind it is gone.
        Proportional mode spreads the reduction over the historical records
        by largest-remainder apportionment.  Returns the volume removed.
        """
        levels = self.bids if side == BID else self.asks
        queue = levels.get(price)
        if not queue:
            return 0
        hist = [o for o in queue if o.owner == HIST]
        total = sum(o.volume for o in hist)
        take = min(volume, total)
        if take <= 0:
            return 0
        if mode == PESSIMISTIC:
            remaining = take
            for o in reversed(hist):
                cut = min(o.volume, remaining)
                self.reduce_order(o, cut)
                remaining -= cut
                if remaining == 0:
                    break
        else:
            cuts = _apportion(take, [o.volume for o in hist])
            for o, cut in zip(hist, cuts):
                if cut:
                    self.reduce_order(o, cut)
        return take

    def trade(self, side: str, volume: int, limit: Optional[int] = None,
              clip: bool = False) -> list[Fill]:
        """Consume the book opposite ``side`` in price-time order.

        Emits one fill per consumed chunk of a resting order, agent orders
        included.  Raises :class:`Overconsume` if liquidity runs out before
        ``volume`` is exhausted unless ``clip`` is set, in which case the
        shortfall is added to :attr:`clipped_volume`.
        """
        maker_side = ASK if side == BID else BID
        levels = self.asks if side == BID else self.bids
        fills: list[Fill] = []
        remaining = volume
        while remaining > 0:
            if side == BID:
                eligible = [p for p in levels if limit is None or p <= limit]
                if not eligible:
                    break
                price = min(eligible)
            else:
                eligible = [p for p in levels if limit is None or p >= limit]
                if not eligible:
                    break
                price = max(eligible)
            queue = levels[price]
            while queue and remaining > 0:
                order = queue[0]
                take = min(order.volume, remaining)
                order.volume -= take
                remaining -= take
                fills.append(Fill(order.id, price, take, order.owner, order.side))
                self._vol_sub(maker_side, price, take, order.owner)
                if order.volume == 0:
                    queue.pop(0)
                    del self._orders[order.id]
            if not queue:
                del levels[price]
        if remaining > 0:
            if not clip:
                raise Overconsume(f"trade volume {volume} exceeds liquidity by {remaining}")
            self.clipped_volume += remaining
        return fills


def _apportion(total: int, weights: list) -> list[int]:
    """Integer split of ``total`` proportional to ``weights`` (largest remainder)."""
    wsum = float(sum(weights))
    if wsum <= 0:
        weights = [1.0] * len(weights)
        wsum = float(len(weights))
    exact = [total * w / wsum for w in weights]
    floors = [int(x) for x in exact]
    shortfall = total - sum(floors)
    # ties broken toward lower index
    order = sorted(range(len(exact)), key=lambda i: (floors[i] - exact[i], i))
    for i in order[:shortfall]:
        floors[i] += 1
    return floors


def compute_tilde_ref(book: Book, tilde_prev: Optional[int]) -> int:
    """Mid-following anchor on the odd half-tick grid.

    Odd spread (in ticks): the midprice itself, which is already odd in
    half-ticks.  Even spread: midprice plus or minus half a tick, whichever
    is nearer ``tilde_prev``; with no prior value the lower candidate is
    used.
    """
    bb = book.hist_best_bid()
    ba = book.hist_best_ask()
    if bb is None or ba is None:
        raise EmptySide("both sides required to compute the reference anchor")
    mid2 = (bb + ba) // 2  # exact: even + even
    if ((ba - bb) // 2) % 2 == 1:
        return mid2
    lo, hi = mid2 - 1, mid2 + 1
    if tilde_prev is None:
        return lo
    return lo if abs(tilde_prev - lo) <= abs(tilde_prev - hi) else hi


class RefTracker:
    """Reference-price state machine.

    ``p_ref`` re-anchors to the mid-following value only when the mid moved
    and the first slot in that direction holds no opposing historical
    liquidity, or when ``best_bid < p_ref < best_ask`` no longer holds.
    """

    __slots__ = ("p_ref", "tilde_prev", "mid_prev")

    def __init__(self, p_ref: int, tilde_prev: int, mid_prev: int):
        self.p_ref = p_ref
        self.tilde_prev = tilde_prev
        self.mid_prev = mid_prev

    @classmethod
    def from_book(cls, book: Book) -> "RefTracker":
        tilde = compute_tilde_ref(book, None)
        bb, ba = book.hist_bests()
        return cls(tilde, tilde, (bb + ba) // 2)

    def update(self, book: Book) -> int:
        bb, ba = book.hist_bests()
        if bb is None or ba is None:
            raise EmptySide("reference price update needs both sides")
        mid2 = (bb + ba) // 2
        tilde = compute_tilde_ref(book, self.tilde_prev)
        trigger = not (bb < self.p_ref < ba)
        if not trigger and mid2 > self.mid_prev:
            trigger = not book.hist_has(ASK, self.p_ref + 1)
        elif not trigger and mid2 < self.mid_prev:
            trigger = not book.hist_has(BID, self.p_ref - 1)
        if trigger:
            self.p_ref = tilde
        self.tilde_prev = tilde
        self.mid_prev = mid2
        return self.p_ref


def apply_event(book: Book, tracker: Optional[RefTracker], ev: BookEvent,
                clip: bool = False, queue_mode: str = PESSIMISTIC) -> list[Fill]:
    """Mutate the book per ``ev`` and re-evaluate the reference price.

    The tracker only needs a look when the historical best prices changed:
    the mid, the anchor and the bid/ask bracketing of ``p_ref`` are all
    functions of the bests, so any event leaving them untouched cannot move
    ``p_ref``.  Updates are skipped while either side is empty.
    """
    before = book.hist_bests() if tracker is not None else None
    fills: list[Fill] = []
    if ev.kind == INSERT:
        order = book.new_order(ev.side, ev.price, ev.volume, ev.owner)
        book.insert(order)
    elif ev.kind == CANCEL:
        if ev.order_id is not None:
            book.cancel(ev.order_id)
        else:
            book.reduce_hist(ev.side, ev.price, ev.volume, queue_mode)
    elif ev.kind == TRADE:
        fills = book.trade(ev.side, ev.volume, limit=ev.price, clip=clip)
    else:
        raise ValueError(f"unknown event kind {ev.kind!r}")
    if tracker is not None:
        after = book.hist_bests()
        if after != before and after[0] is not None and after[1] is not None:
            tracker.update(book)
    return fills


def match_marketable(book: Book, order: Order) -> tuple[list[Fill], Optional[Order]]:
    """Match an incoming agent order; rest any residual at its limit.

    Returns fills for both the taker chunks (carrying the incoming order's
    id and side) and every consumed resting order.  A zero-volume order is a
    no-op.
    """
    if order.volume <= 0:
        return [], None
    fills: list[Fill] = []
    maker_side = ASK if order.side == BID else BID
    opposing = book.asks if order.side == BID else book.bids
    remaining = order.volume
    while remaining > 0 and opposing:
        best = min(opposing) if order.side == BID else max(opposing)
        if order.side == BID and best > order.price:
            break
        if order.side == ASK and best < order.price:
            break
        queue = opposing[best]
        while queue and remaining > 0:
            resting = queue[0]
            take = min(resting.volume, remaining)
            resting.volume -= take
            remaining -= take
            fills.append(Fill(resting.id, best, take, resting.owner, resting.side))
            fills.append(Fill(order.id, best, take, order.owner, order.side))
            book._vol_sub(maker_side, best, take, resting.owner)
            if resting.volume == 0:
                queue.pop(0)
                del book._orders[resting.id]
        if not queue:
            del opposing[best]
    if remaining > 0:
        order.volume = remaining
        book.insert(order)
        return fills, order
    return fills, None
