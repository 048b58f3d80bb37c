"""Snapshot datasets: CSV loading, validation, and synthetic generation.

A dataset is a fixed-cadence sequence of 5-depth book snapshots with the
aggregated trade volume and turnover of each interval.  Prices are stored
internally as integer half-ticks (see :mod:`mmsim.book`); files may carry
either half-tick integers or decimal prices with the tick size declared in
a sidecar ``.meta`` file.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .errors import NonMonotoneTimestamps, ParseError, SchemaError

DEPTH = 5

CSV_HEADER = (
    ["ts_ms"]
    + [f"bp{i}" for i in range(1, 6)]
    + [f"bv{i}" for i in range(1, 6)]
    + [f"ap{i}" for i in range(1, 6)]
    + [f"av{i}" for i in range(1, 6)]
    + ["vol", "turnover"]
)


@dataclass(slots=True)
class SnapshotRecord:
    """One 5-depth snapshot; prices in half-ticks, zero-volume levels absent."""

    timestamp_ms: int
    bid_prices: tuple
    bid_vols: tuple
    ask_prices: tuple
    ask_vols: tuple
    interval_trade_volume: int
    interval_turnover: int  # half-tick * volume units

    @property
    def best_bid(self) -> int:
        return self.bid_prices[0]

    @property
    def best_ask(self) -> int:
        return self.ask_prices[0]

    @property
    def mid(self) -> int:
        """Midprice in half-ticks (exact: both bests are even)."""
        return (self.bid_prices[0] + self.ask_prices[0]) // 2


@dataclass
class Dataset:
    """Column-array snapshot series at a fixed cadence."""

    ts: np.ndarray  # (n,) int64 ms
    bp: np.ndarray  # (n, 5) int64 half-ticks, best first
    bv: np.ndarray  # (n, 5) int64
    ap: np.ndarray
    av: np.ndarray
    vol: np.ndarray  # (n,) int64 interval trade volume
    turnover: np.ndarray  # (n,) int64 half-tick * volume
    tick_size: float = 1.0
    cadence_ms: int = 500
    instrument: str = "SYNTH"
    gap_flags: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.gap_flags is None:
            self.gap_flags = np.zeros(len(self.ts), dtype=bool)
        self._mid = None
        self._levels = None
        self._trade_cache: dict = {}

    def __len__(self) -> int:
        return len(self.ts)

    def levels_at(self, i: int) -> tuple:
        """((bid levels), (ask levels)) at row ``i`` as [(price, volume)] lists."""
        if self._levels is None:
            bp, bv = self.bp.tolist(), self.bv.tolist()
            ap, av = self.ap.tolist(), self.av.tolist()
            self._levels = [
                (
                    [(p, v) for p, v in zip(bp[k], bv[k]) if v > 0],
                    [(p, v) for p, v in zip(ap[k], av[k]) if v > 0],
                )
                for k in range(len(bp))
            ]
        return self._levels[i]

    @property
    def mid(self) -> np.ndarray:
        """Midprice series in half-ticks."""
        if self._mid is None:
            self._mid = (self.bp[:, 0] + self.ap[:, 0]) // 2
        return self._mid

    def snapshot(self, i: int) -> SnapshotRecord:
        return SnapshotRecord(
            int(self.ts[i]),
            tuple(int(x) for x in self.bp[i]),
            tuple(int(x) for x in self.bv[i]),
            tuple(int(x) for x in self.ap[i]),
            tuple(int(x) for x in self.av[i]),
            int(self.vol[i]),
            int(self.turnover[i]),
        )

    def price_units(self, halfticks) -> float:
        """Convert half-ticks to price units."""
        return halfticks * (self.tick_size / 2.0)


def _validate_row(i: int, line_no: int, bp, bv, ap, av) -> None:
    if bv[0] <= 0 or av[0] <= 0:
        raise SchemaError(f"row {i} (line {line_no}): empty best level")
    for prices, vols, desc, descending in ((bp, bv, "bid", True), (ap, av, "ask", False)):
        live = [p for p, v in zip(prices, vols) if v > 0]
        for a, b in zip(live, live[1:]):
            if descending and not a > b:
                raise SchemaError(f"row {i} (line {line_no}): {desc} prices not descending")
            if not descending and not a < b:
                raise SchemaError(f"row {i} (line {line_no}): {desc} prices not ascending")
        for p, v in zip(prices, vols):
            if v < 0:
                raise SchemaError(f"row {i} (line {line_no}): negative {desc} volume")
            if v > 0 and p % 2 != 0:
                raise SchemaError(
                    f"row {i} (line {line_no}): {desc} price {p} off the tick grid"
                )
    if bp[0] >= ap[0]:
        raise SchemaError(f"row {i} (line {line_no}): crossed book (bid {bp[0]} >= ask {ap[0]})")


def validate_dataset(ds: Dataset) -> None:
    """Re-check every invariant on an in-memory dataset."""
    for i in range(len(ds)):
        _validate_row(i, i + 2, ds.bp[i], ds.bv[i], ds.ap[i], ds.av[i])
        if ds.vol[i] < 0 or ds.turnover[i] < 0:
            raise SchemaError(f"row {i}: negative trade volume or turnover")
    diffs = np.diff(ds.ts)
    if np.any(diffs <= 0):
        raise NonMonotoneTimestamps(f"at row {int(np.argmax(diffs <= 0)) + 1}")


def _read_meta(path: Path) -> dict:
    meta = {}
    if path.exists():
        for raw in path.read_text().splitlines():
            raw = raw.strip()
            if not raw or raw.startswith("#"):
                continue
            key, _, value = raw.partition("=")
            meta[key.strip()] = value.strip()
    return meta


def meta_path(csv_path: Union[str, Path]) -> Path:
    return Path(csv_path).with_suffix(".meta")


def load_dataset(path: Union[str, Path]) -> Dataset:
    """Read and validate a snapshot CSV plus its optional ``.meta`` sidecar."""
    path = Path(path)
    meta = _read_meta(meta_path(path))
    tick_size = float(meta.get("tick_size", 1.0))
    cadence_ms = int(meta.get("cadence_ms", 500))
    instrument = meta.get("instrument", path.stem)
    price_unit = meta.get("price_unit", "")

    rows = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError("empty file") from None
        if [h.strip() for h in header] != CSV_HEADER:
            raise SchemaError(f"bad header: expected {','.join(CSV_HEADER)}")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(CSV_HEADER):
                raise ParseError(line_no, f"expected {len(CSV_HEADER)} fields, got {len(row)}")
            try:
                values = [float(x) for x in row]
            except ValueError as exc:
                raise ParseError(line_no, str(exc)) from None
            rows.append((line_no, values))
    if not rows:
        raise SchemaError("no data rows")

    n = len(rows)
    ts = np.empty(n, dtype=np.int64)
    bp = np.empty((n, DEPTH), dtype=np.int64)
    bv = np.empty((n, DEPTH), dtype=np.int64)
    ap = np.empty((n, DEPTH), dtype=np.int64)
    av = np.empty((n, DEPTH), dtype=np.int64)
    vol = np.empty(n, dtype=np.int64)
    to = np.empty(n, dtype=np.int64)

    decimal = price_unit == "decimal"
    if not price_unit:
        # integer-valued price columns are read as half-ticks
        decimal = any(v[k] != int(v[k]) for _, v in rows for k in range(1, 6))

    for i, (line_no, v) in enumerate(rows):
        ts[i] = int(v[0])
        raw_bp, raw_bv = v[1:6], v[6:11]
        raw_ap, raw_av = v[11:16], v[16:21]
        if decimal:
            row_bp = [int(round(2 * p / tick_size)) for p in raw_bp]
            row_ap = [int(round(2 * p / tick_size)) for p in raw_ap]
            to[i] = int(round(2 * v[22] / tick_size))
        else:
            row_bp = [int(p) for p in raw_bp]
            row_ap = [int(p) for p in raw_ap]
            to[i] = int(v[22])
        bp[i] = row_bp
        ap[i] = row_ap
        bv[i] = [int(x) for x in raw_bv]
        av[i] = [int(x) for x in raw_av]
        vol[i] = int(v[21])
        _validate_row(i, line_no, bp[i], bv[i], ap[i], av[i])
        if vol[i] < 0 or to[i] < 0:
            raise SchemaError(f"row {i} (line {line_no}): negative volume or turnover")

    diffs = np.diff(ts)
    if np.any(diffs <= 0):
        bad = int(np.argmax(diffs <= 0))
        raise NonMonotoneTimestamps(f"rows {bad}..{bad + 1}")
    gaps = np.zeros(n, dtype=bool)
    gaps[1:] = diffs != cadence_ms

    return Dataset(ts, bp, bv, ap, av, vol, to, tick_size, cadence_ms, instrument, gaps)


def save_dataset(ds: Dataset, path: Union[str, Path]) -> None:
    """Write CSV (half-tick prices) plus the ``.meta`` sidecar."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for i in range(len(ds)):
            writer.writerow(
                [int(ds.ts[i])]
                + [int(x) for x in ds.bp[i]]
                + [int(x) for x in ds.bv[i]]
                + [int(x) for x in ds.ap[i]]
                + [int(x) for x in ds.av[i]]
                + [int(ds.vol[i]), int(ds.turnover[i])]
            )
    meta_path(path).write_text(
        f"tick_size={ds.tick_size}\n"
        f"cadence_ms={ds.cadence_ms}\n"
        f"instrument={ds.instrument}\n"
        "price_unit=halftick\n"
    )


@dataclass
class SynthConfig:
    seed: int = 0
    steps: int = 1000
    tick_size: float = 1.0
    base_price: int = 500  # ticks
    trend: float = 0.0  # ticks per step drift of the latent bid
    vol_intensity: float = 6.0  # mean extra units per level
    trade_intensity: float = 1.5  # mean taker volume per side per step
    noise: float = 0.35  # ticks, std of per-step latent move
    flow_info: float = 1.0  # how strongly taker flow leans with the move
    cadence_ms: int = 500
    instrument: str = "SYNTH"


def synth_generate(cfg: SynthConfig) -> Dataset:
    """Deterministic synthetic snapshot stream.

    A latent bid price follows a drifted random walk.  Dense 5-level books
    ride on it; interval trades are generated first by consuming the
    previous book, so recorded volume and turnover are exactly attributable
    and event inference can reproduce each interval.

    Taker flow is informed: per-side intensities lean with the interval's
    latent move (``flow_info`` scales the lean, 0 for symmetric flow), so
    passive fills at the touch carry adverse selection the way real
    directional markets do.
    """
    if cfg.steps < 1:
        raise ValueError("steps must be >= 1")
    rng = np.random.default_rng(cfg.seed)
    n = cfg.steps

    def pick_spread() -> int:
        u = rng.random()
        return 1 if u < 0.5 else (2 if u < 0.8 else 3)

    lam = max(cfg.vol_intensity, 0.0)
    pool = iter(())

    def level_volume() -> int:
        nonlocal pool
        for v in pool:
            return 1 + int(v)
        pool = iter(rng.poisson(lam, 64))
        return 1 + int(next(pool))

    lat = float(cfg.base_price)  # latent bid in ticks
    best_bid = 2 * int(round(lat))
    spread = pick_spread()
    bids = {best_bid - 2 * i: level_volume() for i in range(DEPTH)}
    asks = {best_bid + 2 * spread + 2 * i: level_volume() for i in range(DEPTH)}

    ts = np.empty(n, dtype=np.int64)
    bp = np.zeros((n, DEPTH), dtype=np.int64)
    bv = np.zeros((n, DEPTH), dtype=np.int64)
    ap = np.zeros((n, DEPTH), dtype=np.int64)
    av = np.zeros((n, DEPTH), dtype=np.int64)
    vol = np.zeros(n, dtype=np.int64)
    to = np.zeros(n, dtype=np.int64)

    def record(i, v, t):
        ts[i] = i * cfg.cadence_ms
        for k, price in enumerate(sorted(bids, reverse=True)[:DEPTH]):
            bp[i, k], bv[i, k] = price, bids[price]
        for k, price in enumerate(sorted(asks)[:DEPTH]):
            ap[i, k], av[i, k] = price, asks[price]
        vol[i], to[i] = v, t

    record(0, 0, 0)

    for i in range(1, n):
        traded = 0
        turnover = 0

        def consume(levels, best_first_desc: bool, amount: int):
            nonlocal traded, turnover
            prices = sorted(levels, reverse=best_first_desc)
            for price in prices:
                if amount <= 0:
                    break
                take = min(levels[price], amount)
                levels[price] -= take
                if levels[price] == 0:
                    del levels[price]
                traded += take
                turnover += take * price
                amount -= take
            return amount

        # latent move decides the interval; organic flow leans with it
        move = cfg.trend + rng.normal(0.0, cfg.noise)
        lean = 1.0 / (1.0 + math.exp(-4.0 * cfg.flow_info * move))
        buy = int(rng.poisson(2.0 * cfg.trade_intensity * lean))
        sell = int(rng.poisson(2.0 * cfg.trade_intensity * (1.0 - lean)))
        consume(asks, False, min(buy, sum(asks.values()) - 1))
        consume(bids, True, min(sell, sum(bids.values()) - 1))

        # walk the latent price and retarget the book
        lat += move
        lat = max(lat, 20.0)
        if rng.random() < 0.2:
            spread = pick_spread()
        tgt_bid = 2 * int(round(lat))
        tgt_ask = tgt_bid + 2 * spread

        # levels overtaken by the move vanish: as trades (usually) or cancels
        for price in [p for p in sorted(asks) if p < tgt_ask]:
            if rng.random() < 0.7:
                consume(asks, False, asks[price])
            else:
                del asks[price]
        for price in [p for p in sorted(bids, reverse=True) if p > tgt_bid]:
            if rng.random() < 0.7:
                consume(bids, True, bids[price])
            else:
                del bids[price]

        # rebuild dense 5-level books around the new touch
        new_bids = {}
        for k in range(DEPTH):
            price = tgt_bid - 2 * k
            keep = bids.get(price)
            if keep is not None and rng.random() >= 0.3:
                new_bids[price] = keep
            else:
                new_bids[price] = level_volume()
        new_asks = {}
        for k in range(DEPTH):
            price = tgt_ask + 2 * k
            keep = asks.get(price)
            if keep is not None and rng.random() >= 0.3:
                new_asks[price] = keep
            else:
                new_asks[price] = level_volume()
        bids, asks = new_bids, new_asks
        record(i, traded, turnover)

    return Dataset(ts, bp, bv, ap, av, vol, to, cfg.tick_size, cfg.cadence_ms,
                   cfg.instrument)
