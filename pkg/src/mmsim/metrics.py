"""Episode- and suite-level evaluation metrics.

All monetary metrics are in price units (half-ticks scaled by tick size).
Episode PnL sums the trace's per-step PnL in its recorded mode, exactly in
integer half-ticks before the final conversion.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Iterable, Optional

from .book import ASK, BID
from .errors import EmptyTrace, NoFillsOnSide
from .trace import EpisodeTrace

ADVERSE_WINDOW_DEFAULT = 20  # steps (10 s at the 500 ms cadence)


@dataclass
class EpisodeReport:
    strategy: str
    seed: Optional[int]
    epnl: float
    map: float
    rpt: Optional[float]  # None when a side never filled
    pnlmap: float
    n_fills_per_1000: float
    adv_ratio: float
    adv_ratio_defined: bool
    max_abs_inventory: int
    sharpe: float


def _require_steps(trace: EpisodeTrace) -> None:
    if not trace.records:
        raise EmptyTrace("trace has no steps")


def episode_pnl(trace: EpisodeTrace) -> float:
    """Sum of per-step PnL in the trace's recorded mode, price units."""
    _require_steps(trace)
    return sum(r.pnl_halfticks for r in trace.records) * (trace.tick_size / 2.0)


def mean_abs_position(trace: EpisodeTrace) -> float:
    """Average |inventory| over steps with nonzero inventory (0 if none)."""
    _require_steps(trace)
    active = [abs(r.z) for r in trace.records if r.z != 0]
    if not active:
        return 0.0
    return sum(active) / len(active)


def _fill_vwaps(trace: EpisodeTrace):
    sell_n = sell_v = buy_n = buy_v = 0
    for rec in trace.records:
        for side, price, volume in rec.fills:
            if side == ASK:
                sell_n += price * volume
                sell_v += volume
            else:
                buy_n += price * volume
                buy_v += volume
    return sell_n, sell_v, buy_n, buy_v


def return_per_trade(trace: EpisodeTrace, avg_market_spread: float) -> float:
    """(ask VWAP - bid VWAP) / average market spread, dimensionless."""
    _require_steps(trace)
    if avg_market_spread <= 0:
        raise ValueError("average market spread must be positive")
    sell_n, sell_v, buy_n, buy_v = _fill_vwaps(trace)
    if sell_v == 0 or buy_v == 0:
        raise NoFillsOnSide("return per trade needs fills on both sides")
    half_tick = trace.tick_size / 2.0
    return (sell_n / sell_v - buy_n / buy_v) * half_tick / avg_market_spread


def average_market_spread(trace: EpisodeTrace) -> float:
    _require_steps(trace)
    half_tick = trace.tick_size / 2.0
    return sum((r.best_ask - r.best_bid) for r in trace.records) * half_tick / len(trace.records)


def adverse_fill_counts(trace: EpisodeTrace, window: int = ADVERSE_WINDOW_DEFAULT):
    """(adverse fills, total fills) with the given lookahead window.

    A bid fill is adverse when the best bid drops below its price within the
    window after the fill; symmetrically for ask fills.  The first post-fill
    snapshot is the one recorded on the fill's own step.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    records = trace.records
    n = len(records)
    adverse = total = 0
    for t, rec in enumerate(records):
        if not rec.fills:
            continue
        lo, hi = t, min(t + window, n)
        min_bid = min(records[k].best_bid for k in range(lo, hi))
        max_ask = max(records[k].best_ask for k in range(lo, hi))
        for side, price, _ in rec.fills:
            total += 1
            if side == BID and min_bid < price:
                adverse += 1
            elif side == ASK and max_ask > price:
                adverse += 1
    return adverse, total


def adverse_selection_ratio(trace: EpisodeTrace,
                            window: int = ADVERSE_WINDOW_DEFAULT) -> float:
    """Adverse fills / total fills; 0.0 when there were no fills."""
    _require_steps(trace)
    adverse, total = adverse_fill_counts(trace, window)
    return adverse / total if total else 0.0


def sharpe_ratio(trace: EpisodeTrace) -> float:
    """Per-step PnL mean over sample std, no annualization; 0 when flat."""
    _require_steps(trace)
    half_tick = trace.tick_size / 2.0
    xs = [r.pnl_halfticks * half_tick for r in trace.records]
    if len(xs) < 2:
        return 0.0
    mean = sum(xs) / len(xs)
    var = sum((x - mean) ** 2 for x in xs) / (len(xs) - 1)
    if var == 0:
        return 0.0
    return mean / math.sqrt(var)


def build_report(trace: EpisodeTrace, strategy: str = "", seed: Optional[int] = None,
                 window: int = ADVERSE_WINDOW_DEFAULT) -> EpisodeReport:
    epnl = episode_pnl(trace)
    map_value = mean_abs_position(trace)
    try:
        rpt = return_per_trade(trace, average_market_spread(trace))
    except NoFillsOnSide:
        rpt = None
    adverse, total = adverse_fill_counts(trace, window)
    return EpisodeReport(
        strategy=strategy,
        seed=seed,
        epnl=epnl,
        map=map_value,
        rpt=rpt,
        pnlmap=epnl / map_value if map_value > 0 else 0.0,
        n_fills_per_1000=1000.0 * total / len(trace.records),
        adv_ratio=adverse / total if total else 0.0,
        adv_ratio_defined=total > 0,
        max_abs_inventory=max(abs(r.z) for r in trace.records),
        sharpe=sharpe_ratio(trace),
    )


def sign_test_pvalue(wins: int, losses: int) -> float:
    """Exact two-sided binomial sign test p-value, ties excluded upstream."""
    n = wins + losses
    if n == 0:
        return 1.0
    k = min(wins, losses)
    tail = sum(math.comb(n, i) for i in range(k + 1)) / 2.0 ** n
    return min(1.0, 2.0 * tail)


_SUMMARY_METRICS = [
    ("epnl", "EPnL[10^3]", 1e-3),
    ("map", "MAP[unit]", 1.0),
    ("pnlmap", "PnLMAP", 1.0),
    ("rpt", "RPT", 1.0),
    ("n_fills_per_1000", "#T", 1.0),
    ("adv_ratio", "adv_ratio", 1.0),
    ("sharpe", "SR", 1.0),
]


@dataclass
class SummaryTable:
    rows: list  # [(strategy, {metric: (mean, std, count)})]

    def to_csv_rows(self) -> list:
        header = ["strategy"]
        for name, _, _ in _SUMMARY_METRICS:
            header += [f"{name}_mean", f"{name}_std", f"{name}_n"]
        out = [header]
        for strategy, stats in self.rows:
            row = [strategy]
            for name, _, _ in _SUMMARY_METRICS:
                mean, std, count = stats[name]
                row += ["" if mean is None else repr(mean),
                        "" if std is None else repr(std), str(count)]
            out.append(row)
        return out

    def to_text(self) -> str:
        cols = ["strategy"] + [label for _, label, _ in _SUMMARY_METRICS]
        lines = []
        body = []
        for strategy, stats in self.rows:
            row = [strategy]
            for name, _, scale in _SUMMARY_METRICS:
                mean, std, _ = stats[name]
                if mean is None:
                    row.append("-")
                else:
                    row.append(f"{mean * scale:.2f} ± {(std or 0.0) * scale:.2f}")
            body.append(row)
        widths = [max(len(c), *(len(r[i]) for r in body)) if body else len(c)
                  for i, c in enumerate(cols)]
        lines.append("  ".join(c.ljust(w) for c, w in zip(cols, widths)))
        lines.append("  ".join("-" * w for w in widths))
        for row in body:
            lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)))
        return "\n".join(lines)


def _mean_std(values: list):
    xs = [x for x in values if x is not None]
    if not xs:
        return None, None, 0
    mean = sum(xs) / len(xs)
    if len(xs) < 2:
        return mean, 0.0, len(xs)
    var = sum((x - mean) ** 2 for x in xs) / (len(xs) - 1)
    return mean, math.sqrt(var), len(xs)


def summarize(reports: Iterable[EpisodeReport]) -> SummaryTable:
    """Per-strategy mean ± sample std of every metric."""
    reports = list(reports)
    if not reports:
        raise ValueError("summarize needs at least one report")
    order = []
    grouped: dict[str, list[EpisodeReport]] = {}
    for rep in reports:
        if rep.strategy not in grouped:
            order.append(rep.strategy)
            grouped[rep.strategy] = []
        grouped[rep.strategy].append(rep)
    rows = []
    for strategy in order:
        batch = grouped[strategy]
        stats = {}
        for name, _, _ in _SUMMARY_METRICS:
            stats[name] = _mean_std([getattr(r, name) for r in batch])
        rows.append((strategy, stats))
    return SummaryTable(rows)


def report_csv_rows(reports: Iterable[EpisodeReport]) -> list:
    """Per-episode long-form rows for machine consumption."""
    names = [f.name for f in fields(EpisodeReport)]
    out = [names]
    for rep in reports:
        out.append([("" if getattr(rep, n) is None else str(getattr(rep, n)))
                    for n in names])
    return out


def timeseries_rows(trace: EpisodeTrace, episode: int, strategy: str) -> list:
    """Long-format per-step rows (inventory, cumulative PnL, mid) for plotting."""
    half_tick = trace.tick_size / 2.0
    out = []
    cum = 0
    for rec in trace.records:
        cum += rec.pnl_halfticks
        out.append([strategy, str(episode), str(rec.step), "z", str(rec.z)])
        out.append([strategy, str(episode), str(rec.step), "cum_pnl",
                    repr(cum * half_tick)])
        out.append([strategy, str(episode), str(rec.step), "mid",
                    repr(rec.mid * half_tick)])
    return out
