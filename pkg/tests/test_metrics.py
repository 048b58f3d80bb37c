"""Metrics against hand-computed golden traces and an independent recount."""
import math

import numpy as np
import pytest

from mmsim.book import ASK, BID
from mmsim.errors import EmptyTrace, NoFillsOnSide
from mmsim.metrics import (
    EpisodeReport,
    adverse_fill_counts,
    adverse_selection_ratio,
    average_market_spread,
    build_report,
    episode_pnl,
    mean_abs_position,
    return_per_trade,
    sharpe_ratio,
    sign_test_pvalue,
    summarize,
    timeseries_rows,
)
from mmsim.trace import EpisodeTrace, StepRecord


def make_trace(steps, tick_size=1.0):
    """steps: list of dicts with z, fills, pnl_halfticks, best_bid, best_ask."""
    trace = EpisodeTrace(meta={"tick_size": tick_size, "reward": {}})
    for t, s in enumerate(steps):
        trace.append(StepRecord(
            step=t, mid=s.get("mid", 201), mid_next=s.get("mid_next", 201),
            p_ref=201,
            best_bid=s.get("best_bid", 200), best_ask=s.get("best_ask", 202),
            z=s.get("z", 0), dz=0, fills=s.get("fills", []),
            pnl_halfticks=s.get("pnl_halfticks", 0),
            pnl=s.get("pnl_halfticks", 0) * tick_size / 2.0,
            ip=0.0, comp=0.0,
            reward=s.get("pnl_halfticks", 0) * tick_size / 2.0,
            n_cancels=0, n_placements=0, quotes_bid=[], quotes_ask=[],
            signals=[0],
        ))
    return trace


# Golden trace 1: four steps, z path [0, 2, -2, 0], three fills.
# Hand computation (tick = 1, so price units = half-ticks / 2):
#   pnl_ht = [0, 2, 8, 2]            -> EPnL = 12 * 0.5 = 6.0
#   MAP    = (2 + 2) / 2 = 2.0       -> PnLMAP = 3.0
#   ask VWAP 202, bid VWAP (2*200 + 2*198)/4 = 199 -> 1.5 price units
#   avg spread = 2 half-ticks = 1.0  -> RPT = 1.5
#   fills per 1000 steps = 3/4 * 1000 = 750
#   per-step pnl [0, 1, 4, 1]: mean 1.5, sample std sqrt(3) -> SR = 0.8660254
#   adverse (W=2): buy@200 sees best bid drop to 198 -> adverse;
#   sell@202 never sees best ask above 202; buy@198 never undercut -> 1/3
GOLD1 = [
    dict(z=0, pnl_halfticks=0, best_bid=200, best_ask=202),
    dict(z=2, pnl_halfticks=2, fills=[(BID, 200, 2)], best_bid=200, best_ask=202),
    dict(z=-2, pnl_halfticks=8, fills=[(ASK, 202, 4)], best_bid=198, best_ask=200),
    dict(z=0, pnl_halfticks=2, fills=[(BID, 198, 2)], best_bid=198, best_ask=200),
]


class TestGoldenTrace1:
    def setup_method(self):
        self.trace = make_trace(GOLD1)

    def test_epnl(self):
        assert episode_pnl(self.trace) == pytest.approx(6.0, rel=1e-9)

    def test_map(self):
        assert mean_abs_position(self.trace) == pytest.approx(2.0, rel=1e-9)

    def test_rpt(self):
        spread = average_market_spread(self.trace)
        assert spread == pytest.approx(1.0, rel=1e-9)
        assert return_per_trade(self.trace, spread) == pytest.approx(1.5, rel=1e-9)

    def test_adverse_ratio(self):
        assert adverse_selection_ratio(self.trace, window=2) == pytest.approx(1 / 3)

    def test_full_report(self):
        rep = build_report(self.trace, strategy="gold", window=2)
        assert rep.epnl == pytest.approx(6.0, rel=1e-9)
        assert rep.map == pytest.approx(2.0, rel=1e-9)
        assert rep.pnlmap == pytest.approx(3.0, rel=1e-9)
        assert rep.rpt == pytest.approx(1.5, rel=1e-9)
        assert rep.n_fills_per_1000 == pytest.approx(750.0, rel=1e-9)
        assert rep.adv_ratio == pytest.approx(1 / 3, rel=1e-9)
        assert rep.max_abs_inventory == 2
        assert rep.sharpe == pytest.approx(1.5 / math.sqrt(3.0), rel=1e-9)


class TestGoldenTrace2:
    # one-sided fills and symmetric fills
    def test_only_ask_fills_raises(self):
        trace = make_trace([dict(z=-1, fills=[(ASK, 202, 1)])])
        with pytest.raises(NoFillsOnSide):
            return_per_trade(trace, 1.0)
        rep = build_report(trace, strategy="onesided")
        assert rep.rpt is None

    def test_symmetric_fills_zero_rpt(self):
        trace = make_trace([
            dict(z=1, fills=[(BID, 200, 2)]),
            dict(z=-1, fills=[(ASK, 200, 2)]),
        ])
        assert return_per_trade(trace, 1.0) == 0.0


class TestGoldenTrace3:
    # completely idle episode
    def setup_method(self):
        self.trace = make_trace([dict(z=0)] * 5)

    def test_zero_metrics(self):
        rep = build_report(self.trace, strategy="idle")
        assert rep.epnl == 0.0
        assert rep.map == 0.0  # guarded division
        assert rep.pnlmap == 0.0
        assert rep.rpt is None
        assert rep.adv_ratio == 0.0 and not rep.adv_ratio_defined
        assert rep.sharpe == 0.0

    def test_constant_inventory_map(self):
        trace = make_trace([dict(z=5)] * 3)
        assert mean_abs_position(trace) == 5.0


class TestGuards:
    def test_empty_trace(self):
        trace = EpisodeTrace(meta={"tick_size": 1.0})
        with pytest.raises(EmptyTrace):
            episode_pnl(trace)

    def test_window_guard(self):
        with pytest.raises(ValueError):
            adverse_fill_counts(make_trace(GOLD1), window=0)


class TestAdverseRecount:
    def test_matches_bruteforce_recount(self):
        rng = np.random.default_rng(17)
        steps = []
        bb = 200
        for _ in range(120):
            bb += 2 * int(rng.integers(-1, 2))
            fills = []
            for _ in range(int(rng.integers(0, 3))):
                side = BID if rng.integers(0, 2) == 0 else ASK
                price = bb if side == BID else bb + 2
                fills.append((side, price + 2 * int(rng.integers(-1, 2)), 1))
            steps.append(dict(z=0, fills=fills, best_bid=bb, best_ask=bb + 2))
        trace = make_trace(steps)
        for window in (1, 5, 20):
            adverse, total = adverse_fill_counts(trace, window)
            # independent recount, element by element
            want_adv = want_total = 0
            recs = trace.records
            for t, rec in enumerate(recs):
                for side, price, _ in rec.fills:
                    want_total += 1
                    horizon = recs[t:min(t + window, len(recs))]
                    if side == BID and any(r.best_bid < price for r in horizon):
                        want_adv += 1
                    if side == ASK and any(r.best_ask > price for r in horizon):
                        want_adv += 1
            assert (adverse, total) == (want_adv, want_total)

    def test_monotone_in_window(self):
        trace = make_trace(GOLD1)
        ratios = [adverse_selection_ratio(trace, w) for w in (1, 2, 3, 4, 8)]
        assert ratios == sorted(ratios)


class TestRptTranslationInvariance:
    def test_uniform_price_shift(self):
        shift = 50  # half-ticks
        base = make_trace(GOLD1)
        shifted_steps = []
        for s in GOLD1:
            s2 = dict(s)
            if "fills" in s2:
                s2["fills"] = [(side, p + shift, v) for side, p, v in s2["fills"]]
            s2["best_bid"] = s2["best_bid"] + shift
            s2["best_ask"] = s2["best_ask"] + shift
            shifted_steps.append(s2)
        shifted = make_trace(shifted_steps)
        spread = average_market_spread(base)
        assert return_per_trade(base, spread) == pytest.approx(
            return_per_trade(shifted, spread), rel=1e-12
        )


class TestSummarize:
    def _rep(self, strategy, epnl, **kw):
        return EpisodeReport(
            strategy=strategy, seed=None, epnl=epnl, map=kw.get("map", 1.0),
            rpt=kw.get("rpt"), pnlmap=epnl / kw.get("map", 1.0),
            n_fills_per_1000=10.0, adv_ratio=0.5, adv_ratio_defined=True,
            max_abs_inventory=3, sharpe=1.0,
        )

    def test_single_report_zero_std(self):
        table = summarize([self._rep("a", 2.0)])
        stats = dict(table.rows)["a"]
        assert stats["epnl"] == (2.0, 0.0, 1)

    def test_two_reports_sample_std(self):
        table = summarize([self._rep("a", 1.0), self._rep("a", 3.0)])
        mean, std, n = dict(table.rows)["a"]["epnl"]
        assert (mean, n) == (2.0, 2)
        assert std == pytest.approx(math.sqrt(2.0))  # sample std of {1,3}

    def test_text_table_columns(self):
        table = summarize([self._rep("ltiic", 1.0), self._rep("foic", -1.0)])
        text = table.to_text()
        for col in ("EPnL[10^3]", "MAP[unit]", "PnLMAP", "#T", "adv_ratio", "SR"):
            assert col in text
        assert "±" in text

    def test_none_rpt_excluded(self):
        table = summarize([self._rep("a", 1.0, rpt=None), self._rep("a", 1.0, rpt=2.0)])
        mean, _, n = dict(table.rows)["a"]["rpt"]
        assert (mean, n) == (2.0, 1)


class TestSignTest:
    def test_balanced_is_insignificant(self):
        assert sign_test_pvalue(10, 10) > 0.5

    def test_unanimous_is_significant(self):
        assert sign_test_pvalue(20, 0) < 1e-4

    def test_fifteen_of_twenty(self):
        # classic threshold case: p ~ 0.0414
        assert sign_test_pvalue(15, 5) == pytest.approx(0.04138946533203125)

    def test_no_observations(self):
        assert sign_test_pvalue(0, 0) == 1.0


class TestTimeseries:
    def test_long_format_rows(self):
        trace = make_trace(GOLD1)
        rows = timeseries_rows(trace, episode=0, strategy="gold")
        assert len(rows) == 3 * len(GOLD1)
        series = {r[3] for r in rows}
        assert series == {"z", "cum_pnl", "mid"}
