"""Episode traces: per-step records plus a terminal summary.

Serialized as line-delimited JSON: one ``meta`` line carrying the full run
configuration (for reproducibility), one ``step`` line per step, and one
``summary`` line.  All prices are integer half-ticks; the meta line carries
``tick_size`` for conversion.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional, Union

TRACE_SCHEMA_VERSION = 1


@dataclass(slots=True)
class StepRecord:
    step: int
    mid: int  # half-ticks, at the step's opening snapshot
    mid_next: int
    p_ref: int
    best_bid: int  # first post-step snapshot
    best_ask: int
    z: int
    dz: int
    fills: list  # [(side, price_halfticks, volume)]
    pnl_halfticks: int
    pnl: float
    ip: float
    comp: float
    reward: float
    n_cancels: int
    n_placements: int
    quotes_bid: list  # [(price, volume)]
    quotes_ask: list
    signals: list


@dataclass
class EpisodeTrace:
    meta: dict
    records: list = field(default_factory=list)
    summary: Optional[dict] = None

    @classmethod
    def begin(cls, config, reward, signals, seed: int, start: int,
              instrument: str, tick_size: float) -> "EpisodeTrace":
        meta = {
            "schema_version": TRACE_SCHEMA_VERSION,
            "config": asdict(config),
            "reward": asdict(reward),
            "signals": _spec_dict(signals),
            "seed": seed,
            "start": start,
            "instrument": instrument,
            "tick_size": tick_size,
        }
        return cls(meta)

    def append(self, record: StepRecord) -> None:
        self.records.append(record)

    def finish(self, **summary) -> None:
        self.summary = summary

    def __len__(self) -> int:
        return len(self.records)

    @property
    def tick_size(self) -> float:
        return float(self.meta.get("tick_size", 1.0))

    @property
    def pnl_mode(self) -> str:
        return self.meta.get("reward", {}).get("pnl_mode", "wealth_delta")

    def save(self, path: Union[str, Path]) -> None:
        path = Path(path)
        with path.open("w") as fh:
            fh.write(_line("meta", self.meta))
            for rec in self.records:
                fh.write(_line("step", asdict(rec)))
            if self.summary is not None:
                fh.write(_line("summary", self.summary))

    @classmethod
    def load(cls, path: Union[str, Path]) -> "EpisodeTrace":
        meta = None
        records = []
        summary = None
        step_fields = [f.name for f in fields(StepRecord)]
        with Path(path).open() as fh:
            for line in fh:
                obj = json.loads(line)
                kind = obj.pop("kind")
                if kind == "meta":
                    meta = obj
                elif kind == "step":
                    obj["fills"] = [tuple(f) for f in obj["fills"]]
                    obj["quotes_bid"] = [tuple(x) for x in obj["quotes_bid"]]
                    obj["quotes_ask"] = [tuple(x) for x in obj["quotes_ask"]]
                    records.append(StepRecord(**{k: obj[k] for k in step_fields}))
                elif kind == "summary":
                    summary = obj
        if meta is None:
            raise ValueError(f"{path}: missing meta line")
        return cls(meta, records, summary)


def _spec_dict(signals) -> dict:
    d = asdict(signals)
    d["horizons"] = list(d["horizons"])
    return d


def _line(kind: str, payload: dict) -> str:
    obj = {"kind": kind}
    obj.update(payload)
    return json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n"
