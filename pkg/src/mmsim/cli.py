"""Command-line front door: synthetic data, backtests, expert export, reports.

Run configs are flat INI files ([data], [episode], [reward], [signals],
[strategy], [run]); every output directory carries a manifest with the
config hash so any run is reproducible from its config file and seed.

Exit codes: 0 ok, 2 usage error, 3 data/config error.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import itertools
import json
import sys
from pathlib import Path

import numpy as np

from .data import Dataset, SynthConfig, load_dataset, save_dataset, synth_generate
from .env import Action, EpisodeConfig, MarketMakingEnv, RewardParams
from .errors import MmsimError, SchemaError, ShapeError
from .experts import (
    export_expert_dataset,
    load_expert_dataset,
    make_strategy,
    run_episode,
    validate_action_array,
)
from .metrics import (
    build_report,
    report_csv_rows,
    summarize,
    timeseries_rows,
)
from .trace import EpisodeTrace

PROTOCOL_VERSION = 1


# -- config ------------------------------------------------------------------


def _config_hash(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def parse_run_config(path: Path):
    """Parse and validate a run config; returns a plain dict of pieces."""
    if not path.exists():
        raise SchemaError(f"config file not found: {path}")
    ini = configparser.ConfigParser()
    ini.read(path)
    try:
        data_sec = dict(ini["data"]) if "data" in ini else {}
        has_path = "path" in data_sec
        has_synth = any(k.startswith("synth_") for k in data_sec)
        if has_path == has_synth:
            raise SchemaError(f"{path}: [data] needs exactly one of path= or synth_*=")
        if has_path:
            data = ("path", (Path(path).parent / data_sec["path"]).resolve())
        else:
            data = ("synth", SynthConfig(
                seed=int(data_sec.get("synth_seed", 0)),
                steps=int(data_sec.get("synth_steps", 1000)),
                tick_size=float(data_sec.get("synth_tick_size", 1.0)),
                base_price=int(data_sec.get("synth_base_price", 500)),
                trend=float(data_sec.get("synth_trend", 0.0)),
                vol_intensity=float(data_sec.get("synth_vol_intensity", 6.0)),
                trade_intensity=float(data_sec.get("synth_trade_intensity", 1.5)),
                noise=float(data_sec.get("synth_noise", 0.35)),
            ))
        ep = dict(ini["episode"]) if "episode" in ini else {}
        start = ep.get("start", "random")
        episode = EpisodeConfig(
            steps=int(ep.get("steps", 10800)),
            total_volume=int(ep.get("total_volume", 20)),
            n_levels=int(ep.get("n_levels", 2)),
            depth=int(ep.get("depth", 5)),
            lookback=int(ep.get("lookback", 50)),
            start="random" if start == "random" else int(start),
            seed=int(ep.get("seed", 0)),
        )
        rw = dict(ini["reward"]) if "reward" in ini else {}
        reward = RewardParams(
            eta=float(rw.get("eta", 0.0)),
            beta=float(rw.get("beta", 0.0)),
            cap=float(rw.get("cap", 0.0)),
            pnl_mode=rw.get("pnl_mode", "wealth_delta"),
        )
        from .signals import SignalSpec

        sg = dict(ini["signals"]) if "signals" in ini else {}
        signals = SignalSpec(
            horizons=tuple(int(x) for x in sg.get("horizons", "20,120,240,600").split(",")),
            threshold=float(sg.get("threshold", 1.0)),
            noise=float(sg.get("noise", 0.0)),
            kind=sg.get("kind", "oracle"),
        )
        strat_sec = dict(ini["strategy"]) if "strategy" in ini else {}
        strategy_id = strat_sec.pop("id", None)
        if strategy_id is not None:
            from .experts import STRATEGIES

            if strategy_id not in STRATEGIES:
                raise SchemaError(
                    f"unknown strategy {strategy_id!r}; valid ids: {sorted(STRATEGIES)}"
                )
        strategy_params = {k: float(v) for k, v in strat_sec.items()}
        run = dict(ini["run"]) if "run" in ini else {}
        return {
            "data": data,
            "episode": episode,
            "reward": reward,
            "signals": signals,
            "strategy_id": strategy_id,
            "strategy_params": strategy_params,
            "episodes": int(run.get("episodes", 1)),
            "seed": int(run.get("seed", 0)),
            "queue_mode": run.get("queue_mode", "pessimistic"),
            "adverse_window": int(run.get("adverse_window", 20)),
            "config_hash": _config_hash(path),
        }
    except (KeyError, ValueError) as exc:
        raise SchemaError(f"{path}: {exc}") from exc


def load_config_dataset(cfg: dict) -> Dataset:
    kind, payload = cfg["data"]
    if kind == "path":
        return load_dataset(payload)
    return synth_generate(payload)


def build_env(cfg: dict, data: Dataset) -> MarketMakingEnv:
    return MarketMakingEnv(
        data, cfg["episode"], reward=cfg["reward"], signals=cfg["signals"],
        queue_mode=cfg["queue_mode"],
    )


# -- subcommands ---------------------------------------------------------------


def cmd_synth(args) -> int:
    if args.steps < 1:
        raise SchemaError("--steps must be >= 1")
    ds = synth_generate(SynthConfig(
        seed=args.seed, steps=args.steps, tick_size=args.tick_size,
        base_price=args.base_price, trend=args.trend,
        vol_intensity=args.vol_intensity, trade_intensity=args.trade_intensity,
        noise=args.noise,
    ))
    out = Path(args.out)
    save_dataset(ds, out)
    digest = hashlib.sha256(out.read_bytes()).hexdigest()[:12]
    lo = ds.price_units(int(ds.mid.min()))
    hi = ds.price_units(int(ds.mid.max()))
    print(f"wrote {out} ({len(ds)} rows, mid {lo:.1f}..{hi:.1f}, sha256 {digest})")
    return 0


def _write_csv(path: Path, rows) -> None:
    with path.open("w", newline="") as fh:
        csv.writer(fh).writerows(rows)


def _run_backtest(cfg: dict, out_dir: Path) -> list:
    out_dir.mkdir(parents=True, exist_ok=True)
    if cfg["strategy_id"] is None:
        raise SchemaError("backtest needs [strategy] id=")
    data = load_config_dataset(cfg)
    env = build_env(cfg, data)
    strategy = make_strategy(cfg["strategy_id"], cfg["strategy_params"])
    reports = []
    ts_rows = [["strategy", "episode", "step", "series", "value"]]
    for ep in range(cfg["episodes"]):
        seed = cfg["seed"] + ep
        trace = run_episode(env, strategy, seed=seed)
        trace.meta["run_config_hash"] = cfg["config_hash"]
        trace.meta["strategy"] = cfg["strategy_id"]
        trace.save(out_dir / f"trace_ep{ep:03d}.jsonl")
        reports.append(build_report(
            trace, strategy=cfg["strategy_id"], seed=seed,
            window=cfg["adverse_window"],
        ))
        ts_rows += timeseries_rows(trace, ep, cfg["strategy_id"])
    _write_csv(out_dir / "reports.csv", report_csv_rows(reports))
    table = summarize(reports)
    _write_csv(out_dir / "summary.csv", table.to_csv_rows())
    (out_dir / "summary.txt").write_text(
        f"# config {cfg['config_hash'][:12]}\n" + table.to_text() + "\n"
    )
    _write_csv(out_dir / "timeseries.csv", ts_rows)
    (out_dir / "manifest.json").write_text(json.dumps({
        "config_hash": cfg["config_hash"],
        "episodes": cfg["episodes"],
        "seeds": list(range(cfg["seed"], cfg["seed"] + cfg["episodes"])),
        "strategy": cfg["strategy_id"],
        "strategy_params": cfg["strategy_params"],
    }, sort_keys=True, indent=2) + "\n")
    return reports


def _parse_sweep(tokens) -> dict:
    grid = {}
    for token in tokens:
        name, _, values = token.partition("=")
        if not values:
            raise SchemaError(f"bad sweep token {token!r}; want name=v1,v2")
        grid[name] = [float(v) for v in values.split(",")]
    return grid


def cmd_backtest(args) -> int:
    cfg = parse_run_config(Path(args.config))
    out_dir = Path(args.out)
    if not args.sweep:
        reports = _run_backtest(cfg, out_dir)
        print((out_dir / "summary.txt").read_text())
        print(f"wrote {len(reports)} episode traces to {out_dir}")
        return 0
    grid = _parse_sweep(args.sweep)
    names = sorted(grid)
    combos = list(itertools.product(*(grid[n] for n in names)))
    results = []
    for i, combo in enumerate(combos):
        sub = dict(cfg)
        sub["strategy_params"] = dict(cfg["strategy_params"])
        sub["strategy_params"].update(dict(zip(names, combo)))
        sub_dir = out_dir / f"sweep_{i:03d}"
        reports = _run_backtest(sub, sub_dir)
        mean_pnlmap = sum(r.pnlmap for r in reports) / len(reports)
        results.append((i, dict(zip(names, combo)), mean_pnlmap))
    best = max(results, key=lambda r: r[2])
    rows = [["sweep", *names, "mean_pnlmap", "best"]]
    for i, params, mean_pnlmap in results:
        rows.append([f"sweep_{i:03d}", *(repr(params[n]) for n in names),
                     repr(mean_pnlmap), "*" if i == best[0] else ""])
    _write_csv(out_dir / "sweep_summary.csv", rows)
    for row in rows:
        print("  ".join(str(c) for c in row))
    print(f"best by PnLMAP: sweep_{best[0]:03d} {best[1]}")
    return 0


def cmd_export_expert(args) -> int:
    cfg = parse_run_config(Path(args.config))
    if cfg["strategy_id"] is None:
        raise SchemaError("export-expert needs [strategy] id=")
    data = load_config_dataset(cfg)
    env = build_env(cfg, data)
    strategy = make_strategy(cfg["strategy_id"], cfg["strategy_params"])
    out = Path(args.out)
    manifest = export_expert_dataset(env, strategy, cfg["episodes"], out,
                                     seed=cfg["seed"])
    print(f"wrote {manifest['samples']} samples to {out} "
          f"(config {manifest['config_hash'][:12]})")
    if args.verify:
        it = load_expert_dataset(out)
        m = next(it)
        n_levels = m["feature_schema"]["n_levels"]
        count = 0
        for sample in it:
            validate_action_array(sample["action"], n_levels)
            count += 1
        if count != m["samples"]:
            raise SchemaError(f"sample count mismatch: {count} != {m['samples']}")
        print(f"verified {count} samples")
    return 0


def cmd_report(args) -> int:
    traces = sorted(Path(args.traces).glob("trace_ep*.jsonl"))
    if not traces:
        raise SchemaError(f"no trace_ep*.jsonl files under {args.traces}")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    reports = []
    ts_rows = [["strategy", "episode", "step", "series", "value"]]
    for ep, path in enumerate(traces):
        trace = EpisodeTrace.load(path)
        strategy = trace.meta.get("strategy", "strategy")
        reports.append(build_report(trace, strategy=strategy,
                                    seed=trace.meta.get("seed"), window=args.window))
        ts_rows += timeseries_rows(trace, ep, strategy)
    _write_csv(out_dir / "reports.csv", report_csv_rows(reports))
    table = summarize(reports)
    _write_csv(out_dir / "summary.csv", table.to_csv_rows())
    (out_dir / "summary.txt").write_text(table.to_text() + "\n")
    _write_csv(out_dir / "timeseries.csv", ts_rows)
    print(table.to_text())
    return 0


# -- serve: line protocol for foreign-language bindings -------------------------


def observation_payload(obs) -> dict:
    """JSON-safe observation; floats round-trip exactly through JSON."""
    return {
        "market_window": [[float(x) for x in row] for row in obs.market_window],
        "signals": [int(x) for x in obs.signals],
        "inventory": int(obs.inventory),
        "queue_pos": [float(x) for x in obs.queue_pos],
        "resting_volume": [float(x) for x in obs.resting_volume],
    }


def schema_payload(env: MarketMakingEnv) -> dict:
    cfg = env.cfg
    return {
        "version": PROTOCOL_VERSION,
        "n_features": env.n_features,
        "lookback": cfg.lookback,
        "market_window": [env.n_features, cfg.lookback],
        "signals": [len(env.signal_spec.horizons)],
        "private": [1 + 4 * cfg.depth],
        "action": [2 + 2 * cfg.n_levels],
        "n_levels": cfg.n_levels,
        "depth": cfg.depth,
        "horizons": list(env.signal_spec.horizons),
    }


class BindingServer:
    """One env per handle, driven by JSON lines on stdin/stdout."""

    def __init__(self):
        self.envs: dict[int, MarketMakingEnv] = {}
        self.next_handle = 1

    def handle(self, req: dict) -> dict:
        op = req.get("op")
        if op == "make_env":
            cfg = parse_run_config(Path(req["config"]))
            data = load_config_dataset(cfg)
            env = build_env(cfg, data)
            handle = self.next_handle
            self.next_handle += 1
            self.envs[handle] = env
            return {"ok": True, "handle": handle, "schema": schema_payload(env)}
        handle = req.get("handle")
        env = self.envs.get(handle)
        if env is None:
            return {"ok": False, "error": "ClosedHandle",
                    "message": f"no open environment with handle {handle}"}
        if op == "schema":
            return {"ok": True, "schema": schema_payload(env)}
        if op == "reset":
            obs = env.reset(seed=req.get("seed"))
            return {"ok": True, "obs": observation_payload(obs)}
        if op == "step":
            try:
                action_arr = np.asarray(req["action"], dtype=np.float64)
            except (TypeError, ValueError) as exc:
                return {"ok": False, "error": "ShapeError", "message": str(exc)}
            if action_arr.shape != (2 + 2 * env.cfg.n_levels,):
                return {"ok": False, "error": "ShapeError",
                        "message": f"action length {action_arr.shape} != "
                                   f"{2 + 2 * env.cfg.n_levels}"}
            if not np.isfinite(action_arr).all():
                return {"ok": False, "error": "ShapeError",
                        "message": "non-finite action entries"}
            action = Action.from_array(action_arr, env.cfg.n_levels)
            obs, reward, done, info = env.step(action)
            return {
                "ok": True,
                "obs": observation_payload(obs),
                "reward": float(reward),
                "done": bool(done),
                "info": {
                    "pnl": float(info["pnl"]),
                    "ip": float(info["ip"]),
                    "comp": float(info["comp"]),
                    "n_cancels": int(info["n_cancels"]),
                    "n_placements": int(info["n_placements"]),
                    "step": int(info["step"]),
                },
            }
        if op == "close":
            del self.envs[handle]
            return {"ok": True}
        return {"ok": False, "error": "UnknownOp", "message": f"unknown op {op!r}"}


def cmd_serve(args) -> int:
    server = BindingServer()
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        try:
            req = json.loads(line)
        except json.JSONDecodeError as exc:
            resp = {"ok": False, "error": "ParseError", "message": str(exc)}
            print(json.dumps(resp), flush=True)
            continue
        try:
            resp = server.handle(req)
        except MmsimError as exc:
            resp = {"ok": False, "error": type(exc).__name__, "message": str(exc)}
        except (KeyError, TypeError, ValueError) as exc:
            resp = {"ok": False, "error": "BadRequest", "message": str(exc)}
        print(json.dumps(resp, separators=(",", ":")), flush=True)
        if req.get("op") == "shutdown":
            break
    return 0


# -- entry ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mmsim",
        description="Limit-order-book market-making simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic snapshot dataset")
    p.add_argument("--steps", type=int, required=True, help="number of snapshots")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trend", type=float, default=0.0, help="ticks per step drift")
    p.add_argument("--vol-intensity", type=float, default=6.0)
    p.add_argument("--trade-intensity", type=float, default=1.5)
    p.add_argument("--noise", type=float, default=0.35, help="ticks, walk std")
    p.add_argument("--base-price", type=int, default=500, help="ticks")
    p.add_argument("--tick-size", type=float, default=1.0)
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("backtest", help="run a strategy over episodes")
    p.add_argument("config", help="run config (INI)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--sweep", nargs="*", default=None,
                   help="param grid, e.g. a=1,2 b=-0.1,-0.2")
    p.set_defaults(func=cmd_backtest)

    p = sub.add_parser("export-expert", help="record expert (obs, action) samples")
    p.add_argument("config", help="run config (INI)")
    p.add_argument("--out", required=True, help="output JSONL path")
    p.add_argument("--verify", action="store_true",
                   help="re-load and validate every sample")
    p.set_defaults(func=cmd_export_expert)

    p = sub.add_parser("report", help="summarize saved traces")
    p.add_argument("--traces", required=True, help="directory of trace_ep*.jsonl")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--window", type=int, default=20, help="adverse fill lookahead")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("serve", help="JSON-line binding server on stdin/stdout")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except MmsimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
