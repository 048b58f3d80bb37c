"""CLI subcommands: synth, backtest, export-expert, report, serve."""
import hashlib
import json
import subprocess
import sys

import pytest

from mmsim.cli import main, parse_run_config
from mmsim.data import load_dataset
from mmsim.errors import SchemaError


def run_cli(*argv):
    return main(list(argv))


def write_config(path, data_lines, strategy="ltiic", episodes=2, seed=0,
                 steps=40, extra=""):
    path.write_text(f"""
[data]
{data_lines}

[episode]
steps = {steps}
total_volume = 8
n_levels = 2
depth = 5
lookback = 10
start = random

[signals]
kind = oracle
horizons = 5,10
threshold = 0.5

[strategy]
id = {strategy}
a = 1.0
b = -0.2
c = 1.0
d = 6

[run]
episodes = {episodes}
seed = {seed}
{extra}
""")


class TestSynth:
    def test_writes_csv_and_meta(self, tmp_path, capsys):
        out = tmp_path / "d.csv"
        assert run_cli("synth", "--steps", "50", "--seed", "7", "--out", str(out)) == 0
        assert out.exists() and out.with_suffix(".meta").exists()
        assert len(load_dataset(out)) == 50
        assert "50 rows" in capsys.readouterr().out

    def test_deterministic_digest(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        run_cli("synth", "--steps", "80", "--seed", "3", "--out", str(a))
        run_cli("synth", "--steps", "80", "--seed", "3", "--out", str(b))
        assert hashlib.sha256(a.read_bytes()).digest() == hashlib.sha256(b.read_bytes()).digest()

    def test_zero_steps_usage_error(self, tmp_path):
        out = tmp_path / "d.csv"
        assert run_cli("synth", "--steps", "0", "--out", str(out)) == 3

    def test_missing_flag_exits_2(self):
        with pytest.raises(SystemExit) as err:
            run_cli("synth", "--steps", "10")
        assert err.value.code == 2


class TestBacktest:
    def test_synth_backtest_outputs(self, tmp_path, capsys):
        cfg = tmp_path / "run.ini"
        write_config(cfg, "synth_seed = 5\nsynth_steps = 200\nsynth_trend = 0.05")
        out = tmp_path / "out"
        assert run_cli("backtest", str(cfg), "--out", str(out)) == 0
        assert (out / "trace_ep000.jsonl").exists()
        assert (out / "trace_ep001.jsonl").exists()
        assert (out / "reports.csv").exists()
        assert (out / "summary.csv").exists()
        assert "ltiic" in (out / "summary.txt").read_text()
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["episodes"] == 2 and manifest["strategy"] == "ltiic"
        assert "EPnL[10^3]" in capsys.readouterr().out

    def test_csv_dataset_source(self, tmp_path):
        data_path = tmp_path / "d.csv"
        run_cli("synth", "--steps", "150", "--seed", "2", "--out", str(data_path))
        cfg = tmp_path / "run.ini"
        write_config(cfg, "path = d.csv", strategy="foic", episodes=1)
        out = tmp_path / "out"
        assert run_cli("backtest", str(cfg), "--out", str(out)) == 0
        assert (out / "trace_ep000.jsonl").exists()

    def test_unknown_strategy_names_valid_ids(self, tmp_path, capsys):
        cfg = tmp_path / "run.ini"
        write_config(cfg, "synth_steps = 120", strategy="nope", episodes=1)
        out = tmp_path / "out"
        assert run_cli("backtest", str(cfg), "--out", str(out)) == 3
        err = capsys.readouterr().err
        assert "ltiic" in err and "foic" in err

    def test_both_data_sources_rejected(self, tmp_path):
        cfg = tmp_path / "run.ini"
        write_config(cfg, "path = x.csv\nsynth_steps = 10")
        assert run_cli("backtest", str(cfg), "--out", str(tmp_path / "o")) == 3

    def test_sweep_grid(self, tmp_path, capsys):
        cfg = tmp_path / "run.ini"
        write_config(cfg, "synth_seed = 4\nsynth_steps = 150\nsynth_trend = 0.05",
                     episodes=1, steps=30)
        out = tmp_path / "sweep"
        code = run_cli("backtest", str(cfg), "--out", str(out),
                       "--sweep", "a=1,2", "b=-0.1,-0.2")
        assert code == 0
        for i in range(4):
            assert (out / f"sweep_{i:03d}" / "summary.csv").exists()
        text = (out / "sweep_summary.csv").read_text()
        assert text.count("sweep_") == 4
        assert "best by PnLMAP" in capsys.readouterr().out

    def test_reproducible_from_config(self, tmp_path):
        cfg = tmp_path / "run.ini"
        write_config(cfg, "synth_seed = 6\nsynth_steps = 150", episodes=1)
        out1, out2 = tmp_path / "r1", tmp_path / "r2"
        run_cli("backtest", str(cfg), "--out", str(out1))
        run_cli("backtest", str(cfg), "--out", str(out2))
        assert (out1 / "trace_ep000.jsonl").read_bytes() == \
            (out2 / "trace_ep000.jsonl").read_bytes()


class TestExportExpert:
    def test_export_and_verify(self, tmp_path, capsys):
        cfg = tmp_path / "run.ini"
        write_config(cfg, "synth_seed = 8\nsynth_steps = 200", episodes=2, steps=50)
        out = tmp_path / "expert.jsonl"
        assert run_cli("export-expert", str(cfg), "--out", str(out), "--verify") == 0
        stdout = capsys.readouterr().out
        assert "100 samples" in stdout
        assert "verified 100" in stdout

    def test_identical_seeds_identical_digest(self, tmp_path):
        cfg = tmp_path / "run.ini"
        write_config(cfg, "synth_seed = 8\nsynth_steps = 150", episodes=1, steps=30)
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        run_cli("export-expert", str(cfg), "--out", str(a))
        run_cli("export-expert", str(cfg), "--out", str(b))
        assert a.read_bytes() == b.read_bytes()


class TestReport:
    def test_rebuild_from_traces(self, tmp_path, capsys):
        cfg = tmp_path / "run.ini"
        write_config(cfg, "synth_seed = 5\nsynth_steps = 200\nsynth_trend = 0.03")
        run_dir = tmp_path / "run_out"
        run_cli("backtest", str(cfg), "--out", str(run_dir))
        rep_dir = tmp_path / "rep"
        assert run_cli("report", "--traces", str(run_dir), "--out", str(rep_dir)) == 0
        assert (rep_dir / "summary.csv").exists()
        assert (rep_dir / "timeseries.csv").exists()
        assert "ltiic" in capsys.readouterr().out

    def test_no_traces_is_data_error(self, tmp_path):
        assert run_cli("report", "--traces", str(tmp_path), "--out",
                       str(tmp_path / "o")) == 3


class TestParseConfig:
    def test_missing_file(self, tmp_path):
        with pytest.raises(SchemaError):
            parse_run_config(tmp_path / "nope.ini")

    def test_relative_data_path_resolves_against_config(self, tmp_path):
        sub = tmp_path / "sub"
        sub.mkdir()
        run_cli("synth", "--steps", "60", "--out", str(sub / "d.csv"))
        cfg = sub / "run.ini"
        write_config(cfg, "path = d.csv")
        parsed = parse_run_config(cfg)
        assert parsed["data"][1].exists()


class TestServe:
    def _serve(self, requests, cwd):
        proc = subprocess.run(
            [sys.executable, "-m", "mmsim.cli", "serve"],
            input="\n".join(json.dumps(r) for r in requests) + "\n",
            capture_output=True, text=True, cwd=cwd, timeout=120,
        )
        assert proc.returncode == 0, proc.stderr
        return [json.loads(line) for line in proc.stdout.splitlines() if line]

    def test_roundtrip_and_errors(self, tmp_path):
        cfg = tmp_path / "run.ini"
        write_config(cfg, "synth_seed = 9\nsynth_steps = 120", episodes=1, steps=20)
        action = [0.0, 2.0, 0.5, 0.5, 0.5, 0.5]
        out = self._serve([
            {"op": "make_env", "config": str(cfg)},
            {"op": "reset", "handle": 1, "seed": 0},
            {"op": "step", "handle": 1, "action": action},
            {"op": "step", "handle": 1, "action": [float("nan")] * 6},
            {"op": "step", "handle": 1, "action": [1.0, 2.0]},
            {"op": "close", "handle": 1},
            {"op": "reset", "handle": 1},
        ], cwd=tmp_path)
        assert out[0]["ok"] and out[0]["handle"] == 1
        assert out[0]["schema"]["market_window"] == [17, 10]
        assert out[1]["ok"] and len(out[1]["obs"]["signals"]) == 2
        assert out[2]["ok"] and isinstance(out[2]["reward"], float)
        assert out[3] == {"ok": False, "error": "ShapeError",
                          "message": "non-finite action entries"}
        assert out[4]["error"] == "ShapeError"
        assert out[5]["ok"]
        assert out[6]["error"] == "ClosedHandle"
