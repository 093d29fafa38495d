import json

import pytest

from invherd.cli import run
from invherd.market_data import read_panel, write_trade_tape
from invherd.synthgen import SynthConfig

from conftest import trade

SMALL = dict(n_firms=12, n_intervals=34 * 6, horizon="15m", seed=5)
FILTER = ["--min-days", "3", "--min-transactions", "20"]


@pytest.fixture
def synth_dir(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(SynthConfig(**SMALL).to_dict()))
    out = tmp_path / "synth"
    assert run(["synth", "--config", str(cfg), "--out", str(out)]) == 0
    return cfg, out


def _snapshot(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


def test_synth_byte_identical(synth_dir, tmp_path):
    cfg, out = synth_dir
    before = _snapshot(out)
    assert run(["synth", "--config", str(cfg), "--out", str(out)]) == 0
    assert _snapshot(out) == before
    names = set(_snapshot(out))
    assert {"synth_tape_SYN.csv", "panel_SYN_2001_15m.csv", "synth_truth_SYN.json"} <= names
    truth = json.loads((out / "synth_truth_SYN.json").read_text())
    assert truth["metadata"]["seed"] == 5 and "tool_version" in truth["metadata"]


def test_synth_seed_flag_overrides(synth_dir, tmp_path):
    cfg, out = synth_dir
    out2 = tmp_path / "other"
    assert run(["synth", "--config", str(cfg), "--seed", "6", "--out", str(out2)]) == 0
    assert (out / "synth_tape_SYN.csv").read_bytes() != (out2 / "synth_tape_SYN.csv").read_bytes()


def test_full_produces_reports_and_is_idempotent(synth_dir, tmp_path):
    _, sdir = synth_dir
    tape = str(sdir / "synth_tape_SYN.csv")
    out = tmp_path / "full"
    args = ["full", "--input", tape, "--shuffles", "3", "--seed", "1", "--out", str(out), *FILTER]
    assert run(args) == 0
    names = set(_snapshot(out))
    for pattern in ("panel_SYN_2001_1d.csv", "panel_SYN_2001_15m.csv", "spectrum_SYN_2001_1d.json",
                    "classify_SYN_2001_1d.csv", "causality_SYN_2001_15m.csv", "herding_ledger_SYN_2001_1d.csv",
                    "herding_ledger_SYN_2001_15m.csv", "herding_summary_SYN_2001_1d.json",
                    "timeline_SYN_2001_15m.csv"):
        assert pattern in names, pattern
    first = _snapshot(out)
    assert run(args) == 0
    assert _snapshot(out) == first

    header = (out / "classify_SYN_2001_1d.csv").read_text().splitlines()[0]
    assert header == "firm,rho,gamma,sigma,threshold,label,size_proxy"
    assert (out / "herding_ledger_SYN_2001_1d.csv").read_text().startswith(
        "interval_start,group,n_buy,n_sell,h,label,b,n_eff")
    assert (out / "timeline_SYN_2001_1d.csv").read_text().startswith("date,close_price,group,label")
    spec = json.loads((out / "spectrum_SYN_2001_1d.json").read_text())
    assert spec["metadata"]["seed"] == 1 and spec["metadata"]["config"]["n_shuffles"] == 3
    panel = read_panel(out / "panel_SYN_2001_15m.csv")
    assert panel.values.shape == (34 * 6, 12)


def test_transitions_over_two_years(tmp_path):
    trades = []
    for year in (2001, 2002):
        for day in range(2, 6):
            for i, (b, s) in enumerate([("A", "B"), ("B", "C"), ("C", "A"), ("A", "C")]):
                trades.append(trade(f"{year}-01-0{day}T1{i}:00:00", b, s, 10 + day + i * 0.1, 100 * (i + 1)))
    tape = tmp_path / "t.csv"
    write_trade_tape(trades, tape)
    out = tmp_path / "o"
    assert run(["transitions", "--input", str(tape), "--out", str(out), "--min-days", "1",
                "--min-transactions", "1"]) == 0
    doc = json.loads((out / "transitions_TEF_2001-2002.json").read_text())
    assert doc["rows"] == ["R", "U", "T"] and len(doc["counts"]) == 3


def test_one_firm_classify_is_data_error(tmp_path, capsys):
    # the reserved pool counterparty is never analysed, leaving a single firm
    trades = [trade(f"2001-01-0{d}T10:00:00", "A", "_POOL", 10 + d, 100) for d in range(2, 6)]
    tape = tmp_path / "t.csv"
    write_trade_tape(trades, tape)
    code = run(["classify", "--input", str(tape), "--out", str(tmp_path / "o"), "--min-days", "4",
                "--min-transactions", "4", "--stock", "TEF"])
    assert code == 2
    assert "data error" in capsys.readouterr().err


def test_missing_input_is_data_error(tmp_path):
    assert run(["ingest", "--input", str(tmp_path / "nope.csv"), "--out", str(tmp_path)]) == 2


@pytest.mark.parametrize("argv", [["bogus"], ["ingest", "--no-such-flag"], [], ["herd", "--alpha", "x"]])
def test_usage_errors(argv, capsys):
    assert run(argv) == 1
    assert "usage" in capsys.readouterr().err


def test_bad_alpha_is_usage_error(synth_dir, tmp_path):
    _, sdir = synth_dir
    assert run(["herd", "--input", str(sdir / "synth_tape_SYN.csv"), "--alpha", "1.5",
                "--out", str(tmp_path)]) == 1


def test_help_exits_zero(capsys):
    assert run(["--help"]) == 0
    assert "synth" in capsys.readouterr().out
