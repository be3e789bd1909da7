import json

from topkmon.cli import _seeds, main


def test_seed_ranges():
    assert _seeds("3") == (3,)
    assert _seeds("0-2,7") == (0, 1, 2, 7)


def test_gen_then_simulate_and_opt(tmp_path, capsys):
    trace = tmp_path / "t.jsonl"
    assert main(["gen", "--adversary", "random_walk", "--n", "6", "--horizon", "30",
                 "--delta", "100", "--params", '{"step": 10}', "--out", str(trace)]) == 0
    assert len(trace.read_text().splitlines()) == 30

    out, events = tmp_path / "r.json", tmp_path / "e.jsonl"
    assert main(["simulate", "--trace", str(trace), "--k", "2", "--protocol", "midpoint", "--eps", "0",
                 "--out", str(out), "--events", str(events)]) == 0
    report = json.loads(out.read_text())
    assert report["ledger"]["uplink"] > 0
    assert events.read_text().strip()

    capsys.readouterr()
    assert main(["opt", "--trace", str(trace), "--k", "2", "--eps", "1/4"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "oracle,reconfig_events,detailed_cost"
    assert [l.split(",")[0] for l in lines[1:]] == ["exact", "eps"]


def test_gen_csv_to_stdout(capsys):
    assert main(["gen", "--adversary", "iid_uniform", "--n", "3", "--horizon", "2", "--format", "csv"]) == 0
    assert capsys.readouterr().out.splitlines()[0] == "t,v1,v2,v3"


def test_ratio_and_lowerbound(tmp_path, capsys):
    out = tmp_path / "ratio.json"
    assert main(["ratio", "--n", "8", "--k", "2", "--horizon", "20", "--seeds", "0-1", "--out", str(out)]) == 0
    assert len(json.loads(out.read_text())["runs"]) == 2
    capsys.readouterr()
    assert main(["lowerbound", "--n", "16", "--k", "2", "--phases", "2", "--protocol", "scattered"]) == 0
    assert capsys.readouterr().out.startswith("seed,")


def test_bad_arguments_exit_nonzero(capsys):
    assert main(["ratio", "--n", "4", "--k", "4"]) == 1
    assert "error" in capsys.readouterr().err


def test_invariant_violation_exits_with_dump(monkeypatch, capsys):
    from topkmon.model import Filter
    from topkmon.protocols import MONITORS

    def broken(srv):
        srv.publish([Filter(0)] * srv.n, set())
        while True:
            yield

    monkeypatch.setitem(MONITORS, "midpoint", broken)
    assert main(["ratio", "--n", "4", "--k", "1", "--protocol", "midpoint", "--eps", "0", "--horizon", "3"]) == 2
    err = capsys.readouterr().err
    assert "invariant violation" in err
    assert '"trace"' in err
