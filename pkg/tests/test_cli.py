import json

import pytest

from agent import Agent
from conftest import sim_for, small_plan
from edgechaos import cli
from edgechaos.config import serialize_plan

FILES = {"requests.csv", "summary.csv", "zscores.csv", "events.log", "manifest.json"}


def plan_file(tmp_path, name="plan.yaml", **kw):
    path = tmp_path / name
    path.write_text(serialize_plan(small_plan(**kw)))
    return path


def test_run_nominal(tmp_path, capsys):
    out = tmp_path / "out"
    assert cli.main(["run", "--plan", str(plan_file(tmp_path)), "--out", str(out)]) == 0
    assert {p.name for p in out.iterdir()} == FILES
    assert "t-0000" in capsys.readouterr().err


def test_quiet_suppresses_progress(tmp_path, capsys):
    assert cli.main(["run", "--plan", str(plan_file(tmp_path)), "--out", str(tmp_path / "o"), "--quiet"]) == 0
    assert capsys.readouterr().err == ""


def test_missing_plan_is_usage_error(tmp_path, capsys):
    missing = tmp_path / "nope.yaml"
    assert cli.main(["run", "--plan", str(missing), "--out", str(tmp_path / "o")]) == 2
    assert str(missing) in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


@pytest.mark.parametrize(
    "text",
    ["name: x\nintensities: [30]\n", "- just\n- a list\n", "name: [unclosed\n"],
)
def test_invalid_plan_is_usage_error(tmp_path, text, capsys):
    path = tmp_path / "bad.yaml"
    path.write_text(text)
    assert cli.main(["run", "--plan", str(path), "--out", str(tmp_path / "o")]) == 2
    assert "invalid plan" in capsys.readouterr().err


def test_seed_override_is_reproducible(tmp_path):
    plan = plan_file(tmp_path, topology="chain(2)")
    outs = [tmp_path / n for n in ("a", "b", "c")]
    for out, seed in zip(outs, ("7", "7", "8")):
        assert cli.main(["run", "--plan", str(plan), "--out", str(out), "--seed", seed, "--quiet"]) == 0
    reqs = [(o / "requests.csv").read_bytes() for o in outs]
    assert reqs[0] == reqs[1] != reqs[2]
    assert json.loads((outs[0] / "manifest.json").read_text())["seed"] == 7


def test_http_without_endpoint(tmp_path, monkeypatch, capsys):
    monkeypatch.delenv(cli.ENDPOINT_ENV, raising=False)
    argv = ["run", "--plan", str(plan_file(tmp_path)), "--out", str(tmp_path / "o"), "--backend", "http"]
    assert cli.main(argv) == 2
    assert cli.ENDPOINT_ENV in capsys.readouterr().err


def test_http_backend_through_agent(tmp_path, monkeypatch):
    plan = small_plan(backend="remote", intensities=[25], window_s=1, stabilization_s=0)
    path = tmp_path / "remote.yaml"
    path.write_text(serialize_plan(plan))
    with Agent(sim_for(plan), speed=50.0) as agent:
        monkeypatch.setenv(cli.ENDPOINT_ENV, agent.url)
        assert cli.main(["run", "--plan", str(path), "--out", str(tmp_path / "o"), "--quiet"]) == 0
        assert agent.sim.active_fault_schedules() == []
    manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert [c["status"] for c in manifest["cases"]] == ["completed"]
    assert len((tmp_path / "o" / "requests.csv").read_text().splitlines()) == 1 + 5


def test_aborted_campaign_exits_one(tmp_path, monkeypatch):
    from test_orchestrator import FAST, Scripted

    real = cli.run_campaign

    def broken(plan, factory, out_dir, progress):
        return real(plan, lambda: Scripted(plan, break_on_restart=1), out_dir, progress, health=FAST)

    monkeypatch.setattr(cli, "run_campaign", broken)
    out = tmp_path / "o"
    assert cli.main(["run", "--plan", str(plan_file(tmp_path)), "--out", str(out), "--quiet"]) == 1
    statuses = [c["status"] for c in json.loads((out / "manifest.json").read_text())["cases"]]
    assert statuses == ["aborted", "unrun"]


def test_analyze_reproduces_run_output(tmp_path):
    out = tmp_path / "o"
    cli.main(["run", "--plan", str(plan_file(tmp_path)), "--out", str(out), "--quiet"])
    before = (out / "zscores.csv").read_bytes()
    assert cli.main(["analyze", "--in", str(out)]) == 0
    assert (out / "zscores.csv").read_bytes() == before


def test_analyze_missing_baseline_names_group(tmp_path, capsys):
    out = tmp_path / "o"
    cli.main(["run", "--plan", str(plan_file(tmp_path)), "--out", str(out), "--quiet"])
    assert cli.main(["analyze", "--out", str(out), "--baseline-intensity", "50"]) == 1
    assert "network-delay|cloud|monolith|constant" in capsys.readouterr().err


def test_analyze_empty_dir(tmp_path, capsys):
    assert cli.main(["analyze", "--in", str(tmp_path)]) == 1
    assert "cannot analyze" in capsys.readouterr().err


def test_bad_baseline_choice_is_argparse_error(tmp_path):
    with pytest.raises(SystemExit) as exc:
        cli.main(["analyze", "--in", str(tmp_path), "--baseline-intensity", "30"])
    assert exc.value.code == 2


def test_report_round_trip(tmp_path):
    out = tmp_path / "o"
    cli.main(["run", "--plan", str(plan_file(tmp_path)), "--out", str(out), "--quiet"])
    req, ev = (out / "requests.csv").read_bytes(), (out / "events.log").read_bytes()
    assert cli.main(["analyze", "--in", str(out), "--quiet"]) == 0
    assert cli.main(["report", "--in", str(out), "--quiet"]) == 0
    first = (out / "report.md").read_bytes()
    assert cli.main(["report", "--in", str(out), "--quiet"]) == 0
    assert (out / "report.md").read_bytes() == first
    assert (out / "requests.csv").read_bytes() == req and (out / "events.log").read_bytes() == ev


def test_report_on_missing_dir(tmp_path):
    assert cli.main(["report", "--in", str(tmp_path / "none")]) == 1
