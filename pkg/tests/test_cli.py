import csv
import io
import json
from importlib import resources

import pytest

from relayharq.cli import ExperimentConfig, load_config, main, resolve_path, with_parameter
from relayharq.model import ConfigError

from .conftest import two_user_config


def small_simulate(tmp_path, **over):
    doc = {
        "schema_version": 1,
        "command": "simulate",
        "name": "small",
        "system": two_user_config().to_dict(),
        "sweep": {"paths": ["relay_channel[0][1]", "bs_relay[0]"], "values": [0.2, 0.8]},
        "policies": ["RLPA_INDEX", "NO_RELAY_INDEX"],
        "slots": 3000,
        "replications": 2,
        "seed": 9,
    }
    doc.update(over)
    path = tmp_path / "small.json"
    path.write_text(json.dumps(doc))
    return path


@pytest.mark.parametrize("name", ["relay-quality", "user-channel", "cost-scaling-indices", "certify-default"])
def test_presets_round_trip(name):
    cfg = load_config(name)
    assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg
    assert ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))).to_dict() == cfg.to_dict()


def test_sweep_presets_pin_experiment_parameters():
    quality, channel = load_config("relay-quality"), load_config("user-channel")
    for cfg in (quality, channel):
        s = cfg.system
        assert s.arrival_rates == (0.3, 0.3) and s.retx_limits == (2, 2)
        assert s.cost_rates == ((0.98, 1.0, 1.02), (1.25, 1.5, 1.75))
        assert cfg.slots == 10**6 and cfg.replications == 10
        assert cfg.sweep_values == tuple(round(0.1 * k, 1) for k in range(1, 10))
    assert quality.system.bs_channel == (0.9, 0.9) and quality.system.relay_channel[0][0] == 0.9
    assert "relay_channel[0][1]" in quality.sweep_paths
    assert channel.system.relay_channel == ((0.15, 0.15),)
    assert channel.sweep_paths == ("bs_channel[1]",)
    assert channel.policies == ("RLPA_INDEX", "NO_RELAY_INDEX")


def test_parameter_paths():
    cfg = two_user_config()
    assert resolve_path(cfg, "relay_channel[0][1]") == 0.9
    assert with_parameter(cfg, ["bs_channel[1]"], 0.4).bs_channel == (0.9, 0.4)
    for bad in ("relay_channel[0]", "relay_channel[3][0]", "num_users", "nothing", "bs_channel[0][0]", "bs_channel]["):
        with pytest.raises(ConfigError):
            resolve_path(cfg, bad)


def test_simulate_writes_csv_and_summary(tmp_path):
    out = tmp_path / "out"
    assert main(["simulate", str(small_simulate(tmp_path)), "--out", str(out)]) == 0
    text = (out / "small.csv").read_text()
    lines = text.splitlines()
    assert lines[0].startswith("# relayharq simulate schema 1")
    rows = list(csv.DictReader(io.StringIO("\n".join(lines[1:]))))
    assert list(rows[0]) == ["grid_value", "policy", "avg_cost", "throughput", "D", "B", "dropped", "seed"]
    assert len(rows) == 2 * 2 * 2
    assert all(int(r["B"]) == 3000 for r in rows)
    summary = json.loads((out / "small.json").read_text())
    assert len(summary["points"]) == 4
    assert set(summary["points"][0]["throughput"]) == {"mean", "std", "ci95"}


def test_simulate_is_byte_reproducible(tmp_path):
    path = small_simulate(tmp_path)
    main(["simulate", str(path), "--out", str(tmp_path / "a")])
    main(["simulate", str(path), "--out", str(tmp_path / "b"), "--jobs", "2"])
    assert (tmp_path / "a" / "small.csv").read_bytes() == (tmp_path / "b" / "small.csv").read_bytes()
    main(["simulate", str(path), "--out", str(tmp_path / "c"), "--seed", "10"])
    assert (tmp_path / "a" / "small.csv").read_bytes() != (tmp_path / "c" / "small.csv").read_bytes()


def test_environment_overrides(tmp_path, monkeypatch):
    path = small_simulate(tmp_path)
    monkeypatch.setenv("RELAYHARQ_OUT", str(tmp_path / "env"))
    monkeypatch.setenv("RELAYHARQ_SEED", "10")
    assert main(["simulate", str(path)]) == 0
    main(["simulate", str(path), "--out", str(tmp_path / "flag"), "--seed", "10"])
    assert (tmp_path / "env" / "small.csv").read_bytes() == (tmp_path / "flag" / "small.csv").read_bytes()


def test_empty_grid_exits_1(tmp_path, capsys):
    path = small_simulate(tmp_path, sweep={"paths": ["bs_channel[0]"], "values": []})
    assert main(["simulate", str(path), "--out", str(tmp_path)]) == 1
    assert "nonempty" in capsys.readouterr().err


@pytest.mark.parametrize(
    "change",
    [
        {"schema_version": 2},
        {"policies": ["FASTEST"]},
        {"sweep": {"paths": ["num_relays"], "values": [1]}},
        {"slots": 0},
        {"surprise": 1},
    ],
)
def test_schema_violations_exit_1(tmp_path, change):
    assert main(["simulate", str(small_simulate(tmp_path, **change)), "--out", str(tmp_path)]) == 1


def test_wrong_subcommand_and_bad_json_exit_1(tmp_path):
    assert main(["certify", str(small_simulate(tmp_path)), "--out", str(tmp_path)]) == 1
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert main(["simulate", str(bad)]) == 1


def _certify_doc(tmp_path, draining):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"schema_version": 1, "command": "certify", "name": "c", "seed": 3, "draining": draining}))
    return path


def test_certify_reports_gaps(tmp_path):
    path = _certify_doc(tmp_path, {"instances": 6})
    assert main(["certify", str(path), "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "c.json").read_text())
    assert report["passed"] and len(report["draining"]["rows"]) == 6
    row = report["draining"]["rows"][0]
    assert {"config", "initial_queues", "optimal", "policy_value", "gap"} <= set(row)


def test_certify_empty_campaign_warns(tmp_path, capsys):
    path = _certify_doc(tmp_path, {"instances": 0})
    assert main(["certify", str(path), "--out", str(tmp_path)]) == 0
    assert "warning" in capsys.readouterr().err
    assert json.loads((tmp_path / "c.json").read_text())["passed"]


def test_certify_state_cap_exits_2(tmp_path):
    path = _certify_doc(tmp_path, {"instances": 5, "state_limit": 1})
    assert main(["certify", str(path), "--out", str(tmp_path)]) == 2


def test_indices_table_and_sweep(tmp_path):
    assert main(["indices", "cost-scaling-indices", "--out", str(tmp_path)]) == 0
    rows = list(csv.DictReader(io.StringIO((tmp_path / "cost-scaling-indices.csv").read_text())))
    assert len(rows) == 12
    values = [float(r["index"]) for r in rows]
    assert values == sorted(values, reverse=True)
    sweep = list(csv.DictReader(io.StringIO((tmp_path / "cost-scaling-indices_sweep.csv").read_text())))
    assert len(sweep) == 12 * 21


def test_indices_without_relays(tmp_path):
    doc = {"schema_version": 1, "command": "indices", "name": "plain", "system": two_user_config().without_relays().to_dict()}
    path = tmp_path / "plain.json"
    path.write_text(json.dumps(doc))
    assert main(["indices", str(path), "--out", str(tmp_path)]) == 0
    rows = list(csv.DictReader(io.StringIO((tmp_path / "plain.csv").read_text())))
    assert len(rows) == 6 and {r["relay_rank"] for r in rows} == {"0"}


def test_cost_sweep_order_flips_where_ratios_cross(tmp_path):
    """Between consecutive grid points the order changes only if some pair of index lines crosses."""
    assert main(["indices", "cost-scaling-indices", "--out", str(tmp_path)]) == 0
    sweep = list(csv.DictReader(io.StringIO((tmp_path / "cost-scaling-indices_sweep.csv").read_text())))
    by_scale = {}
    for r in sweep:
        by_scale.setdefault(float(r["cost_scale"]), []).append(r)
    scales = sorted(by_scale)

    def order(s):
        return [(r["user"], r["retx"], r["relay_rank"]) for r in by_scale[s]]

    def value(s):
        return {(r["user"], r["retx"], r["relay_rank"]): float(r["index"]) for r in by_scale[s]}

    flips = 0
    for lo, hi in zip(scales, scales[1:]):
        if order(lo) == order(hi):
            continue
        flips += 1
        a, b = value(lo), value(hi)
        pos_lo = {q: k for k, q in enumerate(order(lo))}
        pos_hi = {q: k for k, q in enumerate(order(hi))}
        swapped = [(p, q) for p in pos_lo for q in pos_lo if pos_lo[p] < pos_lo[q] and pos_hi[p] > pos_hi[q]]
        for p, q in swapped:
            # the sign of the index difference changes (or hits a tie) across the interval
            assert (a[p] - a[q]) * (b[p] - b[q]) <= 1e-12
    assert flips >= 1
