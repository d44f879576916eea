"""Command-line front end.

Usage::

    relayharq simulate|certify|indices CONFIG [--out DIR] [--seed S] [--jobs J]

CONFIG is a JSON file path or the name of a bundled preset (``relay-quality``,
``user-channel``, ``cost-scaling-indices``, ``certify-default``). ``RELAYHARQ_OUT`` and
``RELAYHARQ_SEED`` override the output directory and master seed when the
matching flag is absent.

Config documents carry ``"schema_version": 1`` and a ``"command"`` naming the
subcommand they belong to.

simulate
    ``system`` (a SystemConfig mapping), ``sweep`` with ``paths`` (one or
    more parameter paths such as ``"relay_channel[0][1]"``, all bound to the
    same grid value) and ``values``; ``policies``; ``slots``;
    ``replications``; ``seed``; optional ``warmup``, ``x_cap``,
    ``initial_queues`` and ``cost`` (per-user names ``x``, ``x^2``, ``x^3``).
    Writes ``<name>.csv``, one row per (grid value, policy, replication)::

        # relayharq simulate schema 1: grid_value,policy,avg_cost,throughput,D,B,dropped,seed
        grid_value,policy,avg_cost,throughput,D,B,dropped,seed

    and ``<name>.json`` with the mean, sample std and 95% half width of
    avg_cost, throughput, D and dropped per (grid value, policy).

certify
    ``draining`` and/or ``average`` blocks whose keys are the keyword
    arguments of :func:`relayharq.certify.certify_draining` and
    :func:`relayharq.certify.certify_average`. Writes ``<name>.json``.

indices
    ``system``, ``policy`` (``RLPA_INDEX`` or ``NO_RELAY_INDEX``) and an
    optional ``cost_sweep`` with ``user`` (0-based) and ``values``; every cost
    rate of that user is multiplied by each value. Writes ``<name>.csv``
    (columns ``user,retx,relay_rank,transmitter,T,cost_rate,index``) and,
    with a sweep, ``<name>_sweep.csv`` (columns
    ``cost_scale,position,user,retx,relay_rank,index``).

In CSV files users and relays are numbered from 1; JSON parameter paths use
0-based array positions.

Exit codes: 0 success, 1 invalid config, 2 oracle state cap exceeded.
"""

from __future__ import annotations

import argparse
import copy
import dataclasses
import csv
import io
import json
import os
import re
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Sequence

from . import certify
from .model import ConfigError, SystemConfig
from .oracle import StateSpaceTooLarge
from .policy import PolicyKind, index_table, index_table_csv
from .simulator import SimRun, run_many

SCHEMA_VERSION = 1
COMMANDS = ("simulate", "certify", "indices")
SIMULATE_COLUMNS = ["grid_value", "policy", "avg_cost", "throughput", "D", "B", "dropped", "seed"]
SWEEP_COLUMNS = ["cost_scale", "position", "user", "retx", "relay_rank", "index"]
_PATH = re.compile(r"^([a-z_]+)((?:\[\d+\])*)$")


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ConfigError(message)


def resolve_path(config: SystemConfig, path: str) -> float:
    """Current value at a parameter path; raises ConfigError if it is not a real field."""
    node, keys = _walk(config.to_dict(), path)
    return float(node[keys[-1]])


def _walk(data: dict, path: str):
    match = _PATH.match(path)
    _require(match is not None, f"malformed parameter path {path!r}")
    name, rest = match.groups()
    _require(name in data and name not in ("num_users", "num_relays"), f"unknown parameter {name!r}")
    keys = [name, *(int(k) for k in re.findall(r"\d+", rest))]
    node = data
    try:
        for key in keys[:-1]:
            node = node[key]
            _require(isinstance(node, list), f"path {path!r} indexes a scalar")
        value = node[keys[-1]]
    except (IndexError, KeyError, TypeError):
        raise ConfigError(f"path {path!r} is out of range") from None
    _require(isinstance(value, (int, float)) and not isinstance(value, bool), f"path {path!r} is not real-valued")
    return node, keys


def with_parameter(config: SystemConfig, paths: Sequence[str], value: float) -> SystemConfig:
    data = copy.deepcopy(config.to_dict())
    for path in paths:
        node, keys = _walk(data, path)
        node[keys[-1]] = float(value)
    return SystemConfig.from_dict(data)


@dataclass(frozen=True)
class ExperimentConfig:
    """A parsed config document for one subcommand."""

    command: str
    name: str
    system: SystemConfig | None = None
    sweep_paths: tuple = ()
    sweep_values: tuple = ()
    policies: tuple = ()
    slots: int = 0
    replications: int = 1
    seed: int = 0
    warmup: int = 0
    x_cap: int | None = None
    initial_queues: tuple | None = None
    cost: tuple | None = None
    draining: dict | None = None
    average: dict | None = None
    policy: str | None = None
    cost_sweep_user: int | None = None
    cost_sweep_values: tuple = ()

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        _require(isinstance(data, dict), "config must be a JSON object")
        _require(data.get("schema_version") == SCHEMA_VERSION, f"schema_version must be {SCHEMA_VERSION}")
        command = data.get("command")
        _require(command in COMMANDS, f"command must be one of {COMMANDS}")
        name = data.get("name")
        _require(isinstance(name, str) and re.fullmatch(r"[\w.-]+", name or "") is not None, "name must be a plain file stem")
        known = {"schema_version", "command", "name", "system"}
        system = SystemConfig.from_dict(data["system"]) if "system" in data else None
        kw: dict = {}
        if command == "simulate":
            known |= {"sweep", "policies", "slots", "replications", "seed", "warmup", "x_cap", "initial_queues", "cost"}
            _require(system is not None, "simulate needs a system block")
            sweep = data.get("sweep")
            _require(isinstance(sweep, dict), "simulate needs a sweep block")
            paths = sweep.get("paths")
            values = sweep.get("values")
            _require(isinstance(paths, list) and len(paths) > 0, "sweep.paths must be a nonempty list")
            _require(isinstance(values, list) and len(values) > 0, "sweep grid must be nonempty")
            for p in paths:
                resolve_path(system, p)
            policies = data.get("policies")
            _require(isinstance(policies, list) and len(policies) > 0, "policies must be a nonempty list")
            kw.update(
                sweep_paths=tuple(paths),
                sweep_values=tuple(float(v) for v in values),
                policies=tuple(PolicyKind.parse(p).name for p in policies),
                slots=int(data.get("slots", 0)),
                replications=int(data.get("replications", 1)),
                seed=int(data.get("seed", 0)),
                warmup=int(data.get("warmup", 0)),
                x_cap=data.get("x_cap"),
                initial_queues=None if data.get("initial_queues") is None else tuple(data["initial_queues"]),
                cost=None if data.get("cost") is None else tuple(data["cost"]),
            )
            _require(kw["slots"] >= 1, "slots must be at least 1")
            _require(kw["replications"] >= 1, "replications must be at least 1")
        elif command == "certify":
            known |= {"draining", "average", "seed"}
            _require("draining" in data or "average" in data, "certify needs a draining or average block")
            for key in ("draining", "average"):
                _require(data.get(key) is None or isinstance(data[key], dict), f"{key} must be an object")
            kw.update(draining=data.get("draining"), average=data.get("average"), seed=int(data.get("seed", 0)))
        else:
            known |= {"policy", "cost_sweep"}
            _require(system is not None, "indices needs a system block")
            kw["policy"] = PolicyKind.parse(data.get("policy", "RLPA_INDEX")).name
            sweep = data.get("cost_sweep")
            if sweep is not None:
                user, values = sweep.get("user"), sweep.get("values")
                _require(isinstance(user, int) and 0 <= user < system.num_users, "cost_sweep.user out of range")
                _require(isinstance(values, list) and len(values) > 0, "sweep grid must be nonempty")
                kw.update(cost_sweep_user=user, cost_sweep_values=tuple(float(v) for v in values))
        unknown = set(data) - known
        _require(not unknown, f"unknown keys: {sorted(unknown)}")
        return cls(command=command, name=name, system=system, **kw)

    def to_dict(self) -> dict:
        out: dict = {"schema_version": SCHEMA_VERSION, "command": self.command, "name": self.name}
        if self.system is not None:
            out["system"] = self.system.to_dict()
        if self.command == "simulate":
            out.update(
                sweep={"paths": list(self.sweep_paths), "values": list(self.sweep_values)},
                policies=list(self.policies),
                slots=self.slots,
                replications=self.replications,
                seed=self.seed,
                warmup=self.warmup,
                x_cap=self.x_cap,
                initial_queues=None if self.initial_queues is None else list(self.initial_queues),
                cost=None if self.cost is None else list(self.cost),
            )
        elif self.command == "certify":
            out["seed"] = self.seed
            if self.draining is not None:
                out["draining"] = self.draining
            if self.average is not None:
                out["average"] = self.average
        else:
            out["policy"] = self.policy
            if self.cost_sweep_user is not None:
                out["cost_sweep"] = {"user": self.cost_sweep_user, "values": list(self.cost_sweep_values)}
        return out


def load_config(source: str) -> ExperimentConfig:
    """Parse a config file, falling back to a bundled preset of that name."""
    path = Path(source)
    if path.is_file():
        text = path.read_text()
    else:
        preset = resources.files("relayharq.presets") / f"{source.removesuffix('.json')}.json"
        if not preset.is_file():
            raise ConfigError(f"no config file or preset named {source!r}")
        text = preset.read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from None
    return ExperimentConfig.from_dict(data)


def _fmt(value) -> str:
    return repr(float(value)) if isinstance(value, float) else str(value)


def simulate(cfg: ExperimentConfig, jobs: int = 1) -> tuple[str, dict]:
    """Run the sweep; returns the CSV text and the JSON summary."""
    specs = []
    for value in cfg.sweep_values:
        system = with_parameter(cfg.system, cfg.sweep_paths, value)
        for policy in cfg.policies:
            specs.append(
                (value, SimRun(system, policy, cfg.slots, 0, cfg.x_cap, cfg.initial_queues, cfg.cost, cfg.warmup))
            )
    summaries = run_many([s for _, s in specs], cfg.replications, cfg.seed, jobs)
    buf = io.StringIO()
    buf.write(f"# relayharq simulate schema {SCHEMA_VERSION}: {','.join(SIMULATE_COLUMNS)}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SIMULATE_COLUMNS)
    points = []
    for (value, spec), summary in zip(specs, summaries):
        for metrics, seed in zip(summary.runs, summary.seeds):
            writer.writerow(
                [_fmt(value), spec.policy.name, _fmt(metrics.avg_cost), _fmt(metrics.throughput),
                 metrics.decoded, metrics.slots, metrics.dropped, seed]
            )  # fmt: skip
        point = {"grid_value": value, "policy": spec.policy.name}
        for metric, key in (("avg_cost", "avg_cost"), ("throughput", "throughput"), ("decoded", "D"), ("dropped", "dropped")):
            est = summary.estimate(metric)
            point[key] = {"mean": est.mean, "std": est.std, "ci95": est.ci95}
        points.append(point)
    summary_doc = {
        "schema_version": SCHEMA_VERSION,
        "name": cfg.name,
        "sweep_paths": list(cfg.sweep_paths),
        "slots": cfg.slots,
        "replications": cfg.replications,
        "seed": cfg.seed,
        "points": points,
    }
    return buf.getvalue(), summary_doc


def certify_report(cfg: ExperimentConfig, jobs: int = 1) -> dict:
    out = {"schema_version": SCHEMA_VERSION, "name": cfg.name, "seed": cfg.seed}
    if cfg.draining is not None:
        opts = dict(cfg.draining)
        opts.setdefault("seed", cfg.seed)
        for key in ("policy", "wrong_policy"):
            if key in opts:
                opts[key] = PolicyKind.parse(opts[key])
        out["draining"] = certify.certify_draining(**opts).to_dict()
    if cfg.average is not None:
        opts = dict(cfg.average)
        opts.setdefault("seed", cfg.seed)
        if "baselines" in opts:
            opts["baselines"] = tuple(PolicyKind.parse(p) for p in opts["baselines"])
        opts.setdefault("jobs", jobs)
        if "load" in opts:
            opts["load"] = tuple(opts["load"])
        out["average"] = certify.certify_average(**opts).to_dict()
    parts = [v for k, v in out.items() if k in ("draining", "average")]
    out["passed"] = all(p["passed"] for p in parts)
    out["warnings"] = [w for p in parts for w in p["warnings"]]
    return out


def indices(cfg: ExperimentConfig) -> tuple[str, str | None]:
    """Index table CSV and, when configured, the cost-scale sweep CSV."""
    table = index_table_csv(index_table(cfg.policy, cfg.system))
    if cfg.cost_sweep_user is None:
        return table, None
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_COLUMNS)
    i = cfg.cost_sweep_user
    for scale in cfg.cost_sweep_values:
        rates = list(cfg.system.cost_rates)
        rates[i] = tuple(scale * c for c in rates[i])
        rows = index_table(cfg.policy, cfg.system.replace(cost_rates=tuple(rates)))
        for k, row in enumerate(rows):
            writer.writerow([_fmt(scale), k, row.user + 1, row.retx, row.relay_rank, _fmt(row.index)])
    return table, buf.getvalue()


def _write(out_dir: Path, name: str, text: str) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / name
    path.write_text(text)
    return path


def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="relayharq", description="Relay-assisted HARQ scheduling experiments.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("config", help="JSON config path or bundled preset name")
    parser.add_argument("--out", default=None, help="output directory (env RELAYHARQ_OUT, default .)")
    parser.add_argument("--seed", type=int, default=None, help="master seed override (env RELAYHARQ_SEED)")
    parser.add_argument("--jobs", type=int, default=1, help="parallel simulation processes")
    args = parser.parse_args(argv)

    out_dir = Path(args.out or os.environ.get("RELAYHARQ_OUT") or ".")
    seed = args.seed
    if seed is None and os.environ.get("RELAYHARQ_SEED"):
        seed = int(os.environ["RELAYHARQ_SEED"])
    try:
        cfg = load_config(args.config)
        _require(cfg.command == args.command, f"config is for {cfg.command!r}, not {args.command!r}")
        if seed is not None:
            cfg = dataclasses.replace(cfg, seed=seed)
        _require(args.jobs >= 1, "--jobs must be at least 1")
        if cfg.command == "simulate":
            text, summary = simulate(cfg, args.jobs)
            _write(out_dir, f"{cfg.name}.csv", text)
            _write(out_dir, f"{cfg.name}.json", json.dumps(summary, indent=2) + "\n")
        elif cfg.command == "certify":
            report = certify_report(cfg, args.jobs)
            for warning in report["warnings"]:
                print(f"warning: {warning}", file=sys.stderr)
            _write(out_dir, f"{cfg.name}.json", json.dumps(report, indent=2) + "\n")
            print("certification " + ("passed" if report["passed"] else "FAILED"))
        else:
            table, sweep = indices(cfg)
            _write(out_dir, f"{cfg.name}.csv", table)
            if sweep is not None:
                _write(out_dir, f"{cfg.name}_sweep.csv", sweep)
    except StateSpaceTooLarge as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, TypeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
