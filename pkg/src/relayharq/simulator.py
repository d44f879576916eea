"""Slot-by-slot simulation of the relay-assisted downlink.

Each slot: charge the cost of the state at slot start, let the policy pick a
user and transmitter, resolve the transmission, then append arrivals. Random
numbers are drawn in blocks from a seeded :class:`numpy.random.Generator`
(``1 + M`` uniforms and ``N`` Poisson counts per slot), so a seed fixes the
trajectory and both engines replay it identically.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats as st

from . import _kernel
from .channel import DecodeModel, outcome_from_draws
from .model import (
    IDLE,
    BaseStationState,
    ConfigError,
    SlotOutcome,
    SystemConfig,
    apply_outcome,
    cost_table,
    empty_relays,
    instantaneous_cost_convex,
    instantaneous_cost_linear,
    named_cost_fns,
    validate_cost_fns,
)
from .policy import PolicyKind, Scheduler

BLOCK = 1 << 15


@dataclass(frozen=True)
class SimRun:
    """One simulation run.

    ``cost`` is None for the linear attempt-dependent cost or a list of
    per-user cost-function names (``"x"``, ``"x^2"``) for the queue-length
    cost. Runs without arrivals stop as soon as every queue is empty.
    """

    config: SystemConfig
    policy: PolicyKind
    horizon: int
    seed: int = 0
    x_cap: int | None = None
    initial_queues: tuple | None = None
    cost: tuple | None = None
    warmup: int = 0

    def __post_init__(self):
        object.__setattr__(self, "policy", PolicyKind.parse(self.policy))
        if self.horizon < 1:
            raise ConfigError("horizon must be at least one slot")
        if not 0 <= self.warmup < self.horizon:
            raise ConfigError("warmup must be shorter than the horizon")
        n = self.config.num_users
        if self.initial_queues is not None:
            object.__setattr__(self, "initial_queues", tuple(int(v) for v in self.initial_queues))
            if len(self.initial_queues) != n or min(self.initial_queues) < 0:
                raise ConfigError("initial_queues needs a nonnegative entry per user")
            if self.x_cap is not None and max(self.initial_queues) > self.x_cap:
                raise ConfigError("initial backlog exceeds x_cap")
        if self.cost is not None:
            object.__setattr__(self, "cost", tuple(self.cost))
            if len(self.cost) != n:
                raise ConfigError("cost needs one function name per user")
            if self.draining is False and self.x_cap is None:
                raise ConfigError("queue-length costs with arrivals need x_cap")
        if self.policy == PolicyKind.RDC_INDEX:
            if not self.draining:
                raise ConfigError("RDC_INDEX requires zero arrival rates")
            if self.initial_queues is None or self.cost is None:
                raise ConfigError("RDC_INDEX requires initial_queues and cost functions")

    @property
    def draining(self) -> bool:
        return self.config.total_arrival_rate == 0

    @property
    def start_queues(self) -> tuple:
        return self.initial_queues or (0,) * self.config.num_users

    def cost_fns(self):
        return None if self.cost is None else named_cost_fns(self.cost)

    def scheduler(self) -> Scheduler:
        return Scheduler(
            self.policy,
            self.config,
            initial_queues=self.start_queues,
            cost_fns=self.cost_fns(),
        )


@dataclass(frozen=True)
class SimMetrics:
    slots: int
    cumulative_cost: float
    decoded: int
    discarded: int
    truncated: int
    arrivals: int
    final_backlog: int
    drain_slot: int | None
    cost_per_user: tuple
    decoded_per_user: tuple
    discarded_per_user: tuple
    truncated_per_user: tuple
    decoded_total: int = field(default=0)

    @property
    def avg_cost(self) -> float:
        return self.cumulative_cost / self.slots if self.slots else 0.0

    @property
    def throughput(self) -> float:
        return self.decoded / self.slots if self.slots else 0.0

    @property
    def dropped(self) -> int:
        return self.discarded + self.truncated

    def as_dict(self) -> dict:
        d = asdict(self)
        d.update(avg_cost=self.avg_cost, throughput=self.throughput, dropped=self.dropped)
        return d


def _draws(rng: np.random.Generator, n: int, config: SystemConfig):
    u = rng.random((n, 1 + config.num_relays))
    arrivals = rng.poisson(config.arrival_rates, size=(n, config.num_users)).astype(np.int64)
    return u, arrivals


def _metrics(spec: SimRun, stats: np.ndarray, slots: int, x: Sequence[int], drained: bool):
    K = _kernel
    recorded = max(slots - spec.warmup, 0)
    return SimMetrics(
        slots=recorded,
        cumulative_cost=float(stats[K.COST].sum()),
        decoded=int(stats[K.DECODED].sum()),
        discarded=int(stats[K.DISCARDED].sum()),
        truncated=int(stats[K.TRUNCATED].sum()),
        arrivals=int(stats[K.ARRIVED].sum()),
        final_backlog=int(sum(x)),
        drain_slot=slots if drained else None,
        cost_per_user=tuple(float(v) for v in stats[K.COST]),
        decoded_per_user=tuple(int(v) for v in stats[K.DECODED]),
        discarded_per_user=tuple(int(v) for v in stats[K.DISCARDED]),
        truncated_per_user=tuple(int(v) for v in stats[K.TRUNCATED]),
        decoded_total=int(stats[K.DECODED_ALL].sum()),
    )


def run(spec: SimRun, engine: str = "compiled") -> SimMetrics:
    """Simulate ``spec.horizon`` slots (fewer if a draining run empties).

    Args:
        spec: the run description.
        engine: ``"compiled"`` for the numba loop or ``"python"`` for the
            reference loop built from the model, channel and policy
            functions. Both give identical metrics for the same seed.
    """
    if engine == "python":
        return _run_python(spec)
    if engine != "compiled":
        raise ValueError(f"unknown engine {engine!r}")
    cfg = spec.config
    sched = spec.scheduler()
    model = sched.model
    n, m = cfg.num_users, cfg.num_relays
    g_tx, g_rx = model.failure_tables()
    width = g_tx.shape[2]
    linear = np.zeros((n, width))
    for i, row in enumerate(cfg.cost_rates):
        linear[i, : len(row)] = row
    x_max = spec.x_cap if spec.x_cap is not None else max(spec.start_queues)
    if spec.cost is not None:
        fns = spec.cost_fns()
        validate_cost_fns(fns, max(x_max, 1))
        convex = cost_table(fns, max(x_max, 1))
    else:
        convex = np.zeros((n, 1))
    rank_of = np.array(model.ranking.rank_of, dtype=np.int64).reshape(n, m)

    x = np.array(spec.start_queues, dtype=np.int64)
    r = np.zeros(n, dtype=np.int64)
    flags = np.zeros((m, n), dtype=np.bool_)
    best = np.zeros(n, dtype=np.int64)
    stats = np.zeros((6, n))
    rng = np.random.default_rng(spec.seed)
    stop = spec.draining
    if stop and not x.any():
        return _metrics(spec, stats, 0, x, True)

    slots, drained = 0, False
    while slots < spec.horizon and not drained:
        u, arrivals = _draws(rng, min(BLOCK, spec.horizon - slots), cfg)
        done, drained = _kernel.run_block(
            x, r, flags, best, u, arrivals, stats,
            int(spec.policy), sched.indices, sched.no_relay_indices,
            sched.drain_positions, sched.transmitters, rank_of,
            linear, convex, spec.cost is not None,
            np.array(cfg.retx_limits, dtype=np.int64), g_tx, g_rx,
            -1 if spec.x_cap is None else spec.x_cap,
            slots, spec.warmup, stop,
        )  # fmt: skip
        slots += done
    return _metrics(spec, stats, slots, x, drained)


def _user_costs(bs: BaseStationState, cfg: SystemConfig, fns) -> list:
    out = []
    for i in range(cfg.num_users):
        alone = BaseStationState(
            tuple(v if j == i else 0 for j, v in enumerate(bs.queue_lengths)),
            tuple(v if j == i else 0 for j, v in enumerate(bs.hol_retx)),
        )
        if fns is None:
            out.append(instantaneous_cost_linear(alone, cfg))
        else:
            out.append(instantaneous_cost_convex(alone, fns))
    return out


def _run_python(spec: SimRun) -> SimMetrics:
    cfg = spec.config
    sched = spec.scheduler()
    model = sched.model
    n, m = cfg.num_users, cfg.num_relays
    fns = spec.cost_fns()
    K = _kernel
    stats = np.zeros((6, n))
    bs = BaseStationState.fresh(spec.start_queues)
    relays = empty_relays(cfg)
    rng = np.random.default_rng(spec.seed)
    if spec.draining and bs.all_empty:
        return _metrics(spec, stats, 0, bs.queue_lengths, True)

    slot, drained = 0, False
    while slot < spec.horizon and not drained:
        u, arrivals = _draws(rng, min(BLOCK, spec.horizon - slot), cfg)
        for k in range(u.shape[0]):
            record = slot >= spec.warmup
            if record:
                stats[K.COST] += _user_costs(bs, cfg, fns)
            decision = sched.decide(bs, relays, slot)
            admitted = list(arrivals[k])
            for i in range(n):
                stats[K.ARRIVED, i] += admitted[i]
            outcome = outcome_from_draws(decision, bs, relays, model, u[k, 0], u[k, 1:], [0] * n)
            if decision.user is not None:
                i = decision.user
                if outcome.user_decoded:
                    stats[K.DECODED_ALL, i] += 1
                    if record:
                        stats[K.DECODED, i] += 1
                elif bs.hol_retx[i] == cfg.retx_limits[i]:
                    stats[K.DISCARDED, i] += 1
            bs, relays = apply_outcome(bs, relays, decision, outcome, cfg)
            if spec.x_cap is not None:
                for i in range(n):
                    over = bs.queue_lengths[i] + admitted[i] - spec.x_cap
                    if over > 0:
                        stats[K.TRUNCATED, i] += over
                        admitted[i] -= over
            bs, relays = apply_outcome(bs, relays, IDLE, SlotOutcome(False, frozenset(), admitted), cfg)
            slot += 1
            if spec.draining and bs.all_empty:
                drained = True
                break
    return _metrics(spec, stats, slot, bs.queue_lengths, drained)


@dataclass(frozen=True)
class Estimate:
    mean: float
    std: float
    ci95: float  # half width

    @classmethod
    def of(cls, values: Sequence[float]) -> "Estimate":
        v = np.asarray(values, dtype=float)
        if v.size < 2:
            return cls(float(v.mean()), 0.0, 0.0)
        std = float(v.std(ddof=1))
        half = float(st.t.ppf(0.975, v.size - 1) * std / math.sqrt(v.size))
        return cls(float(v.mean()), std, half)


@dataclass(frozen=True)
class RunSummary:
    spec: SimRun
    runs: tuple
    seeds: tuple

    def estimate(self, metric: str) -> Estimate:
        return Estimate.of([getattr(mt, metric) for mt in self.runs])


def replication_seeds(master_seed: int, spec_index: int, replications: int) -> list:
    """Independent integer seeds derived from ``(master_seed, spec_index)``."""
    root = np.random.SeedSequence(master_seed, spawn_key=(spec_index,))
    return [int(child.generate_state(1, np.uint64)[0]) for child in root.spawn(replications)]


def _run_seeded(args):
    spec, seed = args
    return run(_with_seed(spec, seed))


def _with_seed(spec: SimRun, seed: int) -> SimRun:
    return SimRun(
        spec.config, spec.policy, spec.horizon, seed, spec.x_cap,
        spec.initial_queues, spec.cost, spec.warmup,
    )  # fmt: skip


def run_many(
    specs: Sequence[SimRun], replications: int, master_seed: int = 0, jobs: int = 1
) -> list:
    """Run every spec ``replications`` times with seeds spawned from ``master_seed``."""
    if replications < 1:
        raise ConfigError("replications must be at least 1")
    tasks = [
        (spec, seed)
        for s, spec in enumerate(specs)
        for seed in replication_seeds(master_seed, s, replications)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_seeded, tasks))
    else:
        results = [_run_seeded(t) for t in tasks]
    out = []
    for s, spec in enumerate(specs):
        chunk = results[s * replications : (s + 1) * replications]
        seeds = tuple(t[1] for t in tasks[s * replications : (s + 1) * replications])
        out.append(RunSummary(spec, tuple(chunk), seeds))
    return out
