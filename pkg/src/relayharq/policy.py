"""Scheduling policies: priority-index rules and simple baselines.

All index values are computed once per configuration because the scheduler
only knows mean channel parameters. A decision is then a table lookup per
user plus an argmax; ties go to the lowest user index.
"""

from __future__ import annotations

import csv
import enum
import io
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np

from .channel import DecodeModel
from .klimov import (
    TIE_TOL,
    build_rdck,
    build_rlpak,
    klimov_ordering,
    ratio_ordering,
    service_times,
)
from .model import (
    BS,
    IDLE,
    BaseStationState,
    ConfigError,
    ContractViolation,
    RelayState,
    SchedulingDecision,
    SystemConfig,
)


class PolicyKind(enum.IntEnum):
    RLPA_INDEX = 0
    NO_RELAY_INDEX = 1
    RDC_INDEX = 2
    ROUND_ROBIN = 3
    LONGEST_QUEUE = 4

    @classmethod
    def parse(cls, name) -> "PolicyKind":
        if isinstance(name, cls):
            return name
        try:
            return cls[str(name).upper()]
        except KeyError:
            raise ConfigError(f"unknown policy {name!r}") from None


def best_ranks(config: SystemConfig, model: DecodeModel, relays: Sequence[RelayState]) -> list:
    """Rank of the best relay holding each user's HoL packet (0 when none)."""
    ranks = [0] * config.num_users
    for a, relay in enumerate(relays):
        for i, flag in enumerate(relay.decoded):
            if flag:
                ranks[i] = max(ranks[i], model.ranking.rank_of[i][a])
    return ranks


def _label_table(config: SystemConfig, values: dict, fill=np.nan) -> np.ndarray:
    width = max(config.retx_limits) + 1
    table = np.full((config.num_users, width, config.num_relays + 1), fill)
    for q, v in values.items():
        table[q.user, q.retx, q.rank] = v
    return table


def rlpa_service_times(config: SystemConfig, model: DecodeModel) -> np.ndarray:
    """``T[i, r, l]`` for every arrivals-problem class."""
    inst = build_rlpak(config, model)
    T = service_times(inst)
    return _label_table(config, dict(zip(inst.labels, T)))


def rlpa_index(
    i: int,
    r: int,
    relay_flags: Sequence[bool],
    config: SystemConfig,
    model: DecodeModel,
    T: np.ndarray | None = None,
) -> tuple[float, int]:
    """Best index of user ``i``'s HoL packet over the transmitters that hold it.

    Each candidate (the base station, or a relay with the packet) is scored
    by ``c_{i,r} / T`` for the class the packet would be served from. A relay
    displaces the current best only with a strictly higher index, or an equal
    index and a strictly better channel to the user; otherwise the base
    station wins, then the lowest relay index.

    Returns:
        ``(index, transmitter)`` with ``BS`` = -1.
    """
    if T is None:
        T = rlpa_service_times(config, model)
    cost = config.cost_rates[i][r]
    best_value = cost / T[i, r, 0]
    best_tx = BS

    def eta(tx):
        return config.bs_channel[i] if tx == BS else config.relay_channel[tx][i]

    for a, flag in enumerate(relay_flags):
        if not flag:
            continue
        l = model.ranking.rank_of[i][a]
        value = cost / T[i, r, l]
        tx = model.label_transmitter(i, l)
        tol = TIE_TOL * max(1.0, abs(best_value))
        if value > best_value + tol or (abs(value - best_value) <= tol and eta(tx) < eta(best_tx)):
            best_value, best_tx = value, tx
    return best_value, best_tx


@dataclass(frozen=True)
class IndexRow:
    user: int
    retx: int
    relay_rank: int
    transmitter: int
    T: float
    cost_rate: float
    index: float


@dataclass(frozen=True)
class DrainRow:
    user: int
    retx: int
    stratum: int
    relay_rank: int
    transmitter: int
    cost_rate: float
    index: float
    position: int


class Scheduler:
    """Precomputed tables for one policy on one configuration.

    Args:
        kind: which rule to apply.
        config: the problem instance.
        model: decode model; built from ``config`` when omitted.
        initial_queues, cost_fns: the draining backlog and per-user cost
            functions, required for ``RDC_INDEX`` only.
    """

    def __init__(
        self,
        kind: PolicyKind,
        config: SystemConfig,
        model: DecodeModel | None = None,
        initial_queues: Sequence[int] | None = None,
        cost_fns: Sequence[Callable[[int], float]] | None = None,
    ):
        self.kind = PolicyKind.parse(kind)
        self.config = config
        self.model = model or DecodeModel(config)
        m = config.num_relays
        self.transmitters = np.array(
            [[self.model.label_transmitter(i, l) for l in range(m + 1)] for i in range(config.num_users)],
            dtype=np.int64,
        )
        self.T = rlpa_service_times(config, self.model)
        costs = _label_table(config, {}, fill=0.0)
        for i, row in enumerate(config.cost_rates):
            costs[i, : len(row), :] = np.asarray(row)[:, None]
        with np.errstate(invalid="ignore"):
            self.indices = np.nan_to_num(costs / self.T, nan=-np.inf)
        no_relay = config.without_relays()
        T0 = rlpa_service_times(no_relay, DecodeModel(no_relay))[:, :, 0]
        with np.errstate(invalid="ignore"):
            self.no_relay_indices = np.nan_to_num(costs[:, :, 0] / T0, nan=-np.inf)
        self.no_relay_T = T0
        self.drain_positions = np.zeros((config.num_users, 1, 1, m + 1), dtype=np.int64)
        self.drain_instance = None
        self.drain_ordering = None
        if self.kind == PolicyKind.RDC_INDEX:
            if any(lam > 0 for lam in config.arrival_rates):
                raise ConfigError("RDC_INDEX requires zero arrival rates")
            if initial_queues is None or cost_fns is None:
                raise ConfigError("RDC_INDEX needs initial_queues and cost_fns")
            self._build_drain(initial_queues, cost_fns)

    def _build_drain(self, initial_queues, cost_fns):
        cfg = self.config
        inst = build_rdck(cfg, initial_queues, cost_fns, self.model)
        order = klimov_ordering(inst)
        width = max(cfg.retx_limits) + 1
        pos = np.full(
            (cfg.num_users, width, max(initial_queues) + 1, cfg.num_relays + 1),
            np.iinfo(np.int64).max,
            dtype=np.int64,
        )
        for k, q in enumerate(order.labels):
            pos[q.user, q.retx, q.stratum, q.rank] = k
        self.drain_positions = pos
        self.drain_instance = inst
        self.drain_ordering = order

    def decide(
        self, bs: BaseStationState, relays: Sequence[RelayState], slot: int = 0
    ) -> SchedulingDecision:
        """Pick ``(user, transmitter)`` for the slot; ``slot`` only drives round robin."""
        x, r = bs.queue_lengths, bs.hol_retx
        if not any(x):
            return IDLE
        ranks = best_ranks(self.config, self.model, relays)
        kind = self.kind
        n = self.config.num_users
        chosen = None
        if kind == PolicyKind.ROUND_ROBIN:
            start = slot % n
            chosen = next(j % n for j in range(start, start + n) if x[j % n] > 0)
        else:
            best = None
            for i in range(n):
                if x[i] == 0:
                    continue
                if kind == PolicyKind.RLPA_INDEX:
                    score = self.indices[i, r[i], ranks[i]]
                elif kind == PolicyKind.NO_RELAY_INDEX:
                    score = self.no_relay_indices[i, r[i]]
                elif kind == PolicyKind.RDC_INDEX:
                    if x[i] >= self.drain_positions.shape[2]:
                        raise ContractViolation("backlog exceeds the draining table")
                    score = -self.drain_positions[i, r[i], x[i], ranks[i]]
                else:
                    score = x[i]
                if best is None or score > best:
                    best, chosen = score, i
        if kind == PolicyKind.NO_RELAY_INDEX:
            return SchedulingDecision(chosen, BS)
        return SchedulingDecision(chosen, int(self.transmitters[chosen, ranks[chosen]]))

    def __call__(self, bs, relays, slot=0):
        return self.decide(bs, relays, slot)


_SCHEDULER_CACHE: dict = {}


def decide(
    kind: PolicyKind,
    bs: BaseStationState,
    relays: Sequence[RelayState],
    config: SystemConfig,
    model: DecodeModel | None = None,
    scheduler: Scheduler | None = None,
    slot: int = 0,
) -> SchedulingDecision:
    """Functional front end to :class:`Scheduler` for the stationary policies."""
    if scheduler is None:
        key = (PolicyKind.parse(kind), config)
        scheduler = _SCHEDULER_CACHE.get(key)
        if scheduler is None:
            scheduler = _SCHEDULER_CACHE[key] = Scheduler(kind, config, model)
    return scheduler.decide(bs, relays, slot)


def index_table(kind: PolicyKind, config: SystemConfig, model: DecodeModel | None = None) -> list:
    """Full ``(user, retx, rank)`` priority table, highest index first.

    For ``RLPA_INDEX`` the order is checked against the Klimov recursion on the
    transformed instance; ``NO_RELAY_INDEX`` lists only the base-station rows.
    """
    kind = PolicyKind.parse(kind)
    model = model or DecodeModel(config)
    if kind == PolicyKind.NO_RELAY_INDEX:
        config = config.without_relays()
        model = DecodeModel(config)
    elif kind != PolicyKind.RLPA_INDEX:
        raise ConfigError(f"{kind.name} has no static index table")
    inst = build_rlpak(config, model)
    ranked = ratio_ordering(inst)
    if kind == PolicyKind.RLPA_INDEX and klimov_ordering(inst).labels != ranked.labels:
        raise AssertionError("index order disagrees with the Klimov recursion")
    T = dict(zip(inst.labels, service_times(inst)))
    return [
        IndexRow(
            q.user,
            q.retx,
            q.rank,
            model.label_transmitter(q.user, q.rank),
            float(T[q]),
            float(config.cost_rates[q.user][q.retx]),
            float(value),
        )
        for q, value in zip(ranked.labels, ranked.indices)
    ]


def drain_table(scheduler: Scheduler) -> list:
    """Priority rows of a draining scheduler, highest priority first."""
    if scheduler.drain_ordering is None:
        raise ConfigError("scheduler was not built for RDC_INDEX")
    inst, order = scheduler.drain_instance, scheduler.drain_ordering
    rows = []
    for k, (q, value) in enumerate(zip(order.labels, order.indices)):
        rows.append(
            DrainRow(
                q.user,
                q.retx,
                q.stratum,
                q.rank,
                scheduler.model.label_transmitter(q.user, q.rank),
                float(inst.holding_costs[inst.index[q]]),
                float(value),
                k,
            )
        )
    return rows


INDEX_COLUMNS = ["user", "retx", "relay_rank", "transmitter", "T", "cost_rate", "index"]


def index_table_csv(rows: Sequence[IndexRow]) -> str:
    """CSV text with users and relays numbered from 1 and ``BS`` as a transmitter name."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(INDEX_COLUMNS)
    for row in rows:
        d = asdict(row)
        writer.writerow(
            [
                d["user"] + 1,
                d["retx"],
                d["relay_rank"],
                "BS" if d["transmitter"] == BS else d["transmitter"] + 1,
                repr(d["T"]),
                repr(d["cost_rate"]),
                repr(d["index"]),
            ]
        )
    return buf.getvalue()

