"""Klimov multiclass-queue transformations and the priority recursion.

A packet's class is ``(user, retx, rank)``: its attempt count and the rank of
the best relay holding it. The draining variant adds the queue-length stratum
``x`` and treats each user's whole backlog as one job walking down the strata.

Labels are stored so that every transition goes to a strictly later label,
which lets all service-time systems be solved by back substitution.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Iterable, NamedTuple, Sequence

import numpy as np

from .channel import DecodeModel, RelayRanking, rank_relays
from .model import ConfigError, SystemConfig

__all__ = [
    "KlimovQueueLabel",
    "KlimovInstance",
    "PriorityOrdering",
    "OrderingPropertyReport",
    "RelayRanking",
    "rank_relays",
    "build_rlpak",
    "build_rdck",
    "expected_service_time",
    "klimov_ordering",
    "ratio_ordering",
    "verify_lemma1",
    "theorem2_order_violations",
]

TIE_TOL = 1e-12


class KlimovQueueLabel(NamedTuple):
    user: int
    retx: int
    rank: int
    stratum: int = 0  # queue length x for draining instances, 0 otherwise

    def priority_key(self) -> tuple:
        """Smaller key wins a tie: low user index, then later attempts and better relays."""
        return (self.user, -self.retx, -self.rank, self.stratum)


@dataclass(frozen=True)
class KlimovInstance:
    kind: str
    labels: tuple
    transitions: np.ndarray
    holding_costs: np.ndarray
    arrival_probs: np.ndarray
    service_times: np.ndarray
    index: dict = field(repr=False, compare=False)

    @property
    def size(self) -> int:
        return len(self.labels)

    @property
    def departure_probs(self) -> np.ndarray:
        return 1.0 - self.transitions.sum(axis=1)

    def label_set(self) -> frozenset:
        return frozenset(self.labels)

    def mask(self, subset: Iterable[KlimovQueueLabel]) -> np.ndarray:
        m = np.zeros(self.size, dtype=bool)
        for q in subset:
            m[self.index[q]] = True
        return m

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "labels": [list(q) for q in self.labels],
            "transitions": self.transitions.tolist(),
            "holding_costs": self.holding_costs.tolist(),
            "arrival_probs": self.arrival_probs.tolist(),
            "service_times": self.service_times.tolist(),
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, data: dict) -> "KlimovInstance":
        labels = tuple(KlimovQueueLabel(*q) for q in data["labels"])
        return _make_instance(
            data["kind"],
            labels,
            np.array(data["transitions"], dtype=float).reshape(len(labels), len(labels)),
            np.array(data["holding_costs"], dtype=float),
            np.array(data["arrival_probs"], dtype=float),
        )


def _make_instance(kind, labels, transitions, costs, arrivals) -> KlimovInstance:
    if np.any(np.tril(transitions) != 0.0):
        raise ValueError("transitions must only move to later labels")
    return KlimovInstance(
        kind=kind,
        labels=tuple(labels),
        transitions=transitions,
        holding_costs=costs,
        arrival_probs=arrivals,
        service_times=np.ones(len(labels)),
        index={q: k for k, q in enumerate(labels)},
    )


def _stage_row(model: DecodeModel, i: int, r: int, l: int) -> tuple[float, dict]:
    """User failure at label (i, r, l) and the split of failures over next ranks."""
    m = model.config.num_relays
    g_user = model.g_label(i, l, r)
    t = model.label_transmitter(i, l)
    k = 0 if t < 0 else model.ranking.rank_of[i][t]
    miss = {n: model.g_relay_decode(i, n, k, r) for n in range(l + 1, m + 1)}
    split = {}
    for n in range(l, m + 1):
        p = g_user if n == l else g_user * (1.0 - miss[n])
        for above in range(n + 1, m + 1):
            p *= miss[above]
        split[n] = p
    return g_user, split


def build_rlpak(config: SystemConfig, model: DecodeModel | None = None) -> KlimovInstance:
    """Klimov instance for the linear-cost problem with Poisson arrivals."""
    model = model or DecodeModel(config)
    m = config.num_relays
    labels = [
        KlimovQueueLabel(i, r, l)
        for i in range(config.num_users)
        for r in range(config.retx_limits[i] + 1)
        for l in range(m + 1)
    ]
    index = {q: k for k, q in enumerate(labels)}
    P = np.zeros((len(labels), len(labels)))
    costs = np.array([config.cost_rates[q.user][q.retx] for q in labels])
    arrivals = np.zeros(len(labels))
    lam = config.total_arrival_rate
    for q in labels:
        i, r, l, _ = q
        if r == 0 and l == 0 and lam > 0:
            arrivals[index[q]] = config.arrival_rates[i] / lam
        if r == config.retx_limits[i]:
            continue
        _, split = _stage_row(model, i, r, l)
        for n, p in split.items():
            P[index[q], index[KlimovQueueLabel(i, r + 1, n)]] = p
    return _make_instance("RLPAK", labels, P, costs, arrivals)


def build_rdck(
    config: SystemConfig,
    initial_queues: Sequence[int],
    cost_fns: Sequence[Callable[[int], float]],
    model: DecodeModel | None = None,
) -> KlimovInstance:
    """Klimov instance for the draining problem.

    A user's backlog is a single job; its class at queue length ``x`` costs
    ``U_i(x)`` per slot and a decode moves it to ``(i, 0, x - 1, 0)``.
    """
    if any(lam != 0 for lam in config.arrival_rates):
        raise ConfigError("the draining transformation requires zero arrival rates")
    if len(initial_queues) != config.num_users or any(x < 0 for x in initial_queues):
        raise ConfigError("initial_queues must give a nonnegative backlog per user")
    model = model or DecodeModel(config)
    m = config.num_relays
    labels = [
        KlimovQueueLabel(i, r, l, x)
        for i in range(config.num_users)
        for x in range(initial_queues[i], 0, -1)
        for r in range(config.retx_limits[i] + 1)
        for l in range(m + 1)
    ]
    index = {q: k for k, q in enumerate(labels)}
    P = np.zeros((len(labels), len(labels)))
    costs = np.array([float(cost_fns[q.user](q.stratum)) for q in labels])
    for q in labels:
        i, r, l, x = q
        if r == config.retx_limits[i]:
            g_user, split = 0.0, {}
        else:
            g_user, split = _stage_row(model, i, r, l)
        for n, p in split.items():
            P[index[q], index[KlimovQueueLabel(i, r + 1, n, x)]] = p
        if x > 1:
            P[index[q], index[KlimovQueueLabel(i, 0, 0, x - 1)]] += 1.0 - g_user
    return _make_instance("RDCK", labels, P, costs, np.zeros(len(labels)))


def _solve_within(instance: KlimovInstance, mask: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Back-substitute ``v_q = rhs_q + sum_{q' in A} p_{q q'} v_{q'}`` for ``q`` in ``A``."""
    P = instance.transitions
    v = np.zeros(instance.size)
    members = np.flatnonzero(mask)
    for q in members[::-1]:
        v[q] = rhs[q] + P[q, members] @ v[members]
    v[~mask] = np.nan
    return v


def service_times(instance: KlimovInstance, mask: np.ndarray | None = None) -> np.ndarray:
    """Array form of :func:`expected_service_time` (NaN outside the subset)."""
    if mask is None:
        mask = np.ones(instance.size, dtype=bool)
    return _solve_within(instance, mask, instance.service_times)


def expected_service_time(
    instance: KlimovInstance, subset: Iterable[KlimovQueueLabel] | None = None
) -> dict:
    """Expected slots a job starting in each class of ``subset`` spends inside it."""
    subset = instance.labels if subset is None else list(subset)
    if not subset:
        raise ValueError("subset must be nonempty")
    T = service_times(instance, instance.mask(subset))
    return {q: float(T[instance.index[q]]) for q in subset}


def _exit_cost(instance: KlimovInstance, mask: np.ndarray) -> np.ndarray:
    """Expected holding cost of the class a job is in when it first leaves ``A``."""
    c = instance.holding_costs
    outside = np.where(mask, 0.0, c)
    return _solve_within(instance, mask, instance.transitions @ outside)


@dataclass(frozen=True)
class PriorityOrdering:
    """Labels from highest to lowest priority with their index values."""

    labels: tuple
    indices: tuple

    def position(self) -> dict:
        return {q: k for k, q in enumerate(self.labels)}

    def top_sets(self) -> list:
        """``A_k``: the ``k`` highest-priority labels, for ``k = 1..K``."""
        return [frozenset(self.labels[:k]) for k in range(1, len(self.labels) + 1)]

    def to_dict(self) -> dict:
        return {
            "labels": [list(q) for q in self.labels],
            "indices": list(self.indices),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PriorityOrdering":
        return cls(
            tuple(KlimovQueueLabel(*q) for q in data["labels"]),
            tuple(float(v) for v in data["indices"]),
        )


def _pick(instance: KlimovInstance, candidates: np.ndarray, score: np.ndarray, lowest: bool) -> int:
    vals = score[candidates]
    best = vals.min() if lowest else vals.max()
    tol = TIE_TOL * max(1.0, abs(best))
    tied = candidates[np.abs(vals - best) <= tol]
    keys = [instance.labels[q].priority_key() for q in tied]
    # the lowest-priority pick among ties is the one with the largest tie key
    pos = max(range(len(tied)), key=keys.__getitem__) if lowest else min(
        range(len(tied)), key=keys.__getitem__
    )
    return int(tied[pos])


def klimov_ordering(instance: KlimovInstance) -> PriorityOrdering:
    """Run the Klimov recursion from the full class set downward.

    At each step the class with the smallest ratio of expected cost-rate
    reduction to expected time spent in the remaining set ``A`` gets the
    lowest remaining priority and is removed. The reduction is ``c_q`` minus
    the expected cost rate of the class the job holds when it leaves ``A``;
    for the arrivals instance that exit is always a departure, so the ratio
    is ``c_q / T_q``.
    """
    K = instance.size
    mask = np.ones(K, dtype=bool)
    picked, values = [], []
    for _ in range(K):
        T = service_times(instance, mask)
        reduction = instance.holding_costs - _exit_cost(instance, mask)
        ratio = reduction / T
        q = _pick(instance, np.flatnonzero(mask), ratio, lowest=True)
        picked.append(q)
        values.append(float(ratio[q]))
        mask[q] = False
    picked.reverse()
    values.reverse()
    return PriorityOrdering(tuple(instance.labels[q] for q in picked), tuple(values))


def ratio_ordering(instance: KlimovInstance) -> PriorityOrdering:
    """Descending sort by ``c_q / T_q`` over the full class set."""
    ratio = instance.holding_costs / service_times(instance)
    remaining = np.arange(instance.size)
    order = []
    while remaining.size:
        q = _pick(instance, remaining, ratio, lowest=False)
        order.append(q)
        remaining = remaining[remaining != q]
    return PriorityOrdering(
        tuple(instance.labels[q] for q in order), tuple(float(ratio[q]) for q in order)
    )


def closed_form_service_time(model: DecodeModel, q: KlimovQueueLabel) -> float:
    """Service time if the class's current transmitter kept sending until the user decodes."""
    i, r, l, _ = q
    total, prod = 1.0, 1.0
    for s in range(r, model.config.retx_limits[i]):
        prod *= model.g_label(i, l, s)
        total += prod
    return total


@dataclass(frozen=True)
class ItemResult:
    passed: bool
    worst: float
    detail: dict = field(default_factory=dict)


@dataclass(frozen=True)
class OrderingPropertyReport:
    items: dict

    @property
    def passed(self) -> bool:
        return all(item.passed for item in self.items.values())

    def summary(self) -> str:
        return "; ".join(
            f"item {k}: {'pass' if v.passed else 'FAIL'} (worst {v.worst:.3g})"
            for k, v in sorted(self.items.items())
        )


def _later_stages(instance: KlimovInstance, q: KlimovQueueLabel):
    for p in instance.labels:
        if p.user == q.user and p.stratum == q.stratum and p.retx > q.retx and p.rank >= q.rank:
            yield p


def verify_lemma1(
    instance: KlimovInstance,
    ordering: PriorityOrdering,
    model: DecodeModel,
    tol: float = 1e-12,
) -> OrderingPropertyReport:
    """Numerically check the five structural properties of the Klimov sets.

    Item 1 counts missing later-stage classes, items 2 and 3 compare the
    restricted service times with the full-set ones and with the fixed-
    transmitter closed form, item 4 reports the largest service-time increase
    along a later stage and item 5 the ratio excess of each picked class over
    the set minimum.
    """
    T_full = service_times(instance)
    ratio_full = instance.holding_costs / T_full
    closed = np.array([closed_form_service_time(model, q) for q in instance.labels])
    missing, vs_full, vs_closed, worst4, worst5 = 0, 0.0, 0.0, 0.0, 0.0
    vs_full_by_rank = {0: 0.0, 1: 0.0}
    vs_closed_by_rank = {0: 0.0, 1: 0.0}
    for k, A in enumerate(ordering.top_sets()):
        mask = instance.mask(A)
        T = service_times(instance, mask)
        for q in A:
            iq = instance.index[q]
            for p in _later_stages(instance, q):
                if p not in A:
                    missing += 1
                else:
                    worst4 = max(worst4, T[instance.index[p]] - T[iq])
            bucket = min(q.rank, 1)
            d_full = abs(T[iq] - T_full[iq])
            d_closed = abs(T_full[iq] - closed[iq])
            vs_full_by_rank[bucket] = max(vs_full_by_rank[bucket], d_full)
            vs_closed_by_rank[bucket] = max(vs_closed_by_rank[bucket], d_closed)
        members = np.flatnonzero(mask)
        alpha = instance.index[ordering.labels[k]]
        worst5 = max(worst5, ratio_full[alpha] - ratio_full[members].min())
    items = {1: ItemResult(missing == 0, float(missing))}
    for item, bucket in ((2, 0), (3, 1)):
        vs_full, vs_closed = vs_full_by_rank[bucket], vs_closed_by_rank[bucket]
        worst = max(vs_full, vs_closed)
        items[item] = ItemResult(
            worst <= tol, worst, {"restricted_vs_full": vs_full, "full_vs_closed_form": vs_closed}
        )
    items[4] = ItemResult(worst4 <= tol, max(worst4, 0.0))
    items[5] = ItemResult(worst5 <= tol, max(worst5, 0.0))
    return OrderingPropertyReport(items)


def theorem2_order_violations(instance: KlimovInstance, ordering: PriorityOrdering) -> int:
    """Count pairs where a later stage of the same user and stratum ranks below an earlier one."""
    pos = ordering.position()
    return sum(
        1
        for q in instance.labels
        for p in _later_stages(instance, q)
        if pos[p] > pos[q]
    )
