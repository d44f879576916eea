"""Decode-failure probabilities and slot-outcome sampling.

Every link uses the same truncated geometric family: a transmission at attempt
count ``r`` fails with probability ``eta * decay**r`` for ``r < r_max`` and
never fails at ``r_max``. Relay reception depends only on the receiving relay's
link from the base station, whichever node transmits.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import (
    BS,
    BaseStationState,
    ContractViolation,
    RelayState,
    SchedulingDecision,
    SlotOutcome,
    SystemConfig,
)


@dataclass(frozen=True)
class RelayRanking:
    """Per-user relay order, worst channel first.

    ``order[i][l - 1]`` is the relay of rank ``l`` for user ``i`` and
    ``rank_of[i][a]`` is the rank of relay ``a``. Rank 0 stands for "no relay".
    """

    order: tuple
    rank_of: tuple

    def relay(self, user: int, rank: int) -> int:
        if rank == 0:
            return BS
        return self.order[user][rank - 1]


def rank_relays(config: SystemConfig) -> RelayRanking:
    """Sort relays per user by ascending channel quality (descending failure scale).

    Among equally good relays the lower index gets the higher rank, so it is
    the one preferred as a transmitter.
    """
    order, rank_of = [], []
    for i in range(config.num_users):
        relays = sorted(range(config.num_relays), key=lambda a: (-config.relay_channel[a][i], -a))
        order.append(tuple(relays))
        ranks = [0] * config.num_relays
        for l, a in enumerate(relays, start=1):
            ranks[a] = l
        rank_of.append(tuple(ranks))
    return RelayRanking(tuple(order), tuple(rank_of))


def truncated_geometric(eta: float, decay: float, r: int, r_max: int) -> float:
    return 0.0 if r >= r_max else eta * decay**r


class DecodeModel:
    """Failure probabilities for every (transmitter, receiver, attempt) triple."""

    def __init__(self, config: SystemConfig):
        self.config = config
        self.ranking = rank_relays(config)

    def _check_r(self, i: int, r: int) -> None:
        if not 0 <= r <= self.config.retx_limits[i]:
            raise ContractViolation(f"attempt count {r} out of range for user {i}")

    def _check_rank(self, l: int) -> None:
        if not 1 <= l <= self.config.num_relays:
            raise ContractViolation(f"relay rank {l} out of range")

    def _fail(self, eta: float, i: int, r: int) -> float:
        return truncated_geometric(eta, self.config.decode_decay, r, self.config.retx_limits[i])

    def g_user_from_bs(self, i: int, r: int) -> float:
        self._check_r(i, r)
        return self._fail(self.config.bs_channel[i], i, r)

    def g_user_from_relay(self, i: int, l: int, r: int) -> float:
        self._check_rank(l)
        self._check_r(i, r)
        a = self.ranking.relay(i, l)
        return self._fail(self.config.relay_channel[a][i], i, r)

    def g_relay_decode(self, i: int, l: int, k: int, r: int) -> float:
        """Failure of relay rank ``l`` to decode user ``i``'s packet sent by rank ``k`` (0 = BS)."""
        self._check_rank(l)
        if k == l:
            raise ContractViolation("a relay does not receive its own transmission")
        if k:
            self._check_rank(k)
        self._check_r(i, r)
        a = self.ranking.relay(i, l)
        return self._fail(self.config.bs_relay[a], i, r)

    def g_user(self, i: int, transmitter: int, r: int) -> float:
        if transmitter == BS:
            return self.g_user_from_bs(i, r)
        return self.g_user_from_relay(i, self.ranking.rank_of[i][transmitter], r)

    def g_relay(self, i: int, relay: int, transmitter: int, r: int) -> float:
        l = self.ranking.rank_of[i][relay]
        k = 0 if transmitter == BS else self.ranking.rank_of[i][transmitter]
        return self.g_relay_decode(i, l, k, r)

    def relay_helps(self, i: int, relay: int) -> bool:
        """A relay only beats the base station with a strictly better channel."""
        return self.config.relay_channel[relay][i] < self.config.bs_channel[i]

    def label_transmitter(self, i: int, l: int) -> int:
        """Transmitter used once the best relay holding the packet has rank ``l``."""
        if l == 0:
            return BS
        a = self.ranking.relay(i, l)
        return a if self.relay_helps(i, a) else BS

    def g_label(self, i: int, l: int, r: int) -> float:
        return self.g_user(i, self.label_transmitter(i, l), r)

    def failure_tables(self) -> tuple[np.ndarray, np.ndarray]:
        """Dense tables for the simulation kernel.

        Returns:
            ``g_tx[i, t + 1, r]`` user failure when transmitter ``t`` sends
            (index 0 is the base station) and ``g_rx[i, a, t + 1, r]`` failure
            of relay ``a`` hearing transmitter ``t``.
        """
        cfg = self.config
        n, m = cfg.num_users, cfg.num_relays
        width = max(cfg.retx_limits) + 1
        g_tx = np.zeros((n, m + 1, width))
        g_rx = np.ones((n, max(m, 1), m + 1, width))
        for i in range(n):
            for r in range(cfg.retx_limits[i] + 1):
                g_tx[i, 0, r] = self.g_user_from_bs(i, r)
                for a in range(m):
                    g_tx[i, a + 1, r] = self.g_user(i, a, r)
                    for t in [BS, *range(m)]:
                        if t != a:
                            g_rx[i, a, t + 1, r] = self.g_relay(i, a, t, r)
        return g_tx, g_rx


def outcome_from_draws(
    decision: SchedulingDecision,
    bs: BaseStationState,
    relays: Sequence[RelayState],
    model: DecodeModel,
    u_user: float,
    u_relays: Sequence[float],
    arrivals: Sequence[int],
) -> SlotOutcome:
    """Resolve a slot from uniform draws; a link fails when its draw is below ``g``."""
    if decision.user is None:
        return SlotOutcome(False, frozenset(), tuple(arrivals))
    i, t = decision.user, decision.transmitter
    r = bs.hol_retx[i]
    if u_user >= model.g_user(i, t, r):
        return SlotOutcome(True, frozenset(), tuple(arrivals))
    decodes = frozenset(
        a
        for a, relay in enumerate(relays)
        if a != t and not relay.decoded[i] and u_relays[a] >= model.g_relay(i, a, t, r)
    )
    return SlotOutcome(False, decodes, tuple(arrivals))


def sample_outcome(
    rng: np.random.Generator,
    decision: SchedulingDecision,
    bs: BaseStationState,
    relays: Sequence[RelayState],
    model: DecodeModel,
) -> SlotOutcome:
    cfg = model.config
    u = rng.random(1 + cfg.num_relays)
    arrivals = rng.poisson(cfg.arrival_rates)
    return outcome_from_draws(decision, bs, relays, model, u[0], u[1:], arrivals)
