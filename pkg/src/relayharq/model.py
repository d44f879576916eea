"""Core state types and deterministic state-update rules.

Users and relays are indexed from 0. A transmitter is either ``BS`` (-1) or a
relay index. Channel parameters ``eta`` are failure-probability scales: the
probability that a first transmission over the link is not decoded, so a
smaller value means a better channel.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

BS = -1


class ContractViolation(ValueError):
    """Raised when an operation is called with inputs that break its contract."""


class ConfigError(ValueError):
    """Raised for an invalid problem or experiment configuration."""


def _as_tuple(values, dtype=float):
    return tuple(dtype(v) for v in values)


@dataclass(frozen=True)
class SystemConfig:
    """Immutable problem instance.

    ``relay_channel[a][i]`` is the relay ``a`` -> user ``i`` failure scale and
    ``bs_relay[a]`` the base station -> relay ``a`` one.
    """

    num_users: int
    num_relays: int
    arrival_rates: tuple
    cost_rates: tuple
    retx_limits: tuple
    bs_channel: tuple
    relay_channel: tuple = ()
    bs_relay: tuple = ()
    decode_decay: float = 0.9

    def __post_init__(self):
        n, m = self.num_users, self.num_relays
        set_ = object.__setattr__
        set_(self, "arrival_rates", _as_tuple(self.arrival_rates))
        set_(self, "retx_limits", _as_tuple(self.retx_limits, int))
        set_(self, "bs_channel", _as_tuple(self.bs_channel))
        set_(self, "cost_rates", tuple(_as_tuple(row) for row in self.cost_rates))
        set_(self, "relay_channel", tuple(_as_tuple(row) for row in self.relay_channel))
        set_(self, "bs_relay", _as_tuple(self.bs_relay))

        if n < 1:
            raise ConfigError("num_users must be positive")
        if m < 0:
            raise ConfigError("num_relays must be nonnegative")
        for name in ("arrival_rates", "retx_limits", "bs_channel", "cost_rates"):
            if len(getattr(self, name)) != n:
                raise ConfigError(f"{name} must have one entry per user")
        if len(self.relay_channel) != m or any(len(row) != n for row in self.relay_channel):
            raise ConfigError("relay_channel must be a num_relays x num_users matrix")
        if len(self.bs_relay) != m:
            raise ConfigError("bs_relay must have one entry per relay")
        if not 0.0 < self.decode_decay < 1.0:
            raise ConfigError("decode_decay must lie in (0, 1)")
        if any(lam < 0 for lam in self.arrival_rates):
            raise ConfigError("arrival rates must be nonnegative")
        for i, row in enumerate(self.cost_rates):
            if len(row) != self.retx_limits[i] + 1:
                raise ConfigError(f"cost_rates[{i}] needs retx_limit + 1 entries")
            if any(c < 0 for c in row):
                raise ConfigError("cost rates must be nonnegative")
            if any(a > b for a, b in zip(row, row[1:])):
                raise ConfigError(f"cost_rates[{i}] must be nondecreasing in the attempt count")
        if any(r < 0 for r in self.retx_limits):
            raise ConfigError("retx limits must be nonnegative")
        etas = list(self.bs_channel) + list(self.bs_relay)
        etas += [e for row in self.relay_channel for e in row]
        if any(not 0.0 <= e <= 1.0 for e in etas):
            raise ConfigError("channel parameters must lie in [0, 1]")

    @property
    def total_arrival_rate(self) -> float:
        return sum(self.arrival_rates)

    def replace(self, **changes) -> "SystemConfig":
        fields = {
            "num_users": self.num_users,
            "num_relays": self.num_relays,
            "arrival_rates": self.arrival_rates,
            "cost_rates": self.cost_rates,
            "retx_limits": self.retx_limits,
            "bs_channel": self.bs_channel,
            "relay_channel": self.relay_channel,
            "bs_relay": self.bs_relay,
            "decode_decay": self.decode_decay,
        }
        fields.update(changes)
        return SystemConfig(**fields)

    def without_relays(self) -> "SystemConfig":
        return self.replace(num_relays=0, relay_channel=(), bs_relay=())

    def to_dict(self) -> dict:
        return {
            "num_users": self.num_users,
            "num_relays": self.num_relays,
            "arrival_rates": list(self.arrival_rates),
            "cost_rates": [list(row) for row in self.cost_rates],
            "retx_limits": list(self.retx_limits),
            "bs_channel": list(self.bs_channel),
            "relay_channel": [list(row) for row in self.relay_channel],
            "bs_relay": list(self.bs_relay),
            "decode_decay": self.decode_decay,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SystemConfig":
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None


@dataclass(frozen=True)
class BaseStationState:
    """Queue lengths and head-of-line attempt counts, one entry per user."""

    queue_lengths: tuple
    hol_retx: tuple

    def __post_init__(self):
        object.__setattr__(self, "queue_lengths", _as_tuple(self.queue_lengths, int))
        object.__setattr__(self, "hol_retx", _as_tuple(self.hol_retx, int))

    @classmethod
    def empty(cls, num_users: int) -> "BaseStationState":
        return cls((0,) * num_users, (0,) * num_users)

    @classmethod
    def fresh(cls, queues: Sequence[int]) -> "BaseStationState":
        return cls(tuple(queues), (0,) * len(queues))

    def validate(self, config: SystemConfig) -> None:
        for i, (x, r) in enumerate(zip(self.queue_lengths, self.hol_retx)):
            if x < 0:
                raise ContractViolation(f"negative queue length for user {i}")
            if not 0 <= r <= config.retx_limits[i]:
                raise ContractViolation(f"HoL attempt count out of range for user {i}")
            if x == 0 and r != 0:
                raise ContractViolation(f"empty queue of user {i} has a HoL attempt count")

    @property
    def all_empty(self) -> bool:
        return not any(self.queue_lengths)


@dataclass(frozen=True)
class RelayState:
    """Per-user flags: the relay holds user i's HoL packet that user i has not decoded."""

    decoded: tuple

    def __post_init__(self):
        object.__setattr__(self, "decoded", _as_tuple(self.decoded, bool))

    @classmethod
    def empty(cls, num_users: int) -> "RelayState":
        return cls((False,) * num_users)


def empty_relays(config: SystemConfig) -> tuple:
    return tuple(RelayState.empty(config.num_users) for _ in range(config.num_relays))


def validate_relays(relays: Sequence[RelayState], bs: BaseStationState) -> None:
    for a, relay in enumerate(relays):
        for i, flag in enumerate(relay.decoded):
            if flag and (bs.queue_lengths[i] == 0 or bs.hol_retx[i] < 1):
                raise ContractViolation(
                    f"relay {a} flags user {i} whose HoL packet was never transmitted"
                )


@dataclass(frozen=True)
class SchedulingDecision:
    """``user`` is None when every queue is empty."""

    user: int | None
    transmitter: int = BS

    @property
    def idle(self) -> bool:
        return self.user is None


IDLE = SchedulingDecision(None, BS)


@dataclass(frozen=True)
class SlotOutcome:
    user_decoded: bool
    relay_decodes: frozenset = field(default_factory=frozenset)
    arrivals: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "relay_decodes", frozenset(self.relay_decodes))
        object.__setattr__(self, "arrivals", _as_tuple(self.arrivals, int))


def validate_decision(
    decision: SchedulingDecision, bs: BaseStationState, relays: Sequence[RelayState]
) -> None:
    if decision.user is None:
        if not bs.all_empty:
            raise ContractViolation("idle decision while a queue is nonempty")
        return
    i = decision.user
    if bs.queue_lengths[i] == 0:
        raise ContractViolation(f"user {i} scheduled with an empty queue")
    a = decision.transmitter
    if a != BS and not relays[a].decoded[i]:
        raise ContractViolation(f"relay {a} has not decoded user {i}'s HoL packet")


def apply_outcome(
    bs: BaseStationState,
    relays: Sequence[RelayState],
    decision: SchedulingDecision,
    outcome: SlotOutcome,
    config: SystemConfig,
) -> tuple[BaseStationState, tuple]:
    """Advance the state by one slot.

    Transmission resolves first and arrivals are appended at slot end. A
    packet that fails at its last allowed attempt is discarded.

    Returns:
        The new base-station state and the tuple of new relay states.
    """
    x = list(bs.queue_lengths)
    r = list(bs.hol_retx)
    flags = [list(rel.decoded) for rel in relays]

    if decision.user is not None:
        i = decision.user
        for a in outcome.relay_decodes:
            if flags[a][i] or a == decision.transmitter:
                raise ContractViolation(f"relay {a} cannot newly decode user {i}'s packet")
        if outcome.user_decoded or r[i] == config.retx_limits[i]:
            x[i] -= 1
            r[i] = 0
            for row in flags:
                row[i] = False
        else:
            r[i] += 1
            for a in outcome.relay_decodes:
                flags[a][i] = True

    if outcome.arrivals:
        for i, k in enumerate(outcome.arrivals):
            x[i] += k

    new_bs = BaseStationState(tuple(x), tuple(r))
    return new_bs, tuple(RelayState(tuple(row)) for row in flags)


def instantaneous_cost_linear(bs: BaseStationState, config: SystemConfig) -> float:
    total = 0.0
    for i, (x, r) in enumerate(zip(bs.queue_lengths, bs.hol_retx)):
        if x > 0:
            c = config.cost_rates[i]
            total += c[0] * (x - 1) + c[r]
    return total


def validate_cost_fns(cost_fns: Sequence[Callable[[int], float]], x_max: int) -> None:
    """Reject cost functions that are not increasing with U(0) = 0 on 0..x_max."""
    for i, fn in enumerate(cost_fns):
        values = [float(fn(x)) for x in range(x_max + 1)]
        if values[0] != 0.0:
            raise ConfigError(f"cost function of user {i} must vanish at 0")
        if any(b <= a for a, b in zip(values, values[1:])):
            raise ConfigError(f"cost function of user {i} must be increasing")


def instantaneous_cost_convex(
    bs: BaseStationState, cost_fns: Sequence[Callable[[int], float]]
) -> float:
    return float(sum(fn(x) for fn, x in zip(cost_fns, bs.queue_lengths)))


COST_FUNCTIONS = {
    "x": lambda x: float(x),
    "x^2": lambda x: float(x) ** 2,
    "x^3": lambda x: float(x) ** 3,
}


def named_cost_fns(names: Sequence[str]) -> list:
    try:
        return [COST_FUNCTIONS[name] for name in names]
    except KeyError as exc:
        raise ConfigError(f"unknown cost function {exc.args[0]!r}") from None


def cost_table(cost_fns: Sequence[Callable[[int], float]], x_max: int) -> np.ndarray:
    return np.array([[fn(x) for x in range(x_max + 1)] for fn in cost_fns], dtype=float)
