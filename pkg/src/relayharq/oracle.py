"""Brute-force MDP solvers over the full relay-flag state space.

The oracle tracks every relay flag, offers every valid ``(user, transmitter)``
action and applies arrivals with queue truncation at ``x_cap``. It shares only
the decode probabilities with the index machinery, so agreement between the
two is a genuine check.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve
from scipy.stats import poisson

from .channel import DecodeModel
from .model import (
    BS,
    BaseStationState,
    ConfigError,
    RelayState,
    SchedulingDecision,
    SystemConfig,
)

DEFAULT_STATE_LIMIT = 10**6


class StateSpaceTooLarge(RuntimeError):
    pass


class NotConverged(RuntimeError):
    pass


def local_states(config: SystemConfig, i: int, x_cap: int) -> list:
    """``(x, r, flag_mask)`` states of one user; flags only once the packet was sent."""
    m = config.num_relays
    states = [(0, 0, 0)]
    for x in range(1, x_cap + 1):
        states.append((x, 0, 0))
        for r in range(1, config.retx_limits[i] + 1):
            states.extend((x, r, mask) for mask in range(2**m))
    return states


def _caps(config: SystemConfig, x_cap) -> list:
    if np.ndim(x_cap) == 0:
        return [int(x_cap)] * config.num_users
    if len(x_cap) != config.num_users:
        raise ConfigError("x_cap needs one entry per user")
    return [int(c) for c in x_cap]


def enumerate_states(
    config: SystemConfig, x_cap, limit: int = DEFAULT_STATE_LIMIT
) -> tuple[list, dict]:
    """All joint states (tuples of per-user local states) and their index map.

    ``x_cap`` is one queue cap for every user or a per-user sequence.
    """
    caps = _caps(config, x_cap)
    per_user = [local_states(config, i, caps[i]) for i in range(config.num_users)]
    count = int(np.prod([len(s) for s in per_user]))
    if count > limit:
        raise StateSpaceTooLarge(f"{count} states exceed the limit of {limit}")
    states = list(itertools.product(*per_user))
    return states, {s: k for k, s in enumerate(states)}


def to_system_state(config: SystemConfig, state: Sequence[tuple]) -> tuple:
    """Convert a joint oracle state into ``(BaseStationState, relays)``."""
    bs = BaseStationState(tuple(s[0] for s in state), tuple(s[1] for s in state))
    relays = tuple(
        RelayState(tuple(bool(s[2] >> a & 1) for s in state)) for a in range(config.num_relays)
    )
    return bs, relays


def _arrival_matrix(config, i, states, index, x_cap) -> sp.csr_matrix:
    lam = config.arrival_rates[i]
    L = len(states)
    if lam == 0:
        return sp.identity(L, format="csr")
    rows, cols, vals = [], [], []
    for k, (x, r, mask) in enumerate(states):
        room = x_cap - x
        probs = poisson.pmf(np.arange(room), lam)
        tail = 1.0 - probs.sum()
        for add, p in enumerate(list(probs) + [tail]):
            nx = x + add
            target = (nx, r, mask) if x > 0 else ((nx, 0, 0) if nx > 0 else (0, 0, 0))
            rows.append(k)
            cols.append(index[target])
            vals.append(p)
    return sp.csr_matrix((vals, (rows, cols)), shape=(L, L))


def _service_matrix(config, model, i, t, states, index) -> tuple[sp.csr_matrix, np.ndarray]:
    """Service transition of user ``i`` by transmitter ``t`` and the rows where it is allowed."""
    m = config.num_relays
    r_max = config.retx_limits[i]
    L = len(states)
    rows, cols, vals = [], [], []
    valid = np.zeros(L, dtype=bool)
    for k, (x, r, mask) in enumerate(states):
        holds = t == BS or (mask >> t & 1)
        if x == 0 or not holds:
            rows.append(k)
            cols.append(k)
            vals.append(1.0)
            continue
        valid[k] = True
        g = model.g_user(i, t, r)
        emptied = index[(x - 1, 0, 0)] if x > 1 else index[(0, 0, 0)]
        rows.append(k)
        cols.append(emptied)
        vals.append(1.0 - g)
        if g == 0.0:
            continue
        if r == r_max:
            rows.append(k)
            cols.append(emptied)
            vals.append(g)
            continue
        listeners = [a for a in range(m) if a != t and not mask >> a & 1]
        miss = {a: model.g_relay(i, a, t, r) for a in listeners}
        for heard in itertools.product((False, True), repeat=len(listeners)):
            p = g
            new_mask = mask
            for a, h in zip(listeners, heard):
                p *= (1.0 - miss[a]) if h else miss[a]
                if h:
                    new_mask |= 1 << a
            if p > 0.0:
                rows.append(k)
                cols.append(index[(x, r + 1, new_mask)])
                vals.append(p)
    return sp.csr_matrix((vals, (rows, cols)), shape=(L, L)), valid


@dataclass
class MdpSpec:
    """A truncated instance.

    Args:
        config: the problem instance.
        x_cap: queue cap (scalar or per user); arrivals beyond it are dropped.
        cost_fns: per-user queue-length cost functions, or None for the
            linear attempt-dependent cost.
    """

    config: SystemConfig
    x_cap: int | Sequence[int]
    cost_fns: Sequence[Callable[[int], float]] | None = None
    model: DecodeModel | None = None
    state_limit: int = DEFAULT_STATE_LIMIT

    def __post_init__(self):
        if self.model is None:
            self.model = DecodeModel(self.config)


@dataclass
class Mdp:
    spec: MdpSpec
    states: list
    index: dict
    costs: np.ndarray
    actions: list  # (user, transmitter); None is the idle action
    kernels: list
    valid: np.ndarray  # (num_actions, num_states)

    @property
    def size(self) -> int:
        return len(self.states)

    def empty_state(self) -> int:
        return self.index[tuple((0, 0, 0) for _ in range(self.spec.config.num_users))]

    def start_state(self, queues: Sequence[int]) -> int:
        return self.index[tuple((x, 0, 0) for x in queues)]

    def action_of(self, decision: SchedulingDecision) -> int:
        if decision.user is None:
            return 0
        return self.actions.index((decision.user, decision.transmitter))

    def q_values(self, v: np.ndarray) -> np.ndarray:
        q = np.stack([self.costs + P @ v for P in self.kernels])
        q[~self.valid] = np.inf
        return q


def build_mdp(spec: MdpSpec) -> Mdp:
    cfg = spec.config
    n, m = cfg.num_users, cfg.num_relays
    caps = _caps(cfg, spec.x_cap)
    per_user = [local_states(cfg, i, caps[i]) for i in range(n)]
    per_index = [{s: k for k, s in enumerate(states)} for states in per_user]
    states, index = enumerate_states(cfg, spec.x_cap, spec.state_limit)

    local_cost = []
    for i, ls in enumerate(per_user):
        if spec.cost_fns is None:
            c = cfg.cost_rates[i]
            local_cost.append(np.array([c[0] * (x - 1) + c[r] if x else 0.0 for x, r, _ in ls]))
        else:
            local_cost.append(np.array([float(spec.cost_fns[i](x)) for x, _, _ in ls]))
    costs = np.zeros(1)
    for lc in local_cost:
        costs = np.add.outer(costs, lc).ravel()

    arrivals = [_arrival_matrix(cfg, i, per_user[i], per_index[i], caps[i]) for i in range(n)]

    def joint(factors):
        out = factors[0]
        for f in factors[1:]:
            out = sp.kron(out, f, format="csr")
        return out.tocsr()

    def lift(vectors):
        out = np.ones(1, dtype=bool)
        for v in vectors:
            out = np.logical_and.outer(out, v).ravel()
        return out

    empties = [np.array([s[0] == 0 for s in ls]) for ls in per_user]
    actions = [None]
    kernels = [joint(arrivals)]
    valid = [lift(empties)]
    for i in range(n):
        for t in [BS, *range(m)]:
            S, ok = _service_matrix(cfg, spec.model, i, t, per_user[i], per_index[i])
            factors = list(arrivals)
            factors[i] = (S @ arrivals[i]).tocsr()
            kernels.append(joint(factors))
            mask = [np.ones(len(ls), dtype=bool) for ls in per_user]
            mask[i] = ok
            valid.append(lift(mask))
            actions.append((i, t))
    return Mdp(spec, states, index, costs, actions, kernels, np.array(valid))


@dataclass
class DrainSolution:
    values: np.ndarray
    actions: np.ndarray
    iterations: int
    mdp: Mdp = field(repr=False)

    def value_at(self, queues: Sequence[int]) -> float:
        return float(self.values[self.mdp.start_state(queues)])


def solve_draining(spec: MdpSpec, tol: float = 1e-10, max_iter: int = 100_000) -> DrainSolution:
    """Optimal expected total cost until every queue is empty, from each state."""
    if any(lam > 0 for lam in spec.config.arrival_rates):
        raise ConfigError("draining solver requires zero arrival rates")
    mdp = build_mdp(spec)
    v = np.zeros(mdp.size)
    for it in range(1, max_iter + 1):
        q = mdp.q_values(v)
        new = q.min(axis=0)
        new[mdp.empty_state()] = 0.0
        delta = np.max(np.abs(new - v))
        v = new
        if delta < tol:
            break
    else:
        raise NotConverged("draining value iteration did not converge")
    return DrainSolution(v, mdp.q_values(v).argmin(axis=0), it, mdp)


def policy_matrix(mdp: Mdp, policy) -> sp.csr_matrix:
    """Transition matrix of a stationary ``policy(bs, relays) -> SchedulingDecision``."""
    cfg = mdp.spec.config
    chosen = np.empty(mdp.size, dtype=np.int64)
    for k, s in enumerate(mdp.states):
        bs, relays = to_system_state(cfg, s)
        a = mdp.action_of(policy(bs, relays))
        if not mdp.valid[a, k]:
            raise ValueError(f"policy picked an invalid action in state {s}")
        chosen[k] = a
    rows = [mdp.kernels[a][k] for k, a in enumerate(chosen)]
    return sp.vstack(rows, format="csr")


def evaluate_draining(mdp: Mdp, policy) -> np.ndarray:
    """Exact expected total draining cost of a stationary policy from every state."""
    P = policy_matrix(mdp, policy)
    keep = np.ones(mdp.size, dtype=bool)
    keep[mdp.empty_state()] = False
    A = sp.identity(int(keep.sum()), format="csc") - P[keep][:, keep].tocsc()
    v = np.zeros(mdp.size)
    v[keep] = spsolve(A, mdp.costs[keep])
    return v


@dataclass
class AverageSolution:
    gain: float
    bias: np.ndarray
    actions: np.ndarray
    iterations: int
    mdp: Mdp = field(repr=False)


def solve_average_cost(
    spec: MdpSpec, tol: float = 1e-8, max_iter: int = 200_000, damping: float = 0.5
) -> AverageSolution:
    """Optimal long-run average cost by relative value iteration.

    The kernel is mixed with the identity (weight ``1 - damping``) to remove
    periodicity; this rescales the bias but leaves the gain unchanged.
    """
    if spec.config.total_arrival_rate == 0:
        raise ConfigError("average-cost solver needs arrivals; use solve_draining")
    mdp = build_mdp(spec)
    h = np.zeros(mdp.size)
    ref = mdp.empty_state()
    for it in range(1, max_iter + 1):
        q = mdp.q_values(h)
        th = damping * q.min(axis=0) + (1.0 - damping) * h
        # the damped operator scales the stage cost by `damping`
        diff = th - h
        lo, hi = diff.min(), diff.max()
        h = th - th[ref]
        if hi - lo < tol * damping:
            break
    else:
        raise NotConverged("relative value iteration did not converge")
    gain = 0.5 * (lo + hi) / damping
    return AverageSolution(gain, h, mdp.q_values(h).argmin(axis=0), it, mdp)


def evaluate_average(mdp: Mdp, policy) -> float:
    """Exact long-run average cost of a stationary policy (unichain assumed)."""
    P = policy_matrix(mdp, policy)
    n = mdp.size
    A = (P.T - sp.identity(n, format="csr")).tolil()
    A[0, :] = np.ones(n)
    b = np.zeros(n)
    b[0] = 1.0
    pi = spsolve(A.tocsc(), b)
    return float(pi @ mdp.costs)
