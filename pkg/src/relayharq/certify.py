"""Random-instance campaigns comparing index policies with the MDP oracle."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats as st

from .model import SystemConfig, named_cost_fns
from .oracle import DEFAULT_STATE_LIMIT, MdpSpec, evaluate_average, evaluate_draining, solve_average_cost, solve_draining
from .policy import PolicyKind, Scheduler
from .simulator import SimRun, run_many


@dataclass
class CertificationReport:
    kind: str
    rows: list
    warnings: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(row["passed"] for row in self.rows)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "instances": len(self.rows),
            "passed": self.passed,
            "warnings": list(self.warnings),
            "rows": self.rows,
        }


def random_draining_instance(
    rng: np.random.Generator,
    max_users: int = 2,
    max_relays: int = 2,
    max_retx: int = 2,
    max_backlog: int = 2,
    costs: Sequence[str] = ("x", "x^2"),
) -> tuple[SystemConfig, tuple, tuple]:
    """Random channels, limits and backlog with no arrivals.

    Returns:
        ``(config, initial_queues, cost_names)``.
    """
    n = int(rng.integers(1, max_users + 1))
    m = int(rng.integers(0, max_relays + 1))
    r_max = tuple(int(v) for v in rng.integers(0, max_retx + 1, n))
    queues = tuple(int(v) for v in rng.integers(0, max_backlog + 1, n))
    config = SystemConfig(
        num_users=n,
        num_relays=m,
        arrival_rates=(0.0,) * n,
        cost_rates=tuple((0.0,) * (r + 1) for r in r_max),
        retx_limits=r_max,
        bs_channel=tuple(rng.uniform(0.05, 0.95, n)),
        relay_channel=tuple(tuple(rng.uniform(0.05, 0.95, n)) for _ in range(m)),
        bs_relay=tuple(rng.uniform(0.05, 0.95, m)),
    )
    names = tuple(str(c) for c in rng.choice(list(costs), n))
    return config, queues, names


def certify_draining(
    instances: int = 100,
    seed: int = 0,
    tolerance: float = 1e-8,
    policy: PolicyKind = PolicyKind.RDC_INDEX,
    wrong_policy_rows: Sequence[int] = (),
    wrong_policy: PolicyKind = PolicyKind.LONGEST_QUEUE,
    state_limit: int = DEFAULT_STATE_LIMIT,
    **limits,
) -> CertificationReport:
    """Exact total cost of the draining index policy against the optimum.

    Rows listed in ``wrong_policy_rows`` use ``wrong_policy`` instead, as a
    negative control that should show a positive gap.
    """
    rng = np.random.default_rng(seed)
    report = CertificationReport("draining", [])
    if instances == 0:
        report.warnings.append("empty campaign: nothing was certified")
    for k in range(instances):
        config, queues, names = random_draining_instance(rng, **limits)
        fns = named_cost_fns(names)
        solution = solve_draining(MdpSpec(config, queues, fns, state_limit=state_limit))
        kind = wrong_policy if k in set(wrong_policy_rows) else PolicyKind.parse(policy)
        sched = Scheduler(kind, config, initial_queues=queues, cost_fns=fns)
        values = evaluate_draining(solution.mdp, sched.decide)
        start = solution.mdp.start_state(queues)
        optimal, achieved = float(solution.values[start]), float(values[start])
        gap = achieved - optimal
        report.rows.append(
            {
                "instance": k,
                "config": config.to_dict(),
                "initial_queues": list(queues),
                "cost": list(names),
                "policy": kind.name,
                "optimal": optimal,
                "policy_value": achieved,
                "gap": gap,
                "passed": abs(gap) < tolerance,
            }
        )
    return report


def random_arrival_instance(
    rng: np.random.Generator,
    num_users: int = 2,
    max_relays: int = 1,
    max_retx: int = 2,
    load: tuple = (0.2, 0.45),
) -> SystemConfig:
    """Random instance whose offered load (arrival rate times base-station
    service time, summed over users) lies in ``load``."""
    n = num_users
    m = int(rng.integers(0, max_relays + 1))
    r_max = tuple(int(v) for v in rng.integers(1, max_retx + 1, n))
    bs = tuple(rng.uniform(0.1, 0.9, n))
    costs = tuple(tuple(np.sort(rng.uniform(0.5, 2.0, r + 1))) for r in r_max)
    service = []
    for i in range(n):
        T, prod = 1.0, 1.0
        for s in range(r_max[i]):
            prod *= bs[i] * 0.9**s
            T += prod
        service.append(T)
    rho = rng.uniform(*load)
    share = rng.dirichlet([2.0] * n)
    return SystemConfig(
        num_users=n,
        num_relays=m,
        arrival_rates=tuple(rho * share[i] / service[i] for i in range(n)),
        cost_rates=costs,
        retx_limits=r_max,
        bs_channel=bs,
        relay_channel=tuple(tuple(rng.uniform(0.05, 0.9, n)) for _ in range(m)),
        bs_relay=tuple(rng.uniform(0.05, 0.9, m)),
    )


def certify_average(
    instances: int = 25,
    seed: int = 0,
    x_cap: int = 6,
    horizon: int = 200_000,
    replications: int = 20,
    warmup: int = 1_000,
    confidence: float = 0.95,
    baselines: Sequence[PolicyKind] = (PolicyKind.ROUND_ROBIN, PolicyKind.LONGEST_QUEUE),
    state_limit: int = DEFAULT_STATE_LIMIT,
    jobs: int = 1,
    **limits,
) -> CertificationReport:
    """Simulated index-policy cost against the optimal gain of the truncated MDP.

    ``confidence`` is the simultaneous coverage over the whole campaign, so
    each instance uses the Bonferroni level ``1 - (1 - confidence) / instances``.
    A baseline fails the row if its mean beats the index policy's mean by more
    than the index policy's interval half width.
    """
    rng = np.random.default_rng(seed)
    report = CertificationReport("average", [])
    if instances == 0:
        report.warnings.append("empty campaign: nothing was certified")
        return report
    level = 1.0 - (1.0 - confidence) / instances
    z = st.t.ppf(0.5 + level / 2.0, replications - 1) if replications > 1 else math.inf
    for k in range(instances):
        config = random_arrival_instance(rng, **limits)
        solution = solve_average_cost(MdpSpec(config, x_cap, state_limit=state_limit))
        index_sched = Scheduler(PolicyKind.RLPA_INDEX, config)
        exact = evaluate_average(solution.mdp, index_sched.decide)
        kinds = [PolicyKind.RLPA_INDEX, *baselines]
        specs = [SimRun(config, kind, horizon + warmup, 0, x_cap, warmup=warmup) for kind in kinds]
        summaries = run_many(specs, replications, master_seed=seed * 1_000 + k, jobs=jobs)
        costs = [np.array([m.avg_cost for m in s.runs]) for s in summaries]
        mean = float(costs[0].mean())
        half = float(z * costs[0].std(ddof=1) / math.sqrt(replications))
        baseline_means = {kind.name: float(c.mean()) for kind, c in zip(kinds[1:], costs[1:])}
        inside = abs(mean - solution.gain) <= half
        beaten = [name for name, v in baseline_means.items() if v < mean - half]
        report.rows.append(
            {
                "instance": k,
                "config": config.to_dict(),
                "x_cap": x_cap,
                "optimal_gain": float(solution.gain),
                "policy_gain_exact": exact,
                "simulated_mean": mean,
                "ci_half_width": half,
                "ci_level": level,
                "gap": mean - float(solution.gain),
                "baselines": baseline_means,
                "baselines_beating_index": beaten,
                "passed": bool(inside and not beaten),
            }
        )
    return report
