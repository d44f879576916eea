import numpy as np
import pytest

from relayharq.certify import random_arrival_instance
from relayharq.model import ConfigError, SystemConfig, named_cost_fns
from relayharq.oracle import (
    MdpSpec,
    StateSpaceTooLarge,
    build_mdp,
    enumerate_states,
    evaluate_average,
    evaluate_draining,
    solve_average_cost,
    solve_draining,
    to_system_state,
)
from relayharq.policy import PolicyKind, Scheduler
from relayharq.simulator import SimRun, run_many

from .conftest import two_user_config


def single(r_max=1, relays=0, lam=0.0, eta=0.5, cost=None):
    return SystemConfig(
        1, relays, (lam,), (cost or (1.0,) * (r_max + 1),), (r_max,), (eta,), ((0.3,),) * relays, (0.5,) * relays
    )


def test_state_count_single_user():
    states, index = enumerate_states(single(), 1)
    assert len(states) == 3
    states, _ = enumerate_states(single(relays=1), 1)
    assert len(states) == 4


def test_index_map_is_bijective(reference_config):
    states, index = enumerate_states(reference_config, 2)
    assert len(index) == len(states)
    assert all(states[index[s]] == s for s in states)
    for s in states:
        bs, relays = to_system_state(reference_config, s)
        bs.validate(reference_config)


def test_state_limit(reference_config):
    with pytest.raises(StateSpaceTooLarge):
        enumerate_states(reference_config, 6, limit=100)


def test_kernels_are_stochastic(reference_config):
    for cfg, cap in ((reference_config, 3), (two_user_config(arrivals=(0, 0)), (2, 2))):
        mdp = build_mdp(MdpSpec(cfg, cap))
        for a, P in enumerate(mdp.kernels):
            sums = np.asarray(P.sum(axis=1)).ravel()
            assert np.max(np.abs(sums - 1.0)) < 1e-12
            assert mdp.valid[a].any()


def test_empty_start_costs_nothing():
    cfg = two_user_config(arrivals=(0, 0))
    sol = solve_draining(MdpSpec(cfg, (0, 0), named_cost_fns(("x", "x"))))
    assert sol.value_at((0, 0)) == 0.0
    assert sol.actions[sol.mdp.empty_state()] == 0


def test_one_packet_one_slot():
    sol = solve_draining(MdpSpec(single(r_max=0), (1,), named_cost_fns(("x",))))
    assert sol.value_at((1,)) == pytest.approx(1.0, abs=1e-12)


def test_draining_values_monotone_in_backlog():
    cfg = two_user_config(relay_to_user=(0.4, 0.2), bs_relay=0.3, arrivals=(0, 0))
    sol = solve_draining(MdpSpec(cfg, (2, 2), named_cost_fns(("x^2", "x"))))
    v = {(a, b): sol.value_at((a, b)) for a in range(3) for b in range(3)}
    assert min(v.values()) >= 0.0
    for (a, b), val in v.items():
        if a < 2:
            assert v[(a + 1, b)] >= val
        if b < 2:
            assert v[(a, b + 1)] >= val


def test_draining_rejects_arrivals(reference_config):
    with pytest.raises(ConfigError):
        solve_draining(MdpSpec(reference_config, 1))


def test_draining_value_matches_simulated_index_policy():
    rng = np.random.default_rng(11)
    cfg = SystemConfig(
        2, 1, (0, 0), ((0, 0), (0, 0)), (1, 1), tuple(rng.uniform(0.2, 0.9, 2)),
        (tuple(rng.uniform(0.05, 0.9, 2)),), (float(rng.uniform(0.1, 0.9)),),
    )  # fmt: skip
    queues, names = (2, 2), ("x", "x^2")
    sol = solve_draining(MdpSpec(cfg, queues, named_cost_fns(names)))
    spec = SimRun(cfg, PolicyKind.RDC_INDEX, 10_000, initial_queues=queues, cost=names)
    (summary,) = run_many([spec], 4000, master_seed=5)
    est = summary.estimate("cumulative_cost")
    assert all(m.drain_slot is not None for m in summary.runs)
    assert abs(est.mean - sol.value_at(queues)) < 3 * est.std / np.sqrt(4000)


def test_average_cost_rejects_draining_input():
    with pytest.raises(ConfigError):
        solve_average_cost(MdpSpec(two_user_config(arrivals=(0, 0)), 2))


def test_average_cost_single_server_matches_simulation():
    cfg = single(r_max=0, lam=0.6, cost=(1.0,))
    sol = solve_average_cost(MdpSpec(cfg, 40))
    (summary,) = run_many([SimRun(cfg, PolicyKind.RLPA_INDEX, 200_000, x_cap=40, warmup=1_000)], 10, master_seed=1)
    est = summary.estimate("avg_cost")
    # one departure per nonempty slot, Poisson batches after service: E[x] = (2 lam - lam^2) / (2 (1 - lam))
    analytic = (2 * 0.6 - 0.6**2) / (2 * 0.4)
    assert sol.gain == pytest.approx(analytic, rel=1e-3)
    assert abs(est.mean - sol.gain) < 0.01 * sol.gain


def test_two_user_gain_at_small_cap(reference_config):
    """Overloaded instance: the optimum exploits truncation drops, the index policy does not."""
    sol = solve_average_cost(MdpSpec(reference_config, 6))
    index_gain = evaluate_average(sol.mdp, Scheduler(PolicyKind.RLPA_INDEX, reference_config).decide)
    assert sol.gain <= index_gain + 1e-9
    assert (index_gain - sol.gain) / sol.gain < 0.05
    (summary,) = run_many([SimRun(reference_config, PolicyKind.RLPA_INDEX, 10**6, x_cap=6, warmup=1_000)], 20, master_seed=2)
    est = summary.estimate("avg_cost")
    assert abs(est.mean - index_gain) < 3 * est.std / np.sqrt(20)


def test_index_policy_gain_tracks_optimum_on_random_instances():
    rng = np.random.default_rng(2024)
    gaps = []
    for _ in range(100):
        cfg = random_arrival_instance(rng)
        sol = solve_average_cost(MdpSpec(cfg, 6))
        gain = evaluate_average(sol.mdp, Scheduler(PolicyKind.RLPA_INDEX, cfg).decide)
        assert gain >= sol.gain - 1e-7
        gaps.append((gain - sol.gain) / sol.gain)
    assert max(gaps) < 1e-3


def test_index_policy_optimal_for_draining_instance():
    cfg = two_user_config(relay_to_user=(0.5, 0.2), bs_relay=0.4, arrivals=(0, 0))
    queues, fns = (2, 2), named_cost_fns(("x^2", "x"))
    sol = solve_draining(MdpSpec(cfg, queues, fns))
    sched = Scheduler(PolicyKind.RDC_INDEX, cfg, initial_queues=queues, cost_fns=fns)
    v = evaluate_draining(sol.mdp, sched.decide)
    assert np.max(np.abs(v - sol.values)) < 1e-8
    worse = evaluate_draining(sol.mdp, Scheduler(PolicyKind.ROUND_ROBIN, cfg).decide)
    assert worse[sol.mdp.start_state(queues)] > sol.value_at(queues) + 1e-6
