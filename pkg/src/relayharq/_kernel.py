"""Compiled slot loop used by :mod:`relayharq.simulator`.

Consumes pre-drawn uniforms and Poisson counts so that the pure-Python
reference loop can replay exactly the same trajectory.
"""

import numpy as np
from numba import njit

RLPA, NO_RELAY, RDC, ROUND_ROBIN, LONGEST_QUEUE = 0, 1, 2, 3, 4

# rows of the stats array
COST, DECODED, DECODED_ALL, DISCARDED, TRUNCATED, ARRIVED = range(6)


@njit(cache=True)
def run_block(
    x, r, flags, best, u, arrivals, stats,
    kind, indices, no_relay_indices, drain_positions, transmitters, rank_of,
    linear_costs, convex_costs, use_convex,
    r_max, g_tx, g_rx, x_cap,
    slot0, record_from, stop_when_empty,
):  # fmt: skip
    n_users = x.shape[0]
    n_relays = flags.shape[0]
    for k in range(u.shape[0]):
        slot = slot0 + k
        record = slot >= record_from
        if record:
            for i in range(n_users):
                if x[i] > 0:
                    if use_convex:
                        stats[COST, i] += convex_costs[i, x[i]]
                    else:
                        stats[COST, i] += linear_costs[i, 0] * (x[i] - 1) + linear_costs[i, r[i]]

        chosen = -1
        if kind == ROUND_ROBIN:
            for j in range(n_users):
                i = (slot + j) % n_users
                if x[i] > 0:
                    chosen = i
                    break
        else:
            best_score = -np.inf
            for i in range(n_users):
                if x[i] == 0:
                    continue
                if kind == RLPA:
                    score = indices[i, r[i], best[i]]
                elif kind == NO_RELAY:
                    score = no_relay_indices[i, r[i]]
                elif kind == RDC:
                    score = -float(drain_positions[i, r[i], x[i], best[i]])
                else:
                    score = float(x[i])
                if chosen < 0 or score > best_score:
                    best_score = score
                    chosen = i

        if chosen >= 0:
            i = chosen
            tx = -1 if kind == NO_RELAY else transmitters[i, best[i]]
            if u[k, 0] >= g_tx[i, tx + 1, r[i]]:
                x[i] -= 1
                r[i] = 0
                best[i] = 0
                for a in range(n_relays):
                    flags[a, i] = False
                stats[DECODED_ALL, i] += 1
                if record:
                    stats[DECODED, i] += 1
            else:
                for a in range(n_relays):
                    if a != tx and not flags[a, i] and u[k, 1 + a] >= g_rx[i, a, tx + 1, r[i]]:
                        flags[a, i] = True
                        if rank_of[i, a] > best[i]:
                            best[i] = rank_of[i, a]
                if r[i] == r_max[i]:
                    x[i] -= 1
                    r[i] = 0
                    best[i] = 0
                    for a in range(n_relays):
                        flags[a, i] = False
                    stats[DISCARDED, i] += 1
                else:
                    r[i] += 1

        empty = True
        for i in range(n_users):
            n_new = arrivals[k, i]
            stats[ARRIVED, i] += n_new
            if x_cap >= 0 and x[i] + n_new > x_cap:
                stats[TRUNCATED, i] += x[i] + n_new - x_cap
                n_new = x_cap - x[i]
            x[i] += n_new
            if x[i] > 0:
                empty = False
        if stop_when_empty and empty:
            return k + 1, True
    return u.shape[0], False
