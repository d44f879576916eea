import pytest
from hypothesis import strategies as st

from relayharq.model import SystemConfig

REFERENCE_COSTS = ((0.98, 1.0, 1.02), (1.25, 1.5, 1.75))


def two_user_config(relay_to_user=(0.9, 0.9), bs_relay=0.9, bs_channel=(0.9, 0.9), arrivals=(0.3, 0.3)):
    return SystemConfig(
        num_users=2,
        num_relays=1,
        arrival_rates=arrivals,
        cost_rates=REFERENCE_COSTS,
        retx_limits=(2, 2),
        bs_channel=bs_channel,
        relay_channel=(relay_to_user,),
        bs_relay=(bs_relay,),
    )


@pytest.fixture
def reference_config():
    """Two users, one relay that only helps user 2."""
    return two_user_config(relay_to_user=(0.9, 0.3), bs_relay=0.5)


@st.composite
def configs(draw, max_users=3, max_relays=3, max_retx=3, arrivals=True):
    n = draw(st.integers(1, max_users))
    m = draw(st.integers(0, max_relays))
    r_max = draw(st.lists(st.integers(0, max_retx), min_size=n, max_size=n))
    prob = st.floats(0.0, 1.0)
    costs = []
    for r in r_max:
        steps = draw(st.lists(st.floats(0.0, 2.0), min_size=r + 1, max_size=r + 1))
        row, acc = [], 0.0
        for s in steps:
            acc += s
            row.append(acc)
        costs.append(tuple(row))
    lam = st.floats(0.0, 0.5) if arrivals else st.just(0.0)
    return SystemConfig(
        num_users=n,
        num_relays=m,
        arrival_rates=tuple(draw(lam) for _ in range(n)),
        cost_rates=tuple(costs),
        retx_limits=tuple(r_max),
        bs_channel=tuple(draw(prob) for _ in range(n)),
        relay_channel=tuple(tuple(draw(prob) for _ in range(n)) for _ in range(m)),
        bs_relay=tuple(draw(prob) for _ in range(m)),
        decode_decay=draw(st.floats(0.05, 0.95)),
    )
