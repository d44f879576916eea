import math

import numpy as np
import pytest
from hypothesis import given, settings

from relayharq.channel import DecodeModel, outcome_from_draws, rank_relays, sample_outcome
from relayharq.model import (
    BS,
    BaseStationState,
    ContractViolation,
    RelayState,
    SchedulingDecision,
    SystemConfig,
    empty_relays,
)

from .conftest import configs, two_user_config


def one_relay(relay_eta, bs_eta=0.9, bs_relay=0.5, r_max=2):
    return SystemConfig(1, 1, (0.0,), ((1.0,) * (r_max + 1),), (r_max,), (bs_eta,), ((relay_eta,),), (bs_relay,))


def test_bs_failure_values():
    model = DecodeModel(two_user_config())
    assert model.g_user_from_bs(0, 0) == 0.9
    assert model.g_user_from_bs(0, 1) == pytest.approx(0.81, abs=1e-15)
    assert model.g_user_from_bs(0, 2) == 0.0


def test_bs_failure_rejects_bad_attempt():
    with pytest.raises(ContractViolation):
        DecodeModel(two_user_config()).g_user_from_bs(0, 3)


def test_relay_failure_values():
    model = DecodeModel(one_relay(0.3))
    assert model.g_user_from_relay(0, 1, 1) == pytest.approx(0.27, abs=1e-15)
    assert model.g_user_from_relay(0, 1, 2) == 0.0
    with pytest.raises(ContractViolation):
        model.g_user_from_relay(0, 2, 0)


def test_equal_channels_give_equal_failure():
    model = DecodeModel(one_relay(0.9))
    for r in range(3):
        assert model.g_user_from_relay(0, 1, r) == model.g_user_from_bs(0, r)


def test_relay_reception_values():
    model = DecodeModel(one_relay(0.3, bs_relay=0.5))
    assert model.g_relay_decode(0, 1, 0, 0) == 0.5
    assert model.g_relay_decode(0, 1, 0, 2) == 0.0
    with pytest.raises(ContractViolation):
        model.g_relay_decode(0, 1, 1, 0)


def test_ranking_without_relays_is_empty():
    ranking = rank_relays(two_user_config().without_relays())
    assert ranking.order == ((), ())


def test_ranking_puts_better_channel_on_top():
    cfg = SystemConfig(2, 2, (0, 0), ((1,), (1,)), (0, 0), (0.9, 0.9), ((0.5, 0.3), (0.5, 0.7)), (0.5, 0.5))
    ranking = rank_relays(cfg)
    # user 2: relay 0 fails less often than relay 1, so relay 0 holds the top rank
    assert ranking.order[1] == (1, 0)
    assert ranking.rank_of[1] == (2, 1)


def test_ranking_ties_prefer_lower_relay_index():
    cfg = SystemConfig(1, 3, (0,), ((1,),), (0,), (0.9,), ((0.4,), (0.4,), (0.4,)), (0.5, 0.5, 0.5))
    first = rank_relays(cfg)
    assert first.order[0] == (2, 1, 0)
    assert rank_relays(cfg) == first


@settings(max_examples=80, deadline=None)
@given(cfg=configs())
def test_probabilities_in_range_and_monotone(cfg):
    model = DecodeModel(cfg)
    g_tx, g_rx = model.failure_tables()
    assert np.all((g_tx >= 0) & (g_tx <= 1))
    assert np.all((g_rx >= 0) & (g_rx <= 1))
    for i in range(cfg.num_users):
        r_max = cfg.retx_limits[i]
        assert np.all(g_tx[i, :, r_max] == 0)
        assert np.all(np.diff(g_tx[i, :, : r_max + 1], axis=1) <= 0)
        for a in range(cfg.num_relays):
            if cfg.relay_channel[a][i] < cfg.bs_channel[i]:
                for r in range(r_max):
                    assert model.g_user(i, a, r) < model.g_user_from_bs(i, r)


def test_last_attempt_always_decodes():
    cfg = two_user_config()
    model = DecodeModel(cfg)
    bs = BaseStationState((1, 0), (2, 0))
    rng = np.random.default_rng(5)
    assert all(
        sample_outcome(rng, SchedulingDecision(0, BS), bs, empty_relays(cfg), model).user_decoded for _ in range(500)
    )


def test_no_relays_means_no_relay_decodes():
    cfg = two_user_config().without_relays()
    model = DecodeModel(cfg)
    bs = BaseStationState((1, 1), (0, 0))
    rng = np.random.default_rng(6)
    for _ in range(200):
        assert not sample_outcome(rng, SchedulingDecision(1, BS), bs, (), model).relay_decodes


def test_relay_decodes_only_after_user_failure():
    cfg = one_relay(0.3)
    model = DecodeModel(cfg)
    bs = BaseStationState((1,), (0,))
    out = outcome_from_draws(SchedulingDecision(0, BS), bs, (RelayState((False,)),), model, 0.95, [0.99], [0])
    assert out.user_decoded and not out.relay_decodes
    out = outcome_from_draws(SchedulingDecision(0, BS), bs, (RelayState((False,)),), model, 0.1, [0.99], [0])
    assert not out.user_decoded and out.relay_decodes == {0}


def test_decode_frequency_matches_failure_probability():
    cfg = two_user_config()
    model = DecodeModel(cfg)
    bs = BaseStationState((1, 0), (0, 0))
    rng = np.random.default_rng(20091)
    n = 10**6
    u = rng.random(n)
    # same comparison outcome_from_draws uses for the user link
    freq = np.mean(u >= model.g_user(0, BS, 0))
    assert abs(freq - 0.1) < 1e-3
    hits = sum(
        sample_outcome(rng, SchedulingDecision(0, BS), bs, empty_relays(cfg), model).user_decoded
        for _ in range(20_000)
    )
    sigma = math.sqrt(0.1 * 0.9 / 20_000)
    assert abs(hits / 20_000 - 0.1) < 3 * sigma


def test_relay_decode_frequency_within_binomial_band():
    cfg = one_relay(0.3, bs_relay=0.4)
    model = DecodeModel(cfg)
    bs = BaseStationState((1,), (0,))
    rng = np.random.default_rng(77)
    n = 20_000
    fails = relay = 0
    for _ in range(n):
        out = sample_outcome(rng, SchedulingDecision(0, BS), bs, (RelayState((False,)),), model)
        if not out.user_decoded:
            fails += 1
            relay += 0 in out.relay_decodes
    p = 1 - 0.4
    assert abs(relay / fails - p) < 3 * math.sqrt(p * (1 - p) / fails)
    assert abs(fails / n - 0.9) < 3 * math.sqrt(0.09 / n)
