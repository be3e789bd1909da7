from fractions import Fraction

import pytest

from topkmon.adversary import (
    STOCHASTIC_KINDS,
    LowerBoundAdversary,
    TraceReplay,
    lower_bound_adversary,
    stochastic_generator,
)
from topkmon.comms import rng_stream
from topkmon.model import StreamTrace, neighborhood_at
from topkmon.protocols import MONITORS, Simulation

Q = Fraction(1, 4)


def drive(adv, monitor, k, eps):
    sim = Simulation(MONITORS[monitor], adv.n, k, eps, rng_stream(0))
    for _ in range(adv.horizon):
        sim.step(adv.next_values(sim.view()))
    return sim


def test_lower_bound_single_phase_forces_n_minus_k_uplinks():
    adv = lower_bound_adversary(8, 2, Q, 1000, 1)
    assert adv.horizon == 8
    assert adv.y1 == 749
    sim = drive(adv, "eps_topk", 2, Q)
    setup = sim.ledger.per_step[0].uplink
    assert sim.ledger.total.uplink - setup >= 6
    assert adv.forced_drops == 0


def test_lower_bound_zero_phases_is_static():
    adv = LowerBoundAdversary(8, 2, Q, 1000, 0)
    sim = drive(adv, "scattered", 2, Q)
    assert adv.horizon == 1
    assert adv.trace().rows == ((1000,) * 8,)
    assert len(sim.ledger.per_step) == 1


def test_lower_bound_sigma_variant():
    adv = LowerBoundAdversary(10, 2, Q, 1000, 2, sigma=5)
    sim = drive(adv, "eps_topk", 2, Q)
    rows = adv.trace().rows
    assert all(r[5:] == (0,) * 5 for r in rows)
    assert adv.horizon == 1 + 2 * 4
    assert sim.server.t == adv.horizon - 1


def test_lower_bound_argument_errors():
    with pytest.raises(ValueError):
        LowerBoundAdversary(8, 2, Q, 1, 1)  # low value negative
    with pytest.raises(ValueError):
        LowerBoundAdversary(8, 8, Q, 1000, 1)
    with pytest.raises(ValueError):
        LowerBoundAdversary(8, 2, 0, 1000, 1)


def test_random_walk_zero_step_is_static():
    adv = stochastic_generator("random_walk", dict(n=5, horizon=20, delta=100, step=0), 3)
    rows = [adv.next_values() for _ in range(20)]
    assert len(set(rows)) == 1


def test_iid_uniform_is_replayable():
    a = stochastic_generator("iid_uniform", dict(n=4, horizon=30, delta=50), 11)
    b = stochastic_generator("iid_uniform", dict(n=4, horizon=30, delta=50), 11)
    for adv in (a, b):
        for _ in range(30):
            adv.next_values()
    assert a.dump() == b.dump()
    assert all(0 <= v <= 50 for r in a.trace().rows for v in r)


@pytest.mark.parametrize("sigma", [4, 9])
def test_oscillator_neighbourhood_size(sigma):
    n, k = 16, 4
    adv = stochastic_generator(
        "oscillator", dict(n=n, horizon=60, delta=2**16, k=k, eps=Fraction(1, 2), sigma=sigma), 2
    )
    for _ in range(60):
        row = adv.next_values()
        assert neighborhood_at(row, k, Fraction(1, 2)).sigma_t == sigma


def test_oscillator_with_drift_keeps_cluster_together():
    adv = stochastic_generator(
        "oscillator", dict(n=16, horizon=200, delta=2**16, k=4, eps=Q, sigma=6, drift=0.1), 4
    )
    for _ in range(200):
        row = adv.next_values()
        assert neighborhood_at(row, 4, Q).sigma_t == 6


def test_crossing_within_range():
    adv = stochastic_generator("crossing", dict(n=6, horizon=50, delta=2**20), 0)
    rows = [adv.next_values() for _ in range(50)]
    assert all(1 <= v <= 2**20 for r in rows for v in r)


@pytest.mark.parametrize(
    "kind,params",
    [
        ("nope", {}),
        ("random_walk", dict(step=-1)),
        ("oscillator", dict(k=4, eps=Q, sigma=1)),
        ("oscillator", dict(k=4, eps=Fraction(3, 4), sigma=5)),
        ("iid_uniform", dict(bogus=1)),
    ],
)
def test_invalid_params(kind, params):
    with pytest.raises(ValueError):
        stochastic_generator(kind, dict(n=16, horizon=5, delta=2**16, **params), 0)


def test_missing_required_params():
    with pytest.raises(ValueError):
        stochastic_generator("iid_uniform", dict(n=3), 0)


def test_stochastic_exhaustion_and_replay():
    tr = StreamTrace.from_rows([(1, 2), (3, 4)])
    rep = TraceReplay(tr)
    assert rep.next_values() == (1, 2) and rep.next_values() == (3, 4)
    with pytest.raises(IndexError):
        rep.next_values()
    assert set(STOCHASTIC_KINDS) == {"random_walk", "iid_uniform", "oscillator", "crossing"}
