from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from topkmon.adversary import LowerBoundAdversary
from topkmon.model import Filter, StreamTrace
from topkmon.protocols import ServerView
from topkmon.offline import (
    feasible_exact,
    feasible_segment,
    opt_brute,
    opt_communicated,
    opt_exact,
    opt_greedy,
)

Q = Fraction(1, 4)


@st.composite
def small_traces(draw, max_n=5, max_t=8, delta=16):
    n = draw(st.integers(2, max_n))
    t = draw(st.integers(1, max_t))
    rows = draw(st.lists(st.lists(st.integers(0, delta), min_size=n, max_size=n), min_size=t, max_size=t))
    k = draw(st.integers(1, n - 1))
    return StreamTrace.from_rows(rows), k


def test_single_step_is_feasible_with_exact_top_k():
    tr = StreamTrace.from_rows([(3, 9, 5)])
    seg = feasible_segment(tr, 2, Q, 0, 0)
    assert seg.output == {1, 2}
    assert feasible_exact(tr, 2, 0, 0).output == {1, 2}


def test_equal_values_any_subset_feasible():
    tr = StreamTrace.from_rows([(10, 10, 10, 10)] * 3)
    assert feasible_segment(tr, 2, Q, 0, 2) is not None


def test_static_trace_one_segment():
    tr = StreamTrace.from_rows([(1, 5, 3)] * 6)
    for sched in (opt_greedy(tr, 1, Q), opt_exact(tr, 1), opt_brute(tr, 1, Q)):
        assert sched.reconfig_events == 1


def test_two_nodes_crossing_once():
    tr = StreamTrace.from_rows([(10, 2), (10, 2), (2, 10), (2, 10)])
    sched = opt_exact(tr, 1)
    assert sched.reconfig_events == 2
    assert [s.t_from for s in sched.segments] == [0, 2]
    assert opt_brute(tr, 1, None, exact=True).reconfig_events == 2


def test_swap_beyond_neighbourhood_needs_two_segments():
    tr = StreamTrace.from_rows([(16, 4), (4, 16)])
    assert opt_brute(tr, 1, Q).reconfig_events == 2
    assert opt_greedy(tr, 1, Q).reconfig_events == 2
    # a close swap stays within one neighbourhood
    assert opt_greedy(StreamTrace.from_rows([(16, 14), (14, 16)]), 1, Q).reconfig_events == 1


def test_lower_bound_single_phase_costs_one_reconfiguration():
    adv = LowerBoundAdversary(8, 2, Q, 1000, 1)

    view = ServerView(0, tuple(Filter(1000) for _ in range(8)), frozenset(), "test")
    for _ in range(adv.horizon):
        adv.next_values(view)
    assert adv.forced_drops == 0
    sched = opt_greedy(adv.trace(), 2, Q)
    assert sched.reconfig_events == 1
    assert sched.detailed_cost == 3


def test_opt_communicated_matches_feasibility():
    tr = StreamTrace.from_rows([(10, 2), (2, 10)])
    assert opt_communicated(tr, 1, None, 0, 1)
    assert not opt_communicated(tr, 1, None, 0, 0)
    assert opt_communicated(tr, 1, Q, 0, 1)


def test_schedule_serialisation_and_window_count():
    tr = StreamTrace.from_rows([(10, 2), (2, 10), (10, 2)])
    sched = opt_exact(tr, 1)
    assert sched.reconfig_events == 3
    assert sched.reconfigs_in(0, 2) == 2
    d = sched.to_dict()
    assert d["eps"] is None and len(d["segments"]) == 3


def test_argument_errors():
    tr = StreamTrace.from_rows([(1, 2)] * 13)
    with pytest.raises(ValueError):
        opt_brute(tr, 1, Q)
    with pytest.raises(ValueError):
        opt_greedy(tr, 2, Q)
    with pytest.raises(ValueError):
        feasible_segment(tr, 1, Q, 3, 2)


@settings(max_examples=150, deadline=None)
@given(small_traces(), st.sampled_from([Q, Fraction(1, 2)]))
def test_greedy_equals_brute(tk, eps):
    tr, k = tk
    assert opt_greedy(tr, k, eps).reconfig_events == opt_brute(tr, k, eps).reconfig_events
    assert opt_exact(tr, k).reconfig_events == opt_brute(tr, k, None, exact=True).reconfig_events


@settings(max_examples=100, deadline=None)
@given(small_traces(), st.sampled_from([Q, Fraction(1, 2)]), st.data())
def test_feasibility_is_hereditary(tk, eps, data):
    tr, k = tk
    t = data.draw(st.integers(0, tr.horizon - 1))
    t2 = data.draw(st.integers(t, tr.horizon - 1))
    if feasible_segment(tr, k, eps, t, t2) is not None:
        a = data.draw(st.integers(t, t2))
        b = data.draw(st.integers(a, t2))
        assert feasible_segment(tr, k, eps, a, b) is not None


@settings(max_examples=100, deadline=None)
@given(small_traces())
def test_larger_eps_never_needs_more_segments(tk):
    tr, k = tk
    counts = [opt_greedy(tr, k, e).reconfig_events for e in (Fraction(1, 16), Q, Fraction(1, 2))]
    assert counts == sorted(counts, reverse=True)
    assert opt_exact(tr, k).reconfig_events >= counts[0]


@settings(max_examples=100, deadline=None)
@given(small_traces(), st.sampled_from([Q, Fraction(1, 2)]))
def test_greedy_segments_hold_valid_filters(tk, eps):
    tr, k = tk
    for seg in opt_greedy(tr, k, eps).segments:
        assert len(seg.output) == k
        for t in range(seg.t_from, seg.t_to + 1):
            row = tr.at(t)
            assert all(row[i] >= seg.f1.lo for i in seg.output)
            assert all(row[j] <= seg.f2.hi for j in range(tr.n) if j not in seg.output)
        assert seg.f1.lo >= (1 - eps) * seg.f2.hi
