import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dmimo_uplink.capacity import CjtSubsetEvaluator
from dmimo_uplink.mimo import draw_channels
from dmimo_uplink.rf_env import LinkBudget
from dmimo_uplink.selection import (
    Method,
    Objective,
    combine_phases,
    evaluate_subset,
    exhaustive_select,
    greedy_select,
    select_all,
)

B = 10e6


def naive_best(rates, phase2, objective="harmonic"):
    """Enumerate every subset with itertools and score it from scratch."""
    n = len(rates)
    best, best_set = -1.0, None
    for k in range(n + 1):
        for combo in itertools.combinations(range(n), k):
            c2 = B * phase2(combo)
            c1 = B * min(rates[i] for i in combo) if combo else math.inf
            if objective == "min_rate":
                v = min(c1, c2)
            else:
                v = c2 if math.isinf(c1) else c1 * c2 / (c1 + c2)
            if v > best:
                best, best_set = v, combo
    return best, best_set


def additive_phase2(direct, gains):
    """Toy Phase-2 model: log2(1 + direct + sum of gains)."""
    return lambda subset: math.log2(1 + direct + sum(gains[i] for i in subset))


def test_combine_phases_spot_values():
    tp = combine_phases(30e6, 60e6)
    assert tp.t1 == pytest.approx(2 / 3)
    assert tp.t2 == pytest.approx(1 / 3)
    assert tp.bits_delivered == pytest.approx(2e7)
    assert tp.c1 * tp.t1 == pytest.approx(tp.c2 * tp.t2)


def test_combine_phases_edge_cases():
    assert combine_phases(math.inf, 5.0).bits_delivered == 5.0
    assert combine_phases(0.0, 5.0).bits_delivered == 0.0
    assert combine_phases(5.0, 0.0).bits_delivered == 0.0
    with pytest.raises(ValueError):
        combine_phases(-1.0, 1.0)
    assert combine_phases(1.0, 1.0, baseline_bits=0.25).relative_improvement == pytest.approx(2.0)


@given(c1=st.floats(1e3, 1e9), c2=st.floats(1e3, 1e9))
def test_combine_phases_bounded_by_both(c1, c2):
    tp = combine_phases(c1, c2)
    assert tp.t1 + tp.t2 == pytest.approx(1.0)
    assert tp.bits_delivered <= min(c1, c2) * (1 + 1e-12)
    assert tp.bits_delivered >= 0.5 * min(c1, c2) * (1 - 1e-12)


# hand-checkable five-collaborator fixture
RATES5 = [6.0, 0.5, 3.0, 4.0, 1.0]
GAINS5 = [3.0, 3.0, 2.0, 1.0, 0.5]
P2_5 = additive_phase2(1.0, GAINS5)


def test_fixture_optimum_by_hand():
    # {0}: C1 = 6B, C2 = log2(5)B -> 1.674B beats {0,3} (1.570B), {0,2} (1.450B), direct (1B)
    v0 = 6 * math.log2(5) / (6 + math.log2(5))
    best, best_set = naive_best(RATES5, P2_5)
    assert best_set == (0,) and best == pytest.approx(v0 * B)
    res = exhaustive_select(RATES5, P2_5, B, B)
    assert res.chosen_set == (0,)
    assert res.objective == pytest.approx(v0 * B)
    assert res.subsets_evaluated == 32
    assert res.method is Method.EXHAUSTIVE


def test_empty_subset_wins_when_phase1_is_weak():
    res = exhaustive_select([1e-6, 1e-6], additive_phase2(100.0, [1.0, 1.0]), B, B)
    assert res.chosen_set == ()
    assert res.throughput.t1 == 0.0
    assert res.throughput.relative_improvement == pytest.approx(1.0)


@settings(max_examples=60, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    n=st.integers(0, 7),
    objective=st.sampled_from(["harmonic", "min_rate"]),
)
def test_exhaustive_matches_naive_enumeration(seed, n, objective):
    rng = np.random.default_rng(seed)
    rates = list(rng.exponential(3.0, n))
    p2 = additive_phase2(rng.exponential(1.0), list(rng.exponential(2.0, n)))
    best, _ = naive_best(rates, p2, objective)
    res = exhaustive_select(rates, p2, B, B, objective)
    assert res.objective == pytest.approx(best, rel=1e-12)
    assert res.subsets_evaluated == 2**n


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(0, 7))
def test_greedy_bounded_by_exhaustive_and_direct(seed, n):
    rng = np.random.default_rng(seed)
    rates = list(rng.exponential(3.0, n))
    p2 = additive_phase2(rng.exponential(1.0), list(rng.exponential(2.0, n)))
    g = greedy_select(rates, p2, B, B)
    e = exhaustive_select(rates, p2, B, B)
    assert g.objective <= e.objective * (1 + 1e-12)
    assert g.objective >= B * p2(()) * (1 - 1e-12)
    assert g.subsets_evaluated <= 2 * n + 2


def test_greedy_starts_from_feasible_prefix():
    # ranking 0 > 3 > 2 > 4 > 1; top-3 {0, 3, 2}: B1 * R_2 = 3B covers C2 = log2(8)B = 3B
    # while top-4 and top-5 do not. Adding UE 4 then drops the objective.
    g = greedy_select(RATES5, P2_5, B, B)
    assert g.trace == (pytest.approx(1.5 * B),)
    assert g.chosen_set == (0, 2, 3)
    assert g.objective == pytest.approx(evaluate_subset((0, 2, 3), RATES5, P2_5, B, B).bits_delivered)


def test_select_all_and_method_tags():
    r = select_all(RATES5, P2_5, B, B)
    assert r.chosen_set == (0, 1, 2, 3, 4) and r.method is Method.ALL
    assert r.objective == pytest.approx(evaluate_subset(range(5), RATES5, P2_5, B, B).bits_delivered)


def test_exhaustive_cap():
    with pytest.raises(ValueError):
        exhaustive_select([1.0] * 21, lambda s: 1.0, B, B)


def test_vectorized_evaluator_path_matches_callable_path():
    rng = np.random.default_rng(12)
    n = 6
    chans = list(draw_channels(n + 1, 4, 2, rng))
    budgets = [LinkBudget(1.0, 1.0, 1.0, 1.0, s) for s in rng.uniform(0.05, 1.0, n + 1)]
    ev = CjtSubsetEvaluator(budgets[0], chans[0], budgets[1:], chans[1:])
    rates = list(rng.exponential(2.0, n))
    fast = exhaustive_select(rates, ev, B, B)
    slow = exhaustive_select(rates, lambda s: ev(s), B, B)
    assert fast.chosen_set == slow.chosen_set
    assert fast.objective == pytest.approx(slow.objective, rel=1e-12)
    assert Objective("min_rate") is Objective.MIN_RATE
