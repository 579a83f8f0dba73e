from __future__ import annotations

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from overlaybp import Discipline, allocate
from overlaybp.schedulers import HLPPS, LQF, PRIORITY, split_counts


def _counts(kind, n, budget, rank=None):
    n = np.asarray(n, np.int64)
    rank = np.arange(n.size, dtype=np.int64) if rank is None else np.asarray(rank, np.int64)
    return split_counts(kind, n, budget, rank).tolist()


def test_single_session_serves_budget():
    for d in (Discipline("fifo"), Discipline("hlpps"), Discipline("lqf"), Discipline("priority", (1,))):
        counts, picked = allocate(d, [1] * 5, 3)
        assert counts == {1: 3} and picked == [0, 1, 2]


def test_lqf_example():
    assert _counts(LQF, [4, 2], 5) == [4, 1]


def test_hlpps_example():
    # ideal shares 1.5 / 0.5, equal remainders, the tie goes to the lower id
    assert _counts(HLPPS, [3, 1], 2) == [2, 0]


def test_priority_serves_in_rank_order():
    assert _counts(PRIORITY, [2, 5, 1], 4, rank=[2, 0, 1]) == [0, 4, 0]
    assert _counts(PRIORITY, [2, 3, 1], 5, rank=[2, 0, 1]) == [1, 3, 1]


def test_fifo_picks_oldest_across_sessions():
    counts, picked = allocate(Discipline("fifo"), [2, 1, 2, 1], 3)
    assert picked == [0, 1, 2] and counts == {1: 1, 2: 2}


def test_non_fifo_keeps_session_order():
    counts, picked = allocate(Discipline("lqf"), [2, 1, 2, 2, 1], 3)
    assert counts == {1: 0, 2: 3}
    assert picked == [0, 2, 3]


def test_budget_above_queue_is_rejected():
    with pytest.raises(ValueError):
        allocate(Discipline("fifo"), [1, 2], 3)


def test_discipline_validation():
    with pytest.raises(ValueError):
        Discipline("wfq")
    with pytest.raises(ValueError):
        Discipline("priority")
    with pytest.raises(ValueError):
        Discipline("priority", (1, 2)).ranks([1, 3])
    assert Discipline("strict_priority", (2, 1)).kind == "priority"


def _check(kind, n, budget, rank):
    out = _counts(kind, n, budget, rank)
    assert sum(out) == budget
    assert all(0 <= o <= m for o, m in zip(out, n))
    total = sum(n)
    if kind == HLPPS and total:
        for o, m in zip(out, n):
            ideal = budget * m / total
            assert math.floor(ideal) <= o <= math.ceil(ideal)
    elif kind == LQF:
        order = sorted(range(len(n)), key=lambda c: (-n[c], c))
        left, expect = budget, [0] * len(n)
        for c in order:
            expect[c] = min(n[c], left)
            left -= expect[c]
        assert out == expect
    elif kind == PRIORITY:
        left, expect = budget, [0] * len(n)
        for c in sorted(range(len(n)), key=lambda c: rank[c]):
            expect[c] = min(n[c], left)
            left -= expect[c]
        assert out == expect


def test_exhaustive_small_cases():
    for S in (1, 2, 3):
        for n in itertools.product(range(5), repeat=S):
            total = sum(n)
            for budget in range(total + 1):
                for rank in itertools.permutations(range(S)):
                    for kind in (HLPPS, LQF, PRIORITY):
                        _check(kind, n, budget, rank)


@settings(max_examples=300, deadline=None)
@given(st.lists(st.integers(0, 40), min_size=1, max_size=6), st.data())
def test_work_conservation_property(n, data):
    total = sum(n)
    budget = data.draw(st.integers(0, total))
    rank = data.draw(st.permutations(range(len(n))))
    for kind in (HLPPS, LQF, PRIORITY):
        _check(kind, n, budget, rank)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.sampled_from([1, 2, 3]), min_size=1, max_size=12), st.data())
def test_allocate_takes_oldest_within_each_session(queue, data):
    budget = data.draw(st.integers(0, len(queue)))
    for d in (Discipline("fifo"), Discipline("hlpps"), Discipline("lqf"), Discipline("priority", (3, 1, 2))):
        counts, picked = allocate(d, queue, budget, [1, 2, 3])
        assert len(picked) == budget == sum(counts.values())
        for c in (1, 2, 3):
            positions = [k for k, s in enumerate(queue) if s == c]
            assert [k for k in picked if queue[k] == c] == positions[: counts[c]]
