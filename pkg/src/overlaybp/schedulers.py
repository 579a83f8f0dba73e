"""Work-conserving session scheduling at forwarders.

Every discipline serves exactly ``min(capacity, backlog)`` packets per slot
and only decides how that budget is split among sessions. Within a session
packets always leave oldest first.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, Sequence

import numpy as np
from numba import njit

from .netmodel import sort_ids

FIFO = 0
HLPPS = 1
LQF = 2
PRIORITY = 3

_NAMES = {"fifo": FIFO, "hlpps": HLPPS, "lqf": LQF, "priority": PRIORITY, "strict-priority": PRIORITY}


@dataclass(frozen=True)
class Discipline:
    """Forwarder discipline; ``order`` lists sessions for strict priority."""

    kind: str = "fifo"
    order: tuple = ()

    def __post_init__(self) -> None:
        kind = self.kind.lower().replace("_", "-")
        if kind not in _NAMES:
            raise ValueError(f"unknown discipline {self.kind!r}")
        object.__setattr__(self, "kind", "priority" if kind == "strict-priority" else kind)
        object.__setattr__(self, "order", tuple(self.order))
        if self.kind == "priority" and not self.order:
            raise ValueError("strict priority needs an explicit session order")

    @property
    def code(self) -> int:
        return _NAMES[self.kind]

    def ranks(self, sessions: Sequence[Hashable]) -> np.ndarray:
        """Priority rank per session index (0 is served first)."""
        if self.kind != "priority":
            return np.arange(len(sessions), dtype=np.int64)
        if sorted(map(repr, self.order)) != sorted(map(repr, sessions)):
            raise ValueError(f"priority order {self.order!r} must list sessions {tuple(sessions)!r} exactly once")
        return np.array([self.order.index(s) for s in sessions], dtype=np.int64)

    def to_dict(self) -> dict:
        d: dict = {"name": self.kind}
        if self.order:
            d["order"] = list(self.order)
        return d


@njit(cache=True)
def split_counts(kind, n, budget, rank):
    """Per-session service counts for one forwarder link.

    ``n`` holds the queued packets per session index. FIFO is not a count
    rule and is resolved by arrival order in the caller.
    """
    S = n.shape[0]
    out = np.zeros(S, np.int64)
    if budget <= 0:
        return out
    if kind == HLPPS:
        remaining = budget
        while remaining > 0:
            total = 0
            for c in range(S):
                total += n[c] - out[c]
            if total <= 0:
                break
            grant = np.zeros(S, np.int64)
            rem = np.zeros(S, np.int64)
            given = 0
            for c in range(S):
                left = n[c] - out[c]
                grant[c] = (remaining * left) // total
                rem[c] = (remaining * left) % total
                if grant[c] > left:
                    grant[c] = left
                given += grant[c]
            # largest remainder, ties to the lower session index
            while given < remaining:
                best = -1
                for c in range(S):
                    if grant[c] < n[c] - out[c] and (best < 0 or rem[c] > rem[best]):
                        best = c
                if best < 0:
                    break
                grant[best] += 1
                rem[best] = -1
                given += 1
            for c in range(S):
                out[c] += grant[c]
            remaining -= given
            if given == 0:
                break
        return out
    # greedy rules: LQF by descending backlog, PRIORITY by rank
    order = np.empty(S, np.int64)
    for c in range(S):
        order[c] = c
    for a in range(1, S):
        c = order[a]
        b = a - 1
        while b >= 0:
            d = order[b]
            if kind == LQF:
                before = n[c] > n[d] or (n[c] == n[d] and c < d)
            else:
                before = rank[c] < rank[d]
            if not before:
                break
            order[b + 1] = d
            b -= 1
        order[b + 1] = c
    remaining = budget
    for k in range(S):
        c = order[k]
        take = min(n[c], remaining)
        out[c] = take
        remaining -= take
        if remaining == 0:
            break
    return out


def allocate(discipline: Discipline, queue: Sequence[Hashable], budget: int, sessions: Sequence[Hashable] | None = None):
    """Choose which queued packets a forwarder link sends this slot.

    Args:
        discipline: Scheduling rule.
        queue: Session id of every queued packet, oldest first.
        budget: Number of packets to send, ``min(capacity, len(queue))``.
        sessions: All session ids in id order; defaults to those present.

    Returns:
        ``(counts, picked)``: packets sent per session and the queue
        positions of the advanced packets in ascending order.
    """
    if budget < 0 or budget > len(queue):
        raise ValueError(f"budget {budget} exceeds queue length {len(queue)}")
    if sessions is None:
        sessions = list(discipline.order) if discipline.kind == "priority" else sort_ids(set(queue))
    sessions = list(sessions)
    index = {s: k for k, s in enumerate(sessions)}
    if discipline.kind == "fifo":
        picked = list(range(budget))
    else:
        n = np.zeros(len(sessions), np.int64)
        for s in queue:
            n[index[s]] += 1
        quota = split_counts(discipline.code, n, budget, discipline.ranks(sessions))
        picked = []
        for pos, s in enumerate(queue):
            if quota[index[s]] > 0:
                quota[index[s]] -= 1
                picked.append(pos)
    counts = {s: 0 for s in sessions}
    for pos in picked:
        counts[queue[pos]] += 1
    return counts, picked
