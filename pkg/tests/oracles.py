"""Independent oracles for the region program.

``grid_eps`` brute-forces the best slack over a 1e-3 grid of flow values,
with every constraint written out by hand for each instance.
``scipy_eps`` rebuilds the program from the overlay with its own loops and
solves it with HiGHS.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import linprog

from overlaybp import PhysicalNetwork, Session, build_overlay

STEP = 1e-3


def _grid(hi: float) -> np.ndarray:
    return np.round(np.arange(0.0, hi + STEP / 2, STEP), 9)


# each instance: overlay, sessions, grid ranges, slack as a function of the flows
def single_tunnel():
    net = PhysicalNetwork.from_links("ab", [("a", "b", 1)])
    ov = build_overlay(net, "ab", [("a", "b")])
    sessions = [Session(1, "b", {"a": 0.4})]

    def slack(f):
        return np.minimum(f - 0.4, 1.0 - f)

    return ov, sessions, [_grid(1.0)], slack


def series_pair():
    net = PhysicalNetwork.from_links("aXcb", [("a", "X", 2), ("X", "c", 3), ("c", "b", 1)])
    ov = build_overlay(net, "abc", [("a", "X", "c"), ("c", "b")])
    sessions = [Session(1, "b", {"a": 0.6})]

    def slack(f1, f2):
        # a: 0.6 + e <= f1; c: f1 + e <= f2; tunnel caps 2 and 1
        return np.minimum.reduce([f1 - 0.6, f2 - f1, 2.0 - f1, 1.0 - f2])

    return ov, sessions, [_grid(2.0), _grid(1.0)], slack


def shared_tunnel():
    net = PhysicalNetwork.from_links("aXb", [("a", "X", 1), ("X", "b", 1)])
    ov = build_overlay(net, "ab", [("a", "X", "b")])
    sessions = [Session(1, "b", {"a": 0.3}), Session(2, "b", {"a": 0.2})]

    def slack(f1, f2):
        return np.minimum.reduce([f1 - 0.3, f2 - 0.2, 1.0 - f1 - f2])

    return ov, sessions, [_grid(1.0), _grid(1.0)], slack


INSTANCES = {"single_tunnel": single_tunnel, "series_pair": series_pair, "shared_tunnel": shared_tunnel}


def grid_eps(instance) -> float:
    _, _, axes, slack = instance
    mesh = np.meshgrid(*axes, indexing="ij")
    return float(slack(*mesh).max())


def scipy_eps(ov, sessions) -> float:
    """Best slack from an independently assembled program solved by HiGHS."""
    cols, reaches = [], {}
    for s in sessions:
        # routers that can reach the destination through tunnels
        reach, grew = {s.dest}, True
        while grew:
            grew = False
            for t in ov.tunnels:
                if t.dst in reach and t.src not in reach:
                    reach.add(t.src)
                    grew = True
        for t in ov.tunnels:
            if t.src != s.dest and t.dst in reach:
                cols.append((t, s))
        reaches[s.id] = reach
    n = len(cols) + 1  # last column is eps (free)
    A, b = [], []
    for s in sessions:
        for i in ov.routers:
            if i == s.dest or i not in reaches[s.id]:
                continue
            row = np.zeros(n)
            for j, (t, c) in enumerate(cols):
                if c is s and t.dst == i:
                    row[j] += 1
                if c is s and t.src == i:
                    row[j] -= 1
            row[-1] = 1
            A.append(row)
            b.append(-s.rates.get(i, 0.0))
    for t in ov.tunnels:
        row = np.zeros(n)
        for j, (u, _) in enumerate(cols):
            row[j] = float(u is t)
        row[-1] = 1
        A.append(row)
        b.append(t.R_min)
    links = {}
    for t in ov.tunnels:
        for lk in t.link_sequence:
            links.setdefault(lk, []).append(t)
    for lk, ts in links.items():
        if len(ts) > 1:
            row = np.zeros(n)
            for j, (u, _) in enumerate(cols):
                row[j] = float(any(u is t for t in ts))
            row[-1] = 1
            A.append(row)
            b.append(ov.network.capacity[lk])
    c = np.zeros(n)
    c[-1] = -1
    bounds = [(0, None)] * (n - 1) + [(None, None)]
    res = linprog(c, A_ub=np.array(A), b_ub=np.array(b), bounds=bounds, method="highs")
    assert res.status == 0, res.message
    return float(-res.fun)
