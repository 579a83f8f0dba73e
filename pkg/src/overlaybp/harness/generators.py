"""Randomized non-overlapping overlays for invariant checks."""

from __future__ import annotations

import numpy as np

from ..netmodel import OverlaySpec, PhysicalNetwork, Session, build_overlay, validate_non_overlapping


def random_overlay(
    rng: np.random.Generator,
    max_routers: int = 8,
    max_forwarders: int = 4,
    max_capacity: int = 3,
    max_sessions: int = 3,
) -> tuple[OverlaySpec, list[Session]]:
    """Random overlay whose tunnels never share a link beyond their input links.

    Every tunnel gets private forwarders, except that two tunnels leaving the
    same router sometimes share their first link and forwarder. Sessions get
    unit rates at one or two sources; callers rescale them.
    """
    n_r = int(rng.integers(2, max_routers + 1))
    routers = [f"r{k}" for k in range(n_r)]
    # a ring guarantees every router reaches every other one
    pairs = {(k, (k + 1) % n_r) for k in range(n_r)} if n_r > 2 else {(0, 1), (1, 0)}
    extra = int(rng.integers(0, n_r + 1))
    for _ in range(extra):
        i, j = (int(x) for x in rng.choice(n_r, 2, replace=False))
        pairs.add((i, j))
    nodes = list(routers)
    links: dict = {}
    paths = []
    first_hop: dict = {}
    f_count = 0

    def fresh() -> str:
        nonlocal f_count
        f_count += 1
        nodes.append(f"f{f_count}")
        return nodes[-1]

    for i, j in sorted(pairs):
        m = int(rng.integers(0, max_forwarders + 1))
        path = [routers[i]]
        if m > 0 and i in first_hop and rng.random() < 0.3:
            path.append(first_hop[i])
            m -= 1
        elif m > 0:
            f = fresh()
            path.append(f)
            first_hop.setdefault(i, f)
            m -= 1
        path += [fresh() for _ in range(m)]
        path.append(routers[j])
        if len(path) == 2 and (path[0], path[1]) in links:
            continue
        for u, v in zip(path[:-1], path[1:]):
            links.setdefault((u, v), int(rng.integers(1, max_capacity + 1)))
        paths.append(path)
    net = PhysicalNetwork.from_links(nodes, [(u, v, c) for (u, v), c in links.items()])
    ov = build_overlay(net, routers, paths)
    assert validate_non_overlapping(ov).ok
    sessions = []
    for c in range(int(rng.integers(1, max_sessions + 1))):
        dest = routers[int(rng.integers(n_r))]
        others = [r for r in routers if r != dest]
        k = min(len(others), int(rng.integers(1, 3)))
        srcs = [others[int(x)] for x in rng.choice(len(others), k, replace=False)]
        sessions.append(Session(c, dest, {s: 1.0 for s in srcs}))
    return ov, sessions
