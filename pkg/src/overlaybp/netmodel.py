"""Physical network, router overlay and tunnel constants.

A tunnel is the overlay edge between two routers, realized by a fixed
physical path whose interior nodes are forwarders. All capacities are in
packets per slot.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Any, Hashable, Iterable, Mapping, Sequence

Node = Hashable
Link = tuple  # (tail, head)


class OverlayError(ValueError):
    """Raised when a network or overlay description is malformed."""


@dataclass(frozen=True)
class PhysicalNetwork:
    """Directed graph with integer link capacities."""

    nodes: tuple
    capacity: Mapping[Link, int]

    def __post_init__(self) -> None:
        node_set = set(self.nodes)
        if len(node_set) != len(self.nodes):
            raise OverlayError("duplicate node identifiers")
        for (u, v), cap in self.capacity.items():
            if u == v:
                raise OverlayError(f"self-loop on node {u!r}")
            if u not in node_set or v not in node_set:
                raise OverlayError(f"link ({u!r}, {v!r}) references an unknown node")
            if not isinstance(cap, int) or isinstance(cap, bool) or cap < 1:
                raise OverlayError(f"link ({u!r}, {v!r}) needs a positive integer capacity, got {cap!r}")

    @classmethod
    def from_links(cls, nodes: Iterable[Node], links: Iterable[Sequence]) -> PhysicalNetwork:
        capacity: dict[Link, int] = {}
        for u, v, cap in links:
            if (u, v) in capacity:
                raise OverlayError(f"duplicate link ({u!r}, {v!r})")
            capacity[(u, v)] = int(cap) if float(cap).is_integer() else cap
        return cls(tuple(nodes), capacity)

    @property
    def links(self) -> list[Link]:
        return sorted(self.capacity, key=_link_key)

    def successors(self, node: Node) -> list[Node]:
        return sorted((v for (u, v) in self.capacity if u == node), key=_node_key)

    def hop_counts_to(self, target: Node) -> dict[Node, int]:
        """Breadth-first hop count from every node that can reach ``target``."""
        preds: dict[Node, list[Node]] = {}
        for u, v in self.capacity:
            preds.setdefault(v, []).append(u)
        dist = {target: 0}
        queue = deque([target])
        while queue:
            v = queue.popleft()
            for u in preds.get(v, ()):
                if u not in dist:
                    dist[u] = dist[v] + 1
                    queue.append(u)
        return dist

    def scaled(self, factor: int) -> PhysicalNetwork:
        return PhysicalNetwork(self.nodes, {k: c * factor for k, c in self.capacity.items()})

    def to_dict(self) -> dict[str, Any]:
        return {
            "nodes": list(self.nodes),
            "links": [[u, v, self.capacity[(u, v)]] for u, v in self.links],
        }


@dataclass(frozen=True)
class Tunnel:
    """Overlay edge ``src -> dst`` carried over a fixed physical path."""

    src: Node
    dst: Node
    path: tuple
    link_capacities: tuple

    @property
    def link_sequence(self) -> list[Link]:
        return list(zip(self.path[:-1], self.path[1:]))

    @property
    def forwarders(self) -> tuple:
        return self.path[1:-1]

    @property
    def M(self) -> int:
        return len(self.path) - 2

    @property
    def R_in(self) -> int:
        return self.link_capacities[0]

    @property
    def R_min(self) -> int:
        return min(self.link_capacities)

    @property
    def R_max(self) -> int:
        return max(self.link_capacities)

    @property
    def T0_term(self) -> int:
        m = self.M
        return m * self.R_min + m * (m - 1) // 2 * self.R_max

    @property
    def key(self) -> tuple:
        return (self.src, self.dst)

    def __str__(self) -> str:
        return f"{self.src}->{self.dst}"


@dataclass(frozen=True)
class ThresholdSet:
    T0: int
    T: int
    F_max: int
    floor: int


@dataclass(frozen=True)
class OverlapReport:
    conflicts: tuple = ()

    @property
    def ok(self) -> bool:
        return not self.conflicts

    def __bool__(self) -> bool:
        return self.ok


@dataclass(frozen=True)
class OverlaySpec:
    """Routers plus one tunnel per assigned router-to-router path.

    ``physical`` marks the degenerate overlay where every node is a router
    and every link is a zero-forwarder tunnel; hop-by-hop backpressure runs
    on that form.
    """

    network: PhysicalNetwork
    routers: tuple
    tunnels: tuple = field(default=())
    physical: bool = False

    def tunnel(self, src: Node, dst: Node) -> Tunnel:
        for t in self.tunnels:
            if t.src == src and t.dst == dst:
                return t
        raise KeyError((src, dst))

    def out_tunnels(self, router: Node) -> list[Tunnel]:
        return [t for t in self.tunnels if t.src == router]

    def reaches(self, target: Node) -> set:
        """Routers from which ``target`` is reachable through tunnels."""
        seen = {target}
        frontier = [target]
        while frontier:
            v = frontier.pop()
            for t in self.tunnels:
                if t.dst == v and t.src not in seen:
                    seen.add(t.src)
                    frontier.append(t.src)
        return seen

    def to_dict(self) -> dict[str, Any]:
        return {
            **self.network.to_dict(),
            "routers": list(self.routers),
            "paths": [list(t.path) for t in self.tunnels],
            "physical": self.physical,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> OverlaySpec:
        net = PhysicalNetwork.from_links(data["nodes"], data["links"])
        if data.get("physical"):
            return full_overlay(net)
        return build_overlay(net, data["routers"], data["paths"])


@dataclass(frozen=True)
class Session:
    """Traffic class with one destination router.

    ``rates`` maps each source router to its mean arrival rate in packets
    per slot. For load sweeps the rates also fix how a session's total load
    splits across its sources.
    """

    id: Hashable
    dest: Node
    rates: Mapping[Node, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        rates = {r: float(v) for r, v in dict(self.rates).items()}
        for r, v in rates.items():
            if v < 0:
                raise OverlayError(f"session {self.id!r} has a negative rate at {r!r}")
            if r == self.dest and v > 0:
                raise OverlayError(f"session {self.id!r} has arrivals at its own destination")
        object.__setattr__(self, "rates", rates)

    @property
    def sources(self) -> list:
        return sort_ids(self.rates)

    @property
    def total_rate(self) -> float:
        return sum(self.rates.values())

    def with_total(self, total: float) -> Session:
        """Same source split scaled so the rates sum to ``total``."""
        srcs = self.sources
        if not srcs:
            raise OverlayError(f"session {self.id!r} lists no source router")
        base = self.total_rate
        if base > 0:
            rates = {r: total * self.rates[r] / base for r in srcs}
        else:
            rates = {r: total / len(srcs) for r in srcs}
        return Session(self.id, self.dest, rates)

    def to_dict(self) -> dict[str, Any]:
        return {"id": self.id, "dest": self.dest, "rates": [[r, self.rates[r]] for r in self.sources]}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> Session:
        rates = data.get("rates", {})
        if not isinstance(rates, Mapping):
            rates = {r: v for r, v in rates}
        if "source" in data:
            rates = {data["source"]: data.get("rate", 0.0), **rates}
        return cls(data["id"], data["dest"], rates)


def _node_key(node: Node) -> tuple:
    return (type(node).__name__, node) if not isinstance(node, (int, float)) else ("", node)


def sort_ids(ids: Iterable[Hashable]) -> list:
    """Sort node or session identifiers, numbers numerically and before strings."""
    return sorted(ids, key=_node_key)


def _link_key(link: Link) -> tuple:
    return (_node_key(link[0]), _node_key(link[1]))


def build_overlay(
    net: PhysicalNetwork,
    routers: Iterable[Node],
    paths: Iterable[Sequence[Node]] | Mapping[tuple, Sequence[Node]],
) -> OverlaySpec:
    """Derive the tunnel overlay from explicit router-to-router paths."""
    routers = tuple(sorted(set(routers), key=_node_key))
    node_set = set(net.nodes)
    router_set = set(routers)
    for r in routers:
        if r not in node_set:
            raise OverlayError(f"router {r!r} is not a node of the network")
    if isinstance(paths, Mapping):
        paths = list(paths.values())
    tunnels: dict[tuple, Tunnel] = {}
    for raw in paths:
        path = tuple(raw)
        if len(path) < 2:
            raise OverlayError(f"path {path!r} needs at least two nodes")
        src, dst = path[0], path[-1]
        if src not in router_set or dst not in router_set:
            raise OverlayError(f"path {path!r} must start and end at routers")
        if len(set(path)) != len(path):
            raise OverlayError(f"path {path!r} is not acyclic")
        for node in path[1:-1]:
            if node in router_set:
                raise OverlayError(f"path {path!r} has router {node!r} as an interior node")
        caps = []
        for hop in zip(path[:-1], path[1:]):
            if hop not in net.capacity:
                raise OverlayError(f"path {path!r} uses nonexistent link {hop!r}")
            caps.append(net.capacity[hop])
        if (src, dst) in tunnels:
            raise OverlayError(f"two paths assigned to router pair ({src!r}, {dst!r})")
        tunnels[(src, dst)] = Tunnel(src, dst, path, tuple(caps))
    order = {r: k for k, r in enumerate(routers)}
    ordered = tuple(sorted(tunnels.values(), key=lambda t: (order[t.src], order[t.dst])))
    return OverlaySpec(net, routers, ordered)


def full_overlay(net: PhysicalNetwork) -> OverlaySpec:
    """Every node a router, every link a zero-forwarder tunnel."""
    ov = build_overlay(net, net.nodes, [list(link) for link in net.links])
    return OverlaySpec(ov.network, ov.routers, ov.tunnels, physical=True)


def validate_non_overlapping(ov: OverlaySpec) -> OverlapReport:
    """Pairs of tunnels sharing a physical link other than their input links."""
    owned = [set(t.link_sequence[1:]) for t in ov.tunnels]
    conflicts = []
    for a in range(len(ov.tunnels)):
        for b in range(a + 1, len(ov.tunnels)):
            shared = owned[a] & owned[b]
            if shared:
                conflicts.append(
                    (ov.tunnels[a].key, ov.tunnels[b].key, tuple(sorted(shared, key=_link_key)))
                )
    return OverlapReport(tuple(conflicts))


def thresholds(ov: OverlaySpec, override_T: int | None = None) -> ThresholdSet:
    """Loaded-tunnel level, routing threshold and tunnel backlog bound.

    ``override_T`` may only raise the threshold above its floor
    ``T0 + max R_in``; lower values are rejected.
    """
    if not ov.tunnels:
        raise OverlayError("overlay has no tunnels")
    t0 = max(t.T0_term for t in ov.tunnels)
    r_in = max(t.R_in for t in ov.tunnels)
    floor = t0 + r_in
    if override_T is None:
        T = floor
    else:
        if override_T < floor:
            raise OverlayError(f"threshold T={override_T} is below the floor T0 + max R_in = {floor}")
        T = int(override_T)
    return ThresholdSet(T0=t0, T=T, F_max=T + r_in, floor=floor)


def forwarder_shortest_path(net: PhysicalNetwork, src: Node, dst: Node, routers: set) -> list | None:
    """Fewest-hop path whose interior avoids routers; ties go to lower node ids."""
    prev: dict[Node, Node] = {src: src}
    queue = deque([src])
    while queue:
        u = queue.popleft()
        if u == dst:
            break
        if u != src and u in routers:
            continue
        for v in net.successors(u):
            if v not in prev:
                prev[v] = u
                queue.append(v)
    if dst not in prev:
        return None
    path = [dst]
    while path[-1] != src:
        path.append(prev[path[-1]])
    return path[::-1]


def shortest_path_overlay(net: PhysicalNetwork, routers: Iterable[Node]) -> OverlaySpec:
    """Overlay with one forwarder-only shortest path per reachable router pair."""
    routers = sorted(set(routers), key=_node_key)
    rset = set(routers)
    paths = []
    for i in routers:
        for j in routers:
            if i == j:
                continue
            p = forwarder_shortest_path(net, i, j, rset)
            if p is not None:
                paths.append(p)
    return build_overlay(net, routers, paths)
