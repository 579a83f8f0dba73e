"""Routing policies for routers.

Every policy reads the slot-start router backlogs ``Q`` and tunnel backlogs
``F`` and returns how many packets of which session each tunnel receives.
The same compiled decision routine drives both the simulator and the
``decide_*`` helpers below.

Policy names:

* ``bpt``: backpressure over tunnels, gated by ``F <= T``.
* ``bpt2``: like ``bpt`` but the tunnel backlog joins the receiver side,
  ``Q_i > Q_j + F``; meant for overlapping tunnels.
* ``bpo``: backpressure over tunnels with no gate.
* ``bp``: hop-by-hop backpressure where every node is a router.
* ``bpsp``: ``bp`` with a shortest-path hop bias in the session choice.
* ``sp``: every session follows its fixed shortest overlay route.
* ``lambda-or``: stationary randomized oracle built from a flow
  decomposition.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Hashable, Mapping, Sequence

import numpy as np

from . import _kernel as K
from .netmodel import OverlayError, OverlaySpec, Session, sort_ids, thresholds
from .region import FlowDecomposition, eligible

_CODES = {
    "bpt": K.BPT,
    "bpt2": K.BPT2,
    "bpo": K.BPO,
    "bp": K.BP,
    "bpsp": K.BPSP,
    "sp": K.SP,
    "lambda-or": K.LOR,
}
_ALIASES = {
    "bp-t": "bpt",
    "bp-t2": "bpt2",
    "bp-o": "bpo",
    "bp-physical": "bp",
    "bp_physical": "bp",
    "bp-sp": "bpsp",
    "bp_sp": "bpsp",
    "shortest-path": "sp",
    "shortest_path": "sp",
    "lambda_or": "lambda-or",
    "lor": "lambda-or",
}
PHYSICAL = {"bp", "bpsp"}
THRESHOLDED = {"bpt", "bpt2", "lambda-or"}


def canonical_name(name: str) -> str:
    """Normalize a policy name or alias, e.g. ``"BP-T"`` to ``"bpt"``."""
    kind = name.lower()
    kind = _ALIASES.get(kind, kind)
    if kind not in _CODES:
        raise ValueError(f"unknown policy {name!r}")
    return kind


@dataclass(frozen=True)
class Policy:
    """Routing policy and its parameters.

    Args:
        kind: Policy name, see the module docstring.
        T: Tunnel threshold. Defaults to the smallest admissible value.
        allow_below_floor: Let ``bpt2`` use a threshold under the floor.
        decomposition: Flow rates for ``lambda-or``.
        gate: ``bpsp`` transmit test, ``"raw"`` (positive backlog
            differential) or ``"biased"`` (positive biased score).
    """

    kind: str
    T: int | None = None
    allow_below_floor: bool = False
    decomposition: FlowDecomposition | None = None
    gate: str = "raw"

    def __post_init__(self) -> None:
        kind = canonical_name(self.kind)
        object.__setattr__(self, "kind", kind)
        if self.gate not in ("raw", "biased"):
            raise ValueError(f"unknown gate {self.gate!r}")
        if kind == "lambda-or" and self.decomposition is None:
            raise ValueError("lambda-or needs a flow decomposition")
        if self.allow_below_floor and kind != "bpt2":
            raise ValueError("only bpt2 may run below the threshold floor")

    @property
    def code(self) -> int:
        return _CODES[self.kind]

    @property
    def physical(self) -> bool:
        return self.kind in PHYSICAL

    def threshold(self, ov: OverlaySpec) -> int:
        """Effective ``T``; zero for policies without a tunnel gate."""
        if self.kind not in THRESHOLDED:
            return 0
        if self.T is not None and self.allow_below_floor:
            return int(self.T)
        return thresholds(ov, self.T).T

    def to_dict(self) -> dict:
        d: dict = {"name": self.kind}
        if self.T is not None:
            d["T"] = self.T
        if self.allow_below_floor:
            d["allow_below_floor"] = True
        if self.kind == "bpsp":
            d["gate"] = self.gate
        return d


@dataclass
class CompiledPolicy:
    """Dense arrays consumed by the compiled decision routine."""

    code: int
    T: int
    biased_gate: bool
    elig: np.ndarray  # [E, S] bool
    bias: np.ndarray  # [R, S] int64
    sp_next: np.ndarray  # [R, S] int64, -1 for none
    lor_f: np.ndarray  # [E, S] float64
    fmax: int


def shortest_routes(ov: OverlaySpec, sessions: Sequence[Session]) -> np.ndarray:
    """Next tunnel index per (router, session) on a fewest-physical-hop route.

    A tunnel with ``M`` forwarders counts ``M + 1`` hops. Ties go to the
    tunnel with the lowest index, which follows router id order.
    """
    R, S = len(ov.routers), len(sessions)
    ridx = {r: k for k, r in enumerate(ov.routers)}
    nxt = np.full((R, S), -1, np.int64)
    for si, s in enumerate(sessions):
        dist = {ridx[s.dest]: 0}
        heap = [(0, ridx[s.dest])]
        while heap:
            d, v = heapq.heappop(heap)
            if d > dist.get(v, np.inf):
                continue
            for t in ov.tunnels:
                if ridx[t.dst] == v:
                    u = ridx[t.src]
                    nd = d + t.M + 1
                    if nd < dist.get(u, np.inf):
                        dist[u] = nd
                        heapq.heappush(heap, (nd, u))
        for r in range(R):
            if r == ridx[s.dest] or r not in dist:
                continue
            for e, t in enumerate(ov.tunnels):
                if ridx[t.src] == r and dist.get(ridx[t.dst], np.inf) + t.M + 1 == dist[r]:
                    nxt[r, si] = e
                    break
    return nxt


def compile_policy(policy: Policy, ov: OverlaySpec, sessions: Sequence[Session]) -> CompiledPolicy:
    """Resolve a policy against an overlay and session list."""
    if policy.physical and not ov.physical:
        raise OverlayError(f"policy {policy.kind!r} controls every node and needs the physical overlay")
    E, R, S = len(ov.tunnels), len(ov.routers), len(sessions)
    elig = np.zeros((E, S), np.bool_)
    for si, s in enumerate(sessions):
        elig[:, si] = eligible(ov, s)
    bias = np.zeros((R, S), np.int64)
    if policy.kind == "bpsp":
        for si, s in enumerate(sessions):
            hops = ov.network.hop_counts_to(s.dest)
            for r, node in enumerate(ov.routers):
                bias[r, si] = hops.get(node, 0)
    sp_next = shortest_routes(ov, sessions) if policy.kind == "sp" else np.full((R, S), -1, np.int64)
    lor_f = np.zeros((E, S))
    T = policy.threshold(ov)
    if policy.kind == "lambda-or":
        ids = [s.id for s in sessions]
        for (key, c), v in policy.decomposition.flows.items():
            if c not in ids:
                raise OverlayError(f"decomposition names unknown session {c!r}")
            lor_f[[t.key for t in ov.tunnels].index(key), ids.index(c)] = v
        for e, t in enumerate(ov.tunnels):
            if lor_f[e].sum() >= t.R_min:
                raise OverlayError(f"decomposition loads tunnel {t} at {lor_f[e].sum()} >= R_min = {t.R_min}")
    fmax = T + max(t.R_in for t in ov.tunnels) if policy.kind in ("bpt", "bpt2") else -1
    return CompiledPolicy(policy.code, T, policy.gate == "biased", elig, bias, sp_next, lor_f, fmax)


@dataclass(frozen=True)
class RoutingDecision:
    """Packets injected per tunnel and session in one slot."""

    mu: Mapping[tuple, Mapping[Hashable, int]]

    def session(self, key: tuple) -> Hashable | None:
        for c, n in self.mu.get(key, {}).items():
            if n > 0:
                return c
        return None

    def total(self, key: tuple) -> int:
        return sum(self.mu.get(key, {}).values())


def _sessions_from(Q: Mapping, sessions: Sequence[Session] | None, ov: OverlaySpec) -> list[Session]:
    if sessions is not None:
        return list(sessions)
    ids = sort_ids({c for q in Q.values() for c in q})
    # without destinations every tunnel is open to every session
    return [Session(c, None, {}) for c in ids]


def _decide(policy: Policy, Q, F, ov: OverlaySpec, sessions, u=None) -> RoutingDecision:
    sess = _sessions_from(Q, sessions, ov)
    E, R, S = len(ov.tunnels), len(ov.routers), len(sess)
    if sessions is None:
        cp = compile_policy(Policy(policy.kind, policy.T, policy.allow_below_floor, policy.decomposition, policy.gate), ov, [])
        cp.elig = np.ones((E, S), np.bool_)
        cp.bias = np.zeros((R, S), np.int64)
        cp.sp_next = np.full((R, S), -1, np.int64)
        cp.lor_f = np.zeros((E, S))
    else:
        cp = compile_policy(policy, ov, sess)
    Qa = np.zeros((R, S), np.int64)
    for r, node in enumerate(ov.routers):
        for si, s in enumerate(sess):
            Qa[r, si] = Q.get(node, {}).get(s.id, 0)
    Fa = np.array([F.get(t.key, 0) if F else 0 for t in ov.tunnels], np.int64)
    ua = np.zeros((E, 2)) if u is None else np.asarray(u, dtype=float).reshape(E, 2)
    mu = np.zeros((E, S), np.int64)
    w = np.zeros(E, np.int64)
    K.decide(
        cp.code, Qa, Fa, ua, cp.T, cp.biased_gate, cp.elig, cp.bias, cp.sp_next, cp.lor_f,
        *_tunnel_arrays(ov), mu, w,
    )
    out = {}
    for e, t in enumerate(ov.tunnels):
        out[t.key] = {s.id: int(mu[e, si]) for si, s in enumerate(sess) if mu[e, si] > 0}
    return RoutingDecision(out)


def _tunnel_arrays(ov: OverlaySpec):
    ridx = {r: k for k, r in enumerate(ov.routers)}
    return (
        np.array([ridx[t.src] for t in ov.tunnels], np.int64),
        np.array([ridx[t.dst] for t in ov.tunnels], np.int64),
        np.array([t.R_in for t in ov.tunnels], np.int64),
        np.array([t.R_min for t in ov.tunnels], np.int64),
    )


def decide_bpt(Q, F, ov, T=None, sessions=None) -> RoutingDecision:
    """Backpressure over tunnels with the ``F <= T`` gate.

    ``Q`` maps router to ``{session: backlog}``, ``F`` maps tunnel key to
    its in-flight backlog. Without ``sessions`` every tunnel is open to
    every session.
    """
    return _decide(Policy("bpt", T), Q, F, ov, sessions)


def decide_bpt2(Q, F, ov, T=None, sessions=None, allow_below_floor=False) -> RoutingDecision:
    return _decide(Policy("bpt2", T, allow_below_floor), Q, F, ov, sessions)


def decide_bpo(Q, ov, sessions=None) -> RoutingDecision:
    return _decide(Policy("bpo"), Q, None, ov, sessions)


def decide_bp_physical(Q, ov, sessions=None) -> RoutingDecision:
    return _decide(Policy("bp"), Q, None, ov, sessions)


def decide_bpsp(Q, ov, sessions, gate="raw") -> RoutingDecision:
    return _decide(Policy("bpsp", gate=gate), Q, None, ov, sessions)


def decide_shortest_path(Q, ov, sessions) -> RoutingDecision:
    return _decide(Policy("sp"), Q, None, ov, sessions)


def decide_lambda_or(F, ov, decomposition, sessions, u, T=None) -> RoutingDecision:
    """Oracle decision for given uniforms ``u[e] = (session draw, injection draw)``."""
    return _decide(Policy("lambda-or", T, decomposition=decomposition), {}, F, ov, sessions, u)
