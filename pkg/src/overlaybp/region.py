"""Overlay throughput region as a linear program.

Variables are the per-tunnel, per-session flow rates ``f`` plus a free
slack ``eps``. An arrival matrix lies in the interior of the region exactly
when the optimal slack is positive:

* conservation at every router ``i`` that can reach session ``c``'s
  destination: ``lam_i^c + sum_in f^c + eps <= sum_out f^c``;
* tunnel capacity: ``sum_c f_ij^c + eps <= R_min``;
* shared physical links: the tunnels crossing one link jointly respect its
  capacity (only emitted when a link carries more than one tunnel).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Hashable, Mapping, Sequence

import numpy as np

from .netmodel import OverlayError, OverlaySpec, Session
from .simplex import OPTIMAL, linprog_max


class RegionError(ValueError):
    """Raised for malformed region queries."""


@dataclass(frozen=True)
class FlowDecomposition:
    """Flow rates keyed by ``((src, dst), session)`` and the slack they support.

    ``slack`` is the ``eps`` these flows satisfy; ``eps_star`` is the largest
    achievable slack for the same arrival matrix.
    """

    flows: Mapping[tuple, float]
    slack: float
    eps_star: float = float("nan")
    note: str = ""

    def tunnel_load(self, key: tuple) -> float:
        return sum(v for (k, _), v in self.flows.items() if k == key)

    def flow(self, key: tuple, session: Hashable) -> float:
        return self.flows.get((key, session), 0.0)

    def violations(self, ov: OverlaySpec, sessions: Sequence[Session], tol: float = 1e-9) -> list[str]:
        """Re-check every constraint by direct substitution."""
        out = []
        eps = self.slack
        for (key, c), v in self.flows.items():
            if v < -tol:
                out.append(f"negative flow {v} on {key} for session {c!r}")
        for t in ov.tunnels:
            load = self.tunnel_load(t.key)
            if load + eps > t.R_min + tol:
                out.append(f"tunnel {t} carries {load} + {eps} > {t.R_min}")
        for s in sessions:
            reach = ov.reaches(s.dest)
            for i in ov.routers:
                if i == s.dest or i not in reach:
                    continue
                inflow = sum(self.flow(t.key, s.id) for t in ov.tunnels if t.dst == i)
                outflow = sum(self.flow(t.key, s.id) for t in ov.out_tunnels(i))
                lhs = s.rates.get(i, 0.0) + inflow + eps
                if lhs > outflow + tol:
                    out.append(f"conservation fails at {i!r} for session {s.id!r}: {lhs} > {outflow}")
        return out

    def to_dict(self) -> dict:
        return {
            "slack": self.slack,
            "eps_star": self.eps_star,
            "flows": [[k[0], k[1], c, v] for (k, c), v in self.flows.items()],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> FlowDecomposition:
        flows = {((a, b), c): float(v) for a, b, c, v in data["flows"]}
        return cls(flows, float(data["slack"]), float(data.get("eps_star", "nan")))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    @classmethod
    def load(cls, path) -> FlowDecomposition:
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class _Program:
    columns: list = field(default_factory=list)  # (tunnel index, session index)
    A: list = field(default_factory=list)
    b: list = field(default_factory=list)
    eps_coef: list = field(default_factory=list)
    unreachable: list = field(default_factory=list)


def eligible(ov: OverlaySpec, session: Session) -> list[bool]:
    """Which tunnels may carry a session: never out of its destination, never into a dead end."""
    reach = ov.reaches(session.dest)
    return [t.src != session.dest and t.dst in reach for t in ov.tunnels]


def _program(ov: OverlaySpec, sessions: Sequence[Session]) -> _Program:
    if not ov.tunnels:
        raise OverlayError("overlay has no tunnels")
    prog = _Program()
    col = {}
    for si, s in enumerate(sessions):
        if s.dest not in ov.routers:
            raise RegionError(f"destination {s.dest!r} of session {s.id!r} is not a router")
        for e, ok in enumerate(eligible(ov, s)):
            if ok:
                col[(e, si)] = len(prog.columns)
                prog.columns.append((e, si))
    n = len(prog.columns)

    def row(coefs: dict, rhs: float, eps: float) -> None:
        a = np.zeros(n)
        for j, v in coefs.items():
            a[j] += v
        prog.A.append(a)
        prog.b.append(rhs)
        prog.eps_coef.append(eps)

    for si, s in enumerate(sessions):
        reach = ov.reaches(s.dest)
        for i in ov.routers:
            lam = s.rates.get(i, 0.0)
            if i == s.dest:
                continue
            if i not in reach:
                if lam > 0:
                    prog.unreachable.append((s.id, i))
                continue
            coefs: dict = {}
            for e, t in enumerate(ov.tunnels):
                if (e, si) not in col:
                    continue
                if t.dst == i:
                    coefs[col[(e, si)]] = coefs.get(col[(e, si)], 0.0) + 1.0
                if t.src == i:
                    coefs[col[(e, si)]] = coefs.get(col[(e, si)], 0.0) - 1.0
            row(coefs, -lam, 1.0)
    for e, t in enumerate(ov.tunnels):
        row({j: 1.0 for (ee, _), j in col.items() if ee == e}, float(t.R_min), 1.0)
    users: dict = {}
    for e, t in enumerate(ov.tunnels):
        for link in t.link_sequence:
            users.setdefault(link, []).append(e)
    for link, tun in users.items():
        if len(tun) > 1:
            row({j: 1.0 for (ee, _), j in col.items() if ee in tun}, float(ov.network.capacity[link]), 1.0)
    return prog


def _solve(ov: OverlaySpec, sessions: Sequence[Session], fixed_eps: float | None = None):
    prog = _program(ov, sessions)
    n = len(prog.columns)
    A = np.array(prog.A, dtype=float).reshape(len(prog.A), n)
    b = np.array(prog.b, dtype=float)
    ec = np.array(prog.eps_coef)
    if fixed_eps is None:
        # eps = ep - em, maximize eps
        A_full = np.hstack([A, ec[:, None], -ec[:, None]])
        c = np.zeros(n + 2)
        c[n], c[n + 1] = 1.0, -1.0
        res = linprog_max(c, A_full, b)
        if res.status != OPTIMAL:
            raise RegionError(f"region program is {res.status}")
        return prog, res.x[:n], res.x[n] - res.x[n + 1]
    res = linprog_max(-np.ones(n), A, b - ec * fixed_eps)
    if res.status != OPTIMAL:
        raise RegionError(f"flows at slack {fixed_eps} are {res.status}")
    return prog, res.x, fixed_eps


def _decomposition(ov, sessions, prog, x, eps, eps_star, note="") -> FlowDecomposition:
    flows = {}
    for (e, si), v in zip(prog.columns, x):
        flows[(ov.tunnels[e].key, sessions[si].id)] = float(max(v, 0.0))
    return FlowDecomposition(flows, float(eps), float(eps_star), note)


def feasibility(sessions: Sequence[Session], ov: OverlaySpec) -> FlowDecomposition:
    """Maximal slack ``eps*`` and a flow achieving it; ``eps* > 0`` means interior.

    Positive arrivals at a router that cannot reach the session's
    destination make the matrix unsupportable; the slack is then reported
    as ``-inf`` with a diagnostic note.
    """
    prog, x, eps = _solve(ov, sessions)
    if prog.unreachable:
        note = "; ".join(f"session {c!r} cannot reach its destination from {i!r}" for c, i in prog.unreachable)
        return _decomposition(ov, sessions, prog, x, -np.inf, -np.inf, note)
    return _decomposition(ov, sessions, prog, x, eps, eps)


def _along(sessions: Sequence[Session], direction: Mapping, rho: float) -> list[Session]:
    return [s.with_total(rho * float(direction.get(s.id, 0.0))) for s in sessions]


@dataclass(frozen=True)
class BoundaryPoint:
    rho: float
    eps: float
    note: str = ""


def boundary(
    direction: Mapping[Hashable, float],
    ov: OverlaySpec,
    sessions: Sequence[Session],
    tol: float = 1e-6,
) -> BoundaryPoint:
    """Largest ``rho`` with ``rho * direction`` in the region (``|eps*| < tol`` there).

    ``direction`` maps session ids to nonnegative weights; each session's
    load is spread over its sources in proportion to its configured rates.
    """
    w = np.array([float(direction.get(s.id, 0.0)) for s in sessions])
    if (w < 0).any() or not (w > 0).any():
        raise RegionError("direction must be nonnegative and nonzero")
    probe = feasibility(_along(sessions, direction, 1.0), ov)
    if not np.isfinite(probe.slack):
        return BoundaryPoint(0.0, probe.slack, probe.note)

    def eps_at(rho: float) -> float:
        return feasibility(_along(sessions, direction, rho), ov).slack

    lo, hi = 0.0, 1.0
    while eps_at(hi) > 0:
        lo, hi = hi, 2 * hi
        if hi > 1e12:
            raise RegionError("region is unbounded along this direction")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        e = eps_at(mid)
        if abs(e) < tol and hi - lo < tol:
            return BoundaryPoint(mid, e)
        if e > 0:
            lo = mid
        else:
            hi = mid
    mid = 0.5 * (lo + hi)
    return BoundaryPoint(mid, eps_at(mid))


def decomposition_for_oracle(sessions: Sequence[Session], ov: OverlaySpec) -> FlowDecomposition:
    """Flows supporting slack ``eps*/2`` with the least total flow.

    Every tunnel then carries strictly less than its bottleneck, as the
    randomized oracle requires.
    """
    best = feasibility(sessions, ov)
    if not best.slack > 1e-9:
        raise RegionError(f"arrival matrix is not interior (eps* = {best.slack}) {best.note}".strip())
    prog, x, eps = _solve(ov, sessions, fixed_eps=best.slack / 2)
    return _decomposition(ov, sessions, prog, x, eps, best.slack)
