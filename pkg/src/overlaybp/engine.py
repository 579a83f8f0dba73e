"""Slotted-time simulator.

Each slot runs in a fixed order:

1. the policy observes the slot-start router backlogs ``Q`` and tunnel
   backlogs ``F`` and decides the injections ``mu``;
2. every forwarder link serves ``min(capacity, backlog)`` of the packets it
   held at the start of the slot, split among sessions by the discipline;
3. routers remove the injected packets from their queues (padding with
   synthetic packets in dummy mode);
4. packets moved this slot land in the next link queue or, at the tunnel
   exit, in the receiving router's queue (or are delivered);
5. exogenous arrivals join the router queues.

A packet injected at slot ``t`` into a tunnel with ``M`` forwarders leaves
the tunnel during slot ``t + M``. Randomness comes from named substreams of
the scenario seed, one per (router, session) arrival process and one for
the policy, drawn in fixed-size blocks so stepping one slot at a time and
running in bulk yield the same sample path.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field
from typing import Hashable, Mapping, Sequence

import numpy as np
from numba.typed import List

from . import _kernel as K
from .netmodel import OverlayError, OverlaySpec, Session, thresholds, validate_non_overlapping
from .policies import Policy, compile_policy
from .schedulers import Discipline

BLOCK = 1 << 14
ARRIVAL_KINDS = ("batch-bernoulli", "deterministic", "binomial")


@dataclass(frozen=True)
class Packet:
    session: Hashable
    born_slot: int
    synthetic: bool = False


@dataclass(frozen=True)
class ArrivalProcess:
    """Arrival law shared by every (router, session) pair.

    ``batch-bernoulli`` delivers ``ceil(lam)`` packets with probability
    ``lam / ceil(lam)``; ``deterministic`` delivers
    ``floor((t + 1) lam) - floor(t lam)``; ``binomial`` draws
    ``Binomial(A_max, lam / A_max)``. All are capped at ``A_max``.
    """

    kind: str = "batch-bernoulli"
    A_max: int = 4

    def __post_init__(self) -> None:
        if self.kind not in ARRIVAL_KINDS:
            raise ValueError(f"unknown arrival law {self.kind!r}; expected one of {ARRIVAL_KINDS}")
        if self.A_max < 1:
            raise ValueError("A_max must be positive")

    def check_rate(self, lam: float) -> None:
        if lam < 0 or lam > self.A_max:
            raise ValueError(f"rate {lam} outside [0, A_max={self.A_max}]")

    def draw(self, rng: np.random.Generator, lam: float, t0: int, n: int) -> np.ndarray:
        if lam <= 0:
            return np.zeros(n, np.int64)
        if self.kind == "batch-bernoulli":
            size = math.ceil(lam)
            return np.where(rng.random(n) < lam / size, size, 0).astype(np.int64)
        if self.kind == "deterministic":
            t = np.arange(t0, t0 + n + 1, dtype=np.float64)
            cum = np.floor(t * lam + 1e-9)
            return np.minimum(np.diff(cum), self.A_max).astype(np.int64)
        return rng.binomial(self.A_max, lam / self.A_max, n).astype(np.int64)


def substream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for a named purpose under ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(zlib.crc32(name.encode()),)))


@dataclass
class _Layout:
    """Integer indexing of routers, sessions, tunnels and links."""

    ov: OverlaySpec
    sessions: list

    def __post_init__(self) -> None:
        ov = self.ov
        self.R, self.S, self.E = len(ov.routers), len(self.sessions), len(ov.tunnels)
        ridx = {r: k for k, r in enumerate(ov.routers)}
        self.ridx = ridx
        for s in self.sessions:
            if s.dest not in ridx:
                raise OverlayError(f"destination {s.dest!r} of session {s.id!r} is not a router")
            for r in s.rates:
                if r not in ridx:
                    raise OverlayError(f"session {s.id!r} has a source {r!r} that is not a router")
        ids = [s.id for s in self.sessions]
        if len(set(ids)) != len(ids):
            raise OverlayError("duplicate session ids")
        self.dest = np.array([ridx[s.dest] for s in self.sessions], np.int64)
        t = ov.tunnels
        self.tun_src = np.array([ridx[x.src] for x in t], np.int64)
        self.tun_dst = np.array([ridx[x.dst] for x in t], np.int64)
        self.tun_rin = np.array([x.R_in for x in t], np.int64)
        self.tun_rmin = np.array([x.R_min for x in t], np.int64)
        self.tun_M = np.array([x.M for x in t], np.int64)
        self.t0_term = np.array([x.T0_term for x in t], np.int64)
        # forwarder links are queues shared by every tunnel crossing them;
        # input links are capacity pools shared by tunnels starting on them
        links: dict = {}
        inputs: dict = {}
        hops = np.full((max(self.E, 1), int(self.tun_M.max(initial=0)) + 1), -1, np.int64)
        tun_in = np.zeros(self.E, np.int64)
        for e, x in enumerate(t):
            seq = x.link_sequence
            tun_in[e] = inputs.setdefault(seq[0], len(inputs))
            for h in range(1, len(seq)):
                hops[e, h] = links.setdefault(seq[h], len(links))
        clash = set(links) & set(inputs)
        if clash:
            raise OverlayError(f"links {sorted(clash, key=str)} are input links of one tunnel and inner links of another")
        self.links = list(links)
        self.tun_hops = hops
        self.tun_in = tun_in
        self.in_cap = np.array([ov.network.capacity[lk] for lk in inputs], np.int64)
        self.lcap = np.array([ov.network.capacity[lk] for lk in links], np.int64)
        self.L = len(self.links)


@dataclass
class RunResult:
    """Outputs of a simulation run.

    ``backlog[:, 0]`` is the total router backlog and ``backlog[:, 1]`` the
    total including packets in flight, both at slot start. Per-slot traces
    are present only when recording was enabled.
    """

    slots: int
    warmup: int
    tunnels: list
    session_ids: list
    backlog: np.ndarray
    counters: dict
    delay_sum: np.ndarray
    delay_count: np.ndarray
    delivered: np.ndarray
    injected: np.ndarray
    tunnel_output: np.ndarray
    tunnel_rmin: np.ndarray
    final_F: np.ndarray
    final_Q: np.ndarray
    F: np.ndarray | None = None
    phi: np.ndarray | None = None
    mu: np.ndarray | None = None
    Q: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def window(self) -> int:
        return max(self.slots - self.warmup, 1)

    @property
    def total_backlog(self) -> np.ndarray:
        return self.backlog[:, 1]

    @property
    def mean_backlog(self) -> float:
        return float(self.backlog[self.warmup:, 1].mean()) if self.slots > self.warmup else float("nan")

    @property
    def mean_router_backlog(self) -> float:
        return float(self.backlog[self.warmup:, 0].mean()) if self.slots > self.warmup else float("nan")

    @property
    def mean_delay(self) -> float:
        n = self.delay_count.sum()
        return float(self.delay_sum.sum() / n) if n else float("nan")

    def session_delay(self, session: Hashable) -> float:
        k = self.session_ids.index(session)
        n = self.delay_count[k]
        return float(self.delay_sum[k] / n) if n else float("nan")

    def throughput(self, session: Hashable) -> float:
        return float(self.delivered[self.session_ids.index(session)] / self.window)

    def utilization(self, key: tuple) -> float:
        e = self.tunnels.index(key)
        return float(self.tunnel_output[e] / (self.tunnel_rmin[e] * self.window))

    def session_share(self, key: tuple, session: Hashable) -> float:
        """Fraction of a tunnel's post-warm-up injections that belong to ``session``."""
        e = self.tunnels.index(key)
        tot = self.injected[e].sum()
        return float(self.injected[e, self.session_ids.index(session)] / tot) if tot else float("nan")

    @property
    def violations(self) -> dict:
        return {k: v for k, v in self.counters.items() if k.endswith("violations")}

    def summary(self) -> dict:
        out: dict = dict(self.meta)
        out.update(slots=self.slots, warmup=self.warmup)
        out["mean_backlog"] = self.mean_backlog
        out["mean_router_backlog"] = self.mean_router_backlog
        out["final_backlog"] = int(self.backlog[-1, 1]) if self.slots else 0
        out["mean_delay"] = self.mean_delay
        for k, c in enumerate(self.session_ids):
            out[f"delay.{c}"] = self.session_delay(c)
            out[f"throughput.{c}"] = self.throughput(c)
        for e, key in enumerate(self.tunnels):
            out[f"utilization.{key[0]}->{key[1]}"] = self.utilization(key)
        out.update(self.counters)
        return out

    def write_summary(self, path) -> None:
        with open(path, "w") as fh:
            for k, v in self.summary().items():
                fh.write(f"{k}={_fmt(v)}\n")

    def trace_header(self) -> list[str]:
        names = [f"{a}->{b}" for a, b in self.tunnels]
        return ["slot", "router_backlog"] + [f"F:{n}" for n in names] + [f"phi:{n}" for n in names]

    def write_trace(self, path) -> None:
        """Per-slot CSV: slot, total router backlog, F per tunnel, output per tunnel."""
        if self.F is None:
            raise ValueError("run was not recorded; enable record=True")
        slots = np.arange(self.slots, dtype=np.int64)[:, None]
        rows = np.hstack([slots, self.backlog[:, :1], self.F, self.phi])
        with open(path, "w") as fh:
            fh.write(",".join(self.trace_header()) + "\n")
            np.savetxt(fh, rows, fmt="%d", delimiter=",")


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(round(v, 12)) if math.isfinite(v) else str(v)
    return str(v)


class Simulator:
    """Packet-level simulator for one overlay, session set and policy.

    Args:
        ov: Overlay. Physical policies (``bp``, ``bpsp``) need the overlay
            from ``full_overlay``.
        sessions: Sessions with their per-source rates.
        policy: Routing policy.
        discipline: Forwarder scheduling rule.
        arrivals: Arrival law.
        seed: Scenario seed.
        horizon: Planned run length; fixes the warm-up slot.
        warmup_frac: Fraction of the horizon excluded from averages.
        dummy: Pad short injections with synthetic packets.
        record: Keep per-slot traces of ``F``, tunnel output, injections
            and router backlogs.
        strict: Raise on the first invariant violation instead of counting.
        loaded_scope: ``"global"`` checks loaded tunnels against the
            overlay-wide ``T0``; ``"tunnel"`` uses each tunnel's own term.
    """

    def __init__(
        self,
        ov: OverlaySpec,
        sessions: Sequence[Session],
        policy: Policy,
        discipline: Discipline = Discipline(),
        arrivals: ArrivalProcess = ArrivalProcess(),
        seed: int = 0,
        horizon: int = 100_000,
        warmup_frac: float = 0.1,
        dummy: bool = False,
        record: bool = False,
        strict: bool = False,
        loaded_scope: str = "global",
    ) -> None:
        if horizon < 1:
            raise ValueError("horizon must be at least one slot")
        if not 0 <= warmup_frac < 1:
            raise ValueError("warm-up fraction must lie in [0, 1)")
        self.ov = ov
        self.sessions = list(sessions)
        self.policy = policy
        self.discipline = discipline
        self.arrivals = arrivals
        self.seed = int(seed)
        self.horizon = int(horizon)
        self.warmup = int(warmup_frac * horizon)
        self.dummy = bool(dummy)
        self.record = bool(record)
        self.strict = bool(strict)
        self.lay = lay = _Layout(ov, self.sessions)
        self.cp = compile_policy(policy, ov, self.sessions)
        self.rank = discipline.ranks([s.id for s in self.sessions])
        th = thresholds(ov)
        self.T0 = th.T0
        if loaded_scope == "global":
            self.t0_tun = np.full(lay.E, th.T0, np.int64)
        elif loaded_scope == "tunnel":
            self.t0_tun = lay.t0_term.copy()
        else:
            raise ValueError(f"unknown loaded-tunnel scope {loaded_scope!r}")
        self.check_loaded = validate_non_overlapping(ov).ok
        self.check_abs = policy.kind == "lambda-or"
        self.fmax = self.cp.fmax
        self.rates = np.zeros((lay.R, lay.S))
        for si, s in enumerate(self.sessions):
            for r, lam in s.rates.items():
                arrivals.check_rate(lam)
                self.rates[lay.ridx[r], si] = lam
        self._rngs = {
            (r, si): substream(self.seed, f"arrival:{ov.routers[r]}:{self.sessions[si].id}")
            for r in range(lay.R)
            for si in range(lay.S)
            if self.rates[r, si] > 0
        }
        self._policy_rng = substream(self.seed, "policy")
        self._A = np.zeros((0, lay.R, lay.S), np.int64)
        self._U = np.zeros((0, lay.E, 2))
        self._pos = 0
        self.t = 0
        self._init_state()

    def _init_state(self) -> None:
        lay = self.lay
        self.rq_bufs = List([np.empty(16, np.int64) for _ in range(lay.R * lay.S)])
        self.rq_head = np.zeros(lay.R * lay.S, np.int64)
        self.rq_size = np.zeros(lay.R * lay.S, np.int64)
        nq = max(lay.L * lay.S, 1)
        self.lq_bufs = List([np.empty((8, K.NF), np.int64) for _ in range(nq)])
        self.lq_head = np.zeros(nq, np.int64)
        self.lq_size = np.zeros(nq, np.int64)
        self.lq_seq = np.zeros(max(lay.L, 1), np.int64)
        self.F = np.zeros(lay.E, np.int64)
        self.below = np.zeros(lay.E, np.int64)
        self.ctr = np.zeros(K.N_COUNTERS, np.int64)
        self.delay_sum = np.zeros(lay.S, np.int64)
        self.delay_cnt = np.zeros(lay.S, np.int64)
        self.deliv = np.zeros(lay.S, np.int64)
        self.inj_acc = np.zeros((lay.E, lay.S), np.int64)
        self.phi_acc = np.zeros(lay.E, np.int64)
        self._stage = np.zeros((int(self.lay.lcap.sum() + self.lay.in_cap.sum()) + 1, K.ST_W), np.int64)
        self._backlog: list[np.ndarray] = []
        self._traces: list[tuple] = []

    def _refill(self) -> None:
        lay = self.lay
        t0 = self.t
        A = np.zeros((BLOCK, lay.R, lay.S), np.int64)
        for (r, si), rng in self._rngs.items():
            A[:, r, si] = self.arrivals.draw(rng, self.rates[r, si], t0, BLOCK)
        self._A = A
        if self.cp.code == K.LOR:
            self._U = self._policy_rng.random((BLOCK, lay.E, 2))
        else:
            self._U = np.zeros((0, lay.E, 2))
        self._pos = 0

    @property
    def Q(self) -> dict:
        """Current router backlogs as ``{router: {session: count}}``."""
        S = self.lay.S
        return {
            r: {s.id: int(self.rq_size[k * S + si]) for si, s in enumerate(self.sessions)}
            for k, r in enumerate(self.ov.routers)
        }

    @property
    def tunnel_backlog(self) -> dict:
        return {t.key: int(self.F[e]) for e, t in enumerate(self.ov.tunnels)}

    def stage_backlog(self, key: tuple) -> list[int]:
        """Packets of tunnel ``key`` waiting at each forwarder, first to last."""
        e = [t.key for t in self.ov.tunnels].index(key)
        lay = self.lay
        out = []
        for h in range(1, lay.tun_M[e] + 1):
            lk = lay.tun_hops[e, h]
            n = 0
            for si in range(lay.S):
                q = lk * lay.S + si
                buf, head, size = self.lq_bufs[q], self.lq_head[q], self.lq_size[q]
                for k in range(size):
                    row = buf[(head + k) % buf.shape[0]]
                    n += row[K.TUN] == e and row[K.HOP] == h
            out.append(int(n))
        return out

    def packets_at(self, router: Hashable, session: Hashable) -> list[Packet]:
        """Queued packets at a router, oldest first."""
        q = self.lay.ridx[router] * self.lay.S + [s.id for s in self.sessions].index(session)
        buf, head, size = self.rq_bufs[q], self.rq_head[q], self.rq_size[q]
        return [Packet(session, int(buf[(head + k) % buf.shape[0]])) for k in range(size)]

    def run(self, slots: int | None = None) -> RunResult:
        """Advance ``slots`` slots (default: up to the horizon) and report."""
        n = self.horizon - self.t if slots is None else int(slots)
        while n > 0:
            if self._pos >= self._A.shape[0]:
                self._refill()
            m = min(n, self._A.shape[0] - self._pos)
            self._advance(m)
            n -= m
        return self.result()

    def step(self) -> dict:
        """Advance one slot; returns that slot's per-tunnel record."""
        rec, self.record = self.record, True
        try:
            self.run(1)
        finally:
            self.record = rec
        F, phi, mu, Q = self._traces[-1]
        if not rec:
            self._traces.pop()
        keys = [t.key for t in self.ov.tunnels]
        return {
            "slot": self.t - 1,
            "F": dict(zip(keys, F[0].tolist())),
            "phi": dict(zip(keys, phi[0].tolist())),
            "mu": dict(zip(keys, mu[0].tolist())),
            "Q": {
                r: {s.id: int(Q[0, k, si]) for si, s in enumerate(self.sessions)}
                for k, r in enumerate(self.ov.routers)
            },
        }

    def _advance(self, m: int) -> None:
        lay = self.lay
        p = self._pos
        A = self._A[p:p + m]
        U = self._U[p:p + m] if self._U.shape[0] else self._U
        backlog = np.zeros((m, 2), np.int64)
        if self.record:
            F_tr = np.zeros((m, lay.E), np.int64)
            phi_tr = np.zeros((m, lay.E), np.int64)
            mu_tr = np.zeros((m, lay.E), np.int64)
            Q_tr = np.zeros((m, lay.R, lay.S), np.int64)
        else:
            F_tr = phi_tr = mu_tr = np.zeros((0, lay.E), np.int64)
            Q_tr = np.zeros((0, lay.R, lay.S), np.int64)
        cp = self.cp
        K.run_chunk(
            self.t, m, A, U,
            lay.tun_src, lay.tun_dst, lay.tun_rin, lay.tun_rmin, lay.tun_M, lay.tun_hops,
            lay.tun_in, lay.in_cap, lay.lcap, lay.dest,
            cp.code, cp.T, cp.biased_gate, cp.elig, cp.bias, cp.sp_next, cp.lor_f,
            self.discipline.code, self.rank, self.dummy, self.t0_tun, self.fmax,
            self.check_loaded, self.check_abs, self.warmup, self.strict,
            self.rq_bufs, self.rq_head, self.rq_size, self.lq_bufs, self.lq_head, self.lq_size,
            self.lq_seq, self.F, self.below,
            self.ctr, self.delay_sum, self.delay_cnt, self.deliv, self.inj_acc, self.phi_acc,
            backlog, self.record, F_tr, phi_tr, mu_tr, Q_tr, self._stage,
        )
        self._backlog.append(backlog)
        if self.record:
            self._traces.append((F_tr, phi_tr, mu_tr, Q_tr))
        self._pos += m
        self.t += m

    def result(self) -> RunResult:
        lay = self.lay
        backlog = np.vstack(self._backlog) if self._backlog else np.zeros((0, 2), np.int64)
        c = self.ctr
        counters = {
            "exogenous": int(c[K.C_EXO]),
            "synthetic_injected": int(c[K.C_SYN_IN]),
            "delivered": int(c[K.C_DELIVERED]),
            "synthetic_discarded": int(c[K.C_SYN_OUT]),
            "loaded_output_violations": int(c[K.C_LOADED_OUT]),
            "output_cap_violations": int(c[K.C_OUTCAP]),
            "fmax_violations": int(c[K.C_FMAX]),
            "absorption_violations": int(c[K.C_ABSORB]),
            "loaded_tunnel_slots": int(c[K.C_LOADED]),
        }
        traces = {}
        if self.record and self._traces:
            for name, k in (("F", 0), ("phi", 1), ("mu", 2), ("Q", 3)):
                traces[name] = np.concatenate([tr[k] for tr in self._traces])
        meta = {
            "policy": self.policy.kind,
            "discipline": self.discipline.kind,
            "arrivals": self.arrivals.kind,
            "seed": self.seed,
            "T": self.cp.T,
            "T0": self.T0,
            "dummy": self.dummy,
        }
        return RunResult(
            slots=self.t,
            warmup=self.warmup,
            tunnels=[t.key for t in self.ov.tunnels],
            session_ids=[s.id for s in self.sessions],
            backlog=backlog,
            counters=counters,
            delay_sum=self.delay_sum.copy(),
            delay_count=self.delay_cnt.copy(),
            delivered=self.deliv.copy(),
            injected=self.inj_acc.copy(),
            tunnel_output=self.phi_acc.copy(),
            tunnel_rmin=lay.tun_rmin.copy(),
            final_F=self.F.copy(),
            final_Q=self.rq_size.reshape(lay.R, lay.S).copy(),
            meta=meta,
            **traces,
        )


def simulate(ov: OverlaySpec, sessions: Sequence[Session], policy: Policy, **kwargs) -> RunResult:
    """Build a simulator and run it to its horizon."""
    return Simulator(ov, sessions, policy, **kwargs).run()
