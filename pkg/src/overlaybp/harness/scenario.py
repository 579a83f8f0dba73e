"""Scenario files and the built-in experiment set.

A scenario is a JSON object::

    {
      "name": "fig5",
      "network": {"nodes": ["a", "b"], "links": [["a", "b", 1]]},
      "routers": ["a", "b"],
      "paths": [["a", "b"]]            # or "shortest-path"
      "sessions": [{"id": 1, "dest": "b", "rates": {"a": 0.5}}],
      "policy": {"name": "bpt", "T": 6},
      "discipline": {"name": "fifo"},
      "arrivals": {"kind": "batch-bernoulli", "A_max": 4},
      "horizon": 200000, "warmup": 0.1, "seed": 0, "dummy_packets": false
    }

``policy.decomposition`` for ``lambda-or`` is either ``"auto"`` (solve the
region program at the scenario rates), a file path, or an inline object.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

from ..engine import ArrivalProcess, RunResult, Simulator
from ..netmodel import OverlaySpec, PhysicalNetwork, Session, build_overlay, full_overlay, shortest_path_overlay
from ..policies import Policy, canonical_name
from ..region import FlowDecomposition, decomposition_for_oracle
from ..schedulers import Discipline


@dataclass(frozen=True)
class Scenario:
    name: str
    network: PhysicalNetwork
    routers: tuple
    paths: Any  # list of paths or "shortest-path"
    sessions: tuple
    policy: dict = field(default_factory=lambda: {"name": "bpt"})
    discipline: dict = field(default_factory=lambda: {"name": "fifo"})
    arrivals: dict = field(default_factory=lambda: {"kind": "batch-bernoulli", "A_max": 4})
    horizon: int = 200_000
    warmup: float = 0.1
    seed: int = 0
    dummy_packets: bool = False
    extra: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.horizon < 1:
            raise ValueError("horizon must be positive")
        if not 0 <= self.warmup < 1 or int(self.warmup * self.horizon) * 10 > self.horizon:
            raise ValueError("horizon must be at least ten warm-up lengths")
        nodes = set(self.network.nodes)
        for s in self.sessions:
            if s.dest not in nodes or any(r not in nodes for r in s.rates):
                raise ValueError(f"session {s.id!r} references an unknown node")

    # -- resolution ---------------------------------------------------
    def overlay(self) -> OverlaySpec:
        if self.paths == "shortest-path":
            return shortest_path_overlay(self.network, self.routers)
        return build_overlay(self.network, self.routers, self.paths)

    def overlay_for(self, policy: Policy) -> OverlaySpec:
        return full_overlay(self.network) if policy.physical else self.overlay()

    def build_policy(self, base_dir: Path | None = None) -> Policy:
        p = dict(self.policy)
        name = p.pop("name")
        dec = p.pop("decomposition", None)
        decomposition = None
        if canonical_name(name) == "lambda-or":
            decomposition = self._decomposition(dec, base_dir)
        return Policy(
            name,
            T=p.get("T"),
            allow_below_floor=bool(p.get("allow_below_floor", False)),
            decomposition=decomposition,
            gate=p.get("gate", "raw"),
        )

    def _decomposition(self, dec, base_dir: Path | None) -> FlowDecomposition:
        if dec is None or dec == "auto":
            return decomposition_for_oracle(list(self.sessions), self.overlay())
        if isinstance(dec, str):
            path = Path(dec)
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            return FlowDecomposition.load(path)
        return FlowDecomposition.from_dict(dec)

    def build_discipline(self) -> Discipline:
        d = dict(self.discipline)
        return Discipline(d.get("name", "fifo"), tuple(d.get("order", ())))

    def build_arrivals(self) -> ArrivalProcess:
        a = dict(self.arrivals)
        return ArrivalProcess(a.get("kind", "batch-bernoulli"), int(a.get("A_max", 4)))

    def simulator(self, record: bool = False, strict: bool = False, base_dir: Path | None = None) -> Simulator:
        policy = self.build_policy(base_dir)
        return Simulator(
            self.overlay_for(policy),
            list(self.sessions),
            policy,
            discipline=self.build_discipline(),
            arrivals=self.build_arrivals(),
            seed=self.seed,
            horizon=self.horizon,
            warmup_frac=self.warmup,
            dummy=self.dummy_packets,
            record=record,
            strict=strict,
        )

    def run(self, record: bool = False, strict: bool = False) -> RunResult:
        return self.simulator(record=record, strict=strict).run()

    # -- variation ----------------------------------------------------
    def with_policy(self, name: str, **params) -> Scenario:
        return replace(self, policy={"name": name, **params})

    def with_rates(self, totals: Mapping) -> Scenario:
        """Set each session's total rate, keeping its source split."""
        return replace(self, sessions=tuple(s.with_total(float(totals.get(s.id, 0.0))) for s in self.sessions))

    def with_(self, **changes) -> Scenario:
        return replace(self, **changes)

    # -- serialization ------------------------------------------------
    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "network": self.network.to_dict(),
            "routers": list(self.routers),
            "paths": self.paths if isinstance(self.paths, str) else [list(p) for p in self.paths],
            "sessions": [s.to_dict() for s in self.sessions],
            "policy": copy.deepcopy(self.policy),
            "discipline": copy.deepcopy(self.discipline),
            "arrivals": copy.deepcopy(self.arrivals),
            "horizon": self.horizon,
            "warmup": self.warmup,
            "seed": self.seed,
            "dummy_packets": self.dummy_packets,
        }
        if self.extra:
            d["extra"] = copy.deepcopy(self.extra)
        return d

    @classmethod
    def from_dict(cls, data: Mapping) -> Scenario:
        known = {
            "name", "network", "routers", "paths", "sessions", "policy", "discipline",
            "arrivals", "horizon", "warmup", "seed", "dummy_packets", "extra",
        }
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown scenario fields {sorted(unknown)}")
        net = PhysicalNetwork.from_links(data["network"]["nodes"], data["network"]["links"])
        paths = data.get("paths", "shortest-path")
        if not isinstance(paths, str):
            paths = [tuple(p) for p in paths]
        elif paths != "shortest-path":
            raise ValueError(f"unknown path directive {paths!r}")
        policy = data.get("policy", {"name": "bpt"})
        if isinstance(policy, str):
            policy = {"name": policy}
        discipline = data.get("discipline", {"name": "fifo"})
        if isinstance(discipline, str):
            discipline = {"name": discipline}
        return cls(
            name=data.get("name", "scenario"),
            network=net,
            routers=tuple(data["routers"]),
            paths=paths,
            sessions=tuple(Session.from_dict(s) for s in data["sessions"]),
            policy=dict(policy),
            discipline=dict(discipline),
            arrivals=dict(data.get("arrivals", {"kind": "batch-bernoulli", "A_max": 4})),
            horizon=int(data.get("horizon", 200_000)),
            warmup=float(data.get("warmup", 0.1)),
            seed=int(data.get("seed", 0)),
            dummy_packets=bool(data.get("dummy_packets", False)),
            extra=dict(data.get("extra", {})),
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)


def load_scenario(path) -> Scenario:
    """Read a scenario file, or return the built-in scenario of that name."""
    builtins = built_in_scenarios()
    if str(path) in builtins and not Path(path).exists():
        return builtins[str(path)]
    with open(path) as fh:
        return Scenario.from_dict(json.load(fh))


def _fig5_network() -> PhysicalNetwork:
    return PhysicalNetwork.from_links(
        "abcde",
        [("a", "b", 2), ("b", "c", 1), ("c", "e", 1), ("a", "d", 1), ("d", "e", 1)],
    )


def fig5() -> Scenario:
    """Routers a, c, e; session 1 goes a to e, session 2 goes a to c."""
    return Scenario(
        name="fig5",
        network=_fig5_network(),
        routers=("a", "c", "e"),
        paths=(("a", "b", "c"), ("a", "d", "e"), ("c", "e")),
        sessions=(Session(1, "e", {"a": 0.5}), Session(2, "c", {"a": 0.5})),
        policy={"name": "bpt", "T": 6},
    )


def fig6() -> Scenario:
    """The fig5 network at the hard corner ``lam1 = lam2 = 0.97``."""
    return fig5().with_(name="fig6").with_rates({1: 0.97, 2: 0.97})


def fig7() -> Scenario:
    """Delay comparison on the fig5 network, swept over total load.

    BP-T runs at the smallest admissible threshold here.
    """
    return fig5().with_(
        name="fig7",
        policy={"name": "bpt"},
        extra={"loads": [0.2, 0.4, 0.6, 0.8, 1.0, 1.2, 1.4, 1.6, 1.8], "split": "half",
               "policies": ["bpt", "bpo", "bp", "bpsp"]},
    )


def fig8_tandem() -> Scenario:
    """Five unit links in a line; only the two end nodes are routers."""
    nodes = [f"n{k}" for k in range(6)]
    return Scenario(
        name="fig8_tandem",
        network=PhysicalNetwork.from_links(nodes, [(nodes[k], nodes[k + 1], 1) for k in range(5)]),
        routers=("n0", "n5"),
        paths=(tuple(nodes),),
        sessions=(Session(1, "n5", {"n0": 0.9}),),
        policy={"name": "bpt"},
        extra={"loads": [0.2, 0.4, 0.6, 0.8, 0.9, 0.95], "split": "single",
               "policies": ["bpt", "bpo", "bp", "bpsp"]},
    )


def fig9_overlapping() -> Scenario:
    """Two sessions whose tunnels share link (c, d).

    Session 1 (a to e) can also detour through router g on direct links;
    session 2 (b to f) has no alternative. Forwarders serve sessions in
    proportion to their backlogs.
    """
    return Scenario(
        name="fig9_overlapping",
        network=PhysicalNetwork.from_links(
            "abcdefg",
            [("a", "c", 1), ("b", "c", 1), ("c", "d", 1), ("d", "e", 1), ("d", "f", 1), ("a", "g", 1), ("g", "e", 1)],
        ),
        routers=("a", "b", "e", "f", "g"),
        paths=(("a", "c", "d", "e"), ("b", "c", "d", "f"), ("a", "g"), ("g", "e")),
        sessions=(Session(1, "e", {"a": 0.9}), Session(2, "f", {"b": 0.9})),
        policy={"name": "bpt2", "T": 10},
        discipline={"name": "hlpps"},
        extra={"T_values": [2, 5, 10, 25], "loads": [0.4, 0.8, 1.2, 1.6, 1.8], "split": "half",
               "policies": ["bpt2", "bpo", "bp", "bpsp"]},
    )


def table1() -> Scenario:
    """BP-T on the fig5 network across forwarder disciplines.

    Binomial arrivals give the near-Poisson burstiness that makes delay
    grow sharply toward the region boundary.
    """
    return fig5().with_(
        name="table1",
        arrivals={"kind": "binomial", "A_max": 8},
        horizon=400_000,
        extra={"lambdas": [0.8, 0.85, 0.9, 0.95, 0.99], "disciplines": ["fifo", "hlpps", "lqf", "priority"],
               "priority_order": [1, 2]},
    )


def built_in_scenarios() -> dict[str, Scenario]:
    return {f.__name__: f() for f in (fig5, fig6, fig7, fig8_tandem, fig9_overlapping, table1)}
