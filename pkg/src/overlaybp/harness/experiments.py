"""Load sweeps, stability classification and the discipline delay table."""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from ..engine import RunResult
from ..policies import canonical_name
from .scenario import Scenario

STABLE = "stable"
UNSTABLE = "unstable"
INCONCLUSIVE = "inconclusive"

# drift thresholds in packets per slot
STABLE_DRIFT = 0.01
UNSTABLE_DRIFT = 0.02


@dataclass(frozen=True)
class StabilityVerdict:
    """Finite-horizon stability call from one run.

    ``drift`` is the least-squares slope of the total backlog over the
    post-warm-up window. A run is stable when the drift is below 0.01 and
    the final backlog stays under ten times the first-quartile mean (at
    least one packet); it is unstable when the drift exceeds 0.02.
    """

    classification: str
    drift: float
    mean_backlog: float
    mean_delay: float
    final_backlog: int


def classify(result: RunResult) -> StabilityVerdict:
    y = result.backlog[result.warmup:, 1].astype(np.float64)
    if y.size < 4:
        raise ValueError("run too short to classify")
    x = np.arange(y.size, dtype=np.float64)
    x -= x.mean()
    drift = float(x @ (y - y.mean()) / (x @ x))
    early = max(float(y[: y.size // 4].mean()), 1.0)
    final = int(y[-1])
    if drift < STABLE_DRIFT and final < 10 * early:
        label = STABLE
    elif drift > UNSTABLE_DRIFT:
        label = UNSTABLE
    else:
        label = INCONCLUSIVE
    return StabilityVerdict(label, drift, result.mean_backlog, result.mean_delay, final)


def split_rates(scenario: Scenario, load: float, split: str | Mapping = "half") -> dict:
    """Per-session totals for a scalar load.

    ``"half"`` gives every session ``load / n``; ``"equal"`` gives every
    session ``load``; ``"single"`` puts the load on the first session; a
    mapping of session weights scales each session by its weight.
    """
    ids = [s.id for s in scenario.sessions]
    if isinstance(split, Mapping):
        return {c: load * float(split.get(c, 0.0)) for c in ids}
    if split == "half":
        return {c: load / len(ids) for c in ids}
    if split == "equal":
        return {c: load for c in ids}
    if split == "single":
        return {c: (load if k == 0 else 0.0) for k, c in enumerate(ids)}
    raise ValueError(f"unknown load split {split!r}")


def policy_params(scenario: Scenario, name: str, T: int | None = None) -> dict:
    """Parameters for ``name`` inherited from the scenario's own policy."""
    name = canonical_name(name)
    params = {k: v for k, v in scenario.policy.items() if k != "name"}
    if T is not None:
        params["T"] = T
    if name not in ("bpt", "bpt2", "lambda-or"):
        params.pop("T", None)
        params.pop("allow_below_floor", None)
    if name != "lambda-or":
        params.pop("decomposition", None)
    return params


@dataclass(frozen=True)
class SweepRow:
    load: float
    policy: str
    seed: int
    classification: str
    drift: float
    mean_backlog: float
    mean_delay: float
    final_backlog: int


def sweep(
    scenario: Scenario,
    loads: Iterable[float],
    policies: Sequence[str],
    seeds: Sequence[int] = (0,),
    split: str | Mapping = "half",
    horizon: int | None = None,
    T: int | None = None,
) -> list[SweepRow]:
    """Run every (load, policy, seed) cell; policies share arrival sample paths per seed."""
    loads = list(loads)
    if not loads:
        raise ValueError("empty load grid")
    rows = []
    for load in loads:
        base = scenario.with_rates(split_rates(scenario, load, split))
        if horizon is not None:
            base = base.with_(horizon=horizon)
        for name in policies:
            for seed in seeds:
                sc = base.with_policy(name, **policy_params(scenario, name, T)).with_(seed=seed)
                v = classify(sc.run())
                rows.append(SweepRow(load, name, seed, v.classification, v.drift, v.mean_backlog, v.mean_delay,
                                     v.final_backlog))
    return sorted(rows, key=lambda r: (r.load, r.policy, r.seed))


@dataclass(frozen=True)
class DelayRow:
    lam: float
    interpretation: str  # "per-session" or "half-total"
    discipline: str
    seed: int
    mean_delay: float
    mean_backlog: float


def table1(
    scenario: Scenario,
    lambdas: Sequence[float] = (0.8, 0.85, 0.9, 0.95, 0.99),
    disciplines: Sequence[str] = ("fifo", "hlpps", "lqf", "priority"),
    seeds: Sequence[int] = (0,),
    horizon: int | None = None,
    interpretations: Sequence[str] = ("per-session", "half-total"),
    priority_order: Sequence | None = None,
) -> list[DelayRow]:
    """BP-T mean delay per (load, discipline), paired seeds across disciplines.

    ``per-session`` sets every session's rate to ``lam``; ``half-total``
    splits ``lam`` evenly over the sessions.
    """
    order = list(priority_order or [s.id for s in scenario.sessions])
    rows = []
    for interp in interpretations:
        split = {"per-session": "equal", "half-total": "half"}[interp]
        for lam in lambdas:
            base = scenario.with_rates(split_rates(scenario, lam, split))
            base = base.with_policy("bpt", **policy_params(scenario, "bpt"))
            if horizon is not None:
                base = base.with_(horizon=horizon)
            for disc in disciplines:
                d = {"name": disc, "order": order} if disc in ("priority", "strict-priority") else {"name": disc}
                for seed in seeds:
                    r = base.with_(discipline=d, seed=seed).run()
                    rows.append(DelayRow(lam, interp, disc, seed, r.mean_delay, r.mean_backlog))
    return rows


def mean_by(rows: Iterable, keys: Sequence[str], value: str) -> dict:
    """Average ``value`` over rows grouped by ``keys``."""
    acc: dict = {}
    for r in rows:
        k = tuple(getattr(r, f) for f in keys)
        acc.setdefault(k, []).append(getattr(r, value))
    return {k: float(np.mean(v)) for k, v in acc.items()}


def write_rows(path, rows: Sequence) -> None:
    """Write dataclass rows as CSV with their field names as the header."""
    if not rows:
        raise ValueError("nothing to write")
    fields = list(asdict(rows[0]))
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _cell(v) for k, v in asdict(r).items()})


def _cell(v):
    return repr(v) if isinstance(v, float) else v
