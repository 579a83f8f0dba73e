from __future__ import annotations

import numpy as np
import pytest

from overlaybp import (
    ArrivalProcess,
    FlowDecomposition,
    OverlayError,
    PhysicalNetwork,
    Policy,
    Session,
    Simulator,
    build_overlay,
    full_overlay,
    thresholds,
)
from overlaybp.harness import load_scenario
from overlaybp.policies import (
    canonical_name,
    compile_policy,
    decide_bp_physical,
    decide_bpo,
    decide_bpsp,
    decide_bpt,
    decide_bpt2,
    decide_lambda_or,
    decide_shortest_path,
    shortest_routes,
)


@pytest.fixture
def pair():
    # one tunnel i -> j through forwarder X, input capacity 2
    net = PhysicalNetwork.from_links("iXj", [("i", "X", 2), ("X", "j", 1)])
    return build_overlay(net, ["i", "j"], [("i", "X", "j")])


Q_EX = {"i": {1: 5, 2: 3}, "j": {1: 1, 2: 4}}


def test_bpt_injects_rin_of_best_session(pair):
    d = decide_bpt(Q_EX, {("i", "j"): 0}, pair)
    assert d.mu[("i", "j")] == {1: 2}
    assert d.session(("i", "j")) == 1


def test_bpt_gate_closes_above_threshold(pair):
    T = thresholds(pair).T
    assert decide_bpt(Q_EX, {("i", "j"): T + 1}, pair).total(("i", "j")) == 0
    assert decide_bpt(Q_EX, {("i", "j"): T}, pair).total(("i", "j")) == 2


def test_bpt_needs_strictly_positive_differential(pair):
    Q = {"i": {1: 3, 2: 3}, "j": {1: 3, 2: 3}}
    assert decide_bpt(Q, {}, pair).total(("i", "j")) == 0


def test_bpt_ties_go_to_lowest_session(pair):
    Q = {"i": {1: 4, 2: 4}, "j": {1: 0, 2: 0}}
    assert decide_bpt(Q, {}, pair).session(("i", "j")) == 1


def test_bpt2_compares_differential_with_tunnel_backlog(pair):
    Q = {"i": {1: 5}, "j": {1: 0}}
    assert decide_bpt2(Q, {("i", "j"): 4}, pair, T=10).total(("i", "j")) == 2
    assert decide_bpt2(Q, {("i", "j"): 5}, pair, T=10).total(("i", "j")) == 0


def test_bpt2_below_floor_needs_opt_in(pair):
    with pytest.raises(ValueError):
        decide_bpt2({"i": {1: 5}}, {}, pair, T=1)
    assert decide_bpt2({"i": {1: 5}}, {}, pair, T=1, allow_below_floor=True).total(("i", "j")) == 2
    with pytest.raises(ValueError):
        Policy("bpt", T=1, allow_below_floor=True)


def test_bpo_ignores_tunnel_backlog(pair):
    assert decide_bpo(Q_EX, pair).mu[("i", "j")] == {1: 2}
    assert decide_bpo({"i": {1: 2}, "j": {1: 2}}, pair).total(("i", "j")) == 0


def test_bp_physical_sends_link_capacity():
    net = PhysicalNetwork.from_links("mn", [("m", "n", 2)])
    ov = full_overlay(net)
    assert decide_bp_physical({"m": {1: 3}, "n": {1: 0}}, ov).mu[("m", "n")] == {1: 2}
    assert decide_bp_physical({"m": {1: 3}, "n": {1: 3}}, ov).total(("m", "n")) == 0


def _line4():
    links = [("a", "b", 1), ("b", "c", 1), ("c", "d", 1)]
    links += [(y, x, c) for x, y, c in links]
    return full_overlay(PhysicalNetwork.from_links("abcd", links))


def test_bpsp_biased_gate_blocks_moves_away_from_destination():
    ov = _line4()
    sessions = [Session(1, "d", {"a": 0.1})]
    d = decide_bpsp({"b": {1: 1}}, ov, sessions, gate="biased")
    assert d.total(("b", "c")) == 1
    assert d.total(("b", "a")) == 0
    # the raw gate opens both links; decisions are nominal grants
    assert decide_bpsp({"b": {1: 1}}, ov, sessions).total(("b", "a")) == 1


@pytest.mark.parametrize("gate", ["raw", "biased"])
def test_bpsp_lone_packet_walks_shortest_path(gate):
    ov = _line4()
    sessions = [Session(1, "d", {"a": 0.01})]
    # one packet arrives in slot 99 and none for the next hundred slots
    sim = Simulator(ov, sessions, Policy("bpsp", gate=gate), arrivals=ArrivalProcess("deterministic"),
                    horizon=150, warmup_frac=0.0)
    res = sim.run()
    assert res.delay_count[0] == 1
    assert res.delay_sum[0] == 3
    assert res.counters["exogenous"] == 1


def test_physical_policy_rejects_overlay(pair):
    with pytest.raises(OverlayError):
        compile_policy(Policy("bp"), pair, [Session(1, "j", {"i": 0.5})])


def test_shortest_path_follows_fewest_hops():
    sc = load_scenario("fig5")
    ov, sessions = sc.overlay(), list(sc.sessions)
    nxt = shortest_routes(ov, sessions)
    keys = [t.key for t in ov.tunnels]
    a = list(ov.routers).index("a")
    assert keys[nxt[a, 0]] == ("a", "e")
    assert keys[nxt[a, 1]] == ("a", "c")
    d = decide_shortest_path({"a": {1: 4, 2: 0}}, ov, sessions)
    assert d.mu == {("a", "c"): {}, ("a", "e"): {1: 1}, ("c", "e"): {}}


def test_shortest_path_equals_bpo_on_a_single_tunnel():
    net = PhysicalNetwork.from_links("ab", [("a", "b", 1)])
    ov = build_overlay(net, ["a", "b"], [("a", "b")])
    s = [Session(1, "b", {"a": 0.7})]
    x = Simulator(ov, s, Policy("sp"), horizon=20_000, seed=9).run()
    y = Simulator(ov, s, Policy("bpo"), horizon=20_000, seed=9).run()
    np.testing.assert_array_equal(x.backlog, y.backlog)


def test_lambda_or_draws(pair):
    s = [Session(1, "j", {"i": 0.3}), Session(2, "j", {"i": 0.2})]
    dec = FlowDecomposition({(("i", "j"), 1): 0.3, (("i", "j"), 2): 0.3}, slack=0.1, eps_star=0.2)
    # session draw below 0.5 picks session 1, injection draw below 0.6 injects R_min
    d = decide_lambda_or({}, pair, dec, s, [[0.2, 0.5]])
    assert d.mu[("i", "j")] == {1: 1}
    d = decide_lambda_or({}, pair, dec, s, [[0.7, 0.5]])
    assert d.mu[("i", "j")] == {2: 1}
    assert decide_lambda_or({}, pair, dec, s, [[0.2, 0.65]]).total(("i", "j")) == 0
    T = thresholds(pair).T
    assert decide_lambda_or({("i", "j"): T}, pair, dec, s, [[0.2, 0.0]]).total(("i", "j")) == 0


def test_lambda_or_zero_flow_never_injects(pair):
    s = [Session(1, "j", {"i": 0.3})]
    dec = FlowDecomposition({}, slack=0.1, eps_star=0.2)
    assert decide_lambda_or({}, pair, dec, s, [[0.0, 0.0]]).total(("i", "j")) == 0


def test_lambda_or_rejects_saturating_flow(pair):
    s = [Session(1, "j", {"i": 0.3})]
    dec = FlowDecomposition({(("i", "j"), 1): 1.0}, slack=0.0, eps_star=0.0)
    with pytest.raises(OverlayError):
        compile_policy(Policy("lambda-or", decomposition=dec), pair, s)


def test_policy_names_and_serialization():
    assert canonical_name("BP-T") == "bpt"
    assert canonical_name("shortest-path") == "sp"
    assert canonical_name("lambda_or") == "lambda-or"
    with pytest.raises(ValueError):
        canonical_name("ospf")
    assert Policy("bpt", T=6).to_dict() == {"name": "bpt", "T": 6}
    assert Policy("bpsp").physical and not Policy("bpt").physical
