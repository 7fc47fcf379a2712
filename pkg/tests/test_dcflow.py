import numpy as np
import pytest

from gridcascade.cases import load_case
from gridcascade.dcflow import (
    UnbalancedIslandError,
    bus_islands,
    lodf,
    nodal_reactance,
    physical_vulnerability,
    solve_injections,
)
from gridcascade.network import OperatingState, build_network
from util import balanced_injection_per_island, dfs_bridges, random_connected_net


def toy4_state(net, flows=None):
    return OperatingState(
        in_service=np.ones(4, dtype=bool),
        load=np.array([0.0, 0.0, 50.0, 100.0]),
        gen_output=np.array([150.0]),
        flow=np.zeros(4) if flows is None else np.asarray(flows, float),
    )


def two_bus_net(x=0.1):
    return build_network([0, 0], [(0, 1, x, 100.0)], [])


def test_zero_injection_gives_zero_solution():
    net = load_case("toy4")
    sol = solve_injections(net, np.ones(4, bool), np.zeros(4))
    assert np.allclose(sol.angles, 0)
    assert np.allclose(sol.flow, 0)
    assert sol.islands == [[0, 1, 2, 3]]


def test_bridge_flow_forced_by_conservation():
    net = load_case("toy4")
    p = np.array([150.0, 0.0, -50.0, -100.0])
    sol = solve_injections(net, np.ones(4, bool), p)
    # L4 is the only path into B4
    assert sol.flow[3] == pytest.approx(100.0, abs=1e-10)


def test_triangle_flows_match_mesh_oracle():
    # Independent oracle: solve the two-loop Kirchhoff system by hand.
    # Unknown mesh current t on loop L1->L2->-L3 with injections
    # 150 at B1, -50 at B3, -100 through the bridge:
    #   angle drops around the triangle sum to zero:
    #   x1*f1 + x2*f2 - x3*f3 = 0, with f1 = f2 (series), f1 + f3 = 150.
    x1, x2, x3 = 0.10, 0.10, 0.20
    f1 = 150.0 * x3 / (x1 + x2 + x3)
    f3 = 150.0 - f1
    net = load_case("toy4")
    p = np.array([150.0, 0.0, -50.0, -100.0])
    sol = solve_injections(net, np.ones(4, bool), p)
    assert sol.flow[0] == pytest.approx(f1, abs=1e-10)
    assert sol.flow[1] == pytest.approx(f1, abs=1e-10)
    assert sol.flow[2] == pytest.approx(f3, abs=1e-10)


def test_nodal_balance_at_every_bus():
    rng = np.random.default_rng(3)
    for _ in range(20):
        net = random_connected_net(rng)
        p = rng.normal(0, 50, net.n_buses)
        p -= p.mean()
        sol = solve_injections(net, np.ones(net.n_branches, bool), p)
        residual = p.copy()
        for k, br in enumerate(net.branches):
            residual[br.from_bus] -= sol.flow[k]
            residual[br.to_bus] += sol.flow[k]
        assert np.max(np.abs(residual)) < 1e-8 * 100.0


def test_unbalanced_island_reports_island_and_mw():
    net = load_case("toy4")
    with pytest.raises(UnbalancedIslandError) as err:
        solve_injections(net, np.ones(4, bool), np.array([10.0, 0.0, 0.0, 0.0]))
    assert err.value.imbalance_mw == pytest.approx(10.0)
    assert err.value.island_index == 0


def test_two_bus_nodal_reactance():
    net = two_bus_net(x=0.1)
    x_nodal = nodal_reactance(net, np.ones(1, bool))
    assert np.allclose(x_nodal, [[0.0, 0.0], [0.0, 0.1]])


def test_nodal_reactance_symmetric_and_grounded():
    net = load_case("toy4")
    x_nodal = nodal_reactance(net, np.ones(4, bool))
    assert np.max(np.abs(x_nodal - x_nodal.T)) < 1e-10
    assert np.allclose(x_nodal[net.slack_bus, :], 0)
    assert np.allclose(x_nodal[:, net.slack_bus], 0)


def test_bridge_identity_on_toy4():
    # For the bridge L4, M_k^T X M_k equals x_k exactly.
    net = load_case("toy4")
    x_nodal = nodal_reactance(net, np.ones(4, bool))
    br = net.branches[3]
    m = np.zeros(4)
    m[br.from_bus], m[br.to_bus] = 1.0, -1.0
    assert m @ x_nodal @ m == pytest.approx(br.reactance, abs=1e-12)
    table = lodf(net, np.ones(4, bool))
    assert bool(table.bridge[3]) is True
    assert not table.bridge[:3].any()


def test_single_line_is_bridge():
    net = two_bus_net()
    table = lodf(net, np.ones(1, bool))
    assert bool(table.bridge[0]) is True


def test_lodf_predicts_resolved_flows_on_toy4():
    # Master test: outage of triangle edge L1 predicted from the base solve
    # must match a fresh power flow on the reduced network.
    net = load_case("toy4")
    live = np.ones(4, bool)
    p = np.array([150.0, 0.0, -50.0, -100.0])
    base = solve_injections(net, live, p)
    table = lodf(net, live)
    assert not table.bridge[0]
    predicted = base.flow + table.d[:, 0] * base.flow[0]
    reduced = live.copy()
    reduced[0] = False
    resolved = solve_injections(net, reduced, p)
    for m in range(1, 4):
        assert predicted[m] == pytest.approx(resolved.flow[m], abs=1e-8)
    assert predicted[0] == pytest.approx(0.0, abs=1e-8)


def test_lodf_exactness_and_bridges_random_networks():
    # Property over >= 100 random connected topologies with random
    # balanced injections; bridge flags must agree with an independent
    # depth-first bridge finder.
    rng = np.random.default_rng(42)
    for _ in range(100):
        net = random_connected_net(rng)
        live = np.ones(net.n_branches, bool)
        islands = bus_islands(net, live)
        p = balanced_injection_per_island(net, islands, rng)
        base = solve_injections(net, live, p)
        table = lodf(net, live)
        expected_bridges = dfs_bridges(
            net.n_buses, [(b.from_bus, b.to_bus) for b in net.branches]
        )
        assert set(np.flatnonzero(table.bridge)) == expected_bridges
        for k in range(net.n_branches):
            if table.bridge[k]:
                continue
            reduced = live.copy()
            reduced[k] = False
            resolved = solve_injections(net, reduced, p)
            predicted = base.flow + table.d[:, k] * base.flow[k]
            assert np.max(np.abs(predicted - resolved.flow)) < 1e-8


def test_flow_antisymmetry_under_orientation_flip():
    rng = np.random.default_rng(5)
    net = random_connected_net(rng)
    p = rng.normal(0, 30, net.n_buses)
    p -= p.mean()
    flipped = build_network(
        [b.base_load for b in net.buses],
        [
            (br.to_bus, br.from_bus, br.reactance, br.flow_limit_long_term)
            for br in net.branches
        ],
        [],
        slack_bus=net.slack_bus,
    )
    live = np.ones(net.n_branches, bool)
    a = solve_injections(net, live, p)
    b = solve_injections(flipped, live, p)
    assert np.allclose(a.flow, -b.flow, atol=1e-9)


def test_vulnerability_bridge_scores_beta():
    net = two_bus_net()
    state = OperatingState(
        in_service=np.ones(1, bool),
        load=np.zeros(2),
        gen_output=np.zeros(0),
        flow=np.zeros(1),
    )
    table = lodf(net, state.in_service)
    y = physical_vulnerability(net, state, table, beta=1.1)
    assert y[0] == pytest.approx(1.1)


def test_vulnerability_zero_flows():
    net = load_case("toy4")
    state = toy4_state(net, flows=[0, 0, 0, 0])
    state.load[:] = 0
    state.gen_output[:] = 0
    table = lodf(net, state.in_service)
    y = physical_vulnerability(net, state, table, beta=1.1)
    assert np.allclose(y[:3], 0.0)
    assert y[3] == pytest.approx(1.1)


def test_vulnerability_matches_brute_force_resolve():
    # Oracle: for each non-bridge outage, re-solve the power flow and take
    # the worst loading ratio over the surviving branches.
    net = load_case("toy4")
    live = np.ones(4, bool)
    p = np.array([150.0, 0.0, -50.0, -100.0])
    base = solve_injections(net, live, p)
    state = toy4_state(net, flows=base.flow)
    table = lodf(net, live)
    y = physical_vulnerability(net, state, table, beta=1.1)
    for k in range(4):
        if table.bridge[k]:
            assert y[k] == pytest.approx(1.1)
            continue
        reduced = live.copy()
        reduced[k] = False
        resolved = solve_injections(net, reduced, p)
        ratios = [
            abs(resolved.flow[m]) / net.branches[m].flow_limit_long_term
            for m in range(4)
            if m != k
        ]
        assert y[k] == pytest.approx(max(ratios), abs=1e-9)


def test_vulnerability_out_of_service_sentinel():
    net = load_case("toy4")
    live = np.array([True, False, True, True])
    state = toy4_state(net)
    state.in_service = live
    table = lodf(net, live)
    y = physical_vulnerability(net, state, table, beta=1.1)
    assert y[1] == -np.inf
