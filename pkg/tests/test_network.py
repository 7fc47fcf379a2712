import json

import numpy as np
import pytest

from gridcascade.cases import load_case, case_text
from gridcascade.network import (
    CaseFormatError,
    CaseValidationError,
    build_network,
    parse_case,
    scale_loads,
    serialize_case,
)
from util import random_connected_net


def test_toy4_fixture_shape():
    net = load_case("toy4")
    assert net.n_buses == 4
    assert net.n_branches == 4
    assert net.n_generators == 1
    # L4 is the only branch touching B4
    assert (net.branches[3].from_bus, net.branches[3].to_bus) == (2, 3)


def test_rts79_counts_match_published_system():
    net = load_case("rts79")
    assert net.n_buses == 24
    assert net.n_branches == 38
    assert sum(b.base_load for b in net.buses) == pytest.approx(2850.0)
    assert sum(g.capacity_max for g in net.generators) == pytest.approx(3405.0)


def test_round_trip_identity_toy4():
    net = load_case("toy4")
    assert parse_case(serialize_case(net)) == net


def test_round_trip_preserves_all_rts_limits():
    net = load_case("rts79")
    again = parse_case(serialize_case(net))
    assert again == net
    for a, b in zip(net.branches, again.branches):
        assert a.flow_limit_long_term == b.flow_limit_long_term


def test_round_trip_random_cases():
    rng = np.random.default_rng(20)
    for _ in range(25):
        net = random_connected_net(rng, with_gens=True)
        assert parse_case(serialize_case(net)) == net


def test_defaults_materialized_on_serialize():
    doc = json.loads(case_text("toy4"))
    del doc["generators"][0]["cost"]
    del doc["generators"][0]["pmin_mw"]
    net = parse_case(json.dumps(doc))
    assert net.generators[0].cost == 1.0
    assert net.generators[0].capacity_min == 0.0
    out = json.loads(serialize_case(net))
    assert out["generators"][0]["cost"] == 1.0
    assert out["generators"][0]["pmin_mw"] == 0.0


def test_syntax_error_reports_position():
    with pytest.raises(CaseFormatError, match=r"line \d+, column \d+"):
        parse_case('{"version": 1,')


def test_unknown_keys_rejected():
    doc = json.loads(case_text("toy4"))
    doc["frequency_hz"] = 60
    with pytest.raises(CaseFormatError, match="unknown key"):
        parse_case(json.dumps(doc))
    doc = json.loads(case_text("toy4"))
    doc["buses"][0]["name"] = "B1"
    with pytest.raises(CaseFormatError, match="unknown key"):
        parse_case(json.dumps(doc))


def test_zero_reactance_rejected():
    doc = json.loads(case_text("toy4"))
    doc["branches"][1]["x_pu"] = 0.0
    with pytest.raises(CaseValidationError, match="reactance must be > 0"):
        parse_case(json.dumps(doc))


def test_disconnected_graph_rejected():
    doc = json.loads(case_text("toy4"))
    doc["branches"] = doc["branches"][:3]  # drop the only path to B4
    with pytest.raises(CaseValidationError, match="disconnected graph"):
        parse_case(json.dumps(doc))


def test_self_loop_rejected():
    with pytest.raises(CaseValidationError, match="must differ"):
        build_network([0, 0], [(0, 0, 0.1, 10), (0, 1, 0.1, 10)], [])


def test_dense_ids_required():
    doc = json.loads(case_text("toy4"))
    doc["buses"][3]["id"] = 7
    with pytest.raises(CaseValidationError, match="dense"):
        parse_case(json.dumps(doc))


def test_scale_loads_identity():
    net = load_case("toy4")
    assert scale_loads(net, 1.0) == net


def test_scale_loads_arithmetic():
    net = load_case("toy4")
    scaled = scale_loads(net, 1.1)
    assert scaled.buses[3].base_load == pytest.approx(110.0)
    assert scaled.buses[2].base_load == pytest.approx(55.0)
    assert scaled.branches == net.branches


def test_scale_loads_rejects_nonpositive():
    net = load_case("toy4")
    with pytest.raises(ValueError, match="> 0"):
        scale_loads(net, 0.0)
    with pytest.raises(ValueError, match="> 0"):
        scale_loads(net, 1.0, [1.0, 1.0, -0.5, 1.0])


def test_scale_loads_seeded_draw_is_reproducible():
    net = load_case("toy4")
    rng = np.random.default_rng(7)
    factors = rng.uniform(0.9, 1.1, size=net.n_buses)
    scaled = scale_loads(net, 1.1, factors)
    again = scale_loads(net, 1.1, np.random.default_rng(7).uniform(0.9, 1.1, size=net.n_buses))
    assert scaled == again
    expected = net.base_load * 1.1 * factors
    assert np.allclose([b.base_load for b in scaled.buses], expected)
