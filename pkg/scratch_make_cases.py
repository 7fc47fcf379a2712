"""One-off: build toy4.json and rts79.json case files."""
import json

# --- toy4: triangle B1-B2-B3 plus bridge L4 to B4 ---------------------------
toy4 = {
    "version": 1,
    "slack_bus": 0,
    "buses": [
        {"id": 0, "load_mw": 0.0},
        {"id": 1, "load_mw": 0.0},
        {"id": 2, "load_mw": 50.0},
        {"id": 3, "load_mw": 100.0},
    ],
    "branches": [
        {"id": 0, "from": 0, "to": 1, "x_pu": 0.10, "limit_mw": 160.0},
        {"id": 1, "from": 1, "to": 2, "x_pu": 0.10, "limit_mw": 160.0},
        {"id": 2, "from": 0, "to": 2, "x_pu": 0.20, "limit_mw": 160.0},
        {"id": 3, "from": 2, "to": 3, "x_pu": 0.05, "limit_mw": 120.0},
    ],
    "generators": [
        {"id": 0, "bus": 0, "pmax_mw": 200.0, "pmin_mw": 0.0, "cost": 1.0},
    ],
}

# --- IEEE RTS-79 (1979 reliability test system) ------------------------------
# Buses 1..24 -> ids 0..23. Loads from the standard bus data (peak 2850 MW).
loads = {
    1: 108, 2: 97, 3: 180, 4: 74, 5: 71, 6: 136, 7: 125, 8: 171, 9: 175,
    10: 195, 13: 265, 14: 194, 15: 317, 16: 100, 18: 333, 19: 181, 20: 128,
}
assert sum(loads.values()) == 2850

# (from, to, x_pu, rate_mw) in the standard branch order L1..L38.
branch_data = [
    (1, 2, 0.0139, 175), (1, 3, 0.2112, 175), (1, 5, 0.0845, 175),
    (2, 4, 0.1267, 175), (2, 6, 0.1920, 175), (3, 9, 0.1190, 175),
    (3, 24, 0.0839, 400), (4, 9, 0.1037, 175), (5, 10, 0.0883, 175),
    (6, 10, 0.0605, 175), (7, 8, 0.0614, 175), (8, 9, 0.1651, 175),
    (8, 10, 0.1651, 175), (9, 11, 0.0839, 400), (9, 12, 0.0839, 400),
    (10, 11, 0.0839, 400), (10, 12, 0.0839, 400), (11, 13, 0.0476, 500),
    (11, 14, 0.0418, 500), (12, 13, 0.0476, 500), (12, 23, 0.0966, 500),
    (13, 23, 0.0865, 500), (14, 16, 0.0389, 500), (15, 16, 0.0173, 500),
    (15, 21, 0.0490, 500), (15, 21, 0.0490, 500), (15, 24, 0.0519, 500),
    (16, 17, 0.0259, 500), (16, 19, 0.0231, 500), (17, 18, 0.0144, 500),
    (17, 22, 0.1053, 500), (18, 21, 0.0259, 500), (18, 21, 0.0259, 500),
    (19, 20, 0.0396, 500), (19, 20, 0.0396, 500), (20, 23, 0.0216, 500),
    (20, 23, 0.0216, 500), (21, 22, 0.0678, 500),
]
assert len(branch_data) == 38

# 32 units; (bus, pmax) with marginal costs by standard unit type.
unit_cost = {12: 56.6, 20: 130.0, 50: 0.5, 76: 13.8, 100: 43.6,
             155: 11.5, 197: 48.6, 350: 10.9, 400: 5.6}
units = (
    [(1, 20)] * 2 + [(1, 76)] * 2
    + [(2, 20)] * 2 + [(2, 76)] * 2
    + [(7, 100)] * 3
    + [(13, 197)] * 3
    + [(15, 12)] * 5 + [(15, 155)]
    + [(16, 155)]
    + [(18, 400)]
    + [(21, 400)]
    + [(22, 50)] * 6
    + [(23, 155)] * 2 + [(23, 350)]
)
assert len(units) == 32
assert sum(p for _, p in units) == 3405

rts79 = {
    "version": 1,
    "slack_bus": 12,  # bus 13
    "buses": [{"id": b, "load_mw": float(loads.get(b + 1, 0))} for b in range(24)],
    "branches": [
        {"id": k, "from": f - 1, "to": t - 1, "x_pu": x, "limit_mw": float(r)}
        for k, (f, t, x, r) in enumerate(branch_data)
    ],
    "generators": [
        {"id": g, "bus": bus - 1, "pmax_mw": float(p), "pmin_mw": 0.0, "cost": unit_cost[p]}
        for g, (bus, p) in enumerate(units)
    ],
}

for name, doc in (("toy4", toy4), ("rts79", rts79)):
    with open(f"src/gridcascade/cases/{name}.json", "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")

import sys
sys.path.insert(0, "src")
from gridcascade.network import parse_case

for name in ("toy4", "rts79"):
    net = parse_case(open(f"src/gridcascade/cases/{name}.json").read())
    print(name, net.n_buses, "buses", net.n_branches, "branches",
          net.n_generators, "gens", sum(b.base_load for b in net.buses), "MW load",
          sum(g.capacity_max for g in net.generators), "MW cap")
