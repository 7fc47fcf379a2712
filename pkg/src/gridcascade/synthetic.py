"""Random but dispatchable grids for property tests and scale checks.

Topology is a random attachment tree plus extra chords. Loads, generation,
and branch limits are sized so the intact system has a feasible min-cost
dispatch with some margin; the margin is tight enough that removing one or
two branches can still force shedding, which keeps searches interesting.
"""

import numpy as np

from .dcflow import solve_injections
from .network import build_network


def random_grid(n_buses, n_extra_branches=None, seed=0, load_total=None,
                limit_margin=1.35, min_limit=15.0):
    """Random connected network with generators, loads, and sane limits."""
    rng = np.random.default_rng(seed)
    if n_extra_branches is None:
        n_extra_branches = max(1, n_buses // 3)
    if load_total is None:
        load_total = 40.0 * n_buses

    edges = [(int(rng.integers(0, v)), v) for v in range(1, n_buses)]
    for _ in range(n_extra_branches):
        u, v = rng.choice(n_buses, size=2, replace=False)
        edges.append((int(u), int(v)))
    reactances = rng.uniform(0.05, 0.3, size=len(edges))

    loads = np.zeros(n_buses)
    load_buses = rng.choice(n_buses, size=max(1, n_buses // 2), replace=False)
    weights = rng.uniform(0.3, 1.0, size=len(load_buses))
    loads[load_buses] = load_total * weights / weights.sum()

    gen_buses = rng.choice(n_buses, size=max(2, n_buses // 4), replace=False)
    cap_weights = rng.uniform(0.4, 1.0, size=len(gen_buses))
    capacities = 1.5 * load_total * cap_weights / cap_weights.sum()
    generators = [
        (int(b), float(c), 0.0, float(rng.uniform(1.0, 60.0)))
        for b, c in zip(gen_buses, capacities)
    ]

    # Size limits from the flows of a cheapest-first dispatch of the intact
    # system so the base case is always feasible.
    tmp = build_network(loads, [(u, v, x, 1e9) for (u, v), x in zip(edges, reactances)],
                        generators, slack_bus=0)
    output = np.zeros(len(generators))
    remaining = load_total
    for g in tmp.merit_order:
        take = min(tmp.gen_pmax[g], remaining)
        output[g] = take
        remaining -= take
    injection = -loads.copy()
    np.add.at(injection, tmp.gen_bus, output)
    sol = solve_injections(tmp, np.ones(len(edges), bool), injection)
    limits = np.maximum(np.abs(sol.flow) * limit_margin, min_limit)

    branches = [(u, v, float(x), float(lim))
                for (u, v), x, lim in zip(edges, reactances, limits)]
    return build_network(loads, branches, generators, slack_bus=0)
