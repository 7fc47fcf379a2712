"""Cascade propagation and the random-failure tree walk.

One propagation step removes a chosen branch and then alternates power
flow, simultaneous relay tripping of every branch loaded above the relay
threshold, and balancing of the islands that appear, until no relay fires;
a minimum-shed re-dispatch closes the step. Load shed along the way stays
shed: islands that lost supply are not re-energized later in the cascade.
"""

import json
from dataclasses import dataclass

import numpy as np

from .dcflow import bus_islands, solve_injections
from .dispatch import DispatchInfeasibleError, dcopf_initial, redispatch_min_shed
from .network import OperatingState

RANDOM_OUTAGE = "RANDOM_OUTAGE"
RELAY_TRIP = "RELAY_TRIP"
ISLAND_SHED = "ISLAND_SHED"
REDISPATCH = "REDISPATCH"

SHED_TOL = 1e-6  # MW below which shedding counts as zero


@dataclass(frozen=True)
class CascadeEvent:
    kind: str
    branch: int | None
    shed_mw: float


@dataclass
class CascadePath:
    """Record of one explored outage sequence, rooted at the initial state."""

    random_outages: tuple
    events: tuple
    total_shed: float  # MW shed along this path (root state excluded)
    final_state: OperatingState

    @property
    def sheds(self):
        return self.total_shed > SHED_TOL

    def to_dict(self):
        return {
            "outages": [int(k) for k in self.random_outages],
            "events": [
                {"kind": e.kind, "branch": None if e.branch is None else int(e.branch), "shed_mw": e.shed_mw}
                for e in self.events
            ],
            "total_shed": self.total_shed,
        }


def write_paths_jsonl(paths, fh):
    for p in paths:
        fh.write(json.dumps(p.to_dict()) + "\n")


def initial_state(net, loads=None):
    """Operating state after the initial dispatch of the intact network.

    Falls back to minimum-shed re-dispatch when the full load is not
    servable (degenerate initial condition); the pre-existing shed is then
    carried in ``shed_so_far``.
    """
    loads = net.base_load if loads is None else np.asarray(loads, dtype=float)
    live = np.ones(net.n_branches, dtype=bool)
    try:
        res = dcopf_initial(net, loads)
    except DispatchInfeasibleError:
        res = redispatch_min_shed(net, live, loads)
    return OperatingState(
        in_service=live,
        load=loads - res.shed,
        gen_output=res.gen_output,
        flow=res.flow,
        shed_so_far=float(res.shed.sum()),
    )


def _balance_islands(net, state, events):
    """Make every island solvable at the current (fixed) dispatch.

    Surplus islands curtail output; deficient islands first raise output
    toward capacity and shed only the remaining deficit. Shedding here is
    final: the served load vector is reduced in place.
    """
    islands = bus_islands(net, state.in_service)
    for island in islands:
        gens = [g for b in island for g in net.buses[b].generators]
        island_load = float(state.load[island].sum())
        capacity = float(net.gen_pmax[gens].sum()) if gens else 0.0
        output = float(state.gen_output[gens].sum()) if gens else 0.0
        serve = min(island_load, capacity)

        deficit = island_load - serve
        if deficit > SHED_TOL:
            state.load[island] *= serve / island_load
            state.shed_so_far += deficit
            events.append(CascadeEvent(ISLAND_SHED, None, deficit))

        if not gens:
            continue
        if output > serve + SHED_TOL:
            state.gen_output[gens] *= serve / output if output > 0 else 0.0
        elif output < serve - SHED_TOL:
            headroom = net.gen_pmax[gens] - state.gen_output[gens]
            total_headroom = float(headroom.sum())
            if total_headroom > 0:
                state.gen_output[gens] += (serve - output) * headroom / total_headroom
    return islands


def propagate(net, state, branch_k, beta=1.1, relay_mode="simultaneous"):
    """Disconnect ``branch_k`` and run the relay/islanding loop to a fixpoint,
    then re-dispatch with minimum shedding.

    ``relay_mode`` selects whether every overloaded branch trips per power
    flow solve ("simultaneous") or only the worst one
    ("sequential_worst_first"). Returns (new state, event list).
    """
    if not state.in_service[branch_k]:
        raise ValueError(f"branch {branch_k} is already out of service")
    state = state.copy()
    events = [CascadeEvent(RANDOM_OUTAGE, int(branch_k), 0.0)]
    state.in_service[branch_k] = False
    state.flow[branch_k] = 0.0

    while True:
        islands = _balance_islands(net, state, events)
        injection = -state.load.copy()
        np.add.at(injection, net.gen_bus, state.gen_output)
        sol = solve_injections(net, state.in_service, injection, islands)
        state.flow = sol.flow
        over = (np.abs(sol.flow) / net.flow_limit > beta) & state.in_service
        if not over.any():
            break
        if relay_mode == "sequential_worst_first":
            ratios = np.where(over, np.abs(sol.flow) / net.flow_limit, -np.inf)
            trips = [int(np.argmax(ratios))]
        elif relay_mode == "simultaneous":
            trips = [int(m) for m in np.flatnonzero(over)]
        else:
            raise ValueError(f"unknown relay_mode {relay_mode!r}")
        for m in trips:
            events.append(CascadeEvent(RELAY_TRIP, m, 0.0))
            state.in_service[m] = False
            state.flow[m] = 0.0

    result = redispatch_min_shed(net, state.in_service, state.load)
    new_shed = float(result.shed.sum())
    state.load = state.load - result.shed
    state.gen_output = result.gen_output
    state.flow = result.flow
    state.shed_so_far += new_shed
    events.append(CascadeEvent(REDISPATCH, None, new_shed))
    return state, events


class BudgetExhausted(Exception):
    """Internal: raised to unwind the tree walk when the attempt budget hits."""


def run_opa(net, initial_loads, R, order_fn, beta=1.1, relay_mode="simultaneous",
            budget=None, on_attempt=None, root_state=None):
    """Depth-first walk of the random-failure tree down to ``R`` outages.

    At each node the candidate branches are taken in ``order_fn(state)``
    order. A node that sheds load is terminal and recorded, as is every
    depth-R leaf. One attempt is one propagation of a candidate outage;
    ``on_attempt(attempt_index, path_or_none)`` fires after each. Already
    expanded outage sequences are never re-simulated.
    """
    paths = []
    if R == 0:
        return paths
    if R < 0:
        raise ValueError("R must be >= 0")
    root = initial_state(net, initial_loads) if root_state is None else root_state
    root_shed = root.shed_so_far
    visited = set()
    attempts = 0

    def walk(state, seq, events):
        nonlocal attempts
        for k in order_fn(state):
            if not state.in_service[k]:
                continue
            key = seq + (int(k),)
            if key in visited:
                continue
            if budget is not None and attempts >= budget:
                raise BudgetExhausted
            visited.add(key)
            attempts += 1
            child, child_events = propagate(net, state, k, beta=beta, relay_mode=relay_mode)
            all_events = events + tuple(child_events)
            total = child.shed_so_far - root_shed
            terminal = total > SHED_TOL or len(key) >= R
            path = None
            if terminal:
                path = CascadePath(
                    random_outages=key,
                    events=all_events,
                    total_shed=total,
                    final_state=child,
                )
                paths.append(path)
            if on_attempt is not None:
                on_attempt(attempts, path)
            if not terminal:
                walk(child, key, all_events)

    try:
        walk(root, (), ())
    except BudgetExhausted:
        pass
    return paths
