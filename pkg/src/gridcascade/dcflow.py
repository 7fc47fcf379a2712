"""DC power flow, islanding, nodal reactance, outage distribution factors.

The outage factor of branch m for an outage of branch k is

    d[m, k] = (X_m^k / x_m) / (1 - X_k^k / x_k),   X_m^k = M_m^T X M_k,

with X the slack-grounded nodal reactance matrix and M_k the signed
incidence vector of branch k. A vanishing denominator marks branch k as a
bridge: its outage splits the network and the factor is undefined.
"""

from dataclasses import dataclass

import numpy as np

from .network import BASE_MVA, connected_components

BRIDGE_TOL = 1e-8


class UnbalancedIslandError(ValueError):
    """An island's generation does not match its load."""

    def __init__(self, island_index, buses, imbalance_mw):
        self.island_index = island_index
        self.buses = buses
        self.imbalance_mw = imbalance_mw
        super().__init__(
            f"island {island_index} (buses {buses}) unbalanced by {imbalance_mw:+.6f} MW"
        )


class SingularIslandError(ValueError):
    """Grounded island matrix could not be factorized."""


@dataclass
class DcSolution:
    angles: np.ndarray  # rad per bus, reference bus of each island at 0
    flow: np.ndarray  # MW per branch, signed from->to
    islands: list  # list of sorted bus-id lists


@dataclass
class LodfTable:
    """Distribution factors for all single outages on one topology."""

    nodal_reactance: np.ndarray  # N x N, grounded per island
    d: np.ndarray  # L x L, d[m, k]; zero across islands and for bridges
    bridge: np.ndarray  # bool per branch
    in_service: np.ndarray  # topology the table was built for


def bus_islands(net, in_service):
    """Connected components of the bus graph restricted to live branches."""
    edges = [
        (net.branches[k].from_bus, net.branches[k].to_bus)
        for k in range(net.n_branches)
        if in_service[k]
    ]
    return connected_components(net.n_buses, edges)


def _island_reference(net, island):
    return net.slack_bus if net.slack_bus in island else island[0]


def nodal_reactance(net, in_service, islands=None):
    """Slack-grounded nodal reactance matrix X, assembled over all islands.

    Within each island the susceptance matrix is inverted with the island's
    reference row/column removed; the reference row/column of X and every
    cross-island entry are zero. X is symmetric.
    """
    n = net.n_buses
    in_service = np.asarray(in_service, dtype=bool)
    if islands is None:
        islands = bus_islands(net, in_service)
    x_nodal = np.zeros((n, n))
    live = np.flatnonzero(in_service)
    frm, to = net.from_bus[live], net.to_bus[live]
    b_series = 1.0 / net.reactance[live]

    b_full = np.zeros((n, n))
    np.add.at(b_full, (frm, frm), b_series)
    np.add.at(b_full, (to, to), b_series)
    np.add.at(b_full, (frm, to), -b_series)
    np.add.at(b_full, (to, frm), -b_series)

    for island in islands:
        if len(island) < 2:
            continue
        ref = _island_reference(net, island)
        keep = [b for b in island if b != ref]
        sub = b_full[np.ix_(keep, keep)]
        try:
            inv = np.linalg.inv(sub)
        except np.linalg.LinAlgError as exc:
            raise SingularIslandError(
                f"island containing bus {island[0]} is singular after grounding"
            ) from exc
        x_nodal[np.ix_(keep, keep)] = inv
    return x_nodal


def solve_injections(net, in_service, injection_mw, islands=None, x_nodal=None, tol_mw=1e-6):
    """DC power flow at fixed bus injections (MW, generation positive).

    Every island must be balanced to within ``tol_mw``; the caller is
    responsible for curtailment/shedding before solving.
    """
    in_service = np.asarray(in_service, dtype=bool)
    injection_mw = np.asarray(injection_mw, dtype=float)
    if islands is None:
        islands = bus_islands(net, in_service)
    for idx, island in enumerate(islands):
        imbalance = float(np.sum(injection_mw[island]))
        if abs(imbalance) > tol_mw:
            raise UnbalancedIslandError(idx, island, imbalance)
    if x_nodal is None:
        x_nodal = nodal_reactance(net, in_service, islands)
    angles = x_nodal @ (injection_mw / BASE_MVA)
    flow = np.zeros(net.n_branches)
    live = np.flatnonzero(in_service)
    flow[live] = (
        (angles[net.from_bus[live]] - angles[net.to_bus[live]])
        / net.reactance[live]
        * BASE_MVA
    )
    return DcSolution(angles=angles, flow=flow, islands=islands)


def solve_dcpf(net, state):
    """DC power flow for an operating state (gen output minus served load)."""
    injection = -state.load.copy()
    np.add.at(injection, net.gen_bus, state.gen_output)
    return solve_injections(net, state.in_service, injection)


def lodf(net, in_service, x_nodal=None, islands=None):
    """Distribution factor table for every single-branch outage.

    ``d[m, k]`` is the fraction of branch k's pre-outage flow added to
    branch m after the outage of k. Conventions: d[k, k] = -1 for live
    non-bridge k (the outage cancels its own flow); columns of bridges and
    all rows/columns of out-of-service branches are zero; entries across
    islands are zero.
    """
    in_service = np.asarray(in_service, dtype=bool)
    if islands is None:
        islands = bus_islands(net, in_service)
    if x_nodal is None:
        x_nodal = nodal_reactance(net, in_service, islands)
    frm, to = net.from_bus, net.to_bus
    # X_m^k = M_m^T X M_k for every branch pair.
    xb = (
        x_nodal[np.ix_(frm, frm)]
        - x_nodal[np.ix_(frm, to)]
        - x_nodal[np.ix_(to, frm)]
        + x_nodal[np.ix_(to, to)]
    )
    x_series = net.reactance
    denom = 1.0 - np.diag(xb) / x_series
    bridge = (np.abs(denom) < BRIDGE_TOL) & in_service

    d = np.zeros_like(xb)
    safe = ~bridge & in_service
    cols = np.flatnonzero(safe)
    d[:, cols] = (xb[:, cols] / x_series[:, None]) / denom[cols][None, :]
    d[np.diag_indices_from(d)] = 0.0
    d[cols, cols] = -1.0
    d[~in_service, :] = 0.0
    d[:, ~in_service] = 0.0
    return LodfTable(nodal_reactance=x_nodal, d=d, bridge=bridge, in_service=in_service.copy())


def physical_vulnerability(net, state, table, beta):
    """Worst post-outage loading ratio for each candidate branch outage.

    For a live non-bridge branch k this is max over live branches m != k of
    |flow_m + d[m,k] * flow_k| / limit_m; an outage that islands the system
    (bridge) scores exactly ``beta``. Out-of-service branches score -inf so
    they are never searched.
    """
    flow = state.flow
    live = state.in_service
    y = np.full(net.n_branches, -np.inf)
    post = np.abs(flow[:, None] + table.d * flow[None, :]) / net.flow_limit[:, None]
    post[~live, :] = -np.inf
    post[np.diag_indices_from(post)] = -np.inf
    live_idx = np.flatnonzero(live)
    y[live_idx] = np.max(post[:, live_idx], axis=0)
    y[table.bridge] = beta
    return y
