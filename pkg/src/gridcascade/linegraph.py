"""Branch-adjacency graph and the model input features.

Branches of the power network become graph nodes; two nodes are adjacent
when their branches share a bus. The normalized adjacency is
D^{-1/2} A D^{-1/2}; nodes of degree zero keep zero rows instead of NaN
(branch removals during a search can isolate nodes).
"""

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

FEATURE_NAMES = ("topology", "protection", "branch_flow", "bus_load")
N_FEATURES = len(FEATURE_NAMES)


@dataclass
class LineGraph:
    adjacency: np.ndarray  # bool, L x L, zero diagonal
    norm_adjacency: np.ndarray  # float, L x L
    degree: np.ndarray  # int, per node
    graph_hash: str
    _powers: dict = field(default_factory=dict, repr=False)

    @property
    def n_nodes(self):
        return self.adjacency.shape[0]

    def powers(self, k_hops):
        """[I, A_norm, A_norm^2, ..., A_norm^k], cached per hop count."""
        if k_hops not in self._powers:
            mats = [np.eye(self.n_nodes)]
            for _ in range(k_hops):
                mats.append(mats[-1] @ self.norm_adjacency)
            self._powers[k_hops] = np.stack(mats)
        return self._powers[k_hops]


def _hash_edges(n_nodes, edges):
    digest = hashlib.sha256(
        json.dumps({"nodes": n_nodes, "edges": sorted(edges)}).encode()
    )
    return digest.hexdigest()


def line_graph_from_adjacency(adjacency):
    """Wrap a symmetric boolean adjacency matrix (tests and synthetic use)."""
    adjacency = np.asarray(adjacency, dtype=bool)
    np.fill_diagonal(adjacency, False)
    degree = adjacency.sum(axis=1)
    scale = np.zeros(len(degree))
    nz = degree > 0
    scale[nz] = 1.0 / np.sqrt(degree[nz])
    norm = scale[:, None] * adjacency.astype(float) * scale[None, :]
    edges = [
        [int(i), int(j)]
        for i in range(len(degree))
        for j in range(i + 1, len(degree))
        if adjacency[i, j]
    ]
    return LineGraph(
        adjacency=adjacency,
        norm_adjacency=norm,
        degree=degree.astype(int),
        graph_hash=_hash_edges(len(degree), edges),
    )


def build_line_graph(net):
    """Line graph of the full network; outages do not change it (they are
    carried by the topology feature instead)."""
    ends = np.stack([net.from_bus, net.to_bus])  # 2 x L
    shares = (
        (ends[0][:, None] == ends[0][None, :])
        | (ends[0][:, None] == ends[1][None, :])
        | (ends[1][:, None] == ends[0][None, :])
        | (ends[1][:, None] == ends[1][None, :])
    )
    np.fill_diagonal(shares, False)
    return line_graph_from_adjacency(shares)


def extract_features(net, state, beta):
    """L x 4 input matrix for one operating state.

    Columns: outage indicator (1 = out of service); |flow| over the relay
    threshold flow beta * limit; |flow| in MW; larger served load of the two
    endpoint buses in MW.
    """
    flow_abs = np.abs(state.flow)
    x_t = (~state.in_service).astype(float)
    x_p = flow_abs / (beta * net.flow_limit)
    x_b = flow_abs.copy()
    x_l = np.maximum(state.load[net.from_bus], state.load[net.to_bus])
    return np.column_stack([x_t, x_p, x_b, x_l])
