"""Shared test helpers: independent oracles kept deliberately naive."""

import numpy as np

from gridcascade.network import build_network


def dfs_bridges(n_nodes, edges):
    """Cut edges of an undirected multigraph via Tarjan lowlinks.

    ``edges`` is a list of (u, v); the returned set holds edge indices.
    Parallel edges are handled (a doubled edge is never a bridge).
    """
    adj = [[] for _ in range(n_nodes)]
    for idx, (u, v) in enumerate(edges):
        adj[u].append((v, idx))
        adj[v].append((u, idx))
    visited = [False] * n_nodes
    disc = [0] * n_nodes
    low = [0] * n_nodes
    bridges = set()
    counter = [0]

    for start in range(n_nodes):
        if visited[start]:
            continue
        stack = [(start, -1, iter(adj[start]))]
        visited[start] = True
        disc[start] = low[start] = counter[0]
        counter[0] += 1
        while stack:
            node, in_edge, it = stack[-1]
            advanced = False
            for nxt, eid in it:
                if eid == in_edge:
                    continue
                if not visited[nxt]:
                    visited[nxt] = True
                    disc[nxt] = low[nxt] = counter[0]
                    counter[0] += 1
                    stack.append((nxt, eid, iter(adj[nxt])))
                    advanced = True
                    break
                low[node] = min(low[node], disc[nxt])
            if not advanced:
                stack.pop()
                if stack:
                    parent = stack[-1][0]
                    low[parent] = min(low[parent], low[node])
                    if low[node] > disc[parent]:
                        bridges.add(in_edge)
        # restart iterators consumed by the inner break
    return bridges


def random_connected_net(rng, max_buses=20, max_branches=40, with_gens=False):
    """Random connected network: spanning tree plus extra random edges."""
    n = int(rng.integers(2, max_buses + 1))
    edges = []
    for v in range(1, n):
        u = int(rng.integers(0, v))
        edges.append((u, v))
    n_extra = int(rng.integers(0, max(1, max_branches - len(edges)) + 1))
    for _ in range(n_extra):
        u, v = rng.choice(n, size=2, replace=False)
        edges.append((int(u), int(v)))
    branches = [
        (u, v, float(rng.uniform(0.02, 0.4)), float(rng.uniform(50, 500)))
        for u, v in edges
    ]
    loads = np.zeros(n)
    gens = []
    if with_gens:
        load_buses = rng.choice(n, size=max(1, n // 2), replace=False)
        loads[load_buses] = rng.uniform(10, 100, size=len(load_buses))
        for b in rng.choice(n, size=max(1, n // 3), replace=False):
            gens.append((int(b), float(rng.uniform(80, 300)), 0.0, float(rng.uniform(1, 50))))
    return build_network(loads, branches, gens, slack_bus=0)


def random_balanced_injection(net, rng, scale=100.0):
    """Zero-sum injection vector (MW) over the whole network."""
    p = rng.normal(0.0, scale, size=net.n_buses)
    return p - p.mean()


def balanced_injection_per_island(net, islands, rng, scale=100.0):
    p = rng.normal(0.0, scale, size=net.n_buses)
    for island in islands:
        p[island] -= np.mean(p[island])
    return p
