"""Branch orderings, the guided online search, and dataset generation.

The online search is the cascade tree walk with the candidate order at
every node decided by a strategy: random, by branch flow, by the physical
vulnerability ranking, or by the trained classifier backed by the physical
ranking for the branches it leaves unflagged.
"""

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .cascade import SHED_TOL, initial_state, propagate, run_opa
from .dcflow import lodf, physical_vulnerability
from .dispatch import DispatchInfeasibleError, dcopf_initial
from .gcn import TrainingSample, predict
from .linegraph import build_line_graph, extract_features
from .network import scale_loads

STRATEGY_KINDS = ("RAND", "PFW", "LODF", "GCN")


@dataclass
class SearchStrategy:
    kind: str
    seed: int = 0  # RAND only
    model: object = None  # GCN only

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise ValueError(f"unknown strategy {self.kind!r}")


@dataclass
class SearchCurve:
    attempts: list
    found: list
    total_paths: int | None = None

    def to_csv(self, fh):
        fh.write("attempt,found\n")
        for a, f in zip(self.attempts, self.found):
            fh.write(f"{a},{f}\n")

    def attempts_to_complete(self, total=None):
        """First attempt index at which every shedding path was found."""
        total = self.total_paths if total is None else total
        for a, f in zip(self.attempts, self.found):
            if f >= total:
                return a
        return None


def order_branches(strategy, net, state, lodf_table=None, model=None,
                   lg=None, beta=1.1, rng=None):
    """Ranked list of in-service branch ids to try from this state.

    RAND shuffles; PFW sorts by descending absolute flow; LODF by
    descending physical vulnerability; GCN puts the branches the model
    flags first (by descending shedding probability) and orders the rest
    by physical vulnerability. All ties break by ascending branch id.
    """
    live = np.flatnonzero(state.in_service)
    if strategy.kind == "RAND":
        if rng is None:
            rng = np.random.default_rng(strategy.seed)
        return [int(k) for k in rng.permutation(live)]
    if strategy.kind == "PFW":
        return [int(k) for k in sorted(live, key=lambda k: (-abs(state.flow[k]), k))]

    if lodf_table is None:
        lodf_table = lodf(net, state.in_service)
    vuln = physical_vulnerability(net, state, lodf_table, beta)
    if strategy.kind == "LODF":
        return [int(k) for k in sorted(live, key=lambda k: (-vuln[k], k))]

    # GCN: two-phase order
    model = model if model is not None else strategy.model
    if model is None:
        raise ValueError("GCN strategy requires a trained model")
    if lg is None:
        lg = build_line_graph(net)
    if lg.graph_hash != model.graph_hash:
        raise ValueError("model was trained on a different graph than this case")
    features = extract_features(net, state, beta)
    flags, p_shed = predict(model, lg, features)
    flagged = [int(k) for k in sorted(live, key=lambda k: (-p_shed[k], k)) if flags[k]]
    rest = [int(k) for k in sorted(live, key=lambda k: (-vuln[k], k)) if not flags[k]]
    return flagged + rest


def online_search(net, loads, strategy, R, budget=None, beta=1.1,
                  relay_mode="simultaneous"):
    """Guided cascade search; returns (paths, curve sampled at every attempt)."""
    if budget is not None and budget < 1:
        raise ValueError("budget must be >= 1")
    lg = build_line_graph(net) if strategy.kind == "GCN" else None
    rng = np.random.default_rng(strategy.seed) if strategy.kind == "RAND" else None
    root = initial_state(net, loads)

    def order_fn(state):
        return order_branches(strategy, net, state, model=strategy.model,
                              lg=lg, beta=beta, rng=rng)

    attempts, found = [], []
    count = 0

    def on_attempt(i, path):
        nonlocal count
        if path is not None and path.sheds:
            count += 1
        attempts.append(i)
        found.append(count)

    paths = run_opa(net, loads, R, order_fn, beta=beta, relay_mode=relay_mode,
                    budget=budget, on_attempt=on_attempt, root_state=root)
    return paths, SearchCurve(attempts=attempts, found=found)


def exhaustive_reference(net, loads, R, beta=1.1, relay_mode="simultaneous",
                         cache_path=None):
    """Shedding outage sequences found by full ascending-id exploration.

    The result is cached as JSON when a path is given, so curves can be
    replotted without re-simulating.
    """
    if cache_path is not None:
        try:
            with open(cache_path) as fh:
                doc = json.load(fh)
            if doc["r"] == R and doc["beta"] == beta:
                return {tuple(k) for k in doc["keys"]}
        except (OSError, ValueError, KeyError):
            pass
    paths = run_opa(net, loads, R,
                    lambda s: [int(k) for k in np.flatnonzero(s.in_service)],
                    beta=beta, relay_mode=relay_mode)
    keys = {p.random_outages for p in paths if p.sheds}
    if cache_path is not None:
        with open(cache_path, "w") as fh:
            json.dump({"r": R, "beta": beta, "keys": sorted(list(k) for k in keys)}, fh)
            fh.write("\n")
    return keys


def label_state(net, state, beta=1.1, relay_mode="simultaneous"):
    """Shedding label for every in-service next outage from this state.

    Prescreen with the distribution factors: a non-islanding outage whose
    predicted post-flows stay inside the long-term limits cannot force any
    shedding (the standing dispatch remains feasible), so only islanding or
    overloading candidates are fully propagated. Returns (labels, mask,
    propagated child states for the candidates that needed it).
    """
    table = lodf(net, state.in_service)
    labels = np.zeros(net.n_branches)
    mask = state.in_service.copy()
    children = {}
    live = np.flatnonzero(state.in_service)
    for k in live:
        needs_sim = bool(table.bridge[k])
        if not needs_sim:
            post = np.abs(state.flow + table.d[:, k] * state.flow[k])
            post[k] = 0.0
            needs_sim = bool(np.any(post[live] > net.flow_limit[live]))
        if not needs_sim:
            continue
        child, _ = propagate(net, state, k, beta=beta, relay_mode=relay_mode)
        children[int(k)] = child
        if child.shed_so_far - state.shed_so_far > SHED_TOL:
            labels[k] = 1.0
    return labels, mask, children


def _draw_samples(net, draw_index, seed, load_band, global_scale, beta, relay_mode,
                  want_depth1=True):
    """All samples from one load draw: the intact state plus, when depth-1
    states are wanted, every non-shedding post-single-outage state."""
    rng = np.random.default_rng([seed, draw_index])
    factors = rng.uniform(load_band[0], load_band[1], size=net.n_buses)
    scaled = scale_loads(net, global_scale, factors)
    try:
        dcopf_initial(scaled, scaled.base_load)
    except DispatchInfeasibleError:
        return None  # infeasible scenario: skipped and counted by the caller
    root = initial_state(scaled, scaled.base_load)

    out = []
    labels, mask, children = label_state(scaled, root, beta, relay_mode)
    out.append(TrainingSample(
        features=extract_features(scaled, root, beta), labels=labels, mask=mask))
    if not want_depth1:
        return out
    for k in np.flatnonzero(root.in_service):
        if labels[k] > 0:
            continue  # shedding states are terminal: the search never asks there
        child = children.get(int(k))
        if child is None:
            child, _ = propagate(scaled, root, k, beta=beta, relay_mode=relay_mode)
        c_labels, c_mask, _ = label_state(scaled, child, beta, relay_mode)
        out.append(TrainingSample(
            features=extract_features(scaled, child, beta), labels=c_labels, mask=c_mask))
    return out


def generate_dataset(net, n_scenarios, R=2, load_band=(0.9, 1.1), global_scale=1.1,
                     seed=0, beta=1.1, relay_mode="simultaneous", jobs=1):
    """Labeled (features, labels) scenarios for training, plus metadata.

    One scenario is one operating state with its full label vector. Load
    draws are swept in order; each contributes the intact state and, when
    R >= 2, every non-shedding single-outage state, until ``n_scenarios``
    samples exist. Deterministic for a given seed, independent of ``jobs``.
    """
    if n_scenarios < 0:
        raise ValueError("n_scenarios must be >= 0")
    want_depth1 = R >= 2
    args = (seed, tuple(load_band), global_scale, beta, relay_mode, want_depth1)

    # Ordered (draw, batch-or-None) results; the parallel path may run a few
    # draws past the target, which the in-order consumption below ignores,
    # so the output never depends on ``jobs``.
    batches = []
    collected = 0
    draw = 0
    if jobs > 1 and n_scenarios > 0:
        pool = ProcessPoolExecutor(max_workers=jobs)
    else:
        pool = None
    try:
        while collected < n_scenarios:
            block = list(range(draw, draw + (jobs if pool else 1)))
            if pool:
                results = list(pool.map(_draw_worker, [(net, d) + args for d in block]))
            else:
                results = [_draw_samples(net, d, *args) for d in block]
            for batch in results:
                batches.append(batch)
                if batch is not None:
                    collected += len(batch)
            draw += len(block)
    finally:
        if pool:
            pool.shutdown()

    samples = []
    skipped = 0
    depth0 = 0
    for batch in batches:
        if len(samples) >= n_scenarios:
            break
        if batch is None:
            skipped += 1
            continue
        depth0 += 1
        samples.extend(batch)
    samples = samples[:n_scenarios]
    masked = [s.labels[s.mask] for s in samples]
    n_masked = sum(len(v) for v in masked)
    positives = sum(float(v.sum()) for v in masked)
    metadata = {
        "n_scenarios": len(samples),
        "positive_rate": positives / n_masked if n_masked else 0.0,
        "seed": seed,
        "band": list(load_band),
        "scale": global_scale,
        "beta": beta,
        "r": R,
        "graph_hash": build_line_graph(net).graph_hash,
        "mix": {"depth0": min(depth0, len(samples)),
                "depth1": max(0, len(samples) - depth0)},
        "skipped_infeasible": skipped,
    }
    return samples, metadata


def _draw_worker(packed):
    net, draw_index, seed, band, scale, beta, relay_mode, want_depth1 = packed
    return _draw_samples(net, draw_index, seed, band, scale, beta, relay_mode,
                         want_depth1)
