"""Relevance decomposition of a shedding logit onto the model inputs.

The positive-contribution rule distributes a neuron's relevance over its
inputs in proportion to z+ = max(input * weight, 0). A positive bias takes
its own share of the denominator and absorbs that fraction of relevance,
so with biases present the per-layer sums are non-increasing; bias-free
models conserve the sums exactly. A neuron whose denominator vanishes
keeps its relevance out of the propagation; both losses are itemized per
layer so the conservation audit can report them.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .gcn import forward
from .linegraph import FEATURE_NAMES

LAYER_NAMES = ("fc_output", "conv2_output", "conv1_output", "inputs")


@dataclass
class RelevanceReport:
    target_branch: int
    target_value: float  # the decomposed shedding logit
    scores: np.ndarray  # L x 4 relevance of every input entry
    grouped: dict  # sums per feature family
    layer_sums: list  # relevance total at each layer, output first
    bias_absorbed: list  # per transition (fc, conv2, conv1)
    dropped: list  # per transition, relevance lost to zero denominators
    negative_target: bool = False

    def to_dict(self, top_n=10):
        flat = [
            {"node": int(i), "feature": FEATURE_NAMES[c], "score": float(self.scores[i, c])}
            for i in range(self.scores.shape[0])
            for c in range(self.scores.shape[1])
            if self.scores[i, c] > 0
        ]
        flat.sort(key=lambda e: -e["score"])
        return {
            "branch": int(self.target_branch),
            "target": self.target_value,
            "negative_target": self.negative_target,
            "groups": {k: float(v) for k, v in self.grouped.items()},
            "top_inputs": flat[:top_n],
            "deficit_per_layer": [
                {"layer": name, "bias_absorbed": float(b), "dropped": float(d)}
                for name, b, d in zip(LAYER_NAMES[:3], self.bias_absorbed, self.dropped)
            ],
            "layer_sums": [float(s) for s in self.layer_sums],
        }


def _redistribute(inputs, weight_of, bias, relevance_in):
    """One positive-contribution step for a single receiving neuron.

    ``inputs`` and ``weight_of`` are flat arrays over the contributing
    neurons. Returns (relevance over inputs, bias share, dropped share).
    """
    z_plus = np.maximum(inputs * weight_of, 0.0)
    denom = z_plus.sum() + max(bias, 0.0)
    if denom <= 0.0:
        return np.zeros_like(z_plus), 0.0, relevance_in
    share = relevance_in / denom
    return z_plus * share, max(bias, 0.0) * share, 0.0


def _conv_backward(powers, weights, biases, inputs, relevance):
    """Push relevance through one graph-convolution layer.

    The layer is the linear map it is: input (node i, channel c) feeds
    output (node j, feature f) with weight sum_t w[t, c, f] * P[t, j, i].
    Only nodes holding relevance are expanded. Returns (input relevance,
    bias absorbed, dropped).
    """
    n_nodes, n_out = relevance.shape
    n_in = inputs.shape[1]
    out = np.zeros((n_nodes, n_in))
    bias_total = 0.0
    dropped_total = 0.0
    for j in np.flatnonzero(relevance.sum(axis=1) > 0):
        p_rows = powers[:, j, :]  # (K+1, L)
        g = np.einsum("tcf,ti->cfi", weights, p_rows)  # (C, F, L)
        z_plus = np.maximum(g * inputs.T[:, None, :], 0.0)
        denom = z_plus.sum(axis=(0, 2)) + np.maximum(biases, 0.0)
        for f in np.flatnonzero(relevance[j] > 0):
            r = relevance[j, f]
            if denom[f] <= 0.0:
                dropped_total += r
                continue
            share = r / denom[f]
            out += z_plus[:, f, :].T * share
            bias_total += max(biases[f], 0.0) * share
    return out, bias_total, dropped_total


def explain(model, lg, x, branch_k):
    """Decompose the shedding logit of ``branch_k`` onto the input matrix.

    Returns a RelevanceReport. A non-positive logit is flagged
    ``negative_target`` and decomposed to all-zero scores (an excitatory
    decomposition of a non-firing output carries no information).
    """
    _, cache = forward(model, lg, x)
    k = int(branch_k)
    target = float(cache.logits[k, 0])
    n_nodes = lg.n_nodes
    if target <= 0.0:
        zeros = np.zeros((n_nodes, len(FEATURE_NAMES)))
        return RelevanceReport(
            target_branch=k,
            target_value=target,
            scores=zeros,
            grouped={name: 0.0 for name in FEATURE_NAMES},
            layer_sums=[target, 0.0, 0.0, 0.0],
            bias_absorbed=[0.0, 0.0, 0.0],
            dropped=[target, 0.0, 0.0],
            negative_target=True,
        )

    powers = lg.powers(model.hyper.k_hops)
    bias_absorbed = []
    dropped = []

    # Shared 2-class head: the target neuron sees only node k's features.
    r_fc, bias_fc, drop_fc = _redistribute(
        cache.h2r[k], model.fc_w[:, 0], model.fc_b[0], target
    )
    r_h2 = np.zeros_like(cache.h2r)
    r_h2[k] = r_fc
    bias_absorbed.append(bias_fc)
    dropped.append(drop_fc)

    # ReLU layers pass relevance through to their pre-activation, so each
    # convolution redistributes directly over its (rectified) inputs.
    r_h1, bias_c2, drop_c2 = _conv_backward(
        powers, model.conv2_w, model.conv2_b, cache.h1r, r_h2
    )
    bias_absorbed.append(bias_c2)
    dropped.append(drop_c2)

    r_x, bias_c1, drop_c1 = _conv_backward(
        powers, model.conv1_w, model.conv1_b, cache.xs, r_h1
    )
    bias_absorbed.append(bias_c1)
    dropped.append(drop_c1)

    grouped = {
        name: float(r_x[:, c].sum()) for c, name in enumerate(FEATURE_NAMES)
    }
    return RelevanceReport(
        target_branch=k,
        target_value=target,
        scores=r_x,
        grouped=grouped,
        layer_sums=[target, float(r_h2.sum()), float(r_h1.sum()), float(r_x.sum())],
        bias_absorbed=bias_absorbed,
        dropped=dropped,
    )


def conservation_audit(report, tol=1e-9):
    """Per-layer relevance sums and where the deficits went.

    Each transition's deficit must equal its bias-absorbed plus dropped
    relevance; an inconsistency above ``tol`` raises ValueError. For a
    bias-free model with no degenerate denominators every deficit is zero,
    which is exact conservation.
    """
    sums = report.layer_sums
    deficits = [sums[i] - sums[i + 1] for i in range(len(sums) - 1)]
    itemized = []
    for name, deficit, bias, drop in zip(
        LAYER_NAMES[:3], deficits, report.bias_absorbed, report.dropped
    ):
        if abs(deficit - (bias + drop)) > tol * max(1.0, abs(report.target_value)):
            raise ValueError(
                f"{name}: deficit {deficit:.3e} does not match bias {bias:.3e} + dropped {drop:.3e}"
            )
        itemized.append(
            {"layer": name, "deficit": deficit, "bias_absorbed": bias, "dropped": drop}
        )
    return {
        "layer_sums": list(sums),
        "transitions": itemized,
        "total_deficit": sums[0] - sums[-1],
    }


def write_report_json(report, fh):
    json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
    fh.write("\n")


def write_report_csv(report, fh):
    fh.write("branch," + ",".join(FEATURE_NAMES) + "\n")
    for i in range(report.scores.shape[0]):
        row = ",".join(f"{report.scores[i, c]:.10g}" for c in range(len(FEATURE_NAMES)))
        fh.write(f"{i},{row}\n")
