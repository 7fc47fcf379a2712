"""Two-layer graph convolutional classifier over line-graph nodes.

Each convolutional layer applies per-channel graph filters that are
polynomials in the normalized adjacency: output f is
sum_c (sum_k w[k, c, f] * A_norm^k) x_c + b_f. Two such layers with ReLU
feed a fully connected 2-class head shared across all nodes, so the
parameter count does not depend on the graph size. Class column 0 is
"load shedding", column 1 is "normal".
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .linegraph import N_FEATURES
from .network import BASE_MVA

LOSS_REDUCTION = "mean_over_masked_nodes_then_mean_over_batch"
DEFAULT_FEATURE_SCALE = (1.0, 1.0, 1.0 / BASE_MVA, 1.0 / BASE_MVA)


@dataclass
class GcnHyper:
    k_hops: int = 3
    f1: int = 16
    f2: int = 4
    w1: float = 20.0  # loss weight of the shedding class
    w2: float = 1.0  # loss weight of the normal class
    lr: float = 0.005
    epochs: int = 20
    batch: int = 32
    seed: int = 0

    def to_dict(self):
        return {
            "k_hops": self.k_hops, "f1": self.f1, "f2": self.f2,
            "w1": self.w1, "w2": self.w2, "lr": self.lr,
            "epochs": self.epochs, "batch": self.batch, "seed": self.seed,
        }


@dataclass
class TrainingSample:
    features: np.ndarray  # L x 4, raw units
    labels: np.ndarray  # {0,1} per node; 1 = shedding after that outage
    mask: np.ndarray  # bool per node; out-of-service branches are masked out

    def to_dict(self):
        return {
            "features": self.features.tolist(),
            "labels": self.labels.astype(int).tolist(),
            "mask": self.mask.astype(bool).tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            features=np.asarray(d["features"], dtype=float),
            labels=np.asarray(d["labels"], dtype=float),
            mask=np.asarray(d["mask"], dtype=bool),
        )


@dataclass
class GcnModel:
    hyper: GcnHyper
    conv1_w: np.ndarray  # (K+1, C, F1)
    conv1_b: np.ndarray  # (F1,)
    conv2_w: np.ndarray  # (K+1, F1, F2)
    conv2_b: np.ndarray  # (F2,)
    fc_w: np.ndarray  # (F2, 2)
    fc_b: np.ndarray  # (2,)
    graph_hash: str
    feature_scale: np.ndarray = field(
        default_factory=lambda: np.array(DEFAULT_FEATURE_SCALE)
    )
    loss_trace: list = field(default_factory=list)

    def parameters(self):
        return [self.conv1_w, self.conv1_b, self.conv2_w, self.conv2_b, self.fc_w, self.fc_b]

    def n_parameters(self):
        return sum(p.size for p in self.parameters())


def parameter_count(hyper, n_features=N_FEATURES):
    """Closed form: (K+1)*C*F1 + F1 + (K+1)*F1*F2 + F2 + 2*F2 + 2."""
    k1 = hyper.k_hops + 1
    return (
        k1 * n_features * hyper.f1 + hyper.f1
        + k1 * hyper.f1 * hyper.f2 + hyper.f2
        + hyper.f2 * 2 + 2
    )


def init_model(hyper, graph_hash, feature_scale=None, rng=None):
    """Seeded uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weights, zero biases."""
    if rng is None:
        rng = np.random.default_rng(hyper.seed)
    c = N_FEATURES
    k1 = hyper.k_hops + 1
    s1 = 1.0 / np.sqrt(c * k1)
    s2 = 1.0 / np.sqrt(hyper.f1 * k1)
    s3 = 1.0 / np.sqrt(hyper.f2)
    return GcnModel(
        hyper=hyper,
        conv1_w=rng.uniform(-s1, s1, size=(k1, c, hyper.f1)),
        conv1_b=np.zeros(hyper.f1),
        conv2_w=rng.uniform(-s2, s2, size=(k1, hyper.f1, hyper.f2)),
        conv2_b=np.zeros(hyper.f2),
        fc_w=rng.uniform(-s3, s3, size=(hyper.f2, 2)),
        fc_b=np.zeros(2),
        graph_hash=graph_hash,
        feature_scale=np.array(feature_scale if feature_scale is not None else DEFAULT_FEATURE_SCALE),
    )


@dataclass
class ForwardCache:
    xs: np.ndarray  # scaled inputs
    px: np.ndarray  # (K+1, ..., L, C) adjacency powers applied to inputs
    h1: np.ndarray
    h1r: np.ndarray
    ph: np.ndarray  # (K+1, ..., L, F1)
    h2: np.ndarray
    h2r: np.ndarray
    logits: np.ndarray
    probs: np.ndarray


def _softmax_rows(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _forward_batch(model, powers, x):
    """x: (B, L, C) raw features. Returns a batched ForwardCache."""
    xs = x * model.feature_scale
    px = np.einsum("tij,bjc->tbic", powers, xs)
    h1 = np.einsum("tblc,tcf->blf", px, model.conv1_w) + model.conv1_b
    h1r = np.maximum(h1, 0.0)
    ph = np.einsum("tij,bjf->tbif", powers, h1r)
    h2 = np.einsum("tblf,tfg->blg", ph, model.conv2_w) + model.conv2_b
    h2r = np.maximum(h2, 0.0)
    logits = h2r @ model.fc_w + model.fc_b
    probs = _softmax_rows(logits)
    return ForwardCache(xs=xs, px=px, h1=h1, h1r=h1r, ph=ph, h2=h2, h2r=h2r,
                        logits=logits, probs=probs)


def forward(model, lg, x):
    """Forward pass for one L x C feature matrix.

    Returns (probs, cache); probs[:, 0] is the shedding probability.
    """
    if lg.graph_hash != model.graph_hash:
        raise ValueError("line graph does not match the graph the model was built on")
    x = np.asarray(x, dtype=float)
    if x.shape != (lg.n_nodes, N_FEATURES):
        raise ValueError(f"expected features of shape {(lg.n_nodes, N_FEATURES)}, got {x.shape}")
    powers = lg.powers(model.hyper.k_hops)
    cache = _forward_batch(model, powers, x[None])
    squeezed = ForwardCache(
        xs=cache.xs[0], px=cache.px[:, 0], h1=cache.h1[0], h1r=cache.h1r[0],
        ph=cache.ph[:, 0], h2=cache.h2[0], h2r=cache.h2r[0],
        logits=cache.logits[0], probs=cache.probs[0],
    )
    return squeezed.probs, squeezed


def loss_value(probs, labels, mask, w1, w2):
    """Masked weighted negative log-likelihood, averaged over masked nodes."""
    probs = np.asarray(probs, dtype=float)
    labels = np.asarray(labels, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    n = int(mask.sum())
    if n == 0:
        return 0.0
    per_node = -(w1 * labels * np.log(probs[..., 0])
                 + w2 * (1.0 - labels) * np.log(probs[..., 1]))
    return float(per_node[mask].mean())


def _loss_and_grad_batch(model, cache, powers, labels, mask):
    """Mean loss over the batch plus exact gradients for every parameter."""
    w1, w2 = model.hyper.w1, model.hyper.w2
    batch = labels.shape[0]
    probs = cache.probs
    a = np.stack([w1 * labels, w2 * (1.0 - labels)], axis=-1)  # target weights
    n_masked = mask.sum(axis=1).astype(float)  # per sample

    per_node = -(a[..., 0] * np.log(probs[..., 0]) + a[..., 1] * np.log(probs[..., 1]))
    per_node = np.where(mask, per_node, 0.0)
    safe_n = np.where(n_masked > 0, n_masked, 1.0)
    loss = float((per_node.sum(axis=1) / safe_n).mean())

    # d(loss)/d(logits): softmax of a weighted NLL
    dz = a.sum(axis=-1, keepdims=True) * probs - a
    dz *= (mask / safe_n[:, None])[..., None] / batch

    grad_fc_w = np.einsum("blf,blg->fg", cache.h2r, dz)
    grad_fc_b = dz.sum(axis=(0, 1))
    dh2 = (dz @ model.fc_w.T) * (cache.h2 > 0)

    grad_c2_w = np.einsum("tblf,blg->tfg", cache.ph, dh2)
    grad_c2_b = dh2.sum(axis=(0, 1))
    tmp = np.einsum("blg,tfg->tblf", dh2, model.conv2_w)
    dh1 = np.einsum("tij,tbjf->bif", powers, tmp) * (cache.h1 > 0)

    grad_c1_w = np.einsum("tblc,blf->tcf", cache.px, dh1)
    grad_c1_b = dh1.sum(axis=(0, 1))

    grads = [grad_c1_w, grad_c1_b, grad_c2_w, grad_c2_b, grad_fc_w, grad_fc_b]
    return loss, grads


def backward(model, lg, sample):
    """Exact gradients of the masked weighted NLL for one sample.

    Returns (loss, [d conv1_w, d conv1_b, d conv2_w, d conv2_b, d fc_w, d fc_b]).
    """
    powers = lg.powers(model.hyper.k_hops)
    cache = _forward_batch(model, powers, sample.features[None])
    return _loss_and_grad_batch(
        model, cache, powers, sample.labels[None].astype(float), sample.mask[None]
    )


class _Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        for i, (p, g) in enumerate(zip(params, grads)):
            self.m[i] = self.beta1 * self.m[i] + (1 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1 - self.beta2) * g * g
            m_hat = self.m[i] / (1 - self.beta1 ** self.t)
            v_hat = self.v[i] / (1 - self.beta2 ** self.t)
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def train(samples, lg, hyper=None, feature_scale=None):
    """Deterministic mini-batch Adam training over one shared line graph.

    Samples are shuffled with the seeded generator every epoch; the model
    records the mean training loss per epoch in ``loss_trace``.
    """
    hyper = hyper or GcnHyper()
    samples = list(samples)
    if not samples:
        raise ValueError("empty training set")
    for s in samples:
        if s.features.shape != (lg.n_nodes, N_FEATURES):
            raise ValueError("sample does not match the line graph size")
    rng = np.random.default_rng(hyper.seed)
    model = init_model(hyper, lg.graph_hash, feature_scale=feature_scale, rng=rng)
    powers = lg.powers(hyper.k_hops)

    x = np.stack([s.features for s in samples])
    y = np.stack([s.labels for s in samples]).astype(float)
    mask = np.stack([s.mask for s in samples])
    n = len(samples)
    opt = _Adam(model.parameters(), lr=hyper.lr)
    for _ in range(hyper.epochs):
        order = rng.permutation(n)
        epoch_losses = []
        for start in range(0, n, hyper.batch):
            idx = order[start : start + hyper.batch]
            cache = _forward_batch(model, powers, x[idx])
            loss, grads = _loss_and_grad_batch(model, cache, powers, y[idx], mask[idx])
            opt.step(model.parameters(), grads)
            epoch_losses.append(loss)
        model.loss_trace.append(float(np.mean(epoch_losses)))
    return model


def predict(model, lg, x, threshold=0.5):
    """Binary shedding prediction per node plus the ranking probability.

    A node is flagged only when its shedding probability strictly exceeds
    the threshold, so an exact tie resolves to "normal".
    """
    probs, _ = forward(model, lg, x)
    p_shed = probs[:, 0]
    return (p_shed > threshold).astype(int), p_shed


def metrics(predictions, labels):
    """Confusion counts and the three summary indexes.

    a: normal predicted normal, b: normal predicted shedding,
    c: shedding predicted normal, d: shedding predicted shedding.
    Hit rate d/(b+d) and cover rate d/(c+d) are None when undefined.
    """
    predictions = np.asarray(predictions).astype(bool)
    labels = np.asarray(labels).astype(bool)
    if predictions.shape != labels.shape:
        raise ValueError("prediction/label length mismatch")
    a = int(np.sum(~labels & ~predictions))
    b = int(np.sum(~labels & predictions))
    c = int(np.sum(labels & ~predictions))
    d = int(np.sum(labels & predictions))
    total = a + b + c + d
    return {
        "confusion": {"a": a, "b": b, "c": c, "d": d},
        "total_accuracy": (a + d) / total if total else None,
        "hit_rate": d / (b + d) if (b + d) else None,
        "cover_rate": d / (c + d) if (c + d) else None,
    }


def save_model(model, fh):
    doc = {
        "version": 1,
        "hyper": model.hyper.to_dict(),
        "graph_hash": model.graph_hash,
        "layers": [
            {"w": model.conv1_w.tolist(), "b": model.conv1_b.tolist()},
            {"w": model.conv2_w.tolist(), "b": model.conv2_b.tolist()},
        ],
        "fc": {"w": model.fc_w.tolist(), "b": model.fc_b.tolist()},
        "feature_scale": model.feature_scale.tolist(),
        "loss_reduction": LOSS_REDUCTION,
        "loss_trace": model.loss_trace,
    }
    json.dump(doc, fh, sort_keys=True)
    fh.write("\n")


def load_model(fh):
    doc = json.load(fh)
    if doc.get("version") != 1:
        raise ValueError(f"unsupported model version {doc.get('version')!r}")
    hyper = GcnHyper(**doc["hyper"])
    return GcnModel(
        hyper=hyper,
        conv1_w=np.asarray(doc["layers"][0]["w"], dtype=float),
        conv1_b=np.asarray(doc["layers"][0]["b"], dtype=float),
        conv2_w=np.asarray(doc["layers"][1]["w"], dtype=float),
        conv2_b=np.asarray(doc["layers"][1]["b"], dtype=float),
        fc_w=np.asarray(doc["fc"]["w"], dtype=float),
        fc_b=np.asarray(doc["fc"]["b"], dtype=float),
        graph_hash=doc["graph_hash"],
        feature_scale=np.asarray(doc["feature_scale"], dtype=float),
        loss_trace=list(doc["loss_trace"]),
    )


def write_dataset(samples, fh):
    for s in samples:
        fh.write(json.dumps(s.to_dict()) + "\n")


def read_dataset(fh):
    return [TrainingSample.from_dict(json.loads(line)) for line in fh if line.strip()]
