"""Loss, hand-derived gradients, the optimizer, and the training loop.

The backward pass mirrors `layers.model_forward` stage by stage in
reverse, consuming the cache that forward pass produced. Derivatives
are written out explicitly per layer (no tape) so each block below can
be read against its forward counterpart; `grad_check` compares all of
it to central finite differences.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError
from .graph import FeatureRef, Graph
from .layers import ModelConfig, ModelParams, init_params, model_forward
from .linalg import Rng, activate_grad, leaky_relu_grad
from .metrics import classification_metrics, confusion, roc_auc

# Stream ids: substreams of the master seed with fixed roles, so e.g.
# parameter init draws never shift when the shuffle order is consumed.
INIT_STREAM = 0
SHUFFLE_STREAM = 1
GRADCHECK_STREAM_BASE = 1000


@dataclass
class TrainConfig:
    epochs: int = 50
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0
    batch_size: int = 32
    prob_floor: float = 1e-12

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        for name in ("beta1", "beta2"):
            b = getattr(self, name)
            if not 0.0 <= b < 1.0:
                raise ConfigError(f"{name} must be in [0, 1), got {b}")
        if self.epsilon <= 0:
            raise ConfigError(f"epsilon must be > 0, got {self.epsilon}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0.0 < self.prob_floor <= 1e-3:
            raise ConfigError(f"prob_floor must be in (0, 1e-3], got {self.prob_floor}")
        if self.seed < 0:
            raise ConfigError(f"seed must be a nonnegative integer, got {self.seed}")


def cross_entropy(yhat, y: int, prob_floor: float = 1e-12) -> float:
    """-log of the probability assigned to the true class.

    The floor only clamps the argument of the log; it never renormalizes
    yhat, so the gradient identity probs - onehot stays exact.
    """
    yhat = np.asarray(yhat, dtype=np.float64).ravel()
    if not 0 <= y < yhat.shape[0]:
        raise ValueError(f"class index {y} out of range for {yhat.shape[0]} classes")
    if abs(yhat.sum() - 1.0) > 1e-6 or (yhat < -1e-9).any():
        raise ValueError("yhat is not a probability vector")
    return float(-np.log(max(yhat[y], prob_floor)))


def model_backward(g: Graph, params: ModelParams, cfg: ModelConfig,
                   cache: dict, y: int) -> dict:
    """Gradient of cross_entropy(model_forward(g), y) w.r.t. every tensor.

    Requires the cache produced by the matching forward call on the same
    graph object; anything else is rejected as stale.
    """
    if cache.get("graph") is not g:
        raise ValueError("stale cache: backward must reuse the forward pass's graph")
    adj = cache["adj"]
    probs = cache["probs"]
    z = cache["z"]
    H = cache["nodes"]
    n = adj.n

    grads = {name: np.zeros_like(t) for name, t in params.tensors().items()}

    # classifier head: d(loss)/d(logits) collapses to probs - onehot
    dlogits = probs.copy()
    dlogits[y] -= 1.0
    grads["out.W"] += np.outer(dlogits, z)
    grads["out.b"] += dlogits
    dz = params.out_weight.T @ dlogits

    # readout
    if cfg.readout_mode == "mean":
        dH = np.tile(dz / n, (n, 1))
    elif cfg.readout_mode == "max":
        dH = np.zeros_like(H)
        am = cache["readout"]["argmax"]
        dH[am, np.arange(H.shape[1])] = dz
    else:
        T = cache["readout"]["T"]
        s = cache["readout"]["s"]
        ds = H @ dz
        dH = np.outer(s, dz)
        du = s * (ds - float(s @ ds))
        grads["readout.q"] += T.T @ du
        dT = np.outer(du, params.readout_gate_q)
        dpre = dT * (1.0 - T * T)
        grads["readout.W"] += dpre.T @ H
        dH += dpre @ params.readout_gate_w

    # attention layer
    if cfg.attention_enabled:
        att = cache["attn"]
        H_in, alpha, pre = att["in"], att["alpha"], att["pre"]
        W, a = params.attn_weight, params.attn_vector
        h = W.shape[1]
        a_i, a_k = a[:h], a[h:]
        HW = H_in @ W
        logit_pre = HW[adj.dst] @ a_i + HW[adj.src] @ a_k

        dpre_agg = dH * activate_grad(pre, cfg.activation, cfg.leaky_slope)
        dHW = np.zeros_like(HW)
        np.add.at(dHW, adj.src, alpha[:, None] * dpre_agg[adj.dst])
        dalpha = np.einsum("ej,ej->e", dpre_agg[adj.dst], HW[adj.src])
        # softmax over each dst group: da_e = alpha_e * (dalpha_e - S_i)
        S = np.zeros(n)
        np.add.at(S, adj.dst, alpha * dalpha)
        dlogit = alpha * (dalpha - S[adj.dst])
        dlp = dlogit * leaky_relu_grad(logit_pre, cfg.leaky_slope)
        grads["attn.a"][:h] += (dlp[:, None] * HW[adj.dst]).sum(axis=0)
        grads["attn.a"][h:] += (dlp[:, None] * HW[adj.src]).sum(axis=0)
        np.add.at(dHW, adj.dst, dlp[:, None] * a_i[None, :])
        np.add.at(dHW, adj.src, dlp[:, None] * a_k[None, :])
        grads["attn.W"] += H_in.T @ dHW
        dH = dHW @ W.T

    # convolution stack, last layer first
    for l in range(len(params.gcn_weights) - 1, -1, -1):
        layer = cache["conv"][l]
        W = params.gcn_weights[l]
        dpre = dH * activate_grad(layer["pre"], cfg.activation, cfg.leaky_slope)
        dHW = np.zeros((n, W.shape[1]))
        np.add.at(dHW, adj.src, dpre[adj.dst] / adj.coef[:, None])
        grads[f"gcn.{l}.W"] += layer["in"].T @ dHW
        dH = dHW @ W.T

    # embedding rows: materialization overwrote the stored row, so the
    # whole input gradient at that node belongs to the table entry
    for r in g.feature_refs:
        grads[f"emb.{r.field}"][r.row] += r.scale * dH[r.node]
    return grads


@dataclass
class OptimizerState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def init_optimizer(params: ModelParams) -> OptimizerState:
    m = {name: np.zeros_like(t) for name, t in params.tensors().items()}
    v = {name: np.zeros_like(t) for name, t in params.tensors().items()}
    return OptimizerState(m=m, v=v, t=0)


def adam_step(params: ModelParams, grads: dict, state: OptimizerState,
              cfg: TrainConfig):
    """Bias-corrected adaptive-moment update, in place on params."""
    state.t += 1
    b1, b2 = cfg.beta1, cfg.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name, p in params.tensors().items():
        g = grads.get(name)
        if g is None or g.shape != p.shape:
            got = None if g is None else g.shape
            raise ValueError(f"gradient for {name} has shape {got}, expected {p.shape}")
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= cfg.learning_rate * (m / c1) / (np.sqrt(v / c2) + cfg.epsilon)
    return params, state


def _accumulate(total: dict, part: dict, weight: float):
    for name, g in part.items():
        total[name] += weight * g


def evaluate_scores(params: ModelParams, cfg: ModelConfig, items):
    """Class-1 probabilities and true labels for a sequence of items."""
    scores = np.empty(len(items))
    labels = np.empty(len(items), dtype=np.int64)
    for i, (g, y) in enumerate(items):
        probs, _ = model_forward(g, params, cfg)
        scores[i] = probs[1]
        labels[i] = y
    return scores, labels


def train(dataset, mcfg: ModelConfig, tcfg: TrainConfig, val_items=None):
    """Fit a fresh model on dataset.items.

    Returns (params, history): history has one row per epoch with the
    mean training loss and, when a validation set is given, accuracy,
    F1, and AUC on it. Identical (data, configs) reproduce identical
    results bit for bit.
    """
    items = list(dataset.items)
    if not items:
        raise DataError("training set is empty")
    counts = [0, 0]
    for _, y in items:
        counts[y] += 1
    if counts[0] == 0 or counts[1] == 0:
        raise DataError(f"training set is single-class (label 0: {counts[0]}, "
                        f"label 1: {counts[1]}); both classes are required")
    in_dim = items[0][0].feature_dim
    for g, _ in items:
        if g.feature_dim != in_dim:
            raise DataError(f"inconsistent feature widths: {g.feature_dim} vs {in_dim}")

    emb_rows = getattr(dataset, "embedding_rows", {}) or {}
    params = init_params(mcfg, in_dim, Rng(tcfg.seed, INIT_STREAM), emb_rows)
    opt = init_optimizer(params)
    shuffle = Rng(tcfg.seed, SHUFFLE_STREAM)
    history = []

    for epoch in range(tcfg.epochs):
        order = shuffle.permutation(len(items))
        losses = np.empty(len(items))
        pos = 0
        for start in range(0, len(order), tcfg.batch_size):
            batch = order[start:start + tcfg.batch_size]
            grads = {name: np.zeros_like(t) for name, t in params.tensors().items()}
            w = 1.0 / len(batch)
            for idx in batch:
                g, y = items[idx]
                probs, cache = model_forward(g, params, mcfg)
                losses[pos] = cross_entropy(probs, y, tcfg.prob_floor)
                pos += 1
                _accumulate(grads, model_backward(g, params, mcfg, cache, y), w)
            adam_step(params, grads, opt, tcfg)
        row = {"epoch": epoch + 1, "train_loss": float(losses.mean())}
        if val_items:
            scores, labels = evaluate_scores(params, mcfg, val_items)
            preds = (scores >= 0.5).astype(np.int64)
            acc, _, f1 = classification_metrics(confusion(preds, labels))
            try:
                auc = roc_auc(scores, labels)
            except ValueError:
                auc = float("nan")
            row.update(val_accuracy=acc, val_f1=f1, val_auc=auc)
        history.append(row)
    return params, history


def _random_check_graph(rng: Rng, in_dim: int, emb_rows: dict) -> tuple:
    n = int(rng.integers(3, 9))
    feats = rng.uniform(-1.0, 1.0, (n, in_dim))
    edges = [(i, j) for i in range(n) for j in range(n)
             if i != j and rng.random() < 0.35]
    refs = []
    for k, name in enumerate(sorted(emb_rows)):
        row = int(rng.integers(0, emb_rows[name]))
        scale = 1.0 if emb_rows[name] > 1 else float(rng.uniform(-2.0, 2.0))
        refs.append(FeatureRef(name, row, node=1 + k, scale=scale))
    g = Graph(node_features=feats,
              edges=np.asarray(edges, dtype=np.int64).reshape(-1, 2),
              feature_refs=tuple(refs))
    y = int(rng.integers(0, 2))
    return g, y


def grad_check(mcfg: ModelConfig, tcfg: TrainConfig, trials: int = 10,
               step: float = 1e-6) -> dict:
    """Compare model_backward to central finite differences.

    Each trial draws a random 3-8 node graph and fresh random params,
    then perturbs every parameter entry by +-step. Returns
    {tensor name: worst relative error across trials}, where the error
    is the largest absolute deviation scaled by the tensor's gradient
    magnitude (floored at 1e-6 so all-dead tensors do not divide by 0).
    """
    if trials < 1:
        raise ConfigError(f"trials must be >= 1, got {trials}")
    in_dim = 5
    emb_rows = {"cat": 4, "num": 1}
    worst: dict = {}
    for t in range(trials):
        rng = Rng(tcfg.seed, GRADCHECK_STREAM_BASE + t)
        g, y = _random_check_graph(rng, in_dim, emb_rows)
        params = init_params(mcfg, in_dim, rng, emb_rows)
        probs, cache = model_forward(g, params, mcfg)
        analytic = model_backward(g, params, mcfg, cache, y)

        def loss() -> float:
            p, _ = model_forward(g, params, mcfg)
            return cross_entropy(p, y, tcfg.prob_floor)

        for name, tensor in params.tensors().items():
            num = np.zeros_like(tensor)
            flat = tensor.reshape(-1)
            nflat = num.reshape(-1)
            for i in range(flat.shape[0]):
                keep = flat[i]
                flat[i] = keep + step
                f_plus = loss()
                flat[i] = keep - step
                f_minus = loss()
                flat[i] = keep
                nflat[i] = (f_plus - f_minus) / (2.0 * step)
            a = analytic[name]
            scale = max(np.abs(a).max(), np.abs(num).max(), 1e-6)
            rel = float(np.abs(a - num).max() / scale)
            worst[name] = max(worst.get(name, 0.0), rel)
    return worst


# ---------------------------------------------------------------------------
# checkpoint serialization

CHECKPOINT_FORMAT = "satgraph-checkpoint-v1"


def save_checkpoint(path, params: ModelParams, config_echo: dict, seed: int):
    """Write params as decimal text. json's float formatting is repr-based
    (shortest string that parses back to the same double), so the
    round-trip is bit-faithful."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "seed": int(seed),
        "config": config_echo,
        "tensors": {
            name: {"shape": list(t.shape), "data": t.tolist()}
            for name, t in params.tensors().items()
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_checkpoint(path):
    """Rebuild (params, config, seed) from a checkpoint file."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"checkpoint {path} is not valid: {exc}") from exc
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise DataError(f"checkpoint {path} has unknown format {doc.get('format')!r}")
    tensors = {}
    for name, spec in doc["tensors"].items():
        arr = np.asarray(spec["data"], dtype=np.float64)
        if list(arr.shape) != list(spec["shape"]):
            raise DataError(f"checkpoint tensor {name}: data shape {list(arr.shape)} "
                            f"!= header {spec['shape']}")
        tensors[name] = arr
    gcn = []
    i = 0
    while f"gcn.{i}.W" in tensors:
        gcn.append(tensors.pop(f"gcn.{i}.W"))
        i += 1
    if not gcn:
        raise DataError(f"checkpoint {path} has no convolution weights")
    emb = {name[len("emb."):]: tensors.pop(name)
           for name in sorted(tensors) if name.startswith("emb.")}
    params = ModelParams(
        gcn_weights=gcn,
        out_weight=tensors.pop("out.W"),
        out_bias=tensors.pop("out.b"),
        attn_weight=tensors.pop("attn.W", None),
        attn_vector=tensors.pop("attn.a", None),
        readout_gate_w=tensors.pop("readout.W", None),
        readout_gate_q=tensors.pop("readout.q", None),
        embeddings=emb,
    )
    if tensors:
        raise DataError(f"checkpoint {path} has unexpected tensors: {sorted(tensors)}")
    return params, doc.get("config", {}), int(doc.get("seed", 0))
