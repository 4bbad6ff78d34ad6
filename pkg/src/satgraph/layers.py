"""Model layers: graph convolution, edge attention, readout, classifier.

All forward passes are pure functions of (inputs, params) and return
plain arrays; `model_forward` composes them and returns the cached
intermediate activations that the hand-derived backward pass consumes.

Message passing is vectorized over the edge arrays of an
AdjacencyIndex: gather rows by edge source, scale, scatter-add by edge
destination. No per-node Python loops on the hot path.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .graph import AdjacencyIndex, Graph, normalize_adjacency
from .linalg import Rng, activate, activate_grad, glorot_uniform, leaky_relu, softmax_row

ACTIVATIONS = ("relu", "leaky_relu")
READOUT_MODES = ("mean", "max", "attention")
NORM_SCHEMES = ("symmetric", "mean")


@dataclass
class ModelConfig:
    hidden_dims: tuple = (32, 32)
    activation: str = "relu"
    readout_mode: str = "mean"
    attention_enabled: bool = True
    leaky_slope: float = 0.2
    norm_scheme: str = "symmetric"
    self_loops: bool = True

    def __post_init__(self):
        self.hidden_dims = tuple(int(h) for h in self.hidden_dims)
        if not self.hidden_dims or any(h < 1 for h in self.hidden_dims):
            raise ConfigError(f"hidden_dims must be nonempty positive counts, got {self.hidden_dims}")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"activation must be one of {ACTIVATIONS}, got {self.activation!r}")
        if self.readout_mode not in READOUT_MODES:
            raise ConfigError(f"readout_mode must be one of {READOUT_MODES}, got {self.readout_mode!r}")
        if not 0.0 <= self.leaky_slope < 1.0:
            raise ConfigError(f"leaky_slope must be in [0, 1), got {self.leaky_slope}")
        if self.norm_scheme not in NORM_SCHEMES:
            raise ConfigError(f"norm_scheme must be one of {NORM_SCHEMES}, got {self.norm_scheme!r}")


@dataclass
class ModelParams:
    """Every trainable tensor. Attention / gate fields are None when the
    architecture variant does not use them."""

    gcn_weights: list                   # W per conv layer, (d_in, d_out)
    out_weight: np.ndarray              # (2, h)
    out_bias: np.ndarray                # (2,)
    attn_weight: np.ndarray = None      # (h, h)
    attn_vector: np.ndarray = None      # (2h,)
    readout_gate_w: np.ndarray = None   # (h, h)
    readout_gate_q: np.ndarray = None   # (h,)
    embeddings: dict = field(default_factory=dict)  # field -> (rows, d)

    def tensors(self) -> dict:
        """Stable name -> array view over every present tensor."""
        out = {}
        for i, w in enumerate(self.gcn_weights):
            out[f"gcn.{i}.W"] = w
        if self.attn_weight is not None:
            out["attn.W"] = self.attn_weight
        if self.attn_vector is not None:
            out["attn.a"] = self.attn_vector
        if self.readout_gate_w is not None:
            out["readout.W"] = self.readout_gate_w
        if self.readout_gate_q is not None:
            out["readout.q"] = self.readout_gate_q
        out["out.W"] = self.out_weight
        out["out.b"] = self.out_bias
        for name in sorted(self.embeddings):
            out[f"emb.{name}"] = self.embeddings[name]
        return out


def init_params(cfg: ModelConfig, in_dim: int, rng: Rng,
                embedding_rows: dict = None) -> ModelParams:
    """Glorot-uniform weights, zero biases, one draw order regardless of
    which optional tensors exist (unused draws are simply skipped)."""
    dims = [in_dim] + list(cfg.hidden_dims)
    gcn = [glorot_uniform(dims[i], dims[i + 1], rng) for i in range(len(dims) - 1)]
    h = dims[-1]
    attn_w = attn_a = gate_w = gate_q = None
    if cfg.attention_enabled:
        attn_w = glorot_uniform(h, h, rng)
        attn_a = glorot_uniform(2 * h, 1, rng).ravel()
    if cfg.readout_mode == "attention":
        gate_w = glorot_uniform(h, h, rng)
        gate_q = glorot_uniform(h, 1, rng).ravel()
    out_w = glorot_uniform(2, h, rng)
    out_b = np.zeros(2)
    emb = {}
    for name in sorted(embedding_rows or {}):
        emb[name] = glorot_uniform(embedding_rows[name], in_dim, rng)
    return ModelParams(gcn_weights=gcn, out_weight=out_w, out_bias=out_b,
                       attn_weight=attn_w, attn_vector=attn_a,
                       readout_gate_w=gate_w, readout_gate_q=gate_q,
                       embeddings=emb)


def materialize_features(g: Graph, embeddings: dict) -> np.ndarray:
    """Resolve feature refs against the embedding tables.

    Referenced rows are scale * table[row]; all other rows come straight
    from the stored feature matrix.
    """
    H = g.node_features.copy()
    for r in g.feature_refs:
        if r.field not in embeddings:
            raise ConfigError(f"graph references embedding field {r.field!r} "
                              f"absent from params")
        H[r.node] = r.scale * embeddings[r.field][r.row]
    return H


def _scatter_rows(values: np.ndarray, dst: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros((n, values.shape[1]))
    np.add.at(out, dst, values)
    return out


def gcn_forward(H, adj: AdjacencyIndex, W, activation: str = "relu",
                slope: float = 0.2, return_pre: bool = False):
    """One convolution: row i of the result is
    activation( sum over j in N(i) of (1/c_ij) * (h_j W) )."""
    H = np.asarray(H, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    if H.shape[0] != adj.n:
        raise ValueError(f"feature rows {H.shape[0]} != index nodes {adj.n}")
    if H.shape[1] != W.shape[0]:
        raise ValueError(f"gcn shape mismatch: features {H.shape} @ weight {W.shape}")
    HW = H @ W
    msg = HW[adj.src] / adj.coef[:, None]
    pre = _scatter_rows(msg, adj.dst, adj.n)
    out = activate(pre, activation, slope)
    return (out, pre) if return_pre else out


def segment_softmax(logits: np.ndarray, dst: np.ndarray, n: int) -> np.ndarray:
    """Softmax over each destination group of edge logits.

    Max-subtraction per group keeps exp in range; groups are defined by
    dst so every aggregating node normalizes its own incoming edges.
    """
    gmax = np.full(n, -np.inf)
    np.maximum.at(gmax, dst, logits)
    e = np.exp(logits - gmax[dst])
    gsum = np.zeros(n)
    np.add.at(gsum, dst, e)
    return e / gsum[dst]


def attention_coefficients(H, adj: AdjacencyIndex, W, a,
                           slope: float = 0.2) -> np.ndarray:
    """Per-edge attention weights, one softmax per destination node.

    Edge (j -> i) scores LeakyReLU(a . [W h_i || W h_j]); the first half
    of `a` multiplies the aggregating node's transform, the second half
    the neighbor's.
    """
    H = np.asarray(H, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64).ravel()
    h = W.shape[1]
    if a.shape[0] != 2 * h:
        raise ValueError(f"attention vector length {a.shape[0]} != 2x width {h}")
    if adj.src.size == 0 or np.bincount(adj.dst, minlength=adj.n).min() == 0:
        raise ValueError("attention requires a nonempty neighbor set per node "
                         "(enable self-loops)")
    HW = H @ W
    logits = leaky_relu(HW[adj.dst] @ a[:h] + HW[adj.src] @ a[h:], slope)
    return segment_softmax(logits, adj.dst, adj.n)


def attention_aggregate(H, adj: AdjacencyIndex, alpha, W,
                        activation: str = "relu", slope: float = 0.2,
                        return_pre: bool = False):
    """Row i of the result is activation( sum_j alpha_ij * (h_j W) )."""
    H = np.asarray(H, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.shape[0] != adj.src.shape[0]:
        raise ValueError(f"{alpha.shape[0]} coefficients for {adj.src.shape[0]} edges")
    if H.shape[1] != W.shape[0]:
        raise ValueError(f"attention shape mismatch: features {H.shape} @ weight {W.shape}")
    HW = H @ W
    pre = _scatter_rows(alpha[:, None] * HW[adj.src], adj.dst, adj.n)
    out = activate(pre, activation, slope)
    return (out, pre) if return_pre else out


def readout(H, mode: str, gate_params=None):
    """Collapse node embeddings (n, h) to one graph vector (h,).

    mean: column means. max: column maxima. attention: softmax-gated
    sum with scores q . tanh(W_g h_i); gate_params = (W_g, q).
    """
    H = np.asarray(H, dtype=np.float64)
    if H.ndim != 2 or H.shape[0] < 1:
        raise ValueError("readout needs at least one node embedding")
    if mode == "mean":
        return H.mean(axis=0)
    if mode == "max":
        return H.max(axis=0)
    if mode == "attention":
        if gate_params is None:
            raise ValueError("attention readout requires gate parameters")
        Wg, q = gate_params
        T = np.tanh(H @ np.asarray(Wg).T)
        s = softmax_row(T @ np.asarray(q).ravel())
        return H.T @ s
    raise ValueError(f"unknown readout mode {mode!r}")


def classify(z, W_o, b_o) -> np.ndarray:
    """Two-class probabilities softmax(W_o z + b_o)."""
    z = np.asarray(z, dtype=np.float64).ravel()
    W_o = np.asarray(W_o, dtype=np.float64)
    b_o = np.asarray(b_o, dtype=np.float64).ravel()
    if W_o.shape[1] != z.shape[0] or W_o.shape[0] != b_o.shape[0]:
        raise ValueError(f"classifier shape mismatch: W {W_o.shape}, z {z.shape}, b {b_o.shape}")
    return softmax_row(W_o @ z + b_o)


def model_forward(g: Graph, params: ModelParams, cfg: ModelConfig):
    """Full composition: embed -> conv stack -> attention -> readout ->
    classifier. Returns (probs, cache); the cache holds every
    intermediate the backward pass needs, keyed by stage."""
    adj = normalize_adjacency(g, cfg.norm_scheme, cfg.self_loops)
    H0 = materialize_features(g, params.embeddings)
    cache = {"graph": g, "adj": adj, "H0": H0, "conv": []}

    H = H0
    for W in params.gcn_weights:
        out, pre = gcn_forward(H, adj, W, cfg.activation, cfg.leaky_slope,
                               return_pre=True)
        cache["conv"].append({"in": H, "pre": pre})
        H = out

    if cfg.attention_enabled:
        alpha = attention_coefficients(H, adj, params.attn_weight,
                                       params.attn_vector, cfg.leaky_slope)
        out, pre = attention_aggregate(H, adj, alpha, params.attn_weight,
                                       cfg.activation, cfg.leaky_slope,
                                       return_pre=True)
        cache["attn"] = {"in": H, "alpha": alpha, "pre": pre}
        H = out

    cache["nodes"] = H
    if cfg.readout_mode == "attention":
        T = np.tanh(H @ params.readout_gate_w.T)
        s = softmax_row(T @ params.readout_gate_q)
        z = H.T @ s
        cache["readout"] = {"T": T, "s": s}
    else:
        z = readout(H, cfg.readout_mode)
        if cfg.readout_mode == "max":
            cache["readout"] = {"argmax": np.argmax(H, axis=0)}
        else:
            cache["readout"] = {}
    cache["z"] = z

    probs = classify(z, params.out_weight, params.out_bias)
    cache["probs"] = probs
    return probs, cache
