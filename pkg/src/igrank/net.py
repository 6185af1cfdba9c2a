"""The pose-scoring network: input projection, T interleaved equivariant
message-passing layers and gated-residual GRU cells, selective weighted
pooling, and the classification / node-type / regression heads.

Node features stay invariant and coordinates transform equivariantly under
rigid motions, so every readout quantity is E(3)-invariant by construction.
All blocks are written from matmul + activations on an explicit parameter
dictionary; reverse-mode gradients come from torch.autograd over that dict.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict, field
from pathlib import Path

import numpy as np
import torch

from . import serialize
from .errors import ConfigError, EmptyPoolError, NumericError, ShapeError
from .featurize import EdgeKind, ResidueGraph
from .rng import substream

POOLING_STRATEGIES = (
    "all",
    "interface_only",
    "cdr_only",
    "cdr_epitope_only",
    "no_interface",
    "no_cdr",
    "no_cdr_epitope",
)
HEAD_MODES = ("classifier", "regressor")
NODE_CLASS_COUNT = 3  # antigen, heavy, light

CHECKPOINT_FORMAT = "igrank-checkpoint-v1"

ParamDict = dict[str, torch.Tensor]


@dataclass(frozen=True)
class ModelConfig:
    hidden_dim: int = 64
    layers: int = 4
    dropout: float = 0.1
    pooling: str = "all"
    head_mode: str = "classifier"
    node_feat_dim: int = 320
    edge_feat_dim: int = 30

    def __post_init__(self):
        if self.hidden_dim < 1 or self.layers < 1:
            raise ConfigError(f"hidden_dim and layers must be >= 1, got {self.hidden_dim}, {self.layers}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.pooling not in POOLING_STRATEGIES:
            raise ConfigError(f"pooling must be one of {POOLING_STRATEGIES}, got {self.pooling!r}")
        if self.head_mode not in HEAD_MODES:
            raise ConfigError(f"head_mode must be one of {HEAD_MODES}, got {self.head_mode!r}")
        if self.node_feat_dim < 1 or self.edge_feat_dim < 1:
            raise ConfigError("feature dimensions must be >= 1")


@dataclass
class ForwardOutput:
    class_probs: torch.Tensor   # (2,) softmax
    node_logits: torch.Tensor   # (N, 3)
    pooled: torch.Tensor        # (h,)
    reg_score: torch.Tensor     # scalar in (0, 1)
    pool_weights: torch.Tensor  # per pooled node, in (0, 1)
    pool_set: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))


def param_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Canonical name -> shape map; the order fixes init and checkpoint layout."""
    h, d_x, d_e = cfg.hidden_dim, cfg.node_feat_dim, cfg.edge_feat_dim
    shapes: dict[str, tuple[int, ...]] = {
        "input.weight": (d_x, h),
        "input.bias": (h,),
    }
    for t in range(cfg.layers):
        shapes.update({
            f"egnn{t}.edge.w1": (2 * h + 1 + d_e, h),
            f"egnn{t}.edge.bias1": (h,),
            f"egnn{t}.edge.w2": (h, h),
            f"egnn{t}.edge.bias2": (h,),
            f"egnn{t}.coord.w1": (h, h),
            f"egnn{t}.coord.bias1": (h,),
            f"egnn{t}.coord.w2": (h, 1),  # final layer bias-free
            f"egnn{t}.node.w1": (2 * h, h),
            f"egnn{t}.node.bias1": (h,),
            f"egnn{t}.node.w2": (h, h),
            f"egnn{t}.node.bias2": (h,),
            f"gru{t}.w_r_in": (2 * h, h),
            f"gru{t}.w_z_in": (2 * h, h),
            f"gru{t}.w_n_in": (2 * h, h),
            f"gru{t}.w_r_hid": (h, h),
            f"gru{t}.w_z_hid": (h, h),
            f"gru{t}.w_n_hid": (h, h),
            f"gru{t}.bias_r": (h,),
            f"gru{t}.bias_z": (h,),
            f"gru{t}.bias_n": (h,),
        })
    shapes.update({
        "pool.weight": (h,),
        "pool.bias": (),
        "clf.w1": (h, h),
        "clf.bias1": (h,),
        "clf.w2": (h, 2),
        "clf.bias2": (2,),
        "node.weight": (h, NODE_CLASS_COUNT),
        "node.bias": (NODE_CLASS_COUNT,),
        "reg.weight": (h,),
        "reg.bias": (),
    })
    return shapes


def _glorot_bound(shape: tuple[int, ...]) -> float:
    fan_in = shape[0]
    fan_out = shape[1] if len(shape) > 1 else 1
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def init_params(cfg: ModelConfig, seed: int, dtype: torch.dtype = torch.float32) -> ParamDict:
    """Glorot-uniform weights and zero biases, deterministic per seed."""
    rng = substream(seed, "init")
    params: ParamDict = {}
    for name, shape in param_shapes(cfg).items():
        if "bias" in name:
            values = np.zeros(shape, dtype=np.float64)
        else:
            s = _glorot_bound(shape)
            values = rng.uniform(-s, s, size=shape)
        params[name] = torch.as_tensor(np.asarray(values, dtype=np.float64).reshape(shape)).to(dtype)
    return params


def reinit_head(params: ParamDict, cfg: ModelConfig, head: str = "reg") -> ParamDict:
    """Copy `params` with the named head zero-initialized (used for transfer).

    A trained backbone can pool to large magnitudes; against a random head the
    scaled-tanh output saturates and its gradient vanishes, freezing training.
    Starting the fresh head at zero puts the score at 0.5, where the gradient
    is maximal, regardless of the backbone's scale.
    """
    out = {k: v.detach().clone() for k, v in params.items()}
    for name, shape in param_shapes(cfg).items():
        if name.startswith(head + "."):
            out[name] = torch.zeros(shape, dtype=out[name].dtype)
    return out


def params_to_dtype(params: ParamDict, dtype: torch.dtype) -> ParamDict:
    return {k: v.detach().clone().to(dtype) for k, v in params.items()}


def _check_shapes(params: ParamDict, cfg: ModelConfig) -> None:
    expected = param_shapes(cfg)
    missing = sorted(set(expected) - set(params))
    extra = sorted(set(params) - set(expected))
    if missing or extra:
        raise ShapeError(f"parameter names mismatch: missing {missing}, unexpected {extra}")
    for name, shape in expected.items():
        if tuple(params[name].shape) != shape:
            raise ShapeError(f"parameter {name}: shape {tuple(params[name].shape)}, expected {shape}")


def input_embed(x: torch.Tensor, params: ParamDict) -> torch.Tensor:
    """H0 = SiLU(X W_in + b_in)."""
    if x.shape[-1] != params["input.weight"].shape[0]:
        raise ShapeError(f"node features have width {x.shape[-1]}, "
                         f"projection expects {params['input.weight'].shape[0]}")
    return torch.nn.functional.silu(x @ params["input.weight"] + params["input.bias"])


def _mlp2(x: torch.Tensor, params: ParamDict, prefix: str, final_silu: bool,
          final_bias: bool = True) -> torch.Tensor:
    hidden = torch.nn.functional.silu(x @ params[f"{prefix}.w1"] + params[f"{prefix}.bias1"])
    out = hidden @ params[f"{prefix}.w2"]
    if final_bias:
        out = out + params[f"{prefix}.bias2"]
    return torch.nn.functional.silu(out) if final_silu else out


def egnn_layer(
    h: torch.Tensor,
    p: torch.Tensor,
    edge_index: torch.Tensor,
    edge_attr: torch.Tensor,
    params: ParamDict,
    layer: int,
) -> tuple[torch.Tensor, torch.Tensor]:
    """One equivariant message-passing step.

    m_ij = phi_e([h_i, h_j, |p_i - p_j|^2, a_ij]); the receiving node averages
    (p_i - p_j) * phi_x(m_ij) into its coordinate update and feeds the summed
    messages through phi_h.  `edge_index` is directed (both orientations of
    every undirected edge); isolated nodes keep their coordinates and receive
    a zero aggregate message.
    """
    n = h.shape[0]
    rcv, snd = edge_index[0], edge_index[1]
    agg_m = torch.zeros_like(h)
    coord_sum = torch.zeros_like(p)
    if rcv.numel():
        diff = p[rcv] - p[snd]
        sqdist = (diff * diff).sum(-1, keepdim=True)
        m = _mlp2(torch.cat([h[rcv], h[snd], sqdist, edge_attr], dim=-1),
                  params, f"egnn{layer}.edge", final_silu=True)
        gate = _mlp2(m, params, f"egnn{layer}.coord", final_silu=False, final_bias=False)
        agg_m = agg_m.index_add(0, rcv, m)
        coord_sum = coord_sum.index_add(0, rcv, diff * gate)
    deg = torch.zeros(n, dtype=h.dtype, device=h.device)
    if rcv.numel():
        deg = deg.index_add(0, rcv, torch.ones_like(rcv, dtype=h.dtype))
    p_new = p + coord_sum / deg.clamp(min=1.0).unsqueeze(-1)
    h_tilde = _mlp2(torch.cat([h, agg_m], dim=-1), params, f"egnn{layer}.node", final_silu=False)
    if not (torch.isfinite(h_tilde).all() and torch.isfinite(p_new).all()):
        raise NumericError(f"non-finite value in equivariant layer {layer}")
    return h_tilde, p_new


def modified_gru_cell(h_tilde: torch.Tensor, h_prev: torch.Tensor,
                      params: ParamDict, layer: int) -> torch.Tensor:
    """Gated residual update over the concatenated input [h_tilde | h_prev].

    Feeding h_prev through the input weights as well gives the candidate gate
    a linear path to the previous state that stays open when the reset and
    update gates saturate shut.
    """
    if h_tilde.shape != h_prev.shape:
        raise ShapeError(f"gru layer {layer}: h_tilde {tuple(h_tilde.shape)} vs "
                         f"h_prev {tuple(h_prev.shape)}")
    x = torch.cat([h_tilde, h_prev], dim=-1)
    r = torch.sigmoid(x @ params[f"gru{layer}.w_r_in"] + h_prev @ params[f"gru{layer}.w_r_hid"]
                      + params[f"gru{layer}.bias_r"])
    z = torch.sigmoid(x @ params[f"gru{layer}.w_z_in"] + h_prev @ params[f"gru{layer}.w_z_hid"]
                      + params[f"gru{layer}.bias_z"])
    n = torch.tanh(x @ params[f"gru{layer}.w_n_in"] + (r * h_prev) @ params[f"gru{layer}.w_n_hid"]
                   + params[f"gru{layer}.bias_n"])
    return (1.0 - z) * n + z * h_prev


def select_pool_set(g: ResidueGraph, strategy: str) -> np.ndarray:
    """Node subset a pooling strategy reads out (sorted original indices)."""
    if strategy not in POOLING_STRATEGIES:
        raise ConfigError(f"unknown pooling strategy {strategy!r}")
    all_nodes = np.arange(g.node_count, dtype=np.int64)
    interface = g.interface_set()
    cdr = np.flatnonzero(g.cdr_mask).astype(np.int64)
    cdr_epitope: set[int] = set()
    is_ig = (g.node_role == 1) | (g.node_role == 2)
    for (i, j), kind in zip(g.edges, g.edge_kinds):
        if kind != EdgeKind.INTER:
            continue
        i, j = int(i), int(j)
        ig_end = i if is_ig[i] else j
        if g.cdr_mask[ig_end]:
            cdr_epitope.update((i, j))
    cdr_epi = np.array(sorted(cdr_epitope), dtype=np.int64)
    sets = {
        "all": all_nodes,
        "interface_only": interface,
        "cdr_only": cdr,
        "cdr_epitope_only": cdr_epi,
        "no_interface": np.setdiff1d(all_nodes, interface),
        "no_cdr": np.setdiff1d(all_nodes, cdr),
        "no_cdr_epitope": np.setdiff1d(all_nodes, cdr_epi),
    }
    chosen = sets[strategy]
    if chosen.size == 0:
        raise EmptyPoolError(f"pooling strategy {strategy!r} selected no nodes")
    return chosen


def weighted_pool(h_final: torch.Tensor, pool_set: np.ndarray | torch.Tensor,
                  params: ParamDict) -> tuple[torch.Tensor, torch.Tensor]:
    """w_i = sigmoid(w_p . h_i + b_p); g = sum_{i in S} w_i h_i."""
    idx = torch.as_tensor(np.asarray(pool_set, dtype=np.int64))
    if idx.numel() == 0:
        raise EmptyPoolError("weighted pooling over an empty node set")
    rows = h_final[idx]
    weights = torch.sigmoid(rows @ params["pool.weight"] + params["pool.bias"])
    pooled = (weights.unsqueeze(-1) * rows).sum(dim=0)
    return pooled, weights


def classifier_head(pooled: torch.Tensor, params: ParamDict, dropout: float = 0.0,
                    dropout_rng: np.random.Generator | None = None) -> torch.Tensor:
    """Two-layer MLP with SiLU and softmax; inverted dropout on the hidden layer.

    Dropout is applied only when a generator is supplied (training mode);
    inference is deterministic.
    """
    hidden = torch.nn.functional.silu(pooled @ params["clf.w1"] + params["clf.bias1"])
    if dropout_rng is not None and dropout > 0.0:
        keep = (dropout_rng.random(hidden.shape[-1]) >= dropout) / (1.0 - dropout)
        hidden = hidden * torch.as_tensor(keep, dtype=hidden.dtype)
    logits = hidden @ params["clf.w2"] + params["clf.bias2"]
    return torch.softmax(logits, dim=-1)


def regressor_head(pooled: torch.Tensor, params: ParamDict) -> torch.Tensor:
    """Scaled tanh: 0.5 * (tanh(0.5 z) + 1) with z = w_r . g + b_r, in (0, 1)."""
    z = pooled @ params["reg.weight"] + params["reg.bias"]
    return 0.5 * (torch.tanh(0.5 * z) + 1.0)


def node_type_head(h_final: torch.Tensor, params: ParamDict) -> torch.Tensor:
    """Raw per-node logits over (antigen, heavy, light)."""
    return h_final @ params["node.weight"] + params["node.bias"]


def directed_edges(g: ResidueGraph) -> tuple[np.ndarray, np.ndarray]:
    """Expand the once-stored undirected edges to both directions."""
    if g.edge_count == 0:
        return np.empty((2, 0), dtype=np.int64), np.empty((0, g.edge_feats.shape[1]))
    fwd = g.edges.T
    bwd = g.edges[:, ::-1].T
    index = np.concatenate([fwd, bwd], axis=1)
    attr = np.concatenate([g.edge_feats, g.edge_feats], axis=0)
    return index, attr


def forward(
    g: ResidueGraph,
    params: ParamDict,
    cfg: ModelConfig,
    mode: str = "infer",
    dropout_rng: np.random.Generator | None = None,
) -> ForwardOutput:
    """Full network pass over one residue graph.

    Coordinates are updated through the layers but do not feed any readout;
    class probabilities, node logits and the regression score all derive from
    the invariant hidden states.
    """
    if mode not in ("train", "infer"):
        raise ConfigError(f"mode must be 'train' or 'infer', got {mode!r}")
    if mode == "train" and cfg.dropout > 0.0 and dropout_rng is None:
        raise ConfigError("training mode with dropout requires a dropout generator")
    _check_shapes(params, cfg)
    dtype = params["input.weight"].dtype
    x = torch.as_tensor(g.node_feats, dtype=dtype)
    p = torch.as_tensor(g.coords, dtype=dtype)
    index_np, attr_np = directed_edges(g)
    edge_index = torch.as_tensor(index_np)
    edge_attr = torch.as_tensor(attr_np, dtype=dtype)
    if edge_attr.shape[-1] != cfg.edge_feat_dim:
        raise ShapeError(f"edge features have width {edge_attr.shape[-1]}, "
                         f"config expects {cfg.edge_feat_dim}")

    h = input_embed(x, params)
    for t in range(cfg.layers):
        h_tilde, p = egnn_layer(h, p, edge_index, edge_attr, params, t)
        h = modified_gru_cell(h_tilde, h, params, t)

    pool_set = select_pool_set(g, cfg.pooling)
    pooled, pool_weights = weighted_pool(h, pool_set, params)
    rng = dropout_rng if mode == "train" else None
    class_probs = classifier_head(pooled, params, cfg.dropout, rng)
    return ForwardOutput(
        class_probs=class_probs,
        node_logits=node_type_head(h, params),
        pooled=pooled,
        reg_score=regressor_head(pooled, params),
        pool_weights=pool_weights,
        pool_set=pool_set,
    )


def ensemble_combine(values, weights) -> float:
    """Convex combination of model outputs: weights nonnegative, summing to 1."""
    values = [float(v) for v in values]
    weights = [float(w) for w in weights]
    if not values:
        raise ConfigError("ensemble needs at least one value")
    if len(values) != len(weights):
        raise ShapeError(f"{len(values)} values vs {len(weights)} weights")
    if any(w < 0 for w in weights):
        raise ConfigError(f"ensemble weights must be nonnegative, got {weights}")
    if abs(sum(weights) - 1.0) > 1e-9:
        raise ConfigError(f"ensemble weights must sum to 1, got {sum(weights)!r}")
    return float(sum(w * v for w, v in zip(weights, values)))


def gradients(params: ParamDict, batch, objective) -> tuple[ParamDict, float]:
    """Exact reverse-mode gradients of objective(params, batch) per parameter.

    `objective` must return a scalar tensor computed from the supplied
    parameter dict.  Parameters the objective never touches get zero
    gradients; non-finite gradients raise with the parameter name.
    """
    leaves = {k: v.detach().clone().requires_grad_(True) for k, v in params.items()}
    loss = objective(leaves, batch)
    if loss.dim() != 0:
        raise ShapeError(f"objective must return a scalar, got shape {tuple(loss.shape)}")
    grads_raw = torch.autograd.grad(loss, list(leaves.values()), allow_unused=True)
    grads: ParamDict = {}
    for (name, leaf), grad in zip(leaves.items(), grads_raw):
        tensor = grad if grad is not None else torch.zeros_like(leaf)
        if not torch.isfinite(tensor).all():
            raise NumericError(f"non-finite gradient for parameter {name!r}")
        grads[name] = tensor.detach()
    return grads, float(loss.detach())


def save_checkpoint(path: str | Path, params: ParamDict, cfg: ModelConfig, seed: int) -> None:
    """Metadata header plus a little-endian float32 blob of all parameters."""
    _check_shapes(params, cfg)
    arrays = {name: params[name].detach().cpu().numpy().astype("<f4")
              for name in param_shapes(cfg)}
    serialize.write_blob(path, CHECKPOINT_FORMAT,
                         {"config": asdict(cfg), "seed": int(seed)}, arrays)


def load_checkpoint(path: str | Path) -> tuple[ParamDict, ModelConfig, int]:
    """Load a checkpoint, validating every parameter shape against its config."""
    meta, arrays = serialize.read_blob(path, expected_format=CHECKPOINT_FORMAT)
    try:
        cfg = ModelConfig(**meta["config"])
        seed = int(meta["seed"])
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"{path}: malformed checkpoint metadata: {exc}") from None
    params = {name: torch.as_tensor(arr.astype(np.float32)) for name, arr in arrays.items()}
    _check_shapes(params, cfg)
    return params, cfg, seed
