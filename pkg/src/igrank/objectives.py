"""Training losses: graph/node cross-entropies, batch Pearson terms, the
listwise ranking loss, and the weighted composites for both tasks."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import torch

from .errors import ConfigError, ShapeError
from .net import ForwardOutput

VARIANCE_EPS = 1e-12


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 1e-3        # node-type cross-entropy multiplier
    beta: float = 2e-3         # batch-Pearson multiplier
    fbeta_beta: float = 0.25   # threshold-selection F-beta (consumed by evalkit)

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ConfigError(f"alpha and beta must be >= 0, got {self.alpha}, {self.beta}")


def _as_1d(x, dtype=None) -> torch.Tensor:
    t = torch.as_tensor(x, dtype=dtype)
    if t.dim() != 1:
        t = t.reshape(-1)
    return t


def cross_entropy(values: torch.Tensor, targets, level: str = "graph") -> torch.Tensor:
    """Mean negative log-likelihood.

    level="graph": `values` are softmax probabilities, one row per graph.
    level="node": `values` are raw logits, one row per node of a single graph.
    """
    values = torch.as_tensor(values)
    targets = torch.as_tensor(targets, dtype=torch.long).reshape(-1)
    if values.dim() != 2 or values.shape[0] != targets.shape[0]:
        raise ShapeError(f"values {tuple(values.shape)} vs targets {tuple(targets.shape)}")
    if targets.numel() and (targets.min() < 0 or targets.max() >= values.shape[1]):
        raise ConfigError(f"class index outside [0, {values.shape[1]})")
    if level == "graph":
        # softmax output can underflow to exactly 0 in float32; keep log finite
        log_p = torch.log(values.clamp(min=torch.finfo(values.dtype).tiny))
    elif level == "node":
        log_p = torch.log_softmax(values, dim=-1)
    else:
        raise ConfigError(f"level must be 'graph' or 'node', got {level!r}")
    return -log_p[torch.arange(targets.shape[0]), targets].mean()


def neg_pearson(pred, target) -> torch.Tensor:
    """Negative sample Pearson correlation, skipped on degenerate input.

    Returns 0 when either vector is shorter than 2 or has (population)
    variance below 1e-12, so composite losses stay defined on constant or
    single-element batches.
    """
    pred = _as_1d(pred)
    target = _as_1d(target, dtype=pred.dtype)
    if pred.shape[0] != target.shape[0]:
        raise ShapeError(f"length mismatch: {pred.shape[0]} vs {target.shape[0]}")
    if pred.shape[0] < 2:
        warnings.warn("Pearson term skipped: need at least 2 values", stacklevel=2)
        return torch.zeros((), dtype=pred.dtype)
    dx = pred - pred.mean()
    dy = target - target.mean()
    if (float((dx * dx).mean().detach()) < VARIANCE_EPS
            or float((dy * dy).mean().detach()) < VARIANCE_EPS):
        return torch.zeros((), dtype=pred.dtype)
    r = (dx * dy).sum() / torch.sqrt((dx * dx).sum() * (dy * dy).sum())
    return -r


def listnet_loss(pred_scores, target_scores) -> torch.Tensor:
    """Top-1 listwise ranking loss: cross-entropy between score softmaxes."""
    pred = _as_1d(pred_scores)
    target = _as_1d(target_scores, dtype=pred.dtype)
    if pred.shape[0] != target.shape[0]:
        raise ShapeError(f"length mismatch: {pred.shape[0]} vs {target.shape[0]}")
    if pred.shape[0] < 2:
        raise ConfigError("ranking list needs at least 2 items")
    return -(torch.softmax(target, dim=0) * torch.log_softmax(pred, dim=0)).sum()


def classification_objective(
    outputs: Sequence[ForwardOutput],
    labels,
    node_targets: Sequence,
    dockq_targets,
    weights: LossWeights | None = None,
) -> torch.Tensor:
    """Graph cross-entropy + alpha * node cross-entropy + beta * (-Pearson).

    The Pearson term correlates the positive-class probability with the
    continuous pose-quality target over the mini-batch; class index 1 is the
    native-like class.
    """
    weights = weights or LossWeights()
    if not outputs:
        raise ConfigError("empty batch")
    if not (len(outputs) == len(node_targets)):
        raise ShapeError("node targets misaligned with batch")
    probs = torch.stack([o.class_probs for o in outputs])
    loss = cross_entropy(probs, labels, level="graph")
    if weights.alpha:
        node_loss = torch.stack([
            cross_entropy(o.node_logits, t, level="node")
            for o, t in zip(outputs, node_targets)
        ]).mean()
        loss = loss + weights.alpha * node_loss
    if weights.beta:
        dockq = _as_1d(dockq_targets, dtype=probs.dtype)
        if dockq.shape[0] != probs.shape[0]:
            raise ShapeError("pose-quality targets misaligned with batch")
        loss = loss + weights.beta * neg_pearson(probs[:, 1], dockq)
    return loss


def regression_objective(pred_scores, dockq_targets) -> torch.Tensor:
    """-Pearson(pred, target) + listwise ranking loss over the mini-batch."""
    pred = _as_1d(pred_scores)
    if pred.shape[0] < 2:
        raise ConfigError("regression objective needs a batch of at least 2")
    return neg_pearson(pred, dockq_targets) + listnet_loss(pred, dockq_targets)
