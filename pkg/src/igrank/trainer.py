"""Training loops for the pose classifier and the pose-quality regressor:
class-weighted sampling, Adam with cosine annealing, early stopping, and
classifier-to-regressor transfer."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import torch

from . import evalkit, net, objectives
from .errors import ConfigError, DataError, ShapeError, UnscorableSampleError
from .featurize import FeaturizerConfig, ResidueGraph
from .manifest import SampleRecord
from .pipeline import prepare_record
from .rng import stream_key, substream
from .subgraph import SamplerConfig

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    lr_init: float = 1e-4
    lr_final: float = 1e-5
    max_epochs: int = 50
    batch_size: int = 8
    sampler_weights: tuple[float, float] = (0.8, 0.2)  # (negative, positive)
    patience: int = 5
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.lr_final > self.lr_init:
            raise ConfigError(f"lr_final {self.lr_final} must be <= lr_init {self.lr_init}")
        if self.patience < 1:
            raise ConfigError(f"patience must be >= 1, got {self.patience}")
        if self.max_epochs < 0:
            raise ConfigError(f"max_epochs must be >= 0, got {self.max_epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if any(w <= 0 for w in self.sampler_weights):
            raise ConfigError(f"sampler weights must be positive, got {self.sampler_weights}")


def weighted_sampler(labels, weights: tuple[float, float], seed: int, n_draws: int) -> np.ndarray:
    """Indices drawn with replacement, P(i) proportional to weights[label_i]."""
    labels = np.asarray(labels).reshape(-1).astype(np.int64)
    if labels.size == 0:
        raise DataError("cannot sample from an empty label set")
    if not np.isin(labels, (0, 1)).all():
        raise DataError("labels must be binary")
    w_neg, w_pos = float(weights[0]), float(weights[1])
    if w_neg <= 0 or w_pos <= 0:
        raise ConfigError(f"sampler weights must be positive, got {weights}")
    p = np.where(labels == 1, w_pos, w_neg).astype(np.float64)
    p /= p.sum()
    rng = np.random.default_rng(seed)
    return rng.choice(labels.size, size=int(n_draws), replace=True, p=p)


def cosine_lr(epoch: int, cfg: TrainConfig) -> float:
    """Cosine annealing from lr_init (epoch 0) to lr_final (last epoch)."""
    if not 0 <= epoch < cfg.max_epochs:
        raise ConfigError(f"epoch {epoch} outside [0, {cfg.max_epochs})")
    if cfg.max_epochs == 1:
        return cfg.lr_init
    span = cfg.max_epochs - 1
    return cfg.lr_final + 0.5 * (cfg.lr_init - cfg.lr_final) * (1.0 + math.cos(math.pi * epoch / span))


@dataclass
class AdamState:
    step: int
    m: net.ParamDict
    v: net.ParamDict


def init_adam_state(params: net.ParamDict) -> AdamState:
    return AdamState(
        step=0,
        m={k: torch.zeros_like(v) for k, v in params.items()},
        v={k: torch.zeros_like(v) for k, v in params.items()},
    )


def adam_step(params: net.ParamDict, grads: net.ParamDict, state: AdamState,
              lr: float, cfg: TrainConfig) -> tuple[net.ParamDict, AdamState]:
    """One bias-corrected Adam update; returns fresh params and state."""
    if set(params) != set(grads) or set(params) != set(state.m):
        raise ShapeError("params, grads and moments must share parameter names")
    t = state.step + 1
    b1, b2, eps = cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps
    new_params: net.ParamDict = {}
    new_m: net.ParamDict = {}
    new_v: net.ParamDict = {}
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeError(f"gradient shape {tuple(g.shape)} != param shape {tuple(p.shape)} for {name}")
        m = b1 * state.m[name] + (1.0 - b1) * g
        v = b2 * state.v[name] + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        new_params[name] = p - lr * m_hat / (torch.sqrt(v_hat) + eps)
        new_m[name] = m
        new_v[name] = v
    return new_params, AdamState(step=t, m=new_m, v=new_v)


@dataclass
class PreparedSample:
    record: SampleRecord
    graph: ResidueGraph


@dataclass
class TrainResult:
    params: net.ParamDict
    model_config: net.ModelConfig
    train_config: TrainConfig
    history: list[dict]
    best_epoch: int | None
    best_metric: float | None
    best_threshold: float | None
    mode: str
    skipped: list[str] = field(default_factory=list)


def prepare_samples(
    records: list[SampleRecord],
    fcfg: FeaturizerConfig | None,
    scfg: SamplerConfig | None,
    allow_nondocking: bool,
    base_dir: str | Path,
    graphs: dict[str, ResidueGraph] | None = None,
) -> tuple[list[PreparedSample], list[str]]:
    """Featurize and sample every record once; unscorable ones are logged and skipped."""
    prepared, skipped = [], []
    for record in records:
        try:
            graph = prepare_record(record, fcfg, scfg, allow_nondocking, base_dir,
                                   graph=(graphs or {}).get(record.id))
            prepared.append(PreparedSample(record=record, graph=graph))
        except UnscorableSampleError as exc:
            logger.warning("skipping unscorable sample %s: %s", record.id, exc)
            skipped.append(record.id)
    return prepared, skipped


def _split(records: list[SampleRecord], tag: str) -> list[SampleRecord]:
    return [r for r in records if r.split == tag]


def _classifier_scores(samples: list[PreparedSample], params: net.ParamDict,
                       cfg: net.ModelConfig) -> np.ndarray:
    return np.array([
        float(net.forward(s.graph, params, cfg, mode="infer").class_probs[1])
        for s in samples
    ])


def _regressor_scores(samples: list[PreparedSample], params: net.ParamDict,
                      cfg: net.ModelConfig) -> np.ndarray:
    return np.array([
        float(net.forward(s.graph, params, cfg, mode="infer").reg_score)
        for s in samples
    ])


def _chunks(indices: np.ndarray, size: int, merge_trailing_singleton: bool) -> list[np.ndarray]:
    chunks = [indices[i:i + size] for i in range(0, len(indices), size)]
    if merge_trailing_singleton and len(chunks) >= 2 and len(chunks[-1]) == 1:
        chunks[-2] = np.concatenate([chunks[-2], chunks[-1]])
        chunks.pop()
    return chunks


def _copy_params(params: net.ParamDict) -> net.ParamDict:
    return {k: v.detach().clone() for k, v in params.items()}


def train_classifier(
    records: list[SampleRecord],
    model_cfg: net.ModelConfig | None = None,
    train_cfg: TrainConfig | None = None,
    featurizer_cfg: FeaturizerConfig | None = None,
    sampler_cfg: SamplerConfig | None = None,
    allow_nondocking: bool = False,
    base_dir: str | Path = ".",
    graphs: dict[str, ResidueGraph] | None = None,
    loss_weights: objectives.LossWeights | None = None,
) -> TrainResult:
    """Weighted-sampled epochs of the composite classification objective with
    per-epoch validation F1 at the scan-selected threshold and early stopping.

    Keeps the best-validation-F1 parameters.  Every batch needs both binary
    labels and continuous pose-quality targets (the latter feed the batch
    Pearson term).
    """
    model_cfg = model_cfg or net.ModelConfig()
    train_cfg = train_cfg or TrainConfig()
    loss_weights = loss_weights or objectives.LossWeights()
    if model_cfg.head_mode != "classifier":
        raise ConfigError("train_classifier needs a classifier-head model config")
    train_records = _split(records, "train")
    val_records = _split(records, "validation")
    if not train_records or not val_records:
        raise DataError(f"need non-empty train and validation splits, got "
                        f"{len(train_records)}/{len(val_records)}")
    for r in train_records + val_records:
        r.require_label()

    train_samples, skipped = prepare_samples(train_records, featurizer_cfg, sampler_cfg,
                                             allow_nondocking, base_dir, graphs)
    val_samples, skipped_val = prepare_samples(val_records, featurizer_cfg, sampler_cfg,
                                               allow_nondocking, base_dir, graphs)
    skipped += skipped_val
    if not train_samples or not val_samples:
        raise DataError("all samples of a split were unscorable")

    train_labels = np.array([s.record.label for s in train_samples], dtype=np.int64)
    val_labels = np.array([s.record.label for s in val_samples], dtype=np.int64)

    params = net.init_params(model_cfg, train_cfg.seed)
    state = init_adam_state(params)
    history: list[dict] = []
    best = {"params": _copy_params(params), "metric": -math.inf, "epoch": None, "threshold": None}
    epochs_without_improvement = 0

    for epoch in range(train_cfg.max_epochs):
        lr = cosine_lr(epoch, train_cfg)
        order = weighted_sampler(train_labels, train_cfg.sampler_weights,
                                 seed=stream_key(train_cfg.seed, "sampler", epoch),
                                 n_draws=len(train_samples))
        epoch_losses = []
        for step, chunk in enumerate(_chunks(order, train_cfg.batch_size, False)):
            batch = [train_samples[i] for i in chunk]
            dropout_rng = substream(train_cfg.seed, "dropout", epoch, step)

            def objective(leaf_params, batch):
                outputs = [net.forward(s.graph, leaf_params, model_cfg, mode="train",
                                       dropout_rng=dropout_rng) for s in batch]
                return objectives.classification_objective(
                    outputs,
                    labels=[s.record.label for s in batch],
                    node_targets=[s.graph.node_role.astype(np.int64) for s in batch],
                    dockq_targets=[s.record.require_dockq() for s in batch],
                    weights=loss_weights,
                )

            grads, loss = net.gradients(params, batch, objective)
            params, state = adam_step(params, grads, state, lr, train_cfg)
            epoch_losses.append(loss)

        train_scores = _classifier_scores(train_samples, params, model_cfg)
        train_tau, _ = evalkit.select_threshold_fbeta(train_scores, train_labels, loss_weights.fbeta_beta)
        train_f1 = evalkit.confusion_metrics(train_scores, train_labels, train_tau).f1
        val_scores = _classifier_scores(val_samples, params, model_cfg)
        val_tau, val_fbeta = evalkit.select_threshold_fbeta(val_scores, val_labels, loss_weights.fbeta_beta)
        val_f1 = evalkit.confusion_metrics(val_scores, val_labels, val_tau).f1
        history.append({
            "epoch": epoch, "lr": lr, "train_loss": float(np.mean(epoch_losses)),
            "train_f1": train_f1, "val_f1": val_f1,
            "val_threshold": val_tau, "val_fbeta": val_fbeta,
        })
        if val_f1 > best["metric"]:
            best = {"params": _copy_params(params), "metric": val_f1,
                    "epoch": epoch, "threshold": val_tau}
            epochs_without_improvement = 0
        else:
            epochs_without_improvement += 1
            if epochs_without_improvement >= train_cfg.patience:
                break

    return TrainResult(
        params=best["params"], model_config=model_cfg, train_config=train_cfg,
        history=history, best_epoch=best["epoch"],
        best_metric=None if best["metric"] == -math.inf else best["metric"],
        best_threshold=best["threshold"], mode="classifier", skipped=skipped,
    )


def finetune_regressor(
    records: list[SampleRecord],
    classifier_params: net.ParamDict | None = None,
    classifier_cfg: net.ModelConfig | None = None,
    model_cfg: net.ModelConfig | None = None,
    train_cfg: TrainConfig | None = None,
    featurizer_cfg: FeaturizerConfig | None = None,
    sampler_cfg: SamplerConfig | None = None,
    allow_nondocking: bool = False,
    base_dir: str | Path = ".",
    graphs: dict[str, ResidueGraph] | None = None,
) -> TrainResult:
    """Pose-quality regression: transfer from a classifier or from scratch.

    Transfer mode copies every classifier parameter and re-initializes only
    the regression head; from-scratch mode (no classifier given) initializes
    everything fresh.  Optimizes the correlation+ranking objective with early
    stopping on validation Pearson.  Mini-batches are drawn uniformly with
    replacement (class weights are a classification device).
    """
    train_cfg = train_cfg or TrainConfig()
    if classifier_params is not None:
        if classifier_cfg is None:
            raise ConfigError("classifier params supplied without their config")
        if classifier_cfg.head_mode != "classifier":
            raise ConfigError("transfer source must be a classifier checkpoint")
        model_cfg = model_cfg or replace(classifier_cfg, head_mode="regressor")
        for fld in ("hidden_dim", "layers", "node_feat_dim", "edge_feat_dim", "pooling"):
            if getattr(model_cfg, fld) != getattr(classifier_cfg, fld):
                raise ConfigError(f"model config field {fld} does not match the checkpoint")
        params = net.reinit_head(classifier_params, model_cfg, head="reg")
        mode = "regressor-finetune"
    else:
        model_cfg = model_cfg or net.ModelConfig(head_mode="regressor")
        params = net.init_params(model_cfg, train_cfg.seed)
        mode = "regressor-scratch"
    if model_cfg.head_mode != "regressor":
        raise ConfigError("finetune_regressor needs a regressor-head model config")
    if train_cfg.batch_size < 2:
        raise ConfigError("the ranking objective needs batches of at least 2")

    train_records = _split(records, "train")
    val_records = _split(records, "validation")
    if not train_records or not val_records:
        raise DataError(f"need non-empty train and validation splits, got "
                        f"{len(train_records)}/{len(val_records)}")
    for r in train_records + val_records:
        r.require_dockq()

    train_samples, skipped = prepare_samples(train_records, featurizer_cfg, sampler_cfg,
                                             allow_nondocking, base_dir, graphs)
    val_samples, skipped_val = prepare_samples(val_records, featurizer_cfg, sampler_cfg,
                                               allow_nondocking, base_dir, graphs)
    skipped += skipped_val
    if len(train_samples) < 2 or not val_samples:
        raise DataError("not enough scorable samples to fit the regressor")

    train_targets = np.array([s.record.dockq for s in train_samples])
    val_targets = np.array([s.record.dockq for s in val_samples])
    state = init_adam_state(params)
    history: list[dict] = []
    best = {"params": _copy_params(params), "metric": -math.inf, "epoch": None}
    epochs_without_improvement = 0

    def split_pearson(samples, targets) -> float:
        scores = _regressor_scores(samples, params, model_cfg)
        return -float(objectives.neg_pearson(torch.as_tensor(scores), torch.as_tensor(targets)))

    for epoch in range(train_cfg.max_epochs):
        lr = cosine_lr(epoch, train_cfg)
        order = weighted_sampler(np.zeros(len(train_samples), dtype=np.int64), (1.0, 1.0),
                                 seed=stream_key(train_cfg.seed, "sampler", epoch),
                                 n_draws=len(train_samples))
        epoch_losses = []
        for chunk in _chunks(order, train_cfg.batch_size, True):
            if len(chunk) < 2:
                continue  # a lone sample cannot form a ranking list
            batch = [train_samples[i] for i in chunk]

            def objective(leaf_params, batch):
                preds = torch.stack([
                    net.forward(s.graph, leaf_params, model_cfg, mode="infer").reg_score
                    for s in batch
                ])
                targets = torch.as_tensor([s.record.dockq for s in batch], dtype=preds.dtype)
                return objectives.regression_objective(preds, targets)

            grads, loss = net.gradients(params, batch, objective)
            params, state = adam_step(params, grads, state, lr, train_cfg)
            epoch_losses.append(loss)

        metric = split_pearson(val_samples, val_targets)
        history.append({
            "epoch": epoch, "lr": lr,
            "train_loss": float(np.mean(epoch_losses)) if epoch_losses else None,
            "train_pearson": split_pearson(train_samples, train_targets),
            "val_pearson": metric,
        })
        if metric > best["metric"]:
            best = {"params": _copy_params(params), "metric": metric, "epoch": epoch}
            epochs_without_improvement = 0
        else:
            epochs_without_improvement += 1
            if epochs_without_improvement >= train_cfg.patience:
                break

    return TrainResult(
        params=best["params"], model_config=model_cfg, train_config=train_cfg,
        history=history, best_epoch=best["epoch"],
        best_metric=None if best["metric"] == -math.inf else best["metric"],
        best_threshold=None, mode=mode, skipped=skipped,
    )
