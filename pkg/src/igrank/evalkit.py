"""Evaluation: labeling, confusion metrics, ranking AUCs, F-beta threshold
selection, top-K candidate precision, cluster-stratified splitting, reports."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace, asdict

import numpy as np
import torch

from .errors import ConfigError, DataError, ShapeError
from .manifest import SampleRecord
from .objectives import VARIANCE_EPS, neg_pearson
from .rng import substream

DOCKQ_POSITIVE_THRESHOLD = 0.8
FBETA_BETA = 0.25
SPLIT_RATIOS = (0.6, 0.2, 0.2)


@dataclass
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass
class ConfusionResult:
    precision: float
    recall: float
    f1: float
    counts: ConfusionCounts


@dataclass
class PrecisionAtK:
    fractions: dict[int, float | None]
    kept: int
    notes: dict[int, str] = field(default_factory=dict)


@dataclass
class EvalReport:
    precision: float
    recall: float
    f1: float
    auc_roc: float | None
    auc_pr: float | None
    pearson_r: float | None
    threshold: float
    fbeta_at_threshold: float
    precision_at_k: dict[int, float | None]
    counts: ConfusionCounts
    sample_count: int
    flags: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["precision_at_k"] = {str(k): v for k, v in sorted(self.precision_at_k.items())}
        return out


def label_from_dockq(dockq: float) -> int:
    """Binary pose label: 1 iff quality >= 0.8 (inclusive boundary)."""
    if not 0.0 <= dockq <= 1.0:
        raise DataError(f"pose-quality score {dockq} outside [0, 1]")
    return int(dockq >= DOCKQ_POSITIVE_THRESHOLD)


def _check_aligned(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1).astype(np.int64)
    if scores.shape[0] != labels.shape[0]:
        raise ShapeError(f"{scores.shape[0]} scores vs {labels.shape[0]} labels")
    if labels.size and not np.isin(labels, (0, 1)).all():
        raise DataError("labels must be binary")
    return scores, labels


def confusion_metrics(scores, labels, tau: float) -> ConfusionResult:
    """Precision/recall/F1 with predict-positive rule score >= tau."""
    scores, labels = _check_aligned(scores, labels)
    pred = scores >= tau
    pos = labels == 1
    tp = int(np.sum(pred & pos))
    fp = int(np.sum(pred & ~pos))
    fn = int(np.sum(~pred & pos))
    tn = int(np.sum(~pred & ~pos))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return ConfusionResult(precision, recall, f1, ConfusionCounts(tp, fp, tn, fn))


def roc_auc(scores, labels) -> float:
    """Pairwise concordance probability, ties counted half.

    Computed with tied midranks: AUC = (R_pos - n_pos(n_pos+1)/2) / (n_pos n_neg).
    """
    scores, labels = _check_aligned(scores, labels)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DataError("ROC AUC undefined: both classes must be present")
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(labels.size, dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < labels.size:
        j = i
        while j + 1 < labels.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j + 2) / 2.0  # midrank, 1-based
        i = j + 1
    rank_sum_pos = float(ranks[labels == 1].sum())
    return (rank_sum_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def pr_auc(scores, labels) -> float:
    """Average precision over descending-score prefix cuts, ties grouped."""
    scores, labels = _check_aligned(scores, labels)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise DataError("PR AUC undefined: no positive samples")
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_labels = labels[order]
    ap = 0.0
    tp = fp = 0
    prev_recall = 0.0
    i = 0
    while i < labels.size:
        j = i
        while j + 1 < labels.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        tp += int(sorted_labels[i:j + 1].sum())
        fp += int((j - i + 1) - sorted_labels[i:j + 1].sum())
        recall = tp / n_pos
        precision = tp / (tp + fp)
        ap += (recall - prev_recall) * precision
        prev_recall = recall
        i = j + 1
    return ap


def pearson_r(pred, target) -> float:
    """Sample Pearson correlation; errors on constant or too-short input.

    Shares the implementation with the negative-Pearson loss term, negated.
    """
    pred = np.asarray(pred, dtype=np.float64).reshape(-1)
    target = np.asarray(target, dtype=np.float64).reshape(-1)
    if pred.shape[0] != target.shape[0]:
        raise ShapeError(f"length mismatch: {pred.shape[0]} vs {target.shape[0]}")
    if pred.shape[0] < 2:
        raise DataError("Pearson correlation needs at least 2 values")
    if np.var(pred) < VARIANCE_EPS or np.var(target) < VARIANCE_EPS:
        raise DataError("Pearson correlation undefined for constant input")
    return -float(neg_pearson(torch.as_tensor(pred), torch.as_tensor(target)))


def fbeta_score(precision: float, recall: float, beta: float = FBETA_BETA) -> float:
    denom = beta * beta * precision + recall
    if denom == 0.0:
        return 0.0
    return (1.0 + beta * beta) * precision * recall / denom


def select_threshold_fbeta(scores, labels, beta: float = FBETA_BETA) -> tuple[float, float]:
    """Scan unique(scores) plus {0, 1} for the threshold maximizing F-beta.

    Candidates are visited in increasing order and only a strict improvement
    replaces the incumbent, so ties resolve to the smallest threshold.  The
    initial incumbent is (0, 0), which is returned whenever every candidate
    scores zero (e.g. all-negative labels).
    """
    scores, labels = _check_aligned(scores, labels)
    if scores.size == 0:
        raise DataError("cannot select a threshold on empty input")
    candidates = np.unique(np.concatenate([scores, [0.0, 1.0]]))
    best_tau, best_score = 0.0, 0.0
    for tau in candidates:
        cm = confusion_metrics(scores, labels, float(tau))
        score = fbeta_score(cm.precision, cm.recall, beta)
        if score > best_score:
            best_tau, best_score = float(tau), score
    return best_tau, best_score


def precision_at_k(class_probs, reg_scores, labels, tau_filter: float, ks) -> PrecisionAtK:
    """Classifier-filter-then-rank candidate selection precision.

    Samples with class probability >= tau_filter are kept, ranked by
    regression score descending (stable, original order breaking ties), and
    precision is computed over the top min(K, kept) candidates.  K beyond the
    kept count is flagged; an empty kept set yields null fractions.
    """
    class_probs = np.asarray(class_probs, dtype=np.float64).reshape(-1)
    reg_scores = np.asarray(reg_scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1).astype(np.int64)
    if not (class_probs.shape == reg_scores.shape == labels.shape):
        raise ShapeError("class_probs, reg_scores and labels must align")
    ks = [int(k) for k in ks]
    if any(k <= 0 for k in ks):
        raise ConfigError(f"K values must be positive, got {ks}")
    keep = np.flatnonzero(class_probs >= tau_filter)
    result = PrecisionAtK(fractions={}, kept=int(keep.size))
    if keep.size == 0:
        for k in ks:
            result.fractions[k] = None
            result.notes[k] = "empty selection"
        return result
    ranked = keep[np.argsort(-reg_scores[keep], kind="stable")]
    for k in ks:
        k_eff = min(k, ranked.size)
        result.fractions[k] = float(labels[ranked[:k_eff]].mean())
        if k > ranked.size:
            result.notes[k] = f"only {ranked.size} kept"
    return result


def split_by_cluster(records: list[SampleRecord], ratios=SPLIT_RATIOS, seed: int = 0) -> list[SampleRecord]:
    """Assign whole clusters to train/validation/test, greedily balancing counts.

    Clusters are shuffled (seeded) and each is placed on the split with the
    largest remaining record-count deficit, so no cluster ever straddles
    splits and fractions approximate the requested ratios.
    """
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or abs(sum(ratios) - 1.0) > 1e-9 or any(r < 0 for r in ratios):
        raise ConfigError(f"ratios must be 3 nonnegative values summing to 1, got {ratios}")
    for record in records:
        if not record.cluster_id:
            raise DataError(f"record {record.id!r} has no cluster_id")
    cluster_sizes: dict[str, int] = {}
    for record in records:
        cluster_sizes[record.cluster_id] = cluster_sizes.get(record.cluster_id, 0) + 1
    clusters = sorted(cluster_sizes)
    if len(clusters) < 3:
        warnings.warn(f"only {len(clusters)} clusters: split will be degenerate", stacklevel=2)
    rng = substream(seed, "cluster-split")
    rng.shuffle(clusters)
    total = len(records)
    split_names = ("train", "validation", "test")
    filled = {name: 0 for name in split_names}
    assignment: dict[str, str] = {}
    for cluster in clusters:
        deficits = [ratios[i] * total - filled[name] for i, name in enumerate(split_names)]
        chosen = split_names[int(np.argmax(deficits))]
        assignment[cluster] = chosen
        filled[chosen] += cluster_sizes[cluster]
    return [replace(r, split=assignment[r.cluster_id]) for r in records]


def build_report(
    class_probs,
    labels,
    reg_scores=None,
    dockq=None,
    threshold: float | None = None,
    ks=(10, 20, 50, 100),
    fbeta_beta: float = FBETA_BETA,
) -> EvalReport:
    """Assemble the metrics bundle for one prediction set."""
    class_probs, labels = _check_aligned(class_probs, labels)
    flags: dict = {}
    if threshold is None:
        threshold, fbeta_at = select_threshold_fbeta(class_probs, labels, fbeta_beta)
    else:
        cm0 = confusion_metrics(class_probs, labels, threshold)
        fbeta_at = fbeta_score(cm0.precision, cm0.recall, fbeta_beta)
    cm = confusion_metrics(class_probs, labels, threshold)
    try:
        auc = roc_auc(class_probs, labels)
    except DataError as exc:
        auc, flags["auc_roc"] = None, str(exc)
    try:
        ap = pr_auc(class_probs, labels)
    except DataError as exc:
        ap, flags["auc_pr"] = None, str(exc)
    pearson = None
    rank_scores = reg_scores if reg_scores is not None else class_probs
    if dockq is not None:
        try:
            pearson = pearson_r(rank_scores, dockq)
        except DataError as exc:
            flags["pearson_r"] = str(exc)
    p_at_k: dict[int, float | None] = {}
    if reg_scores is not None:
        table = precision_at_k(class_probs, reg_scores, labels, threshold, ks)
        p_at_k = table.fractions
        if table.notes:
            flags["precision_at_k"] = {str(k): v for k, v in table.notes.items()}
    return EvalReport(
        precision=cm.precision,
        recall=cm.recall,
        f1=cm.f1,
        auc_roc=auc,
        auc_pr=ap,
        pearson_r=pearson,
        threshold=float(threshold),
        fbeta_at_threshold=float(fbeta_at),
        precision_at_k=p_at_k,
        counts=cm.counts,
        sample_count=int(labels.size),
        flags=flags,
    )
