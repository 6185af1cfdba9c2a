import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from igrank.errors import ConfigError, DataError
from igrank.evalkit import (
    build_report,
    confusion_metrics,
    fbeta_score,
    label_from_dockq,
    pearson_r,
    pr_auc,
    precision_at_k,
    roc_auc,
    select_threshold_fbeta,
    split_by_cluster,
)
from igrank.manifest import SampleRecord

import oracles


def random_scores_labels(rng, n=None, force_both=False):
    n = n or int(rng.integers(2, 51))
    scores = np.round(rng.random(n), 3)  # rounding provokes ties
    labels = rng.integers(0, 2, size=n)
    if force_both:
        labels[0], labels[-1] = 1, 0
    return scores, labels


class TestLabeling:
    def test_inclusive_boundary(self):
        assert label_from_dockq(0.8) == 1

    def test_below_boundary(self):
        assert label_from_dockq(0.79) == 0

    def test_top(self):
        assert label_from_dockq(1.0) == 1

    def test_out_of_range(self):
        with pytest.raises(DataError):
            label_from_dockq(1.2)


class TestConfusion:
    def test_perfect_separation(self):
        cm = confusion_metrics([0.9, 0.1], [1, 0], 0.5)
        assert (cm.precision, cm.recall, cm.f1) == (1.0, 1.0, 1.0)

    def test_all_predicted_negative(self):
        cm = confusion_metrics([0.1, 0.2], [1, 1], 0.5)
        assert cm.recall == 0.0
        assert cm.f1 == 0.0

    def test_counts_sum(self, rng):
        scores, labels = random_scores_labels(rng, 50)
        cm = confusion_metrics(scores, labels, 0.4)
        assert cm.counts.total == 50

    def test_matches_counting_oracle(self, rng):
        for _ in range(50):
            scores, labels = random_scores_labels(rng)
            tau = float(rng.random())
            cm = confusion_metrics(scores, labels, tau)
            p, r, f1, counts = oracles.counting_confusion(scores, labels, tau)
            assert (cm.precision, cm.recall, cm.f1) == (p, r, f1)
            assert (cm.counts.tp, cm.counts.fp, cm.counts.tn, cm.counts.fn) == (
                counts[0], counts[1], counts[2], counts[3])


class TestRocAuc:
    def test_perfect(self):
        assert roc_auc([0.9, 0.8, 0.1], [1, 1, 0]) == 1.0

    def test_all_tied_is_half(self):
        assert roc_auc([0.5, 0.5, 0.5, 0.5], [1, 0, 1, 0]) == 0.5

    def test_single_class_undefined(self):
        with pytest.raises(DataError):
            roc_auc([0.5, 0.6], [1, 1])

    def test_matches_pairwise_oracle(self, rng):
        for _ in range(200):
            scores, labels = random_scores_labels(rng, force_both=True)
            assert roc_auc(scores, labels) == pytest.approx(
                oracles.pairwise_roc_auc(scores, labels), abs=1e-9)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(min_value=0, max_value=10**6))
    def test_monotone_transform_invariance(self, seed):
        rng = np.random.default_rng(seed)
        scores, labels = random_scores_labels(rng, force_both=True)
        base = roc_auc(scores, labels)
        transformed = np.exp(3.0 * scores) + 1.0  # strictly increasing
        assert roc_auc(transformed, labels) == pytest.approx(base, abs=1e-12)


class TestPrAuc:
    def test_perfect(self):
        assert pr_auc([0.9, 0.8, 0.1], [1, 1, 0]) == 1.0

    def test_single_positive_ranked_last(self):
        for n in (3, 5, 10):
            scores = np.linspace(1.0, 0.1, n)
            labels = np.zeros(n, dtype=int)
            labels[-1] = 1  # lowest score is the only positive
            assert pr_auc(scores, labels) == pytest.approx(1.0 / n, abs=1e-12)

    def test_zero_positives(self):
        with pytest.raises(DataError):
            pr_auc([0.4, 0.5], [0, 0])

    def test_matches_prefix_sweep_oracle(self, rng):
        for _ in range(200):
            scores, labels = random_scores_labels(rng, force_both=True)
            assert pr_auc(scores, labels) == pytest.approx(
                oracles.prefix_sweep_ap(list(scores), list(labels)), abs=1e-9)


class TestPearson:
    def test_identity(self):
        assert pearson_r([0.1, 0.4, 0.9], [0.1, 0.4, 0.9]) == pytest.approx(1.0, abs=1e-12)

    def test_negation(self):
        assert pearson_r([0.1, 0.4, 0.9], [-0.1, -0.4, -0.9]) == pytest.approx(-1.0, abs=1e-12)

    def test_hand_computed(self):
        assert pearson_r([1, 2, 4], [0, 1, 2]) == pytest.approx(0.981981, abs=1e-6)

    def test_constant_undefined(self):
        with pytest.raises(DataError):
            pearson_r([1.0, 1.0], [0.0, 1.0])

    def test_too_short(self):
        with pytest.raises(DataError):
            pearson_r([1.0], [0.5])


class TestThresholdSelection:
    def test_smallest_perfect_threshold(self):
        tau, score = select_threshold_fbeta([0.9, 0.8, 0.1], [1, 1, 0])
        assert (tau, score) == (0.8, 1.0)

    def test_all_negative_returns_initial(self):
        tau, score = select_threshold_fbeta([0.3, 0.6], [0, 0])
        assert (tau, score) == (0.0, 0.0)

    def test_matches_exhaustive_oracle(self, rng):
        for _ in range(200):
            scores, labels = random_scores_labels(rng)
            got = select_threshold_fbeta(scores, labels)
            expected = oracles.exhaustive_fbeta_scan(scores, labels)
            assert got == expected

    def test_global_maximizer(self, rng):
        scores, labels = random_scores_labels(rng, 40, force_both=True)
        tau, best = select_threshold_fbeta(scores, labels)
        for cand in np.concatenate([scores, [0.0, 1.0]]):
            cm = confusion_metrics(scores, labels, float(cand))
            assert fbeta_score(cm.precision, cm.recall) <= best + 1e-15

    def test_empty_rejected(self):
        with pytest.raises(DataError):
            select_threshold_fbeta([], [])


class TestPrecisionAtK:
    def test_all_kept_positive(self):
        out = precision_at_k([0.9, 0.8, 0.7], [0.5, 0.6, 0.4], [1, 1, 1], 0.5, [10, 2])
        assert out.fractions == {10: 1.0, 2: 1.0}
        assert out.notes == {10: "only 3 kept"}

    def test_filter_removes_everything(self):
        out = precision_at_k([0.1, 0.2], [0.5, 0.6], [1, 0], 0.9, [10])
        assert out.fractions == {10: None}
        assert out.kept == 0

    def test_matches_sort_and_count_oracle(self, rng):
        for _ in range(30):
            n = 200
            probs = np.round(rng.random(n), 2)
            regs = np.round(rng.random(n), 2)
            labels = rng.integers(0, 2, size=n)
            tau = float(rng.random())
            ks = [10, 20, 50, 100]
            got = precision_at_k(probs, regs, labels, tau, ks)
            expected = oracles.ranked_precision_at_k(probs, regs, labels, tau, ks)
            assert got.fractions == expected

    def test_rank_scale_invariance(self, rng):
        probs = rng.random(50)
        regs = rng.random(50)
        labels = rng.integers(0, 2, size=50)
        a = precision_at_k(probs, regs, labels, 0.5, [5, 10]).fractions
        b = precision_at_k(probs, regs * 7.3, labels, 0.5, [5, 10]).fractions
        assert a == b

    def test_bad_k(self):
        with pytest.raises(ConfigError):
            precision_at_k([0.5], [0.5], [1], 0.1, [0])


def make_records(cluster_sizes):
    records = []
    idx = 0
    for cluster, size in cluster_sizes.items():
        for _ in range(size):
            records.append(SampleRecord(
                id=f"s{idx}", structure_path="x.pdb", role_map={"H": "heavy", "A": "antigen"},
                cluster_id=cluster))
            idx += 1
    return records


class TestSplit:
    def test_ten_equal_clusters(self):
        records = make_records({f"c{i}": 4 for i in range(10)})
        tagged = split_by_cluster(records, seed=5)
        by_split = {s: {r.cluster_id for r in tagged if r.split == s}
                    for s in ("train", "validation", "test")}
        assert len(by_split["train"]) == 6
        assert len(by_split["validation"]) == 2
        assert len(by_split["test"]) == 2

    def test_giant_cluster_stays_whole(self):
        sizes = {"giant": 90}
        sizes.update({f"c{i}": 1 for i in range(10)})
        tagged = split_by_cluster(make_records(sizes), seed=1)
        giant_splits = {r.split for r in tagged if r.cluster_id == "giant"}
        assert len(giant_splits) == 1

    def test_no_cluster_straddles(self, rng):
        sizes = {f"c{i}": int(rng.integers(1, 12)) for i in range(100)}
        tagged = split_by_cluster(make_records(sizes), seed=3)
        for cluster in sizes:
            assert len({r.split for r in tagged if r.cluster_id == cluster}) == 1

    def test_fractions_near_targets(self, rng):
        sizes = {f"c{i}": int(rng.integers(1, 12)) for i in range(100)}
        tagged = split_by_cluster(make_records(sizes), seed=3)
        total = len(tagged)
        for split, target in (("train", 0.6), ("validation", 0.2), ("test", 0.2)):
            frac = sum(1 for r in tagged if r.split == split) / total
            assert abs(frac - target) <= 0.05

    def test_deterministic(self):
        records = make_records({f"c{i}": 3 for i in range(12)})
        a = [r.split for r in split_by_cluster(records, seed=9)]
        b = [r.split for r in split_by_cluster(records, seed=9)]
        assert a == b

    def test_few_clusters_warn(self):
        with pytest.warns(UserWarning, match="degenerate"):
            split_by_cluster(make_records({"a": 3, "b": 2}), seed=0)

    def test_missing_cluster_id(self):
        record = SampleRecord(id="x", structure_path="x.pdb", role_map={})
        with pytest.raises(DataError, match="cluster_id"):
            split_by_cluster([record], seed=0)

    def test_bad_ratios(self):
        with pytest.raises(ConfigError):
            split_by_cluster(make_records({"a": 1}), ratios=(0.5, 0.5, 0.5), seed=0)


class TestReport:
    def test_full_report(self, rng):
        n = 60
        probs = rng.random(n)
        labels = rng.integers(0, 2, size=n)
        labels[:5], labels[-5:] = 1, 0
        regs = rng.random(n)
        dockq = np.clip(0.6 * regs + 0.2 * rng.random(n), 0, 1)
        report = build_report(probs, labels, reg_scores=regs, dockq=dockq, ks=(5, 10))
        d = report.to_dict()
        assert set(d["precision_at_k"]) == {"5", "10"}
        assert 0 <= d["auc_roc"] <= 1
        assert 0 <= d["auc_pr"] <= 1
        assert -1 <= d["pearson_r"] <= 1
        assert d["counts"]["tp"] + d["counts"]["fp"] + d["counts"]["tn"] + d["counts"]["fn"] == n
        assert d["f1"] == pytest.approx(
            2 * d["precision"] * d["recall"] / (d["precision"] + d["recall"])
            if d["precision"] + d["recall"] else 0.0)

    def test_fixed_threshold_respected(self, rng):
        probs = np.array([0.9, 0.6, 0.2, 0.1])
        labels = np.array([1, 1, 0, 0])
        report = build_report(probs, labels, threshold=0.5)
        assert report.threshold == 0.5
        assert report.f1 == 1.0
