"""Ensemble gating algebra, trace recomputation, and classifier training."""

from __future__ import annotations

import math

import numpy as np
import pytest

from tailor.diagnosis import (
    Classifier,
    ClassBalanceError,
    EnsembleModel,
    LesionPrediction,
    fine_tune_expert,
    load_predictions_jsonl,
    oversampled_indices,
    recompute_lesion,
    recompute_trace,
    save_predictions_jsonl,
    train_base,
    train_baseline_real,
)
from tailor.stats import auc_from_arrays
from tailor.world import WorldConfig, build_dataset, build_tail_testset


class StubClassifier:
    """Fixed per-image outputs, keyed by image index (first pixel value)."""

    def __init__(self, logits, members):
        self.logits = np.asarray(logits, dtype=np.float64)
        self.members = np.asarray(members, dtype=np.float64)

    def predict(self, images, batch_size: int = 256):
        idx = images[:, 0, 0, 0].astype(int)
        return self.logits[idx], self.members[idx]


def indexed_images(n):
    imgs = np.zeros((n, 1, 4, 4), dtype=np.float32)
    imgs[:, 0, 0, 0] = np.arange(n)
    return imgs


def make_ensemble(base_logits, expert_spec, thresholds=None, weights=None):
    base = StubClassifier(base_logits, np.zeros_like(base_logits))
    experts = {kind: StubClassifier(logits, members)
               for kind, (logits, members) in expert_spec.items()}
    return EnsembleModel(base, experts, thresholds=thresholds, weights=weights)


class TestGatingAlgebra:
    def test_empty_selection_returns_base(self):
        ens = make_ensemble([0.7], {"ncm": ([5.0], [0.2]), "cal": ([3.0], [0.9])})
        trace = ens.predict_views(indexed_images(1))[0]
        # cal confidence == 0.9 is NOT strictly above the 0.9 threshold
        assert not trace.experts["cal"].selected
        assert not trace.experts["ncm"].selected
        assert trace.y_combined == 0.7

    def test_weighted_sum_example(self):
        # base 0.5, ncm selected with logit -1.0 and weight 2.0 -> -1.5
        ens = make_ensemble([0.5], {"ncm": ([-1.0], [0.95])})
        trace = ens.predict_views(indexed_images(1))[0]
        assert trace.experts["ncm"].selected
        assert trace.y_combined == pytest.approx(-1.5)

    def test_strict_threshold_boundary(self):
        ens = make_ensemble([1.0], {"dcis": ([2.0], [0.9])})
        trace = ens.predict_views(indexed_images(1))[0]
        assert not trace.experts["dcis"].selected
        ens2 = make_ensemble([1.0], {"dcis": ([2.0], [0.9000001])})
        assert ens2.predict_views(indexed_images(1))[0].experts["dcis"].selected

    def test_zero_weights_equal_base_only(self):
        rng = np.random.default_rng(0)
        logits = rng.normal(size=6)
        ens = make_ensemble(logits, {"ncm": (rng.normal(size=6), np.full(6, 0.99))},
                            weights={"ncm": 0.0, "cal": 0.0, "dcis": 0.0})
        pred = ens.predict_lesion(indexed_images(6))
        expected = 1 / (1 + math.exp(-float(np.mean(logits))))
        assert pred.p_hat == pytest.approx(expected, rel=1e-9)

    def test_raising_threshold_shrinks_selection(self):
        rng = np.random.default_rng(1)
        members = rng.random(20)
        ens_low = make_ensemble(np.zeros(20), {"ncm": (np.ones(20), members)},
                                thresholds={"ncm": 0.5, "cal": 0.9, "dcis": 0.9})
        ens_high = make_ensemble(np.zeros(20), {"ncm": (np.ones(20), members)},
                                 thresholds={"ncm": 0.8, "cal": 0.9, "dcis": 0.9})
        low = {i for i, t in enumerate(ens_low.predict_views(indexed_images(20)))
               if t.experts["ncm"].selected}
        high = {i for i, t in enumerate(ens_high.predict_views(indexed_images(20)))
                if t.experts["ncm"].selected}
        assert high <= low


class TestLesionAggregation:
    def test_single_zero_logit_gives_half(self):
        ens = make_ensemble([0.0], {})
        pred = ens.predict_lesion(indexed_images(1))
        assert pred.p_hat == pytest.approx(0.5)

    def test_symmetric_logits_give_half(self):
        ens = make_ensemble([2.5, -2.5], {})
        pred = ens.predict_lesion(indexed_images(2))
        assert pred.p_hat == pytest.approx(0.5)

    def test_three_view_example(self):
        ens = make_ensemble([1.0, 2.0, 3.0], {})
        pred = ens.predict_lesion(indexed_images(3))
        assert pred.p_hat == pytest.approx(1 / (1 + math.exp(-2.0)), abs=1e-9)
        assert pred.p_hat == pytest.approx(0.8808, abs=1e-4)

    def test_view_permutation_invariance(self):
        rng = np.random.default_rng(2)
        logits = rng.normal(size=5)
        ens = make_ensemble(logits, {})
        imgs = indexed_images(5)
        p1 = ens.predict_lesion(imgs).p_hat
        p2 = ens.predict_lesion(imgs[::-1].copy()).p_hat
        assert p1 == pytest.approx(p2, rel=1e-12)

    def test_empty_views_rejected(self):
        ens = make_ensemble([0.0], {})
        with pytest.raises(ValueError):
            ens.predict_lesion(indexed_images(0))


class TestTraceRecomputation:
    def test_traces_rederive_exactly(self):
        rng = np.random.default_rng(3)
        n = 50
        ens = make_ensemble(rng.normal(size=n),
                            {"ncm": (rng.normal(size=n), rng.random(n)),
                             "cal": (rng.normal(size=n), rng.random(n)),
                             "dcis": (rng.normal(size=n), rng.random(n))},
                            thresholds={"ncm": 0.6, "cal": 0.7, "dcis": 0.8})
        traces = ens.predict_views(indexed_images(n))
        for t in traces:
            redone = recompute_trace(t, ens.weights)
            assert abs(redone - t.y_combined) <= 1e-6 * max(1, abs(t.y_combined))

    def test_lesion_rederives_from_views(self):
        rng = np.random.default_rng(4)
        ens = make_ensemble(rng.normal(size=7), {})
        pred = ens.predict_lesion(indexed_images(7), lesion_id="L1")
        assert recompute_lesion(pred) == pytest.approx(pred.p_hat, rel=1e-9)

    def test_jsonl_round_trip(self, tmp_path):
        rng = np.random.default_rng(5)
        ens = make_ensemble(rng.normal(size=4),
                            {"ncm": (rng.normal(size=4), rng.random(4))},
                            thresholds={"ncm": 0.5, "cal": 0.9, "dcis": 0.9})
        preds = [ens.predict_lesion(indexed_images(4), lesion_id="L9")]
        save_predictions_jsonl(preds, tmp_path / "preds.jsonl")
        loaded = load_predictions_jsonl(tmp_path / "preds.jsonl")
        assert loaded[0].lesion_id == "L9"
        assert loaded[0].p_hat == preds[0].p_hat
        assert [t.to_dict() for t in loaded[0].traces] == \
               [t.to_dict() for t in preds[0].traces]
        # unselected experts must not carry a logit on the wire
        for t in loaded[0].traces:
            for read in t.experts.values():
                if not read.selected:
                    assert read.logit is None


@pytest.fixture(scope="module")
def phantom_sets(tmp_path_factory):
    out = tmp_path_factory.mktemp("diagworld")
    cfg = WorldConfig()
    real = build_dataset(cfg, 700, out / "real", rng=31, train_fraction=0.7,
                         split_policy="stratified")
    ncm_tail = build_tail_testset(cfg, "ncm", 60, out / "ncm", rng=32)
    return real, ncm_tail


class TestTraining:
    def test_base_reaches_desk_auc(self, phantom_sets):
        real, _ = phantom_sets
        model, losses = train_base(real.split("train"), epochs=3, seed=0)
        logits, _ = model.predict(real.split("test").load_images())
        assert auc_from_arrays(logits, real.split("test").labels()) >= 0.88
        k = max(1, len(losses) // 10)
        assert np.median(losses[-k:]) < np.median(losses[:k])

    def test_single_class_rejected(self, phantom_sets):
        real, _ = phantom_sets
        benign_only = real.filter(lambda r: r.pathology == "benign")
        with pytest.raises(ClassBalanceError, match="single-class"):
            train_base(benign_only, epochs=1)

    def test_baseline_oversampling_ratio(self):
        labels = np.array([0] * 90 + [1] * 10)
        idx = oversampled_indices(labels, np.random.default_rng(0))
        resampled = labels[idx]
        assert abs(int(resampled.sum()) - int((1 - resampled).sum())) <= 1

    def test_baseline_deterministic(self, phantom_sets):
        real, _ = phantom_sets
        train = real.split("train")
        m1, l1 = train_baseline_real(train, epochs=0.5, seed=9)
        m2, l2 = train_baseline_real(train, epochs=0.5, seed=9)
        assert l1 == l2
        for k, v in m1.named_parameters().items():
            assert np.array_equal(v.data, m2.named_parameters()[k].data)

    def test_expert_requires_membership_negatives(self, phantom_sets):
        _, ncm_tail = phantom_sets
        base = Classifier(seed=1)
        with pytest.raises(ClassBalanceError, match="negatives"):
            fine_tune_expert(base, ncm_tail, "ncm", epochs=1)

    def test_expert_epochs_zero_flagged(self, phantom_sets):
        _, ncm_tail = phantom_sets
        base = Classifier(seed=2)
        expert, losses = fine_tune_expert(base, ncm_tail, "ncm", epochs=0)
        assert losses == [] and expert.membership_trained is False
        for k, v in expert.named_parameters().items():
            assert np.array_equal(v.data, base.named_parameters()[k].data)

    def test_expert_membership_separates(self, phantom_sets):
        """Membership head: high on its tail category, low elsewhere."""
        real, ncm_tail = phantom_sets
        base, _ = train_base(real.split("train"), epochs=2, seed=3)
        # build a mixed training set: tail positives + non-tail negatives
        negatives = real.split("train").filter(lambda r: not r.ncm)
        negatives.rows = negatives.rows[:120]
        mixed_rows = ncm_tail.rows + negatives.rows
        from tailor.manifest import DatasetManifest
        mixed = DatasetManifest(mixed_rows, root=ncm_tail.root)
        # rows come from two roots; patch paths for the negatives
        for row in mixed.rows[len(ncm_tail.rows):]:
            row.path = str((real.root / row.path).resolve())
        expert, _ = fine_tune_expert(base, mixed, "ncm", epochs=16, seed=4, lr=1e-3)
        assert expert.membership_trained
        _, c_tail = expert.predict(ncm_tail.load_images())
        neg_imgs = DatasetManifest(negatives.rows, root=real.root).load_images()
        _, c_neg = expert.predict(neg_imgs)
        assert c_tail.mean() >= 0.70
        assert c_neg.mean() <= 0.35
