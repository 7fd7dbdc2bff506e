import numpy as np
import pytest

from votestack.core import Dataset, ProbabilityTable, argmax_label
from votestack.errors import (
    ConfigError,
    EmptyInputError,
    IncompleteTableError,
    ModeError,
    StratificationError,
)
from votestack.evalharness import (
    PipelineConfig,
    average_test_probabilities,
    collapse_out_of_fold,
    collect_fold_probabilities,
    compute_confusion,
    compute_metrics,
    make_folds,
    plan_evaluation,
    run_pipeline,
    stratified_split,
)
from votestack.learners import LearnerSpec, TrainConfig
from votestack.stacking import RoutingMode
from votestack.synth import make_blobs, make_complementary_table
from votestack.voting import soft_vote


def dataset_with_counts(counts, seed=0):
    rng = np.random.default_rng(seed)
    ids, labels = [], []
    i = 0
    for cls, count in enumerate(counts):
        for _ in range(count):
            ids.append(f"s{i:05d}")
            labels.append(cls)
            i += 1
    features = rng.normal(size=(len(ids), 2))
    return Dataset(ids, features, labels, len(counts))


class TestStratifiedSplit:
    def test_balanced_exact_allocation(self):
        data = dataset_with_counts([50, 50])
        train, val, test = stratified_split(data, 0.2, 0.0, seed=3)
        test_labels = [data.label_of(sid) for sid in test]
        assert len(test) == 20
        assert test_labels.count(0) == 10 and test_labels.count(1) == 10
        assert len(train) == 80 and len(val) == 0

    def test_class_proportions_on_realistic_shape(self):
        # five classes totalling 4049 samples, 10% test
        counts = [831, 787, 825, 813, 793]
        data = dataset_with_counts(counts, seed=1)
        _, _, test = stratified_split(data, 0.10, 0.0, seed=5)
        assert abs(len(test) - 405) <= 3
        test_labels = [data.label_of(sid) for sid in test]
        for cls, count in enumerate(counts):
            assert abs(test_labels.count(cls) - 0.1 * count) <= 1

    def test_same_seed_identical(self):
        data = dataset_with_counts([30, 30, 30])
        a = stratified_split(data, 0.3, 0.1, seed=9)
        b = stratified_split(data, 0.3, 0.1, seed=9)
        assert a == b

    def test_parts_partition_the_dataset(self):
        data = dataset_with_counts([13, 17, 29])
        train, val, test = stratified_split(data, 0.25, 0.15, seed=2)
        all_ids = sorted(train + val + test)
        assert all_ids == sorted(data.ids)

    def test_degenerate_class_warns(self):
        data = dataset_with_counts([2, 40])
        with pytest.warns(UserWarning, match="class 0"):
            stratified_split(data, 0.1, 0.1, seed=0)

    def test_bad_fractions_rejected(self):
        data = dataset_with_counts([10, 10])
        with pytest.raises(ConfigError):
            stratified_split(data, 0.7, 0.4, seed=0)
        with pytest.raises(ConfigError):
            stratified_split(data, -0.1, 0.0, seed=0)


class TestMakeFolds:
    def test_even_split(self):
        data = dataset_with_counts([5, 5])
        plan = make_folds(data, data.ids, k=5, seed=1, val_fraction=0.0)
        sizes = [len(f.heldout_ids) for f in plan.folds]
        assert sizes == [2, 2, 2, 2, 2]

    def test_remainder_distribution(self):
        data = dataset_with_counts([6, 5])
        plan = make_folds(data, data.ids, k=5, seed=4, stratified=False, val_fraction=0.0)
        sizes = sorted((len(f.heldout_ids) for f in plan.folds), reverse=True)
        assert sizes == [3, 2, 2, 2, 2]

    def test_partition_law(self):
        data = dataset_with_counts([20, 14, 9])
        plan = make_folds(data, data.ids, k=3, seed=7)
        heldout = [set(f.heldout_ids) for f in plan.folds]
        union = set().union(*heldout)
        assert union == set(data.ids)
        for a in range(3):
            for b in range(a + 1, 3):
                assert not heldout[a] & heldout[b]

    def test_stratified_per_class_counts_within_one(self):
        data = dataset_with_counts([23, 31, 8])
        plan = make_folds(data, data.ids, k=4, seed=3, val_fraction=0.0)
        for cls in range(3):
            per_fold = [
                sum(1 for sid in f.heldout_ids if data.label_of(sid) == cls)
                for f in plan.folds
            ]
            assert max(per_fold) - min(per_fold) <= 1

    def test_train_val_heldout_partition_pool(self):
        data = dataset_with_counts([30, 30])
        plan = make_folds(data, data.ids, k=3, seed=11, val_fraction=0.1)
        pool = set(data.ids)
        for fold in plan.folds:
            parts = [set(fold.train_ids), set(fold.val_ids), set(fold.heldout_ids)]
            assert set().union(*parts) == pool
            assert sum(len(p) for p in parts) == len(pool)

    def test_class_smaller_than_k_rejected(self):
        data = dataset_with_counts([3, 30])
        with pytest.raises(StratificationError):
            make_folds(data, data.ids, k=5, seed=0)

    def test_k_below_two_rejected(self):
        data = dataset_with_counts([10, 10])
        with pytest.raises(ConfigError):
            make_folds(data, data.ids, k=1, seed=0)

    def test_acceptance_style_sweep(self):
        rng = np.random.default_rng(42)
        for case in range(20):
            c = int(rng.integers(2, 6))
            k = int(rng.integers(2, 6))
            counts = [int(rng.integers(k, 3 * k + 5)) for _ in range(c)]
            data = dataset_with_counts(counts, seed=case)
            plan = make_folds(data, data.ids, k=k, seed=case, val_fraction=0.0)
            heldout = [set(f.heldout_ids) for f in plan.folds]
            assert set().union(*heldout) == set(data.ids)
            assert sum(len(h) for h in heldout) == len(data)
            for cls in range(c):
                per_fold = [
                    sum(1 for sid in h if data.label_of(sid) == cls) for h in heldout
                ]
                assert max(per_fold) - min(per_fold) <= 1, f"case {case} class {cls}"


class TestCollectFoldProbabilities:
    def test_out_of_fold_discipline_with_memorizing_learner(self):
        # 1-NN memorizes its training set, so the expected out-of-fold vector
        # is the one-hot label of the nearest sample in that fold's train side,
        # computable here by brute force.
        data = dataset_with_counts([4, 4], seed=5)
        plan = make_folds(data, data.ids, k=2, seed=2, val_fraction=0.0)
        spec = LearnerSpec("knn", k_neighbors=1)
        table = collect_fold_probabilities(plan, [spec], data)

        for j, fold in enumerate(plan.folds):
            train_feats = np.array([data.features_of(sid) for sid in fold.train_ids])
            train_ids = list(fold.train_ids)
            for sid in fold.heldout_ids:
                x = data.features_of(sid)
                dists = np.sqrt(((train_feats - x) ** 2).sum(axis=1))
                order = sorted(range(len(train_ids)), key=lambda i: (dists[i], train_ids[i]))
                expected = np.zeros(2)
                expected[data.label_of(train_ids[order[0]])] = 1.0
                assert np.array_equal(table.get(sid, 0, j), expected)

    def test_one_vector_per_pool_sample(self):
        data = dataset_with_counts([4, 4], seed=5)
        plan = make_folds(data, data.ids, k=2, seed=2, val_fraction=0.0)
        table = collect_fold_probabilities(plan, [LearnerSpec("knn", k_neighbors=1)], data)
        for sid in data.ids:
            assert len(table.folds_for(sid, 0)) == 1

    def test_k_vectors_per_test_sample(self):
        data = dataset_with_counts([12, 12], seed=6)
        plan = plan_evaluation(data, 0.25, 5, seed=3)
        table = collect_fold_probabilities(plan, [LearnerSpec("gnb")], data)
        for sid in plan.test_ids:
            assert table.folds_for(sid, 0) == [0, 1, 2, 3, 4]

    def test_deterministic_across_reruns(self):
        data = make_blobs(40, 2, 2, seed=9)
        plan = plan_evaluation(data, 0.2, 2, seed=9)
        specs = [
            LearnerSpec(
                "softmax",
                train_config=TrainConfig(learning_rate=0.05, max_epochs=8, seed=1),
            )
        ]
        t1 = collect_fold_probabilities(plan, specs, data)
        t2 = collect_fold_probabilities(plan, specs, data)
        assert t1 == t2

    def test_parallel_equals_sequential(self):
        data = make_blobs(40, 2, 2, seed=9)
        plan = plan_evaluation(data, 0.2, 2, seed=9)
        specs = [LearnerSpec("gnb"), LearnerSpec("knn", k_neighbors=3)]
        assert collect_fold_probabilities(plan, specs, data, jobs=1) == (
            collect_fold_probabilities(plan, specs, data, jobs=4)
        )


class TestAverageTestProbabilities:
    def fold_table(self, per_fold_vectors, c=2):
        k = len(per_fold_vectors)
        table = ProbabilityTable(1, k, c)
        for j, vec in enumerate(per_fold_vectors):
            table.put("x", 0, j, vec)
        return table

    def test_identical_vectors_idempotent(self):
        table = self.fold_table([[0.25, 0.75]] * 4)
        out = average_test_probabilities(table, ["x"])
        assert np.array_equal(out.get("x", 0), [0.25, 0.75])

    def test_hand_mean(self):
        table = self.fold_table([[1.0, 0.0], [0.0, 1.0]])
        out = average_test_probabilities(table, ["x"])
        assert np.array_equal(out.get("x", 0), [0.5, 0.5])

    def test_matches_entrywise_mean_to_1e12(self):
        rng = np.random.default_rng(13)
        vecs = [rng.dirichlet(np.ones(4)) for _ in range(5)]
        table = self.fold_table(vecs, c=4)
        out = average_test_probabilities(table, ["x"])
        expected = np.stack(vecs).mean(axis=0)
        assert np.abs(out.get("x", 0) - expected).max() <= 1e-12
        assert abs(out.get("x", 0).sum() - 1.0) <= 1e-9

    def test_missing_fold_rejected(self):
        table = ProbabilityTable(1, 3, 2)
        table.put("x", 0, 0, [1.0, 0.0])
        table.put("x", 0, 2, [1.0, 0.0])
        with pytest.raises(IncompleteTableError):
            average_test_probabilities(table, ["x"])

    def test_average_then_vote_equals_vote_then_average(self):
        rng = np.random.default_rng(14)
        k, T, c = 5, 3, 4
        table = ProbabilityTable(T, k, c)
        for t in range(T):
            for j in range(k):
                table.put("x", t, j, rng.dirichlet(np.ones(c)))
        averaged = average_test_probabilities(table, ["x"])
        path_a = soft_vote(averaged.per_learner("x")).averaged
        fold_votes = [
            soft_vote([table.get("x", t, j) for t in range(T)]).averaged for j in range(k)
        ]
        path_b = np.stack(fold_votes).mean(axis=0)
        assert np.abs(path_a - path_b).max() <= 1e-12


class TestMetrics:
    def test_perfect_predictions(self):
        cm = np.diag([5, 3, 2])
        report = compute_metrics(cm)
        assert report.accuracy == 1.0
        assert all(m.f1 == 1.0 for m in report.per_class)

    def test_binary_hand_counts(self):
        # TP=3 TN=5 FP=1 FN=1 with class 1 as positive
        cm = np.array([[5, 1], [1, 3]])
        report = compute_metrics(cm)
        assert report.accuracy == pytest.approx(0.8)
        positive = report.per_class[1]
        assert positive.precision == pytest.approx(0.75)
        assert positive.recall == pytest.approx(0.75)
        assert positive.f1 == pytest.approx(0.75)

    def test_all_zero_predictions(self):
        preds = {f"s{i}": 0 for i in range(10)}
        labels = {f"s{i}": i % 2 for i in range(10)}
        cm = compute_confusion(preds, labels, 2)
        report = compute_metrics(cm)
        assert report.accuracy == pytest.approx(0.5)
        assert report.per_class[1].recall == 0.0
        assert any("class 1" in w for w in report.warnings)

    def test_accuracy_equals_trace_over_total(self):
        rng = np.random.default_rng(15)
        for _ in range(20):
            c = int(rng.integers(2, 6))
            cm = rng.integers(0, 9, size=(c, c))
            cm[0, 0] += 1  # nonempty
            report = compute_metrics(cm)
            assert report.accuracy == pytest.approx(np.trace(cm) / cm.sum())

    def test_empty_rejected(self):
        with pytest.raises(EmptyInputError):
            compute_metrics(np.zeros((2, 2), dtype=int))
        with pytest.raises(EmptyInputError):
            compute_confusion({}, {}, 2)

    def test_micro_and_weighted_averages(self):
        cm = np.array([[8, 2], [3, 7]])
        micro = compute_metrics(cm, average="micro")
        assert micro.precision == pytest.approx(micro.accuracy)
        weighted = compute_metrics(cm, average="weighted")
        per = weighted.per_class
        expected = (10 * per[0].precision + 10 * per[1].precision) / 20
        assert weighted.precision == pytest.approx(expected)


class TestFoldSummary:
    def test_std_uses_population_divisor(self):
        from votestack.evalharness import _fold_summary

        out = _fold_summary({"accuracy": [0.0, 1.0]})
        assert out["accuracy"]["mean"] == pytest.approx(0.5)
        # divisor k (population), not k-1
        assert out["accuracy"]["std"] == pytest.approx(0.5)


def strong_meta():
    return LearnerSpec(
        "softmax",
        name="softmax_meta",
        train_config=TrainConfig(learning_rate=0.02, max_epochs=150, weight_decay=0.0),
    )


class TestRunPipeline:
    def engineered(self, seed=21, n=240):
        data = make_blobs(n, 3, 2, seed=seed)
        plan = plan_evaluation(data, 0.2, 5, seed)
        table, labels = make_complementary_table(data, plan, seed=seed + 1)
        return table, labels

    def test_ensemble_beats_every_base_learner(self):
        table, labels = self.engineered()
        config = PipelineConfig(seed=21, meta=strong_meta())
        report = run_pipeline(config, table=table, labels=labels)
        base_accs = [b["fold_averaged"]["accuracy"] for b in report["base_learners"]]
        for mode in ("label", "disagreement"):
            assert report["ensemble"][mode]["accuracy"] >= max(base_accs)

    def test_ablation_grid_has_five_rows(self):
        table, labels = self.engineered()
        config = PipelineConfig(seed=21, meta=strong_meta(), ablate=True)
        report = run_pipeline(config, table=table, labels=labels)
        grid = report["ablation"]
        assert len(grid) == 5
        shapes = [(r["base_learner_count"], r["voting"], r["meta"]) for r in grid]
        assert shapes == [
            (1, True, True),
            (2, True, True),
            (3, True, False),
            (3, False, True),
            (3, True, True),
        ]

    def test_rerun_identical_modulo_timing(self):
        table, labels = self.engineered(seed=5, n=120)
        config = PipelineConfig(seed=5, k=5, meta=strong_meta())
        r1 = run_pipeline(config, table=table, labels=labels)
        r2 = run_pipeline(config, table=table, labels=labels)
        r1.pop("timing"), r2.pop("timing")
        assert r1 == r2

    def test_feature_dataset_path(self):
        data = make_blobs(90, 3, 2, seed=31)
        config = PipelineConfig(seed=31, k=3, test_fraction=0.2)
        report = run_pipeline(config, dataset=data)
        assert report["dataset"]["test_size"] == 18
        assert set(report["ensemble"]) == {"label", "disagreement"}
        assert report["meta"]["source_size"] == 72

    def test_meta_comparison_rows(self):
        table, labels = self.engineered(seed=11, n=150)
        config = PipelineConfig(seed=11, meta=strong_meta(), compare_metas=True)
        report = run_pipeline(config, table=table, labels=labels)
        names = [r["meta_learner"] for r in report["meta_comparison"]]
        assert names == ["softmax_lr", "knn5", "gaussian_nb"]

    def test_three_level_pipeline(self):
        table, labels = self.engineered(seed=13, n=150)
        config = PipelineConfig(seed=13, meta=strong_meta(), levels=3)
        report = run_pipeline(config, table=table, labels=labels)
        assert report["multilevel"]["level2"] == ["softmax_lr", "knn5", "gaussian_nb"]
        assert report["ensemble"]["label"]["accuracy"] >= report["voting"]["accuracy"]

    def test_label_mode_without_test_labels_raises_mode_error(self):
        table, labels = self.engineered(seed=7, n=120)
        pool = {sid for sid in labels if len(table.folds_for(sid, 0)) == 1}
        unlabeled = {sid: (labels[sid] if sid in pool else None) for sid in labels}
        config = PipelineConfig(seed=7, meta=strong_meta(), modes=(RoutingMode.LABEL,))
        with pytest.raises(ModeError):
            run_pipeline(config, table=table, labels=unlabeled)

    def test_disagreement_mode_works_without_test_labels(self):
        table, labels = self.engineered(seed=7, n=120)
        pool = {sid for sid in labels if len(table.folds_for(sid, 0)) == 1}
        unlabeled = {sid: (labels[sid] if sid in pool else None) for sid in labels}
        config = PipelineConfig(seed=7, meta=strong_meta(), modes=(RoutingMode.DISAGREEMENT,))
        report = run_pipeline(config, table=table, labels=unlabeled)
        assert "voting" not in report  # no labeled test samples to score
        preds = report["predictions"]["disagreement"]
        assert len(preds) == len(labels) - len(pool)

    def test_all_votes_correct_falls_back_to_voting(self):
        data = make_blobs(90, 3, 2, seed=31)
        config = PipelineConfig(seed=31, k=3)
        report = run_pipeline(config, dataset=data)
        assert report["meta"]["skipped"] is True
        assert report["ensemble"]["label"]["accuracy"] == report["voting"]["accuracy"]
