"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line and enforcing its stated tolerance and runtime budget."""

import json
import math
import time

import numpy as np
import pytest

from votestack.cli import main
from votestack.core import Dataset, ProbabilityTable, SINGLE_FOLD, argmax_label
from votestack.evalharness import (
    PipelineConfig,
    average_test_probabilities,
    compute_metrics,
    make_folds,
    plan_evaluation,
    run_pipeline,
)
from votestack.learners import (
    ADAM_BETA1,
    ADAM_BETA2,
    ADAM_EPS,
    LearnerSpec,
    OptimizerState,
    SoftmaxModel,
    TrainConfig,
    adamw_step,
    cross_entropy_loss,
    loss_gradient,
)
from votestack.stacking import build_meta_training_set, general_stacking
from votestack.synth import make_blobs, make_complementary_table
from votestack.voting import vote_table


def report_line(name: str, passed: bool, detail: str = "") -> None:
    status = "PASS" if passed else "FAIL"
    suffix = f" ({detail})" if detail else ""
    print(f"ACCEPTANCE {name}: {status}{suffix}")


def test_gradient_matches_finite_differences():
    started = time.monotonic()
    rng = np.random.default_rng(2024)
    h = 1e-5
    worst = 0.0
    for _ in range(10):
        c = int(rng.integers(2, 6))
        d = int(rng.integers(3, 11))
        n = int(rng.integers(4, 16))
        model = SoftmaxModel(rng.normal(0.0, 1.0, size=(c, d + 1)), c, d)
        labels = rng.integers(0, c, size=n)
        labels[:2] = [0, 1]
        batch = Dataset(
            [f"g{i}" for i in range(n)], rng.normal(size=(n, d)), labels, c
        )
        analytic = loss_gradient(model, batch)
        numeric = np.zeros_like(analytic)
        for i in range(c):
            for j in range(d + 1):
                up = np.array(model.weights)
                down = np.array(model.weights)
                up[i, j] += h
                down[i, j] -= h
                numeric[i, j] = (
                    cross_entropy_loss(SoftmaxModel(up, c, d), batch)
                    - cross_entropy_loss(SoftmaxModel(down, c, d), batch)
                ) / (2.0 * h)
        rel = np.abs(analytic - numeric).max() / max(np.abs(numeric).max(), 1e-12)
        worst = max(worst, rel)
    elapsed = time.monotonic() - started
    ok = worst < 1e-5 and elapsed < 5.0
    report_line("gradient-oracle", ok, f"max rel err {worst:.2e}, {elapsed:.2f}s")
    assert worst < 1e-5
    assert elapsed < 5.0


def brute_force_stacking(train, base_specs, meta_spec, probe_features):
    """Literal recomposition of plain stacking, independent of the engine's
    general_stacking: fit bases on the whole set, build the unfiltered
    concatenated table, fit the meta on it, compose the decision."""
    fitted = [spec.fit(train, train) for spec in base_specs]
    rows = [
        np.concatenate([m.predict_proba(train.features[i]) for m in fitted])
        for i in range(len(train))
    ]
    meta_ds = Dataset(train.ids, np.array(rows), train.labels, train.class_count)
    meta_model = meta_spec.fit(meta_ds, meta_ds)
    return [
        argmax_label(
            meta_model.predict_proba(np.concatenate([m.predict_proba(x) for m in fitted]))
        )
        for x in probe_features
    ]


def test_general_stacking_equals_bruteforce_oracle():
    started = time.monotonic()
    mismatches = 0
    for seed in range(50):
        rng = np.random.default_rng(seed)
        m = int(rng.integers(6, 31))
        c = int(rng.integers(2, 4))
        T = int(rng.integers(1, 4))
        data = make_blobs(m, c, 2, seed=1000 + seed, center_scale=4.0, spread=1.2)
        pool = [
            LearnerSpec(
                "softmax",
                train_config=TrainConfig(
                    learning_rate=0.05, batch_size=8, max_epochs=8, seed=seed
                ),
            ),
            LearnerSpec("knn", k_neighbors=min(3, m)),
            LearnerSpec("gnb"),
        ]
        base_specs = pool[:T]
        meta_spec = pool[(seed % 3)]
        model = general_stacking(data, base_specs, meta_spec)
        mine = [model.predict(data.features[i]) for i in range(len(data))]
        oracle = brute_force_stacking(data, base_specs, meta_spec, data.features)
        if mine != oracle:
            mismatches += 1
    elapsed = time.monotonic() - started
    ok = mismatches == 0 and elapsed < 30.0
    report_line("stacking-oracle", ok, f"{mismatches} mismatches over 50 runs, {elapsed:.2f}s")
    assert mismatches == 0
    assert elapsed < 30.0


def test_filtering_soundness():
    discrepancies = 0
    for seed in range(100):
        rng = np.random.default_rng(10_000 + seed)
        n = int(rng.integers(2, 30))
        T = int(rng.integers(1, 5))
        c = int(rng.integers(2, 6))
        table = ProbabilityTable(T, 0, c)
        labels = {}
        for i in range(n):
            sid = f"s{i:03d}"
            labels[sid] = int(rng.integers(0, c))
            for t in range(T):
                table.put(sid, t, SINGLE_FOLD, rng.dirichlet(np.ones(c)))
        votes = vote_table(table, labels)
        meta = build_meta_training_set(table, labels, votes, filtered=True)
        kept = {s.source_id for s in meta.meta_samples}
        for sid, label in labels.items():
            averaged = np.stack(table.per_learner(sid)).mean(axis=0)
            should_keep = argmax_label(averaged) != label
            if (sid in kept) != should_keep:
                discrepancies += 1
        if meta.provenance.retained != len(kept) or meta.provenance.source_size != n:
            discrepancies += 1
    report_line("filtering-soundness", discrepancies == 0, f"{discrepancies} discrepancies")
    assert discrepancies == 0


def test_fold_plan_invariants():
    violations = 0
    rng = np.random.default_rng(77)
    for case in range(20):
        c = int(rng.integers(2, 6))
        k = int(rng.integers(2, 7))
        counts = [int(rng.integers(k, 4 * k + 3)) for _ in range(c)]
        ids, labels = [], []
        i = 0
        for cls, count in enumerate(counts):
            for _ in range(count):
                ids.append(f"p{i:04d}")
                labels.append(cls)
                i += 1
        data = Dataset(ids, rng.normal(size=(len(ids), 2)), labels, c)
        plan = make_folds(data, data.ids, k=k, seed=case, val_fraction=0.0)
        heldout = [set(f.heldout_ids) for f in plan.folds]
        if set().union(*heldout) != set(ids):
            violations += 1
        if sum(len(h) for h in heldout) != len(ids):
            violations += 1
        for cls in range(c):
            per_fold = [sum(1 for sid in h if data.label_of(sid) == cls) for h in heldout]
            if max(per_fold) - min(per_fold) > 1:
                violations += 1
    report_line("fold-plan-invariants", violations == 0, f"{violations} violations")
    assert violations == 0


def test_fold_average_matches_entrywise_mean():
    rng = np.random.default_rng(314)
    worst_mean = 0.0
    worst_sum = 0.0
    for _ in range(25):
        k = int(rng.integers(2, 7))
        T = int(rng.integers(1, 4))
        c = int(rng.integers(2, 6))
        table = ProbabilityTable(T, k, c)
        for t in range(T):
            for j in range(k):
                table.put("x", t, j, rng.dirichlet(np.ones(c)))
        out = average_test_probabilities(table, ["x"])
        for t in range(T):
            expected = np.stack([table.get("x", t, j) for j in range(k)]).mean(axis=0)
            got = out.get("x", t)
            worst_mean = max(worst_mean, np.abs(got - expected).max())
            worst_sum = max(worst_sum, abs(got.sum() - 1.0))
    ok = worst_mean <= 1e-12 and worst_sum <= 1e-9
    report_line(
        "fold-averaging", ok, f"mean dev {worst_mean:.2e}, simplex dev {worst_sum:.2e}"
    )
    assert worst_mean <= 1e-12
    assert worst_sum <= 1e-9


def test_metrics_formulas():
    # binary hand case: TP=3 TN=5 FP=1 FN=1, class 1 positive
    cm = np.array([[5, 1], [1, 3]])
    rep = compute_metrics(cm)
    positive = rep.per_class[1]
    binary_ok = (
        rep.accuracy == pytest.approx(0.8)
        and positive.precision == pytest.approx(0.75)
        and positive.recall == pytest.approx(0.75)
        and positive.f1 == pytest.approx(0.75)
    )

    trace_ok = True
    rng = np.random.default_rng(99)
    for _ in range(25):
        c = int(rng.integers(2, 7))
        rand_cm = rng.integers(0, 12, size=(c, c))
        rand_cm[0, 0] += 1
        rep = compute_metrics(rand_cm)
        if rep.accuracy != pytest.approx(np.trace(rand_cm) / rand_cm.sum()):
            trace_ok = False
    ok = binary_ok and trace_ok
    report_line("metrics-formulas", ok)
    assert binary_ok
    assert trace_ok


def test_adamw_reference_behavior():
    # decay 0: equals the textbook Adam update on scalars within 1e-12
    config = TrainConfig(learning_rate=0.02, weight_decay=0.0)
    rng = np.random.default_rng(5)
    param = np.array([[0.8]])
    state = OptimizerState.initial(param.shape, config.learning_rate)
    ref_p, ref_m, ref_v = 0.8, 0.0, 0.0
    adam_ok = True
    for t in range(1, 12):
        g = float(rng.normal())
        param, state = adamw_step(state, param, np.array([[g]]), config)
        ref_m = ADAM_BETA1 * ref_m + (1 - ADAM_BETA1) * g
        ref_v = ADAM_BETA2 * ref_v + (1 - ADAM_BETA2) * g * g
        m_hat = ref_m / (1 - ADAM_BETA1**t)
        v_hat = ref_v / (1 - ADAM_BETA2**t)
        ref_p = ref_p - 0.02 * m_hat / (math.sqrt(v_hat) + ADAM_EPS)
        if abs(param[0, 0] - ref_p) >= 1e-12:
            adam_ok = False

    # zero gradient with decay: exact multiplicative shrink
    decay_config = TrainConfig(learning_rate=0.07, weight_decay=0.3)
    params = np.array([[1.7, -0.4], [2.2, 0.9]])
    state = OptimizerState.initial(params.shape, decay_config.learning_rate)
    shrunk, _ = adamw_step(state, params, np.zeros_like(params), decay_config)
    decay_ok = np.array_equal(shrunk, params * (1.0 - 0.07 * 0.3))

    ok = adam_ok and decay_ok
    report_line("adamw-update", ok)
    assert adam_ok
    assert decay_ok


def _acceptance_meta():
    return LearnerSpec(
        "softmax",
        name="softmax_meta",
        train_config=TrainConfig(learning_rate=0.02, max_epochs=150, weight_decay=0.0),
    )


def test_constructed_ensemble_benefit():
    started = time.monotonic()
    seed = 2718
    data = make_blobs(300, 3, 2, seed=seed)
    plan = plan_evaluation(data, 0.2, 5, seed)
    table, labels = make_complementary_table(
        data, plan, learner_count=3, error_fraction=0.2, seed=seed + 1
    )
    config = PipelineConfig(seed=seed, k=5, meta=_acceptance_meta(), ablate=True)
    report = run_pipeline(config, table=table, labels=labels)

    base_accs = [b["fold_averaged"]["accuracy"] for b in report["base_learners"]]
    label_acc = report["ensemble"]["label"]["accuracy"]
    dis_acc = report["ensemble"]["disagreement"]["accuracy"]
    beats_bases = label_acc >= max(base_accs) and dis_acc >= max(base_accs)
    absolute = label_acc >= 0.90 and dis_acc >= 0.90

    grid = report["ablation"]
    voting_only = grid[2]["accuracy"]["voting"]
    full_row = grid[4]["accuracy"]
    grid_ok = all(full_row[mode] >= voting_only for mode in ("label", "disagreement"))

    elapsed = time.monotonic() - started
    ok = beats_bases and absolute and grid_ok and elapsed < 60.0
    report_line(
        "ensemble-benefit",
        ok,
        f"label {label_acc:.3f}, disagreement {dis_acc:.3f}, "
        f"max base {max(base_accs):.3f}, voting-only {voting_only:.3f}, {elapsed:.1f}s",
    )
    assert beats_bases
    assert absolute
    assert grid_ok
    assert elapsed < 60.0


def test_cmd_run_deterministic(tmp_path):
    demo = tmp_path / "demo"
    assert main(["synth", "--out", str(demo), "--table", "--n", "180", "--seed", "42"]) == 0
    config_path = tmp_path / "config.json"
    config_path.write_text(
        json.dumps(
            {
                "meta_learner": "softmax",
                "train": {"learning_rate": 0.02, "max_epochs": 120, "weight_decay": 0.0},
            }
        ),
        encoding="utf-8",
    )
    dumps = []
    for name in ("a", "b"):
        out = tmp_path / name
        code = main(
            [
                "run",
                "--table", str(demo / "table.csv"),
                "--config", str(config_path),
                "--seed", "42",
                "--out", str(out),
            ]
        )
        assert code == 0
        text = (out / "report.json").read_text(encoding="utf-8")
        payload = json.loads(text)
        payload.pop("timing")
        payload.pop("generated_at")
        dumps.append(json.dumps(payload, sort_keys=True, indent=2))
    ok = dumps[0] == dumps[1]
    report_line("cli-determinism", ok)
    assert ok
