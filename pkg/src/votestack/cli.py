"""Command-line front end.

Subcommands: synth, split, run, vote, stack, eval, ablate. Every command is
deterministic given its config and seed; exit code 0 on success, 2 on config
errors, 1 on runtime errors. Diagnostics on stderr carry the failing stage.
"""

from __future__ import annotations

import argparse
import datetime
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import io as vio
from .core import Dataset, ProbabilityTable, argmax_label
from .errors import ConfigError, ModeError, VotestackError
from .evalharness import (
    PipelineConfig,
    average_test_probabilities,
    collapse_out_of_fold,
    compute_confusion,
    compute_metrics,
    plan_evaluation,
    run_pipeline,
)
from .learners import LearnerSpec, SchedulerConfig, TrainConfig, child_seed, default_learners
from .stacking import (
    RoutingMode,
    build_meta_features,
    build_meta_training_set,
    split_meta,
    train_meta,
)
from .synth import make_blobs, make_complementary_table
from .voting import vote_table

MODE_CHOICES = ("label", "disagreement", "both")


def _stage_error(stage: str, message: str) -> None:
    print(f"{stage}: {message}", file=sys.stderr)


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file {path!r} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from None


def _setting(args, config: dict, key: str, default):
    value = getattr(args, key, None)
    if value is not None:
        return value
    if key in config:
        return config[key]
    return default


def _train_config(config: dict) -> TrainConfig:
    section = config.get("train", {})
    sched = section.get("scheduler", {})
    return TrainConfig(
        learning_rate=section.get("learning_rate", 1e-4),
        batch_size=section.get("batch_size", 16),
        max_epochs=section.get("max_epochs", 60),
        weight_decay=section.get("weight_decay", 0.01),
        scheduler=SchedulerConfig(
            plateau_patience=sched.get("plateau_patience", 5),
            plateau_factor=sched.get("plateau_factor", 0.1),
            min_lr=sched.get("min_lr", 1e-7),
            rel_threshold=sched.get("rel_threshold", 1e-4),
        ),
    )


def _learner_from_name(name: str, train_config: TrainConfig) -> LearnerSpec:
    if name in ("softmax", "softmax_lr", "lr"):
        return LearnerSpec("softmax", name="softmax_lr", train_config=train_config)
    if name.startswith("knn"):
        k = int(name[3:]) if len(name) > 3 else 5
        return LearnerSpec("knn", name=name, k_neighbors=k)
    if name in ("gnb", "gaussian_nb"):
        return LearnerSpec("gnb", name="gaussian_nb")
    raise ConfigError(f"unknown learner {name!r}")


def _modes(mode_text: str) -> tuple[RoutingMode, ...]:
    if mode_text == "both":
        return (RoutingMode.LABEL, RoutingMode.DISAGREEMENT)
    if mode_text == "label":
        return (RoutingMode.LABEL,)
    if mode_text == "disagreement":
        return (RoutingMode.DISAGREEMENT,)
    raise ConfigError(f"unknown mode {mode_text!r}")


def _pipeline_config(args, config: dict) -> PipelineConfig:
    train_config = _train_config(config)
    roster_names = config.get("learners")
    if roster_names:
        learners = tuple(_learner_from_name(n, train_config) for n in roster_names)
    else:
        learners = tuple(default_learners(train_config))
    meta_name = config.get("meta_learner", "softmax")
    return PipelineConfig(
        test_fraction=float(_setting(args, config, "test_fraction", 0.2)),
        k=int(_setting(args, config, "k", 5)),
        seed=int(_setting(args, config, "seed", 0)),
        stratified=bool(config.get("stratified", True)),
        fold_val_fraction=float(config.get("fold_val_fraction", 0.10)),
        meta_val_fraction=float(config.get("meta_val_fraction", 0.20)),
        learners=learners,
        meta=_learner_from_name(meta_name, train_config),
        modes=_modes(_setting(args, config, "mode", "both")),
        levels=int(_setting(args, config, "levels", 2)),
        compare_metas=bool(_setting(args, config, "compare_metas", False)),
        average=config.get("average", "macro"),
        jobs=int(_setting(args, config, "jobs", 0) or _default_jobs()),
    )


def _default_jobs() -> int:
    return max(1, min(15, os.cpu_count() or 1))


def _load_level1(args, stage: str) -> tuple[Dataset | None, ProbabilityTable | None, dict | None]:
    """Exactly one of (--manifest/--features, --table) supplies level-1 input."""
    has_features = args.features is not None or args.manifest is not None
    has_table = bool(getattr(args, "table", None))
    if has_features == has_table:
        raise ConfigError(
            "supply exactly one level-1 input: --manifest with --features, or --table"
        )
    if has_features:
        if args.features is None or args.manifest is None:
            raise ConfigError("--manifest and --features must be given together")
        return vio.read_dataset(args.manifest, args.features), None, None
    parts = [vio.read_probability_table(p) for p in args.table]
    table, labels = vio.merge_probability_tables(parts) if len(parts) > 1 else parts[0]
    return None, table, labels


def _finish_report(report: dict, out_dir: Path, name: str = "report.json") -> Path:
    report["generated_at"] = datetime.datetime.now(datetime.timezone.utc).isoformat()
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / name
    vio.write_report(report, path)
    return path


def cmd_synth(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    data = make_blobs(args.n, args.classes, args.dim, args.seed)
    vio.write_dataset(data, out / "manifest.json", out / "features.csv", name="synthetic-blobs")
    print(f"wrote {out / 'manifest.json'} and {out / 'features.csv'}")
    if args.table:
        plan = plan_evaluation(data, args.test_frac, args.k, args.seed)
        vio.write_fold_plan(plan, out / "plan.json")
        table, labels = make_complementary_table(
            data,
            plan,
            learner_count=args.learners,
            error_fraction=args.error_fraction,
            seed=child_seed(args.seed, 5),
        )
        vio.write_probability_table(table, labels, out / "table.csv")
        print(f"wrote {out / 'plan.json'} and {out / 'table.csv'}")
    return 0


def cmd_split(args) -> int:
    config = _load_config_file(args.config)
    data = vio.read_dataset(args.manifest, args.features)
    plan = plan_evaluation(
        data,
        float(_setting(args, config, "test_fraction", 0.2)),
        int(_setting(args, config, "k", 5)),
        int(_setting(args, config, "seed", 0)),
        stratified=bool(config.get("stratified", True)),
        val_fraction=float(config.get("fold_val_fraction", 0.10)),
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    vio.write_fold_plan(plan, out / "plan.json")
    print(f"wrote {out / 'plan.json'}")
    return 0


def cmd_run(args) -> int:
    config = _load_config_file(args.config)
    pipe = _pipeline_config(args, config)
    data, table, labels = _load_level1(args, "run")
    report = run_pipeline(pipe, dataset=data, table=table, labels=labels)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    predictions = report.pop("predictions")
    for mode_name, preds in predictions.items():
        label_source = labels if labels is not None else (data.labels_by_id() if data else None)
        vio.write_predictions(preds, out / f"predictions_{mode_name}.csv", label_source)
    path = _finish_report(report, out)
    print(f"wrote {path}")
    return 0


def cmd_vote(args) -> int:
    table, labels = vio.read_probability_table(args.table)
    pool_or_all, test_ids = _table_eval_ids(table)
    collapsed = (
        average_test_probabilities(table.restrict_samples(test_ids), test_ids)
        if test_ids
        else table
    )
    ids = test_ids if test_ids else pool_or_all
    votes = vote_table(collapsed, ids)
    preds = {sid: v.predicted for sid, v in votes.items()}
    labeled = {sid: labels[sid] for sid in ids if labels.get(sid) is not None}
    report: dict = {"command": "vote", "evaluated": len(ids)}
    if labeled:
        cm = compute_confusion(preds, labeled, table.class_count)
        metrics = compute_metrics(cm).to_dict()
        metrics["confusion"] = cm.tolist()
        report["voting"] = metrics
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    vio.write_predictions(preds, out / "predictions_voting.csv", labeled)
    path = _finish_report(report, out)
    print(f"wrote {path}")
    return 0


def _table_eval_ids(table: ProbabilityTable) -> tuple[list[str], list[str]]:
    """(all ids, test ids) where test ids are those with full fold coverage."""
    full = set(range(table.fold_count)) if table.fold_count >= 2 else None
    test = []
    if full:
        for sid in table.sample_ids():
            if set(table.folds_for(sid, 0)) == full:
                test.append(sid)
    return table.sample_ids(), test


def cmd_stack(args) -> int:
    """Plain two-level stacking evaluation: unfiltered meta-dataset, meta
    decides every evaluated sample."""
    config = _load_config_file(args.config)
    table, labels = vio.read_probability_table(args.table)
    seed = int(_setting(args, config, "seed", 0))
    train_config = _train_config(config)
    meta_spec = _learner_from_name(config.get("meta_learner", "softmax"), train_config)

    all_ids, test_ids = _table_eval_ids(table)
    if test_ids:
        pool_ids = [sid for sid in all_ids if sid not in set(test_ids)]
        oof = collapse_out_of_fold(table.restrict_samples(pool_ids), pool_ids)
        eval_table = average_test_probabilities(table.restrict_samples(test_ids), test_ids)
        eval_ids = test_ids
        in_sample = False
    else:
        pool_ids = all_ids
        oof = table
        eval_table = table
        eval_ids = all_ids
        in_sample = True

    pool_labels = {sid: labels[sid] for sid in pool_ids if labels.get(sid) is not None}
    if len(pool_labels) != len(pool_ids):
        raise ConfigError("stack: every training sample needs a label")
    votes = vote_table(oof, pool_ids)
    meta_ds = build_meta_training_set(oof, pool_labels, votes, filtered=False)
    meta_train, meta_val = split_meta(meta_ds, 0.2, child_seed(seed, 7))
    if len(meta_train) == 0 or len({s.label for s in meta_train.meta_samples}) < 2:
        meta_train, meta_val = meta_ds, None
    model = train_meta(meta_train, meta_val, meta_spec.with_seed(child_seed(seed, 8)))

    preds = {
        sid: argmax_label(model.predict_proba(build_meta_features(eval_table.per_learner(sid))))
        for sid in eval_ids
    }
    labeled = {sid: labels[sid] for sid in eval_ids if labels.get(sid) is not None}
    report: dict = {
        "command": "stack",
        "evaluated": len(eval_ids),
        "in_sample": in_sample,
        "meta": {"source_size": len(pool_ids), "retained": len(meta_ds), "filtered": False},
    }
    if labeled:
        cm = compute_confusion(preds, labeled, table.class_count)
        metrics = compute_metrics(cm).to_dict()
        metrics["confusion"] = cm.tolist()
        report["stacking"] = metrics
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    vio.write_predictions(preds, out / "predictions_stacking.csv", labeled)
    path = _finish_report(report, out)
    print(f"wrote {path}")
    return 0


def cmd_eval(args) -> int:
    preds, inline_labels = vio.read_predictions(args.pred)
    if args.table:
        _, labels = vio.read_probability_table(args.table)
        labeled = {sid: labels[sid] for sid in preds if labels.get(sid) is not None}
    else:
        labeled = inline_labels
    if not labeled:
        raise ConfigError("eval: no labels available for the predicted samples")
    class_count = max(max(labeled.values()), max(preds[sid] for sid in labeled)) + 1
    class_count = max(class_count, 2)
    cm = compute_confusion(preds, labeled, class_count)
    metrics = compute_metrics(cm).to_dict()
    metrics["confusion"] = cm.tolist()
    report = {"command": "eval", "evaluated": len(labeled), "metrics": metrics}
    path = _finish_report(report, Path(args.out))
    print(f"wrote {path}")
    print(f"accuracy: {metrics['accuracy']:.4f}")
    return 0


def cmd_ablate(args) -> int:
    config = _load_config_file(args.config)
    pipe = replace(_pipeline_config(args, config), ablate=True)
    data, table, labels = _load_level1(args, "ablate")
    report = run_pipeline(pipe, dataset=data, table=table, labels=labels)
    report.pop("predictions", None)
    path = _finish_report(report, Path(args.out), "ablation.json")
    print(f"wrote {path}")
    for row in report["ablation"]:
        print(
            f"learners={row['base_learner_count']} voting={row['voting']} "
            f"meta={row['meta']} accuracy={row['accuracy']}"
        )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="votestack",
        description="Soft-voting + contradictory-sample stacking ensemble engine",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate the bundled synthetic dataset")
    p_synth.add_argument("--out", required=True, help="output directory")
    p_synth.add_argument("--n", type=int, default=300, help="sample count")
    p_synth.add_argument("--classes", type=int, default=3, help="class count")
    p_synth.add_argument("--dim", type=int, default=2, help="feature dimension")
    p_synth.add_argument("--seed", type=int, default=7, help="generator seed")
    p_synth.add_argument(
        "--table",
        action="store_true",
        help="also emit a fold plan and an engineered probability table",
    )
    p_synth.add_argument("--learners", type=int, default=3, help="simulated learner count")
    p_synth.add_argument(
        "--error-fraction",
        dest="error_fraction",
        type=float,
        default=0.2,
        help="per-learner disjoint error-region fraction",
    )
    p_synth.add_argument("--k", type=int, default=5, help="fold count for --table")
    p_synth.add_argument(
        "--test-frac", dest="test_frac", type=float, default=0.2, help="test fraction for --table"
    )
    p_synth.set_defaults(func=cmd_synth)

    def add_common(p, with_level1=True):
        p.add_argument("--config", help="JSON config file; flags override it")
        p.add_argument("--seed", type=int, help="root seed (default 0)")
        p.add_argument("--out", required=True, help="output directory")
        if with_level1:
            p.add_argument("--manifest", help="dataset manifest (with --features)")
            p.add_argument("--features", help="feature CSV (with --manifest)")
            p.add_argument(
                "--table",
                action="append",
                help="probability-table CSV; repeat to merge exporter runs",
            )

    p_split = sub.add_parser("split", help="stratified split + fold plan")
    p_split.add_argument("--config", help="JSON config file; flags override it")
    p_split.add_argument("--manifest", required=True, help="dataset manifest")
    p_split.add_argument("--features", required=True, help="feature CSV")
    p_split.add_argument("--test-frac", dest="test_fraction", type=float, help="test fraction")
    p_split.add_argument("--k", type=int, help="fold count (default 5)")
    p_split.add_argument("--seed", type=int, help="root seed (default 0)")
    p_split.add_argument("--out", required=True, help="output directory")
    p_split.set_defaults(func=cmd_split)

    p_run = sub.add_parser("run", help="full pipeline with report artifacts")
    add_common(p_run)
    p_run.add_argument("--test-frac", dest="test_fraction", type=float, help="test fraction")
    p_run.add_argument("--k", type=int, help="fold count (default 5)")
    p_run.add_argument("--mode", choices=MODE_CHOICES, help="routing mode (default both)")
    p_run.add_argument("--levels", type=int, choices=(2, 3), help="stack depth (default 2)")
    p_run.add_argument(
        "--compare-metas",
        dest="compare_metas",
        action="store_const",
        const=True,
        help="add the meta-learner comparison grid",
    )
    p_run.add_argument("--jobs", type=int, help="parallel fold-model fits (default: cpu count)")
    p_run.set_defaults(func=cmd_run)

    p_vote = sub.add_parser("vote", help="voting-only evaluation of a table")
    p_vote.add_argument("--table", required=True, help="probability-table CSV")
    p_vote.add_argument("--out", required=True, help="output directory")
    p_vote.set_defaults(func=cmd_vote)

    p_stack = sub.add_parser("stack", help="plain-stacking evaluation of a table")
    p_stack.add_argument("--config", help="JSON config file; flags override it")
    p_stack.add_argument("--table", required=True, help="probability-table CSV")
    p_stack.add_argument("--seed", type=int, help="root seed (default 0)")
    p_stack.add_argument("--out", required=True, help="output directory")
    p_stack.set_defaults(func=cmd_stack)

    p_eval = sub.add_parser("eval", help="score a predictions file")
    p_eval.add_argument("--pred", required=True, help="predictions CSV")
    p_eval.add_argument("--table", help="probability table supplying labels")
    p_eval.add_argument("--out", required=True, help="output directory")
    p_eval.set_defaults(func=cmd_eval)

    p_ablate = sub.add_parser("ablate", help="emit the component ablation grid")
    add_common(p_ablate)
    p_ablate.add_argument("--test-frac", dest="test_fraction", type=float, help="test fraction")
    p_ablate.add_argument("--k", type=int, help="fold count (default 5)")
    p_ablate.add_argument("--mode", choices=MODE_CHOICES, help="routing mode (default both)")
    p_ablate.add_argument("--jobs", type=int, help="parallel fold-model fits")
    p_ablate.set_defaults(func=cmd_ablate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    stage = args.command
    try:
        return args.func(args)
    except (ConfigError, ModeError) as exc:
        _stage_error(stage, str(exc))
        return 2
    except VotestackError as exc:
        _stage_error(stage, str(exc))
        return 1
    except OSError as exc:
        _stage_error(stage, str(exc))
        return 1


if __name__ == "__main__":
    sys.exit(main())
