#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
TransCORALNet Command Line
واجهة سطر الأوامر

Batch commands wiring the pipeline: benchmark generation, oversampling,
shift grouping, training, evaluation, the lambda sweep and explanations.
Data goes to files (or stdout when no --out is given); diagnostics go to
the log on stderr.
"""

import argparse
import logging
import os
import sys
from typing import Any, Callable, Dict, List, Mapping, Optional, Tuple

from core.app_config import LOSS_PRESETS, TOOL_VERSION, RunConfig
from core.artifacts import OutputLock, dumps, read_json, write_json, write_sidecar
from core.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from core.data import (
    BenchmarkConfig,
    DomainDataset,
    DomainRole,
    ShiftGroups,
    TabularSchema,
    build_shift_groups,
    default_schema,
    encode,
    gen_benchmark,
    load_dataset,
    split_source,
    write_dataset,
)
from core.errors import ConfigError, EmptyFilterSelectionError
from core.evaluation import MetricReport, build_metric_table, encoded_for, evaluate, report_from_dict
from core.explain import (
    InstanceFilter,
    LimeConfig,
    TrainingStats,
    attention_diff,
    attention_map,
    fidelity_summary,
    lime_explain,
)
from core.model import ModelConfig
from core.oversample import STRATEGIES, generate_synthetic
from core.train import TrainConfig, lambda_sweep, train

logger = logging.getLogger(__name__)

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")

SCHEMA_FILE = "schema.json"
SOURCE_FILE = "source.csv"
TARGET_FILE = "target.csv"
SYNTHETIC_FILE = "synthetic.csv"
GROUPS_FILE = "groups.json"
CHECKPOINT_FILE = "model.ckpt"
HISTORY_FILE = "history.jsonl"
TRAINING_METRICS_FILE = "training_metrics.json"
SETTINGS_FILE = "settings.json"
METRICS_FILE = "metrics.json"
SWEEP_FILE = "sweep.json"
EXPLANATIONS_FILE = "explanations.json"
ATTENTION_FILE = "attention.json"

# argparse destination -> dotted config key
FLAG_KEYS = {
    "seed": "runtime.seed",
    "threshold": "runtime.threshold",
    "max_workers": "runtime.max_workers",
    "out": "paths.out",
    "schema": "paths.schema",
    "source": "paths.source",
    "target": "paths.target",
    "target_synth": "paths.target_synth",
    "groups": "paths.groups",
    "checkpoint": "paths.checkpoint",
    "shift_intensity": "benchmark.shift_intensity",
    "count": "oversample.count",
    "strategy": "oversample.strategy",
    "max_epochs": "train.max_epochs",
    "preset": "loss.preset",
    "n_perturbations": "lime.n_perturbations",
}


def overrides_from_args(args: argparse.Namespace) -> Dict[str, Any]:
    return {key: getattr(args, dest) for dest, key in FLAG_KEYS.items() if getattr(args, dest, None) is not None}


def run_config_from_args(args: argparse.Namespace) -> RunConfig:
    return RunConfig(config_path=args.config, overrides=overrides_from_args(args))


def _require_path(run: RunConfig, key: str, flag: str) -> str:
    path = run.get(f"paths.{key}")
    if not path:
        raise ConfigError(f"{flag} is required (or paths.{key} in the config file)")
    return path


def _resolve_schema(run: RunConfig, near: Optional[str] = None) -> TabularSchema:
    """--schema, else schema.json beside the data file, else the demo schema."""
    path = run.get("paths.schema")
    if not path and near:
        candidate = os.path.join(os.path.dirname(os.path.abspath(near)), SCHEMA_FILE)
        if os.path.exists(candidate):
            path = candidate
    if path:
        logger.info(f"Using schema: {path}")
        return TabularSchema.load(path)
    logger.info("No schema file given, using the demo schema")
    return default_schema(run.get("benchmark.categories_per_feature"))


def _document(run: RunConfig, body: Mapping[str, Any]) -> Dict[str, Any]:
    doc = dict(body)
    doc["config"] = run.to_dict()
    return doc


def _emit(run: RunConfig, filename: str, body: Mapping[str, Any]):
    """Write a JSON result under --out, or to stdout without one."""
    out = run.get("paths.out")
    if out:
        with OutputLock(out):
            write_json(os.path.join(out, filename), _document(run, body), run.provenance())
    else:
        doc = _document(run, body)
        doc["provenance"] = run.provenance()
        sys.stdout.write(dumps(doc))


def _model_config(run: RunConfig, schema: TabularSchema) -> ModelConfig:
    return ModelConfig.from_dict(run.section("model"), schema.token_count)


def _train_config(run: RunConfig, schema: TabularSchema, seed: int) -> TrainConfig:
    return TrainConfig.from_sections(run.section("train"), run.section("loss"), _model_config(run, schema),
                                     seed, run.get("runtime.threshold"))


def _training_inputs(run: RunConfig, seed: int) -> Tuple[DomainDataset, DomainDataset, DomainDataset]:
    """Split the source, then encode all three streams with the training statistics."""
    source_path = _require_path(run, "source", "--source")
    synthetic_path = _require_path(run, "target_synth", "--target-synth")
    schema = _resolve_schema(run, near=source_path)
    source = load_dataset(source_path, schema, DomainRole.SOURCE)
    synthetic = load_dataset(synthetic_path, schema, DomainRole.SYNTHETIC)
    train_rows, val_rows = split_source(source, run.get("train.train_fraction"), seed)
    source_train = encode(train_rows)
    source_val = encode(val_rows, stats_source=source_train)
    synthetic_target = encode(synthetic, stats_source=source_train)
    return source_train, source_val, synthetic_target


def _load_target_for(checkpoint: Checkpoint, path: str) -> DomainDataset:
    return load_dataset(path, checkpoint.schema, DomainRole.TARGET)


def cmd_gen_benchmark(args: argparse.Namespace, run: RunConfig):
    seed = run.require_seed()
    out = _require_path(run, "out", "--out")
    source, target = gen_benchmark(BenchmarkConfig(**run.section("benchmark"), seed=seed))
    provenance = run.provenance()
    with OutputLock(out):
        write_json(os.path.join(out, SCHEMA_FILE), source.schema.to_dict(), provenance)
        for dataset, filename in ((source, SOURCE_FILE), (target, TARGET_FILE)):
            path = os.path.join(out, filename)
            write_dataset(dataset, path)
            write_sidecar(path, provenance, {"role": dataset.role.value, "rows": dataset.n_rows,
                                             "circles": len(dataset.circles())})


def cmd_oversample(args: argparse.Namespace, run: RunConfig):
    seed = run.require_seed()
    target_path = _require_path(run, "target", "--target")
    out = _require_path(run, "out", "--out")
    schema = _resolve_schema(run, near=target_path)
    target = load_dataset(target_path, schema, DomainRole.TARGET)
    options = run.section("oversample")
    count = options["count"]
    if count is None:
        source_path = run.get("paths.source")
        if not source_path:
            raise ConfigError("Synthetic row count unknown: pass --count or --source")
        source = load_dataset(source_path, schema, DomainRole.SOURCE)
        count = split_source(source, run.get("train.train_fraction"), seed)[0].n_rows
        logger.info(f"Matching the source training split: {count} synthetic rows")
    batch = generate_synthetic(target, int(count), options["strategy"], seed, options["mode_count"],
                               options["condition_sampling"], run.worker_count())
    with OutputLock(out):
        path = os.path.join(out, SYNTHETIC_FILE)
        write_dataset(batch.to_dataset(), path, include_labels=False)
        write_sidecar(path, run.provenance(), batch.provenance.to_dict())


def cmd_group(args: argparse.Namespace, run: RunConfig):
    source_path = _require_path(run, "source", "--source")
    target_path = _require_path(run, "target", "--target")
    schema = _resolve_schema(run, near=source_path)
    source = load_dataset(source_path, schema, DomainRole.SOURCE)
    target = load_dataset(target_path, schema, DomainRole.TARGET)
    kl = run.section("kl")
    groups = build_shift_groups(source, target, kl["group_sizes"], kl["bins"], kl["smoothing"],
                                run.worker_count())
    _emit(run, GROUPS_FILE, groups.to_dict())


def cmd_train(args: argparse.Namespace, run: RunConfig):
    seed = run.require_seed()
    out = _require_path(run, "out", "--out")
    source_train, source_val, synthetic_target = _training_inputs(run, seed)
    cfg = _train_config(run, source_train.schema, seed)
    checkpoint, history = train(source_train, source_val, synthetic_target, cfg)

    _, training_report = evaluate(checkpoint, source_train, cfg.threshold)
    _, validation_report = evaluate(checkpoint, source_val, cfg.threshold)
    checkpoint.metadata["training_metrics"] = training_report.to_dict()
    checkpoint.metadata["validation_metrics"] = validation_report.to_dict()
    checkpoint.metadata["training_stats"] = TrainingStats.from_dataset(source_train).to_dict()
    checkpoint.provenance = run.provenance()

    with OutputLock(out):
        save_checkpoint(checkpoint, os.path.join(out, CHECKPOINT_FILE))
        run.export_settings(os.path.join(out, SETTINGS_FILE))
        history_path = os.path.join(out, HISTORY_FILE)
        history.save_jsonl(history_path)
        write_sidecar(history_path, run.provenance(), history.summary())
        write_json(os.path.join(out, TRAINING_METRICS_FILE), _document(run, {
            "training": training_report.to_dict(),
            "validation": validation_report.to_dict(),
            "history": history.summary(),
            "checkpoint_digest": checkpoint.digest(),
        }), run.provenance())


def _stored_reports(args: argparse.Namespace,
                    checkpoint: Checkpoint) -> Tuple[Optional[MetricReport], Optional[MetricReport]]:
    """Stored training and validation scores: --reference, else the checkpoint's own."""
    if args.reference:
        doc = read_json(args.reference)
        training, validation = doc.get("training", doc), doc.get("validation")
    else:
        training = checkpoint.metadata.get("training_metrics")
        validation = checkpoint.metadata.get("validation_metrics")
    return (report_from_dict(training) if training else None,
            report_from_dict(validation) if validation else None)


def cmd_eval(args: argparse.Namespace, run: RunConfig):
    checkpoint = load_checkpoint(_require_path(run, "checkpoint", "--checkpoint"))
    data = _load_target_for(checkpoint, args.data)
    threshold = run.get("runtime.threshold")
    groups_path = run.get("paths.groups")
    groups = ShiftGroups.load(groups_path) if groups_path else None
    training, validation = _stored_reports(args, checkpoint)
    table = build_metric_table(checkpoint, training, validation, data, groups, threshold)
    body = table.to_dict()
    body.update(threshold=threshold, checkpoint_digest=checkpoint.digest())
    _emit(run, METRICS_FILE, body)


def cmd_sweep(args: argparse.Namespace, run: RunConfig):
    seed = run.require_seed()
    _require_path(run, "out", "--out")
    source_train, source_val, synthetic_target = _training_inputs(run, seed)
    cfg = _train_config(run, source_train.schema, seed)
    workers = run.get("sweep.max_workers") or run.worker_count()
    target_path = run.get("paths.target")
    labeled_target = load_dataset(target_path, source_train.schema, DomainRole.TARGET) if target_path else None
    rows = lambda_sweep(source_train, source_val, synthetic_target, cfg, run.get("sweep.grid"), workers,
                        labeled_target)
    best = min(rows, key=lambda row: row.best_val_loss)
    logger.info(f"Lowest validation loss {best.best_val_loss:.5f} at lambda {best.lam}")
    _emit(run, SWEEP_FILE, {"rows": [row.to_dict() for row in rows], "best": best.to_dict()})


def _training_stats(checkpoint: Checkpoint, data: DomainDataset) -> TrainingStats:
    if "training_stats" in checkpoint.metadata:
        return TrainingStats.from_dict(checkpoint.metadata["training_stats"])
    logger.warning("Checkpoint holds no training marginals, perturbing with the explained data's marginals")
    return TrainingStats.from_dataset(data, numeric=checkpoint.stats)


def cmd_explain(args: argparse.Namespace, run: RunConfig):
    seed = run.require_seed()
    checkpoint = load_checkpoint(_require_path(run, "checkpoint", "--checkpoint"))
    data = _load_target_for(checkpoint, args.data)
    rows: List[int] = args.instance or list(range(min(args.first, data.n_rows)))
    bad = [r for r in rows if not 0 <= r < data.n_rows]
    if bad:
        raise ConfigError(f"Instance rows {bad} are outside 0..{data.n_rows - 1}")
    lime_cfg = LimeConfig(**run.section("lime"))
    stats = _training_stats(checkpoint, data)
    encoded = encoded_for(checkpoint, data)
    explanations = [lime_explain(checkpoint, encoded[row], stats, lime_cfg, seed, instance_id=str(row))
                    for row in rows]
    summary = fidelity_summary(explanations, lime_cfg.fidelity_threshold)
    logger.info(f"{summary['passing']}/{summary['explained']} explanations reach R² {summary['threshold']}")
    _emit(run, EXPLANATIONS_FILE, {
        "explanations": [e.to_dict() for e in explanations],
        "fidelity": summary,
        "checkpoint_digest": checkpoint.digest(),
    })


def cmd_attention(args: argparse.Namespace, run: RunConfig):
    checkpoint = load_checkpoint(_require_path(run, "checkpoint", "--checkpoint"))
    data = _load_target_for(checkpoint, args.data)
    maps = {InstanceFilter.ALL.value: attention_map(checkpoint, data, InstanceFilter.ALL)}
    if data.has_labels:
        for instance_filter in (InstanceFilter.DEFAULTING, InstanceFilter.NON_DEFAULTING):
            try:
                maps[instance_filter.value] = attention_map(checkpoint, data, instance_filter)
            except EmptyFilterSelectionError as e:
                logger.warning(f"{e}; map skipped")
    body: Dict[str, Any] = {"maps": {name: m.to_dict() for name, m in maps.items()},
                            "checkpoint_digest": checkpoint.digest()}
    split = (InstanceFilter.DEFAULTING.value, InstanceFilter.NON_DEFAULTING.value)
    if all(name in maps for name in split):
        body["difference"] = attention_diff(maps[split[0]], maps[split[1]]).tolist()
    _emit(run, ATTENTION_FILE, body)


def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    group = common.add_argument_group("common options")
    group.add_argument("--config", help="JSON config file (flags override its values)")
    group.add_argument("--seed", type=int, help="root random seed (runtime.seed)")
    group.add_argument("--threshold", type=float, help="decision threshold on P(defaulting)")
    group.add_argument("--max-workers", type=int, help="worker threads for parallel steps")
    group.add_argument("--out", help="output directory (locked while the command runs)")
    group.add_argument("--log-level", choices=LOG_LEVELS, help="log level (default: TCNET_LOG_LEVEL or INFO)")
    group.add_argument("--log-file", help="also write the log to this file")
    return common


CommandFn = Callable[[argparse.Namespace, RunConfig], None]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tcnet",
        description="TransCORALNet: transformer credit-default classifier with CORAL domain adaptation.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {TOOL_VERSION}")
    common = _common_options()
    commands = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)

    def add(name: str, handler: CommandFn, help_text: str) -> argparse.ArgumentParser:
        sub = commands.add_parser(name, parents=[common], help=help_text, description=help_text)
        sub.set_defaults(handler=handler)
        return sub

    sub = add("gen-benchmark", cmd_gen_benchmark, "Generate a synthetic source/target benchmark.")
    sub.add_argument("--shift-intensity", type=float, help="severity of the target shift")

    sub = add("oversample", cmd_oversample, "Generate unlabeled synthetic target rows.")
    sub.add_argument("--schema", help="schema JSON")
    sub.add_argument("--target", help="target CSV to imitate")
    sub.add_argument("--source", help="source CSV; sets the row count to its training split")
    sub.add_argument("--count", type=int, help="number of synthetic rows")
    sub.add_argument("--strategy", choices=sorted(STRATEGIES), help="generator")

    sub = add("group", cmd_group, "Rank target circles by KL divergence and build shift groups.")
    sub.add_argument("--schema", help="schema JSON")
    sub.add_argument("--source", help="source CSV")
    sub.add_argument("--target", help="target CSV with a circle column")

    for name, handler, help_text in (
        ("train", cmd_train, "Train a model on source rows plus synthetic target rows."),
        ("sweep", cmd_sweep, "Train once per lambda grid point and report validation losses."),
    ):
        sub = add(name, handler, help_text)
        sub.add_argument("--schema", help="schema JSON")
        sub.add_argument("--source", help="labeled source CSV")
        sub.add_argument("--target-synth", help="synthetic target CSV")
        sub.add_argument("--max-epochs", type=int, help="epoch cap")
        sub.add_argument("--preset", choices=sorted(LOSS_PRESETS), help="loss preset")
        if name == "sweep":
            sub.add_argument("--target", help="labeled target CSV; adds target recall and F1 per row")

    sub = add("eval", cmd_eval, "Score a checkpoint on labeled data, optionally per shift group.")
    sub.add_argument("--checkpoint", help="checkpoint file")
    sub.add_argument("--data", required=True, help="labeled CSV")
    sub.add_argument("--groups", help="shift groups JSON")
    sub.add_argument("--reference", help="training metrics JSON for the decreasing rates")

    sub = add("explain", cmd_explain, "Explain single predictions with local surrogate models.")
    sub.add_argument("--checkpoint", help="checkpoint file")
    sub.add_argument("--data", required=True, help="CSV holding the instances")
    sub.add_argument("--instance", type=int, action="append", help="row index to explain (repeatable)")
    sub.add_argument("--first", type=int, default=5, help="explain the first N rows when no --instance")
    sub.add_argument("--n-perturbations", type=int, help="perturbed neighbours per instance")

    sub = add("attention", cmd_attention, "Export feature-by-feature attention maps.")
    sub.add_argument("--checkpoint", help="checkpoint file")
    sub.add_argument("--data", required=True, help="CSV to aggregate over")
    return parser


def run_command(args: argparse.Namespace):
    """Build the run configuration and execute the selected command."""
    run = run_config_from_args(args)
    logger.info(f"Running '{args.command}' (config digest {run.digest()[:12]})")
    args.handler(args, run)
    logger.info(f"'{args.command}' finished")
