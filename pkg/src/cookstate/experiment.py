"""Experiment configuration: one JSON document drives a training run.

The document fixes everything a run needs (model, data source, split,
optimizer, augmentation, loop settings); its SHA-256 hash is stamped into
checkpoints so evaluation can detect configuration drift. The grid runner
expands a base document across optimizer/batch-size/freeze axes into
isolated cells with one results row each.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .augment import AugmentConfig
from .data import (
    ArrayDataset,
    DatasetManifest,
    ManifestDataset,
    SplitPlan,
    build_manifest,
    split_dataset,
)
from .errors import ConfigError, IOFailure
from .graph import LayerGraph
from .inception import HeadConfig, build_inception_v3, build_mini_inception, reconciled_head
from .optim import make_optimizer
from .rng import Rng
from .synthetic import make_texture_dataset
from .train import TrainConfig, emit_curves, train


@dataclass
class ExperimentConfig:
    model: dict = field(default_factory=lambda: {"variant": "mini", "input_shape": [3, 32, 32]})
    data: dict = field(default_factory=lambda: {"kind": "synthetic", "n": 700, "size": 32})
    split: dict = field(default_factory=lambda: {"ratios": [0.8, 0.2], "stratified": True})
    optimizer: dict = field(default_factory=lambda: {"kind": "sgd"})
    augment: dict | None = None
    batch_size: int = 32
    epochs: int = 50
    patience: int = 5
    min_delta: float = 0.0
    seed: int = 0
    freeze: object = None
    target_size: list | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown experiment config keys: {sorted(unknown)}")
        return cls(**doc)

    def hash(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]


def load_config(path) -> ExperimentConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise IOFailure(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return ExperimentConfig.from_dict(doc)


def build_model(config: ExperimentConfig) -> LayerGraph:
    spec = dict(config.model)
    variant = spec.pop("variant", "mini")
    input_shape = tuple(spec.pop("input_shape", (3, 32, 32) if variant == "mini" else (3, 299, 299)))
    head_doc = spec.pop("head", None)
    if spec:
        raise ConfigError(f"unknown model config keys: {sorted(spec)}")
    if head_doc == "reconciled":
        head = reconciled_head()
    elif head_doc is None:
        head = HeadConfig()
    else:
        head = HeadConfig(**{k: tuple(v) if k == "kernel" else v for k, v in head_doc.items()})
    rng = Rng(config.seed)
    if variant == "mini":
        return build_mini_inception(input_shape, head, rng)
    if variant == "full":
        return build_inception_v3(input_shape, head, rng)
    raise ConfigError(f"unknown model variant {variant!r}")


def load_dataset(config: ExperimentConfig):
    """Materialize the configured dataset; returns ``(dataset, labels)``."""
    spec = dict(config.data)
    kind = spec.pop("kind", "synthetic")
    if kind == "synthetic":
        images, labels = make_texture_dataset(
            n=spec.pop("n", 700), size=spec.pop("size", 32),
            seed=spec.pop("seed", config.seed),
        )
        if spec:
            raise ConfigError(f"unknown synthetic data keys: {sorted(spec)}")
        return ArrayDataset(images, labels), labels
    if kind == "directory":
        root = spec.pop("root")
        classes = spec.pop("classes", None)
        manifest_path = spec.pop("manifest", None)
        if spec:
            raise ConfigError(f"unknown directory data keys: {sorted(spec)}")
        if manifest_path:
            manifest = DatasetManifest.from_json(Path(manifest_path).read_text())
        else:
            manifest = build_manifest(root, classes)
        ds = ManifestDataset(manifest, root)
        return ds, manifest.labels()
    raise ConfigError(f"unknown data kind {kind!r}")


def make_split(config: ExperimentConfig, labels) -> SplitPlan:
    spec = dict(config.split)
    plan_path = spec.pop("plan", None)
    if plan_path:
        return SplitPlan.from_json(Path(plan_path).read_text())
    return split_dataset(
        len(labels), spec.pop("seed", config.seed),
        ratios=tuple(spec["ratios"]) if "ratios" in spec else None,
        counts=tuple(spec["counts"]) if "counts" in spec else None,
        stratified=spec.get("stratified", False),
        labels=labels,
    )


def run_experiment(config: ExperimentConfig, out_dir, quiet: bool = False):
    """Train one experiment; writes curves, checkpoints and a summary JSON.

    Returns ``(TrainingLog, Checkpoint, summary dict)``.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    graph = build_model(config)
    dataset, labels = load_dataset(config)
    plan = make_split(config, labels)
    val_idx = plan.val if plan.val else plan.test
    augment = AugmentConfig(**config.augment) if config.augment else None
    tc = TrainConfig(
        epochs=config.epochs, batch_size=config.batch_size,
        optimizer=make_optimizer(**config.optimizer),
        patience=config.patience, min_delta=config.min_delta, seed=config.seed,
        freeze=config.freeze, checkpoint_dir=str(out_dir / "checkpoints"),
        augment=augment,
        target_size=tuple(config.target_size) if config.target_size else None,
        config_hash=config.hash(),
    )
    log, ckpt = train(graph, dataset, plan.train, val_idx, tc)
    emit_curves(log, out_dir)
    (out_dir / "config.json").write_text(config.to_json())
    (out_dir / "split.json").write_text(plan.to_json())
    summary = {
        "best_epoch": log.best_epoch,
        "epochs_run": len(log.records),
        "stop_reason": log.stop_reason,
        "val_loss": log.records[log.best_epoch].val_loss,
        "val_acc": log.records[log.best_epoch].val_acc,
        "train_acc_max": max(r.train_acc for r in log.records),
        "config_hash": config.hash(),
    }
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    if not quiet:
        print(f"[{out_dir.name}] best epoch {log.best_epoch}: "
              f"val_loss {summary['val_loss']:.4f} val_acc {summary['val_acc']:.4f} "
              f"({log.stop_reason}, {len(log.records)} epochs)")
    return log, ckpt, summary


# ---------------------------------------------------------------------------
# grid


def expand_grid(doc: dict):
    """Expand a grid document into ``[(run_id, ExperimentConfig)]``.

    The document holds a ``base`` experiment and a ``grid`` object with any
    of: ``optimizer`` (list of optimizer configs or kind strings),
    ``batch_size`` (list of ints), ``freeze`` (list of boundaries).
    """
    base = doc.get("base", {})
    grid = doc.get("grid", {})
    optimizers = grid.get("optimizer", [base.get("optimizer", {"kind": "sgd"})])
    batch_sizes = grid.get("batch_size", [base.get("batch_size", 32)])
    freezes = grid.get("freeze", [base.get("freeze")])
    cells = []
    for opt in optimizers:
        opt_doc = {"kind": opt} if isinstance(opt, str) else dict(opt)
        for bs in batch_sizes:
            for freeze in freezes:
                doc_cell = dict(base)
                doc_cell["optimizer"] = opt_doc
                doc_cell["batch_size"] = int(bs)
                doc_cell["freeze"] = freeze
                config = ExperimentConfig.from_dict(doc_cell)
                freeze_label = "nofreeze" if freeze in (None, "none") else str(freeze).replace("-", "_")
                run_id = f"{opt_doc['kind']}_b{bs}_{freeze_label}"
                cells.append((run_id, config))
    ids = [rid for rid, _ in cells]
    if len(set(ids)) != len(ids):
        raise ConfigError(f"grid produces duplicate run ids: {ids}")
    return cells


def _run_cell(args):
    run_id, config, out_dir = args
    cell_dir = Path(out_dir) / run_id
    _, _, summary = run_experiment(config, cell_dir)
    return run_id, summary


def run_grid(doc: dict, out_dir, resume: bool = False, jobs: int = 1):
    """Run every grid cell; returns summary rows and writes summary.csv.

    With ``resume``, cells whose summary.json already exists are skipped.
    Cells are independent; ``jobs`` > 1 runs them in separate processes
    (determinism is per-cell, so parallelism never changes results).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cells = expand_grid(doc)
    results = {}
    pending = []
    for run_id, config in cells:
        summary_path = out_dir / run_id / "summary.json"
        if resume and summary_path.exists():
            results[run_id] = json.loads(summary_path.read_text())
        else:
            pending.append((run_id, config, out_dir))
    if jobs > 1 and len(pending) > 1:
        import concurrent.futures

        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            for run_id, summary in pool.map(_run_cell, pending):
                results[run_id] = summary
    else:
        for item in pending:
            run_id, summary = _run_cell(item)
            results[run_id] = summary
    rows = ["run_id,val_loss,val_acc,best_epoch,epochs_run"]
    for run_id, _ in cells:  # deterministic row order = grid order
        s = results[run_id]
        rows.append(f"{run_id},{s['val_loss']:.6f},{s['val_acc']:.6f},"
                    f"{s['best_epoch']},{s['epochs_run']}")
    (out_dir / "summary.csv").write_text("\n".join(rows) + "\n")
    return [(rid, results[rid]) for rid, _ in cells]
