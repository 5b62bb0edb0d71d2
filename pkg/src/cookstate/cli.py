"""Command-line surface: dataset prep, parameter accounting, training,
grids, evaluation and augmentation previews.

Exit codes: 0 success, 2 usage or configuration error, 3 data error,
4 numerical divergence, 5 I/O failure. All randomness flows from --seed
flags (or the seed embedded in a config document).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .augment import AffineParams, AugmentConfig, apply_affine, sample_params
from .data import (
    CLASS_NAMES,
    DatasetManifest,
    SplitPlan,
    batch_iterator,
    build_manifest,
    read_ppm,
    split_dataset,
    write_ppm,
)
from .errors import ConfigError, CookstateError, DataError, IOFailure
from .experiment import ExperimentConfig, load_config, run_experiment, run_grid
from .inception import (
    FREEZE_ALIASES,
    TABLE2_TOTAL,
    TABLE2_TRAINABLE,
    apply_freeze,
    build_inception_v3,
    build_mini_inception,
    reconcile_head,
    reconciled_head,
)
from .metrics import (
    accuracy,
    classification_report,
    confusion_matrix,
    matrix_csv,
    matrix_svg,
    normalize_rows,
    report_csv,
    report_text,
)
from .rng import AUGMENT, Rng
from .tensor import set_default_dtype
from .train import evaluate_epoch, load_checkpoint, parse_curves_csv, emit_curves


def _write(path, text):
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)
    except OSError as exc:
        raise IOFailure(f"cannot write {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# subcommands


def cmd_manifest(args):
    classes = args.classes.split(",") if args.classes else (
        list(CLASS_NAMES) if args.standard_classes else None)
    manifest = build_manifest(args.root, classes)
    counts = manifest.counts
    print(f"{len(manifest)} samples in {len(manifest.class_names)} classes")
    for name in manifest.class_names:
        print(f"  {name}: {counts[name]}")
    if manifest.skipped:
        print(f"skipped {len(manifest.skipped)} non-sample files")
    if args.check_published:
        notes = manifest.validate_against_published()
        for note in notes:
            print(f"note: {note}")
        if not notes:
            print("per-class counts match the published figures")
    if args.out:
        _write(args.out, manifest.to_json())
        print(f"wrote {args.out}")
    return 0


def cmd_split(args):
    if args.manifest:
        manifest = DatasetManifest.from_json(Path(args.manifest).read_text())
        n = len(manifest)
        labels = manifest.labels()
    elif args.n:
        n, labels = args.n, None
    else:
        raise ConfigError("split needs --manifest or --n")
    ratios = tuple(float(x) for x in args.ratio.split(",")) if args.ratio else None
    counts = tuple(int(x) for x in args.counts.split(",")) if args.counts else None
    plan = split_dataset(n, args.seed, ratios=ratios, counts=counts,
                         stratified=args.stratified, labels=labels)
    sizes = plan.sizes()
    print(f"train {sizes[0]} / val {sizes[1]} / test {sizes[2]} (seed {args.seed})")
    if args.out:
        _write(args.out, plan.to_json())
        print(f"wrote {args.out}")
    return 0


def _published(label):
    return f"{TABLE2_TRAINABLE[label]:>12,}" if label in TABLE2_TRAINABLE else " " * 12


def cmd_count_params(args):
    head = reconciled_head() if args.head == "reconciled" else None
    if args.head == "text":
        from .inception import HeadConfig

        head = HeadConfig()
    graph = build_inception_v3(head=head, allocate=False)
    print(f"head variant: {args.head}")
    c = graph.count_params()
    match = "matches" if c.total == TABLE2_TOTAL else "differs from"
    print(f"total parameters: {c.total:,} ({match} published {TABLE2_TOTAL:,})")
    print(f"{'boundary':<12} {'computed':>12} {'published':>12}")
    for label in ("none", "0-100", "0-132", "0-164"):
        apply_freeze(graph, label)
        t = graph.count_params().trainable
        print(f"{label:<12} {t:>12,} {_published(label)}")
    apply_freeze(graph, None)
    if args.enumerate:
        best, candidates = reconcile_head()
        print("\nhead reconciliation (residual vs published total):")
        for cand in candidates[:10]:
            marker = " <- selected" if cand.label == best.label else ""
            print(f"  {cand.residual:>+8,}  {cand.label}{marker}")
    return 0


def cmd_layer_map(args):
    graph = (build_mini_inception(allocate=False) if args.mini
             else build_inception_v3(head=reconciled_head(), allocate=False))
    print(f"{'index':>5}  {'name':<24} kind")
    for i, node in enumerate(graph.nodes):
        print(f"{i:>5}  {node.name:<24} {node.kind}")
    print("\npublished freeze-range labels map to whole-block cuts:")
    for label in ("0-100", "0-132", "0-164"):
        block = FREEZE_ALIASES[label]
        if args.mini:
            print(f"  {label} -> (full model only)")
        else:
            print(f"  {label} -> freeze through node {graph.index_of(block)} ({block})")
    return 0


def cmd_train(args):
    config = load_config(args.config)
    if args.seed is not None:
        config.seed = args.seed
    out = Path(args.out or "runs/train")
    run_experiment(config, out)
    print(f"artifacts in {out}")
    return 0


def cmd_grid(args):
    try:
        doc = json.loads(Path(args.config).read_text())
    except OSError as exc:
        raise IOFailure(f"cannot read grid config {args.config}: {exc}") from exc
    out = Path(args.out or "runs/grid")
    rows = run_grid(doc, out, resume=args.resume, jobs=args.jobs)
    print(f"{len(rows)} cells -> {out / 'summary.csv'}")
    for run_id, s in rows:
        print(f"  {run_id}: val_loss {s['val_loss']:.4f} val_acc {s['val_acc']:.4f}")
    return 0


def cmd_eval(args):
    graph, _, meta = load_checkpoint(args.checkpoint)
    config = load_config(args.config)
    if meta.get("config_hash") and config.hash() != meta["config_hash"]:
        print(f"warning: config hash {config.hash()} does not match "
              f"checkpoint {meta['config_hash']}", file=sys.stderr)
    from .experiment import load_dataset, make_split

    dataset, labels = load_dataset(config)
    plan = make_split(config, labels)
    subset = {"train": plan.train, "val": plan.val, "test": plan.test}[args.subset]
    if not subset:
        raise ConfigError(f"subset {args.subset!r} is empty in this split")
    target = tuple(config.target_size) if config.target_size else None

    y_true, y_pred = [], []
    for xb, yb in batch_iterator(dataset, subset, config.batch_size, config.seed,
                                 shuffle=False, target=target):
        logits, _ = graph.forward(xb, mode="inference", upto="logits")
        y_true.extend(int(v) for v in yb)
        y_pred.extend(int(v) for v in logits.argmax(axis=1))
    k = graph.shapes["logits"][0]
    names = config.data.get("classes") or ([str(i) for i in range(k)]
                                           if k != 7 else list(CLASS_NAMES))
    cm = confusion_matrix(y_true, y_pred, k, names)
    rep = classification_report(cm)
    print(f"accuracy: {accuracy(cm):.4f} on {cm.total} samples ({args.subset})")
    print("\nconfusion matrix (rows = true):")
    print(matrix_csv(cm).strip())
    print("\nnormalized (%):")
    print(matrix_csv(cm, normalized=True).strip())
    print()
    print(report_text(rep))
    if args.out:
        out = Path(args.out)
        _write(out / "confusion.csv", matrix_csv(cm))
        _write(out / "confusion_normalized.csv", matrix_csv(cm, normalized=True))
        _write(out / "confusion.svg", matrix_svg(cm))
        _write(out / "report.txt", report_text(rep))
        _write(out / "report.csv", report_csv(rep))
        print(f"wrote evaluation artifacts to {out}")
    return 0


def cmd_curves(args):
    log = parse_curves_csv(Path(args.log).read_text())
    paths = emit_curves(log, args.out or Path(args.log).parent)
    print("wrote " + ", ".join(str(p) for p in paths))
    return 0


def cmd_augment_preview(args):
    image = read_ppm(args.image).astype(np.float64)
    cfg = AugmentConfig(**json.loads(Path(args.config).read_text())) if args.config \
        else AugmentConfig()
    out = Path(args.out or "augment-preview")
    out.mkdir(parents=True, exist_ok=True)
    gen = Rng(args.seed).stream(AUGMENT)
    lines = []
    for i in range(args.n):
        params = sample_params(cfg, gen, image.shape[2], image.shape[1])
        result = apply_affine(image, params, cfg.fill_mode)
        write_ppm(out / f"aug_{i:03d}.ppm", result)
        lines.append(json.dumps({"index": i, **json.loads(params.to_json())}))
    _write(out / "params.jsonl", "\n".join(lines) + "\n")
    print(f"wrote {args.n} previews to {out}")
    return 0


def cmd_convert(args):
    """Convert common image files to the PPM layout (external decoder)."""
    try:
        from PIL import Image
    except ImportError as exc:  # pragma: no cover
        raise ConfigError("convert needs Pillow installed") from exc
    src, dst = Path(args.src), Path(args.out)
    count = 0
    for path in sorted(src.rglob("*")):
        if path.suffix.lower() not in (".jpg", ".jpeg", ".png", ".bmp", ".gif"):
            continue
        rel = path.relative_to(src).with_suffix(".ppm")
        target = dst / rel
        target.parent.mkdir(parents=True, exist_ok=True)
        img = np.asarray(Image.open(path).convert("RGB"), dtype=np.float64)
        write_ppm(target, img.transpose(2, 0, 1))
        count += 1
    print(f"converted {count} images to {dst}")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cookstate",
                                description="Cooking-state classifier toolkit")
    p.add_argument("--version", action="version", version=f"cookstate {__version__}")
    p.add_argument("--float64", action="store_true",
                   help="run in float64 (gradient-check mode)")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("manifest", help="scan a class-per-directory dataset root")
    sp.add_argument("root")
    sp.add_argument("--classes", help="comma-separated class vocabulary")
    sp.add_argument("--standard-classes", action="store_true",
                    help="use the seven cooking-state classes")
    sp.add_argument("--check-published", action="store_true",
                    help="compare counts against the published figures")
    sp.add_argument("--out", help="write manifest JSON here")
    sp.set_defaults(func=cmd_manifest)

    sp = sub.add_parser("split", help="deterministic train/val/test split")
    sp.add_argument("--manifest")
    sp.add_argument("--n", type=int, help="split a bare index range instead of a manifest")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--ratio", help="e.g. 0.85,0.15 or 0.7,0.15,0.15")
    sp.add_argument("--counts", help="explicit sizes, e.g. 5117,861")
    sp.add_argument("--stratified", action="store_true")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_split)

    sp = sub.add_parser("count-params", help="parameter accounting vs published table")
    sp.add_argument("--head", choices=["reconciled", "text"], default="reconciled",
                    help="head variant: reconciled (matches published totals) or text")
    sp.add_argument("--enumerate", action="store_true",
                    help="show the head-variant reconciliation table")
    sp.set_defaults(func=cmd_count_params)

    sp = sub.add_parser("layer-map", help="node index <-> name mapping for freezing")
    sp.add_argument("--mini", action="store_true")
    sp.set_defaults(func=cmd_layer_map)

    sp = sub.add_parser("train", help="run one experiment from a JSON config")
    sp.add_argument("--config", required=True)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("grid", help="run an experiment grid")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out")
    sp.add_argument("--resume", action="store_true", help="skip finished cells")
    sp.add_argument("--jobs", type=int, default=1, help="parallel cells")
    sp.set_defaults(func=cmd_grid)

    sp = sub.add_parser("eval", help="evaluate a checkpoint on a split subset")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--config", required=True)
    sp.add_argument("--subset", choices=["train", "val", "test"], default="val")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("curves", help="re-render curve charts from a CSV log")
    sp.add_argument("--log", required=True)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_curves)

    sp = sub.add_parser("augment-preview", help="write augmented copies of a PPM image")
    sp.add_argument("--image", required=True)
    sp.add_argument("--config", help="AugmentConfig JSON file")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--n", type=int, default=4)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_augment_preview)

    sp = sub.add_parser("convert", help="convert jpg/png images to PPM layout")
    sp.add_argument("--src", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_convert)

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.float64:
        set_default_dtype(np.float64)
    try:
        return args.func(args)
    except CookstateError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return IOFailure.exit_code


if __name__ == "__main__":
    sys.exit(main())
