"""Epoch loop: loss/accuracy tracking, early stopping, best-weight checkpoints.

The loop runs up to ``epochs`` epochs, evaluates validation loss/accuracy in
inference mode after each one, checkpoints whenever the monitored value
improves (strict decrease by more than ``min_delta``) and stops early once
``patience`` consecutive epochs have passed without improvement, counting
from the best epoch. Training always hands back the best checkpoint, never
the last, and leaves the graph loaded with the best weights.

Epoch records carry a wall-time field for interactive inspection, but no
timing data reaches persisted artifacts (CSV, SVG, checkpoints), so two runs
with the same seed produce byte-identical outputs.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .augment import AugmentConfig
from .data import batch_iterator, num_batches
from .errors import ConfigError, IOFailure, NumericError
from .graph import LayerGraph
from .layers import softmax_cross_entropy
from .optim import Optimizer, make_optimizer
from .rng import DROPOUT, Rng
from .sstf import read_tensors

LOGITS = "logits"


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 32
    optimizer: object = None  # SgdConfig | RmspropConfig | AdamConfig
    patience: int = 5
    min_delta: float = 0.0
    monitor: str = "val_loss"
    seed: int = 0
    freeze: object = None
    checkpoint_dir: str | None = None
    augment: AugmentConfig | None = None
    target_size: tuple | None = None  # None keeps the native image size
    normalize: bool = True  # sample-wise centering/normalization
    config_hash: str = ""

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.patience < 0:
            raise ConfigError("patience must be >= 0")
        if self.monitor != "val_loss":
            raise ConfigError(f"unsupported monitor {self.monitor!r}")


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float
    wall_time: float


@dataclass
class TrainingLog:
    records: list = field(default_factory=list)
    stop_reason: str = ""
    best_epoch: int = -1

    def val_losses(self):
        return [r.val_loss for r in self.records]


@dataclass
class Checkpoint:
    directory: Path | None
    epoch: int
    val_loss: float
    config_hash: str = ""
    tensors: dict | None = None  # in-memory fallback when no directory is set


def stop_epoch_for(val_losses, patience, min_delta=0.0):
    """First epoch index at which training would stop, or None.

    Stopping fires after epoch e when e lies past the best epoch and
    ``e - best >= max(patience, 1)`` (an improvement resets the count;
    patience 0 degenerates to "stop at the first non-improving epoch").
    Best = earliest strict improvement by more than ``min_delta``.
    """
    best_val, best_epoch = None, -1
    wait = max(patience, 1)
    for e, v in enumerate(val_losses):
        if best_val is None or v < best_val - min_delta:
            best_val, best_epoch = v, e
        elif e - best_epoch >= wait:
            return e
    return None


def best_epoch_of(val_losses, min_delta=0.0):
    """Index of the minimum validation loss, earliest on ties."""
    best_val, best_epoch = None, -1
    for e, v in enumerate(val_losses):
        if best_val is None or v < best_val - min_delta:
            best_val, best_epoch = v, e
    return best_epoch


# ---------------------------------------------------------------------------
# evaluation


def evaluate_epoch(graph: LayerGraph, batches):
    """Mean loss and accuracy over a batch stream, weighted per sample so
    uneven final batches do not skew the averages."""
    total, loss_sum, correct = 0, 0.0, 0
    for x, y in batches:
        logits, _ = graph.forward(x, mode="inference", upto=LOGITS)
        loss, _ = softmax_cross_entropy(logits, y)
        n = len(y)
        total += n
        loss_sum += loss * n
        correct += int((logits.argmax(axis=1) == y).sum())
    if total == 0:
        raise ConfigError("evaluate_epoch: empty stream")
    return loss_sum / total, correct / total


def initial_loss_check(graph: LayerGraph, x_val, y_val, num_classes=7, margin=0.15):
    """Sanity-check the untrained model's loss against the uniform bound.

    A well-initialized K-class classifier should start near ln(K); passing
    means the observed loss does not exceed ``ln(K) + margin``. The forward
    pass uses batch statistics (a fresh graph's moving statistics are
    placeholders) but leaves all state untouched.
    """
    logits, _ = graph.forward(np.asarray(x_val), mode="calibrate", upto=LOGITS)
    loss, _ = softmax_cross_entropy(logits, np.asarray(y_val))
    return loss <= float(np.log(num_classes)) + margin, loss


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(directory, graph, optimizer, epoch, config_hash, val_loss):
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
        (directory / "topology.json").write_text(graph.topology_json())
        graph.save_weights(directory / "weights.sstf")
        optimizer.save(directory / "optimizer.sstf")
        meta = {
            "epoch": epoch,
            "config_hash": config_hash,
            "val_loss": val_loss,
            "optimizer": {"kind": optimizer.kind, **_config_dict(optimizer.config)},
        }
        (directory / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    except OSError as exc:
        raise IOFailure(f"cannot write checkpoint {directory}: {exc}") from exc


def _config_dict(cfg):
    from dataclasses import asdict

    out = asdict(cfg)
    return out


def load_checkpoint(directory):
    """Rebuild ``(graph, optimizer, meta)`` from a checkpoint directory.

    The reloaded graph reproduces bit-identical forward passes.
    """
    directory = Path(directory)
    try:
        topo = (directory / "topology.json").read_text()
        meta = json.loads((directory / "meta.json").read_text())
    except OSError as exc:
        raise IOFailure(f"cannot read checkpoint {directory}: {exc}") from exc
    graph = LayerGraph.from_topology_json(topo)
    graph.load_weights(directory / "weights.sstf", strictness="strict")
    opt_cfg = dict(meta.get("optimizer", {}))
    optimizer = None
    if opt_cfg:
        optimizer = make_optimizer(opt_cfg.pop("kind"), **opt_cfg)
        optimizer.load_state_tensors(read_tensors(directory / "optimizer.sstf"))
    return graph, optimizer, meta


# ---------------------------------------------------------------------------
# the loop


def train(graph: LayerGraph, dataset, train_indices, val_indices, config: TrainConfig):
    """Run the epoch loop; returns ``(TrainingLog, best Checkpoint)``.

    The graph is mutated: frozen per ``config.freeze``, trained, and finally
    restored to the best epoch's weights.
    """
    if len(train_indices) == 0 or len(val_indices) == 0:
        raise ConfigError("train and validation splits must be nonempty")
    if config.optimizer is None:
        raise ConfigError("TrainConfig.optimizer is required")
    from .inception import apply_freeze

    apply_freeze(graph, config.freeze)
    optimizer = Optimizer(config.optimizer) if not isinstance(config.optimizer, Optimizer) \
        else config.optimizer
    rng = Rng(config.seed)

    log = TrainingLog()
    best = None  # (val_loss, epoch)
    best_dir = Path(config.checkpoint_dir) / "best" if config.checkpoint_dir else None
    latest_dir = Path(config.checkpoint_dir) / "latest" if config.checkpoint_dir else None
    best_memo = None

    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        lr = optimizer.lr_at(epoch)
        step_base = epoch * num_batches(len(train_indices), config.batch_size)
        train_total, train_loss_sum, train_correct = 0, 0.0, 0
        batches = batch_iterator(
            dataset, train_indices, config.batch_size, config.seed, epoch=epoch,
            shuffle=True, target=config.target_size, augment_config=config.augment,
            normalize=config.normalize,
        )
        for b, (x, y) in enumerate(batches):
            gen = rng.stream(DROPOUT, step_base + b)
            logits, caches = graph.forward(x, mode="train", gen=gen, upto=LOGITS)
            loss, dlogits = softmax_cross_entropy(logits, y)
            if not np.isfinite(loss):
                raise NumericError(f"training diverged: non-finite loss at epoch {epoch}, batch {b}")
            grads = graph.backward(dlogits, caches, at=LOGITS)
            optimizer.step(graph, grads, epoch)
            n = len(y)
            train_total += n
            train_loss_sum += loss * n
            train_correct += int((logits.argmax(axis=1) == y).sum())

        val_loss, val_acc = evaluate_epoch(
            graph,
            batch_iterator(dataset, val_indices, config.batch_size, config.seed,
                           epoch=0, shuffle=False, target=config.target_size,
                           normalize=config.normalize),
        )
        log.records.append(EpochRecord(
            epoch, lr, train_loss_sum / train_total, train_correct / train_total,
            val_loss, val_acc, time.perf_counter() - t0,
        ))

        improved = best is None or val_loss < best[0] - config.min_delta
        if improved:
            best = (val_loss, epoch)
            if best_dir is not None:
                save_checkpoint(best_dir, graph, optimizer, epoch, config.config_hash, val_loss)
            else:
                best_memo = ({k: v.copy() for k, v in graph.state_tensors().items()},
                             optimizer.state_tensors())
        if latest_dir is not None:
            save_checkpoint(latest_dir, graph, optimizer, epoch, config.config_hash, val_loss)

        if not improved and epoch - best[1] >= max(config.patience, 1):
            log.stop_reason = "early_stopping"
            break
    else:
        log.stop_reason = "completed"

    log.best_epoch = best[1]
    # leave the graph holding the best weights, mirroring best-weight selection
    if best_dir is not None:
        graph.load_weights(best_dir / "weights.sstf", strictness="strict")
    elif best_memo is not None:
        graph.load_state_tensors(best_memo[0], strictness="strict")
    checkpoint = Checkpoint(best_dir, best[1], best[0], config.config_hash,
                            None if best_dir is not None else best_memo[0])
    return log, checkpoint


# ---------------------------------------------------------------------------
# curve emission


def _fmt(v: float) -> str:
    return format(float(v), ".10g")


def curves_csv(log: TrainingLog) -> str:
    lines = ["epoch,lr,train_loss,train_acc,val_loss,val_acc"]
    for r in log.records:
        lines.append(",".join([str(r.epoch), _fmt(r.lr), _fmt(r.train_loss),
                               _fmt(r.train_acc), _fmt(r.val_loss), _fmt(r.val_acc)]))
    return "\n".join(lines) + "\n"


def parse_curves_csv(text: str) -> TrainingLog:
    lines = [ln for ln in text.strip().splitlines() if ln]
    log = TrainingLog()
    for ln in lines[1:]:
        e, lr, tl, ta, vl, va = ln.split(",")
        log.records.append(EpochRecord(int(e), float(lr), float(tl), float(ta),
                                       float(vl), float(va), 0.0))
    log.best_epoch = best_epoch_of(log.val_losses())
    return log


def _svg_chart(series, title, width=640, height=400, pad=48):
    """Minimal SVG line chart: one polyline per named series."""
    colors = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd")
    values = [v for _, vs in series for v in vs]
    lo, hi = min(values), max(values)
    if hi - lo < 1e-12:
        hi = lo + 1.0
    n = max(len(vs) for _, vs in series)
    sx = (width - 2 * pad) / max(n - 1, 1)
    sy = (height - 2 * pad) / (hi - lo)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width // 2}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        f'<text x="{pad}" y="{height - pad + 16}" font-size="10">0</text>',
        f'<text x="{width - pad}" y="{height - pad + 16}" text-anchor="end" font-size="10">{n - 1}</text>',
        f'<text x="{pad - 4}" y="{height - pad}" text-anchor="end" font-size="10">{_fmt(lo)}</text>',
        f'<text x="{pad - 4}" y="{pad + 4}" text-anchor="end" font-size="10">{_fmt(hi)}</text>',
    ]
    for ci, (name, vs) in enumerate(series):
        pts = " ".join(
            f"{_fmt(pad + i * sx)},{_fmt(height - pad - (v - lo) * sy)}"
            for i, v in enumerate(vs)
        )
        color = colors[ci % len(colors)]
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        parts.append(
            f'<text x="{width - pad}" y="{pad + 14 * ci}" text-anchor="end" '
            f'font-size="11" fill="{color}">{name}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_curves(log: TrainingLog, out_dir) -> list:
    """Write the per-epoch CSV plus one SVG chart per metric; returns paths."""
    if not log.records:
        raise ConfigError("emit_curves: empty log")
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = []
        csv_path = out_dir / "curves.csv"
        csv_path.write_text(curves_csv(log))
        paths.append(csv_path)
        loss_svg = out_dir / "loss.svg"
        loss_svg.write_text(_svg_chart(
            [("train_loss", [r.train_loss for r in log.records]),
             ("val_loss", [r.val_loss for r in log.records])], "loss"))
        paths.append(loss_svg)
        acc_svg = out_dir / "accuracy.svg"
        acc_svg.write_text(_svg_chart(
            [("train_acc", [r.train_acc for r in log.records]),
             ("val_acc", [r.val_acc for r in log.records])], "accuracy"))
        paths.append(acc_svg)
        return paths
    except OSError as exc:
        raise IOFailure(f"cannot write curves to {out_dir}: {exc}") from exc
