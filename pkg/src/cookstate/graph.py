"""Layer graph: a named DAG of layer nodes with a parameter registry.

A graph is built once (nodes appended in construction order, which is also
the canonical freeze-boundary ordering), then executed forward/backward by
walking that order. Parameters live in a flat registry keyed
``"<node>/<param>"``; batch-norm moving statistics are registered under the
same scheme so a single SSTF file round-trips the complete model state.

Construction can run in shape-only mode (``allocate=False``) to make
parameter accounting over many architecture variants cheap.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import layers
from .errors import ConfigError, DimensionError
from .rng import INIT, Rng, truncated_normal
from .sstf import read_tensors, write_tensors
from .tensor import check_finite, default_dtype


@dataclass
class Param:
    shape: tuple
    value: np.ndarray | None
    trainable: bool = True

    @property
    def size(self) -> int:
        return int(np.prod(self.shape, dtype=np.int64)) if self.shape else 1


@dataclass
class Node:
    name: str
    kind: str
    config: dict
    inputs: list

    def to_json(self):
        return {"name": self.name, "kind": self.kind, "config": self.config, "inputs": self.inputs}


@dataclass
class ParamCount:
    total: int
    trainable: int
    non_trainable: int


# kinds that own parameters
_PARAM_KINDS = {"conv", "batchnorm", "dense"}


class LayerGraph:
    """Ordered DAG of layer nodes plus their parameters and moving state."""

    def __init__(self, allocate: bool = True):
        self.nodes: list[Node] = []
        self._by_name: dict[str, int] = {}
        self.params: dict[str, Param] = {}
        self.bn_states: dict[str, layers.BatchNormState] = {}
        self.shapes: dict[str, tuple] = {}  # per-sample output shape per node
        self.allocate = allocate
        self._init_rng: Rng | None = None
        self._init_counter = 0

    # ------------------------------------------------------------------
    # construction

    def set_initializer(self, rng: Rng) -> None:
        self._init_rng = rng

    def _init_weight(self, shape, fan_in, std=None):
        """Truncated normal (cut at 2 sigma), fan-in scaled.

        Convs use std sqrt(2/fan_in) (relu gain), dense layers sqrt(1/fan_in);
        a node may pin its own ``init_std`` (the classifier dense uses a small
        one so fresh models start near the uniform-prediction loss).
        """
        if not self.allocate:
            return None
        if self._init_rng is None:
            raise ConfigError("graph has no initializer rng; call set_initializer first")
        gen = self._init_rng.stream(INIT, self._init_counter)
        self._init_counter += 1
        std = float(std if std is not None else np.sqrt(2.0 / fan_in))
        return truncated_normal(gen, shape, std).astype(default_dtype())

    def _const(self, shape, value):
        if not self.allocate:
            return None
        return np.full(shape, value, dtype=default_dtype())

    def node(self, name: str) -> Node:
        if name not in self._by_name:
            raise ConfigError(f"unknown node {name!r}")
        return self.nodes[self._by_name[name]]

    def index_of(self, name: str) -> int:
        self.node(name)
        return self._by_name[name]

    def add_input(self, name: str, shape) -> str:
        self._append(Node(name, "input", {"shape": list(shape)}, []), tuple(shape))
        return name

    def add(self, kind: str, name: str, inputs, **config) -> str:
        """Append a node, infer its output shape and allocate its parameters."""
        if isinstance(inputs, str):
            inputs = [inputs]
        for inp in inputs:
            if inp not in self._by_name:
                raise ConfigError(f"node {name!r} references unknown input {inp!r}")
        in_shapes = [self.shapes[i] for i in inputs]
        out_shape = self._build_node(kind, name, config, in_shapes)
        self._append(Node(name, kind, config, list(inputs)), out_shape)
        return name

    def _append(self, node: Node, shape):
        if node.name in self._by_name:
            raise ConfigError(f"duplicate node name {node.name!r}")
        self._by_name[node.name] = len(self.nodes)
        self.nodes.append(node)
        self.shapes[node.name] = tuple(shape)

    def _build_node(self, kind, name, config, in_shapes):
        if kind == "conv":
            (c, h, w) = in_shapes[0]
            f = config["filters"]
            kh, kw = config["kernel"]
            sh, sw = config.get("stride", (1, 1))
            padding = config.get("padding", "valid")
            from .tensor import conv_output_size, pad_amounts

            ph = pad_amounts(h, kh, sh, padding)
            pw = pad_amounts(w, kw, sw, padding)
            ho = conv_output_size(h, kh, sh, ph[0] + ph[1])
            wo = conv_output_size(w, kw, sw, pw[0] + pw[1])
            fan = c * kh * kw
            # init_scale < 1 on a BN-backed conv leaves the function unchanged
            # but raises the effective learning rate by its inverse square
            std = config.get("init_std",
                             float(np.sqrt(2.0 / fan)) * config.get("init_scale", 1.0))
            self.params[f"{name}/weight"] = Param(
                (f, c, kh, kw), self._init_weight((f, c, kh, kw), fan, std)
            )
            if config.get("use_bias", True):
                self.params[f"{name}/bias"] = Param((f,), self._const((f,), 0.0))
            return (f, ho, wo)
        if kind == "batchnorm":
            (c, h, w) = in_shapes[0]
            if config.get("scale", True):
                self.params[f"{name}/gamma"] = Param((c,), self._const((c,), 1.0))
            self.params[f"{name}/beta"] = Param((c,), self._const((c,), 0.0))
            if self.allocate:
                self.bn_states[name] = layers.BatchNormState(
                    np.zeros(c, dtype=default_dtype()),
                    np.ones(c, dtype=default_dtype()),
                    config.get("momentum", 0.99),
                    config.get("epsilon", 1e-3),
                )
            return (c, h, w)
        if kind in ("maxpool", "avgpool"):
            (c, h, w) = in_shapes[0]
            kh, kw = config["window"]
            sh, sw = config.get("stride", config["window"])
            padding = config.get("padding", "valid")
            from .tensor import conv_output_size, pad_amounts

            ph = pad_amounts(h, kh, sh, padding)
            pw = pad_amounts(w, kw, sw, padding)
            ho = conv_output_size(h, kh, sh, ph[0] + ph[1])
            wo = conv_output_size(w, kw, sw, pw[0] + pw[1])
            return (c, ho, wo)
        if kind == "relu":
            return in_shapes[0]
        if kind == "gap":
            (c, _h, _w) = in_shapes[0]
            return (c,)
        if kind == "dense":
            (f,) = in_shapes[0]
            u = config["units"]
            std = config.get("init_std", float(np.sqrt(1.0 / f)))
            self.params[f"{name}/weight"] = Param((f, u), self._init_weight((f, u), f, std))
            if config.get("use_bias", True):
                self.params[f"{name}/bias"] = Param((u,), self._const((u,), 0.0))
            return (u,)
        if kind == "dropout":
            rate = config.get("rate", 0.5)
            if not 0.0 <= rate < 1.0:
                raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
            return in_shapes[0]
        if kind == "concat":
            base = in_shapes[0]
            for s in in_shapes[1:]:
                if s[1:] != base[1:]:
                    raise DimensionError(f"concat inputs disagree: {in_shapes}")
            return (sum(s[0] for s in in_shapes), *base[1:])
        if kind == "softmax":
            return in_shapes[0]
        raise ConfigError(f"unknown node kind {kind!r}")

    # ------------------------------------------------------------------
    # execution

    def _pval(self, key):
        p = self.params.get(key)
        return None if p is None else p.value

    def forward(self, x, mode: str = "inference", gen=None, upto: str | None = None,
                update_state: bool = True):
        """Run the graph on a batch. Returns ``(output, caches)``.

        ``upto`` stops at a named node (training stops at the logits dense so
        the loss can consume raw logits). ``gen`` feeds dropout nodes, drawn
        in node order. Modes: "train" (batch statistics, dropout active,
        moving stats updated unless ``update_state`` is False), "inference"
        (moving statistics, dropout off), "calibrate" (batch statistics but
        no dropout and no state update; used to probe fresh models).
        """
        if mode not in ("train", "inference", "calibrate"):
            raise ConfigError(f"unknown forward mode {mode!r}")
        x = np.asarray(x)
        acts: dict[str, np.ndarray] = {}
        caches: dict[str, object] = {}
        for node in self.nodes:
            name = node.name
            if node.kind == "input":
                want = tuple(node.config["shape"])
                if x.shape[1:] != want:
                    raise DimensionError(f"input shape {x.shape[1:]} != expected {want}")
                acts[name] = x
            else:
                ins = [acts[i] for i in node.inputs]
                acts[name], caches[name] = self._run_node(node, ins, mode, gen, update_state)
            if name == upto:
                return acts[name], caches
        if upto is not None:
            raise ConfigError(f"forward: unknown node {upto!r}")
        return acts[self.nodes[-1].name], caches

    def _run_node(self, node, ins, mode, gen, update_state):
        kind, name, cfg = node.kind, node.name, node.config
        if kind == "conv":
            return layers.conv2d_forward(
                ins[0],
                self._pval(f"{name}/weight"),
                self._pval(f"{name}/bias"),
                tuple(cfg.get("stride", (1, 1))),
                cfg.get("padding", "valid"),
            )
        if kind == "batchnorm":
            y, cache, new_state = layers.batchnorm_forward(
                ins[0],
                self._pval(f"{name}/gamma"),
                self._pval(f"{name}/beta"),
                self.bn_states[name],
                "train" if mode in ("train", "calibrate") else "inference",
            )
            if mode == "train" and update_state:
                self.bn_states[name] = new_state
            return y, cache
        if kind == "relu":
            return layers.relu_forward(ins[0])
        if kind == "maxpool":
            return layers.maxpool_forward(
                ins[0], tuple(cfg["window"]),
                tuple(cfg.get("stride", cfg["window"])), cfg.get("padding", "valid"),
            )
        if kind == "avgpool":
            return layers.avgpool_forward(
                ins[0], tuple(cfg["window"]),
                tuple(cfg.get("stride", cfg["window"])), cfg.get("padding", "valid"),
            )
        if kind == "gap":
            return layers.global_average_pool(ins[0])
        if kind == "dense":
            # dense accepts N x F; a spatial input is pooled upstream by design
            return layers.dense_forward(
                ins[0], self._pval(f"{name}/weight"), self._pval(f"{name}/bias")
            )
        if kind == "dropout":
            return layers.dropout_forward(
                ins[0], cfg.get("rate", 0.5),
                "train" if mode == "train" else "inference", gen,
            )
        if kind == "concat":
            return layers.concat_forward(ins)
        if kind == "softmax":
            return layers.softmax(ins[0]), None
        raise ConfigError(f"unknown node kind {kind!r}")

    def backward(self, d_out, caches, at: str):
        """Backpropagate from node ``at`` (cotangent ``d_out``) to all parameters.

        Returns ``{param_key: gradient}`` for trainable and frozen parameters
        alike; optimizers are responsible for respecting freeze flags.
        """
        grads: dict[str, np.ndarray] = {}
        d_acts: dict[str, np.ndarray] = {at: np.asarray(d_out)}
        start = self.index_of(at)
        for node in reversed(self.nodes[: start + 1]):
            dy = d_acts.pop(node.name, None)
            if dy is None or node.kind == "input":
                continue
            dins = self._grad_node(node, dy, caches.get(node.name), grads)
            for inp, dx in zip(node.inputs, dins):
                if dx is None:
                    continue
                if inp in d_acts:
                    d_acts[inp] = d_acts[inp] + dx
                else:
                    d_acts[inp] = dx
        return grads

    def _grad_node(self, node, dy, cache, grads):
        kind, name = node.kind, node.name
        if kind == "conv":
            dx, dw, db = layers.conv2d_backward(dy, cache)
            grads[f"{name}/weight"] = dw
            if db is not None:
                grads[f"{name}/bias"] = db
            return [dx]
        if kind == "batchnorm":
            dx, dgamma, dbeta = layers.batchnorm_backward(dy, cache)
            if dgamma is not None:
                grads[f"{name}/gamma"] = dgamma
            grads[f"{name}/beta"] = dbeta
            return [dx]
        if kind == "relu":
            return [layers.relu_backward(dy, cache)]
        if kind == "maxpool":
            return [layers.maxpool_backward(dy, cache)]
        if kind == "avgpool":
            return [layers.avgpool_backward(dy, cache)]
        if kind == "gap":
            return [layers.global_average_pool_backward(dy, cache)]
        if kind == "dense":
            dx, dw, db = layers.dense_backward(dy, cache)
            grads[f"{name}/weight"] = dw
            if db is not None:
                grads[f"{name}/bias"] = db
            return [dx]
        if kind == "dropout":
            return [layers.dropout_backward(dy, cache)]
        if kind == "concat":
            return layers.concat_backward(dy, cache)
        if kind == "softmax":
            raise ConfigError("softmax has no backward; backpropagate from its logits input")
        raise ConfigError(f"unknown node kind {kind!r}")

    # ------------------------------------------------------------------
    # accounting and freezing

    def count_params(self) -> ParamCount:
        """Exact parameter counts; moving statistics count as non-trainable."""
        trainable = sum(p.size for p in self.params.values() if p.trainable)
        frozen = sum(p.size for p in self.params.values() if not p.trainable)
        stats = 0
        for node in self.nodes:
            if node.kind == "batchnorm":
                c = self.shapes[node.name][0]
                stats += 2 * c
        return ParamCount(trainable + frozen + stats, trainable, frozen + stats)

    def node_param_keys(self, name: str):
        prefix = f"{name}/"
        return [k for k in self.params if k.startswith(prefix)]

    def apply_freeze(self, boundary) -> "LayerGraph":
        """Mark parameters of all nodes at index <= boundary non-trainable.

        ``boundary`` may be None (unfreeze everything), a node index, a node
        name, or "all". Returns the graph (mutated in place).
        """
        for p in self.params.values():
            p.trainable = True
        if boundary is None:
            return self
        if boundary == "all":
            cut = len(self.nodes) - 1
        elif isinstance(boundary, int):
            if not 0 <= boundary < len(self.nodes):
                raise ConfigError(f"freeze index {boundary} outside 0..{len(self.nodes) - 1}")
            cut = boundary
        else:
            cut = self.index_of(str(boundary))
        for node in self.nodes[: cut + 1]:
            for key in self.node_param_keys(node.name):
                self.params[key].trainable = False
        return self

    # ------------------------------------------------------------------
    # serialization

    def topology_json(self) -> str:
        doc = {"format": "cookstate-graph", "version": 1,
               "nodes": [n.to_json() for n in self.nodes]}
        return json.dumps(doc, indent=2, sort_keys=True)

    @classmethod
    def from_topology_json(cls, text: str, allocate: bool = True, rng: Rng | None = None):
        doc = json.loads(text)
        if doc.get("format") != "cookstate-graph":
            raise ConfigError("not a graph topology document")
        g = cls(allocate=allocate)
        if rng is not None:
            g.set_initializer(rng)
        elif allocate:
            g.set_initializer(Rng(0))
        for n in doc["nodes"]:
            if n["kind"] == "input":
                g.add_input(n["name"], n["config"]["shape"])
            else:
                g.add(n["kind"], n["name"], n["inputs"], **n["config"])
        return g

    def state_tensors(self) -> dict:
        """All parameters and moving statistics as ``{key: array}``."""
        out = {}
        for key, p in self.params.items():
            out[key] = p.value
        for name, st in self.bn_states.items():
            out[f"{name}/moving_mean"] = st.moving_mean
            out[f"{name}/moving_var"] = st.moving_var
        return out

    def load_state_tensors(self, tensors: dict, strictness: str = "strict") -> dict:
        """Install tensors into the registry.

        ``strict`` requires an exact key set; ``by-name`` loads the matching
        subset. Either way a shape mismatch on a matched key is an error.
        Returns ``{"loaded": [...], "missing": [...], "unexpected": [...]}``.
        """
        if strictness not in ("strict", "by-name"):
            raise ConfigError(f"strictness must be 'strict' or 'by-name', got {strictness!r}")
        own = self.state_tensors()
        loaded, missing = [], []
        unexpected = [k for k in sorted(tensors) if k not in own]
        for key in sorted(own):
            if key not in tensors:
                missing.append(key)
                continue
            src = np.asarray(tensors[key])
            if tuple(src.shape) != tuple(own[key].shape):
                raise DimensionError(
                    f"import: tensor {key!r} has shape {src.shape}, expected {own[key].shape}"
                )
            self._install(key, src.astype(default_dtype()))
            loaded.append(key)
        if strictness == "strict" and (missing or unexpected):
            raise ConfigError(
                f"strict import failed: missing {missing or 'none'}, unexpected {unexpected or 'none'}"
            )
        return {"loaded": loaded, "missing": missing, "unexpected": unexpected}

    def _install(self, key, value):
        node, leaf = key.rsplit("/", 1)
        if leaf in ("moving_mean", "moving_var"):
            setattr(self.bn_states[node], leaf, value)
        else:
            self.params[key].value = value

    def save_weights(self, path) -> None:
        write_tensors(path, self.state_tensors())

    def load_weights(self, path, strictness: str = "strict") -> dict:
        return self.load_state_tensors(read_tensors(path), strictness)

    def check_finite_params(self) -> None:
        for key, p in self.params.items():
            if p.value is not None:
                check_finite(key, p.value)
