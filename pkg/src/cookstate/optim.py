"""First-order optimizers at the reference hyperparameters, plus schedules.

Three update rules are provided, each as a pure functional step over
``{key: array}`` maps plus a thin stateful wrapper the training loop uses.
Frozen parameters are skipped entirely: neither the parameter nor its slot
buffer changes, so frozen tensors stay bit-identical across steps.

The "decay" hyperparameter attached to RMSprop/Adam configurations is
interpreted as a per-step multiplicative learning-rate factor,
``lr_t = lr * decay^t``. It defaults on for RMSprop and off for Adam
(Adam's published recommendation keeps the rate constant); both are plain
config switches.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericError
from .sstf import read_tensors, write_tensors


@dataclass
class ScheduleSpec:
    """Epoch-indexed learning-rate schedule."""

    kind: str = "step-decay"  # constant | step-decay | multiplicative-decay
    base_lr: float = 0.001
    drop_factor: float = 0.5
    drop_every: int = 10

    def __post_init__(self):
        if self.base_lr <= 0:
            raise ConfigError("base_lr must be positive")
        if self.kind not in ("constant", "step-decay", "multiplicative-decay"):
            raise ConfigError(f"unknown schedule kind {self.kind!r}")
        if self.kind != "constant" and (self.drop_factor <= 0 or self.drop_factor > 1):
            raise ConfigError("drop_factor must be in (0, 1]")
        if self.kind == "step-decay" and self.drop_every < 1:
            raise ConfigError("drop_every must be >= 1")


def schedule_lr(spec: ScheduleSpec, epoch: int) -> float:
    """Learning rate for a (0-based) epoch under the schedule."""
    if epoch < 0:
        raise ConfigError("epoch must be >= 0")
    if spec.kind == "constant":
        return spec.base_lr
    if spec.kind == "step-decay":
        return spec.base_lr * spec.drop_factor ** (epoch // spec.drop_every)
    return spec.base_lr * spec.drop_factor**epoch


@dataclass
class SgdConfig:
    lr: float = 0.001
    momentum: float = 0.6
    nesterov: bool = True
    schedule: ScheduleSpec | None = None  # None -> step decay from lr

    def __post_init__(self):
        if self.lr <= 0 or not 0.0 <= self.momentum < 1.0:
            raise ConfigError("SGD needs lr > 0 and momentum in [0, 1)")
        if self.schedule is None:
            self.schedule = ScheduleSpec("step-decay", self.lr)


@dataclass
class RmspropConfig:
    lr: float = 0.001
    rho: float = 0.9
    decay: float = 0.999
    epsilon: float = 1e-7
    apply_decay: bool = True

    def __post_init__(self):
        if not 0.0 < self.rho < 1.0:
            raise ConfigError("rho must be in (0, 1)")


@dataclass
class AdamConfig:
    lr: float = 0.001
    b1: float = 0.9
    b2: float = 0.999
    epsilon: float = 1e-8
    decay: float = 0.999
    apply_decay: bool = False

    def __post_init__(self):
        if not (0.0 < self.b1 < 1.0 and 0.0 < self.b2 < 1.0):
            raise ConfigError("b1 and b2 must be in (0, 1)")


def _check_grad(key, g):
    if not np.all(np.isfinite(g)):
        raise NumericError(f"non-finite gradient for parameter {key!r}")


def _trainable(params, trainable):
    if trainable is None:
        return {k: True for k in params}
    return trainable


def sgd_step(params, grads, state, config: SgdConfig, epoch: int, trainable=None):
    """One SGD step with optional Nesterov momentum.

    v' = mu*v - lr*g; plain updates w' = w + v', Nesterov w' = w + mu*v' - lr*g.
    Returns new ``(params, state)`` maps; inputs are not modified.
    """
    lr = schedule_lr(config.schedule, epoch)
    mu = config.momentum
    vel = state.setdefault("velocity", {})
    new_params, new_vel = {}, {}
    flags = _trainable(params, trainable)
    for key, w in params.items():
        g = grads.get(key)
        if not flags.get(key, True) or g is None:
            new_params[key] = w
            if key in vel:
                new_vel[key] = vel[key]
            continue
        _check_grad(key, g)
        v = vel.get(key)
        v_new = (mu * v if v is not None else 0.0) - lr * g
        if config.nesterov:
            new_params[key] = w + mu * v_new - lr * g
        else:
            new_params[key] = w + v_new
        new_vel[key] = v_new
    return new_params, {"velocity": new_vel, "step": state.get("step", 0) + 1}


def rmsprop_step(params, grads, state, config: RmspropConfig, trainable=None):
    """One RMSprop step: s' = rho*s + (1-rho)*g^2, w' = w - lr_t*g/(sqrt(s')+eps)."""
    t = state.get("step", 0)
    lr = config.lr * (config.decay**t if config.apply_decay else 1.0)
    sq = state.setdefault("square_avg", {})
    new_params, new_sq = {}, {}
    flags = _trainable(params, trainable)
    for key, w in params.items():
        g = grads.get(key)
        if not flags.get(key, True) or g is None:
            new_params[key] = w
            if key in sq:
                new_sq[key] = sq[key]
            continue
        _check_grad(key, g)
        s = sq.get(key, np.zeros_like(w))
        s_new = config.rho * s + (1.0 - config.rho) * g * g
        new_params[key] = w - lr * g / (np.sqrt(s_new) + config.epsilon)
        new_sq[key] = s_new
    return new_params, {"square_avg": new_sq, "step": t + 1}


def adam_step(params, grads, state, config: AdamConfig, trainable=None):
    """One Adam step with bias correction."""
    t = state.get("step", 0) + 1  # timestep of this update, 1-based
    lr = config.lr * (config.decay ** (t - 1) if config.apply_decay else 1.0)
    ms = state.setdefault("m", {})
    vs = state.setdefault("v", {})
    new_params, new_m, new_v = {}, {}, {}
    c1 = 1.0 - config.b1**t
    c2 = 1.0 - config.b2**t
    flags = _trainable(params, trainable)
    for key, w in params.items():
        g = grads.get(key)
        if not flags.get(key, True) or g is None:
            new_params[key] = w
            if key in ms:
                new_m[key], new_v[key] = ms[key], vs[key]
            continue
        _check_grad(key, g)
        m = config.b1 * ms.get(key, np.zeros_like(w)) + (1.0 - config.b1) * g
        v = config.b2 * vs.get(key, np.zeros_like(w)) + (1.0 - config.b2) * g * g
        new_params[key] = w - lr * (m / c1) / (np.sqrt(v / c2) + config.epsilon)
        new_m[key], new_v[key] = m, v
    return new_params, {"m": new_m, "v": new_v, "step": t}


class Optimizer:
    """Stateful wrapper around the functional steps, bound to a graph."""

    def __init__(self, config):
        self.config = config
        self.state: dict = {"step": 0}
        if isinstance(config, SgdConfig):
            self.kind = "sgd"
        elif isinstance(config, RmspropConfig):
            self.kind = "rmsprop"
        elif isinstance(config, AdamConfig):
            self.kind = "adam"
        else:
            raise ConfigError(f"unknown optimizer config {type(config).__name__}")

    def lr_at(self, epoch: int) -> float:
        if self.kind == "sgd":
            return schedule_lr(self.config.schedule, epoch)
        t = self.state.get("step", 0)
        return self.config.lr * (self.config.decay**t if self.config.apply_decay else 1.0)

    def step(self, graph, grads, epoch: int = 0) -> None:
        """Apply one update to the graph's trainable parameters in place."""
        params = {k: p.value for k, p in graph.params.items()}
        flags = {k: p.trainable for k, p in graph.params.items()}
        if self.kind == "sgd":
            new_params, self.state = sgd_step(params, grads, self.state, self.config, epoch, flags)
        elif self.kind == "rmsprop":
            new_params, self.state = rmsprop_step(params, grads, self.state, self.config, flags)
        else:
            new_params, self.state = adam_step(params, grads, self.state, self.config, flags)
        for key, value in new_params.items():
            graph.params[key].value = value

    # -- persistence --------------------------------------------------

    _SLOT_NAMES = {"sgd": ("velocity",), "rmsprop": ("square_avg",), "adam": ("m", "v")}

    def state_tensors(self) -> dict:
        out = {"__step__": np.array([float(self.state.get("step", 0))], dtype=np.float64)}
        for slot in self._SLOT_NAMES[self.kind]:
            for key, arr in self.state.get(slot, {}).items():
                out[f"{slot}:{key}"] = np.asarray(arr, dtype=np.float64) if np.isscalar(arr) else arr
        return out

    def load_state_tensors(self, tensors: dict) -> None:
        state: dict = {"step": int(tensors["__step__"][0])}
        for slot in self._SLOT_NAMES[self.kind]:
            state[slot] = {}
        for name, arr in tensors.items():
            if name == "__step__":
                continue
            slot, key = name.split(":", 1)
            if slot not in self._SLOT_NAMES[self.kind]:
                raise ConfigError(f"slot {slot!r} does not belong to a {self.kind} optimizer")
            state[slot][key] = arr
        self.state = state

    def save(self, path) -> None:
        write_tensors(path, self.state_tensors())

    def load(self, path) -> None:
        self.load_state_tensors(read_tensors(path))


def make_optimizer(kind: str, **kwargs) -> Optimizer:
    """Build an optimizer from a config dict (experiment JSON form)."""
    kind = kind.lower()
    if kind == "sgd":
        sched = kwargs.pop("schedule", None)
        if isinstance(sched, dict):
            kwargs["schedule"] = ScheduleSpec(**sched)
        elif sched is not None:
            kwargs["schedule"] = sched
        return Optimizer(SgdConfig(**kwargs))
    if kind == "rmsprop":
        return Optimizer(RmspropConfig(**kwargs))
    if kind == "adam":
        return Optimizer(AdamConfig(**kwargs))
    raise ConfigError(f"unknown optimizer kind {kind!r}")
