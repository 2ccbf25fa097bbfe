"""Minibatch SGD with classical momentum and the training loop."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .activations import Activation
from .data import Dataset
from .metrics import sparsity_report
from .model import Gradients, ModelParams, ae_loss, forward
from .numerics import ConstraintKind, project_rows, spawn_rngs
from .regularizers import (
    DomainError, Objective, ObjectiveSpec, dae_taylor_terms, objective, penalty)


class TrainingDiverged(FloatingPointError):
    def __init__(self, epoch: int, batch: int, value: float):
        super().__init__(f"non-finite objective {value} at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


@dataclass
class TrainConfig:
    epochs: int = 15
    batch_size: int = 50
    learning_rate: float = 0.003
    momentum: float = 0.9
    constraint: ConstraintKind = field(default_factory=ConstraintKind.unit_norm)
    objective: ObjectiveSpec = field(default_factory=ObjectiveSpec)
    activation: Activation = Activation.RELU
    hidden_units: int = 256
    seed: int = 0
    delta_min: float | None = None

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not 0 <= self.momentum < 1:
            raise ValueError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.batch_size < 1 or self.epochs < 0 or self.hidden_units < 1:
            raise ValueError("batch_size and hidden_units must be >= 1, epochs >= 0")

    @property
    def threshold(self) -> float:
        return self.activation.delta_min if self.delta_min is None else self.delta_min

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs, "batch_size": self.batch_size,
            "learning_rate": self.learning_rate, "momentum": self.momentum,
            "constraint": str(self.constraint), "objective": self.objective.to_dict(),
            "activation": self.activation.value, "hidden_units": self.hidden_units,
            "seed": self.seed, "delta_min": self.delta_min,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(
            epochs=int(d["epochs"]), batch_size=int(d["batch_size"]),
            learning_rate=float(d["learning_rate"]), momentum=float(d["momentum"]),
            constraint=ConstraintKind.parse(d["constraint"]),
            objective=ObjectiveSpec.from_dict(d["objective"]),
            activation=Activation.parse(d["activation"]),
            hidden_units=int(d["hidden_units"]), seed=int(d["seed"]),
            delta_min=d.get("delta_min"))


@dataclass
class EpochRecord:
    epoch: int
    recon_loss: float
    reg_value: float | None
    avg_activation_fraction: float
    dead_unit_fraction: float
    mean_pre_activation: float
    per_unit_mean_a: list[float]
    per_unit_var_a: list[float]


@dataclass
class TrainHistory:
    config: TrainConfig
    records: list[EpochRecord]
    params: ModelParams
    initial_record: EpochRecord | None = None

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "initial_record": None if self.initial_record is None else asdict(self.initial_record),
            "records": [asdict(r) for r in self.records],
            "params": self.params.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainHistory":
        init = d.get("initial_record")
        return cls(TrainConfig.from_dict(d["config"]),
                   [EpochRecord(**r) for r in d["records"]],
                   ModelParams.from_dict(d["params"]),
                   None if init is None else EpochRecord(**init))

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f)

    @classmethod
    def load(cls, path) -> "TrainHistory":
        with open(path) as f:
            return cls.from_dict(json.load(f))


def sgd_momentum_step(params: ModelParams, grads: Gradients, velocity: Gradients,
                      lr: float, mu: float,
                      constraint: ConstraintKind) -> tuple[ModelParams, Gradients]:
    """``v' = mu v - lr g``, ``theta' = theta + v'``, then project the rows of W.

    The velocity itself is never projected; biases are unconstrained.
    """
    v = Gradients(mu * velocity.dW - lr * grads.dW,
                  mu * velocity.db_e - lr * grads.db_e,
                  mu * velocity.db_d - lr * grads.db_d)
    new = ModelParams(project_rows(params.W + v.dW, constraint),
                      params.b_e + v.db_e, params.b_d + v.db_d)
    return new, v


def regularizer_value(spec: ObjectiveSpec, X: np.ndarray, params: ModelParams,
                      kind: Activation, cache=None) -> float | None:
    """Penalty value on ``X`` for logging, without the coefficient.

    Denoising reports its marginal second-order penalty; the sampled eDAE term
    has no deterministic value and is reported as ``None``.
    """
    k = spec.kind
    if k is Objective.AE or k is Objective.EDAE:
        return None
    if k is Objective.DAE:
        t1, t2, t3 = dae_taylor_terms(X, params, kind, cache)
        return float(np.mean(t1 + t2 + t3))
    try:
        return penalty(spec, X, params, kind)[0]
    except DomainError:
        return None


def evaluate(config: TrainConfig, X: np.ndarray, params: ModelParams,
             epoch: int) -> EpochRecord:
    kind = config.activation
    cache = forward(X, params, kind)
    rep = sparsity_report(cache.h, cache.a, config.threshold)
    return EpochRecord(
        epoch=epoch,
        recon_loss=ae_loss(cache),
        reg_value=regularizer_value(config.objective, X, params, kind, cache),
        avg_activation_fraction=rep.avg_activation_fraction,
        dead_unit_fraction=rep.dead_unit_fraction,
        mean_pre_activation=float(rep.per_unit_mean_a.mean()),
        per_unit_mean_a=rep.per_unit_mean_a.tolist(),
        per_unit_var_a=rep.per_unit_var_a.tolist(),
    )


StepHook = Callable[[int, int, ModelParams, np.ndarray], None]


def init_params(config: TrainConfig, n: int) -> ModelParams:
    init_rng = spawn_rngs(config.seed, 3)[0]
    params = ModelParams.initialize(config.hidden_units, n, init_rng)
    params.W = project_rows(params.W, config.constraint)
    return params


def train(config: TrainConfig, data: Dataset, step_hook: StepHook | None = None,
          params: ModelParams | None = None) -> TrainHistory:
    """Train from a seeded initialization and record full-data metrics per epoch.

    Three child streams of ``config.seed`` drive initialization, epoch
    shuffling and corruption sampling, so changing the number of corruption
    draws leaves the data order untouched. ``step_hook`` is called before
    every update with ``(epoch, batch_index, params, batch)``.
    """
    X = data.samples
    N, n = X.shape
    _, shuffle_rng, noise_rng = spawn_rngs(config.seed, 3)
    if params is None:
        params = init_params(config, n)
    velocity = Gradients.zeros_like(params)
    initial = evaluate(config, X, params, 0)
    records = []
    bs = config.batch_size
    for epoch in range(1, config.epochs + 1):
        order = shuffle_rng.permutation(N)
        for b, start in enumerate(range(0, N, bs)):
            batch = X[order[start:start + bs]]
            if step_hook is not None:
                step_hook(epoch, b, params, batch)
            value, grads = objective(config.objective, batch, params,
                                     config.activation, noise_rng)
            if not math.isfinite(value) or not np.all(np.isfinite(grads.dW)):
                raise TrainingDiverged(epoch, b, value)
            params, velocity = sgd_momentum_step(
                params, grads, velocity, config.learning_rate, config.momentum,
                config.constraint)
        records.append(evaluate(config, X, params, epoch))
    return TrainHistory(config, records, params, initial)
