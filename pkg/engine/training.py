"""Pré-treino contrastivo com SGD + momentum, warmup linear e decaimento cosseno."""

import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from database.checkpoint_store import write_checkpoint
from engine import autodiff as ad
from engine.augment import AugmentConfig, make_batch_views, sample_speed_pair, worker_threads
from engine.errors import ConfigError, NonFiniteLossError, ShapeMismatchError
from engine.loss import (
    LossConfig,
    cross_affinity_batch,
    original_views,
    soft_info_nce,
    uniform_affinity,
    vanilla_info_nce,
)
from engine.model import ModelConfig, SvaclrModel, forward_batch
from engine.rng import Rng

VARIANTS = ("infonce_noaug", "infonce_speed", "soft_infonce")


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 64
    peak_lr: float = 0.01
    warmup_epochs: int = 3
    final_lr_ratio: float = 0.15625
    momentum: float = 0.9
    seed: Optional[int] = None
    variant: str = "soft_infonce"
    checkpoint_every: int = 0
    log_wall_time: bool = False
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    model: ModelConfig = field(default_factory=ModelConfig)

    def validate(self):
        if self.epochs < 1 or not 0 <= self.warmup_epochs < self.epochs:
            raise ConfigError("exige epochs >= 1 e 0 <= warmup_epochs < epochs")
        if self.batch_size < 2:
            raise ConfigError("batch_size deve ser >= 2")
        if self.peak_lr < 0:
            raise ConfigError("peak_lr deve ser >= 0")
        if not 0 <= self.momentum < 1:
            raise ConfigError("momentum deve estar em [0, 1)")
        if self.variant not in VARIANTS:
            raise ConfigError(f"variante desconhecida: {self.variant}")
        if self.checkpoint_every < 0:
            raise ConfigError("checkpoint_every deve ser >= 0")
        self.augment.validate()
        self.loss.validate()
        self.model.validate()
        return self

    def to_dict(self):
        return asdict(self)


@dataclass
class OptimizerState:
    velocity: dict
    step: int = 0

    @classmethod
    def zeros_like(cls, params):
        return cls({name: np.zeros_like(value) for name, value in params.items()})


@dataclass
class MetricsRecord:
    step: int
    epoch: int
    lr: float
    loss: float
    tau1: int
    tau2: int
    mean_lambda: Optional[list]
    wall_time_ms: Optional[float] = None

    def to_json(self):
        record = asdict(self)
        if record["wall_time_ms"] is None:
            record.pop("wall_time_ms")
        return json.dumps(record, sort_keys=True)


def lr_at(config, step, steps_per_epoch):
    """Rampa linear de peak/10 até peak no warmup; depois cosseno até peak*final_lr_ratio"""
    peak = config.peak_lr
    final = peak * config.final_lr_ratio
    warmup_steps = config.warmup_epochs * steps_per_epoch
    total_steps = config.epochs * steps_per_epoch
    if step < warmup_steps:
        start = peak / 10.0
        return start + (peak - start) * step / warmup_steps
    decay_steps = total_steps - 1 - warmup_steps
    if decay_steps <= 0:
        return final
    progress = min(1.0, (step - warmup_steps) / decay_steps)
    return final + (peak - final) * 0.5 * (1.0 + math.cos(math.pi * progress))


def sgd_step(params, grads, state, lr, momentum):
    """v <- momentum*v + g ; p <- p - lr*v (retorna cópias novas)"""
    new_params = {}
    new_velocity = {}
    for name, value in params.items():
        grad = grads[name]
        velocity = state.velocity[name]
        if grad.shape != value.shape or velocity.shape != value.shape:
            raise ShapeMismatchError(f"sgd_step[{name}]", value.shape, grad.shape)
        new_velocity[name] = momentum * velocity + grad
        new_params[name] = value - lr * new_velocity[name]
    return new_params, OptimizerState(new_velocity, state.step + 1)


def compute_loss(config, batch, params):
    """Loss da variante configurada; retorna (loss, λ do lote ou None)"""
    if config.variant == "infonce_noaug":
        loss = vanilla_info_nce(original_views(batch.Z_a), original_views(batch.Z_v), config.loss)
        return loss, None
    if config.variant == "infonce_speed" or config.loss.uniform_affinity:
        lam = uniform_affinity(batch.num_clips)
    else:
        lam = cross_affinity_batch(batch.Y_a, batch.Y_v, config.loss.mapping, params)
    return soft_info_nce(batch, lam, config.loss), lam.data


def _speed_pair(config, rng):
    if config.variant == "infonce_noaug":
        return 1, 1
    return sample_speed_pair(rng, config.augment)


def pretrain(dataset, config, metrics_path=None, checkpoint_dir=None, verbose=True, threads=None):
    """Treina o modelo; embaralhamento e velocidades dependem só de (seed, época, passo)"""
    config.validate()
    if len(dataset) < config.batch_size:
        raise ConfigError(
            f"dataset com {len(dataset)} clipes é menor que batch_size={config.batch_size}"
        )
    try:
        dataset.spec.validate(max_speed=config.augment.max_speed)
    except ConfigError as e:
        print(f"⚠️ {e}")

    threads = worker_threads() if threads is None else threads
    seed = config.seed or 0
    model = SvaclrModel.initialize(config.model, Rng.derive(seed, "init"), config.loss.mapping)
    state = OptimizerState.zeros_like(model.params)
    steps_per_epoch = len(dataset) // config.batch_size
    metrics = []

    metrics_file = None
    if metrics_path is not None:
        Path(metrics_path).parent.mkdir(parents=True, exist_ok=True)
        metrics_file = open(metrics_path, "w", encoding="utf-8")

    if verbose:
        print(f"\n🚀 Pré-treino '{config.variant}': {config.epochs} épocas, "
              f"{steps_per_epoch} passos/época, S={config.augment.max_speed}, "
              f"{model.parameter_count()} parâmetros")

    try:
        for epoch in range(config.epochs):
            order = Rng.derive(seed, "shuffle", epoch).permutation(len(dataset))
            epoch_losses = []
            for b in range(steps_per_epoch):
                started = time.perf_counter()
                global_step = epoch * steps_per_epoch + b
                step_rng = Rng.derive(seed, "step", epoch, b)
                tau1, tau2 = _speed_pair(config, step_rng)
                indices = order[b * config.batch_size: (b + 1) * config.batch_size]
                clips = [dataset.clips[k] for k in indices]
                viewsets = make_batch_views(clips, tau1, tau2, step_rng, config.augment, threads)

                tape = ad.Tape()
                params = tape.bind(model.params)
                batch = forward_batch(params, viewsets, model.config)
                loss, lam = compute_loss(config, batch, params)

                lr = lr_at(config, global_step, steps_per_epoch)
                value = loss.item()
                if not math.isfinite(value):
                    raise NonFiniteLossError(global_step, lr, value)

                grads_by_node = ad.backward(tape, loss)
                grads = {name: grads_by_node[t.node_id] for name, t in params.items()}
                model.params, state = sgd_step(model.params, grads, state, lr, config.momentum)

                record = MetricsRecord(
                    step=global_step,
                    epoch=epoch,
                    lr=lr,
                    loss=value,
                    tau1=tau1,
                    tau2=tau2,
                    mean_lambda=None if lam is None else lam.mean(axis=0).tolist(),
                    wall_time_ms=(time.perf_counter() - started) * 1000.0
                    if config.log_wall_time else None,
                )
                metrics.append(record)
                epoch_losses.append(value)
                if metrics_file is not None:
                    metrics_file.write(record.to_json() + "\n")

            if verbose:
                print(f"Época {epoch + 1}/{config.epochs}: loss média {np.mean(epoch_losses):.4f} "
                      f"(lr final {metrics[-1].lr:.5f})")
            if checkpoint_dir is not None and config.checkpoint_every > 0 \
                    and (epoch + 1) % config.checkpoint_every == 0:
                path = Path(checkpoint_dir) / f"checkpoint_epoch{epoch + 1:03d}.svck"
                write_checkpoint(model, path)
                if verbose:
                    print(f"💾 Checkpoint salvo em: {path}")
    finally:
        if metrics_file is not None:
            metrics_file.close()

    return model, metrics


def read_metrics(path):
    with open(path, encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]
