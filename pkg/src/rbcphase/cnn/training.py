"""SGD-with-momentum training of the binary classifier heads.

Loss is binary cross-entropy on the single sigmoid output, computed from the
logits for stability. L2 weight decay (lambda * w) is added to weight
gradients only, never to biases. The learning rate follows an inverse decay
stepped every `lr_decay_every` epochs:

    lr(epoch) = lr0 / (1 + gamma * floor(epoch / lr_decay_every))

All randomness (init, epoch shuffles, dropout masks) derives from the one
seed in TrainConfig, so single-threaded runs are bit-reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import DivergenceError
from .model import Network


@dataclass(frozen=True)
class TrainConfig:
    lr0: float = 1e-4
    momentum: float = 0.9
    l2_lambda: float = 1e-3
    batch_size: int = 32
    epochs: int = 15
    lr_decay_every: int = 4
    lr_decay_gamma: float = 1.0
    init_std: float = 0.01
    init_scheme: str = "gaussian"  # "gaussian": N(0, init_std); "he": N(0, sqrt(2/fan_in))
    seed: int = 0
    dtype: str = "float64"

    def __post_init__(self):
        if self.lr0 <= 0 or self.l2_lambda < 0 or self.init_std <= 0:
            raise ValueError("rates must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.batch_size < 1 or self.epochs < 1 or self.lr_decay_every < 1:
            raise ValueError("batch size, epochs and decay interval must be >= 1")
        if self.init_scheme not in ("gaussian", "he"):
            raise ValueError(f"init scheme must be gaussian or he, got {self.init_scheme}")
        if self.dtype not in ("float32", "float64"):
            raise ValueError(f"dtype must be float32 or float64, got {self.dtype}")

    def as_text(self) -> str:
        return "\n".join(f"{k} = {v}" for k, v in sorted(self.__dict__.items())) + "\n"


def lr_schedule(epoch: int, config: TrainConfig) -> float:
    """Inverse decay stepped every `lr_decay_every` epochs."""
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    return config.lr0 / (1.0 + config.lr_decay_gamma * (epoch // config.lr_decay_every))


def init_model(model: Network, config: TrainConfig):
    """Gaussian weight init (fixed or fan-in scaled), zero biases."""
    rng = np.random.default_rng(config.seed)
    for p in model.params:
        if p.weight_decay:
            if config.init_scheme == "he":
                fan_in = int(np.prod(p.value.shape[1:])) if p.value.ndim == 4 \
                    else p.value.shape[0]
                std = math.sqrt(2.0 / fan_in)
            else:
                std = config.init_std
            p.value[...] = rng.normal(0.0, std, size=p.value.shape)
        else:
            p.value[...] = 0.0


def bce_with_logits(logits: np.ndarray, targets: np.ndarray):
    """Mean binary cross-entropy and its gradient w.r.t. the logits."""
    z = logits.reshape(-1).astype(np.float64)
    y = targets.reshape(-1).astype(np.float64)
    if z.shape != y.shape:
        raise ValueError(f"logits {z.shape} vs targets {y.shape}")
    loss = float(np.mean(np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))))
    p = _sigmoid(z)
    grad = ((p - y) / z.size).reshape(logits.shape)
    return loss, grad


def _sigmoid(z):
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def predict_proba(model: Network, inputs: np.ndarray) -> np.ndarray:
    """Eval-mode forward, sigmoid of the logit head."""
    return _sigmoid(model.forward(inputs, train=False).reshape(-1))


class SgdMomentum:
    """v <- momentum * v - lr * g;  w <- w + v."""

    def __init__(self, params: list, momentum: float):
        self.params = params
        self.momentum = momentum
        self.velocity = [np.zeros_like(p.value) for p in params]

    def step(self, lr: float):
        for p, v in zip(self.params, self.velocity):
            v *= self.momentum
            v -= lr * p.grad
            p.value += v


def apply_l2(params: list, l2_lambda: float):
    """Add lambda * w to every weight gradient (biases excluded)."""
    if l2_lambda == 0.0:
        return
    for p in params:
        if p.weight_decay:
            p.grad += l2_lambda * p.value


@dataclass
class EpochLog:
    epoch: int
    lr: float
    train_loss: float
    val_loss: float
    val_accuracy: float


@dataclass
class TrainResult:
    model: Network
    log: list = field(default_factory=list)


def evaluate(model: Network, loader, split: str, batch_size: int = 32):
    """Eval-mode loss/accuracy/scores over one split.

    Returns (loss, accuracy, scores) with scores as (probability, target)
    pairs in manifest order.
    """
    losses = []
    weights = []
    scores = []
    hits = 0
    total = 0
    for batch in loader.iter_batches(split, batch_size, shuffle=False):
        logits = model.forward(batch.inputs, train=False)
        loss, _ = bce_with_logits(logits, batch.targets)
        losses.append(loss)
        weights.append(batch.targets.size)
        probs = _sigmoid(logits.reshape(-1))
        hits += int(np.sum((probs >= 0.5) == (batch.targets == 1)))
        total += batch.targets.size
        scores.extend(zip(probs.tolist(), batch.targets.tolist()))
    loss = float(np.average(losses, weights=weights))
    return loss, hits / total, scores


def train(model: Network, loader, config: TrainConfig, log_fn=None) -> TrainResult:
    """Run the full regime; raises DivergenceError carrying the last good state."""
    init_model(model, config)
    model.reseed_dropout(config.seed + 1)
    optimizer = SgdMomentum(model.params, config.momentum)
    log = []
    last_good = model.state()
    for epoch in range(config.epochs):
        lr = lr_schedule(epoch, config)
        epoch_losses = []
        epoch_weights = []
        epoch_seed = (config.seed * 1_000_003 + epoch) % 2**63
        for batch in loader.iter_batches("train", config.batch_size, epoch_seed=epoch_seed):
            logits = model.forward(batch.inputs.astype(config.dtype), train=True)
            loss, grad = bce_with_logits(logits, batch.targets)
            if not math.isfinite(loss):
                raise DivergenceError(f"loss diverged at epoch {epoch}",
                                      last_good_state=last_good, log=log)
            model.backward(grad.astype(config.dtype))
            apply_l2(model.params, config.l2_lambda)
            optimizer.step(lr)
            epoch_losses.append(loss)
            epoch_weights.append(batch.targets.size)
        val_loss, val_acc, _ = evaluate(model, loader, "val", config.batch_size)
        entry = EpochLog(epoch=epoch, lr=lr,
                         train_loss=float(np.average(epoch_losses, weights=epoch_weights)),
                         val_loss=val_loss, val_accuracy=val_acc)
        log.append(entry)
        if log_fn:
            log_fn(entry)
        last_good = model.state()
    return TrainResult(model=model, log=log)
