"""Training loop: Adam, plateau learning-rate halving, adaptive dropout.

The objective is the CRF sequence NLL, or per-position softmax cross-
entropy when the CRF flag is off (the ablation arm). All shuffling and
dropout randomness flows from the config seed through derived streams,
so a fixed seed reproduces the run bit-for-bit.
"""

import numpy as np

from .alphabet import decode_labels, encode_target
from .config import ModelConfig, TrainConfig
from .crf import nll, nll_backward, viterbi, zero_crf
from .dropout import rate_update
from .errors import ConfigError, TrainingDiverged
from .model import backward, forward, init_params, named_parameters
from .rng import SplitMix64

PLATEAU_PATIENCE = 3
LR_FLOOR_FACTOR = 100.0


class Adam:
    """Standard Adam with bias correction, keyed by parameter name."""

    def __init__(self, beta1: float, beta2: float, eps: float):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = {}
        self.v = {}
        self.t = 0

    def step(self, params, grads: dict, lr: float) -> None:
        self.t += 1
        for name, p in named_parameters(params):
            if name not in grads:
                continue
            g = grads[name]
            m = self.m.get(name)
            if m is None:
                m = np.zeros_like(p)
                self.m[name] = m
                self.v[name] = np.zeros_like(p)
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            mhat = m / (1.0 - self.beta1**self.t)
            vhat = v / (1.0 - self.beta2**self.t)
            p -= lr * mhat / (np.sqrt(vhat) + self.eps)


def _ce_loss_grad(emissions: np.ndarray, target: np.ndarray):
    """Per-position softmax cross-entropy, summed over the sequence."""
    t_idx = np.arange(emissions.shape[0])
    m = emissions.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(emissions - m).sum(axis=1))
    loss = float((lse - emissions[t_idx, target]).sum())
    grad = np.exp(emissions - lse[:, None])
    grad[t_idx, target] -= 1.0
    return loss, grad


def _sample_loss_grads(params, image, target, use_crf, rng):
    emissions, ctx = forward(image, params, training=True, rng=rng)
    if use_crf:
        loss, grad_e, gt, gs, gen = nll_backward(emissions, target, params.crf)
        grads, _ = backward(ctx, params, grad_e)
        grads["crf.transitions"] = gt
        grads["crf.start"] = gs
        grads["crf.end"] = gen
    else:
        loss, grad_e = _ce_loss_grad(emissions, target)
        grads, _ = backward(ctx, params, grad_e)
    return loss, grads


def _val_metrics(params, images, targets, texts, use_crf):
    """(mean loss, word accuracy) on the validation set, eval mode."""
    crf = params.crf if use_crf else zero_crf(params.config.n_labels)
    total = 0.0
    hits = 0
    for image, target, text in zip(images, targets, texts):
        emissions, _ = forward(image, params)
        if use_crf:
            total += nll(emissions, target, params.crf)
        else:
            loss, _ = _ce_loss_grad(emissions, target)
            total += loss
        path, _ = viterbi(emissions, crf)
        if decode_labels(path) == text.casefold():
            hits += 1
    return total / len(images), hits / len(images)


def train(
    dataset,
    val_set,
    config: TrainConfig = TrainConfig(),
    model_config: ModelConfig = ModelConfig(),
    on_epoch=None,
):
    """Returns (trained ModelParams, per-epoch metrics history)."""
    if not dataset or not val_set:
        raise ConfigError("train and validation sets must be nonempty")
    root = SplitMix64(config.seed)
    params = init_params(root.derive(0), model_config, config.dropout)

    train_images = [s.image for s in dataset]
    train_targets = [encode_target(s.text, model_config.max_len) for s in dataset]
    val_images = [s.image for s in val_set]
    val_targets = [encode_target(s.text, model_config.max_len) for s in val_set]
    val_texts = [s.text for s in val_set]

    optimizer = Adam(config.beta1, config.beta2, config.eps)
    lr = config.lr
    lr_floor = config.lr / LR_FLOOR_FACTOR
    best_val = np.inf
    plateau = 0
    history = []
    n = len(dataset)

    for epoch in range(config.epochs):
        rate_used = params.dropout.rate
        lr_used = lr
        order = list(range(n))
        root.derive(1000 + epoch).shuffle(order)
        total_loss = 0.0
        for batch_index, lo in enumerate(range(0, n, config.batch_size)):
            batch = order[lo : lo + config.batch_size]
            batch_rng = root.derive((epoch << 20) | batch_index)
            batch_seed = batch_rng.state
            grads_acc = {}
            batch_loss = 0.0
            for idx in batch:
                loss, grads = _sample_loss_grads(
                    params, train_images[idx], train_targets[idx],
                    config.use_crf, batch_rng,
                )
                batch_loss += loss
                for name, g in grads.items():
                    if name in grads_acc:
                        grads_acc[name] += g
                    else:
                        grads_acc[name] = g
            scale = 1.0 / len(batch)
            batch_loss *= scale
            if not np.isfinite(batch_loss):
                raise TrainingDiverged(epoch + 1, batch_index, batch_seed)
            for g in grads_acc.values():
                g *= scale
            optimizer.step(params, grads_acc, lr)
            total_loss += batch_loss * len(batch)
        train_loss = total_loss / n

        val_loss, val_acc = _val_metrics(
            params, val_images, val_targets, val_texts, config.use_crf
        )
        row = {
            "epoch": epoch + 1,
            "train_loss": train_loss,
            "val_loss": val_loss,
            "val_acc": val_acc,
            "dropout_rate": rate_used,
            "lr": lr_used,
        }
        history.append(row)
        if on_epoch is not None:
            on_epoch(row)

        if val_loss < best_val:
            best_val = val_loss
            plateau = 0
        else:
            plateau += 1
            if plateau >= PLATEAU_PATIENCE:
                lr = max(lr / 2.0, lr_floor)
                plateau = 0
        params.dropout = rate_update(params.dropout, train_loss, val_loss)
    return params, history
