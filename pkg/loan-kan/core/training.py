# core/training.py
import logging
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.special import expit

from config.experiment_schema import TrainConfig
from config.model_config import ModelConfig
from core.data_pipeline import stack_samples
from core.model import ModelParams, ModelSpec, forward_with_cache, init_params, model_backward, model_forward
from utils.data_models import LossValue, MaskedBatch, Mode, Sample, TrainingTrace
from utils.errors import SamplingError, ShapeError
from utils.tensor_math import SeededRng

logger = logging.getLogger(__name__)

PROB_CLIP = ModelConfig.LOSS['prob_clip']


def bce_loss(probs, labels, clip: float = PROB_CLIP) -> LossValue:
    """Mean binary cross-entropy with probabilities clipped to [clip, 1 - clip]"""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if probs.shape != labels.shape:
        raise ShapeError(f"probs {probs.shape} and labels {labels.shape} differ")
    if probs.size == 0:
        raise ShapeError("Loss of an empty batch is undefined")
    p = np.clip(probs, clip, 1.0 - clip)
    losses = -(labels * np.log(p) + (1.0 - labels) * np.log1p(-p))
    return LossValue(float(losses.mean()), int(probs.size))


def bce_logit_grad(probs: np.ndarray, labels: np.ndarray, clip: float = PROB_CLIP) -> np.ndarray:
    """d(mean BCE)/d(logit); zero where the probability was clipped"""
    grad = (probs - labels) / probs.size
    return np.where((probs < clip) | (probs > 1.0 - clip), 0.0, grad)


def loss_and_grads(spec: ModelSpec, params: ModelParams, batch: MaskedBatch, labels,
                   rng: Optional[SeededRng] = None) -> Tuple[LossValue, Dict[str, np.ndarray], tuple]:
    """Train-mode loss, gradients and the batch-norm batch statistics (not applied)"""
    labels = np.asarray(labels, dtype=np.float64)
    logits, cache = forward_with_cache(spec, params, batch, Mode.TRAIN, rng)
    probs = expit(logits)
    loss = bce_loss(probs, labels)
    grads = model_backward(spec, params, cache, bce_logit_grad(probs, labels))
    return loss, grads, cache.batch_stats


def backward(spec: ModelSpec, params: ModelParams, batch: MaskedBatch, labels,
             rng: Optional[SeededRng] = None) -> Dict[str, np.ndarray]:
    """Gradient of mean BCE w.r.t. every trainable tensor, keyed like `ModelParams.named_tensors`"""
    _, grads, _ = loss_and_grads(spec, params, batch, labels, rng)
    return grads


@dataclass
class OptimizerState:
    """Adam moments per tensor name"""
    learning_rate: float = ModelConfig.TRAIN['learning_rate']
    beta1: float = ModelConfig.TRAIN['beta1']
    beta2: float = ModelConfig.TRAIN['beta2']
    eps_opt: float = ModelConfig.TRAIN['eps_opt']
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def from_config(cls, cfg: TrainConfig) -> "OptimizerState":
        return cls(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps_opt)


def optimizer_step(state: OptimizerState, params, grads: Dict[str, np.ndarray]):
    """
    One bias-corrected Adam update applied in place.

    `params` is a ModelParams (names like "rnn1.W_z") or a single layer
    group (names like "coeffs").
    """
    tensors = params.named_tensors() if hasattr(params, 'named_tensors') else params.tensors()
    if set(grads) != set(tensors):
        missing = sorted(set(tensors) ^ set(grads))
        raise ShapeError(f"Gradient names do not match parameters: {missing[:5]}")
    state.step += 1
    t = state.step
    for name, g in grads.items():
        p = tensors[name]
        if g.shape != p.shape:
            raise ShapeError(f"Gradient for {name} has shape {g.shape}, parameter has {p.shape}")
        m = state.m.setdefault(name, np.zeros_like(p))
        v = state.v.setdefault(name, np.zeros_like(p))
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        m_hat = m / (1.0 - state.beta1 ** t)
        v_hat = v / (1.0 - state.beta2 ** t)
        p -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps_opt)


def _batch_indices(order: np.ndarray, batch_size: int) -> List[np.ndarray]:
    """Split a permutation into mini-batches; a trailing batch of one joins its predecessor"""
    batches = [order[i:i + batch_size] for i in range(0, len(order), batch_size)]
    if len(batches) > 1 and len(batches[-1]) < 2:
        last = batches.pop()
        batches[-1] = np.concatenate([batches[-1], last])
    return batches


class Trainer:
    """Mini-batch training with early stopping on validation loss"""

    def __init__(self, cfg: Optional[TrainConfig] = None):
        self.cfg = cfg or TrainConfig()

    def train(self, spec: ModelSpec, samples: Sequence[Sample], init_seed: Optional[int] = None,
              trace_path: Optional[str] = None) -> Tuple[ModelParams, TrainingTrace]:
        """
        Train a fresh model on `samples`.

        Random streams derive from cfg.seed: "init" (unless `init_seed` is
        given), "validation", "shuffle" and "dropout". Returns the parameters
        of the best epoch by validation loss (training loss when there is no
        validation split) together with the per-epoch trace.
        """
        cfg = self.cfg
        if len(samples) == 0:
            raise SamplingError("No training samples")
        labels = np.array([s.label for s in samples], dtype=np.float64)
        if labels.min() == labels.max():
            raise SamplingError("Training data contains a single class")

        root = SeededRng(cfg.seed)
        init_rng = SeededRng(init_seed).child('init') if init_seed is not None else root.child('init')
        params = init_params(spec, init_rng)
        trace = TrainingTrace()
        if cfg.epochs == 0:
            self._write_trace(trace, trace_path)
            return params, trace

        train_idx, val_idx = self._split(len(samples), root.child('validation'))
        if len(train_idx) < 2:
            raise SamplingError("Need at least 2 training samples after the validation split")
        train_batch = stack_samples([samples[i] for i in train_idx])
        train_labels = labels[train_idx]
        val_batch = stack_samples([samples[i] for i in val_idx]) if len(val_idx) else None
        val_labels = labels[val_idx]

        optimizer = OptimizerState.from_config(cfg)
        shuffle_rng = root.child('shuffle')
        dropout_rng = root.child('dropout')
        best_params, best_loss, wait = params.copy(), np.inf, 0
        start = time.perf_counter()
        logger.info(f"Training {spec.name}: {len(train_idx)} train / {len(val_idx)} validation samples, "
                    f"{cfg.epochs} epochs")

        for epoch in range(1, cfg.epochs + 1):
            running = 0.0
            for idx in _batch_indices(shuffle_rng.generator.permutation(len(train_idx)), cfg.batch_size):
                loss, grads, stats = loss_and_grads(spec, params, train_batch.subset(idx), train_labels[idx],
                                                    dropout_rng)
                params.bn.update_running(*stats)
                optimizer_step(optimizer, params, grads)
                running += loss.value * len(idx)
            train_loss = running / len(train_idx)

            if val_batch is not None:
                val_loss = bce_loss(model_forward(spec, params, val_batch, Mode.INFER), val_labels).value
            else:
                val_loss = float('nan')
            monitored = train_loss if val_batch is None else val_loss

            trace.epochs.append(epoch)
            trace.train_loss.append(train_loss)
            trace.val_loss.append(val_loss)
            trace.elapsed_ms.append((time.perf_counter() - start) * 1000.0)
            logger.debug(f"{spec.name} epoch {epoch}: train {train_loss:.5f}, validation {val_loss:.5f}")

            if monitored < best_loss:
                best_loss, best_params, wait = monitored, params.copy(), 0
                trace.best_epoch = epoch
            else:
                wait += 1
                if wait >= cfg.early_stop_patience:
                    logger.info(f"Early stop after epoch {epoch}; best epoch {trace.best_epoch}")
                    break

        logger.info(f"{spec.name} trained: best epoch {trace.best_epoch}, loss {best_loss:.5f}")
        self._write_trace(trace, trace_path)
        return best_params, trace

    def _split(self, n: int, rng: SeededRng) -> Tuple[np.ndarray, np.ndarray]:
        n_val = int(round(self.cfg.validation_fraction * n))
        if n_val == 0:
            return np.arange(n), np.arange(0)
        order = rng.generator.permutation(n)
        return np.sort(order[n_val:]), np.sort(order[:n_val])

    @staticmethod
    def _write_trace(trace: TrainingTrace, path: Optional[str]):
        if path is None:
            return
        pd.DataFrame({
            'epoch': trace.epochs,
            'train_loss': trace.train_loss,
            'val_loss': trace.val_loss,
            'elapsed_ms': trace.elapsed_ms,
        }).to_csv(path, index=False)


def predict(spec: ModelSpec, params: ModelParams, samples: Sequence[Sample], batch_size: int = 1024) -> np.ndarray:
    """Infer-mode probabilities for samples, evaluated in chunks"""
    if len(samples) == 0:
        return np.zeros(0)
    target = max(s.length for s in samples)
    chunks = [model_forward(spec, params, stack_samples(samples[i:i + batch_size], target), Mode.INFER)
              for i in range(0, len(samples), batch_size)]
    return np.concatenate(chunks)


def train(spec: ModelSpec, samples: Sequence[Sample], cfg: Optional[TrainConfig] = None,
          init_seed: Optional[int] = None) -> Tuple[ModelParams, TrainingTrace]:
    return Trainer(cfg).train(spec, samples, init_seed=init_seed)
