# core/verification.py
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional

import numpy as np
from scipy.special import expit

from core.layers import DenseParams, dense_backward, dense_forward
from core.model import ModelParams, ModelSpec, forward_with_cache, init_params
from core.training import backward, bce_logit_grad, bce_loss
from utils.data_models import CellKind, MaskedBatch, Mode
from utils.tensor_math import SeededRng

logger = logging.getLogger(__name__)

# scale -> (cell, uses KAN); None marks the dense + sigmoid head on its own
SCALES = {
    'lstm_kan': (CellKind.LSTM, True),
    'gru_kan': (CellKind.GRU, True),
    'lstm': (CellKind.LSTM, False),
    'gru': (CellKind.GRU, False),
    'dense_head': None,
}
TOLERANCES = {'dense_head': 1e-6}
DEFAULT_TOLERANCE = 1e-4


@dataclass
class GradientCheckReport:
    scale: str
    seed: int
    max_rel_error: float
    worst_tensor: str
    tolerance: float
    checked: int
    gradient_norm: float = 0.0
    spline_order: Optional[int] = None
    per_tensor: Dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        # an all-zero backward pass compares nothing
        return self.gradient_norm > 0.0 and self.max_rel_error <= self.tolerance


class GradientVerifier:
    """Compares analytic gradients against central finite differences on miniature models"""

    def __init__(self, step: float = 1e-5, floor: float = 1e-6):
        # entries with |a| and |b| under `floor` are judged on absolute error / floor
        self.step = step
        self.floor = floor

    def _relative_error(self, analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
        scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), self.floor)
        return np.abs(analytic - numeric) / scale

    def _numeric_grad(self, loss_fn: Callable[[], float], tensor: np.ndarray) -> np.ndarray:
        grad = np.zeros_like(tensor)
        it = np.nditer(tensor, flags=['multi_index'])
        for _ in it:
            idx = it.multi_index
            original = tensor[idx]
            tensor[idx] = original + self.step
            plus = loss_fn()
            tensor[idx] = original - self.step
            minus = loss_fn()
            tensor[idx] = original
            grad[idx] = (plus - minus) / (2.0 * self.step)
        return grad

    def _compare(self, scale: str, seed: int, tensors: Dict[str, np.ndarray], analytic: Dict[str, np.ndarray],
                 loss_fn: Callable[[], float], spline_order: Optional[int] = None) -> GradientCheckReport:
        per_tensor, checked = {}, 0
        for name, tensor in tensors.items():
            numeric = self._numeric_grad(loss_fn, tensor)
            per_tensor[name] = float(self._relative_error(analytic[name], numeric).max(initial=0.0))
            checked += tensor.size
        worst = max(per_tensor, key=per_tensor.get)
        norm = float(np.sqrt(sum(np.sum(g * g) for g in analytic.values())))
        report = GradientCheckReport(scale, seed, per_tensor[worst], worst, TOLERANCES.get(scale, DEFAULT_TOLERANCE),
                                     checked, norm, spline_order, per_tensor)
        if norm == 0.0:
            logger.warning(f"Gradient check {scale} seed {seed}: analytic gradient is identically zero")
        logger.info(f"Gradient check {scale} seed {seed}: max relative error {report.max_rel_error:.3e} "
                    f"({worst}) over {checked} entries, gradient norm {norm:.3e}")
        return report

    @staticmethod
    def tiny_spec(cell_kind: CellKind, use_kan: bool, spline_order: int = 2) -> ModelSpec:
        # three knot intervals over [-3, 3]: recurrent outputs in (-1, 1) stay inside the middle one
        return ModelSpec(cell_kind=cell_kind, input_dim=4, use_kan=use_kan, rnn1_units=3, rnn2_units=2,
                         kan_output_dim=1, kan_num_functions=spline_order + 3, spline_order=spline_order,
                         dense_units=3, dropout_rate=0.3)

    @staticmethod
    def tiny_batch(rng: SeededRng) -> MaskedBatch:
        """Batch 2, time 3, 4 features; the second sequence is one step shorter"""
        features = rng.generator.normal(0.0, 1.0, (2, 3, 4))
        mask = np.array([[True, True, True], [True, True, False]])
        features[~mask] = 0.0
        return MaskedBatch(features, mask)

    def gradient_check(self, scale: str = 'gru_kan', seed: int = 0, spec: Optional[ModelSpec] = None,
                       spline_order: int = 2) -> GradientCheckReport:
        """
        Max relative error |a - b| / max(|a|, |b|, floor) between backward and
        central differences over every trainable entry of a miniature model.
        """
        if scale not in SCALES:
            raise ValueError(f"Unknown gradient-check scale {scale!r}; expected one of {sorted(SCALES)}")
        rng = SeededRng(seed)
        labels = np.array([1.0, 0.0])
        if SCALES[scale] is None:
            return self._check_dense_head(seed, rng, labels)

        spec = spec or self.tiny_spec(*SCALES[scale], spline_order=spline_order)
        params = init_params(spec, rng.child('init'))
        self._randomize(params, rng.child('perturb'))
        batch = self.tiny_batch(rng.child('batch'))
        dropout_seed = rng.child('dropout').seed

        def loss_fn() -> float:
            logits, _ = forward_with_cache(spec, params, batch, Mode.TRAIN, SeededRng(dropout_seed))
            return bce_loss(expit(logits), labels).value

        analytic = backward(spec, params, batch, labels, SeededRng(dropout_seed))
        return self._compare(scale, seed, params.named_tensors(), analytic, loss_fn,
                             spec.spline_order if spec.use_kan else None)

    def _check_dense_head(self, seed: int, rng: SeededRng, labels: np.ndarray) -> GradientCheckReport:
        head = DenseParams.initialize(4, 1, rng.child('init'))
        x = rng.child('batch').generator.normal(0.0, 1.0, (2, 4))

        def loss_fn() -> float:
            logits, _ = dense_forward(head, x)
            return bce_loss(expit(logits[:, 0]), labels).value

        logits, cache = dense_forward(head, x)
        probs = expit(logits[:, 0])
        grads = head.zero_grads()
        dense_backward(head, bce_logit_grad(probs, labels)[:, None], cache, grads)
        return self._compare('dense_head', seed, head.tensors(), grads, loss_fn)

    @staticmethod
    def _randomize(params: ModelParams, rng: SeededRng):
        """
        Move spline coefficients, batch-norm affine terms and the dense layers
        off their initial values. Dense biases start positive so the ReLUs
        carry gradient.
        """
        gen = rng.generator
        for layer in params.kan:
            layer.coeffs[...] = gen.normal(0.0, 0.5, layer.coeffs.shape)
        params.bn.gamma[...] = gen.uniform(0.5, 1.5, params.bn.gamma.shape)
        params.bn.beta[...] = gen.normal(0.0, 0.2, params.bn.beta.shape)
        params.dense.W[...] = gen.normal(0.0, 0.3, params.dense.W.shape)
        params.dense.b[...] = gen.uniform(0.5, 1.0, params.dense.b.shape)
        params.head.W[...] = gen.normal(0.0, 1.0, params.head.W.shape)
        params.head.b[...] = gen.normal(0.0, 0.5, params.head.b.shape)


def gradient_check(spec: Optional[ModelSpec] = None, scale: str = 'gru_kan', seed: int = 0,
                   spline_order: int = 2) -> GradientCheckReport:
    return GradientVerifier().gradient_check(scale, seed, spec, spline_order)
