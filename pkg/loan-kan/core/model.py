# core/model.py
import copy
import logging
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Union

import numpy as np
from scipy.special import expit

from config.model_config import ModelConfig
from core.layers import (BatchNormParams, DenseParams, GruParams, KanLayerParams, LstmParams, ParamGroup,
                         batch_norm_backward, batch_norm_forward, dense_backward, dense_forward,
                         dropout_backward, dropout_forward, kan_layer_backward, kan_layer_forward,
                         rnn_sequence_backward, rnn_sequence_forward)
from utils.data_models import MODEL_NAMES, CellKind, MaskedBatch, Mode
from utils.errors import ConfigError, ShapeError
from utils.tensor_math import SeededRng, TensorMath

logger = logging.getLogger(__name__)


@dataclass
class ModelSpec:
    """Architecture of one recurrent stack. KAN layers are skipped for the plain baselines."""
    cell_kind: CellKind = CellKind.GRU
    input_dim: int = 4 + len(ModelConfig.CONTINUOUS_FEATURES)
    use_kan: bool = True
    rnn1_units: int = ModelConfig.MODEL['rnn1_units']
    rnn2_units: int = ModelConfig.MODEL['rnn2_units']
    kan_output_dim: int = ModelConfig.MODEL['kan_output_dim']
    kan_num_functions: int = ModelConfig.MODEL['kan_num_functions']
    kan_hidden: List[int] = field(default_factory=lambda: list(ModelConfig.MODEL['kan_hidden']))
    spline_order: int = ModelConfig.KAN['spline_order']
    grid_lo: float = ModelConfig.KAN['grid_lo']
    grid_hi: float = ModelConfig.KAN['grid_hi']
    base_weight_std: float = ModelConfig.KAN['base_weight_std']
    dense_units: int = ModelConfig.MODEL['dense_units']
    dropout_rate: float = ModelConfig.MODEL['dropout_rate']
    bn_epsilon: float = ModelConfig.BATCH_NORM['epsilon']
    bn_momentum: float = ModelConfig.BATCH_NORM['momentum']

    def __post_init__(self):
        if isinstance(self.cell_kind, str):
            self.cell_kind = CellKind(self.cell_kind.upper())
        units = [self.input_dim, self.rnn1_units, self.rnn2_units, self.kan_output_dim, self.dense_units,
                 *self.kan_hidden]
        if any(int(u) <= 0 for u in units):
            raise ValueError(f"All layer widths must be positive, got {units}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}")
        if self.kan_num_functions < self.spline_order + 1:
            raise ValueError("kan_num_functions must be at least spline_order + 1")

    @property
    def name(self) -> str:
        return self.cell_kind.value + ("-KAN" if self.use_kan else "")

    @property
    def kan_widths(self) -> List[int]:
        return [self.rnn2_units, *self.kan_hidden, self.kan_output_dim] if self.use_kan else []

    @classmethod
    def for_model(cls, name: str, input_dim: int, **overrides) -> "ModelSpec":
        if name not in MODEL_NAMES:
            raise ConfigError(f"Unknown model {name!r}; expected one of {sorted(MODEL_NAMES)}")
        cell_kind, use_kan = MODEL_NAMES[name]
        return cls(cell_kind=cell_kind, input_dim=input_dim, use_kan=use_kan, **overrides)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data['cell_kind'] = self.cell_kind.value
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ModelSpec":
        return cls(**data)


@dataclass
class ModelParams:
    rnn1: Union[LstmParams, GruParams]
    bn: BatchNormParams
    rnn2: Union[LstmParams, GruParams]
    kan: List[KanLayerParams]
    dense: DenseParams
    head: DenseParams

    def groups(self) -> Dict[str, ParamGroup]:
        """Layer groups in forward order"""
        out: Dict[str, ParamGroup] = {'rnn1': self.rnn1, 'bn': self.bn, 'rnn2': self.rnn2}
        for i, layer in enumerate(self.kan):
            out[f'kan{i}'] = layer
        out['dense'] = self.dense
        out['head'] = self.head
        return out

    def named_tensors(self) -> Dict[str, np.ndarray]:
        return {f'{g}.{n}': arr for g, group in self.groups().items() for n, arr in group.tensors().items()}

    def named_buffers(self) -> Dict[str, np.ndarray]:
        return {f'{g}.{n}': arr for g, group in self.groups().items() for n, arr in group.buffers().items()}

    def zero_grads(self) -> Dict[str, np.ndarray]:
        return {name: np.zeros_like(arr) for name, arr in self.named_tensors().items()}

    def copy(self) -> "ModelParams":
        return copy.deepcopy(self)


def init_params(spec: ModelSpec, rng: SeededRng) -> ModelParams:
    """Glorot-uniform weights, zero biases and spline coefficients, small normal KAN base weights"""
    cell = LstmParams if spec.cell_kind == CellKind.LSTM else GruParams
    rnn1 = cell.initialize(spec.input_dim, spec.rnn1_units, rng)
    bn = BatchNormParams.initialize(spec.rnn1_units, spec.bn_epsilon, spec.bn_momentum)
    rnn2 = cell.initialize(spec.rnn1_units, spec.rnn2_units, rng)
    widths = spec.kan_widths
    kan = [KanLayerParams.initialize(n_in, n_out, rng, spec.kan_num_functions, spec.spline_order,
                                     spec.grid_lo, spec.grid_hi, spec.base_weight_std)
           for n_in, n_out in zip(widths, widths[1:])]
    dense_in = spec.kan_output_dim if spec.use_kan else spec.rnn2_units
    dense = DenseParams.initialize(dense_in, spec.dense_units, rng)
    head = DenseParams.initialize(spec.dense_units, 1, rng)
    return ModelParams(rnn1, bn, rnn2, kan, dense, head)


@dataclass
class ForwardCache:
    rnn1: Any
    bn: Any
    rnn2: Any
    kan: List[Any]
    dense: Any
    relu_in: np.ndarray
    dropout: Any
    head: Any
    batch_stats: Optional[tuple] = None


def forward_with_cache(spec: ModelSpec, params: ModelParams, batch: MaskedBatch, mode: Mode,
                       rng: Optional[SeededRng] = None):
    """
    Full stack forward pass keeping everything the backward pass needs.

    Returns (logits, cache). Batch-norm running statistics are NOT updated
    here; the batch statistics travel in `cache.batch_stats`.
    """
    if batch.feature_dim != spec.input_dim:
        raise ShapeError(f"Model {spec.name} expects {spec.input_dim} features, batch has {batch.feature_dim}")
    seq1, c_rnn1 = rnn_sequence_forward(params.rnn1, batch, return_sequences=True)
    normed, c_bn, stats = batch_norm_forward(params.bn, seq1, batch.mask, mode)
    h2, c_rnn2 = rnn_sequence_forward(params.rnn2, MaskedBatch(normed, batch.mask), return_sequences=False)

    x = h2
    c_kan = []
    for layer in params.kan:
        x, c = kan_layer_forward(layer, x)
        c_kan.append(c)

    pre_relu, c_dense = dense_forward(params.dense, x)
    hidden = TensorMath.activation(pre_relu, 'relu')
    hidden, c_drop = dropout_forward(hidden, spec.dropout_rate, mode, rng)
    logits, c_head = dense_forward(params.head, hidden)
    cache = ForwardCache(c_rnn1, c_bn, c_rnn2, c_kan, c_dense, pre_relu, c_drop, c_head, stats)
    return logits[:, 0], cache


def model_forward(spec: ModelSpec, params: ModelParams, batch: MaskedBatch, mode: Mode = Mode.INFER,
                  rng: Optional[SeededRng] = None) -> np.ndarray:
    """Probabilities of default, one per sequence. Train mode also folds batch statistics into batch norm."""
    logits, cache = forward_with_cache(spec, params, batch, mode, rng)
    if mode == Mode.TRAIN:
        params.bn.update_running(*cache.batch_stats)
    return expit(logits)


def model_backward(spec: ModelSpec, params: ModelParams, cache: ForwardCache,
                   d_logits: np.ndarray) -> Dict[str, np.ndarray]:
    """Gradients of a scalar loss w.r.t. every trainable tensor, given dloss/dlogit per sample"""
    grads = {g: group.zero_grads() for g, group in params.groups().items()}

    d = dense_backward(params.head, d_logits[:, None], cache.head, grads['head'])
    d = dropout_backward(d, cache.dropout)
    d = d * TensorMath.activation_grad(cache.relu_in, 'relu')
    d = dense_backward(params.dense, d, cache.dense, grads['dense'])
    for i in reversed(range(len(params.kan))):
        d = kan_layer_backward(params.kan[i], d, cache.kan[i], grads[f'kan{i}'])
    d = rnn_sequence_backward(params.rnn2, d, cache.rnn2, grads['rnn2'])
    d = batch_norm_backward(params.bn, d, cache.bn, grads['bn'])
    rnn_sequence_backward(params.rnn1, d, cache.rnn1, grads['rnn1'])

    return {f'{g}.{n}': arr for g, group in grads.items() for n, arr in group.items()}
