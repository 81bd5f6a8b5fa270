# core/layers.py
"""
Layers of the recurrent KAN stack: masking-aware LSTM/GRU, batch
normalization, spline (KAN) layers, dense and dropout.

Every `*_forward` returns `(output, cache)` and has a `*_backward` that takes
the upstream gradient, that cache and a dict of gradient accumulators keyed by
tensor name. Activations are row vectors: a weight of shape (out, in) maps
x -> x @ W.T.
"""
import logging
from dataclasses import dataclass
from typing import ClassVar, Dict, Optional, Tuple, Union

import numpy as np
from scipy import linalg
from scipy.special import expit

from utils.data_models import MaskedBatch, Mode
from utils.errors import MaskError, ShapeError
from utils.tensor_math import SeededRng, TensorMath

logger = logging.getLogger(__name__)

Grads = Dict[str, np.ndarray]


class ParamGroup:
    """Named trainable tensors plus non-trainable buffers of one layer"""
    TRAINABLE: ClassVar[Tuple[str, ...]] = ()
    BUFFERS: ClassVar[Tuple[str, ...]] = ()

    def tensors(self) -> Dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in self.TRAINABLE}

    def buffers(self) -> Dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in self.BUFFERS}

    def zero_grads(self) -> Grads:
        return {name: np.zeros_like(arr) for name, arr in self.tensors().items()}


# ---------------------------------------------------------------------------
# LSTM
# ---------------------------------------------------------------------------

@dataclass
class LstmParams(ParamGroup):
    """Gate weights act on the concatenation [h_{t-1}, x_t]"""
    W_f: np.ndarray
    W_i: np.ndarray
    W_c: np.ndarray
    W_o: np.ndarray
    b_f: np.ndarray
    b_i: np.ndarray
    b_c: np.ndarray
    b_o: np.ndarray

    TRAINABLE: ClassVar[Tuple[str, ...]] = ('W_f', 'W_i', 'W_c', 'W_o', 'b_f', 'b_i', 'b_c', 'b_o')
    GATES: ClassVar[Tuple[str, ...]] = ('f', 'i', 'c', 'o')

    def __post_init__(self):
        shape = self.W_f.shape
        for gate in self.GATES:
            if getattr(self, f'W_{gate}').shape != shape:
                raise ShapeError(f"LSTM gate W_{gate} has shape {getattr(self, f'W_{gate}').shape}, expected {shape}")
            if getattr(self, f'b_{gate}').shape != (shape[0],):
                raise ShapeError(f"LSTM bias b_{gate} must have shape ({shape[0]},)")
        if shape[1] <= shape[0]:
            raise ShapeError("LSTM gate matrices must be hidden_dim x (hidden_dim + input_dim)")

    @property
    def hidden_dim(self) -> int:
        return self.W_f.shape[0]

    @property
    def input_dim(self) -> int:
        return self.W_f.shape[1] - self.W_f.shape[0]

    @classmethod
    def zeros(cls, input_dim: int, hidden_dim: int) -> "LstmParams":
        w = {f'W_{g}': np.zeros((hidden_dim, hidden_dim + input_dim)) for g in cls.GATES}
        b = {f'b_{g}': np.zeros(hidden_dim) for g in cls.GATES}
        return cls(**w, **b)

    @classmethod
    def initialize(cls, input_dim: int, hidden_dim: int, rng: SeededRng) -> "LstmParams":
        params = cls.zeros(input_dim, hidden_dim)
        for g in cls.GATES:
            setattr(params, f'W_{g}', TensorMath.glorot_uniform(rng, hidden_dim, hidden_dim + input_dim))
        return params


def lstm_step_forward(p: LstmParams, h_prev: np.ndarray, c_prev: np.ndarray, x_t: np.ndarray):
    z = np.concatenate([h_prev, x_t], axis=1)
    f = expit(z @ p.W_f.T + p.b_f)
    i = expit(z @ p.W_i.T + p.b_i)
    g = np.tanh(z @ p.W_c.T + p.b_c)
    o = expit(z @ p.W_o.T + p.b_o)
    c = f * c_prev + i * g
    tanh_c = np.tanh(c)
    h = o * tanh_c
    return h, c, (z, f, i, g, o, c_prev, tanh_c)


def lstm_step_backward(p: LstmParams, dh: np.ndarray, dc: np.ndarray, cache, grads: Grads):
    """Returns (dh_prev, dx_t, dc_prev)"""
    z, f, i, g, o, c_prev, tanh_c = cache
    do = dh * tanh_c
    dc = dc + dh * o * (1.0 - tanh_c * tanh_c)
    pre = {
        'f': dc * c_prev * f * (1.0 - f),
        'i': dc * g * i * (1.0 - i),
        'c': dc * i * (1.0 - g * g),
        'o': do * o * (1.0 - o),
    }
    dz = np.zeros_like(z)
    for gate, da in pre.items():
        grads[f'W_{gate}'] += da.T @ z
        grads[f'b_{gate}'] += da.sum(axis=0)
        dz += da @ getattr(p, f'W_{gate}')
    hidden = p.hidden_dim
    return dz[:, :hidden], dz[:, hidden:], dc * f


def lstm_step(p: LstmParams, h_prev, c_prev, x_t):
    """Single LSTM step on vectors (or row batches). Returns (h_t, c_t)"""
    h_prev, c_prev, x_t, squeeze = _as_rows(h_prev, c_prev, x_t)
    _check_step_dims(p.hidden_dim, p.input_dim, h_prev, x_t, c_prev)
    h, c, _ = lstm_step_forward(p, h_prev, c_prev, x_t)
    return (h[0], c[0]) if squeeze else (h, c)


# ---------------------------------------------------------------------------
# GRU
# ---------------------------------------------------------------------------

@dataclass
class GruParams(ParamGroup):
    W_z: np.ndarray
    U_z: np.ndarray
    b_z: np.ndarray
    W_r: np.ndarray
    U_r: np.ndarray
    b_r: np.ndarray
    W_h: np.ndarray
    U_h: np.ndarray
    b_h: np.ndarray

    TRAINABLE: ClassVar[Tuple[str, ...]] = ('W_z', 'U_z', 'b_z', 'W_r', 'U_r', 'b_r', 'W_h', 'U_h', 'b_h')
    GATES: ClassVar[Tuple[str, ...]] = ('z', 'r', 'h')

    def __post_init__(self):
        hidden, inputs = self.W_z.shape
        for gate in self.GATES:
            if getattr(self, f'W_{gate}').shape != (hidden, inputs):
                raise ShapeError(f"GRU W_{gate} must be {(hidden, inputs)}")
            if getattr(self, f'U_{gate}').shape != (hidden, hidden):
                raise ShapeError(f"GRU U_{gate} must be {(hidden, hidden)}")
            if getattr(self, f'b_{gate}').shape != (hidden,):
                raise ShapeError(f"GRU b_{gate} must be ({hidden},)")

    @property
    def hidden_dim(self) -> int:
        return self.W_z.shape[0]

    @property
    def input_dim(self) -> int:
        return self.W_z.shape[1]

    @classmethod
    def zeros(cls, input_dim: int, hidden_dim: int) -> "GruParams":
        kwargs = {}
        for g in cls.GATES:
            kwargs[f'W_{g}'] = np.zeros((hidden_dim, input_dim))
            kwargs[f'U_{g}'] = np.zeros((hidden_dim, hidden_dim))
            kwargs[f'b_{g}'] = np.zeros(hidden_dim)
        return cls(**kwargs)

    @classmethod
    def initialize(cls, input_dim: int, hidden_dim: int, rng: SeededRng) -> "GruParams":
        params = cls.zeros(input_dim, hidden_dim)
        for g in cls.GATES:
            setattr(params, f'W_{g}', TensorMath.glorot_uniform(rng, hidden_dim, input_dim))
            setattr(params, f'U_{g}', TensorMath.glorot_uniform(rng, hidden_dim, hidden_dim))
        return params


def gru_step_forward(p: GruParams, h_prev: np.ndarray, x_t: np.ndarray):
    z = expit(x_t @ p.W_z.T + h_prev @ p.U_z.T + p.b_z)
    r = expit(x_t @ p.W_r.T + h_prev @ p.U_r.T + p.b_r)
    rh = r * h_prev
    h_cand = np.tanh(x_t @ p.W_h.T + rh @ p.U_h.T + p.b_h)
    h = z * h_prev + (1.0 - z) * h_cand
    return h, (x_t, h_prev, z, r, rh, h_cand)


def gru_step_backward(p: GruParams, dh: np.ndarray, cache, grads: Grads):
    """Returns (dh_prev, dx_t)"""
    x_t, h_prev, z, r, rh, h_cand = cache
    dh_prev = dh * z

    da_h = dh * (1.0 - z) * (1.0 - h_cand * h_cand)
    grads['W_h'] += da_h.T @ x_t
    grads['U_h'] += da_h.T @ rh
    grads['b_h'] += da_h.sum(axis=0)
    drh = da_h @ p.U_h
    dx = da_h @ p.W_h
    dh_prev += drh * r

    da_r = drh * h_prev * r * (1.0 - r)
    da_z = dh * (h_prev - h_cand) * z * (1.0 - z)
    for gate, da in (('r', da_r), ('z', da_z)):
        grads[f'W_{gate}'] += da.T @ x_t
        grads[f'U_{gate}'] += da.T @ h_prev
        grads[f'b_{gate}'] += da.sum(axis=0)
        dx += da @ getattr(p, f'W_{gate}')
        dh_prev += da @ getattr(p, f'U_{gate}')
    return dh_prev, dx


def gru_step(p: GruParams, h_prev, x_t):
    """Single GRU step on vectors (or row batches). Returns h_t"""
    h_prev, x_t, squeeze = _as_rows(h_prev, x_t)
    _check_step_dims(p.hidden_dim, p.input_dim, h_prev, x_t)
    h, _ = gru_step_forward(p, h_prev, x_t)
    return h[0] if squeeze else h


def _as_rows(*arrays):
    squeeze = np.ndim(arrays[0]) == 1
    rows = [np.atleast_2d(np.asarray(a, dtype=np.float64)) for a in arrays]
    return (*rows, squeeze)


def _check_step_dims(hidden: int, inputs: int, h_prev, x_t, c_prev=None):
    if h_prev.shape[1] != hidden or x_t.shape[1] != inputs:
        raise ShapeError(f"Step expects h of width {hidden} and x of width {inputs}, "
                         f"got {h_prev.shape[1]} and {x_t.shape[1]}")
    if c_prev is not None and c_prev.shape != h_prev.shape:
        raise ShapeError("Cell state must match hidden state shape")


# ---------------------------------------------------------------------------
# Masked sequence
# ---------------------------------------------------------------------------

RnnParams = Union[LstmParams, GruParams]


def rnn_sequence_forward(cell: RnnParams, batch: MaskedBatch, return_sequences: bool):
    """
    Run a cell over a masked batch.

    Padded steps pass hidden and cell state through unchanged, so the final
    state equals the state after each sequence's last real step. With
    return_sequences the per-step outputs are zero at padded steps.
    """
    features, mask = batch.features, batch.mask
    if features.shape[2] != cell.input_dim:
        raise ShapeError(f"Cell expects input width {cell.input_dim}, batch has {features.shape[2]}")
    if np.any(~mask.any(axis=1)):
        raise MaskError("Sequence with no unmasked steps")

    n_batch, n_time, _ = features.shape
    is_lstm = isinstance(cell, LstmParams)
    h = np.zeros((n_batch, cell.hidden_dim))
    c = np.zeros_like(h) if is_lstm else None
    outputs = np.zeros((n_batch, n_time, cell.hidden_dim)) if return_sequences else None
    steps = []
    for t in range(n_time):
        m = mask[:, t][:, None]
        if not m.any():
            steps.append(None)
            continue
        x_t = features[:, t, :]
        if is_lstm:
            h_new, c_new, step_cache = lstm_step_forward(cell, h, c, x_t)
            c = np.where(m, c_new, c)
        else:
            h_new, step_cache = gru_step_forward(cell, h, x_t)
        h = np.where(m, h_new, h)
        if return_sequences:
            outputs[:, t, :] = np.where(m, h, 0.0)
        steps.append(step_cache)

    out = outputs if return_sequences else h
    return out, (mask, steps, return_sequences, features.shape)


def rnn_sequence_backward(cell: RnnParams, d_out: np.ndarray, cache, grads: Grads) -> np.ndarray:
    """Backpropagation through time; returns the gradient w.r.t. the input features"""
    mask, steps, return_sequences, shape = cache
    n_batch, n_time, n_in = shape
    is_lstm = isinstance(cell, LstmParams)
    dh = np.zeros((n_batch, cell.hidden_dim)) if return_sequences else d_out.copy()
    dc = np.zeros_like(dh)
    dx = np.zeros(shape)
    for t in reversed(range(n_time)):
        m = mask[:, t][:, None]
        if return_sequences:
            dh = dh + np.where(m, d_out[:, t, :], 0.0)
        if steps[t] is None:
            continue
        dh_step = np.where(m, dh, 0.0)
        if is_lstm:
            dh_prev, dx_t, dc_prev = lstm_step_backward(cell, dh_step, np.where(m, dc, 0.0), steps[t], grads)
            dc = np.where(m, dc_prev, dc)
        else:
            dh_prev, dx_t = gru_step_backward(cell, dh_step, steps[t], grads)
        dh = np.where(m, dh_prev, dh)
        dx[:, t, :] = dx_t
    return dx


# ---------------------------------------------------------------------------
# Batch normalization
# ---------------------------------------------------------------------------

@dataclass
class BatchNormParams(ParamGroup):
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    epsilon: float = 1e-3
    momentum: float = 0.1

    TRAINABLE: ClassVar[Tuple[str, ...]] = ('gamma', 'beta')
    BUFFERS: ClassVar[Tuple[str, ...]] = ('running_mean', 'running_var')

    def __post_init__(self):
        # epsilon = 0 is accepted so exact-normalization checks are possible
        if self.epsilon < 0:
            raise ValueError("Batch-norm epsilon must be non-negative")
        if not 0.0 < self.momentum < 1.0:
            raise ValueError("Batch-norm momentum must lie in (0, 1)")
        if np.any(self.running_var < 0):
            raise ValueError("Running variance must be non-negative")

    @classmethod
    def initialize(cls, features: int, epsilon: float = 1e-3, momentum: float = 0.1) -> "BatchNormParams":
        return cls(np.ones(features), np.zeros(features), np.zeros(features), np.ones(features),
                   epsilon, momentum)

    def update_running(self, batch_mean: np.ndarray, batch_var: np.ndarray):
        self.running_mean[...] = (1.0 - self.momentum) * self.running_mean + self.momentum * batch_mean
        self.running_var[...] = (1.0 - self.momentum) * self.running_var + self.momentum * batch_var


def batch_norm_forward(p: BatchNormParams, h: np.ndarray, mask: np.ndarray, mode: Mode):
    """
    Normalize per feature over all unmasked (batch, time) positions.

    Returns (output, cache, batch_stats). batch_stats is (mean, unbiased var)
    in train mode and None in infer mode; the caller decides whether to fold
    it into the running statistics. Padded positions come out as zero.
    """
    sel = np.asarray(mask, dtype=bool)
    x = h[sel]
    if mode == Mode.TRAIN:
        n = x.shape[0]
        if n < 2:
            raise MaskError("Batch normalization in train mode needs at least 2 unmasked positions")
        mean = x.mean(axis=0)
        var = x.var(axis=0)
        stats = (mean, var * n / (n - 1))
    else:
        mean, var, stats = p.running_mean, p.running_var, None
    inv_std = 1.0 / np.sqrt(var + p.epsilon)
    x_hat = (x - mean) * inv_std
    out = np.zeros_like(h)
    out[sel] = p.gamma * x_hat + p.beta
    return out, (sel, x_hat, inv_std, mode), stats


def batch_norm_backward(p: BatchNormParams, d_out: np.ndarray, cache, grads: Grads) -> np.ndarray:
    sel, x_hat, inv_std, mode = cache
    g = d_out[sel]
    grads['gamma'] += (g * x_hat).sum(axis=0)
    grads['beta'] += g.sum(axis=0)
    dx_hat = g * p.gamma
    if mode == Mode.TRAIN:
        n = g.shape[0]
        dx_sel = inv_std / n * (n * dx_hat - dx_hat.sum(axis=0) - x_hat * (dx_hat * x_hat).sum(axis=0))
    else:
        dx_sel = dx_hat * inv_std
    dx = np.zeros_like(d_out)
    dx[sel] = dx_sel
    return dx


# ---------------------------------------------------------------------------
# KAN (spline edges)
# ---------------------------------------------------------------------------

def make_grid(num_functions: int, spline_order: int, grid_lo: float, grid_hi: float) -> np.ndarray:
    """Uniform breakpoints giving `num_functions` basis functions of the given order"""
    intervals = num_functions - spline_order
    if intervals < 1:
        raise ShapeError(f"num_functions ({num_functions}) must be at least spline_order + 1 ({spline_order + 1})")
    if not grid_hi > grid_lo:
        raise ValueError("Grid upper bound must exceed the lower bound")
    return np.linspace(grid_lo, grid_hi, intervals + 1)


def clamped_knots(grid: np.ndarray, spline_order: int) -> np.ndarray:
    """Breakpoints with both end knots repeated spline_order + 1 times"""
    return np.concatenate([np.full(spline_order, grid[0]), grid, np.full(spline_order, grid[-1])])


def bspline_basis(x, grid: np.ndarray, spline_order: int, derivative: bool = False):
    """
    Cox-de Boor evaluation of all basis functions at x.

    Inputs outside [grid[0], grid[-1]] are clamped to the boundary, so the
    spline part is constant there and its derivative is zero.

    Returns:
        bases of shape x.shape + (num_functions,), and when `derivative` is
        set, their derivatives w.r.t. x of the same shape.
    """
    x = np.asarray(x, dtype=np.float64)
    knots = clamped_knots(grid, spline_order)
    lo, hi = grid[0], grid[-1]
    inside = (x >= lo) & (x <= hi)
    xc = np.clip(x, lo, hi)[..., None]
    n_intervals = len(grid) - 1

    span = np.clip(np.searchsorted(grid, xc[..., 0], side='right') - 1, 0, n_intervals - 1)
    bases = np.zeros(x.shape + (len(knots) - 1,))
    np.put_along_axis(bases, (span + spline_order)[..., None], 1.0, axis=-1)

    lower = bases
    for p in range(1, spline_order + 1):
        lower = bases
        left = _safe_reciprocal(knots[p:-1] - knots[:-p - 1])
        right = _safe_reciprocal(knots[p + 1:] - knots[1:-p])
        bases = ((xc - knots[:-p - 1]) * left * lower[..., :-1]
                 + (knots[p + 1:] - xc) * right * lower[..., 1:])

    if not derivative:
        return bases
    if spline_order == 0:
        return bases, np.zeros_like(bases)
    p = spline_order
    left = _safe_reciprocal(knots[p:-1] - knots[:-p - 1])
    right = _safe_reciprocal(knots[p + 1:] - knots[1:-p])
    d_bases = p * (left * lower[..., :-1] - right * lower[..., 1:])
    d_bases = np.where(inside[..., None], d_bases, 0.0)
    return bases, d_bases


def _safe_reciprocal(den: np.ndarray) -> np.ndarray:
    return np.divide(1.0, den, out=np.zeros_like(den), where=den > 0)


@dataclass
class KanLayerParams(ParamGroup):
    """
    One KAN layer: output_q = sum_p phi_{q,p}(x_p), where each edge is
    phi(x) = base_weight * silu(x) + sum_k coeffs[k] * B_k(x).
    """
    coeffs: np.ndarray       # output_dim x input_dim x num_functions
    base_weight: np.ndarray  # output_dim x input_dim
    grid: np.ndarray         # strictly increasing breakpoints
    spline_order: int = 3

    TRAINABLE: ClassVar[Tuple[str, ...]] = ('coeffs', 'base_weight')
    BUFFERS: ClassVar[Tuple[str, ...]] = ('grid',)

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=np.float64)
        if np.any(np.diff(self.grid) <= 0):
            raise ValueError("KAN grid must be strictly increasing")
        expected = len(self.grid) - 1 + self.spline_order
        if self.coeffs.ndim != 3 or self.coeffs.shape[2] != expected:
            raise ShapeError(f"KAN coefficients need {expected} basis functions per edge, got {self.coeffs.shape}")
        if self.base_weight.shape != self.coeffs.shape[:2]:
            raise ShapeError("KAN base weights must be output_dim x input_dim")
        if not np.all(np.isfinite(self.coeffs)):
            raise ValueError("KAN coefficients must be finite")

    @property
    def output_dim(self) -> int:
        return self.coeffs.shape[0]

    @property
    def input_dim(self) -> int:
        return self.coeffs.shape[1]

    @property
    def num_functions(self) -> int:
        return self.coeffs.shape[2]

    @classmethod
    def zeros(cls, input_dim: int, output_dim: int, num_functions: int = 10, spline_order: int = 3,
              grid_lo: float = -3.0, grid_hi: float = 3.0) -> "KanLayerParams":
        grid = make_grid(num_functions, spline_order, grid_lo, grid_hi)
        return cls(np.zeros((output_dim, input_dim, num_functions)), np.zeros((output_dim, input_dim)),
                   grid, spline_order)

    @classmethod
    def initialize(cls, input_dim: int, output_dim: int, rng: SeededRng, num_functions: int = 10,
                   spline_order: int = 3, grid_lo: float = -3.0, grid_hi: float = 3.0,
                   base_weight_std: float = 0.1) -> "KanLayerParams":
        params = cls.zeros(input_dim, output_dim, num_functions, spline_order, grid_lo, grid_hi)
        params.base_weight = TensorMath.rng_normal(rng, output_dim * input_dim, 0.0, base_weight_std).reshape(
            output_dim, input_dim)
        return params


def kan_edge_eval(coeffs, grid, spline_order: int, base_weight: float, x):
    """Value of one spline edge at x (scalar or array)"""
    bases = bspline_basis(x, np.asarray(grid, dtype=np.float64), spline_order)
    out = base_weight * TensorMath.activation(np.asarray(x, dtype=np.float64), 'silu') + bases @ np.asarray(coeffs)
    return float(out) if np.ndim(x) == 0 else out


def fit_edge_least_squares(x, y, grid, spline_order: int, base_weight: float = 0.0) -> np.ndarray:
    """Spline coefficients minimizing the squared error of one edge to samples (x, y)"""
    x = np.asarray(x, dtype=np.float64)
    target = np.asarray(y, dtype=np.float64) - base_weight * TensorMath.activation(x, 'silu')
    design = bspline_basis(x, np.asarray(grid, dtype=np.float64), spline_order)
    coeffs, *_ = linalg.lstsq(design, target)
    return coeffs


def kan_layer_forward(p: KanLayerParams, x: np.ndarray):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != p.input_dim:
        raise ShapeError(f"KAN layer expects batch x {p.input_dim}, got {x.shape}")
    bases, d_bases = bspline_basis(x, p.grid, p.spline_order, derivative=True)
    silu = TensorMath.activation(x, 'silu')
    out = silu @ p.base_weight.T + np.einsum('bpk,qpk->bq', bases, p.coeffs)
    return out, (x, silu, bases, d_bases)


def kan_layer_backward(p: KanLayerParams, d_out: np.ndarray, cache, grads: Grads) -> np.ndarray:
    x, silu, bases, d_bases = cache
    grads['base_weight'] += d_out.T @ silu
    grads['coeffs'] += np.einsum('bq,bpk->qpk', d_out, bases)
    dx = (d_out @ p.base_weight) * TensorMath.activation_grad(x, 'silu')
    dx += np.einsum('bq,qpk,bpk->bp', d_out, p.coeffs, d_bases)
    return dx


# ---------------------------------------------------------------------------
# Dense and dropout
# ---------------------------------------------------------------------------

@dataclass
class DenseParams(ParamGroup):
    W: np.ndarray  # out x in
    b: np.ndarray

    TRAINABLE: ClassVar[Tuple[str, ...]] = ('W', 'b')

    def __post_init__(self):
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[0],):
            raise ShapeError(f"Dense weight {self.W.shape} and bias {self.b.shape} disagree")

    @classmethod
    def initialize(cls, input_dim: int, output_dim: int, rng: SeededRng) -> "DenseParams":
        return cls(TensorMath.glorot_uniform(rng, output_dim, input_dim), np.zeros(output_dim))


def dense_forward(p: DenseParams, x: np.ndarray):
    if x.shape[1] != p.W.shape[1]:
        raise ShapeError(f"Dense layer expects width {p.W.shape[1]}, got {x.shape[1]}")
    return x @ p.W.T + p.b, x


def dense_backward(p: DenseParams, d_out: np.ndarray, cache, grads: Grads) -> np.ndarray:
    x = cache
    grads['W'] += d_out.T @ x
    grads['b'] += d_out.sum(axis=0)
    return d_out @ p.W


def dropout_forward(x: np.ndarray, rate: float, mode: Mode, rng: Optional[SeededRng]):
    """Inverted dropout: kept units are scaled by 1/(1-rate) at train time only"""
    if mode != Mode.TRAIN or rate == 0.0:
        return x, None
    if rng is None:
        raise ValueError("Train-mode dropout needs a random stream")
    scale = (rng.generator.random(x.shape) >= rate) / (1.0 - rate)
    return x * scale, scale


def dropout_backward(d_out: np.ndarray, cache) -> np.ndarray:
    return d_out if cache is None else d_out * cache
