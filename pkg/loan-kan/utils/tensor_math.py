# utils/tensor_math.py
import zlib
from dataclasses import dataclass, field
from typing import Tuple, Union

import numpy as np
from scipy.special import expit

from utils.errors import NumericalError, ShapeError

# 2-D float64 array, row-major
Matrix = np.ndarray

ACTIVATIONS = ("sigmoid", "tanh", "relu", "silu")


@dataclass
class SeededRng:
    """Deterministic random stream.

    Backed by numpy's counter-based Philox bit generator, so a given seed
    yields the same stream on every platform. Named sub-streams come from
    `child`, which never consumes draws from the parent.
    """
    seed: int
    algorithm: str = "philox"
    _generator: np.random.Generator = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.algorithm != "philox":
            raise ValueError(f"Unsupported generator algorithm: {self.algorithm}")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError(f"Seed must be a 64-bit unsigned integer, got {self.seed}")
        self.seed = int(self.seed)

    @property
    def generator(self) -> np.random.Generator:
        if self._generator is None:
            self._generator = np.random.Generator(np.random.Philox(self.seed))
        return self._generator

    def child(self, tag: Union[str, int]) -> "SeededRng":
        key = zlib.crc32(tag.encode("utf-8")) if isinstance(tag, str) else int(tag)
        state = np.random.SeedSequence(self.seed, spawn_key=(key,)).generate_state(1, dtype=np.uint64)
        return SeededRng(int(state[0]), self.algorithm)


class TensorMath:
    @staticmethod
    def matmul(a: Matrix, b: Matrix) -> Matrix:
        """Matrix product with an explicit conformability check"""
        a = np.asarray(a, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        if a.ndim != 2 or b.ndim != 2:
            raise ShapeError(f"matmul expects 2-D operands, got {a.ndim}-D and {b.ndim}-D")
        if a.shape[1] != b.shape[0]:
            raise ShapeError(f"matmul dimension mismatch: {a.shape} x {b.shape}")
        out = a @ b
        if not np.all(np.isfinite(out)):
            raise NumericalError("matmul produced non-finite entries")
        return out

    @staticmethod
    def activation(x, kind: str):
        """
        Elementwise activation.

        Args:
            x: real scalar or array
            kind: one of sigmoid, tanh, relu, silu

        Returns:
            Same shape as x. sigmoid uses scipy's expit, which stays finite
            for arbitrarily large |x|.
        """
        arr = np.asarray(x, dtype=np.float64)
        if kind == "sigmoid":
            out = expit(arr)
        elif kind == "tanh":
            out = np.tanh(arr)
        elif kind == "relu":
            out = np.maximum(arr, 0.0)
        elif kind == "silu":
            out = arr * expit(arr)
        else:
            raise ValueError(f"Unknown activation: {kind}")
        return float(out) if np.ndim(x) == 0 else out

    @staticmethod
    def activation_grad(x, kind: str):
        """Derivative of `activation` w.r.t. its input; relu'(0) = 0"""
        arr = np.asarray(x, dtype=np.float64)
        if kind == "sigmoid":
            s = expit(arr)
            out = s * (1.0 - s)
        elif kind == "tanh":
            t = np.tanh(arr)
            out = 1.0 - t * t
        elif kind == "relu":
            out = (arr > 0.0).astype(np.float64)
        elif kind == "silu":
            s = expit(arr)
            out = s * (1.0 + arr * (1.0 - s))
        else:
            raise ValueError(f"Unknown activation: {kind}")
        return float(out) if np.ndim(x) == 0 else out

    @staticmethod
    def rng_normal(rng: SeededRng, n: int, mean: float = 0.0, std: float = 1.0) -> np.ndarray:
        if std < 0:
            raise ValueError(f"std must be non-negative, got {std}")
        return rng.generator.normal(mean, std, int(n))

    @staticmethod
    def rng_uniform(rng: SeededRng, shape: Tuple[int, ...], low: float, high: float) -> np.ndarray:
        return rng.generator.uniform(low, high, shape)

    @staticmethod
    def glorot_uniform(rng: SeededRng, fan_out: int, fan_in: int) -> Matrix:
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return TensorMath.rng_uniform(rng, (fan_out, fan_in), -limit, limit)


# module-level aliases matching the operation names used across the package
matmul = TensorMath.matmul
activation = TensorMath.activation
activation_grad = TensorMath.activation_grad
rng_normal = TensorMath.rng_normal
rng_uniform = TensorMath.rng_uniform
