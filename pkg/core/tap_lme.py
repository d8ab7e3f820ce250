"""
TAP-LME Module
Token-level adaptive pooling with residual max-pool fusion, forward and analytic backward

    score_i = w . ReLU(W t_i + b)
    alpha   = softmax(score)
    g_tap   = sum_i alpha_i t_i
    g_max   = element-wise max over tokens
    g       = lam * g_tap + (1 - lam) * g_max,   lam = logistic(lambda_raw)
"""

import os
from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Tuple

import numpy as np

import config
from errors import DimensionMismatchError


def logistic(x: float) -> float:
    """Numerically stable logistic function"""
    if x >= 0:
        return float(1.0 / (1.0 + np.exp(-x)))
    z = np.exp(x)
    return float(z / (1.0 + z))


def softmax(scores: np.ndarray) -> np.ndarray:
    """Softmax with max-subtraction so large scores cannot overflow"""
    scores = np.asarray(scores, dtype=np.float64)
    shifted = np.exp(scores - scores.max())
    return shifted / shifted.sum()


def _format_values(values) -> str:
    return " ".join(f"{v:.17g}" for v in values)


def as_token_matrix(tokens) -> np.ndarray:
    """
    Validate an S x G token matrix

    Args:
        tokens: Array-like of shape (S, G), S >= 1, G >= 1, all finite

    Returns:
        float64 array
    """
    T = np.asarray(tokens, dtype=np.float64)
    if T.ndim != 2 or T.shape[0] < 1 or T.shape[1] < 1:
        raise DimensionMismatchError(f"token matrix must be 2-D with S >= 1 and G >= 1, got shape {T.shape}")
    if not np.all(np.isfinite(T)):
        raise ValueError("token matrix contains non-finite values")
    return T


@dataclass
class PoolingParams:
    """Learnable (W, b, w, lambda_raw)"""

    W: np.ndarray  # (G, G)
    b: np.ndarray  # (G,)
    w: np.ndarray  # (G,)
    lambda_raw: float = config.INITIAL_LAMBDA_RAW

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64).reshape(-1)
        self.w = np.asarray(self.w, dtype=np.float64).reshape(-1)
        self.lambda_raw = float(self.lambda_raw)
        G = self.b.shape[0]
        if self.W.shape != (G, G) or self.w.shape != (G,):
            raise DimensionMismatchError(
                f"inconsistent parameter shapes: W {self.W.shape}, b {self.b.shape}, w {self.w.shape}"
            )
        if not (np.all(np.isfinite(self.W)) and np.all(np.isfinite(self.b))
                and np.all(np.isfinite(self.w)) and np.isfinite(self.lambda_raw)):
            raise ValueError("pooling parameters must be finite")

    @property
    def width(self) -> int:
        return self.b.shape[0]

    @property
    def lam(self) -> float:
        """Effective fusion coefficient in (0, 1)"""
        return logistic(self.lambda_raw)

    @classmethod
    def initialize(cls, width: int, seed: Optional[int] = None) -> "PoolingParams":
        """
        W and w uniform in [-1/sqrt(G), 1/sqrt(G)], b = 0, lambda_raw = 0

        Args:
            width: Feature width G
            seed: Seed for numpy's default_rng

        Returns:
            PoolingParams
        """
        rng = np.random.default_rng(config.DEFAULT_SEED if seed is None else seed)
        bound = 1.0 / np.sqrt(width)
        return cls(
            W=rng.uniform(-bound, bound, size=(width, width)),
            b=np.zeros(width),
            w=rng.uniform(-bound, bound, size=width),
            lambda_raw=config.INITIAL_LAMBDA_RAW,
        )

    def copy(self) -> "PoolingParams":
        return PoolingParams(self.W.copy(), self.b.copy(), self.w.copy(), self.lambda_raw)

    def to_text(self) -> str:
        """Flat text: 'W' then G rows, 'b' row, 'w' row, 'lambda_raw' value"""
        lines = ["W"] + [_format_values(row) for row in self.W]
        lines += ["b", _format_values(self.b), "w", _format_values(self.w), "lambda_raw", f"{self.lambda_raw:.17g}"]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "PoolingParams":
        lines = [line.strip() for line in text.splitlines() if line.strip()]
        try:
            b_at, w_at, l_at = lines.index("b"), lines.index("w"), lines.index("lambda_raw")
            if lines[0] != "W" or not 0 < b_at < w_at < l_at:
                raise ValueError
            W = [[float(v) for v in line.split()] for line in lines[1:b_at]]
            b = [float(v) for v in lines[b_at + 1].split()]
            w = [float(v) for v in lines[w_at + 1].split()]
            lambda_raw = float(lines[l_at + 1])
        except (ValueError, IndexError):
            raise ValueError("malformed parameter text; expected sections W, b, w, lambda_raw")
        return cls(W=np.array(W), b=np.array(b), w=np.array(w), lambda_raw=lambda_raw)

    def save(self, file_path: str):
        parent = os.path.dirname(file_path)
        if parent:
            os.makedirs(parent, exist_ok=True)
        with open(file_path, "w", encoding="utf-8") as f:
            f.write(self.to_text())

    @classmethod
    def load(cls, file_path: str) -> "PoolingParams":
        if not os.path.exists(file_path):
            raise FileNotFoundError(f"Parameter file not found: {file_path}")
        with open(file_path, "r", encoding="utf-8") as f:
            return cls.from_text(f.read())


@dataclass
class PoolingOutput:
    """Forward results plus the intermediates backward needs"""

    g: np.ndarray  # fused vector
    g_tap: np.ndarray
    alpha: np.ndarray
    g_max: np.ndarray
    lam: float
    variant: str
    argmax: np.ndarray = field(repr=False, default=None)  # (G,) token index of each max, lowest on ties
    pre: np.ndarray = field(repr=False, default=None)  # (S, G) W t_i + b


@dataclass
class PoolingGradients:
    """Gradients of a scalar loss w.r.t. parameters and tokens"""

    W: np.ndarray
    b: np.ndarray
    w: np.ndarray
    lambda_raw: float
    T: np.ndarray

    def as_dict(self) -> Dict[str, np.ndarray]:
        return {"W": self.W, "b": self.b, "w": self.w, "lambda_raw": np.array([self.lambda_raw]), "T": self.T}


def _check_width(T: np.ndarray, params: PoolingParams):
    if T.shape[1] != params.width:
        raise DimensionMismatchError(
            f"token width {T.shape[1]} does not match parameter width {params.width}"
        )


def _scores(T: np.ndarray, params: PoolingParams) -> Tuple[np.ndarray, np.ndarray]:
    pre = T @ params.W.T + params.b
    return pre, np.maximum(pre, 0.0) @ params.w


def attention_weights(T, params: PoolingParams) -> np.ndarray:
    """
    alpha = softmax_i(w . ReLU(W t_i + b))

    Args:
        T: S x G token matrix
        params: Pooling parameters of width G

    Returns:
        Length-S weights summing to 1
    """
    T = as_token_matrix(T)
    _check_width(T, params)
    _, scores = _scores(T, params)
    return softmax(scores)


def tap_pool(T, alpha) -> np.ndarray:
    """g_tap = sum_i alpha_i t_i"""
    T = as_token_matrix(T)
    alpha = np.asarray(alpha, dtype=np.float64).reshape(-1)
    if alpha.shape[0] != T.shape[0]:
        raise DimensionMismatchError(f"{alpha.shape[0]} weights for {T.shape[0]} tokens")
    return alpha @ T


def max_pool(T) -> Tuple[np.ndarray, np.ndarray]:
    """Element-wise max over tokens and the (lowest) token index attaining it"""
    T = as_token_matrix(T)
    argmax = np.argmax(T, axis=0)
    return T[argmax, np.arange(T.shape[1])], argmax


def fuse(g_tap, g_max, lam: float) -> np.ndarray:
    """g = lam * g_tap + (1 - lam) * g_max"""
    g_tap = np.asarray(g_tap, dtype=np.float64)
    g_max = np.asarray(g_max, dtype=np.float64)
    if g_tap.shape != g_max.shape:
        raise DimensionMismatchError(f"cannot fuse vectors of shapes {g_tap.shape} and {g_max.shape}")
    return lam * g_tap + (1.0 - lam) * g_max


def fusion_lambda(variant: str, params: PoolingParams) -> float:
    """Fusion coefficient used by a variant"""
    if variant == "baseline_max":
        return 0.0
    if variant == "tap_only":
        return 1.0
    if variant == "tap_res_fixed":
        return config.FIXED_FUSION_LAMBDA
    if variant in ("tap_res_learnt", "tap_weight_only"):
        return params.lam
    raise ValueError(f"Unknown pooling variant '{variant}'. Choose from: {', '.join(config.POOLING_VARIANTS)}")


def forward(T, params: PoolingParams, variant: str = "tap_res_learnt") -> PoolingOutput:
    """
    Pool a token matrix into one length-G vector

    Args:
        T: S x G token matrix
        params: Pooling parameters
        variant: One of config.POOLING_VARIANTS

    Returns:
        PoolingOutput
    """
    lam = fusion_lambda(variant, params)
    T = as_token_matrix(T)
    _check_width(T, params)

    pre, scores = _scores(T, params)
    if variant == "tap_weight_only":
        alpha = np.full(T.shape[0], 1.0 / T.shape[0])
    else:
        alpha = softmax(scores)

    g_tap = alpha @ T
    g_max, argmax = max_pool(T)
    g = g_max.copy() if variant == "baseline_max" else fuse(g_tap, g_max, lam)

    return PoolingOutput(g=g, g_tap=g_tap, alpha=alpha, g_max=g_max, lam=lam,
                         variant=variant, argmax=argmax, pre=pre)


def backward(T, params: PoolingParams, upstream, variant: str = "tap_res_learnt",
             output: Optional[PoolingOutput] = None) -> PoolingGradients:
    """
    Exact gradients of upstream . g w.r.t. W, b, w, lambda_raw and T

    Max pooling routes each dimension's gradient to its argmax token (lowest
    index on ties). Fixed-lambda variants get a zero lambda_raw gradient and
    the uniform-weight variant gets zero W, b, w gradients.

    Args:
        T: S x G token matrix
        params: Pooling parameters
        upstream: dLoss/dg, length G
        variant: Variant the forward pass used
        output: Forward result to reuse (recomputed when omitted)

    Returns:
        PoolingGradients
    """
    T = as_token_matrix(T)
    out = output if output is not None and output.variant == variant else forward(T, params, variant)
    u = np.asarray(upstream, dtype=np.float64).reshape(-1)
    if u.shape[0] != T.shape[1]:
        raise DimensionMismatchError(f"upstream gradient has length {u.shape[0]}, expected {T.shape[1]}")

    S, G = T.shape
    lam = out.lam
    d_g_tap = lam * u
    d_g_max = (1.0 - lam) * u

    d_lambda_raw = 0.0
    if variant in ("tap_res_learnt", "tap_weight_only"):
        d_lambda_raw = float(u @ (out.g_tap - out.g_max)) * lam * (1.0 - lam)

    d_T = np.zeros_like(T)
    d_T[out.argmax, np.arange(G)] += d_g_max
    d_T += np.outer(out.alpha, d_g_tap)

    d_W = np.zeros_like(params.W)
    d_b = np.zeros_like(params.b)
    d_w = np.zeros_like(params.w)

    if variant != "tap_weight_only" and lam != 0.0:
        d_alpha = T @ d_g_tap
        d_scores = out.alpha * (d_alpha - out.alpha @ d_alpha)  # softmax Jacobian
        hidden = np.maximum(out.pre, 0.0)
        d_w = d_scores @ hidden
        d_pre = np.outer(d_scores, params.w) * (out.pre > 0.0)
        d_W = d_pre.T @ T
        d_b = d_pre.sum(axis=0)
        d_T += d_pre @ params.W

    return PoolingGradients(W=d_W, b=d_b, w=d_w, lambda_raw=d_lambda_raw, T=d_T)


def with_lambda(params: PoolingParams, lam: float) -> PoolingParams:
    """Copy of params whose logistic(lambda_raw) equals lam (0 < lam < 1)"""
    if not 0.0 < lam < 1.0:
        raise ValueError(f"lambda must lie strictly between 0 and 1, got {lam}")
    return replace(params.copy(), lambda_raw=float(np.log(lam) - np.log1p(-lam)))
