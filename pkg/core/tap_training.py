"""
TAP Training Module
Toy gradient-descent trainer, finite-difference gradient checker and token/loss-curve CSV I/O
"""

import io
import os
import re
import sys
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

import config
from core.tap_lme import PoolingParams, as_token_matrix, backward, forward, softmax
from errors import TokenFormatError, TrainingDivergenceError

Sample = Tuple[np.ndarray, np.ndarray]  # (S x G tokens, length-G target)


# ============================================================================
# Synthetic tasks
# ============================================================================

def _task_sizes(n_samples: Optional[int], seq_len: Optional[int], width: Optional[int]) -> Tuple[int, int, int]:
    sizes = (
        config.SYNTHETIC_SAMPLES if n_samples is None else n_samples,
        config.SYNTHETIC_SEQ_LEN if seq_len is None else seq_len,
        config.SYNTHETIC_WIDTH if width is None else width,
    )
    for name, value in zip(("n_samples", "seq_len", "width"), sizes):
        if value < 1:
            raise ValueError(f"{name} must be >= 1, got {value}")
    return sizes


def make_attention_task(n_samples: Optional[int] = None, seq_len: Optional[int] = None,
                        width: Optional[int] = None, sharpness: Optional[float] = None,
                        seed: Optional[int] = None) -> List[Sample]:
    """
    Regression set whose target is a softmax mix of tokens keyed on feature 0

    Args:
        n_samples: Number of token matrices
        seq_len: Tokens per matrix (S)
        width: Feature width (G)
        sharpness: Softmax sharpness on feature 0
        seed: Seed for numpy's default_rng

    Returns:
        List of (tokens, target)
    """
    n_samples, seq_len, width = _task_sizes(n_samples, seq_len, width)
    sharpness = config.SYNTHETIC_SHARPNESS if sharpness is None else sharpness
    rng = np.random.default_rng(config.DEFAULT_SEED if seed is None else seed)

    dataset = []
    for _ in range(n_samples):
        T = rng.normal(size=(seq_len, width))
        weights = softmax(sharpness * T[:, 0])
        dataset.append((T, weights @ T))
    return dataset


def make_max_task(n_samples: Optional[int] = None, seq_len: Optional[int] = None,
                  width: Optional[int] = None, seed: Optional[int] = None) -> List[Sample]:
    """Regression set whose target is the element-wise max of the tokens"""
    n_samples, seq_len, width = _task_sizes(n_samples, seq_len, width)
    rng = np.random.default_rng(config.DEFAULT_SEED if seed is None else seed)

    dataset = []
    for _ in range(n_samples):
        T = rng.normal(size=(seq_len, width))
        dataset.append((T, T.max(axis=0)))
    return dataset


# ============================================================================
# Training
# ============================================================================

def _check_dataset(dataset: Sequence[Sample]) -> int:
    if not dataset:
        raise ValueError("training dataset is empty")
    width = as_token_matrix(dataset[0][0]).shape[1]
    for idx, (T, target) in enumerate(dataset):
        if as_token_matrix(T).shape[1] != width or np.asarray(target).reshape(-1).shape[0] != width:
            raise ValueError(f"sample {idx} does not have feature width {width}")
    return width


def dataset_loss(dataset: Sequence[Sample], params: PoolingParams, variant: str) -> float:
    """Mean squared error between pooled vectors and targets"""
    errors = [forward(T, params, variant).g - np.asarray(y, dtype=np.float64) for T, y in dataset]
    return float(np.mean(np.square(errors)))


class ToyTrainer:
    """Full-batch gradient descent on mean squared error"""

    def __init__(self, variant: str = "tap_res_learnt", epochs: Optional[int] = None,
                 step_size: Optional[float] = None, seed: Optional[int] = None,
                 show_progress: bool = False):
        """
        Args:
            variant: Pooling variant to train
            epochs: Gradient steps
            step_size: Learning rate
            seed: Seed for parameter initialization
            show_progress: Whether to print status lines
        """
        if variant not in config.POOLING_VARIANTS:
            raise ValueError(f"Unknown pooling variant '{variant}'. Choose from: {', '.join(config.POOLING_VARIANTS)}")
        self.variant = variant
        self.epochs = config.DEFAULT_EPOCHS if epochs is None else epochs
        self.step_size = config.DEFAULT_STEP_SIZE if step_size is None else step_size
        if not self.step_size > 0:
            raise ValueError(f"step_size must be > 0, got {self.step_size}")
        self.seed = config.DEFAULT_SEED if seed is None else seed
        self.show_progress = show_progress

    def gradients(self, dataset: Sequence[Sample], params: PoolingParams) -> Tuple[float, Dict[str, np.ndarray]]:
        """
        Loss and parameter gradients summed over the dataset in input order

        Returns:
            (loss before the step, {"W", "b", "w", "lambda_raw"} gradients)
        """
        G = params.width
        scale = 2.0 / (G * len(dataset))
        total = {"W": np.zeros_like(params.W), "b": np.zeros_like(params.b),
                 "w": np.zeros_like(params.w), "lambda_raw": 0.0}
        squared = 0.0
        for T, y in dataset:
            out = forward(T, params, self.variant)
            residual = out.g - np.asarray(y, dtype=np.float64)
            squared += float(residual @ residual)
            grads = backward(T, params, scale * residual, self.variant, output=out)
            total["W"] += grads.W
            total["b"] += grads.b
            total["w"] += grads.w
            total["lambda_raw"] += grads.lambda_raw
        return squared / (G * len(dataset)), total

    def train(self, dataset: Sequence[Sample], params: Optional[PoolingParams] = None) -> Tuple[PoolingParams, List[float]]:
        """
        Train and record the loss after every epoch's update

        Args:
            dataset: (tokens, target) pairs with a common width
            params: Starting parameters (seeded initialization when omitted)

        Returns:
            (final params, per-epoch loss curve)
        """
        width = _check_dataset(dataset)
        params = params.copy() if params is not None else PoolingParams.initialize(width, self.seed)

        loss_curve = []
        for epoch in range(self.epochs):
            _, grads = self.gradients(dataset, params)
            updated = {
                name: getattr(params, name) - self.step_size * grads[name]
                for name in ("W", "b", "w", "lambda_raw")
            }
            if not all(np.all(np.isfinite(value)) for value in updated.values()):
                raise TrainingDivergenceError(epoch, float("nan"))
            params = PoolingParams(**updated)

            with np.errstate(over="ignore", invalid="ignore"):
                loss = dataset_loss(dataset, params, self.variant)
            if not np.isfinite(loss):
                raise TrainingDivergenceError(epoch, loss)
            loss_curve.append(loss)

        if self.show_progress and loss_curve:
            print(
                f"✓ Trained {self.variant} for {self.epochs} epochs: loss {loss_curve[0]:.6f} -> {loss_curve[-1]:.6f}",
                file=sys.stderr,
            )
        return params, loss_curve


def train_toy(dataset: Sequence[Sample], variant: str = "tap_res_learnt", epochs: Optional[int] = None,
              step_size: Optional[float] = None, seed: Optional[int] = None) -> Tuple[PoolingParams, List[float]]:
    """
    Convenience function for ToyTrainer(...).train(dataset)

    Returns:
        (final params, per-epoch loss curve)
    """
    return ToyTrainer(variant, epochs, step_size, seed).train(dataset)


# ============================================================================
# Finite-difference gradient check
# ============================================================================

@dataclass
class GradCheckResult:
    """Outcome of the randomized central-difference suite"""

    max_relative_error: float
    n_configs: int
    worst: Dict[str, float] = field(default_factory=dict)  # max relative error per gradient block

    @property
    def passed(self) -> bool:
        return self.max_relative_error < config.GRAD_CHECK_TOLERANCE


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    """|a - n| / max(|a|, |n|, floor)"""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denominator = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), config.GRAD_CHECK_DENOMINATOR_FLOOR)
    return np.abs(analytic - numeric) / denominator


def numeric_gradients(T: np.ndarray, params: PoolingParams, upstream: np.ndarray,
                      variant: str, h: float) -> Dict[str, np.ndarray]:
    """Central differences of upstream . g for every parameter and token entry"""
    def loss(p: PoolingParams, tokens: np.ndarray) -> float:
        return float(upstream @ forward(tokens, p, variant).g)

    numeric: Dict[str, np.ndarray] = {}
    for name in ("W", "b", "w"):
        base = getattr(params, name)
        grad = np.zeros_like(base)
        for idx in np.ndindex(base.shape):
            plus, minus = params.copy(), params.copy()
            getattr(plus, name)[idx] += h
            getattr(minus, name)[idx] -= h
            grad[idx] = (loss(plus, T) - loss(minus, T)) / (2.0 * h)
        numeric[name] = grad

    plus, minus = params.copy(), params.copy()
    plus.lambda_raw += h
    minus.lambda_raw -= h
    numeric["lambda_raw"] = np.array([(loss(plus, T) - loss(minus, T)) / (2.0 * h)])

    grad_T = np.zeros_like(T)
    for idx in np.ndindex(T.shape):
        plus_T, minus_T = T.copy(), T.copy()
        plus_T[idx] += h
        minus_T[idx] -= h
        grad_T[idx] = (loss(params, plus_T) - loss(params, minus_T)) / (2.0 * h)
    numeric["T"] = grad_T
    return numeric


def _near_kink(T: np.ndarray, params: PoolingParams, margin: float) -> bool:
    # ReLU inputs and per-dimension max gaps must stay clear of the non-differentiable points
    pre = T @ params.W.T + params.b
    if np.min(np.abs(pre)) < margin:
        return True
    if T.shape[0] > 1:
        top_two = np.sort(T, axis=0)[-2:]
        if np.min(top_two[1] - top_two[0]) < margin:
            return True
    return False


def gradient_check(n_configs: Optional[int] = None, seed: Optional[int] = None, h: Optional[float] = None,
                   variants: Optional[Sequence[str]] = None, show_progress: bool = False) -> GradCheckResult:
    """
    Compare backward against central differences on random configurations

    S and G are drawn up to GRAD_CHECK_MAX_SEQ_LEN / GRAD_CHECK_MAX_WIDTH.
    Configurations within GRAD_CHECK_KINK_MARGIN of a ReLU or max-pool kink
    are redrawn.

    Args:
        n_configs: Random configurations per variant
        seed: Seed for numpy's default_rng
        h: Finite-difference step
        variants: Variants to check (default: tap_res_learnt)
        show_progress: Whether to print a status line

    Returns:
        GradCheckResult
    """
    n_configs = config.GRAD_CHECK_CONFIGS if n_configs is None else n_configs
    h = config.GRAD_CHECK_STEP if h is None else h
    variants = list(variants or ["tap_res_learnt"])
    rng = np.random.default_rng(config.DEFAULT_SEED if seed is None else seed)

    worst: Dict[str, float] = {}
    checked = 0
    for variant in variants:
        done = 0
        while done < n_configs:
            S = int(rng.integers(1, config.GRAD_CHECK_MAX_SEQ_LEN + 1))
            G = int(rng.integers(1, config.GRAD_CHECK_MAX_WIDTH + 1))
            T = rng.normal(size=(S, G))
            params = PoolingParams(
                W=rng.normal(size=(G, G)),
                b=rng.normal(size=G),
                w=rng.normal(size=G),
                lambda_raw=float(rng.normal()),
            )
            if _near_kink(T, params, config.GRAD_CHECK_KINK_MARGIN):
                continue
            upstream = rng.normal(size=G)

            analytic = backward(T, params, upstream, variant).as_dict()
            numeric = numeric_gradients(T, params, upstream, variant, h)
            for name, grad in analytic.items():
                error = float(np.max(relative_error(grad, numeric[name]), initial=0.0))
                worst[name] = max(worst.get(name, 0.0), error)
            done += 1
        checked += done

    result = GradCheckResult(max_relative_error=max(worst.values(), default=0.0), n_configs=checked, worst=worst)
    if show_progress:
        marker = "✓" if result.passed else "⚠️"
        print(f"{marker} Gradient check over {checked} configs: max relative error {result.max_relative_error:.3e}",
              file=sys.stderr)
    return result


# ============================================================================
# CSV I/O
# ============================================================================

def load_tokens_csv(file_path: str) -> np.ndarray:
    """
    Read a token matrix, one token per row, G numeric columns, no header

    Blank lines are skipped; reported row numbers are file line numbers.

    Args:
        file_path: CSV path

    Returns:
        S x G float array
    """
    if not os.path.exists(file_path):
        raise FileNotFoundError(f"Token file not found: {file_path}")

    with open(file_path, "r", encoding="utf-8") as f:
        numbered = [(idx, line) for idx, line in enumerate(f, start=1) if line.strip()]
    if not numbered:
        raise TokenFormatError(f"{file_path} contains no tokens")
    line_numbers = [idx for idx, _ in numbered]

    try:
        frame = pd.read_csv(io.StringIO("".join(line for _, line in numbered)), header=None, dtype=str)
    except pd.errors.ParserError as e:
        match = re.search(r"line (\d+)", str(e))
        raise TokenFormatError(f"inconsistent column count in {file_path}",
                               row_number=line_numbers[int(match.group(1)) - 1] if match else None)

    values = frame.apply(lambda column: pd.to_numeric(column.str.strip(), errors="coerce"))
    bad_rows = np.flatnonzero(~np.isfinite(values.to_numpy(dtype=np.float64)).all(axis=1))
    if len(bad_rows):
        row = int(bad_rows[0])
        raise TokenFormatError(
            f"missing or non-numeric value in {file_path}: {','.join(frame.iloc[row].fillna('').tolist())}",
            row_number=line_numbers[row],
        )
    return as_token_matrix(values.to_numpy(dtype=np.float64))


def save_tokens_csv(tokens: np.ndarray, file_path: str):
    """Write a token matrix as header-less CSV"""
    parent = os.path.dirname(file_path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    pd.DataFrame(as_token_matrix(tokens)).to_csv(
        file_path, header=False, index=False, float_format="%.17g", lineterminator="\n"
    )


def save_loss_curve(loss_curve: Sequence[float], file_path: str):
    """Write per-epoch losses as CSV with columns epoch, loss"""
    parent = os.path.dirname(file_path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    frame = pd.DataFrame({"epoch": np.arange(len(loss_curve)), "loss": np.asarray(loss_curve, dtype=np.float64)})
    frame.to_csv(file_path, index=False, float_format="%.17g", lineterminator="\n")
