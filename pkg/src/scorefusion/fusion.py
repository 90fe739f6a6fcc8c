"""The fusion head: a compact MLP over [embedding | per-provider scores]
with manual forward/backward, mode-specific losses, and the decision rule.

Conventions fixed here and relied on everywhere:
  - nonlinearity is the rectifier, with derivative 0 at exactly 0;
  - weights are (fan_in, fan_out), applied as `a @ W + b`;
  - init is uniform +-sqrt(6 / (fan_in + fan_out)), biases zero, seeded;
  - multi-label BCE is averaged over classes, so the fusion learning rate
    means the same thing for every K;
  - argmax ties break to the lowest index; thresholds are inclusive (>=).

LLM scores enter the input raw (already in [0, 1]) and receive no gradient:
backward returns the gradient for the embedding slice only.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import LabelVector, ScoreVector, TaskMode
from .llm import LLMScore


@dataclass(frozen=True)
class FusionConfig:
    """Fusion-head hyperparameters. lr_high is the fast rate of the
    two-rate scheme (the encoder trains at EncoderConfig.lr_small)."""

    hidden_sizes: tuple[int, ...] = (128,)
    lr_high: float = 1e-2
    epochs: int = 10
    train_batch_size: int = 32
    seed: int = 42
    threshold: float | tuple[float, ...] = 0.5

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(self.hidden_sizes))
        if isinstance(self.threshold, (list, tuple)):
            object.__setattr__(self, "threshold",
                               tuple(float(t) for t in self.threshold))
            bad = any(not 0.0 < t < 1.0 for t in self.threshold)
        else:
            object.__setattr__(self, "threshold", float(self.threshold))
            bad = not 0.0 < self.threshold < 1.0
        if bad:
            raise ValueError("thresholds must lie in (0, 1)")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.train_batch_size < 1:
            raise ValueError("train_batch_size must be >= 1")
        if not self.lr_high > 0:
            raise ValueError("lr_high must be > 0")
        if any(h < 1 for h in self.hidden_sizes):
            raise ValueError("hidden sizes must be >= 1")

    def thresholds_for(self, k: int) -> np.ndarray:
        if isinstance(self.threshold, tuple):
            if len(self.threshold) != k:
                raise ValueError(
                    f"{len(self.threshold)} per-class thresholds for K={k}"
                )
            return np.array(self.threshold)
        return np.full(k, self.threshold)


@dataclass
class FusionParams:
    """Per-layer weight matrices and bias vectors.

    weights[i] has shape (fan_in_i, fan_out_i); the chain runs from the
    fused input width through hidden_sizes to K.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[1]

    def copy(self) -> "FusionParams":
        return FusionParams([w.copy() for w in self.weights],
                            [b.copy() for b in self.biases])


def init_fusion_params(input_dim: int, hidden_sizes: Sequence[int], k: int,
                       seed: int) -> FusionParams:
    """Seeded Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    dims = [input_dim, *hidden_sizes, k]
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return FusionParams(weights, biases)


def assemble_input(embedding: np.ndarray,
                   llm_scores: Sequence[LLMScore]) -> np.ndarray:
    """Fused input: embedding first, then each provider's K scores in
    configured provider order. Length D + P*K."""
    if not llm_scores:
        raise ValueError("at least one provider score vector is required")
    parts = [np.asarray(embedding, dtype=np.float64)]
    parts.extend(np.asarray(s.scores, dtype=np.float64) for s in llm_scores)
    return np.concatenate(parts)


@dataclass
class FusionTape:
    """Activations retained by forward for the matching backward pass."""

    layer_inputs: list[np.ndarray]
    pre_activations: list[np.ndarray]
    single: bool


def forward(x: np.ndarray, params: FusionParams) -> tuple[np.ndarray, FusionTape]:
    """Affine -> rectifier per hidden layer, final affine to K logits.

    Accepts one input vector or a (n, input_dim) batch; logits match.
    """
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 1
    a = arr.reshape(1, -1) if single else arr
    if a.shape[1] != params.input_dim:
        raise ValueError(
            f"input width {a.shape[1]} does not match params "
            f"({params.input_dim})"
        )
    layer_inputs = []
    pre_activations = []
    for w, b in zip(params.weights[:-1], params.biases[:-1]):
        layer_inputs.append(a)
        z = a @ w + b
        pre_activations.append(z)
        a = np.maximum(z, 0.0)
    layer_inputs.append(a)
    logits = a @ params.weights[-1] + params.biases[-1]
    tape = FusionTape(layer_inputs, pre_activations, single)
    return (logits[0] if single else logits), tape


@dataclass
class GradientBundle:
    """Gradients for every fusion tensor plus the embedding slice of the
    input gradient (forwarded to the encoder's small-rate update)."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    embedding_grad: np.ndarray


def backward(tape: FusionTape, dlogits: np.ndarray,
             embed_dim: int, params: FusionParams) -> GradientBundle:
    """Exact reverse-mode gradients of the scalar objective whose gradient
    at the logits is `dlogits`.

    For batched tapes, dlogits rows must already carry any 1/n factor; the
    parameter gradients are then gradients of the same scalar objective.
    The LLM-score slice of the input gradient is discarded by contract.
    """
    if tape is None:
        raise ValueError("forward must run before backward")
    delta = np.asarray(dlogits, dtype=np.float64)
    if tape.single:
        delta = delta.reshape(1, -1)
    weight_grads: list[np.ndarray] = [None] * len(params.weights)  # type: ignore
    bias_grads: list[np.ndarray] = [None] * len(params.biases)  # type: ignore
    for layer in range(len(params.weights) - 1, -1, -1):
        a_prev = tape.layer_inputs[layer]
        weight_grads[layer] = a_prev.T @ delta
        bias_grads[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = delta @ params.weights[layer].T
            delta = delta * (tape.pre_activations[layer - 1] > 0.0)
    dinput = delta @ params.weights[0].T
    embedding_grad = dinput[:, :embed_dim]
    if tape.single:
        embedding_grad = embedding_grad[0]
    return GradientBundle(weight_grads, bias_grads, embedding_grad)


def fusion_step(params: FusionParams, grads: GradientBundle,
                lr_high: float) -> FusionParams:
    """Plain gradient descent at the high rate on every fusion parameter."""
    for w, gw in zip(params.weights, grads.weights):
        if w.shape != gw.shape:
            raise ValueError(f"weight grad shape {gw.shape} != {w.shape}")
    for b, gb in zip(params.biases, grads.biases):
        if b.shape != gb.shape:
            raise ValueError(f"bias grad shape {gb.shape} != {b.shape}")
    for w, gw in zip(params.weights, grads.weights):
        w -= lr_high * gw
    for b, gb in zip(params.biases, grads.biases):
        b -= lr_high * gb
    return params


def softmax(logits: np.ndarray) -> np.ndarray:
    """Max-subtracted softmax along the last axis."""
    z = np.asarray(logits, dtype=np.float64)
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def sigmoid(z: np.ndarray) -> np.ndarray:
    """Numerically stable elementwise logistic function."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def loss_multiclass(logits: np.ndarray, target_index: int) -> float:
    """-log softmax(logits)[target], computed via a max-subtracted
    log-sum-exp so huge logits cannot overflow."""
    z = np.asarray(logits, dtype=np.float64)
    if not 0 <= target_index < z.shape[-1]:
        raise IndexError(f"target index {target_index} out of range")
    m = z.max()
    lse = m + np.log(np.exp(z - m).sum())
    return float(lse - z[target_index])


def grad_loss_multiclass(logits: np.ndarray, target_index: int) -> np.ndarray:
    """d loss_multiclass / d logits = softmax - one_hot(target)."""
    if not 0 <= target_index < np.asarray(logits).shape[-1]:
        raise IndexError(f"target index {target_index} out of range")
    p = softmax(logits)
    p[target_index] -= 1.0
    return p


def loss_multilabel(logits: np.ndarray, target: LabelVector) -> float:
    """Mean over classes of BCE(sigmoid(logit_k), y_k) in the stable logit
    form max(z,0) - z*y + log1p(exp(-|z|))."""
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(target.bits, dtype=np.float64)
    if z.shape[-1] != y.shape[-1]:
        raise ValueError(f"logits length {z.shape[-1]} != target length {y.shape[-1]}")
    per_class = np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))
    return float(per_class.mean())


def grad_loss_multilabel(logits: np.ndarray, target: LabelVector) -> np.ndarray:
    """d loss_multilabel / d logits = (sigmoid(z) - y) / K."""
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(target.bits, dtype=np.float64)
    if z.shape[-1] != y.shape[-1]:
        raise ValueError(f"logits length {z.shape[-1]} != target length {y.shape[-1]}")
    return (sigmoid(z) - y) / z.shape[-1]


def batch_loss_and_dlogits(logits: np.ndarray, targets: Sequence[LabelVector],
                           mode: TaskMode) -> tuple[float, np.ndarray]:
    """Mean loss over a batch plus d(mean loss)/d logits, row per example."""
    n = logits.shape[0]
    dlogits = np.empty_like(logits)
    total = 0.0
    for i in range(n):
        target = targets[i]
        if mode is TaskMode.MULTI_CLASS:
            idx = target.active_indices()[0]
            total += loss_multiclass(logits[i], idx)
            dlogits[i] = grad_loss_multiclass(logits[i], idx)
        else:
            total += loss_multilabel(logits[i], target)
            dlogits[i] = grad_loss_multilabel(logits[i], target)
    return total / n, dlogits / n


@dataclass(frozen=True)
class Prediction:
    """Per-class scores in [0, 1] plus the decided label set."""

    scores: ScoreVector
    decided: LabelVector

    def decided_indices(self) -> tuple[int, ...]:
        return self.decided.active_indices()


def decide(logits: np.ndarray, mode: TaskMode,
           thresholds: float | Sequence[float] = 0.5) -> Prediction:
    """Apply the mode's decision rule to one logit vector.

    MULTI_CLASS: scores = softmax, decided = argmax (lowest index wins
    ties). MULTI_LABEL: scores = per-class sigmoid, decided = every class
    whose score is >= its threshold; the decided set may be empty.
    """
    z = np.asarray(logits, dtype=np.float64)
    k = z.shape[-1]
    if mode is TaskMode.MULTI_CLASS:
        probs = softmax(z)
        winner = int(np.argmax(probs))
        bits = tuple(1 if i == winner else 0 for i in range(k))
    else:
        probs = sigmoid(z)
        th = np.full(k, thresholds) if np.isscalar(thresholds) \
            else np.asarray(thresholds, dtype=np.float64)
        if th.shape[0] != k:
            raise ValueError(f"{th.shape[0]} thresholds for K={k}")
        bits = tuple(int(p >= t) for p, t in zip(probs, th))
    return Prediction(ScoreVector(probs.tolist()), LabelVector(bits))
