"""Dense-network numerics: forward/backward passes, soft-target losses, optimizers.

Everything runs on plain float64 numpy arrays. Networks are stacks of fully
connected layers with relu or identity activations. Gradients come from
analytic backprop; the test suite cross-checks them against the
finite-difference oracle at the bottom of this module.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DistributionError, NonFiniteError, ParameterError, ShapeError

Matrix = np.ndarray

ACTIVATIONS = ("relu", "identity")

PROB_FLOOR = 1e-12  # clamp applied to probabilities before taking logs
ROW_SUM_TOL = 1e-6  # tolerance when checking that rows are distributions


@dataclass
class Layer:
    weight: Matrix  # out x in
    bias: np.ndarray  # out
    activation: str = "relu"


@dataclass
class DenseNet:
    layers: list[Layer]

    @property
    def input_dim(self) -> int:
        return self.layers[0].weight.shape[1]

    @property
    def output_dim(self) -> int:
        return self.layers[-1].weight.shape[0]

    def parameters(self) -> list[np.ndarray]:
        """Flat list [W0, b0, W1, b1, ...]; the arrays are live, not copies."""
        params: list[np.ndarray] = []
        for layer in self.layers:
            params.append(layer.weight)
            params.append(layer.bias)
        return params

    def copy(self) -> "DenseNet":
        return DenseNet(
            [Layer(l.weight.copy(), l.bias.copy(), l.activation) for l in self.layers]
        )


def glorot_net(
    dims: Sequence[int],
    rng: np.random.Generator,
    *,
    hidden_activation: str = "relu",
    output_activation: str = "identity",
) -> DenseNet:
    """Net with layer widths ``dims``, uniform +-sqrt(6/(fan_in+fan_out)) weights, zero biases."""
    if len(dims) < 2:
        raise ParameterError("a net needs an input and an output dimension")
    for act in (hidden_activation, output_activation):
        if act not in ACTIVATIONS:
            raise ParameterError(f"unknown activation {act!r}")
    layers = []
    last = len(dims) - 2
    for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weight = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        bias = np.zeros(fan_out)
        layers.append(Layer(weight, bias, output_activation if i == last else hidden_activation))
    return DenseNet(layers)


def _as_matrix(x, what: str) -> Matrix:
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 2:
        raise ShapeError(f"{what} must be 2-D, got shape {arr.shape}")
    return arr


def forward(net: DenseNet, x: Matrix) -> list[Matrix]:
    """Activation record [input, layer 1 output, ..., final output].

    The input sits at position 0 so backprop can consume the record alone.
    """
    h = _as_matrix(x, "input")
    if h.shape[1] != net.input_dim:
        raise ShapeError(f"input has {h.shape[1]} columns, net expects {net.input_dim}")
    acts = [h]
    for layer in net.layers:
        z = h @ layer.weight.T + layer.bias
        if layer.activation == "relu":
            h = np.maximum(z, 0.0)
        elif layer.activation == "identity":
            h = z
        else:
            raise ParameterError(f"unknown activation {layer.activation!r}")
        acts.append(h)
    if not np.isfinite(h).all():
        raise NonFiniteError("forward pass produced non-finite values")
    return acts


def backprop(
    net: DenseNet, activations: Sequence[Matrix], upstream_grad: Matrix
) -> tuple[list[np.ndarray], Matrix]:
    """Gradients for one upstream signal.

    ``activations`` is the record returned by :func:`forward`. Returns
    (param_grads, input_grad) where param_grads matches ``net.parameters()``
    order. No batch averaging happens here; whatever scaling the loss
    gradient carries flows through unchanged.
    """
    if len(activations) != len(net.layers) + 1:
        raise ShapeError("activation record does not match net depth")
    g = _as_matrix(upstream_grad, "upstream gradient")
    if g.shape != activations[-1].shape:
        raise ShapeError(
            f"upstream gradient shape {g.shape} != output shape {activations[-1].shape}"
        )
    param_grads: list[np.ndarray] = [np.empty(0)] * (2 * len(net.layers))
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        if layer.activation == "relu":
            g = g * (activations[i + 1] > 0)
        param_grads[2 * i] = g.T @ activations[i]
        param_grads[2 * i + 1] = g.sum(axis=0)
        g = g @ layer.weight
    if not np.isfinite(g).all():
        raise NonFiniteError("backprop produced non-finite input gradient")
    return param_grads, g


def softmax(logits: Matrix) -> Matrix:
    """Row-wise softmax with max subtraction; accepts 1-D or 2-D input."""
    z = np.asarray(logits, dtype=float)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_temperature(logits: Matrix, tau: float) -> Matrix:
    """Softmax of logits / tau. tau=1 reproduces softmax bit-for-bit."""
    if not tau > 0:
        raise ParameterError(f"temperature must be positive, got {tau}")
    return softmax(np.asarray(logits, dtype=float) / tau)


def _check_rows_are_distributions(m: Matrix, what: str) -> None:
    sums = m.sum(axis=1)
    if np.max(np.abs(sums - 1.0)) > ROW_SUM_TOL:
        raise DistributionError(f"{what} rows must sum to 1 within {ROW_SUM_TOL}")


def cross_entropy_soft(pred_probs: Matrix, target_dist: Matrix) -> float:
    """Mean over the batch of -sum(target * ln(pred)), probs clamped at 1e-12."""
    p = _as_matrix(pred_probs, "pred_probs")
    t = _as_matrix(target_dist, "target_dist")
    if p.shape != t.shape:
        raise ShapeError(f"pred shape {p.shape} != target shape {t.shape}")
    _check_rows_are_distributions(p, "pred_probs")
    _check_rows_are_distributions(t, "target_dist")
    loss = float(-(t * np.log(np.maximum(p, PROB_FLOOR))).sum() / p.shape[0])
    if not np.isfinite(loss):
        raise NonFiniteError("cross entropy produced a non-finite loss")
    return loss


def kd_loss(student_soft: Matrix, teacher_soft: Matrix, hard, alpha: float, tau: float) -> float:
    """alpha * CE(student, hard) + (1 - alpha) * tau^2 * CE(student vs teacher)."""
    if not 0.0 <= alpha <= 1.0:
        raise ParameterError(f"alpha must lie in [0, 1], got {alpha}")
    if not tau > 0:
        raise ParameterError(f"temperature must be positive, got {tau}")
    hard = getattr(hard, "matrix", hard)
    value = alpha * cross_entropy_soft(student_soft, hard)
    if alpha != 1.0:
        value += (1.0 - alpha) * tau * tau * cross_entropy_soft(student_soft, teacher_soft)
    return value


def ce_softmax_grad(logits: Matrix, target_dist: Matrix) -> Matrix:
    """Gradient of mean softmax cross entropy at the logits: (softmax - target) / batch."""
    z = _as_matrix(logits, "logits")
    t = _as_matrix(target_dist, "target_dist")
    if z.shape != t.shape:
        raise ShapeError(f"logits shape {z.shape} != target shape {t.shape}")
    _check_rows_are_distributions(t, "target_dist")
    return (softmax(z) - t) / z.shape[0]


# ---------------------------------------------------------------------------
# optimizers


@dataclass
class OptimizerState:
    kind: str  # sgd | adam | malicious
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    gamma: float = 2.0  # malicious amplification factor
    r_max: float = 8.0  # malicious scale cap
    step: int = 0
    m: list | None = None
    v: list | None = None
    scales: list | None = None
    prev_signs: list | None = None


def make_optimizer(kind: str, learning_rate: float, **hyper) -> OptimizerState:
    if kind not in ("sgd", "adam", "malicious"):
        raise ParameterError(f"unknown optimizer {kind!r}")
    if not learning_rate > 0:
        raise ParameterError(f"learning rate must be positive, got {learning_rate}")
    return OptimizerState(kind=kind, learning_rate=learning_rate, **hyper)


def optimizer_step(
    state: OptimizerState, params: list[np.ndarray], grads: list[np.ndarray]
) -> list[np.ndarray]:
    """Update params in place from grads; state buffers are created lazily."""
    if len(params) != len(grads):
        raise ShapeError("params and grads differ in length")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ShapeError(f"param shape {p.shape} != grad shape {g.shape}")
    lr = state.learning_rate
    if state.kind == "sgd":
        for p, g in zip(params, grads):
            p -= lr * g
    elif state.kind == "adam":
        if state.m is None:
            state.m = [np.zeros_like(p) for p in params]
            state.v = [np.zeros_like(p) for p in params]
        state.step += 1
        b1, b2 = state.beta1, state.beta2
        correct1 = 1.0 - b1**state.step
        correct2 = 1.0 - b2**state.step
        for p, g, m, v in zip(params, grads, state.m, state.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= lr * (m / correct1) / (np.sqrt(v / correct2) + state.eps)
    elif state.kind == "malicious":
        # Scale up per-entry steps while the gradient sign persists, reset on a
        # flip: r starts at 1, same sign -> r = min(gamma * r, r_max), else 1.
        if state.scales is None:
            state.scales = [np.ones_like(p) for p in params]
            state.prev_signs = [np.zeros_like(p) for p in params]
        for p, g, r, prev in zip(params, grads, state.scales, state.prev_signs):
            sign = np.sign(g)
            same = (sign == prev) & (sign != 0)
            r[:] = np.where(same, np.minimum(state.gamma * r, state.r_max), 1.0)
            p -= lr * r * g
            prev[:] = sign
    else:
        raise ParameterError(f"unknown optimizer {state.kind!r}")
    return params


# ---------------------------------------------------------------------------
# training helper shared by the teacher, distillation and attack fine-tuning


def fit_classifier(
    net: DenseNet,
    x: Matrix,
    target_dists: Matrix,
    *,
    epochs: int,
    batch_size: int,
    optimizer: OptimizerState,
    rng: np.random.Generator,
    grad_fn: Callable[[Matrix, np.ndarray], Matrix] | None = None,
) -> DenseNet:
    """Mini-batch training of ``net`` on (x, target_dists), in place.

    ``grad_fn(logits, batch_indices)`` may replace the default softmax
    cross-entropy gradient; distillation uses this hook.
    """
    x = _as_matrix(x, "features")
    t = _as_matrix(target_dists, "targets")
    if x.shape[0] != t.shape[0]:
        raise ShapeError("features and targets disagree on sample count")
    if batch_size < 1:
        raise ParameterError("batch size must be at least 1")
    n = x.shape[0]
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            acts = forward(net, x[idx])
            if grad_fn is None:
                grad = ce_softmax_grad(acts[-1], t[idx])
            else:
                grad = grad_fn(acts[-1], idx)
            param_grads, _ = backprop(net, acts, grad)
            optimizer_step(optimizer, net.parameters(), param_grads)
    return net


def top1_accuracy(logits: Matrix, labels: np.ndarray) -> float:
    return float(np.mean(np.argmax(logits, axis=1) == np.asarray(labels)))


def topk_accuracy(logits: Matrix, labels: np.ndarray, k: int) -> float:
    """Rate at which the true label lands among the k largest scores (ties by lowest index)."""
    z = _as_matrix(logits, "logits")
    if not 1 <= k <= z.shape[1]:
        raise ParameterError(f"top-k needs 1 <= k <= {z.shape[1]}, got {k}")
    ranked = np.argsort(-z, axis=1, kind="stable")[:, :k]
    return float(np.mean(np.any(ranked == np.asarray(labels)[:, None], axis=1)))


# ---------------------------------------------------------------------------
# finite-difference oracle; kept independent of the analytic path it checks


def finite_difference_grads(
    loss_fn: Callable[[], float], params: Sequence[np.ndarray], step: float = 1e-5
) -> list[np.ndarray]:
    """Central-difference gradient of loss_fn with respect to each params entry.

    Arrays are perturbed in place and restored. loss_fn takes no arguments and
    must read the live arrays.
    """
    if not step > 0:
        raise ParameterError("step must be positive")
    grads = []
    for p in params:
        g = np.zeros_like(p)
        flat_p = p.reshape(-1)
        flat_g = g.reshape(-1)
        for i in range(flat_p.size):
            orig = flat_p[i]
            flat_p[i] = orig + step
            hi = loss_fn()
            flat_p[i] = orig - step
            lo = loss_fn()
            flat_p[i] = orig
            flat_g[i] = (hi - lo) / (2.0 * step)
        grads.append(g)
    return grads
