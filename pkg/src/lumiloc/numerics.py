"""Minimal deterministic dense-network engine.

Plain numpy float64 throughout: forward/backward for stacks of affine
layers with optional batch normalization, ReLU-family/sigmoid activations
and inverted dropout, plus MSE/BCE losses, bias-corrected Adam, and a
finite-difference gradient checker.

Conventions:
  - a batch is a (B, dim) float64 array, one sample per row;
  - layer weights are stored (out_dim, in_dim), so the affine map is
    ``x @ W.T + b``;
  - dropout uses inverted scaling at train time, so eval-mode forward is
    a pure affine+activation chain;
  - batch norm uses the biased (population) variance within a batch and
    an exponential moving average for running statistics.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ContractViolation, EmptyInputError, NumericOverflowError

ACTIVATIONS = ("relu", "leaky_relu", "sigmoid", "identity")

BN_EPSILON = 1e-5
BN_MOMENTUM = 0.1
BCE_CLAMP = 1e-7


class MacCounter:
    """Counts multiply-accumulate operations of the affine-layer matmuls.

    Element-wise work (bias adds, activations, batch norm, dropout, Adam)
    is deliberately not counted; the cost model quantifies matmul MACs only.
    """

    def __init__(self):
        self.enabled = False
        self.count = 0

    def reset(self):
        self.count = 0

    def add(self, macs: int):
        if self.enabled:
            self.count += macs

    def __enter__(self):
        self.enabled = True
        self.reset()
        return self

    def __exit__(self, *exc):
        self.enabled = False
        return False


#: process-wide counter used by :func:`mlp_forward` / :func:`mlp_backward`
mac_counter = MacCounter()


@dataclass(frozen=True)
class LayerSpec:
    """Shape and behavior of one dense layer."""

    in_dim: int
    out_dim: int
    activation: str = "identity"
    leaky_slope: float = 0.2
    dropout_rate: float = 0.0
    batch_norm: bool = False

    def __post_init__(self):
        if self.in_dim < 1 or self.out_dim < 1:
            raise ContractViolation(f"layer dims must be positive, got {self.in_dim}x{self.out_dim}")
        if self.activation not in ACTIVATIONS:
            raise ContractViolation(f"unknown activation {self.activation!r}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ContractViolation(f"dropout_rate must be in [0,1), got {self.dropout_rate}")
        if self.activation == "leaky_relu" and not 0.0 < self.leaky_slope < 1.0:
            raise ContractViolation(f"leaky_slope must be in (0,1), got {self.leaky_slope}")


class Layer:
    """Parameters and batch-norm state for one :class:`LayerSpec`.

    Batch-norm layers carry no affine bias: a constant shift before the
    normalization is removed by the mean subtraction (its gradient is
    identically zero), so beta is the only shift parameter.
    """

    def __init__(self, spec: LayerSpec, rng: np.random.Generator):
        self.spec = spec
        limit = np.sqrt(6.0 / (spec.in_dim + spec.out_dim))
        self.weight = rng.uniform(-limit, limit, size=(spec.out_dim, spec.in_dim))
        if spec.batch_norm:
            self.bias = None
            self.gamma = np.ones(spec.out_dim)
            self.beta = np.zeros(spec.out_dim)
            self.running_mean = np.zeros(spec.out_dim)
            self.running_var = np.ones(spec.out_dim)
        else:
            self.bias = np.zeros(spec.out_dim)
            self.gamma = self.beta = None
            self.running_mean = self.running_var = None
        self.momentum = BN_MOMENTUM

    def parameters(self) -> list[np.ndarray]:
        if self.spec.batch_norm:
            return [self.weight, self.gamma, self.beta]
        return [self.weight, self.bias]


class MlpNet:
    """An ordered stack of dense layers with a train/eval mode switch."""

    def __init__(self, specs: list[LayerSpec], rng: np.random.Generator):
        if not specs:
            raise ContractViolation("a net needs at least one layer")
        for prev, nxt in zip(specs, specs[1:]):
            if prev.out_dim != nxt.in_dim:
                raise ContractViolation(
                    f"layer dims incompatible: {prev.out_dim} -> {nxt.in_dim}"
                )
        self.layers = [Layer(s, rng) for s in specs]
        self.mode = "train"

    @property
    def in_dim(self) -> int:
        return self.layers[0].spec.in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].spec.out_dim

    def train(self) -> "MlpNet":
        self.mode = "train"
        return self

    def eval(self) -> "MlpNet":
        self.mode = "eval"
        return self

    def parameters(self) -> list[np.ndarray]:
        """Flat parameter list; per layer: weight, bias, then gamma, beta if present."""
        out: list[np.ndarray] = []
        for layer in self.layers:
            out.extend(layer.parameters())
        return out

    def has_dropout(self) -> bool:
        return any(l.spec.dropout_rate > 0 for l in self.layers)

    def copy(self) -> "MlpNet":
        return copy.deepcopy(self)

    def without_dropout(self) -> "MlpNet":
        """Deep copy with every dropout rate forced to zero."""
        clone = self.copy()
        for layer in clone.layers:
            layer.spec = replace(layer.spec, dropout_rate=0.0)
        return clone

    def forward_macs(self) -> int:
        """Matmul MACs of one per-sample forward pass."""
        return sum(l.spec.in_dim * l.spec.out_dim for l in self.layers)


@dataclass
class _LayerCache:
    x: np.ndarray              # layer input
    h: np.ndarray              # activation input (post affine, post BN)
    a: np.ndarray              # activation output, pre dropout
    bn_xhat: np.ndarray | None = None
    bn_invstd: np.ndarray | None = None
    drop_mask: np.ndarray | None = None


@dataclass
class ForwardCache:
    net_id: int
    mode: str
    layers: list[_LayerCache] = field(default_factory=list)
    out: np.ndarray | None = None


def _activate(spec: LayerSpec, h: np.ndarray) -> np.ndarray:
    if spec.activation == "relu":
        return np.maximum(h, 0.0)
    if spec.activation == "leaky_relu":
        return np.where(h > 0, h, spec.leaky_slope * h)
    if spec.activation == "sigmoid":
        return 1.0 / (1.0 + np.exp(-h))
    return h


def _activate_grad(spec: LayerSpec, cache: _LayerCache) -> np.ndarray:
    if spec.activation == "relu":
        return cache.h > 0  # bool mask; multiplies as 0/1
    if spec.activation == "leaky_relu":
        return np.where(cache.h > 0, 1.0, spec.leaky_slope)
    if spec.activation == "sigmoid":
        return cache.a * (1.0 - cache.a)
    return np.ones_like(cache.h)


def mlp_forward(
    net: MlpNet, batch: np.ndarray, rng: np.random.Generator | None = None
) -> tuple[np.ndarray, ForwardCache]:
    """Run the net on a batch; returns output and per-layer cache.

    In train mode dropout masks are drawn from ``rng`` and batch-norm layers
    use batch statistics (updating the running averages). Eval mode is
    deterministic: dropout is the identity and batch norm uses running stats.
    """
    batch = np.asarray(batch, dtype=float)
    if batch.ndim != 2 or batch.shape[1] != net.in_dim:
        raise ContractViolation(
            f"batch shape {batch.shape} incompatible with input dim {net.in_dim}"
        )
    training = net.mode == "train"
    if training and net.has_dropout() and rng is None:
        raise ContractViolation("train-mode forward with dropout requires a seeded rng")

    cache = ForwardCache(net_id=id(net), mode=net.mode)
    x = batch
    for layer in net.layers:
        spec = layer.spec
        mac_counter.add(x.shape[0] * spec.in_dim * spec.out_dim)
        z = x @ layer.weight.T
        if layer.bias is not None:
            z = z + layer.bias
        lc = _LayerCache(x=x, h=z, a=z)
        if spec.batch_norm:
            if training:
                mean = z.mean(axis=0)
                var = z.var(axis=0)  # population variance
                layer.running_mean = (1 - layer.momentum) * layer.running_mean + layer.momentum * mean
                layer.running_var = (1 - layer.momentum) * layer.running_var + layer.momentum * var
            else:
                mean = layer.running_mean
                var = layer.running_var
            invstd = 1.0 / np.sqrt(var + BN_EPSILON)
            xhat = (z - mean) * invstd
            lc.bn_xhat = xhat
            lc.bn_invstd = invstd
            lc.h = layer.gamma * xhat + layer.beta
        a = _activate(spec, lc.h)
        lc.a = a
        if training and spec.dropout_rate > 0.0:
            mask = rng.random(a.shape) >= spec.dropout_rate
            lc.drop_mask = mask
            x = a * mask / (1.0 - spec.dropout_rate)
        else:
            x = a
        cache.layers.append(lc)
    if not np.all(np.isfinite(x)):
        raise NumericOverflowError("non-finite values in forward output")
    cache.out = x
    return x, cache


def mlp_backward(
    net: MlpNet, cache: ForwardCache, upstream_grad: np.ndarray
) -> tuple[list[np.ndarray], np.ndarray]:
    """Backpropagate ``upstream_grad`` through a cached train-mode forward.

    Returns (parameter gradients aligned with ``net.parameters()``,
    gradient w.r.t. the input batch).
    """
    if cache.net_id != id(net):
        raise ContractViolation("cache does not belong to this net")
    if cache.mode != "train":
        raise ContractViolation("backward requires a train-mode forward cache")
    upstream_grad = np.asarray(upstream_grad, dtype=float)
    if upstream_grad.shape != cache.out.shape:
        raise ContractViolation(
            f"upstream grad shape {upstream_grad.shape} != output shape {cache.out.shape}"
        )

    per_layer: list[list[np.ndarray]] = []
    d = upstream_grad
    for layer, lc in zip(reversed(net.layers), reversed(cache.layers)):
        spec = layer.spec
        if lc.drop_mask is not None:
            d = d * lc.drop_mask / (1.0 - spec.dropout_rate)
        d = d * _activate_grad(spec, lc)
        if spec.batch_norm:
            n = d.shape[0]
            dgamma = np.sum(d * lc.bn_xhat, axis=0)
            dbeta = np.sum(d, axis=0)
            dxhat = d * layer.gamma
            # batch-norm backward through the batch statistics
            d = (lc.bn_invstd / n) * (
                n * dxhat
                - np.sum(dxhat, axis=0)
                - lc.bn_xhat * np.sum(dxhat * lc.bn_xhat, axis=0)
            )
            mac_counter.add(2 * d.shape[0] * spec.in_dim * spec.out_dim)
            dw = d.T @ lc.x
            d = d @ layer.weight
            per_layer.append([dw, dgamma, dbeta])
        else:
            mac_counter.add(2 * d.shape[0] * spec.in_dim * spec.out_dim)
            dw = d.T @ lc.x
            db = d.sum(axis=0)
            d = d @ layer.weight
            per_layer.append([dw, db])

    flat: list[np.ndarray] = []
    for grads in reversed(per_layer):
        flat.extend(grads)
    return flat, d


@dataclass
class AdamState:
    """Bias-corrected Adam accumulators for a fixed parameter list."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    step_count: int
    learning_rate: float
    beta1: float
    beta2: float
    epsilon: float

    @classmethod
    def for_params(
        cls,
        params: list[np.ndarray],
        learning_rate: float,
        betas: tuple[float, float] = (0.9, 0.999),
        epsilon: float = 1e-8,
    ) -> "AdamState":
        b1, b2 = betas
        if not (0 < b1 < 1 and 0 < b2 < 1):
            raise ContractViolation(f"betas must be in (0,1), got {betas}")
        if learning_rate <= 0 or epsilon <= 0:
            raise ContractViolation("learning rate and epsilon must be positive")
        return cls(
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
            step_count=0,
            learning_rate=learning_rate,
            beta1=b1,
            beta2=b2,
            epsilon=epsilon,
        )


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState) -> None:
    """One in-place Adam update; increments ``state.step_count`` by one."""
    if len(params) != len(state.m) or len(grads) != len(params):
        raise ContractViolation("params/grads/state length mismatch")
    for p, g, m in zip(params, grads, state.m):
        if p.shape != g.shape or p.shape != m.shape:
            raise ContractViolation(f"shape mismatch: param {p.shape}, grad {g.shape}")
    state.step_count += 1
    t = state.step_count
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.epsilon)


def mse_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared Euclidean residual over samples; gradient w.r.t. pred.

    loss = (1/N) sum_i ||pred_i - target_i||^2, grad = 2 (pred - target) / N.
    """
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise ContractViolation(f"shape mismatch: {pred.shape} vs {target.shape}")
    if pred.shape[0] == 0:
        raise EmptyInputError("mse_loss on zero samples")
    n = pred.shape[0]
    resid = pred - target
    loss = float(np.sum(resid * resid) / n)
    if not np.isfinite(loss):
        raise NumericOverflowError("non-finite MSE loss")
    return loss, 2.0 * resid / n


def bce_loss(prob: np.ndarray, label: np.ndarray) -> tuple[float, np.ndarray]:
    """Binary cross-entropy over probabilities with clamped logarithms.

    Probabilities are clamped to [1e-7, 1 - 1e-7] before the logarithm;
    the gradient is zero where the clamp is active.
    """
    prob = np.asarray(prob, dtype=float)
    label = np.asarray(label, dtype=float)
    if prob.shape != label.shape:
        raise ContractViolation(f"shape mismatch: {prob.shape} vs {label.shape}")
    if prob.shape[0] == 0:
        raise EmptyInputError("bce_loss on zero samples")
    if np.any((label != 0.0) & (label != 1.0)):
        raise ContractViolation("labels must be 0 or 1")
    if np.any(prob < 0.0) or np.any(prob > 1.0):
        raise ContractViolation("probabilities must lie in [0,1]")
    n = prob.shape[0]
    p = np.clip(prob, BCE_CLAMP, 1.0 - BCE_CLAMP)
    loss = float(-np.sum(label * np.log(p) + (1.0 - label) * np.log(1.0 - p)) / n)
    grad = (p - label) / (p * (1.0 - p) * n)
    grad = np.where((prob > BCE_CLAMP) & (prob < 1.0 - BCE_CLAMP), grad, 0.0)
    return loss, grad


@dataclass(frozen=True)
class GradCheckResult:
    max_rel_error: float
    dropout_was_disabled: bool
    n_params: int


def gradient_check(
    net: MlpNet,
    batch: np.ndarray,
    loss: str = "mse",
    targets: np.ndarray | None = None,
    eps: float = 1e-5,
) -> GradCheckResult:
    """Compare analytic gradients against central finite differences.

    Runs on a deep copy of ``net`` with dropout forced off (and reports
    whether that was necessary). ``loss`` is "mse" or "bce"; for "bce" the
    net must end in a sigmoid so outputs are probabilities.
    """
    if not 1e-6 <= eps <= 1e-4:
        raise ContractViolation(f"eps must be in [1e-6, 1e-4], got {eps}")
    if targets is None:
        raise ContractViolation("gradient_check needs targets for the loss")
    if loss not in ("mse", "bce"):
        raise ContractViolation(f"unknown loss {loss!r}")
    if loss == "bce" and net.layers[-1].spec.activation != "sigmoid":
        raise ContractViolation("bce gradient check requires a sigmoid output layer")

    loss_fn = mse_loss if loss == "mse" else bce_loss
    dropout_disabled = net.has_dropout()
    work = net.without_dropout()
    work.train()

    out, cache = mlp_forward(work, batch)
    _, up = loss_fn(out, targets)
    analytic, _ = mlp_backward(work, cache, up)

    params = work.parameters()

    def eval_loss() -> float:
        o, _ = mlp_forward(work, batch)
        return loss_fn(o, targets)[0]

    worst = 0.0
    n_params = 0
    for p, a in zip(params, analytic):
        flat_p = p.ravel()
        flat_a = a.ravel()
        for i in range(flat_p.size):
            orig = flat_p[i]
            flat_p[i] = orig + eps
            lp = eval_loss()
            flat_p[i] = orig - eps
            lm = eval_loss()
            flat_p[i] = orig
            numeric = (lp - lm) / (2.0 * eps)
            denom = max(abs(flat_a[i]), abs(numeric), 1e-12)
            worst = max(worst, abs(flat_a[i] - numeric) / denom)
            n_params += 1
    return GradCheckResult(max_rel_error=worst, dropout_was_disabled=dropout_disabled, n_params=n_params)
