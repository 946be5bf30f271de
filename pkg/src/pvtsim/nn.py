"""Block-structured network with a freeze-aware backward pass.

Each block applies, in order: a weight matrix, a per-channel scale, a
per-channel bias, then the activation. With input ``a``:

    z = a @ weight.T        (multiplicative matrix)
    u = z * scale           (multiplicative vector)
    v = u + b               (additive vector)
    out = act(v)            (relu or identity)

The loss is mean softmax cross-entropy over the batch. All arithmetic is
float64; float32 enters only at the wire/cost boundary.

``backward`` also reports how many activation floats it had to keep around
for the requested gradient set: a trained weight buffers its block input
(batch * in_dim floats), a trained scale buffers the pre-scale values
(batch * out_dim), a trained bias buffers nothing. Frozen variables never
contribute, even though gradients still flow through them (propagating
through a frozen weight needs the weight itself, not the input). The relu
sign mask is deliberately not counted here; the cost model folds it into a
fixed workspace term.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .freezing import FreezePlan
from .taxonomy import SLOTS_PER_BLOCK, VariableDescriptor, classify


class ActivationError(ValueError):
    """Non-finite values encountered in inputs or parameters."""


@dataclass(frozen=True)
class BlockSpec:
    in_dim: int
    out_dim: int
    activation: str = "relu"  # "relu" | "identity"

    def __post_init__(self):
        if self.in_dim < 1 or self.out_dim < 1:
            raise ValueError(f"block dims must be >= 1, got {self.in_dim}x{self.out_dim}")
        if self.activation not in ("relu", "identity"):
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass
class Block:
    spec: BlockSpec
    weight: np.ndarray  # (out_dim, in_dim)
    scale: np.ndarray  # (out_dim,)
    bias: np.ndarray  # (out_dim,)


@dataclass
class ModelState:
    blocks: list[Block]
    descriptors: list[VariableDescriptor]

    @property
    def num_variables(self) -> int:
        return len(self.descriptors)

    def copy(self) -> "ModelState":
        blocks = [
            Block(b.spec, b.weight.copy(), b.scale.copy(), b.bias.copy())
            for b in self.blocks
        ]
        return ModelState(blocks=blocks, descriptors=self.descriptors)

    def get_variable(self, var_id: int) -> np.ndarray:
        block, slot = divmod(var_id, SLOTS_PER_BLOCK)
        if not 0 <= block < len(self.blocks):
            raise KeyError(f"unknown variable id {var_id}")
        blk = self.blocks[block]
        return (blk.weight, blk.scale, blk.bias)[slot]

    def set_variable(self, var_id: int, value: np.ndarray) -> None:
        block, slot = divmod(var_id, SLOTS_PER_BLOCK)
        blk = self.blocks[block]
        if slot == 0:
            blk.weight = value
        elif slot == 1:
            blk.scale = value
        else:
            blk.bias = value


@dataclass
class ForwardCache:
    """Everything backward may need under any freeze plan."""

    block_inputs: list[np.ndarray]  # input activations per block
    pre_scale: list[np.ndarray]  # z per block
    pre_activation: list[np.ndarray]  # v per block
    logits: np.ndarray
    probs: np.ndarray


@dataclass
class GradientBundle:
    grads: dict[int, np.ndarray]  # trained variables only
    buffered_floats: int


def init_model(specs: list[BlockSpec], seed: int) -> ModelState:
    """Seeded model: weights ~ N(0, 1) / sqrt(in_dim), scales 1, biases 0."""
    for a, b in zip(specs, specs[1:]):
        if a.out_dim != b.in_dim:
            raise ValueError(
                f"block dimension mismatch: {a.out_dim} -> {b.in_dim}"
            )
    rng = np.random.default_rng(seed)
    blocks = []
    for spec in specs:
        weight = rng.standard_normal((spec.out_dim, spec.in_dim)) / np.sqrt(spec.in_dim)
        blocks.append(
            Block(
                spec=spec,
                weight=weight,
                scale=np.ones(spec.out_dim),
                bias=np.zeros(spec.out_dim),
            )
        )
    model = ModelState(blocks=blocks, descriptors=[])
    model.descriptors = classify(model)
    return model


def _check_finite(model: ModelState, features: np.ndarray) -> None:
    if not np.all(np.isfinite(features)):
        raise ActivationError("non-finite values in input features")
    for blk in model.blocks:
        if not (
            np.all(np.isfinite(blk.weight))
            and np.all(np.isfinite(blk.scale))
            and np.all(np.isfinite(blk.bias))
        ):
            raise ActivationError("non-finite values in model parameters")


def forward(
    model: ModelState, features: np.ndarray, labels: np.ndarray
) -> tuple[float, ForwardCache]:
    """Mean softmax cross-entropy over the batch, plus cached activations."""
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    if features.ndim != 2 or features.shape[1] != model.blocks[0].spec.in_dim:
        raise ValueError(
            f"feature dim {features.shape} does not match model input "
            f"{model.blocks[0].spec.in_dim}"
        )
    n_classes = model.blocks[-1].spec.out_dim
    if labels.min() < 0 or labels.max() >= n_classes:
        raise ValueError(f"labels outside [0, {n_classes})")
    _check_finite(model, features)

    a = features
    block_inputs, pre_scale, pre_activation = [], [], []
    with np.errstate(over="ignore", invalid="ignore"):
        for blk in model.blocks:
            block_inputs.append(a)
            z = a @ blk.weight.T
            u = z * blk.scale
            v = u + blk.bias
            pre_scale.append(z)
            pre_activation.append(v)
            a = np.maximum(v, 0.0) if blk.spec.activation == "relu" else v

        logits = a
        if not np.all(np.isfinite(logits)):
            raise ActivationError("activations overflowed during forward pass")
        shifted = logits - logits.max(axis=1, keepdims=True)
        exp = np.exp(shifted)
        probs = exp / exp.sum(axis=1, keepdims=True)
        batch = np.arange(features.shape[0])
        log_probs = shifted - np.log(exp.sum(axis=1, keepdims=True))
        loss = float(-log_probs[batch, labels].mean())
    if not np.isfinite(loss):
        raise ActivationError("non-finite loss")
    return loss, ForwardCache(block_inputs, pre_scale, pre_activation, logits, probs)


def backward(
    model: ModelState,
    features: np.ndarray,
    labels: np.ndarray,
    plan: FreezePlan,
    cache: ForwardCache | None = None,
) -> GradientBundle:
    """Exact gradients of the loss for the plan's trained variables.

    Pass ``cache`` to reuse activations from an earlier ``forward`` call on
    the same (model, batch).
    """
    all_ids = set(range(model.num_variables))
    unknown = (plan.trained | plan.frozen) - all_ids
    if unknown:
        raise KeyError(f"unknown variable ids in plan: {sorted(unknown)}")

    if cache is None:
        _, cache = forward(model, features, labels)
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    n = features.shape[0]

    delta = cache.probs.copy()
    delta[np.arange(n), labels] -= 1.0
    delta /= n

    grads: dict[int, np.ndarray] = {}
    buffered = 0
    for i in reversed(range(len(model.blocks))):
        blk = model.blocks[i]
        weight_id = SLOTS_PER_BLOCK * i
        scale_id = weight_id + 1
        bias_id = weight_id + 2

        if blk.spec.activation == "relu":
            delta = delta * (cache.pre_activation[i] > 0.0)
        if bias_id in plan.trained:
            grads[bias_id] = delta.sum(axis=0)
        if scale_id in plan.trained:
            grads[scale_id] = (delta * cache.pre_scale[i]).sum(axis=0)
            buffered += n * blk.spec.out_dim
        delta_z = delta * blk.scale
        if weight_id in plan.trained:
            grads[weight_id] = delta_z.T @ cache.block_inputs[i]
            buffered += n * blk.spec.in_dim
        if i > 0:
            delta = delta_z @ blk.weight

    return GradientBundle(grads=grads, buffered_floats=buffered)


def predict_logits(model: ModelState, features: np.ndarray) -> np.ndarray:
    """Forward pass without a loss, for inference."""
    a = np.asarray(features, dtype=np.float64)
    for blk in model.blocks:
        v = (a @ blk.weight.T) * blk.scale + blk.bias
        a = np.maximum(v, 0.0) if blk.spec.activation == "relu" else v
    return a


def finite_diff_grad(
    model: ModelState,
    features: np.ndarray,
    labels: np.ndarray,
    var_id: int,
    step: float = 1e-5,
) -> np.ndarray:
    """Central-difference gradient for one variable, entry by entry."""
    value = model.get_variable(var_id)
    grad = np.zeros_like(value)
    flat_value = value.reshape(-1)
    flat_grad = grad.reshape(-1)
    for k in range(flat_value.size):
        orig = flat_value[k]
        flat_value[k] = orig + step
        up, _ = forward(model, features, labels)
        flat_value[k] = orig - step
        down, _ = forward(model, features, labels)
        flat_value[k] = orig
        flat_grad[k] = (up - down) / (2.0 * step)
    return grad
