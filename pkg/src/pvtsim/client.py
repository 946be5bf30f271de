"""Simulated client: local SGD under a freeze plan, delta extraction, cost report.

A client receives the round's model snapshot, runs plain SGD (no momentum,
constant learning rate) on minibatches drawn from its shard, and returns
only the deltas of its trained variables. Frozen variables are never
touched, so their values stay bit-identical to the snapshot and never enter
the upload.

Minibatch order is a seeded shuffle of the shard keyed by (seed, round),
cycling through the same shuffled order when local_steps * batch_size
exceeds the shard. Deltas are cast to float32 because that is the payload
unit on the wire; everything upstream of the cast is float64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import costs
from .freezing import FreezePlan
from .nn import ActivationError, ModelState, backward, forward
from .taxonomy import VariableDescriptor


class DivergenceError(RuntimeError):
    """Local training hit a non-finite loss; the round's update is discarded."""


@dataclass(frozen=True)
class ClientConfig:
    local_steps: int = 5
    batch_size: int = 16
    learning_rate: float = 0.1

    def __post_init__(self):
        if self.local_steps < 1:
            raise ValueError("local_steps must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")


@dataclass
class ClientUpdate:
    """One client's round result.

    Only client, round_index, sample_count and deltas cross the wire;
    cost and train_loss are local accounting and are None on a decoded
    update.
    """

    client: int
    round_index: int
    sample_count: int
    deltas: dict[int, np.ndarray]  # var id -> float32 delta, trained vars only
    cost: costs.CostReport | None = None
    train_loss: float | None = None


def minibatch_indices(
    shard_size: int, cfg: ClientConfig, seed: int, round_index: int
) -> np.ndarray:
    """(local_steps, batch_size) positions into the shard, shuffled then cycled."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, round_index]))
    order = rng.permutation(shard_size)
    needed = cfg.local_steps * cfg.batch_size
    flat = order[np.arange(needed) % shard_size]
    return flat.reshape(cfg.local_steps, cfg.batch_size)


def local_train(
    snapshot: ModelState,
    shard_features: np.ndarray,
    shard_labels: np.ndarray,
    plan: FreezePlan,
    cfg: ClientConfig,
    seed: int,
) -> ClientUpdate:
    if len(shard_features) == 0:
        raise ValueError("empty shard")

    model = snapshot.copy()
    batches = minibatch_indices(len(shard_features), cfg, seed, plan.round_index)
    trained = sorted(plan.trained)

    loss_sum = 0.0
    for step_idx in batches:
        x, y = shard_features[step_idx], shard_labels[step_idx]
        try:
            loss, cache = forward(model, x, y)
            grads = backward(model, x, y, plan, cache=cache)
        except ActivationError as exc:
            raise DivergenceError(
                f"client {plan.client} diverged in round {plan.round_index}: {exc}"
            ) from exc
        loss_sum += loss
        for var_id in trained:
            model.get_variable(var_id)[...] -= cfg.learning_rate * grads.grads[var_id]

    deltas = {
        var_id: (model.get_variable(var_id) - snapshot.get_variable(var_id)).astype(
            np.float32
        )
        for var_id in trained
    }
    report = measure_costs(plan, snapshot.descriptors, snapshot, cfg)
    return ClientUpdate(
        client=plan.client,
        round_index=plan.round_index,
        sample_count=cfg.local_steps * cfg.batch_size,
        deltas=deltas,
        cost=report,
        train_loss=loss_sum / cfg.local_steps,
    )


def measure_costs(
    plan: FreezePlan,
    descriptors: list[VariableDescriptor],
    model: ModelState,
    cfg: ClientConfig,
) -> costs.CostReport:
    specs = [blk.spec for blk in model.blocks]
    return costs.cost_report(plan, descriptors, specs, cfg.batch_size)
