"""Round orchestration: cohort sampling, plan issuance, aggregation, escalation.

Aggregation is per-variable and contributor-only: a variable's round delta
is the sample-count-weighted mean over exactly the clients that trained it,
summed in ascending client order for determinism. Dividing by the whole
cohort instead would shrink rarely-trained variables by their coverage
factor; with contributor-only weighting a variable trained by a single
client is applied at full strength.

Updates travel through the binary wire format inside run_round, so the
measured upload bytes are real encoded sizes, not estimates.

``escalate`` implements the constraint-driven hyperparameter search: raise
the freeze fraction until memory and upload budgets hold (checked against
the worst-case trained subset of the mandated size, so the budget holds for
every client draw), take the most local steps the devices allow, then
double the cohort until accuracy is back within tolerance of the
all-variable reference.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import costs, wire
from .client import ClientConfig, ClientUpdate, DivergenceError, local_train
from .data import Dataset, Partition
from .freezing import SchemeConfig, make_plan
from .nn import BlockSpec, ModelState, forward
from .taxonomy import (
    SLOTS_PER_BLOCK,
    FreezabilityPolicy,
    VarClass,
    VariableDescriptor,
    freezable_ids,
)


@dataclass(frozen=True)
class RoundConfig:
    clients_per_round: int
    scheme_cfg: SchemeConfig
    client_cfg: ClientConfig
    server_lr: float = 1.0
    policy: FreezabilityPolicy = field(default_factory=FreezabilityPolicy)

    def __post_init__(self):
        if self.clients_per_round < 1:
            raise ValueError("clients_per_round must be >= 1")


@dataclass
class AggregateDelta:
    deltas: dict[int, np.ndarray]  # float64 weighted mean per contributed variable
    contributors: dict[int, int]


@dataclass
class RoundMetrics:
    round_index: int
    train_loss: float
    ctos_bytes_mean: float
    peak_memory_bytes_mean: float
    coverage_fraction: float
    eval_loss: float = float("nan")
    eval_accuracy: float = float("nan")
    diverged_clients: tuple[int, ...] = ()


def aggregate(
    updates: list[ClientUpdate],
    descriptors: list[VariableDescriptor] | None = None,
) -> AggregateDelta:
    """Sample-weighted mean delta over each variable's contributors."""
    rounds = {u.round_index for u in updates}
    if len(rounds) > 1:
        raise ValueError(f"updates from multiple rounds: {sorted(rounds)}")
    shapes = {d.var_id: d.shape for d in descriptors} if descriptors else None

    sums: dict[int, np.ndarray] = {}
    weights: dict[int, int] = {}
    contributors: dict[int, int] = {}
    for update in sorted(updates, key=lambda u: u.client):
        for var_id in sorted(update.deltas):
            delta = update.deltas[var_id]
            if shapes is not None and tuple(delta.shape) != shapes.get(var_id):
                raise ValueError(
                    f"client {update.client} delta for variable {var_id} has shape "
                    f"{delta.shape}, descriptor says {shapes.get(var_id)}"
                )
            if var_id not in sums:
                sums[var_id] = np.zeros(delta.shape, dtype=np.float64)
                weights[var_id] = 0
                contributors[var_id] = 0
            sums[var_id] += update.sample_count * delta.astype(np.float64)
            weights[var_id] += update.sample_count
            contributors[var_id] += 1

    deltas = {v: sums[v] / weights[v] for v in sums}
    return AggregateDelta(deltas=deltas, contributors=contributors)


def apply_delta(
    model: ModelState, agg: AggregateDelta, server_lr: float = 1.0
) -> ModelState:
    """New model with ``old + server_lr * delta`` for contributed variables."""
    updated = model.copy()
    for var_id, delta in agg.deltas.items():
        updated.get_variable(var_id)[...] += server_lr * delta
    return updated


def evaluate(model: ModelState, dataset: Dataset) -> tuple[float, float]:
    loss, cache = forward(model, dataset.features, dataset.labels)
    predictions = cache.logits.argmax(axis=1)
    return loss, float((predictions == dataset.labels).mean())


def sample_cohort(
    n_clients: int, clients_per_round: int, master_seed: int, round_index: int
) -> list[int]:
    """Without-replacement cohort for one round, keyed by (seed, round)."""
    if clients_per_round > n_clients:
        raise ValueError(
            f"cohort of {clients_per_round} from population of {n_clients}"
        )
    rng = np.random.default_rng(np.random.SeedSequence([master_seed, round_index]))
    return sorted(rng.permutation(n_clients)[:clients_per_round].tolist())


def run_round(
    model: ModelState,
    round_index: int,
    cfg: RoundConfig,
    train_data: Dataset,
    partition: Partition,
    eval_data: Dataset | None = None,
) -> tuple[ModelState, RoundMetrics]:
    if partition.n_clients < cfg.clients_per_round:
        raise ValueError("partition has fewer shards than clients_per_round")
    descriptors = model.descriptors
    freezable = freezable_ids(descriptors, cfg.policy)
    all_ids = [d.var_id for d in descriptors]
    shapes = {d.var_id: d.shape for d in descriptors}
    master_seed = cfg.scheme_cfg.master_seed

    cohort = sample_cohort(
        partition.n_clients, cfg.clients_per_round, master_seed, round_index
    )
    received: list[ClientUpdate] = []
    frame_lengths: list[int] = []
    losses: list[float] = []
    peaks: list[int] = []
    trained_union: set[int] = set()
    diverged: list[int] = []
    for c in cohort:
        plan = make_plan(cfg.scheme_cfg, freezable, all_ids, round_index, c)
        shard = partition.shards[c]
        try:
            update = local_train(
                model,
                train_data.features[shard],
                train_data.labels[shard],
                plan,
                cfg.client_cfg,
                seed=master_seed,
            )
        except DivergenceError:
            diverged.append(c)
            continue
        frame = wire.encode(update)
        frame_lengths.append(len(frame))
        losses.append(update.train_loss)
        peaks.append(update.cost.peak_memory_bytes)
        trained_union |= set(plan.trained)
        received.append(wire.decode(frame, shapes))

    agg = aggregate(received, descriptors) if received else AggregateDelta({}, {})
    new_model = apply_delta(model, agg, cfg.server_lr)

    coverage = (
        len(trained_union & set(freezable)) / len(freezable) if freezable else 1.0
    )
    metrics = RoundMetrics(
        round_index=round_index,
        train_loss=float(np.mean(losses)) if losses else float("nan"),
        ctos_bytes_mean=float(np.mean(frame_lengths)) if frame_lengths else 0.0,
        peak_memory_bytes_mean=float(np.mean(peaks)) if peaks else 0.0,
        coverage_fraction=coverage,
        diverged_clients=tuple(diverged),
    )
    if eval_data is not None:
        metrics.eval_loss, metrics.eval_accuracy = evaluate(new_model, eval_data)
    return new_model, metrics


# --- constraint-driven hyperparameter escalation ---


class EscalationInfeasibleError(ValueError):
    """No freeze fraction in the grid satisfies the budgets."""


@dataclass(frozen=True)
class Budgets:
    peak_memory_bytes: int
    ctos_bytes: int
    max_local_steps: int
    max_clients: int


@dataclass(frozen=True)
class EscalationResult:
    freeze_fraction: float
    local_steps: int
    clients_per_round: int
    restored: bool
    metric: float
    reference_metric: float


def _buffer_contribution(
    descriptor: VariableDescriptor, specs: list[BlockSpec], batch_size: int
) -> int:
    block, slot = divmod(descriptor.var_id, SLOTS_PER_BLOCK)
    if descriptor.var_class is VarClass.MULTIPLICATIVE_MATRIX:
        return 4 * batch_size * specs[block].in_dim
    if descriptor.var_class is VarClass.MULTIPLICATIVE_VECTOR:
        return 4 * batch_size * specs[block].out_dim
    return 0


def worst_case_costs(
    freeze_fraction: float,
    descriptors: list[VariableDescriptor],
    specs: list[BlockSpec],
    batch_size: int,
    policy: FreezabilityPolicy = FreezabilityPolicy(),
) -> tuple[int, int]:
    """(peak memory, upload bytes) maximized over same-size trained subsets.

    Any plan of the mandated frozen-set size costs at most this, so a budget
    that holds here holds for every client draw.
    """
    freezable = set(freezable_ids(descriptors, policy))
    n_frozen = int(round(freeze_fraction * len(freezable)))
    n_frozen = max(0, min(n_frozen, len(freezable)))
    n_trained_freezable = len(freezable) - n_frozen

    free_desc = [d for d in descriptors if d.var_id in freezable]
    fixed_desc = [d for d in descriptors if d.var_id not in freezable]

    buffer_terms = sorted(
        (_buffer_contribution(d, specs, batch_size) for d in free_desc), reverse=True
    )
    mem = (
        costs.param_bytes(descriptors)
        + costs.workspace_bytes(specs, batch_size)
        + sum(buffer_terms[:n_trained_freezable])
    )
    byte_terms = sorted((d.byte_size for d in free_desc), reverse=True)
    ctos = (
        sum(d.byte_size for d in fixed_desc)
        + sum(byte_terms[:n_trained_freezable])
        + costs.frame_overhead_bytes(len(fixed_desc) + n_trained_freezable)
    )
    return mem, ctos


def escalate(
    budgets: Budgets,
    evaluator: Callable[[float, int, int], float],
    descriptors: list[VariableDescriptor],
    specs: list[BlockSpec],
    batch_size: int,
    base_local_steps: int,
    base_clients: int,
    policy: FreezabilityPolicy = FreezabilityPolicy(),
    fraction_grid: tuple[float, ...] = (0.0, 0.5, 0.9, 1.0),
    tolerance: float = 0.02,
    reference_metric: float | None = None,
) -> EscalationResult:
    """Pick (freeze fraction, local steps, cohort size) under resource budgets.

    ``evaluator(fraction, local_steps, clients_per_round)`` must return the
    target metric (higher is better, e.g. eval accuracy).
    """
    fraction = None
    for f in sorted(fraction_grid):
        mem, ctos = worst_case_costs(f, descriptors, specs, batch_size, policy)
        if mem <= budgets.peak_memory_bytes and ctos <= budgets.ctos_bytes:
            fraction = f
            break
    if fraction is None:
        raise EscalationInfeasibleError(
            "budgets unreachable even at the largest freeze fraction "
            f"{max(fraction_grid)}"
        )

    local_steps = budgets.max_local_steps
    if reference_metric is None:
        reference_metric = evaluator(0.0, base_local_steps, base_clients)

    cohorts = []
    c = base_clients
    while c < budgets.max_clients:
        cohorts.append(c)
        c *= 2
    cohorts.append(budgets.max_clients)

    metric = float("-inf")
    for clients in cohorts:
        metric = evaluator(fraction, local_steps, clients)
        if metric >= reference_metric - tolerance:
            return EscalationResult(
                fraction, local_steps, clients, True, metric, reference_metric
            )
    return EscalationResult(
        fraction, local_steps, cohorts[-1], False, metric, reference_metric
    )
