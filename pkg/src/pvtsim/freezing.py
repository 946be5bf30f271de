"""Freeze-plan generation under the fixed / per-round / per-client-per-round schemes.

A plan is a partition of variable ids into a frozen set (a uniform random
subset of the freezable ids) and a trained set (everything else, so
non-freezable variables are always trained). Randomness is counter-based:
each plan's RNG is seeded by hashing a key tuple, so any (round, client)
plan can be regenerated out of order, e.g. for server-side auditing:

    fixed:  (scheme, master_seed)
    pr:     (scheme, master_seed, round)
    pcpr:   (scheme, master_seed, round, client)

The frozen-set size is round(freeze_fraction * len(freezable)) counted in
whole variables. Sizing by parameter count instead is available via
``SchemeConfig.by_param_count`` (freeze a random prefix until the frozen
parameter budget is reached); the variable-count rule is the default used
throughout.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np


class Scheme(Enum):
    FIXED = "fixed"
    PER_ROUND = "pr"
    PER_CLIENT_PER_ROUND = "pcpr"


@dataclass(frozen=True)
class SchemeConfig:
    scheme: Scheme
    freeze_fraction: float
    master_seed: int
    by_param_count: bool = False

    def __post_init__(self):
        if not 0.0 <= self.freeze_fraction <= 1.0:
            raise ValueError(
                f"freeze_fraction must be in [0, 1], got {self.freeze_fraction}"
            )


@dataclass(frozen=True)
class FreezePlan:
    round_index: int
    client: int
    frozen: frozenset[int]
    trained: frozenset[int]


_SCHEME_TAG = {Scheme.FIXED: 1, Scheme.PER_ROUND: 2, Scheme.PER_CLIENT_PER_ROUND: 3}


def _plan_rng(config: SchemeConfig, round_index: int, client: int) -> np.random.Generator:
    key = [_SCHEME_TAG[config.scheme], config.master_seed]
    if config.scheme in (Scheme.PER_ROUND, Scheme.PER_CLIENT_PER_ROUND):
        key.append(round_index)
    if config.scheme is Scheme.PER_CLIENT_PER_ROUND:
        key.append(client)
    return np.random.default_rng(np.random.SeedSequence(key))


def make_plan(
    config: SchemeConfig,
    freezable: list[int],
    all_ids: list[int],
    round_index: int,
    client: int,
    param_counts: dict[int, int] | None = None,
) -> FreezePlan:
    """Draw the frozen subset for one (round, client) and return the plan.

    ``param_counts`` (id -> parameter count) is only consulted when
    ``config.by_param_count`` is set.
    """
    if not set(freezable) <= set(all_ids):
        raise ValueError("freezable ids must be a subset of all ids")

    rng = _plan_rng(config, round_index, client)
    order = rng.permutation(np.asarray(sorted(freezable), dtype=np.int64))
    if config.by_param_count:
        if param_counts is None:
            raise ValueError("by_param_count sizing requires param_counts")
        budget = config.freeze_fraction * sum(param_counts[v] for v in freezable)
        frozen, used = [], 0
        for v in order:
            if used >= budget:
                break
            frozen.append(int(v))
            used += param_counts[int(v)]
        frozen = frozenset(frozen)
    else:
        n_frozen = int(round(config.freeze_fraction * len(freezable)))
        n_frozen = max(0, min(n_frozen, len(freezable)))
        frozen = frozenset(int(v) for v in order[:n_frozen])

    trained = frozenset(all_ids) - frozen
    return FreezePlan(round_index=round_index, client=client, frozen=frozen, trained=trained)


def expected_coverage(
    config: SchemeConfig, freezable_count: int, clients_per_round: int
) -> float:
    """Expected fraction of freezable variables trained by >= 1 client in a round.

    Shared plans (fixed, pr) leave exactly the unfrozen fraction covered;
    independent pcpr draws cover a variable unless every cohort member froze
    it, which happens with probability fraction**cohort.
    """
    if freezable_count < 1 or clients_per_round < 1:
        raise ValueError("counts must be positive")
    f = config.freeze_fraction
    if config.scheme is Scheme.PER_CLIENT_PER_ROUND:
        return 1.0 - f**clients_per_round
    return 1.0 - f
