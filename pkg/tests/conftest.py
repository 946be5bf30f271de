import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from pvtsim.freezing import FreezePlan
from pvtsim.nn import BlockSpec, forward, init_model

settings.register_profile(
    "ci",
    deadline=None,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("ci")


def full_plan(model, round_index=0, client=0):
    """Plan that trains every variable."""
    return FreezePlan(
        round_index=round_index,
        client=client,
        frozen=frozenset(),
        trained=frozenset(range(model.num_variables)),
    )


def random_batch(model, batch_size, seed):
    rng = np.random.default_rng(seed)
    features = rng.standard_normal((batch_size, model.blocks[0].spec.in_dim))
    labels = rng.integers(0, model.blocks[-1].spec.out_dim, size=batch_size)
    return features, labels


def model_and_batch_away_from_kinks(specs, batch_size, seed, margin=1e-3):
    """Random model + batch whose relu preactivations stay clear of zero.

    Central differences are only valid away from the relu kink, so test
    fixtures resample (deterministically) until every preactivation has
    magnitude above ``margin``.
    """
    for attempt in range(100):
        model = init_model(specs, seed=seed + 1000 * attempt)
        rng = np.random.default_rng(seed + 1000 * attempt + 1)
        features = rng.standard_normal((batch_size, specs[0].in_dim))
        labels = rng.integers(0, specs[-1].out_dim, size=batch_size)
        # random scales/biases so every variable class has nontrivial values
        for blk in model.blocks:
            blk.scale = 1.0 + 0.2 * rng.standard_normal(blk.spec.out_dim)
            blk.bias = 0.1 * rng.standard_normal(blk.spec.out_dim)
        _, cache = forward(model, features, labels)
        clear = all(
            np.abs(v).min() > margin
            for blk, v in zip(model.blocks, cache.pre_activation)
            if blk.spec.activation == "relu"
        )
        if clear:
            return model, features, labels
    raise AssertionError("could not find a kink-free model/batch pair")


@pytest.fixture
def two_block_specs():
    return [BlockSpec(2, 3, "relu"), BlockSpec(3, 2, "identity")]
