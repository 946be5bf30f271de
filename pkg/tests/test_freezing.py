import numpy as np
import pytest

from pvtsim.freezing import Scheme, SchemeConfig, expected_coverage, make_plan

ALL_IDS = list(range(15))
FREEZABLE = [0, 1, 3, 4, 6, 7, 9, 10, 12, 13]  # weights and scales of 5 blocks


def cfg(scheme=Scheme.PER_CLIENT_PER_ROUND, fraction=0.9, seed=42, **kw):
    return SchemeConfig(scheme=scheme, freeze_fraction=fraction, master_seed=seed, **kw)


class TestMakePlan:
    def test_zero_fraction_trains_everything(self):
        plan = make_plan(cfg(fraction=0.0), FREEZABLE, ALL_IDS, 3, 9)
        assert plan.frozen == frozenset()
        assert plan.trained == frozenset(ALL_IDS)

    def test_full_fraction_leaves_only_nonfreezable(self):
        plan = make_plan(cfg(fraction=1.0), FREEZABLE, ALL_IDS, 3, 9)
        assert plan.frozen == frozenset(FREEZABLE)
        assert plan.trained == frozenset(ALL_IDS) - frozenset(FREEZABLE)

    def test_partition_and_size(self):
        for fraction in (0.0, 0.25, 0.5, 0.9, 1.0):
            plan = make_plan(cfg(fraction=fraction), FREEZABLE, ALL_IDS, 0, 0)
            assert plan.frozen | plan.trained == set(ALL_IDS)
            assert plan.frozen & plan.trained == set()
            assert plan.frozen <= set(FREEZABLE)
            assert len(plan.frozen) == round(fraction * len(FREEZABLE))

    def test_pr_shared_within_round(self):
        config = cfg(scheme=Scheme.PER_ROUND)
        a = make_plan(config, FREEZABLE, ALL_IDS, 5, 3)
        b = make_plan(config, FREEZABLE, ALL_IDS, 5, 9)
        assert a.frozen == b.frozen

    def test_pr_varies_across_rounds(self):
        config = cfg(scheme=Scheme.PER_ROUND, fraction=0.5)
        plans = {make_plan(config, FREEZABLE, ALL_IDS, r, 0).frozen for r in range(20)}
        assert len(plans) > 1

    def test_pcpr_varies_across_clients(self):
        config = cfg(fraction=0.5)
        plans = {make_plan(config, FREEZABLE, ALL_IDS, 5, c).frozen for c in range(20)}
        assert len(plans) > 1

    def test_fixed_same_everywhere(self):
        config = cfg(scheme=Scheme.FIXED, fraction=0.5)
        reference = make_plan(config, FREEZABLE, ALL_IDS, 0, 0).frozen
        for r, c in [(0, 1), (7, 0), (7, 7), (123, 45)]:
            assert make_plan(config, FREEZABLE, ALL_IDS, r, c).frozen == reference

    def test_recomputable_out_of_order(self):
        config = cfg(fraction=0.5)
        later = make_plan(config, FREEZABLE, ALL_IDS, 100, 17)
        again = make_plan(config, FREEZABLE, ALL_IDS, 100, 17)
        assert later == again

    def test_freezable_must_be_subset(self):
        with pytest.raises(ValueError, match="subset"):
            make_plan(cfg(), [99], ALL_IDS, 0, 0)

    def test_fraction_validation(self):
        with pytest.raises(ValueError, match="freeze_fraction"):
            SchemeConfig(Scheme.FIXED, 1.5, 0)
        with pytest.raises(ValueError, match="freeze_fraction"):
            SchemeConfig(Scheme.FIXED, -0.1, 0)

    def test_by_param_count_sizing(self):
        counts = {v: (100 if v % 3 == 0 else 4) for v in ALL_IDS}
        config = cfg(fraction=0.5, by_param_count=True)
        plan = make_plan(config, FREEZABLE, ALL_IDS, 0, 0, param_counts=counts)
        frozen_params = sum(counts[v] for v in plan.frozen)
        total = sum(counts[v] for v in FREEZABLE)
        # budget reached, and not overshot by more than one variable
        assert frozen_params >= 0.5 * total
        largest = max(counts[v] for v in FREEZABLE)
        assert frozen_params < 0.5 * total + largest

    def test_by_param_count_requires_counts(self):
        with pytest.raises(ValueError, match="param_counts"):
            make_plan(cfg(by_param_count=True), FREEZABLE, ALL_IDS, 0, 0)


class TestExpectedCoverage:
    def test_pr_anchor_value(self):
        assert expected_coverage(
            cfg(scheme=Scheme.PER_ROUND, fraction=0.9), 10, 64
        ) == pytest.approx(0.1)

    def test_pcpr_closed_form(self):
        value = expected_coverage(cfg(fraction=0.9), 10, 128)
        assert value == pytest.approx(1.0 - 0.9**128)
        assert value == pytest.approx(0.9999986099, abs=1e-9)

    def test_zero_fraction_full_coverage(self):
        for scheme in Scheme:
            assert expected_coverage(cfg(scheme=scheme, fraction=0.0), 10, 8) == 1.0

    def test_rejects_bad_counts(self):
        with pytest.raises(ValueError):
            expected_coverage(cfg(), 0, 8)


class TestEmpiricalCoverage:
    @pytest.mark.parametrize(
        "scheme,cohort",
        [(Scheme.PER_ROUND, 8), (Scheme.PER_CLIENT_PER_ROUND, 8)],
    )
    def test_matches_closed_form_within_three_sigma(self, scheme, cohort):
        config = cfg(scheme=scheme, fraction=0.9, seed=7)
        n_rounds = 400
        coverages = []
        for r in range(n_rounds):
            trained = set()
            for c in range(cohort):
                plan = make_plan(config, FREEZABLE, ALL_IDS, r, c)
                trained |= plan.trained & set(FREEZABLE)
            coverages.append(len(trained) / len(FREEZABLE))
        mean = np.mean(coverages)
        stderr = np.std(coverages) / np.sqrt(n_rounds)
        expected = expected_coverage(config, len(FREEZABLE), cohort)
        assert abs(mean - expected) <= 3 * stderr + 1e-12
