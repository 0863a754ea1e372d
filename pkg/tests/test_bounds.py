import math

import pytest

from optstop.bounds import (
    BoundInputs,
    NormType,
    generalization_lower_bound,
    rademacher_bound,
)


def inputs(**overrides):
    base = dict(
        norm_type=NormType.L2,
        radius_B=1.0,
        feature_bound_Q=1.0,
        reward_bound_G=1.0,
        K=2,
        T=2,
        n_paths=100,
        delta=0.05,
    )
    base.update(overrides)
    return BoundInputs(**base)


class TestRademacherBound:
    def test_zero_radius_gives_zero(self):
        for norm in NormType:
            assert rademacher_bound(inputs(norm_type=norm, radius_B=0.0)) == 0.0

    def test_l2_hand_value(self):
        # sqrt(2) * (1+1) * 1 * 1 * sqrt(4) / sqrt(100) = 0.565685...
        got = rademacher_bound(inputs())
        assert got == pytest.approx(0.565685424949238, rel=1e-12)

    def test_norm_ordering(self):
        # the L1 factor sqrt(2*log(2KT)) drops below sqrt(KT) once KT >= 5;
        # L2 <= Linf holds for any KT >= 1
        for k in (1, 2, 5):
            for t in (5, 8, 20):
                common = dict(K=k, T=t, radius_B=2.0, feature_bound_Q=1.5)
                l1 = rademacher_bound(inputs(norm_type=NormType.L1, **common))
                l2 = rademacher_bound(inputs(norm_type=NormType.L2, **common))
                linf = rademacher_bound(inputs(norm_type=NormType.LINF, **common))
                assert l1 <= l2 <= linf

    def test_quadrupling_paths_halves_exactly(self):
        for norm in NormType:
            for n in (7, 100, 12345):
                small = rademacher_bound(inputs(norm_type=norm, n_paths=n))
                large = rademacher_bound(inputs(norm_type=norm, n_paths=4 * n))
                assert large == small / 2.0

    def test_monotone_in_constants(self):
        base = rademacher_bound(inputs())
        assert rademacher_bound(inputs(radius_B=2.0)) > base
        assert rademacher_bound(inputs(feature_bound_Q=2.0)) > base
        assert rademacher_bound(inputs(reward_bound_G=2.0)) > base
        assert rademacher_bound(inputs(K=3)) > base
        assert rademacher_bound(inputs(T=3)) > base

    def test_invalid_inputs_rejected(self):
        with pytest.raises(ValueError):
            inputs(radius_B=-1.0)
        with pytest.raises(ValueError):
            inputs(K=0)
        with pytest.raises(ValueError):
            inputs(delta=0.0)
        with pytest.raises(ValueError):
            inputs(delta=1.5)


class TestGeneralizationLowerBound:
    def test_hand_value_ordinary_form(self):
        # R works out to exactly 0.2: sqrt(2)*2*1*1*sqrt(1)/sqrt(200)
        inp = inputs(K=1, T=1, n_paths=200)
        assert rademacher_bound(inp) == pytest.approx(0.2, rel=1e-14)
        got = generalization_lower_bound(1.0, inp, empirical=False)
        # 1 - 0.4 - sqrt(log(20)/400)
        assert got == pytest.approx(0.5134590808698857, rel=1e-12)

    def test_hand_value_empirical_form(self):
        inp = inputs(K=1, T=1, n_paths=200)
        expected = 1.0 - 0.4 - 3.0 * math.sqrt(math.log(2.0 / 0.05) / 400.0)
        assert generalization_lower_bound(1.0, inp, empirical=True) == pytest.approx(
            expected, rel=1e-12
        )

    def test_degenerate_delta_removes_penalty(self):
        inp = inputs(K=1, T=1, n_paths=200, delta=1.0)
        assert generalization_lower_bound(1.0, inp) == pytest.approx(0.6, rel=1e-14)

    def test_huge_sample_recovers_j_hat(self):
        inp = inputs(n_paths=10**12)
        assert generalization_lower_bound(1.0, inp) == pytest.approx(1.0, abs=1e-4)

    def test_penalty_halves_when_paths_quadruple(self):
        for empirical in (False, True):
            for n in (50, 1000):
                gap_small = -generalization_lower_bound(
                    0.0, inputs(n_paths=n), empirical=empirical
                )
                gap_large = -generalization_lower_bound(
                    0.0, inputs(n_paths=4 * n), empirical=empirical
                )
                assert gap_large == gap_small / 2.0
