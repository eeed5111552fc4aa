import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gossipquant.objectives import (
    EuclideanDistanceObjective,
    PinballObjective,
    euclidean_family,
    pinball_family,
    total_value,
)

from oracles import euclidean_prox_oracle, pinball_prox_oracle

finite = dict(allow_nan=False, allow_infinity=False)


class TestPinballValue:
    def test_left_branch(self):
        assert PinballObjective(0.0, 0.5).value(-2.0) == pytest.approx(2.0)

    def test_anchor_is_zero(self):
        for alpha in (0.1, 0.5, 0.9):
            assert PinballObjective(3.0, alpha).value(3.0) == 0.0

    def test_right_branch_unit_slope(self):
        assert PinballObjective(3.0, 0.3).value(5.0) == pytest.approx(2.0)

    def test_slopes(self):
        obj = PinballObjective(1.0, 0.25)
        left = (obj.value(0.0) - obj.value(-1.0)) / 1.0
        right = (obj.value(3.0) - obj.value(2.0)) / 1.0
        assert left == pytest.approx(-obj.beta)
        assert right == pytest.approx(1.0)

    def test_degenerate_alpha_rejected(self):
        with pytest.raises(ValueError):
            PinballObjective(0.0, 0.0)
        with pytest.raises(ValueError):
            PinballObjective(0.0, 1.0)


class TestPinballProx:
    def test_shift_branch(self):
        assert PinballObjective(0.0, 0.5).prox(-3.0, 1.0) == pytest.approx(-2.0)

    def test_clamp_branch(self):
        assert PinballObjective(0.0, 0.5).prox(0.5, 1.0) == 0.0

    def test_anchor_fixed_for_any_gamma(self):
        obj = PinballObjective(1.7, 0.3)
        for gamma in (1e-6, 0.1, 5.0):
            assert obj.prox(1.7, gamma) == 1.7

    def test_small_gamma_approaches_input(self):
        obj = PinballObjective(0.0, 0.25)
        z = 2.0
        for gamma in (1e-2, 1e-4, 1e-6):
            assert abs(obj.prox(z, gamma) - z) <= gamma * max(1.0, obj.beta) * (1 + 1e-9)

    def test_matches_numerical_minimizer(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            a = rng.uniform(-2, 2)
            alpha = rng.uniform(0.1, 0.9)
            gamma = rng.uniform(0.05, 1.5)
            beta = alpha / (1 - alpha)
            z = a + gamma * (1 + beta) * rng.uniform(-3, 3)
            expected = pinball_prox_oracle(a, alpha, gamma, z)
            assert PinballObjective(a, alpha).prox(z, gamma) == pytest.approx(expected, abs=1e-8)

    @given(
        a=st.floats(-5, 5, **finite),
        alpha=st.floats(0.05, 0.95, **finite),
        gamma=st.floats(0.01, 3.0, **finite),
        z1=st.floats(-10, 10, **finite),
        z2=st.floats(-10, 10, **finite),
    )
    @settings(deadline=None, max_examples=200)
    def test_nonexpansive(self, a, alpha, gamma, z1, z2):
        obj = PinballObjective(a, alpha)
        lhs = abs(obj.prox(z1, gamma) - obj.prox(z2, gamma))
        assert lhs <= abs(z1 - z2) + 1e-12

    def test_optimality_certificate(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            obj = PinballObjective(rng.uniform(-2, 2), rng.uniform(0.1, 0.9))
            gamma = rng.uniform(0.05, 2.0)
            z = rng.uniform(-5, 5)
            w = obj.prox(z, gamma)

            def total(u):
                return obj.value(u) + (u - z) ** 2 / (2 * gamma)

            for eps in (1e-4, 1e-2):
                assert total(w) <= total(w + eps) + 1e-12
                assert total(w) <= total(w - eps) + 1e-12

    def test_gamma_must_be_positive(self):
        with pytest.raises(ValueError):
            PinballObjective(0.0, 0.5).prox(1.0, 0.0)


class TestEuclideanProx:
    def test_shrink_toward_anchor(self):
        obj = EuclideanDistanceObjective(np.zeros(2))
        out = obj.prox(np.array([3.0, 4.0]), 1.0)
        assert np.allclose(out, [2.4, 3.2])

    def test_inside_ball_snaps_to_anchor(self):
        obj = EuclideanDistanceObjective(np.array([1.0, -2.0]))
        assert np.allclose(obj.prox(np.array([1.0, -2.0]), 0.5), [1.0, -2.0])
        assert np.allclose(obj.prox(np.array([1.1, -2.0]), 0.5), [1.0, -2.0])

    def test_matches_numerical_minimizer(self):
        rng = np.random.default_rng(4)
        for _ in range(150):
            d = rng.integers(2, 4)
            a = rng.normal(size=d)
            v = rng.normal(size=d) * 2
            lam = rng.uniform(0.1, 2.0)
            expected = euclidean_prox_oracle(a, v, lam)
            out = EuclideanDistanceObjective(a).prox(v, lam)
            assert np.linalg.norm(out - expected) <= 1e-6

    @given(data=st.data())
    @settings(deadline=None, max_examples=150)
    def test_nonexpansive(self, data):
        d = data.draw(st.integers(2, 3))
        coords = st.lists(st.floats(-5, 5, **finite), min_size=d, max_size=d)
        a = np.array(data.draw(coords))
        v1 = np.array(data.draw(coords))
        v2 = np.array(data.draw(coords))
        lam = data.draw(st.floats(0.05, 3.0, **finite))
        obj = EuclideanDistanceObjective(a)
        lhs = np.linalg.norm(obj.prox(v1, lam) - obj.prox(v2, lam))
        assert lhs <= np.linalg.norm(v1 - v2) + 1e-12

    def test_optimality_certificate(self):
        rng = np.random.default_rng(9)
        for _ in range(30):
            d = rng.integers(2, 4)
            obj = EuclideanDistanceObjective(rng.normal(size=d))
            v = rng.normal(size=d) * 2
            lam = rng.uniform(0.1, 2.0)
            w = obj.prox(v, lam)

            def total(u):
                return obj.value(u) + np.linalg.norm(u - v) ** 2 / (2 * lam)

            base = total(w)
            for eps in (1e-4, 1e-2):
                for axis in range(d):
                    bump = np.zeros(d)
                    bump[axis] = eps
                    assert base <= total(w + bump) + 1e-12
                    assert base <= total(w - bump) + 1e-12


class TestFamilies:
    def test_pinball_family_anchors(self):
        objs = pinball_family([1.0, 2.0, 3.0], 0.3)
        assert [o.a for o in objs] == [1.0, 2.0, 3.0]
        assert all(o.beta == pytest.approx(0.3 / 0.7) for o in objs)

    def test_total_value_at_common_point(self):
        objs = pinball_family([0.0, 4.0], 0.5)
        # at x=2 both sides contribute 2 each under alpha=0.5 scaling
        assert total_value(objs, 2.0) == pytest.approx(4.0)

    def test_euclidean_family_shapes(self):
        objs = euclidean_family(np.zeros((4, 2)))
        assert len(objs) == 4
        assert objs[0].a.shape == (2,)
