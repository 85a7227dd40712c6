import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from ctrlscape.errors import InvalidArgument
from ctrlscape.objectives import (QuadraticKSpec, bimodal_eval, bimodal_terms, make_objective,
                                  quadratic_k_eval, rastrigin_eval)

finite = st.floats(-5, 5, allow_nan=False, allow_infinity=False)


def vectors(d_min=1, d_max=12):
    return st.integers(d_min, d_max).flatmap(lambda d: arrays(np.float64, d, elements=finite))


class TestQuadraticK:
    def test_value_by_hand(self):
        x = np.array([1.0, 2.0, 3.0, 4.0])
        # 1 + 4 + 0.1 * (9 + 16)
        assert quadratic_k_eval(x, QuadraticKSpec(4, 2, 0.1)) == pytest.approx(7.5, rel=1e-15)

    def test_closed_form_condition_number(self):
        assert QuadraticKSpec(10, 5, 0.01).condition_number() == pytest.approx(100.0)
        assert QuadraticKSpec(10, 10, 0.0).condition_number() == 1.0
        assert math.isinf(QuadraticKSpec(10, 3, 0.0).condition_number())

    def test_analytic_hessian_and_gradient(self):
        f = make_objective("quadratic_k", d=5, k=2, eps=0.25)
        x = np.arange(5.0)
        assert np.allclose(f.hessian(x), np.diag([2, 2, 0.5, 0.5, 0.5]))
        assert np.allclose(f.gradient(x), [0, 2, 1, 1.5, 2])

    @pytest.mark.parametrize("d,k,eps", [(0, 1, 0.0), (3, 0, 0.0), (3, 4, 0.0), (3, 1, -1.0)])
    def test_invalid_parameters(self, d, k, eps):
        with pytest.raises(InvalidArgument):
            QuadraticKSpec(d, k, eps)

    def test_missing_parameter(self):
        with pytest.raises(InvalidArgument):
            make_objective("quadratic_k", d=3)


class TestRastrigin:
    def test_zero_at_origin(self):
        assert rastrigin_eval(np.zeros(7)) == 0.0

    def test_integer_lattice(self):
        # cos(2 pi n) = 1 so only the quadratic part survives
        x = np.array([1.0, -2.0, 3.0])
        assert rastrigin_eval(x) == pytest.approx(14.0, abs=1e-9)

    def test_gradient_matches_differences(self):
        f = make_objective("rastrigin", d=3)
        x = np.array([0.3, -0.7, 1.1])
        h = 1e-6
        fd = [(f(x + h * e) - f(x - h * e)) / (2 * h) for e in np.eye(3)]
        assert np.allclose(f.gradient(x), fd, rtol=1e-6, atol=1e-5)


class TestBimodal:
    def test_dominant_mode_value(self):
        d = 4
        expected = 1.0 + 0.8 * math.exp(-0.5 * 4 * d)
        assert bimodal_eval(np.ones(d)) == pytest.approx(expected, rel=1e-14)

    def test_maximization_sense(self):
        f = make_objective("bimodal", d=3)
        assert f.sense == "max"
        assert np.array_equal(f.known_optimum, np.ones(3))

    @given(vectors())
    def test_mirror_symmetry_of_terms(self, p):
        t1, _ = bimodal_terms(p)
        _, t2_mirror = bimodal_terms(-p)
        assert 0.8 * t1 == t2_mirror

    @given(vectors(1, 3))
    def test_bounded_near_modes(self, p):
        value = bimodal_eval(np.clip(p, -2, 2))
        assert 0.0 < value <= 1.8


class TestHandle:
    @settings(max_examples=50)
    @given(st.sampled_from(["quadratic_k", "rastrigin", "bimodal"]), st.integers(1, 8), st.data())
    def test_scalar_and_batch_agree_bitwise(self, kind, d, data):
        params = {"d": d, "k": max(1, d // 2), "eps": 0.1} if kind == "quadratic_k" else {"d": d}
        f = make_objective(kind, **params)
        xs = data.draw(arrays(np.float64, (5, d), elements=finite))
        batch = f.evaluate_many(xs)
        assert [f(x) for x in xs] == batch.tolist()

    def test_known_optimum_is_read_only(self):
        f = make_objective("rastrigin", d=2)
        with pytest.raises(ValueError):
            f.known_optimum[0] = 1.0

    def test_wrong_dimension(self):
        f = make_objective("rastrigin", d=2)
        with pytest.raises(InvalidArgument):
            f(np.zeros(3))

    def test_unknown_kind(self):
        with pytest.raises(InvalidArgument):
            make_objective("sphere", d=2)
