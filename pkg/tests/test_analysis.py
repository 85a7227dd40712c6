import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from ctrlscape.analysis import (HessianReport, PENDULUM_FD_STEP, condition_number,
                                hessian_report, jacobi_eigen, numeric_hessian,
                                separability_index, slice_condition_number,
                                slice_restriction_matrix)
from ctrlscape.errors import InvalidArgument, NumericFailure, UndefinedResult
from ctrlscape.objectives import ObjectiveHandle, make_objective
from ctrlscape.pendulum import ActionSpace, PendulumTask, trajectory_objective
from ctrlscape.slices import sample_orthonormal_basis

from oracles import linearized_hessian


def symmetric(n_max=8):
    return st.integers(1, n_max).flatmap(
        lambda n: arrays(np.float64, (n, n), elements=st.floats(-10, 10, allow_nan=False))
    ).map(lambda a: 0.5 * (a + a.T))


class TestNumericHessian:
    def test_quadratic_exact(self):
        f = make_objective("quadratic_k", d=6, k=3, eps=0.01)
        h = numeric_hessian(f, np.zeros(6))
        assert np.allclose(h, f.hessian(np.zeros(6)), rtol=1e-6, atol=1e-6)

    def test_rastrigin_against_analytic(self):
        f = make_objective("rastrigin", d=3)
        x = np.array([0.1, -0.2, 0.35])
        assert np.allclose(numeric_hessian(f, x, 1e-4), f.hessian(x), rtol=1e-5, atol=1e-3)

    def test_coupled_function(self):
        f = ObjectiveHandle(dimension=2, fn=lambda x, seed=0: x[0] ** 2 * x[1] + 3 * x[0] * x[1])
        h = numeric_hessian(f, np.array([1.0, 2.0]), 1e-4)
        assert np.allclose(h, [[4.0, 5.0], [5.0, 0.0]], atol=1e-6)

    @pytest.mark.parametrize("kind", ["torque", "target_angle"])
    @pytest.mark.parametrize("T", [1, 5, 20])
    def test_pendulum_matches_linearized_oracle(self, T, kind):
        f = trajectory_objective(PendulumTask(T=T, action_space=ActionSpace(kind)))
        h = numeric_hessian(f, np.zeros(T), PENDULUM_FD_STEP)
        ref = linearized_hessian(T, kind)
        assert np.linalg.norm(h - ref) / np.linalg.norm(ref) < 1e-6

    def test_reward_hessian_matches_oracle(self):
        f = trajectory_objective(PendulumTask(T=15, objective_kind="reward"))
        h = numeric_hessian(f, np.zeros(15), PENDULUM_FD_STEP)
        ref = linearized_hessian(15)
        assert np.linalg.norm(h - ref) / np.linalg.norm(ref) < 1e-4

    def test_worker_count_does_not_matter(self):
        f = trajectory_objective(PendulumTask(T=100))
        a = numeric_hessian(f, np.zeros(100), PENDULUM_FD_STEP, workers=1)
        b = numeric_hessian(f, np.zeros(100), PENDULUM_FD_STEP, workers=4)
        assert np.array_equal(a, b)

    def test_non_finite_probe(self):
        f = ObjectiveHandle(dimension=1, fn=lambda x, seed=0: math.inf if x[0] > 0 else 0.0)
        with pytest.raises(NumericFailure):
            numeric_hessian(f, np.zeros(1))

    def test_bad_step(self):
        with pytest.raises(InvalidArgument):
            numeric_hessian(make_objective("rastrigin", d=2), np.zeros(2), 0.0)


class TestJacobi:
    def test_two_by_two(self):
        eig, v = jacobi_eigen([[2.0, 1.0], [1.0, 2.0]])
        assert np.allclose(eig, [1.0, 3.0], atol=1e-14)
        assert np.allclose(np.abs(v[:, 1]), [2 ** -0.5, 2 ** -0.5])

    @settings(max_examples=60)
    @given(symmetric())
    def test_reconstruction_and_orthogonality(self, m):
        eig, v = jacobi_eigen(m)
        scale = max(np.linalg.norm(m), 1.0)
        assert np.abs(v @ np.diag(eig) @ v.T - m).max() < 1e-10 * scale
        assert np.allclose(v.T @ v, np.eye(len(m)), atol=1e-10)
        assert np.all(np.diff(eig) >= 0)

    @settings(max_examples=40)
    @given(symmetric())
    def test_agrees_with_lapack(self, m):
        eig, _ = jacobi_eigen(m)
        assert np.allclose(eig, np.linalg.eigvalsh(m), atol=1e-9 * max(np.linalg.norm(m), 1.0))

    def test_rejects_asymmetric(self):
        with pytest.raises(InvalidArgument):
            jacobi_eigen([[1.0, 2.0], [0.0, 1.0]])

    def test_rejects_non_finite(self):
        with pytest.raises(NumericFailure):
            jacobi_eigen([[np.nan, 0.0], [0.0, 1.0]])


class TestConditioning:
    def test_ratio(self):
        assert condition_number([1.0, 4.0]) == (4.0, False)

    def test_singular_is_infinite(self):
        kappa, _ = condition_number([0.0, 1.0])
        assert math.isinf(kappa)

    def test_indefinite_flag(self):
        kappa, indefinite = condition_number([-2.0, 1.0])
        assert kappa == 2.0 and indefinite

    def test_zero_matrix(self):
        with pytest.raises(UndefinedResult):
            condition_number([0.0, 0.0])

    def test_separability(self):
        assert separability_index(np.diag([1.0, 5.0])) == 0.0
        assert separability_index(np.ones((2, 2))) == pytest.approx(0.5)
        with pytest.raises(UndefinedResult):
            separability_index(np.zeros((3, 3)))

    @settings(max_examples=40)
    @given(symmetric())
    def test_separability_in_unit_interval(self, m):
        if not np.any(m):
            return
        assert 0.0 <= separability_index(m) <= 1.0


class TestSlices:
    def test_restriction_full_k_is_identity(self):
        u, v = sample_orthonormal_basis(7, 3)
        assert np.allclose(slice_restriction_matrix(u, v, 7), np.eye(2), atol=1e-12)

    def test_restriction_single_coordinate_is_singular(self):
        u, v = sample_orthonormal_basis(7, 4)
        a = slice_restriction_matrix(u, v, 1)
        assert abs(np.linalg.det(a)) < 1e-12

    def test_restriction_rejects_non_orthogonal(self):
        with pytest.raises(InvalidArgument):
            slice_restriction_matrix([1.0, 0.0], [1.0, 1.0], 1)

    def test_slice_kappa_bounded_by_full(self):
        f = make_objective("quadratic_k", d=10, k=5, eps=0.05)
        for seed in range(20):
            u, v = sample_orthonormal_basis(10, seed)
            kappa, _ = slice_condition_number(f, np.zeros(10), u, v)
            assert kappa <= 20.0 * (1 + 1e-3)


class TestReport:
    def test_json_round_trip_with_infinite_kappa(self):
        rep = hessian_report(make_objective("quadratic_k", d=3, k=1, eps=0.0), np.zeros(3))
        assert rep.kappa_infinite
        data = json.loads(rep.to_json(include_matrix=True))
        assert data["kappa"] == "inf"
        back = HessianReport.from_dict(data)
        assert math.isinf(back.kappa)
        assert np.array_equal(back.matrix, rep.matrix)
        assert np.array_equal(back.eigenvalues, rep.eigenvalues)

    def test_keys(self):
        rep = hessian_report(make_objective("rastrigin", d=2), np.zeros(2))
        assert set(rep.to_dict()) == {"dimension", "eigenvalues", "kappa", "indefinite",
                                      "separability_index"}
