import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mpct_admm import (
    DiagonalScaling,
    DimensionMismatch,
    EmptyTightenedBox,
    LtiModel,
    MpctParams,
    NonFiniteInput,
    NotPositiveDefinite,
    RankDeficientG,
    assemble_online,
    build_problem,
    problem_from_dict,
    problem_to_dict,
    tightened_bounds,
)
from mpct_admm.oracle import dense_bounds, dense_dynamics, dense_hessian

from conftest import random_instance


def struct_p_dense(data):
    """Dense reconstruction of the block-diagonal core plus low-rank term."""
    eye = np.eye(data.n_z)
    gamma_inv = data.gamma_hat.solve(eye)
    return np.linalg.inv(gamma_inv) + data.u_hat @ data.v_hat


class TestBuildProblem:
    def test_integrator_gamma_hat_diagonal(self, integrator_model, integrator_params):
        data = build_problem(integrator_model, integrator_params)
        gamma = np.linalg.inv(data.gamma_hat.solve(np.eye(6)))
        np.testing.assert_allclose(gamma, np.diag([2.0, 2.0, 2.0, 2.0, 4.0, 4.0]), atol=1e-12)

    def test_integrator_low_rank_pattern(self, integrator_model, integrator_params):
        data = build_problem(integrator_model, integrator_params)
        uv = data.u_hat @ data.v_hat
        expected = np.zeros((6, 6))
        # stage blocks couple to (x_s, u_s) through -Q and -R
        for i in range(2):
            expected[2 * i, 4] = -1.0
            expected[2 * i + 1, 5] = -1.0
            expected[4, 2 * i] = -1.0
            expected[5, 2 * i + 1] = -1.0
        np.testing.assert_allclose(uv, expected, atol=1e-14)

    def test_non_spd_cost_is_identified(self):
        with pytest.raises(NotPositiveDefinite) as exc:
            MpctParams(Q=[[0.0]], R=[[1.0]], T=[[1.0]], S=[[1.0]], N=2)
        assert exc.value.what == "Q"

    def test_hessian_reconstruction_matches_oracle(self):
        rng = np.random.default_rng(42)
        for _ in range(8):
            model, params = random_instance(rng)
            data = build_problem(model, params)
            p_dense = dense_hessian(params) + params.rho * np.eye(data.n_z)
            scale = np.abs(p_dense).max()
            assert np.abs(struct_p_dense(data) - p_dense).max() <= 1e-12 * scale

    def test_dual_core_reconstruction(self):
        rng = np.random.default_rng(43)
        for _ in range(6):
            model, params = random_instance(rng)
            data = build_problem(model, params)
            g = dense_dynamics(model, params.N)
            p_dense = dense_hessian(params) + params.rho * np.eye(data.n_z)
            w_dense = g @ np.linalg.solve(p_dense, g.T)
            w_struct = (
                data.gamma_tilde_factor.to_dense() @ data.gamma_tilde_factor.to_dense().T
                + data.u_tilde @ data.v_tilde
            )
            assert np.abs(w_struct - w_dense).max() <= 1e-9 * (1.0 + np.abs(w_dense).max())

    def test_rank_deficient_dynamics(self):
        # A = I with B = 0 kills the equilibrium rows of the dynamics matrix
        model = LtiModel(A=[[1.0]], B=[[0.0]], x_lo=[-1.0], x_hi=[1.0], u_lo=[-1.0], u_hi=[1.0])
        params = MpctParams(Q=[[1.0]], R=[[1.0]], T=[[1.0]], S=[[1.0]], N=3)
        with pytest.raises(RankDeficientG):
            build_problem(model, params)

    def test_dimension_mismatch_between_model_and_params(self, integrator_model):
        params = MpctParams(Q=np.eye(2), R=[[1.0]], T=np.eye(2), S=[[1.0]], N=2)
        with pytest.raises(DimensionMismatch):
            build_problem(integrator_model, params)


class TestAssembleOnline:
    def test_zero_reference_gives_zero_cost_vector(self, integrator_model, integrator_params):
        data = build_problem(integrator_model, integrator_params)
        qp = assemble_online(data, [0.3], [0.0], [0.0])
        np.testing.assert_array_equal(qp.q, np.zeros(6))

    def test_last_block_formula(self):
        model = LtiModel(
            A=[[0.5, 0.1], [0.0, 0.4]], B=[[0.0], [1.0]], x_lo=[-5, -5], x_hi=[5, 5], u_lo=[-5], u_hi=[5]
        )
        params = MpctParams(Q=np.eye(2), R=[[1.0]], T=2.0 * np.eye(2), S=[[1.0]], N=2)
        data = build_problem(model, params)
        qp = assemble_online(data, [0.0, 0.0], [1.0, 0.0], [3.0])
        np.testing.assert_allclose(qp.q[-3:], [-2.0, 0.0, -3.0])

    def test_initial_state_lands_in_rhs(self):
        model = LtiModel(
            A=[[0.5, 0.1], [0.0, 0.4]], B=[[0.0], [1.0]], x_lo=[-5, -5], x_hi=[5, 5], u_lo=[-5], u_hi=[5]
        )
        params = MpctParams(Q=np.eye(2), R=[[1.0]], T=np.eye(2), S=[[1.0]], N=2)
        data = build_problem(model, params)
        qp = assemble_online(data, [0.7, -0.1], [0.0, 0.0], [0.0])
        np.testing.assert_allclose(qp.b[:2], [0.7, -0.1])
        np.testing.assert_array_equal(qp.b[2:], np.zeros(6))

    def test_non_finite_inputs_rejected(self, integrator_model, integrator_params):
        data = build_problem(integrator_model, integrator_params)
        with pytest.raises(NonFiniteInput):
            assemble_online(data, [np.nan], [0.0], [0.0])
        with pytest.raises(NonFiniteInput):
            assemble_online(data, [0.0], [np.inf], [0.0])

    def test_dimension_mismatch(self, integrator_model, integrator_params):
        data = build_problem(integrator_model, integrator_params)
        with pytest.raises(DimensionMismatch):
            assemble_online(data, [0.0, 1.0], [0.0], [0.0])

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(min_value=0, max_value=2**31 - 1))
    def test_q_and_b_are_linear(self, seed):
        rng = np.random.default_rng(seed)
        model, params = random_instance(rng)
        data = build_problem(model, params)
        nx, nu = model.n_x, model.n_u
        xr1, xr2 = rng.standard_normal(nx), rng.standard_normal(nx)
        ur1, ur2 = rng.standard_normal(nu), rng.standard_normal(nu)
        xt1, xt2 = rng.standard_normal(nx), rng.standard_normal(nx)
        a, b = rng.uniform(-2, 2), rng.uniform(-2, 2)
        qp1 = assemble_online(data, xt1, xr1, ur1)
        qp2 = assemble_online(data, xt2, xr2, ur2)
        qp = assemble_online(data, a * xt1 + b * xt2, a * xr1 + b * xr2, a * ur1 + b * ur2)
        np.testing.assert_allclose(qp.q, a * qp1.q + b * qp2.q, atol=1e-10)
        np.testing.assert_allclose(qp.b, a * qp1.b + b * qp2.b, atol=1e-10)

    def test_bounds_match_oracle_stacking(self):
        rng = np.random.default_rng(77)
        model, params = random_instance(rng)
        data = build_problem(model, params)
        lo, hi = dense_bounds(model, params)
        np.testing.assert_array_equal(data.v_lo, lo)
        np.testing.assert_array_equal(data.v_hi, hi)


class TestTightenedBounds:
    def test_basic_tightening(self):
        model = LtiModel(A=[[0.5]], B=[[1.0]], x_lo=[-1.0], x_hi=[1.0], u_lo=[-1.0], u_hi=[1.0])
        params = MpctParams(Q=[[1.0]], R=[[1.0]], T=[[1.0]], S=[[1.0]], N=2, epsilon=0.1)
        lo, hi = tightened_bounds(model, params)
        np.testing.assert_allclose(lo[-2:], [-0.9, -0.9])
        np.testing.assert_allclose(hi[-2:], [0.9, 0.9])
        # stage blocks stay untightened
        np.testing.assert_allclose(lo[:4], [-1.0, -1.0, -1.0, -1.0])

    def test_infinite_bounds_pass_through(self):
        model = LtiModel(A=[[0.5]], B=[[1.0]], x_lo=[-1.0], x_hi=[np.inf], u_lo=[-1.0], u_hi=[1.0])
        params = MpctParams(Q=[[1.0]], R=[[1.0]], T=[[1.0]], S=[[1.0]], N=2, epsilon=0.1)
        lo, hi = tightened_bounds(model, params)
        assert hi[-2] == np.inf
        assert lo[-2] == -0.9

    def test_benchmark_input_tightening(self):
        # epsilon 1e-6 on the 0.2 input bound leaves 0.199999
        model = LtiModel(
            A=np.eye(2),
            B=np.eye(2),
            x_lo=[-1.0, -1.0],
            x_hi=[1.0, 1.0],
            u_lo=[-0.2, -0.2],
            u_hi=[0.2, 0.2],
        )
        params = MpctParams(Q=np.eye(2), R=np.eye(2), T=np.eye(2), S=np.eye(2), N=2, epsilon=1e-6)
        _, hi = tightened_bounds(model, params)
        np.testing.assert_allclose(hi[-2:], [0.199999, 0.199999])

    def test_empty_box_raises(self):
        model = LtiModel(A=[[0.5]], B=[[1.0]], x_lo=[-0.05], x_hi=[0.05], u_lo=[-1.0], u_hi=[1.0])
        params = MpctParams(Q=[[1.0]], R=[[1.0]], T=[[1.0]], S=[[1.0]], N=2, epsilon=0.1)
        with pytest.raises(EmptyTightenedBox):
            tightened_bounds(model, params)


class TestValidation:
    def test_horizon_minimum(self):
        with pytest.raises(ValueError):
            MpctParams(Q=[[1.0]], R=[[1.0]], T=[[1.0]], S=[[1.0]], N=1)

    def test_default_solver_parameters(self):
        params = MpctParams(Q=[[1.0]], R=[[1.0]], T=[[1.0]], S=[[1.0]], N=2)
        assert params.eps_primal == 1e-4
        assert params.eps_dual == 1e-4
        assert params.epsilon == 1e-6
        assert params.max_iter == 4000
        assert params.rho == 1.0

    def test_bounds_ordering(self):
        with pytest.raises(ValueError):
            LtiModel(A=[[1.0]], B=[[1.0]], x_lo=[1.0], x_hi=[-1.0], u_lo=[-1.0], u_hi=[1.0])

    def test_asymmetric_cost_rejected(self):
        with pytest.raises(ValueError):
            MpctParams(Q=[[1.0, 0.5], [0.0, 1.0]], R=[[1.0]], T=np.eye(2), S=[[1.0]], N=2)


class TestScaling:
    def test_cost_energy_is_preserved(self):
        rng = np.random.default_rng(5)
        model, params = random_instance(rng)
        scaling = DiagonalScaling(
            state=rng.uniform(0.5, 2.0, model.n_x), input=rng.uniform(0.5, 2.0, model.n_u)
        )
        model_s, params_s = scaling.apply(model, params)
        x = rng.standard_normal(model.n_x)
        u = rng.standard_normal(model.n_u)
        xs, us = scaling.scale_state(x), scaling.scale_input(u)
        assert np.isclose(xs @ params_s.Q @ xs, x @ params.Q @ x)
        assert np.isclose(us @ params_s.S @ us, u @ params.S @ u)
        # dynamics commute with the change of variables
        x_next = model.A @ x + model.B @ u
        np.testing.assert_allclose(
            model_s.A @ xs + model_s.B @ us, scaling.scale_state(x_next), atol=1e-12
        )

    def test_positive_factors_required(self):
        with pytest.raises(ValueError):
            DiagonalScaling(state=[1.0, -1.0], input=[1.0])


class TestJsonFormat:
    def test_roundtrip(self, integrator_model, integrator_params):
        obj = problem_to_dict(integrator_model, integrator_params)
        model, params, scaling = problem_from_dict(obj)
        np.testing.assert_array_equal(model.A, integrator_model.A)
        np.testing.assert_array_equal(params.Q, integrator_params.Q)
        assert params.N == integrator_params.N
        assert scaling is None

    def test_infinity_sentinels(self):
        model = LtiModel(
            A=[[0.5]], B=[[1.0]], x_lo=[-np.inf], x_hi=[np.inf], u_lo=[-1.0], u_hi=[1.0]
        )
        params = MpctParams(Q=[[1.0]], R=[[1.0]], T=[[1.0]], S=[[1.0]], N=2)
        obj = problem_to_dict(model, params)
        assert obj["model"]["x_lo"] == ["-inf"]
        assert obj["model"]["x_hi"] == ["inf"]
        back, _, _ = problem_from_dict(obj)
        assert back.x_hi[0] == np.inf

    def test_missing_format_key_rejected(self):
        with pytest.raises(ValueError):
            problem_from_dict({"model": {}, "params": {}})

    def test_scaling_roundtrip(self, integrator_model, integrator_params):
        scaling = DiagonalScaling(state=[2.0], input=[0.25])
        obj = problem_to_dict(integrator_model, integrator_params, scaling)
        _, _, back = problem_from_dict(obj)
        np.testing.assert_array_equal(back.state, scaling.state)
        np.testing.assert_array_equal(back.input, scaling.input)

    def test_diagonal_cost_shorthand(self):
        obj = {
            "format": "mpct-v1",
            "model": {
                "A": [[1.0]],
                "B": [[1.0]],
                "x_lo": [-1.0],
                "x_hi": [1.0],
                "u_lo": [-1.0],
                "u_hi": [1.0],
            },
            "params": {"Q": [2.0], "R": [1.0], "T": [1.0], "S": [1.0], "N": 3},
        }
        _, params, _ = problem_from_dict(obj)
        np.testing.assert_array_equal(params.Q, [[2.0]])
        assert params.N == 3
