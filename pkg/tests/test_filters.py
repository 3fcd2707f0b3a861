import numpy as np
import pytest

import helpers
import oracles
from robustkf import filters, smoother
from robustkf.errors import ParameterDomainError, SolverFailure
from robustkf.filters import FilterEngine, initial_state
from robustkf.losses import LossParams
from robustkf.model import LinearConstraintSet, StateSpaceModel, WeightConfig


@pytest.fixture
def scalar():
    model, weights = helpers.scalar_setup()
    return model, weights


class TestScalarClosedForm:
    """The hand-checkable scalar instance has M_f = 3 and gain 2."""

    def test_inside_tube_keeps_prediction(self, scalar):
        model, weights = scalar
        state = filters.step_eps_quadratic(
            initial_state([0.0]), [0.5], model, weights, LossParams(epsilon=[1.0])
        )
        assert state.x_hat[0] == 0.0
        assert state.last_theta[0] == 0.0
        assert state.last_posterior[0] == 0.0
        assert state.last_w[0] == 0.0
        assert state.last_status == "converged"

    def test_positive_innovation(self, scalar):
        model, weights = scalar
        state = filters.step_eps_quadratic(
            initial_state([0.0]), [4.0], model, weights, LossParams(epsilon=[1.0])
        )
        assert state.last_theta[0] == pytest.approx(1.0, abs=1e-12)
        assert state.x_hat[0] == pytest.approx(2.0, abs=1e-12)
        assert state.last_posterior[0] == pytest.approx(1.0, abs=1e-12)
        assert state.last_w[0] == pytest.approx(1.0, abs=1e-12)

    def test_negative_innovation(self, scalar):
        model, weights = scalar
        state = filters.step_eps_quadratic(
            initial_state([0.0]), [-4.0], model, weights, LossParams(epsilon=[1.0])
        )
        assert state.x_hat[0] == pytest.approx(-2.0, abs=1e-12)

    def test_huber_saturates_outlier(self, scalar):
        model, weights = scalar
        state = filters.step_eps_huber(
            initial_state([0.0]), [100.0], model, weights,
            LossParams(epsilon=[1.0], kappa=[3.0]),
        )
        assert state.last_theta[0] == pytest.approx(3.0, abs=1e-12)
        assert state.x_hat[0] == pytest.approx(6.0, abs=1e-12)

    def test_kalman_value(self, scalar):
        model, weights = scalar
        state = filters.step_kalman(initial_state([0.0]), [4.0], model, weights)
        assert state.x_hat[0] == pytest.approx(8.0 / 3.0, abs=1e-12)


class TestReductions:
    def test_huber_with_infinite_cap_equals_quadratic(self):
        # same diagonal residual weight on both sides so the engines
        # assemble identical matrices
        rng = np.random.default_rng(41)
        for _ in range(10):
            model = helpers.random_model(rng, 3, 2, 2)
            r = np.array([2.0, 0.5])
            weights = WeightConfig(
                P=helpers.random_spd(rng, 3), Q=helpers.random_spd(rng, 2),
                R=np.diag(r), r=r,
            )
            loss = LossParams(epsilon=rng.uniform(0.1, 0.5, 2))
            x0 = rng.normal(0.0, 1.0, 3)
            y = rng.normal(0.0, 3.0, 2)
            quad_state = filters.step_eps_quadratic(
                initial_state(x0), y, model, weights, loss
            )
            huber_state = filters.step_eps_huber(
                initial_state(x0), y, model, weights, loss
            )
            assert np.max(np.abs(quad_state.x_hat - huber_state.x_hat)) <= 1e-12
            assert np.max(np.abs(quad_state.last_theta - huber_state.last_theta)) <= 1e-12

    def test_epsilon_zero_matches_kalman(self):
        rng = np.random.default_rng(43)
        for _ in range(20):
            n, l, m = rng.integers(1, 5, 3)
            model = helpers.random_model(rng, int(n), int(l), int(m))
            weights = helpers.random_weights(rng, model)
            x0 = rng.normal(0.0, 1.0, model.n)
            y = rng.normal(0.0, 2.0, model.m)
            robust = filters.step_eps_quadratic(
                initial_state(x0), y, model, weights, LossParams(epsilon=np.zeros(model.m))
            )
            baseline = filters.step_kalman(initial_state(x0), y, model, weights)
            assert np.max(np.abs(robust.x_hat - baseline.x_hat)) <= 1e-8

    def test_kalman_zero_innovation(self):
        rng = np.random.default_rng(47)
        model = helpers.random_model(rng, 2, 1, 1)
        weights = helpers.random_weights(rng, model)
        x0 = rng.normal(0.0, 1.0, 2)
        y = model.C @ model.A @ x0
        state = filters.step_kalman(initial_state(x0), y, model, weights)
        assert np.max(np.abs(state.x_hat - model.A @ x0)) <= 1e-12

    def test_dead_zone_is_exact(self):
        rng = np.random.default_rng(53)
        for _ in range(10):
            model = helpers.random_model(rng, 3, 2, 2)
            weights = helpers.random_weights(rng, model)
            loss = helpers.random_loss(rng, 2)
            x0 = rng.normal(0.0, 1.0, 3)
            y = model.C @ model.A @ x0 + rng.uniform(-1.0, 1.0, 2) * loss.epsilon
            state = filters.step_eps_quadratic(initial_state(x0), y, model, weights, loss)
            assert np.array_equal(state.x_hat, model.A @ x0)
            assert np.all(state.last_theta == 0.0)


class TestConstrainedSteps:
    def test_empty_constraints_bitwise_equal(self):
        rng = np.random.default_rng(59)
        model = helpers.random_model(rng, 3, 2, 2)
        weights = helpers.random_weights(rng, model, with_r=True)
        loss = helpers.random_loss(rng, 2)
        x0 = rng.normal(0.0, 1.0, 3)
        y = rng.normal(0.0, 3.0, 2)
        empty = LinearConstraintSet.empty(3, 2)

        plain = filters.step_eps_quadratic(initial_state(x0), y, model, weights, loss)
        constrained = filters.step_constrained_eps(
            initial_state(x0), y, model, weights, loss, empty
        )
        assert np.array_equal(plain.x_hat, constrained.x_hat)
        assert np.array_equal(plain.last_posterior, constrained.last_posterior)

        loss_h = helpers.random_loss(rng, 2, finite_kappa=True)
        plain_h = filters.step_eps_huber(initial_state(x0), y, model, weights, loss_h)
        constrained_h = filters.step_constrained_huber(
            initial_state(x0), y, model, weights, loss_h, empty
        )
        assert np.array_equal(plain_h.x_hat, constrained_h.x_hat)

    def test_slack_constraint_leaves_update_alone(self):
        rng = np.random.default_rng(61)
        model = helpers.random_model(rng, 2, 1, 2)
        weights = helpers.random_weights(rng, model)
        loss = helpers.random_loss(rng, 2)
        constraints = LinearConstraintSet(
            U=rng.standard_normal((1, 2)), V=rng.standard_normal((1, 1)), a=[1e6]
        )
        x0 = rng.normal(0.0, 1.0, 2)
        y = rng.normal(0.0, 3.0, 2)
        free = filters.step_eps_quadratic(initial_state(x0), y, model, weights, loss)
        bound = filters.step_constrained_eps(
            initial_state(x0), y, model, weights, loss, constraints
        )
        assert bound.last_xi[0] == 0.0
        assert np.max(np.abs(free.x_hat - bound.x_hat)) <= 1e-12

    def test_scalar_state_bound_binds(self, scalar=None):
        model, weights = helpers.scalar_setup()
        loss = LossParams(epsilon=[1.0])
        constraints = LinearConstraintSet(U=[[1.0]], V=[[0.0]], a=[0.0])
        state = filters.step_constrained_eps(
            initial_state([0.0]), [4.0], model, weights, loss, constraints
        )
        assert state.x_hat[0] <= 1e-8
        primal = oracles.cvxpy_one_step(
            model, weights, loss, np.array([0.0]), np.array([4.0]),
            "quadratic", constraints,
        )
        assert abs(state.x_hat[0] - primal.x_hat[1, 0]) <= 1e-6
        assert abs(state.last_w[0] - primal.w_hat[0, 0]) <= 1e-6
        assert abs(state.last_objective - primal.objective) <= 1e-6

    def test_constrained_matches_primal_oracle(self):
        rng = np.random.default_rng(67)
        for kind, oracle_kind in (("constrained_eps", "quadratic"),
                                  ("constrained_huber", "huber")):
            model = helpers.random_model(rng, 2, 2, 2)
            weights = helpers.random_weights(rng, model, with_R=True, with_r=True)
            loss = helpers.random_loss(rng, 2, finite_kappa=(kind == "constrained_huber"))
            constraints = helpers.random_constraints(rng, model, 1, margin=0.2)
            x0 = rng.normal(0.0, 1.0, 2)
            y = rng.normal(0.0, 3.0, 2)
            engine = FilterEngine(kind, model, weights, loss, constraints)
            state = engine.step(initial_state(x0), y)
            primal = oracles.cvxpy_one_step(model, weights, loss, x0, y, oracle_kind, constraints)
            assert np.max(np.abs(state.x_hat - primal.x_hat[1])) <= 1e-5
            assert np.max(np.abs(state.last_w - primal.w_hat[0])) <= 1e-5

    def test_constrained_huber_reductions(self):
        rng = np.random.default_rng(71)
        model = helpers.random_model(rng, 2, 1, 2)
        r = np.array([1.0, 2.0])
        weights = WeightConfig(
            P=helpers.random_spd(rng, 2), Q=helpers.random_spd(rng, 1),
            R=np.diag(r), r=r,
        )
        loss = LossParams(epsilon=[0.2, 0.3])
        constraints = helpers.random_constraints(rng, model, 1)
        x0 = rng.normal(0.0, 1.0, 2)
        y = rng.normal(0.0, 3.0, 2)

        huber = filters.step_constrained_huber(
            initial_state(x0), y, model, weights, loss, constraints
        )
        quadratic = filters.step_constrained_eps(
            initial_state(x0), y, model, weights, loss, constraints
        )
        assert np.max(np.abs(huber.x_hat - quadratic.x_hat)) <= 1e-12

        plain = filters.step_eps_huber(initial_state(x0), y, model, weights, loss)
        empty = filters.step_constrained_huber(
            initial_state(x0), y, model, weights, loss, LinearConstraintSet.empty(2, 1)
        )
        assert np.array_equal(plain.x_hat, empty.x_hat)

    def test_constraint_satisfied_with_recorded_w(self):
        rng = np.random.default_rng(73)
        for _ in range(10):
            model = helpers.random_model(rng, 2, 2, 2)
            weights = helpers.random_weights(rng, model, with_r=True)
            loss = helpers.random_loss(rng, 2, finite_kappa=True)
            constraints = helpers.random_constraints(rng, model, 2, margin=0.5)
            x0 = rng.normal(0.0, 1.0, 2)
            y = rng.normal(0.0, 4.0, 2)
            state = filters.step_constrained_huber(
                initial_state(x0), y, model, weights, loss, constraints
            )
            slack = constraints.U @ state.x_hat + constraints.V @ state.last_w
            assert np.all(slack <= constraints.a + 1e-6)


class TestBatchEquivalence:
    def test_two_state_constrained_huber_vs_batch(self):
        rng = np.random.default_rng(79)
        model = helpers.random_model(rng, 2, 1, 2)
        weights = helpers.random_weights(rng, model, with_r=True)
        loss = helpers.random_loss(rng, 2, finite_kappa=True)
        constraints = helpers.random_constraints(rng, model, 1, margin=0.1)
        x0 = rng.normal(0.0, 1.0, 2)
        y = rng.normal(0.0, 3.0, 2)

        state = filters.step_constrained_huber(
            initial_state(x0), y, model, weights, loss, constraints
        )
        problem = smoother.BatchProblem(
            model=model, weights=weights, loss=loss,
            measurements=y[None, :], x0=x0, constraints=constraints,
        )
        batch = smoother.smooth(problem, "constrained_huber")
        assert np.max(np.abs(state.x_hat - batch.x_hat[1])) <= 1e-6
        assert np.max(np.abs(state.last_posterior - batch.x_hat[0])) <= 1e-6
        assert np.max(np.abs(state.last_w - batch.w_hat[0])) <= 1e-6
        assert np.max(np.abs(state.last_theta - batch.theta_hat[0])) <= 1e-6
        assert np.max(np.abs(state.last_xi - batch.xi_hat)) <= 1e-6


class TestOutlierInfluence:
    def test_update_bounded_by_kappa_box(self):
        rng = np.random.default_rng(83)
        for _ in range(10):
            model = helpers.random_model(rng, 3, 2, 2)
            weights = helpers.random_weights(rng, model, with_r=True)
            loss = helpers.random_loss(rng, 2, finite_kappa=True)
            x0 = rng.normal(0.0, 1.0, 3)
            engine = FilterEngine("eps_huber", model, weights, loss)
            gain = engine._parts.gain_theta
            bound = np.linalg.norm(gain, 2) * np.linalg.norm(loss.kappa)
            state = engine.step(initial_state(x0), np.full(2, 1e6))
            increment = state.x_hat - model.A @ x0
            assert np.linalg.norm(increment) <= bound + 1e-9
            # a measurement this far out saturates every channel
            assert np.array_equal(np.abs(state.last_theta), loss.kappa)


class TestRun:
    def test_tube_following(self):
        rng = np.random.default_rng(89)
        model = helpers.random_model(rng, 2, 1, 2)
        weights = helpers.random_weights(rng, model)
        loss = helpers.random_loss(rng, 2)
        x0 = rng.normal(0.0, 1.0, 2)
        horizon = 8
        predicted = x0.copy()
        measurements = np.zeros((horizon, 2))
        for k in range(horizon):
            measurements[k] = model.C @ model.A @ predicted + 0.9 * loss.epsilon
            predicted = model.A @ predicted
        states = filters.run("eps_quadratic", model, weights, measurements,
                             loss=loss, x0=x0)
        expected = x0.copy()
        for state in states:
            expected = model.A @ expected
            assert np.array_equal(state.x_hat, expected)

    def test_single_measurement_equals_single_step(self, scalar=None):
        model, weights = helpers.scalar_setup()
        loss = LossParams(epsilon=[1.0])
        run_states = filters.run("eps_quadratic", model, weights, [[4.0]], loss=loss)
        step_state = filters.step_eps_quadratic(
            initial_state([0.0]), [4.0], model, weights, loss
        )
        assert len(run_states) == 1
        assert np.array_equal(run_states[0].x_hat, step_state.x_hat)

    def test_fifty_step_scalar_against_reference(self):
        rng = np.random.default_rng(97)
        a, b, c = 0.9, 1.0, 1.0
        pw, qw, rw = 1.0, 2.0, 0.5
        model = StateSpaceModel(A=[[a]], B=[[b]], C=[[c]])
        weights = WeightConfig(P=[[pw]], Q=[[qw]], R=[[rw]], r=[rw])
        epsilon, kappa = 0.4, 2.0
        ys = rng.normal(0.0, 2.5, 50)

        for kind, kap in (("eps_quadratic", np.inf), ("eps_huber", kappa)):
            loss = LossParams(epsilon=[epsilon], kappa=None if kind == "eps_quadratic" else [kappa])
            states = filters.run(kind, model, weights, ys[:, None], loss=loss)
            x_ref = 0.0
            for state, y in zip(states, ys):
                x_ref, theta_ref = oracles.scalar_filter_reference(
                    a, b, c, pw, qw, rw, epsilon, kap, x_ref, y
                )
                assert abs(state.x_hat[0] - x_ref) <= 1e-10
                assert abs(state.last_theta[0] - theta_ref) <= 1e-10

    def test_step_indices_and_diagnostics(self):
        model, weights = helpers.scalar_setup()
        loss = LossParams(epsilon=[0.1])
        states = filters.run("eps_quadratic", model, weights,
                             [[1.0], [2.0], [3.0]], loss=loss)
        assert [s.step_index for s in states] == [1, 2, 3]
        assert all(s.last_status == "converged" for s in states)

    def test_failure_carries_step_index_and_partial(self):
        # zero constraint rows cannot absorb the negative bound: the dual
        # is unbounded and the second step must be rejected as such
        model, weights = helpers.scalar_setup()
        loss = LossParams(epsilon=[1.0])
        bad = ([[0.0]], [[0.0]], [-1.0])
        constraints = LinearConstraintSet(
            U=[[1.0]], V=[[0.0]], a=[10.0],
            schedule=lambda k: bad if k == 2 else None,
        )
        with pytest.raises(SolverFailure) as excinfo:
            filters.run("constrained_eps", model, weights, [[4.0], [4.0]],
                        loss=loss, constraints=constraints)
        failure = excinfo.value
        assert failure.step_index == 2
        assert failure.status == "unbounded"
        assert len(failure.partial) == 1
        assert "step 2" in str(failure)

    def test_rejected_step_leaves_state_untouched(self):
        model, weights = helpers.scalar_setup()
        loss = LossParams(epsilon=[1.0])
        constraints = LinearConstraintSet(U=[[0.0]], V=[[0.0]], a=[-1.0])
        engine = FilterEngine("constrained_eps", model, weights, loss, constraints)
        state = initial_state([0.5])
        with pytest.raises(SolverFailure):
            engine.step(state, [4.0])
        assert state.x_hat[0] == 0.5
        assert state.step_index == 0


class TestEngineValidation:
    def test_finite_kappa_rejected_for_quadratic(self):
        model, weights = helpers.scalar_setup()
        with pytest.raises(ParameterDomainError, match="huber"):
            FilterEngine("eps_quadratic", model, weights,
                         LossParams(epsilon=[1.0], kappa=[3.0]))

    def test_constraints_rejected_for_unconstrained(self):
        model, weights = helpers.scalar_setup()
        constraints = LinearConstraintSet(U=[[1.0]], V=[[0.0]], a=[0.0])
        with pytest.raises(ParameterDomainError, match="constrained"):
            FilterEngine("eps_quadratic", model, weights,
                         LossParams(epsilon=[1.0]), constraints)

    def test_huber_needs_r(self):
        model = StateSpaceModel(A=[[1.0]], B=[[1.0]], C=[[1.0]])
        weights = WeightConfig(P=[[1.0]], Q=[[1.0]], R=[[1.0]])
        with pytest.raises(ParameterDomainError):
            FilterEngine("eps_huber", model, weights, LossParams(epsilon=[1.0]))

    def test_quadratic_needs_R(self):
        model = StateSpaceModel(A=[[1.0]], B=[[1.0]], C=[[1.0]])
        weights = WeightConfig(P=[[1.0]], Q=[[1.0]], r=[1.0])
        with pytest.raises(ParameterDomainError):
            FilterEngine("eps_quadratic", model, weights, LossParams(epsilon=[1.0]))

    def test_loss_required(self):
        model, weights = helpers.scalar_setup()
        with pytest.raises(ParameterDomainError):
            FilterEngine("eps_quadratic", model, weights)

    def test_loss_size_must_match(self):
        model, weights = helpers.scalar_setup()
        with pytest.raises(ParameterDomainError):
            FilterEngine("eps_quadratic", model, weights,
                         LossParams(epsilon=[1.0, 1.0]))

    def test_unknown_kind(self):
        model, weights = helpers.scalar_setup()
        with pytest.raises(ParameterDomainError):
            FilterEngine("midpoint", model, weights, LossParams(epsilon=[1.0]))

    def test_constraint_columns_must_match(self):
        rng = np.random.default_rng(101)
        model = helpers.random_model(rng, 2, 1, 1)
        weights = helpers.random_weights(rng, model)
        constraints = LinearConstraintSet(U=[[1.0, 0.0, 0.0]], V=[[0.0]], a=[1.0])
        with pytest.raises(ParameterDomainError):
            FilterEngine("constrained_eps", model, weights,
                         LossParams(epsilon=[1.0]), constraints)


class TestSchedule:
    def test_schedule_changes_selected_step(self):
        model, weights = helpers.scalar_setup()
        loss = LossParams(epsilon=[0.1])
        tight = ([[1.0]], [[0.0]], [0.0])
        scheduled = LinearConstraintSet(
            U=[[1.0]], V=[[0.0]], a=[100.0],
            schedule=lambda k: tight if k == 2 else None,
        )
        constant = LinearConstraintSet(U=[[1.0]], V=[[0.0]], a=[100.0])
        ys = [[4.0], [4.0]]
        with_schedule = filters.run("constrained_eps", model, weights, ys,
                                    loss=loss, constraints=scheduled)
        without = filters.run("constrained_eps", model, weights, ys,
                              loss=loss, constraints=constant)
        assert np.array_equal(with_schedule[0].x_hat, without[0].x_hat)
        assert with_schedule[1].x_hat[0] <= 1e-8
        assert without[1].x_hat[0] > 1.0

    def test_innovation_quad_returns_copy(self):
        model, weights = helpers.scalar_setup()
        engine = FilterEngine("eps_quadratic", model, weights, LossParams(epsilon=[1.0]))
        quad = engine.innovation_quad()
        assert quad[0, 0] == 3.0
        quad[0, 0] = 99.0
        state = engine.step(initial_state([0.0]), [4.0])
        assert state.x_hat[0] == pytest.approx(2.0, abs=1e-12)
