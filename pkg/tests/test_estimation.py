import numpy as np
import pytest

from fjlab.dynamics import fj_step, simulate
from fjlab.errors import (
    DegenerateTrajectory,
    EmptyInput,
    InsufficientSamples,
)
from fjlab.estimation import (
    FitConfig,
    _Problem,
    fit_global,
    fit_objective,
    fit_sample,
    one_step_predictions,
    parameter_variability,
)
from fjlab.model import DeliberationTrajectory, FJParameters


def make_params(rng, n):
    w = rng.uniform(0.1, 1.0, (n, n))
    np.fill_diagonal(w, 0.0)
    w /= w.sum(axis=1, keepdims=True)
    return FJParameters(
        gamma=rng.uniform(0.2, 0.8, n),
        alpha=rng.uniform(0.2, 0.8, n),
        w=w,
        mask=FJParameters.complete_mask(n),
    )


def make_traj(seed=0, n=4, d=3, rounds=6, params=None):
    rng = np.random.default_rng(seed)
    if params is None:
        params = make_params(rng, n)
    innate = rng.dirichlet(np.ones(d), size=n)
    return params, simulate(params, innate, rounds, sample_id=f"s{seed}")


class TestPredictions:
    def test_one_step_matches_direct_update(self):
        params, traj = make_traj(seed=3)
        pred = one_step_predictions(params, traj)
        assert pred.shape == (traj.rounds, traj.n, traj.d)
        for t in range(traj.rounds):
            expected = fj_step(params, traj.innate, traj.snapshots[t])
            np.testing.assert_allclose(pred[t], expected, atol=1e-12)

    def test_true_params_have_zero_objective(self):
        params, traj = make_traj(seed=4)
        assert fit_objective(params, traj, "mse") == pytest.approx(0.0, abs=1e-24)
        assert fit_objective(params, traj, "kl") == pytest.approx(0.0, abs=1e-12)

    def test_kl_of_known_pair(self):
        # observed (1, 0) against predicted (1/2, 1/2) gives ln 2
        params = FJParameters(
            gamma=np.array([0.0]),
            alpha=np.array([1.0]),
            w=np.zeros((1, 1)),
            mask=FJParameters.complete_mask(1),
        )
        snaps = np.array([[[0.5, 0.5]], [[1.0, 0.0]]])
        traj = DeliberationTrajectory(snapshots=snaps)
        assert fit_objective(params, traj, "kl") == pytest.approx(
            np.log(2.0), abs=1e-12
        )


class TestGradient:
    @pytest.mark.parametrize("objective", ["kl", "mse"])
    def test_finite_difference(self, objective):
        _, traj = make_traj(seed=5, n=3, d=3, rounds=4)
        problem = _Problem([traj], FJParameters.complete_mask(3), objective, 1e-3)
        rng = np.random.default_rng(0)
        tg = rng.normal(0.0, 0.5, 3)
        ta = rng.normal(0.0, 0.5, 3)
        tw = rng.normal(0.0, 0.5, (3, 3))
        _, g_tg, g_ta, g_tw = problem.value_grad(tg, ta, tw)
        eps = 1e-6

        def fd(base, grad, shape):
            err = 0.0
            it = np.ndindex(*shape) if shape else [()]
            for idx in it:
                plus = [tg.copy(), ta.copy(), tw.copy()]
                minus = [tg.copy(), ta.copy(), tw.copy()]
                plus[base][idx] += eps
                minus[base][idx] -= eps
                num = (problem.value(*plus) - problem.value(*minus)) / (2 * eps)
                err = max(err, abs(num - grad[idx]))
            return err

        assert fd(0, g_tg, (3,)) < 1e-6
        assert fd(1, g_ta, (3,)) < 1e-6
        assert fd(2, g_tw, (3, 3)) < 1e-6

    def test_value_and_value_grad_agree_bitwise(self):
        _, traj = make_traj(seed=6, n=3)
        problem = _Problem([traj], FJParameters.complete_mask(3), "kl", 1e-3)
        rng = np.random.default_rng(1)
        for _ in range(5):
            tg = rng.normal(0.0, 0.5, 3)
            ta = rng.normal(0.0, 0.5, 3)
            tw = rng.normal(0.0, 0.5, (3, 3))
            assert problem.value(tg, ta, tw) == problem.value_grad(tg, ta, tw)[0]


class TestFitSample:
    def test_recovers_predictions(self):
        params, traj = make_traj(seed=7, n=4, d=3, rounds=8)
        config = FitConfig(
            objective="kl", max_iters=1500, tol=1e-16, reg_lambda=0.0, restarts=2
        )
        report = fit_sample(traj, config)
        assert report.mse < 1e-6
        assert report.sample_id == traj.sample_id

    def test_objective_curve_non_increasing(self):
        _, traj = make_traj(seed=8)
        report = fit_sample(traj, FitConfig(max_iters=200, restarts=1))
        curve = np.array(report.objective_curve)
        assert curve.size >= 2
        assert np.all(np.diff(curve) <= 0.0)

    def test_bitwise_deterministic(self):
        _, traj = make_traj(seed=9)
        config = FitConfig(max_iters=150, restarts=2)
        a = fit_sample(traj, config)
        b = fit_sample(traj, config)
        assert a.params.gamma.tobytes() == b.params.gamma.tobytes()
        assert a.params.alpha.tobytes() == b.params.alpha.tobytes()
        assert a.params.w.tobytes() == b.params.w.tobytes()
        assert a.objective_curve == b.objective_curve

    def test_seed_changes_restart_draws(self):
        _, traj = make_traj(seed=10)
        a = fit_sample(traj, FitConfig(max_iters=60, restarts=1, seed=0))
        b = fit_sample(traj, FitConfig(max_iters=60, restarts=1, seed=1))
        assert a.params.gamma.tobytes() != b.params.gamma.tobytes()

    def test_flat_trajectory_needs_regularizer(self):
        snaps = np.tile(np.full((2, 2), 0.5), (4, 1, 1))
        traj = DeliberationTrajectory(snapshots=snaps)
        with pytest.raises(DegenerateTrajectory):
            fit_sample(traj, FitConfig(reg_lambda=0.0, max_iters=10))
        report = fit_sample(traj, FitConfig(reg_lambda=1e-3, max_iters=10))
        assert report.flat

    def test_mask_restricts_weights(self):
        params, traj = make_traj(seed=11, n=3)
        mask = np.zeros((3, 3), dtype=bool)
        mask[0, 1] = mask[1, 0] = True
        report = fit_sample(traj, FitConfig(max_iters=60, restarts=1), mask=mask)
        assert np.all(report.params.w[~mask] == 0.0)
        assert report.params.w[2].sum() == 0.0


class TestFitGlobal:
    def test_shares_parameters_across_samples(self):
        rng = np.random.default_rng(12)
        params = make_params(rng, 4)
        trajs = []
        for k in range(3):
            innate = rng.dirichlet(np.ones(3), size=4)
            trajs.append(simulate(params, innate, 6, sample_id=f"g{k}"))
        config = FitConfig(
            objective="kl", max_iters=1500, tol=1e-16, reg_lambda=0.0, restarts=2
        )
        report = fit_global(trajs, config)
        assert report.mse < 1e-6
        assert report.sample_id == "global"

    def test_empty_input(self):
        with pytest.raises(EmptyInput):
            fit_global([], FitConfig(max_iters=10))


class TestVariability:
    def _report_with(self, gamma, alpha):
        w = np.array([[0.0, 1.0], [1.0, 0.0]])
        params = FJParameters(
            gamma=np.asarray(gamma),
            alpha=np.asarray(alpha),
            w=w,
            mask=FJParameters.complete_mask(2),
        )
        from fjlab.estimation import FitReport

        return FitReport(
            params=params, kl=0.0, mse=0.0, objective_curve=[0.0], restart_index=0
        )

    def test_known_spread(self):
        reports = [
            self._report_with([0.2, 0.5], [0.3, 0.3]),
            self._report_with([0.4, 0.5], [0.7, 0.3]),
        ]
        spread = parameter_variability(reports)
        mean, std, iqr = spread.per_parameter["gamma_0"]
        assert mean == pytest.approx(0.3)
        assert std == pytest.approx(0.1)  # population std of (0.2, 0.4)
        assert iqr == pytest.approx(0.1)
        mean1, std1, _ = spread.per_parameter["gamma_1"]
        assert mean1 == pytest.approx(0.5)
        assert std1 == pytest.approx(0.0)
        # swap matrix: each agent's single incoming weight is 1
        mean_w, std_w, _ = spread.per_parameter["w_in_0"]
        assert mean_w == pytest.approx(1.0)
        assert std_w == pytest.approx(0.0)
        assert spread.n_reports == 2

    def test_needs_two_reports(self):
        with pytest.raises(InsufficientSamples):
            parameter_variability([self._report_with([0.2, 0.5], [0.3, 0.3])])
