"""Tests for weighted-training dynamics and outlier-robust risk estimators."""

import dataclasses
import math

import numpy as np
import pytest

import helpers
from ctxkit.errors import DomainError, NumericalError, StructuralError
from ctxkit.robust import (
    DRO_METHODS,
    GRW_METHODS,
    GRWState,
    LossSpec,
    RobustConfig,
    cressie_read_risk,
    cvar_risk,
    doro_risk,
    doro_train,
    group_dro_weights,
    group_sample_weights,
    grw_step,
    grw_train,
    max_margin_direction,
    normalize_features,
)


# ---------------------------------------------------------------------------
# grid oracles
# ---------------------------------------------------------------------------


def grid_cvar(values, weights, alpha, extra=()):
    """Brute-force dual: min over a grid of eta of E[(l-eta)+]/alpha + eta."""
    candidates = np.unique(np.concatenate([values, np.asarray(extra, dtype=float)]))
    best = math.inf
    best_eta = None
    for eta in candidates:
        obj = float(weights @ np.maximum(values - eta, 0.0)) / alpha + eta
        if obj < best - 1e-15:
            best = obj
            best_eta = eta
    return best, best_eta


def grid_cressie_read(values, weights, cfg, grid):
    """Brute-force dual over an explicit eta grid for finite beta."""
    beta_star = cfg.beta_star
    c = cfg.c_coef
    best = math.inf
    for eta in grid:
        excess = np.maximum(values - eta, 0.0)
        moment = float(weights @ excess**beta_star) ** (1.0 / beta_star)
        best = min(best, c * moment + eta)
    return best


# ---------------------------------------------------------------------------
# loss functions
# ---------------------------------------------------------------------------


class TestLossSpec:
    def test_squared_value_and_deriv(self):
        loss = LossSpec.squared()
        assert loss.value(3.0, 1.0) == pytest.approx(2.0, abs=1e-15)
        assert loss.deriv(3.0, 1.0) == pytest.approx(2.0, abs=1e-15)
        yhat = np.array([0.0, 1.0, -2.0])
        y = np.array([1.0, 1.0, 1.0])
        np.testing.assert_allclose(loss.value(yhat, y), [0.5, 0.0, 4.5])
        np.testing.assert_allclose(loss.deriv(yhat, y), [-1.0, 0.0, -3.0])

    def test_logistic_value_and_deriv(self):
        loss = LossSpec.logistic()
        assert loss.value(0.0, 1.0) == pytest.approx(math.log(2.0), rel=1e-15)
        # derivative at margin 0 is -y/2
        assert loss.deriv(0.0, 1.0) == pytest.approx(-0.5, abs=1e-15)
        assert loss.deriv(0.0, -1.0) == pytest.approx(0.5, abs=1e-15)
        # large positive margin: loss and slope both vanish
        assert loss.value(40.0, 1.0) < 1e-15
        assert abs(loss.deriv(40.0, 1.0)) < 1e-15
        # loss only depends on the margin product
        assert loss.value(-2.0, 1.0) == pytest.approx(loss.value(2.0, -1.0), rel=1e-15)

    def test_poly_tail_values(self):
        loss = LossSpec.poly_tailed(alpha_p=2.0, beta_p=1.0)
        # at margin == beta_p the tail is (m - b + 1)^(-a) = 1
        assert loss.value(1.0, 1.0) == pytest.approx(1.0, rel=1e-12)
        # deep in the tail: (m - b + 1)^(-a)
        assert loss.value(4.0, 1.0) == pytest.approx(4.0**-2.0, rel=1e-12)
        assert loss.deriv(4.0, 1.0) == pytest.approx(-2.0 * 4.0**-3.0, rel=1e-12)

    def test_poly_junction_is_c1(self):
        # value and one-sided slopes agree at the junction margin
        loss = LossSpec.poly_tailed(alpha_p=1.5, beta_p=0.7)
        b = 0.7
        h = 1e-7
        left = loss.value(b - h, 1.0)
        right = loss.value(b + h, 1.0)
        assert left == pytest.approx(1.0, abs=1e-6)
        assert right == pytest.approx(1.0, abs=1e-6)
        slope_left = (loss.value(b, 1.0) - loss.value(b - h, 1.0)) / h
        slope_right = (loss.value(b + h, 1.0) - loss.value(b, 1.0)) / h
        assert slope_left == pytest.approx(-1.5, abs=1e-5)
        assert slope_right == pytest.approx(-1.5, abs=1e-5)
        assert loss.deriv(b, 1.0) == pytest.approx(-1.5, abs=1e-12)

    def test_poly_convex_decreasing_in_margin(self):
        loss = LossSpec.poly_tailed(alpha_p=1.0, beta_p=1.0)
        m = np.linspace(-4.0, 6.0, 2001)
        v = loss.value(m, np.ones_like(m))
        diffs = np.diff(v)
        assert np.all(diffs < 0.0)  # strictly decreasing
        assert np.all(np.diff(diffs) > -1e-12)  # convex

    def test_deriv_matches_finite_difference(self):
        rng = np.random.default_rng(11)
        for loss in (
            LossSpec.squared(),
            LossSpec.logistic(),
            LossSpec.poly_tailed(alpha_p=1.2, beta_p=0.5),
        ):
            yhat = rng.uniform(-3.0, 3.0, size=64)
            y = rng.choice([-1.0, 1.0], size=64)
            h = 1e-6
            fd = (loss.value(yhat + h, y) - loss.value(yhat - h, y)) / (2 * h)
            np.testing.assert_allclose(loss.deriv(yhat, y), fd, atol=1e-5)

    def test_validation(self):
        with pytest.raises(StructuralError):
            LossSpec(kind="hinge")
        with pytest.raises(DomainError):
            LossSpec.poly_tailed(alpha_p=0.0)
        with pytest.raises(DomainError):
            LossSpec.poly_tailed(alpha_p=-1.0)

    def test_smoothness_constants(self):
        assert LossSpec.squared().smoothness() == 1.0
        assert LossSpec.logistic().smoothness() == 0.25
        assert LossSpec.poly_tailed(alpha_p=2.0).smoothness() == pytest.approx(6.0)


# ---------------------------------------------------------------------------
# feature normalization and weighted gradient steps
# ---------------------------------------------------------------------------


class TestGRWStep:
    def test_normalize_features(self):
        x = np.array([[3.0, 4.0], [0.1, 0.0]])
        z = normalize_features(x)
        norms = np.linalg.norm(z, axis=1)
        assert norms.max() == pytest.approx(1.0, rel=1e-12)
        # directions preserved
        np.testing.assert_allclose(z[0] / norms[0], np.array([0.6, 0.8]), atol=1e-12)
        # already-normalized input is returned unchanged
        y = np.array([[0.5, 0.0], [0.0, -0.25]])
        np.testing.assert_array_equal(normalize_features(y), y)

    def test_state_validation(self):
        theta = np.zeros(2)
        w = np.array([0.5, 0.5])
        with pytest.raises(StructuralError):
            GRWState(theta=theta, sample_weights=np.array([0.7, 0.2]), learning_rate=0.1)
        with pytest.raises(StructuralError):
            GRWState(theta=theta, sample_weights=np.array([-0.1, 1.1]), learning_rate=0.1)
        with pytest.raises(DomainError):
            GRWState(theta=theta, sample_weights=w, learning_rate=0.0)
        with pytest.raises(DomainError):
            GRWState(theta=theta, sample_weights=w, learning_rate=0.1, mu=-1.0)
        ok = GRWState(theta=theta, sample_weights=w, learning_rate=0.1)
        assert ok.step == 0
        np.testing.assert_array_equal(ok.anchor, theta)

    def test_single_sample_closed_form(self):
        # squared loss, one sample: theta' = theta - eta * x * (x.theta - y)
        state = GRWState(
            theta=np.array([0.5]),
            sample_weights=np.array([1.0]),
            learning_rate=0.2,
        )
        x = np.array([[0.8]])
        y = np.array([1.0])
        nxt = grw_step(state, x, y)
        expected = 0.5 - 0.2 * 0.8 * (0.8 * 0.5 - 1.0)
        assert nxt.theta[0] == pytest.approx(expected, rel=1e-15)
        assert nxt.step == 1
        # anchor is inherited, not reset
        np.testing.assert_array_equal(nxt.anchor, state.anchor)

    def test_ridge_pull_toward_anchor(self):
        anchor = np.array([1.0, -1.0])
        state = GRWState(
            theta=np.array([2.0, 0.0]),
            sample_weights=np.array([1.0]),
            learning_rate=0.1,
            mu=4.0,
            anchor=anchor,
        )
        x = np.zeros((1, 2))  # no data signal; only the proximal term acts
        nxt = grw_step(state, x, np.zeros(1))
        np.testing.assert_allclose(
            nxt.theta, state.theta - 0.1 * 4.0 * (state.theta - anchor), atol=1e-15
        )

    def test_rejects_oversized_features(self):
        state = GRWState(
            theta=np.zeros(2), sample_weights=np.array([1.0]), learning_rate=0.1
        )
        with pytest.raises(StructuralError):
            grw_step(state, np.array([[3.0, 4.0]]), np.array([1.0]))

    def test_nonfinite_gradient_reports_step(self):
        state = GRWState(
            theta=np.array([np.nan]),
            sample_weights=np.array([1.0]),
            learning_rate=0.1,
            step=7,
        )
        with pytest.raises(NumericalError, match="step 7"):
            grw_step(state, np.array([[1.0]]), np.array([0.0]))


# ---------------------------------------------------------------------------
# group reweighting
# ---------------------------------------------------------------------------


class TestGroupWeights:
    def test_single_group_is_fixed_point(self):
        out = group_dro_weights(np.array([3.0]), np.array([1.0]), nu=1.0)
        np.testing.assert_allclose(out, [1.0])

    def test_equal_risks_unchanged(self):
        g = np.array([0.2, 0.3, 0.5])
        out = group_dro_weights(np.array([1.0, 1.0, 1.0]), g, nu=2.0)
        np.testing.assert_allclose(out, g, atol=1e-15)

    def test_exponential_tilt_hand_value(self):
        # uniform start, risks (1, 0), nu = log 2 -> weights (2/3, 1/3)
        out = group_dro_weights(
            np.array([1.0, 0.0]), np.array([0.5, 0.5]), nu=math.log(2.0)
        )
        np.testing.assert_allclose(out, [2.0 / 3.0, 1.0 / 3.0], atol=1e-12)

    def test_overflow_safe(self):
        out = group_dro_weights(
            np.array([1e6, 0.0]), np.array([0.5, 0.5]), nu=10.0
        )
        assert np.isfinite(out).all()
        np.testing.assert_allclose(out.sum(), 1.0, atol=1e-12)
        assert out[0] > 1.0 - 1e-12

    def test_validation(self):
        with pytest.raises(DomainError):
            group_dro_weights(np.array([1.0]), np.array([1.0]), nu=0.0)
        with pytest.raises(StructuralError):
            group_dro_weights(np.array([1.0, 2.0]), np.array([1.0]), nu=1.0)

    def test_sample_weights_split_group_mass(self):
        groups = np.array([0, 0, 1])
        q = group_sample_weights(groups, np.array([0.5, 0.5]))
        np.testing.assert_allclose(q, [0.25, 0.25, 0.5], atol=1e-15)
        assert q.sum() == pytest.approx(1.0, abs=1e-12)

    def test_sample_weights_validation(self):
        with pytest.raises(StructuralError):
            group_sample_weights(np.array([0, 2]), np.array([0.5, 0.5]))
        with pytest.raises(StructuralError):
            # group 1 empty
            group_sample_weights(np.array([0, 0]), np.array([0.5, 0.5]))


# ---------------------------------------------------------------------------
# full training loops: reweighting cannot change the interpolating solution
# ---------------------------------------------------------------------------


def min_norm_interpolator(features, labels, theta0):
    """Oracle: unique interpolator reachable from theta0 in span of the data."""
    x = features.T  # columns are samples
    gram = x.T @ x
    return theta0 + x @ np.linalg.solve(gram, labels - x.T @ theta0)


class TestGRWTrain:
    def _overparam_problem(self, seed=3):
        rng = np.random.default_rng(seed)
        features = rng.standard_normal((6, 50))
        features = normalize_features(features)
        labels = rng.standard_normal(6)
        weights = helpers.random_probability_vector(rng, 6)
        groups = np.array([0, 0, 1, 1, 2, 2])
        return features, labels, weights, groups

    def test_methods_reach_same_interpolator(self):
        features, labels, weights, groups = self._overparam_problem()
        results = {
            "erm": grw_train(features, labels, method="erm", epochs=60_000),
            "iw": grw_train(
                features, labels, method="iw", sample_weights=weights, epochs=60_000
            ),
            "gdro": grw_train(
                features, labels, method="gdro", groups=groups, nu=1.0, epochs=60_000
            ),
        }
        oracle = min_norm_interpolator(features, labels, np.zeros(50))
        ref = results["erm"].theta
        scale = np.linalg.norm(ref)
        for name, res in results.items():
            assert res.risk_history[-1] < 1e-6, name
            assert np.linalg.norm(res.theta - oracle) < 1e-3 * scale, name
        assert np.linalg.norm(results["iw"].theta - ref) < 1e-3 * scale
        assert np.linalg.norm(results["gdro"].theta - ref) < 1e-3 * scale

    def test_ridge_breaks_equivalence(self):
        features, labels, weights, groups = self._overparam_problem()
        plain_gap = np.linalg.norm(
            grw_train(features, labels, method="erm", epochs=20_000).theta
            - grw_train(
                features, labels, method="iw", sample_weights=weights, epochs=20_000
            ).theta
        )
        erm_r = grw_train(features, labels, method="erm", mu=10.0, epochs=20_000)
        iw_r = grw_train(
            features, labels, method="iw", sample_weights=weights, mu=10.0, epochs=20_000
        )
        ridge_gap = np.linalg.norm(erm_r.theta - iw_r.theta)
        assert ridge_gap > 10.0 * plain_gap
        # with a strong proximal pull nobody can drive the loss to zero
        assert erm_r.risk_history[-1] > 0.05
        assert iw_r.risk_history[-1] > 0.05

    def test_uniform_iw_equals_erm_exactly(self):
        features, labels, _, _ = self._overparam_problem(seed=5)
        uniform = np.full(6, 1.0 / 6.0)
        a = grw_train(features, labels, method="erm", epochs=50)
        b = grw_train(features, labels, method="iw", sample_weights=uniform, epochs=50)
        np.testing.assert_array_equal(a.theta, b.theta)

    def test_gdro_weights_track_hard_group(self):
        rng = np.random.default_rng(9)
        features = normalize_features(rng.standard_normal((8, 3)))
        labels = rng.standard_normal(8)
        labels[4:] *= 5.0  # second group is harder
        groups = np.array([0] * 4 + [1] * 4)
        res = grw_train(
            features, labels, method="gdro", groups=groups, nu=2.0, epochs=5
        )
        # hard group's samples end up with more than their share of mass
        assert res.final_weights[4:].sum() > 0.5

    def test_validation(self):
        x = np.zeros((2, 2))
        y = np.zeros(2)
        with pytest.raises(StructuralError):
            grw_train(x, y, method="boost")
        with pytest.raises(StructuralError):
            grw_train(x, y, method="iw")  # missing weights
        with pytest.raises(StructuralError):
            grw_train(x, y, method="gdro")  # missing groups
        with pytest.raises(DomainError):
            grw_train(x, y, method="erm", epochs=0)
        assert set(GRW_METHODS) == {"erm", "iw", "gdro"}


# ---------------------------------------------------------------------------
# tail-average risk (CVaR) and its power-divergence generalization
# ---------------------------------------------------------------------------


class TestCvarRisk:
    def test_hand_value(self):
        value, eta = cvar_risk(np.array([1.0, 2.0, 3.0, 4.0]), alpha=0.5)
        assert eta == pytest.approx(2.0, abs=1e-12)
        assert value == pytest.approx(3.5, abs=1e-12)

    def test_alpha_one_is_mean_with_zero_threshold(self):
        losses = np.array([1.0, 2.0, 3.0, 4.0])
        value, eta = cvar_risk(losses, alpha=1.0)
        assert value == pytest.approx(2.5, abs=1e-15)
        assert eta == 0.0

    def test_constant_losses(self):
        value, eta = cvar_risk(np.full(5, 3.0), alpha=0.3)
        assert value == pytest.approx(3.0, abs=1e-12)
        assert eta == pytest.approx(3.0, abs=1e-12)

    def test_threshold_is_quantile(self):
        rng = np.random.default_rng(21)
        for _ in range(20):
            n = rng.integers(3, 40)
            losses = rng.uniform(0.0, 5.0, size=n)
            w = helpers.random_probability_vector(rng, int(n))
            alpha = float(rng.uniform(0.05, 0.95))
            _, eta = cvar_risk(losses, weights=w, alpha=alpha)
            # eta is the alpha-quantile: mass strictly above eta is <= alpha,
            # and any smaller support point leaves more than alpha above it
            assert w[losses > eta + 1e-12].sum() <= alpha + 1e-9
            below = np.unique(losses[losses < eta - 1e-12])
            if below.size:
                prev = below.max()
                assert w[losses > prev + 1e-12].sum() > alpha - 1e-9

    def test_matches_grid_oracle(self):
        rng = np.random.default_rng(33)
        for _ in range(40):
            n = int(rng.integers(2, 30))
            losses = rng.uniform(0.0, 10.0, size=n)
            w = helpers.random_probability_vector(rng, n)
            alpha = float(rng.uniform(0.05, 0.99))
            value, _ = cvar_risk(losses, weights=w, alpha=alpha)
            oracle, _ = grid_cvar(losses, w, alpha)
            assert value == pytest.approx(oracle, abs=1e-8)

    def test_validation(self):
        with pytest.raises(DomainError):
            cvar_risk(np.array([-1.0, 2.0]), alpha=0.5)
        with pytest.raises(DomainError):
            cvar_risk(np.array([1.0]), alpha=0.0)
        with pytest.raises(DomainError):
            cvar_risk(np.array([1.0]), alpha=1.5)
        with pytest.raises(StructuralError):
            cvar_risk(np.zeros((2, 2)), alpha=0.5)
        with pytest.raises(StructuralError):
            cvar_risk(np.array([]), alpha=0.5)


class TestRobustConfig:
    def test_table_of_coefficients(self):
        cvar = RobustConfig(alpha=0.5)
        assert cvar.beta_star == 1.0
        assert cvar.rho == pytest.approx(math.log(2.0), rel=1e-12)
        assert cvar.c_coef == pytest.approx(2.0, rel=1e-12)
        chi2 = RobustConfig(alpha=0.5, beta_cr=2.0)
        assert chi2.beta_star == 2.0
        assert chi2.rho == pytest.approx(0.5 * (1.0 / 0.5 - 1.0) ** 2, rel=1e-12)
        assert chi2.c_coef == pytest.approx(math.sqrt(2.0), rel=1e-12)

    def test_validation(self):
        with pytest.raises(DomainError):
            RobustConfig(alpha=0.0)
        with pytest.raises(DomainError):
            RobustConfig(alpha=1.0)
        with pytest.raises(DomainError):
            RobustConfig(alpha=0.5, beta_cr=1.0)
        with pytest.raises(DomainError):
            RobustConfig(alpha=0.5, eps_doro=0.5)
        with pytest.raises(DomainError):
            RobustConfig(alpha=0.5, eps_doro=-0.1)


class TestCressieReadRisk:
    def test_infinite_beta_dispatches_to_cvar(self):
        rng = np.random.default_rng(4)
        losses = rng.uniform(0.0, 3.0, size=12)
        w = helpers.random_probability_vector(rng, 12)
        cfg = RobustConfig(alpha=0.3)
        direct, _ = cvar_risk(losses, weights=w, alpha=0.3)
        assert cressie_read_risk(losses, weights=w, cfg=cfg) == direct

    def test_single_loss_degenerate(self):
        cfg = RobustConfig(alpha=0.4, beta_cr=2.0)
        value = cressie_read_risk(np.array([2.5]), cfg=cfg)
        assert value == pytest.approx(2.5, abs=1e-9)

    def test_chisq_matches_grid_oracle(self):
        rng = np.random.default_rng(77)
        cfg = RobustConfig(alpha=0.3, beta_cr=2.0)
        for _ in range(25):
            n = int(rng.integers(3, 25))
            losses = rng.uniform(0.0, 8.0, size=n)
            w = helpers.random_probability_vector(rng, n)
            value = cressie_read_risk(losses, weights=w, cfg=cfg)
            top = losses.max()
            grid = np.linspace(-top, top, 10_001)
            oracle = grid_cressie_read(losses, w, cfg, grid)
            # the solver can only beat the grid, up to its own tolerance
            assert value <= oracle + 1e-7
            assert value == pytest.approx(oracle, abs=1e-3)

    def test_beta_three_halves_matches_grid(self):
        rng = np.random.default_rng(13)
        cfg = RobustConfig(alpha=0.25, beta_cr=1.5)
        losses = rng.uniform(0.0, 5.0, size=15)
        w = helpers.random_probability_vector(rng, 15)
        value = cressie_read_risk(losses, weights=w, cfg=cfg)
        grid = np.linspace(-5.0, 5.0, 20_001)
        oracle = grid_cressie_read(losses, w, cfg, grid)
        assert value == pytest.approx(oracle, abs=1e-3)

    def test_far_negative_threshold_found(self):
        # alpha near 1 pushes the optimal threshold far below the losses;
        # the solver must widen its initial search interval to find it
        losses = np.array([0.0, 10.0])
        w = np.array([0.5, 0.5])
        cfg = RobustConfig(alpha=0.99, beta_cr=2.0)
        value = cressie_read_risk(losses, weights=w, cfg=cfg)
        grid = np.linspace(-2000.0, 10.0, 400_001)
        oracle = grid_cressie_read(losses, w, cfg, grid)
        assert value == pytest.approx(oracle, abs=1e-4)

    def test_ordering_worst_group_cvar_chisq(self):
        # with K >= 3 equal groups the group-fraction alpha is <= 1/3, where
        # max-group <= tail-average <= power-divergence holds
        rng = np.random.default_rng(55)
        for _ in range(50):
            k = int(rng.integers(3, 7))
            per = int(rng.integers(2, 9))
            losses = rng.uniform(0.0, 6.0, size=k * per)
            groups = np.repeat(np.arange(k), per)
            alpha = 1.0 / k
            group_means = np.array(
                [losses[groups == g].mean() for g in range(k)]
            )
            r_max = group_means.max()
            cvar_val, _ = cvar_risk(losses, alpha=alpha)
            chi_val = cressie_read_risk(
                losses, cfg=RobustConfig(alpha=alpha, beta_cr=2.0)
            )
            assert r_max <= cvar_val + 1e-8
            assert cvar_val <= chi_val + 1e-8

    def test_requires_config(self):
        with pytest.raises(StructuralError):
            cressie_read_risk(np.array([1.0]), cfg=None)


# ---------------------------------------------------------------------------
# outlier-filtered risk
# ---------------------------------------------------------------------------


class TestDoroRisk:
    def test_hand_value(self):
        cfg = RobustConfig(alpha=0.5, eps_doro=0.25)
        value, eta, dropped = doro_risk(np.array([1.0, 2.0, 3.0, 4.0]), cfg)
        assert list(dropped) == [3]
        assert eta == pytest.approx(2.0, abs=1e-12)
        assert value == pytest.approx(8.0 / 3.0, abs=1e-12)

    def test_eps_zero_reduces_to_unfiltered(self):
        rng = np.random.default_rng(8)
        losses = rng.uniform(0.0, 5.0, size=17)
        plain, plain_eta = cvar_risk(losses, alpha=0.35)
        cfg = RobustConfig(alpha=0.35, eps_doro=0.0)
        value, eta, dropped = doro_risk(losses, cfg)
        assert dropped.size == 0
        assert value == plain
        assert eta == plain_eta
        cfg2 = RobustConfig(alpha=0.35, beta_cr=2.0, eps_doro=0.0)
        v2, _, _ = doro_risk(losses, cfg2)
        assert v2 == cressie_read_risk(losses, cfg=cfg2)

    def test_monotone_nonincreasing_in_eps(self):
        rng = np.random.default_rng(42)
        eps_grid = [0.0, 0.05, 0.1, 0.2, 0.3, 0.45]
        for _ in range(100):
            n = int(rng.integers(4, 40))
            losses = rng.uniform(0.0, 10.0, size=n)
            for beta in (math.inf, 2.0):
                vals = [
                    doro_risk(
                        losses, RobustConfig(alpha=0.3, beta_cr=beta, eps_doro=e)
                    )[0]
                    for e in eps_grid
                ]
                assert all(
                    a >= b - 1e-9 for a, b in zip(vals, vals[1:])
                ), (losses, beta)

    def test_tie_break_drops_earliest_index(self):
        cfg = RobustConfig(alpha=0.5, eps_doro=0.25)
        _, _, dropped = doro_risk(np.array([4.0, 1.0, 4.0, 4.0]), cfg)
        assert list(dropped) == [0]

    def test_drop_count_floor(self):
        losses = np.arange(1.0, 11.0)  # n = 10
        _, _, d1 = doro_risk(losses, RobustConfig(alpha=0.5, eps_doro=0.19))
        assert d1.size == 1  # floor(1.9) = 1
        _, _, d2 = doro_risk(losses, RobustConfig(alpha=0.5, eps_doro=0.3))
        assert d2.size == 3
        assert sorted(d2) == [7, 8, 9]

    def test_rejects_empty_survivors(self):
        with pytest.raises(StructuralError):
            doro_risk(np.array([]), RobustConfig(alpha=0.5))


# ---------------------------------------------------------------------------
# filtered training loop
# ---------------------------------------------------------------------------


def separable_task(seed, n_major=160, n_minor=40, d=5, flip_frac=0.2):
    """Two Gaussian groups on +/- a common direction; optionally noisy labels."""
    rng = np.random.default_rng(seed)
    mu = rng.standard_normal(d)
    mu /= np.linalg.norm(mu)

    def draw(n, sign):
        return sign * 0.5 * mu + 0.35 * rng.standard_normal((n, d))

    xtr = np.vstack([draw(n_major, +1.0), draw(n_minor, -1.0)])
    ytr = np.array([1.0] * n_major + [-1.0] * n_minor)
    gtr = np.array([0] * n_major + [1] * n_minor)
    if flip_frac > 0.0:
        n_flip = int(flip_frac * len(ytr))
        idx = rng.choice(len(ytr), size=n_flip, replace=False)
        ytr[idx] *= -1.0
    xte = np.vstack([draw(200, +1.0), draw(50, -1.0)])
    yte = np.array([1.0] * 200 + [-1.0] * 50)
    gte = np.array([0] * 200 + [1] * 50)
    scale = max(
        1.0,
        np.linalg.norm(xtr, axis=1).max(),
        np.linalg.norm(xte, axis=1).max(),
    )
    theta0 = 0.01 * rng.standard_normal(d)
    return xtr / scale, ytr, gtr, xte / scale, yte, gte, theta0


class TestDoroTrain:
    def test_erm_matches_plain_gradient_descent(self):
        xtr, ytr, _, _, _, _, theta0 = separable_task(0, flip_frac=0.0)
        res = doro_train(
            xtr, ytr, method="erm", epochs=20, learning_rate=0.5, theta0=theta0
        )
        loss = LossSpec.logistic()
        theta = np.array(theta0)
        n = len(ytr)
        for _ in range(20):
            grad = xtr.T @ (loss.deriv(xtr @ theta, ytr) / n)
            theta = theta - 0.5 * grad
        np.testing.assert_allclose(res.theta, theta, atol=1e-12)

    def test_eps_zero_matches_unfiltered_trajectory(self):
        xtr, ytr, gtr, xte, yte, gte, theta0 = separable_task(1)
        common = dict(
            epochs=15,
            learning_rate=1.0,
            groups=gtr,
            eval_data=(xte, yte, gte),
            theta0=theta0,
        )
        for beta in (math.inf, 2.0):
            plain_m = "cvar" if beta is math.inf else "chisq"
            filt_m = plain_m + "_doro"
            a = doro_train(
                xtr, ytr, method=plain_m,
                cfg=RobustConfig(alpha=0.2, beta_cr=beta), **common,
            )
            b = doro_train(
                xtr, ytr, method=filt_m,
                cfg=RobustConfig(alpha=0.2, beta_cr=beta, eps_doro=0.0), **common,
            )
            np.testing.assert_array_equal(a.theta, b.theta)
            assert a.records == b.records

    def test_records_schema(self):
        xtr, ytr, gtr, xte, yte, gte, theta0 = separable_task(2)
        res = doro_train(
            xtr,
            ytr,
            method="cvar_doro",
            cfg=RobustConfig(alpha=0.2, eps_doro=0.2),
            epochs=5,
            learning_rate=1.0,
            groups=gtr,
            eval_data=(xte, yte, gte),
            theta0=theta0,
        )
        assert len(res.records) == 5
        assert [r.epoch for r in res.records] == [1, 2, 3, 4, 5]
        for r in res.records:
            assert r.train_loss > 0.0
            assert 0.0 <= r.worst_acc <= r.avg_acc <= 1.0

    def test_filtering_stabilizes_worst_group_accuracy(self):
        # with 20% of training labels flipped, the unfiltered tail-risk
        # learner chases corrupted points and its worst-group accuracy
        # oscillates; dropping the top losses keeps it steady
        wins = 0
        for seed in range(10):
            xtr, ytr, gtr, xte, yte, gte, theta0 = separable_task(seed)
            stds = {}
            for method, eps in (("cvar", 0.0), ("cvar_doro", 0.2)):
                cfg = RobustConfig(alpha=0.2, eps_doro=eps)
                res = doro_train(
                    xtr,
                    ytr,
                    method=method,
                    cfg=cfg,
                    epochs=80,
                    learning_rate=1.0,
                    groups=gtr,
                    eval_data=(xte, yte, gte),
                    theta0=theta0,
                )
                stds[method] = np.std([r.worst_acc for r in res.records])
            if stds["cvar_doro"] < stds["cvar"]:
                wins += 1
        assert wins >= 8

    def test_clean_data_filtering_is_benign(self):
        # without label noise, filtering a small fraction should not change
        # where the learner ends up
        for seed in range(3):
            xtr, ytr, gtr, xte, yte, gte, theta0 = separable_task(
                seed, flip_frac=0.0
            )
            accs = {}
            for method, eps in (("cvar", 0.0), ("cvar_doro", 0.1)):
                cfg = RobustConfig(alpha=0.2, eps_doro=eps)
                res = doro_train(
                    xtr,
                    ytr,
                    method=method,
                    cfg=cfg,
                    epochs=80,
                    learning_rate=1.0,
                    groups=gtr,
                    eval_data=(xte, yte, gte),
                    theta0=theta0,
                )
                accs[method] = np.mean([r.avg_acc for r in res.records[-10:]])
            assert accs["cvar"] > 0.85
            assert accs["cvar_doro"] > 0.85
            assert abs(accs["cvar"] - accs["cvar_doro"]) < 0.05

    def test_validation(self):
        x = np.zeros((4, 2))
        y = np.array([1.0, -1.0, 1.0, -1.0])
        with pytest.raises(StructuralError):
            doro_train(x, np.array([1.0, 2.0, 1.0, -1.0]), method="erm")
        with pytest.raises(StructuralError):
            doro_train(x, y, method="cvar")  # missing cfg
        with pytest.raises(StructuralError):
            # unfiltered method must not carry a filtering fraction
            doro_train(
                x, y, method="cvar", cfg=RobustConfig(alpha=0.5, eps_doro=0.1)
            )
        with pytest.raises(StructuralError):
            doro_train(x, y, method="mystery", cfg=RobustConfig(alpha=0.5))
        assert set(DRO_METHODS) == {
            "erm", "cvar", "chisq", "cvar_doro", "chisq_doro",
        }


# ---------------------------------------------------------------------------
# implicit bias of weighted updates on separable classification
# ---------------------------------------------------------------------------


class TestMaxMargin:
    def test_axis_aligned_pair(self):
        x = np.array([[1.0, 0.0], [-1.0, 0.0]])
        y = np.array([1.0, -1.0])
        direction = max_margin_direction(x, y)
        np.testing.assert_allclose(direction, [1.0, 0.0], atol=1e-9)

    def test_matches_angular_grid(self):
        x = np.array([[0.9, 0.1], [0.2, 0.8], [-0.3, -0.9]])
        y = np.array([1.0, 1.0, -1.0])
        direction = max_margin_direction(x, y)
        angles = np.arange(0.0, 2.0 * np.pi, 1e-4)
        candidates = np.stack([np.cos(angles), np.sin(angles)], axis=1)
        margins = (candidates @ x.T) * y
        best = candidates[margins.min(axis=1).argmax()]
        assert np.linalg.norm(direction - best) < 1e-3
        assert np.linalg.norm(direction) == pytest.approx(1.0, rel=1e-12)

    def test_rejects_non_separable(self):
        x = np.array([[1.0, 0.0], [1.0, 0.0]])
        y = np.array([1.0, -1.0])
        with pytest.raises(DomainError):
            max_margin_direction(x, y)

    def test_logistic_training_converges_to_margin_direction(self):
        # sample weights do not move the limiting direction of the iterates
        x = np.array([[0.9, 0.1], [0.2, 0.8], [-0.3, -0.9]])
        y = np.array([1.0, 1.0, -1.0])
        target = max_margin_direction(x, y)
        weights = np.array([0.5, 0.25, 0.25])
        res = grw_train(
            x,
            y,
            method="iw",
            sample_weights=weights,
            loss=LossSpec.logistic(),
            learning_rate=3.9,
            epochs=10_000,
        )
        direction = res.theta / np.linalg.norm(res.theta)
        assert float(direction @ target) > 0.99

    def test_poly_tail_keeps_weighting_logistic_forgets_it(self):
        # exponentially-tailed losses wash the sample weights out of the
        # limiting direction (it drifts to the unweighted margin solution);
        # a polynomially-decaying tail keeps the weighted optimum away from it
        rng = np.random.default_rng(7)
        x = normalize_features(rng.standard_normal((6, 50)))
        y = np.array([1.0] * 5 + [-1.0])
        weights = np.array([0.1] * 5 + [0.5])
        target = max_margin_direction(x, y)
        gaps = {}
        for name, loss in (
            ("logistic", LossSpec.logistic()),
            ("poly", LossSpec.poly_tailed(alpha_p=1.0, beta_p=1.0)),
        ):
            res = grw_train(
                x,
                y,
                method="iw",
                sample_weights=weights,
                loss=loss,
                learning_rate=2.0,
                epochs=20_000,
            )
            direction = res.theta / np.linalg.norm(res.theta)
            gaps[name] = np.linalg.norm(direction - target)
        assert gaps["poly"] > 2.0 * gaps["logistic"]


# ---------------------------------------------------------------------------
# dataclass hygiene
# ---------------------------------------------------------------------------


def test_frozen_dataclasses():
    cfg = RobustConfig(alpha=0.5)
    with pytest.raises(dataclasses.FrozenInstanceError):
        cfg.alpha = 0.2
    loss = LossSpec.squared()
    with pytest.raises(dataclasses.FrozenInstanceError):
        loss.kind = "logistic"
