"""Tests for encoder/context evaluation metrics."""

import numpy as np
import pytest

from ctxkit.context import context_spectrum, dual_kernel, from_joint, make_context
from ctxkit.errors import BoundsError, DomainError
from ctxkit.evaluate import (
    Encoder,
    MetricConfig,
    approx_error_bound,
    compatibility,
    compatibility_direct,
    fisher_discriminant,
    kise_objective,
    learn_contexture,
    post_hoc_recover,
    ratio_trace,
    tau_metric,
    trace_gap_upper,
    worst_case_error,
)
from ctxkit.linalg import linear_probe, subspace_max_angle

import helpers


def _random_context(rng, n=None, m=None):
    n = n or int(rng.integers(5, 12))
    m = m or int(rng.integers(4, 12))
    return from_joint(helpers.random_joint(rng, n, m))


# ---------------------------------------------------------------------------
# learn_contexture
# ---------------------------------------------------------------------------


def test_learn_contexture_classification_spans_centered_indicators():
    labels = [0, 1, 2, 0, 1, 2, 0, 0]
    ctx = make_context("classification", labels=labels)
    spec = context_spectrum(ctx)
    enc = learn_contexture(spec, d=2)
    indicators = np.column_stack([(np.array(labels) == c).astype(float) for c in (0, 1, 2)])
    centered = indicators - ctx.px @ indicators
    angle = subspace_max_angle(enc.values, centered[:, :2], ctx.px)
    # centered indicators have rank C-1 = 2; compare spans
    assert angle < 1e-6


def test_learn_contexture_d_zero_errors():
    rng = np.random.default_rng(0)
    spec = context_spectrum(_random_context(rng))
    with pytest.raises(BoundsError):
        learn_contexture(spec, 0)


def test_learn_contexture_ratio_trace_is_eigenvalue_sum():
    rng = np.random.default_rng(1)
    ctx = _random_context(rng, 10, 9)
    spec = context_spectrum(ctx)
    enc = learn_contexture(spec, d=3)
    expected = float(np.sum(spec.eigenvalues[1:4]))
    assert abs(ratio_trace(enc, ctx) - expected) < 1e-8


def test_learn_contexture_without_flag_falls_back_to_cosine_search():
    rng = np.random.default_rng(2)
    ctx = _random_context(rng, 8, 6)
    spec = context_spectrum(ctx)
    spec.has_constant_top = False  # force the fallback search
    enc = learn_contexture(spec, d=2)
    np.testing.assert_allclose(enc.values, spec.functions[:, 1:3])


# ---------------------------------------------------------------------------
# post_hoc_recover
# ---------------------------------------------------------------------------


def test_post_hoc_exact_top_encoder_recovers_eigenvalues_identity_mixing():
    rng = np.random.default_rng(3)
    ctx = _random_context(rng, 11, 9)
    spec = context_spectrum(ctx)
    enc = learn_contexture(spec, d=3)
    post = post_hoc_recover(enc, ctx)
    np.testing.assert_allclose(post.eigenvalues, spec.eigenvalues[1:4], atol=1e-9)
    np.testing.assert_allclose(np.abs(post.q), np.eye(3), atol=1e-6)
    assert post.kept_indices == (0, 1, 2)


def test_post_hoc_mixed_encoder_matches_kernel_pca_oracle():
    rng = np.random.default_rng(4)
    ctx = _random_context(rng, 10, 8)
    spec = context_spectrum(ctx)
    enc = learn_contexture(spec, d=3)
    mix = rng.standard_normal((3, 3)) + 2 * np.eye(3)
    mixed = Encoder(values=enc.values @ mix, weights=enc.weights)
    post = post_hoc_recover(mixed, ctx)
    np.testing.assert_allclose(post.eigenvalues, spec.eigenvalues[1:4], atol=1e-8)
    # independent oracle: eigen-decompose the dual kernel directly
    oracle_vals, oracle_funcs = helpers.oracle_weighted_eig(dual_kernel(ctx).entries, ctx.px)
    for i in range(3):
        rec = post.encoder.values[:, i]
        mu = oracle_funcs[:, 1 + i]
        cos = abs(np.sum(ctx.px * rec * mu)) / np.sqrt(
            np.sum(ctx.px * rec**2) * np.sum(ctx.px * mu**2)
        )
        assert cos > 1 - 1e-8


def test_post_hoc_null_space_noise_column_gets_zero_eigenvalue():
    ctx = make_context("classification", labels=[0, 0, 1, 1, 2, 2])
    spec = context_spectrum(ctx)
    # eigenvalues are (1, 1, 1, 0, 0, 0); take the two nonconstant unit modes
    enc_vals = np.column_stack([spec.functions[:, 1], spec.functions[:, 2], spec.functions[:, 4]])
    post = post_hoc_recover(Encoder(values=enc_vals, weights=ctx.px), ctx)
    assert post.eigenvalues[-1] <= 1e-8
    np.testing.assert_allclose(post.eigenvalues[:2], [1.0, 1.0], atol=1e-9)


def test_post_hoc_drops_dependent_columns_and_reports_them():
    rng = np.random.default_rng(5)
    ctx = _random_context(rng, 9, 7)
    spec = context_spectrum(ctx)
    enc = learn_contexture(spec, d=2)
    dup = Encoder(values=np.column_stack([enc.values, enc.values[:, 0]]), weights=enc.weights)
    post = post_hoc_recover(dup, ctx)
    assert len(post.kept_indices) == 2
    np.testing.assert_allclose(post.eigenvalues, spec.eigenvalues[1:3], atol=1e-8)


# ---------------------------------------------------------------------------
# compatibility
# ---------------------------------------------------------------------------


def test_compatibility_single_modes_and_hand_value():
    rng = np.random.default_rng(6)
    spec = helpers.synthetic_spectrum(rng, 12, [0.9, 0.4, 0.0])
    mu = spec.functions
    assert abs(compatibility(spec, mu[:, 1]) - np.sqrt(0.9)) < 1e-10
    assert abs(compatibility(spec, mu[:, 3]) - 0.0) < 1e-10
    hand = compatibility(spec, (mu[:, 1] + mu[:, 2]) / np.sqrt(2.0))
    assert abs(hand - np.sqrt(0.65)) < 1e-10
    assert abs(hand - 0.8062) < 1e-4


def test_compatibility_affine_invariance_and_constant_error():
    rng = np.random.default_rng(7)
    spec = helpers.synthetic_spectrum(rng, 10, [0.7, 0.3])
    f = rng.standard_normal(10)
    base = compatibility(spec, f)
    assert abs(compatibility(spec, 3.5 * f - 2.0) - base) < 1e-10
    with pytest.raises(DomainError):
        compatibility(spec, np.full(10, 4.2))


def test_compatibility_closed_form_matches_direct_maximization():
    rng = np.random.default_rng(8)
    for _ in range(10):
        ctx = _random_context(rng)
        spec = context_spectrum(ctx)
        f = rng.standard_normal(ctx.n)
        assert abs(compatibility(spec, f) - compatibility_direct(ctx, f)) < 1e-9


# ---------------------------------------------------------------------------
# worst_case_error
# ---------------------------------------------------------------------------


def test_worst_case_error_hand_values_and_hypotheses():
    rng = np.random.default_rng(9)
    spec = helpers.synthetic_spectrum(rng, 10, [1.0, 0.5, 0.0, 0.0])
    assert abs(worst_case_error(spec, d=2, eps=0.1) - 0.19) < 1e-12
    spec2 = helpers.synthetic_spectrum(rng, 10, [0.81, 0.25, 0.04])
    assert worst_case_error(spec2, d=1, eps=1 - 0.9) == 0.0
    with pytest.raises(DomainError):
        worst_case_error(spec2, d=1, eps=0.01)  # 1 - eps > s1
    flat = helpers.synthetic_spectrum(rng, 10, [0.5, 0.5, 0.5])
    with pytest.raises(DomainError):
        worst_case_error(flat, d=1, eps=0.5)  # no eigengap


def test_worst_case_error_upper_bounds_random_compatible_probe_targets():
    rng = np.random.default_rng(10)
    spec = helpers.synthetic_spectrum(rng, 14, [0.85, 0.6, 0.35, 0.1])
    d = 2
    s1 = np.sqrt(0.85)
    eps = 1 - 0.92 * s1
    bound = worst_case_error(spec, d=d, eps=eps)
    enc = learn_contexture(spec, d=d)
    mu1 = spec.functions[:, 1]
    mu_d1 = spec.functions[:, d + 1]
    worst_seen = 0.0
    for _ in range(500):
        t = rng.uniform(0.0, bound)
        f = np.sqrt(1 - t) * mu1 + rng.choice([-1, 1]) * np.sqrt(t) * mu_d1
        err = linear_probe(enc.values, f, spec.weights).weighted_mse
        assert err <= bound + 1e-8
        worst_seen = max(worst_seen, err)
    # the extremal construction attains the bound
    f_star = np.sqrt(1 - bound) * mu1 + np.sqrt(bound) * mu_d1
    err_star = linear_probe(enc.values, f_star, spec.weights).weighted_mse
    assert abs(err_star - bound) < 1e-8


# ---------------------------------------------------------------------------
# ratio trace
# ---------------------------------------------------------------------------


def test_ratio_trace_invariance_and_lemma_bound():
    rng = np.random.default_rng(11)
    ctx = _random_context(rng, 12, 10)
    spec = context_spectrum(ctx)
    enc = learn_contexture(spec, d=3)
    base = ratio_trace(enc, ctx)
    mix = rng.standard_normal((3, 3)) + 2 * np.eye(3)
    assert abs(ratio_trace(Encoder(enc.values @ mix, enc.weights), ctx) - base) < 1e-9
    top_sum = float(np.sum(spec.eigenvalues[1:4]))
    for seed in range(100):
        r2 = np.random.default_rng(seed)
        random_enc = Encoder(r2.standard_normal((ctx.n, 3)), ctx.px)
        assert ratio_trace(random_enc, ctx) <= top_sum + 1e-8


# ---------------------------------------------------------------------------
# trace gap and error bound
# ---------------------------------------------------------------------------


def test_trace_gap_of_top_d_is_next_eigenvalue():
    rng = np.random.default_rng(12)
    ctx = _random_context(rng, 11, 9)
    spec = context_spectrum(ctx)
    enc = learn_contexture(spec, d=3)
    gap = trace_gap_upper(enc, ctx)
    assert abs(gap - spec.eigenvalues[4]) < 1e-8


def test_trace_gap_ignores_null_space_noise_columns():
    ctx = make_context("classification", labels=[0, 0, 0, 1, 1, 1, 2, 2, 2, 0, 1, 2])
    spec = context_spectrum(ctx)
    enc = learn_contexture(spec, d=2)
    gap_clean = trace_gap_upper(enc, ctx)
    noisy_vals = np.column_stack([enc.values] + [spec.functions[:, j] for j in range(4, 9)])
    gap_noisy = trace_gap_upper(Encoder(noisy_vals, ctx.px), ctx)
    assert abs(gap_noisy - gap_clean) < 1e-8


def test_approx_error_bound_dominates_exact_worst_case():
    # Strong-association context: noisy 3-class labels keep both nonconstant
    # eigenvalues near 1, the regime where the closed-form bound is meaningful.
    rng = np.random.default_rng(13)
    n = 9
    classes = np.arange(n) % 3
    joint = np.full((n, 3), 0.025)
    joint[np.arange(n), classes] = 0.95
    joint *= rng.uniform(0.8, 1.2, size=n)[:, None]
    ctx = from_joint(joint)
    spec = context_spectrum(ctx)
    d = 1
    enc = learn_contexture(spec, d=d)
    s1 = float(np.sqrt(spec.eigenvalues[1]))
    s2_sq = float(spec.eigenvalues[2])
    assert s1 > 0.85 and s1 + s2_sq >= 1.0
    eps = 1 - 0.9 * s1
    tg = trace_gap_upper(enc, ctx)
    assert abs(tg - s2_sq) < 1e-8
    exact = worst_case_error(spec, d=d, eps=eps)
    bound = approx_error_bound(enc, ctx, eps)
    assert bound >= exact - 1e-8 - s1 * tg
    with pytest.raises(DomainError):
        approx_error_bound(enc, ctx, eps=max(0.0, (1 - s1) * 0.5))


# ---------------------------------------------------------------------------
# tau metric
# ---------------------------------------------------------------------------


def test_tau_hand_value():
    rng = np.random.default_rng(14)
    spec = helpers.synthetic_spectrum(rng, 9, [0.8, 0.5])
    result = tau_metric(spec, MetricConfig(beta=1.0, d0=2))
    assert len(result.taus) == 1 and result.taus[0][0] == 1
    assert abs(result.taus[0][1] - (2.0 + 0.8 / 1.3)) < 1e-12
    assert abs(result.taus[0][1] - 2.6154) < 1e-4
    assert result.d_star == 1 and not result.abstain


def test_tau_weakest_association_abstains():
    rng = np.random.default_rng(15)
    spec = helpers.synthetic_spectrum(rng, 9, [0.6, 0.0, 0.0, 0.0])
    result = tau_metric(spec, MetricConfig(beta=1.0, d0=4))
    assert abs(result.taus[0][1] - 2.0) < 1e-12  # tau_1 = 1 + beta
    assert result.d_star == 1
    assert result.abstain


def test_tau_strongest_association_gives_inf_sentinels():
    rng = np.random.default_rng(16)
    spec = helpers.synthetic_spectrum(rng, 10, [1.0, 1.0, 1.0, 1.0])
    result = tau_metric(spec, MetricConfig(beta=1.0, d0=4))
    assert all(not np.isfinite(v) for _, v in result.taus)
    assert result.d_star == 1  # ties resolve to the smallest d
    assert not result.abstain


def test_tau_ties_resolve_to_smaller_d():
    rng = np.random.default_rng(17)
    spec = helpers.synthetic_spectrum(rng, 10, [0.5, 0.5, 0.5, 0.5])
    result = tau_metric(spec, MetricConfig(beta=0.0001, d0=4))
    # with beta ~ 0 the first term dominates and is equal across d
    values = [v for _, v in result.taus]
    assert max(values) - min(values) < 1e-3
    assert result.d_star == 1


# ---------------------------------------------------------------------------
# Fisher discriminant and KISE objective
# ---------------------------------------------------------------------------


def test_fisher_discriminant_closed_form_and_invariance():
    rng = np.random.default_rng(18)
    ctx = _random_context(rng, 11, 9)
    spec = context_spectrum(ctx)
    enc = learn_contexture(spec, d=3)
    lam = spec.eigenvalues[1:4]
    expected = float(2.0 * np.sum(lam / (1.0 - lam)))
    assert abs(fisher_discriminant(enc, ctx) - expected) < 1e-7 * max(1.0, expected)
    mix = rng.standard_normal((3, 3)) + 2 * np.eye(3)
    assert abs(fisher_discriminant(Encoder(enc.values @ mix, enc.weights), ctx) - expected) < 1e-6


def test_fisher_discriminant_zero_for_context_independent_encoder():
    ctx = make_context("classification", labels=[0, 0, 1, 1, 2, 2])
    spec = context_spectrum(ctx)
    # null-space eigenfunctions: B = 0 exactly
    enc = Encoder(values=spec.functions[:, 4:6], weights=ctx.px)
    assert abs(fisher_discriminant(enc, ctx)) < 1e-10


def test_fisher_discriminant_saturating_encoder_raises():
    ctx = make_context("classification", labels=[0, 0, 1, 1, 2, 2])
    spec = context_spectrum(ctx)
    enc = learn_contexture(spec, d=2)  # unit eigenvalues: C - B = 0
    with pytest.raises(DomainError):
        fisher_discriminant(enc, ctx)


def test_kise_objective_values():
    rng = np.random.default_rng(19)
    ctx = _random_context(rng, 10, 8)
    spec = context_spectrum(ctx)
    enc = learn_contexture(spec, d=3)
    expected = 3.0 - float(np.sum(spec.eigenvalues[1:4]))
    assert abs(kise_objective(enc, ctx) - expected) < 1e-9
    # constant columns center to zero and contribute nothing
    enc2 = Encoder(np.column_stack([enc.values, np.full(ctx.n, 2.5)]), ctx.px)
    assert abs(kise_objective(enc2, ctx) - expected) < 1e-9
