import math

import numpy as np
import pytest

from posikit import (
    CanonicalDesign,
    ErrorModel,
    InfeasibleError,
    ModelId,
    ModelUniverse,
    TargetSpec,
    canonicalize,
    coverage_experiment,
    direction_stream,
    fit_submodel,
    make_best_r2_selector,
    make_spar1_selector,
    make_spar_selector,
    make_stepwise_selector,
    posi_constant,
    posi_intervals,
    scheffe_constant,
    spar1_select,
    spar_select,
    submodel_target,
    t_ratio,
    worst_posi1_design,
)
from posikit.design import DesignMatrix

KNOWN = ErrorModel.known_sigma()


def random_canonical(p, seed=0, n=None):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n or p + 3, p))
    return canonicalize(DesignMatrix(X, tuple(f"x{j}" for j in range(1, p + 1))))


# ---------------------------------------------------------------------------
# fits and targets
# ---------------------------------------------------------------------------


def test_fit_orthogonal_recovers_exactly():
    cd = CanonicalDesign.from_canonical(np.diag([1.0, 2.0, 4.0]))
    beta = np.array([0.5, -1.0, 2.0])
    y = cd.values @ beta
    fit = fit_submodel(cd, y, ModelId([1, 2, 3]), sigma_hat=1.0)
    np.testing.assert_allclose(fit.estimates, beta, atol=1e-12)
    np.testing.assert_allclose(fit.adjusted_norms, [1.0, 2.0, 4.0], atol=1e-12)


def test_fit_orthogonal_response_gives_zero():
    cd = random_canonical(3, seed=4)
    model = ModelId([1, 2])
    A = cd.values[:, :2]
    y = np.ones(cd.d)
    y -= A @ np.linalg.solve(A.T @ A, A.T @ y)  # project out span(model)
    fit = fit_submodel(cd, y, model, sigma_hat=1.0)
    np.testing.assert_allclose(fit.estimates, 0.0, atol=1e-10)


def test_fit_matches_normal_equations_oracle():
    rng = np.random.default_rng(8)
    cd = random_canonical(4, seed=8)
    y = rng.standard_normal(cd.d)
    model = ModelId([1, 3, 4])
    fit = fit_submodel(cd, y, model, sigma_hat=2.0)
    A = cd.submatrix(model)
    oracle = np.linalg.inv(A.T @ A) @ A.T @ y
    np.testing.assert_allclose(fit.estimates, oracle, atol=1e-10)
    resid = y - A @ fit.estimates
    assert np.abs(A.T @ resid).max() < 1e-10
    np.testing.assert_allclose(
        fit.adjusted_norms, 1.0 / np.sqrt(np.diag(np.linalg.inv(A.T @ A))), atol=1e-10
    )


def test_fit_rejects_rank_deficient_model():
    X = np.array([[1.0, 2.0], [2.0, 4.0]])
    cd = CanonicalDesign.from_canonical(X)
    with pytest.raises(InfeasibleError):
        fit_submodel(cd, np.ones(2), ModelId([1, 2]), sigma_hat=1.0)


def test_target_interpolation_case():
    cd = random_canonical(4, seed=5)
    model = ModelId([2, 4])
    coef = np.array([1.5, -0.25])
    mu = cd.submatrix(model) @ coef
    got = submodel_target(cd, model, TargetSpec.from_canonical_mean(mu))
    np.testing.assert_allclose(got, coef, atol=1e-10)


def test_target_orthogonal_mean_is_zero():
    cd = random_canonical(3, seed=6)
    model = ModelId([1, 3])
    A = cd.submatrix(model)
    mu = np.ones(cd.d)
    mu -= A @ np.linalg.solve(A.T @ A, A.T @ mu)
    got = submodel_target(cd, model, TargetSpec.from_canonical_mean(mu))
    np.testing.assert_allclose(got, 0.0, atol=1e-10)


def test_target_sign_flip_under_collinearity():
    # Simpson-style instance: the marginal slope and the two-predictor slope
    # of x1 have opposite signs under strong positive collinearity.
    X = np.array([[1.0, 0.9], [0.0, math.sqrt(1 - 0.81)]])
    cd = CanonicalDesign.from_canonical(X)
    mu = X @ np.array([-1.0, 2.0])  # adjusted slope of x1 is -1
    t_marginal = submodel_target(cd, ModelId([1]), TargetSpec(mu))[0]
    t_full = submodel_target(cd, ModelId([1, 2]), TargetSpec(mu))[0]
    # direct projection oracle
    assert t_marginal == pytest.approx(float(X[:, 0] @ mu), abs=1e-12)
    assert t_full == pytest.approx(-1.0, abs=1e-10)
    assert t_marginal > 0 > t_full


def test_target_from_full_coefficients_contrast():
    cd = random_canonical(4, seed=9)
    beta = np.array([1.0, 0.0, -2.0, 0.5])
    spec = TargetSpec.from_coefficients(cd, beta)
    model = ModelId([1, 2])
    got = submodel_target(cd, model, spec)
    A = cd.submatrix(model)
    oracle = np.linalg.inv(A.T @ A) @ A.T @ cd.values @ beta
    np.testing.assert_allclose(got, oracle, atol=1e-10)


# ---------------------------------------------------------------------------
# t-ratios
# ---------------------------------------------------------------------------


def test_t_ratio_centered_is_zero():
    cd = random_canonical(3, seed=10)
    mu = cd.values @ np.array([1.0, 2.0, 3.0])
    model = ModelId([1, 2, 3])
    fit = fit_submodel(cd, mu, model, sigma_hat=1.0)
    beta = submodel_target(cd, model, TargetSpec(mu))
    for i, j in enumerate(model.members):
        assert t_ratio(fit, j, beta[i]) == pytest.approx(0.0, abs=1e-10)


def test_t_ratio_sigma_scale():
    rng = np.random.default_rng(2)
    cd = random_canonical(3, seed=2)
    y = rng.standard_normal(cd.d)
    f1 = fit_submodel(cd, y, ModelId([1, 2]), sigma_hat=1.0)
    f2 = fit_submodel(cd, y, ModelId([1, 2]), sigma_hat=2.0)
    assert t_ratio(f2, 1) == pytest.approx(t_ratio(f1, 1) / 2.0, rel=1e-12)


def test_t_ratio_two_forms_agree():
    rng = np.random.default_rng(3)
    cd = random_canonical(4, seed=3)
    y = rng.standard_normal(cd.d)
    mu = rng.standard_normal(cd.d)
    model = ModelId([1, 2, 4])
    sigma_hat = 1.7
    fit = fit_submodel(cd, y, model, sigma_hat)
    beta = submodel_target(cd, model, TargetSpec(mu))
    for i, j in enumerate(model.members):
        lhs = t_ratio(fit, j, beta[i])
        from posikit import adjusted_predictor

        vec, norm = adjusted_predictor(cd, model, j)
        rhs = float((y - mu) @ vec) / (sigma_hat * norm)
        assert lhs == pytest.approx(rhs, abs=1e-12)


def test_canonical_invariance_of_fits_and_selection():
    rng = np.random.default_rng(14)
    X = rng.standard_normal((9, 4))
    y_full = rng.standard_normal(9)
    dm = DesignMatrix(X, tuple("abcd"))
    ut = canonicalize(dm, form="upper_triangular")
    sym = canonicalize(dm, form="symmetric")
    model = ModelId([1, 3, 4])
    # original-coordinates oracle
    A = X[:, [0, 2, 3]]
    oracle = np.linalg.lstsq(A, y_full, rcond=None)[0]
    for cd in (ut, sym):
        y = cd.reduce_response(y_full)
        fit = fit_submodel(cd, y, model, sigma_hat=1.0)
        np.testing.assert_allclose(fit.estimates, oracle, atol=1e-10)
    m1, s1 = spar_select(ut, ut.reduce_response(y_full), 1.0)
    m2, s2 = spar_select(sym, sym.reduce_response(y_full), 1.0)
    assert m1 == m2
    assert s1 == pytest.approx(s2, abs=1e-10)


# ---------------------------------------------------------------------------
# intervals
# ---------------------------------------------------------------------------


def test_intervals_p1_matches_classical():
    cd = CanonicalDesign.from_canonical(np.array([[2.0]]))
    y = np.array([3.0])
    est = posi_constant(cd, n_samples=50_000, seed=0)
    report = posi_intervals(cd, y, 1.0, KNOWN, ModelId([1]), est)
    row = report.rows[0]
    bhat = (2.0 * 3.0) / 4.0  # x'y / ||x||^2
    assert row.estimate == pytest.approx(bhat, abs=1e-12)
    half = est.k * 1.0 / 2.0
    assert row.upper - row.estimate == pytest.approx(half, abs=1e-12)
    assert abs(est.k - 1.95996) < 3 * est.mc_standard_error


def test_intervals_width_formula_oracle():
    rng = np.random.default_rng(4)
    cd = random_canonical(4, seed=4)
    y = rng.standard_normal(cd.d)
    model = ModelId([1, 2, 3])
    sigma_hat = 1.3
    est = posi_constant(cd, n_samples=5_000, seed=2)
    report = posi_intervals(cd, y, sigma_hat, KNOWN, model, est)
    A = cd.submatrix(model)
    ginv = np.linalg.inv(A.T @ A)
    for i, row in enumerate(report.rows):
        half = est.k * sigma_hat * math.sqrt(ginv[i, i])
        assert row.upper - row.lower == pytest.approx(2 * half, rel=1e-12)
        assert row.lower <= row.estimate <= row.upper


def test_intervals_scheffe_wider_than_posi():
    rng = np.random.default_rng(5)
    cd = random_canonical(3, seed=5)
    y = rng.standard_normal(cd.d)
    model = ModelId([1, 2])
    kp = posi_constant(cd, n_samples=30_000, seed=3)
    ks = scheffe_constant(0.05, cd.d)
    rp = posi_intervals(cd, y, 1.0, KNOWN, model, kp)
    rs = posi_intervals(cd, y, 1.0, KNOWN, model, ks)
    for a, b in zip(rp.rows, rs.rows):
        ratio = (b.upper - b.lower) / (a.upper - a.lower)
        assert ratio == pytest.approx(ks.k / kp.k, rel=1e-12)
        assert ratio >= 1.0


def test_intervals_universe_mismatch_is_hard_error():
    rng = np.random.default_rng(6)
    cd = random_canonical(3, seed=6)
    y = rng.standard_normal(cd.d)
    est = posi_constant(cd, ModelUniverse.of_max_size(1), n_samples=5_000, seed=1)
    with pytest.raises(InfeasibleError):
        posi_intervals(cd, y, 1.0, KNOWN, ModelId([1, 2]), est)


def test_intervals_covers_flag():
    cd = random_canonical(3, seed=7)
    mu = cd.values @ np.array([1.0, 0.5, 0.0])
    est = scheffe_constant(0.05, cd.d)
    report = posi_intervals(cd, mu, 1.0, KNOWN, ModelId([1, 2]), est,
                            target=TargetSpec(mu))
    assert all(row.covers_target for row in report.rows)  # y = mu: exact


# ---------------------------------------------------------------------------
# SPAR selectors
# ---------------------------------------------------------------------------


def test_spar_p1_returns_only_model():
    cd = CanonicalDesign.from_canonical(np.array([[1.5]]))
    model, stat = spar_select(cd, np.array([2.0]), 1.0)
    assert model == ModelId([1])
    assert stat == pytest.approx(2.0, abs=1e-12)


def test_spar_orthogonal_contains_largest_marginal():
    cd = CanonicalDesign.from_canonical(np.diag([1.0, 1.0, 1.0]))
    y = np.array([0.3, -2.0, 1.0])
    model, stat = spar_select(cd, y, 1.0)
    assert 2 in model
    assert stat == pytest.approx(2.0, abs=1e-12)


def test_spar_equals_brute_force_max():
    rng = np.random.default_rng(9)
    cd = random_canonical(3, seed=9)
    for _ in range(20):
        y = rng.standard_normal(cd.d)
        sigma = float(rng.uniform(0.5, 2.0))
        model, stat = spar_select(cd, y, sigma)
        best = 0.0
        from posikit import enumerate_models

        for m in enumerate_models(cd, ModelUniverse.all()):
            fit = fit_submodel(cd, y, m, sigma)
            best = max(best, max(abs(t_ratio(fit, j)) for j in m.members))
        assert stat == pytest.approx(best, rel=1e-10)


def test_spar_equals_stream_max_exactly():
    rng = np.random.default_rng(10)
    cd = random_canonical(4, seed=10)
    for _ in range(100):
        y = rng.standard_normal(cd.d)
        model, stat = spar_select(cd, y, 1.0)
        stream_max = max(
            abs(float(np.dot(d.vector, y))) for d in direction_stream(cd)
        )
        assert stat == stream_max  # same arithmetic path, bitwise equal


def test_spar1_orthogonal_value_model_free():
    cd = CanonicalDesign.from_canonical(np.eye(3))
    y = np.array([0.5, 1.5, -0.7])
    model, stat = spar1_select(cd, y, 1.0, predictor=2)
    assert 2 in model
    assert stat == pytest.approx(1.5, abs=1e-12)


def test_spar1_below_spar():
    rng = np.random.default_rng(11)
    cd = random_canonical(4, seed=11)
    for _ in range(10):
        y = rng.standard_normal(cd.d)
        _, full = spar_select(cd, y, 1.0)
        for j in range(1, 5):
            _, one = spar1_select(cd, y, 1.0, predictor=j)
            assert one <= full + 1e-12


def test_spar1_matches_fast_worst_stat():
    from posikit import fast_worst_posi1_stat

    p, c = 6, 0.35
    cd = worst_posi1_design(p, c)
    rng = np.random.default_rng(12)
    for _ in range(25):
        z = rng.standard_normal(p)
        _, got = spar1_select(cd, z, 1.0, predictor=p)
        want = fast_worst_posi1_stat(p, c, z)
        assert got == pytest.approx(want, abs=1e-10)


def test_spar_tie_break_deterministic():
    cd = CanonicalDesign.from_canonical(np.eye(2))
    y = np.array([1.0, -1.0])  # exact tie between the two predictors
    model, stat = spar_select(cd, y, 1.0)
    assert model == ModelId([1])  # smallest mask wins
    assert stat == 1.0


# ---------------------------------------------------------------------------
# coverage experiments
# ---------------------------------------------------------------------------


def test_coverage_scheffe_over_covers():
    cd = random_canonical(3, seed=13)
    res = coverage_experiment(
        cd, None, "spar", 0.05, KNOWN, scheffe_constant(0.05, cd.d), 2_000, seed=1
    )
    assert res.coverage >= 0.95 - 3 * res.binomial_se


def test_coverage_posi_spar_near_nominal():
    cd = CanonicalDesign.from_canonical(worst_posi1_design(3, 0.69).values)
    est = posi_constant(cd, n_samples=50_000, seed=2)
    res = coverage_experiment(cd, None, "spar", 0.05, KNOWN, est, 4_000, seed=3)
    assert res.coverage >= 0.95 - 3 * res.binomial_se
    assert res.coverage <= 0.95 + 5 * res.binomial_se  # SPAR is the worst case


def test_coverage_naive_fails_under_selection():
    cd = CanonicalDesign.from_canonical(worst_posi1_design(3, 0.69).values)
    res = coverage_experiment(cd, None, "spar", 0.05, KNOWN, 1.959964, 4_000, seed=3)
    assert res.coverage < 0.95 - 3 * res.binomial_se


def test_coverage_guarantee_for_assorted_selectors():
    cd = random_canonical(3, seed=15)
    est = posi_constant(cd, n_samples=50_000, seed=5)
    selectors = [
        make_spar_selector(),
        make_spar1_selector(2),
        make_stepwise_selector(),
        make_best_r2_selector(2),
    ]
    for selector in selectors:
        res = coverage_experiment(cd, None, selector, 0.05, KNOWN, est, 1_500, seed=7)
        assert res.coverage >= 0.95 - 3 * res.binomial_se, selector


def test_coverage_finite_df_draws_fresh_sigma():
    cd = random_canonical(2, seed=16)
    em = ErrorModel.with_df(5)
    est = posi_constant(cd, error_model=em, n_samples=50_000, seed=6)
    res = coverage_experiment(cd, None, "spar", 0.05, em, est, 2_000, seed=8)
    assert res.coverage >= 0.95 - 3 * res.binomial_se


def test_coverage_with_nonzero_target():
    cd = random_canonical(3, seed=17)
    mu = cd.values @ np.array([2.0, -1.0, 0.5])
    est = posi_constant(cd, n_samples=30_000, seed=9)
    res = coverage_experiment(
        cd, None, "spar", 0.05, KNOWN, est, 2_000, seed=10,
        target=TargetSpec(mu),
    )
    assert res.coverage >= 0.95 - 3 * res.binomial_se
    assert len(res.models) == 2_000
