import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from apa import coefficients as coef
from apa.certify import history_from, random_coefficient_instance, three_forms
from apa.history import DiffMode


def kkt_oracle(errors):
    # dense KKT system for min ||E c|| s.t. 1^T c = 1, independent of the bordered -1 layout
    E = np.column_stack(errors)
    m = E.shape[1]
    K = np.zeros((m + 1, m + 1))
    K[:m, :m] = 2.0 * E.T @ E
    K[:m, m] = K[m, :m] = 1.0
    rhs = np.zeros(m + 1)
    rhs[m] = 1.0
    return np.linalg.solve(K, rhs)[:m]


def test_single_error():
    c, lam = coef.solve_lagrangian([np.array([3.0, 4.0])])
    np.testing.assert_array_equal(c.c, [1.0])
    assert lam == pytest.approx(25.0)


@pytest.mark.parametrize("mode", list(DiffMode))
def test_depth_zero_forms(mode):
    h = history_from([np.array([1.0, 2.0])], mode)
    np.testing.assert_array_equal(coef.solve(h).c, [1.0])


def test_symmetric_pair_all_forms():
    errors = [np.array([1.0, 0.0]), np.array([0.0, 1.0])]
    for c in three_forms(errors):
        np.testing.assert_allclose(c.c, [0.5, 0.5], atol=1e-15)
    c, _ = coef.solve_lagrangian(errors)
    assert coef.residual_of(c, errors) == pytest.approx(1 / np.sqrt(2))
    gam = coef.solve_gamma(history_from(errors, DiffMode.FROM_OLDEST))
    np.testing.assert_allclose(gam.to_gamma(), [0.5])
    alp = coef.solve_alpha(history_from(errors, DiffMode.SUCCESSIVE))
    np.testing.assert_allclose(alp.to_alpha(), [0.5])


def test_weighted_pair():
    errors = [np.array([2.0, 0.0]), np.array([0.0, 1.0])]
    c, _ = coef.solve_lagrangian(errors)
    np.testing.assert_allclose(c.c, [0.2, 0.8], atol=1e-15)
    np.testing.assert_allclose(kkt_oracle(errors), [0.2, 0.8], atol=1e-15)


def test_lambda_is_minimal_squared_norm(rng):
    errors = [rng.standard_normal(5) for _ in range(3)]
    c, lam = coef.solve_lagrangian(errors)
    assert lam == pytest.approx(coef.residual_of(c, errors) ** 2, rel=1e-10)


def test_from_theta():
    np.testing.assert_array_equal(coef.from_theta([]).c, [1.0])
    np.testing.assert_allclose(coef.from_theta([0.3, 0.2]).c, [0.3, 0.2, 0.5])


def test_parametrization_round_trips(rng):
    c = coef.from_theta(rng.standard_normal(4))
    np.testing.assert_allclose(coef.from_alpha(c.to_alpha()).c, c.c, atol=1e-15)
    np.testing.assert_allclose(coef.from_gamma(c.to_gamma()).c, c.c, atol=1e-15)


def test_random_p8_depth3_agree_with_lagrangian(rng):
    errors = [rng.standard_normal(8) for _ in range(4)]
    lag, gam, alp = three_forms(errors)
    np.testing.assert_allclose(gam.c, lag.c, atol=1e-9)
    np.testing.assert_allclose(alp.c, lag.c, atol=1e-9)
    np.testing.assert_allclose(lag.c, kkt_oracle(errors), atol=1e-9)


def test_duplicate_errors_are_degenerate():
    r = np.array([1.0, 2.0, 3.0])
    with pytest.raises(coef.DegenerateHistoryError):
        coef.solve_lagrangian([r, r.copy()])
    with pytest.raises(coef.DegenerateHistoryError):
        coef.solve_gamma(history_from([r, r.copy()], DiffMode.FROM_OLDEST))
    with pytest.raises(coef.DegenerateHistoryError):
        coef.solve_alpha(history_from([r, 2 * r, 3 * r], DiffMode.SUCCESSIVE))


@settings(max_examples=80, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_three_forms_agree(seed):
    errors = random_coefficient_instance(np.random.default_rng(seed))
    lag, gam, alp = three_forms(errors)
    for c in (lag, gam, alp):
        assert abs(c.c.sum() - 1.0) <= 1e-12
        assert coef.residual_of(c, errors) <= np.linalg.norm(errors[-1]) * (1 + 1e-12)
    np.testing.assert_allclose(gam.c, lag.c, atol=1e-8)
    np.testing.assert_allclose(alp.c, lag.c, atol=1e-8)
    norms = [coef.residual_of(c, errors) for c in (lag, gam, alp)]
    assert max(norms) - min(norms) <= 1e-10
