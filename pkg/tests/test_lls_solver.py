import logging

import numpy as np
import pytest

from llsp import lls_solver
from llsp.errors import RankDeficiencyError
from llsp.lls_solver import (DesignMatrix, RankClass, SolveMethod, estimate_condition, solve,
                             solve_normal_equations, solve_orthogonal, solve_svd_min_norm)


def conditioned(rng, n, p, cond):
    """Random n x p matrix with singular values spread from 1 to 1/cond."""
    U, _ = np.linalg.qr(rng.standard_normal((n, p)))
    V, _ = np.linalg.qr(rng.standard_normal((p, p)))
    s = np.logspace(0, -np.log10(cond), p)
    return (U * s) @ V.T


def rel(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


def test_three_methods_agree_on_random_full_rank(rng):
    for trial in range(100):
        p = int(rng.integers(1, 11))
        A = rng.standard_normal((200, p))
        y = rng.standard_normal(200)

        ne = solve_normal_equations(A, y)
        qr = solve_orthogonal(A, y)
        sv = solve_svd_min_norm(A, y)

        assert rel(ne.x, sv.x) <= 1e-8
        assert rel(qr.x, sv.x) <= 1e-8
        assert ne.effective_rank == qr.effective_rank == sv.effective_rank == p

        r = A @ qr.x - y
        assert np.linalg.norm(A.T @ r) <= 1e-6 * np.linalg.norm(A) * np.linalg.norm(y)
        assert qr.residual_ssq == pytest.approx(r @ r, rel=1e-10)


def test_orthogonal_and_svd_agree_up_to_condition_1e6(rng):
    for trial in range(100):
        p = int(rng.integers(2, 11))
        cond = 10.0 ** rng.uniform(0, 6)
        A = conditioned(rng, 200, p, cond)
        x_true = rng.standard_normal(p)
        y = A @ x_true + 1e-12 * rng.standard_normal(200)

        qr = solve_orthogonal(A, y)
        sv = solve_svd_min_norm(A, y)
        assert rel(qr.x, sv.x) <= 1e-8
        assert estimate_condition(A) == pytest.approx(cond, rel=1e-6)


def test_svd_solution_has_minimum_norm(rng):
    for trial in range(100):
        p = int(rng.integers(3, 11))
        r = int(rng.integers(1, p))
        A = rng.standard_normal((200, r)) @ rng.standard_normal((r, p))
        y = rng.standard_normal(200)

        best = solve_svd_min_norm(A, y)
        assert best.effective_rank == r

        _, _, Vh = np.linalg.svd(A)
        null = Vh[r:].T
        for _ in range(20):
            z = best.x + null @ rng.standard_normal(p - r)
            assert np.linalg.norm(best.x) <= np.linalg.norm(z) + 1e-12
            res = float((A @ z - y) @ (A @ z - y))
            assert abs(res - best.residual_ssq) <= 1e-8 * max(1.0, best.residual_ssq)


def test_rank_deficient_full_rank_methods_name_svd():
    A = np.ones((10, 2))
    y = np.arange(10.0)
    with pytest.raises(RankDeficiencyError) as info:
        solve_normal_equations(A, y)
    assert "SVD" in str(info.value)
    assert info.value.method == SolveMethod.normal_equations
    with pytest.raises(RankDeficiencyError) as info:
        solve_orthogonal(A, y)
    assert "SVD" in str(info.value)


def test_normal_equations_refuse_possibly_deficient(rng):
    A = DesignMatrix(data=rng.standard_normal((20, 3)), rank_class=RankClass.possibly_deficient)
    with pytest.raises(RankDeficiencyError):
        solve_normal_equations(A, np.zeros(20))


def test_zero_matrix_gives_zero_solution():
    y = np.array([1.0, -2.0, 2.0])
    sol = solve_svd_min_norm(np.zeros((3, 2)), y)
    assert np.all(sol.x == 0)
    assert sol.residual_ssq == pytest.approx(9.0)
    assert sol.effective_rank == 0


def test_bad_arguments(rng):
    A = rng.standard_normal((5, 2))
    with pytest.raises(ValueError):
        solve_svd_min_norm(A, np.zeros(4))
    with pytest.raises(ValueError):
        solve_svd_min_norm(A, np.zeros(5), rank_tol=0.0)
    with pytest.raises(ValueError):
        DesignMatrix(data=np.array([[1.0, np.nan]]))
    with pytest.raises(ValueError):
        estimate_condition(np.zeros((0, 0)))


def test_condition_estimates():
    assert estimate_condition(np.eye(4)) == pytest.approx(1.0)
    assert estimate_condition(np.diag([4.0, 2.0])) == pytest.approx(2.0)
    assert estimate_condition(np.zeros((3, 2))) == float("inf")
    assert estimate_condition(np.ones((1, 3))) == float("inf")


def test_solve_routing(rng):
    y = rng.standard_normal(200)

    well = rng.standard_normal((200, 5))
    assert solve(well, y).method == SolveMethod.normal_equations

    stiff = conditioned(rng, 200, 6, 1e10)
    assert solve(stiff, y).method == SolveMethod.orthogonal

    singular = np.hstack([well, well[:, :1]])
    sol = solve(singular, y)
    assert sol.method == SolveMethod.svd_min_norm
    assert sol.effective_rank == 5

    deficient = DesignMatrix(data=well, rank_class=RankClass.possibly_deficient)
    assert solve(deficient, y).method == SolveMethod.svd_min_norm


def test_rank_deficiency_error_pickles():
    import pickle
    err = pickle.loads(pickle.dumps(RankDeficiencyError("singular", SolveMethod.orthogonal)))
    assert err.method == SolveMethod.orthogonal
    assert str(err).startswith("singular")


@pytest.mark.parametrize("A, y, x, residual", [
    (np.eye(3), [1.0, 2.0, 3.0], [1.0, 2.0, 3.0], 0.0),
    ([[1.0], [1.0]], [1.0, 3.0], [2.0], 2.0),
    ([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]], [1.0, 1.0, 2.0], [1.0, 1.0], 0.0),
])
def test_normal_equations_by_hand(A, y, x, residual):
    sol = solve_normal_equations(A, y)
    np.testing.assert_allclose(sol.x, x, rtol=1e-12)
    assert sol.residual_ssq == pytest.approx(residual, abs=1e-12)
    assert sol.method == SolveMethod.normal_equations


@pytest.mark.parametrize("A, y, x, residual", [
    ([[1.0, 1.0], [1.0, 1.0]], [2.0, 2.0], [1.0, 1.0], 0.0),
    ([[1.0, 0.0], [0.0, 0.0]], [3.0, 5.0], [3.0, 0.0], 25.0),
])
def test_svd_by_hand(A, y, x, residual):
    sol = solve_svd_min_norm(A, y)
    np.testing.assert_allclose(sol.x, x, rtol=1e-12, atol=1e-12)
    assert sol.residual_ssq == pytest.approx(residual, abs=1e-12)
    assert sol.effective_rank == 1


def test_orthogonal_on_identity(rng):
    y = rng.standard_normal(4)
    np.testing.assert_allclose(solve_orthogonal(np.eye(4), y).x, y, rtol=1e-14)


def test_near_singular_condition():
    assert estimate_condition(np.diag([10.0, 1.0])) == pytest.approx(10.0)
    assert estimate_condition(np.array([[1.0, 1.0], [1.0, 1.0 + 1e-12]])) >= 1e12


def test_solve_recovers_planted_solution_up_to_condition_1e8(rng):
    for cond in [1.0, 1e2, 1e4, 1e5, 1e6, 1e7, 1e8]:
        p = int(rng.integers(2, 11))
        A = conditioned(rng, 200, p, cond)
        x_true = rng.standard_normal(p)
        sol = solve(A, A @ x_true)
        assert sol.effective_rank == p
        assert rel(sol.x, x_true) <= 1e-6, (cond, sol.method)


def test_duplicate_column_keeps_predictions(rng):
    for trial in range(20):
        p = int(rng.integers(2, 8))
        A = rng.standard_normal((100, p))
        y = rng.standard_normal(100)
        twin = np.hstack([A, A[:, [int(rng.integers(p))]]])

        with pytest.raises(RankDeficiencyError):
            solve_normal_equations(twin, y)
        wide = solve_svd_min_norm(twin, y)
        assert wide.effective_rank == p
        assert np.linalg.norm(twin @ wide.x - A @ solve(A, y).x) <= 1e-8 * np.linalg.norm(y)


def test_scaled_columns_give_the_same_fit(rng):
    A = rng.standard_normal((50, 4)) * np.array([1e-6, 1.0, 1e3, 1e6])
    y = rng.standard_normal(50)
    plain = solve(A, y)
    scaled = solve(A, y, scale_columns=True)
    assert scaled.method == SolveMethod.normal_equations
    assert rel(scaled.x, plain.x) <= 1e-8
    assert scaled.residual_ssq == pytest.approx(plain.residual_ssq, rel=1e-10)


def test_rank_tol_bounds_monomial_coefficients(rng):
    u = np.linspace(0.0, 1.0, 512)
    A = u[:, None] ** np.arange(49)
    y = 50.0 * rng.standard_normal(512)
    sol = solve(A, y, rank_tol=1e-5, scale_columns=True)
    assert sol.method == SolveMethod.svd_min_norm
    assert sol.effective_rank < 49
    assert np.abs(sol.x).max() < 1e8
    assert sol.residual_ssq < y @ y


def test_extended_model_never_fits_worse(rng):
    base = rng.standard_normal((60, 3))
    extra = base @ rng.standard_normal((3, 3))
    y = rng.standard_normal(60)
    A = DesignMatrix(data=np.hstack([base, extra]), rank_class=RankClass.possibly_deficient,
                     base_columns=3)
    for tol in [None, 1e-3, 0.5]:
        joint = solve(A, y, rank_tol=tol)
        alone = solve(DesignMatrix(data=base, rank_class=RankClass.possibly_deficient), y,
                      rank_tol=tol)
        assert joint.residual_ssq <= alone.residual_ssq
        assert joint.method == SolveMethod.svd_min_norm


def test_base_columns_must_leave_an_extension():
    with pytest.raises(ValueError, match="base_columns"):
        DesignMatrix(data=np.eye(3), base_columns=3)
    with pytest.raises(ValueError, match="base_columns"):
        DesignMatrix(data=np.eye(3), base_columns=0)


def test_rejected_normal_equations_fall_back_loudly(rng, monkeypatch, caplog):
    def reject(A, y):
        raise RankDeficiencyError("rejected", method=SolveMethod.normal_equations)

    monkeypatch.setattr(lls_solver, "solve_normal_equations", reject)
    A = rng.standard_normal((30, 3))
    with caplog.at_level(logging.INFO, logger="llsp.lls_solver"):
        sol = solve(A, rng.standard_normal(30))
    assert sol.method == SolveMethod.orthogonal
    assert "normal equations rejected" in caplog.text
