import numpy as np
import pytest
from hypothesis import given
import hypothesis.strategies as st

from multihom.errors import ConvergenceError, PreconditionError
from multihom.fitting import loglog_slope, richardson, spearman
from multihom.krylov import pcg


def test_slope_of_power_law():
    x = np.array([1 / 8, 1 / 16, 1 / 32, 1 / 64])
    fit = loglog_slope(x, 3.0 * x ** 2)
    assert fit.slope == pytest.approx(2.0)
    assert np.exp(fit.intercept) == pytest.approx(3.0)
    assert fit.points == 4


@given(st.floats(min_value=-3.0, max_value=3.0), st.floats(min_value=0.1, max_value=10.0))
def test_slope_recovers_exponent(p, c):
    x = np.array([0.5, 0.25, 0.125])
    assert loglog_slope(x, c * x ** p).slope == pytest.approx(p, abs=1e-9)


@pytest.mark.parametrize("x,y", [([1.0], [1.0]), ([1.0, 2.0], [1.0, 0.0]), ([1.0, 2.0], [1.0])])
def test_slope_preconditions(x, y):
    with pytest.raises(PreconditionError):
        loglog_slope(x, y)


def test_richardson_removes_quadratic_error():
    h = np.array([0.4, 0.2, 0.1])
    values = 1.5 + 2.0 * h + 0.7 * h ** 2
    result = richardson(values, h)
    assert result.value == pytest.approx(1.5, abs=1e-12)
    # last correction: the linear extrapolant misses by 0.7 * 0.2 * 0.1
    assert result.error == pytest.approx(0.014)
    assert len(result.table) == 3


def test_richardson_on_arrays():
    h = np.array([0.04, 0.01])
    values = [np.eye(2) + s * np.ones((2, 2)) for s in h]
    result = richardson(values, h)
    assert np.allclose(result.value, np.eye(2), atol=1e-12)


def test_richardson_needs_distinct_steps():
    with pytest.raises(PreconditionError):
        richardson([1.0, 2.0], [0.1, 0.1])
    with pytest.raises(PreconditionError):
        richardson([1.0, 2.0], [0.1])


def test_spearman():
    assert spearman([1, 2, 3, 4], [10, 20, 30, 40]) == pytest.approx(1.0)
    assert spearman([1, 2, 3, 4], [4, 3, 2, 1]) == pytest.approx(-1.0)
    assert spearman([1, 2, 3, 4], [5, 5, 5, 5]) == 0.0
    assert spearman([1, 2], [2, 1]) == 0.0


def test_pcg_solves_spd_system():
    rng = np.random.default_rng(0)
    Q = rng.normal(size=(20, 20))
    A = Q @ Q.T + 20 * np.eye(20)
    b = rng.normal(size=20)
    result = pcg(lambda v: A @ v, b, tol=1e-12)
    assert np.allclose(A @ result.x, b, atol=1e-9)
    assert result.residual <= 1e-12
    assert len(result.residuals) == result.iterations + 1


def test_pcg_with_exact_preconditioner_takes_one_step():
    A = np.diag([1.0, 4.0, 9.0])
    result = pcg(lambda v: A @ v, np.ones(3), precondition=lambda r: r / np.diag(A))
    assert result.iterations == 1


def test_pcg_zero_rhs():
    result = pcg(lambda v: v, np.zeros(5))
    assert result.iterations == 0
    assert not result.x.any()


def test_pcg_projects_out_kernel():
    n = 16
    L = 2 * np.eye(n) - np.roll(np.eye(n), 1, axis=0) - np.roll(np.eye(n), -1, axis=0)
    b = np.sin(2 * np.pi * np.arange(n) / n) + 1.0
    result = pcg(lambda v: L @ v, b, tol=1e-12, project=lambda v: v - v.mean())
    assert abs(result.x.mean()) < 1e-12
    assert np.allclose(L @ result.x, b - b.mean(), atol=1e-9)


def test_pcg_reports_indefinite_operator():
    with pytest.raises(ConvergenceError):
        pcg(lambda v: -v, np.ones(3))


def test_pcg_iteration_cap():
    A = np.diag(np.arange(1.0, 51.0))
    with pytest.raises(ConvergenceError) as info:
        pcg(lambda v: A @ v, np.ones(50), tol=1e-14, maxiter=3)
    assert len(info.value.residuals) == 4
