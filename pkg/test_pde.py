import logging

import numpy as np
import pytest

from multihom import pde
from multihom.errors import DimensionError, DomainError, PreconditionError, ResolutionError, StructureError
from multihom.experiments import fine_problem

PI = np.pi


def scalar_sampler(a):
    def sampler(points):
        return a(points)[..., None, None] * np.eye(points.shape[-1])
    return sampler


def manufactured(cells: int) -> float:
    """Max nodal error for u = sin(pi x) sin(pi y), a = 1 + x_1."""
    def exact(p):
        return np.sin(PI * p[..., 0]) * np.sin(PI * p[..., 1])

    def source(p):
        x, y = p[..., 0], p[..., 1]
        return (1 + x) * 2 * PI ** 2 * np.sin(PI * x) * np.sin(PI * y) - PI * np.cos(PI * x) * np.sin(PI * y)

    problem = pde.DirichletProblem(scalar_sampler(lambda p: 1.0 + p[..., 0]), source, 0.0, name="manufactured")
    domain = pde.Domain.unit(2, cells)
    u = pde.solve(problem, domain, tol=1e-12)
    return float(np.abs(u.values - exact(domain.points())).max())


def test_second_order_convergence():
    ratio = manufactured(32) / manufactured(64)
    assert 3.6 <= ratio <= 4.4


def test_one_dimensional_parabola_is_exact():
    problem = pde.DirichletProblem(pde.constant_sampler(np.eye(1)), 1.0)
    domain = pde.Domain.unit(1, 20)
    u = pde.solve(problem, domain, tol=1e-13)
    x = domain.axes()[0]
    assert np.allclose(u.values, x * (1 - x) / 2, atol=1e-10)


def test_cross_term_stencil():
    A = np.array([[2.0, 0.5], [0.5, 1.0]])

    def source(p):
        x, y = p[..., 0], p[..., 1]
        return 3 * PI ** 2 * np.sin(PI * x) * np.sin(PI * y) - PI ** 2 * np.cos(PI * x) * np.cos(PI * y)

    domain = pde.Domain.unit(2, 64)
    u = pde.solve(pde.DirichletProblem(pde.constant_sampler(A), source), domain, tol=1e-12)
    exact = np.sin(PI * domain.points()[..., 0]) * np.sin(PI * domain.points()[..., 1])
    assert np.abs(u.values - exact).max() < 2e-3


def test_maximum_principle_with_oscillating_coefficient(laminate):
    problem = fine_problem(laminate, (1 / 8, 1 / 8), 0.0, boundary=lambda p: p[..., 0])
    u = pde.solve(problem, pde.Domain.unit(2, 64))
    assert u.values.min() >= -1e-9
    assert u.values.max() <= 1.0 + 1e-9


def test_maximum_principle_on_random_problems():
    rng = np.random.default_rng(7)
    for _ in range(100):
        waves = rng.integers(-4, 5, size=(3, 2))
        amps = rng.uniform(-0.6, 0.6, size=3)
        shifts = rng.uniform(0.0, 1.0, size=3)

        def a(p, waves=waves, amps=amps, shifts=shifts):
            phase = 2 * PI * (p @ waves.T.astype(float) + shifts)
            return np.exp(np.sum(amps * np.sin(phase), axis=-1))

        c = rng.normal(size=4)

        def g(p, c=c):
            x, y = p[..., 0], p[..., 1]
            return c[0] + c[1] * np.sin(PI * x) + c[2] * np.cos(3 * y) + c[3] * x * y

        domain = pde.Domain.unit(2, int(rng.choice([8, 12, 16])))
        u = pde.solve(pde.DirichletProblem(scalar_sampler(a), 0.0, g), domain, tol=1e-12)
        edge = u.values[~domain.interior()]
        assert u.values.min() >= edge.min() - 1e-7
        assert u.values.max() <= edge.max() + 1e-7


def test_positive_source_gives_positive_solution(laminate):
    u = pde.solve(fine_problem(laminate, (1 / 8, 1 / 8), 1.0), pde.Domain.unit(2, 64))
    assert u.values[u.domain.interior()].min() > 0.0
    assert u.meta["scales"] == [0.125]


def test_underresolved_grid_rejected(laminate):
    problem = fine_problem(laminate, (1 / 16, 1 / 16), 1.0)
    with pytest.raises(ResolutionError):
        pde.solve(problem, pde.Domain.unit(2, 64))


def test_underresolved_grid_allowed_with_warning(laminate, caplog):
    problem = fine_problem(laminate, (1 / 16, 1 / 16), 1.0)
    with caplog.at_level(logging.WARNING, logger="multihom.pde"):
        u = pde.solve(problem, pde.Domain.unit(2, 64), allow_underresolved=True)
    assert "solving anyway" in caplog.text
    assert np.all(np.isfinite(u.values))


def test_asymmetric_coefficient_rejected():
    problem = pde.DirichletProblem(pde.constant_sampler([[1.0, 0.5], [0.0, 1.0]]), 1.0)
    with pytest.raises(StructureError):
        pde.solve(problem, pde.Domain.unit(2, 8))


def test_sampler_shape_checked():
    problem = pde.DirichletProblem(pde.constant_sampler(np.eye(1)), 1.0)
    with pytest.raises(DimensionError):
        pde.solve(problem, pde.Domain.unit(2, 8))


def test_norms_of_product_of_sines():
    domain = pde.Domain.unit(2, 128)
    p = domain.points()
    u = pde.FieldOnGrid(np.sin(PI * p[..., 0]) * np.sin(PI * p[..., 1]), domain)
    result = pde.norms(u)
    assert result.l2 == pytest.approx(0.5, abs=1e-4)
    assert result.h1_semi == pytest.approx(PI / np.sqrt(2), abs=1e-3)
    assert result.grad_sup == pytest.approx(PI / np.sqrt(2), abs=2e-3)


def test_h2_proxy_of_linear_field_vanishes():
    domain = pde.Domain.unit(2, 16)
    u = pde.FieldOnGrid(2.0 * domain.points()[..., 0] - domain.points()[..., 1], domain)
    assert pde.h2_proxy(u) < 1e-10


def test_distances_need_same_grid():
    u = pde.FieldOnGrid(np.ones((9, 9)), pde.Domain.unit(2, 8))
    v = pde.FieldOnGrid(np.ones((17, 17)), pde.Domain.unit(2, 16))
    with pytest.raises(DimensionError):
        pde.relative_l2(u, v)
    with pytest.raises(DimensionError):
        pde.l2_distance(u, v)
    assert pde.relative_l2(u, u) == 0.0


def test_campanato_profile_of_linear_field():
    domain = pde.Domain.unit(2, 256)
    u = pde.FieldOnGrid(domain.points()[..., 0], domain)
    radii = [0.05, 0.1, 0.2]
    profile = pde.campanato_profile(u, 0.5, [0.5, 0.5], radii)
    for r in radii:
        # the standard deviation of x_1 over a disc of radius r is r/2
        assert profile[r] == pytest.approx(0.5 * r ** 0.5, rel=0.05)
    assert pde.campanato_seminorm(u, 0.5, [0.5, 0.5], radii) == pytest.approx(max(profile.values()))


def test_campanato_of_constant_is_zero():
    domain = pde.Domain.unit(2, 32)
    u = pde.FieldOnGrid(np.full(domain.nodes, 3.0), domain)
    assert pde.campanato_seminorm(u, 0.3, [0.5, 0.5], [0.1, 0.2]) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("alpha,radius", [(0.0, 0.1), (1.0, 0.1), (0.5, 0.6)])
def test_campanato_preconditions(alpha, radius):
    domain = pde.Domain.unit(2, 32)
    u = pde.FieldOnGrid(np.zeros(domain.nodes), domain)
    with pytest.raises(PreconditionError):
        pde.campanato_profile(u, alpha, [0.5, 0.5], [radius])


def test_interpolation_outside_domain():
    domain = pde.Domain.unit(2, 8)
    u = pde.FieldOnGrid(np.zeros(domain.nodes), domain)
    with pytest.raises(DomainError):
        u.at(np.array([[1.5, 0.5]]))


@pytest.mark.parametrize("lower,upper,nodes", [
    ((0.0,), (1.0,), (4,)),
    ((0.0, 0.0, 0.0), (1.0, 1.0, 1.0), (9, 9, 9)),
    ((0.0, 1.0), (1.0, 0.5), (9, 9)),
])
def test_bad_domains(lower, upper, nodes):
    with pytest.raises(DimensionError):
        pde.Domain(lower, upper, nodes)


def test_field_shape_must_match_nodes():
    with pytest.raises(DimensionError):
        pde.FieldOnGrid(np.zeros((8, 8)), pde.Domain.unit(2, 8))


def test_face_flux_of_linear_field_is_constant():
    domain = pde.Domain.unit(2, 16)
    u = pde.FieldOnGrid(3.0 * domain.points()[..., 0], domain)
    flux = pde.face_flux(u, pde.constant_sampler(2.0 * np.eye(2)), axis=0)
    assert flux.shape == (16, 17)
    assert np.allclose(flux, 6.0)
